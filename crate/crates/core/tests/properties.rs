use std::f64::consts::TAU;

use proptest::prelude::*;

use dka_core::classical::{eps_map_step, std_map_step, KickedMap, PhasePoint};
use dka_core::evolve::{evolve_ensemble, init_plane_wave, Frame, Mixture, Propagator};
use dka_core::params::{derive_params, ResonanceInput, SystemParams};

fn fd_det(map: &KickedMap, t: f64, a: f64) -> f64 {
    let h = 1e-6;
    let (tp, ap) = map.step_lifted(t + h, a);
    let (tm, am) = map.step_lifted(t - h, a);
    let (tq, aq) = map.step_lifted(t, a + h);
    let (tr, ar) = map.step_lifted(t, a - h);
    ((tp - tm) * (aq - ar) - (tq - tr) * (ap - am)) / (4.0 * h * h)
}

fn resonant() -> impl Strategy<Value = SystemParams> {
    (1u64..6, 1u64..6, 1u64..4, 1u64..4, 0.0f64..3.0).prop_filter_map("lowest terms", |(m, half_n, r, s, k)| {
        derive_params(&ResonanceInput::new(m, 2 * half_n, r, s, 0, k)).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn maps_preserve_area(t in 0.0..TAU, a in 0.0..TAU, k in -6.0f64..6.0, omega in 0.0f64..1.0, neg in any::<bool>()) {
        let classical = KickedMap::Classical { stochasticity: k, omega };
        prop_assert!((fd_det(&classical, t, a) - 1.0).abs() < 1e-8);
        let eps = KickedMap::Epsilon { k_eps: k, omega, sign: if neg { -1.0 } else { 1.0 } };
        prop_assert!((fd_det(&eps, t, a) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn positive_sign_epsilon_map_is_classical(t in 0.0..TAU, a in 0.0..TAU, k in -6.0f64..6.0, omega in 0.0f64..1.0) {
        let p = PhasePoint::new(t, a);
        prop_assert_eq!(eps_map_step(p, k, omega, 1.0), std_map_step(p, k, omega));
    }

    #[test]
    fn steps_stay_on_the_torus(t in 0.0..TAU, a in 0.0..TAU, k in -6.0f64..6.0, omega in 0.0f64..1.0) {
        let q = std_map_step(PhasePoint::new(t, a), k, omega);
        prop_assert!((0.0..TAU).contains(&q.theta) && (0.0..TAU).contains(&q.action));
    }

    #[test]
    fn norm_is_conserved(p in resonant(), beta in 0.0f64..1.0, n0 in -5i64..5) {
        let prop = Propagator::new(&p);
        let mut s = init_plane_wave(beta, n0).unwrap();
        for _ in 0..40 {
            s = prop.one_period(&s).unwrap();
        }
        prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        prop_assert!((0.0..1.0).contains(&s.beta));
    }

    #[test]
    fn frames_differ_by_the_fall(p in resonant(), kicks in 0u64..15) {
        let series = evolve_ensemble(&Mixture { samples: 3, ..Mixture::default() }, kicks, &p).unwrap();
        for (f, l) in series.rows.iter().zip(series.in_frame(Frame::Lab)) {
            prop_assert_eq!(&f.mass, &l.mass);
            prop_assert_eq!(f.offset - l.offset, f.kick as f64 * series.gravity_drop);
            prop_assert!((f.total() - 1.0).abs() < 1e-10);
        }
    }
}
