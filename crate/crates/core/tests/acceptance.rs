//! Acceptance gate: nine criteria, one PASS/FAIL line each. Exits nonzero if
//! any criterion fails.

use std::f64::consts::{PI, TAU};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use dka_core::classical::{
    find_accel_orbit, lifted_iterate, KickedMap, OrbitSearch, PhasePoint,
};
use dka_core::evolve::{
    evolve_ensemble, init_plane_wave, track_mode, BandSpec, Mixture, Propagator,
};
use dka_core::floquet::{
    build_block, diagonalize, global_phase, infinite_element, kick_coefficient, BlochState,
    KickCoefficients,
};
use dka_core::params::{derive_params, ResonanceInput, SystemParams};
use dka_core::phasespace::{husimi_map, husimi_value, mass_near, GridSpec};
use dka_core::special::periodic_mean;
use dka_core::C64;

type Outcome = (bool, String);

fn params(m: u64, n: u64, r: u64, s: u64, k: f64) -> SystemParams {
    derive_params(&ResonanceInput::new(m, n, r, s, 0, k)).expect("valid parameters")
}

fn fig1() -> SystemParams {
    params(1, 80, 1, 2, 5.0)
}

struct Lcg(u64);

impl Lcg {
    fn unit(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
    fn int(&mut self, lo: i64, hi: i64) -> i64 {
        lo + (self.unit() * (hi - lo) as f64) as i64
    }
}

const BLOCK_SETS: [(u64, u64, u64, u64, f64); 3] =
    [(1, 80, 1, 2, 5.0), (49, 50, 1, 1, 1.0), (29, 30, 1, 2, 1.0)];

/// Criteria 1 and 2 share the block construction; blocks are processed one
/// at a time to bound memory.
fn blocks() -> (Outcome, Outcome) {
    let mut unit_ok = true;
    let mut spec_ok = true;
    let mut unit_msg = Vec::new();
    let mut spec_msg = Vec::new();
    for (m, n, r, s, k) in BLOCK_SETS {
        let p = params(m, n, r, s, k);
        let t0 = Instant::now();
        let block = match build_block(&p, 0.0) {
            Ok(b) => b,
            Err(e) => {
                unit_ok = false;
                spec_ok = false;
                unit_msg.push(format!("P={}: {e}", p.block_dim));
                continue;
            }
        };
        let build_s = t0.elapsed().as_secs_f64();
        unit_ok &= block.unitarity_error < 1e-10 && build_s < 300.0;
        unit_msg.push(format!("P={} defect={:.1e} {:.1}s", p.block_dim, block.unitarity_error, build_s));

        let t1 = Instant::now();
        match diagonalize(&block) {
            Ok(spec) => {
                let eig_s = t1.elapsed().as_secs_f64();
                let (res, modd) = (spec.max_residual(), spec.max_modulus_defect());
                spec_ok &= spec.len() == p.block_dim && res < 1e-8 && modd < 1e-8 && eig_s < 900.0;
                spec_msg.push(format!("P={} residual={res:.1e} |λ|-1={modd:.1e} {eig_s:.1}s", p.block_dim));
            }
            Err(e) => {
                spec_ok = false;
                spec_msg.push(format!("P={}: {e}", p.block_dim));
            }
        }
    }
    ((unit_ok, unit_msg.join("; ")), (spec_ok, spec_msg.join("; ")))
}

fn kick_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut norm_defect: f64 = 0.0;
    for k in [1.0, 5.0] {
        for n in -20i64..=20 {
            let quad = periodic_mean(4096, TAU, |t| C64::from_polar(1.0, k * t.cos() - n as f64 * t));
            worst = worst.max((quad - kick_coefficient(n, k)).norm());
        }
        let total: f64 = KickCoefficients::new(k).iter().map(|(_, c)| c.norm_sqr()).sum();
        norm_defect = norm_defect.max((total - 1.0).abs());
    }
    (
        worst < 1e-10 && norm_defect < 1e-10,
        format!("max |quadrature - series|={worst:.1e}, |Σ|c|²-1|={norm_defect:.1e}"),
    )
}

fn translation() -> Outcome {
    let p = fig1();
    let dim = p.block_dim as i64;
    let mut rng = Lcg(2024);
    let mut worst_sym: f64 = 0.0;
    for i in 0..20 {
        let q = rng.int(-400, 400);
        let qp = if i % 2 == 0 { q + p.drop_slots() + 2 * rng.int(-6, 6) } else { rng.int(-400, 400) };
        let a = infinite_element(&p, q, qp);
        let b = infinite_element(&p, q + dim, qp + dim);
        worst_sym = worst_sym.max((a.value - b.value).norm());
    }

    let mut worst_sum: f64 = 0.0;
    let mut quad_err: f64 = 0.0;
    for theta0 in [0.0, 0.9, 2.4] {
        let block = build_block(&p, theta0).expect("block");
        let phase = global_phase(&p);
        for _ in 0..12 {
            let s = rng.int(0, dim);
            let sp = if rng.unit() < 0.5 {
                (s + p.drop_slots() + 2 * rng.int(-5, 5)).rem_euclid(dim)
            } else {
                rng.int(0, dim)
            };
            let mut sum = C64::new(0.0, 0.0);
            for nu in -3i64..=3 {
                let e = infinite_element(&p, s, sp + dim * nu);
                quad_err = quad_err.max(e.error);
                sum += e.value * C64::from_polar(1.0, -theta0 * nu as f64);
            }
            worst_sum = worst_sum.max((sum - block.entry(s as usize, sp as usize) * phase).norm());
        }
    }
    let tol = 1e-10_f64.max(10.0 * quad_err);
    (
        worst_sym < 1e-10 && worst_sum < tol,
        format!("translation max diff={worst_sym:.1e}; resummation max diff={worst_sum:.1e} (quadrature err {quad_err:.1e})"),
    )
}

fn classical() -> Outcome {
    let map = KickedMap::Classical { stochasticity: PI / 8.0, omega: 0.5 };
    let search = OrbitSearch::default();
    let mut ok = true;
    let mut msg = Vec::new();
    for (o, j) in [(2usize, 1i64), (4, 2)] {
        match find_accel_orbit(o, j, &map, &search) {
            Ok(orb) => {
                ok &= orb.residual < 1e-12 && orb.monodromy_trace.abs() < 2.0;
                msg.push(format!("({o},{j}) residual={:.1e} trace={:.4}", orb.residual, orb.monodromy_trace));
            }
            Err(e) => {
                ok = false;
                msg.push(format!("({o},{j}) {e}"));
            }
        }
    }

    let tr = lifted_iterate(PhasePoint::new(2.7, 0.0), 10_000, &map);
    let rel: Vec<f64> = tr.action.iter().enumerate().map(|(n, a)| a + TAU * 0.5 * n as f64).collect();
    let excursion = rel.iter().copied().fold(f64::MIN, f64::max) - rel.iter().copied().fold(f64::MAX, f64::min);
    ok &= excursion < TAU;
    msg.push(format!("(2.7,0) drift-removed J excursion={excursion:.3}"));

    let mut rng = Lcg(77);
    let mut worst_det: f64 = 0.0;
    let h = 1e-6;
    for m in [
        map,
        KickedMap::Epsilon { k_eps: -PI / 10.0, omega: 0.5, sign: -1.0 },
        KickedMap::Epsilon { k_eps: 0.4, omega: 0.5, sign: 1.0 },
    ] {
        for _ in 0..100 {
            let (t, a) = (TAU * rng.unit(), TAU * rng.unit());
            let (tp, ap) = m.step_lifted(t + h, a);
            let (tm, am) = m.step_lifted(t - h, a);
            let (tq, aq) = m.step_lifted(t, a + h);
            let (tr_, ar) = m.step_lifted(t, a - h);
            let det = ((tp - tm) * (aq - ar) - (tq - tr_) * (ap - am)) / (4.0 * h * h);
            worst_det = worst_det.max((det - 1.0).abs());
        }
    }
    ok &= worst_det < 1e-8;
    msg.push(format!("max |det J - 1|={worst_det:.1e}"));
    (ok, msg.join("; "))
}

fn correspondence() -> Outcome {
    let p = fig1();
    let map = KickedMap::classical(&p);
    let spectrum = diagonalize(&build_block(&p, 0.0).expect("block")).expect("spectrum");
    let grid = GridSpec::cell(&p, 64);
    let mut ok = true;
    let mut msg = Vec::new();
    for (o, j) in [(2usize, 1i64), (4, 2)] {
        let orbit = find_accel_orbit(o, j, &map, &OrbitSearch::default()).expect("orbit");
        let centers: Vec<(f64, f64)> = orbit.points.iter().map(PhasePoint::as_pair).collect();
        let (best, mass) = spectrum
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| (i, mass_near(&husimi_map(&BlochState::new(s, &p, 0.0), &grid, &p), &p, &centers, 0.5)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty spectrum");
        ok &= mass >= 0.5;
        msg.push(format!("o={o}: state {best} holds {:.1}%", 100.0 * mass));
    }
    (ok, msg.join("; "))
}

fn cross_propagator() -> Outcome {
    let p = fig1();
    let prop = Propagator::new(&p);
    let mut state = init_plane_wave(p.beta, 0).expect("plane wave");
    for _ in 0..10 {
        state = prop.one_period(&state).expect("kick");
    }
    // An LP-periodic comb of plane waves is the average of L Bloch states;
    // with copies far apart each one evolves like the single plane wave.
    let copies = 16i64;
    let dim = p.block_dim as i64;
    let mut comb = vec![C64::new(0.0, 0.0); (copies * dim) as usize];
    for j in 0..copies {
        let theta0 = TAU * j as f64 / copies as f64;
        let block = build_block(&p, theta0).expect("block");
        let mut v = vec![C64::new(0.0, 0.0); dim as usize];
        v[0] = C64::new(1.0 / copies as f64, 0.0);
        for _ in 0..10 {
            v = block.propagate(&v);
        }
        for nu in -copies / 2..copies / 2 {
            let ph = C64::from_polar(1.0, -theta0 * nu as f64);
            for (s, a) in v.iter().enumerate() {
                comb[((nu + copies / 2) * dim) as usize + s] += ph * a;
            }
        }
    }
    let ms = p.ms();
    let mut worst: f64 = 0.0;
    for (i, c) in comb.iter().enumerate() {
        let q = i as i64 - copies / 2 * dim;
        let x = q as f64 / ms as f64 + p.beta - state.beta;
        let n = x.round() as i64;
        let expect = if (x - n as f64).abs() < 1e-9 { state.amplitude(n) } else { C64::new(0.0, 0.0) };
        worst = worst.max((c - expect).norm());
    }
    (worst < 1e-8, format!("max amplitude difference={worst:.1e} after 10 kicks"))
}

fn fig3() -> Outcome {
    let t0 = Instant::now();
    let mut ok = true;
    let mut msg = Vec::new();
    for (label, m, n) in [("semiclassical", 1u64, 20u64), ("pseudo-classical", 19, 20)] {
        let p = params(m, n, 1, 2, 1.0);
        let (map, jump) = if label == "semiclassical" {
            (KickedMap::classical(&p), 1)
        } else {
            (KickedMap::epsilon(&p), -1)
        };
        let orbit = match find_accel_orbit(2, jump, &map, &OrbitSearch::default()) {
            Ok(o) => o,
            Err(e) => {
                ok = false;
                msg.push(format!("{label}: {e}"));
                continue;
            }
        };
        let predicted = (orbit.jump as f64 / orbit.order as f64).abs() * p.t_half / p.period;
        let series = evolve_ensemble(&Mixture::default(), 200, &p).expect("ensemble");
        let band = BandSpec::island(&p, orbit.order);
        let track = match track_mode(&series.rows, &band) {
            Ok(t) => t,
            Err(e) => {
                ok = false;
                msg.push(format!("{label}: {e}"));
                continue;
            }
        };
        let lab_slope = track.slope - series.gravity_drop;
        let slope_err = (lab_slope.abs() - predicted).abs() / predicted;
        let f50 = track.fraction_at(50).expect("kick 50");
        let f200 = track.fraction_at(200).expect("kick 200");
        let ratio = f200 / f50;
        let fraction_ok = if label == "semiclassical" { ratio >= 0.8 } else { ratio <= 0.5 };
        ok &= fraction_ok && slope_err <= 0.15;
        msg.push(format!(
            "{label}: f200/f50={ratio:.3} ({}), slope={lab_slope:.4} vs {predicted:.4} ({:.1}%)",
            if fraction_ok { "ok" } else { "FAIL" },
            100.0 * slope_err
        ));
    }
    let secs = t0.elapsed().as_secs_f64();
    ok &= secs < 600.0;
    msg.push(format!("{secs:.1}s"));
    (ok, msg.join("; "))
}

fn husimi_periodicity() -> Outcome {
    let p = fig1();
    let spectrum = diagonalize(&build_block(&p, 0.0).expect("block")).expect("spectrum");
    let (w, h) = (p.cell_width(), p.cell_height());
    let mut rng = Lcg(9);
    let mut worst: f64 = 0.0;
    for idx in [0usize, 57, 158, 245, 319] {
        let state = BlochState::new(&spectrum.states[idx], &p, 0.0);
        for _ in 0..40 {
            let (z, pp) = (w * rng.unit(), h * rng.unit());
            let inside = husimi_value(&state, z, pp, p.squeeze);
            for (dz, dp) in [(w, 0.0), (0.0, h), (-w, -h), (w, -h)] {
                worst = worst.max((husimi_value(&state, z + dz, pp + dp, p.squeeze) - inside).abs());
            }
        }
    }
    (worst < 1e-8, format!("max |H(outside) - H(inside)|={worst:.1e}"))
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(e) => {
            let what = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {what}"))
        }
    }
}

fn main() {
    // `cargo test` passes harness flags such as `--quiet` or a filter; a
    // filter that does not name this target skips it.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if args.iter().any(|a| !"acceptance".contains(a.as_str())) {
        return;
    }

    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let (unitarity, spectrum) = guarded_pair(blocks);
    results.push(("1 unitarity", unitarity));
    results.push(("2 spectrum quality", spectrum));
    results.push(("3 kick-coefficient oracle", guarded(kick_oracle)));
    results.push(("4 translation symmetry", guarded(translation)));
    results.push(("5 classical dynamics", guarded(classical)));
    results.push(("6 eigenstate-orbit correspondence", guarded(correspondence)));
    results.push(("7 cross-propagator equivalence", guarded(cross_propagator)));
    results.push(("8 accelerator-mode time series", guarded(fig3)));
    results.push(("9 Husimi cell periodicity", guarded(husimi_periodicity)));

    let mut failed = 0;
    for (name, (ok, detail)) in &results {
        println!("criterion {name}: {} ({detail})", if *ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn guarded_pair(f: impl FnOnce() -> (Outcome, Outcome)) -> (Outcome, Outcome) {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(_) => {
            let fail = (false, "panicked".to_string());
            (fail.clone(), fail)
        }
    }
}
