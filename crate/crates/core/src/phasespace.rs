//! Husimi functions of ladder states and the fold onto the classical torus.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::floquet::MomentumLadder;
use crate::params::SystemParams;
use crate::C64;

/// Gaussian factors below this are dropped from the ladder sum.
pub const GAUSSIAN_CUTOFF: f64 = 1e-12;
/// Grid error bound above which [`husimi_map`] callers should warn.
pub const TRUNCATION_WARN: f64 = 1e-10;

/// `⟨p_q | z, p⟩` for a minimum-uncertainty state centred at `(z, p)` with
/// squeezing `lambda` (ħ = 1).
pub fn coherent_overlap(p_q: f64, z: f64, p: f64, lambda: f64) -> C64 {
    let norm = (PI * lambda).powf(-0.25);
    let x = (p_q - p) / (2.0 * lambda).sqrt();
    C64::from_polar(norm * (-x * x).exp(), (p - 2.0 * p_q) * z / 2.0)
}

/// Uniform, endpoint-exclusive sampling of a `(z, p)` rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    pub z_min: f64,
    pub z_max: f64,
    pub nz: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub np: usize,
}

impl GridSpec {
    /// The whole quantum cell `[0, 2πMS) × [0, NS)` with `per_copy` samples
    /// per 2π torus copy along each axis.
    pub fn cell(params: &SystemParams, per_copy: usize) -> Self {
        let copies = params.ms() as usize;
        GridSpec {
            z_min: 0.0,
            z_max: params.cell_width(),
            nz: per_copy * copies,
            p_min: 0.0,
            p_max: params.cell_height(),
            np: per_copy * copies,
        }
    }

    pub fn dz(&self) -> f64 {
        (self.z_max - self.z_min) / self.nz as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / self.np as f64
    }

    pub fn z(&self, i: usize) -> f64 {
        self.z_min + i as f64 * self.dz()
    }

    pub fn p(&self, j: usize) -> f64 {
        self.p_min + j as f64 * self.dp()
    }
}

/// Husimi values on a [`GridSpec`], stored row-major with one row per `p`.
#[derive(Clone, Debug)]
pub struct HusimiGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    /// Bound on the absolute error introduced by the Gaussian cutoff.
    pub truncation_bound: f64,
}

impl HusimiGrid {
    pub fn value(&self, iz: usize, ip: usize) -> f64 {
        self.values[ip * self.spec.nz + iz]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// `∫∫ H dz dp / 2π` by the rectangle rule.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.dz() * self.spec.dp() / (2.0 * PI)
    }

    /// `(z, p, value)` for every grid point, row by row.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let nz = self.spec.nz;
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.spec.z(i % nz), self.spec.p(i / nz), v))
    }
}

fn window_half_width(lambda: f64) -> f64 {
    (2.0 * lambda * (1.0 / GAUSSIAN_CUTOFF).ln()).sqrt()
}

/// Ladder slots whose Gaussian weight at momentum `p` is above the cutoff.
fn slot_window(state: &impl MomentumLadder, p: f64, lambda: f64) -> (i64, i64) {
    let w = window_half_width(lambda);
    let h = state.step();
    let mut lo = ((p - w - state.offset()) / h).ceil() as i64;
    let mut hi = ((p + w - state.offset()) / h).floor() as i64;
    if let Some(support) = state.support() {
        lo = lo.max(support.start);
        hi = hi.min(support.end - 1);
    }
    (lo, hi)
}

/// `|⟨Φ|z,p⟩|²` by direct summation over the ladder.
pub fn husimi_value(state: &impl MomentumLadder, z: f64, p: f64, lambda: f64) -> f64 {
    let (lo, hi) = slot_window(state, p, lambda);
    let sum: C64 = (lo..=hi)
        .map(|q| state.amplitude(q).conj() * coherent_overlap(state.momentum(q), z, p, lambda))
        .sum();
    sum.norm_sqr()
}

fn truncation_bound(state: &impl MomentumLadder, lambda: f64) -> f64 {
    // Tail of Σ_q e^{-(p_q-p)²/2λ} beyond the cutoff, times the amplitude
    // bound 1 and the prefactor; enters |S|² linearly through 2|S|.
    let pref = (PI * lambda).powf(-0.25);
    let slots_per_width = (2.0 * lambda).sqrt() / state.step();
    let tail = GAUSSIAN_CUTOFF * (1.0 + slots_per_width);
    let s_max = pref * (1.0 + (PI).sqrt() * slots_per_width);
    2.0 * s_max * pref * tail
}

/// Husimi function `|Σ_q ⟨Φ|p_q⟩⟨p_q|z,p⟩|²` on a grid.
///
/// When the `z` extent spans a whole number of periods of the ladder
/// phases, each `p` row is one FFT; otherwise every point is summed
/// directly.
pub fn husimi_map(state: &impl MomentumLadder, spec: &GridSpec, params: &SystemParams) -> HusimiGrid {
    husimi_map_with(state, spec, params.squeeze)
}

pub fn husimi_map_with(state: &impl MomentumLadder, spec: &GridSpec, lambda: f64) -> HusimiGrid {
    let mut values = vec![0.0; spec.nz * spec.np];
    let turns = state.step() * (spec.z_max - spec.z_min) / (2.0 * PI);
    let wraps = turns.round();
    if spec.nz > 0 && wraps >= 1.0 && (turns - wraps).abs() < 1e-9 {
        let fft = FftPlanner::new().plan_fft_forward(spec.nz);
        values
            .par_chunks_mut(spec.nz)
            .enumerate()
            .for_each(|(ip, row)| fft_row(state, spec, lambda, wraps as i64, &fft, spec.p(ip), row));
    } else {
        values.par_chunks_mut(spec.nz.max(1)).enumerate().for_each(|(ip, row)| {
            let p = spec.p(ip);
            for (iz, v) in row.iter_mut().enumerate() {
                *v = husimi_value(state, spec.z(iz), p, lambda);
            }
        });
    }
    HusimiGrid {
        spec: *spec,
        values,
        truncation_bound: truncation_bound(state, lambda),
    }
}

fn fft_row(
    state: &impl MomentumLadder,
    spec: &GridSpec,
    lambda: f64,
    wraps: i64,
    fft: &Arc<dyn Fft<f64>>,
    p: f64,
    row: &mut [f64],
) {
    let nz = spec.nz as i64;
    let pref2 = (PI * lambda).powf(-0.5);
    let mut buf = vec![C64::new(0.0, 0.0); spec.nz];
    let (lo, hi) = slot_window(state, p, lambda);
    for q in lo..=hi {
        let pq = state.momentum(q);
        let x = (pq - p) / (2.0 * lambda).sqrt();
        let w = state.amplitude(q).conj() * (-x * x).exp() * C64::from_polar(1.0, -pq * spec.z_min);
        buf[(q * wraps).rem_euclid(nz) as usize] += w;
    }
    fft.process(&mut buf);
    for (v, s) in row.iter_mut().zip(&buf) {
        *v = pref2 * s.norm_sqr();
    }
}

/// Cell coordinates to the `2π` torus: `θ = z mod 2π`, `𝒥 = T p mod 2π`.
pub fn fold_to_torus(z: f64, p: f64, params: &SystemParams) -> (f64, f64) {
    (
        z.rem_euclid(2.0 * PI),
        (params.period * p).rem_euclid(2.0 * PI),
    )
}

/// Cell coordinates of a post-kick state to the variables of the classical
/// kicked map.
///
/// The map's `𝒥_n` is `T` times the momentum just before kick `n`, offset
/// by the half gravity drift `πΩ`. The quasi-eigenstates are post-kick
/// states, so the kick `K sin θ` is undone here.
pub fn fold_to_map(z: f64, p: f64, params: &SystemParams) -> (f64, f64) {
    let theta = z.rem_euclid(2.0 * PI);
    let j = params.period * p + params.stochasticity * theta.sin() + PI * params.omega;
    (theta, j.rem_euclid(2.0 * PI))
}

/// Euclidean distance on the `2π × 2π` torus.
pub fn torus_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    let wrap = |d: f64| {
        let d = d.rem_euclid(2.0 * PI);
        d.min(2.0 * PI - d)
    };
    wrap(a.0 - b.0).hypot(wrap(a.1 - b.1))
}

/// Fraction of the grid's Husimi mass within `radius` (in map coordinates)
/// of any of `centers`.
pub fn mass_near(grid: &HusimiGrid, params: &SystemParams, centers: &[(f64, f64)], radius: f64) -> f64 {
    let total: f64 = grid.values.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let near: f64 = grid
        .points()
        .filter(|&(z, p, _)| {
            let pt = fold_to_map(z, p, params);
            centers.iter().any(|&c| torus_distance(pt, c) <= radius)
        })
        .map(|(_, _, v)| v)
        .sum();
    near / total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floquet::{build_block, diagonalize, BlochState, LadderState};
    use crate::params::{derive_params, ResonanceInput};

    fn fig1() -> SystemParams {
        derive_params(&ResonanceInput::new(1, 80, 1, 2, 0, 5.0)).unwrap()
    }

    #[test]
    fn overlap_examples() {
        let lambda = 80.0 / (2.0 * PI);
        let c = coherent_overlap(1.5, 0.0, 1.5, lambda);
        assert!((c.re - (PI * lambda).powf(-0.25)).abs() < 1e-15 && c.im == 0.0);
        let a = coherent_overlap(0.7, 0.3, 2.0, lambda).norm();
        let b = coherent_overlap(0.7, 5.1, 2.0, lambda).norm();
        assert!((a - b).abs() < 1e-15);
        let d = coherent_overlap(1.0 + (2.0 * lambda).sqrt(), 0.4, 1.0, lambda).norm();
        assert!((d - (PI * lambda).powf(-0.25) * (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn plane_wave_is_z_uniform_gaussian() {
        let p = fig1();
        let p0 = 40.0;
        let state = LadderState {
            q_start: 80,
            amplitudes: vec![C64::new(1.0, 0.0)],
            step: p.ladder_step,
            offset: 0.0,
        };
        let spec = GridSpec::cell(&p, 16);
        let grid = husimi_map(&state, &spec, &p);
        let lambda = p.squeeze;
        for ip in (0..spec.np).step_by(5) {
            let pp = spec.p(ip);
            let want = (-(p0 - pp).powi(2) / lambda).exp() / (PI * lambda).sqrt();
            for iz in (0..spec.nz).step_by(7) {
                assert!((grid.value(iz, ip) - want).abs() < 1e-14, "{iz} {ip}");
            }
        }
    }

    #[test]
    fn global_phase_does_not_change_grid() {
        let p = fig1();
        let amps: Vec<C64> = (0..40).map(|i| C64::from_polar(1.0 / 40f64.sqrt(), 0.37 * (i * i) as f64)).collect();
        let a = LadderState { q_start: 50, amplitudes: amps.clone(), step: p.ladder_step, offset: 0.0 };
        let rot = C64::from_polar(1.0, 1.1);
        let b = LadderState { amplitudes: amps.iter().map(|x| x * rot).collect(), ..a.clone() };
        let spec = GridSpec::cell(&p, 8);
        let ga = husimi_map(&a, &spec, &p);
        let gb = husimi_map(&b, &spec, &p);
        for (x, y) in ga.values.iter().zip(&gb.values) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn fft_path_matches_direct_sum() {
        let p = fig1();
        let spec_state = {
            let b = build_block(&p, 0.4).unwrap();
            diagonalize(&b).unwrap().states[17].clone()
        };
        let state = BlochState::new(&spec_state, &p, 0.4);
        let spec = GridSpec::cell(&p, 8);
        let grid = husimi_map(&state, &spec, &p);
        for (iz, ip) in [(0, 0), (3, 9), (15, 2), (11, 14)] {
            let direct = husimi_value(&state, spec.z(iz), spec.p(ip), p.squeeze);
            assert!((grid.value(iz, ip) - direct).abs() < 1e-13);
        }
        // a window that is not a whole period goes through the direct path
        let partial = GridSpec { z_max: 1.0, nz: 4, np: 3, ..spec };
        let g2 = husimi_map(&state, &partial, &p);
        let direct = husimi_value(&state, partial.z(2), partial.p(1), p.squeeze);
        assert!((g2.value(2, 1) - direct).abs() < 1e-15);
    }

    #[test]
    fn cell_periodicity_of_eigenstates() {
        let p = fig1();
        let b = build_block(&p, 0.0).unwrap();
        let spec = diagonalize(&b).unwrap();
        for idx in [0, 100, 250] {
            let st = BlochState::new(&spec.states[idx], &p, 0.0);
            for (z, pp) in [(0.3, 5.0), (7.0, 100.0), (12.0, 155.0)] {
                let v = husimi_value(&st, z, pp, p.squeeze);
                let vz = husimi_value(&st, z + p.cell_width(), pp, p.squeeze);
                let vp = husimi_value(&st, z, pp + p.cell_height(), p.squeeze);
                assert!((v - vz).abs() < 1e-8 && (v - vp).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn cell_integral_is_state_independent() {
        let p = fig1();
        let b = build_block(&p, 0.0).unwrap();
        let spec = diagonalize(&b).unwrap();
        let grid_spec = GridSpec::cell(&p, 32);
        let ints: Vec<f64> = [0usize, 57, 160, 319]
            .iter()
            .map(|&i| husimi_map(&BlochState::new(&spec.states[i], &p, 0.0), &grid_spec, &p).integral())
            .collect();
        for v in &ints {
            assert!((v / ints[0] - 1.0).abs() < 0.01, "{ints:?}");
        }
    }

    #[test]
    fn folding() {
        let p = fig1();
        assert_eq!(fold_to_torus(0.0, 0.0, &p), (0.0, 0.0));
        let (_, j) = fold_to_torus(0.0, p.cell_height(), &p);
        assert!(j.min(2.0 * PI - j) < 1e-12);
        let (t, _) = fold_to_torus(2.0 * PI, 0.0, &p);
        assert!(t.min(2.0 * PI - t) < 1e-12);
        // map coordinates: sin 0 = 0 leaves only the half drift
        let (_, j) = fold_to_map(0.0, 0.0, &p);
        assert!((j - PI / 2.0).abs() < 1e-15);
        assert!((torus_distance((0.1, 6.2), (6.2, 0.1)) - (2.0f64).sqrt() * (2.0 * PI - 6.1)).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn fold_is_idempotent(z in -100.0f64..100.0, pp in -500.0f64..500.0) {
                let p = fig1();
                let (t, j) = fold_to_torus(z, pp, &p);
                let (t2, j2) = (t.rem_euclid(2.0 * PI), j.rem_euclid(2.0 * PI));
                prop_assert_eq!((t, j), (t2, j2));
                prop_assert!((0.0..2.0 * PI).contains(&t) && (0.0..2.0 * PI).contains(&j));
            }
        }
    }
}
