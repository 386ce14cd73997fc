//! Kick-by-kick propagation of plane waves under the exact one-period
//! kernel, incoherent β ensembles and accelerated-peak tracking.
//!
//! Momenta are measured in units of ħG. A state with quasimomentum `β_t`
//! holds amplitudes on `p_n = n + β_t`; each period applies the free-fall
//! phase to every component, then the kick moves `p → p − mgT + q` with
//! amplitude `i^q J_q(k)`.

use std::f64::consts::PI;
use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use crate::floquet::KickCoefficients;
use crate::params::SystemParams;
use crate::{Error, Result, C64};

/// Edge amplitudes below this modulus are dropped after each kick.
pub const TRIM_TOL: f64 = 1e-14;
/// Largest probability that trimming may discard in one kick.
pub const TRUNCATION_TOL: f64 = 1e-12;

/// A plane-wave superposition on one quasimomentum ladder.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    /// Quasimomentum at kick 0, in `[0, 1)`.
    pub beta_initial: f64,
    /// Current quasimomentum, in `[0, 1)`.
    pub beta: f64,
    pub kick_count: u64,
    /// Ladder index of `amplitudes[0]`.
    pub n_start: i64,
    pub amplitudes: Vec<C64>,
}

impl QuantumState {
    pub fn window(&self) -> Range<i64> {
        self.n_start..self.n_start + self.amplitudes.len() as i64
    }

    pub fn amplitude(&self, n: i64) -> C64 {
        let i = n - self.n_start;
        if i < 0 || i >= self.amplitudes.len() as i64 {
            C64::new(0.0, 0.0)
        } else {
            self.amplitudes[i as usize]
        }
    }

    pub fn momentum(&self, n: i64) -> f64 {
        n as f64 + self.beta
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }
}

/// A unit-amplitude plane wave at `p = n0 + beta`.
pub fn init_plane_wave(beta: f64, n0: i64) -> Result<QuantumState> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Config(format!("quasimomentum {beta} outside [0, 1)")));
    }
    Ok(QuantumState {
        beta_initial: beta,
        beta,
        kick_count: 0,
        n_start: n0,
        amplitudes: vec![C64::new(1.0, 0.0)],
    })
}

/// Precomputed one-period propagator.
#[derive(Clone, Debug)]
pub struct Propagator {
    m: i128,
    n: i128,
    r: i128,
    s: i128,
    omega: f64,
    kick: KickCoefficients,
}

impl Propagator {
    pub fn new(params: &SystemParams) -> Self {
        Propagator {
            m: params.m() as i128,
            n: params.n() as i128,
            r: params.r() as i128,
            s: params.s() as i128,
            omega: params.omega,
            kick: KickCoefficients::new(params.kick()),
        }
    }

    /// `mgT = RN/(SM)`.
    pub fn gravity_drop(&self) -> f64 {
        (self.r * self.n) as f64 / (self.s * self.m) as f64
    }

    /// Quasimomentum after `t` kicks: `β_0 − t·mgT mod 1`, with the drift
    /// reduced in integers.
    pub fn beta_after(&self, beta_initial: f64, t: u64) -> f64 {
        let sm = self.s * self.m;
        let drop = (t as i128 * self.r * self.n).rem_euclid(sm) as f64 / sm as f64;
        let b = (beta_initial - drop).rem_euclid(1.0);
        if b >= 1.0 {
            0.0
        } else {
            b
        }
    }

    /// Free-fall phase over one period for the component `p = n + β`:
    /// `−(g²T³/6 + p²T/2 − p g T²/2)`, with the integer parts of the
    /// `n²` and `n` terms reduced modulo 2π exactly.
    pub fn free_phase(&self, n: i64, beta: f64) -> f64 {
        let n = n as i128;
        let (m, nn, r, s) = (self.m, self.n, self.r, self.s);
        let mf = m as f64;
        let nf = nn as f64;
        let quad = (n * n * m).rem_euclid(2 * nn) as f64 / nf;
        let lin = (n * r).rem_euclid(2 * s) as f64 / s as f64;
        let cross = (2.0 * n as f64 * beta * mf / nf).rem_euclid(2.0);
        let constant = self.omega * self.omega * nf / (3.0 * mf) + beta * beta * mf / nf
            - beta * self.omega;
        -PI * (quad + cross - lin + constant)
    }

    /// One kick period.
    pub fn one_period(&self, state: &QuantumState) -> Result<QuantumState> {
        let beta_next = self.beta_after(state.beta_initial, state.kick_count + 1);
        let shift = (state.beta - self.gravity_drop() - beta_next).round() as i64;

        let phased: Vec<C64> = state
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| a * C64::from_polar(1.0, self.free_phase(state.n_start + i as i64, state.beta)))
            .collect();

        let q = self.kick.max_order() as i64;
        let len = phased.len() + 2 * q as usize;
        let mut out = vec![C64::new(0.0, 0.0); len];
        for (d, c) in self.kick.iter() {
            let off = (d + q) as usize;
            for (i, a) in phased.iter().enumerate() {
                out[i + off] += c * a;
            }
        }

        let first = out.iter().position(|a| a.norm() >= TRIM_TOL).unwrap_or(0);
        let last = out.iter().rposition(|a| a.norm() >= TRIM_TOL).unwrap_or(0);
        let dropped: f64 = out[..first].iter().chain(&out[last + 1..]).map(|a| a.norm_sqr()).sum();
        if dropped > TRUNCATION_TOL {
            return Err(Error::Tolerance {
                what: "truncated probability per kick",
                value: dropped,
                limit: TRUNCATION_TOL,
            });
        }
        Ok(QuantumState {
            beta_initial: state.beta_initial,
            beta: beta_next,
            kick_count: state.kick_count + 1,
            n_start: state.n_start - q + shift + first as i64,
            amplitudes: out[first..=last].to_vec(),
        })
    }
}

/// One kick period; builds the kick coefficients on every call.
pub fn one_period(state: &QuantumState, params: &SystemParams) -> Result<QuantumState> {
    Propagator::new(params).one_period(state)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Lab,
    Falling,
}

/// `(p, |amplitude|²)` for every retained component; the falling frame
/// adds `t·mgT`.
pub fn momentum_distribution(state: &QuantumState, params: &SystemParams, frame: Frame) -> Vec<(f64, f64)> {
    let offset = frame_offset(params, frame, state.kick_count);
    state
        .window()
        .zip(&state.amplitudes)
        .map(|(n, a)| (state.momentum(n) + offset, a.norm_sqr()))
        .collect()
}

fn frame_offset(params: &SystemParams, frame: Frame, kick: u64) -> f64 {
    match frame {
        Frame::Lab => 0.0,
        Frame::Falling => kick as f64 * gravity_drop(params),
    }
}

fn gravity_drop(params: &SystemParams) -> f64 {
    params.drop_slots() as f64 / params.ms() as f64
}

/// Gaussian weights over β, truncated at `±cutoff·σ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Mixture {
    pub samples: usize,
    pub center: f64,
    pub sigma: f64,
    pub cutoff: f64,
    pub n0: i64,
}

impl Default for Mixture {
    fn default() -> Self {
        Mixture {
            samples: 201,
            center: 0.0,
            sigma: 0.05,
            cutoff: 3.0,
            n0: 0,
        }
    }
}

impl Mixture {
    pub fn single(beta: f64) -> Self {
        Mixture {
            samples: 1,
            center: beta,
            sigma: 0.0,
            cutoff: 0.0,
            n0: 0,
        }
    }

    /// Evenly spaced `(β, weight)` pairs; weights sum to 1.
    pub fn points(&self) -> Vec<(f64, f64)> {
        if self.samples <= 1 || self.sigma == 0.0 {
            return vec![(self.center, 1.0)];
        }
        let half = self.cutoff * self.sigma;
        let raw: Vec<(f64, f64)> = (0..self.samples)
            .map(|i| {
                let b = self.center - half + 2.0 * half * i as f64 / (self.samples - 1) as f64;
                let x = (b - self.center) / self.sigma;
                (b, (-0.5 * x * x).exp())
            })
            .collect();
        let total: f64 = raw.iter().map(|(_, w)| w).sum();
        raw.into_iter().map(|(b, w)| (b, w / total)).collect()
    }
}

/// Probability per unit-width momentum bin. Bin `i` covers
/// `[lo + i + offset − ½, lo + i + offset + ½)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub kick: u64,
    pub lo: i64,
    pub offset: f64,
    pub mass: Vec<f64>,
}

impl Histogram {
    pub fn center(&self, i: usize) -> f64 {
        (self.lo + i as i64) as f64 + self.offset
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    fn add(&mut self, p: f64, w: f64) {
        let b = (p - self.offset).round() as i64;
        if self.mass.is_empty() {
            self.lo = b;
        }
        if b < self.lo {
            let grow = (self.lo - b) as usize;
            self.mass.splice(0..0, std::iter::repeat_n(0.0, grow));
            self.lo = b;
        }
        let i = (b - self.lo) as usize;
        if i >= self.mass.len() {
            self.mass.resize(i + 1, 0.0);
        }
        self.mass[i] += w;
    }

    fn merge_scaled(&mut self, other: &Histogram, w: f64) {
        for (i, m) in other.mass.iter().enumerate() {
            self.add(other.center(i), m * w);
        }
    }

    /// Index of the bin containing `p`, if any.
    pub fn bin_of(&self, p: f64) -> Option<usize> {
        let i = (p - self.offset).round() as i64 - self.lo;
        (0..self.mass.len() as i64).contains(&i).then_some(i as usize)
    }
}

/// Ensemble histograms in the falling frame, one per kick from 0.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentumSeries {
    pub gravity_drop: f64,
    pub rows: Vec<Histogram>,
}

impl MomentumSeries {
    /// Rows in the requested frame; the lab frame shifts bins by `−t·mgT`.
    pub fn in_frame(&self, frame: Frame) -> Vec<Histogram> {
        self.rows
            .iter()
            .map(|h| match frame {
                Frame::Falling => h.clone(),
                Frame::Lab => Histogram {
                    offset: h.offset - h.kick as f64 * self.gravity_drop,
                    ..h.clone()
                },
            })
            .collect()
    }
}

fn falling_histogram(state: &QuantumState, params: &SystemParams, offset: f64) -> Histogram {
    let mut h = Histogram {
        kick: state.kick_count,
        lo: 0,
        offset,
        mass: Vec::new(),
    };
    for (p, w) in momentum_distribution(state, params, Frame::Falling) {
        h.add(p, w);
    }
    h
}

fn evolve_sample(prop: &Propagator, params: &SystemParams, beta: f64, n0: i64, kicks: u64, offset: f64) -> Result<Vec<Histogram>> {
    let reduced = beta.rem_euclid(1.0);
    let carry = (beta - reduced).round() as i64;
    let mut state = init_plane_wave(if reduced >= 1.0 { 0.0 } else { reduced }, n0 + carry)?;
    let mut rows = Vec::with_capacity(kicks as usize + 1);
    rows.push(falling_histogram(&state, params, offset));
    for _ in 0..kicks {
        state = prop.one_period(&state)?;
        rows.push(falling_histogram(&state, params, offset));
    }
    Ok(rows)
}

/// Incoherent average over the mixture, kicks `0..=kicks`. Samples run in
/// parallel; the weighted sum is taken in sample order.
pub fn evolve_ensemble(mixture: &Mixture, kicks: u64, params: &SystemParams) -> Result<MomentumSeries> {
    let prop = Propagator::new(params);
    let points = mixture.points();
    // Falling-frame momenta of a sample stay on n + β_0; bins are centred on
    // integers + center so each sample lands inside one bin per ladder slot.
    let offset = mixture.center;
    let mut rows: Vec<Histogram> = (0..=kicks)
        .map(|t| Histogram {
            kick: t,
            lo: 0,
            offset,
            mass: Vec::new(),
        })
        .collect();
    let chunk = rayon::current_num_threads().max(1) * 4;
    for group in points.chunks(chunk) {
        let results: Vec<Result<Vec<Histogram>>> = group
            .par_iter()
            .map(|&(b, _)| evolve_sample(&prop, params, b, mixture.n0, kicks, offset))
            .collect();
        for (res, &(_, w)) in results.into_iter().zip(group) {
            for (acc, h) in rows.iter_mut().zip(res?) {
                acc.merge_scaled(&h, w);
            }
        }
    }
    Ok(MomentumSeries {
        gravity_drop: prop.gravity_drop(),
        rows,
    })
}

/// How to follow a moving peak.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BandSpec {
    /// Full band width in ħG.
    pub width: f64,
    /// Minimum in-band mass at the first tracked kick.
    pub threshold: f64,
    /// Kick at which tracking starts.
    pub start_kick: u64,
    /// Velocity used to extrapolate before two positions are known.
    pub initial_velocity: f64,
}

impl Default for BandSpec {
    fn default() -> Self {
        BandSpec {
            width: 5.0,
            threshold: 0.05,
            start_kick: 0,
            initial_velocity: 0.0,
        }
    }
}

impl BandSpec {
    /// Band of width `π/(o ħ_eff)` ħG: the momentum distance between
    /// consecutive visits of an order-`o` island chain, halved.
    pub fn island(params: &SystemParams, order: usize) -> Self {
        BandSpec {
            width: PI / (order.max(1) as f64 * effective_planck(params)),
            ..BandSpec::default()
        }
    }
}

/// Distance of `τ = 2π M/N` from the nearest multiple of `2π`: `T` in the
/// semiclassical regime and `|ε|` near the half-Talbot resonance.
pub fn effective_planck(params: &SystemParams) -> f64 {
    let (m, n) = (params.m() as i128, params.n() as i128);
    let r = m.rem_euclid(n);
    2.0 * PI * r.min(n - r) as f64 / n as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeTrack {
    pub kicks: Vec<u64>,
    pub positions: Vec<f64>,
    pub fractions: Vec<f64>,
    /// Least-squares slope of position against kick, ħG per kick.
    pub slope: f64,
    pub intercept: f64,
}

impl ModeTrack {
    pub fn fraction_at(&self, kick: u64) -> Option<f64> {
        self.kicks.iter().position(|&k| k == kick).map(|i| self.fractions[i])
    }
}

fn band_moments(h: &Histogram, center: f64, half: f64) -> (f64, f64) {
    let mut mass = 0.0;
    let mut first = 0.0;
    for (i, m) in h.mass.iter().enumerate() {
        let p = h.center(i);
        if (p - center).abs() <= half {
            mass += m;
            first += m * p;
        }
    }
    (mass, first)
}

/// Follows the band of width `band.width` around the extrapolated peak,
/// re-centring on the in-band mean each kick.
pub fn track_mode(rows: &[Histogram], band: &BandSpec) -> Result<ModeTrack> {
    let rows: Vec<&Histogram> = rows.iter().filter(|h| h.kick >= band.start_kick).collect();
    let Some(first) = rows.first() else {
        return Err(Error::Config("empty momentum series".into()));
    };
    let half = band.width / 2.0;
    let peak = first
        .mass
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| first.center(i))
        .unwrap_or(0.0);
    let (mass0, _) = band_moments(first, peak, half);
    if mass0 < band.threshold {
        return Err(Error::NoPersistentPeak {
            mass: mass0,
            threshold: band.threshold,
        });
    }

    let mut kicks: Vec<u64> = Vec::with_capacity(rows.len());
    let mut positions: Vec<f64> = Vec::with_capacity(rows.len());
    let mut fractions = Vec::with_capacity(rows.len());
    let mut prev_kick = first.kick;
    for h in rows {
        let predicted = match positions.len() {
            0 => peak,
            1 => positions[0] + band.initial_velocity * (h.kick - prev_kick) as f64,
            n => positions[n - 1] + (positions[n - 1] - positions[n - 2]) * (h.kick - prev_kick) as f64
                / (prev_kick - kicks[n - 2]).max(1) as f64,
        };
        let (mass, first_moment) = band_moments(h, predicted, half);
        let pos = if mass > 0.0 { first_moment / mass } else { predicted };
        prev_kick = h.kick;
        kicks.push(h.kick);
        positions.push(pos);
        fractions.push(mass);
    }
    let (slope, intercept) = least_squares(&kicks, &positions);
    Ok(ModeTrack {
        kicks,
        positions,
        fractions,
        slope,
        intercept,
    })
}

fn least_squares(x: &[u64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.len() < 2 {
        return (0.0, y.first().copied().unwrap_or(0.0));
    }
    let mx = x.iter().map(|&v| v as f64).sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let dx = a as f64 - mx;
        sxy += dx * (b - my);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
