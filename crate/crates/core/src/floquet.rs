//! The finite Bloch block of the one-period evolution operator.
//!
//! On the momentum ladder `p_q = q/(MS) + β` the evolution operator is an
//! infinite matrix invariant under `q → q + P` with `P = N S² M`. Bloch's
//! theorem reduces it to a `P × P` unitary block per Bloch angle `θ0`, whose
//! column `s'` is
//!
//! ```text
//! A(s') e^{-iθ0 (RN+s-s')/P} F((RN+s-s') mod P) / P
//! ```
//!
//! where `A` is the free-fall phase of slot `s'` and `F` is a length-`P`
//! discrete Fourier transform of the kick `e^{ik cos}` sampled at the
//! shifted angles `θ0/(SN) + 2πμ/(SN)`.

use std::f64::consts::PI;
use std::ops::Range;
use std::sync::Arc;

use faer::{Mat, MatRef};
use rustfft::FftPlanner;
use serde::Serialize;

use crate::params::SystemParams;
use crate::special::{bessel_j_upto, periodic_mean};
use crate::{Error, Result, C64};

pub const UNITARITY_TOL: f64 = 1e-10;
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Eigenvalues closer than this in phase are treated as one degenerate cluster.
pub const DEGENERACY_TOL: f64 = 1e-10;

/// `iⁿ`
pub fn i_pow(n: i64) -> C64 {
    match n.rem_euclid(4) {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

/// Momentum-transfer amplitude of one kick by `n` units of ħG:
/// `(1/2π) ∫ e^{-inθ} e^{ik cos θ} dθ = iⁿ J_n(k)`.
pub fn kick_coefficient(n: i64, k: f64) -> C64 {
    let order = n.unsigned_abs() as usize;
    // J_{-n} = (-1)^n J_n and i^{-n} = (-1)^n i^n, so c_{-n} = c_n.
    i_pow(order as i64) * bessel_j_upto(order, k)[order]
}

/// All kick coefficients with `|J_n(k)|` above a cutoff.
#[derive(Clone, Debug)]
pub struct KickCoefficients {
    max_order: usize,
    values: Vec<C64>,
}

impl KickCoefficients {
    pub const CUTOFF: f64 = 1e-16;

    pub fn new(k: f64) -> Self {
        Self::with_cutoff(k, Self::CUTOFF)
    }

    pub fn with_cutoff(k: f64, cutoff: f64) -> Self {
        let probe = k.abs().ceil() as usize + 80;
        let j = bessel_j_upto(probe, k);
        let beyond = k.abs().ceil() as usize;
        let max_order = (beyond..=probe)
            .find(|&n| j[n..].iter().all(|v| v.abs() < cutoff))
            .unwrap_or(probe)
            .saturating_sub(1);
        let values = (-(max_order as i64)..=max_order as i64)
            .map(|n| i_pow(n.abs()) * j[n.unsigned_abs() as usize])
            .collect();
        KickCoefficients { max_order, values }
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn get(&self, n: i64) -> C64 {
        if n.unsigned_abs() as usize > self.max_order {
            C64::new(0.0, 0.0)
        } else {
            self.values[(n + self.max_order as i64) as usize]
        }
    }

    /// `(n, c_n)` for `n = -max_order ..= max_order`.
    pub fn iter(&self) -> impl Iterator<Item = (i64, C64)> + '_ {
        let m = self.max_order as i64;
        self.values.iter().enumerate().map(move |(i, c)| (i as i64 - m, *c))
    }
}

/// `F(d) = Σ_μ e^{ik cos(θ0/(SN) + 2πμ/(SN))} e^{-2πiμd/P}` for `d = 0..P`.
pub fn kick_dft(params: &SystemParams, theta0: f64) -> Vec<C64> {
    let p = params.block_dim;
    let sn = (params.s() * params.n()) as f64;
    let k = params.kick();
    let mut buf: Vec<C64> = (0..p)
        .map(|mu| {
            let angle = theta0 / sn + 2.0 * PI * (mu as f64) / sn;
            C64::from_polar(1.0, k * angle.cos())
        })
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(p);
    fft.process(&mut buf);
    buf
}

/// Free-fall phase `A(s)` of ladder slot `s`, without the constant part
/// carried by [`global_phase`].
///
/// With `β = b/M` the exponent is `-iπ (s² + 2bS s - RN s)/P`, which is
/// reduced modulo `2P` in integers before converting to a float.
pub fn column_phase(params: &SystemParams, s: i64) -> C64 {
    let p = params.block_dim as i128;
    let b = (params.beta * params.m() as f64).round() as i128;
    let s = s as i128;
    let num = s * s + 2 * b * params.s() as i128 * s - params.drop_slots() as i128 * s;
    let reduced = num.rem_euclid(2 * p) as f64;
    C64::from_polar(1.0, -PI * reduced / p as f64)
}

/// Constant phase the block drops from the exact one-period kernel:
/// `exp(-i (g²T³/6 + πMβ²/N - πRβ/S))`.
pub fn global_phase(params: &SystemParams) -> C64 {
    let g = params.gravity;
    let t = params.period;
    let b = params.beta;
    let phase = g * g * t * t * t / 6.0 + PI * params.m() as f64 * b * b / params.n() as f64
        - PI * params.r() as f64 * b / params.s() as f64;
    C64::from_polar(1.0, -phase)
}

/// The `P × P` Bloch block at angle `theta0`.
#[derive(Clone, Debug)]
pub struct FloquetBlock {
    pub params: SystemParams,
    pub theta0: f64,
    pub entries: Mat<C64>,
    /// `max |U†U - I|` measured at construction.
    pub unitarity_error: f64,
}

impl FloquetBlock {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.entries[(row, col)]
    }

    /// `U v` for a block vector.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let p = self.dim();
        assert_eq!(v.len(), p);
        let mut out = vec![C64::new(0.0, 0.0); p];
        for (col, &x) in v.iter().enumerate() {
            if x == C64::new(0.0, 0.0) {
                continue;
            }
            let c = self.entries.col(col);
            for (o, u) in out.iter_mut().zip(c.iter()) {
                *o += u * x;
            }
        }
        out
    }

    /// `U v` times the dropped constant phase, i.e. the exact one-period
    /// evolution restricted to this Bloch sector.
    pub fn propagate(&self, v: &[C64]) -> Vec<C64> {
        let phase = global_phase(&self.params);
        self.apply(v).into_iter().map(|x| x * phase).collect()
    }
}

/// `max |M†M - I|`.
pub fn unitarity_defect(m: MatRef<'_, C64>) -> f64 {
    let gram = m.adjoint() * m;
    let n = m.ncols();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in 0..n {
            let mut v = gram[(i, j)];
            if i == j {
                v -= C64::new(1.0, 0.0);
            }
            worst = worst.max(v.norm());
        }
    }
    worst
}

/// Assembles the Bloch block and verifies its unitarity.
pub fn build_block(params: &SystemParams, theta0: f64) -> Result<FloquetBlock> {
    let block = assemble_block(params, theta0);
    let err = unitarity_defect(block.entries.as_ref());
    if !(err < UNITARITY_TOL) {
        return Err(Error::Tolerance {
            what: "block unitarity max|U^H U - I|",
            value: err,
            limit: UNITARITY_TOL,
        });
    }
    Ok(FloquetBlock {
        unitarity_error: err,
        ..block
    })
}

/// Block assembly without the unitarity check.
pub fn assemble_block(params: &SystemParams, theta0: f64) -> FloquetBlock {
    let p = params.block_dim;
    let pf = p as f64;
    let f = kick_dft(params, theta0);
    let drop = params.drop_slots();
    // e^{-iθ0 (RN+s-s')/P} with the unreduced integer RN+s-s', split into
    // row and column factors.
    let rows: Vec<C64> = (0..p)
        .map(|s| C64::from_polar(1.0 / pf, -theta0 * (drop + s as i64) as f64 / pf))
        .collect();
    let cols: Vec<C64> = (0..p)
        .map(|s| column_phase(params, s as i64) * C64::from_polar(1.0, theta0 * s as f64 / pf))
        .collect();
    let pi = p as i64;
    let entries = Mat::from_fn(p, p, |s, sp| {
        let d = (drop + s as i64 - sp as i64).rem_euclid(pi) as usize;
        rows[s] * cols[sp] * f[d]
    });
    FloquetBlock {
        params: *params,
        theta0,
        entries,
        unitarity_error: f64::NAN,
    }
}

/// A quadrature result with its estimated absolute error.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureValue {
    pub value: C64,
    pub error: f64,
}

/// Kick integral with possibly fractional index `x = num/den`:
/// the mean of `e^{-iθx} e^{ik cos θ}` over its full period `2π den`.
///
/// For integer `x` this is `iˣ J_x(k)`; for fractional `x` it vanishes,
/// which is the statement that only integer momentum transfers occur.
pub fn kick_integral(num: i64, den: i64, k: f64, nodes_per_turn: usize) -> QuadratureValue {
    let x = num as f64 / den as f64;
    let period = 2.0 * PI * den as f64;
    let eval = |per_turn: usize| {
        periodic_mean(per_turn * den as usize, period, |t| {
            C64::from_polar(1.0, k * t.cos() - t * x)
        })
    };
    let coarse = eval(nodes_per_turn / 2);
    let fine = eval(nodes_per_turn);
    QuadratureValue {
        value: fine,
        error: (fine - coarse).norm(),
    }
}

/// Element `U_{q q'}` of the infinite one-period matrix on the ladder,
/// evaluated from the momentum-space kernel by quadrature. Used as an
/// oracle for the translation symmetry and for the block assembly.
pub fn infinite_element(params: &SystemParams, q: i64, q_prime: i64) -> QuadratureValue {
    let p_a = params.ladder_momentum(q_prime);
    let g = params.gravity;
    let t = params.period;
    let phase = -(g * g * t * t * t / 6.0 + p_a * p_a * t / 2.0 - p_a * g * t * t / 2.0);
    let kernel = C64::from_polar(1.0, phase);
    let nodes = 64 * ((params.kick().ceil() as usize + 16).next_power_of_two());
    let integral = kick_integral(params.drop_slots() + q - q_prime, params.ms(), params.kick(), nodes);
    QuadratureValue {
        value: kernel * integral.value,
        error: integral.error,
    }
}

/// One Floquet eigenpair of a block.
#[derive(Clone, Debug, Serialize)]
pub struct QuasiEigenstate {
    pub eigenvalue: C64,
    /// `ω` with `eigenvalue = e^{-iωT}`, in `(-π/T, π/T]`.
    pub quasi_energy: f64,
    /// Unit-norm eigenvector, largest component real and positive.
    pub block_vector: Vec<C64>,
    /// `‖U v - λ v‖₂`
    pub residual: f64,
}

impl QuasiEigenstate {
    pub fn peak_modulus(&self) -> f64 {
        self.block_vector.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct Spectrum {
    pub theta0: f64,
    pub period: f64,
    pub states: Vec<QuasiEigenstate>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, index: usize) -> Result<&QuasiEigenstate> {
        self.states.get(index).ok_or(Error::OutOfRange {
            index,
            len: self.states.len(),
        })
    }

    pub fn max_residual(&self) -> f64 {
        self.states.iter().map(|s| s.residual).fold(0.0, f64::max)
    }

    pub fn max_modulus_defect(&self) -> f64 {
        self.states
            .iter()
            .map(|s| (s.eigenvalue.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// `ω = -arg(λ)/T` folded into `(-π/T, π/T]`.
pub fn quasi_energy(eigenvalue: C64, period: f64) -> f64 {
    let mut w = -eigenvalue.arg();
    if w <= -PI {
        w += 2.0 * PI;
    }
    w / period
}

/// Diagonalizes a Bloch block. Eigenpairs come back sorted by quasi-energy.
pub fn diagonalize(block: &FloquetBlock) -> Result<Spectrum> {
    let states = diagonalize_unitary(block.entries.as_ref(), block.params.period)?;
    Ok(Spectrum {
        theta0: block.theta0,
        period: block.params.period,
        states,
    })
}

/// Eigen-decomposition of a (numerically) unitary matrix.
///
/// Degenerate clusters are re-orthonormalized so the eigenvector matrix is
/// unitary; every pair is checked against [`RESIDUAL_TOL`].
pub fn diagonalize_unitary(m: MatRef<'_, C64>, period: f64) -> Result<Vec<QuasiEigenstate>> {
    let n = m.nrows();
    let evd = m.eigen().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let values: Vec<C64> = (0..n).map(|j| evd.S()[j]).collect();
    let mut vectors: Vec<Vec<C64>> = (0..n)
        .map(|j| evd.U().col(j).iter().copied().collect())
        .collect();
    drop(evd);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].arg().total_cmp(&values[b].arg()));
    for cluster in degenerate_clusters(&order, &values) {
        orthonormalize(&mut vectors, &cluster);
    }
    for v in vectors.iter_mut() {
        normalize(v);
        fix_phase(v);
    }

    let vmat = Mat::from_fn(n, n, |i, j| vectors[j][i]);
    let uv = m * &vmat;
    let mut states: Vec<QuasiEigenstate> = (0..n)
        .map(|j| {
            let lambda = values[j];
            let residual = uv
                .col(j)
                .iter()
                .zip(&vectors[j])
                .map(|(a, b)| (a - lambda * b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            QuasiEigenstate {
                eigenvalue: lambda,
                quasi_energy: quasi_energy(lambda, period),
                block_vector: std::mem::take(&mut vectors[j]),
                residual,
            }
        })
        .collect();
    states.sort_by(|a, b| {
        a.quasi_energy
            .total_cmp(&b.quasi_energy)
            .then(b.peak_modulus().total_cmp(&a.peak_modulus()))
    });

    let worst = states.iter().map(|s| s.residual).fold(0.0, f64::max);
    if !(worst < RESIDUAL_TOL) {
        return Err(Error::Tolerance {
            what: "eigenpair residual",
            value: worst,
            limit: RESIDUAL_TOL,
        });
    }
    let modulus = states
        .iter()
        .map(|s| (s.eigenvalue.norm() - 1.0).abs())
        .fold(0.0, f64::max);
    if !(modulus < RESIDUAL_TOL) {
        return Err(Error::Tolerance {
            what: "eigenvalue modulus defect",
            value: modulus,
            limit: RESIDUAL_TOL,
        });
    }
    Ok(states)
}

/// Groups of indices (in phase order) whose eigenphases agree within
/// [`DEGENERACY_TOL`], including the wrap-around at ±π.
fn degenerate_clusters(order: &[usize], values: &[C64]) -> Vec<Vec<usize>> {
    let n = order.len();
    if n == 0 {
        return Vec::new();
    }
    let gap = |a: usize, b: usize| {
        let d = (values[b].arg() - values[a].arg()).rem_euclid(2.0 * PI);
        d.min(2.0 * PI - d)
    };
    let mut clusters: Vec<Vec<usize>> = vec![vec![order[0]]];
    for w in order.windows(2) {
        if gap(w[0], w[1]) < DEGENERACY_TOL {
            clusters.last_mut().unwrap().push(w[1]);
        } else {
            clusters.push(vec![w[1]]);
        }
    }
    if clusters.len() > 1 && gap(order[n - 1], order[0]) < DEGENERACY_TOL {
        let first = clusters.remove(0);
        clusters.last_mut().unwrap().extend(first);
    }
    clusters.retain(|c| c.len() > 1);
    clusters
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn normalize(v: &mut [C64]) {
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|c| *c /= norm);
    }
}

/// Modified Gram-Schmidt, applied twice for stability.
fn orthonormalize(vectors: &mut [Vec<C64>], idx: &[usize]) {
    for _ in 0..2 {
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[..a] {
                let proj = dot(&vectors[j], &vectors[i]);
                let (vj, vi) = if j < i {
                    let (lo, hi) = vectors.split_at_mut(i);
                    (&lo[j], &mut hi[0])
                } else {
                    let (lo, hi) = vectors.split_at_mut(j);
                    (&hi[0], &mut lo[i])
                };
                for (x, y) in vi.iter_mut().zip(vj.iter()) {
                    *x -= proj * y;
                }
            }
            normalize(&mut vectors[i]);
        }
    }
}

/// Rotates `v` so its largest-modulus component is real and positive.
fn fix_phase(v: &mut [C64]) {
    let Some((idx, peak)) = v
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
    else {
        return;
    };
    let norm = peak.norm();
    if norm == 0.0 {
        return;
    }
    let rot = peak.conj() / norm;
    v.iter_mut().for_each(|c| *c *= rot);
    v[idx] = C64::new(norm, 0.0);
}

/// Amplitudes on a momentum ladder `p_q = q·step + offset`.
pub trait MomentumLadder: Sync {
    fn step(&self) -> f64;
    fn offset(&self) -> f64;
    fn amplitude(&self, q: i64) -> C64;
    /// Slots outside this range hold zero; `None` for an infinite state.
    fn support(&self) -> Option<Range<i64>>;

    fn momentum(&self, q: i64) -> f64 {
        q as f64 * self.step() + self.offset()
    }
}

/// A finite stretch of ladder amplitudes starting at slot `q_start`.
#[derive(Clone, Debug, PartialEq)]
pub struct LadderState {
    pub q_start: i64,
    pub amplitudes: Vec<C64>,
    pub step: f64,
    pub offset: f64,
}

impl LadderState {
    pub fn q_range(&self) -> Range<i64> {
        self.q_start..self.q_start + self.amplitudes.len() as i64
    }
}

impl MomentumLadder for LadderState {
    fn step(&self) -> f64 {
        self.step
    }
    fn offset(&self) -> f64 {
        self.offset
    }
    fn amplitude(&self, q: i64) -> C64 {
        let i = q - self.q_start;
        if i < 0 || i >= self.amplitudes.len() as i64 {
            C64::new(0.0, 0.0)
        } else {
            self.amplitudes[i as usize]
        }
    }
    fn support(&self) -> Option<Range<i64>> {
        Some(self.q_range())
    }
}

/// A quasi-eigenstate on the full infinite ladder,
/// `Φ_{s+Pν} = e^{-iθ0ν} v_s`.
#[derive(Clone, Debug)]
pub struct BlochState {
    pub block_vector: Arc<[C64]>,
    pub theta0: f64,
    pub step: f64,
    pub offset: f64,
}

impl BlochState {
    pub fn new(state: &QuasiEigenstate, params: &SystemParams, theta0: f64) -> Self {
        BlochState {
            block_vector: state.block_vector.clone().into(),
            theta0,
            step: params.ladder_step,
            offset: params.beta,
        }
    }
}

impl MomentumLadder for BlochState {
    fn step(&self) -> f64 {
        self.step
    }
    fn offset(&self) -> f64 {
        self.offset
    }
    fn amplitude(&self, q: i64) -> C64 {
        let p = self.block_vector.len() as i64;
        let nu = q.div_euclid(p);
        let s = q.rem_euclid(p) as usize;
        self.block_vector[s] * C64::from_polar(1.0, -self.theta0 * nu as f64)
    }
    fn support(&self) -> Option<Range<i64>> {
        None
    }
}

/// Copies of the block vector for `ν` in `nu`, i.e. slots `q ∈ [P ν_lo, P ν_hi)`.
pub fn unfold_state(
    state: &QuasiEigenstate,
    params: &SystemParams,
    theta0: f64,
    nu: Range<i64>,
) -> LadderState {
    let p = state.block_vector.len() as i64;
    let bloch = BlochState::new(state, params, theta0);
    let q_start = nu.start * p;
    let amplitudes = (q_start..nu.end * p).map(|q| bloch.amplitude(q)).collect();
    LadderState {
        q_start,
        amplitudes,
        step: params.ladder_step,
        offset: params.beta,
    }
}
