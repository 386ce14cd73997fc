//! Classical and ε-classical kicked maps on the `2π` torus, and their
//! accelerator-mode periodic orbits.
//!
//! ```text
//! 𝒥' = 𝒥 - K sin θ - σ 2πΩ
//! θ' = θ + σ 𝒥'
//! ```
//!
//! with `σ = +1` for the classical map and `σ = sgn ε` for the ε-classical
//! one (where `K` becomes `K_ε = ε k`). An accelerator mode of order `o` and
//! jump `j` returns to its starting angle after `o` steps while `𝒥` has
//! dropped by exactly `2πj` on the unwrapped cylinder.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::params::SystemParams;

const TWO_PI: f64 = 2.0 * PI;

/// Reduces an angle into `[0, 2π)`.
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TWO_PI);
    if r >= TWO_PI {
        0.0
    } else {
        r + 0.0
    }
}

/// Reduces an angle difference into `(-π, π]`.
fn wrap_centered(x: f64) -> f64 {
    let r = wrap_angle(x);
    if r > PI {
        r - TWO_PI
    } else {
        r
    }
}

/// A point `(θ, 𝒥)` on the torus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhasePoint {
    pub theta: f64,
    pub action: f64,
}

impl PhasePoint {
    pub fn new(theta: f64, action: f64) -> Self {
        PhasePoint {
            theta: wrap_angle(theta),
            action: wrap_angle(action),
        }
    }

    pub fn as_pair(&self) -> (f64, f64) {
        (self.theta, self.action)
    }

    pub fn distance(&self, other: &PhasePoint) -> f64 {
        wrap_centered(self.theta - other.theta).hypot(wrap_centered(self.action - other.action))
    }
}

/// Which kicked map to iterate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum KickedMap {
    Classical { stochasticity: f64, omega: f64 },
    Epsilon { k_eps: f64, omega: f64, sign: f64 },
}

impl KickedMap {
    /// The classical map with `K` and `Ω` from `params`.
    pub fn classical(params: &SystemParams) -> Self {
        KickedMap::Classical {
            stochasticity: params.stochasticity,
            omega: params.omega,
        }
    }

    /// The ε-classical map with `K_ε = ε k`; `ε = 0` gives a free rotation
    /// with `σ = +1`.
    pub fn epsilon(params: &SystemParams) -> Self {
        KickedMap::Epsilon {
            k_eps: params.epsilon * params.kick(),
            omega: params.omega,
            sign: params.epsilon_sign(),
        }
    }

    /// `(kick strength, Ω, σ)`
    fn coefficients(&self) -> (f64, f64, f64) {
        match *self {
            KickedMap::Classical {
                stochasticity,
                omega,
            } => (stochasticity, omega, 1.0),
            KickedMap::Epsilon { k_eps, omega, sign } => (k_eps, omega, sign),
        }
    }

    pub fn kick_strength(&self) -> f64 {
        self.coefficients().0
    }

    pub fn omega(&self) -> f64 {
        self.coefficients().1
    }

    pub fn sign(&self) -> f64 {
        self.coefficients().2
    }

    /// One step without any reduction.
    pub fn step_lifted(&self, theta: f64, action: f64) -> (f64, f64) {
        let (k, omega, sign) = self.coefficients();
        let action = action - k * theta.sin() - sign * TWO_PI * omega;
        (theta + sign * action, action)
    }

    pub fn step(&self, p: PhasePoint) -> PhasePoint {
        let (t, a) = self.step_lifted(p.theta, p.action);
        PhasePoint::new(t, a)
    }

    /// Jacobian `∂(θ', 𝒥')/∂(θ, 𝒥)` of one step taken from angle `theta`.
    pub fn jacobian(&self, theta: f64) -> [[f64; 2]; 2] {
        let (k, _, sign) = self.coefficients();
        let kc = k * theta.cos();
        [[1.0 - sign * kc, sign], [-kc, 1.0]]
    }
}

/// One step of the classical map.
pub fn std_map_step(p: PhasePoint, stochasticity: f64, omega: f64) -> PhasePoint {
    KickedMap::Classical {
        stochasticity,
        omega,
    }
    .step(p)
}

/// One step of the ε-classical map; `sign` is `sgn ε`.
pub fn eps_map_step(p: PhasePoint, k_eps: f64, omega: f64, sign: f64) -> PhasePoint {
    KickedMap::Epsilon { k_eps, omega, sign }.step(p)
}

/// A trajectory with both the torus points and the unwrapped coordinates.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub wrapped: Vec<PhasePoint>,
    pub theta: Vec<f64>,
    pub action: Vec<f64>,
}

/// `n` lifted steps from `start` (so `n + 1` points, start included).
pub fn lifted_iterate(start: PhasePoint, n: usize, map: &KickedMap) -> Trajectory {
    let mut theta = Vec::with_capacity(n + 1);
    let mut action = Vec::with_capacity(n + 1);
    let (mut t, mut a) = (start.theta, start.action);
    theta.push(t);
    action.push(a);
    for _ in 0..n {
        (t, a) = map.step_lifted(t, a);
        theta.push(t);
        action.push(a);
    }
    let wrapped = theta
        .iter()
        .zip(&action)
        .map(|(&t, &a)| PhasePoint::new(t, a))
        .collect();
    Trajectory {
        wrapped,
        theta,
        action,
    }
}

/// The first `n` points (start included) of each initial condition.
pub fn poincare_section(inits: &[PhasePoint], n: usize, map: &KickedMap) -> Vec<Vec<PhasePoint>> {
    inits
        .par_iter()
        .map(|&start| {
            let mut pts = Vec::with_capacity(n);
            let mut p = start;
            for _ in 0..n {
                pts.push(p);
                p = map.step(p);
            }
            pts
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum OrbitError {
    #[error("kick strength is zero: the map is a rigid rotation with a continuum of orbits")]
    Degenerate,
    #[error("no convergence from any seed for order {order}, jump {jump}")]
    NotFound { order: usize, jump: i64 },
    #[error("orbit order must be at least 1")]
    InvalidOrder,
}

/// A periodic orbit that advances `𝒥` by `-2πj` every `o` steps.
#[derive(Clone, Debug, Serialize)]
pub struct Orbit {
    pub points: Vec<PhasePoint>,
    pub order: usize,
    pub jump: i64,
    pub residual: f64,
    pub monodromy_trace: f64,
    pub stable: bool,
}

impl Orbit {
    /// `K Σ sin θ_i - 2π(j - σΩo)`, which vanishes for a true accelerator mode.
    pub fn drift_identity_defect(&self, map: &KickedMap) -> f64 {
        let s: f64 = self.points.iter().map(|p| p.theta.sin()).sum();
        map.kick_strength() * s
            - TWO_PI * (self.jump as f64 - map.sign() * map.omega() * self.order as f64)
    }

    pub fn contains(&self, p: &PhasePoint, tol: f64) -> bool {
        self.points.iter().any(|q| q.distance(p) < tol)
    }
}

/// Newton search settings.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OrbitSearch {
    pub seeds_per_axis: usize,
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub residual_tolerance: f64,
    pub merge_tolerance: f64,
}

impl Default for OrbitSearch {
    fn default() -> Self {
        OrbitSearch {
            seeds_per_axis: 32,
            max_iterations: 50,
            step_tolerance: 1e-13,
            residual_tolerance: 1e-12,
            merge_tolerance: 1e-8,
        }
    }
}

fn mat_mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

/// Tangent-map product along `o` steps from `(theta, action)`, returning
/// the end point (θ wrapped, 𝒥 unwrapped) and the monodromy matrix.
fn iterate_with_tangent(
    map: &KickedMap,
    theta: f64,
    action: f64,
    order: usize,
) -> ((f64, f64), [[f64; 2]; 2]) {
    let mut m = [[1.0, 0.0], [0.0, 1.0]];
    let (mut t, mut a) = (theta, action);
    for _ in 0..order {
        m = mat_mul(map.jacobian(t), m);
        (t, a) = map.step_lifted(t, a);
        t = wrap_angle(t);
    }
    ((t, a), m)
}

fn orbit_residual(map: &KickedMap, theta: f64, action: f64, order: usize, jump: i64) -> ([f64; 2], [[f64; 2]; 2]) {
    let ((t, a), m) = iterate_with_tangent(map, theta, action, order);
    (
        [wrap_centered(t - theta), a - action + TWO_PI * jump as f64],
        m,
    )
}

/// Monodromy matrix of an orbit: product of one-step Jacobians.
pub fn monodromy(points: &[PhasePoint], map: &KickedMap) -> [[f64; 2]; 2] {
    points
        .iter()
        .fold([[1.0, 0.0], [0.0, 1.0]], |m, p| mat_mul(map.jacobian(p.theta), m))
}

/// Trace of the monodromy matrix; the orbit is stable iff `|trace| < 2`.
pub fn orbit_stability(points: &[PhasePoint], map: &KickedMap) -> f64 {
    let m = monodromy(points, map);
    m[0][0] + m[1][1]
}

fn newton(map: &KickedMap, seed: (f64, f64), order: usize, jump: i64, opts: &OrbitSearch) -> Option<(f64, f64)> {
    let (mut t, mut a) = seed;
    for _ in 0..opts.max_iterations {
        let (f, m) = orbit_residual(map, t, a, order, jump);
        let d = [[m[0][0] - 1.0, m[0][1]], [m[1][0], m[1][1] - 1.0]];
        let det = d[0][0] * d[1][1] - d[0][1] * d[1][0];
        if det.abs() < 1e-14 {
            return None;
        }
        let dt = -(d[1][1] * f[0] - d[0][1] * f[1]) / det;
        let da = -(-d[1][0] * f[0] + d[0][0] * f[1]) / det;
        t = wrap_angle(t + dt);
        a += da;
        if !(t.is_finite() && a.is_finite()) {
            return None;
        }
        if dt.hypot(da) < opts.step_tolerance {
            break;
        }
    }
    let (f, _) = orbit_residual(map, t, a, order, jump);
    (f[0].hypot(f[1]) < opts.residual_tolerance).then_some((t, a))
}

fn build_orbit(map: &KickedMap, start: (f64, f64), order: usize, jump: i64) -> Orbit {
    let mut points = Vec::with_capacity(order);
    let (mut t, mut a) = start;
    for _ in 0..order {
        points.push(PhasePoint::new(t, a));
        (t, a) = map.step_lifted(t, a);
    }
    let (f, _) = orbit_residual(map, start.0, start.1, order, jump);
    let trace = orbit_stability(&points, map);
    Orbit {
        points,
        order,
        jump,
        residual: f[0].hypot(f[1]),
        monodromy_trace: trace,
        stable: trace.abs() < 2.0,
    }
}

/// True when the orbit already closes after a proper divisor of its order.
fn has_shorter_period(orbit: &Orbit, tol: f64) -> bool {
    (1..orbit.order)
        .filter(|d| orbit.order % d == 0)
        .any(|d| orbit.points[d].distance(&orbit.points[0]) < tol)
}

/// All distinct accelerator-mode orbits of order `o` and jump `j` reachable
/// by Newton iteration from a uniform seed grid. Stable orbits come first.
pub fn find_accel_orbits(order: usize, jump: i64, map: &KickedMap, opts: &OrbitSearch) -> Result<Vec<Orbit>, OrbitError> {
    if order == 0 {
        return Err(OrbitError::InvalidOrder);
    }
    if map.kick_strength() == 0.0 {
        return Err(OrbitError::Degenerate);
    }
    let n = opts.seeds_per_axis;
    let seeds: Vec<(f64, f64)> = (0..n * n)
        .map(|i| {
            let h = TWO_PI / n as f64;
            (h * ((i % n) as f64 + 0.5), h * ((i / n) as f64 + 0.5))
        })
        .collect();
    let converged: Vec<(f64, f64)> = seeds
        .par_iter()
        .filter_map(|&s| newton(map, s, order, jump, opts))
        .collect();

    let mut orbits: Vec<Orbit> = Vec::new();
    for start in converged {
        let candidate = build_orbit(map, start, order, jump);
        if has_shorter_period(&candidate, opts.merge_tolerance) {
            continue;
        }
        if orbits
            .iter()
            .any(|o| o.contains(&candidate.points[0], opts.merge_tolerance))
        {
            continue;
        }
        orbits.push(candidate);
    }
    if orbits.is_empty() {
        return Err(OrbitError::NotFound { order, jump });
    }
    // Canonical start: the point with the smallest angle.
    for o in orbits.iter_mut() {
        let first = (0..o.order)
            .min_by(|&a, &b| o.points[a].theta.total_cmp(&o.points[b].theta))
            .unwrap_or(0);
        o.points.rotate_left(first);
    }
    orbits.sort_by(|a, b| {
        b.stable
            .cmp(&a.stable)
            .then(a.monodromy_trace.abs().total_cmp(&b.monodromy_trace.abs()))
            .then(a.points[0].theta.total_cmp(&b.points[0].theta))
    });
    Ok(orbits)
}

/// The most stable accelerator-mode orbit of order `o` and jump `j`.
pub fn find_accel_orbit(order: usize, jump: i64, map: &KickedMap, opts: &OrbitSearch) -> Result<Orbit, OrbitError> {
    find_accel_orbits(order, jump, map, opts).map(|mut v| v.swap_remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    const K1: f64 = PI / 8.0;

    fn fig1_map() -> KickedMap {
        KickedMap::Classical {
            stochasticity: K1,
            omega: 0.5,
        }
    }

    struct Lcg(u64);
    impl Lcg {
        fn unit(&mut self) -> f64 {
            self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (self.0 >> 11) as f64 / (1u64 << 53) as f64
        }
        fn point(&mut self) -> PhasePoint {
            PhasePoint::new(TWO_PI * self.unit(), TWO_PI * self.unit())
        }
    }

    #[test]
    fn map_step_examples() {
        let p = std_map_step(PhasePoint::new(PI, PI / 2.0), K1, 0.5);
        assert!((p.theta - PI / 2.0).abs() < 1e-12);
        assert!((p.action - 1.5 * PI).abs() < 1e-12);
        let z = std_map_step(PhasePoint::new(0.0, 0.0), 3.0, 0.0);
        assert_eq!(z, PhasePoint::new(0.0, 0.0));
        let e = eps_map_step(PhasePoint::new(0.0, 0.0), 0.3, 0.5, -1.0);
        assert!((e.theta - PI).abs() < 1e-12 && (e.action - PI).abs() < 1e-12);
    }

    #[test]
    fn epsilon_map_with_positive_sign_is_classical() {
        let mut rng = Lcg(7);
        for _ in 0..1000 {
            let p = rng.point();
            assert_eq!(eps_map_step(p, 0.8, 0.3, 1.0), std_map_step(p, 0.8, 0.3));
        }
    }

    #[test]
    fn free_rotation_conserves_action_up_to_drift() {
        let map = KickedMap::Epsilon {
            k_eps: 0.0,
            omega: 0.3,
            sign: -1.0,
        };
        let tr = lifted_iterate(PhasePoint::new(1.0, 2.0), 10, &map);
        for (i, a) in tr.action.iter().enumerate() {
            assert!((a - (2.0 + i as f64 * TWO_PI * 0.3)).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_is_area_preserving_by_finite_differences() {
        let mut rng = Lcg(99);
        let maps = [
            fig1_map(),
            KickedMap::Classical { stochasticity: 5.97, omega: 0.5 },
            KickedMap::Epsilon { k_eps: -0.314, omega: 0.5, sign: -1.0 },
            KickedMap::Epsilon { k_eps: 0.7, omega: 1.0, sign: 1.0 },
        ];
        let h = 1e-6;
        for map in maps {
            for _ in 0..100 {
                let p = rng.point();
                let f = |t: f64, a: f64| map.step_lifted(t, a);
                let (tp, ap) = f(p.theta + h, p.action);
                let (tm, am) = f(p.theta - h, p.action);
                let (tq, aq) = f(p.theta, p.action + h);
                let (tr, ar) = f(p.theta, p.action - h);
                let j = [
                    [(tp - tm) / (2.0 * h), (tq - tr) / (2.0 * h)],
                    [(ap - am) / (2.0 * h), (aq - ar) / (2.0 * h)],
                ];
                let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                assert!((det - 1.0).abs() < 1e-8, "{det}");
                let an = map.jacobian(p.theta);
                for r in 0..2 {
                    for c in 0..2 {
                        assert!((an[r][c] - j[r][c]).abs() < 1e-7);
                    }
                }
            }
        }
    }

    #[test]
    fn drift_only_jump() {
        let map = KickedMap::Classical { stochasticity: 0.0, omega: 0.5 };
        let tr = lifted_iterate(PhasePoint::new(0.4, 1.0), 2, &map);
        assert!((tr.action[2] - tr.action[0] + TWO_PI).abs() < 1e-12);
        let sec = poincare_section(&[PhasePoint::new(0.4, 1.0)], 50, &map);
        let mut actions: Vec<f64> = sec[0].iter().map(|p| p.action).collect();
        actions.sort_by(f64::total_cmp);
        actions.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        assert_eq!(actions.len(), 2);
    }

    #[test]
    fn wrapped_matches_unwrapped() {
        let mut rng = Lcg(3);
        for _ in 0..20 {
            let tr = lifted_iterate(rng.point(), 200, &fig1_map());
            for ((w, t), a) in tr.wrapped.iter().zip(&tr.theta).zip(&tr.action) {
                assert!(w.distance(&PhasePoint::new(*t, *a)) < 1e-9);
                assert!((0.0..TWO_PI).contains(&w.theta) && (0.0..TWO_PI).contains(&w.action));
            }
        }
    }

    #[test]
    fn period_two_mode() {
        let map = fig1_map();
        let orbits = find_accel_orbits(2, 1, &map, &OrbitSearch::default()).unwrap();
        let o = &orbits[0];
        assert!(o.stable && o.monodromy_trace.abs() < 2.0);
        assert!(o.residual < 1e-12);
        let s: f64 = o.points.iter().map(|p| p.theta.sin()).sum();
        assert!(s.abs() < 1e-10);
        for orb in &orbits {
            assert!(orb.drift_identity_defect(&map).abs() < 1e-10);
            assert_eq!(orb.points.len(), 2);
        }
    }

    #[test]
    fn period_four_mode() {
        let map = fig1_map();
        let orbits = find_accel_orbits(4, 2, &map, &OrbitSearch::default()).unwrap();
        assert!(orbits.iter().all(|o| o.residual < 1e-12));
        assert!(orbits[0].stable);
        // no period-2 orbit traversed twice sneaks in
        let two = find_accel_orbits(2, 1, &map, &OrbitSearch::default()).unwrap();
        for o in &orbits {
            assert!(!two.iter().any(|t| t.contains(&o.points[0], 1e-6)));
        }
    }

    #[test]
    fn zero_kick_is_degenerate() {
        let map = KickedMap::Classical { stochasticity: 0.0, omega: 0.5 };
        assert_eq!(find_accel_orbit(2, 1, &map, &OrbitSearch::default()).unwrap_err(), OrbitError::Degenerate);
        assert_eq!(find_accel_orbit(0, 1, &fig1_map(), &OrbitSearch::default()).unwrap_err(), OrbitError::InvalidOrder);
    }

    #[test]
    fn parabolic_single_step() {
        let map = KickedMap::Classical { stochasticity: 0.0, omega: 0.1 };
        assert_eq!(orbit_stability(&[PhasePoint::new(0.3, 0.0)], &map), 2.0);
    }

    #[test]
    fn trace_is_cyclic_and_matches_finite_differences() {
        let map = fig1_map();
        for (o, j) in [(2, 1), (4, 2)] {
            for orbit in find_accel_orbits(o, j, &map, &OrbitSearch::default()).unwrap() {
                let base = orbit.monodromy_trace;
                for shift in 1..o {
                    let mut pts = orbit.points.clone();
                    pts.rotate_left(shift);
                    assert!((orbit_stability(&pts, &map) - base).abs() < 1e-10);
                }
                let h = 1e-6;
                let p0 = orbit.points[0];
                let f = |t: f64, a: f64| iterate_with_tangent(&map, t, a, o).0;
                let unwrap = |x: f64, r: f64| r + wrap_centered(x - r);
                let (tp, ap) = f(p0.theta + h, p0.action);
                let (tm, am) = f(p0.theta - h, p0.action);
                let (tq, aq) = f(p0.theta, p0.action + h);
                let (tr, ar) = f(p0.theta, p0.action - h);
                let t00 = (unwrap(tp, tm) - tm) / (2.0 * h);
                let t11 = (aq - ar) / (2.0 * h);
                let _ = (ap, am, tq, tr);
                assert!((t00 + t11 - base).abs() < 1e-6, "{} vs {base}", t00 + t11);
            }
        }
    }
}
