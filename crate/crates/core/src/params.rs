//! Resonance integers, the natural unit system, and every derived quantity.
//!
//! The kicking period is a rational multiple of the half-Talbot time,
//! `T = (M/N) T_half`, and the gravity parameter `Ω = g T² / 2π` is the
//! rational `R/S`. With `N` even these conditions make the reachable momenta
//! a discrete ladder of spacing `ħG/(MS)`, which is what lets the one-period
//! operator be written as a finite matrix.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Raw user input: the five resonance integers, kick strength and Bloch angle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceInput {
    /// `M` in `T = (M/N) T_half`.
    #[serde(rename = "M")]
    pub period_num: u64,
    /// `N` in `T = (M/N) T_half`; must be even.
    #[serde(rename = "N")]
    pub period_den: u64,
    /// `R` in `Ω = R/S`.
    #[serde(rename = "R")]
    pub gravity_num: u64,
    /// `S` in `Ω = R/S`.
    #[serde(rename = "S")]
    pub gravity_den: u64,
    /// Integer selecting the resonant quasimomentum.
    #[serde(rename = "l", default)]
    pub beta_index: i64,
    /// Dimensionless kick strength `φ_d / ħ`.
    #[serde(rename = "k")]
    pub kick: f64,
    /// Bloch angle in `[0, 2π)`.
    #[serde(default)]
    pub theta0: f64,
}

impl ResonanceInput {
    pub fn new(m: u64, n: u64, r: u64, s: u64, l: i64, k: f64) -> Self {
        ResonanceInput {
            period_num: m,
            period_den: n,
            gravity_num: r,
            gravity_den: s,
            beta_index: l,
            kick: k,
            theta0: 0.0,
        }
    }

    pub fn with_theta0(mut self, theta0: f64) -> Self {
        self.theta0 = theta0;
        self
    }

    /// Parses the flat `key = value` config format (keys `M N R S l k theta0`).
    pub fn from_config_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn from_config_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_config_str(&text)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

/// Outcome of [`validate`]: empty means the input is usable.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.message.contains(needle))
    }

    fn push(&mut self, field: &'static str, message: impl Into<String>) {
        self.violations.push(Violation {
            field,
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{}", v.message)?;
        }
        Ok(())
    }
}

pub(crate) fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Checks every precondition of the resonance construction and reports all
/// violations at once.
pub fn validate(raw: &ResonanceInput) -> ValidationReport {
    let mut report = ValidationReport::default();
    let (m, n, r, s) = (
        raw.period_num,
        raw.period_den,
        raw.gravity_num,
        raw.gravity_den,
    );
    for (field, value) in [("M", m), ("N", n), ("R", r), ("S", s)] {
        if value == 0 {
            report.push(field, format!("{field} must be a positive integer"));
        }
    }
    if n % 2 != 0 {
        report.push("N", "N must be even");
    }
    if m > 0 && n > 0 && gcd(m, n) != 1 {
        report.push("M", "M/N not in lowest terms");
    }
    if r > 0 && s > 0 && gcd(r, s) != 1 {
        report.push("R", "R/S not in lowest terms");
    }
    if !raw.kick.is_finite() || raw.kick < 0.0 {
        report.push("k", "k must be a finite real >= 0");
    }
    if !(raw.theta0.is_finite() && (0.0..2.0 * PI).contains(&raw.theta0)) {
        report.push("theta0", "theta0 must lie in [0, 2pi)");
    }
    // Block dimension N S^2 M must be addressable.
    let dim = n
        .checked_mul(s)
        .and_then(|x| x.checked_mul(s))
        .and_then(|x| x.checked_mul(m));
    if dim.is_none_or(|d| d > u32::MAX as u64) {
        report.push("N", "block dimension N*S^2*M overflows");
    }
    report
}

/// Every physical quantity of the resonant kicked accelerator, in units
/// `ħ = m = G = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SystemParams {
    pub input: ResonanceInput,
    /// Kicking period `T = 2π M/N`.
    pub period: f64,
    /// Half-Talbot time, `2π` in natural units.
    pub t_half: f64,
    /// `Ω = R/S`.
    pub omega: f64,
    /// Classical stochasticity parameter `K = 2π k T/T_half`.
    pub stochasticity: f64,
    /// Signed detuning `ε = 2π (T/T_half − 1)`.
    pub epsilon: f64,
    /// Gravitational acceleration reproducing `Ω`.
    pub gravity: f64,
    /// Resonant quasimomentum, reduced into `[0, 1)`.
    pub beta: f64,
    /// Momentum lost to gravity per period, `mgT`.
    pub gravity_drop: f64,
    /// Momentum-ladder spacing `1/(MS)`.
    pub ladder_step: f64,
    /// Floquet block dimension `P = N S² M`.
    pub block_dim: usize,
    /// Coherent-state squeezing `λ = N / T_half`.
    pub squeeze: f64,
}

impl SystemParams {
    pub fn m(&self) -> u64 {
        self.input.period_num
    }
    pub fn n(&self) -> u64 {
        self.input.period_den
    }
    pub fn r(&self) -> u64 {
        self.input.gravity_num
    }
    pub fn s(&self) -> u64 {
        self.input.gravity_den
    }
    pub fn kick(&self) -> f64 {
        self.input.kick
    }

    /// Ladder slots dropped by gravity each period (`mgT / ladder_step = RN`).
    pub fn drop_slots(&self) -> i64 {
        (self.r() * self.n()) as i64
    }

    /// `MS`: ladder slots per unit of ħG, and torus copies along each axis
    /// of the quantum phase-space cell.
    pub fn ms(&self) -> i64 {
        (self.m() * self.s()) as i64
    }

    /// Height of the quantum phase-space cell in momentum, `N S`.
    pub fn cell_height(&self) -> f64 {
        (self.n() * self.s()) as f64
    }

    /// Width of the quantum phase-space cell in position, `2π M S`.
    pub fn cell_width(&self) -> f64 {
        2.0 * PI * (self.m() * self.s()) as f64
    }

    /// Physical momentum of ladder slot `q`.
    pub fn ladder_momentum(&self, q: i64) -> f64 {
        q as f64 * self.ladder_step + self.beta
    }

    /// Sign of ε with `sgn(0) = +1`.
    pub fn epsilon_sign(&self) -> f64 {
        if self.epsilon < 0.0 {
            -1.0
        } else {
            1.0
        }
    }
}

/// Derives [`SystemParams`] from validated input.
pub fn derive_params(raw: &ResonanceInput) -> Result<SystemParams> {
    let report = validate(raw);
    if !report.is_ok() {
        return Err(Error::Validation(report));
    }
    let (m, n, r, s) = (
        raw.period_num,
        raw.period_den,
        raw.gravity_num,
        raw.gravity_den,
    );
    let t_half = 2.0 * PI;
    let period = t_half * m as f64 / n as f64;
    let omega = r as f64 / s as f64;
    let gravity = 2.0 * PI * omega / (period * period);
    // β = l N/M + 1 modulo 1, done in integers so it is exact.
    let beta = (raw.beta_index * n as i64).rem_euclid(m as i64) as f64 / m as f64;
    Ok(SystemParams {
        input: *raw,
        period,
        t_half,
        omega,
        stochasticity: 2.0 * PI * raw.kick * period / t_half,
        epsilon: 2.0 * PI * (m as f64 / n as f64 - 1.0),
        gravity,
        beta,
        gravity_drop: gravity * period,
        ladder_step: 1.0 / (m * s) as f64,
        block_dim: (n * s * s * m) as usize,
        squeeze: n as f64 / t_half,
    })
}
