//! The `dka` command line: one subcommand per workflow, a shared flat config
//! file with flag overrides, and a JSON sidecar beside every output file.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::classical::{find_accel_orbits, poincare_section, KickedMap, OrbitSearch, PhasePoint};
use crate::evolve::{evolve_ensemble, track_mode, BandSpec, Frame, Mixture};
use crate::floquet::{build_block, diagonalize, BlochState, LadderState, Spectrum, RESIDUAL_TOL};
use crate::output::{self, Sidecar};
use crate::params::{derive_params, ResonanceInput, SystemParams};
use crate::phasespace::{husimi_map, mass_near, GridSpec, HusimiGrid, TRUNCATION_WARN};
use crate::{Error, Result};

#[derive(Parser, Debug, Serialize)]
#[command(name = "dka", version, about = "Quasi-eigenstates and accelerator modes of the delta-kicked accelerator")]
pub struct Cli {
    /// Worker threads (default: all available).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
pub enum Command {
    /// Build and diagonalize the Floquet block.
    Spectrum(SpectrumArgs),
    /// Husimi heatmaps of quasi-eigenstates.
    Husimi(HusimiArgs),
    /// Poincaré sections of the classical or ε-classical map.
    Poincare(PoincareArgs),
    /// Accelerator-mode orbit catalog.
    Orbits(OrbitArgs),
    /// Kick-by-kick evolution of a β ensemble.
    Evolve(EvolveArgs),
}

/// Resonance parameters from `--config` with per-key flag overrides.
#[derive(Args, Debug, Clone, Serialize)]
pub struct CommonArgs {
    /// Flat `key = value` file with keys M, N, R, S, l, k, theta0.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long = "M")]
    pub m: Option<u64>,
    #[arg(long = "N")]
    pub n: Option<u64>,
    #[arg(long = "R")]
    pub r: Option<u64>,
    #[arg(long = "S")]
    pub s: Option<u64>,
    #[arg(long = "l", allow_hyphen_values = true)]
    pub l: Option<i64>,
    #[arg(long = "k")]
    pub k: Option<f64>,
    #[arg(long)]
    pub theta0: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialInput {
    #[serde(rename = "M")]
    m: Option<u64>,
    #[serde(rename = "N")]
    n: Option<u64>,
    #[serde(rename = "R")]
    r: Option<u64>,
    #[serde(rename = "S")]
    s: Option<u64>,
    l: Option<i64>,
    k: Option<f64>,
    theta0: Option<f64>,
}

impl CommonArgs {
    /// The merged, not yet validated input.
    pub fn input(&self) -> Result<ResonanceInput> {
        let file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                toml::from_str::<PartialInput>(&text)
                    .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?
            }
            None => PartialInput::default(),
        };
        let need = |flag: Option<u64>, file: Option<u64>, key: &str| {
            flag.or(file)
                .ok_or_else(|| Error::Config(format!("missing parameter {key} (use --config or --{key})")))
        };
        let k = self
            .k
            .or(file.k)
            .ok_or_else(|| Error::Config("missing parameter k (use --config or --k)".into()))?;
        Ok(ResonanceInput {
            period_num: need(self.m, file.m, "M")?,
            period_den: need(self.n, file.n, "N")?,
            gravity_num: need(self.r, file.r, "R")?,
            gravity_den: need(self.s, file.s, "S")?,
            beta_index: self.l.or(file.l).unwrap_or(0),
            kick: k,
            theta0: self.theta0.or(file.theta0).unwrap_or(0.0),
        })
    }

    pub fn params(&self) -> Result<SystemParams> {
        derive_params(&self.input()?)
    }

    fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out)?;
        Ok(&self.out)
    }
}

#[derive(Args, Debug, Serialize)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Also write the eigenvector of this state (repeatable).
    #[arg(long = "state-index")]
    pub state_index: Vec<usize>,
}

/// `WxH` grid size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GridSize {
    pub width: usize,
    pub height: usize,
}

impl FromStr for GridSize {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
        let width = w.trim().parse().map_err(|_| format!("bad width {w:?}"))?;
        let height = h.trim().parse().map_err(|_| format!("bad height {h:?}"))?;
        if width == 0 || height == 0 {
            return Err("grid dimensions must be positive".into());
        }
        Ok(GridSize { width, height })
    }
}

/// An `a,b` pair of numbers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Pair<T>(pub T, pub T);

impl<T: FromStr> FromStr for Pair<T> {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (a, b) = s.split_once(',').ok_or("expected two comma-separated values")?;
        let a = a.trim().parse().map_err(|_| format!("bad value {a:?}"))?;
        let b = b.trim().parse().map_err(|_| format!("bad value {b:?}"))?;
        Ok(Pair(a, b))
    }
}

#[derive(Args, Debug, Serialize)]
pub struct HusimiArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Samples over the full cell; default 64 per torus copy on each axis.
    #[arg(long)]
    pub grid: Option<GridSize>,
    /// Eigenstate to render (repeatable).
    #[arg(long = "state-index")]
    pub state_index: Vec<usize>,
    /// Render the state with most Husimi mass near the stable `o,j` orbit.
    #[arg(long = "best-orbit")]
    pub best_orbit: Option<Pair<i64>>,
    /// Radius in map coordinates used by `--best-orbit`.
    #[arg(long, default_value_t = 0.5)]
    pub radius: f64,
    /// Render the plane wave at the resonant quasimomentum instead.
    #[arg(long = "plane-wave")]
    pub plane_wave: bool,
    /// Also dump `z,p,theta,J,value` as CSV.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Classical,
    Epsilon,
}

/// Map selection shared by `poincare` and `orbits`.
#[derive(Args, Debug, Clone, Serialize)]
pub struct MapArgs {
    #[arg(long, value_enum, default_value_t = MapKind::Classical)]
    pub map: MapKind,
    /// Kick strength of the map (`K`, or `K_ε` for the ε-classical map).
    #[arg(long = "K", allow_hyphen_values = true)]
    pub kick_strength: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
}

impl MapArgs {
    /// The map from the resonance parameters, or from `--K` and `--omega`
    /// alone when no parameters are given.
    fn build(&self, common: &CommonArgs) -> Result<(KickedMap, Option<SystemParams>)> {
        let params = match common.input() {
            Ok(input) => Some(derive_params(&input)?),
            Err(Error::Config(_)) if self.kick_strength.is_some() && self.omega.is_some() => None,
            Err(e) => return Err(e),
        };
        let map = match (params.as_ref(), self.map) {
            (Some(p), MapKind::Classical) => KickedMap::classical(p),
            (Some(p), MapKind::Epsilon) => KickedMap::epsilon(p),
            (None, MapKind::Classical) => KickedMap::Classical { stochasticity: 0.0, omega: 0.0 },
            (None, MapKind::Epsilon) => KickedMap::Epsilon { k_eps: 0.0, omega: 0.0, sign: 1.0 },
        };
        let map = match map {
            KickedMap::Classical { stochasticity, omega } => KickedMap::Classical {
                stochasticity: self.kick_strength.unwrap_or(stochasticity),
                omega: self.omega.unwrap_or(omega),
            },
            KickedMap::Epsilon { k_eps, omega, sign } => {
                let k_eps = self.kick_strength.unwrap_or(k_eps);
                let sign = match params {
                    Some(_) => sign,
                    None if k_eps < 0.0 => -1.0,
                    None => 1.0,
                };
                KickedMap::Epsilon { k_eps, omega: self.omega.unwrap_or(omega), sign }
            }
        };
        Ok((map, params))
    }
}

#[derive(Args, Debug, Serialize)]
pub struct PoincareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub map: MapArgs,
    /// Initial point `θ,J` (repeatable); default is a 6×6 grid on the torus.
    #[arg(long, allow_hyphen_values = true)]
    pub init: Vec<Pair<f64>>,
    /// Points recorded per trajectory, start included.
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct OrbitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub map: MapArgs,
    #[arg(long)]
    pub order: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub jump: i64,
    /// Newton seeds per torus axis.
    #[arg(long, default_value_t = 32)]
    pub seeds: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FrameArg {
    Lab,
    Falling,
}

impl From<FrameArg> for Frame {
    fn from(f: FrameArg) -> Frame {
        match f {
            FrameArg::Lab => Frame::Lab,
            FrameArg::Falling => Frame::Falling,
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct EvolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 200)]
    pub kicks: u64,
    #[arg(long = "beta-samples", default_value_t = 201)]
    pub beta_samples: usize,
    /// Standard deviation of the β weights, in ħG.
    #[arg(long = "beta-sigma", default_value_t = 0.05)]
    pub beta_sigma: f64,
    #[arg(long = "beta-center", default_value_t = 0.0, allow_hyphen_values = true)]
    pub beta_center: f64,
    /// Frame of the time-series CSV.
    #[arg(long, value_enum, default_value_t = FrameArg::Falling)]
    pub frame: FrameArg,
    /// Order of the tracked island chain; sets the default band width.
    #[arg(long = "mode-order", default_value_t = 2)]
    pub mode_order: usize,
    /// Tracking band width in ħG (default `π/(o ħ_eff)`).
    #[arg(long = "band-width")]
    pub band_width: Option<f64>,
    /// Minimum in-band mass at kick 0.
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
}

fn sidecar_path(file: &Path) -> PathBuf {
    file.with_extension("json")
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn check_spectrum(spectrum: &Spectrum) -> Result<()> {
    let r = spectrum.max_residual();
    if r >= RESIDUAL_TOL {
        return Err(Error::Tolerance { what: "eigenpair residual", value: r, limit: RESIDUAL_TOL });
    }
    let d = spectrum.max_modulus_defect();
    if d >= RESIDUAL_TOL {
        return Err(Error::Tolerance { what: "eigenvalue modulus defect", value: d, limit: RESIDUAL_TOL });
    }
    Ok(())
}

fn solve(params: &SystemParams) -> Result<Spectrum> {
    let block = build_block(params, params.input.theta0)?;
    let spectrum = diagonalize(&block)?;
    check_spectrum(&spectrum)?;
    Ok(spectrum)
}

#[derive(Serialize)]
struct SpectrumDetails {
    theta0: f64,
    dimension: usize,
    max_residual: f64,
    max_modulus_defect: f64,
    residual_tolerance: f64,
}

pub fn cmd_spectrum(args: &SpectrumArgs) -> Result<Vec<PathBuf>> {
    let params = args.common.params()?;
    let spectrum = solve(&params)?;
    for &i in &args.state_index {
        spectrum.state(i)?;
    }
    let dir = args.common.out_dir()?;
    let details = SpectrumDetails {
        theta0: spectrum.theta0,
        dimension: spectrum.len(),
        max_residual: spectrum.max_residual(),
        max_modulus_defect: spectrum.max_modulus_defect(),
        residual_tolerance: RESIDUAL_TOL,
    };
    let mut written = Vec::new();
    let path = dir.join("spectrum.csv");
    output::write_spectrum_csv(&path, &spectrum)?;
    Sidecar::new("spectrum", &file_name(&path), args, Some(&params), &details).write(&sidecar_path(&path))?;
    written.push(path);
    for &i in &args.state_index {
        let state = spectrum.state(i)?;
        let path = dir.join(format!("eigenvector_{i}.csv"));
        output::write_eigenvector_csv(&path, state, &params)?;
        #[derive(Serialize)]
        struct Vector {
            index: usize,
            quasi_energy: f64,
            residual: f64,
        }
        let v = Vector { index: i, quasi_energy: state.quasi_energy, residual: state.residual };
        Sidecar::new("spectrum", &file_name(&path), args, Some(&params), v).write(&sidecar_path(&path))?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Serialize)]
struct HusimiDetails {
    grid: GridSpec,
    raw_maximum: f64,
    eigenstate_index: Option<usize>,
    quasi_energy: Option<f64>,
    orbit_mass: Option<f64>,
    truncation_bound: f64,
    squeeze: f64,
}

fn write_heatmap(
    args: &HusimiArgs,
    params: &SystemParams,
    grid: &HusimiGrid,
    stem: &str,
    details: HusimiDetails,
) -> Result<Vec<PathBuf>> {
    if grid.truncation_bound > TRUNCATION_WARN {
        eprintln!("warning: {stem}: Gaussian truncation bound {:.2e}", grid.truncation_bound);
    }
    let dir = args.common.out_dir()?;
    let mut written = Vec::new();
    let pgm = dir.join(format!("{stem}.pgm"));
    output::write_pgm(&pgm, grid)?;
    Sidecar::new("husimi", &file_name(&pgm), args, Some(params), &details).write(&sidecar_path(&pgm))?;
    written.push(pgm);
    if args.csv {
        let csv = dir.join(format!("{stem}.csv"));
        output::write_husimi_csv(&csv, grid, params)?;
        let side = csv.with_file_name(format!("{stem}.csv.json"));
        Sidecar::new("husimi", &file_name(&csv), args, Some(params), &details).write(&side)?;
        written.push(csv);
    }
    Ok(written)
}

pub fn cmd_husimi(args: &HusimiArgs) -> Result<Vec<PathBuf>> {
    let params = args.common.params()?;
    let spec = match args.grid {
        Some(g) => GridSpec { nz: g.width, np: g.height, ..GridSpec::cell(&params, 1) },
        None => GridSpec::cell(&params, 64),
    };
    let mut written = Vec::new();
    if args.plane_wave {
        let state = LadderState {
            q_start: 0,
            amplitudes: vec![crate::C64::new(1.0, 0.0)],
            step: params.ladder_step,
            offset: params.beta,
        };
        let grid = husimi_map(&state, &spec, &params);
        let details = HusimiDetails {
            grid: spec,
            raw_maximum: grid.max(),
            eigenstate_index: None,
            quasi_energy: None,
            orbit_mass: None,
            truncation_bound: grid.truncation_bound,
            squeeze: params.squeeze,
        };
        written.extend(write_heatmap(args, &params, &grid, "husimi_plane_wave", details)?);
        if args.state_index.is_empty() && args.best_orbit.is_none() {
            return Ok(written);
        }
    }

    let spectrum = solve(&params)?;
    let theta0 = spectrum.theta0;
    for &i in &args.state_index {
        spectrum.state(i)?;
    }
    let mut selected: Vec<(usize, Option<f64>)> = args.state_index.iter().map(|&i| (i, None)).collect();
    if let Some(Pair(order, jump)) = args.best_orbit {
        if order < 1 {
            return Err(Error::Config("--best-orbit order must be positive".into()));
        }
        let map = KickedMap::classical(&params);
        let orbits = find_accel_orbits(order as usize, jump, &map, &OrbitSearch::default())?;
        let centers: Vec<(f64, f64)> = orbits[0].points.iter().map(PhasePoint::as_pair).collect();
        let best = spectrum
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let grid = husimi_map(&BlochState::new(s, &params, theta0), &spec, &params);
                (i, mass_near(&grid, &params, &centers, args.radius))
            })
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((i, m)) = best {
            selected.push((i, Some(m)));
        }
    }
    if selected.is_empty() && !args.plane_wave {
        selected.push((0, None));
    }
    for (i, mass) in selected {
        let state = spectrum.state(i)?;
        let grid = husimi_map(&BlochState::new(state, &params, theta0), &spec, &params);
        let details = HusimiDetails {
            grid: spec,
            raw_maximum: grid.max(),
            eigenstate_index: Some(i),
            quasi_energy: Some(state.quasi_energy),
            orbit_mass: mass,
            truncation_bound: grid.truncation_bound,
            squeeze: params.squeeze,
        };
        written.extend(write_heatmap(args, &params, &grid, &format!("husimi_{i}"), details)?);
    }
    Ok(written)
}

fn default_inits() -> Vec<PhasePoint> {
    let n = 6;
    let h = std::f64::consts::TAU / n as f64;
    (0..n * n)
        .map(|i| PhasePoint::new(h * ((i % n) as f64 + 0.5), h * ((i / n) as f64 + 0.5)))
        .collect()
}

pub fn cmd_poincare(args: &PoincareArgs) -> Result<Vec<PathBuf>> {
    let (map, params) = args.map.build(&args.common)?;
    let inits: Vec<PhasePoint> = if args.init.is_empty() {
        default_inits()
    } else {
        args.init.iter().map(|Pair(t, j)| PhasePoint::new(*t, *j)).collect()
    };
    let sections = poincare_section(&inits, args.steps, &map);
    let dir = args.common.out_dir()?;
    let path = dir.join("poincare.csv");
    output::write_poincare_csv(&path, &sections)?;
    #[derive(Serialize)]
    struct Details<'a> {
        map: KickedMap,
        inits: &'a [PhasePoint],
    }
    Sidecar::new("poincare", &file_name(&path), args, params.as_ref(), Details { map, inits: &inits })
        .write(&sidecar_path(&path))?;
    Ok(vec![path])
}

pub fn cmd_orbits(args: &OrbitArgs) -> Result<Vec<PathBuf>> {
    let (map, params) = args.map.build(&args.common)?;
    let search = OrbitSearch { seeds_per_axis: args.seeds, ..OrbitSearch::default() };
    let orbits = find_accel_orbits(args.order, args.jump, &map, &search)?;
    let dir = args.common.out_dir()?;
    let path = dir.join("orbits.csv");
    output::write_orbit_csv(&path, &orbits)?;
    #[derive(Serialize)]
    struct Details {
        map: KickedMap,
        search: OrbitSearch,
        found: usize,
        max_residual: f64,
    }
    let max_residual = orbits.iter().map(|o| o.residual).fold(0.0, f64::max);
    let d = Details { map, search, found: orbits.len(), max_residual };
    Sidecar::new("orbits", &file_name(&path), args, params.as_ref(), d).write(&sidecar_path(&path))?;
    Ok(vec![path])
}

pub fn cmd_evolve(args: &EvolveArgs) -> Result<Vec<PathBuf>> {
    let params = args.common.params()?;
    let mixture = Mixture {
        samples: args.beta_samples.max(1),
        center: args.beta_center,
        sigma: args.beta_sigma,
        ..Mixture::default()
    };
    let series = evolve_ensemble(&mixture, args.kicks, &params)?;
    let mut band = BandSpec::island(&params, args.mode_order);
    if let Some(w) = args.band_width {
        band.width = w;
    }
    band.threshold = args.threshold;
    let dir = args.common.out_dir()?;

    let series_path = dir.join("series.csv");
    output::write_series_csv(&series_path, &series.in_frame(args.frame.into()))?;
    #[derive(Serialize)]
    struct SeriesDetails {
        frame: FrameArg,
        mixture: Mixture,
        gravity_drop: f64,
        seeds: Option<u64>,
    }
    let sd = SeriesDetails { frame: args.frame, mixture, gravity_drop: series.gravity_drop, seeds: None };
    Sidecar::new("evolve", &file_name(&series_path), args, Some(&params), sd).write(&sidecar_path(&series_path))?;

    let track = track_mode(&series.rows, &band)?;
    let summary_path = dir.join("summary.csv");
    output::write_summary_csv(&summary_path, &track)?;
    #[derive(Serialize)]
    struct SummaryDetails {
        frame: Frame,
        band: BandSpec,
        slope_falling: f64,
        slope_lab: f64,
    }
    let sm = SummaryDetails {
        frame: Frame::Falling,
        band,
        slope_falling: track.slope,
        slope_lab: track.slope - series.gravity_drop,
    };
    Sidecar::new("evolve", &file_name(&summary_path), args, Some(&params), sm).write(&sidecar_path(&summary_path))?;
    Ok(vec![series_path, summary_path])
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    if let Some(n) = cli.threads {
        // Only the first call in a process can size the global pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match &cli.command {
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Husimi(a) => cmd_husimi(a),
        Command::Poincare(a) => cmd_poincare(a),
        Command::Orbits(a) => cmd_orbits(a),
        Command::Evolve(a) => cmd_evolve(a),
    }
}

/// Parses `args`, runs, reports, and returns the process exit code:
/// 0 success, 1 bad input, 2 tolerance or convergence failure.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
