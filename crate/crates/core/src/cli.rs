//! Run configuration, experiment orchestration and CSV/JSON output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{comparison_inequality_check, decay_certificate, estimate_chi, ChiBudget};
use crate::entropy::{kappa, EntropyFamily};
use crate::error::{Error, Result};
use crate::flow::{convergence_rate_fit, integrate_annealed, integrate_homogeneous, Controls, Regime, Schedule, SnapshotGrid, Trajectory};
use crate::generators::{first_generator, linearized_generator, representation_residual, second_generator};
use crate::metropolis::metropolis_draw;
use crate::model::{build_landscape, minimizer_set, random_landscape, random_probability, ring20, spectral_gap, Density, EnergyLandscape};
use crate::particles::{compare_marginals, simulate_swarm, HybridWeight, SwarmConfig, SwarmKind, SwarmRun};
use crate::stationary::{solve_eta, MINIMIZER_TOL};

/// Environment variable naming the default output directory.
pub const OUT_DIR_VAR: &str = "SWARMFLOW_OUT_DIR";

#[derive(Debug, Clone, PartialEq)]
pub enum LandscapeSpec {
    Ring20,
    Matrix { generator: Vec<Vec<f64>>, ell: Vec<f64>, objective: Vec<f64> },
    Edges { edges: Vec<(usize, usize, f64)>, ell: Vec<f64>, objective: Vec<f64> },
}

impl LandscapeSpec {
    pub fn build(&self) -> Result<EnergyLandscape> {
        match self {
            LandscapeSpec::Ring20 => Ok(ring20()),
            LandscapeSpec::Matrix { generator, ell, objective } => {
                let n = generator.len();
                if generator.iter().any(|row| row.len() != n) {
                    return Err(Error::Validation { field: "landscape.generator".into(), message: "matrix must be square".into() });
                }
                let m = DMatrix::from_fn(n, n, |x, y| generator[x][y]);
                EnergyLandscape::from_matrix(m, ell.clone(), objective.clone())
            }
            LandscapeSpec::Edges { edges, ell, objective } => build_landscape(edges, ell.clone(), objective.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Stationary,
    FlowHomogeneous,
    FlowAnnealed,
    Simulate,
    Verify,
    RingDemo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleSpec {
    Power { t0: f64, alpha: f64 },
    Fixed(f64),
}

impl ScheduleSpec {
    pub fn schedule(&self) -> Schedule {
        match *self {
            ScheduleSpec::Power { t0, alpha } => Schedule::power(t0, alpha),
            ScheduleSpec::Fixed(b) => Schedule::Constant(b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KindSpec {
    First,
    Second,
    Hybrid(f64),
}

impl KindSpec {
    fn swarm(&self) -> SwarmKind {
        match *self {
            KindSpec::First => SwarmKind::First,
            KindSpec::Second => SwarmKind::Second,
            KindSpec::Hybrid(a) => SwarmKind::Hybrid(HybridWeight::Constant(a)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Chi,
    Comparison,
    Decay,
    Representation,
    Metropolis,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Chi, Suite::Comparison, Suite::Decay, Suite::Representation, Suite::Metropolis];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Chi => "chi",
            Suite::Comparison => "comparison",
            Suite::Decay => "decay",
            Suite::Representation => "representation",
            Suite::Metropolis => "metropolis",
        }
    }

    fn parse(s: &str) -> Result<Suite> {
        Suite::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Validation { field: "verify.suites".into(), message: format!("unknown suite `{s}`") })
    }
}

/// Validated run configuration with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub landscape: LandscapeSpec,
    pub m: f64,
    pub mode: Mode,
    pub schedule: ScheduleSpec,
    pub particles: usize,
    pub kind: KindSpec,
    pub seed: Option<u64>,
    pub horizon: f64,
    pub grid: SnapshotGrid,
    pub out_dir: PathBuf,
    pub densities: bool,
    pub rtol: f64,
    pub atol: f64,
    pub suites: Vec<Suite>,
    pub trials: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawLandscape {
    pub builtin: Option<String>,
    pub generator: Option<Vec<Vec<f64>>>,
    pub edges: Option<Vec<(usize, usize, f64)>>,
    pub ell: Option<Vec<f64>>,
    pub objective: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawEntropy {
    pub m: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawSchedule {
    pub t0: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawParticles {
    pub count: Option<usize>,
    pub kind: Option<String>,
    pub hybrid: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawSnapshots {
    pub first: Option<f64>,
    pub per_decade: Option<usize>,
    pub times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    pub dir: Option<PathBuf>,
    pub densities: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawTolerances {
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawVerify {
    pub suites: Option<Vec<String>>,
    pub trials: Option<usize>,
}

/// Configuration file contents before validation; every field is optional.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub mode: Option<String>,
    pub seed: Option<u64>,
    pub horizon: Option<f64>,
    #[serde(default)]
    pub landscape: RawLandscape,
    #[serde(default)]
    pub entropy: RawEntropy,
    #[serde(default)]
    pub schedule: RawSchedule,
    #[serde(default)]
    pub particles: RawParticles,
    #[serde(default)]
    pub snapshots: RawSnapshots,
    #[serde(default)]
    pub output: RawOutput,
    #[serde(default)]
    pub tolerances: RawTolerances,
    #[serde(default)]
    pub verify: RawVerify,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )*
    };
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1).unwrap_or(0);
            Error::Parse { line, message: e.message().to_string() }
        })
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: &RawConfig) -> RawConfig {
        overlay!(self, top, mode, seed, horizon);
        if top.landscape.builtin.is_some() || top.landscape.generator.is_some() || top.landscape.edges.is_some() {
            self.landscape.builtin = None;
            self.landscape.generator = None;
            self.landscape.edges = None;
        }
        overlay!(self.landscape, top.landscape, builtin, generator, edges, ell, objective);
        overlay!(self.entropy, top.entropy, m);
        if top.schedule.beta.is_some() {
            self.schedule = RawSchedule::default();
        } else if top.schedule.t0.is_some() || top.schedule.alpha.is_some() {
            self.schedule.beta = None;
        }
        overlay!(self.schedule, top.schedule, t0, alpha, beta);
        overlay!(self.particles, top.particles, count, kind, hybrid);
        overlay!(self.snapshots, top.snapshots, first, per_decade, times);
        overlay!(self.output, top.output, dir, densities);
        overlay!(self.tolerances, top.tolerances, rtol, atol);
        overlay!(self.verify, top.verify, suites, trials);
        self
    }

    pub fn validate(&self) -> Result<RunConfig> {
        let invalid = |field: &str, message: String| Error::Validation { field: field.into(), message };
        let mode = match self.mode.as_deref() {
            None | Some("stationary") => Mode::Stationary,
            Some("flow-homogeneous") => Mode::FlowHomogeneous,
            Some("flow-annealed") => Mode::FlowAnnealed,
            Some("flow") => {
                if self.schedule.beta.is_some() {
                    Mode::FlowHomogeneous
                } else {
                    Mode::FlowAnnealed
                }
            }
            Some("simulate") => Mode::Simulate,
            Some("verify") => Mode::Verify,
            Some("ring-demo") => Mode::RingDemo,
            Some(other) => return Err(invalid("mode", format!("unknown mode `{other}`"))),
        };

        let l = &self.landscape;
        let landscape = match (&l.builtin, &l.generator, &l.edges) {
            (Some(b), None, None) if b == "ring20" => LandscapeSpec::Ring20,
            (Some(b), None, None) => return Err(invalid("landscape.builtin", format!("unknown builtin `{b}`"))),
            (None, Some(g), None) => LandscapeSpec::Matrix {
                generator: g.clone(),
                ell: l.ell.clone().ok_or_else(|| invalid("landscape.ell", "required with a matrix".into()))?,
                objective: l.objective.clone().ok_or_else(|| invalid("landscape.objective", "required with a matrix".into()))?,
            },
            (None, None, Some(e)) => LandscapeSpec::Edges {
                edges: e.clone(),
                ell: l.ell.clone().ok_or_else(|| invalid("landscape.ell", "required with an edge list".into()))?,
                objective: l.objective.clone().ok_or_else(|| invalid("landscape.objective", "required with an edge list".into()))?,
            },
            (None, None, None) => return Err(invalid("landscape", "missing: give builtin, generator or edges".into())),
            _ => return Err(invalid("landscape", "give exactly one of builtin, generator, edges".into())),
        };
        if mode == Mode::RingDemo && landscape != LandscapeSpec::Ring20 {
            return Err(invalid("landscape", "ring-demo runs on the builtin ring20".into()));
        }

        let m = self.entropy.m.unwrap_or(-1.0);
        if !(m < 0.0) || !m.is_finite() {
            return Err(invalid("entropy.m", format!("must be negative, got {m}")));
        }
        let mut warnings = Vec::new();
        let schedule = match self.schedule.beta {
            Some(b) => {
                if !(b >= 0.0) || !b.is_finite() {
                    return Err(invalid("schedule.beta", format!("must be finite and >= 0, got {b}")));
                }
                ScheduleSpec::Fixed(b)
            }
            None => {
                let t0 = self.schedule.t0.unwrap_or(1.0);
                let alpha = self.schedule.alpha.unwrap_or(0.25);
                if !(t0 >= 1.0) || !t0.is_finite() {
                    return Err(invalid("schedule.t0", format!("must be >= 1, got {t0}")));
                }
                if !(alpha > 0.0) || !alpha.is_finite() {
                    return Err(invalid("schedule.alpha", format!("must be > 0, got {alpha}")));
                }
                let k = kappa(m)?;
                if alpha > k {
                    warnings.push(format!("alpha = {alpha} is outside guaranteed regime (kappa(m) = {k})"));
                }
                ScheduleSpec::Power { t0, alpha }
            }
        };
        match (mode, schedule) {
            (Mode::Stationary, ScheduleSpec::Power { .. }) => return Err(invalid("schedule.beta", "stationary needs a fixed beta".into())),
            (Mode::FlowHomogeneous, ScheduleSpec::Power { .. }) => return Err(invalid("schedule.beta", "homogeneous flow needs a fixed beta".into())),
            (Mode::FlowAnnealed | Mode::RingDemo, ScheduleSpec::Fixed(_)) => {
                return Err(invalid("schedule.alpha", "annealed runs need a power schedule".into()))
            }
            _ => {}
        }

        let particles = self.particles.count.unwrap_or(50);
        if particles == 0 {
            return Err(invalid("particles.count", "must be at least 1".into()));
        }
        let kind = match self.particles.kind.as_deref() {
            None | Some("first") => KindSpec::First,
            Some("second") => KindSpec::Second,
            Some("hybrid") => {
                let a = self.particles.hybrid.unwrap_or(0.5);
                if !(0.0..=1.0).contains(&a) {
                    return Err(invalid("particles.hybrid", format!("must lie in [0, 1], got {a}")));
                }
                KindSpec::Hybrid(a)
            }
            Some(other) => return Err(invalid("particles.kind", format!("unknown generator kind `{other}`"))),
        };
        if mode == Mode::Simulate && self.seed.is_none() {
            return Err(invalid("seed", "required for simulate runs".into()));
        }
        let horizon = self.horizon.unwrap_or(100.0);
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(invalid("horizon", format!("must be positive, got {horizon}")));
        }
        let grid = match (&self.snapshots.times, self.snapshots.first, self.snapshots.per_decade) {
            (Some(ts), None, None) => {
                if ts.iter().any(|t| !(*t >= 0.0)) {
                    return Err(invalid("snapshots.times", "times must be nonnegative".into()));
                }
                SnapshotGrid::Explicit(ts.clone())
            }
            (Some(_), _, _) => return Err(invalid("snapshots", "give either times or first/per_decade".into())),
            (None, first, per_decade) => {
                let first = first.unwrap_or(0.01);
                let per_decade = per_decade.unwrap_or(10);
                if !(first > 0.0) || per_decade == 0 {
                    return Err(invalid("snapshots", "first must be positive and per_decade at least 1".into()));
                }
                SnapshotGrid::Geometric { first, per_decade }
            }
        };
        let out_dir = self
            .output
            .dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_VAR).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        let defaults = Controls::default();
        let rtol = self.tolerances.rtol.unwrap_or(defaults.rtol);
        let atol = self.tolerances.atol.unwrap_or(defaults.atol);
        if !(rtol > 0.0) || !(atol > 0.0) {
            return Err(invalid("tolerances", "rtol and atol must be positive".into()));
        }
        let suites = match &self.verify.suites {
            None => Suite::ALL.to_vec(),
            Some(names) => names.iter().map(|s| Suite::parse(s)).collect::<Result<Vec<_>>>()?,
        };
        let trials = self.verify.trials.unwrap_or(100);
        if trials == 0 {
            return Err(invalid("verify.trials", "must be at least 1".into()));
        }
        Ok(RunConfig {
            landscape,
            m,
            mode,
            schedule,
            particles,
            kind,
            seed: self.seed,
            horizon,
            grid,
            out_dir,
            densities: self.output.densities.unwrap_or(false),
            rtol,
            atol,
            suites,
            trials,
            warnings,
        })
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    RawConfig::parse(&text)?.validate()
}

impl RunConfig {
    fn controls(&self) -> Controls {
        Controls { rtol: self.rtol, atol: self.atol, grid: self.grid.clone(), ..Controls::default() }
    }

    fn family(&self) -> Result<EntropyFamily> {
        EntropyFamily::penalized(self.m)
    }
}

/// Fixed 17-significant-digit scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Ordered key/value results; every entry is printed, stored in `summary.csv`
/// and in `summary.json`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Summary {
    pub mode: String,
    pub values: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
    pub exit_code: i32,
}

impl Summary {
    fn put(&mut self, key: &str, v: f64) {
        self.values.insert(key.to_string(), v);
    }

    fn write(&self, dir: &Path) -> Result<()> {
        write_csv(&dir.join("summary.csv"), &["key", "value"], self.values.iter().map(|(k, v)| vec![k.clone(), fmt_f64(*v)]))?;
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(dir.join("summary.json"), json + "\n")?;
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut s = format!("mode: {}\n", self.mode);
        for (k, v) in &self.values {
            s.push_str(&format!("  {k} = {}\n", fmt_f64(*v)));
        }
        for f in &self.files {
            s.push_str(&format!("  wrote {f}\n"));
        }
        s
    }
}

fn flow_rows(traj: &Trajectory, land: &EnergyLandscape, densities: bool) -> Vec<Vec<String>> {
    let mins = minimizer_set(land, MINIMIZER_TOL);
    let mass = traj.mass_on(&mins, land.ell());
    traj.diagnostics
        .iter()
        .zip(&traj.densities)
        .zip(mass)
        .map(|((d, rho), mu)| {
            let mut row = vec![fmt_f64(d.t), fmt_f64(d.beta), fmt_f64(d.cost), fmt_f64(d.gap_i), fmt_f64(d.gap_g), fmt_f64(mu), fmt_f64(d.rho_min)];
            if densities {
                row.extend(rho.as_slice().iter().map(|v| fmt_f64(*v)));
            }
            row
        })
        .collect()
}

fn flow_header(n: usize, densities: bool) -> Vec<String> {
    let mut h: Vec<String> = ["t", "beta_t", "cost", "gap_I", "gap_G", "mass_on_MU", "rho_min"].iter().map(|s| s.to_string()).collect();
    if densities {
        h.extend((0..n).map(|x| format!("rho_{x}")));
    }
    h
}

fn write_flow(path: &Path, traj: &Trajectory, land: &EnergyLandscape, densities: bool) -> Result<()> {
    let header = flow_header(land.n(), densities);
    let refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    write_csv(path, &refs, flow_rows(traj, land, densities))
}

fn snapshot_rows(run: &SwarmRun) -> Vec<Vec<String>> {
    run.snapshots
        .iter()
        .flat_map(|s| s.empirical.iter().enumerate().map(move |(x, p)| vec![fmt_f64(s.t), x.to_string(), fmt_f64(*p)]))
        .collect()
}

fn event_rows(run: &SwarmRun) -> Vec<Vec<String>> {
    run.events
        .iter()
        .map(|e| vec![e.index.to_string(), fmt_f64(e.t), e.particle.to_string(), e.from.to_string(), e.to.to_string()])
        .collect()
}

fn run_stationary(cfg: &RunConfig, land: &EnergyLandscape, fam: &EntropyFamily, summary: &mut Summary) -> Result<()> {
    let beta = match cfg.schedule {
        ScheduleSpec::Fixed(b) => b,
        ScheduleSpec::Power { .. } => unreachable!("validated"),
    };
    let prof = solve_eta(land, fam, beta)?;
    let u = land.objective();
    write_csv(
        &cfg.out_dir.join("stationary.csv"),
        &["x", "U", "eta", "zeta"],
        (0..land.n()).map(|x| vec![x.to_string(), fmt_f64(u[x]), fmt_f64(prof.eta[x]), fmt_f64(prof.zeta[x])]),
    )?;
    summary.files.push("stationary.csv".into());
    let mins = minimizer_set(land, MINIMIZER_TOL);
    summary.put("beta", beta);
    summary.put("c", prof.c);
    summary.put("zeta_mass_on_minimizers", mins.iter().map(|&x| prof.zeta[x]).sum());
    Ok(())
}

fn record_fit(traj: &Trajectory, horizon: f64, summary: &mut Summary) {
    if let Ok(fit) = convergence_rate_fit(traj, (horizon / 1e3, horizon)) {
        summary.put("fit_window_start", fit.window.0);
        summary.put("fit_window_end", fit.window.1);
        summary.put("fit_gap_slope", fit.gap_slope);
        summary.put("fit_gap_target", fit.gap_target);
        summary.put("fit_mass_deficit_slope", fit.mass_deficit_slope);
        summary.put("fit_mass_deficit_target", fit.mass_deficit_target);
    }
}

fn run_flow(cfg: &RunConfig, land: &EnergyLandscape, fam: &EntropyFamily, summary: &mut Summary) -> Result<Trajectory> {
    let rho0 = Density::uniform(land.n());
    let traj = match cfg.schedule {
        ScheduleSpec::Fixed(b) => integrate_homogeneous(land, fam, b, &rho0, cfg.horizon, &cfg.controls())?,
        ScheduleSpec::Power { .. } => integrate_annealed(land, fam, &cfg.schedule.schedule(), &rho0, cfg.horizon, &cfg.controls())?,
    };
    write_flow(&cfg.out_dir.join("flow.csv"), &traj, land, cfg.densities)?;
    summary.files.push("flow.csv".into());
    let last = traj.diagnostics.last().expect("time zero is stored");
    let mins = minimizer_set(land, MINIMIZER_TOL);
    summary.put("horizon", last.t);
    summary.put("final_beta", last.beta);
    summary.put("final_mass_on_minimizers", traj.mass_on(&mins, land.ell()).last().copied().unwrap_or(f64::NAN));
    summary.put("final_gap_I", last.gap_i);
    summary.put("accepted_steps", traj.stats.accepted as f64);
    if matches!(cfg.schedule, ScheduleSpec::Power { .. }) {
        record_fit(&traj, cfg.horizon, summary);
    }
    Ok(traj)
}

fn run_simulate(cfg: &RunConfig, land: &EnergyLandscape, fam: &EntropyFamily, summary: &mut Summary) -> Result<()> {
    let seed = cfg.seed.expect("validated");
    let mut sc = SwarmConfig::new(cfg.particles, cfg.kind.swarm(), cfg.schedule.schedule(), cfg.horizon, seed);
    sc.grid = cfg.grid.clone();
    let run = simulate_swarm(land, fam, &sc)?;
    write_csv(&cfg.out_dir.join("snapshots.csv"), &["snapshot_t", "state", "empirical_mass"], snapshot_rows(&run))?;
    write_csv(&cfg.out_dir.join("events.csv"), &["event_index", "t", "particle", "from", "to"], event_rows(&run))?;
    summary.files.push("snapshots.csv".into());
    summary.files.push("events.csv".into());
    let mins = minimizer_set(land, MINIMIZER_TOL);
    let last = run.snapshots.last().expect("horizon snapshot");
    summary.put("particles", cfg.particles as f64);
    summary.put("events", run.event_count as f64);
    summary.put("final_mass_on_minimizers", mins.iter().map(|&x| last.empirical[x]).sum());
    Ok(())
}

/// One line of a verification table.
#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub suite: &'static str,
    pub check: &'static str,
    pub trial: usize,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteOutcome {
    pub suite: Suite,
    pub rows: Vec<CheckRow>,
    pub passed: usize,
    pub failed: usize,
    /// First error raised by a trial, if any.
    pub error: Option<String>,
}

impl SuiteOutcome {
    pub fn worst(&self, check: &str) -> f64 {
        self.rows.iter().filter(|r| r.check == check).map(|r| r.value).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn random_m(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-3.0..-0.1)
}

fn trial_rows(suite: Suite, seed: u64, trial: usize) -> Result<Vec<CheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
    let name = suite.name();
    let row = |check, value, bound, pass| CheckRow { suite: name, check, trial, value, bound, pass };
    match suite {
        Suite::Chi => {
            let n = rng.random_range(3..=6);
            let land = random_landscape(&mut rng, n, 2.0);
            let fam = EntropyFamily::penalized(random_m(&mut rng))?;
            let beta = rng.random_range(0.0..5.0);
            let budget = ChiBudget { starts: 8, max_evals: 1500, seed: rng.random() };
            let rep = estimate_chi(&land, &fam, beta, &budget)?;
            let bound = rep.lambda_linearized + 1e-6;
            Ok(vec![row("chi_estimate", rep.chi_estimate, bound, rep.pass)])
        }
        Suite::Comparison => {
            let n = rng.random_range(3..=8);
            let land = random_landscape(&mut rng, n, 2.0);
            let fam = EntropyFamily::penalized(random_m(&mut rng))?;
            let rho = Density::from_measure(&random_probability(&mut rng, n, 1.0, 1e-3), land.ell())?;
            let target = Density::from_measure(&random_probability(&mut rng, n, 1.0, 1e-3), land.ell())?;
            let rep = comparison_inequality_check(&land, &fam, &rho, &target)?;
            Ok(vec![
                row("g_star_minus_lambda_rho_i_star", rep.g_star - rep.lambda_rho * rep.i_star, 0.0, rep.first_holds),
                row("lambda_rho_minus_bound", rep.lambda_rho - rep.bound, 0.0, rep.second_holds),
            ])
        }
        Suite::Decay => {
            let n = rng.random_range(3..=6);
            let land = random_landscape(&mut rng, n, 2.0);
            let fam = EntropyFamily::penalized(random_m(&mut rng))?;
            let beta = rng.random_range(0.0..5.0);
            let (q, w) = linearized_generator(&land, &fam, beta)?;
            let lambda = spectral_gap(&q, &w)?;
            let rho0 = Density::from_measure(&random_probability(&mut rng, n, 1.0, 1e-2), land.ell())?;
            let ctl = Controls { grid: SnapshotGrid::Geometric { first: 0.01 / lambda, per_decade: 10 }, ..Controls::default() };
            let traj = integrate_homogeneous(&land, &fam, beta, &rho0, 5.0 / lambda, &ctl)?;
            let rep = decay_certificate(&traj, lambda, 2.0 * lambda);
            Ok(vec![row("envelope_excess", rep.excess_at_estimate, 0.0, rep.envelope_holds)])
        }
        Suite::Representation => {
            let n = rng.random_range(2..=8);
            let land = random_landscape(&mut rng, n, 2.0);
            let fam = EntropyFamily::penalized(random_m(&mut rng))?;
            let beta = rng.random_range(0.0..10.0);
            let rho = Density::from_measure(&random_probability(&mut rng, n, 1.0, 1e-3), land.ell())?;
            let res = representation_residual(&land, &fam, beta, &rho).max();
            let prof = solve_eta(&land, &fam, beta)?;
            let first = first_generator(&land, &fam, beta, &prof.eta).matrix.abs().max();
            let q = second_generator(&land, &fam, beta, &prof.eta).matrix;
            let push = (0..n).map(|z| (0..n).map(|x| prof.zeta[x] * q[(x, z)]).sum::<f64>().abs()).fold(0.0, f64::max);
            Ok(vec![
                row("representation_residual", res, 1e-9, res <= 1e-9),
                row("first_generator_at_minimizer", first, 1e-11, first <= 1e-11),
                row("second_generator_balance", push, 1e-11, push <= 1e-11),
            ])
        }
        Suite::Metropolis => {
            let (res, path) = metropolis_draw(seed, trial, trial < 50)?;
            let mut rows = vec![row("field_residual", res, 1e-10, res <= 1e-10)];
            if trial < 50 {
                rows.push(row("pathwise_distance", path, 1e-8, path <= 1e-8));
            }
            Ok(rows)
        }
    }
}

/// Runs `trials` independent draws of a verification suite in parallel.
pub fn run_suite(suite: Suite, trials: usize, seed: u64) -> SuiteOutcome {
    let results: Vec<Result<Vec<CheckRow>>> = (0..trials).into_par_iter().map(|t| trial_rows(suite, seed, t)).collect();
    let mut rows = Vec::new();
    let mut error = None;
    for r in results {
        match r {
            Ok(v) => rows.extend(v),
            Err(e) => {
                error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let passed = rows.iter().filter(|r| r.pass).count();
    SuiteOutcome { suite, failed: rows.len() - passed, passed, rows, error }
}

fn run_verify(cfg: &RunConfig, summary: &mut Summary) -> Result<()> {
    let seed = cfg.seed.unwrap_or(0);
    let mut rows = Vec::new();
    for &suite in &cfg.suites {
        let out = run_suite(suite, cfg.trials, seed);
        summary.put(&format!("{}_passed", suite.name()), out.passed as f64);
        summary.put(&format!("{}_failed", suite.name()), out.failed as f64);
        if let Some(e) = &out.error {
            summary.warnings.push(format!("suite {} errored: {e}", suite.name()));
            summary.exit_code = 1;
        } else if out.failed > 0 && summary.exit_code == 0 {
            summary.exit_code = 2;
        }
        rows.extend(out.rows);
    }
    write_csv(
        &cfg.out_dir.join("verify.csv"),
        &["suite", "check", "trial", "value", "bound", "pass"],
        rows.iter().map(|r| vec![r.suite.into(), r.check.into(), r.trial.to_string(), fmt_f64(r.value), fmt_f64(r.bound), r.pass.to_string()]),
    )?;
    summary.files.push("verify.csv".into());
    Ok(())
}

/// Sixteen log-spaced times ending at the horizon.
fn demo_times(horizon: f64) -> Vec<f64> {
    let lo = (horizon / 1e4).max(1e-2).ln();
    let hi = horizon.ln();
    (0..16).map(|k| (lo + (hi - lo) * k as f64 / 15.0).exp()).collect()
}

fn run_ring_demo(cfg: &RunConfig, fam: &EntropyFamily, summary: &mut Summary) -> Result<()> {
    let land = ring20();
    let prof = solve_eta(&land, fam, 5.0)?;
    let u = land.objective();
    write_csv(
        &cfg.out_dir.join("ring_stationary.csv"),
        &["x", "U", "eta", "zeta"],
        (0..land.n()).map(|x| vec![x.to_string(), fmt_f64(u[x]), fmt_f64(prof.eta[x]), fmt_f64(prof.zeta[x])]),
    )?;
    summary.put("zeta5_mass_6_7_8", prof.zeta[6] + prof.zeta[7] + prof.zeta[8]);

    let times = demo_times(cfg.horizon);
    let schedule = cfg.schedule.schedule();
    let ctl = Controls { grid: SnapshotGrid::Explicit(times.clone()), ..cfg.controls() };
    let traj = integrate_annealed(&land, fam, &schedule, &Density::uniform(land.n()), cfg.horizon, &ctl)?;
    write_flow(&cfg.out_dir.join("ring_flow.csv"), &traj, &land, true)?;
    let mins = minimizer_set(&land, MINIMIZER_TOL);
    summary.put("flow_final_mass_on_minimizers", traj.mass_on(&mins, land.ell()).last().copied().unwrap_or(f64::NAN));

    let seed = cfg.seed.unwrap_or(0);
    let kinds = [("first", SwarmKind::First), ("second", SwarmKind::Second)];
    let mut hist = Vec::new();
    let mut dist = Vec::new();
    for (label, kind) in kinds {
        let mut sc = SwarmConfig::new(cfg.particles, kind, schedule.clone(), cfg.horizon, seed);
        sc.grid = SnapshotGrid::Explicit(times.clone());
        let run = simulate_swarm(&land, fam, &sc)?;
        let rep = compare_marginals(&land, &run, &traj, cfg.particles)?;
        for s in run.snapshots.iter().filter(|s| s.t > 0.0) {
            for (x, p) in s.empirical.iter().enumerate() {
                hist.push(vec![label.to_string(), fmt_f64(s.t), x.to_string(), fmt_f64(*p)]);
            }
        }
        for p in &rep.points {
            let transitions = run.events.partition_point(|e| e.t <= p.t);
            let transitions = if run.truncated && transitions == run.events.len() { f64::NAN } else { transitions as f64 };
            dist.push(vec![label.to_string(), fmt_f64(p.t), fmt_f64(transitions), fmt_f64(p.distance)]);
        }
        let last = run.snapshots.last().expect("horizon snapshot");
        summary.put(&format!("{label}_final_mass_on_minimizers"), mins.iter().map(|&x| last.empirical[x]).sum());
        summary.put(&format!("{label}_worst_l2_distance"), rep.worst);
        summary.put(&format!("{label}_events"), run.event_count as f64);
    }
    write_csv(&cfg.out_dir.join("ring_histograms.csv"), &["kind", "snapshot_t", "state", "empirical_mass"], hist)?;
    write_csv(&cfg.out_dir.join("ring_distance.csv"), &["kind", "snapshot_t", "transitions", "l2_distance"], dist)?;
    for f in ["ring_stationary.csv", "ring_flow.csv", "ring_histograms.csv", "ring_distance.csv"] {
        summary.files.push(f.into());
    }
    Ok(())
}

/// Executes a validated configuration, writing every artifact under `out_dir`.
pub fn run(cfg: &RunConfig) -> Result<Summary> {
    fs::create_dir_all(&cfg.out_dir)?;
    let fam = cfg.family()?;
    let mut summary = Summary { warnings: cfg.warnings.clone(), ..Summary::default() };
    match cfg.mode {
        Mode::Stationary => {
            summary.mode = "stationary".into();
            run_stationary(cfg, &cfg.landscape.build()?, &fam, &mut summary)?;
        }
        Mode::FlowHomogeneous | Mode::FlowAnnealed => {
            summary.mode = "flow".into();
            run_flow(cfg, &cfg.landscape.build()?, &fam, &mut summary)?;
        }
        Mode::Simulate => {
            summary.mode = "simulate".into();
            run_simulate(cfg, &cfg.landscape.build()?, &fam, &mut summary)?;
        }
        Mode::Verify => {
            summary.mode = "verify".into();
            run_verify(cfg, &mut summary)?;
        }
        Mode::RingDemo => {
            summary.mode = "ring-demo".into();
            run_ring_demo(cfg, &fam, &mut summary)?;
        }
    }
    if let ScheduleSpec::Power { .. } = cfg.schedule {
        if cfg.schedule.schedule().regime(cfg.m) == Regime::AboveKappa {
            summary.put("alpha_above_kappa", 1.0);
        }
    }
    summary.write(&cfg.out_dir)?;
    Ok(summary)
}

#[derive(Debug, Parser)]
#[command(name = "swarmflow", version, about = "Entropy-penalized swarm optimization on finite state spaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimizer of the penalized cost at a fixed beta.
    Stationary(CommonArgs),
    /// Deterministic flow, homogeneous with --beta or annealed with --schedule.
    Flow(CommonArgs),
    /// Interacting particle swarm.
    Simulate(CommonArgs),
    /// Randomized verification suites.
    Verify(CommonArgs),
    /// Twenty-state ring reproduction.
    RingDemo(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Builtin landscape name (`ring20`).
    #[arg(long)]
    pub builtin: Option<String>,
    /// Entropy exponent (negative).
    #[arg(long, allow_hyphen_values = true)]
    pub m: Option<f64>,
    /// Fixed inverse temperature.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Power schedule as `t0,alpha`.
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long)]
    pub particles: Option<usize>,
    /// `first`, `second` or `hybrid`.
    #[arg(long)]
    pub kind: Option<String>,
    /// Weight of the second generator in the hybrid.
    #[arg(long)]
    pub hybrid: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Add per-state densities to the flow CSV.
    #[arg(long)]
    pub densities: bool,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub atol: Option<f64>,
    /// Verification suite; repeatable.
    #[arg(long = "suite")]
    pub suites: Vec<String>,
    #[arg(long)]
    pub trials: Option<usize>,
}

impl CommonArgs {
    fn overlay(&self, mode: &str) -> Result<RawConfig> {
        let mut raw = RawConfig { mode: Some(mode.into()), seed: self.seed, horizon: self.horizon, ..RawConfig::default() };
        raw.landscape.builtin = self.builtin.clone();
        raw.entropy.m = self.m;
        raw.schedule.beta = self.beta;
        if let Some(s) = &self.schedule {
            let parts: Vec<&str> = s.split(',').map(str::trim).collect();
            let bad = || Error::Validation { field: "schedule".into(), message: format!("expected `t0,alpha`, got `{s}`") };
            if parts.len() != 2 {
                return Err(bad());
            }
            raw.schedule.t0 = Some(parts[0].parse().map_err(|_| bad())?);
            raw.schedule.alpha = Some(parts[1].parse().map_err(|_| bad())?);
        }
        raw.particles.count = self.particles;
        raw.particles.kind = self.kind.clone();
        raw.particles.hybrid = self.hybrid;
        raw.output.dir = self.out.clone();
        raw.output.densities = self.densities.then_some(true);
        raw.tolerances.rtol = self.rtol;
        raw.tolerances.atol = self.atol;
        if !self.suites.is_empty() {
            raw.verify.suites = Some(self.suites.clone());
        }
        raw.verify.trials = self.trials;
        Ok(raw)
    }
}

impl Command {
    /// Config file (if any) with the flags of this subcommand applied on top.
    pub fn resolve(&self) -> Result<RunConfig> {
        let (args, mode) = match self {
            Command::Stationary(a) => (a, "stationary"),
            Command::Flow(a) => (a, "flow"),
            Command::Simulate(a) => (a, "simulate"),
            Command::Verify(a) => (a, "verify"),
            Command::RingDemo(a) => (a, "ring-demo"),
        };
        let mut base = match &args.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
                RawConfig::parse(&text)?
            }
            None => RawConfig::default(),
        };
        if mode == "ring-demo" && base.landscape == RawLandscape::default() {
            base.landscape.builtin = Some("ring20".into());
        }
        if mode == "verify" && base.landscape == RawLandscape::default() {
            base.landscape.builtin = Some("ring20".into());
        }
        let top = args.overlay(mode)?;
        let mut raw = base.overlay(&top);
        if mode == "flow" {
            raw.mode = Some(if raw.schedule.beta.is_some() { "flow-homogeneous" } else { "flow-annealed" }.into());
        }
        raw.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(text: &str) -> RawConfig {
        RawConfig::parse(text).unwrap()
    }

    #[test]
    fn defaults_are_filled() {
        let cfg = raw("mode = \"flow-annealed\"\n[landscape]\nbuiltin = \"ring20\"\n").validate().unwrap();
        assert_eq!(cfg.m, -1.0);
        assert_eq!(cfg.schedule, ScheduleSpec::Power { t0: 1.0, alpha: 0.25 });
        assert_eq!(cfg.particles, 50);
        assert!(cfg.warnings.is_empty());
        let land = cfg.landscape.build().unwrap();
        assert_eq!(land.n(), 20);
        assert_eq!(minimizer_set(&land, MINIMIZER_TOL), vec![7]);
    }

    #[test]
    fn alpha_above_kappa_warns() {
        let cfg = raw("mode = \"flow-annealed\"\n[landscape]\nbuiltin = \"ring20\"\n[schedule]\nalpha = 0.3\n").validate().unwrap();
        assert_eq!(cfg.warnings.len(), 1);
        assert!(cfg.warnings[0].contains("outside guaranteed regime"));
    }

    #[test]
    fn simulate_without_seed_is_rejected() {
        let err = raw("mode = \"simulate\"\n[landscape]\nbuiltin = \"ring20\"\n").validate().unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "seed"), "{err}");
    }

    #[test]
    fn parse_error_reports_line() {
        let err = RawConfig::parse("seed = 1\n\n[landscape\nbuiltin = 3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = RawConfig::parse("seed = 1\nhorizon = \"x\"\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn unknown_key_is_a_parse_error() {
        assert!(matches!(RawConfig::parse("sed = 1\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn edge_list_landscape() {
        let text = "mode = \"stationary\"\n[landscape]\nedges = [[0, 1, 1], [1, 0, 2.0]]\nell = [0.6666666666666666, 0.3333333333333333]\nobjective = [0.0, 1.0]\n[schedule]\nbeta = 2.0\n";
        let cfg = raw(text).validate().unwrap();
        let land = cfg.landscape.build().unwrap();
        assert_eq!(land.rate(1, 0), 2.0);
    }

    #[test]
    fn overlay_replaces_schedule_kind() {
        let base = raw("[schedule]\nt0 = 2.0\nalpha = 0.1\n");
        let top = RawConfig { schedule: RawSchedule { beta: Some(3.0), ..RawSchedule::default() }, ..RawConfig::default() };
        let merged = base.overlay(&top);
        assert_eq!(merged.schedule, RawSchedule { beta: Some(3.0), ..RawSchedule::default() });
    }

    #[test]
    fn stationary_needs_fixed_beta() {
        let err = raw("mode = \"stationary\"\n[landscape]\nbuiltin = \"ring20\"\n").validate().unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "schedule.beta"));
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn flags_override_file() {
        let dir = std::env::temp_dir().join(format!("swarmflow-cli-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.toml");
        fs::write(&path, "[landscape]\nbuiltin = \"ring20\"\n[schedule]\nbeta = 1.0\n[entropy]\nm = -2.0\n").unwrap();
        let args = CommonArgs { config: Some(path), beta: Some(5.0), ..CommonArgs::default() };
        let cfg = Command::Stationary(args).resolve().unwrap();
        assert_eq!(cfg.schedule, ScheduleSpec::Fixed(5.0));
        assert_eq!(cfg.m, -2.0);
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn representation_suite_passes() {
        let out = run_suite(Suite::Representation, 20, 3);
        assert!(out.error.is_none(), "{:?}", out.error);
        assert_eq!(out.failed, 0, "{:?}", out.rows.iter().filter(|r| !r.pass).collect::<Vec<_>>());
    }

    #[test]
    fn comparison_suite_passes() {
        let out = run_suite(Suite::Comparison, 20, 4);
        assert!(out.error.is_none());
        assert_eq!(out.failed, 0);
    }
}
