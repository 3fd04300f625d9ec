//! Deterministic gradient flow of the penalized cost, at fixed or increasing
//! inverse temperature.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::entropy::{kappa, EntropyFamily};
use crate::error::{Error, Result};
use crate::functionals::{bregman_gap, cost_of, gap_g_of};
use crate::model::{minimizer_set, osc, Density, EnergyLandscape, MASS_TOL};
use crate::stationary::{solve_eta, MINIMIZER_TOL};

type Curve = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied inverse-temperature curve together with its derivative.
#[derive(Clone)]
pub struct CustomCurve {
    pub beta: Curve,
    pub derivative: Curve,
}

impl fmt::Debug for CustomCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomCurve")
    }
}

/// Inverse temperature as a function of time.
#[derive(Debug, Clone)]
pub enum Schedule {
    /// `(t0 + t)^alpha - 1`.
    Power { t0: f64, alpha: f64 },
    Constant(f64),
    Custom(CustomCurve),
}

/// Which convergence statements apply to a power schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `alpha < kappa(m)`: convergence with both polynomial rates.
    BelowKappa,
    /// `alpha = kappa(m)`: convergence with the mass rate only.
    AtKappa,
    /// `alpha > kappa(m)`: no guarantee.
    AboveKappa,
    /// Not a power schedule.
    NotPower,
}

impl Schedule {
    pub fn power(t0: f64, alpha: f64) -> Self {
        Schedule::Power { t0, alpha }
    }

    pub fn custom(beta: impl Fn(f64) -> f64 + Send + Sync + 'static, derivative: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Schedule::Custom(CustomCurve { beta: Arc::new(beta), derivative: Arc::new(derivative) })
    }

    pub fn beta(&self, t: f64) -> f64 {
        match self {
            Schedule::Power { t0, alpha } => (t0 + t).powf(*alpha) - 1.0,
            Schedule::Constant(b) => *b,
            Schedule::Custom(c) => (c.beta)(t),
        }
    }

    pub fn beta_dot(&self, t: f64) -> f64 {
        match self {
            Schedule::Power { t0, alpha } => alpha * (t0 + t).powf(alpha - 1.0),
            Schedule::Constant(_) => 0.0,
            Schedule::Custom(c) => (c.derivative)(t),
        }
    }

    /// `int_a^b beta_s ds`.
    pub fn integrated_beta(&self, a: f64, b: f64) -> f64 {
        match self {
            Schedule::Power { t0, alpha } => {
                let prim = |s: f64| (t0 + s).powf(alpha + 1.0) / (alpha + 1.0) - s;
                prim(b) - prim(a)
            }
            Schedule::Constant(beta) => beta * (b - a),
            Schedule::Custom(c) => adaptive_simpson(&*c.beta, a, b, 1e-12, 40),
        }
    }

    pub fn regime(&self, m: f64) -> Regime {
        match (self, kappa(m)) {
            (Schedule::Power { alpha, .. }, Ok(k)) => {
                if (alpha - k).abs() <= 1e-12 * k {
                    Regime::AtKappa
                } else if *alpha < k {
                    Regime::BelowKappa
                } else {
                    Regime::AboveKappa
                }
            }
            _ => Regime::NotPower,
        }
    }

    /// Checks the structural conditions; with `enforce_kappa` also `alpha <= kappa(m)`.
    pub fn validate(&self, m: f64, enforce_kappa: bool) -> Result<()> {
        match self {
            Schedule::Power { t0, alpha } => {
                if !(*t0 >= 1.0) || !t0.is_finite() {
                    return Err(Error::Validation { field: "t0".into(), message: format!("must be >= 1, got {t0}") });
                }
                if !(*alpha > 0.0) || !alpha.is_finite() {
                    return Err(Error::Validation { field: "alpha".into(), message: format!("must be > 0, got {alpha}") });
                }
                if enforce_kappa && self.regime(m) == Regime::AboveKappa {
                    return Err(Error::Validation {
                        field: "alpha".into(),
                        message: format!("{alpha} exceeds kappa(m) = {}", kappa(m)?),
                    });
                }
                Ok(())
            }
            Schedule::Constant(b) => {
                if *b >= 0.0 && b.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Validation { field: "beta".into(), message: format!("must be finite and >= 0, got {b}") })
                }
            }
            Schedule::Custom(_) => Ok(()),
        }
    }
}

pub(crate) fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, depth)
}

/// Times at which diagnostics are stored.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnapshotGrid {
    /// `first * 10^(k / per_decade)`, plus time zero and the horizon.
    Geometric { first: f64, per_decade: usize },
    Explicit(Vec<f64>),
}

impl Default for SnapshotGrid {
    fn default() -> Self {
        SnapshotGrid::Geometric { first: 0.01, per_decade: 10 }
    }
}

impl SnapshotGrid {
    pub fn times(&self, horizon: f64) -> Vec<f64> {
        let mut out = vec![0.0];
        match self {
            SnapshotGrid::Geometric { first, per_decade } => {
                let ratio = 10f64.powf(1.0 / (*per_decade).max(1) as f64);
                let mut k = 0;
                loop {
                    let t = first * ratio.powi(k);
                    if t >= horizon * (1.0 - 1e-12) {
                        break;
                    }
                    out.push(t);
                    k += 1;
                }
            }
            SnapshotGrid::Explicit(ts) => out.extend(ts.iter().copied().filter(|t| *t > 0.0 && *t < horizon)),
        }
        if horizon > 0.0 {
            out.push(horizon);
        }
        out.sort_by(|a, b| a.total_cmp(b));
        out.dedup();
        out
    }
}

/// Step-size and storage controls for the integrators.
#[derive(Debug, Clone, PartialEq)]
pub struct Controls {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: f64,
    pub min_step: f64,
    /// Step cap is `cap_factor / (max exit rate * (1 + beta_t))`.
    pub cap_factor: f64,
    pub grid: SnapshotGrid,
    /// Store cost and dissipation at every accepted step.
    pub record_steps: bool,
    /// Reject power schedules with `alpha > kappa(m)`.
    pub enforce_kappa: bool,
    pub max_steps: usize,
}

impl Default for Controls {
    fn default() -> Self {
        Controls {
            rtol: 1e-10,
            atol: 1e-12,
            initial_step: 1e-4,
            min_step: 1e-14,
            cap_factor: 0.1,
            grid: SnapshotGrid::default(),
            record_steps: false,
            enforce_kappa: false,
            max_steps: 200_000_000,
        }
    }
}

/// Counters reported by the stepper.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected_error: usize,
    pub rejected_positivity: usize,
}

// Fehlberg 4(5) tableau
const C: [f64; 6] = [0.0, 0.25, 0.375, 12.0 / 13.0, 1.0, 0.5];
const A: [[f64; 5]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
    [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
];
const B4: [f64; 6] = [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -0.2, 0.0];
const B_ERR: [f64; 6] = [1.0 / 360.0, 0.0, -128.0 / 4275.0, -2197.0 / 75240.0, 0.02, 2.0 / 55.0];

enum Trial {
    Ok { error: f64 },
    Nonpositive,
}

struct Stepper {
    k: [Vec<f64>; 6],
    stage: Vec<f64>,
    out: Vec<f64>,
}

impl Stepper {
    fn new(n: usize) -> Self {
        Stepper { k: std::array::from_fn(|_| vec![0.0; n]), stage: vec![0.0; n], out: vec![0.0; n] }
    }

    fn trial<F: FnMut(f64, &[f64], &mut [f64])>(&mut self, field: &mut F, t: f64, y: &[f64], h: f64, ctl: &Controls) -> Trial {
        let n = y.len();
        for s in 0..6 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, a) in A[s].iter().enumerate().take(s) {
                    acc += h * a * self.k[j][i];
                }
                self.stage[i] = acc;
            }
            if self.stage.iter().any(|v| !(*v > 0.0)) {
                return Trial::Nonpositive;
            }
            let (head, tail) = self.k.split_at_mut(s);
            let _ = head;
            field(t + C[s] * h, &self.stage, &mut tail[0]);
        }
        let mut error: f64 = 0.0;
        for i in 0..n {
            let mut acc = y[i];
            let mut err = 0.0;
            for s in 0..6 {
                acc += h * B4[s] * self.k[s][i];
                err += h * B_ERR[s] * self.k[s][i];
            }
            self.out[i] = acc;
            error = error.max(err.abs() / (ctl.atol + ctl.rtol * y[i].abs().max(acc.abs())));
        }
        if self.out.iter().any(|v| !(*v > 0.0)) {
            return Trial::Nonpositive;
        }
        Trial::Ok { error }
    }
}

/// Adaptive integration of a positive, mass-conserving field. Returns the state
/// at each requested time (which must start at the initial time). `observe` sees
/// every accepted step as `(t_new, previous, current)`.
pub(crate) fn integrate_positive<F, Cap, O>(
    mut field: F,
    y0: Vec<f64>,
    weights: &[f64],
    times: &[f64],
    ctl: &Controls,
    cap: Cap,
    mut observe: O,
) -> Result<(Vec<Vec<f64>>, StepStats)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    Cap: Fn(f64) -> f64,
    O: FnMut(f64, &[f64], &[f64]),
{
    let n = y0.len();
    let mut stepper = Stepper::new(n);
    let mut stats = StepStats::default();
    let mut y = y0;
    let mut prev = vec![0.0; n];
    let mut t = times.first().copied().unwrap_or(0.0);
    let mut h = ctl.initial_step;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        while t < target {
            if stats.accepted >= ctl.max_steps {
                return Err(Error::StepFailure { t, step: h });
            }
            let remaining = target - t;
            let mut step = h.min(cap(t));
            let landing = step >= remaining;
            if landing {
                step = remaining;
            }
            if step < ctl.min_step && !landing {
                return Err(Error::StepFailure { t, step });
            }
            match stepper.trial(&mut field, t, &y, step, ctl) {
                Trial::Nonpositive => {
                    stats.rejected_positivity += 1;
                    h = 0.5 * step;
                    if h < ctl.min_step {
                        return Err(Error::StepFailure { t, step: h });
                    }
                }
                Trial::Ok { error } if error > 1.0 => {
                    stats.rejected_error += 1;
                    h = step * (0.9 * error.powf(-0.2)).max(0.2);
                    if h < ctl.min_step {
                        return Err(Error::StepFailure { t, step: h });
                    }
                }
                Trial::Ok { error } => {
                    let mass: f64 = stepper.out.iter().zip(weights).map(|(v, w)| v * w).sum();
                    if (mass - 1.0).abs() > MASS_TOL {
                        stats.rejected_positivity += 1;
                        h = 0.5 * step;
                        if h < ctl.min_step {
                            return Err(Error::StepFailure { t, step: h });
                        }
                        continue;
                    }
                    prev.copy_from_slice(&y);
                    for (v, o) in y.iter_mut().zip(&stepper.out) {
                        *v = o / mass;
                    }
                    t = if landing { target } else { t + step };
                    stats.accepted += 1;
                    observe(t, &prev, &y);
                    let grow = if error == 0.0 { 5.0 } else { (0.9 * error.powf(-0.2)).clamp(0.2, 5.0) };
                    if !landing {
                        h = step * grow;
                    } else {
                        h = h.max(step);
                    }
                }
            }
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}

/// Flow field `F(rho)(x) = sum_y L(x,y) theta(rho(x),rho(y)) (beta grad U + grad phi'(rho))(x,y)`
/// written into `out`; `dphi` is scratch of length `n`.
pub(crate) fn rhs_into(land: &EnergyLandscape, fam: &EntropyFamily, beta: f64, rho: &[f64], dphi: &mut [f64], out: &mut [f64]) {
    let u = land.objective();
    for (d, r) in dphi.iter_mut().zip(rho) {
        *d = fam.phi_prime(*r);
    }
    for x in 0..land.n() {
        let mut acc = 0.0;
        for &(y, rate) in land.neighbors(x) {
            let th = fam.theta_from_primes(rho[x], rho[y], dphi[x], dphi[y]);
            acc += rate * th * (beta * (u[y] - u[x]) + dphi[y] - dphi[x]);
        }
        out[x] = acc;
    }
}

pub fn rhs(land: &EnergyLandscape, fam: &EntropyFamily, beta: f64, rho: &Density) -> Vec<f64> {
    let n = land.n();
    let mut dphi = vec![0.0; n];
    let mut out = vec![0.0; n];
    rhs_into(land, fam, beta, rho.as_slice(), &mut dphi, &mut out);
    out
}

/// Quantities stored at each snapshot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub t: f64,
    pub beta: f64,
    pub cost: f64,
    /// Bregman gap to the instantaneous minimizer.
    pub gap_i: f64,
    pub gap_g: f64,
    pub mass_on_minimizers: f64,
    pub rho_min: f64,
    /// Extremes of `rho / nu` away from the minimizers of the objective.
    pub ratio_min_off: f64,
    pub ratio_max_off: f64,
    /// `osc U (beta_t - beta_0) + I(0, rho_0)`.
    pub gap_bound: f64,
    /// `1/2 ||rho - nu||^2` in `L^2(ell)`.
    pub half_l2_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub cost: f64,
    pub gap_g: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub densities: Vec<Density>,
    /// Instantaneous minimizers at the stored times.
    pub targets: Vec<Density>,
    pub diagnostics: Vec<Diagnostics>,
    pub schedule: Schedule,
    pub m: f64,
    pub stats: StepStats,
    /// Largest increase of the cost over a single accepted step; only tracked
    /// for a constant schedule.
    pub max_cost_increase: Option<f64>,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    pub fn final_density(&self) -> &Density {
        self.densities.last().expect("trajectory stores time zero")
    }

    pub fn mass_on(&self, states: &[usize], ell: &[f64]) -> Vec<f64> {
        self.densities.iter().map(|d| states.iter().map(|&x| d[x] * ell[x]).sum()).collect()
    }

    /// Largest `I(t) - e^{-chi t} I(0)` over the stored times; nonpositive means
    /// the exponential envelope holds.
    pub fn envelope_excess(&self, chi: f64) -> f64 {
        let i0 = self.diagnostics[0].gap_i;
        self.diagnostics.iter().map(|d| d.gap_i - (-chi * d.t).exp() * i0).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest `I(t) - bound(t)` over the stored times.
    pub fn gap_bound_excess(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.gap_i - d.gap_bound).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest `K` with `rho_min^{-m} >= 1 / (K (beta_t + 1))` at every stored time.
    pub fn floor_constant(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| 1.0 / (d.rho_min.powf(-self.m) * (d.beta + 1.0)))
            .fold(0.0, f64::max)
    }

    /// Fits `I0 = max I` over `fit`, then reports the largest `I / I0` over `check`.
    pub fn plateau_ratio(&self, fit: (f64, f64), check: (f64, f64)) -> Result<f64> {
        let in_window = |d: &&Diagnostics, w: (f64, f64)| d.t >= w.0 && d.t <= w.1;
        let i0 = self.diagnostics.iter().filter(|d| in_window(d, fit)).map(|d| d.gap_i).fold(f64::NAN, f64::max);
        if i0.is_nan() {
            return Err(Error::WindowTooShort("no snapshot inside the fit window".into()));
        }
        Ok(self.diagnostics.iter().filter(|d| in_window(d, check)).map(|d| d.gap_i / i0).fold(0.0, f64::max))
    }
}

fn snapshot(
    land: &EnergyLandscape,
    fam: &EntropyFamily,
    t: f64,
    beta: f64,
    rho: &[f64],
    minimizers: &[usize],
    gap_offset: f64,
) -> Result<(Diagnostics, Density)> {
    let profile = solve_eta(land, fam, beta)?;
    let nu = profile.eta;
    let ell = land.ell();
    let mut ratio_min_off = f64::INFINITY;
    let mut ratio_max_off = f64::NEG_INFINITY;
    let mut half = 0.0;
    for x in 0..land.n() {
        let h = rho[x] - nu[x];
        half += ell[x] * (0.5 * h * h);
        if !minimizers.contains(&x) {
            let r = rho[x] / nu[x];
            ratio_min_off = ratio_min_off.min(r);
            ratio_max_off = ratio_max_off.max(r);
        }
    }
    let diag = Diagnostics {
        t,
        beta,
        cost: cost_of(land, fam, beta, rho),
        gap_i: bregman_gap(land, fam, rho, nu.as_slice()),
        gap_g: gap_g_of(land, fam, beta, rho),
        mass_on_minimizers: minimizers.iter().map(|&x| rho[x] * ell[x]).sum(),
        rho_min: rho.iter().copied().fold(f64::INFINITY, f64::min),
        ratio_min_off,
        ratio_max_off,
        gap_bound: gap_offset,
        half_l2_sq: half,
    };
    Ok((diag, nu))
}

/// Flow at fixed inverse temperature; the same code path as a constant schedule.
pub fn integrate_homogeneous(
    land: &EnergyLandscape,
    fam: &EntropyFamily,
    beta: f64,
    rho0: &Density,
    horizon: f64,
    controls: &Controls,
) -> Result<Trajectory> {
    integrate_annealed(land, fam, &Schedule::Constant(beta), rho0, horizon, controls)
}

pub fn integrate_annealed(
    land: &EnergyLandscape,
    fam: &EntropyFamily,
    schedule: &Schedule,
    rho0: &Density,
    horizon: f64,
    controls: &Controls,
) -> Result<Trajectory> {
    fam.require_penalized()?;
    schedule.validate(fam.m, controls.enforce_kappa)?;
    if rho0.len() != land.n() {
        return Err(Error::Dimension { expected: land.n(), got: rho0.len() });
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::Domain(format!("horizon must be finite and >= 0, got {horizon}")));
    }
    let n = land.n();
    let times = controls.grid.times(horizon);
    let rate = land.max_exit_rate();
    let constant = matches!(schedule, Schedule::Constant(_));
    let mut dphi = vec![0.0; n];
    let field = |t: f64, y: &[f64], out: &mut [f64]| rhs_into(land, fam, schedule.beta(t), y, &mut dphi, out);
    let cap = |t: f64| controls.cap_factor / (rate * (1.0 + schedule.beta(t)));

    let mut max_increase: f64 = f64::NEG_INFINITY;
    let mut steps = Vec::new();
    let beta0 = schedule.beta(0.0);
    let mut last_cost = cost_of(land, fam, beta0, rho0.as_slice());
    if controls.record_steps {
        steps.push(StepRecord { t: 0.0, cost: last_cost, gap_g: gap_g_of(land, fam, beta0, rho0.as_slice()) });
    }
    let observe = |t: f64, _prev: &[f64], cur: &[f64]| {
        if constant || controls.record_steps {
            let beta = schedule.beta(t);
            let c = cost_of(land, fam, beta, cur);
            if constant {
                max_increase = max_increase.max(c - last_cost);
            }
            last_cost = c;
            if controls.record_steps {
                steps.push(StepRecord { t, cost: c, gap_g: gap_g_of(land, fam, beta, cur) });
            }
        }
    };
    let (states, stats) = integrate_positive(field, rho0.as_slice().to_vec(), land.ell(), &times, controls, cap, observe)?;

    let minimizers = minimizer_set(land, MINIMIZER_TOL * land.min_objective().abs().max(1.0));
    let spread = osc(land.objective());
    let i_initial = bregman_gap(land, fam, rho0.as_slice(), solve_eta(land, fam, beta0)?.eta.as_slice());
    let mut densities = Vec::with_capacity(states.len());
    let mut targets = Vec::with_capacity(states.len());
    let mut diagnostics = Vec::with_capacity(states.len());
    for (t, y) in times.iter().zip(states) {
        let beta = schedule.beta(*t);
        let bound = spread * (beta - beta0) + i_initial;
        let (d, nu) = snapshot(land, fam, *t, beta, &y, &minimizers, bound)?;
        diagnostics.push(d);
        targets.push(nu);
        densities.push(Density::new(y, land.ell())?);
    }
    Ok(Trajectory {
        times,
        densities,
        targets,
        diagnostics,
        schedule: schedule.clone(),
        m: fam.m,
        stats,
        max_cost_increase: if constant { Some(max_increase.max(0.0)) } else { None },
        steps,
    })
}

/// Integrates `y' = field(t, y)` for a positive, `weights`-normalized state,
/// returning the state at each of `times` (starting at the initial time).
pub fn integrate_field<F>(field: F, y0: Vec<f64>, weights: &[f64], times: &[f64], max_step: f64, controls: &Controls) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    integrate_positive(field, y0, weights, times, controls, |_| max_step, |_, _, _| {}).map(|(s, _)| s)
}

#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    pub window: (f64, f64),
    pub points: usize,
    pub mass_deficit_slope: f64,
    pub gap_slope: f64,
    /// `-alpha / (1 - m)`.
    pub mass_deficit_target: f64,
    /// `2 alpha / kappa(m) - 2`.
    pub gap_target: f64,
    pub regime: Regime,
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Log-log least-squares slopes of `1 - mu_t[M(U)]` and of `I(t, rho_t)` over `window`.
pub fn convergence_rate_fit(traj: &Trajectory, window: (f64, f64)) -> Result<RateFit> {
    let alpha = match traj.schedule {
        Schedule::Power { alpha, .. } => alpha,
        _ => return Err(Error::Domain("rate fits need a power schedule".into())),
    };
    let (lo, hi) = window;
    if !(lo > 0.0) || !(hi / lo >= 100.0 * (1.0 - 1e-12)) {
        return Err(Error::WindowTooShort(format!("[{lo}, {hi}] spans fewer than two decades")));
    }
    let pts: Vec<&Diagnostics> = traj.diagnostics.iter().filter(|d| d.t >= lo * (1.0 - 1e-12) && d.t <= hi * (1.0 + 1e-12)).collect();
    if pts.len() < 3 {
        return Err(Error::WindowTooShort(format!("{} snapshots inside the window", pts.len())));
    }
    if pts.last().map(|d| d.t).unwrap_or(0.0) < hi * (1.0 - 1e-9) {
        return Err(Error::WindowTooShort(format!("trajectory ends before {hi}")));
    }
    let lt: Vec<f64> = pts.iter().map(|d| d.t.ln()).collect();
    let deficit: Vec<f64> = pts.iter().map(|d| (1.0 - d.mass_on_minimizers).ln()).collect();
    let gap: Vec<f64> = pts.iter().map(|d| d.gap_i.ln()).collect();
    let k = kappa(traj.m)?;
    Ok(RateFit {
        window,
        points: pts.len(),
        mass_deficit_slope: ls_slope(&lt, &deficit),
        gap_slope: ls_slope(&lt, &gap),
        mass_deficit_target: -alpha / (1.0 - traj.m),
        gap_target: 2.0 * alpha / k - 2.0,
        regime: traj.schedule.regime(traj.m),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{cost, gap_g};
    use crate::model::{random_landscape, random_probability, ring, ring20, spectral_gap};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fam() -> EntropyFamily {
        EntropyFamily::penalized(-1.0).unwrap()
    }

    fn random_density(rng: &mut ChaCha8Rng, ell: &[f64]) -> Density {
        let mu = random_probability(rng, ell.len(), 1.0, 1e-2);
        Density::from_measure(&mu, ell).unwrap()
    }

    #[test]
    fn zero_temperature_field_is_heat_flow() {
        let land = ring(5, |i| i as f64);
        let rho = Density::new(vec![0.5, 1.5, 1.2, 0.8, 1.0], land.ell()).unwrap();
        let f = rhs(&land, &fam(), 0.0, &rho);
        for x in 0..5 {
            let expect: f64 = (0..5).map(|y| land.generator()[(x, y)] * rho[y]).sum();
            assert!((f[x] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn field_vanishes_at_minimizer() {
        let land = ring20();
        let eta = solve_eta(&land, &fam(), 5.0).unwrap().eta;
        let f = rhs(&land, &fam(), 5.0, &eta);
        assert!(f.iter().all(|v| v.abs() < 1e-10), "{f:?}");
    }

    #[test]
    fn power_schedule_values() {
        let s = Schedule::power(1.0, 0.25);
        assert_eq!(s.beta(0.0), 0.0);
        assert!((s.beta(15.0) - 1.0).abs() < 1e-15);
        assert!((s.beta_dot(15.0) - 0.25 / 8.0).abs() < 1e-15);
        // int_0^15 ((1+s)^{1/4} - 1) ds = (16^{5/4} - 1) / (5/4) - 15
        assert!((s.integrated_beta(0.0, 15.0) - (31.0 / 1.25 - 15.0)).abs() < 1e-12);
        assert_eq!(s.regime(-1.0), Regime::AtKappa);
        assert_eq!(Schedule::power(1.0, 0.125).regime(-1.0), Regime::BelowKappa);
        assert!(Schedule::power(1.0, 0.5).validate(-1.0, true).is_err());
        assert!(Schedule::power(1.0, 0.5).validate(-1.0, false).is_ok());
        assert!(Schedule::power(0.5, 0.25).validate(-1.0, false).is_err());
    }

    #[test]
    fn custom_schedule_integrates_numerically() {
        let s = Schedule::custom(|t| t * t, |t| 2.0 * t);
        assert!((s.integrated_beta(0.0, 3.0) - 9.0).abs() < 1e-10);
    }

    #[test]
    fn grid_includes_endpoints() {
        let g = SnapshotGrid::Geometric { first: 1.0, per_decade: 1 };
        assert_eq!(g.times(1000.0), vec![0.0, 1.0, 10.0, 100.0, 1000.0]);
        assert_eq!(SnapshotGrid::Explicit(vec![5.0, 2.0, 20.0]).times(10.0), vec![0.0, 2.0, 5.0, 10.0]);
    }

    #[test]
    fn zero_temperature_relaxes_to_uniform() {
        let land = ring(6, |i| i as f64);
        let lambda = spectral_gap(land.generator(), land.ell()).unwrap();
        let rho0 = Density::new(vec![0.2, 0.4, 1.0, 1.6, 1.8, 1.0], land.ell()).unwrap();
        let traj = integrate_homogeneous(&land, &fam(), 0.0, &rho0, 20.0 / lambda, &Controls::default()).unwrap();
        assert!(traj.final_density().as_slice().iter().all(|r| (r - 1.0).abs() <= 1e-6));
    }

    #[test]
    fn starting_at_minimizer_stays_put() {
        let land = ring20();
        let f = fam();
        let eta = solve_eta(&land, &f, 5.0).unwrap().eta;
        let traj = integrate_homogeneous(&land, &f, 5.0, &eta, 10.0, &Controls::default()).unwrap();
        for d in &traj.densities {
            assert!(d.as_slice().iter().zip(eta.as_slice()).all(|(a, b)| (a - b).abs() < 1e-9));
        }
    }

    #[test]
    fn constant_objective_keeps_uniform() {
        let land = ring(5, |_| 2.0);
        let sched = Schedule::power(1.0, 0.25);
        let traj = integrate_annealed(&land, &fam(), &sched, &Density::uniform(5), 100.0, &Controls::default()).unwrap();
        for (d, nu) in traj.densities.iter().zip(&traj.targets) {
            assert!(d.as_slice().iter().all(|r| (r - 1.0).abs() < 1e-12));
            assert!(nu.as_slice().iter().all(|r| (r - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn constant_schedule_is_bitwise_homogeneous() {
        let land = ring20();
        let f = fam();
        let ctl = Controls::default();
        let a = integrate_homogeneous(&land, &f, 3.0, &Density::uniform(20), 5.0, &ctl).unwrap();
        let b = integrate_annealed(&land, &f, &Schedule::Constant(3.0), &Density::uniform(20), 5.0, &ctl).unwrap();
        assert_eq!(a.densities, b.densities);
        assert_eq!(a.diagnostics, b.diagnostics);
    }

    #[test]
    fn homogeneous_flow_is_lyapunov_and_sandwiched() {
        let land = ring20();
        let f = fam();
        let traj = integrate_homogeneous(&land, &f, 5.0, &Density::uniform(20), 200.0, &Controls::default()).unwrap();
        assert!(traj.max_cost_increase.unwrap() <= 1e-10);
        for d in &traj.diagnostics {
            assert!(d.half_l2_sq <= d.gap_i + 1e-15, "{d:?}");
        }
        for w in traj.diagnostics.windows(2) {
            assert!(w[1].cost <= w[0].cost + 1e-10);
        }
    }

    #[test]
    fn energy_dissipation_matches_derivative() {
        let land = ring20();
        let f = fam();
        let ctl = Controls { record_steps: true, ..Controls::default() };
        let traj = integrate_homogeneous(&land, &f, 5.0, &Density::uniform(20), 20.0, &ctl).unwrap();
        let s = &traj.steps;
        let mut checked = 0;
        for k in 1..s.len() - 1 {
            let (h0, h1) = (s[k].t - s[k - 1].t, s[k + 1].t - s[k].t);
            // second-order derivative on a nonuniform grid
            let d = (-h1 / (h0 * (h0 + h1))) * s[k - 1].cost
                + ((h1 - h0) / (h0 * h1)) * s[k].cost
                + (h0 / (h1 * (h0 + h1))) * s[k + 1].cost;
            if s[k].gap_g > 1e-6 {
                assert!((d + s[k].gap_g).abs() <= 1e-3 * s[k].gap_g, "t={} d={d} g={}", s[k].t, s[k].gap_g);
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn halving_the_step_cap_changes_little() {
        let land = ring20();
        let f = fam();
        let coarse = Controls::default();
        let fine = Controls { cap_factor: 0.05, ..Controls::default() };
        let a = integrate_homogeneous(&land, &f, 5.0, &Density::uniform(20), 50.0, &coarse).unwrap();
        let b = integrate_homogeneous(&land, &f, 5.0, &Density::uniform(20), 50.0, &fine).unwrap();
        let diff = a.final_density().as_slice().iter().zip(b.final_density().as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-6, "{diff}");
    }

    #[test]
    fn annealed_diagnostics_respect_bound() {
        let land = ring20();
        let f = fam();
        let sched = Schedule::power(1.0, 0.25);
        let traj = integrate_annealed(&land, &f, &sched, &Density::uniform(20), 100.0, &Controls::default()).unwrap();
        assert!(traj.gap_bound_excess() <= 0.0);
        assert!(traj.floor_constant().is_finite());
        assert!(traj.max_cost_increase.is_none());
        let mass7 = traj.mass_on(&[7], land.ell());
        assert!(mass7.last().unwrap() > &0.05);
    }

    #[test]
    fn rate_fit_rejects_short_window() {
        let land = ring(3, |i| i as f64);
        let sched = Schedule::power(1.0, 0.25);
        let traj = integrate_annealed(&land, &fam(), &sched, &Density::uniform(3), 10.0, &Controls::default()).unwrap();
        assert!(matches!(convergence_rate_fit(&traj, (1.0, 10.0)), Err(Error::WindowTooShort(_))));
        assert!(matches!(convergence_rate_fit(&traj, (0.1, 100.0)), Err(Error::WindowTooShort(_))));
        assert!(convergence_rate_fit(&traj, (0.1, 10.0)).is_ok());
    }

    #[test]
    fn rate_targets() {
        let land = ring(3, |i| i as f64);
        let f2 = EntropyFamily::penalized(-2.0).unwrap();
        let sched = Schedule::power(1.0, 1.0 / 3.0);
        let traj = integrate_annealed(&land, &f2, &sched, &Density::uniform(3), 10.0, &Controls::default()).unwrap();
        let fit = convergence_rate_fit(&traj, (0.1, 10.0)).unwrap();
        assert!((fit.mass_deficit_target + 1.0 / 9.0).abs() < 1e-15);
        let traj = integrate_annealed(&land, &fam(), &Schedule::power(1.0, 0.25), &Density::uniform(3), 10.0, &Controls::default()).unwrap();
        let fit = convergence_rate_fit(&traj, (0.1, 10.0)).unwrap();
        assert!((fit.mass_deficit_target + 0.125).abs() < 1e-15);
        // alpha = kappa(-1) = 1/4: the gap exponent 2 alpha / kappa - 2 vanishes
        assert!(fit.gap_target.abs() < 1e-12);
        assert_eq!(fit.regime, Regime::AtKappa);
        let traj = integrate_annealed(&land, &fam(), &Schedule::power(1.0, 0.125), &Density::uniform(3), 10.0, &Controls::default()).unwrap();
        let fit = convergence_rate_fit(&traj, (0.1, 10.0)).unwrap();
        assert!((fit.gap_target + 1.0).abs() < 1e-12);
        assert_eq!(fit.regime, Regime::BelowKappa);
    }

    #[test]
    fn generic_integrator_solves_linear_chain() {
        // two-state chain with unit rates: p(t) = 1/2 + (p0 - 1/2) e^{-2t}
        let field = |_t: f64, y: &[f64], out: &mut [f64]| {
            out[0] = y[1] - y[0];
            out[1] = y[0] - y[1];
        };
        let out = integrate_field(field, vec![0.9, 0.1], &[1.0, 1.0], &[0.0, 1.0, 3.0], 0.01, &Controls::default()).unwrap();
        for (k, t) in [0.0f64, 1.0, 3.0].iter().enumerate() {
            assert!((out[k][0] - (0.5 + 0.4 * (-2.0 * t).exp())).abs() < 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn field_conserves_mass(seed in any::<u64>(), n in 2usize..=10, beta in 0.0f64..20.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let land = random_landscape(&mut rng, n, 2.0);
            let rho = random_density(&mut rng, land.ell());
            let f = rhs(&land, &fam(), beta, &rho);
            let total: f64 = f.iter().zip(land.ell()).map(|(a, b)| a * b).sum();
            let scale: f64 = f.iter().zip(land.ell()).map(|(a, b)| (a * b).abs()).sum();
            prop_assert!(total.abs() <= 1e-12 * scale.max(1.0));
        }

        #[test]
        fn short_runs_keep_invariants(seed in any::<u64>(), n in 2usize..=6, beta in 0.0f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let land = random_landscape(&mut rng, n, 2.0);
            let f = fam();
            let rho0 = random_density(&mut rng, land.ell());
            let ctl = Controls { grid: SnapshotGrid::Geometric { first: 0.05, per_decade: 5 }, ..Controls::default() };
            let traj = integrate_homogeneous(&land, &f, beta, &rho0, 5.0, &ctl).unwrap();
            prop_assert!(traj.max_cost_increase.unwrap() <= 1e-10);
            for (d, rho) in traj.diagnostics.iter().zip(&traj.densities) {
                let mass: f64 = rho.measure(land.ell()).iter().sum();
                prop_assert!((mass - 1.0).abs() <= 1e-8);
                prop_assert!(rho.min() > 0.0);
                prop_assert!(d.half_l2_sq <= d.gap_i * (1.0 + 1e-9) + 1e-15);
                prop_assert!((d.cost - cost(&land, &f, beta, rho)).abs() <= 1e-12 * d.cost.abs().max(1.0));
                prop_assert!((d.gap_g - gap_g(&land, &f, beta, rho)).abs() <= 1e-12 * d.gap_g.max(1.0));
            }
        }
    }
}
