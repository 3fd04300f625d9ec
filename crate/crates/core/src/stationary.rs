//! Minimizer of the penalized cost at fixed inverse temperature.
//!
//! The minimizer solves `beta U(x) + phi'(eta(x)) = c` for a constant `c`
//! fixed by normalization, so `eta = g(c - beta U)` with `g` the inverse of
//! `phi'`. Finding `c` is a one-dimensional monotone root problem.

use serde::Serialize;

use crate::entropy::EntropyFamily;
use crate::error::{Error, Result};
use crate::model::{minimizer_set, osc, Density, EnergyLandscape};

/// Tolerance used to decide membership in the set of global minimizers.
pub const MINIMIZER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryProfile {
    pub beta: f64,
    pub c: f64,
    pub eta: Density,
    /// `ell * eta`
    pub zeta: Vec<f64>,
}

fn mass_at(land: &EnergyLandscape, fam: &EntropyFamily, beta: f64, c: f64) -> (f64, f64) {
    let ell = land.ell();
    let u = land.objective();
    let mut value = 0.0;
    let mut slope = 0.0;
    for x in 0..land.n() {
        let r = fam.g_inverse(c - beta * u[x]);
        value += ell[x] * r;
        slope += ell[x] / fam.phi_second(r);
    }
    (value - 1.0, slope)
}

/// Normalization constant: the root of `c -> sum ell g(c - beta U) - 1`.
pub fn solve_c(land: &EnergyLandscape, fam: &EntropyFamily, beta: f64) -> Result<f64> {
    fam.require_penalized()?;
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::Domain(format!("beta must be finite and nonnegative, got {beta}")));
    }
    let ell_min = land.ell_min();
    let mut lo = fam.phi_prime(ell_min) + beta * land.min_objective() - 1.0;
    let mut hi = beta * land.max_objective() + fam.phi_prime(1.0 / ell_min) + 1.0;
    let mut widen = 1.0;
    for _ in 0..60 {
        if mass_at(land, fam, beta, lo).0 < 0.0 && mass_at(land, fam, beta, hi).0 > 0.0 {
            return Ok(bracketed_newton(land, fam, beta, lo, hi));
        }
        widen *= 2.0;
        lo -= widen;
        hi += widen;
    }
    Err(Error::NoBracket)
}

fn bracketed_newton(land: &EnergyLandscape, fam: &EntropyFamily, beta: f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut c = 0.5 * (lo + hi);
    let mut best = (f64::INFINITY, c);
    for _ in 0..400 {
        let (f, df) = mass_at(land, fam, beta, c);
        if f.abs() < best.0 {
            best = (f.abs(), c);
        }
        if f == 0.0 {
            return c;
        }
        if f < 0.0 {
            lo = c;
        } else {
            hi = c;
        }
        if hi - lo <= 4.0 * f64::EPSILON * c.abs().max(1.0) {
            break;
        }
        let newton = c - f / df;
        c = if newton > lo && newton < hi && df > 0.0 { newton } else { 0.5 * (lo + hi) };
        if f.abs() <= 1e-15 && (newton - c).abs() <= f64::EPSILON * c.abs().max(1.0) {
            break;
        }
    }
    best.1
}

/// The unique minimizer of the penalized cost at `beta`.
pub fn solve_eta(land: &EnergyLandscape, fam: &EntropyFamily, beta: f64) -> Result<StationaryProfile> {
    let c = solve_c(land, fam, beta)?;
    let u = land.objective();
    let rho: Vec<f64> = u.iter().map(|ux| fam.g_inverse(c - beta * ux)).collect();
    let zeta = rho.iter().zip(land.ell()).map(|(r, l)| r * l).collect();
    let eta = Density::new(rho, land.ell())?;
    Ok(StationaryProfile { beta, c, eta, zeta })
}

/// Reference measure restricted to the global minimizers and renormalized.
pub fn limit_measure(land: &EnergyLandscape) -> Vec<f64> {
    let set = minimizer_set(land, MINIMIZER_TOL * land.min_objective().abs().max(1.0));
    let ell = land.ell();
    let total: f64 = set.iter().map(|&x| ell[x]).sum();
    let mut out = vec![0.0; land.n()];
    for &x in &set {
        out[x] = ell[x] / total;
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct OffMinimizerTrack {
    pub state: usize,
    /// `beta * eta_beta(x)^(1-m)` along the grid.
    pub scaled: Vec<f64>,
    pub target: f64,
    /// Richardson extrapolation in `1/beta` from the last two grid points.
    pub extrapolated: f64,
    pub relative_error: f64,
    pub monotone: bool,
    /// Lower bound `eta^(1-m) >= 1/(beta (1-m) osc U + 1)` at every grid point.
    pub lower_bound_holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimizerTrack {
    pub state: usize,
    pub eta: Vec<f64>,
    pub nondecreasing: bool,
    pub at_least_one: bool,
    /// `1 / sum_{M(U)} ell`
    pub limit: f64,
    pub distance_to_limit: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticsReport {
    pub betas: Vec<f64>,
    pub off_minimizers: Vec<OffMinimizerTrack>,
    pub minimizers: Vec<MinimizerTrack>,
    /// Finite-difference slopes of `c(beta)` between grid points.
    pub c_slopes: Vec<f64>,
    pub c_slope_bound_holds: bool,
    /// All off-minimizer tracks within 5% of the target at the largest `beta`.
    pub pass: bool,
}

/// Tracks the large-`beta` behaviour of `eta_beta` along an increasing grid.
pub fn eta_asymptotics_check(land: &EnergyLandscape, fam: &EntropyFamily, beta_grid: &[f64]) -> Result<AsymptoticsReport> {
    if beta_grid.is_empty() || beta_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("beta grid must be nonempty and increasing".into()));
    }
    let profiles = beta_grid.iter().map(|&b| solve_eta(land, fam, b)).collect::<Result<Vec<_>>>()?;
    let exponent = 1.0 - fam.m;
    let min_u = land.min_objective();
    let osc_u = osc(land.objective());
    let minimizers = minimizer_set(land, MINIMIZER_TOL * min_u.abs().max(1.0));
    let mass_min: f64 = minimizers.iter().map(|&x| land.ell()[x]).sum();

    let mut off = Vec::new();
    let mut on = Vec::new();
    for x in 0..land.n() {
        let etas: Vec<f64> = profiles.iter().map(|p| p.eta[x]).collect();
        if minimizers.contains(&x) {
            let limit = 1.0 / mass_min;
            on.push(MinimizerTrack {
                state: x,
                nondecreasing: etas.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-13)),
                at_least_one: etas.iter().all(|&e| e >= 1.0 - 1e-13),
                distance_to_limit: etas.iter().map(|e| (e - limit).abs()).collect(),
                eta: etas,
                limit,
            });
            continue;
        }
        let scaled: Vec<f64> = beta_grid.iter().zip(&etas).map(|(b, e)| b * e.powf(exponent)).collect();
        let target = 1.0 / (exponent * (land.objective()[x] - min_u));
        let k = scaled.len();
        let extrapolated = if k >= 2 {
            let (b1, b2) = (beta_grid[k - 2], beta_grid[k - 1]);
            let (s1, s2) = (scaled[k - 2], scaled[k - 1]);
            // s = s_inf + a / beta
            (s2 * b2 - s1 * b1) / (b2 - b1)
        } else {
            scaled[0]
        };
        let last = scaled[k - 1];
        let diffs: Vec<f64> = scaled.iter().map(|s| (s - target).abs()).collect();
        off.push(OffMinimizerTrack {
            state: x,
            target,
            extrapolated,
            relative_error: (last - target).abs() / target,
            monotone: diffs.windows(2).all(|w| w[1] <= w[0]),
            lower_bound_holds: beta_grid
                .iter()
                .zip(&etas)
                .all(|(b, e)| e.powf(exponent) >= (1.0 - 1e-12) / (b * exponent * osc_u + 1.0)),
            scaled,
        });
    }
    let c_slopes: Vec<f64> = profiles.windows(2).map(|w| (w[1].c - w[0].c) / (w[1].beta - w[0].beta)).collect();
    let c_slope_bound_holds = c_slopes.iter().all(|s| *s >= min_u - 1e-9 * min_u.abs().max(1.0));
    let pass = off.iter().all(|t| t.relative_error <= 0.05);
    Ok(AsymptoticsReport {
        betas: beta_grid.to_vec(),
        off_minimizers: off,
        minimizers: on,
        c_slopes,
        c_slope_bound_holds,
        pass,
    })
}
