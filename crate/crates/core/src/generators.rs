//! Density-dependent jump generators whose time marginals follow the
//! gradient flow, plus the linearized and comparison generators used by the
//! functional inequalities.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::entropy::{negative_part, EntropyFamily};
use crate::error::{Error, Result};
use crate::flow::{rhs, Schedule};
use crate::model::{check_detailed_balance, Density, EnergyLandscape};
use crate::stationary::{solve_eta, MINIMIZER_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// Jumps only down the local force; vanishes at the minimizer.
    First,
    /// Base chain plus downhill jumps driven by the objective; always irreducible.
    Second,
    /// `(1 - a) first + a second`.
    Hybrid(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearGenerator {
    pub matrix: DMatrix<f64>,
    pub kind: GeneratorKind,
}

fn fill_diagonal(m: &mut DMatrix<f64>) {
    for x in 0..m.nrows() {
        m[(x, x)] = 0.0;
        let s: f64 = m.row(x).iter().sum();
        m[(x, x)] = -s;
    }
}

/// Off-diagonal rate of the first generator from `x` to `y`.
#[inline]
pub(crate) fn first_rate(rate: f64, beta: f64, du: f64, rx: f64, ry: f64, th: f64) -> f64 {
    rate * negative_part(th * beta * du / rx + ry / rx - 1.0)
}

/// Off-diagonal rate of the second generator from `x` to `y`.
#[inline]
pub(crate) fn second_rate(rate: f64, beta: f64, du: f64, rx: f64, th: f64) -> f64 {
    rate * (1.0 + th / rx * beta * negative_part(du))
}

/// `L(x,y) (theta(rho(x),rho(y)) beta (U(y)-U(x)) / rho(x) + rho(y)/rho(x) - 1)_-`.
pub fn first_generator(land: &EnergyLandscape, fam: &EntropyFamily, beta: f64, rho: &Density) -> NonlinearGenerator {
    let n = land.n();
    let u = land.objective();
    let mut m = DMatrix::zeros(n, n);
    for x in 0..n {
        for &(y, rate) in land.neighbors(x) {
            let th = fam.theta(rho[x], rho[y]);
            m[(x, y)] = first_rate(rate, beta, u[y] - u[x], rho[x], rho[y], th);
        }
    }
    fill_diagonal(&mut m);
    NonlinearGenerator { matrix: m, kind: GeneratorKind::First }
}

/// `L(x,y) (1 + theta(rho(x),rho(y)) / rho(x) * beta (U(y)-U(x))_-)`.
pub fn second_generator(land: &EnergyLandscape, fam: &EntropyFamily, beta: f64, rho: &Density) -> NonlinearGenerator {
    let n = land.n();
    let u = land.objective();
    let mut m = DMatrix::zeros(n, n);
    for x in 0..n {
        for &(y, rate) in land.neighbors(x) {
            let th = fam.theta(rho[x], rho[y]);
            m[(x, y)] = second_rate(rate, beta, u[y] - u[x], rho[x], th);
        }
    }
    fill_diagonal(&mut m);
    NonlinearGenerator { matrix: m, kind: GeneratorKind::Second }
}

pub fn hybrid_generator(
    land: &EnergyLandscape,
    fam: &EntropyFamily,
    beta: f64,
    rho: &Density,
    a: f64,
) -> Result<NonlinearGenerator> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::Domain(format!("hybrid weight must lie in [0, 1], got {a}")));
    }
    let first = first_generator(land, fam, beta, rho);
    let second = second_generator(land, fam, beta, rho);
    let matrix = first.matrix * (1.0 - a) + second.matrix * a;
    Ok(NonlinearGenerator { matrix, kind: GeneratorKind::Hybrid(a) })
}

pub fn nonlinear_generator(
    kind: GeneratorKind,
    land: &EnergyLandscape,
    fam: &EntropyFamily,
    beta: f64,
    rho: &Density,
) -> Result<NonlinearGenerator> {
    match kind {
        GeneratorKind::First => Ok(first_generator(land, fam, beta, rho)),
        GeneratorKind::Second => Ok(second_generator(land, fam, beta, rho)),
        GeneratorKind::Hybrid(a) => hybrid_generator(land, fam, beta, rho, a),
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RepresentationResidual {
    pub first: f64,
    pub second: f64,
    pub hybrid: f64,
}

impl RepresentationResidual {
    pub fn max(&self) -> f64 {
        self.first.max(self.second).max(self.hybrid)
    }
}

/// `max_z |ell(z) F(rho)(z) - (mu G)(z)|` for each generator kind, where `F` is
/// the flow vector field and `mu = rho ell`. The hybrid uses weight 1/2.
pub fn representation_residual(
    land: &EnergyLandscape,
    fam: &EntropyFamily,
    beta: f64,
    rho: &Density,
) -> RepresentationResidual {
    let field = rhs(land, fam, beta, rho);
    let mu = rho.measure(land.ell());
    let ell = land.ell();
    let residual = |g: &DMatrix<f64>| {
        (0..land.n())
            .map(|z| {
                let push: f64 = (0..land.n()).map(|x| mu[x] * g[(x, z)]).sum();
                (ell[z] * field[z] - push).abs()
            })
            .fold(0.0, f64::max)
    };
    RepresentationResidual {
        first: residual(&first_generator(land, fam, beta, rho).matrix),
        second: residual(&second_generator(land, fam, beta, rho).matrix),
        hybrid: residual(&hybrid_generator(land, fam, beta, rho, 0.5).expect("valid weight").matrix),
    }
}

/// Linearization of the flow at the minimizer: the generator
/// `phi''(eta(x)) L(x,y) theta(eta(x), eta(y))` and its reversible probability
/// `ell / phi''(eta)` normalized.
pub fn linearized_generator(land: &EnergyLandscape, fam: &EntropyFamily, beta: f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let eta = solve_eta(land, fam, beta)?.eta;
    let n = land.n();
    let curv: Vec<f64> = eta.as_slice().iter().map(|e| fam.phi_second(*e)).collect();
    let mut q = DMatrix::zeros(n, n);
    for x in 0..n {
        for &(y, rate) in land.neighbors(x) {
            q[(x, y)] = curv[x] * rate * fam.theta(eta[x], eta[y]);
        }
    }
    fill_diagonal(&mut q);
    let mut weight: Vec<f64> = land.ell().iter().zip(&curv).map(|(l, c)| l / c).collect();
    let total: f64 = weight.iter().sum();
    weight.iter_mut().for_each(|w| *w /= total);
    Ok((q, weight))
}

/// Which target density enters the denominator of the comparison generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ComparisonDenominator {
    /// `theta(rho(x), target(x))`: the weight below is reversible.
    SameState,
    /// `theta(rho(x), target(y))`: not reversible in general; kept for comparison.
    TargetState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonPair {
    pub matrix: DMatrix<f64>,
    /// `ell(x) theta(rho(x), target(x))`, not normalized.
    pub weight: Vec<f64>,
    pub total_mass: f64,
}

/// Generator `L(x,y) theta(rho(x),rho(y)) / theta(rho(x), target(x))` with weight
/// `ell(x) theta(rho(x), target(x))`, so that `weight(x) K(x,y) = ell(x) L(x,y) theta(rho(x),rho(y))`.
pub fn comparison_generator(land: &EnergyLandscape, fam: &EntropyFamily, rho: &Density, target: &Density) -> ComparisonPair {
    comparison_generator_with(land, fam, rho, target, ComparisonDenominator::SameState)
}

pub fn comparison_generator_with(
    land: &EnergyLandscape,
    fam: &EntropyFamily,
    rho: &Density,
    target: &Density,
    denominator: ComparisonDenominator,
) -> ComparisonPair {
    let n = land.n();
    let mut k = DMatrix::zeros(n, n);
    for x in 0..n {
        for &(y, rate) in land.neighbors(x) {
            let den = match denominator {
                ComparisonDenominator::SameState => fam.theta(rho[x], target[x]),
                ComparisonDenominator::TargetState => fam.theta(rho[x], target[y]),
            };
            k[(x, y)] = rate * fam.theta(rho[x], rho[y]) / den;
        }
    }
    fill_diagonal(&mut k);
    let weight: Vec<f64> = (0..n).map(|x| land.ell()[x] * fam.theta(rho[x], target[x])).collect();
    let total_mass = weight.iter().sum();
    ComparisonPair { matrix: k, weight, total_mass }
}

/// Largest detailed-balance residual `|w(x)G(x,y) - w(y)G(y,x)|`.
pub fn reversibility_residual(gen: &DMatrix<f64>, weight: &[f64]) -> f64 {
    let n = gen.nrows();
    let mut worst: f64 = 0.0;
    for x in 0..n {
        for y in (x + 1)..n {
            worst = worst.max((weight[x] * gen[(x, y)] - weight[y] * gen[(y, x)]).abs());
        }
    }
    worst
}

pub fn is_reversible(gen: &DMatrix<f64>, weight: &[f64]) -> bool {
    check_detailed_balance(gen, weight).is_ok()
}

/// Predicted large-time behaviour of a rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LimitClass {
    Finite(f64),
    PlusInfinity,
    Indeterminate,
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeLimit {
    pub from: usize,
    pub to: usize,
    pub second_current: f64,
    pub first_current: f64,
    pub second_limit: LimitClass,
    pub first_limit: LimitClass,
}

/// Per-edge limits of both generators along an annealing schedule, evaluated
/// against the current rates at time `t` and density `rho`.
pub fn large_time_limits(
    land: &EnergyLandscape,
    fam: &EntropyFamily,
    schedule: &Schedule,
    t: f64,
    rho: &Density,
) -> Vec<EdgeLimit> {
    let beta = schedule.beta(t);
    let first = first_generator(land, fam, beta, rho).matrix;
    let second = second_generator(land, fam, beta, rho).matrix;
    let u = land.objective();
    let min_u = land.min_objective();
    let tol = MINIMIZER_TOL * min_u.abs().max(1.0);
    let mut out = Vec::new();
    for x in 0..land.n() {
        for &(y, rate) in land.neighbors(x) {
            let (ux, uy) = (u[x] - min_u, u[y] - min_u);
            let (second_limit, first_limit) = if u[y] >= u[x] {
                // uphill or level: the drift term vanishes
                (LimitClass::Finite(rate), LimitClass::Finite(0.0))
            } else if uy <= tol {
                (LimitClass::PlusInfinity, LimitClass::Indeterminate)
            } else {
                (LimitClass::Finite(rate * (uy / ux).powf(1.0 / (fam.m - 1.0))), LimitClass::Finite(0.0))
            };
            out.push(EdgeLimit {
                from: x,
                to: y,
                second_current: second[(x, y)],
                first_current: first[(x, y)],
                second_limit,
                first_limit,
            });
        }
    }
    out
}
