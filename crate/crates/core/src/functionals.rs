//! Discrete calculus on the edges of a landscape, the penalized cost and the
//! two gap functionals used to track convergence.

use nalgebra::DMatrix;

use crate::entropy::EntropyFamily;
use crate::error::{Error, Result};
use crate::model::{Density, EnergyLandscape, STRUCT_TOL};

/// Tolerance on the spread of `beta U + phi'(eta)` accepted as a minimizer.
pub const FIRST_ORDER_TOL: f64 = 1e-8;

/// Dense `n x n` field on ordered pairs of states, zero on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField(DMatrix<f64>);

impl EdgeField {
    pub fn new(values: DMatrix<f64>) -> Self {
        let mut values = values;
        values.fill_diagonal(0.0);
        Self(values)
    }

    /// Field that must be antisymmetric.
    pub fn form(values: DMatrix<f64>) -> Result<Self> {
        let n = values.nrows();
        for x in 0..n {
            for y in (x + 1)..n {
                let (a, b) = (values[(x, y)], values[(y, x)]);
                if (a + b).abs() > STRUCT_TOL * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::NotAntisymmetric(x, y));
                }
            }
        }
        Ok(Self::new(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0[(x, y)]
    }

    pub fn is_antisymmetric(&self, tol: f64) -> bool {
        let n = self.n();
        (0..n).all(|x| (0..n).all(|y| (self.0[(x, y)] + self.0[(y, x)]).abs() <= tol))
    }
}

/// `grad f (x, y) = f(y) - f(x)`.
pub fn grad(f: &[f64]) -> EdgeField {
    let n = f.len();
    EdgeField(DMatrix::from_fn(n, n, |x, y| f[y] - f[x]))
}

/// `div F (x) = 1/2 sum_y gen(x,y) (F(x,y) - F(y,x))`.
pub fn divergence(gen: &DMatrix<f64>, field: &EdgeField) -> Vec<f64> {
    let n = gen.nrows();
    (0..n)
        .map(|x| {
            0.5 * (0..n)
                .filter(|&y| y != x)
                .map(|y| gen[(x, y)] * (field.get(x, y) - field.get(y, x)))
                .sum::<f64>()
        })
        .collect()
}

pub fn inner_l2(measure: &[f64], f: &[f64], g: &[f64]) -> f64 {
    measure.iter().zip(f).zip(g).map(|((m, a), b)| m * a * b).sum()
}

/// `1/2 sum_{x != y} ell(x) L(x,y) F(x,y) G(x,y)`.
pub fn inner_edge(land: &EnergyLandscape, f: &EdgeField, g: &EdgeField) -> f64 {
    let ell = land.ell();
    let mut acc = 0.0;
    for x in 0..land.n() {
        for &(y, rate) in land.neighbors(x) {
            acc += ell[x] * rate * f.get(x, y) * g.get(x, y);
        }
    }
    0.5 * acc
}

/// Edge product weighted by the mobility at `rho`.
pub fn inner_rho(land: &EnergyLandscape, fam: &EntropyFamily, rho: &Density, f: &EdgeField, g: &EdgeField) -> f64 {
    let ell = land.ell();
    let mut acc = 0.0;
    for x in 0..land.n() {
        for &(y, rate) in land.neighbors(x) {
            acc += ell[x] * rate * fam.theta(rho[x], rho[y]) * f.get(x, y) * g.get(x, y);
        }
    }
    0.5 * acc
}

/// Entropy `sum phi(rho) ell`.
pub fn entropy(land: &EnergyLandscape, fam: &EntropyFamily, rho: &[f64]) -> f64 {
    rho.iter().zip(land.ell()).map(|(r, l)| fam.phi(*r) * l).sum()
}

/// `beta sum U rho ell + sum phi(rho) ell`.
pub fn cost(land: &EnergyLandscape, fam: &EntropyFamily, beta: f64, rho: &Density) -> f64 {
    cost_of(land, fam, beta, rho.as_slice())
}

pub(crate) fn cost_of(land: &EnergyLandscape, fam: &EntropyFamily, beta: f64, rho: &[f64]) -> f64 {
    let ell = land.ell();
    let u = land.objective();
    let mut acc = 0.0;
    for x in 0..land.n() {
        acc += ell[x] * (beta * u[x] * rho[x] + fam.phi(rho[x]));
    }
    acc
}

/// Largest deviation of `beta U + phi'(eta)` from its mean.
pub fn first_order_spread(land: &EnergyLandscape, fam: &EntropyFamily, beta: f64, eta: &[f64]) -> f64 {
    let vals: Vec<f64> = land.objective().iter().zip(eta).map(|(u, e)| beta * u + fam.phi_prime(*e)).collect();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// Bregman gap `sum ell (phi(rho) - phi(eta) - phi'(eta)(rho - eta))` to the minimizer `eta`.
pub fn gap_i(land: &EnergyLandscape, fam: &EntropyFamily, beta: f64, rho: &Density, eta: &Density) -> Result<f64> {
    let spread = first_order_spread(land, fam, beta, eta.as_slice());
    let scale = land.objective().iter().map(|u| (beta * u).abs()).fold(1.0, f64::max);
    if !(spread <= FIRST_ORDER_TOL * scale) {
        return Err(Error::NotMinimizer { spread });
    }
    Ok(bregman_gap(land, fam, rho.as_slice(), eta.as_slice()))
}

pub(crate) fn bregman_gap(land: &EnergyLandscape, fam: &EntropyFamily, rho: &[f64], eta: &[f64]) -> f64 {
    let ell = land.ell();
    let mut acc = 0.0;
    for x in 0..land.n() {
        acc += ell[x] * fam.bregman(rho[x], eta[x]);
    }
    acc
}

/// Same gap as `cost(rho) - cost(eta)`; loses precision near `eta`.
pub fn gap_i_cost_difference(land: &EnergyLandscape, fam: &EntropyFamily, beta: f64, rho: &Density, eta: &Density) -> f64 {
    cost(land, fam, beta, rho) - cost(land, fam, beta, eta)
}

/// Dissipation `1/2 sum ell L theta(rho(x), rho(y)) (grad[beta U + phi'(rho)])^2`.
pub fn gap_g(land: &EnergyLandscape, fam: &EntropyFamily, beta: f64, rho: &Density) -> f64 {
    gap_g_of(land, fam, beta, rho.as_slice())
}

pub(crate) fn gap_g_of(land: &EnergyLandscape, fam: &EntropyFamily, beta: f64, rho: &[f64]) -> f64 {
    let ell = land.ell();
    let u = land.objective();
    let dphi: Vec<f64> = rho.iter().map(|r| fam.phi_prime(*r)).collect();
    let mut acc = 0.0;
    for x in 0..land.n() {
        for &(y, rate) in land.neighbors(x) {
            let th = fam.theta_from_primes(rho[x], rho[y], dphi[x], dphi[y]);
            let force = beta * (u[y] - u[x]) + dphi[y] - dphi[x];
            acc += ell[x] * rate * th * force * force;
        }
    }
    0.5 * acc
}

/// Functionals whose gradient in the mobility metric is an exact form.
#[derive(Debug, Clone, Copy)]
pub enum Functional<'a> {
    /// `rho -> sum R rho ell`.
    Potential(&'a [f64]),
    /// `rho -> sum f(rho) ell` with `f` from the given family.
    Entropy(&'a EntropyFamily),
}

impl Functional<'_> {
    pub fn value(&self, land: &EnergyLandscape, rho: &[f64]) -> f64 {
        match self {
            Functional::Potential(r) => inner_l2(land.ell(), r, rho),
            Functional::Entropy(fam) => entropy(land, fam, rho),
        }
    }
}

/// Gradient field: `grad R` for a potential, `grad[f'(rho)]` for an entropy.
pub fn functional_gradient(kind: Functional<'_>, rho: &Density) -> EdgeField {
    match kind {
        Functional::Potential(r) => grad(r),
        Functional::Entropy(fam) => {
            let d: Vec<f64> = rho.as_slice().iter().map(|r| fam.phi_prime(*r)).collect();
            grad(&d)
        }
    }
}

/// Field `theta(rho(x), rho(y)) F(x, y)`.
pub fn mobility_weighted(fam: &EntropyFamily, rho: &Density, f: &EdgeField) -> EdgeField {
    let n = f.n();
    EdgeField(DMatrix::from_fn(n, n, |x, y| if x == y { 0.0 } else { fam.theta(rho[x], rho[y]) * f.get(x, y) }))
}
