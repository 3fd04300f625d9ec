//! Metropolis dynamics seen as a gradient descent: for every convex entropy the
//! descent of `H(mu) = sum phi(mu / pi) pi` in a matched Markov-Riemann
//! structure reproduces the linear Metropolis flow.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::entropy::EntropyFamily;
use crate::error::{Error, Result};
use crate::flow::{integrate_field, Controls};
use crate::functionals::{grad, EdgeField};
use crate::model::{check_detailed_balance, random_landscape, random_probability, spectral_gap, EnergyLandscape};

/// Base chain together with a positive target probability.
#[derive(Debug, Clone)]
pub struct MetropolisSetup {
    pub land: EnergyLandscape,
    pub target: Vec<f64>,
}

impl MetropolisSetup {
    pub fn new(land: EnergyLandscape, target: Vec<f64>) -> Result<Self> {
        if target.len() != land.n() {
            return Err(Error::Dimension { expected: land.n(), got: target.len() });
        }
        let total: f64 = target.iter().sum();
        if target.iter().any(|p| !(*p > 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::BadMeasure("target must be a positive probability".into()));
        }
        Ok(MetropolisSetup { land, target })
    }

    /// Target `ell e^{-beta U} / Z`.
    pub fn gibbs(land: EnergyLandscape, beta: f64) -> Result<Self> {
        let min = land.min_objective();
        let w: Vec<f64> = land.ell().iter().zip(land.objective()).map(|(l, u)| l * (-beta * (u - min)).exp()).collect();
        let z: f64 = w.iter().sum();
        let target = w.iter().map(|v| v / z).collect();
        MetropolisSetup::new(land, target)
    }
}

fn fill_diagonal(m: &mut DMatrix<f64>) {
    for x in 0..m.nrows() {
        m[(x, x)] = 0.0;
        let s: f64 = m.row(x).iter().sum();
        m[(x, x)] = -s;
    }
}

fn check_measure(mu: &[f64], n: usize) -> Result<()> {
    if mu.len() != n {
        return Err(Error::Dimension { expected: n, got: mu.len() });
    }
    if mu.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::BadMeasure("measure must be interior".into()));
    }
    Ok(())
}

/// `L(x,y) min(pi(y) ell(x) / (pi(x) ell(y)), 1)`.
pub fn metropolis_generator(setup: &MetropolisSetup) -> DMatrix<f64> {
    let land = &setup.land;
    let (ell, pi) = (land.ell(), &setup.target);
    let n = land.n();
    let mut m = DMatrix::zeros(n, n);
    for x in 0..n {
        for &(y, rate) in land.neighbors(x) {
            m[(x, y)] = rate * (pi[y] * ell[x] / (pi[x] * ell[y])).min(1.0);
        }
    }
    fill_diagonal(&mut m);
    m
}

/// `ell(x)/mu(x) L(x,y) min(pi/ell (x), pi/ell (y)) theta(mu(x)/pi(x), mu(y)/pi(y))`.
pub fn markov_riemann_map(setup: &MetropolisSetup, fam: &EntropyFamily, mu: &[f64]) -> Result<DMatrix<f64>> {
    let land = &setup.land;
    check_measure(mu, land.n())?;
    let (ell, pi) = (land.ell(), &setup.target);
    let n = land.n();
    let mut k = DMatrix::zeros(n, n);
    for x in 0..n {
        for &(y, rate) in land.neighbors(x) {
            let floor = (pi[x] / ell[x]).min(pi[y] / ell[y]);
            k[(x, y)] = ell[x] / mu[x] * rate * floor * fam.theta(mu[x] / pi[x], mu[y] / pi[y]);
        }
    }
    fill_diagonal(&mut k);
    Ok(k)
}

/// `sum phi(mu / pi) pi`.
pub fn h_phi(setup: &MetropolisSetup, fam: &EntropyFamily, mu: &[f64]) -> f64 {
    mu.iter().zip(&setup.target).map(|(m, p)| fam.phi(m / p) * p).sum()
}

/// Gradient of `H` in the structure: the exact form `d[phi'(mu / pi)]`.
pub fn functional_gradient_k(setup: &MetropolisSetup, fam: &EntropyFamily, mu: &[f64]) -> Result<EdgeField> {
    check_measure(mu, setup.land.n())?;
    let f: Vec<f64> = mu.iter().zip(&setup.target).map(|(m, p)| fam.phi_prime(m / p)).collect();
    Ok(grad(&f))
}

/// Generator `K(x,y) F_+(x,y)` for an antisymmetric field `F`.
pub fn field_generator(k: &DMatrix<f64>, field: &EdgeField) -> DMatrix<f64> {
    let n = k.nrows();
    let mut m = DMatrix::from_fn(n, n, |x, y| if x == y { 0.0 } else { k[(x, y)] * field.get(x, y).max(0.0) });
    fill_diagonal(&mut m);
    m
}

/// `1/2 sum mu(x) K(x,y) F(x,y) G(x,y)`.
pub fn inner_mu_k(mu: &[f64], k: &DMatrix<f64>, f: &EdgeField, g: &EdgeField) -> f64 {
    let n = mu.len();
    let mut acc = 0.0;
    for x in 0..n {
        for y in 0..n {
            if x != y {
                acc += mu[x] * k[(x, y)] * f.get(x, y) * g.get(x, y);
            }
        }
    }
    0.5 * acc
}

/// Row vector `mu G`.
pub fn push_forward(mu: &[f64], gen: &DMatrix<f64>) -> Vec<f64> {
    (0..mu.len()).map(|z| (0..mu.len()).map(|x| mu[x] * gen[(x, z)]).sum()).collect()
}

/// Time derivative of the gradient descent of `H`: `mu K_{mu, -grad H(mu)}`.
pub fn descent_field(setup: &MetropolisSetup, fam: &EntropyFamily, mu: &[f64]) -> Result<Vec<f64>> {
    let k = markov_riemann_map(setup, fam, mu)?;
    let g = functional_gradient_k(setup, fam, mu)?;
    let neg = EdgeField::new(-g.values().clone());
    Ok(push_forward(mu, &field_generator(&k, &neg)))
}

/// Largest `|mu[K_{mu,-grad H}[1_z]] - mu[L_pi[1_z]]|` over states `z`.
pub fn descent_residual(setup: &MetropolisSetup, fam: &EntropyFamily, mu: &[f64]) -> Result<f64> {
    let a = descent_field(setup, fam, mu)?;
    let b = push_forward(mu, &metropolis_generator(setup));
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, Serialize)]
pub struct PropReport {
    pub trials: usize,
    pub max_residual: f64,
    pub reversibility: f64,
    pub pass: bool,
}

/// Random interior measures for a fixed setup and entropy.
pub fn verify_prop_a3(setup: &MetropolisSetup, fam: &EntropyFamily, trials: usize, seed: u64) -> Result<PropReport> {
    let n = setup.land.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_residual: f64 = 0.0;
    let mut reversibility: f64 = 0.0;
    for _ in 0..trials.max(1) {
        let mu = random_probability(&mut rng, n, 1.0, 1e-3);
        max_residual = max_residual.max(descent_residual(setup, fam, &mu)?);
        let k = markov_riemann_map(setup, fam, &mu)?;
        reversibility = reversibility.max(crate::generators::reversibility_residual(&k, &mu));
    }
    Ok(PropReport { trials: trials.max(1), max_residual, reversibility, pass: max_residual <= 1e-10 && reversibility <= 1e-12 })
}

/// The entropies exercised by the randomized suite.
pub fn suite_families() -> Vec<EntropyFamily> {
    let mut out = vec![EntropyFamily::boltzmann()];
    for m in [-0.5, -1.0, -2.0] {
        out.push(EntropyFamily::penalized(m).expect("negative exponent"));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub draws: usize,
    pub max_residual: f64,
    pub max_path_distance: f64,
    pub pass: bool,
}

/// One draw of the randomized suite: `n` in `3..=8`, entropy cycling through
/// [`suite_families`]. Returns the field residual and, when `with_path`, the
/// pathwise distance.
pub fn metropolis_draw(seed: u64, index: usize, with_path: bool) -> Result<(f64, f64)> {
    let fams = suite_families();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
    let n = rng.random_range(3..=8);
    let land = random_landscape(&mut rng, n, 2.0);
    let target = random_probability(&mut rng, n, 1.0, 1e-3);
    let setup = MetropolisSetup::new(land, target)?;
    let mu = random_probability(&mut rng, n, 1.0, 1e-3);
    let fam = &fams[index % fams.len()];
    let residual = descent_residual(&setup, fam, &mu)?;
    let path = if with_path { pathwise_distance(&setup, fam, &mu)? } else { 0.0 };
    Ok((residual, path))
}

/// Aggregate of [`metropolis_draw`] over `draws`; the pathwise check runs on the
/// first `path_draws` draws.
pub fn metropolis_suite(draws: usize, path_draws: usize, seed: u64) -> Result<SuiteReport> {
    let results: Vec<Result<(f64, f64)>> = (0..draws).into_par_iter().map(|i| metropolis_draw(seed, i, i < path_draws)).collect();
    let mut max_residual: f64 = 0.0;
    let mut max_path: f64 = 0.0;
    for r in results {
        let (a, b) = r?;
        max_residual = max_residual.max(a);
        max_path = max_path.max(b);
    }
    Ok(SuiteReport { draws, max_residual, max_path_distance: max_path, pass: max_residual <= 1e-10 && max_path <= 1e-8 })
}

/// Sup distance between the gradient-descent flow and the Metropolis flow on
/// `[0, 10 / lambda(L_pi)]`, both integrated by the same adaptive scheme.
pub fn pathwise_distance(setup: &MetropolisSetup, fam: &EntropyFamily, mu0: &[f64]) -> Result<f64> {
    let n = setup.land.n();
    let lp = metropolis_generator(setup);
    let lambda = spectral_gap(&lp, &setup.target)?;
    let horizon = 10.0 / lambda;
    let times: Vec<f64> = (0..=50).map(|k| horizon * k as f64 / 50.0).collect();
    let rate = (0..n).map(|x| -lp[(x, x)]).fold(0.0, f64::max);
    let max_step = 0.1 / rate;
    let ctl = Controls::default();
    let ones = vec![1.0; n];
    let linear = |_t: f64, y: &[f64], out: &mut [f64]| {
        for z in 0..n {
            out[z] = (0..n).map(|x| y[x] * lp[(x, z)]).sum();
        }
    };
    let a = integrate_field(linear, mu0.to_vec(), &ones, &times, max_step, &ctl)?;
    let mut failure = None;
    let descent = |_t: f64, y: &[f64], out: &mut [f64]| match descent_field(setup, fam, y) {
        Ok(v) => out.copy_from_slice(&v),
        Err(e) => {
            failure.get_or_insert(e);
            out.iter_mut().for_each(|o| *o = 0.0);
        }
    };
    let b = integrate_field(descent, mu0.to_vec(), &ones, &times, max_step, &ctl)?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(a.iter().zip(&b).flat_map(|(p, q)| p.iter().zip(q).map(|(u, v)| (u - v).abs())).fold(0.0, f64::max))
}

/// Checks that `L_pi` is reversible with respect to the target.
pub fn check_metropolis_reversible(setup: &MetropolisSetup) -> Result<()> {
    check_detailed_balance(&metropolis_generator(setup), &setup.target)
}
