//! Finite energy landscapes: a reversible generator on `0..n`, its reversible
//! probability measure and an objective to minimize.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

/// Structural tolerance (row sums, detailed balance, antisymmetry).
pub const STRUCT_TOL: f64 = 1e-12;
/// Tolerance on total mass of a density.
pub const MASS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLandscape {
    generator: DMatrix<f64>,
    ell: Vec<f64>,
    objective: Vec<f64>,
    // off-diagonal positive entries per row
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl EnergyLandscape {
    /// Validates a generator given as a dense matrix. The diagonal of `generator`
    /// is ignored and refilled so that rows sum to zero.
    pub fn from_matrix(generator: DMatrix<f64>, ell: Vec<f64>, objective: Vec<f64>) -> Result<Self> {
        let n = generator.nrows();
        if generator.ncols() != n {
            return Err(Error::Dimension { expected: n, got: generator.ncols() });
        }
        if n < 2 {
            return Err(Error::Domain(format!("state space needs at least 2 states, got {n}")));
        }
        if ell.len() != n {
            return Err(Error::Dimension { expected: n, got: ell.len() });
        }
        if objective.len() != n {
            return Err(Error::Dimension { expected: n, got: objective.len() });
        }
        check_probability(&ell)?;
        if objective.iter().any(|u| !u.is_finite()) {
            return Err(Error::Domain("objective must be finite".into()));
        }
        let mut gen = generator;
        for x in 0..n {
            let mut off = 0.0;
            for y in 0..n {
                if x == y {
                    continue;
                }
                let r = gen[(x, y)];
                if !(r >= 0.0) || !r.is_finite() {
                    return Err(Error::Domain(format!("rate L({x},{y}) = {r} is not a finite nonnegative number")));
                }
                off += r;
            }
            gen[(x, x)] = -off;
        }
        check_strongly_connected(&gen)?;
        check_detailed_balance(&gen, &ell)?;
        let neighbors = (0..n)
            .map(|x| (0..n).filter(|&y| y != x && gen[(x, y)] > 0.0).map(|y| (y, gen[(x, y)])).collect())
            .collect();
        Ok(Self { generator: gen, ell, objective, neighbors })
    }

    pub fn n(&self) -> usize {
        self.ell.len()
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    pub fn ell(&self) -> &[f64] {
        &self.ell
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    /// Targets `y != x` with `L(x,y) > 0`, paired with the rate.
    pub fn neighbors(&self, x: usize) -> &[(usize, f64)] {
        &self.neighbors[x]
    }

    pub fn rate(&self, x: usize, y: usize) -> f64 {
        self.generator[(x, y)]
    }

    pub fn min_objective(&self) -> f64 {
        self.objective.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_objective(&self) -> f64 {
        self.objective.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn ell_min(&self) -> f64 {
        self.ell.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest exit rate `max_x |L(x,x)|`.
    pub fn max_exit_rate(&self) -> f64 {
        (0..self.n()).map(|x| -self.generator[(x, x)]).fold(0.0, f64::max)
    }

    /// Replaces the objective, keeping the chain.
    pub fn with_objective(&self, objective: Vec<f64>) -> Result<Self> {
        Self::from_matrix(self.generator.clone(), self.ell.clone(), objective)
    }
}

/// Builds a landscape from an edge list `(x, y, rate)`. Repeated edges add up.
pub fn build_landscape(edges: &[(usize, usize, f64)], ell: Vec<f64>, objective: Vec<f64>) -> Result<EnergyLandscape> {
    let n = ell.len();
    let mut gen = DMatrix::zeros(n, n);
    for &(x, y, r) in edges {
        if x >= n || y >= n {
            return Err(Error::Domain(format!("edge ({x},{y}) outside 0..{n}")));
        }
        if x == y {
            continue;
        }
        if !(r >= 0.0) {
            return Err(Error::Domain(format!("rate on ({x},{y}) must be nonnegative, got {r}")));
        }
        gen[(x, y)] += r;
    }
    EnergyLandscape::from_matrix(gen, ell, objective)
}

/// Objective on the 20-state ring benchmark.
pub fn ring_objective(i: usize) -> f64 {
    let x = -0.6 + i as f64 / 5.5;
    x * x / 10.0 + 2.0 * ((3.0 * x).cos() + (7.0 * x).sin())
}

/// 20 states on a cycle with unit rates both ways and uniform measure.
pub fn ring20() -> EnergyLandscape {
    ring(20, ring_objective)
}

pub fn ring(n: usize, objective: impl Fn(usize) -> f64) -> EnergyLandscape {
    let mut edges = Vec::with_capacity(2 * n);
    for i in 0..n {
        edges.push((i, (i + 1) % n, 1.0));
        edges.push(((i + 1) % n, i, 1.0));
    }
    let ell = vec![1.0 / n as f64; n];
    let u = (0..n).map(objective).collect();
    build_landscape(&edges, ell, u).expect("ring is a valid landscape")
}

/// States within `tol` of the minimum of the objective.
pub fn minimizer_set(land: &EnergyLandscape, tol: f64) -> Vec<usize> {
    let min = land.min_objective();
    (0..land.n()).filter(|&x| land.objective[x] <= min + tol).collect()
}

pub fn osc(u: &[f64]) -> f64 {
    let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = u.iter().copied().fold(f64::INFINITY, f64::min);
    if u.is_empty() {
        0.0
    } else {
        max - min
    }
}

/// Smallest nonzero eigenvalue of `-gen`, through the symmetrization
/// `D^{1/2}(-gen)D^{-1/2}` with `D = diag(measure)`.
pub fn spectral_gap(gen: &DMatrix<f64>, measure: &[f64]) -> Result<f64> {
    let eig = sorted_spectrum(gen, measure)?;
    Ok(eig[1])
}

/// Ascending spectrum of `-gen` for a generator reversible w.r.t. `measure`.
pub fn sorted_spectrum(gen: &DMatrix<f64>, measure: &[f64]) -> Result<Vec<f64>> {
    let n = gen.nrows();
    if measure.len() != n {
        return Err(Error::Dimension { expected: n, got: measure.len() });
    }
    check_detailed_balance(gen, measure)?;
    let s = symmetrized(gen, measure);
    let mut eig: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    Ok(eig)
}

/// Symmetric matrix `D^{1/2}(-gen)D^{-1/2}`, averaged with its transpose.
pub fn symmetrized(gen: &DMatrix<f64>, measure: &[f64]) -> DMatrix<f64> {
    let n = gen.nrows();
    let sq: Vec<f64> = measure.iter().map(|m| m.sqrt()).collect();
    let mut s = DMatrix::from_fn(n, n, |x, y| -gen[(x, y)] * sq[x] / sq[y]);
    let t = s.transpose();
    s += t;
    s *= 0.5;
    s
}

pub fn check_detailed_balance(gen: &DMatrix<f64>, measure: &[f64]) -> Result<()> {
    let n = gen.nrows();
    for x in 0..n {
        for y in (x + 1)..n {
            let a = measure[x] * gen[(x, y)];
            let b = measure[y] * gen[(y, x)];
            let scale = a.abs().max(b.abs());
            let residual = (a - b).abs();
            if residual > STRUCT_TOL * scale.max(f64::MIN_POSITIVE) && residual > 0.0 {
                return Err(Error::NotReversible { x, y, residual });
            }
        }
    }
    Ok(())
}

fn check_probability(p: &[f64]) -> Result<()> {
    if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::BadMeasure(format!("entry {i} = {v} is not positive")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::BadMeasure(format!("total mass {total} differs from 1")));
    }
    Ok(())
}

fn check_strongly_connected(gen: &DMatrix<f64>) -> Result<()> {
    let n = gen.nrows();
    for transpose in [false, true] {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for y in 0..n {
                let r = if transpose { gen[(y, x)] } else { gen[(x, y)] };
                if y != x && r > 0.0 && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::NotIrreducible(missing));
        }
    }
    Ok(())
}

/// A strictly positive density with respect to a reference measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    rho: Vec<f64>,
}

impl Density {
    pub fn new(rho: Vec<f64>, ell: &[f64]) -> Result<Self> {
        if rho.len() != ell.len() {
            return Err(Error::Dimension { expected: ell.len(), got: rho.len() });
        }
        if let Some((i, v)) = rho.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::BadDensity(format!("entry {i} = {v} is not positive")));
        }
        let mass: f64 = rho.iter().zip(ell).map(|(r, l)| r * l).sum();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::BadDensity(format!("mass {mass} differs from 1")));
        }
        debug_assert!(rho.iter().zip(ell).all(|(r, l)| *r <= (1.0 + MASS_TOL) / l));
        Ok(Self { rho })
    }

    /// Density of the probability vector `mu` relative to `ell`.
    pub fn from_measure(mu: &[f64], ell: &[f64]) -> Result<Self> {
        Self::new(mu.iter().zip(ell).map(|(m, l)| m / l).collect(), ell)
    }

    /// Rescales an arbitrary positive vector to unit mass.
    pub fn normalized(mut rho: Vec<f64>, ell: &[f64]) -> Result<Self> {
        let mass: f64 = rho.iter().zip(ell).map(|(r, l)| r * l).sum();
        if !(mass > 0.0) {
            return Err(Error::BadDensity(format!("mass {mass} is not positive")));
        }
        rho.iter_mut().for_each(|r| *r /= mass);
        Self::new(rho, ell)
    }

    pub fn uniform(n: usize) -> Self {
        Self { rho: vec![1.0; n] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rho
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.rho
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn measure(&self, ell: &[f64]) -> Vec<f64> {
        self.rho.iter().zip(ell).map(|(r, l)| r * l).collect()
    }

    pub fn min(&self) -> f64 {
        self.rho.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.rho.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl std::ops::Index<usize> for Density {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.rho[i]
    }
}

/// Draw from the symmetric Dirichlet law with parameter `alpha`, floored at `floor`
/// and renormalized.
pub fn random_probability<R: Rng + ?Sized>(rng: &mut R, n: usize, alpha: f64, floor: f64) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive shape");
    let mut p: Vec<f64> = (0..n).map(|_| gamma.sample(rng).max(1e-300)).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v = (*v / s).max(floor));
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

/// Random reversible landscape: a cycle backbone plus random chords with
/// symmetric conductances `c`, rates `c / ell(x)`, objective uniform on `[0, spread)`.
pub fn random_landscape<R: Rng + ?Sized>(rng: &mut R, n: usize, spread: f64) -> EnergyLandscape {
    assert!(n >= 2);
    let ell = random_probability(rng, n, 2.0, 0.02);
    let mut cond = DMatrix::<f64>::zeros(n, n);
    for x in 0..n {
        let y = (x + 1) % n;
        if x != y {
            let c = rng.random_range(0.2..2.0);
            cond[(x, y)] = c;
            cond[(y, x)] = c;
        }
    }
    for x in 0..n {
        for y in (x + 2)..n {
            if rng.random::<f64>() < 0.3 {
                let c = rng.random_range(0.2..2.0);
                cond[(x, y)] = c;
                cond[(y, x)] = c;
            }
        }
    }
    let gen = DMatrix::from_fn(n, n, |x, y| if x == y { 0.0 } else { cond[(x, y)] / ell[x] });
    let u = (0..n).map(|_| rng.random::<f64>() * spread).collect();
    EnergyLandscape::from_matrix(gen, ell, u).expect("random landscape is valid")
}
