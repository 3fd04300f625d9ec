//! Numerical checks of the functional inequalities that drive exponential
//! and polynomial convergence of the flow.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::entropy::EntropyFamily;
use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::functionals::{bregman_gap, gap_g_of};
use crate::generators::{comparison_generator, linearized_generator};
use crate::model::{random_probability, spectral_gap, symmetrized, Density, EnergyLandscape};
use crate::stationary::solve_eta;

/// Ratios whose denominator falls below this are not evaluated.
const GAP_FLOOR: f64 = 1e-13;

/// Dissipation with respect to a reference density:
/// `1/2 sum ell L theta(rho(x),rho(y)) (grad[phi'(rho) - phi'(target)])^2`.
pub fn g_star(land: &EnergyLandscape, fam: &EntropyFamily, rho: &Density, target: &Density) -> f64 {
    let f: Vec<f64> = (0..land.n()).map(|x| fam.phi_prime(rho[x]) - fam.phi_prime(target[x])).collect();
    let ell = land.ell();
    let mut acc = 0.0;
    for x in 0..land.n() {
        for &(y, rate) in land.neighbors(x) {
            let d = f[y] - f[x];
            acc += ell[x] * rate * fam.theta(rho[x], rho[y]) * d * d;
        }
    }
    0.5 * acc
}

/// Bregman divergence of `rho` from the reference density.
pub fn i_star(land: &EnergyLandscape, fam: &EntropyFamily, rho: &Density, target: &Density) -> f64 {
    bregman_gap(land, fam, rho.as_slice(), target.as_slice())
}

fn ratio(land: &EnergyLandscape, fam: &EntropyFamily, beta: f64, rho: &[f64], eta: &[f64]) -> f64 {
    let i = bregman_gap(land, fam, rho, eta);
    if !(i > GAP_FLOOR) {
        return f64::INFINITY;
    }
    gap_g_of(land, fam, beta, rho) / i
}

/// `G(beta, rho) / I(beta, rho)`.
pub fn dissipation_ratio(land: &EnergyLandscape, fam: &EntropyFamily, beta: f64, rho: &Density) -> Result<f64> {
    let eta = solve_eta(land, fam, beta)?.eta;
    Ok(ratio(land, fam, beta, rho.as_slice(), eta.as_slice()))
}

/// Search budget for the multistart minimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiBudget {
    pub starts: usize,
    pub max_evals: usize,
    pub seed: u64,
}

impl Default for ChiBudget {
    fn default() -> Self {
        ChiBudget { starts: 32, max_evals: 4000, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub beta: f64,
    /// Smallest `G/I` found; an upper estimate of the infimum.
    pub chi_estimate: f64,
    /// Spectral gap of the linearized pair.
    pub lambda_linearized: f64,
    /// Comparison bound at the witness with the minimizer as reference.
    pub lambda_comparison_bound: f64,
    pub witness: Vec<f64>,
    pub evaluations: usize,
    /// `0 < chi_estimate <= lambda_linearized + tol`.
    pub pass: bool,
}

/// Interior density `e^z / sum ell e^z` with `z[0] = 0`.
fn softmax(z: &[f64], ell: &[f64]) -> Vec<f64> {
    let n = ell.len();
    let mut full = Vec::with_capacity(n);
    full.push(0.0);
    full.extend_from_slice(z);
    let max = full.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = full.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = w.iter().zip(ell).map(|(a, b)| a * b).sum();
    w.iter().map(|v| v / total).collect()
}

fn logits(rho: &[f64]) -> Vec<f64> {
    rho[1..].iter().map(|r| (r / rho[0]).ln()).collect()
}

/// Nelder-Mead with standard coefficients. Returns the best point, its value and the evaluation count.
pub(crate) fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, max_evals: usize) -> (Vec<f64>, f64, usize) {
    let d = x0.len();
    if d == 0 {
        return (Vec::new(), f(x0), 1);
    }
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..d {
        let mut p = x0.to_vec();
        p[i] += step;
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut evals = d + 1;
    while evals < max_evals {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let spread = pts.iter().skip(1).map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
        if spread < 1e-10 || (vals[d] - vals[0]).abs() <= 1e-13 * vals[0].abs().max(1e-300) && vals[d].is_finite() {
            break;
        }
        let centroid: Vec<f64> = (0..d).map(|j| pts[..d].iter().map(|p| p[j]).sum::<f64>() / d as f64).collect();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&pts[d]).map(|(c, w)| c + t * (c - w)).collect() };
        let reflected = along(1.0);
        let fr = f(&reflected);
        evals += 1;
        if fr < vals[0] {
            let expanded = along(2.0);
            let fe = f(&expanded);
            evals += 1;
            if fe < fr {
                pts[d] = expanded;
                vals[d] = fe;
            } else {
                pts[d] = reflected;
                vals[d] = fr;
            }
        } else if fr < vals[d - 1] {
            pts[d] = reflected;
            vals[d] = fr;
        } else {
            let (contracted, fc) = if fr < vals[d] {
                let c = along(0.5);
                let v = f(&c);
                (c, v)
            } else {
                let c = along(-0.5);
                let v = f(&c);
                (c, v)
            };
            evals += 1;
            if fc < vals[d].min(fr) {
                pts[d] = contracted;
                vals[d] = fc;
            } else {
                for i in 1..=d {
                    let shrunk: Vec<f64> = pts[i].iter().zip(&pts[0]).map(|(p, b)| b + 0.5 * (p - b)).collect();
                    vals[i] = f(&shrunk);
                    pts[i] = shrunk;
                }
                evals += d;
            }
        }
    }
    let best = (0..=d).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    (pts[best].clone(), vals[best], evals)
}

fn start_point(index: usize, rng: &mut ChaCha8Rng, eta: &[f64], ell: &[f64]) -> (Vec<f64>, f64) {
    let n = ell.len();
    let base = logits(eta);
    const RADII: [f64; 4] = [1e-3, 1e-2, 1e-1, 1.0];
    match index % 4 {
        // perturbations of the minimizer
        0 | 1 => {
            let r = RADII[(index / 4) % RADII.len()];
            let z: Vec<f64> = base.iter().map(|b| b + r * rng.sample::<f64, _>(StandardNormal)).collect();
            (z, r.max(1e-3))
        }
        // one state close to the boundary
        2 => {
            let x = rng.random_range(0..n);
            let mut rho = eta.to_vec();
            rho[x] = 1e-4 * eta[x];
            let total: f64 = rho.iter().zip(ell).map(|(a, b)| a * b).sum();
            rho.iter_mut().for_each(|r| *r /= total);
            (logits(&rho), 0.5)
        }
        _ => {
            let mu = random_probability(rng, n, 1.0, 1e-6);
            let rho: Vec<f64> = mu.iter().zip(ell).map(|(m, l)| m / l).collect();
            (logits(&rho), 0.5)
        }
    }
}

/// Multistart local minimization of `G/I` over interior densities.
pub fn estimate_chi(land: &EnergyLandscape, fam: &EntropyFamily, beta: f64, budget: &ChiBudget) -> Result<InequalityReport> {
    let eta = solve_eta(land, fam, beta)?.eta;
    let (q, w) = linearized_generator(land, fam, beta)?;
    let lambda_linearized = spectral_gap(&q, &w)?;
    let ell = land.ell();
    let objective = |z: &[f64]| ratio(land, fam, beta, &softmax(z, ell), eta.as_slice());
    let results: Vec<(usize, Vec<f64>, f64, usize)> = (0..budget.starts.max(1))
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(budget.seed.wrapping_add(i as u64));
            let (z0, step) = start_point(i, &mut rng, eta.as_slice(), ell);
            let (z, v, evals) = nelder_mead(&objective, &z0, step, budget.max_evals);
            (i, z, v, evals)
        })
        .collect();
    let evaluations = results.iter().map(|r| r.3).sum();
    let best = results
        .into_iter()
        .min_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)))
        .expect("at least one start");
    let witness = softmax(&best.1, ell);
    let rho_min = witness.iter().copied().fold(f64::INFINITY, f64::min);
    let lambda = spectral_gap(land.generator(), ell)?;
    let lambda_comparison_bound = lambda * fam.phi_second(1.0 / land.ell_min()) / fam.phi_second(rho_min);
    let chi_estimate = best.2;
    Ok(InequalityReport {
        beta,
        chi_estimate,
        lambda_linearized,
        lambda_comparison_bound,
        witness,
        evaluations,
        pass: chi_estimate > 0.0 && chi_estimate <= lambda_linearized + 1e-6,
    })
}

/// Limit of `G/I` along `eta + eps h` as `eps -> 0`:
/// `sum ell L theta(eta) (grad[phi''(eta) h])^2 / sum ell phi''(eta) h^2`, both
/// sums carrying the same factor one half.
pub fn rayleigh_quotient_limit(land: &EnergyLandscape, fam: &EntropyFamily, beta: f64, h: &[f64]) -> Result<f64> {
    if h.len() != land.n() {
        return Err(Error::Dimension { expected: land.n(), got: h.len() });
    }
    let ell = land.ell();
    let mean: f64 = h.iter().zip(ell).map(|(a, b)| a * b).sum();
    let scale: f64 = h.iter().zip(ell).map(|(a, b)| (a * b).abs()).sum();
    if scale == 0.0 {
        return Err(Error::Domain("direction must be nonzero".into()));
    }
    if mean.abs() > 1e-12 * scale {
        return Err(Error::Domain(format!("direction must have zero ell-mean, got {mean:e}")));
    }
    let eta = solve_eta(land, fam, beta)?.eta;
    let curv: Vec<f64> = eta.as_slice().iter().map(|e| fam.phi_second(*e)).collect();
    let k: Vec<f64> = h.iter().zip(&curv).map(|(a, c)| a * c).collect();
    let mut num = 0.0;
    for x in 0..land.n() {
        for &(y, rate) in land.neighbors(x) {
            num += ell[x] * rate * fam.theta(eta[x], eta[y]) * (k[y] - k[x]).powi(2);
        }
    }
    let den: f64 = (0..land.n()).map(|x| ell[x] * curv[x] * h[x] * h[x]).sum();
    Ok(0.5 * num / (0.5 * den))
}

/// Direction `h = k / phi''(eta)` where `k` is the slowest nonconstant mode of the linearized generator.
pub fn slowest_direction(land: &EnergyLandscape, fam: &EntropyFamily, beta: f64) -> Result<Vec<f64>> {
    let eta = solve_eta(land, fam, beta)?.eta;
    let (q, w) = linearized_generator(land, fam, beta)?;
    let s = symmetrized(&q, &w);
    let eig = s.symmetric_eigen();
    let mut order: Vec<usize> = (0..land.n()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let v = eig.eigenvectors.column(order[1]);
    Ok((0..land.n()).map(|x| v[x] / w[x].sqrt() / fam.phi_second(eta[x])).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub g_star: f64,
    pub i_star: f64,
    /// Spectral gap of the comparison pair.
    pub lambda_rho: f64,
    /// `lambda(L) phi''(1/ell_min) / phi''(rho_min)`.
    pub bound: f64,
    pub first_holds: bool,
    pub second_holds: bool,
}

impl ComparisonReport {
    pub fn holds(&self) -> bool {
        self.first_holds && self.second_holds
    }
}

/// Checks `G_* >= Lambda(rho) I_* >= bound I_*` with slack `1e-9`.
pub fn comparison_inequality_check(land: &EnergyLandscape, fam: &EntropyFamily, rho: &Density, target: &Density) -> Result<ComparisonReport> {
    let g = g_star(land, fam, rho, target);
    let i = i_star(land, fam, rho, target);
    let pair = comparison_generator(land, fam, rho, target);
    let weight: Vec<f64> = pair.weight.iter().map(|w| w / pair.total_mass).collect();
    let lambda_rho = spectral_gap(&pair.matrix, &weight)?;
    let lambda = spectral_gap(land.generator(), land.ell())?;
    let bound = lambda * fam.phi_second(1.0 / land.ell_min()) / fam.phi_second(rho.min());
    let slack = 1e-9 * g.abs().max(1.0);
    Ok(ComparisonReport {
        g_star: g,
        i_star: i,
        lambda_rho,
        bound,
        first_holds: g >= lambda_rho * i - slack,
        second_holds: lambda_rho * i >= bound * i - slack,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    /// Largest rate for which `I(t) <= e^{-rate t} I(0)` on the grid.
    pub chi_fitted: f64,
    /// Largest `I(t) - e^{-chi t} I(0)` for the supplied rate.
    pub excess_at_estimate: f64,
    pub envelope_holds: bool,
    pub ceiling: f64,
    pub within_ceiling: bool,
}

/// Verifies the exponential envelope with rate `chi` and fits the largest admissible rate.
pub fn decay_certificate(traj: &Trajectory, chi: f64, ceiling: f64) -> DecayReport {
    let i0 = traj.diagnostics[0].gap_i;
    let chi_fitted = if i0 > 0.0 {
        traj.diagnostics
            .iter()
            .filter(|d| d.t > 0.0)
            .map(|d| -(d.gap_i / i0).ln() / d.t)
            .fold(f64::INFINITY, f64::min)
    } else {
        f64::INFINITY
    };
    let excess = traj.envelope_excess(chi);
    DecayReport {
        chi_fitted,
        excess_at_estimate: excess,
        envelope_holds: excess <= 1e-12 * i0.max(1e-300),
        ceiling,
        within_ceiling: chi_fitted <= ceiling,
    }
}

/// Sum of squared off-diagonal entries; used to compare generators.
pub fn offdiagonal_norm(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut acc = 0.0;
    for x in 0..n {
        for y in 0..n {
            if x != y {
                acc += m[(x, y)] * m[(x, y)];
            }
        }
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{integrate_homogeneous, Controls};
    use crate::functionals::{gap_g, gap_i};
    use crate::model::{random_landscape, ring, ring20};
    use proptest::prelude::*;
    use rand::Rng;

    fn fam() -> EntropyFamily {
        EntropyFamily::penalized(-1.0).unwrap()
    }

    fn random_density(rng: &mut ChaCha8Rng, ell: &[f64]) -> Density {
        let mu = random_probability(rng, ell.len(), 1.0, 1e-3);
        Density::from_measure(&mu, ell).unwrap()
    }

    fn centered(rng: &mut ChaCha8Rng, ell: &[f64]) -> Vec<f64> {
        let h: Vec<f64> = ell.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean: f64 = h.iter().zip(ell).map(|(a, b)| a * b).sum();
        h.iter().map(|v| v - mean).collect()
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2);
        let (x, v, _) = nelder_mead(&f, &[0.0, 0.0], 0.5, 5000);
        assert!(v < 1e-12 && (x[0] - 1.0).abs() < 1e-5 && (x[1] + 2.0).abs() < 1e-5);
    }

    #[test]
    fn softmax_roundtrip() {
        let ell = [0.2, 0.3, 0.5];
        let rho = Density::new(vec![2.0, 1.0, 0.6], &ell).unwrap();
        let back = softmax(&logits(rho.as_slice()), &ell);
        assert!(back.iter().zip(rho.as_slice()).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn quotient_matches_ratio_near_minimizer() {
        let land = ring20();
        let f = fam();
        let eta = solve_eta(&land, &f, 5.0).unwrap().eta;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let h = centered(&mut rng, land.ell());
            let q = rayleigh_quotient_limit(&land, &f, 5.0, &h).unwrap();
            let eps = 1e-5;
            let rho: Vec<f64> = eta.as_slice().iter().zip(&h).map(|(e, v)| e + eps * v).collect();
            let rho = Density::new(rho, land.ell()).unwrap();
            let r = gap_g(&land, &f, 5.0, &rho) / gap_i(&land, &f, 5.0, &rho, &eta).unwrap();
            assert!((q - r).abs() <= 1e-2 * q, "{q} {r}");
        }
    }

    #[test]
    fn quotient_minimum_is_twice_linearized_gap() {
        for beta in [0.0, 1.0, 5.0] {
            let land = ring20();
            let f = fam();
            let (q, w) = linearized_generator(&land, &f, beta).unwrap();
            let lambda = spectral_gap(&q, &w).unwrap();
            let h = slowest_direction(&land, &f, beta).unwrap();
            let at_mode = rayleigh_quotient_limit(&land, &f, beta, &h).unwrap();
            assert!((at_mode - 2.0 * lambda).abs() <= 1e-9 * lambda, "{at_mode} {lambda}");
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            for _ in 0..50 {
                let h = centered(&mut rng, land.ell());
                assert!(rayleigh_quotient_limit(&land, &f, beta, &h).unwrap() >= 2.0 * lambda * (1.0 - 1e-9));
            }
        }
    }

    #[test]
    fn quotient_rejects_bad_direction() {
        let land = ring(4, |i| i as f64);
        assert!(matches!(rayleigh_quotient_limit(&land, &fam(), 1.0, &[1.0, 0.0, 0.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(rayleigh_quotient_limit(&land, &fam(), 1.0, &[0.0; 4]), Err(Error::Domain(_))));
    }

    #[test]
    fn ratio_grows_toward_boundary() {
        let land = ring20();
        let f = fam();
        let eta = solve_eta(&land, &f, 5.0).unwrap().eta;
        let path = |floor: f64| {
            let mut rho = eta.as_slice().to_vec();
            rho[3] = floor;
            Density::normalized(rho, land.ell()).unwrap()
        };
        let near = dissipation_ratio(&land, &f, 5.0, &path(1e-2)).unwrap();
        let far = dissipation_ratio(&land, &f, 5.0, &path(1e-6)).unwrap();
        assert!(far > near, "{far} {near}");
        let ratios: Vec<f64> = (2..10).map(|k| dissipation_ratio(&land, &f, 5.0, &path(10f64.powi(-k))).unwrap()).collect();
        assert!(ratios.windows(2).skip(3).all(|w| w[1] > w[0]), "{ratios:?}");
    }

    #[test]
    fn chi_estimate_is_positive_and_labelled() {
        let land = ring(6, |i| [0.0, 1.0, 0.5, 2.0, 1.5, 0.3][i]);
        let rep = estimate_chi(&land, &fam(), 2.0, &ChiBudget { starts: 8, max_evals: 2000, seed: 1 }).unwrap();
        assert!(rep.chi_estimate > 0.0);
        assert!(rep.chi_estimate.is_finite());
        // near the minimizer the ratio tends to twice the linearized gap
        assert!(rep.chi_estimate <= 2.0 * rep.lambda_linearized * (1.0 + 1e-3));
    }

    #[test]
    fn chi_is_deterministic_given_seed() {
        let land = ring(5, |i| i as f64);
        let b = ChiBudget { starts: 6, max_evals: 800, seed: 3 };
        let a = estimate_chi(&land, &fam(), 1.0, &b).unwrap();
        let c = estimate_chi(&land, &fam(), 1.0, &b).unwrap();
        assert_eq!(a.chi_estimate, c.chi_estimate);
        assert_eq!(a.witness, c.witness);
    }

    #[test]
    fn comparison_at_reference_is_trivial() {
        let land = ring(5, |i| i as f64);
        let rho = Density::new(vec![0.5, 1.5, 1.2, 0.8, 1.0], land.ell()).unwrap();
        let rep = comparison_inequality_check(&land, &fam(), &rho, &rho).unwrap();
        assert_eq!(rep.g_star, 0.0);
        assert_eq!(rep.i_star, 0.0);
        assert!(rep.holds());
    }

    #[test]
    fn comparison_with_minimizer_recovers_gaps() {
        let land = ring20();
        let f = fam();
        let eta = solve_eta(&land, &f, 5.0).unwrap().eta;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rho = random_density(&mut rng, land.ell());
        let g = g_star(&land, &f, &rho, &eta);
        let i = i_star(&land, &f, &rho, &eta);
        assert!((g - gap_g(&land, &f, 5.0, &rho)).abs() <= 1e-9 * g);
        assert!((i - gap_i(&land, &f, 5.0, &rho, &eta).unwrap()).abs() <= 1e-12 * i);
        assert!(comparison_inequality_check(&land, &f, &rho, &eta).unwrap().holds());
    }

    #[test]
    fn decay_certificate_on_heat_flow() {
        let land = ring(6, |i| i as f64);
        let f = fam();
        let rho0 = Density::new(vec![0.5, 1.5, 1.2, 0.8, 1.0, 1.0], land.ell()).unwrap();
        let traj = integrate_homogeneous(&land, &f, 0.0, &rho0, 5.0, &Controls::default()).unwrap();
        let lambda = spectral_gap(land.generator(), land.ell()).unwrap();
        let rep = decay_certificate(&traj, 0.5 * lambda, 2.0 * lambda);
        assert!(rep.envelope_holds);
        // the fitted rate is the largest admissible one, so at least the tested rate
        assert!(rep.chi_fitted >= 0.5 * lambda, "{rep:?}");
        // over a finite window faster modes push the fitted rate above the asymptotic 2 lambda
        assert!(!rep.within_ceiling);
    }

    #[test]
    fn decay_certificate_on_constant_trajectory() {
        let land = ring(4, |i| i as f64);
        let f = fam();
        let eta = solve_eta(&land, &f, 1.0).unwrap().eta;
        let traj = integrate_homogeneous(&land, &f, 1.0, &eta, 1.0, &Controls::default()).unwrap();
        let rep = decay_certificate(&traj, 123.0, 1.0);
        assert!(rep.excess_at_estimate <= 1e-18);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn comparison_chain_holds(seed in any::<u64>(), n in 2usize..=8, mi in 0usize..3) {
            let m = [-0.5, -1.0, -2.0][mi];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let land = random_landscape(&mut rng, n, 2.0);
            let f = EntropyFamily::penalized(m).unwrap();
            let rho = random_density(&mut rng, land.ell());
            let target = random_density(&mut rng, land.ell());
            let rep = comparison_inequality_check(&land, &f, &rho, &target).unwrap();
            prop_assert!(rep.holds(), "{rep:?}");
        }

        #[test]
        fn dissipation_and_gap_positive_off_minimizer(seed in any::<u64>(), n in 2usize..=8, beta in 0.0f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let land = random_landscape(&mut rng, n, 2.0);
            let f = fam();
            let rho = random_density(&mut rng, land.ell());
            let eta = solve_eta(&land, &f, beta).unwrap().eta;
            prop_assert!(gap_g(&land, &f, beta, &rho) > 0.0);
            prop_assert!(gap_i(&land, &f, beta, &rho, &eta).unwrap() > 0.0);
        }
    }
}
