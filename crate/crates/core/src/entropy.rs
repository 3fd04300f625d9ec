//! Convex entropy functions, their derivatives, the inverse of the first
//! derivative and the mobility built from them.
//!
//! The main family glues a power law below 1 to a quadratic above 1:
//!
//! ```text
//! phi(r) = (r^m - 1 - m(r - 1)) / (m(m - 1))   0 < r < 1
//!        = (r - 1)^2 / 2                        r >= 1
//! ```
//!
//! with `m < 0`. It is C^2 at `r = 1`, `phi'' >= 1` everywhere and `phi'` maps
//! `(0, inf)` onto the real line.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative gap below which the mobility switches to its diagonal form.
pub const THETA_DIAGONAL_REL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Power law below 1, quadratic above 1.
    Penalized,
    /// `(r^m - 1 - m(r - 1)) / (m(m - 1))` on the whole half-line.
    Power,
    /// `-ln r + r - 1`.
    Log,
    /// `r ln r - r + 1`.
    Boltzmann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyFamily {
    pub m: f64,
    pub variant: Variant,
}

impl EntropyFamily {
    pub fn penalized(m: f64) -> Result<Self> {
        if !(m < 0.0) || !m.is_finite() {
            return Err(Error::Domain(format!("exponent must be negative, got {m}")));
        }
        Ok(Self { m, variant: Variant::Penalized })
    }

    pub fn power(m: f64) -> Result<Self> {
        if !m.is_finite() || m == 0.0 || m == 1.0 {
            return Err(Error::Domain(format!("power exponent must differ from 0 and 1, got {m}")));
        }
        Ok(Self { m, variant: Variant::Power })
    }

    pub fn log() -> Self {
        Self { m: 0.0, variant: Variant::Log }
    }

    pub fn boltzmann() -> Self {
        Self { m: 1.0, variant: Variant::Boltzmann }
    }

    pub fn is_penalized(&self) -> bool {
        self.variant == Variant::Penalized
    }

    pub fn require_penalized(&self) -> Result<()> {
        if self.is_penalized() {
            Ok(())
        } else {
            Err(Error::Domain(format!("operation needs the penalized family, got {:?}", self.variant)))
        }
    }

    fn power_phi(&self, r: f64) -> f64 {
        let m = self.m;
        (r.powf(m) - 1.0 - m * (r - 1.0)) / (m * (m - 1.0))
    }

    fn power_prime(&self, r: f64) -> f64 {
        let m = self.m;
        (r.powf(m - 1.0) - 1.0) / (m - 1.0)
    }

    /// `power_phi(r) - power_phi(s) - power_prime(s)(r - s)` for `s > 0`, written as
    /// `s^m ((1+u)^m - 1 - m u) / (m(m-1))` with `u = r/s - 1`.
    fn power_bregman(&self, r: f64, s: f64) -> f64 {
        let m = self.m;
        if r == 0.0 && m < 0.0 {
            return f64::INFINITY;
        }
        let u = (r - s) / s;
        let tail = if u.abs() < 0.05 {
            // binomial series from the quadratic term on
            let mut coef = m * (m - 1.0) / 2.0;
            let mut pow = u * u;
            let mut acc = coef * pow;
            for k in 3..80 {
                coef *= (m - (k - 1) as f64) / k as f64;
                pow *= u;
                let term = coef * pow;
                acc += term;
                if term.abs() <= 1e-18 * acc.abs() {
                    break;
                }
            }
            acc
        } else {
            (m * u.ln_1p()).exp_m1() - m * u
        };
        s.powf(m) * tail / (m * (m - 1.0))
    }

    /// Bregman divergence `phi(r) - phi(s) - phi'(s)(r - s)` for `s > 0`; the
    /// penalized and power variants avoid the cancellation near `r = s`.
    pub fn bregman(&self, r: f64, s: f64) -> f64 {
        match self.variant {
            Variant::Penalized => match (r >= 1.0, s >= 1.0) {
                (true, true) => 0.5 * (r - s) * (r - s),
                (false, false) => self.power_bregman(r, s),
                (true, false) => 0.5 * (r - 1.0) * (r - 1.0) + self.power_bregman(1.0, s) - self.power_prime(s) * (r - 1.0),
                (false, true) => self.power_bregman(r, 1.0) + 0.5 * (s - 1.0) * (s - 1.0) + (s - 1.0) * (1.0 - r),
            },
            Variant::Power => self.power_bregman(r, s),
            _ => self.phi(r) - self.phi(s) - self.phi_prime(s) * (r - s),
        }
    }

    /// Value at `r >= 0`. Returns `+inf` where the function blows up at 0.
    pub fn phi(&self, r: f64) -> f64 {
        match self.variant {
            Variant::Penalized => {
                if r >= 1.0 {
                    0.5 * (r - 1.0) * (r - 1.0)
                } else {
                    self.power_phi(r)
                }
            }
            Variant::Power => {
                if r == 0.0 && self.m < 0.0 {
                    f64::INFINITY
                } else {
                    self.power_phi(r)
                }
            }
            Variant::Log => {
                if r == 0.0 {
                    f64::INFINITY
                } else {
                    -r.ln() + r - 1.0
                }
            }
            Variant::Boltzmann => {
                if r == 0.0 {
                    1.0
                } else {
                    r * r.ln() - r + 1.0
                }
            }
        }
    }

    pub fn phi_prime(&self, r: f64) -> f64 {
        match self.variant {
            Variant::Penalized => {
                if r >= 1.0 {
                    r - 1.0
                } else {
                    self.power_prime(r)
                }
            }
            Variant::Power => self.power_prime(r),
            Variant::Log => 1.0 - 1.0 / r,
            Variant::Boltzmann => r.ln(),
        }
    }

    pub fn phi_second(&self, r: f64) -> f64 {
        match self.variant {
            Variant::Penalized => {
                if r >= 1.0 {
                    1.0
                } else {
                    r.powf(self.m - 2.0)
                }
            }
            Variant::Power => r.powf(self.m - 2.0),
            Variant::Log => 1.0 / (r * r),
            Variant::Boltzmann => 1.0 / r,
        }
    }

    pub fn checked_phi(&self, r: f64) -> Result<f64> {
        check_nonneg(r)?;
        Ok(self.phi(r))
    }

    pub fn checked_phi_prime(&self, r: f64) -> Result<f64> {
        check_positive(r)?;
        Ok(self.phi_prime(r))
    }

    pub fn checked_phi_second(&self, r: f64) -> Result<f64> {
        check_positive(r)?;
        Ok(self.phi_second(r))
    }

    /// Inverse of `phi'` for the penalized family (total on the real line).
    pub fn g_inverse(&self, y: f64) -> f64 {
        debug_assert!(self.is_penalized());
        if y >= 0.0 {
            y + 1.0
        } else {
            let m1 = self.m - 1.0;
            (m1 * y + 1.0).powf(1.0 / m1)
        }
    }

    /// Inverse of `phi'` for any variant; fails outside the range of `phi'`.
    pub fn checked_g_inverse(&self, y: f64) -> Result<f64> {
        let out_of_range = || Error::Domain(format!("{y} is outside the range of phi' for {:?}", self.variant));
        match self.variant {
            Variant::Penalized => Ok(self.g_inverse(y)),
            Variant::Power => {
                let m1 = self.m - 1.0;
                let base = m1 * y + 1.0;
                if base > 0.0 {
                    Ok(base.powf(1.0 / m1))
                } else {
                    Err(out_of_range())
                }
            }
            Variant::Log => {
                if y < 1.0 {
                    Ok(1.0 / (1.0 - y))
                } else {
                    Err(out_of_range())
                }
            }
            Variant::Boltzmann => Ok(y.exp()),
        }
    }

    /// Derivative of the inverse, `1 / phi''(g(y))`.
    pub fn g_inverse_prime(&self, y: f64) -> f64 {
        1.0 / self.phi_second(self.g_inverse(y))
    }

    /// Mobility `(s - t) / (phi'(s) - phi'(t))`, zero on the boundary and
    /// `1 / phi''` at the midpoint when `s` and `t` nearly coincide.
    pub fn theta(&self, s: f64, t: f64) -> f64 {
        if s <= 0.0 || t <= 0.0 {
            return 0.0;
        }
        if (s - t).abs() <= THETA_DIAGONAL_REL * s.max(t) {
            return 1.0 / self.phi_second(0.5 * (s + t));
        }
        self.theta_from_primes(s, t, self.phi_prime(s), self.phi_prime(t))
    }

    /// Mobility with precomputed first derivatives at `s` and `t`.
    #[inline]
    pub fn theta_from_primes(&self, s: f64, t: f64, ds: f64, dt: f64) -> f64 {
        if s <= 0.0 || t <= 0.0 {
            return 0.0;
        }
        if (s - t).abs() <= THETA_DIAGONAL_REL * s.max(t) {
            return 1.0 / self.phi_second(0.5 * (s + t));
        }
        let q = (s - t) / (ds - dt);
        if q.is_finite() {
            q
        } else {
            0.0
        }
    }

    /// `int_0^1 theta(1 - r, 1 + r)^{-1/2} dr` by adaptive quadrature.
    ///
    /// Near `r = 1` the integrand behaves like `(1 - r)^{-(1 - m)/2}`, so the
    /// integral is finite only for `-1 < m < 0`; otherwise `NonFinite`.
    pub fn c_theta(&self, quadrature_points: usize) -> Result<f64> {
        self.require_penalized()?;
        let p = (1.0 - self.m) / 2.0;
        if p >= 1.0 {
            return Err(Error::NonFinite(format!(
                "integrand decays like (1-r)^-{p} at r = 1, which is not integrable"
            )));
        }
        // r = 1 - s^k turns the endpoint singularity into s^{k(1-p)-1}, at least cubic for k >= 4/(1-p)
        let k = (4.0 / (1.0 - p)).ceil();
        let f = |s: f64| {
            if s <= 0.0 {
                return 0.0;
            }
            let sk = s.powf(k);
            if sk < 1e-150 {
                return 0.0;
            }
            let th = self.theta(sk, 2.0 - sk);
            k * s.powf(k - 1.0) / th.sqrt()
        };
        let mut evals = 0usize;
        let budget = quadrature_points.max(33);
        let (a, b) = (0.0, 1.0);
        let (fa, fm, fb) = (f(a), f(0.5), f(b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        let v = adaptive_simpson(&f, a, b, fa, fm, fb, whole, 1e-12, 50, &mut evals, budget);
        if !v.is_finite() || evals >= budget {
            return Err(Error::NonFinite(format!("quadrature did not converge within {budget} evaluations")));
        }
        Ok(v)
    }
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    evals: &mut usize,
    budget: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    *evals += 2;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || *evals >= budget || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1, evals, budget)
        + adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1, evals, budget)
}

/// Admissibility bound `-m / (2(1 - m))` on the annealing exponent.
pub fn kappa(m: f64) -> Result<f64> {
    if !(m < 0.0) || !m.is_finite() {
        return Err(Error::Domain(format!("exponent must be negative, got {m}")));
    }
    Ok(-m / (2.0 * (1.0 - m)))
}

/// Negative part `max(0, -x)`.
#[inline]
pub fn negative_part(x: f64) -> f64 {
    if x < 0.0 {
        -x
    } else {
        0.0
    }
}

/// Positive part `max(0, x)`.
#[inline]
pub fn positive_part(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

fn check_positive(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("argument must be positive, got {r}")))
    }
}

fn check_nonneg(r: f64) -> Result<()> {
    if r >= 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("argument must be nonnegative, got {r}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fam(m: f64) -> EntropyFamily {
        EntropyFamily::penalized(m).unwrap()
    }

    #[test]
    fn bregman_matches_direct_formula() {
        for m in [-0.5, -1.0, -2.5] {
            let f = fam(m);
            for (r, s) in [(0.2, 0.7), (0.7, 0.2), (3.0, 0.4), (0.4, 3.0), (2.0, 5.0), (0.9, 0.93), (1.5, 0.98)] {
                let direct = f.phi(r) - f.phi(s) - f.phi_prime(s) * (r - s);
                assert!((f.bregman(r, s) - direct).abs() <= 1e-11 * direct.abs(), "m={m} r={r} s={s}");
            }
        }
    }

    #[test]
    fn bregman_near_diagonal_is_quadratic() {
        let f = fam(-1.0);
        let (s, h) = (0.5, 2f64.powi(-30));
        // phi''(0.5) = 8 for m = -1
        let expect = 0.5 * 8.0 * h * h;
        assert!((f.bregman(s + h, s) / expect - 1.0).abs() < 1e-8);
    }

    #[test]
    fn hand_values() {
        let f = fam(-1.0);
        assert_eq!(f.phi(1.0), 0.0);
        assert_eq!(f.phi(2.0), 0.5);
        assert!((f.phi(0.5) - 0.25).abs() < 1e-15);
        assert_eq!(f.phi_prime(1.0), 0.0);
        assert!((f.phi_prime(0.5) + 1.5).abs() < 1e-15);
        assert!((f.phi_second(0.5) - 8.0).abs() < 1e-14);
    }

    #[test]
    fn inverse_values() {
        let f = fam(-1.0);
        assert_eq!(f.g_inverse(0.0), 1.0);
        assert_eq!(f.g_inverse(1.0), 2.0);
        assert!((f.g_inverse(-1.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn theta_values() {
        let f = fam(-1.0);
        assert_eq!(f.theta(3.0, 0.0), 0.0);
        assert_eq!(f.theta(0.0, 3.0), 0.0);
        assert!((f.theta(4.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((f.theta(0.5, 2.0) - 0.6).abs() < 1e-15);
        assert!((f.theta(1.0, 1.0) - 1.0).abs() < 1e-15);
        // nearly equal arguments use the midpoint second derivative
        let s = 0.3;
        assert!((f.theta(s, s * (1.0 + 1e-12)) - 1.0 / f.phi_second(s)).abs() < 1e-9);
    }

    #[test]
    fn domain_errors() {
        let f = fam(-1.0);
        assert!(f.checked_phi(-1.0).is_err());
        assert!(f.checked_phi_prime(0.0).is_err());
        assert!(f.checked_phi_second(-0.1).is_err());
        assert!(EntropyFamily::penalized(0.5).is_err());
        assert!(kappa(0.0).is_err());
        assert!(kappa(0.3).is_err());
    }

    #[test]
    fn power_variant_is_infinite_at_zero() {
        let p = EntropyFamily::power(-1.0).unwrap();
        assert_eq!(p.phi(0.0), f64::INFINITY);
        assert_eq!(EntropyFamily::log().phi(0.0), f64::INFINITY);
        assert_eq!(EntropyFamily::boltzmann().phi(0.0), 1.0);
        assert_eq!(fam(-2.0).phi(0.0), f64::INFINITY);
    }

    #[test]
    fn every_variant_vanishes_at_one() {
        for f in [fam(-1.0), EntropyFamily::power(-0.5).unwrap(), EntropyFamily::log(), EntropyFamily::boltzmann()] {
            assert!(f.phi(1.0).abs() < 1e-15);
            assert!(f.phi_prime(1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn reference_inverses() {
        for f in [EntropyFamily::power(-0.5).unwrap(), EntropyFamily::log(), EntropyFamily::boltzmann()] {
            for r in [0.1, 0.7, 1.0, 2.5] {
                let y = f.phi_prime(r);
                assert!((f.checked_g_inverse(y).unwrap() - r).abs() < 1e-12 * r.max(1.0));
            }
        }
        assert!(EntropyFamily::log().checked_g_inverse(1.0).is_err());
    }

    #[test]
    fn boltzmann_theta_is_log_mean() {
        let f = EntropyFamily::boltzmann();
        assert!((f.theta(1.0, 1.0) - 1.0).abs() < 1e-15);
        let (s, t): (f64, f64) = (2.0, 0.5);
        assert!((f.theta(s, t) - (s - t) / (s.ln() - t.ln())).abs() < 1e-15);
    }

    #[test]
    fn kappa_values() {
        assert_eq!(kappa(-1.0).unwrap(), 0.25);
        assert!((kappa(-2.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let k = kappa(-1e8).unwrap();
        assert!(k < 0.5 && 0.5 - k < 1e-7);
    }

    #[test]
    fn c_theta_integrand_endpoints() {
        let f = fam(-1.0);
        assert!((1.0 / f.theta(1.0, 1.0).sqrt() - 1.0).abs() < 1e-15);
        assert!((f.theta(0.5, 1.5) - 0.5).abs() < 1e-15);
    }

    // composite Simpson on r = 1 - s^8 with a million panels
    fn simpson_oracle(f: &EntropyFamily) -> f64 {
        let k = 40.0;
        let g = |s: f64| {
            if s == 0.0 {
                return 0.0;
            }
            let sk: f64 = s.powf(k);
            if sk < 1e-150 {
                return 0.0;
            }
            k * s.powf(k - 1.0) / f.theta(sk, 2.0 - sk).sqrt()
        };
        let n = 1_000_000;
        let h = 1.0 / n as f64;
        let mut acc = g(0.0) + g(1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * g(i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn c_theta_matches_simpson_oracle() {
        for m in [-0.25, -0.5, -0.8] {
            let f = fam(m);
            let v = f.c_theta(200_000).unwrap();
            let oracle = simpson_oracle(&f);
            assert!((v - oracle).abs() < 1e-8 * oracle, "m={m}: {v} vs {oracle}");
            assert!(v > 1.0);
        }
    }

    #[test]
    fn c_theta_diverges_for_steep_exponents() {
        assert!(matches!(fam(-1.0).c_theta(100_000), Err(Error::NonFinite(_))));
        assert!(matches!(fam(-3.0).c_theta(100_000), Err(Error::NonFinite(_))));
        assert!(EntropyFamily::boltzmann().c_theta(1000).is_err());
    }

    #[test]
    fn junction_is_c2() {
        let f = fam(-1.7);
        let e = 1e-9;
        assert!((f.phi_second(1.0 - e) - 1.0).abs() < 1e-8);
        assert_eq!(f.phi_second(1.0), 1.0);
        assert!((f.phi_prime(1.0 - e) - f.phi_prime(1.0 + e)).abs() < 1e-8);
    }

    #[test]
    fn blows_up_at_zero() {
        let f = fam(-0.5);
        assert!(f.phi(1e-12) > 1e5);
        assert!(f.phi_prime(1e-12) < -1e5);
    }

    fn m_strategy() -> impl Strategy<Value = f64> {
        -4.0f64..-0.05
    }

    proptest! {
        #[test]
        fn bregman_dominates_half_square(m in -3.0f64..-0.05, r in 1e-3f64..5.0, s in 1e-3f64..5.0) {
            let f = fam(m);
            prop_assert!(f.bregman(r, s) >= 0.5 * (r - s) * (r - s));
        }

        #[test]
        fn convex_midpoint(m in m_strategy(), a in 1e-3f64..8.0, d in 1e-3f64..8.0) {
            let f = fam(m);
            let b = a + d;
            let mid = f.phi(0.5 * (a + b));
            prop_assert!(mid < 0.5 * (f.phi(a) + f.phi(b)) - 1e-12 || d < 1e-2);
            prop_assert!(mid <= 0.5 * (f.phi(a) + f.phi(b)));
        }

        #[test]
        fn derivatives_match_finite_differences(m in m_strategy(), r in 1e-4f64..10.0) {
            let f = fam(m);
            // stay off the junction where the third derivative jumps
            prop_assume!((r - 1.0).abs() > 1e-3);
            let h = 1e-6 * r;
            let d1 = (f.phi(r + h) - f.phi(r - h)) / (2.0 * h);
            prop_assert!((d1 - f.phi_prime(r)).abs() <= 1e-6 * f.phi_prime(r).abs().max(1.0));
            let d2 = (f.phi_prime(r + h) - f.phi_prime(r - h)) / (2.0 * h);
            prop_assert!((d2 - f.phi_second(r)).abs() <= 1e-6 * f.phi_second(r));
        }

        #[test]
        fn second_derivative_bounds(m in m_strategy(), a in 1e-4f64..10.0, b in 1e-4f64..10.0) {
            let f = fam(m);
            prop_assert!(f.phi_second(a) >= 1.0);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(f.phi_second(lo) >= f.phi_second(hi));
        }

        #[test]
        fn inverse_roundtrip(m in m_strategy(), y in -1e3f64..1e3) {
            let f = fam(m);
            let r = f.g_inverse(y);
            prop_assert!(r > 0.0);
            prop_assert!((f.phi_prime(r) - y).abs() <= 1e-12 * y.abs().max(1.0));
        }

        #[test]
        fn inverse_derivative(m in m_strategy(), y in -50.0f64..50.0) {
            let f = fam(m);
            prop_assume!(y.abs() > 1e-3);
            let h = 1e-6 * y.abs().max(1.0);
            let fd = (f.g_inverse(y + h) - f.g_inverse(y - h)) / (2.0 * h);
            let exact = f.g_inverse_prime(y);
            prop_assert!(exact > 0.0 && exact <= 1.0);
            prop_assert!((fd - exact).abs() <= 1e-5 * exact.max(1e-3));
        }

        #[test]
        fn theta_symmetric_and_identity(m in m_strategy(), s in 1e-3f64..10.0, t in 1e-3f64..10.0) {
            let f = fam(m);
            prop_assert_eq!(f.theta(s, t), f.theta(t, s));
            prop_assume!((s - t).abs() > 1e-9 * s.max(t));
            let lhs = f.theta(s, t) * (f.phi_prime(t) - f.phi_prime(s));
            prop_assert!((lhs - (t - s)).abs() <= 1e-12 * (t - s).abs().max(1.0));
        }

        #[test]
        fn convexity_gap_inequality(m in m_strategy(), s in 1e-3f64..10.0, t in 1e-3f64..10.0) {
            let f = fam(m);
            let lhs = (t - s) * (f.phi_prime(t) - f.phi_prime(s));
            let rhs = f.phi(t) - f.phi(s) - f.phi_prime(s) * (t - s);
            prop_assert!(lhs >= rhs - 1e-12 * lhs.abs().max(1.0));
        }

        #[test]
        fn theta_lipschitz_in_box(m in m_strategy(), s in 0.2f64..5.0, t in 0.2f64..5.0, ds in -1e-4f64..1e-4, dt in -1e-4f64..1e-4) {
            let f = fam(m);
            // Lipschitz constant of phi'' on the box [0.19, 5.01]
            let lip = (2.0 - m) * 0.19f64.powf(m - 3.0);
            let num = (f.theta(s + ds, t + dt) - f.theta(s, t)).abs();
            let den = ds.abs().max(dt.abs()).max(1e-12);
            prop_assert!(num / den <= 2.0 * lip);
        }
    }

    #[test]
    fn theta_monotone_on_grid() {
        let f = fam(-1.0);
        let grid: Vec<f64> = (0..50).map(|i| 0.05 + 0.1 * i as f64).collect();
        for &t in &grid {
            for (i, &r) in grid.iter().enumerate() {
                for &s in &grid[i..] {
                    assert!(f.theta(r, t) <= f.theta(s, t) + 1e-15, "r={r} s={s} t={t}");
                }
            }
        }
    }
}
