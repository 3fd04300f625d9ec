//! Exact samplers for finite jump processes and interacting particle systems
//! whose empirical measure follows the nonlinear flow.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::entropy::EntropyFamily;
use crate::error::{Error, Result};
use crate::flow::{adaptive_simpson, Schedule, SnapshotGrid, Trajectory};

/// Piecewise-constant path of a jump process: `states[k]` holds on `[times[k], times[k+1])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Path {
    pub times: Vec<f64>,
    pub states: Vec<usize>,
    pub horizon: f64,
}

impl Path {
    pub fn state_at(&self, t: f64) -> usize {
        let k = self.times.partition_point(|s| *s <= t);
        self.states[k.saturating_sub(1)]
    }

    pub fn jumps(&self) -> usize {
        self.times.len() - 1
    }

    /// Holding times of the completed segments.
    pub fn holding_times(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

pub(crate) fn sample_index<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            last = i;
            if u < *w {
                return i;
            }
            u -= w;
        }
    }
    last
}

fn check_start(m0: &[f64], n: usize) -> Result<()> {
    if m0.len() != n {
        return Err(Error::Dimension { expected: n, got: m0.len() });
    }
    let total: f64 = m0.iter().sum();
    if m0.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::BadMeasure("initial law must be a probability vector".into()));
    }
    Ok(())
}

/// Path of the chain with generator `gen` started from law `m0`.
pub fn sample_homogeneous(gen: &DMatrix<f64>, m0: &[f64], horizon: f64, seed: u64) -> Result<Path> {
    let n = gen.nrows();
    check_start(m0, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = sample_index(&mut rng, m0);
    let mut times = vec![0.0];
    let mut states = vec![x];
    let mut t = 0.0;
    let mut row = vec![0.0; n];
    loop {
        let exit = -gen[(x, x)];
        if !(exit > 0.0) {
            break;
        }
        let e: f64 = rng.sample(Exp1);
        t += e / exit;
        if t > horizon {
            break;
        }
        for y in 0..n {
            row[y] = if y == x { 0.0 } else { gen[(x, y)] };
        }
        x = sample_index(&mut rng, &row);
        times.push(t);
        states.push(x);
    }
    Ok(Path { times, states, horizon })
}

/// First time `tau > t` with `int_t^tau rate = e`, or `None` if that exceeds `limit`.
/// The rate must be nonnegative; the integral is resolved to `1e-12`.
pub fn invert_integrated_rate(rate: &dyn Fn(f64) -> f64, t: f64, e: f64, limit: f64) -> Option<f64> {
    let mut a = t;
    let mut acc = 0.0;
    let r0 = rate(t);
    let mut h = if r0 > 0.0 { (e / r0).min(limit - t) } else { (limit - t) / 64.0 };
    h = h.max(1e-12 * (1.0 + t.abs()));
    while a < limit {
        let b = (a + h).min(limit);
        let piece = adaptive_simpson(rate, a, b, 1e-14, 40);
        if acc + piece >= e {
            let rem = e - acc;
            return Some(solve_in_segment(&|u| adaptive_simpson(rate, a, u, 1e-14, 40) - rem, rate, a, b));
        }
        acc += piece;
        a = b;
        h *= 2.0;
    }
    None
}

/// Root of the nondecreasing `f` on `[lo, hi]` by Newton steps with bisection fallback.
fn solve_in_segment(f: &dyn Fn(f64) -> f64, slope: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut u = 0.5 * (lo + hi);
    for _ in 0..200 {
        let v = f(u);
        if v.abs() <= 1e-12 {
            return u;
        }
        if v > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            return 0.5 * (lo + hi);
        }
        let d = slope(u);
        let next = u - v / d;
        u = if d > 0.0 && next > lo && next < hi { next } else { 0.5 * (lo + hi) };
    }
    u
}

/// Path of the chain with time-dependent generator `curve(t)`.
pub fn sample_inhomogeneous(curve: &dyn Fn(f64) -> DMatrix<f64>, m0: &[f64], horizon: f64, seed: u64) -> Result<Path> {
    let g0 = curve(0.0);
    let n = g0.nrows();
    check_start(m0, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = sample_index(&mut rng, m0);
    let mut times = vec![0.0];
    let mut states = vec![x];
    let mut t = 0.0;
    let mut row = vec![0.0; n];
    loop {
        let e: f64 = rng.sample(Exp1);
        let here = x;
        let exit = |s: f64| -curve(s)[(here, here)];
        let Some(tau) = invert_integrated_rate(&exit, t, e, horizon) else {
            break;
        };
        let g = curve(tau);
        for y in 0..n {
            row[y] = if y == x { 0.0 } else { g[(x, y)] };
        }
        if row.iter().sum::<f64>() <= 0.0 {
            break;
        }
        x = sample_index(&mut rng, &row);
        t = tau;
        times.push(t);
        states.push(x);
    }
    Ok(Path { times, states, horizon })
}

/// Rate term `max(0, c + d beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hinge {
    pub c: f64,
    pub d: f64,
}

impl Hinge {
    #[inline]
    pub fn at(&self, beta: f64) -> f64 {
        (self.c + self.d * beta).max(0.0)
    }
}

/// `int_a^b ((t0 + s)^alpha - 1) ds`, stable for large `a`.
fn power_beta_integral(t0: f64, alpha: f64, a: f64, b: f64) -> f64 {
    let base = t0 + a;
    let span = b - a;
    base.powf(alpha + 1.0) * ((alpha + 1.0) * (span / base).ln_1p()).exp_m1() / (alpha + 1.0) - span
}

/// First time after `t` at which the integral of `sum max(0, c + d beta_s)`
/// reaches `e`, or `None` past `limit`. Closed form for power and constant
/// schedules; numeric quadrature otherwise.
pub fn invert_hinge_integral(terms: &[Hinge], schedule: &Schedule, t: f64, e: f64, limit: f64) -> Option<f64> {
    match schedule {
        Schedule::Constant(beta) => {
            let r: f64 = terms.iter().map(|h| h.at(*beta)).sum();
            if !(r > 0.0) {
                return None;
            }
            let tau = t + e / r;
            (tau <= limit).then_some(tau)
        }
        Schedule::Power { t0, alpha } => invert_power(terms, *t0, *alpha, t, e, limit),
        Schedule::Custom(_) => {
            let rate = |s: f64| {
                let b = schedule.beta(s);
                terms.iter().map(|h| h.at(b)).sum::<f64>()
            };
            invert_integrated_rate(&rate, t, e, limit)
        }
    }
}

fn invert_power(terms: &[Hinge], t0: f64, alpha: f64, t: f64, e: f64, limit: f64) -> Option<f64> {
    let beta_at = |s: f64| (t0 + s).powf(alpha) - 1.0;
    let beta_t = beta_at(t);
    let mut cuts: Vec<f64> = terms
        .iter()
        .filter(|h| h.d != 0.0)
        .map(|h| -h.c / h.d)
        .filter(|b| *b > beta_t)
        .map(|b| (b + 1.0).powf(1.0 / alpha) - t0)
        .filter(|s| *s > t && *s < limit)
        .collect();
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup();
    cuts.push(limit);
    let mut a = t;
    let mut acc = 0.0;
    for &b in &cuts {
        let mid = beta_at(0.5 * (a + b));
        let (mut c, mut d) = (0.0, 0.0);
        for h in terms {
            if h.c + h.d * mid > 0.0 {
                c += h.c;
                d += h.d;
            }
        }
        let piece = c * (b - a) + d * power_beta_integral(t0, alpha, a, b);
        if acc + piece >= e {
            let rem = e - acc;
            let f = |u: f64| c * (u - a) + d * power_beta_integral(t0, alpha, a, u) - rem;
            let slope = |u: f64| (c + d * beta_at(u)).max(0.0);
            return Some(solve_in_segment(&f, &slope, a, b));
        }
        acc += piece;
        a = b;
    }
    None
}

/// Time-varying mixing weight of the hybrid generator.
#[derive(Clone)]
pub enum HybridWeight {
    Constant(f64),
    Curve(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for HybridWeight {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HybridWeight::Constant(a) => write!(f, "Constant({a})"),
            HybridWeight::Curve(_) => f.write_str("Curve"),
        }
    }
}

impl HybridWeight {
    fn at(&self, t: f64) -> f64 {
        match self {
            HybridWeight::Constant(a) => *a,
            HybridWeight::Curve(c) => c(t),
        }
    }
}

#[derive(Debug, Clone)]
pub enum SwarmKind {
    First,
    Second,
    Hybrid(HybridWeight),
}

#[derive(Debug, Clone)]
pub struct SwarmConfig {
    pub particles: usize,
    pub kind: SwarmKind,
    pub schedule: Schedule,
    pub horizon: f64,
    pub seed: u64,
    pub grid: SnapshotGrid,
    /// Additive smoothing of the empirical density.
    pub epsilon: f64,
    /// Maximum number of logged events; counting continues past the cap.
    pub event_cap: usize,
    /// Resample one clock per particle at every event instead of a single total-rate clock.
    pub literal_race: bool,
    /// Initial law of each particle; `None` means `ell`.
    pub initial: Option<Vec<f64>>,
}

impl SwarmConfig {
    pub fn new(particles: usize, kind: SwarmKind, schedule: Schedule, horizon: f64, seed: u64) -> Self {
        SwarmConfig {
            particles,
            kind,
            schedule,
            horizon,
            seed,
            grid: SnapshotGrid::default(),
            epsilon: 0.5,
            event_cap: 1_000_000,
            literal_race: false,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub index: usize,
    pub t: f64,
    pub particle: usize,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwarmSnapshot {
    pub t: f64,
    /// Fraction of particles at each state.
    pub empirical: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwarmRun {
    pub snapshots: Vec<SwarmSnapshot>,
    pub events: Vec<Event>,
    pub event_count: usize,
    pub truncated: bool,
}

#[derive(Clone, Copy)]
enum Share {
    Fixed,
    First,
    Second,
}

#[derive(Clone, Copy)]
struct Entry {
    from: usize,
    to: usize,
    hinge: Hinge,
    share: Share,
}

/// Exit terms from every occupied state at the current smoothed density.
fn build_entries(
    land: &crate::model::EnergyLandscape,
    fam: &EntropyFamily,
    kind: &SwarmKind,
    counts: &[usize],
    rho: &[f64],
    out: &mut Vec<Entry>,
) {
    out.clear();
    let u = land.objective();
    for x in 0..land.n() {
        if counts[x] == 0 {
            continue;
        }
        for &(y, rate) in land.neighbors(x) {
            let th = fam.theta(rho[x], rho[y]);
            let du = u[y] - u[x];
            // first kind: L (theta beta dU / rho(x) + rho(y)/rho(x) - 1)_-
            let first = Hinge { c: rate * (1.0 - rho[y] / rho[x]), d: -rate * th * du / rho[x] };
            // second kind: L (1 + theta / rho(x) beta (dU)_-)
            let second = Hinge { c: rate, d: rate * th / rho[x] * (-du).max(0.0) };
            match kind {
                SwarmKind::First => out.push(Entry { from: x, to: y, hinge: first, share: Share::Fixed }),
                SwarmKind::Second => out.push(Entry { from: x, to: y, hinge: second, share: Share::Fixed }),
                SwarmKind::Hybrid(HybridWeight::Constant(a)) => {
                    let w = 1.0 - a;
                    out.push(Entry { from: x, to: y, hinge: Hinge { c: w * first.c, d: w * first.d }, share: Share::Fixed });
                    out.push(Entry { from: x, to: y, hinge: Hinge { c: a * second.c, d: a * second.d }, share: Share::Fixed });
                }
                SwarmKind::Hybrid(HybridWeight::Curve(_)) => {
                    out.push(Entry { from: x, to: y, hinge: first, share: Share::First });
                    out.push(Entry { from: x, to: y, hinge: second, share: Share::Second });
                }
            }
        }
    }
}

fn entry_rate(e: &Entry, beta: f64, a: f64) -> f64 {
    let v = e.hinge.at(beta);
    match e.share {
        Share::Fixed => v,
        Share::First => (1.0 - a) * v,
        Share::Second => a * v,
    }
}

struct Clock<'a> {
    schedule: &'a Schedule,
    weight: Option<&'a HybridWeight>,
}

impl Clock<'_> {
    /// Next event time for the weighted sum of entries.
    fn next(&self, entries: &[Entry], weights: &[f64], t: f64, e: f64, limit: f64) -> Option<f64> {
        match self.weight {
            None => {
                let terms: Vec<Hinge> = entries
                    .iter()
                    .zip(weights)
                    .filter(|(_, w)| **w > 0.0)
                    .map(|(en, w)| Hinge { c: w * en.hinge.c, d: w * en.hinge.d })
                    .collect();
                invert_hinge_integral(&terms, self.schedule, t, e, limit)
            }
            Some(hw) => {
                let rate = |s: f64| {
                    let (b, a) = (self.schedule.beta(s), hw.at(s));
                    entries.iter().zip(weights).map(|(en, w)| w * entry_rate(en, b, a)).sum::<f64>()
                };
                invert_integrated_rate(&rate, t, e, limit)
            }
        }
    }
}

/// Interacting particle system driven by the first, second or hybrid generator
/// evaluated at the smoothed empirical density.
pub fn simulate_swarm(land: &crate::model::EnergyLandscape, fam: &EntropyFamily, config: &SwarmConfig) -> Result<SwarmRun> {
    fam.require_penalized()?;
    let n = land.n();
    let np = config.particles;
    if np == 0 {
        return Err(Error::Validation { field: "particles".into(), message: "must be at least 1".into() });
    }
    if !(config.epsilon > 0.0) {
        return Err(Error::Validation { field: "epsilon".into(), message: "smoothing must be positive".into() });
    }
    if let SwarmKind::Hybrid(HybridWeight::Constant(a)) = config.kind {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::Validation { field: "hybrid".into(), message: format!("weight must lie in [0, 1], got {a}") });
        }
    }
    config.schedule.validate(fam.m, false)?;
    let initial = config.initial.clone().unwrap_or_else(|| land.ell().to_vec());
    check_start(&initial, n)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut positions: Vec<usize> = (0..np).map(|_| sample_index(&mut rng, &initial)).collect();
    // members[x] lists particles at x; slot[l] is l's index inside members[positions[l]]
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut slot = vec![0usize; np];
    for (l, &x) in positions.iter().enumerate() {
        slot[l] = members[x].len();
        members[x].push(l);
    }
    let weight = match &config.kind {
        SwarmKind::Hybrid(hw @ HybridWeight::Curve(_)) => Some(hw),
        _ => None,
    };
    let clock = Clock { schedule: &config.schedule, weight };

    let times = config.grid.times(config.horizon);
    let mut next_snap = 0;
    let mut snapshots = Vec::with_capacity(times.len());
    let mut events = Vec::new();
    let mut event_count = 0usize;
    let mut entries = Vec::new();
    let mut rho = vec![0.0; n];
    let mut t = 0.0;
    let denom = np as f64 + config.epsilon * n as f64;
    let ell = land.ell();

    loop {
        let counts: Vec<usize> = members.iter().map(|m| m.len()).collect();
        for x in 0..n {
            rho[x] = (counts[x] as f64 + config.epsilon) / (denom * ell[x]);
        }
        build_entries(land, fam, &config.kind, &counts, &rho, &mut entries);

        let (tau, chosen) = if config.literal_race {
            let mut best: Option<(f64, usize)> = None;
            let mut per_state: Vec<Vec<usize>> = vec![Vec::new(); n];
            for (i, en) in entries.iter().enumerate() {
                per_state[en.from].push(i);
            }
            for l in 0..np {
                let e: f64 = rng.sample(Exp1);
                let own: Vec<Entry> = per_state[positions[l]].iter().map(|&i| entries[i]).collect();
                let ones = vec![1.0; own.len()];
                if let Some(tl) = clock.next(&own, &ones, t, e, config.horizon) {
                    if best.is_none_or(|(b, _)| tl < b) {
                        best = Some((tl, l));
                    }
                }
            }
            match best {
                Some((tl, l)) => (Some(tl), Some(l)),
                None => (None, None),
            }
        } else {
            let weights: Vec<f64> = entries.iter().map(|en| counts[en.from] as f64).collect();
            let e: f64 = rng.sample(Exp1);
            (clock.next(&entries, &weights, t, e, config.horizon), None)
        };

        let stop = tau.unwrap_or(f64::INFINITY);
        while next_snap < times.len() && times[next_snap] < stop {
            snapshots.push(SwarmSnapshot { t: times[next_snap], empirical: counts.iter().map(|c| *c as f64 / np as f64).collect() });
            next_snap += 1;
        }
        let Some(tau) = tau else { break };

        let beta = config.schedule.beta(tau);
        let a = weight.map(|hw| hw.at(tau)).unwrap_or(0.0);
        let particle = match chosen {
            Some(l) => l,
            None => {
                let mut state_rate = vec![0.0; n];
                for en in &entries {
                    state_rate[en.from] += entry_rate(en, beta, a);
                }
                let w: Vec<f64> = (0..n).map(|x| counts[x] as f64 * state_rate[x]).collect();
                let x = sample_index(&mut rng, &w);
                members[x][rng.random_range(0..members[x].len())]
            }
        };
        let from = positions[particle];
        let (targets, rates): (Vec<usize>, Vec<f64>) =
            entries.iter().filter(|en| en.from == from).map(|en| (en.to, entry_rate(en, beta, a))).unzip();
        let to = targets[sample_index(&mut rng, &rates)];

        // move the particle
        let s = slot[particle];
        members[from].swap_remove(s);
        if s < members[from].len() {
            slot[members[from][s]] = s;
        }
        slot[particle] = members[to].len();
        members[to].push(particle);
        positions[particle] = to;
        t = tau;
        if events.len() < config.event_cap {
            events.push(Event { index: event_count, t, particle, from, to });
        }
        event_count += 1;
    }
    Ok(SwarmRun { snapshots, truncated: event_count > events.len(), events, event_count })
}

#[derive(Debug, Clone, Serialize)]
pub struct MarginalPoint {
    pub t: f64,
    /// `||empirical / ell - rho_t||` in `L^2(ell)`.
    pub distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MarginalReport {
    pub points: Vec<MarginalPoint>,
    pub worst: f64,
    /// `1 / sqrt(N)`.
    pub scale: f64,
    /// `worst <= 5 / sqrt(N)`.
    pub pass: bool,
}

/// Distance between swarm snapshots and the deterministic flow at matching times.
pub fn marginal_agreement(
    land: &crate::model::EnergyLandscape,
    fam: &EntropyFamily,
    config: &SwarmConfig,
    ode: &Trajectory,
) -> Result<MarginalReport> {
    let run = simulate_swarm(land, fam, config)?;
    compare_marginals(land, &run, ode, config.particles)
}

pub fn compare_marginals(land: &crate::model::EnergyLandscape, run: &SwarmRun, ode: &Trajectory, particles: usize) -> Result<MarginalReport> {
    let ell = land.ell();
    let mut points = Vec::new();
    for snap in &run.snapshots {
        let k = ode
            .times
            .iter()
            .position(|t| (t - snap.t).abs() <= 1e-12 * snap.t.abs().max(1.0))
            .ok_or_else(|| Error::Validation { field: "grid".into(), message: format!("flow has no snapshot at t = {}", snap.t) })?;
        let rho = &ode.densities[k];
        let d2: f64 = (0..land.n()).map(|x| ell[x] * (snap.empirical[x] / ell[x] - rho[x]).powi(2)).sum();
        points.push(MarginalPoint { t: snap.t, distance: d2.sqrt() });
    }
    let worst = points.iter().map(|p| p.distance).fold(0.0, f64::max);
    let scale = 1.0 / (particles as f64).sqrt();
    Ok(MarginalReport { points, worst, scale, pass: worst <= 5.0 * scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{integrate_homogeneous, Controls};
    use crate::model::{random_landscape, ring, ring20};
    use crate::stationary::solve_eta;

    fn fam() -> EntropyFamily {
        EntropyFamily::penalized(-1.0).unwrap()
    }

    fn two_state() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0])
    }

    // Kolmogorov-Smirnov statistic against a continuous CDF
    fn ks(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(|a, b| a.total_cmp(b));
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, x)| {
                let f = cdf(*x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn holding_times_have_unit_mean() {
        let path = sample_homogeneous(&two_state(), &[1.0, 0.0], 1.2e5, 1).unwrap();
        let mut holds = path.holding_times();
        holds.truncate(100_000);
        assert!(holds.len() == 100_000);
        let mean = holds.iter().sum::<f64>() / holds.len() as f64;
        assert!((0.99..=1.01).contains(&mean), "{mean}");
    }

    #[test]
    fn absorbing_state_gives_single_segment() {
        let gen = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, -1.0]);
        let path = sample_homogeneous(&gen, &[1.0, 0.0], 10.0, 3).unwrap();
        assert_eq!(path.times, vec![0.0]);
        assert_eq!(path.states, vec![0]);
        assert_eq!(path.state_at(9.0), 0);
    }

    #[test]
    fn two_state_marginal_matches_closed_form() {
        // P(X_t = 0 | X_0 = 0) = 1/2 + e^{-2t}/2
        let t = 0.4;
        let paths = 100_000;
        let hits = (0..paths).filter(|&s| sample_homogeneous(&two_state(), &[1.0, 0.0], t, s as u64).unwrap().state_at(t) == 0).count();
        let p = 0.5 + 0.5 * (-2.0 * t).exp();
        let sigma = (p * (1.0 - p) / paths as f64).sqrt();
        assert!((hits as f64 / paths as f64 - p).abs() <= 3.0 * sigma);
    }

    #[test]
    fn constant_curve_first_jump_is_exponential() {
        let g = two_state() * 2.0;
        let curve = |_s: f64| g.clone();
        let firsts: Vec<f64> = (0..10_000)
            .filter_map(|s| {
                let p = sample_inhomogeneous(&curve, &[1.0, 0.0], 50.0, s).unwrap();
                p.times.get(1).copied()
            })
            .collect();
        assert_eq!(firsts.len(), 10_000);
        let d = ks(firsts, |x| 1.0 - (-2.0 * x).exp());
        assert!(d < 1.628 / 100.0, "{d}");
    }

    #[test]
    fn linear_rate_inverts_to_square_root() {
        for e in [0.01, 0.5, 1.0, 7.3] {
            let tau = invert_integrated_rate(&|s| 2.0 * s, 0.0, e, 100.0).unwrap();
            assert!((tau - f64::sqrt(e)).abs() < 1e-10, "{tau}");
        }
        assert!(invert_integrated_rate(&|s| 2.0 * s, 0.0, 5.0, 2.0).is_none());
    }

    // bisection on a quadrature of the rate, independent of the closed form
    fn bisection_oracle(terms: &[Hinge], sched: &Schedule, t: f64, e: f64) -> f64 {
        let rate = |s: f64| terms.iter().map(|h| h.at(sched.beta(s))).sum::<f64>();
        let integral = |b: f64| {
            let panels = 20_000;
            let h = (b - t) / panels as f64;
            let mut acc = rate(t) + rate(b);
            for i in 1..panels {
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * rate(t + i as f64 * h);
            }
            acc * h / 3.0
        };
        let (mut lo, mut hi) = (t, t + 1.0);
        while integral(hi) < e {
            hi = t + 2.0 * (hi - t);
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if integral(mid) < e {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn power_schedule_inversion_matches_bisection() {
        let sched = Schedule::power(1.0, 0.25);
        let cases: Vec<Vec<Hinge>> = vec![
            vec![Hinge { c: 1.0, d: 0.5 }],
            vec![Hinge { c: 0.3, d: -0.4 }, Hinge { c: -0.2, d: 0.7 }],
            vec![Hinge { c: 2.0, d: -1.5 }, Hinge { c: 0.1, d: 0.0 }],
        ];
        for terms in &cases {
            for (t, e) in [(0.0, 0.3), (2.0, 1.7), (30.0, 4.0)] {
                let tau = invert_hinge_integral(terms, &sched, t, e, 1e6).unwrap();
                let oracle = bisection_oracle(terms, &sched, t, e);
                assert!((tau - oracle).abs() <= 1e-10 * tau.max(1.0), "{terms:?} {t} {e}: {tau} vs {oracle}");
            }
        }
    }

    #[test]
    fn custom_schedule_inversion_agrees_with_closed_form() {
        let power = Schedule::power(2.0, 0.3);
        let custom = Schedule::custom(|t| (2.0 + t).powf(0.3) - 1.0, |t| 0.3 * (2.0 + t).powf(-0.7));
        let terms = [Hinge { c: 0.5, d: -0.2 }, Hinge { c: -0.1, d: 0.4 }];
        let a = invert_hinge_integral(&terms, &power, 1.0, 2.5, 1e6).unwrap();
        let b = invert_hinge_integral(&terms, &custom, 1.0, 2.5, 1e6).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} {b}");
    }

    #[test]
    fn vanishing_rates_never_jump() {
        let sched = Schedule::power(1.0, 0.25);
        assert!(invert_hinge_integral(&[Hinge { c: 0.5, d: -1.0 }], &sched, 10.0, 1.0, 1e9).is_none());
        assert!(invert_hinge_integral(&[], &Schedule::Constant(1.0), 0.0, 1.0, 1e9).is_none());
    }

    #[test]
    fn single_particle_second_kind_at_zero_temperature_is_base_chain() {
        let land = ring(3, |i| i as f64);
        let f = fam();
        let t = 0.3;
        let runs = 20_000;
        let mut hits = 0;
        for s in 0..runs {
            let mut cfg = SwarmConfig::new(1, SwarmKind::Second, Schedule::Constant(0.0), t, s);
            cfg.initial = Some(vec![1.0, 0.0, 0.0]);
            cfg.grid = SnapshotGrid::Explicit(vec![]);
            let run = simulate_swarm(&land, &f, &cfg).unwrap();
            if run.snapshots.last().unwrap().empirical[0] == 1.0 {
                hits += 1;
            }
        }
        // complete graph on 3 states with unit rates: P(X_t = 0) = 1/3 + 2/3 e^{-3t}
        let p = 1.0 / 3.0 + 2.0 / 3.0 * (-3.0 * t).exp();
        let sigma = (p * (1.0 - p) / runs as f64).sqrt();
        assert!((hits as f64 / runs as f64 - p).abs() <= 3.0 * sigma);
    }

    #[test]
    fn swarm_is_deterministic() {
        let land = ring20();
        let cfg = SwarmConfig::new(50, SwarmKind::First, Schedule::power(1.0, 0.25), 20.0, 9);
        let a = simulate_swarm(&land, &fam(), &cfg).unwrap();
        let b = simulate_swarm(&land, &fam(), &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.event_count > 0);
    }

    #[test]
    fn event_cap_truncates_log_only() {
        let land = ring20();
        let mut cfg = SwarmConfig::new(50, SwarmKind::Second, Schedule::Constant(1.0), 10.0, 2);
        cfg.event_cap = 10;
        let run = simulate_swarm(&land, &fam(), &cfg).unwrap();
        assert_eq!(run.events.len(), 10);
        assert!(run.truncated && run.event_count > 10);
    }

    #[test]
    fn literal_race_matches_aggregated_race_in_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let land = random_landscape(&mut rng, 4, 1.0);
        let f = fam();
        let t = 1.0;
        let mean_mass = |literal: bool| {
            let reps = 400;
            let mut acc = vec![0.0; 4];
            for s in 0..reps {
                let mut cfg = SwarmConfig::new(20, SwarmKind::First, Schedule::Constant(2.0), t, 1000 + s);
                cfg.literal_race = literal;
                cfg.grid = SnapshotGrid::Explicit(vec![]);
                let run = simulate_swarm(&land, &f, &cfg).unwrap();
                for (a, v) in acc.iter_mut().zip(&run.snapshots.last().unwrap().empirical) {
                    *a += v / reps as f64;
                }
            }
            acc
        };
        let (a, b) = (mean_mass(false), mean_mass(true));
        // each mean has standard error below 0.5 / sqrt(20 * 400)
        for x in 0..4 {
            assert!((a[x] - b[x]).abs() < 6.0 * 0.5 / (8000f64).sqrt(), "{a:?} {b:?}");
        }
    }

    #[test]
    fn stationary_start_stays_near_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let land = random_landscape(&mut rng, 4, 1.0);
        let f = fam();
        let eta = solve_eta(&land, &f, 2.0).unwrap().eta;
        let mu = eta.measure(land.ell());
        let mut cfg = SwarmConfig::new(2000, SwarmKind::First, Schedule::Constant(2.0), 3.0, 4);
        cfg.initial = Some(mu);
        cfg.grid = SnapshotGrid::Geometric { first: 0.1, per_decade: 3 };
        let ode = integrate_homogeneous(&land, &f, 2.0, &eta, 3.0, &Controls { grid: cfg.grid.clone(), ..Controls::default() }).unwrap();
        let rep = marginal_agreement(&land, &f, &cfg, &ode).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn second_kind_jumps_more_at_late_times() {
        let land = ring20();
        let f = fam();
        let mut more = 0;
        for s in 0..10 {
            let count = |kind: SwarmKind| {
                let mut cfg = SwarmConfig::new(50, kind, Schedule::power(1.0, 0.25), 200.0, s);
                cfg.event_cap = 0;
                simulate_swarm(&land, &f, &cfg).unwrap().event_count
            };
            if count(SwarmKind::Second) > count(SwarmKind::First) {
                more += 1;
            }
        }
        assert_eq!(more, 10);
    }

    #[test]
    fn hybrid_curve_runs_and_is_deterministic() {
        let land = ring(5, |i| i as f64);
        let hw = HybridWeight::Curve(Arc::new(|t: f64| 1.0 - (-t).exp()));
        let cfg = SwarmConfig::new(30, SwarmKind::Hybrid(hw), Schedule::power(1.0, 0.25), 5.0, 3);
        let a = simulate_swarm(&land, &fam(), &cfg).unwrap();
        let b = simulate_swarm(&land, &fam(), &cfg).unwrap();
        assert_eq!(a, b);
        assert!(simulate_swarm(&land, &fam(), &SwarmConfig::new(0, SwarmKind::First, Schedule::Constant(1.0), 1.0, 0)).is_err());
    }
}
