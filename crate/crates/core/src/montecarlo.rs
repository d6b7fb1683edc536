//! Monte Carlo benchmark: Lie–Trotter splitting of the harvested logistic SDE
//! (exact logistic flow, then an exact driftless geometric Brownian step),
//! first-passage extraction, empirical moments and a kernel density estimate.
//!
//! Path `p` draws from ChaCha8 seeded with the run seed on stream `p`, so a
//! sample depends only on `(seed, paths, dt, horizon)`, never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{MomentMethod, MomentSet};
use crate::error::{FptError, Result};
use crate::model::{validate_problem, DerivedParams, Direction, FptProblem, ProblemKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub problem: FptProblem,
    pub interpolate_crossing: bool,
}

impl SimConfig {
    pub fn new(problem: FptProblem, paths: usize, seed: u64) -> Self {
        Self { paths, dt: 1e-3, horizon: 60.0, seed, problem, interpolate_crossing: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(FptError::InvalidParameter { name: "dt", reason: format!("must be > 0, got {}", self.dt) });
        }
        if !(self.horizon > self.dt && self.horizon.is_finite()) {
            return Err(FptError::InvalidParameter { name: "horizon", reason: "must be finite and exceed dt".into() });
        }
        if self.paths == 0 {
            return Err(FptError::InvalidParameter { name: "paths", reason: "must be >= 1".into() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FptSample {
    /// Crossing times, ascending.
    pub times: Vec<f64>,
    pub censored: usize,
    pub config: SimConfig,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
}

impl FptSample {
    pub fn from_times(mut times: Vec<f64>, censored: usize, config: SimConfig) -> Self {
        times.sort_by(f64::total_cmp);
        let (mean, variance, skewness) = summary(&times);
        Self { times, censored, config, mean, variance, skewness }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn censored_fraction(&self) -> f64 {
        let total = self.times.len() + self.censored;
        if total == 0 {
            0.0
        } else {
            self.censored as f64 / total as f64
        }
    }

    /// Standard error of the sample mean.
    pub fn mean_std_error(&self) -> f64 {
        (self.variance / self.times.len() as f64).sqrt()
    }
}

/// Mean, unbiased variance and moment skewness.
fn summary(x: &[f64]) -> (f64, f64, f64) {
    let n = x.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0, 0.0);
    }
    let (mut m2, mut m3) = (0.0, 0.0);
    for &t in x {
        let d = t - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    let var = m2 / (n - 1) as f64;
    let pop = m2 / n as f64;
    let skew = if pop > 0.0 { (m3 / n as f64) / pop.powf(1.5) } else { 0.0 };
    (mean, var, skew)
}

/// Constants of one splitting step at fixed `dt`.
#[derive(Debug, Clone, Copy)]
struct Stepper {
    k1: f64,
    growth: f64,
    log_drift: f64,
    vol: f64,
}

impl Stepper {
    fn new(d: &DerivedParams, dt: f64) -> Self {
        let r1 = d.r1.to_f64();
        let sigma = d.params.sigma;
        Self { k1: d.k1.to_f64(), growth: (r1 * dt).exp(), log_drift: -0.5 * sigma * sigma * dt, vol: sigma * dt.sqrt() }
    }

    #[inline]
    fn step(&self, x: f64, z: f64) -> f64 {
        let xs = self.k1 * x * self.growth / (self.k1 + x * (self.growth - 1.0));
        xs * (self.log_drift + self.vol * z).exp()
    }
}

/// One splitting step from `x` with standard normal draw `z`.
pub fn lie_trotter_step(x: f64, dt: f64, z: f64, d: &DerivedParams) -> f64 {
    Stepper::new(d, dt).step(x, z)
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

fn simulate_path(st: &Stepper, x0: f64, prob: &FptProblem, cfg: &SimConfig, steps: u64, path: usize) -> Option<f64> {
    let mut rng = path_rng(cfg.seed, path);
    let s = prob.threshold;
    let mut x = x0;
    for k in 0..steps {
        let z: f64 = StandardNormal.sample(&mut rng);
        let next = st.step(x, z);
        let crossed = match prob.direction {
            Direction::Up => next >= s,
            Direction::Down => next <= s,
        };
        if crossed {
            let t0 = k as f64 * cfg.dt;
            let frac = if cfg.interpolate_crossing { (s - x) / (next - x) } else { 1.0 };
            let t = (t0 + frac * cfg.dt).min(cfg.horizon);
            // interpolation can round onto the left end point; times stay in (0, horizon]
            return Some(if t > 0.0 { t } else { cfg.dt });
        }
        x = next;
    }
    None
}

/// Simulated first-passage times of `cfg.paths` independent paths from `d.params.x0`.
pub fn sample_fpt(d: &DerivedParams, cfg: &SimConfig) -> Result<FptSample> {
    cfg.validate()?;
    let x0 = d.params.x0;
    if validate_problem(d, x0, &cfg.problem)? == ProblemKind::DegenerateZero {
        return Ok(FptSample::from_times(vec![0.0; cfg.paths], 0, *cfg));
    }
    let st = Stepper::new(d, cfg.dt);
    let steps = (cfg.horizon / cfg.dt).ceil() as u64;
    let results: Vec<Option<f64>> =
        (0..cfg.paths).into_par_iter().map(|p| simulate_path(&st, x0, &cfg.problem, cfg, steps, p)).collect();
    let censored = results.iter().filter(|r| r.is_none()).count();
    let times = results.into_iter().flatten().collect();
    Ok(FptSample::from_times(times, censored, *cfg))
}

/// Raw sample moments `1..=order` of the uncensored times, with the
/// standard error of each as the error estimate.
pub fn empirical_moments(s: &FptSample, order: usize) -> Result<MomentSet> {
    if s.is_empty() {
        return Err(FptError::EmptySample);
    }
    let n = s.times.len() as f64;
    let mut sums = vec![0.0; 2 * order + 1];
    for &t in &s.times {
        let mut p = 1.0;
        for slot in sums.iter_mut() {
            *slot += p;
            p *= t;
        }
    }
    let raw: Vec<f64> = sums.iter().map(|v| v / n).collect();
    let mut m = MomentSet::from_values(s.config.problem, MomentMethod::Empirical, &raw[1..=order], 128);
    m.degenerate = s.times.iter().all(|&t| t == 0.0);
    for k in 1..=order {
        m.error_estimate[k] = ((raw[2 * k] - raw[k] * raw[k]).max(0.0) / n).sqrt();
    }
    Ok(m)
}

/// Silverman's rule `0.9 min(sd, IQR/1.34) n^{-1/5}`.
pub fn silverman_bandwidth(times: &[f64]) -> f64 {
    let n = times.len();
    let (_, var, _) = summary(times);
    let sd = var.sqrt();
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (n - 1) as f64;
        let i = pos.floor() as usize;
        let f = pos - i as f64;
        if i + 1 < n {
            sorted[i] * (1.0 - f) + sorted[i + 1] * f
        } else {
            sorted[n - 1]
        }
    };
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (n as f64).powf(-0.2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KdeCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

/// Gaussian kernel estimate on `grid`, reflected at `t = 0`.
pub fn kde(s: &FptSample, grid: &[f64]) -> Result<KdeCurve> {
    if s.is_empty() {
        return Err(FptError::EmptySample);
    }
    let times = &s.times;
    let h = silverman_bandwidth(times);
    if !(h > 0.0) {
        return Err(FptError::ZeroVariance);
    }
    let n = times.len() as f64;
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    let reach = 9.0 * h;
    let density = grid
        .par_iter()
        .map(|&t| {
            if t < 0.0 {
                return 0.0;
            }
            let lo = times.partition_point(|&x| x < t - reach);
            let hi = times.partition_point(|&x| x <= t + reach);
            let mut acc = 0.0;
            for &x in &times[lo..hi] {
                let z = (t - x) / h;
                acc += (-0.5 * z * z).exp();
            }
            // mirror images -x lie within reach only for small t
            let hi_m = times.partition_point(|&x| x <= reach - t);
            for &x in &times[..hi_m] {
                let z = (t + x) / h;
                acc += (-0.5 * z * z).exp();
            }
            acc * norm
        })
        .collect();
    Ok(KdeCurve { grid: grid.to_vec(), density, bandwidth: h })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryConfig {
    pub dt: f64,
    pub burn_in: u64,
    pub steps: u64,
    pub seed: u64,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        Self { dt: 1e-2, burn_in: 100_000, steps: 1_000_000, seed: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryDiagnostics {
    pub empirical_mean: f64,
    /// Mean `rho / v` of the stationary Gamma law.
    pub stationary_mean: f64,
    pub rel_deviation: f64,
}

/// Long single-path time average against the stationary mean.
pub fn stationary_check(d: &DerivedParams, cfg: &StationaryConfig) -> Result<StationaryDiagnostics> {
    if !(d.rho > 0) {
        return Err(FptError::NonPersistentRegime { rho: d.rho.to_f64() });
    }
    if !(cfg.dt > 0.0) || cfg.steps == 0 {
        return Err(FptError::InvalidParameter { name: "stationary", reason: "dt > 0 and steps >= 1 required".into() });
    }
    let st = Stepper::new(d, cfg.dt);
    let mut rng = path_rng(cfg.seed, 0);
    let mut x = d.params.x0;
    for _ in 0..cfg.burn_in {
        x = st.step(x, StandardNormal.sample(&mut rng));
    }
    let mut acc = 0.0;
    for _ in 0..cfg.steps {
        x = st.step(x, StandardNormal.sample(&mut rng));
        acc += x;
    }
    let empirical_mean = acc / cfg.steps as f64;
    let stationary_mean = d.rho.to_f64() / d.v.to_f64();
    Ok(StationaryDiagnostics { empirical_mean, stationary_mean, rel_deviation: (empirical_mean / stationary_mean - 1.0).abs() })
}
