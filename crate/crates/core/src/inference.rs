//! Maximum likelihood for parameter subsets, with the Laguerre–Gamma
//! approximant standing in for the unknown passage-time density.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{fpt_moments, AnalyticsConfig, MomentMethod};
use crate::error::{FptError, Result};
use crate::laguerre::{match_gamma, select_order, GammaRef, LaguerreApproximant, DEFAULT_ORDER_TOL};
use crate::model::{DerivedParams, FptProblem, ModelParams};
use crate::montecarlo::{empirical_moments, sample_fpt, FptSample, SimConfig};

/// Value returned for infeasible parameter points.
pub const PENALTY: f64 = -1e300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Param {
    #[serde(rename = "sigma")]
    Sigma,
    #[serde(rename = "r")]
    R,
    #[serde(rename = "x0")]
    X0,
    /// The passage threshold.
    #[serde(rename = "U")]
    U,
    #[serde(rename = "K")]
    K,
    #[serde(rename = "q")]
    Q,
    #[serde(rename = "E")]
    E,
}

impl Param {
    pub const ALL: [Param; 7] = [Param::Sigma, Param::R, Param::X0, Param::U, Param::K, Param::Q, Param::E];

    pub fn as_str(&self) -> &'static str {
        match self {
            Param::Sigma => "sigma",
            Param::R => "r",
            Param::X0 => "x0",
            Param::U => "U",
            Param::K => "K",
            Param::Q => "q",
            Param::E => "E",
        }
    }

    pub fn get(&self, p: &ModelParams, prob: &FptProblem) -> f64 {
        match self {
            Param::Sigma => p.sigma,
            Param::R => p.r,
            Param::X0 => p.x0,
            Param::U => prob.threshold,
            Param::K => p.k,
            Param::Q => p.q,
            Param::E => p.e,
        }
    }

    fn set(&self, p: &mut ModelParams, prob: &mut FptProblem, v: f64) {
        match self {
            Param::Sigma => p.sigma = v,
            Param::R => p.r = v,
            Param::X0 => p.x0 = v,
            Param::U => prob.threshold = v,
            Param::K => p.k = v,
            Param::Q => p.q = v,
            Param::E => p.e = v,
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Param {
    type Err = FptError;

    fn from_str(s: &str) -> Result<Self> {
        Param::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s) || (s.eq_ignore_ascii_case("threshold") && *p == Param::U))
            .ok_or_else(|| FptError::InvalidParameter { name: "estimate", reason: format!("unknown parameter '{s}'") })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleConfig {
    pub estimate: Vec<Param>,
    /// Values of every parameter; the estimated ones are overridden by the optimizer.
    pub base: ModelParams,
    pub problem: FptProblem,
    /// Starting point, aligned with `estimate`.
    pub init: Vec<f64>,
    /// Box per estimated parameter.
    pub bounds: Vec<(f64, f64)>,
    pub n_max: usize,
    pub order_tol: f64,
    pub max_iter: usize,
    /// Stop once the simplex diameter, in units of the starting point, drops below this.
    pub simplex_tol: f64,
    pub density_floor: f64,
}

impl MleConfig {
    /// Defaults around `init`: boxes spanning two decades either side.
    pub fn new(estimate: Vec<Param>, base: ModelParams, problem: FptProblem, init: Vec<f64>) -> Self {
        let bounds = init.iter().map(|&v| (v.abs() / 100.0, v.abs() * 100.0)).collect();
        Self {
            estimate,
            base,
            problem,
            init,
            bounds,
            n_max: 10,
            order_tol: DEFAULT_ORDER_TOL,
            max_iter: 300,
            simplex_tol: 1e-5,
            density_floor: 1e-300,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.init.len() != self.estimate.len() || self.bounds.len() != self.estimate.len() {
            return Err(FptError::InvalidParameter { name: "init", reason: "init and bounds must match the estimated parameters".into() });
        }
        for (i, p) in self.estimate.iter().enumerate() {
            if self.estimate[..i].contains(p) {
                return Err(FptError::InvalidParameter { name: "estimate", reason: format!("'{p}' listed twice") });
            }
        }
        Ok(())
    }

    /// Full parameter set at `theta`.
    pub fn model_at(&self, theta: &[f64]) -> (ModelParams, FptProblem) {
        let mut p = self.base;
        let mut prob = self.problem;
        for (param, &v) in self.estimate.iter().zip(theta) {
            param.set(&mut p, &mut prob, v);
        }
        (p, prob)
    }
}

/// Approximant at `theta`, or `None` where the model is infeasible or the
/// moments cannot be trusted.
pub fn approximant_at(theta: &[f64], cfg: &MleConfig) -> Option<(LaguerreApproximant, bool)> {
    let (p, prob) = cfg.model_at(theta);
    if theta.iter().zip(&cfg.bounds).any(|(v, (lo, hi))| !(v >= lo && v <= hi)) {
        return None;
    }
    let d = DerivedParams::new(&p, crate::mp::DEFAULT_PRECISION).ok()?;
    let acfg = AnalyticsConfig { max_rel_error: Some(1e-6), ..Default::default() };
    let m = fpt_moments(&d, &prob, cfg.n_max, MomentMethod::Recursion, &acfg).ok()?;
    if m.degenerate {
        return None;
    }
    let (g, _) = match_gamma(&m).ok()?;
    let sel = select_order(&m, &g, cfg.n_max, cfg.order_tol).ok()?;
    let apx = LaguerreApproximant::build(&m, g, sel.order, true).ok()?;
    Some((apx, sel.converged))
}

pub fn log_likelihood(theta: &[f64], data: &FptSample, cfg: &MleConfig) -> Result<f64> {
    if data.is_empty() {
        return Err(FptError::EmptyData);
    }
    Ok(match approximant_at(theta, cfg) {
        Some((apx, _)) => data.times.iter().map(|&t| apx.density(t).max(cfg.density_floor).ln()).sum(),
        None => PENALTY,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    NothingToEstimate,
    SimplexTolerance,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MleResult {
    pub parameters: Vec<Param>,
    pub estimates: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Best log-likelihood after each iteration.
    pub trace: Vec<f64>,
    /// Reference matched to the sample moments, before any theoretical update.
    pub sample_gamma: Option<GammaRef>,
    /// Laguerre order at the optimum, and whether its selection rules were met.
    pub order: Option<usize>,
    pub order_converged: Option<bool>,
}

/// Nelder–Mead ascent in coordinates normalized by the starting point,
/// projected onto the parameter boxes.
pub fn mle_fit(data: &FptSample, cfg: &MleConfig) -> Result<MleResult> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(FptError::EmptyData);
    }
    let sample_gamma = empirical_moments(data, 2).ok().and_then(|m| match_gamma(&m).ok()).map(|(g, _)| g);
    let dim = cfg.estimate.len();
    let scale: Vec<f64> = cfg.init.iter().map(|v| if *v != 0.0 { v.abs() } else { 1.0 }).collect();
    let to_theta = |y: &[f64]| -> Vec<f64> {
        y.iter()
            .zip(&scale)
            .zip(&cfg.bounds)
            .map(|((yi, s), (lo, hi))| (yi * s).clamp(*lo, *hi))
            .collect()
    };
    let mut evaluations = 0usize;
    let mut objective = |y: &[f64]| -> Result<f64> {
        evaluations += 1;
        log_likelihood(&to_theta(y), data, cfg)
    };

    let y0: Vec<f64> = cfg.init.iter().zip(&scale).map(|(v, s)| v / s).collect();
    let f0 = objective(&y0)?;
    if f0 <= PENALTY {
        return Err(FptError::NoFeasibleStart(format!("log-likelihood is infeasible at {:?}", cfg.init)));
    }
    let finish = |y: &[f64], f: f64, it: usize, ev: usize, reason: StopReason, trace: Vec<f64>| {
        let est = to_theta(y);
        let at = approximant_at(&est, cfg);
        MleResult {
            parameters: cfg.estimate.clone(),
            estimates: est,
            log_likelihood: f,
            iterations: it,
            evaluations: ev,
            converged: reason != StopReason::MaxIterations,
            stop_reason: reason,
            trace,
            sample_gamma,
            order: at.as_ref().map(|(a, _)| a.order),
            order_converged: at.map(|(_, c)| c),
        }
    };
    if dim == 0 {
        return Ok(finish(&y0, f0, 0, 1, StopReason::NothingToEstimate, vec![f0]));
    }

    // vertices sorted best (highest log-likelihood) first
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(y0.clone(), f0)];
    for i in 0..dim {
        let mut y = y0.clone();
        y[i] *= 1.05;
        let f = objective(&y)?;
        simplex.push((y, f));
    }
    let mut trace = Vec::new();
    let mut reason = StopReason::MaxIterations;
    let mut iterations = 0;
    for it in 0..cfg.max_iter {
        iterations = it + 1;
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let diameter = simplex[1..]
            .iter()
            .map(|(y, _)| y.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter < cfg.simplex_tol {
            reason = StopReason::SimplexTolerance;
            iterations = it;
            break;
        }
        let worst = simplex[dim].clone();
        let centroid: Vec<f64> =
            (0..dim).map(|j| simplex[..dim].iter().map(|(y, _)| y[j]).sum::<f64>() / dim as f64).collect();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect() };

        let yr = along(1.0);
        let fr = objective(&yr)?;
        if fr > simplex[0].1 {
            let ye = along(2.0);
            let fe = objective(&ye)?;
            simplex[dim] = if fe > fr { (ye, fe) } else { (yr, fr) };
        } else if fr > simplex[dim - 1].1 {
            simplex[dim] = (yr, fr);
        } else {
            let (yc, fc) = if fr > worst.1 {
                let y = along(0.5);
                let f = objective(&y)?;
                (y, f)
            } else {
                let y = along(-0.5);
                let f = objective(&y)?;
                (y, f)
            };
            if fc > worst.1.max(fr) {
                simplex[dim] = (yc, fc);
            } else {
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let y: Vec<f64> = best.iter().zip(&v.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                    let f = objective(&y)?;
                    *v = (y, f);
                }
            }
        }
        let best = simplex.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
        trace.push(best);
    }
    simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
    let (y, f) = simplex.swap_remove(0);
    Ok(finish(&y, f, iterations, evaluations, reason, trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    /// Optimizer start as a multiple of the true value.
    pub init_scale: f64,
    pub n_max: usize,
    pub max_iter: usize,
    pub simplex_tol: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self { seed: 2024, dt: 1e-3, horizon: 60.0, init_scale: 1.1, n_max: 10, max_iter: 300, simplex_tol: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub n: usize,
    pub subset: String,
    pub parameter: Param,
    pub truth: f64,
    pub bias: f64,
    pub mse: f64,
    pub err_pct: f64,
    pub failed_fits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub fits: Vec<StudyFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyFit {
    pub n: usize,
    pub replication: usize,
    pub subset: String,
    pub result: Option<MleResult>,
}

pub fn subset_label(subset: &[Param]) -> String {
    subset.iter().map(Param::as_str).collect::<Vec<_>>().join("+")
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("N,subset,parameter,bias,MSE,err_pct\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{:e},{:e},{}\n", r.n, r.subset, r.parameter, r.bias, r.mse, r.err_pct));
        }
        s
    }

    pub fn row(&self, n: usize, subset: &[Param], p: Param) -> Option<&ReportRow> {
        let label = subset_label(subset);
        self.rows.iter().find(|r| r.n == n && r.subset == label && r.parameter == p)
    }
}

fn replication_seed(master: u64, n: usize, rep: usize) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = master ^ ((n as u64) << 32) ^ rep as u64;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Repeated simulate-then-fit experiment at the given truth.
pub fn mc_study(
    truth: &ModelParams,
    problem: &FptProblem,
    ns: &[usize],
    replications: usize,
    subsets: &[Vec<Param>],
    cfg: &StudyConfig,
) -> Result<Report> {
    if replications == 0 {
        return Err(FptError::InvalidParameter { name: "replications", reason: "must be >= 1".into() });
    }
    let d = DerivedParams::new(truth, crate::mp::DEFAULT_PRECISION)?;
    let jobs: Vec<(usize, usize)> = ns.iter().flat_map(|&n| (0..replications).map(move |r| (n, r))).collect();
    let fits: Vec<Vec<StudyFit>> = jobs
        .par_iter()
        .map(|&(n, rep)| {
            let sim = SimConfig {
                paths: n,
                dt: cfg.dt,
                horizon: cfg.horizon,
                seed: replication_seed(cfg.seed, n, rep),
                problem: *problem,
                interpolate_crossing: true,
            };
            let data = sample_fpt(&d, &sim);
            subsets
                .iter()
                .map(|subset| {
                    let result = data.as_ref().ok().and_then(|data| {
                        let init = subset.iter().map(|p| p.get(truth, problem) * cfg.init_scale).collect();
                        let mut mc = MleConfig::new(subset.clone(), *truth, *problem, init);
                        mc.n_max = cfg.n_max;
                        mc.max_iter = cfg.max_iter;
                        mc.simplex_tol = cfg.simplex_tol;
                        mle_fit(data, &mc).ok()
                    });
                    StudyFit { n, replication: rep, subset: subset_label(subset), result }
                })
                .collect()
        })
        .collect();
    let fits: Vec<StudyFit> = fits.into_iter().flatten().collect();

    let mut rows = Vec::new();
    for &n in ns {
        for subset in subsets {
            let label = subset_label(subset);
            let group: Vec<&StudyFit> = fits.iter().filter(|f| f.n == n && f.subset == label).collect();
            for (i, p) in subset.iter().enumerate() {
                let t = p.get(truth, problem);
                let est: Vec<f64> = group.iter().filter_map(|f| f.result.as_ref().map(|r| r.estimates[i])).collect();
                let k = est.len() as f64;
                let bias = est.iter().map(|e| e - t).sum::<f64>() / k;
                let mse = est.iter().map(|e| (e - t).powi(2)).sum::<f64>() / k;
                let err_pct = 100.0 * est.iter().map(|e| ((e - t) / t).abs()).sum::<f64>() / k;
                rows.push(ReportRow {
                    n,
                    subset: label.clone(),
                    parameter: *p,
                    truth: t,
                    bias,
                    mse,
                    err_pct,
                    failed_fits: group.len() - est.len(),
                });
            }
        }
    }
    Ok(Report { rows, fits })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(paths: usize) -> (ModelParams, FptProblem, FptSample) {
        let p = ModelParams::fisheries();
        let prob = FptProblem::up(1e4);
        let d = DerivedParams::new(&p, 256).unwrap();
        let s = sample_fpt(&d, &SimConfig { dt: 1e-2, ..SimConfig::new(prob, paths, 99) }).unwrap();
        (p, prob, s)
    }

    #[test]
    fn param_names_round_trip() {
        for p in Param::ALL {
            assert_eq!(p.as_str().parse::<Param>().unwrap(), p);
        }
        assert!("alpha".parse::<Param>().is_err());
    }

    #[test]
    fn truth_beats_perturbed_sigma() {
        let (p, prob, s) = setup(1000);
        let cfg = MleConfig::new(vec![Param::Sigma], p, prob, vec![p.sigma]);
        let at_truth = log_likelihood(&[p.sigma], &s, &cfg).unwrap();
        let perturbed = log_likelihood(&[p.sigma * 1.2], &s, &cfg).unwrap();
        assert!(at_truth > perturbed, "{at_truth} vs {perturbed}");
    }

    #[test]
    fn infeasible_points_are_penalized() {
        let (p, prob, s) = setup(10);
        let cfg = MleConfig::new(vec![Param::R], p, prob, vec![p.r]);
        // r <= qE
        assert_eq!(log_likelihood(&[0.3], &s, &cfg).unwrap(), PENALTY);
        let empty = FptSample::from_times(vec![], 0, s.config);
        assert!(matches!(log_likelihood(&[p.r], &empty, &cfg), Err(FptError::EmptyData)));
        let bad_start = MleConfig { bounds: vec![(0.0, 10.0)], ..MleConfig::new(vec![Param::R], p, prob, vec![0.3]) };
        assert!(matches!(mle_fit(&s, &bad_start), Err(FptError::NoFeasibleStart(_))));
    }

    #[test]
    fn single_datum_at_mode() {
        let (p, prob, s) = setup(1);
        let cfg = MleConfig::new(vec![], p, prob, vec![]);
        let (apx, _) = approximant_at(&[], &cfg).unwrap();
        let (a, b) = (apx.gamma.alpha, apx.gamma.beta);
        let mode = a / b;
        let one = FptSample::from_times(vec![mode], 0, s.config);
        let ll = log_likelihood(&[], &one, &cfg).unwrap();
        assert!((ll - apx.density(mode).ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_estimate_echoes_init() {
        let (p, prob, s) = setup(50);
        let r = mle_fit(&s, &MleConfig::new(vec![], p, prob, vec![])).unwrap();
        assert!(r.converged && r.estimates.is_empty());
        assert_eq!(r.stop_reason, StopReason::NothingToEstimate);
    }

    #[test]
    fn sigma_fit_moves_toward_truth() {
        let (p, prob, s) = setup(300);
        let cfg = MleConfig::new(vec![Param::Sigma], p, prob, vec![0.25]);
        let r = mle_fit(&s, &cfg).unwrap();
        assert!(r.converged);
        assert!((r.estimates[0] - 0.2).abs() < 0.03, "{:?}", r.estimates);
        assert!(r.trace.windows(2).all(|w| w[1] >= w[0]));
    }
}
