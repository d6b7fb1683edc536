//! Passage-time moments and cumulants.
//!
//! Both directions reduce to a ratio of two exponential-convention series,
//! `g(lambda) = s(x0) / s(S)`, where `s = q l` for upcrossings and `s = lbar`
//! for downcrossings. Moments are `E[T^m] = (-1)^m g_m`; cumulants come from
//! the difference of the two logarithms.

use rug::Float;
use serde::Serialize;

use crate::error::{FptError, Result};
use crate::kernels::{l_series, lbar_series, t_series, KernelTable, SeriesConfig, SeriesDiagnostics};
use crate::model::{validate_problem, DerivedParams, Direction, FptProblem, ProblemKind};
use crate::series::{binomial, falling_factorial, ExpSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMethod {
    Recursion,
    BellClosedForm,
    FiniteDifference,
    Empirical,
}

impl std::str::FromStr for MomentMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "recursion" => Ok(MomentMethod::Recursion),
            "bell" | "bell_closed_form" => Ok(MomentMethod::BellClosedForm),
            other => Err(format!("unknown method {other:?}, expected recursion or bell")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticsConfig {
    pub series: SeriesConfig,
    /// Orders whose relative error estimate exceeds this are flagged.
    pub flag_rel_error: f64,
    /// Fail with `NonConvergent` once a relative error estimate reaches this.
    pub max_rel_error: Option<f64>,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        Self { series: SeriesConfig::default(), flag_rel_error: 1e-8, max_rel_error: Some(1.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentDiagnostics {
    pub at_x0: SeriesDiagnostics,
    pub at_threshold: SeriesDiagnostics,
    pub kernel_rows: usize,
}

/// `raw[k] = E[T^k]` for `k = 0..=order`, with `raw[0] = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub problem: FptProblem,
    pub method: MomentMethod,
    pub raw: Vec<Float>,
    /// Absolute error estimate per order.
    pub error_estimate: Vec<f64>,
    pub flagged: Vec<bool>,
    pub degenerate: bool,
    pub diagnostics: Option<MomentDiagnostics>,
}

impl MomentSet {
    /// Moments supplied from outside (sample moments, a file, an exact law).
    pub fn from_values(problem: FptProblem, method: MomentMethod, moments: &[f64], prec: u32) -> Self {
        let mut raw = vec![Float::with_val(prec, 1)];
        raw.extend(moments.iter().map(|&m| Float::with_val(prec, m)));
        let n = raw.len();
        Self { problem, method, raw, error_estimate: vec![0.0; n], flagged: vec![false; n], degenerate: false, diagnostics: None }
    }

    fn zero(problem: FptProblem, method: MomentMethod, order: usize, prec: u32) -> Self {
        let mut raw = vec![Float::new(prec); order + 1];
        raw[0] = Float::with_val(prec, 1);
        Self {
            problem,
            method,
            raw,
            error_estimate: vec![0.0; order + 1],
            flagged: vec![false; order + 1],
            degenerate: true,
            diagnostics: None,
        }
    }

    pub fn order(&self) -> usize {
        self.raw.len() - 1
    }

    pub fn moment(&self, k: usize) -> f64 {
        self.raw[k].to_f64()
    }

    /// `E[T], ..., E[T^order]` in double precision.
    pub fn moments_f64(&self) -> Vec<f64> {
        self.raw[1..].iter().map(Float::to_f64).collect()
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    pub fn variance(&self) -> f64 {
        let m1 = &self.raw[1];
        Float::with_val(m1.prec(), &self.raw[2] - Float::with_val(m1.prec(), m1.square_ref())).to_f64()
    }

    /// Truncated transform series `sum_k (-lam)^k E[T^k] / k!` and the
    /// matching sum of moment error estimates.
    pub fn transform_series(&self, lam: f64) -> (f64, f64) {
        let p = self.raw[0].prec();
        let mut term = Float::with_val(p, 1);
        let mut sum = Float::with_val(p, 1);
        let mut err = 0.0;
        for k in 1..=self.order() {
            term *= -lam;
            term /= k as u32;
            sum += Float::with_val(p, &term * &self.raw[k]);
            err += term.to_f64().abs() * self.error_estimate[k];
        }
        (sum.to_f64(), err)
    }

    pub fn rel_error(&self, k: usize) -> f64 {
        let m = self.moment(k).abs();
        if m == 0.0 {
            if self.error_estimate[k] == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.error_estimate[k] / m
        }
    }
}

/// `cumulants[k] = c_k(T)`, with `cumulants[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantSet {
    pub problem: FptProblem,
    pub cumulants: Vec<Float>,
    pub error_estimate: Vec<f64>,
    pub degenerate: bool,
}

impl CumulantSet {
    pub fn order(&self) -> usize {
        self.cumulants.len() - 1
    }

    pub fn cumulant(&self, k: usize) -> f64 {
        self.cumulants[k].to_f64()
    }

    /// `k c_k / c_{k+1}` for `k = 1..order`; each equals `beta` for a Gamma law.
    pub fn ratios(&self) -> Vec<f64> {
        (1..self.order())
            .map(|k| {
                let num = Float::with_val(self.cumulants[k].prec(), &self.cumulants[k] * k as u32);
                (num / &self.cumulants[k + 1]).to_f64()
            })
            .collect()
    }
}

/// The two building-block series of a problem and their error estimates.
struct Blocks {
    at_x0: ExpSeries,
    at_s: ExpSeries,
    err_x0: Vec<f64>,
    err_s: Vec<f64>,
    diag_x0: SeriesDiagnostics,
    diag_s: SeriesDiagnostics,
    rows: usize,
}

fn blocks(d: &DerivedParams, prob: &FptProblem, order: usize, cfg: &SeriesConfig, log_form: bool) -> Result<Blocks> {
    let x0 = d.params.x0;
    let mut table = KernelTable::for_params(d, order);
    let eval = |table: &mut KernelTable, y: f64| match (prob.direction, log_form) {
        (Direction::Up, false) => t_series(d, table, y, order, cfg),
        (Direction::Up, true) => l_series(d, table, y, order, cfg),
        (Direction::Down, _) => lbar_series(d, table, y, order, cfg),
    };
    let a = eval(&mut table, x0)?;
    let b = eval(&mut table, prob.threshold)?;
    Ok(Blocks {
        err_x0: a.diag.error_estimate.clone(),
        err_s: b.diag.error_estimate.clone(),
        at_x0: a.series,
        at_s: b.series,
        diag_x0: a.diag,
        diag_s: b.diag,
        rows: table.len(),
    })
}

fn check_order(order: usize) -> Result<()> {
    if order == 0 {
        Err(FptError::InvalidParameter { name: "order", reason: "must be at least 1".into() })
    } else {
        Ok(())
    }
}

/// Moments of orders `1..=order`.
pub fn fpt_moments(
    d: &DerivedParams,
    prob: &FptProblem,
    order: usize,
    method: MomentMethod,
    cfg: &AnalyticsConfig,
) -> Result<MomentSet> {
    check_order(order)?;
    if validate_problem(d, d.params.x0, prob)? == ProblemKind::DegenerateZero {
        return Ok(MomentSet::zero(*prob, method, order, d.precision));
    }
    let b = blocks(d, prob, order, &cfg.series, false)?;
    let g = match method {
        MomentMethod::Recursion => b.at_x0.ratio(&b.at_s)?,
        MomentMethod::BellClosedForm => b.at_x0.product(&b.at_s.reciprocal_bell()?),
        other => {
            return Err(FptError::InvalidParameter { name: "method", reason: format!("{other:?} is not an analytic method") })
        }
    };

    // First-order propagation of the building-block errors through the recursion.
    let ga: Vec<f64> = g.coeffs().iter().map(|c| c.to_f64().abs()).collect();
    let sa: Vec<f64> = b.at_s.coeffs().iter().map(|c| c.to_f64().abs()).collect();
    let mut dg = vec![0.0; order + 1];
    for m in 1..=order {
        let mut e = b.err_x0[m];
        for k in 1..=m {
            let c = binomial(m, k).to_f64();
            e += c * (b.err_s[k] * ga[m - k] + sa[k] * dg[m - k]);
        }
        dg[m] = e;
    }

    let raw: Vec<Float> = g.into_coeffs().into_iter().enumerate().map(|(m, c)| if m % 2 == 1 { -c } else { c }).collect();
    let mut set = MomentSet {
        problem: *prob,
        method,
        flagged: vec![false; order + 1],
        error_estimate: dg,
        raw,
        degenerate: false,
        diagnostics: Some(MomentDiagnostics { at_x0: b.diag_x0, at_threshold: b.diag_s, kernel_rows: b.rows }),
    };
    for m in 1..=order {
        let rel = set.rel_error(m);
        set.flagged[m] = rel > cfg.flag_rel_error;
        if let Some(limit) = cfg.max_rel_error {
            if rel >= limit {
                return Err(FptError::NonConvergent { order: m, rel_error: rel });
            }
        }
    }
    Ok(set)
}

/// Cumulants from the logarithms of the building-block series.
pub fn fpt_cumulants(d: &DerivedParams, prob: &FptProblem, order: usize, cfg: &AnalyticsConfig) -> Result<CumulantSet> {
    check_order(order)?;
    let p = d.precision;
    if validate_problem(d, d.params.x0, prob)? == ProblemKind::DegenerateZero {
        return Ok(CumulantSet { problem: *prob, cumulants: vec![Float::new(p); order + 1], error_estimate: vec![0.0; order + 1], degenerate: true });
    }
    let b = blocks(d, prob, order, &cfg.series, true)?;
    let lx = b.at_x0.log()?;
    let ls = b.at_s.log()?;
    let mut out = vec![Float::new(p); order + 1];
    let log_ratio = Float::with_val(p, prob.threshold / d.params.x0).ln();
    let half = Float::with_val(p, 0.5);
    let mut a_pow = Float::with_val(p, 1);
    for k in 1..=order {
        let mut c = Float::with_val(p, lx.coeff(k) - ls.coeff(k));
        a_pow *= &d.a;
        if prob.direction == Direction::Up {
            let drift = Float::with_val(p, &d.u * &log_ratio) * falling_factorial(&half, k) * &a_pow;
            c += drift;
        }
        out[k] = if k % 2 == 1 { -c } else { c };
    }
    // Log-coefficient errors, to first order, scale like the series errors.
    let error_estimate = (0..=order).map(|k| b.err_x0[k] + b.err_s[k]).collect();
    Ok(CumulantSet { problem: *prob, cumulants: out, error_estimate, degenerate: false })
}

/// `c_n = m_n - sum_{k=1}^{n-1} C(n-1, k-1) c_k m_{n-k}`.
pub fn cumulants_from_moments(m: &MomentSet) -> CumulantSet {
    let order = m.order();
    let p = m.raw[0].prec();
    let mut c: Vec<Float> = vec![Float::new(p); order + 1];
    let mut err = vec![0.0; order + 1];
    for n in 1..=order {
        let mut acc = Float::with_val(p, &m.raw[n]);
        let mut e = m.error_estimate[n];
        for k in 1..n {
            let w = binomial(n - 1, k - 1);
            acc -= Float::with_val(p, &c[k] * &m.raw[n - k]) * &w;
            let w = w.to_f64();
            e += w * (err[k] * m.moment(n - k).abs() + c[k].to_f64().abs() * m.error_estimate[n - k]);
        }
        c[n] = acc;
        err[n] = e;
    }
    CumulantSet { problem: m.problem, cumulants: c, error_estimate: err, degenerate: m.degenerate }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanVariance {
    pub mean: Float,
    pub variance: Float,
}

/// Mean and variance from the explicit Lambda-sum expressions, summed with
/// the same truncation rules as the building-block series.
pub fn mean_variance_closed_form(d: &DerivedParams, prob: &FptProblem, cfg: &AnalyticsConfig) -> Result<MeanVariance> {
    let p = d.precision;
    if validate_problem(d, d.params.x0, prob)? == ProblemKind::DegenerateZero {
        return Ok(MeanVariance { mean: Float::new(p), variance: Float::new(p) });
    }
    let mut table = KernelTable::for_params(d, 2);
    let x0 = d.params.x0;
    let s = prob.threshold;
    let sigma2 = Float::with_val(p, d.params.sigma).square();
    let sigma4 = Float::with_val(p, sigma2.square_ref());
    let a = Float::with_val(p, 2) / Float::with_val(p, &sigma2 * Float::with_val(p, d.u.square_ref()));
    match prob.direction {
        Direction::Up => {
            let m1 = |t: &KernelTable, n: usize| {
                let l0 = &t.row(n).lambda[0];
                let (l1, tl0, tl1) = (&t.row(n).lambda[1], &t.row(n).tilde[0], &t.row(n).tilde[1]);
                let num = Float::with_val(p, tl1 * l0) - Float::with_val(p, tl0 * l1);
                num / Float::with_val(p, l0.square_ref())
            };
            let m2 = |t: &KernelTable, n: usize| {
                let r = t.row(n);
                let (l0, l1, l2) = (&r.lambda[0], &r.lambda[1], &r.lambda[2]);
                let (t0, t1, t2) = (&r.tilde[0], &r.tilde[1], &r.tilde[2]);
                let l0sq = Float::with_val(p, l0.square_ref());
                let mut num = Float::with_val(p, t2 * &l0sq);
                num -= Float::with_val(p, t1 * l1) * l0 * 2u32;
                num -= Float::with_val(p, t0 * l2) * l0;
                num += Float::with_val(p, t0 * Float::with_val(p, l1.square_ref())) * 2u32;
                num / (l0sq * l0)
            };
            let s1x = convergent_sum(&mut table, d, x0, &cfg.series, &m1)?;
            let s1u = convergent_sum(&mut table, d, s, &cfg.series, &m1)?;
            let s2x = convergent_sum(&mut table, d, x0, &cfg.series, &m2)?;
            let s2u = convergent_sum(&mut table, d, s, &cfg.series, &m2)?;
            let log_ratio = Float::with_val(p, x0 / s).ln();
            let mean = Float::with_val(p, &log_ratio / Float::with_val(p, &d.u * &sigma2))
                + Float::with_val(p, &a * Float::with_val(p, &s1u - &s1x));
            let u3 = Float::with_val(p, d.u.square_ref()) * &d.u;
            let first = log_ratio / (Float::with_val(p, &sigma4 * &u3));
            let braces = Float::with_val(p, &s2x - &s2u) + Float::with_val(p, s1u.square_ref()) - Float::with_val(p, s1x.square_ref());
            let variance = first + Float::with_val(p, a.square_ref()) * braces;
            Ok(MeanVariance { mean, variance })
        }
        Direction::Down => {
            let n1 = |t: &KernelTable, n: usize| {
                let r = t.row(n);
                Float::with_val(p, &r.tilde[0] * &r.bar[1]) + Float::with_val(p, &r.tilde[1] * &r.bar[0])
            };
            let n2 = |t: &KernelTable, n: usize| {
                let r = t.row(n);
                Float::with_val(p, &r.tilde[0] * &r.bar[2])
                    + Float::with_val(p, &r.tilde[1] * &r.bar[1]) * 2u32
                    + Float::with_val(p, &r.tilde[2] * &r.bar[0])
            };
            let b1x = asymptotic_sum(&mut table, d, x0, 1, &cfg.series, &n1)?;
            let b1l = asymptotic_sum(&mut table, d, s, 1, &cfg.series, &n1)?;
            let b2x = asymptotic_sum(&mut table, d, x0, 2, &cfg.series, &n2)?;
            let b2l = asymptotic_sum(&mut table, d, s, 2, &cfg.series, &n2)?;
            let mean = Float::with_val(p, &a * Float::with_val(p, &b1l - &b1x));
            let braces = Float::with_val(p, &b2x - &b2l) + Float::with_val(p, b1l.square_ref()) - Float::with_val(p, b1x.square_ref());
            let variance = Float::with_val(p, a.square_ref()) * braces;
            Ok(MeanVariance { mean, variance })
        }
    }
}

/// `sum_{n>=0} coef(n) (vy)^n / n!` with the convergent-series stopping rule.
fn convergent_sum(
    table: &mut KernelTable,
    d: &DerivedParams,
    y: f64,
    cfg: &SeriesConfig,
    coef: &dyn Fn(&KernelTable, usize) -> Float,
) -> Result<Float> {
    let p = d.precision;
    let vy = Float::with_val(p, &d.v * y);
    let n_max = cfg.n_max.min(table.row_cap());
    table.ensure_rows(0)?;
    let mut acc = coef(table, 0);
    let mut w = Float::with_val(p, 1);
    let mut streak = 0;
    for n in 1..=n_max {
        table.ensure_rows(n)?;
        w *= &vy;
        w /= n as u32;
        let term = coef(table, n) * &w;
        acc += &term;
        if Float::with_val(53, term.abs_ref()) < Float::with_val(53, acc.abs_ref()) * cfg.tol {
            streak += 1;
            if streak >= cfg.streak {
                return Ok(acc);
            }
        } else {
            streak = 0;
        }
    }
    Err(FptError::NoConvergence { k: 0, n_max })
}

/// `sum_{n>=m} (-1)^n coef(n) / ((vy)^n n!)`, cut before its smallest term.
fn asymptotic_sum(
    table: &mut KernelTable,
    d: &DerivedParams,
    y: f64,
    m: usize,
    cfg: &SeriesConfig,
    coef: &dyn Fn(&KernelTable, usize) -> Float,
) -> Result<Float> {
    let p = d.precision;
    let vy = Float::with_val(p, &d.v * y);
    let span = 2.0 * (vy.to_f64() + 2.0 * d.u.to_f64().abs());
    let n_stop = ((span.ceil() as usize).saturating_add(10)).min(cfg.n_max.min(table.row_cap())).max(m);
    table.ensure_rows(n_stop)?;
    let mut w = Float::with_val(p, 1);
    let mut terms = Vec::new();
    for n in 1..=n_stop {
        w /= &vy;
        w /= n as u32;
        if n >= m {
            let t = coef(table, n) * &w;
            terms.push(if n % 2 == 1 { -t } else { t });
        }
    }
    let mut best = 0;
    for (i, t) in terms.iter().enumerate() {
        if Float::with_val(p, t.abs_ref()) < Float::with_val(p, terms[best].abs_ref()) {
            best = i;
        }
    }
    let mut acc = Float::new(p);
    for t in &terms[..best] {
        acc += t;
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaConsistency {
    /// `(c1/c2, 2 c2/c3, 3 c3/c4)`
    pub ratios: [f64; 3],
    /// Rate implied by each adjacent pair; for a Gamma law all equal `beta`.
    pub implied_beta: [f64; 3],
    /// `(max - min) / |mean|` of the implied rates.
    pub spread: f64,
}

pub fn gamma_consistency(c: &CumulantSet) -> Result<GammaConsistency> {
    if c.order() < 4 {
        return Err(FptError::InsufficientMoments { needed: 4, have: c.order() });
    }
    let r = c.ratios();
    let ratios = [r[0], r[1], r[2]];
    let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = ratios.iter().sum::<f64>() / 3.0;
    let spread = if mean == 0.0 { 0.0 } else { (max - min) / mean.abs() };
    Ok(GammaConsistency { ratios, implied_beta: ratios, spread })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_params, ModelParams};

    fn fisheries() -> DerivedParams {
        derive_params(&ModelParams::fisheries()).unwrap()
    }

    fn cfg() -> AnalyticsConfig {
        AnalyticsConfig::default()
    }

    #[test]
    fn table_one_reference_scenario() {
        let d = fisheries();
        let prob = FptProblem::up(1e4);
        let m = fpt_moments(&d, &prob, 4, MomentMethod::Recursion, &cfg()).unwrap();
        assert!((m.mean() - 13.35).abs() < 0.01, "{}", m.mean());
        assert!((m.variance() - 4.49).abs() < 0.01, "{}", m.variance());
        let c = fpt_cumulants(&d, &prob, 4, &cfg()).unwrap();
        assert!((c.cumulant(4) - 7.60).abs() < 0.01);
        let g = gamma_consistency(&c).unwrap();
        for (got, want) in g.ratios.iter().zip([2.98, 1.98, 1.79]) {
            assert!((got - want).abs() < 0.01, "{got} vs {want}");
        }
    }

    #[test]
    fn degenerate_problem_has_zero_moments() {
        let d = fisheries();
        let prob = FptProblem::up(100.0);
        let m = fpt_moments(&d, &prob, 3, MomentMethod::Recursion, &cfg()).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.moments_f64(), vec![0.0; 3]);
        let c = fpt_cumulants(&d, &prob, 3, &cfg()).unwrap();
        assert!(c.cumulants.iter().all(|x| x.is_zero()));
        let mv = mean_variance_closed_form(&d, &prob, &cfg()).unwrap();
        assert!(mv.mean.is_zero() && mv.variance.is_zero());
    }

    #[test]
    fn wrong_side_is_an_error() {
        let d = fisheries();
        assert!(matches!(
            fpt_moments(&d, &FptProblem::down(1e3), 2, MomentMethod::Recursion, &cfg()),
            Err(FptError::WrongSide { .. })
        ));
    }

    #[test]
    fn moments_from_cumulants_roundtrip() {
        let d = fisheries();
        let prob = FptProblem::up(1e5);
        let m = fpt_moments(&d, &prob, 6, MomentMethod::Recursion, &cfg()).unwrap();
        let c1 = cumulants_from_moments(&m);
        let c2 = fpt_cumulants(&d, &prob, 6, &cfg()).unwrap();
        for k in 1..=6 {
            let (a, b) = (c1.cumulant(k), c2.cumulant(k));
            assert!(((a - b) / b).abs() < 1e-10, "k = {k}: {a} vs {b}");
        }
    }

    #[test]
    fn closed_form_mean_variance_up_and_down() {
        let d = derive_params(&ModelParams { x0: 4e7, ..ModelParams::fisheries() }).unwrap();
        for prob in [FptProblem::up(6e7), FptProblem::down(3e7)] {
            let mv = mean_variance_closed_form(&d, &prob, &cfg()).unwrap();
            let c = fpt_cumulants(&d, &prob, 2, &cfg()).unwrap();
            let rel = |a: &Float, b: &Float| crate::mp::rel_diff(a, b);
            assert!(rel(&mv.mean, &c.cumulants[1]) < 1e-10, "{prob:?}");
            assert!(rel(&mv.variance, &c.cumulants[2]) < 1e-10, "{prob:?}");
        }
    }

    #[test]
    fn downcrossing_known_values() {
        let d = derive_params(&ModelParams { x0: 4e7, ..ModelParams::fisheries() }).unwrap();
        let m = fpt_moments(&d, &FptProblem::down(3e7), 4, MomentMethod::Recursion, &cfg()).unwrap();
        let want = [7.0691338082, 105.789322189, 2431.23606413, 74812.44617];
        for (k, w) in want.iter().enumerate() {
            assert!((m.moment(k + 1) / w - 1.0).abs() < 1e-9, "order {}: {}", k + 1, m.moment(k + 1));
            assert!(!m.flagged[k + 1]);
        }
    }

    #[test]
    fn gamma_cumulants_have_flat_ratios() {
        let (shape, beta) = (3.5f64, 0.8f64);
        let p = 128;
        let mut cum = vec![Float::new(p)];
        let mut fact = 1.0;
        for k in 1..=4 {
            cum.push(Float::with_val(p, shape * fact / beta.powi(k)));
            fact *= k as f64;
        }
        let c = CumulantSet { problem: FptProblem::up(1.0), cumulants: cum, error_estimate: vec![0.0; 5], degenerate: false };
        let g = gamma_consistency(&c).unwrap();
        assert!(g.spread < 1e-14);
        assert!((g.implied_beta[0] - beta).abs() < 1e-14);
    }

    #[test]
    fn mean_increases_with_threshold() {
        let d = fisheries();
        let mut last = 0.0;
        for s in [150.0, 1e3, 1e4, 1e5, 1e6] {
            let m = fpt_moments(&d, &FptProblem::up(s), 1, MomentMethod::Recursion, &cfg()).unwrap().mean();
            assert!(m > last);
            last = m;
        }
    }
}
