//! Laguerre–Gamma density approximation of a passage time from its moments.
//!
//! With a Gamma reference of shape `alpha + 1` and rate `beta`,
//!
//! ```text
//! g_n(t) = beta (beta t)^alpha e^{-beta t} sum_{k=0}^n B_k L_k^alpha(beta t),
//! B_k = sum_j C(k, j) (-beta)^j E[T^j] / Gamma(alpha + j + 1),
//! ```
//!
//! so `B_0 = 1 / Gamma(alpha + 1)` and the sum starts at `k = 0`. Internally
//! the coefficients are kept as `b_k = B_k Gamma(alpha + 1)` so `b_0 = 1` and
//! large shapes do not underflow.

use rug::Float;
use serde::Serialize;
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::analytics::MomentSet;
use crate::error::{FptError, Result};
use crate::quad::{integrate, QuadConfig};
use crate::series::binomial;

/// Gamma reference: shape `alpha + 1`, rate `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaRef {
    pub alpha: f64,
    pub beta: f64,
}

impl GammaRef {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > -1.0 && alpha.is_finite()) {
            return Err(FptError::InvalidParameter { name: "alpha", reason: format!("must be > -1, got {alpha}") });
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(FptError::InvalidParameter { name: "beta", reason: format!("must be > 0, got {beta}") });
        }
        Ok(Self { alpha, beta })
    }

    pub fn shape(&self) -> f64 {
        self.alpha + 1.0
    }

    pub fn mean(&self) -> f64 {
        self.shape() / self.beta
    }

    /// `ln[beta (beta t)^alpha e^{-beta t} / Gamma(alpha + 1)]`
    fn ln_pdf(&self, t: f64) -> f64 {
        let x = self.beta * t;
        self.beta.ln() + self.alpha * x.ln() - x - ln_gamma(self.shape())
    }

    pub fn pdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return if self.alpha < 0.0 && t == 0.0 {
                f64::INFINITY
            } else if self.alpha == 0.0 && t == 0.0 {
                self.beta
            } else {
                0.0
            };
        }
        self.ln_pdf(t).exp()
    }

    /// Upper tail `P(T > t)`.
    pub fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            1.0
        } else {
            gamma_ur(self.shape(), self.beta * t)
        }
    }

    /// Smallest `t` (to bisection accuracy) with `P(T > t) <= mass`.
    pub fn tail_cut(&self, mass: f64) -> f64 {
        let mut lo = 0.0;
        let mut hi = self.mean().max(1.0 / self.beta);
        while self.survival(hi) > mass {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.survival(mid) > mass {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * hi {
                break;
            }
        }
        hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaWarning {
    /// `alpha < 0`: the reference density is unbounded at the origin.
    SingularOrigin { alpha: f64 },
    /// The sufficient convergence condition `beta < 2/E[T]` fails.
    RateAboveConvergenceBound { beta: f64, bound: f64 },
}

impl std::fmt::Display for GammaWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::SingularOrigin { alpha } => write!(f, "alpha = {alpha:.4} < 0: Gamma reference is singular at the origin"),
            Self::RateAboveConvergenceBound { beta, bound } => {
                write!(f, "beta = {beta:.4} >= 2/E[T] = {bound:.4}: sufficient convergence condition does not hold")
            }
        }
    }
}

/// Moment-matched reference: `alpha + 1 = E[T]^2 / Var`, `beta = E[T] / Var`.
pub fn match_gamma(m: &MomentSet) -> Result<(GammaRef, Vec<GammaWarning>)> {
    if m.order() < 2 {
        return Err(FptError::InsufficientMoments { needed: 2, have: m.order() });
    }
    let p = m.raw[1].prec();
    let mean = &m.raw[1];
    let var = Float::with_val(p, &m.raw[2] - Float::with_val(p, mean.square_ref()));
    if !(var > 0) || !(*mean > 0) {
        return Err(FptError::ZeroVariance);
    }
    let beta = Float::with_val(p, mean / &var);
    let shape = Float::with_val(p, mean * &beta);
    let g = GammaRef::new(shape.to_f64() - 1.0, beta.to_f64())?;
    let mut warnings = Vec::new();
    if g.alpha < 0.0 {
        warnings.push(GammaWarning::SingularOrigin { alpha: g.alpha });
    }
    let bound = 2.0 / mean.to_f64();
    if g.beta >= bound {
        warnings.push(GammaWarning::RateAboveConvergenceBound { beta: g.beta, bound });
    }
    Ok((g, warnings))
}

/// Generalized Laguerre polynomial by the three-term recurrence.
pub fn laguerre_poly(k: usize, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if k == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for j in 1..k {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0 + alpha - x) * cur - (jf + alpha) * prev) / (jf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `L_0..=L_n` at `x`.
fn laguerre_all(n: usize, alpha: f64, x: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if n == 0 {
        return;
    }
    out.push(1.0 + alpha - x);
    for j in 1..n {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0 + alpha - x) * out[j] - (jf + alpha) * out[j - 1]) / (jf + 1.0);
        out.push(next);
    }
}

/// Scaled coefficients `b_k = B_k Gamma(alpha + 1)`, `k = 0..=n`, summed at
/// the moment set's precision.
pub fn scaled_coeffs(m: &MomentSet, g: &GammaRef, n: usize) -> Result<Vec<f64>> {
    if m.order() < n {
        return Err(FptError::InsufficientMoments { needed: n, have: m.order() });
    }
    let p = m.raw[0].prec().max(128);
    let alpha = Float::with_val(p, g.alpha);
    let beta = Float::with_val(p, g.beta);
    // w_j = (-beta)^j E[T^j] Gamma(alpha+1) / Gamma(alpha+j+1)
    let mut w = Vec::with_capacity(n + 1);
    let mut scale = Float::with_val(p, 1);
    for j in 0..=n {
        if j > 0 {
            scale *= -Float::with_val(p, &beta);
            scale /= Float::with_val(p, &alpha + j as u32);
        }
        w.push(Float::with_val(p, &scale * &m.raw[j]));
    }
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let mut acc = Float::new(p);
        for (j, wj) in w.iter().enumerate().take(k + 1) {
            acc += Float::with_val(p, wj * binomial(k, j));
        }
        out.push(acc.to_f64());
    }
    Ok(out)
}

/// `B_0..=B_n` as printed (`B_0 = 1/Gamma(alpha+1)`); underflows to zero for
/// very large shapes, use [`scaled_coeffs`] there.
pub fn laguerre_coeffs(m: &MomentSet, g: &GammaRef, n: usize) -> Result<Vec<f64>> {
    let lg = ln_gamma(g.shape());
    Ok(scaled_coeffs(m, g, n)?.into_iter().map(|b| b * (-lg).exp()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correction {
    pub clip_applied: bool,
    pub renorm_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApproxDiagnostics {
    /// `|int g_n - 1|` before any correction.
    pub normalization_residual: f64,
    /// Negative mass of `g_n` before correction.
    pub negative_mass: f64,
    /// Upper end of the quadrature range; beyond it the tail is analytic.
    pub t_cut: f64,
    /// Whether the order selection rules were met.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaguerreApproximant {
    pub gamma: GammaRef,
    pub order: usize,
    /// Scaled coefficients `b_k = B_k Gamma(alpha + 1)`.
    pub scaled: Vec<f64>,
    pub correction: Correction,
    pub diagnostics: ApproxDiagnostics,
}

const TAIL_MASS: f64 = 1e-12;

fn quad_cfg() -> QuadConfig {
    QuadConfig { abs_tol: 1e-14, rel_tol: 1e-12, max_intervals: 20_000 }
}

impl LaguerreApproximant {
    /// Truncated expansion of order `n`; with `correct`, negative parts are
    /// clipped and the result renormalized.
    pub fn build(m: &MomentSet, g: GammaRef, n: usize, correct: bool) -> Result<Self> {
        let scaled = scaled_coeffs(m, &g, n)?;
        let t_cut = g.tail_cut(TAIL_MASS);
        let mut apx = Self {
            gamma: g,
            order: n,
            scaled,
            correction: Correction { clip_applied: false, renorm_factor: 1.0 },
            diagnostics: ApproxDiagnostics { normalization_residual: 0.0, negative_mass: 0.0, t_cut, converged: true },
        };
        let cfg = quad_cfg();
        let body = integrate(|t| apx.raw_density(t), 0.0, t_cut, &cfg)?.value;
        let tail = apx.raw_tail(t_cut);
        apx.diagnostics.normalization_residual = (body + tail - 1.0).abs();
        let neg = integrate(|t| (-apx.raw_density(t)).max(0.0), 0.0, t_cut, &cfg)?.value;
        apx.diagnostics.negative_mass = neg;
        if correct && neg > 0.0 {
            apx.correction = Correction { clip_applied: true, renorm_factor: 1.0 / (body + neg + tail) };
        }
        Ok(apx)
    }

    /// `B_k` as printed.
    pub fn coeffs(&self) -> Vec<f64> {
        let s = (-ln_gamma(self.gamma.shape())).exp();
        self.scaled.iter().map(|b| b * s).collect()
    }

    fn raw_density(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let x = self.gamma.beta * t;
        let mut l = Vec::with_capacity(self.order + 1);
        laguerre_all(self.order, self.gamma.alpha, x, &mut l);
        let poly: f64 = self.scaled.iter().zip(&l).map(|(b, lk)| b * lk).sum();
        self.gamma.ln_pdf(t).exp() * poly
    }

    /// `int_t^inf` of the uncorrected density, through monomial coefficients
    /// and regularized incomplete gamma functions.
    fn raw_tail(&self, t: f64) -> f64 {
        let a = self.gamma.alpha;
        let x = self.gamma.beta * t;
        let n = self.order;
        // sum_k b_k L_k(x) = sum_j p_j x^j with
        // p_j = (-1)^j / j! sum_{k>=j} b_k Gamma(k+a+1) / (Gamma(j+a+1) (k-j)!)
        let mut total = 0.0;
        for j in 0..=n {
            let mut pj = 0.0;
            for k in j..=n {
                let lr = ln_gamma(k as f64 + a + 1.0) - ln_gamma(j as f64 + a + 1.0) - ln_gamma((k - j) as f64 + 1.0);
                pj += self.scaled[k] * lr.exp();
            }
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            // int_x^inf y^{a+j} e^{-y} dy / Gamma(a+1) / j!
            let lw = ln_gamma(a + j as f64 + 1.0) - ln_gamma(a + 1.0) - ln_gamma(j as f64 + 1.0);
            total += sign * pj * lw.exp() * gamma_ur(a + j as f64 + 1.0, x);
        }
        total
    }

    /// Density at `t >= 0`, corrected if the approximant carries a correction.
    pub fn density(&self, t: f64) -> f64 {
        let g = self.raw_density(t);
        if self.correction.clip_applied {
            g.max(0.0) * self.correction.renorm_factor
        } else {
            g
        }
    }

    /// `P(T <= t)` by quadrature of [`Self::density`].
    pub fn cdf(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        let t_cut = self.diagnostics.t_cut;
        let body = integrate(|s| self.density(s), 0.0, t.min(t_cut), &quad_cfg())?.value;
        if t <= t_cut {
            return Ok(body);
        }
        let f = self.correction.renorm_factor;
        Ok(body + f * (self.raw_tail(t_cut) - self.raw_tail(t)))
    }

    /// `int t^j g_n(t) dt` of the uncorrected density, by quadrature.
    pub fn raw_moment(&self, j: u32) -> Result<f64> {
        let t_cut = self.gamma.tail_cut(1e-15) * 1.5;
        Ok(integrate(|t| t.powi(j as i32) * self.raw_density(t), 0.0, t_cut, &quad_cfg())?.value)
    }

    /// Constant term of the polynomial factor (density behaviour at the origin).
    pub fn origin_coefficient(&self) -> f64 {
        let a = self.gamma.alpha;
        self.scaled
            .iter()
            .enumerate()
            .map(|(k, b)| b * (ln_gamma(k as f64 + a + 1.0) - ln_gamma(a + 1.0) - ln_gamma(k as f64 + 1.0)).exp())
            .sum()
    }
}

pub fn density_eval(apx: &LaguerreApproximant, t: f64) -> f64 {
    apx.density(t)
}

pub fn cdf_eval(apx: &LaguerreApproximant, t: f64) -> Result<f64> {
    apx.cdf(t)
}

/// Coefficients whose magnitude is below this (relative to `b_0`) are
/// treated as zero by the positivity rules.
const VANISHING: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderSelection {
    pub order: usize,
    pub converged: bool,
}

fn order_accepted(apx: &LaguerreApproximant, tol: f64) -> bool {
    let n = apx.order;
    let bn = apx.scaled[n];
    let origin_ok = apx.origin_coefficient() > 0.0;
    let lead = if n % 2 == 0 { bn } else { -bn };
    let tail_ok = lead > 0.0 || bn.abs() < VANISHING;
    apx.diagnostics.normalization_residual < tol && origin_ok && tail_ok && bn.abs() < tol
}

/// Smallest order in `3..=n_max` meeting the normalization, positivity and
/// coefficient-decay rules; `n_max` flagged as not converged otherwise.
pub fn select_order(m: &MomentSet, g: &GammaRef, n_max: usize, tol: f64) -> Result<OrderSelection> {
    if m.order() < n_max {
        return Err(FptError::InsufficientMoments { needed: n_max, have: m.order() });
    }
    for n in 3..=n_max {
        let apx = LaguerreApproximant::build(m, *g, n, false)?;
        if order_accepted(&apx, tol) {
            return Ok(OrderSelection { order: n, converged: true });
        }
    }
    Ok(OrderSelection { order: n_max.max(3).min(m.order()), converged: false })
}

/// Default tolerance for [`select_order`].
pub const DEFAULT_ORDER_TOL: f64 = 1e-6;

/// Match, select an order and build the corrected approximant.
pub fn approximate(m: &MomentSet, n_max: usize, tol: f64) -> Result<(LaguerreApproximant, Vec<GammaWarning>)> {
    let (g, warnings) = match_gamma(m)?;
    let sel = select_order(m, &g, n_max, tol)?;
    let mut apx = LaguerreApproximant::build(m, g, sel.order, true)?;
    apx.diagnostics.converged = sel.converged;
    Ok((apx, warnings))
}
