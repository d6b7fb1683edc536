//! Independent evaluation of the passage-time Laplace transforms from the
//! confluent hypergeometric functions themselves, and moments recovered from
//! it by finite differences. Nothing here touches the kernel tables.
//!
//! Upcrossing: `g(l) = (x0/U)^A Phi(A, B, v x0) / Phi(A, B, v U)`;
//! downcrossing: the same with Tricomi's `Psi`, where `A = u(1 - s)`,
//! `B = 1 - 2us`, `s = sqrt(1 + a l)`.
//!
//! `Psi` uses the integral representation, regularized at the origin so it
//! stays valid for `-1 < A <= 0`:
//!
//! ```text
//! Psi(A,B,z) Gamma(A+1) = 1 + A [ int_0^1 t^{A-1} (f(t) - 1) dt + int_1^inf t^{A-1} f(t) dt ],
//! f(t) = e^{-zt} (1+t)^{B-A-1}.
//! ```

use rug::float::Constant;
use rug::Float;
use serde::Serialize;

use crate::analytics::{MomentMethod, MomentSet};
use crate::error::{FptError, Result};
use crate::model::{validate_problem, DerivedParams, Direction, FptProblem, ProblemKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HypEvalConfig {
    /// Working precision in bits.
    pub precision: u32,
    /// Relative tolerance for series truncation and quadrature.
    pub series_tol: f64,
    /// Base finite-difference step, in units of `1/a`.
    pub fd_step: f64,
    /// Accuracy order in `h` after Richardson extrapolation (even, >= 2).
    pub fd_order: usize,
}

impl Default for HypEvalConfig {
    fn default() -> Self {
        Self { precision: 512, series_tol: 1e-70, fd_step: 1e-6, fd_order: 8 }
    }
}

impl HypEvalConfig {
    fn validate(&self) -> Result<()> {
        if self.precision < 128 {
            return Err(FptError::InvalidParameter { name: "precision", reason: "oracle needs at least 128 bits".into() });
        }
        if !(self.fd_step > 0.0) {
            return Err(FptError::InvalidParameter { name: "fd_step", reason: "must be > 0".into() });
        }
        if self.fd_order < 2 || self.fd_order % 2 == 1 {
            return Err(FptError::InvalidParameter { name: "fd_order", reason: "must be even and >= 2".into() });
        }
        Ok(())
    }
}

fn is_nonpositive_integer(b: &Float) -> bool {
    b.is_integer() && *b <= 0
}

/// Kummer's `Phi(a, b, z) = sum <a>_n / <b>_n z^n / n!`.
pub fn kummer_phi(a: &Float, b: &Float, z: &Float, tol: f64) -> Result<Float> {
    if is_nonpositive_integer(b) {
        return Err(FptError::BadParameterB { b: b.to_f64() });
    }
    let p = a.prec().max(b.prec()).max(z.prec());
    let mut term = Float::with_val(p, 1);
    let mut sum = Float::with_val(p, 1);
    let mut small = 0;
    for n in 0..100_000u32 {
        term *= Float::with_val(p, a + n);
        term /= Float::with_val(p, b + n);
        term *= z;
        term /= n + 1;
        sum += &term;
        if term.is_zero() {
            return Ok(sum);
        }
        if Float::with_val(53, term.abs_ref()) < Float::with_val(53, sum.abs_ref()) * tol {
            small += 1;
            if small >= 3 {
                return Ok(sum);
            }
        } else {
            small = 0;
        }
    }
    Err(FptError::QuadratureFailure("Kummer series did not converge".into()))
}

/// `Gamma(a+1) Psi(a, b, z)`, valid for `a > -1`, `z > 0`.
pub fn tricomi_psi_scaled(a: &Float, b: &Float, z: &Float, tol: f64) -> Result<Float> {
    let p = a.prec().max(b.prec()).max(z.prec());
    if !(*a > -1) {
        return Err(FptError::InvalidParameter { name: "a", reason: format!("Tricomi integral needs a > -1, got {}", a.to_f64()) });
    }
    if !(*z > 0) {
        return Err(FptError::InvalidParameter { name: "z", reason: "Tricomi integral needs z > 0".into() });
    }
    if a.is_zero() {
        return Ok(Float::with_val(p, 1));
    }
    let am1 = Float::with_val(p, a - 1u32);
    let c = Float::with_val(p, b - a) - 1u32;

    // t^{a-1} expm1(-z t + c log1p t) on [0, 1]
    let i1 = tanh_sinh_unit(p, tol, |t| {
        let e = Float::with_val(p, &c * Float::with_val(p, t.ln_1p_ref())) - Float::with_val(p, z * t);
        (Float::with_val(p, t.ln_ref()) * &am1).exp() * e.exp_m1()
    })?;
    // t^{a-1} (1+t)^c e^{-zt} on [1, inf)
    let i2 = exp_sinh_from_one(p, tol, |t| {
        let e = Float::with_val(p, t.ln_ref()) * &am1 + Float::with_val(p, &c * Float::with_val(p, t.ln_1p_ref()))
            - Float::with_val(p, z * t);
        e.exp()
    })?;
    Ok(Float::with_val(p, a * (i1 + i2)) + 1u32)
}

/// Tricomi's `Psi(a, b, z)` for `a > -1`, `z > 0`; `Psi(0, b, z) = 1`.
pub fn tricomi_psi(a: &Float, b: &Float, z: &Float, tol: f64) -> Result<Float> {
    let scaled = tricomi_psi_scaled(a, b, z, tol)?;
    let g = Float::with_val(scaled.prec(), a + 1u32).gamma();
    Ok(scaled / g)
}

fn quad_fail(what: &str) -> FptError {
    FptError::QuadratureFailure(what.into())
}

/// Double-exponential sum `h sum_j w(jh) f(x(jh))` refined by halving `h`.
/// `term(tau)` returns the weighted integrand or `None` once the node has
/// left the representable range.
fn de_refine(p: u32, tol: f64, term: impl Fn(&Float) -> Result<Option<Float>>) -> Result<Float> {
    let tau_max = 12.0;
    let level_sum = |h: &Float, odd_only: bool| -> Result<Float> {
        let mut sum = Float::new(p);
        let step = if odd_only { 2 } else { 1 };
        let start = if odd_only { 1 } else { 0 };
        if !odd_only {
            if let Some(t) = term(&Float::new(p))? {
                sum += t;
            }
        }
        for sign in [1i32, -1] {
            let mut j = if odd_only { start } else { 1 };
            let mut tiny = 0;
            loop {
                let tau = Float::with_val(p, h * (sign * j));
                if tau.to_f64().abs() > tau_max {
                    break;
                }
                match term(&tau)? {
                    Some(t) => {
                        let negligible = t.is_zero()
                            || (!sum.is_zero() && t.get_exp().unwrap_or(i32::MIN) < sum.get_exp().unwrap_or(0) - p as i32 - 16);
                        sum += t;
                        if negligible {
                            tiny += 1;
                            if tiny >= 3 {
                                break;
                            }
                        } else {
                            tiny = 0;
                        }
                    }
                    None => break,
                }
                j += step;
            }
        }
        Ok(sum)
    };

    let mut h = Float::with_val(p, 0.5);
    let mut total = Float::with_val(p, level_sum(&h, false)? * &h);
    for _level in 0..14 {
        let half = Float::with_val(p, &h / 2u32);
        let odd = level_sum(&half, true)?;
        let next = Float::with_val(p, &total / 2u32) + odd * &half;
        if !next.is_finite() {
            return Err(quad_fail("non-finite quadrature sum"));
        }
        let diff = Float::with_val(p, &next - &total).abs();
        total = next;
        h = half;
        if diff <= Float::with_val(p, total.abs_ref()) * tol || diff.is_zero() {
            return Ok(total);
        }
    }
    Err(quad_fail("double-exponential quadrature did not reach tolerance"))
}

/// `int_0^1 f(t) dt` by tanh-sinh, with nodes accurate near `t = 0`.
fn tanh_sinh_unit(p: u32, tol: f64, f: impl Fn(&Float) -> Float) -> Result<Float> {
    let half_pi = Float::with_val(p, Constant::Pi) / 2u32;
    de_refine(p, tol, |tau| {
        // t = 1 / (1 + e^{-pi sinh tau}), dt = (pi/2) cosh tau / (2 cosh^2((pi/2) sinh tau)) dtau
        let sh = Float::with_val(p, tau.sinh_ref());
        let arg = Float::with_val(p, &half_pi * &sh);
        let e = Float::with_val(p, -2 * &arg).exp();
        let t = Float::with_val(p, 1u32 / Float::with_val(p, &e + 1u32));
        if t.is_zero() || t >= 1 {
            return Ok(None);
        }
        let ch = Float::with_val(p, arg.cosh_ref());
        let w = Float::with_val(p, &half_pi * Float::with_val(p, tau.cosh_ref())) / (Float::with_val(p, ch.square_ref()) * 2u32);
        if w.is_zero() {
            return Ok(None);
        }
        let v = f(&t) * w;
        if !v.is_finite() {
            return Err(quad_fail("non-finite integrand on [0, 1]"));
        }
        Ok(Some(v))
    })
}

/// `int_1^inf f(t) dt` by exp-sinh, `t = 1 + exp((pi/2) sinh tau)`.
fn exp_sinh_from_one(p: u32, tol: f64, f: impl Fn(&Float) -> Float) -> Result<Float> {
    let half_pi = Float::with_val(p, Constant::Pi) / 2u32;
    de_refine(p, tol, |tau| {
        let arg = Float::with_val(p, &half_pi * Float::with_val(p, tau.sinh_ref()));
        let e = Float::with_val(p, arg.exp_ref());
        if e.is_zero() || !e.is_finite() {
            return Ok(None);
        }
        let t = Float::with_val(p, &e + 1u32);
        let w = Float::with_val(p, &half_pi * Float::with_val(p, tau.cosh_ref())) * &e;
        let v = f(&t) * w;
        if !v.is_finite() {
            return Err(quad_fail("non-finite integrand on [1, inf)"));
        }
        Ok(Some(v))
    })
}

/// Laplace transform at arbitrary precision. `lam` may be slightly negative
/// (`1 + a lam > 0` and, for downcrossings, `A > -1` are required).
pub fn laplace_transform_mp(d: &DerivedParams, prob: &FptProblem, lam: &Float, cfg: &HypEvalConfig) -> Result<Float> {
    let p = d.precision;
    let x0 = d.params.x0;
    if validate_problem(d, x0, prob)? == ProblemKind::DegenerateZero || lam.is_zero() {
        return Ok(Float::with_val(p, 1));
    }
    let disc = Float::with_val(p, &d.a * lam) + 1u32;
    if !(disc > 0) {
        return Err(FptError::StencilFailure(format!("1 + a lambda <= 0 at lambda = {}", lam.to_f64())));
    }
    let s = disc.sqrt();
    let big_a = Float::with_val(p, &d.u * Float::with_val(p, 1 - &s));
    let big_b = Float::with_val(p, 1 - Float::with_val(p, 2 * &d.u) * &s);
    let zx = Float::with_val(p, &d.v * x0);
    let zs = Float::with_val(p, &d.v * prob.threshold);
    let pref = (Float::with_val(p, x0) / prob.threshold).ln() * &big_a;
    let pref = pref.exp();
    let ratio = match prob.direction {
        Direction::Up => kummer_phi(&big_a, &big_b, &zx, cfg.series_tol)? / kummer_phi(&big_a, &big_b, &zs, cfg.series_tol)?,
        Direction::Down => {
            tricomi_psi_scaled(&big_a, &big_b, &zx, cfg.series_tol)? / tricomi_psi_scaled(&big_a, &big_b, &zs, cfg.series_tol)?
        }
    };
    Ok(pref * ratio)
}

/// `E[exp(-lam T)]` for `lam >= 0`.
pub fn laplace_transform(d: &DerivedParams, prob: &FptProblem, lam: f64, cfg: &HypEvalConfig) -> Result<f64> {
    cfg.validate()?;
    if !(lam >= 0.0 && lam.is_finite()) {
        return Err(FptError::InvalidParameter { name: "lambda", reason: format!("must be finite and >= 0, got {lam}") });
    }
    let d = DerivedParams::new(&d.params, cfg.precision)?;
    Ok(laplace_transform_mp(&d, prob, &Float::with_val(cfg.precision, lam), cfg)?.to_f64())
}

/// Central-difference weights for the k-th derivative on nodes `-2..=2` (times `h^-k`).
fn stencil(k: usize) -> [f64; 5] {
    match k {
        1 => [0.0, -0.5, 0.0, 0.5, 0.0],
        2 => [0.0, 1.0, -2.0, 1.0, 0.0],
        3 => [-0.5, 1.0, 0.0, -1.0, 0.5],
        4 => [1.0, -4.0, 6.0, -4.0, 1.0],
        _ => unreachable!("stencil order is checked by the caller"),
    }
}

/// Moments of orders `1..=order` (`order <= 4`) as signed derivatives of the
/// directly evaluated transform at zero.
pub fn fd_moments(d: &DerivedParams, prob: &FptProblem, order: usize, cfg: &HypEvalConfig) -> Result<MomentSet> {
    cfg.validate()?;
    if order == 0 || order > 4 {
        return Err(FptError::InvalidParameter { name: "order", reason: format!("finite differences support orders 1..=4, got {order}") });
    }
    let p = cfg.precision;
    let d = DerivedParams::new(&d.params, p)?;
    if validate_problem(&d, d.params.x0, prob)? == ProblemKind::DegenerateZero {
        return Ok(MomentSet::from_values(*prob, MomentMethod::FiniteDifference, &vec![0.0; order], p));
    }

    let levels = cfg.fd_order / 2;
    let mut h0 = Float::with_val(p, cfg.fd_step) / &d.a;
    for _attempt in 0..8 {
        match fd_attempt(&d, prob, order, cfg, &h0, levels) {
            Err(FptError::StencilFailure(_)) | Err(FptError::InvalidParameter { name: "a", .. }) => {
                h0 /= 8u32;
            }
            other => return other,
        }
    }
    Err(FptError::StencilFailure("transform could not be evaluated on any stencil".into()))
}

fn fd_attempt(d: &DerivedParams, prob: &FptProblem, order: usize, cfg: &HypEvalConfig, h0: &Float, levels: usize) -> Result<MomentSet> {
    let p = d.precision;
    let f0 = laplace_transform_mp(d, prob, &Float::new(p), cfg)?;
    // table[level][k-1]: raw central estimates of the k-th derivative
    let mut raw: Vec<Vec<Float>> = Vec::with_capacity(levels);
    let mut h = h0.clone();
    for _ in 0..levels {
        let mut vals = Vec::with_capacity(5);
        for j in -2i32..=2 {
            if j == 0 {
                vals.push(f0.clone());
            } else {
                vals.push(laplace_transform_mp(d, prob, &Float::with_val(p, &h * j), cfg)?);
            }
        }
        let mut row = Vec::with_capacity(order);
        for k in 1..=order {
            let w = stencil(k);
            let mut acc = Float::new(p);
            for (wi, fi) in w.iter().zip(&vals) {
                if *wi != 0.0 {
                    acc += Float::with_val(p, fi * *wi);
                }
            }
            row.push(acc / Float::with_val(p, h.pow_ref_u(k as u32)));
        }
        raw.push(row);
        h /= 2u32;
    }

    let mut moments = Vec::with_capacity(order);
    let mut errors = vec![0.0];
    for k in 0..order {
        // Richardson on even powers of h: factors 4, 16, 64, ...
        let mut col: Vec<Float> = raw.iter().map(|r| r[k].clone()).collect();
        let mut prev_best = col[0].clone();
        let mut factor = Float::with_val(p, 4);
        for _ in 1..levels {
            prev_best = col[col.len() - 1].clone();
            let next: Vec<Float> = col
                .windows(2)
                .map(|w| {
                    let num = Float::with_val(p, &w[1] * &factor) - &w[0];
                    num / Float::with_val(p, &factor - 1u32)
                })
                .collect();
            col = next;
            factor *= 4u32;
        }
        let best = col.pop().unwrap();
        let err = Float::with_val(p, &best - &prev_best).abs().to_f64();
        let signed = if (k + 1) % 2 == 1 { -best } else { best };
        moments.push(signed);
        errors.push(err);
    }
    let mut set = MomentSet::from_values(*prob, MomentMethod::FiniteDifference, &[], p);
    set.raw.extend(moments);
    set.error_estimate = errors;
    set.flagged = vec![false; order + 1];
    Ok(set)
}

trait PowU {
    fn pow_ref_u(&self, k: u32) -> Float;
}

impl PowU for Float {
    fn pow_ref_u(&self, k: u32) -> Float {
        let mut acc = Float::with_val(self.prec(), 1);
        for _ in 0..k {
            acc *= self;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_params, ModelParams};

    const P: u32 = 256;

    fn f(v: f64) -> Float {
        Float::with_val(P, v)
    }

    #[test]
    fn kummer_identities() {
        let tol = 1e-60;
        assert_eq!(kummer_phi(&f(0.3), &f(2.5), &f(0.0), tol).unwrap(), 1);
        let e = kummer_phi(&f(1.0), &f(1.0), &f(2.0), tol).unwrap();
        assert!((e.to_f64() - 2f64.exp()).abs() < 1e-14);
        let v = kummer_phi(&f(1.0), &f(2.0), &f(1.0), tol).unwrap();
        assert!((v.to_f64() - (std::f64::consts::E - 1.0)).abs() < 1e-15);
        assert!(matches!(kummer_phi(&f(1.0), &f(-2.0), &f(1.0), tol), Err(FptError::BadParameterB { .. })));
    }

    #[test]
    fn tricomi_identities() {
        let tol = 1e-40;
        // Psi(a, a+1, z) = z^{-a}, including a in (-1, 0)
        for (a, z) in [(0.7, 1.3), (2.0, 0.5), (-0.3, 4.0), (1e-6, 9.0)] {
            let psi = tricomi_psi(&f(a), &f(a + 1.0), &f(z), tol).unwrap();
            assert!((psi.to_f64() / z.powf(-a) - 1.0).abs() < 1e-14, "a = {a}");
        }
        assert_eq!(tricomi_psi(&f(0.0), &f(3.0), &f(2.0), tol).unwrap(), 1);
        let v = tricomi_psi(&f(1.0), &f(1.0), &f(1.0), tol).unwrap();
        assert!((v.to_f64() - 0.596_347_362_323_194).abs() < 1e-13);
    }

    #[test]
    fn transform_basics() {
        let d = derive_params(&ModelParams::fisheries()).unwrap();
        let cfg = HypEvalConfig { precision: 256, series_tol: 1e-50, ..Default::default() };
        assert_eq!(laplace_transform(&d, &FptProblem::up(1e4), 0.0, &cfg).unwrap(), 1.0);
        assert_eq!(laplace_transform(&d, &FptProblem::up(100.0), 0.3, &cfg).unwrap(), 1.0);
        // completely monotone: decreasing and log-convex on a grid
        let g: Vec<f64> = [0.0, 0.02, 0.04, 0.06, 0.08].iter().map(|&l| laplace_transform(&d, &FptProblem::up(1e4), l, &cfg).unwrap()).collect();
        for w in g.windows(3) {
            assert!(w[0] > w[1] && w[1] > w[2]);
            assert!(w[1].ln() <= 0.5 * (w[0].ln() + w[2].ln()) + 1e-15);
        }
        assert!(laplace_transform(&d, &FptProblem::up(1e4), -1.0, &cfg).is_err());
    }

    #[test]
    fn fd_mean_of_reference_scenario() {
        let d = derive_params(&ModelParams::fisheries()).unwrap();
        let cfg = HypEvalConfig { precision: 320, series_tol: 1e-80, ..Default::default() };
        let m = fd_moments(&d, &FptProblem::up(1e4), 2, &cfg).unwrap();
        assert!((m.mean() - 13.348316).abs() < 1e-5, "{}", m.mean());
        assert_eq!(m.method, MomentMethod::FiniteDifference);
    }
}
