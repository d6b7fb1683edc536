//! Formal power series in the exponential convention,
//! `A(x) = sum_k a_k x^k / k!`, truncated at a fixed order.
//!
//! Reciprocal and ratio are available both through the linear recursion and
//! through the partial-Bell closed form; the two routes are independent and
//! are cross-checked in the tests.

pub mod bell;
pub mod combinatorics;

use rug::Float;

pub use bell::{bell_partial, BellTable};
pub use combinatorics::{
    binomial, binomial_row, factorial, falling_factorial, rising_factorial, stirling1_table, stirling1_unsigned,
    BinomialTable, Stirling1Table, STIRLING_N_MAX,
};

use crate::error::{FptError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ExpSeries {
    coeffs: Vec<Float>,
}

impl ExpSeries {
    /// Panics on an empty coefficient vector.
    pub fn new(coeffs: Vec<Float>) -> Self {
        assert!(!coeffs.is_empty(), "ExpSeries needs at least the constant term");
        Self { coeffs }
    }

    pub fn from_f64(coeffs: &[f64], prec: u32) -> Self {
        Self::new(coeffs.iter().map(|&c| Float::with_val(prec, c)).collect())
    }

    pub fn zero(order: usize, prec: u32) -> Self {
        Self::new(vec![Float::new(prec); order + 1])
    }

    /// The constant series 1.
    pub fn one(order: usize, prec: u32) -> Self {
        let mut s = Self::zero(order, prec);
        s.coeffs[0] = Float::with_val(prec, 1);
        s
    }

    /// Highest stored index.
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn prec(&self) -> u32 {
        self.coeffs[0].prec()
    }

    pub fn coeffs(&self) -> &[Float] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> &Float {
        &self.coeffs[k]
    }

    pub fn into_coeffs(self) -> Vec<Float> {
        self.coeffs
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.coeffs.iter().map(Float::to_f64).collect()
    }

    pub fn truncate(&self, order: usize) -> Self {
        Self::new(self.coeffs[..=order.min(self.order())].to_vec())
    }

    /// `sum_k a_k x^k / k!` over the stored terms.
    pub fn evaluate(&self, x: &Float) -> Float {
        let prec = self.prec();
        let mut acc = Float::new(prec);
        let mut w = Float::with_val(prec, 1);
        for (k, c) in self.coeffs.iter().enumerate() {
            if k > 0 {
                w *= x;
                w /= k as u32;
            }
            acc += Float::with_val(prec, c * &w);
        }
        acc
    }

    /// Binomial convolution `c_n = sum_k C(n,k) a_k b_{n-k}`.
    pub fn product(&self, other: &Self) -> Self {
        let n_max = self.order().min(other.order());
        let prec = self.prec().max(other.prec());
        let binom = BinomialTable::new(n_max, prec);
        let coeffs = (0..=n_max)
            .map(|n| {
                let mut acc = Float::new(prec);
                for k in 0..=n {
                    if self.coeffs[k].is_zero() || other.coeffs[n - k].is_zero() {
                        continue;
                    }
                    acc += Float::with_val(prec, &self.coeffs[k] * &other.coeffs[n - k]) * binom.get(n, k);
                }
                acc
            })
            .collect();
        Self::new(coeffs)
    }

    /// `1/A` by `r_n = -(1/a_0) sum_{j=1}^n C(n,j) a_j r_{n-j}`.
    pub fn reciprocal(&self) -> Result<Self> {
        Self::one(self.order(), self.prec()).ratio(self)
    }

    /// `1/A` via `r_n = (1/a_0) sum_k (-1)^k k! B_{n,k}(a_1/a_0, a_2/a_0, ...)`.
    pub fn reciprocal_bell(&self) -> Result<Self> {
        let a0 = self.nonzero_head()?;
        let prec = self.prec();
        let n = self.order();
        let bell = BellTable::new(&self.normalized_tail(a0), n);
        let coeffs = (0..=n).map(|m| bell.weighted(m, |k| signed_factorial(prec, k)) / a0).collect();
        Ok(Self::new(coeffs))
    }

    /// `A/B` by `q_n = (a_n - sum_{k=1}^n C(n,k) b_k q_{n-k}) / b_0`.
    pub fn ratio(&self, den: &Self) -> Result<Self> {
        let b0 = den.nonzero_head()?;
        let n_max = self.order().min(den.order());
        let prec = self.prec().max(den.prec());
        let binom = BinomialTable::new(n_max, prec);
        let mut q: Vec<Float> = Vec::with_capacity(n_max + 1);
        for n in 0..=n_max {
            let mut acc = Float::with_val(prec, &self.coeffs[n]);
            for k in 1..=n {
                if den.coeffs[k].is_zero() || q[n - k].is_zero() {
                    continue;
                }
                acc -= Float::with_val(prec, &den.coeffs[k] * &q[n - k]) * binom.get(n, k);
            }
            q.push(acc / b0);
        }
        Ok(Self::new(q))
    }

    /// `A/B` through the Bell closed form of `1/B`, then one convolution.
    pub fn ratio_bell(&self, den: &Self) -> Result<Self> {
        let order = self.order().min(den.order());
        Ok(self.truncate(order).product(&den.truncate(order).reciprocal_bell()?))
    }

    /// `log A` for `a_0 > 0`: `c_0 = ln a_0`, `c_n = L_n(a_1/a_0, ...)`.
    pub fn log(&self) -> Result<Self> {
        let a0 = &self.coeffs[0];
        if a0.is_zero() || a0.is_sign_negative() {
            return Err(FptError::NonPositiveConstantTerm);
        }
        let n = self.order();
        let bell = BellTable::new(&self.normalized_tail(a0), n);
        let mut coeffs = Vec::with_capacity(n + 1);
        coeffs.push(Float::with_val(self.prec(), a0.ln_ref()));
        coeffs.extend((1..=n).map(|m| bell.log_polynomial(m)));
        Ok(Self::new(coeffs))
    }

    /// `exp A`: `c_n = e^{a_0} B_n(a_1, ..., a_n)`.
    pub fn exp(&self) -> Self {
        let n = self.order();
        let scale = Float::with_val(self.prec(), self.coeffs[0].exp_ref());
        let bell = BellTable::new(&self.coeffs[1..], n);
        Self::new((0..=n).map(|m| bell.complete(m) * &scale).collect())
    }

    fn nonzero_head(&self) -> Result<&Float> {
        let a0 = &self.coeffs[0];
        if a0.is_zero() {
            Err(FptError::ZeroConstantTerm)
        } else {
            Ok(a0)
        }
    }

    fn normalized_tail(&self, a0: &Float) -> Vec<Float> {
        self.coeffs[1..].iter().map(|c| Float::with_val(self.prec(), c / a0)).collect()
    }
}

fn signed_factorial(prec: u32, k: usize) -> Float {
    let f = Float::with_val(prec, rug::Integer::from(rug::Integer::factorial(k as u32)));
    if k % 2 == 1 {
        -f
    } else {
        f
    }
}
