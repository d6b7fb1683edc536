//! Coefficient tables behind the passage-time expansions.
//!
//! Row `n` of the table holds, for `m = 0..=m_max`,
//!
//! - `lambda[m]`: `sum_j (-2u)^j [n+1, j+1] (j/2)_m`,
//! - `tilde[m]`: `sum_k A_{n,k} (k/2)_m` with `A_{n,k} = (-1)^k sum_j [n,j] C(j,k) u^j`,
//! - `bar[m]`: `sum_k D_{n,k} (k/2)_m` with `D_{n,k} = sum_j [n,j] C(j,k) u^j`,
//! - `m[m]`: the exponential-convention ratio `tilde / lambda`,
//! - `mbar[m]`: the binomial convolution of `tilde` and `bar`.
//!
//! As series in `a lambda` these rows are the rising factorials
//! `<u(1-s)>_n`, `<1-2us>_n` and `<u(1+s)>_n`; the product `<u(1-s)>_n <u(1+s)>_n`
//! is a polynomial of degree `n` in `lambda`, so `mbar[m]` vanishes for `m > n`.
//!
//! The alternating sums lose many bits, so each row is computed at a raised
//! working precision chosen from the measured cancellation and then rounded
//! back to the table precision.

use rug::ops::Pow;
use rug::Float;
use serde::Serialize;

use crate::error::{FptError, Result};
use crate::model::DerivedParams;
use crate::series::{binomial, falling_factorial, stirling1_table, BinomialTable, ExpSeries, Stirling1Table};

/// Hard cap on the number of kernel rows.
pub const KERNEL_N_MAX: usize = 256;
const INITIAL_ROWS: usize = 32;
const MAX_EXTRA_BITS: u32 = 8192;

#[derive(Debug, Clone)]
pub struct KernelRow {
    pub lambda: Vec<Float>,
    pub tilde: Vec<Float>,
    pub bar: Vec<Float>,
    pub m: Vec<Float>,
    pub mbar: Vec<Float>,
    /// Precision the row was actually computed at.
    pub work_prec: u32,
}

#[derive(Debug, Clone)]
pub struct KernelTable {
    u: Float,
    prec: u32,
    m_max: usize,
    n_cap: usize,
    rows: Vec<KernelRow>,
}

impl KernelTable {
    pub fn new(u: &Float, prec: u32, m_max: usize) -> Self {
        Self { u: Float::with_val(prec, u), prec, m_max, n_cap: KERNEL_N_MAX, rows: Vec::new() }
    }

    pub fn for_params(d: &DerivedParams, m_max: usize) -> Self {
        Self::new(&d.u, d.precision, m_max)
    }

    /// Lower the row cap (never above [`KERNEL_N_MAX`]).
    pub fn with_row_cap(mut self, n_cap: usize) -> Self {
        self.n_cap = n_cap.min(KERNEL_N_MAX);
        self
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn row_cap(&self) -> usize {
        self.n_cap
    }

    /// Number of rows computed so far.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Make rows `0..=n` available, growing geometrically.
    pub fn ensure_rows(&mut self, n: usize) -> Result<()> {
        if n > self.n_cap {
            return Err(FptError::IndexOutOfRange { what: "kernel row", n, k: 0, limit: self.n_cap });
        }
        if n < self.rows.len() {
            return Ok(());
        }
        let target = n.max(INITIAL_ROWS - 1).max(2 * self.rows.len()).min(self.n_cap);
        let stirling = stirling1_table(target + 1)?;
        for row in self.rows.len()..=target {
            self.rows.push(compute_row(row, &self.u, self.prec, self.m_max, &stirling));
        }
        Ok(())
    }

    /// Row `n`; panics unless it was made available by [`Self::ensure_rows`].
    pub fn row(&self, n: usize) -> &KernelRow {
        &self.rows[n]
    }

    fn get<'a>(&'a self, what: &'static str, n: usize, m: usize, pick: fn(&KernelRow) -> &Vec<Float>) -> Result<&'a Float> {
        if m > self.m_max {
            return Err(FptError::IndexOutOfRange { what, n, k: m, limit: self.m_max });
        }
        match self.rows.get(n) {
            Some(row) => Ok(&pick(row)[m]),
            None => Err(FptError::IndexOutOfRange { what, n, k: m, limit: self.rows.len().saturating_sub(1) }),
        }
    }

    pub fn lambda(&self, n: usize, m: usize) -> Result<&Float> {
        self.get("lambda", n, m, |r| &r.lambda)
    }

    pub fn lambda_tilde(&self, n: usize, m: usize) -> Result<&Float> {
        self.get("lambda_tilde", n, m, |r| &r.tilde)
    }

    pub fn lambda_bar(&self, n: usize, m: usize) -> Result<&Float> {
        self.get("lambda_bar", n, m, |r| &r.bar)
    }

    pub fn m_coeff(&self, n: usize, m: usize) -> Result<&Float> {
        self.get("M", n, m, |r| &r.m)
    }

    pub fn mbar_coeff(&self, n: usize, m: usize) -> Result<&Float> {
        self.get("Mbar", n, m, |r| &r.mbar)
    }
}

/// Worst cancellation seen while forming a row, in bits.
#[derive(Default)]
struct Cancellation(i64);

impl Cancellation {
    fn note(&mut self, abs_sum: &Float, value: &Float) {
        if value.is_zero() || abs_sum.is_zero() {
            return;
        }
        if let (Some(es), Some(ev)) = (abs_sum.get_exp(), value.get_exp()) {
            self.0 = self.0.max(i64::from(es) - i64::from(ev));
        }
    }
}

fn compute_row(n: usize, u: &Float, prec: u32, m_max: usize, stirling: &Stirling1Table) -> KernelRow {
    let mut extra = 64 + 2 * (usize::BITS - n.leading_zeros());
    loop {
        let (row, lost) = compute_row_at(n, u, prec + extra, m_max, stirling);
        if lost + 32 <= i64::from(extra) || extra >= MAX_EXTRA_BITS {
            return round_row(row, prec);
        }
        extra = (lost as u32 + 64).min(MAX_EXTRA_BITS);
    }
}

fn round_row(row: KernelRow, prec: u32) -> KernelRow {
    let r = |v: Vec<Float>| v.into_iter().map(|x| Float::with_val(prec, x)).collect();
    KernelRow { lambda: r(row.lambda), tilde: r(row.tilde), bar: r(row.bar), m: r(row.m), mbar: r(row.mbar), work_prec: row.work_prec }
}

fn compute_row_at(n: usize, u_in: &Float, wp: u32, m_max: usize, stirling: &Stirling1Table) -> (KernelRow, i64) {
    let mut cancel = Cancellation::default();
    let u = Float::with_val(wp, u_in);
    let zero = || Float::new(wp);

    // (j/2)_m for j <= n
    let half: Vec<Vec<Float>> = (0..=n)
        .map(|j| {
            let x = Float::with_val(wp, j) / 2u32;
            (0..=m_max).map(|m| falling_factorial(&x, m)).collect()
        })
        .collect();

    // lambda[m] = sum_j (-2u)^j [n+1, j+1] (j/2)_m
    let mut lambda = vec![zero(); m_max + 1];
    let mut lambda_abs = vec![zero(); m_max + 1];
    let minus_two_u = Float::with_val(wp, -2 * &u);
    let mut pow = Float::with_val(wp, 1);
    for (j, h) in half.iter().enumerate() {
        let w = Float::with_val(wp, &pow * stirling.row(n + 1)[j + 1].clone());
        for m in 0..=m_max {
            let t = Float::with_val(wp, &w * &h[m]);
            lambda_abs[m] += Float::with_val(wp, t.abs_ref());
            lambda[m] += t;
        }
        pow *= &minus_two_u;
    }
    for m in 0..=m_max {
        cancel.note(&lambda_abs[m], &lambda[m]);
    }

    // D_{n,k} are the coefficients of <u(1+t)>_n = prod_i ((u+i) + u t).
    let mut d = vec![Float::with_val(wp, 1)];
    for i in 0..n {
        let c0 = Float::with_val(wp, &u + i as u64);
        let mut next = vec![zero(); d.len() + 1];
        for (k, dk) in d.iter().enumerate() {
            next[k] += Float::with_val(wp, &c0 * dk);
            next[k + 1] += Float::with_val(wp, &u * dk);
        }
        d = next;
    }

    let mut tilde = vec![zero(); m_max + 1];
    let mut bar = vec![zero(); m_max + 1];
    let mut abs_sum = vec![zero(); m_max + 1];
    for (k, dk) in d.iter().enumerate() {
        for m in 0..=m_max {
            let t = Float::with_val(wp, dk * &half[k][m]);
            abs_sum[m] += Float::with_val(wp, t.abs_ref());
            if k % 2 == 0 {
                tilde[m] += &t;
            } else {
                tilde[m] -= &t;
            }
            bar[m] += t;
        }
    }
    if n >= 1 {
        tilde[0] = zero();
    }
    for m in 0..=m_max {
        cancel.note(&abs_sum[m], &tilde[m]);
        cancel.note(&abs_sum[m], &bar[m]);
    }

    let binom = BinomialTable::new(m_max, wp);

    // m = tilde / lambda, exponential convention
    let mut mrow: Vec<Float> = Vec::with_capacity(m_max + 1);
    for k in 0..=m_max {
        let mut acc = Float::with_val(wp, &tilde[k]);
        let mut acc_abs = Float::with_val(wp, tilde[k].abs_ref());
        for j in 1..=k {
            let t = Float::with_val(wp, &lambda[j] * &mrow[k - j]) * binom.get(k, j);
            acc_abs += Float::with_val(wp, t.abs_ref());
            acc -= t;
        }
        cancel.note(&acc_abs, &acc);
        mrow.push(acc / &lambda[0]);
    }

    // mbar = tilde * bar, zero beyond the polynomial degree
    let mut mbar = vec![zero(); m_max + 1];
    for m in 0..=m_max.min(n) {
        let mut acc = zero();
        let mut acc_abs = zero();
        for k in 0..=m {
            let t = Float::with_val(wp, &tilde[k] * &bar[m - k]) * binom.get(m, k);
            acc_abs += Float::with_val(wp, t.abs_ref());
            acc += t;
        }
        if n >= 1 && m == 0 {
            acc = zero();
        }
        cancel.note(&acc_abs, &acc);
        mbar[m] = acc;
    }

    (KernelRow { lambda, tilde, bar, m: mrow, mbar, work_prec: wp }, cancel.0)
}

fn guard_prec(prec: u32, n: usize) -> u32 {
    prec + n as u32 + 8 * (usize::BITS - n.leading_zeros()) + 64
}

/// `Lambda_{n,k}` straight from its Stirling-number definition.
pub fn lambda_plain(u: &Float, n: usize, k: usize, prec: u32) -> Result<Float> {
    let wp = guard_prec(prec, n);
    let st = stirling1_table(n + 1)?;
    let minus_two_u = Float::with_val(wp, -2 * u);
    let mut acc = Float::new(wp);
    for j in 0..=n {
        let x = Float::with_val(wp, j) / 2u32;
        let t = Float::with_val(wp, (&minus_two_u).pow(j as u32)) * st.get(n + 1, j + 1)?.clone() * falling_factorial(&x, k);
        acc += t;
    }
    Ok(Float::with_val(prec, acc))
}

/// `A_{n,k} = (-1)^k sum_{j>=k} [n,j] C(j,k) u^j`.
pub fn a_coeff(u: &Float, n: usize, k: usize, prec: u32) -> Result<Float> {
    let d = d_coeff(u, n, k, prec)?;
    Ok(if k % 2 == 1 { -d } else { d })
}

/// `D_{n,k} = sum_{j>=k} [n,j] C(j,k) u^j`.
pub fn d_coeff(u: &Float, n: usize, k: usize, prec: u32) -> Result<Float> {
    let wp = guard_prec(prec, n);
    let st = stirling1_table(n)?;
    let u = Float::with_val(wp, u);
    let mut acc = Float::new(wp);
    for j in k..=n {
        acc += Float::with_val(wp, (&u).pow(j as u32)) * st.get(n, j)?.clone() * binomial(j, k);
    }
    Ok(Float::with_val(prec, acc))
}

/// `tilde Lambda_{n,m}`; zero by definition for `m = 0`, `n >= 1`.
pub fn lambda_tilde(u: &Float, n: usize, m: usize, prec: u32) -> Result<Float> {
    if n >= 1 && m == 0 {
        return Ok(Float::new(prec));
    }
    let wp = guard_prec(prec, n);
    let mut acc = Float::new(wp);
    for k in 0..=n {
        let x = Float::with_val(wp, k) / 2u32;
        acc += a_coeff(u, n, k, wp)? * falling_factorial(&x, m);
    }
    Ok(Float::with_val(prec, acc))
}

/// `bar Lambda_{n,m}`.
pub fn lambda_bar(u: &Float, n: usize, m: usize, prec: u32) -> Result<Float> {
    let wp = guard_prec(prec, n);
    let mut acc = Float::new(wp);
    for k in 0..=n {
        let x = Float::with_val(wp, k) / 2u32;
        acc += d_coeff(u, n, k, wp)? * falling_factorial(&x, m);
    }
    Ok(Float::with_val(prec, acc))
}

/// `M_{n,m}`, the `m`-th coefficient of `tilde Lambda_{n,.} / Lambda_{n,.}`.
pub fn m_coeff(u: &Float, n: usize, m: usize, prec: u32) -> Result<Float> {
    let wp = guard_prec(prec, n);
    let num: Result<Vec<Float>> = (0..=m).map(|j| lambda_tilde(u, n, j, wp)).collect();
    let den: Result<Vec<Float>> = (0..=m).map(|j| lambda_plain(u, n, j, wp)).collect();
    let q = ExpSeries::new(num?).ratio(&ExpSeries::new(den?))?;
    Ok(Float::with_val(prec, q.coeff(m)))
}

/// `bar M_{n,m} = sum_k C(m,k) tilde Lambda_{n,k} bar Lambda_{n,m-k}`.
pub fn mbar_coeff(u: &Float, n: usize, m: usize, prec: u32) -> Result<Float> {
    if m > n {
        return Ok(Float::new(prec));
    }
    let wp = guard_prec(prec, n);
    let mut acc = Float::new(wp);
    for k in 0..=m {
        acc += lambda_tilde(u, n, k, wp)? * lambda_bar(u, n, m - k, wp)? * binomial(m, k);
    }
    Ok(Float::with_val(prec, acc))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesConfig {
    /// Relative size below which a convergent-series term counts as negligible.
    pub tol: f64,
    /// Consecutive negligible terms required before stopping.
    pub streak: usize,
    /// Kernel rows available to one series.
    pub n_max: usize,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self { tol: 1e-40, streak: 5, n_max: KERNEL_N_MAX }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesDiagnostics {
    pub y: f64,
    pub vy: f64,
    /// For the convergent series: index of the last term added. For the
    /// asymptotic one: the optimal truncation index (terms below it are summed).
    pub terms_used: Vec<usize>,
    /// Absolute error estimate per coefficient.
    pub error_estimate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesEval {
    pub series: ExpSeries,
    pub diag: SeriesDiagnostics,
}

fn check_y(y: f64) -> Result<()> {
    if y.is_finite() && y > 0.0 {
        Ok(())
    } else {
        Err(FptError::InvalidParameter { name: "y", reason: format!("must be finite and > 0, got {y}") })
    }
}

/// `y^{u(1-s)}` expanded in `lambda`: the exponential of
/// `e_k = -u log(y) (1/2)_k a^k`, `k >= 1`.
pub fn q_series(d: &DerivedParams, y: f64, order: usize) -> Result<ExpSeries> {
    check_y(y)?;
    let p = d.precision;
    let log_y = Float::with_val(p, y).ln();
    let base = Float::with_val(p, -&d.u) * &log_y;
    let half = Float::with_val(p, 0.5);
    let mut e = vec![Float::new(p)];
    let mut a_pow = Float::with_val(p, 1);
    for k in 1..=order {
        a_pow *= &d.a;
        e.push(Float::with_val(p, &base * &a_pow) * falling_factorial(&half, k));
    }
    Ok(ExpSeries::new(e).exp())
}

/// Kummer part of the upcrossing expansion,
/// `l_k = a^k sum_{n>=1} M_{n,k} (vy)^n / n!`, `l_0 = 1`.
pub fn l_series(d: &DerivedParams, table: &mut KernelTable, y: f64, order: usize, cfg: &SeriesConfig) -> Result<SeriesEval> {
    check_y(y)?;
    check_order(table, order)?;
    let p = d.precision;
    let vy = Float::with_val(p, &d.v * y);
    let n_max = cfg.n_max.min(table.row_cap());

    let mut sums = vec![Float::new(p); order + 1];
    sums[0] = Float::with_val(p, 1);
    let mut last = vec![Float::new(p); order + 1];
    let mut used = vec![0usize; order + 1];
    let mut streak = vec![0usize; order + 1];
    let mut done: Vec<bool> = (0..=order).map(|k| k == 0).collect();

    let mut w = Float::with_val(p, 1);
    let mut n = 0;
    while done.iter().any(|x| !x) {
        n += 1;
        if n > n_max {
            let k = done.iter().position(|x| !x).unwrap_or(0);
            return Err(FptError::NoConvergence { k, n_max });
        }
        table.ensure_rows(n)?;
        w *= &vy;
        w /= n as u32;
        let row = table.row(n);
        for k in 1..=order {
            if done[k] {
                continue;
            }
            let term = Float::with_val(p, &row.m[k] * &w);
            sums[k] += &term;
            used[k] = n;
            let negligible = Float::with_val(53, term.abs_ref()) < Float::with_val(53, sums[k].abs_ref()) * cfg.tol;
            last[k] = term;
            if negligible {
                streak[k] += 1;
                done[k] = streak[k] >= cfg.streak;
            } else {
                streak[k] = 0;
            }
        }
    }

    let mut a_pow = Float::with_val(p, 1);
    let mut error_estimate = vec![0.0; order + 1];
    for k in 1..=order {
        a_pow *= &d.a;
        sums[k] *= &a_pow;
        error_estimate[k] = (Float::with_val(p, last[k].abs_ref()) * &a_pow).to_f64();
    }
    Ok(SeriesEval { series: ExpSeries::new(sums), diag: SeriesDiagnostics { y, vy: vy.to_f64(), terms_used: used, error_estimate } })
}

/// Upcrossing building block `q(y) l(y)`.
pub fn t_series(d: &DerivedParams, table: &mut KernelTable, y: f64, order: usize, cfg: &SeriesConfig) -> Result<SeriesEval> {
    let l = l_series(d, table, y, order, cfg)?;
    let q = q_series(d, y, order)?;
    let series = q.product(&l.series);
    // q is exact; only the l errors pass through the convolution.
    let qa: Vec<f64> = q.coeffs().iter().map(|c| c.to_f64().abs()).collect();
    let mut diag = l.diag;
    let le = diag.error_estimate.clone();
    for (n, e) in diag.error_estimate.iter_mut().enumerate() {
        *e = (0..=n).map(|k| binomial(n, k).to_f64() * qa[k] * le[n - k]).sum();
    }
    Ok(SeriesEval { series, diag })
}

/// Downcrossing building block, the asymptotic series
/// `lbar_m = a^m sum_{n>=m} (-1)^n Mbar_{n,m} / ((vy)^n n!)`,
/// cut at the smallest term in `[m, n_stop]`, `n_stop ~ 2(vy + |2u|) + 10`.
pub fn lbar_series(d: &DerivedParams, table: &mut KernelTable, y: f64, order: usize, cfg: &SeriesConfig) -> Result<SeriesEval> {
    check_y(y)?;
    check_order(table, order)?;
    let p = d.precision;
    let vy = Float::with_val(p, &d.v * y);
    let span = 2.0 * (vy.to_f64() + 2.0 * d.u.to_f64().abs());
    let n_stop = ((span.ceil() as usize).saturating_add(10)).min(cfg.n_max.min(table.row_cap())).max(order);
    table.ensure_rows(n_stop)?;

    // |1 / ((vy)^n n!)| for all n up to n_stop
    let mut weights = Vec::with_capacity(n_stop + 1);
    let mut w = Float::with_val(p, 1);
    weights.push(w.clone());
    for n in 1..=n_stop {
        w /= &vy;
        w /= n as u32;
        weights.push(w.clone());
    }

    let mut out = vec![Float::new(p); order + 1];
    out[0] = Float::with_val(p, 1);
    let mut used = vec![0usize; order + 1];
    let mut error_estimate = vec![0.0; order + 1];
    let mut a_pow = Float::with_val(p, 1);
    for m in 1..=order {
        a_pow *= &d.a;
        let terms: Vec<Float> = (m..=n_stop)
            .map(|n| {
                let t = Float::with_val(p, &table.row(n).mbar[m] * &weights[n]);
                if n % 2 == 1 {
                    -t
                } else {
                    t
                }
            })
            .collect();
        let mut best = 0;
        for (i, t) in terms.iter().enumerate() {
            if t.clone().abs() < terms[best].clone().abs() {
                best = i;
            }
        }
        let mut acc = Float::new(p);
        for t in &terms[..best] {
            acc += t;
        }
        out[m] = acc * &a_pow;
        used[m] = m + best;
        error_estimate[m] = (Float::with_val(p, terms[best].abs_ref()) * &a_pow).to_f64();
    }
    Ok(SeriesEval { series: ExpSeries::new(out), diag: SeriesDiagnostics { y, vy: vy.to_f64(), terms_used: used, error_estimate } })
}

fn check_order(table: &KernelTable, order: usize) -> Result<()> {
    if order > table.m_max() {
        Err(FptError::IndexOutOfRange { what: "series order", n: order, k: 0, limit: table.m_max() })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_params, ModelParams};
    use crate::mp::rel_diff;
    use crate::series::rising_factorial;

    const P: u32 = 256;

    fn fisheries_u() -> Float {
        derive_params(&ModelParams::fisheries()).unwrap().u
    }

    #[test]
    fn small_index_examples() {
        let u = fisheries_u();
        let f = |x: Float| x.to_f64();
        let uf = u.to_f64();
        let close = |x: f64, y: f64| assert!((x - y).abs() <= 1e-14 * y.abs().max(1.0), "{x} vs {y}");
        assert_eq!(lambda_plain(&Float::with_val(P, -1), 2, 1, P).unwrap(), 7);
        close(f(lambda_plain(&u, 1, 1, P).unwrap()), -uf);
        close(f(lambda_tilde(&u, 1, 1, P).unwrap()), -uf / 2.0);
        close(f(lambda_bar(&u, 1, 1, P).unwrap()), uf / 2.0);
        close(f(m_coeff(&u, 1, 1, P).unwrap()), -uf / (2.0 * (1.0 - 2.0 * uf)));
        close(f(mbar_coeff(&u, 1, 1, P).unwrap()), -uf * uf);
        for m in 1..=4 {
            assert!(lambda_tilde(&u, 0, m, P).unwrap().is_zero());
            assert!(lambda_bar(&u, 0, m, P).unwrap().is_zero());
        }
    }

    #[test]
    fn l_series_is_stable_under_tighter_truncation() {
        let d = derive_params(&ModelParams::fisheries()).unwrap();
        let mut t = KernelTable::for_params(&d, 4);
        let loose = SeriesConfig::default();
        let tight = SeriesConfig { tol: loose.tol * 1e-10, ..loose };
        let a = l_series(&d, &mut t, 1e5, 4, &loose).unwrap();
        let b = l_series(&d, &mut t, 1e5, 4, &tight).unwrap();
        for m in 0..=4 {
            assert!(rel_diff(a.series.coeff(m), b.series.coeff(m)) < 1e-25, "m = {m}");
        }
    }

    #[test]
    fn zeroth_columns_are_rising_factorials() {
        let u = fisheries_u();
        let mut t = KernelTable::new(&u, P, 4);
        t.ensure_rows(40).unwrap();
        let one_minus_2u = Float::with_val(P, 1 - Float::with_val(P, 2 * &u));
        let two_u = Float::with_val(P, 2 * &u);
        for n in 0..=40 {
            assert!(rel_diff(t.lambda(n, 0).unwrap(), &rising_factorial(&one_minus_2u, n)) < 1e-70, "n = {n}");
            assert!(rel_diff(t.lambda_bar(n, 0).unwrap(), &rising_factorial(&two_u, n)) < 1e-70, "n = {n}");
            if n >= 1 {
                assert!(t.lambda_tilde(n, 0).unwrap().is_zero());
                assert!(t.m_coeff(n, 0).unwrap().is_zero());
                assert!(t.mbar_coeff(n, 0).unwrap().is_zero());
            }
        }
        assert_eq!(*t.m_coeff(0, 0).unwrap(), 1);
        assert_eq!(*t.mbar_coeff(0, 0).unwrap(), 1);
    }

    #[test]
    fn mbar_vanishes_above_degree() {
        let u = fisheries_u();
        let mut t = KernelTable::new(&u, P, 8);
        t.ensure_rows(20).unwrap();
        for n in 0..=20 {
            for m in n + 1..=8 {
                assert!(t.mbar_coeff(n, m).unwrap().is_zero());
            }
        }
        // The closed-form kernel agrees with the structural zero too.
        assert!(mbar_coeff(&u, 3, 5, P).unwrap().is_zero());
    }

    #[test]
    fn table_matches_definitions() {
        let u = fisheries_u();
        let mut t = KernelTable::new(&u, P, 5);
        t.ensure_rows(60).unwrap();
        for &n in &[1usize, 2, 7, 19, 33, 60] {
            for m in 0..=5 {
                let pairs = [
                    (t.lambda(n, m).unwrap().clone(), lambda_plain(&u, n, m, P).unwrap()),
                    (t.lambda_tilde(n, m).unwrap().clone(), lambda_tilde(&u, n, m, P).unwrap()),
                    (t.lambda_bar(n, m).unwrap().clone(), lambda_bar(&u, n, m, P).unwrap()),
                    (t.m_coeff(n, m).unwrap().clone(), m_coeff(&u, n, m, P).unwrap()),
                    (t.mbar_coeff(n, m).unwrap().clone(), mbar_coeff(&u, n, m, P).unwrap()),
                ];
                for (i, (x, y)) in pairs.iter().enumerate() {
                    assert!(rel_diff(x, y) < 1e-60, "n = {n} m = {m} kernel {i}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn mbar_matches_polynomial_product() {
        // prod_{i<n} (i(i + 2u) - u^2 x) = sum_m Mbar_{n,m} x^m / m!
        let u = fisheries_u();
        let m_max = 6;
        let mut t = KernelTable::new(&u, P, m_max);
        t.ensure_rows(90).unwrap();
        let wp = 1024;
        let uu = Float::with_val(wp, &u);
        let u2 = Float::with_val(wp, uu.square_ref());
        let mut poly = vec![Float::with_val(wp, 1)];
        for n in 1..=90usize {
            let i = (n - 1) as u64;
            let c0 = Float::with_val(wp, Float::with_val(wp, &uu * 2u32) + i) * i;
            let mut next = vec![Float::new(wp); (poly.len() + 1).min(m_max + 1)];
            for (k, pk) in poly.iter().enumerate() {
                if k < next.len() {
                    next[k] += Float::with_val(wp, &c0 * pk);
                }
                if k + 1 < next.len() {
                    next[k + 1] -= Float::with_val(wp, &u2 * pk);
                }
            }
            poly = next;
            for m in 0..=m_max.min(n) {
                let expect = Float::with_val(wp, &poly[m] * rug::Integer::from(rug::Integer::factorial(m as u32)));
                assert!(rel_diff(t.mbar_coeff(n, m).unwrap(), &expect) < 1e-60, "n = {n} m = {m}");
            }
        }
    }

    #[test]
    fn rows_grow_lazily_and_respect_cap() {
        let u = fisheries_u();
        let mut t = KernelTable::new(&u, 128, 3).with_row_cap(50);
        assert!(t.is_empty());
        t.ensure_rows(3).unwrap();
        assert_eq!(t.len(), INITIAL_ROWS);
        t.ensure_rows(40).unwrap();
        assert_eq!(t.len(), 51);
        assert!(matches!(t.ensure_rows(51), Err(FptError::IndexOutOfRange { .. })));
        assert!(t.m_coeff(2, 4).is_err());
        assert!(t.m_coeff(60, 1).is_err());
    }

    #[test]
    fn up_series_for_small_argument_is_series_in_vy() {
        let d = derive_params(&ModelParams::fisheries()).unwrap();
        let mut t = KernelTable::for_params(&d, 4);
        let l = l_series(&d, &mut t, 100.0, 4, &SeriesConfig::default()).unwrap();
        // vy ~ 4.4e-5: l_1 ~ a M_{1,1} vy to leading order
        let m11 = t.m_coeff(1, 1).unwrap().to_f64();
        let vy = d.v.to_f64() * 100.0;
        let lead = d.a.to_f64() * m11 * vy;
        assert!(((l.series.coeff(1).to_f64() - lead) / lead).abs() < 1e-3);
        assert!(l.diag.terms_used[1] < 40);
    }

    #[test]
    fn q_series_is_power_of_y() {
        // q(y) evaluated at lambda equals y^{u(1-s(lambda))}.
        let d = derive_params(&ModelParams::fisheries()).unwrap();
        let q = q_series(&d, 1e4, 30).unwrap();
        let lambda = Float::with_val(P, 0.05);
        let s = d.s_of(&lambda);
        let expo = Float::with_val(P, &d.u * Float::with_val(P, 1 - &s));
        let expect = Float::with_val(P, 1e4).pow(&expo);
        assert!(rel_diff(&q.evaluate(&lambda), &expect) < 1e-12);
    }

    #[test]
    fn lbar_truncates_at_smallest_term() {
        let d = derive_params(&ModelParams::fisheries()).unwrap();
        let mut t = KernelTable::for_params(&d, 4);
        let l = lbar_series(&d, &mut t, 3e7, 4, &SeriesConfig::default()).unwrap();
        assert_eq!(*l.series.coeff(0), 1);
        for m in 1..=4 {
            assert!(l.diag.terms_used[m] >= m);
            assert!(l.diag.error_estimate[m] < 1e-6 * l.series.coeff(m).to_f64().abs());
        }
    }

    #[test]
    fn rejects_bad_argument() {
        let d = derive_params(&ModelParams::fisheries()).unwrap();
        let mut t = KernelTable::for_params(&d, 2);
        assert!(l_series(&d, &mut t, 0.0, 2, &SeriesConfig::default()).is_err());
        assert!(lbar_series(&d, &mut t, -1.0, 2, &SeriesConfig::default()).is_err());
        assert!(l_series(&d, &mut t, 1.0, 3, &SeriesConfig::default()).is_err());
    }
}
