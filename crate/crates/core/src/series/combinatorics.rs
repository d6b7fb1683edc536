//! Exact combinatorial kernels: unsigned Stirling numbers of the first kind,
//! binomial coefficients, rising and falling factorials.

use std::sync::{Arc, Mutex};

use rug::{Float, Integer};

use crate::error::{FptError, Result};

/// Largest row index the shared Stirling table will grow to.
pub const STIRLING_N_MAX: usize = 512;

/// Unsigned Stirling numbers of the first kind `[n, j]`, `0 <= j <= n <= n_max`.
#[derive(Debug)]
pub struct Stirling1Table {
    rows: Vec<Vec<Integer>>,
}

impl Stirling1Table {
    pub fn new(n_max: usize) -> Self {
        let mut table = Self { rows: vec![vec![Integer::from(1)]] };
        table.extend(n_max);
        table
    }

    // [n+1, j] = n [n, j] + [n, j-1]
    fn extend(&mut self, n_max: usize) {
        while self.rows.len() <= n_max {
            let n = self.rows.len() - 1;
            let prev = &self.rows[n];
            let mut next = Vec::with_capacity(n + 2);
            next.push(Integer::new());
            for j in 1..=n + 1 {
                let mut val = Integer::new();
                if j <= n {
                    val += Integer::from(&prev[j] * n as u64);
                }
                val += &prev[j - 1];
                next.push(val);
            }
            self.rows.push(next);
        }
    }

    pub fn n_max(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn get(&self, n: usize, j: usize) -> Result<&Integer> {
        if n > self.n_max() || j > n {
            return Err(FptError::IndexOutOfRange { what: "stirling1", n, k: j, limit: self.n_max() });
        }
        Ok(&self.rows[n][j])
    }

    pub fn row(&self, n: usize) -> &[Integer] {
        &self.rows[n]
    }
}

static SHARED: Mutex<Option<Arc<Stirling1Table>>> = Mutex::new(None);

/// Shared read-only table covering at least rows `0..=n`.
pub fn stirling1_table(n: usize) -> Result<Arc<Stirling1Table>> {
    if n > STIRLING_N_MAX {
        return Err(FptError::IndexOutOfRange { what: "stirling1", n, k: 0, limit: STIRLING_N_MAX });
    }
    let mut guard = SHARED.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(t) = guard.as_ref() {
        if t.n_max() >= n {
            return Ok(Arc::clone(t));
        }
    }
    // Grow geometrically so repeated small extensions stay cheap.
    let target = n.max(guard.as_ref().map_or(0, |t| 2 * t.n_max())).clamp(16, STIRLING_N_MAX);
    let mut rows = guard.as_ref().map(|t| t.rows.clone()).unwrap_or_else(|| vec![vec![Integer::from(1)]]);
    let mut table = Stirling1Table { rows: std::mem::take(&mut rows) };
    table.extend(target);
    let table = Arc::new(table);
    *guard = Some(Arc::clone(&table));
    Ok(table)
}

/// `[n, j]`, exact.
pub fn stirling1_unsigned(n: usize, j: usize) -> Result<Integer> {
    if j > n {
        return Err(FptError::IndexOutOfRange { what: "stirling1", n, k: j, limit: n });
    }
    Ok(stirling1_table(n)?.get(n, j)?.clone())
}

pub fn binomial(n: usize, k: usize) -> Integer {
    if k > n {
        return Integer::new();
    }
    Integer::from(n as u64).binomial(k as u32)
}

/// Row `C(n, 0..=n)` as reals of the given precision.
pub fn binomial_row(n: usize, prec: u32) -> Vec<Float> {
    let mut row = Vec::with_capacity(n + 1);
    let mut c = Integer::from(1);
    row.push(Float::with_val(prec, &c));
    for k in 0..n {
        c *= (n - k) as u64;
        c /= (k + 1) as u64;
        row.push(Float::with_val(prec, &c));
    }
    row
}

/// Pascal triangle `C(n, k)` for `n <= n_max`, stored as reals.
#[derive(Debug, Clone)]
pub struct BinomialTable {
    rows: Vec<Vec<Float>>,
}

impl BinomialTable {
    pub fn new(n_max: usize, prec: u32) -> Self {
        Self { rows: (0..=n_max).map(|n| binomial_row(n, prec)).collect() }
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize) -> &Float {
        &self.rows[n][k]
    }

    pub fn n_max(&self) -> usize {
        self.rows.len() - 1
    }
}

/// `(x)_m = x (x-1) ... (x-m+1)`; the empty product is 1.
pub fn falling_factorial(x: &Float, m: usize) -> Float {
    let mut acc = Float::with_val(x.prec(), 1);
    for i in 0..m {
        acc *= Float::with_val(x.prec(), x - i as u64);
    }
    acc
}

/// `<x>_n = x (x+1) ... (x+n-1)`; the empty product is 1.
pub fn rising_factorial(x: &Float, n: usize) -> Float {
    let mut acc = Float::with_val(x.prec(), 1);
    for i in 0..n {
        acc *= Float::with_val(x.prec(), x + i as u64);
    }
    acc
}

pub fn factorial(n: usize) -> Integer {
    Integer::from(Integer::factorial(n as u32))
}
