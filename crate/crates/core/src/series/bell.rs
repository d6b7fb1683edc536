//! Partial Bell polynomials `B_{n,k}(x_1, ..., x_{n-k+1})` and the
//! logarithmic polynomials built from them.

use rug::Float;

use super::combinatorics::BinomialTable;

/// All `B_{n,k}` for `0 <= k <= n <= n_max` at one argument vector.
#[derive(Debug, Clone)]
pub struct BellTable {
    rows: Vec<Vec<Float>>,
}

impl BellTable {
    /// `x[i - 1]` holds `x_i`; at least `n_max` entries are required.
    pub fn new(x: &[Float], n_max: usize) -> Self {
        assert!(x.len() >= n_max, "BellTable needs {n_max} arguments, got {}", x.len());
        let prec = x.first().map_or(64, |f| f.prec());
        let binom = BinomialTable::new(n_max.max(1), prec);
        let mut rows: Vec<Vec<Float>> = Vec::with_capacity(n_max + 1);
        rows.push(vec![Float::with_val(prec, 1)]);
        for n in 1..=n_max {
            let mut row = vec![Float::new(prec); n + 1];
            for k in 1..=n {
                // B_{n,k} = sum_{i=1}^{n-k+1} C(n-1, i-1) x_i B_{n-i,k-1}
                let mut acc = Float::new(prec);
                for i in 1..=n - k + 1 {
                    let prev = &rows[n - i][k - 1];
                    if prev.is_zero() {
                        continue;
                    }
                    let term = Float::with_val(prec, binom.get(n - 1, i - 1) * &x[i - 1]) * prev;
                    acc += term;
                }
                row[k] = acc;
            }
            rows.push(row);
        }
        Self { rows }
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize) -> &Float {
        &self.rows[n][k]
    }

    pub fn n_max(&self) -> usize {
        self.rows.len() - 1
    }

    /// Complete Bell polynomial `B_n = sum_k B_{n,k}`.
    pub fn complete(&self, n: usize) -> Float {
        let prec = self.rows[n][0].prec();
        let mut acc = Float::new(prec);
        for b in &self.rows[n] {
            acc += b;
        }
        acc
    }

    /// `sum_k c_k B_{n,k}` for a caller-supplied weight sequence.
    pub fn weighted(&self, n: usize, weight: impl Fn(usize) -> Float) -> Float {
        let prec = self.rows[n][0].prec();
        let mut acc = Float::new(prec);
        for (k, b) in self.rows[n].iter().enumerate() {
            if !b.is_zero() {
                acc += weight(k) * b;
            }
        }
        acc
    }

    /// Logarithmic polynomial `L_n = sum_k (-1)^(k-1) (k-1)! B_{n,k}`, i.e. the
    /// n-th coefficient of `log(1 + sum x_i t^i / i!)`.
    pub fn log_polynomial(&self, n: usize) -> Float {
        let prec = self.rows[n][0].prec();
        self.weighted(n, |k| {
            if k == 0 {
                return Float::new(prec);
            }
            let f = Float::with_val(prec, rug::Integer::from(rug::Integer::factorial((k - 1) as u32)));
            if k % 2 == 0 {
                -f
            } else {
                f
            }
        })
    }
}

/// Single partial Bell polynomial; builds a table, so prefer [`BellTable`] for
/// repeated queries.
pub fn bell_partial(n: usize, k: usize, x: &[Float]) -> Float {
    if k > n {
        let prec = x.first().map_or(64, |f| f.prec());
        return Float::new(prec);
    }
    BellTable::new(x, n).get(n, k).clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(prec: u32, v: &[f64]) -> Vec<Float> {
        v.iter().map(|&x| Float::with_val(prec, x)).collect()
    }

    #[test]
    fn all_ones_gives_stirling_second_kind() {
        let x = args(128, &[1.0; 8]);
        let t = BellTable::new(&x, 8);
        // S(n, k) spot values
        assert_eq!(*t.get(4, 2), 7);
        assert_eq!(*t.get(5, 3), 25);
        assert_eq!(*t.get(8, 4), 1701);
        // Bell numbers
        let bell = [1, 1, 2, 5, 15, 52, 203, 877, 4140];
        for (n, &b) in bell.iter().enumerate() {
            assert_eq!(t.complete(n), b);
        }
    }

    #[test]
    fn factorial_arguments_give_lah_numbers() {
        // x_i = i! yields the unsigned Lah numbers, B_{n,k} = C(n-1,k-1) n!/k!.
        let x = args(128, &[1.0, 2.0, 6.0, 24.0, 120.0, 720.0]);
        let t = BellTable::new(&x, 6);
        assert_eq!(*t.get(3, 2), 6);
        assert_eq!(*t.get(4, 2), 36);
        assert_eq!(*t.get(6, 3), 1200);
    }

    #[test]
    fn low_order_closed_forms() {
        let x = args(128, &[0.3, -1.7, 2.2, 0.9]);
        let t = BellTable::new(&x, 4);
        let (x1, x2, x3) = (0.3, -1.7, 2.2);
        let b42 = 4.0 * x1 * x3 + 3.0 * x2 * x2;
        assert!((t.get(4, 2).to_f64() - b42).abs() < 1e-14);
        assert!((t.get(3, 2).to_f64() - 3.0 * x1 * x2).abs() < 1e-14);
        assert!((t.get(4, 4).to_f64() - x1.powi(4)).abs() < 1e-15);
        assert_eq!(bell_partial(2, 3, &x), 0);
    }

    #[test]
    fn log_polynomial_inverts_exponential() {
        // log(exp(t)) = t: with x_i = 1 for all i, L_1 = 1 and L_n = 0 for n > 1.
        let x = args(128, &[1.0; 7]);
        let t = BellTable::new(&x, 7);
        assert_eq!(t.log_polynomial(1), 1);
        for n in 2..=7 {
            assert!(t.log_polynomial(n).to_f64().abs() < 1e-30, "n = {n}");
        }
    }
}
