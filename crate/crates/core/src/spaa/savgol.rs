//! Savitzky-Golay smoothing by local least-squares polynomial fits.
//!
//! Interior points use the central convolution weights. The first and last
//! half-window points are taken from the polynomial fitted to the first and
//! last full window, evaluated at their own positions.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SavgolError {
    #[error("window must be odd and at least 3, got {0}")]
    Window(usize),
    #[error("polynomial order {order} must be smaller than window {window}")]
    Order { order: usize, window: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SavitzkyGolay {
    window: usize,
    order: usize,
    /// `rows[k]` evaluates the window fit at position `k - half`.
    rows: Vec<Vec<f64>>,
}

impl SavitzkyGolay {
    pub fn new(window: usize, order: usize) -> Result<Self, SavgolError> {
        if window < 3 || window.is_multiple_of(2) {
            return Err(SavgolError::Window(window));
        }
        if order >= window {
            return Err(SavgolError::Order { order, window });
        }
        let half = (window / 2) as isize;
        let rows = (-half..=half).map(|x0| fit_weights(window, order, x0)).collect();
        Ok(Self { window, order, rows })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Central smoothing weights.
    pub fn coefficients(&self) -> &[f64] {
        &self.rows[self.window / 2]
    }

    /// Smooths `data`. Inputs shorter than the window are filtered with the
    /// largest odd window that fits, or returned unchanged if none does.
    pub fn apply(&self, data: &[f64]) -> Vec<f64> {
        if data.len() < self.window {
            let mut shrunk = if data.len() % 2 == 1 { data.len() } else { data.len().saturating_sub(1) };
            while shrunk > self.order && shrunk >= 3 {
                if let Ok(f) = Self::new(shrunk, self.order) {
                    return f.apply(data);
                }
                shrunk -= 2;
            }
            return data.to_vec();
        }
        let half = self.window / 2;
        let n = data.len();
        let mut out = vec![0.0; n];
        let center = self.coefficients();
        for i in half..n - half {
            out[i] = dot(center, &data[i - half..=i + half]);
        }
        let head = &data[..self.window];
        let tail = &data[n - self.window..];
        for k in 0..half {
            out[k] = dot(&self.rows[k], head);
            out[n - half + k] = dot(&self.rows[half + 1 + k], tail);
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Weights `w` such that `sum(w[j] * y[j])` is the least-squares polynomial
/// of degree `order` through the window, evaluated at offset `x0` from the
/// window center.
fn fit_weights(window: usize, order: usize, x0: isize) -> Vec<f64> {
    let half = (window / 2) as f64;
    let terms = order + 1;
    // positions scaled to [-1, 1] for conditioning
    let xs: Vec<f64> = (0..window).map(|j| (j as f64 - half) / half).collect();
    let powers = |x: f64| -> Vec<f64> {
        let mut p = Vec::with_capacity(terms);
        let mut acc = 1.0;
        for _ in 0..terms {
            p.push(acc);
            acc *= x;
        }
        p
    };

    // normal matrix A^T A
    let mut normal = vec![vec![0.0; terms]; terms];
    for &x in &xs {
        let p = powers(x);
        for r in 0..terms {
            for c in 0..terms {
                normal[r][c] += p[r] * p[c];
            }
        }
    }
    // solve (A^T A) z = e(x0); weights are then A z
    let rhs = powers(x0 as f64 / half);
    let z = solve(normal, rhs);
    xs.iter().map(|&x| dot(&powers(x), &z)).collect()
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty column");
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                let pivot_row = a[col].clone();
                for (x, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= factor * p;
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x
}
