//! Small dense linear systems: Gaussian elimination with partial pivoting and
//! one step of iterative refinement.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("matrix is singular: pivot {pivot:e} in column {column} is below {threshold:e}")]
    SingularMatrix {
        column: usize,
        pivot: f64,
        threshold: f64,
    },
    #[error("system shape mismatch: {0}")]
    Shape(String),
    #[error("system contains a non-finite entry")]
    NonFinite,
}

/// Relative pivot threshold against the max-abs entry of the matrix.
pub const PIVOT_TOLERANCE: f64 = 1e-13;

/// Square system `A x = b`, `A` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSystem {
    n: usize,
    matrix: Vec<f64>,
    rhs: Vec<f64>,
}

impl DenseSystem {
    pub fn new(n: usize, matrix: Vec<f64>, rhs: Vec<f64>) -> Result<Self, SolveError> {
        if n == 0 {
            return Err(SolveError::Shape("empty system".into()));
        }
        if matrix.len() != n * n {
            return Err(SolveError::Shape(format!(
                "expected {} matrix entries, got {}",
                n * n,
                matrix.len()
            )));
        }
        if rhs.len() != n {
            return Err(SolveError::Shape(format!(
                "expected right-hand side of length {n}, got {}",
                rhs.len()
            )));
        }
        if matrix.iter().chain(&rhs).any(|v| !v.is_finite()) {
            return Err(SolveError::NonFinite);
        }
        Ok(DenseSystem { n, matrix, rhs })
    }

    pub fn from_rows(rows: &[Vec<f64>], rhs: Vec<f64>) -> Result<Self, SolveError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(SolveError::Shape("matrix is not square".into()));
        }
        DenseSystem::new(n, rows.concat(), rhs)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.matrix[row * self.n + col]
    }

    /// `A x` with fused multiply-adds.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix
            .chunks_exact(self.n)
            .map(|row| {
                row.iter()
                    .zip(x)
                    .fold(0.0, |acc, (a, b)| a.mul_add(*b, acc))
            })
            .collect()
    }

    /// `max_i |(A x − b)_i|`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.apply(x)
            .iter()
            .zip(&self.rhs)
            .map(|(ax, b)| (ax - b).abs())
            .fold(0.0, f64::max)
    }

    fn max_abs(&self) -> f64 {
        self.matrix.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(sys: &DenseSystem) -> Result<Lu, SolveError> {
        let n = sys.n;
        let mut lu = sys.matrix.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let threshold = PIVOT_TOLERANCE * sys.max_abs();

        for col in 0..n {
            let (pivot_row, pivot) = (col..n)
                .map(|r| (r, lu[r * n + col]))
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .expect("non-empty column");
            if pivot.abs() < threshold || pivot == 0.0 {
                return Err(SolveError::SingularMatrix {
                    column: col,
                    pivot: pivot.abs(),
                    threshold,
                });
            }
            if pivot_row != col {
                for j in 0..n {
                    lu.swap(col * n + j, pivot_row * n + j);
                }
                perm.swap(col, pivot_row);
            }
            for r in col + 1..n {
                let factor = lu[r * n + col] / pivot;
                lu[r * n + col] = factor;
                if factor != 0.0 {
                    for j in col + 1..n {
                        lu[r * n + j] -= factor * lu[col * n + j];
                    }
                }
            }
        }
        Ok(Lu { n, lu, perm })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }
}

/// Solves `A x = b`. Fails with [`SolveError::SingularMatrix`] when a pivot
/// falls below `1e-13 · max|A|`.
pub fn solve(sys: &DenseSystem) -> Result<Vec<f64>, SolveError> {
    let lu = Lu::factor(sys)?;
    let mut x = lu.solve(&sys.rhs);

    // one refinement step
    let r: Vec<f64> = sys
        .apply(&x)
        .iter()
        .zip(&sys.rhs)
        .map(|(ax, b)| b - ax)
        .collect();
    let dx = lu.solve(&r);
    for (xi, di) in x.iter_mut().zip(dx) {
        *xi += di;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::NonFinite);
    }
    Ok(x)
}
