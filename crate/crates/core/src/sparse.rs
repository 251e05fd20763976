//! Matrix-product operator that switches to compressed rows when `A` is sparse.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

#[derive(Debug, Clone)]
pub struct Operator {
    dense: Option<DMatrix<f64>>,
    csr: Option<CsrMatrix<f64>>,
    n: usize,
    one_norm: f64,
}

impl Operator {
    /// Uses a CSR copy when at most an eighth of the entries are nonzero.
    pub fn new(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let nnz = a.iter().filter(|v| **v != 0.0).count();
        let one_norm = crate::linalg::one_norm(a);
        if n > 8 && nnz * 8 <= n * a.ncols() {
            let mut coo = CooMatrix::new(n, a.ncols());
            for j in 0..a.ncols() {
                for i in 0..n {
                    let v = a[(i, j)];
                    if v != 0.0 {
                        coo.push(i, j, v);
                    }
                }
            }
            Self { dense: None, csr: Some(CsrMatrix::from(&coo)), n, one_norm }
        } else {
            Self { dense: Some(a.clone()), csr: None, n, one_norm }
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn one_norm(&self) -> f64 {
        self.one_norm
    }

    pub fn is_sparse(&self) -> bool {
        self.csr.is_some()
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match (&self.dense, &self.csr) {
            (Some(a), _) => a * x,
            (None, Some(s)) => s * x,
            (None, None) => unreachable!(),
        }
    }

    /// `y ← A x`.
    pub fn apply_vec_into(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        match (&self.dense, &self.csr) {
            (Some(a), _) => a.mul_to(x, y),
            (None, Some(s)) => {
                for (i, row) in s.row_iter().enumerate() {
                    y[i] = row.col_indices().iter().zip(row.values()).map(|(&j, v)| v * x[j]).sum();
                }
            }
            (None, None) => unreachable!(),
        }
    }
}
