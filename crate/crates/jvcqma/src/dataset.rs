//! The sample every estimator consumes: response vector, covariate matrix,
//! and the continuous/discrete column partition.

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Response + covariates with a continuous/discrete partition. Continuous
/// columns are the candidate index variables; discrete columns only ever
/// enter fits linearly.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: Vec<f64>,
    x: Mat,
    continuous_cols: Vec<usize>,
    discrete_cols: Vec<usize>,
}

impl Dataset {
    pub fn new(
        y: Vec<f64>,
        x: Mat,
        continuous_cols: Vec<usize>,
        discrete_cols: Vec<usize>,
    ) -> Result<Self> {
        let n = y.len();
        if x.rows() != n {
            return Err(Error::ShapeMismatch {
                context: "covariate rows vs responses",
                expected: n,
                got: x.rows(),
            });
        }
        let total = x.cols();
        let mut seen = vec![false; total];
        for &c in continuous_cols.iter().chain(discrete_cols.iter()) {
            if c >= total {
                return Err(Error::InvalidColumnPartition(format!(
                    "column {c} out of range for {total} covariates"
                )));
            }
            if seen[c] {
                return Err(Error::InvalidColumnPartition(format!(
                    "column {c} listed twice"
                )));
            }
            seen[c] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidColumnPartition(
                "some covariate columns are neither continuous nor discrete".into(),
            ));
        }
        if !y.iter().all(|v| v.is_finite()) || !x.is_finite() {
            return Err(Error::NonFinite("dataset"));
        }
        Ok(Dataset {
            y,
            x,
            continuous_cols,
            discrete_cols,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// p + q, the total covariate count.
    pub fn num_covariates(&self) -> usize {
        self.x.cols()
    }

    pub fn continuous_cols(&self) -> &[usize] {
        &self.continuous_cols
    }

    pub fn discrete_cols(&self) -> &[usize] {
        &self.discrete_cols
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &Mat {
        &self.x
    }

    pub fn covariate_row(&self, i: usize) -> &[f64] {
        self.x.row(i)
    }

    /// Fit feasibility heuristic: n must exceed twice the covariate count.
    pub fn check_fit_feasible(&self) -> Result<()> {
        let min = 2 * self.num_covariates();
        if self.n() <= min {
            return Err(Error::DatasetTooSmall { n: self.n(), min });
        }
        Ok(())
    }

    /// Rows restricted to `rows`, in the order given.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let cols = self.x.cols();
        let mut y = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            y.push(self.y[r]);
            data.extend_from_slice(self.x.row(r));
        }
        Dataset {
            y,
            x: Mat::from_vec(rows.len(), cols, data),
            continuous_cols: self.continuous_cols.clone(),
            discrete_cols: self.discrete_cols.clone(),
        }
    }

    /// Copy with row `i` deleted.
    pub fn without_row(&self, i: usize) -> Dataset {
        let rows: Vec<usize> = (0..self.n()).filter(|&r| r != i).collect();
        self.subset(&rows)
    }
}
