//! Per-index candidate models: local-linear varying-coefficient quantile
//! fits, point prediction, and the leave-one-out prediction matrix that
//! feeds weight selection.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::math::{kernel_scaled, KernelKind, QuantileLevel};
use crate::qr::{solve_weighted_qr, WeightedQrProblem, DEFAULT_TOL, WEIGHT_DROP};
use rayon::prelude::*;

/// Fraction of leave-one-out entries a candidate may lose before the whole
/// matrix build fails.
const MAX_COLUMN_FAILURE_FRAC: f64 = 0.05;

/// Bandwidth escalation: multiply by 1.5 up to 5 times when too few
/// observations carry positive kernel weight.
const ESCALATION_FACTOR: f64 = 1.5;
const MAX_ESCALATIONS: usize = 5;

/// Local-linear fit of one candidate model at one evaluation point.
///
/// `alpha`/`beta` are the level estimates used for prediction; the slope
/// terms are estimated jointly but never used to predict.
#[derive(Debug, Clone)]
pub struct VcLocalFit {
    pub index_col: usize,
    pub eval_point: f64,
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub alpha_slope: f64,
    pub beta_slope: Vec<f64>,
    /// Bandwidth the fit actually used, after any escalation.
    pub bandwidth: f64,
}

impl VcLocalFit {
    /// Predicted conditional quantile at a covariate row: alpha + x_rest . beta.
    pub fn predict(&self, covariates: &[f64]) -> f64 {
        let mut v = self.alpha;
        let mut k = 0;
        for (j, &x) in covariates.iter().enumerate() {
            if j != self.index_col {
                v += self.beta[k] * x;
                k += 1;
            }
        }
        v
    }
}

/// One candidate's predictions over a query set; failed rows hold NaN and
/// are listed in `failed_rows`.
#[derive(Debug, Clone)]
pub struct CandidatePrediction {
    pub index_col: usize,
    pub values: Vec<f64>,
    pub failed_rows: Vec<usize>,
}

/// n x p matrix of leave-one-out candidate predictions; entry (i, s) predicts
/// row i from candidate s fit without row i. Failed entries hold NaN.
#[derive(Debug, Clone)]
pub struct LooPredictionMatrix {
    pub matrix: Mat,
    /// Candidate index column per matrix column.
    pub column_index_map: Vec<usize>,
    pub tau: QuantileLevel,
}

impl LooPredictionMatrix {
    /// Rows where every candidate produced a finite prediction.
    pub fn clean_rows(&self) -> Vec<usize> {
        (0..self.matrix.rows())
            .filter(|&i| self.matrix.row(i).iter().all(|v| v.is_finite()))
            .collect()
    }
}

/// Fit the local-linear candidate with index column `s` at `x_s`.
///
/// The localized design row is (1, x_rest, dx, x_rest * dx) with kernel
/// weights K_h(X_is - x_s); `exclude` omits one observation, which is how
/// the leave-one-out entries are produced. When fewer than 2(p+q)
/// observations carry positive weight the bandwidth is escalated before
/// giving up.
pub fn fit_local(
    data: &Dataset,
    s: usize,
    x_s: f64,
    tau: QuantileLevel,
    h: f64,
    kind: KernelKind,
    exclude: Option<usize>,
) -> Result<VcLocalFit> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidBandwidth(h));
    }
    if !data.continuous_cols().contains(&s) {
        return Err(Error::InvalidColumnPartition(format!(
            "index column {s} is not continuous"
        )));
    }
    let total = data.num_covariates();
    let d = 2 * total;
    let rows: Vec<usize> = (0..data.n()).filter(|&i| Some(i) != exclude).collect();

    let mut h_try = h;
    let mut weights: Vec<f64> = Vec::new();
    let mut escalations = 0;
    loop {
        weights.clear();
        let mut positive = 0usize;
        for &i in &rows {
            let w = kernel_scaled(kind, h_try, data.x().get(i, s) - x_s)?;
            if w >= WEIGHT_DROP {
                positive += 1;
            }
            weights.push(w);
        }
        if positive >= d {
            break;
        }
        if escalations == MAX_ESCALATIONS {
            return Err(Error::UnderdeterminedLocalFit {
                positive,
                needed: d,
            });
        }
        h_try *= ESCALATION_FACTOR;
        escalations += 1;
    }

    let mut design = Vec::with_capacity(rows.len() * d);
    let mut responses = Vec::with_capacity(rows.len());
    for &i in &rows {
        let xi = data.covariate_row(i);
        let dx = xi[s] - x_s;
        design.push(1.0);
        for (j, &x) in xi.iter().enumerate() {
            if j != s {
                design.push(x);
            }
        }
        design.push(dx);
        for (j, &x) in xi.iter().enumerate() {
            if j != s {
                design.push(x * dx);
            }
        }
        responses.push(data.y()[i]);
    }
    let problem = WeightedQrProblem::new(
        responses,
        Mat::from_vec(rows.len(), d, design),
        weights,
        tau,
    )?;
    let sol = solve_weighted_qr(&problem, DEFAULT_TOL)?;

    let rest = total - 1;
    Ok(VcLocalFit {
        index_col: s,
        eval_point: x_s,
        alpha: sol.coefficients[0],
        beta: sol.coefficients[1..1 + rest].to_vec(),
        alpha_slope: sol.coefficients[1 + rest],
        beta_slope: sol.coefficients[2 + rest..].to_vec(),
        bandwidth: h_try,
    })
}

/// Predict the conditional quantile at each query row from candidate `s`,
/// refitting locally at the row's own index value. A failed fit poisons only
/// that row.
pub fn predict_candidate(
    data: &Dataset,
    s: usize,
    queries: &Mat,
    tau: QuantileLevel,
    h: f64,
    kind: KernelKind,
) -> Result<CandidatePrediction> {
    if queries.cols() != data.num_covariates() {
        return Err(Error::ShapeMismatch {
            context: "query columns vs covariates",
            expected: data.num_covariates(),
            got: queries.cols(),
        });
    }
    let results: Vec<Result<f64>> = (0..queries.rows())
        .into_par_iter()
        .map(|r| {
            let q = queries.row(r);
            fit_local(data, s, q[s], tau, h, kind, None).map(|fit| fit.predict(q))
        })
        .collect();
    let mut values = Vec::with_capacity(results.len());
    let mut failed_rows = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(v) => values.push(v),
            Err(_) => {
                values.push(f64::NAN);
                failed_rows.push(r);
            }
        }
    }
    Ok(CandidatePrediction {
        index_col: s,
        values,
        failed_rows,
    })
}

/// Build the n x p leave-one-out prediction matrix: exactly n * p local
/// fits, entry (i, s) fit with row i excluded and evaluated at X_is.
///
/// Per-entry failures are tolerated up to 5% per column; beyond that the
/// candidate is unusable and the whole build fails.
pub fn loo_prediction_matrix(
    data: &Dataset,
    tau: QuantileLevel,
    bandwidths: &[f64],
    kind: KernelKind,
) -> Result<LooPredictionMatrix> {
    data.check_fit_feasible()?;
    let candidates = data.continuous_cols().to_vec();
    let p = candidates.len();
    if bandwidths.len() != p {
        return Err(Error::ShapeMismatch {
            context: "bandwidths vs continuous columns",
            expected: p,
            got: bandwidths.len(),
        });
    }
    let n = data.n();
    let entries: Vec<f64> = (0..n * p)
        .into_par_iter()
        .map(|idx| {
            let i = idx / p;
            let c = idx % p;
            let s = candidates[c];
            let x_s = data.x().get(i, s);
            match fit_local(data, s, x_s, tau, bandwidths[c], kind, Some(i)) {
                Ok(fit) => fit.predict(data.covariate_row(i)),
                Err(_) => f64::NAN,
            }
        })
        .collect();

    let matrix = Mat::from_vec(n, p, entries);
    for (c, &s) in candidates.iter().enumerate() {
        let failed = (0..n).filter(|&i| !matrix.get(i, c).is_finite()).count();
        if failed as f64 > MAX_COLUMN_FAILURE_FRAC * n as f64 {
            return Err(Error::CandidateUnusable {
                column: s,
                failed,
                total: n,
            });
        }
    }
    Ok(LooPredictionMatrix {
        matrix,
        column_index_map: candidates,
        tau,
    })
}
