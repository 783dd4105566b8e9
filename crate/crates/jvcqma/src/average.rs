//! Averaging weights by three schemes (leave-one-out CV, equal, smoothed
//! BIC) and the final averaged predictor.

use crate::bandwidth::BandwidthPlan;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{kahan_sum, Mat};
use crate::math::{check_loss, KernelKind, QuantileLevel};
use crate::qr::{
    evaluate_combination_loss, solve_simplex_weights, SimplexWeightProblem, WeightVector,
    DEFAULT_TOL,
};
use crate::vcm::{predict_candidate, LooPredictionMatrix};
use serde::{Deserialize, Serialize};

/// Weights below this contribute exactly zero to predictions.
pub const WEIGHT_SKIP: f64 = 1e-12;

/// Weights below this are clamped to zero after the LP and the vector is
/// renormalized.
const WEIGHT_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    Loocv,
    Equal,
    SmoothedBic,
}

/// A fitted averaging model: simplex weights over per-index candidates plus
/// everything needed to predict (bandwidths, quantile level, column map).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AveragedModel {
    pub tau: QuantileLevel,
    pub scheme: WeightScheme,
    pub weights: WeightVector,
    pub bandwidths: BandwidthPlan,
    /// Candidate index column per weight position.
    pub column_index_map: Vec<usize>,
}

/// Cross-validation weights: solve the simplex LP on the leave-one-out
/// matrix. Rows with any failed entry are dropped before the solve; the
/// returned vector is clamped (components < 1e-10 become exact zeros) and
/// renormalized.
///
/// The LP optimality guarantee is verified on the returned weights: their
/// criterion value must not exceed any vertex's or the equal-weight value.
pub fn loocv_weights(loo: &LooPredictionMatrix, y: &[f64]) -> Result<WeightVector> {
    let n = loo.matrix.rows();
    let p = loo.matrix.cols();
    if y.len() != n {
        return Err(Error::ShapeMismatch {
            context: "responses vs LOO matrix rows",
            expected: n,
            got: y.len(),
        });
    }
    let clean = loo.clean_rows();
    if clean.is_empty() {
        return Err(Error::EmptyCandidateSet);
    }
    let (ys, ms) = if clean.len() == n {
        (y.to_vec(), loo.matrix.clone())
    } else {
        let mut ys = Vec::with_capacity(clean.len());
        let mut data = Vec::with_capacity(clean.len() * p);
        for &i in &clean {
            ys.push(y[i]);
            data.extend_from_slice(loo.matrix.row(i));
        }
        (ys, Mat::from_vec(clean.len(), p, data))
    };
    let problem = SimplexWeightProblem::new(ys, ms, loo.tau)?;
    let raw = solve_simplex_weights(&problem, DEFAULT_TOL)?;

    // clamp and renormalize
    let mut w: Vec<f64> = raw
        .as_slice()
        .iter()
        .map(|&v| if v < WEIGHT_CLAMP { 0.0 } else { v })
        .collect();
    let sum = kahan_sum(&w);
    if sum <= 0.0 {
        return Err(Error::Internal("all weights clamped to zero".into()));
    }
    w.iter_mut().for_each(|v| *v /= sum);
    let weights = WeightVector::new(w)?;

    // LP guarantee: no vertex or the equal-weight point does better.
    let cv_hat = evaluate_combination_loss(&problem, &weights)?;
    for s in 0..p {
        let cv_s = evaluate_combination_loss(&problem, &WeightVector::unit(p, s))?;
        if cv_hat > cv_s + DEFAULT_TOL {
            return Err(Error::Internal(format!(
                "CV optimality violated: CV(w)={cv_hat} > CV(e_{s})={cv_s}"
            )));
        }
    }
    let cv_eq = evaluate_combination_loss(&problem, &equal_weights(p))?;
    if cv_hat > cv_eq + DEFAULT_TOL {
        return Err(Error::Internal(format!(
            "CV optimality violated: CV(w)={cv_hat} > CV(equal)={cv_eq}"
        )));
    }
    Ok(weights)
}

/// All components 1/p.
pub fn equal_weights(p: usize) -> WeightVector {
    assert!(p >= 1);
    WeightVector::new(vec![1.0 / p as f64; p]).expect("equal weights are on the simplex")
}

/// Smoothed-BIC weights from in-sample candidate fits:
/// BIC_s = 2n ln(mean check loss of candidate s) + (p+q-1) ln(n), softmaxed
/// with the -BIC/2 weighting. A candidate with exactly zero in-sample loss
/// takes all the weight (limit convention); ties split equally.
pub fn smoothed_bic_weights(
    data: &Dataset,
    tau: QuantileLevel,
    bandwidths: &BandwidthPlan,
    kind: KernelKind,
) -> Result<WeightVector> {
    let candidates = &bandwidths.index_cols;
    let p = candidates.len();
    if p == 0 {
        return Err(Error::EmptyCandidateSet);
    }
    let n = data.n();
    let mut losses = Vec::with_capacity(p);
    for (c, &s) in candidates.iter().enumerate() {
        let pred = predict_candidate(data, s, data.x(), tau, bandwidths.adjusted[c], kind)?;
        if !pred.failed_rows.is_empty() {
            return Err(Error::CandidateUnusable {
                column: s,
                failed: pred.failed_rows.len(),
                total: n,
            });
        }
        let loss = data
            .y()
            .iter()
            .zip(&pred.values)
            .map(|(y, f)| check_loss(tau, y - f))
            .sum::<f64>()
            / n as f64;
        losses.push(loss);
    }

    let zero_loss: Vec<usize> = (0..p).filter(|&c| losses[c] == 0.0).collect();
    if !zero_loss.is_empty() {
        let mut w = vec![0.0; p];
        let share = 1.0 / zero_loss.len() as f64;
        for c in zero_loss {
            w[c] = share;
        }
        return WeightVector::new(w);
    }

    let penalty = (data.num_covariates() as f64 - 1.0) * (n as f64).ln();
    let bic: Vec<f64> = losses
        .iter()
        .map(|l| 2.0 * n as f64 * l.ln() + penalty)
        .collect();
    let min_bic = bic.iter().copied().fold(f64::INFINITY, f64::min);
    let expw: Vec<f64> = bic.iter().map(|b| (-0.5 * (b - min_bic)).exp()).collect();
    let total: f64 = expw.iter().sum();
    WeightVector::new(expw.iter().map(|e| e / total).collect())
}

/// Weighted sum of candidate predictions at each query row. Candidates with
/// weight below 1e-12 are skipped entirely; a failed fit under a retained
/// candidate poisons that row (NaN).
pub fn predict_averaged(
    model: &AveragedModel,
    data: &Dataset,
    queries: &Mat,
    kind: KernelKind,
) -> Result<Vec<f64>> {
    if queries.cols() != data.num_covariates() {
        return Err(Error::ShapeMismatch {
            context: "query columns vs covariates",
            expected: data.num_covariates(),
            got: queries.cols(),
        });
    }
    let mut out = vec![0.0; queries.rows()];
    for (c, &s) in model.column_index_map.iter().enumerate() {
        let w = model.weights.as_slice()[c];
        if w < WEIGHT_SKIP {
            continue;
        }
        let h = model.bandwidths.adjusted[c];
        let pred = predict_candidate(data, s, queries, model.tau, h, kind)?;
        for (o, v) in out.iter_mut().zip(&pred.values) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// Fit an averaging model with the given scheme.
pub fn fit_averaged(
    data: &Dataset,
    tau: QuantileLevel,
    scheme: WeightScheme,
    bandwidths: &BandwidthPlan,
    kind: KernelKind,
) -> Result<AveragedModel> {
    data.check_fit_feasible()?;
    let candidates = bandwidths.index_cols.clone();
    let p = candidates.len();
    let weights = match scheme {
        WeightScheme::Loocv => {
            let loo =
                crate::vcm::loo_prediction_matrix(data, tau, &bandwidths.adjusted, kind)?;
            loocv_weights(&loo, data.y())?
        }
        WeightScheme::Equal => equal_weights(p),
        WeightScheme::SmoothedBic => smoothed_bic_weights(data, tau, bandwidths, kind)?,
    };
    Ok(AveragedModel {
        tau,
        scheme,
        weights,
        bandwidths: bandwidths.clone(),
        column_index_map: candidates,
    })
}
