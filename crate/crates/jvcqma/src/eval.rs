//! The comparison harness: out-of-sample check loss (FPE), the replication
//! protocol over simulated designs, random-split evaluation for real data,
//! and bootstrap intervals for the averaging weights.

use crate::average::{equal_weights, loocv_weights, smoothed_bic_weights, WEIGHT_SKIP};
use crate::bandwidth::{pilot_bandwidth, pilot_bandwidth_default};
use crate::data::{standardize, ColumnSchema};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::math::{check_loss, quantile_adjust_factor, KernelKind, QuantileLevel};
use crate::qr::{solve_weighted_qr, WeightedQrProblem, DEFAULT_TOL};
use crate::rng::{derive_seed, SplitRng};
use crate::sim::{generate, SimDesign};
use crate::vcm::{loo_prediction_matrix, predict_candidate};
use rayon::prelude::*;
use serde::Serialize;

/// Method names are reserved for externally computed baselines in reports.
pub const EXTERNAL_METHOD_SLOTS: [&str; 3] = ["PLQR", "LQMA", "AQR"];

/// A replication run tolerates up to this fraction of failures per method.
const MAX_FAILURE_FRAC: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Jvcqma,
    Vcqma1,
    Vcqma2,
    /// Single-candidate baseline; the payload is the candidate position
    /// (0-based) among the continuous columns.
    Vcqr(usize),
    Lqr,
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Jvcqma => "JVCQMA".into(),
            Method::Vcqma1 => "VCQMA1".into(),
            Method::Vcqma2 => "VCQMA2".into(),
            Method::Vcqr(s) => format!("VCQR_{}", s + 1),
            Method::Lqr => "LQR".into(),
        }
    }

    /// Parse "jvcqma", "vcqr_3" (1-based), "lqr", ...
    pub fn parse(text: &str) -> Result<Method> {
        let t = text.trim().to_ascii_lowercase();
        match t.as_str() {
            "jvcqma" => return Ok(Method::Jvcqma),
            "vcqma1" => return Ok(Method::Vcqma1),
            "vcqma2" => return Ok(Method::Vcqma2),
            "lqr" => return Ok(Method::Lqr),
            _ => {}
        }
        if let Some(rest) = t.strip_prefix("vcqr_").or_else(|| t.strip_prefix("vcqr")) {
            if let Ok(k) = rest.parse::<usize>() {
                if k >= 1 {
                    return Ok(Method::Vcqr(k - 1));
                }
            }
        }
        Err(Error::Internal(format!("unknown method {text:?}")))
    }

    /// Every candidate-specific baseline for a p-candidate problem.
    pub fn all_for(p: usize) -> Vec<Method> {
        let mut m = vec![Method::Jvcqma, Method::Vcqma1, Method::Vcqma2];
        m.extend((0..p).map(Method::Vcqr));
        m.push(Method::Lqr);
        m
    }
}

/// Mean check loss of a prediction vector over a test set.
pub fn fpe(y_test: &[f64], predictions: &[f64], tau: QuantileLevel) -> Result<f64> {
    if y_test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if predictions.len() != y_test.len() {
        return Err(Error::ShapeMismatch {
            context: "predictions vs test responses",
            expected: y_test.len(),
            got: predictions.len(),
        });
    }
    let mut total = 0.0;
    for (y, f) in y_test.iter().zip(predictions) {
        if !f.is_finite() {
            return Err(Error::NonFinite("test prediction"));
        }
        total += check_loss(tau, y - f);
    }
    Ok(total / y_test.len() as f64)
}

/// Global linear quantile regression with intercept over all covariates.
#[derive(Debug, Clone)]
pub struct LinearPredictor {
    pub coefficients: Vec<f64>,
}

impl LinearPredictor {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.coefficients[0]
            + x.iter()
                .zip(&self.coefficients[1..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    pub fn predict_matrix(&self, x: &Mat) -> Vec<f64> {
        (0..x.rows()).map(|i| self.predict_row(x.row(i))).collect()
    }
}

pub fn linear_qr_baseline(data: &Dataset, tau: QuantileLevel) -> Result<LinearPredictor> {
    let n = data.n();
    let d = data.num_covariates() + 1;
    let mut design = Vec::with_capacity(n * d);
    for i in 0..n {
        design.push(1.0);
        design.extend_from_slice(data.covariate_row(i));
    }
    let problem = WeightedQrProblem::new(
        data.y().to_vec(),
        Mat::from_vec(n, d, design),
        vec![1.0; n],
        tau,
    )?;
    let sol = solve_weighted_qr(&problem, DEFAULT_TOL)?;
    Ok(LinearPredictor {
        coefficients: sol.coefficients,
    })
}

/// Deterministic uniform partition without replacement; both halves keep the
/// original row order.
pub fn train_test_split(data: &Dataset, n_test: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = data.n();
    if n_test == 0 || n_test >= n {
        return Err(Error::InvalidSplit { n_test, n });
    }
    let mut rng = SplitRng::from_seed(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let mut test: Vec<usize> = idx[..n_test].to_vec();
    let mut train: Vec<usize> = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((data.subset(&train), data.subset(&test)))
}

/// Weighted candidate combination with the exact-zero skip rule.
pub fn combine_predictions(candidates: &Mat, weights: &[f64]) -> Vec<f64> {
    assert_eq!(candidates.cols(), weights.len());
    let mut out = vec![0.0; candidates.rows()];
    for (s, &w) in weights.iter().enumerate() {
        if w < WEIGHT_SKIP {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += w * candidates.get(i, s);
        }
    }
    out
}

/// All points of the p-simplex whose coordinates are multiples of 1/steps.
pub fn simplex_grid(p: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(p: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == p - 1 {
            let mut full = cur.clone();
            full.push(left);
            out.push(full);
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(p, left - k, cur, out);
            cur.pop();
        }
    }
    let mut raw = Vec::new();
    rec(p, steps, &mut Vec::new(), &mut raw);
    raw.into_iter()
        .map(|c| c.into_iter().map(|k| k as f64 / steps as f64).collect())
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FpeRow {
    pub tau: f64,
    pub method: String,
    pub mean_fpe: f64,
    pub sd_fpe: f64,
    pub reps_used: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FpeReport {
    pub design: String,
    pub reps: usize,
    pub taus: Vec<f64>,
    pub methods: Vec<String>,
    /// Column slots reserved for externally computed methods.
    pub external_slots: Vec<String>,
    pub rows: Vec<FpeRow>,
    #[serde(skip)]
    pub mean_rep_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightRow {
    pub tau: f64,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub reps_used: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightSummary {
    /// Candidate index column per weight position.
    pub candidate_cols: Vec<usize>,
    pub rows: Vec<WeightRow>,
}

/// Per-replication raw outcome before aggregation.
struct RepOutcome {
    /// fpe[tau_idx][method_idx]
    fpe: Vec<Vec<Result<f64>>>,
    /// weights[tau_idx]: JVCQMA weights when that method ran
    weights: Vec<Option<Vec<f64>>>,
    seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ReplicationConfig {
    pub design: SimDesign,
    pub taus: Vec<QuantileLevel>,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub master_seed: u64,
    pub kernel: KernelKind,
    pub grid: Option<Vec<f64>>,
}

/// One replication on a prepared train/test pair; shared by the simulation
/// and real-data protocols.
fn replicate_once(
    train: &Dataset,
    test: &Dataset,
    taus: &[QuantileLevel],
    methods: &[Method],
    kernel: KernelKind,
    grid: Option<&[f64]>,
) -> RepOutcome {
    let started = std::time::Instant::now();
    let candidates = train.continuous_cols().to_vec();
    let p = candidates.len();

    let needs_bandwidths = methods.iter().any(|m| !matches!(m, Method::Lqr));
    let pilots: Result<Vec<f64>> = if needs_bandwidths {
        candidates
            .iter()
            .map(|&s| match grid {
                Some(g) => pilot_bandwidth(train, s, g, kernel),
                None => pilot_bandwidth_default(train, s, kernel).map(|(h, _)| h),
            })
            .collect()
    } else {
        Ok(vec![])
    };

    let mut fpe_out: Vec<Vec<Result<f64>>> = Vec::with_capacity(taus.len());
    let mut weights_out: Vec<Option<Vec<f64>>> = Vec::with_capacity(taus.len());
    for &tau in taus {
        let mut per_method: Vec<Result<f64>> = Vec::with_capacity(methods.len());
        let mut jvcqma_weights = None;

        let adjusted: Result<Vec<f64>> = pilots.as_ref().map_or_else(
            |e| Err(Error::Internal(format!("bandwidth selection failed: {e}"))),
            |p| {
                let f = quantile_adjust_factor(tau);
                Ok(p.iter().map(|h| h * f).collect())
            },
        );

        // candidate predictions over the test set, shared by every
        // candidate-based method
        let candidate_matrix: Result<Mat> = if needs_bandwidths {
            adjusted.as_ref().map_or_else(
                |e| Err(Error::Internal(e.to_string())),
                |h| {
                    let mut m = Mat::zeros(test.n(), p);
                    for (c, &s) in candidates.iter().enumerate() {
                        let pred = predict_candidate(train, s, test.x(), tau, h[c], kernel)?;
                        for i in 0..test.n() {
                            m.set(i, c, pred.values[i]);
                        }
                    }
                    Ok(m)
                },
            )
        } else {
            Err(Error::Internal("no candidate-based methods requested".into()))
        };

        for method in methods {
            let result = (|| -> Result<f64> {
                match method {
                    Method::Lqr => {
                        let fit = linear_qr_baseline(train, tau)?;
                        fpe(test.y(), &fit.predict_matrix(test.x()), tau)
                    }
                    Method::Vcqr(s) => {
                        let m = candidate_matrix
                            .as_ref()
                            .map_err(|e| Error::Internal(e.to_string()))?;
                        if *s >= p {
                            return Err(Error::ShapeMismatch {
                                context: "VCQR candidate index",
                                expected: p,
                                got: *s,
                            });
                        }
                        let col: Vec<f64> = (0..test.n()).map(|i| m.get(i, *s)).collect();
                        fpe(test.y(), &col, tau)
                    }
                    Method::Vcqma1 => {
                        let m = candidate_matrix
                            .as_ref()
                            .map_err(|e| Error::Internal(e.to_string()))?;
                        let preds = combine_predictions(m, equal_weights(p).as_slice());
                        fpe(test.y(), &preds, tau)
                    }
                    Method::Vcqma2 => {
                        let h = adjusted
                            .as_ref()
                            .map_err(|e| Error::Internal(e.to_string()))?;
                        let plan = crate::bandwidth::BandwidthPlan {
                            index_cols: candidates.clone(),
                            pilot: pilots.as_ref().unwrap().clone(),
                            adjusted: h.clone(),
                            tau,
                            grids: vec![],
                        };
                        let w = smoothed_bic_weights(train, tau, &plan, kernel)?;
                        let m = candidate_matrix
                            .as_ref()
                            .map_err(|e| Error::Internal(e.to_string()))?;
                        let preds = combine_predictions(m, w.as_slice());
                        fpe(test.y(), &preds, tau)
                    }
                    Method::Jvcqma => {
                        let h = adjusted
                            .as_ref()
                            .map_err(|e| Error::Internal(e.to_string()))?;
                        let loo = loo_prediction_matrix(train, tau, h, kernel)?;
                        let w = loocv_weights(&loo, train.y())?;
                        let m = candidate_matrix
                            .as_ref()
                            .map_err(|e| Error::Internal(e.to_string()))?;
                        let preds = combine_predictions(m, w.as_slice());
                        let value = fpe(test.y(), &preds, tau)?;
                        jvcqma_weights = Some(w.as_slice().to_vec());
                        Ok(value)
                    }
                }
            })();
            per_method.push(result);
        }
        fpe_out.push(per_method);
        weights_out.push(jvcqma_weights);
    }
    RepOutcome {
        fpe: fpe_out,
        weights: weights_out,
        seconds: started.elapsed().as_secs_f64(),
    }
}

fn sample_sd(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

fn aggregate(
    outcomes: Vec<RepOutcome>,
    taus: &[QuantileLevel],
    methods: &[Method],
    candidate_cols: Vec<usize>,
    design_label: String,
    reps: usize,
) -> Result<(FpeReport, WeightSummary)> {
    let mut rows = Vec::new();
    for (ti, &tau) in taus.iter().enumerate() {
        for (mi, method) in methods.iter().enumerate() {
            let values: Vec<f64> = outcomes
                .iter()
                .filter_map(|o| o.fpe[ti][mi].as_ref().ok().copied())
                .collect();
            let failures = reps - values.len();
            if failures as f64 > MAX_FAILURE_FRAC * reps as f64 {
                let first_err = outcomes
                    .iter()
                    .find_map(|o| o.fpe[ti][mi].as_ref().err().map(ToString::to_string))
                    .unwrap_or_default();
                return Err(Error::TooManyFailures {
                    what: format!("{} at tau={} ({first_err})", method.label(), tau.value()),
                    failed: failures,
                    total: reps,
                });
            }
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            rows.push(FpeRow {
                tau: tau.value(),
                method: method.label(),
                mean_fpe: mean,
                sd_fpe: sample_sd(&values, mean),
                reps_used: values.len(),
                failures,
            });
        }
    }

    let p = candidate_cols.len();
    let mut weight_rows = Vec::new();
    if methods.contains(&Method::Jvcqma) {
        for (ti, &tau) in taus.iter().enumerate() {
            let collected: Vec<&Vec<f64>> = outcomes
                .iter()
                .filter_map(|o| o.weights[ti].as_ref())
                .collect();
            if collected.is_empty() {
                continue;
            }
            let k = collected.len();
            let mut means = vec![0.0; p];
            for w in &collected {
                for (m, v) in means.iter_mut().zip(w.iter()) {
                    *m += v;
                }
            }
            means.iter_mut().for_each(|m| *m /= k as f64);
            let mut sds = vec![0.0; p];
            if k >= 2 {
                for w in &collected {
                    for (s, (v, m)) in sds.iter_mut().zip(w.iter().zip(&means)) {
                        *s += (v - m) * (v - m);
                    }
                }
                sds.iter_mut().for_each(|s| *s = (*s / (k - 1) as f64).sqrt());
            }
            weight_rows.push(WeightRow {
                tau: tau.value(),
                means,
                sds,
                reps_used: k,
                lower: None,
                upper: None,
            });
        }
    }

    let mean_secs =
        outcomes.iter().map(|o| o.seconds).sum::<f64>() / outcomes.len().max(1) as f64;
    Ok((
        FpeReport {
            design: design_label,
            reps,
            taus: taus.iter().map(|t| t.value()).collect(),
            methods: methods.iter().map(Method::label).collect(),
            external_slots: EXTERNAL_METHOD_SLOTS.iter().map(|s| (*s).into()).collect(),
            rows,
            mean_rep_seconds: mean_secs,
        },
        WeightSummary {
            candidate_cols,
            rows: weight_rows,
        },
    ))
}

/// Simulation protocol: per replication, generate train + test from a
/// derived seed, select bandwidths on the training set, fit every method,
/// and score out-of-sample. Replications run in parallel without affecting
/// any reported number.
pub fn run_replications(cfg: &ReplicationConfig) -> Result<(FpeReport, WeightSummary)> {
    cfg.design.validate()?;
    if cfg.reps == 0 {
        return Err(Error::Internal("reps must be >= 1".into()));
    }
    let outcomes: Vec<RepOutcome> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let design = cfg.design.with_seed(derive_seed(cfg.master_seed, r as u64));
            match generate(&design) {
                Ok(sample) => replicate_once(
                    &sample.train,
                    &sample.test,
                    &cfg.taus,
                    &cfg.methods,
                    cfg.kernel,
                    cfg.grid.as_deref(),
                ),
                Err(e) => RepOutcome {
                    fpe: cfg
                        .taus
                        .iter()
                        .map(|_| {
                            cfg.methods
                                .iter()
                                .map(|_| Err(Error::Internal(format!("generation failed: {e}"))))
                                .collect()
                        })
                        .collect(),
                    weights: cfg.taus.iter().map(|_| None).collect(),
                    seconds: 0.0,
                },
            }
        })
        .collect();

    let candidate_cols = generate(&cfg.design.with_seed(derive_seed(cfg.master_seed, 0)))
        .map(|s| s.train.continuous_cols().to_vec())
        .unwrap_or_default();
    aggregate(
        outcomes,
        &cfg.taus,
        &cfg.methods,
        candidate_cols,
        cfg.design.label(),
        cfg.reps,
    )
}

#[derive(Debug, Clone)]
pub struct DataSplitConfig {
    pub taus: Vec<QuantileLevel>,
    pub methods: Vec<Method>,
    pub n_test: usize,
    pub reps: usize,
    pub master_seed: u64,
    pub kernel: KernelKind,
    pub grid: Option<Vec<f64>>,
}

/// Real-data protocol: repeatedly split into train/test, standardize with
/// training statistics, fit every method on the training part, and score on
/// the held-out part.
pub fn run_data_splits(
    data: &Dataset,
    schema: &[ColumnSchema],
    cfg: &DataSplitConfig,
) -> Result<(FpeReport, WeightSummary)> {
    if cfg.reps == 0 {
        return Err(Error::Internal("reps must be >= 1".into()));
    }
    let outcomes: Vec<RepOutcome> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(cfg.master_seed, r as u64);
            let prepared = train_test_split(data, cfg.n_test, seed).and_then(|(tr, te)| {
                let (tr_std, record) = standardize(&tr, schema)?;
                let te_std = crate::data::apply_standardization(&te, &record)?;
                Ok((tr_std, te_std))
            });
            match prepared {
                Ok((train, test)) => replicate_once(
                    &train,
                    &test,
                    &cfg.taus,
                    &cfg.methods,
                    cfg.kernel,
                    cfg.grid.as_deref(),
                ),
                Err(e) => RepOutcome {
                    fpe: cfg
                        .taus
                        .iter()
                        .map(|_| {
                            cfg.methods
                                .iter()
                                .map(|_| Err(Error::Internal(format!("split failed: {e}"))))
                                .collect()
                        })
                        .collect(),
                    weights: cfg.taus.iter().map(|_| None).collect(),
                    seconds: 0.0,
                },
            }
        })
        .collect();
    aggregate(
        outcomes,
        &cfg.taus,
        &cfg.methods,
        data.continuous_cols().to_vec(),
        format!("data-splits-ntest{}", cfg.n_test),
        cfg.reps,
    )
}

/// Nonparametric row bootstrap of the JVCQMA weights at one quantile level.
/// Bandwidths are recomputed per resample unless `fixed_bandwidths` is
/// given. Intervals are mean +/- 1.96 sd per candidate.
pub fn bootstrap_weight_intervals(
    data: &Dataset,
    tau: QuantileLevel,
    b: usize,
    master_seed: u64,
    kernel: KernelKind,
    grid: Option<&[f64]>,
    fixed_bandwidths: Option<&[f64]>,
) -> Result<WeightSummary> {
    if b < 2 {
        return Err(Error::Internal("bootstrap needs B >= 2".into()));
    }
    data.check_fit_feasible()?;
    let candidates = data.continuous_cols().to_vec();
    let p = candidates.len();

    let draws: Vec<Result<Vec<f64>>> = (0..b)
        .into_par_iter()
        .map(|k| {
            let mut rng = SplitRng::stream(master_seed, k as u64);
            let n = data.n();
            let rows: Vec<usize> = (0..n).map(|_| (rng.next_u64() % n as u64) as usize).collect();
            let resample = data.subset(&rows);
            let adjusted: Vec<f64> = match fixed_bandwidths {
                Some(h) => h.to_vec(),
                None => {
                    let f = quantile_adjust_factor(tau);
                    candidates
                        .iter()
                        .map(|&s| match grid {
                            Some(g) => pilot_bandwidth(&resample, s, g, kernel).map(|h| h * f),
                            None => pilot_bandwidth_default(&resample, s, kernel)
                                .map(|(h, _)| h * f),
                        })
                        .collect::<Result<_>>()?
                }
            };
            let loo = loo_prediction_matrix(&resample, tau, &adjusted, kernel)?;
            let w = loocv_weights(&loo, resample.y())?;
            Ok(w.as_slice().to_vec())
        })
        .collect();

    let ok: Vec<Vec<f64>> = draws.iter().filter_map(|d| d.as_ref().ok().cloned()).collect();
    let failures = b - ok.len();
    if failures as f64 > MAX_FAILURE_FRAC * b as f64 {
        let first_err = draws
            .iter()
            .find_map(|d| d.as_ref().err().map(ToString::to_string))
            .unwrap_or_default();
        return Err(Error::TooManyFailures {
            what: format!("bootstrap resamples ({first_err})"),
            failed: failures,
            total: b,
        });
    }

    let k = ok.len();
    let mut means = vec![0.0; p];
    for w in &ok {
        for (m, v) in means.iter_mut().zip(w) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= k as f64);
    let mut sds = vec![0.0; p];
    if k >= 2 {
        for w in &ok {
            for (s, (v, m)) in sds.iter_mut().zip(w.iter().zip(&means)) {
                *s += (v - m) * (v - m);
            }
        }
        sds.iter_mut().for_each(|s| *s = (*s / (k - 1) as f64).sqrt());
    }
    let lower: Vec<f64> = means.iter().zip(&sds).map(|(m, s)| m - 1.96 * s).collect();
    let upper: Vec<f64> = means.iter().zip(&sds).map(|(m, s)| m + 1.96 * s).collect();
    Ok(WeightSummary {
        candidate_cols: candidates,
        rows: vec![WeightRow {
            tau: tau.value(),
            means,
            sds,
            reps_used: k,
            lower: Some(lower),
            upper: Some(upper),
        }],
    })
}

/// Table layout: one row per quantile level, one column per method, plus
/// reserved NA columns for external methods.
pub fn fpe_report_tsv(report: &FpeReport) -> String {
    let mut out = String::from("tau");
    for m in &report.methods {
        out.push('\t');
        out.push_str(m);
    }
    for m in &report.external_slots {
        out.push('\t');
        out.push_str(m);
    }
    out.push('\n');
    for &tau in &report.taus {
        out.push_str(&format!("{tau}"));
        for m in &report.methods {
            let cell = report
                .rows
                .iter()
                .find(|r| r.tau == tau && &r.method == m)
                .map_or("NA".into(), |r| format!("{:.6}", r.mean_fpe));
            out.push('\t');
            out.push_str(&cell);
        }
        for _ in &report.external_slots {
            out.push_str("\tNA");
        }
        out.push('\n');
    }
    out
}

/// Weight table layout: per quantile level, a mean line and an sd line, one
/// column per candidate.
pub fn weight_summary_tsv(summary: &WeightSummary) -> String {
    let mut out = String::from("tau\tstat");
    for c in &summary.candidate_cols {
        out.push_str(&format!("\tw{}", c + 1));
    }
    out.push('\n');
    for row in &summary.rows {
        out.push_str(&format!("{}\tmean", row.tau));
        for v in &row.means {
            out.push_str(&format!("\t{v:.6}"));
        }
        out.push('\n');
        out.push_str(&format!("{}\tsd", row.tau));
        for v in &row.sds {
            out.push_str(&format!("\t{v:.6}"));
        }
        out.push('\n');
        if let (Some(lo), Some(hi)) = (&row.lower, &row.upper) {
            out.push_str(&format!("{}\tlower", row.tau));
            for v in lo {
                out.push_str(&format!("\t{v:.6}"));
            }
            out.push('\n');
            out.push_str(&format!("{}\tupper", row.tau));
            for v in hi {
                out.push_str(&format!("\t{v:.6}"));
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{ErrorCase, Example};

    fn tau(t: f64) -> QuantileLevel {
        QuantileLevel::new(t).unwrap()
    }

    #[test]
    fn fpe_examples() {
        let t = tau(0.5);
        assert_eq!(fpe(&[1.0, 2.0], &[1.0, 2.0], t).unwrap(), 0.0);
        assert!((fpe(&[1.0, -1.0], &[0.0, 0.0], t).unwrap() - 0.5).abs() < 1e-15);
        assert!(fpe(&[], &[], t).is_err());
    }

    #[test]
    fn fpe_matches_scalar_loop() {
        let mut rng = SplitRng::from_seed(4);
        let t = tau(0.3);
        let y: Vec<f64> = (0..40).map(|_| rng.standard_normal()).collect();
        let f: Vec<f64> = (0..40).map(|_| rng.standard_normal()).collect();
        let fast = fpe(&y, &f, t).unwrap();
        let mut naive = 0.0;
        for i in 0..40 {
            let u = y[i] - f[i];
            naive += if u > 0.0 { 0.3 * u } else { -0.7 * u };
        }
        naive /= 40.0;
        assert!((fast - naive).abs() < 1e-12);
    }

    #[test]
    fn linear_baseline_recovers_noiseless_truth() {
        let mut rng = SplitRng::from_seed(12);
        let n = 60;
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let x1 = rng.standard_normal();
            let x2 = rng.standard_normal();
            rows.push(x1);
            rows.push(x2);
            y.push(1.5 + 2.0 * x1 - x2);
        }
        let data = Dataset::new(y, Mat::from_vec(n, 2, rows), vec![0, 1], vec![]).unwrap();
        let fit = linear_qr_baseline(&data, tau(0.5)).unwrap();
        assert!((fit.coefficients[0] - 1.5).abs() < 1e-6);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-6);
        assert!((fit.coefficients[2] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn intercept_only_lqr_is_sample_median() {
        let y = vec![3.0, 1.0, 2.0, 10.0, 2.5];
        let data = Dataset::new(
            y,
            Mat::from_vec(5, 1, vec![0.0; 5]),
            vec![0],
            vec![],
        )
        .unwrap();
        let fit = linear_qr_baseline(&data, tau(0.5)).unwrap();
        assert!((fit.coefficients[0] - 2.5).abs() < 1e-9);
    }

    #[test]
    fn linear_baseline_matches_vertex_enumeration() {
        // exhaustive two-point interpolation oracle for an intercept+slope fit
        let mut rng = SplitRng::from_seed(21);
        for _ in 0..20 {
            let m = 5;
            let xs: Vec<f64> = (0..m).map(|_| rng.standard_normal()).collect();
            let ys: Vec<f64> = (0..m).map(|_| rng.standard_normal()).collect();
            let data = Dataset::new(
                ys.clone(),
                Mat::from_vec(m, 1, xs.clone()),
                vec![0],
                vec![],
            )
            .unwrap();
            let t = tau(0.4);
            let fit = linear_qr_baseline(&data, t).unwrap();
            let objective = |a: f64, b: f64| {
                (0..m)
                    .map(|i| check_loss(t, ys[i] - a - b * xs[i]))
                    .sum::<f64>()
            };
            let got = objective(fit.coefficients[0], fit.coefficients[1]);
            let mut best = f64::INFINITY;
            for i in 0..m {
                for j in 0..m {
                    if i == j || (xs[i] - xs[j]).abs() < 1e-12 {
                        continue;
                    }
                    let b = (ys[i] - ys[j]) / (xs[i] - xs[j]);
                    let a = ys[i] - b * xs[i];
                    best = best.min(objective(a, b));
                }
                // slope-zero vertices interpolating one point
                best = best.min(objective(ys[i], 0.0));
            }
            assert!((got - best).abs() < 1e-8, "{got} vs {best}");
        }
    }

    #[test]
    fn bootstrap_fixed_bandwidths_are_honored() {
        let mut rng = SplitRng::from_seed(17);
        let n = 40;
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let x1 = rng.standard_normal();
            let x2 = rng.standard_normal();
            rows.push(x1);
            rows.push(x2);
            y.push(x2 + 0.3 * rng.standard_normal());
        }
        let data = Dataset::new(y, Mat::from_vec(n, 2, rows), vec![0, 1], vec![]).unwrap();
        // fixing the bandwidths skips per-resample selection entirely, so a
        // degenerate (empty) grid cannot hurt
        let fixed = [0.9, 0.9];
        let summary = bootstrap_weight_intervals(
            &data,
            tau(0.5),
            3,
            1,
            KernelKind::Gaussian,
            None,
            Some(&fixed),
        )
        .unwrap();
        assert_eq!(summary.rows[0].reps_used, 3);
    }

    #[test]
    fn split_sizes_disjoint_and_deterministic() {
        let n = 50;
        let y: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let x = Mat::from_vec(n, 1, (0..n).map(|i| i as f64).collect());
        let data = Dataset::new(y, x, vec![0], vec![]).unwrap();
        let (train, test) = train_test_split(&data, 10, 99).unwrap();
        assert_eq!(train.n(), 40);
        assert_eq!(test.n(), 10);
        let mut all: Vec<f64> = train.y().iter().chain(test.y()).copied().collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let want: Vec<f64> = (0..n).map(|i| i as f64).collect();
        assert_eq!(all, want);
        let (train2, test2) = train_test_split(&data, 10, 99).unwrap();
        assert_eq!(train.y(), train2.y());
        assert_eq!(test.y(), test2.y());
        assert!(train_test_split(&data, 0, 1).is_err());
        assert!(train_test_split(&data, 50, 1).is_err());
    }

    #[test]
    fn simplex_grid_counts() {
        // compositions of 10 into 3 parts: C(12,2) = 66
        assert_eq!(simplex_grid(3, 10).len(), 66);
        for w in simplex_grid(3, 10) {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn replication_run_is_deterministic_and_shaped() {
        let cfg = ReplicationConfig {
            design: SimDesign {
                example: Example::Ex1,
                error_case: ErrorCase::new(1).unwrap(),
                n: 60,
                p: 5,
                seed: 0,
                allow_case_override: false,
            },
            taus: vec![tau(0.5)],
            methods: vec![Method::Lqr],
            reps: 2,
            master_seed: 7,
            kernel: KernelKind::Gaussian,
            grid: Some(vec![0.6]),
        };
        let (a, _) = run_replications(&cfg).unwrap();
        let (b, _) = run_replications(&cfg).unwrap();
        assert_eq!(a.rows.len(), 1);
        assert_eq!(a.rows[0].method, "LQR");
        assert_eq!(a.rows[0].mean_fpe, b.rows[0].mean_fpe);
        assert_eq!(a.rows[0].reps_used, 2);
    }

    #[test]
    fn fpe_of_unit_weight_equals_candidate_fpe() {
        // FPE under w = e_s must equal candidate s's FPE exactly
        let mut c = Mat::zeros(4, 3);
        for i in 0..4 {
            for s in 0..3 {
                c.set(i, s, (i * 3 + s) as f64 * 0.1);
            }
        }
        let y = vec![0.1, 0.5, 0.2, 0.9];
        let t = tau(0.4);
        for s in 0..3 {
            let mut w = vec![0.0; 3];
            w[s] = 1.0;
            let combined = combine_predictions(&c, &w);
            let direct: Vec<f64> = (0..4).map(|i| c.get(i, s)).collect();
            assert_eq!(
                fpe(&y, &combined, t).unwrap(),
                fpe(&y, &direct, t).unwrap()
            );
        }
    }

    #[test]
    fn bootstrap_reproducible_and_intervals_contain_mean() {
        let mut rng = SplitRng::from_seed(3);
        let n = 40;
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let x1 = rng.standard_normal();
            let x2 = rng.standard_normal();
            rows.push(x1);
            rows.push(x2);
            y.push(x2 + 0.2 * rng.standard_normal());
        }
        let data = Dataset::new(y, Mat::from_vec(n, 2, rows), vec![0, 1], vec![]).unwrap();
        let run = |seed| {
            bootstrap_weight_intervals(
                &data,
                tau(0.5),
                2,
                seed,
                KernelKind::Gaussian,
                Some(&[0.8]),
                None,
            )
            .unwrap()
        };
        let a = run(5);
        let b = run(5);
        assert_eq!(a.rows[0].means, b.rows[0].means);
        let row = &a.rows[0];
        for s in 0..2 {
            assert!(row.lower.as_ref().unwrap()[s] <= row.means[s] + 1e-12);
            assert!(row.means[s] <= row.upper.as_ref().unwrap()[s] + 1e-12);
        }
    }

    #[test]
    fn dominant_candidate_interval_concentrates_near_one() {
        // x2 explains y exactly; its candidate should carry ~all weight in
        // every resample
        let mut rng = SplitRng::from_seed(8);
        let n = 36;
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let x1 = rng.standard_normal();
            let x2 = rng.standard_normal();
            rows.push(x1);
            rows.push(x2);
            y.push(x2);
        }
        let data = Dataset::new(y, Mat::from_vec(n, 2, rows), vec![0, 1], vec![]).unwrap();
        let summary = bootstrap_weight_intervals(
            &data,
            tau(0.5),
            4,
            11,
            KernelKind::Gaussian,
            Some(&[1.0]),
            None,
        )
        .unwrap();
        let row = &summary.rows[0];
        let best = row.means.iter().cloned().fold(f64::MIN, f64::max);
        assert!(best > 0.9, "means {:?}", row.means);
    }

    #[test]
    fn tsv_layouts() {
        let report = FpeReport {
            design: "toy".into(),
            reps: 2,
            taus: vec![0.25, 0.5],
            methods: vec!["JVCQMA".into(), "LQR".into()],
            external_slots: EXTERNAL_METHOD_SLOTS.iter().map(|s| (*s).into()).collect(),
            rows: vec![
                FpeRow {
                    tau: 0.25,
                    method: "JVCQMA".into(),
                    mean_fpe: 0.5,
                    sd_fpe: 0.1,
                    reps_used: 2,
                    failures: 0,
                },
                FpeRow {
                    tau: 0.25,
                    method: "LQR".into(),
                    mean_fpe: 0.7,
                    sd_fpe: 0.1,
                    reps_used: 2,
                    failures: 0,
                },
                FpeRow {
                    tau: 0.5,
                    method: "JVCQMA".into(),
                    mean_fpe: 0.4,
                    sd_fpe: 0.1,
                    reps_used: 2,
                    failures: 0,
                },
                FpeRow {
                    tau: 0.5,
                    method: "LQR".into(),
                    mean_fpe: 0.6,
                    sd_fpe: 0.1,
                    reps_used: 2,
                    failures: 0,
                },
            ],
            mean_rep_seconds: 0.0,
        };
        let tsv = fpe_report_tsv(&report);
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "tau\tJVCQMA\tLQR\tPLQR\tLQMA\tAQR");
        assert!(lines[1].starts_with("0.25\t0.500000\t0.700000\tNA"));

        let summary = WeightSummary {
            candidate_cols: vec![0, 1],
            rows: vec![WeightRow {
                tau: 0.5,
                means: vec![0.6, 0.4],
                sds: vec![0.05, 0.05],
                reps_used: 2,
                lower: None,
                upper: None,
            }],
        };
        let wtsv = weight_summary_tsv(&summary);
        assert!(wtsv.starts_with("tau\tstat\tw1\tw2\n0.5\tmean\t0.600000\t0.400000\n0.5\tsd"));
    }

    #[test]
    fn method_parsing() {
        assert_eq!(Method::parse("jvcqma").unwrap(), Method::Jvcqma);
        assert_eq!(Method::parse("VCQR_3").unwrap(), Method::Vcqr(2));
        assert_eq!(Method::parse("vcqr1").unwrap(), Method::Vcqr(0));
        assert!(Method::parse("nope").is_err());
        assert_eq!(Method::all_for(2).len(), 6);
    }
}
