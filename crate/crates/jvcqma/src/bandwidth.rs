//! Two-stage bandwidth rule: least-squares leave-one-out cross-validation
//! picks a pilot bandwidth per index, which is then rescaled by the
//! quantile adjustment factor.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{spd_solve, Mat};
use crate::math::{kernel_scaled, quantile_adjust_factor, KernelKind, QuantileLevel};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Pilot and quantile-adjusted bandwidths, one per continuous index column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandwidthPlan {
    /// Continuous column id per entry.
    pub index_cols: Vec<usize>,
    pub pilot: Vec<f64>,
    pub adjusted: Vec<f64>,
    pub tau: QuantileLevel,
    /// Candidate pilot grid used per index.
    pub grids: Vec<Vec<f64>>,
}

/// Default pilot grid for one index: 20 geometrically spaced values from
/// 0.1 * sd * n^(-1/5) to 3 * sd * n^(-1/5).
pub fn default_grid(data: &Dataset, s: usize) -> Vec<f64> {
    let n = data.n();
    let mean = (0..n).map(|i| data.x().get(i, s)).sum::<f64>() / n as f64;
    let var = (0..n)
        .map(|i| (data.x().get(i, s) - mean).powi(2))
        .sum::<f64>()
        / (n as f64 - 1.0);
    let sd = var.sqrt().max(1e-12);
    let rate = (n as f64).powf(-0.2);
    geometric_grid(0.1 * sd * rate, 3.0 * sd * rate, 20)
}

/// `count` geometrically spaced values spanning [lo, hi].
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && count >= 1);
    if count == 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).powf(1.0 / (count as f64 - 1.0));
    (0..count).map(|k| lo * ratio.powi(k as i32)).collect()
}

/// Local-linear least-squares fit at x_s = X_is excluding row i, then
/// predict row i with the level terms. None when the weighted normal
/// equations are singular.
fn loo_ls_prediction(
    data: &Dataset,
    s: usize,
    i: usize,
    h: f64,
    kind: KernelKind,
) -> Result<Option<f64>> {
    let total = data.num_covariates();
    let d = 2 * total;
    let x_s = data.x().get(i, s);

    let mut gram = Mat::zeros(d, d);
    let mut moment = vec![0.0; d];
    let mut row = vec![0.0; d];
    let mut used = 0usize;
    for j in 0..data.n() {
        if j == i {
            continue;
        }
        // unlike the LP fits there is no small-weight drop here: far rows
        // cost nothing in a closed-form solve, and heavy-tailed index
        // columns need them to keep rare covariates in the window
        let w = kernel_scaled(kind, h, data.x().get(j, s) - x_s)?;
        if w <= 0.0 {
            continue;
        }
        used += 1;
        let xj = data.covariate_row(j);
        let dx = xj[s] - x_s;
        row[0] = 1.0;
        let mut k = 1;
        for (c, &x) in xj.iter().enumerate() {
            if c != s {
                row[k] = x;
                k += 1;
            }
        }
        row[k] = dx;
        k += 1;
        for (c, &x) in xj.iter().enumerate() {
            if c != s {
                row[k] = x * dx;
                k += 1;
            }
        }
        for a in 0..d {
            let wa = w * row[a];
            for b in a..d {
                let v = gram.get(a, b) + wa * row[b];
                gram.set(a, b, v);
            }
            moment[a] += wa * data.y()[j];
        }
    }
    if used < d {
        return Ok(None);
    }
    for a in 0..d {
        for b in 0..a {
            gram.set(a, b, gram.get(b, a));
        }
    }
    let theta = match spd_solve(&gram, &moment) {
        Ok(t) => t,
        Err(_) => return Ok(None),
    };
    let xi = data.covariate_row(i);
    let mut pred = theta[0];
    let mut k = 1;
    for (c, &x) in xi.iter().enumerate() {
        if c != s {
            pred += theta[k] * x;
            k += 1;
        }
    }
    Ok(Some(pred))
}

/// Leave-one-out least-squares CV score of one grid value; infinite when any
/// row's normal equations are singular.
fn cv_score(data: &Dataset, s: usize, h: f64, kind: KernelKind) -> Result<f64> {
    let mut score = 0.0;
    for i in 0..data.n() {
        match loo_ls_prediction(data, s, i, h, kind)? {
            Some(pred) => {
                let r = data.y()[i] - pred;
                score += r * r;
            }
            None => return Ok(f64::INFINITY),
        }
    }
    Ok(score)
}

/// Pilot bandwidth for index `s`: the grid value minimizing the exact
/// leave-one-out least-squares CV score. Ties go to the smaller bandwidth;
/// grid values with singular fits are excluded.
pub fn pilot_bandwidth(data: &Dataset, s: usize, grid: &[f64], kind: KernelKind) -> Result<f64> {
    if grid.is_empty() || grid.iter().any(|&h| !(h.is_finite() && h > 0.0)) {
        return Err(Error::InvalidBandwidthGrid);
    }
    data.check_fit_feasible()?;
    let scores: Vec<Result<f64>> = grid
        .par_iter()
        .map(|&h| cv_score(data, s, h, kind))
        .collect();
    let mut best: Option<(f64, f64)> = None;
    for (k, res) in scores.into_iter().enumerate() {
        let score = res?;
        if !score.is_finite() {
            continue;
        }
        let h = grid[k];
        best = match best {
            None => Some((h, score)),
            Some((bh, bs)) => {
                if score < bs || (score == bs && h < bh) {
                    Some((h, score))
                } else {
                    Some((bh, bs))
                }
            }
        };
    }
    best.map(|(h, _)| h).ok_or(Error::BandwidthGridExhausted)
}

/// Pilot on the default grid, doubling the grid's range when every value is
/// excluded. Heavy-tailed index columns put observations so deep in the
/// tail that no bandwidth under the default cap can keep their local
/// systems full rank; scaling the whole grid up compresses the relative
/// weight spread until the fits become solvable. Returns the selected pilot
/// and the grid that produced it.
pub fn pilot_bandwidth_default(
    data: &Dataset,
    s: usize,
    kind: KernelKind,
) -> Result<(f64, Vec<f64>)> {
    let base = default_grid(data, s);
    let mut scale = 1.0;
    for _ in 0..=6 {
        let grid: Vec<f64> = base.iter().map(|h| h * scale).collect();
        match pilot_bandwidth(data, s, &grid, kind) {
            Ok(h) => return Ok((h, grid)),
            Err(Error::BandwidthGridExhausted) => scale *= 2.0,
            Err(e) => return Err(e),
        }
    }
    Err(Error::BandwidthGridExhausted)
}

/// Run the pilot per continuous index and apply the quantile adjustment.
/// `grid` of None uses the per-index default (with range extension when
/// exhausted); an explicit grid is used as given.
pub fn plan_bandwidths(
    data: &Dataset,
    tau: QuantileLevel,
    grid: Option<&[f64]>,
    kind: KernelKind,
) -> Result<BandwidthPlan> {
    let index_cols = data.continuous_cols().to_vec();
    let mut grids = Vec::with_capacity(index_cols.len());
    let mut pilot = Vec::with_capacity(index_cols.len());
    for &s in &index_cols {
        match grid {
            Some(g) => {
                pilot.push(pilot_bandwidth(data, s, g, kind)?);
                grids.push(g.to_vec());
            }
            None => {
                let (h, g) = pilot_bandwidth_default(data, s, kind)?;
                pilot.push(h);
                grids.push(g);
            }
        }
    }
    let factor = quantile_adjust_factor(tau);
    let adjusted = pilot.iter().map(|h| h * factor).collect();
    Ok(BandwidthPlan {
        index_cols,
        pilot,
        adjusted,
        tau,
        grids,
    })
}
