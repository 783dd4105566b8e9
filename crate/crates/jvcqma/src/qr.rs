//! Exact solvers for the two convex programs at the heart of the method:
//! weighted linear quantile regression and simplex-constrained quantile
//! combination. Both are posed as dense LPs with split residuals
//! (u = u+ - u-) and solved by a deterministic primal simplex.
//!
//! The entering rule is Dantzig's (most negative reduced cost, lowest index
//! on ties) with an automatic switch to Bland's rule after a run of
//! degenerate pivots, which keeps the solver cycle-free while staying fast
//! on the heavily tied bases quantile problems produce. Leaving ties always
//! resolve to the lowest basic variable index.

use crate::error::{Error, Result};
use crate::linalg::{dot, kahan_sum, Mat};
use crate::math::{check_loss, QuantileLevel};
use serde::{Deserialize, Serialize};

/// Observations with weight below this are dropped from the LP.
pub const WEIGHT_DROP: f64 = 1e-12;

/// Default optimality tolerance on reduced costs.
pub const DEFAULT_TOL: f64 = 1e-9;

const PIVOT_MIN: f64 = 1e-10;
const STALL_LIMIT: usize = 40;

/// Weighted linear quantile regression instance.
#[derive(Debug, Clone)]
pub struct WeightedQrProblem {
    responses: Vec<f64>,
    design: Mat,
    obs_weights: Vec<f64>,
    tau: QuantileLevel,
}

impl WeightedQrProblem {
    pub fn new(
        responses: Vec<f64>,
        design: Mat,
        obs_weights: Vec<f64>,
        tau: QuantileLevel,
    ) -> Result<Self> {
        let m = responses.len();
        let d = design.cols();
        if m == 0 || d == 0 {
            return Err(Error::ShapeMismatch {
                context: "weighted QR needs m >= 1 and d >= 1",
                expected: 1,
                got: 0,
            });
        }
        if design.rows() != m {
            return Err(Error::ShapeMismatch {
                context: "design rows vs responses",
                expected: m,
                got: design.rows(),
            });
        }
        if obs_weights.len() != m {
            return Err(Error::ShapeMismatch {
                context: "weights vs responses",
                expected: m,
                got: obs_weights.len(),
            });
        }
        if !responses.iter().all(|v| v.is_finite()) || !design.is_finite() {
            return Err(Error::NonFinite("weighted QR problem"));
        }
        if obs_weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::NonFinite("observation weights"));
        }
        let positive = obs_weights.iter().filter(|&&w| w > 0.0).count();
        if positive < d {
            return Err(Error::UnderdeterminedLocalFit {
                positive,
                needed: d,
            });
        }
        Ok(WeightedQrProblem {
            responses,
            design,
            obs_weights,
            tau,
        })
    }

    pub fn dim(&self) -> usize {
        self.design.cols()
    }

    pub fn tau(&self) -> QuantileLevel {
        self.tau
    }

    /// Weighted check loss at a coefficient vector, over all observations.
    pub fn objective_at(&self, coefficients: &[f64]) -> f64 {
        assert_eq!(coefficients.len(), self.design.cols());
        let mut total = 0.0;
        for i in 0..self.responses.len() {
            let w = self.obs_weights[i];
            if w > 0.0 {
                let r = self.responses[i] - dot(self.design.row(i), coefficients);
                total += w * check_loss(self.tau, r);
            }
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Optimal, but alternative optima exist (zero reduced cost off-basis).
    Degenerate,
}

#[derive(Debug, Clone)]
pub struct QrSolution {
    pub coefficients: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
}

/// Simplex-constrained combination instance: choose w on the p-simplex
/// minimizing (1/n) sum_i rho_tau(y_i - M_i . w).
#[derive(Debug, Clone)]
pub struct SimplexWeightProblem {
    responses: Vec<f64>,
    prediction_matrix: Mat,
    tau: QuantileLevel,
}

impl SimplexWeightProblem {
    pub fn new(responses: Vec<f64>, prediction_matrix: Mat, tau: QuantileLevel) -> Result<Self> {
        let n = responses.len();
        if prediction_matrix.cols() == 0 {
            return Err(Error::EmptyCandidateSet);
        }
        if prediction_matrix.rows() != n || n == 0 {
            return Err(Error::ShapeMismatch {
                context: "prediction matrix rows vs responses",
                expected: n,
                got: prediction_matrix.rows(),
            });
        }
        if !responses.iter().all(|v| v.is_finite()) || !prediction_matrix.is_finite() {
            return Err(Error::NonFinite("simplex weight problem"));
        }
        Ok(SimplexWeightProblem {
            responses,
            prediction_matrix,
            tau,
        })
    }

    pub fn num_candidates(&self) -> usize {
        self.prediction_matrix.cols()
    }

    pub fn num_rows(&self) -> usize {
        self.responses.len()
    }

    pub fn tau(&self) -> QuantileLevel {
        self.tau
    }
}

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    const FEAS_TOL: f64 = 1e-10;

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyCandidateSet);
        }
        if weights.iter().any(|w| !w.is_finite() || *w < -Self::FEAS_TOL) {
            return Err(Error::NonFinite("weight vector must be nonnegative"));
        }
        let sum = kahan_sum(&weights);
        if (sum - 1.0).abs() > Self::FEAS_TOL {
            return Err(Error::Internal(format!(
                "weight vector sums to {sum}, expected 1"
            )));
        }
        Ok(WeightVector { weights })
    }

    /// Vertex e_s of the p-simplex.
    pub fn unit(p: usize, s: usize) -> Self {
        assert!(s < p);
        let mut w = vec![0.0; p];
        w[s] = 1.0;
        WeightVector { weights: w }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        WeightVector::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Vec<f64> {
        w.weights
    }
}

/// Dense simplex tableau over the split-residual LPs.
///
/// Twin columns are never stored: u- is the exact negation of u+ (likewise
/// beta-), so each stored column represents a +/- pair and the basis tracks
/// which sign is basic. The ratio test walks breakpoints long-step style,
/// flipping crossed residual rows to their twin (a cheap row negation plus a
/// cost-row shift) instead of spending a full pivot per breakpoint, the way
/// specialized check-loss simplex codes do.
struct Tableau {
    m: usize,
    ncols: usize,
    width: usize, // ncols + 1, the last column is the rhs
    rows: Vec<f64>,
    /// Reduced cost of each stored (+) column; last slot carries -objective.
    cost: Vec<f64>,
    /// Raw cost of each stored (+) column.
    craw: Vec<f64>,
    /// Cost of a column plus its twin (w_i for residual pairs, 0 for
    /// coefficient pairs, infinity when the column has no twin).
    pair_cost: Vec<f64>,
    basis_col: Vec<usize>,
    basis_sign: Vec<f64>,
    in_basis: Vec<bool>,
    scratch: Vec<f64>,
    breakpoints: Vec<(f64, usize, usize)>, // (theta, tie key, row)
    tol: f64,
}

impl Tableau {
    fn new(m: usize, ncols: usize, tol: f64) -> Self {
        let width = ncols + 1;
        Tableau {
            m,
            ncols,
            width,
            rows: vec![0.0; m * width],
            cost: vec![0.0; width],
            craw: vec![0.0; ncols],
            pair_cost: vec![f64::INFINITY; ncols],
            basis_col: vec![0; m],
            basis_sign: vec![1.0; m],
            in_basis: vec![false; ncols],
            scratch: vec![0.0; width],
            breakpoints: Vec::new(),
            tol,
        }
    }

    #[inline]
    fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.rows[i * self.width..(i + 1) * self.width]
    }

    fn set_basis(&mut self, row: usize, col: usize, sign: f64) {
        self.basis_col[row] = col;
        self.basis_sign[row] = sign;
        self.in_basis[col] = true;
    }

    /// Clean reduced cost of a basic column: 0 when its + side is basic,
    /// pair_cost when the twin is.
    #[inline]
    fn basic_cost(&self, row: usize) -> f64 {
        if self.basis_sign[row] > 0.0 {
            0.0
        } else {
            self.pair_cost[self.basis_col[row]]
        }
    }

    /// Recompute reduced costs for the current canonical basis.
    fn reduce_costs(&mut self) {
        self.cost[..self.ncols].copy_from_slice(&self.craw);
        self.cost[self.ncols] = 0.0;
        for i in 0..self.m {
            let col = self.basis_col[i];
            let cb = if self.basis_sign[i] > 0.0 {
                self.craw[col]
            } else {
                self.pair_cost[col] - self.craw[col]
            };
            if cb != 0.0 {
                let row = &self.rows[i * self.width..(i + 1) * self.width];
                for (c, r) in self.cost.iter_mut().zip(row) {
                    *c -= cb * r;
                }
            }
        }
        for i in 0..self.m {
            self.cost[self.basis_col[i]] = self.basic_cost(i);
        }
    }

    fn pivot(&mut self, r: usize, col: usize, sign: f64) {
        let width = self.width;
        let m = self.m;
        let enter_cost = if sign > 0.0 {
            self.cost[col]
        } else {
            self.pair_cost[col] - self.cost[col]
        };
        let rows = &mut self.rows;
        let scratch = &mut self.scratch;
        {
            let prow = &mut rows[r * width..(r + 1) * width];
            let factor = sign / prow[col];
            for v in prow.iter_mut() {
                *v *= factor;
            }
            prow[col] = sign;
            scratch.copy_from_slice(prow);
        }
        for i in 0..m {
            if i == r {
                continue;
            }
            let f = rows[i * width + col] * sign;
            if f != 0.0 {
                let row = &mut rows[i * width..(i + 1) * width];
                for (v, s) in row.iter_mut().zip(scratch.iter()) {
                    *v -= f * s;
                }
                row[col] = 0.0;
            }
        }
        if enter_cost != 0.0 {
            // scratch holds the stored pivot row normalized so the logical
            // entering entry is one; stored (+) costs shift by enter_cost
            // times that row, rhs slot included.
            for (v, s) in self.cost.iter_mut().zip(scratch.iter()) {
                *v -= enter_cost * s;
            }
        }
        self.in_basis[self.basis_col[r]] = false;
        self.set_basis(r, col, sign);
        self.cost[col] = self.basic_cost(r);
    }

    /// Swap the basic variable of row `k` for its sign twin: shift the cost
    /// row by pair_cost * row and negate the row. Leaves the tableau
    /// canonical for the flipped basis.
    fn flip_row(&mut self, k: usize) {
        let col = self.basis_col[k];
        let pc = self.pair_cost[col];
        debug_assert!(pc.is_finite());
        let width = self.width;
        {
            let (start, end) = (k * width, (k + 1) * width);
            if pc != 0.0 {
                let row = &self.rows[start..end];
                for (c, r) in self.cost.iter_mut().zip(row) {
                    *c += pc * r;
                }
            }
            let row = &mut self.rows[start..end];
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
        self.basis_sign[k] = -self.basis_sign[k];
        self.cost[col] = self.basic_cost(k);
    }

    /// Most negative reduced cost over both signs of every stored column;
    /// ties resolve to the lowest column, + before -.
    fn entering_dantzig(&self) -> Option<(usize, f64)> {
        let mut best = -self.tol;
        let mut pick = None;
        for j in 0..self.ncols {
            if self.in_basis[j] {
                continue;
            }
            let cp = self.cost[j];
            if cp < best {
                best = cp;
                pick = Some((j, 1.0));
            }
            let pc = self.pair_cost[j];
            if pc.is_finite() {
                let cm = pc - cp;
                if cm < best {
                    best = cm;
                    pick = Some((j, -1.0));
                }
            }
        }
        pick
    }

    fn entering_bland(&self) -> Option<(usize, f64)> {
        for j in 0..self.ncols {
            if self.in_basis[j] {
                continue;
            }
            if self.cost[j] < -self.tol {
                return Some((j, 1.0));
            }
            let pc = self.pair_cost[j];
            if pc.is_finite() && pc - self.cost[j] < -self.tol {
                return Some((j, -1.0));
            }
        }
        None
    }

    /// Plain min-ratio leaving row; ties resolve to the lowest basis key.
    fn leaving_single(&self, col: usize, sign: f64) -> Option<(usize, f64)> {
        let mut best_ratio = f64::INFINITY;
        let mut pick: Option<usize> = None;
        let mut pick_key = usize::MAX;
        for i in 0..self.m {
            let a = sign * self.rows[i * self.width + col];
            if a > PIVOT_MIN {
                let rhs = self.rows[i * self.width + self.ncols].max(0.0);
                let ratio = rhs / a;
                let key = self.basis_key(i);
                if ratio < best_ratio - 1e-12 || (ratio <= best_ratio + 1e-12 && key < pick_key) {
                    best_ratio = ratio.min(best_ratio);
                    pick = Some(i);
                    pick_key = key;
                }
            }
        }
        pick.map(|r| (r, best_ratio))
    }

    #[inline]
    fn basis_key(&self, row: usize) -> usize {
        2 * self.basis_col[row] + usize::from(self.basis_sign[row] < 0.0)
    }

    /// Long-step ratio test: walk the sorted breakpoints of the entering
    /// direction, flipping crossed rows to their twin basis while the
    /// directional derivative stays negative, then pivot at the blocking
    /// row. Returns the step length, or None when nothing blocks.
    fn long_step(&mut self, col: usize, sign: f64) -> Option<f64> {
        self.breakpoints.clear();
        for i in 0..self.m {
            let a = sign * self.rows[i * self.width + col];
            if a > PIVOT_MIN {
                let rhs = self.rows[i * self.width + self.ncols].max(0.0);
                self.breakpoints.push((rhs / a, self.basis_key(i), i));
            }
        }
        if self.breakpoints.is_empty() {
            return None;
        }
        self.breakpoints
            .sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());

        let mut g = if sign > 0.0 {
            self.cost[col]
        } else {
            self.pair_cost[col] - self.cost[col]
        };
        let mut pivot_row = None;
        let mut crossed_end = 0usize;
        for (idx, &(_, _, row)) in self.breakpoints.iter().enumerate() {
            let pc = self.pair_cost[self.basis_col[row]];
            let a = sign * self.rows[row * self.width + col];
            let is_last = idx + 1 == self.breakpoints.len();
            if !is_last && pc.is_finite() && g + pc * a < 0.0 {
                g += pc * a;
                crossed_end = idx + 1;
            } else {
                pivot_row = Some(row);
                break;
            }
        }
        let pivot_row = pivot_row?;
        let theta = {
            let a = sign * self.rows[pivot_row * self.width + col];
            self.rows[pivot_row * self.width + self.ncols].max(0.0) / a
        };
        for idx in 0..crossed_end {
            let row = self.breakpoints[idx].2;
            self.flip_row(row);
        }
        self.pivot(pivot_row, col, sign);
        Some(theta)
    }

    fn solve(&mut self) -> Result<()> {
        let mut stall = 0usize;
        let mut bland = false;
        loop {
            let theta = if bland {
                let Some((col, sign)) = self.entering_bland() else {
                    return Ok(());
                };
                let Some((row, theta)) = self.leaving_single(col, sign) else {
                    return Err(Error::Internal(
                        "LP reported unbounded; the check-loss objective is bounded below".into(),
                    ));
                };
                self.pivot(row, col, sign);
                theta
            } else {
                let Some((col, sign)) = self.entering_dantzig() else {
                    return Ok(());
                };
                let Some(theta) = self.long_step(col, sign) else {
                    return Err(Error::Internal(
                        "LP reported unbounded; the check-loss objective is bounded below".into(),
                    ));
                };
                theta
            };
            if theta <= 1e-13 {
                stall += 1;
                if stall > STALL_LIMIT {
                    bland = true;
                }
            } else {
                stall = 0;
                bland = false;
            }
        }
    }

    /// Net value of the +/- pair behind a stored column: rhs when the +
    /// side is basic, -rhs when the twin is, zero when nonbasic.
    fn signed_value(&self, col: usize) -> f64 {
        for i in 0..self.m {
            if self.basis_col[i] == col {
                let rhs = self.rows[i * self.width + self.ncols];
                return self.basis_sign[i] * rhs;
            }
        }
        0.0
    }

    /// Alternative optima exist when a nonbasic column (either sign) prices
    /// out to ~zero.
    fn has_zero_reduced_cost(&self) -> bool {
        for j in 0..self.ncols {
            if self.in_basis[j] {
                continue;
            }
            if self.cost[j].abs() <= self.tol {
                return true;
            }
            let pc = self.pair_cost[j];
            if pc.is_finite() && (pc - self.cost[j]).abs() <= self.tol {
                return true;
            }
        }
        false
    }
}

/// Minimize sum_i w_i rho_tau(y_i - x_i . beta) over free beta.
///
/// Optimality is certified by the simplex termination condition: every
/// reduced cost is >= -tol at the returned vertex. Deterministic for fixed
/// input.
pub fn solve_weighted_qr(problem: &WeightedQrProblem, tol: f64) -> Result<QrSolution> {
    assert!(tol > 0.0, "tolerance must be positive");
    let d = problem.design.cols();
    let tau = problem.tau.value();

    let kept: Vec<usize> = (0..problem.responses.len())
        .filter(|&i| problem.obs_weights[i] >= WEIGHT_DROP)
        .collect();
    let m = kept.len();
    if m < d {
        return Err(Error::UnderdeterminedLocalFit {
            positive: m,
            needed: d,
        });
    }

    // Normalize kept weights to mean one for uniform tolerance behaviour;
    // the true objective is recomputed from the coefficients afterwards.
    let wsum: f64 = kept.iter().map(|&i| problem.obs_weights[i]).sum();
    let wscale = m as f64 / wsum;

    // Stored columns: d coefficient pairs, then one residual pair per row.
    let ncols = d + m;
    let mut t = Tableau::new(m, ncols, tol);
    for j in 0..d {
        t.pair_cost[j] = 0.0;
    }
    for (k, &i) in kept.iter().enumerate() {
        let w = problem.obs_weights[i] * wscale;
        t.craw[d + k] = w * tau;
        t.pair_cost[d + k] = w;

        let y = problem.responses[i];
        let sign = if y < 0.0 { -1.0 } else { 1.0 };
        {
            let x = problem.design.row(i);
            let row = t.row_mut(k);
            for j in 0..d {
                row[j] = sign * x[j];
            }
            row[d + k] = sign;
            row[ncols] = sign * y;
        }
        t.set_basis(k, d + k, sign);
    }
    t.reduce_costs();
    t.solve()?;

    let mut coefficients = vec![0.0; d];
    for (j, c) in coefficients.iter_mut().enumerate() {
        *c = t.signed_value(j);
    }
    if !coefficients.iter().all(|v| v.is_finite()) {
        return Err(Error::Internal("non-finite QR coefficients".into()));
    }
    let objective = problem.objective_at(&coefficients);
    let status = if t.has_zero_reduced_cost() {
        SolveStatus::Degenerate
    } else {
        SolveStatus::Optimal
    };
    Ok(QrSolution {
        coefficients,
        objective,
        status,
    })
}

/// Minimize (1/n) sum_i rho_tau(y_i - M_i . w) over the probability simplex.
pub fn solve_simplex_weights(problem: &SimplexWeightProblem, tol: f64) -> Result<WeightVector> {
    assert!(tol > 0.0, "tolerance must be positive");
    let n = problem.num_rows();
    let p = problem.num_candidates();
    let tau = problem.tau.value();
    let m = &problem.prediction_matrix;

    // Stored columns: p simplex weights (no twin: they are plain >= 0
    // variables), then one residual pair per row.
    let ncols = p + n;
    let mut t = Tableau::new(n + 1, ncols, tol);
    for i in 0..n {
        t.craw[p + i] = tau;
        t.pair_cost[p + i] = 1.0;
    }

    // Sum-to-one row; w_0 starts basic there.
    {
        let row = t.row_mut(n);
        for j in 0..p {
            row[j] = 1.0;
        }
        row[ncols] = 1.0;
    }
    t.set_basis(n, 0, 1.0);

    for i in 0..n {
        // Residual row with w_0 eliminated against the sum row:
        // (M_is - M_i0) w_s + u_i = y_i - M_i0 for s >= 1.
        let rhs = problem.responses[i] - m.get(i, 0);
        let sign = if rhs < 0.0 { -1.0 } else { 1.0 };
        {
            let row = t.row_mut(i);
            row[0] = 0.0;
            for s in 1..p {
                row[s] = sign * (m.get(i, s) - m.get(i, 0));
            }
            row[p + i] = sign;
            row[ncols] = sign * rhs;
        }
        t.set_basis(i, p + i, sign);
    }
    t.reduce_costs();
    t.solve()?;

    let mut w = vec![0.0; p];
    for (s, v) in w.iter_mut().enumerate() {
        *v = t.signed_value(s);
    }
    WeightVector::new(w)
}

/// The cross-validation criterion (1/n) sum_i rho_tau(y_i - M_i . w).
pub fn evaluate_combination_loss(problem: &SimplexWeightProblem, w: &WeightVector) -> Result<f64> {
    let p = problem.num_candidates();
    if w.len() != p {
        return Err(Error::ShapeMismatch {
            context: "weight vector vs candidate count",
            expected: p,
            got: w.len(),
        });
    }
    let n = problem.num_rows();
    let mut total = 0.0;
    for i in 0..n {
        let fit = dot(problem.prediction_matrix.row(i), w.as_slice());
        total += check_loss(problem.tau, problem.responses[i] - fit);
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitRng;

    fn tau(t: f64) -> QuantileLevel {
        QuantileLevel::new(t).unwrap()
    }

    fn intercept_problem(y: &[f64], t: f64) -> WeightedQrProblem {
        let m = y.len();
        let design = Mat::from_vec(m, 1, vec![1.0; m]);
        WeightedQrProblem::new(y.to_vec(), design, vec![1.0; m], tau(t)).unwrap()
    }

    #[test]
    fn median_of_three() {
        let sol = solve_weighted_qr(&intercept_problem(&[1.0, 2.0, 3.0], 0.5), DEFAULT_TOL).unwrap();
        assert!((sol.coefficients[0] - 2.0).abs() < 1e-9);
        assert!((sol.objective - 1.0).abs() < 1e-9);
    }

    #[test]
    fn even_sample_lower_quartile_objective() {
        // tau = 0.25 on 1..4: every a in [1,2] is optimal with objective 1.5.
        let sol = solve_weighted_qr(&intercept_problem(&[1.0, 2.0, 3.0, 4.0], 0.25), DEFAULT_TOL)
            .unwrap();
        assert!((sol.objective - 1.5).abs() < 1e-9, "objective {}", sol.objective);
        let a = sol.coefficients[0];
        assert!((1.0 - 1e-9..=2.0 + 1e-9).contains(&a), "coefficient {a}");
        assert_eq!(sol.status, SolveStatus::Degenerate);
    }

    /// Exhaustive basic-solution oracle: try every support pattern and every
    /// interpolating row subset of that size.
    fn brute_force_objective(problem: &WeightedQrProblem, y: &[f64], x: &Mat, w: &[f64]) -> f64 {
        let m = y.len();
        let d = x.cols();
        let mut best = f64::INFINITY;
        // support subsets of the coefficient vector
        for support in 0u32..(1 << d) {
            let cols: Vec<usize> = (0..d).filter(|j| support & (1 << j) != 0).collect();
            let k = cols.len();
            let row_subsets = subsets_of_size(m, k);
            for rows in row_subsets {
                if let Some(beta_s) = solve_square(x, y, &rows, &cols) {
                    let mut beta = vec![0.0; d];
                    for (idx, &j) in cols.iter().enumerate() {
                        beta[j] = beta_s[idx];
                    }
                    if beta.iter().all(|v| v.is_finite()) {
                        let obj = problem.objective_at(&beta);
                        if obj < best {
                            best = obj;
                        }
                    }
                }
            }
            let _ = w;
        }
        best
    }

    fn subsets_of_size(m: usize, k: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = Vec::new();
        fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in start..m {
                cur.push(i);
                rec(i + 1, m, k, cur, out);
                cur.pop();
            }
        }
        rec(0, m, k, &mut cur, &mut out);
        out
    }

    /// Solve the k x k system interpolating the given rows on the given
    /// columns; None when singular.
    fn solve_square(x: &Mat, y: &[f64], rows: &[usize], cols: &[usize]) -> Option<Vec<f64>> {
        let k = rows.len();
        if k == 0 {
            return Some(vec![]);
        }
        let mut a = vec![0.0; k * k];
        let mut b = vec![0.0; k];
        for (r, &i) in rows.iter().enumerate() {
            for (c, &j) in cols.iter().enumerate() {
                a[r * k + c] = x.get(i, j);
            }
            b[r] = y[i];
        }
        // Gaussian elimination with partial pivoting
        for col in 0..k {
            let mut piv = col;
            for r in col + 1..k {
                if a[r * k + col].abs() > a[piv * k + col].abs() {
                    piv = r;
                }
            }
            if a[piv * k + col].abs() < 1e-10 {
                return None;
            }
            if piv != col {
                for j in 0..k {
                    a.swap(col * k + j, piv * k + j);
                }
                b.swap(col, piv);
            }
            for r in col + 1..k {
                let f = a[r * k + col] / a[col * k + col];
                if f != 0.0 {
                    for j in col..k {
                        a[r * k + j] -= f * a[col * k + j];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
        let mut sol = vec![0.0; k];
        for r in (0..k).rev() {
            let mut s = b[r];
            for j in r + 1..k {
                s -= a[r * k + j] * sol[j];
            }
            sol[r] = s / a[r * k + r];
        }
        Some(sol)
    }

    #[test]
    fn random_instances_match_basic_solution_oracle() {
        let mut rng = SplitRng::from_seed(2024);
        for trial in 0..60 {
            let m = 4 + (rng.next_u64() % 3) as usize; // 4..6
            let mut rows = Vec::new();
            let mut y = Vec::new();
            let mut w = Vec::new();
            for _ in 0..m {
                rows.push(vec![1.0, rng.standard_normal()]);
                y.push(2.0 * rng.standard_normal());
                w.push(0.2 + 1.8 * rng.uniform());
            }
            let x = Mat::from_rows(&rows);
            let t = 0.1 + 0.8 * rng.uniform();
            let problem =
                WeightedQrProblem::new(y.clone(), x.clone(), w.clone(), tau(t)).unwrap();
            let sol = solve_weighted_qr(&problem, DEFAULT_TOL).unwrap();
            let oracle = brute_force_objective(&problem, &y, &x, &w);
            assert!(
                (sol.objective - oracle).abs() < 1e-8,
                "trial {trial}: solver {} vs oracle {}",
                sol.objective,
                oracle
            );
        }
    }

    #[test]
    fn intercept_only_reaches_breakpoint_optimum() {
        let mut rng = SplitRng::from_seed(99);
        for _ in 0..50 {
            let m = 5 + (rng.next_u64() % 8) as usize;
            let y: Vec<f64> = (0..m).map(|_| 3.0 * rng.standard_normal()).collect();
            let k = 1 + (rng.next_u64() % 9) as usize;
            let t = tau(k as f64 / 10.0);
            let problem = intercept_problem(&y, t.value());
            let sol = solve_weighted_qr(&problem, DEFAULT_TOL).unwrap();
            let best_breakpoint = y
                .iter()
                .map(|&a| problem.objective_at(&[a]))
                .fold(f64::INFINITY, f64::min);
            assert!(
                sol.objective <= best_breakpoint + 1e-9,
                "objective {} vs breakpoint best {}",
                sol.objective,
                best_breakpoint
            );
        }
    }

    #[test]
    fn underdetermined_is_rejected() {
        let design = Mat::from_rows(&[vec![1.0, 0.5], vec![1.0, -0.5], vec![1.0, 0.1]]);
        // only one positive weight for two parameters
        let err = WeightedQrProblem::new(
            vec![1.0, 2.0, 3.0],
            design,
            vec![1.0, 0.0, 0.0],
            tau(0.5),
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnderdeterminedLocalFit { .. }));
    }

    #[test]
    fn tiny_weights_are_dropped_before_solving() {
        let design = Mat::from_rows(&[vec![1.0], vec![1.0], vec![1.0], vec![1.0]]);
        let problem = WeightedQrProblem::new(
            vec![1.0, 2.0, 3.0, 1000.0],
            design,
            vec![1.0, 1.0, 1.0, 1e-13],
            tau(0.5),
        )
        .unwrap();
        let sol = solve_weighted_qr(&problem, DEFAULT_TOL).unwrap();
        // the huge response carries a sub-threshold weight: median of 1,2,3
        assert!((sol.coefficients[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn scale_equivariance() {
        let mut rng = SplitRng::from_seed(4);
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|_| vec![1.0, rng.standard_normal(), rng.standard_normal()])
            .collect();
        let y: Vec<f64> = (0..12).map(|_| rng.standard_normal()).collect();
        let w: Vec<f64> = (0..12).map(|_| 0.5 + rng.uniform()).collect();
        let x = Mat::from_rows(&rows);
        let t = tau(0.3);
        let c = 3.75;

        let base = solve_weighted_qr(
            &WeightedQrProblem::new(y.clone(), x.clone(), w.clone(), t).unwrap(),
            DEFAULT_TOL,
        )
        .unwrap();

        // scale y only: objective and coefficients scale by c
        let scaled_y: Vec<f64> = y.iter().map(|v| c * v).collect();
        let sy = solve_weighted_qr(
            &WeightedQrProblem::new(scaled_y.clone(), x.clone(), w.clone(), t).unwrap(),
            DEFAULT_TOL,
        )
        .unwrap();
        assert!((sy.objective - c * base.objective).abs() < 1e-8 * (1.0 + base.objective));

        // scale y and design together: objective scales by c, argmin unchanged
        let scaled_rows: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|v| c * v).collect())
            .collect();
        let sx = solve_weighted_qr(
            &WeightedQrProblem::new(scaled_y, Mat::from_rows(&scaled_rows), w, t).unwrap(),
            DEFAULT_TOL,
        )
        .unwrap();
        assert!((sx.objective - c * base.objective).abs() < 1e-8 * (1.0 + base.objective));
    }

    fn simplex_grid(p3_steps: usize) -> Vec<Vec<f64>> {
        // all (i, j, k) / steps with i + j + k = steps
        let s = p3_steps;
        let mut out = Vec::new();
        for i in 0..=s {
            for j in 0..=(s - i) {
                let k = s - i - j;
                out.push(vec![
                    i as f64 / s as f64,
                    j as f64 / s as f64,
                    k as f64 / s as f64,
                ]);
            }
        }
        out
    }

    #[test]
    fn perfect_column_gets_all_weight() {
        let y = vec![1.0, -0.5, 2.0, 0.25];
        let mut m = Mat::zeros(4, 3);
        for i in 0..4 {
            m.set(i, 0, y[i]);
            m.set(i, 1, y[i] + 1.0);
            m.set(i, 2, -y[i]);
        }
        let problem = SimplexWeightProblem::new(y, m, tau(0.5)).unwrap();
        let w = solve_simplex_weights(&problem, DEFAULT_TOL).unwrap();
        assert!((w.as_slice()[0] - 1.0).abs() < 1e-9, "{:?}", w.as_slice());
        let obj = evaluate_combination_loss(&problem, &w).unwrap();
        assert!(obj.abs() < 1e-12);
    }

    #[test]
    fn identical_columns_objective_matches_single_column() {
        let y = vec![0.4, -1.0, 2.0, 0.0, 1.3];
        let col = [0.1, -0.2, 1.5, 0.3, 1.0];
        let mut m = Mat::zeros(5, 3);
        for i in 0..5 {
            for s in 0..3 {
                m.set(i, s, col[i]);
            }
        }
        let problem = SimplexWeightProblem::new(y.clone(), m, tau(0.3)).unwrap();
        let w = solve_simplex_weights(&problem, DEFAULT_TOL).unwrap();
        let single = SimplexWeightProblem::new(
            y,
            Mat::from_vec(5, 1, col.to_vec()),
            tau(0.3),
        )
        .unwrap();
        let w1 = WeightVector::unit(1, 0);
        let via_single = evaluate_combination_loss(&single, &w1).unwrap();
        let via_avg = evaluate_combination_loss(&problem, &w).unwrap();
        assert!((via_avg - via_single).abs() < 1e-12);
    }

    #[test]
    fn random_simplex_instances_beat_grid_oracle() {
        let mut rng = SplitRng::from_seed(512);
        let grid = simplex_grid(100);
        for trial in 0..12 {
            let n = 20;
            let y: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
            let mut m = Mat::zeros(n, 3);
            for i in 0..n {
                for s in 0..3 {
                    m.set(i, s, y[i] + rng.standard_normal());
                }
            }
            let t = tau(0.1 + 0.8 * rng.uniform());
            let problem = SimplexWeightProblem::new(y, m, t).unwrap();
            let w = solve_simplex_weights(&problem, DEFAULT_TOL).unwrap();
            let lp = evaluate_combination_loss(&problem, &w).unwrap();
            let grid_best = grid
                .iter()
                .map(|g| {
                    let gv = WeightVector::new(g.clone()).unwrap();
                    evaluate_combination_loss(&problem, &gv).unwrap()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(
                lp <= grid_best + 1e-6,
                "trial {trial}: lp {lp} vs grid {grid_best}"
            );
        }
    }

    #[test]
    fn simplex_weights_permutation_invariant() {
        let mut rng = SplitRng::from_seed(8);
        let n = 25;
        let y: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let mut m = Mat::zeros(n, 3);
        for i in 0..n {
            for s in 0..3 {
                m.set(i, s, y[i] + 0.5 * rng.standard_normal());
            }
        }
        let t = tau(0.4);
        let problem = SimplexWeightProblem::new(y.clone(), m.clone(), t).unwrap();
        let w = solve_simplex_weights(&problem, DEFAULT_TOL).unwrap();
        let obj = evaluate_combination_loss(&problem, &w).unwrap();

        // rotate columns by one
        let perm = [1usize, 2, 0];
        let mut mp = Mat::zeros(n, 3);
        for i in 0..n {
            for s in 0..3 {
                mp.set(i, s, m.get(i, perm[s]));
            }
        }
        let permuted = SimplexWeightProblem::new(y, mp, t).unwrap();
        let wp = solve_simplex_weights(&permuted, DEFAULT_TOL).unwrap();
        let objp = evaluate_combination_loss(&permuted, &wp).unwrap();
        assert!((obj - objp).abs() < 1e-10);
        for s in 0..3 {
            assert!(
                (w.as_slice()[perm[s]] - wp.as_slice()[s]).abs() < 1e-6,
                "weights {:?} vs permuted {:?}",
                w.as_slice(),
                wp.as_slice()
            );
        }
    }

    #[test]
    fn vertex_coordinate_perturbations_do_not_improve() {
        let mut rng = SplitRng::from_seed(64);
        let n = 30;
        let y: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let mut m = Mat::zeros(n, 3);
        for i in 0..n {
            for s in 0..3 {
                m.set(i, s, y[i] + rng.standard_normal());
            }
        }
        let problem = SimplexWeightProblem::new(y, m, tau(0.5)).unwrap();
        let w = solve_simplex_weights(&problem, DEFAULT_TOL).unwrap();
        let obj = evaluate_combination_loss(&problem, &w).unwrap();
        let step = 1e-4;
        for from in 0..3 {
            for to in 0..3 {
                if from == to || w.as_slice()[from] < step {
                    continue;
                }
                let mut v = w.as_slice().to_vec();
                v[from] -= step;
                v[to] += step;
                let moved = WeightVector::new(v).unwrap();
                let perturbed = evaluate_combination_loss(&problem, &moved).unwrap();
                assert!(perturbed >= obj - 1e-9);
            }
        }
    }

    #[test]
    fn qr_coefficient_perturbations_do_not_improve() {
        let mut rng = SplitRng::from_seed(321);
        let m = 25;
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| vec![1.0, rng.standard_normal(), rng.standard_normal()])
            .collect();
        let y: Vec<f64> = (0..m).map(|_| rng.standard_normal()).collect();
        let w: Vec<f64> = (0..m).map(|_| 0.3 + rng.uniform()).collect();
        let problem =
            WeightedQrProblem::new(y, Mat::from_rows(&rows), w, tau(0.35)).unwrap();
        let sol = solve_weighted_qr(&problem, DEFAULT_TOL).unwrap();
        for j in 0..3 {
            for delta in [1e-4, -1e-4] {
                let mut beta = sol.coefficients.clone();
                beta[j] += delta;
                assert!(problem.objective_at(&beta) >= sol.objective - 1e-9);
            }
        }
    }

    #[test]
    fn combination_loss_examples() {
        let y = vec![1.0, -1.0];
        let m = Mat::zeros(2, 2);
        let problem = SimplexWeightProblem::new(y, m, tau(0.5)).unwrap();
        let w = WeightVector::new(vec![0.25, 0.75]).unwrap();
        let loss = evaluate_combination_loss(&problem, &w).unwrap();
        assert!((loss - 0.5).abs() < 1e-15);

        // shape error
        let bad = WeightVector::new(vec![1.0]).unwrap();
        assert!(evaluate_combination_loss(&problem, &bad).is_err());
    }

    #[test]
    fn combination_loss_matches_naive_loop() {
        let mut rng = SplitRng::from_seed(1234);
        let n = 17;
        let p = 4;
        let y: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let mut m = Mat::zeros(n, p);
        for i in 0..n {
            for s in 0..p {
                m.set(i, s, rng.standard_normal());
            }
        }
        let mut raw: Vec<f64> = (0..p).map(|_| rng.uniform() + 0.01).collect();
        let sum: f64 = raw.iter().sum();
        raw.iter_mut().for_each(|v| *v /= sum);
        let t = tau(0.7);
        let problem = SimplexWeightProblem::new(y.clone(), m.clone(), t).unwrap();
        let w = WeightVector::new(raw.clone()).unwrap();
        let fast = evaluate_combination_loss(&problem, &w).unwrap();

        let mut naive = 0.0;
        for i in 0..n {
            let mut fit = 0.0;
            for s in 0..p {
                fit += m.get(i, s) * raw[s];
            }
            naive += check_loss(t, y[i] - fit);
        }
        naive /= n as f64;
        assert!((fast - naive).abs() < 1e-12);
    }

    #[test]
    fn empty_candidate_set_rejected() {
        let err = SimplexWeightProblem::new(vec![1.0], Mat::zeros(1, 0), tau(0.5)).unwrap_err();
        assert!(matches!(err, Error::EmptyCandidateSet));
    }
}
