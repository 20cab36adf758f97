//! Ridge regression with generalized cross-validation over a penalty grid.
//!
//! One thin SVD of the (centered) design serves every grid point and every
//! output column: with `Xc = U S Vᵀ`, the fit is `W = V diag(s/(s²+λ)) Uᵀ Yc`
//! and the hat matrix is `U diag(s²/(s²+λ)) Uᵀ` (plus `11ᵀ/n` for the
//! intercept).

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prep::NormalizationStats;

/// Singular values below `SVD_RTOL * s_max` are treated as zero.
const SVD_RTOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LambdaGrid(Vec<f64>);

impl LambdaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("lambda grid is empty"));
        }
        if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("lambda grid values must be positive and finite"));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("lambda grid must be strictly increasing"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl Default for LambdaGrid {
    /// Decades from 0.1 to 1000.
    fn default() -> Self {
        Self(vec![0.1, 1.0, 10.0, 100.0, 1000.0])
    }
}

impl TryFrom<Vec<f64>> for LambdaGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LambdaGrid> for Vec<f64> {
    fn from(g: LambdaGrid) -> Self {
        g.0
    }
}

/// Whether GCV picks one penalty for all outputs or one per output column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaSelection {
    #[default]
    Shared,
    PerTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcvReport {
    pub lambdas: Vec<f64>,
    /// GCV averaged over output columns, one per grid value.
    pub scores: Vec<f64>,
    /// tr(A(λ)) per grid value.
    pub effective_df: Vec<f64>,
    pub selected_index: usize,
    pub selected: f64,
}

/// Fitted linear map `ŷ = x·W + b`, optionally wrapped in input and output
/// z-scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    #[serde(skip)]
    pub weights: DMatrix<f64>,
    pub intercept: Vec<f64>,
    /// Penalty; 0 marks an ordinary least squares (pseudo-inverse) fit.
    pub lambda: f64,
    pub input_norm: Option<NormalizationStats>,
    pub output_norm: Option<NormalizationStats>,
}

impl RidgeModel {
    pub fn d_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.weights.ncols()
    }

    pub fn with_normalization(mut self, input: Option<NormalizationStats>, output: Option<NormalizationStats>) -> Self {
        self.input_norm = input;
        self.output_norm = output;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RidgeOptions {
    pub fit_intercept: bool,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        Self { fit_intercept: true }
    }
}

fn check_finite(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "{name} has a non-finite entry at column-major index {pos}"
        )));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(())
}

/// Factorized design ready to be solved for any penalty and any targets.
#[derive(Debug, Clone)]
pub struct RidgeSolver {
    u: DMatrix<f64>,
    s: DVector<f64>,
    v: DMatrix<f64>,
    x_mean: DVector<f64>,
    sqrt_w: Option<DVector<f64>>,
    w_sum: f64,
    n: usize,
    fit_intercept: bool,
}

impl RidgeSolver {
    pub fn new(x: &DMatrix<f64>, opts: RidgeOptions) -> Result<Self> {
        Self::build(x, None, opts)
    }

    /// Weighted least squares: row `i` contributes `weights[i]` times to the
    /// loss and to the centering means.
    pub fn weighted(x: &DMatrix<f64>, weights: &[f64], opts: RidgeOptions) -> Result<Self> {
        if weights.len() != x.nrows() {
            return Err(Error::shape("sample weights", x.nrows(), weights.len()));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::invalid("sample weights must be positive and finite"));
        }
        Self::build(x, Some(weights), opts)
    }

    fn build(x: &DMatrix<f64>, weights: Option<&[f64]>, opts: RidgeOptions) -> Result<Self> {
        let (n, d) = x.shape();
        if n == 0 || d == 0 {
            return Err(Error::shape("design matrix", "n >= 1 and d >= 1", format!("{n}x{d}")));
        }
        check_finite("X", x)?;
        let w: Vec<f64> = weights.map_or_else(|| vec![1.0; n], <[f64]>::to_vec);
        let w_sum: f64 = w.iter().sum();
        let mut x_mean = DVector::zeros(d);
        if opts.fit_intercept {
            for j in 0..d {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += w[i] * x[(i, j)];
                }
                x_mean[j] = acc / w_sum;
            }
        }
        let sqrt_w = weights.map(|_| DVector::from_iterator(n, w.iter().map(|v| v.sqrt())));
        let mut xc = x.clone();
        for i in 0..n {
            let sw = sqrt_w.as_ref().map_or(1.0, |s| s[i]);
            for j in 0..d {
                xc[(i, j)] = (xc[(i, j)] - x_mean[j]) * sw;
            }
        }
        let svd =
            SVD::try_new(xc, true, true, f64::EPSILON, 0).ok_or_else(|| Error::numeric("SVD did not converge"))?;
        let u = svd.u.ok_or_else(|| Error::numeric("SVD returned no U"))?;
        let v_t = svd.v_t.ok_or_else(|| Error::numeric("SVD returned no Vᵀ"))?;
        let mut s = svd.singular_values;
        let s_max = s.iter().cloned().fold(0.0, f64::max);
        for v in s.iter_mut() {
            if *v <= SVD_RTOL * s_max {
                *v = 0.0;
            }
        }
        Ok(Self {
            u,
            s,
            v: v_t.transpose(),
            x_mean,
            sqrt_w,
            w_sum,
            n,
            fit_intercept: opts.fit_intercept,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d_in(&self) -> usize {
        self.v.nrows()
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.s
    }

    /// Weighted column means of `y` (zero without intercept) and the centered,
    /// weight-scaled targets.
    fn center_targets(&self, y: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if y.nrows() != self.n {
            return Err(Error::shape("target rows", self.n, y.nrows()));
        }
        check_finite("Y", y)?;
        let q = y.ncols();
        let mut y_mean = DVector::zeros(q);
        if self.fit_intercept {
            for j in 0..q {
                let mut acc = 0.0;
                for i in 0..self.n {
                    let wi = self.sqrt_w.as_ref().map_or(1.0, |s| s[i] * s[i]);
                    acc += wi * y[(i, j)];
                }
                y_mean[j] = acc / self.w_sum;
            }
        }
        let mut yc = y.clone();
        for i in 0..self.n {
            let sw = self.sqrt_w.as_ref().map_or(1.0, |s| s[i]);
            for j in 0..q {
                yc[(i, j)] = (yc[(i, j)] - y_mean[j]) * sw;
            }
        }
        Ok((y_mean, yc))
    }

    fn shrink_factors(&self, lambda: f64) -> DVector<f64> {
        self.s.map(|s| if s == 0.0 { 0.0 } else { s / (s * s + lambda) })
    }

    fn hat_factors(&self, lambda: f64) -> DVector<f64> {
        self.s.map(|s| if s == 0.0 { 0.0 } else { s * s / (s * s + lambda) })
    }

    /// tr(A(λ)) of the full smoother, intercept included.
    pub fn effective_df(&self, lambda: f64) -> f64 {
        let base = if self.fit_intercept { 1.0 } else { 0.0 };
        base + self.hat_factors(lambda).sum()
    }

    pub fn solve(&self, y: &DMatrix<f64>, lambda: f64) -> Result<RidgeModel> {
        check_lambda(lambda)?;
        let (y_mean, yc) = self.center_targets(y)?;
        let uty = self.u.transpose() * &yc;
        let f = self.shrink_factors(lambda);
        let mut scaled = uty;
        for (i, fi) in f.iter().enumerate() {
            scaled.row_mut(i).scale_mut(*fi);
        }
        let weights = &self.v * scaled;
        let shift = weights.transpose() * &self.x_mean;
        let intercept: Vec<f64> = (0..y.ncols()).map(|j| y_mean[j] - shift[j]).collect();
        if weights.iter().chain(intercept.iter()).any(|v| !v.is_finite()) {
            return Err(Error::numeric("ridge solution is not finite"));
        }
        Ok(RidgeModel {
            weights,
            intercept,
            lambda,
            input_norm: None,
            output_norm: None,
        })
    }

    /// GCV per output column for each penalty, from one projection of the
    /// targets onto the left singular vectors.
    pub fn gcv_columns(&self, y: &DMatrix<f64>, lambdas: &[f64]) -> Result<Vec<Vec<f64>>> {
        let (_, yc) = self.center_targets(y)?;
        let uty = self.u.transpose() * &yc;
        let proj = &self.u * &uty;
        let q = yc.ncols();
        let k = self.s.len();
        let perp: Vec<f64> = (0..q)
            .map(|j| {
                let mut acc = 0.0;
                for i in 0..self.n {
                    let r = yc[(i, j)] - proj[(i, j)];
                    acc += r * r;
                }
                acc
            })
            .collect();
        let n = self.n as f64;
        let dof_base = if self.fit_intercept { n - 1.0 } else { n };
        let mut out = Vec::with_capacity(lambdas.len());
        for &lambda in lambdas {
            check_lambda(lambda)?;
            let h = self.hat_factors(lambda);
            let trace = dof_base - h.sum();
            let denom = (trace / n).powi(2);
            let scores = (0..q)
                .map(|j| {
                    let mut rss = perp[j];
                    for i in 0..k {
                        let c = (1.0 - h[i]) * uty[(i, j)];
                        rss += c * c;
                    }
                    if trace <= 1e-12 * n {
                        f64::NAN
                    } else {
                        (rss / n) / denom
                    }
                })
                .collect();
            out.push(scores);
        }
        Ok(out)
    }

    /// Pick one shared penalty minimizing the mean GCV over all outputs.
    /// Ties resolve to the smallest penalty.
    pub fn select(&self, y: &DMatrix<f64>, grid: &LambdaGrid) -> Result<GcvReport> {
        let cols = self.gcv_columns(y, grid.values())?;
        let scores: Vec<f64> = cols
            .iter()
            .map(|c| c.iter().sum::<f64>() / c.len().max(1) as f64)
            .collect();
        let mut best: Option<usize> = None;
        for (i, s) in scores.iter().enumerate() {
            if !s.is_finite() {
                continue;
            }
            if best.is_none_or(|b| *s < scores[b]) {
                best = Some(i);
            }
        }
        let idx = best.ok_or_else(|| Error::numeric("no finite GCV score on the grid"))?;
        Ok(GcvReport {
            lambdas: grid.values().to_vec(),
            effective_df: grid.values().iter().map(|&l| self.effective_df(l)).collect(),
            scores,
            selected_index: idx,
            selected: grid.values()[idx],
        })
    }
}

impl RidgeSolver {
    /// Grid value minimizing each output column's own GCV; ties resolve to
    /// the smallest penalty.
    pub fn select_per_target(&self, y: &DMatrix<f64>, grid: &LambdaGrid) -> Result<Vec<f64>> {
        let cols = self.gcv_columns(y, grid.values())?;
        (0..y.ncols())
            .map(|j| {
                let mut best: Option<usize> = None;
                for (i, c) in cols.iter().enumerate() {
                    if c[j].is_finite() && best.is_none_or(|b| c[j] < cols[b][j]) {
                        best = Some(i);
                    }
                }
                best.map(|i| grid.values()[i])
                    .ok_or_else(|| Error::numeric(format!("no finite GCV score for output {j}")))
            })
            .collect()
    }

    /// Solve each output column at its own penalty. The model's `lambda` is
    /// the mean of `lambdas`.
    pub fn solve_per_target(&self, y: &DMatrix<f64>, lambdas: &[f64]) -> Result<RidgeModel> {
        if lambdas.len() != y.ncols() {
            return Err(Error::shape("per-target penalties", y.ncols(), lambdas.len()));
        }
        let mut weights = DMatrix::zeros(self.d_in(), y.ncols());
        let mut intercept = Vec::with_capacity(y.ncols());
        for (j, &lambda) in lambdas.iter().enumerate() {
            let m = self.solve(&y.columns(j, 1).into_owned(), lambda)?;
            weights.set_column(j, &m.weights.column(0));
            intercept.push(m.intercept[0]);
        }
        Ok(RidgeModel {
            weights,
            intercept,
            lambda: lambdas.iter().sum::<f64>() / lambdas.len().max(1) as f64,
            input_norm: None,
            output_norm: None,
        })
    }

    /// Select by GCV under `mode` and fit. Returns the model with the chosen
    /// penalty per output column.
    pub fn fit_selected(
        &self,
        y: &DMatrix<f64>,
        grid: &LambdaGrid,
        mode: LambdaSelection,
    ) -> Result<(RidgeModel, Vec<f64>)> {
        match mode {
            LambdaSelection::Shared => {
                let lambda = self.select(y, grid)?.selected;
                Ok((self.solve(y, lambda)?, vec![lambda; y.ncols()]))
            }
            LambdaSelection::PerTarget => {
                let lambdas = self.select_per_target(y, grid)?;
                Ok((self.solve_per_target(y, &lambdas)?, lambdas))
            }
        }
    }
}

/// Fit with an intercept (column centering).
pub fn fit(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<RidgeModel> {
    fit_with(x, y, lambda, RidgeOptions::default())
}

pub fn fit_with(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64, opts: RidgeOptions) -> Result<RidgeModel> {
    check_lambda(lambda)?;
    if x.nrows() != y.nrows() {
        return Err(Error::shape("X/Y rows", x.nrows(), y.nrows()));
    }
    RidgeSolver::new(x, opts)?.solve(y, lambda)
}

/// GCV of a single target on the design exactly as given (no centering).
/// Fails when tr(I - A) vanishes.
pub fn gcv_score(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<f64> {
    if x.nrows() != y.len() {
        return Err(Error::shape("X/y rows", x.nrows(), y.len()));
    }
    let solver = RidgeSolver::new(x, RidgeOptions { fit_intercept: false })?;
    let ym = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
    let score = solver.gcv_columns(&ym, &[lambda])?[0][0];
    if !score.is_finite() {
        return Err(Error::numeric(format!("tr(I - A) is zero at lambda = {lambda}")));
    }
    Ok(score)
}

/// Shared-penalty selection with intercept (centered) GCV.
pub fn select_lambda(x: &DMatrix<f64>, y: &DMatrix<f64>, grid: &LambdaGrid) -> Result<GcvReport> {
    if x.nrows() != y.nrows() {
        return Err(Error::shape("X/Y rows", x.nrows(), y.nrows()));
    }
    RidgeSolver::new(x, RidgeOptions::default())?.select(y, grid)
}

/// Select the penalty by GCV and fit at it, sharing one factorization.
pub fn fit_gcv(x: &DMatrix<f64>, y: &DMatrix<f64>, grid: &LambdaGrid) -> Result<(RidgeModel, GcvReport)> {
    if x.nrows() != y.nrows() {
        return Err(Error::shape("X/Y rows", x.nrows(), y.nrows()));
    }
    let solver = RidgeSolver::new(x, RidgeOptions::default())?;
    let report = solver.select(y, grid)?;
    let model = solver.solve(y, report.selected)?;
    Ok((model, report))
}

/// `ŷ = x·W + b`, with the model's normalization applied around it when
/// present.
pub fn predict(model: &RidgeModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != model.d_in() {
        return Err(Error::shape("predict input width", model.d_in(), x.ncols()));
    }
    check_finite("X", x)?;
    let xin = match &model.input_norm {
        Some(stats) => stats.apply(x)?,
        None => x.clone(),
    };
    let mut out = xin * &model.weights;
    for mut row in out.row_iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v += model.intercept[j];
        }
    }
    match &model.output_norm {
        Some(stats) => stats.invert(&out),
        None => Ok(out),
    }
}
