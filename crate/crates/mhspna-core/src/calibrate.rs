//! Weighted ridge calibration against observed counts, penalty selection by
//! repeated k-fold cross-validation, and the three prediction modes (null,
//! incremental, direct) with r² / GEH evaluation.
//!
//! Observations are weighted by y^(lambda_w - 1): exponent 1 minimizes
//! absolute error, 0 relative error. The ridge penalty lambda_r acts on
//! coefficients of standardized predictors (centered, unit population std);
//! the intercept is never penalized. Reported standardized coefficients
//! satisfy stdcoeff = coeff * std exactly.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::betweenness::{run_single, AnalysisSpec, ColumnId, FlowField};
use crate::error::CalibrateError;
use crate::linalg;
use crate::math;
use crate::metric::MetricParams;
use crate::network::{CountPoint, LinkIdx, SpatialNetwork};
use crate::rng::{mix64, Rng};

/// Design matrix: one row per count point, one column per flow field.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    /// Row-major n*p predictor values.
    pub x: Vec<f64>,
    /// Observed flows, all positive.
    pub y: Vec<f64>,
    pub columns: Vec<ColumnId>,
    pub point_ids: Vec<String>,
    /// Link each point is attached to, aligned with rows.
    pub links: Vec<LinkIdx>,
    /// Population column means and standard deviations over all rows.
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl DesignMatrix {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.x[row * self.columns.len() + col]
    }

    pub fn constant_columns(&self) -> Vec<bool> {
        self.stds.iter().map(|&s| s == 0.0).collect()
    }
}

/// Samples every field at every point's link for one observation year.
pub fn assemble_design(
    fields: &[FlowField],
    points: &[CountPoint],
    year: &str,
) -> Result<DesignMatrix, CalibrateError> {
    if fields.is_empty() || points.is_empty() {
        return Err(CalibrateError::EmptyDesign);
    }
    let p = fields.len();
    for (i, f) in fields.iter().enumerate() {
        for g in &fields[i + 1..] {
            if f.column == g.column {
                return Err(CalibrateError::ColumnMismatch {
                    detail: format!("duplicate field {}", f.column.label()),
                });
            }
        }
    }
    let mut x = Vec::with_capacity(points.len() * p);
    let mut y = Vec::with_capacity(points.len());
    let mut point_ids = Vec::with_capacity(points.len());
    let mut links = Vec::with_capacity(points.len());
    for pt in points {
        let obs = *pt
            .observations
            .get(year)
            .ok_or_else(|| CalibrateError::MissingObservation {
                point: pt.id.clone(),
                year: year.to_string(),
            })?;
        if !(obs > 0.0 && obs.is_finite()) {
            return Err(CalibrateError::NonPositiveCount { point: pt.id.clone(), value: obs });
        }
        for f in fields {
            let v = f.values.get(pt.link).copied().ok_or_else(|| {
                CalibrateError::MissingColumnValue {
                    link: format!("{} (point {})", pt.link, pt.id),
                }
            })?;
            x.push(v);
        }
        y.push(obs);
        point_ids.push(pt.id.clone());
        links.push(pt.link);
    }
    let n = y.len();
    let mut means = vec![0.0f64; p];
    let mut stds = vec![0.0f64; p];
    for j in 0..p {
        let mut m = 0.0;
        for i in 0..n {
            m += x[i * p + j];
        }
        m /= n as f64;
        let mut v = 0.0;
        for i in 0..n {
            let d = x[i * p + j] - m;
            v += d * d;
        }
        means[j] = m;
        stds[j] = math::sqrt(v / n as f64);
    }
    Ok(DesignMatrix { x, y, columns: fields.iter().map(|f| f.column.clone()).collect(), point_ids, links, means, stds })
}

/// Per-observation weights y^(lambda_w - 1) together with the exponent that
/// produced them, so downstream fits record a consistent lambda_w.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationWeights {
    pub lambda_w: f64,
    pub values: Vec<f64>,
}

pub fn observation_weights(y: &[f64], lambda_w: f64) -> Result<ObservationWeights, CalibrateError> {
    if !(lambda_w >= 0.0 && lambda_w <= 1.0) {
        return Err(CalibrateError::InvalidWeightExponent { value: lambda_w });
    }
    let mut values = Vec::with_capacity(y.len());
    for (i, &v) in y.iter().enumerate() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(CalibrateError::NonPositiveCount { point: format!("row {i}"), value: v });
        }
        values.push(math::powf(v, lambda_w - 1.0));
    }
    Ok(ObservationWeights { lambda_w, values })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    /// Include an (unpenalized) intercept. Off also disables centering so the
    /// raw model truly has no constant term.
    pub intercept: bool,
    /// Clip coefficients at zero via coordinate descent.
    pub nonnegative: bool,
    /// Columns forced out of the model (coefficient 0).
    pub exclude: Vec<ColumnId>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { intercept: true, nonnegative: false, exclude: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelColumn {
    pub column: ColumnId,
    pub coeff: f64,
    pub mean: f64,
    pub std: f64,
    /// Always coeff * std, bit-exactly.
    pub stdcoeff: f64,
    /// Zero variance in the calibration data; coefficient forced to 0.
    pub constant: bool,
    /// Manually excluded; coefficient forced to 0.
    pub excluded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibratedModel {
    pub intercept: f64,
    pub columns: Vec<ModelColumn>,
    pub lambda_w: f64,
    pub lambda_r: f64,
    pub cv_r2: Option<f64>,
    /// Metric and analyses the flow fields came from; informational, filled
    /// by the pipeline so a model file is self-describing.
    pub metric: MetricParams,
    pub specs: Vec<AnalysisSpec>,
}

impl CalibratedModel {
    pub fn coefficient(&self, column: &ColumnId) -> Option<f64> {
        self.columns.iter().find(|c| &c.column == column).map(|c| c.coeff)
    }

    pub fn with_context(mut self, metric: MetricParams, specs: Vec<AnalysisSpec>) -> Self {
        self.metric = metric;
        self.specs = specs;
        self
    }

    /// In-sample fitted values; design columns are matched by id.
    pub fn fitted_values(&self, x: &DesignMatrix) -> Result<Vec<f64>, CalibrateError> {
        let mut idx = Vec::with_capacity(self.columns.len());
        for mc in &self.columns {
            match x.columns.iter().position(|c| c == &mc.column) {
                Some(j) => idx.push(Some(j)),
                None if mc.coeff == 0.0 => idx.push(None),
                None => {
                    return Err(CalibrateError::UnknownColumn { label: mc.column.label() })
                }
            }
        }
        let mut out = Vec::with_capacity(x.n());
        for i in 0..x.n() {
            let mut v = self.intercept;
            for (mc, j) in self.columns.iter().zip(&idx) {
                if let Some(j) = j {
                    v += mc.coeff * x.value(i, *j);
                }
            }
            out.push(v);
        }
        Ok(out)
    }
}

struct RawFit {
    intercept: f64,
    /// Raw-scale coefficients for every design column (0 where inactive).
    coeffs: Vec<f64>,
}

/// Core fit on a row subset. Standardization statistics are recomputed from
/// the given rows so cross-validation never leaks held-out data.
fn fit_rows(
    x: &DesignMatrix,
    rows: Option<&[usize]>,
    weights: &[f64],
    lambda_r: f64,
    opts: &FitOptions,
) -> Result<RawFit, CalibrateError> {
    if !(lambda_r >= 0.0 && lambda_r.is_finite()) {
        return Err(CalibrateError::InvalidPenalty { value: lambda_r });
    }
    for e in &opts.exclude {
        if !x.columns.contains(e) {
            return Err(CalibrateError::UnknownColumn { label: e.label() });
        }
    }
    let p = x.p();
    let all: Vec<usize>;
    let rows = match rows {
        Some(r) => r,
        None => {
            all = (0..x.n()).collect();
            &all
        }
    };
    let m = rows.len();
    if m < 2 {
        return Err(CalibrateError::TooFewPoints { have: m, need: 2 });
    }

    // per-column stats over the training rows (population std)
    let mut means = vec![0.0f64; p];
    let mut stds = vec![0.0f64; p];
    for j in 0..p {
        let mut s = 0.0;
        for &i in rows {
            s += x.value(i, j);
        }
        let mean = s / m as f64;
        let mut v = 0.0;
        for &i in rows {
            let d = x.value(i, j) - mean;
            v += d * d;
        }
        means[j] = mean;
        stds[j] = math::sqrt(v / m as f64);
    }

    let excluded: Vec<bool> = x.columns.iter().map(|c| opts.exclude.contains(c)).collect();
    let active: Vec<usize> =
        (0..p).filter(|&j| stds[j] > 0.0 && !excluded[j]).collect();
    let q = active.len();

    let sw: f64 = rows.iter().map(|&i| weights[i]).sum();
    let centers: Vec<f64> = if opts.intercept { means.clone() } else { vec![0.0; p] };
    let std_val = |i: usize, j: usize| (x.value(i, j) - centers[j]) / stds[j];

    let (ybar, xbars) = if opts.intercept {
        let mut yb = 0.0;
        for &i in rows {
            yb += weights[i] * x.y[i];
        }
        yb /= sw;
        let mut xb = vec![0.0f64; q];
        for (k, &j) in active.iter().enumerate() {
            let mut s = 0.0;
            for &i in rows {
                s += weights[i] * std_val(i, j);
            }
            xb[k] = s / sw;
        }
        (yb, xb)
    } else {
        (0.0, vec![0.0; q])
    };

    // normal equations on the weighted, centered, standardized system
    let mut g = vec![0.0f64; q * q];
    let mut c = vec![0.0f64; q];
    for &i in rows {
        let w = weights[i];
        let yc = x.y[i] - ybar;
        for (k, &j) in active.iter().enumerate() {
            let xk = std_val(i, j) - xbars[k];
            c[k] += w * xk * yc;
            for (l, &j2) in active.iter().enumerate().skip(k) {
                g[k * q + l] += w * xk * (std_val(i, j2) - xbars[l]);
            }
        }
    }
    for k in 0..q {
        for l in 0..k {
            g[k * q + l] = g[l * q + k];
        }
    }

    let beta_std = if q == 0 {
        Vec::new()
    } else {
        let mut gp = g.clone();
        for k in 0..q {
            gp[k * q + k] += lambda_r;
        }
        let unconstrained = linalg::solve_spd(&gp, &c, q);
        match (unconstrained, opts.nonnegative) {
            (Some(b), false) => b,
            (Some(b), true) => {
                let init: Vec<f64> = b.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
                descend_nonnegative(&gp, &c, init)
            }
            (None, _) => return Err(CalibrateError::SingularSystem),
        }
    };

    let mut coeffs = vec![0.0f64; p];
    for (k, &j) in active.iter().enumerate() {
        coeffs[j] = beta_std[k] / stds[j];
    }
    let mut intercept = ybar;
    for (k, &j) in active.iter().enumerate() {
        intercept -= beta_std[k] * xbars[k];
        intercept -= beta_std[k] * centers[j] / stds[j];
    }
    if !opts.intercept {
        intercept = 0.0;
    }
    Ok(RawFit { intercept, coeffs })
}

/// Cyclic coordinate descent for min ½b'Gb − c'b subject to b ≥ 0, where G
/// already carries the ridge term on its diagonal.
fn descend_nonnegative(g: &[f64], c: &[f64], mut b: Vec<f64>) -> Vec<f64> {
    let q = b.len();
    for _ in 0..10_000 {
        let mut largest = 0.0f64;
        let mut scale = 1.0f64;
        for k in 0..q {
            let gkk = g[k * q + k];
            if !(gkk > 0.0) {
                b[k] = 0.0;
                continue;
            }
            let mut s = c[k];
            for l in 0..q {
                if l != k {
                    s -= g[k * q + l] * b[l];
                }
            }
            let nb = if s > 0.0 { s / gkk } else { 0.0 };
            let d = math::abs(nb - b[k]);
            if d > largest {
                largest = d;
            }
            if math::abs(nb) > scale {
                scale = math::abs(nb);
            }
            b[k] = nb;
        }
        if largest <= 1e-13 * scale {
            break;
        }
    }
    b
}

/// Weighted ridge fit on the whole design. The penalty applies to
/// standardized coefficients; the intercept is unpenalized.
pub fn ridge_fit(
    x: &DesignMatrix,
    weights: &ObservationWeights,
    lambda_r: f64,
    opts: &FitOptions,
) -> Result<CalibratedModel, CalibrateError> {
    if weights.values.len() != x.n() {
        return Err(CalibrateError::ColumnMismatch {
            detail: format!("{} weights for {} rows", weights.values.len(), x.n()),
        });
    }
    let fit = fit_rows(x, None, &weights.values, lambda_r, opts)?;
    let excluded: Vec<bool> = x.columns.iter().map(|c| opts.exclude.contains(c)).collect();
    let columns = x
        .columns
        .iter()
        .enumerate()
        .map(|(j, col)| {
            let coeff = fit.coeffs[j];
            ModelColumn {
                column: col.clone(),
                coeff,
                mean: x.means[j],
                std: x.stds[j],
                stdcoeff: coeff * x.stds[j],
                constant: x.stds[j] == 0.0,
                excluded: excluded[j],
            }
        })
        .collect();
    Ok(CalibratedModel {
        intercept: fit.intercept,
        columns,
        lambda_w: weights.lambda_w,
        lambda_r,
        cv_r2: None,
        metric: MetricParams::default(),
        specs: Vec::new(),
    })
}

/// Squared weighted Pearson correlation; None when either side is constant
/// under the weights.
fn weighted_pearson_r2(pred: &[f64], obs: &[f64], w: &[f64]) -> Option<f64> {
    let sw: f64 = w.iter().sum();
    if !(sw > 0.0) {
        return None;
    }
    let mut mp = 0.0;
    let mut mo = 0.0;
    for i in 0..pred.len() {
        mp += w[i] * pred[i];
        mo += w[i] * obs[i];
    }
    mp /= sw;
    mo /= sw;
    let mut spp = 0.0;
    let mut soo = 0.0;
    let mut spo = 0.0;
    for i in 0..pred.len() {
        let dp = pred[i] - mp;
        let do_ = obs[i] - mo;
        spp += w[i] * dp * dp;
        soo += w[i] * do_ * do_;
        spo += w[i] * dp * do_;
    }
    if spp > 0.0 && soo > 0.0 {
        let r2 = (spo * spo) / (spp * soo);
        Some(if r2 > 1.0 { 1.0 } else { r2 })
    } else {
        None
    }
}

/// Default penalty grid: 60 log-spaced values spanning 1e-4·s to 1e3·s where
/// s is the mean diagonal of the standardized weighted Gram matrix.
pub fn default_penalty_grid(x: &DesignMatrix, weights: &ObservationWeights, opts: &FitOptions) -> Vec<f64> {
    let p = x.p();
    let excluded: Vec<bool> = x.columns.iter().map(|c| opts.exclude.contains(c)).collect();
    let active: Vec<usize> = (0..p).filter(|&j| x.stds[j] > 0.0 && !excluded[j]).collect();
    let sw: f64 = weights.values.iter().sum();
    let mut s = 1.0f64;
    if !active.is_empty() && sw > 0.0 {
        let mut trace = 0.0;
        for &j in &active {
            let center = if opts.intercept { x.means[j] } else { 0.0 };
            // weighted mean of the standardized column
            let mut xb = 0.0;
            for i in 0..x.n() {
                xb += weights.values[i] * (x.value(i, j) - center) / x.stds[j];
            }
            xb /= sw;
            for i in 0..x.n() {
                let d = (x.value(i, j) - center) / x.stds[j] - xb;
                trace += weights.values[i] * d * d;
            }
        }
        let cand = trace / active.len() as f64;
        if cand > 0.0 && cand.is_finite() {
            s = cand;
        }
    }
    (0..60)
        .map(|t| s * math::powf(10.0, -4.0 + 7.0 * t as f64 / 59.0))
        .collect()
}

#[derive(Clone, Debug)]
pub struct CvOptions {
    pub folds: usize,
    pub repetitions: usize,
    pub seed: u64,
    /// Explicit penalty grid; None builds the default.
    pub grid: Option<Vec<f64>>,
    /// Skip selection entirely and use this penalty.
    pub manual_lambda: Option<f64>,
    pub fit: FitOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            folds: 7,
            repetitions: 50,
            seed: 1,
            grid: None,
            manual_lambda: None,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvCurvePoint {
    pub lambda_r: f64,
    pub mean_r2: Option<f64>,
    /// Fold evaluations that produced a defined score.
    pub folds_scored: usize,
}

#[derive(Clone, Debug)]
pub struct CvResult {
    pub model: CalibratedModel,
    pub curve: Vec<CvCurvePoint>,
}

/// Scores one repetition: shuffles rows, splits into near-equal folds, and
/// returns per-grid, per-fold held-out weighted r² (None when undefined).
fn run_repetition(
    x: &DesignMatrix,
    weights: &[f64],
    grid: &[f64],
    fit: &FitOptions,
    folds: usize,
    seed: u64,
    rep: u64,
) -> Vec<Vec<Option<f64>>> {
    let n = x.n();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Rng::new(mix64(seed) ^ mix64(rep.wrapping_add(0x5eed)));
    rng.shuffle(&mut order);

    let base = n / folds;
    let extra = n % folds;
    let mut bounds = Vec::with_capacity(folds + 1);
    let mut at = 0;
    bounds.push(0);
    for f in 0..folds {
        at += base + usize::from(f < extra);
        bounds.push(at);
    }

    let mut scores = vec![Vec::with_capacity(folds); grid.len()];
    for f in 0..folds {
        let test: Vec<usize> = order[bounds[f]..bounds[f + 1]].to_vec();
        let train: Vec<usize> = order[..bounds[f]]
            .iter()
            .chain(&order[bounds[f + 1]..])
            .copied()
            .collect();
        if test.is_empty() || train.len() < 2 {
            for s in &mut scores {
                s.push(None);
            }
            continue;
        }
        let obs: Vec<f64> = test.iter().map(|&i| x.y[i]).collect();
        let w: Vec<f64> = test.iter().map(|&i| weights[i]).collect();
        for (gi, &lambda) in grid.iter().enumerate() {
            let score = fit_rows(x, Some(&train), weights, lambda, fit).ok().and_then(|m| {
                let pred: Vec<f64> = test
                    .iter()
                    .map(|&i| {
                        let mut v = m.intercept;
                        for j in 0..x.p() {
                            v += m.coeffs[j] * x.value(i, j);
                        }
                        v
                    })
                    .collect();
                weighted_pearson_r2(&pred, &obs, &w)
            });
            scores[gi].push(score);
        }
    }
    scores
}

/// Repeated k-fold penalty selection. Picks the grid penalty with the best
/// mean held-out weighted r², then refits on all rows. Fully reproducible
/// from the seed, independent of worker count.
pub fn cv_select_penalty(
    x: &DesignMatrix,
    weights: &ObservationWeights,
    opts: &CvOptions,
) -> Result<CvResult, CalibrateError> {
    assert!(opts.folds >= 2, "need at least 2 folds");
    assert!(opts.repetitions >= 1, "need at least 1 repetition");
    if weights.values.len() != x.n() {
        return Err(CalibrateError::ColumnMismatch {
            detail: format!("{} weights for {} rows", weights.values.len(), x.n()),
        });
    }
    if x.n() < opts.folds {
        return Err(CalibrateError::TooFewPoints { have: x.n(), need: opts.folds });
    }
    let grid: Vec<f64> = match (opts.manual_lambda, &opts.grid) {
        (Some(l), _) => vec![l],
        (None, Some(g)) => g.clone(),
        (None, None) => default_penalty_grid(x, weights, &opts.fit),
    };
    if grid.is_empty() {
        return Err(CalibrateError::EmptyGrid);
    }
    for &l in &grid {
        if !(l >= 0.0 && l.is_finite()) {
            return Err(CalibrateError::InvalidPenalty { value: l });
        }
    }

    let reps: Vec<u64> = (0..opts.repetitions as u64).collect();
    #[cfg(feature = "parallel")]
    let per_rep: Vec<Vec<Vec<Option<f64>>>> = {
        use rayon::prelude::*;
        reps.par_iter()
            .map(|&r| run_repetition(x, &weights.values, &grid, &opts.fit, opts.folds, opts.seed, r))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_rep: Vec<Vec<Vec<Option<f64>>>> = reps
        .iter()
        .map(|&r| run_repetition(x, &weights.values, &grid, &opts.fit, opts.folds, opts.seed, r))
        .collect();

    let mut sums = vec![0.0f64; grid.len()];
    let mut counts = vec![0usize; grid.len()];
    for rep_scores in &per_rep {
        for (gi, fold_scores) in rep_scores.iter().enumerate() {
            for s in fold_scores {
                if let Some(v) = s {
                    sums[gi] += v;
                    counts[gi] += 1;
                }
            }
        }
    }
    let curve: Vec<CvCurvePoint> = grid
        .iter()
        .enumerate()
        .map(|(gi, &l)| CvCurvePoint {
            lambda_r: l,
            mean_r2: if counts[gi] > 0 { Some(sums[gi] / counts[gi] as f64) } else { None },
            folds_scored: counts[gi],
        })
        .collect();

    let mut best = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    for (gi, pt) in curve.iter().enumerate() {
        if let Some(m) = pt.mean_r2 {
            if m > best_score {
                best_score = m;
                best = gi;
            }
        }
    }
    let chosen = grid[best];
    let mut model = ridge_fit(x, weights, chosen, &opts.fit)?;
    model.cv_r2 = curve[best].mean_r2;
    Ok(CvResult { model, curve })
}

/// Per-link direct prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectPrediction {
    pub values: Vec<f64>,
    /// Links whose raw prediction was negative and got floored to 0.
    pub floored: Vec<usize>,
}

fn direct_raw(model: &CalibratedModel, fields: &[FlowField]) -> Result<Vec<f64>, CalibrateError> {
    let mut n = None;
    for f in fields {
        match n {
            None => n = Some(f.values.len()),
            Some(m) if m != f.values.len() => {
                return Err(CalibrateError::ColumnMismatch {
                    detail: format!(
                        "field {} has {} links, expected {m}",
                        f.column.label(),
                        f.values.len()
                    ),
                })
            }
            _ => {}
        }
    }
    let mut picked: Vec<(f64, &FlowField)> = Vec::new();
    for mc in &model.columns {
        match fields.iter().find(|f| f.column == mc.column) {
            Some(f) => picked.push((mc.coeff, f)),
            None if mc.coeff == 0.0 => {}
            None => return Err(CalibrateError::UnknownColumn { label: mc.column.label() }),
        }
    }
    let n = n.ok_or(CalibrateError::EmptyDesign)?;
    let mut out = vec![model.intercept; n];
    for (coeff, f) in picked {
        for (o, v) in out.iter_mut().zip(&f.values) {
            *o += coeff * v;
        }
    }
    Ok(out)
}

/// ŷ(link) = β₀ + Σ β_c · field_c(link), negatives floored to 0.
/// Columns with coefficient 0 may be absent from `fields`.
pub fn predict_direct(
    model: &CalibratedModel,
    fields: &[FlowField],
) -> Result<DirectPrediction, CalibrateError> {
    let mut values = direct_raw(model, fields)?;
    let mut floored = Vec::new();
    for (i, v) in values.iter_mut().enumerate() {
        if *v < 0.0 {
            *v = 0.0;
            floored.push(i);
        }
    }
    Ok(DirectPrediction { values, floored })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointPrediction {
    pub point_id: String,
    pub value: f64,
    /// Raw prediction was negative and got floored to 0.
    pub floored: bool,
}

/// One count point carried across two network epochs. The link indices may
/// differ because editing the network renumbers links.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementalInput {
    pub point_id: String,
    pub baseline: f64,
    pub link_t1: LinkIdx,
    pub link_t2: LinkIdx,
}

/// Matches snapped points across epochs by id and attaches the baseline
/// observation for `year`.
pub fn incremental_inputs(
    points_t1: &[CountPoint],
    points_t2: &[CountPoint],
    year: &str,
) -> Result<Vec<IncrementalInput>, CalibrateError> {
    let mut out = Vec::with_capacity(points_t1.len());
    for p1 in points_t1 {
        let p2 = points_t2.iter().find(|p| p.id == p1.id).ok_or_else(|| {
            CalibrateError::ColumnMismatch {
                detail: format!("point {:?} missing from the second epoch", p1.id),
            }
        })?;
        let baseline = *p1.observations.get(year).ok_or_else(|| {
            CalibrateError::MissingObservation { point: p1.id.clone(), year: year.to_string() }
        })?;
        out.push(IncrementalInput {
            point_id: p1.id.clone(),
            baseline,
            link_t1: p1.link,
            link_t2: p2.link,
        });
    }
    Ok(out)
}

/// ŷ_t2(point) = baseline + (direct_t2 − direct_t1), floored at 0. With
/// identical epochs the delta is exactly zero and the baseline is returned
/// bit-for-bit.
pub fn predict_incremental(
    model: &CalibratedModel,
    fields_t1: &[FlowField],
    fields_t2: &[FlowField],
    inputs: &[IncrementalInput],
) -> Result<Vec<PointPrediction>, CalibrateError> {
    let d1 = direct_raw(model, fields_t1)?;
    let d2 = direct_raw(model, fields_t2)?;
    let mut out = Vec::with_capacity(inputs.len());
    for inp in inputs {
        let a = *d1.get(inp.link_t1).ok_or_else(|| CalibrateError::MissingColumnValue {
            link: format!("{} (point {})", inp.link_t1, inp.point_id),
        })?;
        let b = *d2.get(inp.link_t2).ok_or_else(|| CalibrateError::MissingColumnValue {
            link: format!("{} (point {})", inp.link_t2, inp.point_id),
        })?;
        let raw = inp.baseline + (b - a);
        let floored = raw < 0.0;
        out.push(PointPrediction {
            point_id: inp.point_id.clone(),
            value: if floored { 0.0 } else { raw },
            floored,
        });
    }
    Ok(out)
}

/// The no-change model: predictions are the baseline observations.
pub fn predict_null(
    points: &[CountPoint],
    year: &str,
) -> Result<Vec<PointPrediction>, CalibrateError> {
    points
        .iter()
        .map(|p| {
            let v = *p.observations.get(year).ok_or_else(|| {
                CalibrateError::MissingObservation { point: p.id.clone(), year: year.to_string() }
            })?;
            Ok(PointPrediction { point_id: p.id.clone(), value: v, floored: false })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub point_id: String,
    pub predicted: f64,
    pub observed: f64,
    pub geh: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Squared Pearson correlation; None when either vector is constant.
    pub r2: Option<f64>,
    pub geh_mean: f64,
    pub geh_under_5_fraction: f64,
    pub per_point: Vec<EvalPoint>,
}

/// GEH statistic comparing modeled M against counted C.
pub fn geh(m: f64, c: f64) -> f64 {
    if m == c {
        return 0.0;
    }
    let denom = m + c;
    if !(denom > 0.0) {
        return f64::INFINITY;
    }
    math::sqrt(2.0 * (m - c) * (m - c) / denom)
}

/// Scores (point id, predicted, observed) triples. r² discards scale; GEH
/// keeps it (the usual pairing for count models).
pub fn evaluate(pairs: &[(String, f64, f64)]) -> Result<EvalReport, CalibrateError> {
    if pairs.len() < 3 {
        return Err(CalibrateError::TooFewPoints { have: pairs.len(), need: 3 });
    }
    let pred: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let obs: Vec<f64> = pairs.iter().map(|p| p.2).collect();
    let ones = vec![1.0; pairs.len()];
    let r2 = weighted_pearson_r2(&pred, &obs, &ones);
    let per_point: Vec<EvalPoint> = pairs
        .iter()
        .map(|(id, m, c)| EvalPoint { point_id: id.clone(), predicted: *m, observed: *c, geh: geh(*m, *c) })
        .collect();
    let geh_mean = per_point.iter().map(|p| p.geh).sum::<f64>() / per_point.len() as f64;
    let under5 = per_point.iter().filter(|p| p.geh < 5.0).count();
    Ok(EvalReport {
        r2,
        geh_mean,
        geh_under_5_fraction: under5 as f64 / per_point.len() as f64,
        per_point,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub a: f64,
    pub sigma: f64,
    pub r2: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub warnings: Vec<String>,
}

fn dedup_grid(values: &[f64], name: &str, warnings: &mut Vec<String>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        if out.iter().any(|&u| u == v) {
            warnings.push(format!("duplicate {name} grid entry {v} dropped"));
        } else {
            out.push(v);
        }
    }
    out
}

/// Metric calibration sweep: reruns one analysis at `radius` for every
/// (a, sigma) cell with oversample 5 and reports the weighted r² between the
/// flow field and the observed counts.
#[allow(clippy::too_many_arguments)]
pub fn sweep_sigma(
    net: &SpatialNetwork,
    base: &AnalysisSpec,
    radius: f64,
    sigma_grid: &[f64],
    a_grid: &[f64],
    points: &[CountPoint],
    year: &str,
    lambda_w: f64,
    clamp: (f64, f64),
    seed: u64,
) -> Result<SweepTable, CalibrateError> {
    if sigma_grid.is_empty() || a_grid.is_empty() {
        return Err(CalibrateError::EmptyGrid);
    }
    let mut warnings = Vec::new();
    let a_grid = dedup_grid(a_grid, "a", &mut warnings);
    let sigma_grid = dedup_grid(sigma_grid, "sigma", &mut warnings);

    let mut y = Vec::with_capacity(points.len());
    for p in points {
        let v = *p.observations.get(year).ok_or_else(|| CalibrateError::MissingObservation {
            point: p.id.clone(),
            year: year.to_string(),
        })?;
        y.push(v);
    }
    let weights = observation_weights(&y, lambda_w)?;

    let mut spec = base.clone();
    spec.radii = vec![(0.0, radius)];

    let mut rows = Vec::with_capacity(a_grid.len() * sigma_grid.len());
    for &a in &a_grid {
        for &sigma in &sigma_grid {
            let params = MetricParams { a, sigma, clamp, oversample: 5 };
            let (fields, _) = run_single(net, &spec, &params, seed)?;
            let pred: Vec<f64> = points.iter().map(|p| fields[0].values[p.link]).collect();
            let r2 = weighted_pearson_r2(&pred, &y, &weights.values);
            rows.push(SweepRow { a, sigma, r2 });
        }
    }
    Ok(SweepTable { rows, warnings })
}
