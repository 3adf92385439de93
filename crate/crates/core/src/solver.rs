//! Projected gradient descent on the unit sphere's nonnegative orthant.
//!
//! Each iteration combines the two loss gradients after normalizing each to
//! unit length, adds the sparsity push `γ·1/√m`, takes a constant step,
//! clamps at zero and rescales back to unit norm.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttributedNetwork, BlockModel, FeatureScores};
use crate::objective::{GradientMode, ObjectiveContext, ObjectiveValues, DEFAULT_DELTA};

/// Consecutive small changes of `L_b + L_m` required to stop early.
pub const CONVERGENCE_PATIENCE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Composition ratio in `[0, 1]`; weight of the `L_m` direction.
    pub beta_bar: f64,
    /// Sparsity weight.
    pub gamma: f64,
    /// Constant step size.
    pub eta: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub gradient_mode: GradientMode,
    pub delta: f64,
    /// Recorded for provenance; the iteration itself is deterministic.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            beta_bar: 0.6,
            gamma: 0.0,
            eta: 1e-2,
            max_iterations: 500,
            tolerance: 1e-6,
            gradient_mode: GradientMode::Analytic,
            delta: DEFAULT_DELTA,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta_bar) {
            return Err(Error::InvalidArgument(format!(
                "beta_bar must lie in [0, 1], got {}",
                self.beta_bar
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta must be > 0, got {}", self.eta)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("delta must be >= 0, got {}", self.delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub loss_b: f64,
    pub loss_m: f64,
    pub loss_total: f64,
    /// Norm of the combined gradient at this iterate.
    pub grad_norm: f64,
    pub nnz: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTrace {
    pub records: Vec<TraceRecord>,
    pub termination: Termination,
    pub warnings: Vec<String>,
}

impl ObjectiveTrace {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    /// CSV with header `iteration,loss_b,loss_m,loss_total,grad_norm,nnz`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,loss_b,loss_m,loss_total,grad_norm,nnz\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{}\n",
                r.iteration, r.loss_b, r.loss_m, r.loss_total, r.grad_norm, r.nnz
            ));
        }
        out
    }
}

/// Output of [`combined_gradient`].
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedGradient {
    pub direction: Array1<f64>,
    /// Set when `‖∂L_b‖ = 0` and that term was dropped.
    pub dropped_b: bool,
    /// Set when `‖∂L_m‖ = 0` and that term was dropped.
    pub dropped_m: bool,
}

/// `(1−β̄)·g_b/‖g_b‖ + β̄·g_m/‖g_m‖ + γ·1/√m`. A gradient with zero norm
/// contributes nothing and is flagged.
pub fn combined_gradient(
    grad_b: ArrayView1<'_, f64>,
    grad_m: ArrayView1<'_, f64>,
    cfg: &SolverConfig,
) -> Result<CombinedGradient> {
    let m = grad_b.len();
    if grad_m.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "gradient lengths differ: {} vs {}",
            m,
            grad_m.len()
        )));
    }
    let mut direction = Array1::from_elem(m, cfg.gamma / (m as f64).sqrt());
    let norm_b = grad_b.dot(&grad_b).sqrt();
    let norm_m = grad_m.dot(&grad_m).sqrt();
    if norm_b > 0.0 {
        direction.scaled_add((1.0 - cfg.beta_bar) / norm_b, &grad_b);
    }
    if norm_m > 0.0 {
        direction.scaled_add(cfg.beta_bar / norm_m, &grad_m);
    }
    Ok(CombinedGradient {
        direction,
        dropped_b: norm_b == 0.0,
        dropped_m: norm_m == 0.0,
    })
}

/// `r ← r − η·g`, clamp at zero, rescale to unit norm.
pub fn pgd_step(r: &FeatureScores, grad: ArrayView1<'_, f64>, eta: f64) -> Result<FeatureScores> {
    if grad.len() != r.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} gradient entries for {} scores",
            grad.len(),
            r.len()
        )));
    }
    let mut next = r.values() - &(&grad * eta);
    next.mapv_inplace(|v| v.max(0.0));
    let norm = next.dot(&next).sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateStep { eta });
    }
    next /= norm;
    Ok(FeatureScores::from_raw(next))
}

/// Failure of [`optimize`], carrying whatever trace was recorded.
#[derive(Debug)]
pub struct SolveError {
    pub error: Error,
    pub trace: ObjectiveTrace,
}

impl std::fmt::Display for SolveError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (after {} recorded iterations)",
            self.error,
            self.trace.records.len()
        )
    }
}

impl std::error::Error for SolveError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<SolveError> for Error {
    fn from(e: SolveError) -> Self {
        e.error
    }
}

fn record(iteration: usize, v: &ObjectiveValues, grad: &CombinedGradient, r: &FeatureScores) -> TraceRecord {
    TraceRecord {
        iteration,
        loss_b: v.loss_b,
        loss_m: v.loss_m,
        loss_total: v.loss_b + v.loss_m,
        grad_norm: grad.direction.dot(&grad.direction).sqrt(),
        nnz: r.nnz(),
    }
}

fn note_dropped(warnings: &mut Vec<String>, iteration: usize, grad: &CombinedGradient) {
    if grad.dropped_b {
        warnings.push(format!("iteration {iteration}: L_b gradient vanished, term dropped"));
    }
    if grad.dropped_m {
        warnings.push(format!("iteration {iteration}: L_m gradient vanished, term dropped"));
    }
}

/// Runs the selection solver from `r = 1/‖1‖₂` on a prepared context.
///
/// Stops after `max_iterations` steps, or once `|Δ(L_b + L_m)| < tolerance`
/// held for [`CONVERGENCE_PATIENCE`] consecutive steps. The trace holds the
/// starting point plus one record per step.
pub fn optimize_with_context(
    ctx: &ObjectiveContext,
    cfg: &SolverConfig,
) -> Result<(FeatureScores, ObjectiveTrace), SolveError> {
    optimize_observed(ctx, cfg, |_, _| {})
}

/// [`optimize_with_context`], calling `observe(iteration, r)` on the
/// starting point and on every iterate.
pub fn optimize_observed(
    ctx: &ObjectiveContext,
    cfg: &SolverConfig,
    mut observe: impl FnMut(usize, &FeatureScores),
) -> Result<(FeatureScores, ObjectiveTrace), SolveError> {
    let mut trace = ObjectiveTrace {
        records: Vec::with_capacity(cfg.max_iterations.min(4096) + 1),
        termination: Termination::IterationCap,
        warnings: Vec::new(),
    };
    if let Err(error) = cfg.validate() {
        return Err(SolveError { error, trace });
    }

    macro_rules! bail {
        ($e:expr) => {
            return Err(SolveError { error: $e, trace })
        };
    }

    let mut r = FeatureScores::uniform(ctx.feature_count());
    observe(0, &r);
    let mut values = match ctx.evaluate(r.view(), cfg.gradient_mode) {
        Ok(v) => v,
        Err(e) => bail!(e),
    };
    let mut grad = match combined_gradient(values.grad_b.view(), values.grad_m.view(), cfg) {
        Ok(g) => g,
        Err(e) => bail!(e),
    };
    note_dropped(&mut trace.warnings, 0, &grad);
    let first = record(0, &values, &grad, &r);
    if !(first.loss_total.is_finite() && first.grad_norm.is_finite()) {
        trace.records.push(first);
        bail!(Error::NonFinite("objective at the starting point".into()));
    }
    trace.records.push(first);

    let mut streak = 0;
    for it in 1..=cfg.max_iterations {
        r = match pgd_step(&r, grad.direction.view(), cfg.eta) {
            Ok(next) => next,
            Err(e) => bail!(e),
        };
        observe(it, &r);
        values = match ctx.evaluate(r.view(), cfg.gradient_mode) {
            Ok(v) => v,
            Err(e) => bail!(e),
        };
        grad = match combined_gradient(values.grad_b.view(), values.grad_m.view(), cfg) {
            Ok(g) => g,
            Err(e) => bail!(e),
        };
        note_dropped(&mut trace.warnings, it, &grad);
        let rec = record(it, &values, &grad, &r);
        let finite = rec.loss_total.is_finite() && rec.grad_norm.is_finite();
        let prev = trace.records.last().expect("starting record").loss_total;
        trace.records.push(rec);
        if !finite {
            bail!(Error::NonFinite(format!("objective at iteration {it}")));
        }
        if (rec.loss_total - prev).abs() < cfg.tolerance {
            streak += 1;
            if streak >= CONVERGENCE_PATIENCE {
                trace.termination = Termination::Converged;
                break;
            }
        } else {
            streak = 0;
        }
    }
    Ok((r, trace))
}

/// Builds the context for `(net, model)` and runs the solver.
pub fn optimize(
    net: &AttributedNetwork,
    model: &BlockModel,
    cfg: &SolverConfig,
) -> Result<(FeatureScores, ObjectiveTrace), SolveError> {
    let ctx = ObjectiveContext::new(net, model, cfg.delta).map_err(|error| SolveError {
        error,
        trace: ObjectiveTrace {
            records: Vec::new(),
            termination: Termination::IterationCap,
            warnings: Vec::new(),
        },
    })?;
    optimize_with_context(&ctx, cfg)
}

/// Indices of the `d` largest scores, descending, ties by ascending index.
/// Zero scores are never selected.
pub fn top_d_features(scores: &FeatureScores, d: usize) -> Result<Vec<usize>> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be at least 1".into()));
    }
    let nnz = scores.nnz();
    if nnz < d {
        return Err(Error::InsufficientSupport { nnz, d });
    }
    let r = scores.values();
    let mut idx: Vec<usize> = (0..r.len()).collect();
    idx.sort_by(|&a, &b| r[b].total_cmp(&r[a]).then(a.cmp(&b)));
    idx.truncate(d);
    Ok(idx)
}

/// `1 − aᵀb / (‖a‖‖b‖)`, evaluated as `‖â − b̂‖² / 2` on the unit
/// vectors so that identical directions give exactly zero.
pub fn cosine_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x / na - y / nb).powi(2))
        .sum::<f64>()
        / 2.0
}
