use super::{log_marginal_likelihood, Dataset, Hyperparams};
use crate::error::Result;
use crate::optim::{self, Bounds, Options, Status};

/// Gradient tolerance (infinity norm over the unconstrained parameters).
pub const GRADIENT_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingDiagnostics {
    pub initial_lml: f64,
    pub final_lml: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the line search gave up; the best iterate is still returned.
    pub line_search_failed: bool,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub hyperparams: Hyperparams,
    pub diagnostics: TrainingDiagnostics,
}

/// Maximize the log marginal likelihood with L-BFGS over log-scales and
/// mean parameters jointly. No hyperparameter priors.
pub fn optimize_hyperparams(data: &Dataset, h0: &Hyperparams, max_iters: usize) -> Result<TrainingOutcome> {
    let d = data.dim();
    let (initial_lml, g0) = log_marginal_likelihood(data, h0)?;
    let x0 = h0.to_unconstrained();
    let objective = |v: &[f64], g: &mut [f64]| -> Option<f64> {
        let h = Hyperparams::from_unconstrained(d, v);
        let (lml, grad) = log_marginal_likelihood(data, &h).ok()?;
        for (gi, vi) in g.iter_mut().zip(grad) {
            *gi = -vi;
        }
        Some(-lml)
    };
    let opts = Options {
        max_iters,
        pg_tol: GRADIENT_TOL,
        ..Options::default()
    };
    let min = optim::minimize(objective, &x0, &Bounds::unbounded(x0.len()), &opts);
    let (hyperparams, final_lml, gradient_norm) = if min.status == Status::BadStart || -min.value < initial_lml {
        let gn = g0.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        (h0.clone(), initial_lml, gn)
    } else {
        (Hyperparams::from_unconstrained(d, &min.x), -min.value, min.kkt_residual)
    };
    Ok(TrainingOutcome {
        hyperparams,
        diagnostics: TrainingDiagnostics {
            initial_lml,
            final_lml,
            gradient_norm,
            iterations: min.iterations,
            converged: gradient_norm <= GRADIENT_TOL,
            line_search_failed: min.status == Status::LineSearchFailed,
        },
    })
}
