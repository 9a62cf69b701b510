//! The Riemannian Levenberg-Marquardt solver.
//!
//! Per iteration: solve `(J*J + lambda I) s = -grad f` with
//! `lambda = mu |F(x)|^2`, measure the decrease ratio
//! `rho = (f(x) - f(R_x(s))) / ((theta(0) - theta(s)) / 2)`, accept the step
//! when `rho >= eta`, and update `mu` in the trust-region-like manner: shrink
//! toward `mu_min` after success (or hold it when `flag_nz` is set), inflate
//! by `beta` after rejection.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifold::{Point, Tangent};
use crate::order::{estimate_order, OrderEstimate};
use crate::problem::{jacobian_norm_estimate, ResidualProblem};
use crate::subproblem::{
    solve_subproblem_with_gradient, theta_with_residual, SubproblemConfig,
};
use crate::trace::{IterRecord, Trace};

/// Guard against runaway damping: theory bounds `mu` under the paper-level
/// assumptions, so crossing this indicates a violated assumption and the run
/// is aborted with `StepFailure` instead of looping forever.
pub const MU_OVERFLOW: f64 = 1e30;

/// Underflow threshold for the predicted decrease below which the ratio test
/// is meaningless and the iteration counts as unsuccessful.
pub const MODEL_DECREASE_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    GradTol,
    FTol,
    MaxIter,
    TimeBudget,
    StepFailure,
}

impl Status {
    /// Successful termination in the sense of the benchmark reports.
    pub fn is_success(&self) -> bool {
        matches!(self, Status::GradTol | Status::FTol)
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Status::GradTol => "GradTol",
            Status::FTol => "FTol",
            Status::MaxIter => "MaxIter",
            Status::TimeBudget => "TimeBudget",
            Status::StepFailure => "StepFailure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RlmConfig {
    /// Acceptance threshold for the decrease ratio, in (0, 1).
    pub eta: f64,
    /// Damping floor, > 0.
    pub mu_min: f64,
    /// Damping growth factor, > 1.
    pub beta: f64,
    /// Hold `mu` constant after successful iterations (nonzero-residual
    /// variant) instead of shrinking it toward `mu_min`.
    pub flag_nz: bool,
    /// Stop when `|grad f| <= grad_tol`.
    pub grad_tol: f64,
    /// Stop when `f <= f_tol`; 0 disables for positive objectives.
    pub f_tol: f64,
    pub max_iter: usize,
    /// Wall-clock budget in seconds for the solver loop, measured around the
    /// loop only.
    pub time_budget: Option<f64>,
    pub subproblem: SubproblemConfig,
    /// Check the per-iteration decrease and step bounds; violations are
    /// collected on the summary.
    pub audit: bool,
}

impl Default for RlmConfig {
    fn default() -> Self {
        RlmConfig {
            eta: 0.2,
            mu_min: 0.1,
            beta: 5.0,
            flag_nz: false,
            grad_tol: 1e-8,
            f_tol: 0.0,
            max_iter: 1000,
            time_budget: None,
            subproblem: SubproblemConfig::default(),
            audit: false,
        }
    }
}

impl RlmConfig {
    /// Low-rank matrix completion preset: stop on the gradient norm or a
    /// 300 s wall-clock budget.
    pub fn completion_preset() -> Self {
        RlmConfig {
            grad_tol: 1e-8,
            f_tol: 0.0,
            max_iter: 1000,
            time_budget: Some(300.0),
            ..RlmConfig::default()
        }
    }

    /// Tensor decomposition preset: stop on small objective, small gradient,
    /// or 1000 iterations.
    pub fn cp_preset() -> Self {
        RlmConfig {
            grad_tol: 1e-6,
            f_tol: 1e-10,
            max_iter: 1000,
            time_budget: None,
            ..RlmConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidConfig(format!("eta must be in (0,1), got {}", self.eta)));
        }
        if !(self.mu_min > 0.0) {
            return Err(Error::InvalidConfig(format!("mu_min must be > 0, got {}", self.mu_min)));
        }
        if !(self.beta > 1.0) {
            return Err(Error::InvalidConfig(format!("beta must be > 1, got {}", self.beta)));
        }
        if self.grad_tol < 0.0 || self.f_tol < 0.0 {
            return Err(Error::InvalidConfig("tolerances must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Outcome of a solver run. The trace and final point are carried on the
/// struct; the JSON form contains the scalar summary fields only.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub status: Status,
    pub iters: usize,
    pub successful_iters: usize,
    pub final_f: f64,
    pub final_grad_norm: f64,
    pub wall_ms: f64,
    /// Convergence order fitted on the gradient-norm sequence, when there is
    /// enough of it.
    pub order: Option<OrderEstimate>,
    #[serde(skip)]
    pub trace: Trace,
    #[serde(skip)]
    pub final_point: Option<Point>,
    #[serde(skip)]
    pub audit_violations: Vec<String>,
}

impl RunSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serialization cannot fail")
    }
}

/// Decrease ratio `rho = (f(x) - f(R_x(s))) / ((theta(0) - theta(s)) / 2)`.
///
/// Errors with `DegenerateModelDecrease` when the predicted decrease
/// underflows (e.g. `s = 0`).
pub fn rho(p: &dyn ResidualProblem, x: &Point, s: &Tangent, lambda: f64) -> Result<f64> {
    let fx = p.residual(x)?;
    let theta0 = fx.norm_squared();
    let thetas = theta_with_residual(p, x, &fx, s, lambda)?;
    let denom = 0.5 * (theta0 - thetas);
    if denom <= MODEL_DECREASE_FLOOR {
        return Err(Error::DegenerateModelDecrease(denom));
    }
    let man = p.manifold();
    let x_new = man.retract(x, s)?;
    let f_new = 0.5 * p.residual(&x_new)?.norm_squared();
    Ok((0.5 * theta0 - f_new) / denom)
}

/// One damping update of Algorithm 1: returns `(mu_next, mu_bar_next)`.
///
/// After success the reference value `mu_bar` is set to the current `mu`;
/// the next `mu` is `mu_bar` itself under `flag_nz`, else
/// `max(mu_min, mu_bar / beta)`. After rejection `mu` is inflated by `beta`
/// and `mu_bar` is left alone.
pub fn update_mu(mu: f64, mu_bar: f64, successful: bool, cfg: &RlmConfig) -> (f64, f64) {
    if successful {
        let mu_bar_next = mu;
        let mu_next = if cfg.flag_nz {
            mu_bar_next
        } else {
            cfg.mu_min.max(mu_bar_next / cfg.beta)
        };
        (mu_next, mu_bar_next)
    } else {
        (cfg.beta * mu, mu_bar)
    }
}

/// Inputs to the per-iteration invariant audit.
#[derive(Debug, Clone)]
pub struct AuditContext {
    pub grad_norm: f64,
    /// Operator-norm estimate of J(x_k).
    pub jac_norm: f64,
    pub lambda: f64,
    pub step_norm: f64,
    pub theta0: f64,
    pub theta_s: f64,
    /// `<grad f(x_k), s_k>_x`.
    pub grad_dot_step: f64,
}

/// Checks the decrease and step bounds satisfied by the exact subproblem
/// solution:
///
/// (a) `theta(0) - theta(s) >= |grad|^2 / (|J|^2 + lambda)`
/// (b) `|s| <= |grad| / lambda`
/// (c) `-<grad, s> >= |grad|^2 / (|J|^2 + lambda)`
///
/// with slack `1e-9 * scale`. Returns the violated inequalities.
pub fn audit_iteration(k: usize, ctx: &AuditContext) -> Vec<String> {
    let slack = |a: f64, b: f64| 1e-9 * (1.0 + a.abs() + b.abs());
    let mut violations = Vec::new();
    let bound = ctx.grad_norm * ctx.grad_norm / (ctx.jac_norm * ctx.jac_norm + ctx.lambda);

    let decrease = ctx.theta0 - ctx.theta_s;
    if decrease - bound < -slack(decrease, bound) {
        violations.push(format!(
            "iter {k}: model decrease {decrease:.6e} below Cauchy bound {bound:.6e}"
        ));
    }

    let step_bound = ctx.grad_norm / ctx.lambda;
    if ctx.step_norm - step_bound > slack(ctx.step_norm, step_bound) {
        violations.push(format!(
            "iter {k}: step norm {:.6e} above bound {step_bound:.6e}",
            ctx.step_norm
        ));
    }

    let descent = -ctx.grad_dot_step;
    if descent - bound < -slack(descent, bound) {
        violations.push(format!(
            "iter {k}: descent inner product {descent:.6e} below bound {bound:.6e}"
        ));
    }
    violations
}

/// Runs the RLM iteration from `x0` until a stopping rule fires.
///
/// Stopping rules are checked at the top of each iteration, in the order
/// grad_tol, f_tol, max_iter, time budget. The trace contains one record per
/// iteration, successful or not; evaluation failures terminate with
/// `StepFailure` and a partial trace.
pub fn rlm_run(p: &dyn ResidualProblem, x0: &Point, cfg: &RlmConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let man = p.manifold();
    man.check_point(x0)?;

    let start = Instant::now();
    let mut trace = Trace::default();
    let mut audit_violations = Vec::new();
    let mut successful_iters = 0usize;

    let mut x = x0.clone();
    let mut mu = cfg.mu_min;
    let mut mu_bar = mu;

    let mut fvec = match p.residual(&x) {
        Ok(v) => v,
        Err(e) => return abort_run(e, start, trace, audit_violations, successful_iters, x, p),
    };
    let mut fsq = fvec.norm_squared();
    let mut grad = match p.apply_adjoint(&x, &fvec) {
        Ok(g) => g,
        Err(e) => return abort_run(e, start, trace, audit_violations, successful_iters, x, p),
    };
    let mut grad_norm = man.norm(&grad)?;

    let mut k = 0usize;
    let status = loop {
        if grad_norm <= cfg.grad_tol {
            break Status::GradTol;
        }
        if 0.5 * fsq <= cfg.f_tol {
            break Status::FTol;
        }
        if k >= cfg.max_iter {
            break Status::MaxIter;
        }
        if let Some(budget) = cfg.time_budget {
            if start.elapsed().as_secs_f64() >= budget {
                break Status::TimeBudget;
            }
        }
        if mu > MU_OVERFLOW {
            break Status::StepFailure;
        }

        let lambda = mu * fsq;
        let sub = match solve_subproblem_with_gradient(p, &x, &grad, lambda, &cfg.subproblem) {
            Ok(s) => s,
            Err(e @ Error::NonFiniteEval { .. }) => {
                return abort_run(e, start, trace, audit_violations, successful_iters, x, p)
            }
            Err(e) => return Err(e),
        };
        let s = sub.step;
        let step_norm = man.norm(&s)?;

        let theta0 = fsq;
        let theta_s = match theta_with_residual(p, &x, &fvec, &s, lambda) {
            Ok(t) => t,
            Err(e @ Error::NonFiniteEval { .. }) => {
                return abort_run(e, start, trace, audit_violations, successful_iters, x, p)
            }
            Err(e) => return Err(e),
        };
        let denom = 0.5 * (theta0 - theta_s);

        if cfg.audit {
            let jac_norm = jacobian_norm_estimate(p, &x)?;
            let ctx = AuditContext {
                grad_norm,
                jac_norm,
                lambda,
                step_norm,
                theta0,
                theta_s,
                grad_dot_step: man.inner(&grad, &s)?,
            };
            audit_violations.extend(audit_iteration(k, &ctx));
        }

        // Attempt the move. A degenerate predicted decrease or a rank drop in
        // the retraction rejects the step like any untrustworthy iteration.
        let mut accepted: Option<(Point, nalgebra::DVector<f64>, f64)> = None;
        let mut rho_k = f64::NAN;
        if denom > MODEL_DECREASE_FLOOR {
            match man.retract(&x, &s) {
                Ok(x_new) => match p.residual(&x_new) {
                    Ok(f_new_vec) => {
                        let f_new_sq = f_new_vec.norm_squared();
                        rho_k = (0.5 * theta0 - 0.5 * f_new_sq) / denom;
                        if rho_k >= cfg.eta {
                            accepted = Some((x_new, f_new_vec, f_new_sq));
                        }
                    }
                    Err(e @ Error::NonFiniteEval { .. }) => {
                        return abort_run(
                            e,
                            start,
                            trace,
                            audit_violations,
                            successful_iters,
                            x,
                            p,
                        )
                    }
                    Err(e) => return Err(e),
                },
                Err(Error::RankDrop { .. }) => {}
                Err(e) => return Err(e),
            }
        }

        let successful = accepted.is_some();
        trace.records.push(IterRecord {
            iter: k,
            f: 0.5 * fsq,
            grad_norm,
            lambda,
            mu,
            rho: rho_k,
            step_norm,
            successful,
            sub_iters: sub.iters,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });

        if let Some((x_new, f_new_vec, f_new_sq)) = accepted {
            x = x_new;
            fvec = f_new_vec;
            fsq = f_new_sq;
            grad = match p.apply_adjoint(&x, &fvec) {
                Ok(g) => g,
                Err(e @ Error::NonFiniteEval { .. }) => {
                    return abort_run(e, start, trace, audit_violations, successful_iters, x, p)
                }
                Err(e) => return Err(e),
            };
            grad_norm = man.norm(&grad)?;
            successful_iters += 1;
        }
        let (mu_next, mu_bar_next) = update_mu(mu, mu_bar, successful, cfg);
        mu = mu_next;
        mu_bar = mu_bar_next;
        k += 1;
    };

    Ok(finish_run(
        status,
        start,
        trace,
        audit_violations,
        successful_iters,
        x,
        0.5 * fsq,
        grad_norm,
    ))
}

fn abort_run(
    err: Error,
    start: Instant,
    trace: Trace,
    audit_violations: Vec<String>,
    successful_iters: usize,
    x: Point,
    p: &dyn ResidualProblem,
) -> Result<RunSummary> {
    // Evaluation blew up; report what we know with a partial trace.
    let (final_f, final_grad) = match (&err, trace.records.last()) {
        (_, Some(r)) => (r.f, r.grad_norm),
        _ => (f64::NAN, f64::NAN),
    };
    let _ = p;
    let mut summary = finish_run(
        Status::StepFailure,
        start,
        trace,
        audit_violations,
        successful_iters,
        x,
        final_f,
        final_grad,
    );
    summary
        .audit_violations
        .push(format!("aborted: {err}"));
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn finish_run(
    status: Status,
    start: Instant,
    trace: Trace,
    audit_violations: Vec<String>,
    successful_iters: usize,
    x: Point,
    final_f: f64,
    final_grad_norm: f64,
) -> RunSummary {
    let mut grads: Vec<f64> = trace.records.iter().map(|r| r.grad_norm).collect();
    grads.push(final_grad_norm);
    let order = estimate_order(&grads, 4).ok();
    RunSummary {
        status,
        iters: trace.len(),
        successful_iters,
        final_f,
        final_grad_norm,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        order,
        trace,
        final_point: Some(x),
        audit_violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{Manifold, TangentCoords};
    use crate::manifolds::Euclidean;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    struct IdentityResidual {
        manifold: Euclidean,
        n: usize,
    }

    impl ResidualProblem for IdentityResidual {
        fn manifold(&self) -> &dyn Manifold {
            &self.manifold
        }
        fn residual_dim(&self) -> usize {
            self.n
        }
        fn residual(&self, x: &Point) -> Result<DVector<f64>> {
            Ok(x.coords().as_vector().clone())
        }
        fn apply_jacobian(&self, _x: &Point, v: &Tangent) -> Result<DVector<f64>> {
            Ok(v.coords().as_vector().clone())
        }
        fn apply_adjoint(&self, x: &Point, u: &DVector<f64>) -> Result<Tangent> {
            Ok(Tangent::new(x.clone(), TangentCoords::Vector(u.clone())))
        }
    }

    fn one_d() -> IdentityResidual {
        IdentityResidual {
            manifold: Euclidean::new(1),
            n: 1,
        }
    }

    #[test]
    fn rho_hand_value() {
        // x = 1, lambda = 1, s = -0.5: numerator 0.5 - 0.125 = 0.375,
        // denominator (1 - 0.5)/2 = 0.25, so rho = 1.5.
        let p = one_d();
        let x = Point::from_slice(&[1.0]);
        let s = Tangent::new(x.clone(), TangentCoords::Vector(DVector::from_row_slice(&[-0.5])));
        assert_relative_eq!(rho(&p, &x, &s, 1.0).unwrap(), 1.5, epsilon = 1e-14);
    }

    #[test]
    fn rho_of_zero_step_is_degenerate() {
        let p = one_d();
        let x = Point::from_slice(&[1.0]);
        let s = p.manifold.zero_tangent(&x);
        assert!(matches!(
            rho(&p, &x, &s, 1.0),
            Err(Error::DegenerateModelDecrease(_))
        ));
    }

    #[test]
    fn linear_residual_iterations_always_succeed() {
        // For linear F on Euclidean space rho = 1 + lambda |s|^2 / (theta0 -
        // theta(s)) >= 1 > eta, so every iteration is successful.
        let p = IdentityResidual {
            manifold: Euclidean::new(3),
            n: 3,
        };
        let x0 = Point::from_slice(&[1.0, -2.0, 0.5]);
        let summary = rlm_run(&p, &x0, &RlmConfig::default()).unwrap();
        assert!(summary.trace.records.iter().all(|r| r.successful));
        assert!(summary.trace.records.iter().all(|r| r.rho >= 1.0));
        assert_eq!(summary.status, Status::GradTol);
    }

    #[test]
    fn mu_updates_follow_the_damping_schedule() {
        let cfg = RlmConfig {
            mu_min: 0.1,
            beta: 5.0,
            flag_nz: false,
            ..RlmConfig::default()
        };
        // Unsuccessful: mu inflates by beta.
        assert_eq!(update_mu(0.1, 0.1, false, &cfg), (0.5, 0.1));
        // Successful without flag_nz: shrink mu_bar/beta floored at mu_min.
        let (mu, mu_bar) = update_mu(0.5, 0.1, true, &cfg);
        assert_eq!(mu_bar, 0.5);
        assert_eq!(mu, 0.1f64.max(0.5 / 5.0));
        // Successful with flag_nz: hold.
        let cfg_nz = RlmConfig {
            flag_nz: true,
            ..cfg
        };
        assert_eq!(update_mu(0.5, 0.2, true, &cfg_nz), (0.5, 0.5));
    }

    #[test]
    fn stationary_start_stops_immediately() {
        let p = one_d();
        let x0 = Point::from_slice(&[0.0]);
        let summary = rlm_run(&p, &x0, &RlmConfig::default()).unwrap();
        assert_eq!(summary.status, Status::GradTol);
        assert_eq!(summary.iters, 0);
    }

    #[test]
    fn first_iteration_hand_simulation() {
        // F(x) = x from x0 = 1 with eta = 0.2, mu_min = 0.1, beta = 5:
        // lambda_0 = 0.1, s_0 = -1/1.1, and rho_0 > eta so the step lands.
        let p = one_d();
        let x0 = Point::from_slice(&[1.0]);
        let summary = rlm_run(&p, &x0, &RlmConfig::default()).unwrap();
        let r0 = &summary.trace.records[0];
        assert_eq!(r0.lambda, 0.1);
        let s0: f64 = -1.0 / 1.1;
        assert_relative_eq!(r0.step_norm, s0.abs(), epsilon = 1e-12);
        let x1: f64 = 1.0 + s0;
        let theta_s = x1 * x1 + 0.1 * s0 * s0;
        let expected_rho = (0.5 - 0.5 * x1 * x1) / (0.5 * (1.0 - theta_s));
        assert_relative_eq!(r0.rho, expected_rho, epsilon = 1e-12);
        assert!(r0.successful);
    }

    #[test]
    fn audit_accepts_hand_checked_iteration() {
        // theta(0) - theta(s) = 0.5 meets the bound 1/(1+1) = 0.5 exactly,
        // and |s| = 0.5 <= 1/1.
        let ctx = AuditContext {
            grad_norm: 1.0,
            jac_norm: 1.0,
            lambda: 1.0,
            step_norm: 0.5,
            theta0: 1.0,
            theta_s: 0.5,
            grad_dot_step: -0.5,
        };
        assert!(audit_iteration(0, &ctx).is_empty());
    }

    #[test]
    fn audit_flags_violations() {
        let ctx = AuditContext {
            grad_norm: 1.0,
            jac_norm: 1.0,
            lambda: 1.0,
            step_norm: 2.0, // above |grad|/lambda = 1
            theta0: 1.0,
            theta_s: 0.9, // decrease 0.1 below bound 0.5
            grad_dot_step: 0.1, // ascent direction
        };
        assert_eq!(audit_iteration(3, &ctx).len(), 3);
    }

    #[test]
    fn audit_trivial_at_zero_gradient() {
        let ctx = AuditContext {
            grad_norm: 0.0,
            jac_norm: 1.0,
            lambda: 1.0,
            step_norm: 0.0,
            theta0: 1.0,
            theta_s: 1.0,
            grad_dot_step: 0.0,
        };
        assert!(audit_iteration(0, &ctx).is_empty());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let p = one_d();
        let x0 = Point::from_slice(&[1.0]);
        let cfg = RlmConfig {
            eta: 1.5,
            ..RlmConfig::default()
        };
        assert!(rlm_run(&p, &x0, &cfg).is_err());
    }

    #[test]
    fn lambda_matches_mu_times_fsq_exactly() {
        let p = IdentityResidual {
            manifold: Euclidean::new(2),
            n: 2,
        };
        let x0 = Point::from_slice(&[3.0, 4.0]);
        let summary = rlm_run(&p, &x0, &RlmConfig::default()).unwrap();
        let r0 = &summary.trace.records[0];
        // |F|^2 = 25 at x0, mu_0 = 0.1.
        assert_eq!(r0.lambda, 0.1 * 25.0);
        assert_eq!(r0.lambda, r0.mu * (2.0 * r0.f));
    }
}
