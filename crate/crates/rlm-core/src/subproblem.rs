//! The damped least-squares subproblem: minimize
//! `theta(s) = |F(x) + J(x) s|^2 + lambda |s|_x^2` over the tangent space,
//! equivalently solve `(J*J + lambda I) s = -grad f(x)`.
//!
//! Two routes are provided: a dense factorization in an orthonormal tangent
//! frame for small intrinsic dimension, and matrix-free conjugate gradients
//! on the tangent space otherwise.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::manifold::{tangent_basis, Point, Tangent, TangentBasis};
use crate::problem::{gradient, ResidualProblem};

/// Intrinsic dimension at or below which the dense frame route is selected.
pub const DENSE_DIM_LIMIT: usize = 64;

/// Relative residual target of the dense route.
pub const DENSE_TOL: f64 = 1e-12;

/// How the subproblem linear system is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubproblemMethod {
    /// Dense when `dim <= 64`, conjugate gradients otherwise.
    Auto,
    Dense,
    Cg,
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SubproblemConfig {
    pub method: SubproblemMethod,
    /// CG stops when the normal-equation residual drops below
    /// `cg_tol_factor * min(1, |grad f|) * |grad f|`.
    pub cg_tol_factor: f64,
    /// Iteration cap; `None` means `10 * dim`.
    pub cg_max_iter: Option<usize>,
}

impl Default for SubproblemConfig {
    fn default() -> Self {
        SubproblemConfig {
            method: SubproblemMethod::Auto,
            cg_tol_factor: 1e-2,
            cg_max_iter: None,
        }
    }
}

/// Solution of one damped subproblem.
#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub step: Tangent,
    /// Inner iterations spent (CG) or refinement rounds (dense).
    pub iters: usize,
    /// Set when CG hit numerical breakdown and fell back to its last iterate.
    pub flagged: bool,
}

/// `theta(s) = |F(x) + J(x) s|^2 + lambda |s|_x^2`; `theta(0) = 2 f(x)`.
pub fn theta(p: &dyn ResidualProblem, x: &Point, s: &Tangent, lambda: f64) -> Result<f64> {
    let f = p.residual(x)?;
    theta_with_residual(p, x, &f, s, lambda)
}

/// Same as [`theta`] with the residual already evaluated.
pub fn theta_with_residual(
    p: &dyn ResidualProblem,
    x: &Point,
    f: &DVector<f64>,
    s: &Tangent,
    lambda: f64,
) -> Result<f64> {
    let man = p.manifold();
    s.check_base_is(x)?;
    let mut lin = p.apply_jacobian(x, s)?;
    lin += f;
    Ok(lin.norm_squared() + lambda * man.inner(s, s)?)
}

/// Solve `(J*J + lambda I) s = -grad f(x)` for the unique minimizer of theta.
pub fn solve_subproblem(
    p: &dyn ResidualProblem,
    x: &Point,
    lambda: f64,
    cfg: &SubproblemConfig,
) -> Result<SubproblemSolution> {
    let grad = gradient(p, x)?;
    solve_subproblem_with_gradient(p, x, &grad, lambda, cfg)
}

/// Same as [`solve_subproblem`] with the gradient already evaluated.
pub fn solve_subproblem_with_gradient(
    p: &dyn ResidualProblem,
    x: &Point,
    grad: &Tangent,
    lambda: f64,
    cfg: &SubproblemConfig,
) -> Result<SubproblemSolution> {
    if lambda <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "subproblem requires lambda > 0, got {lambda}"
        )));
    }
    let man = p.manifold();
    let dense = match cfg.method {
        SubproblemMethod::Dense => true,
        SubproblemMethod::Cg => false,
        SubproblemMethod::Auto => man.dim() <= DENSE_DIM_LIMIT,
    };
    if dense {
        let basis = tangent_basis(man, x)?;
        solve_dense_in_frame(p, x, grad, lambda, &basis)
    } else {
        solve_cg(p, x, grad, lambda, cfg)
    }
}

/// Dense route: assemble the framed operator `Jhat^T Jhat + lambda I` in an
/// orthonormal basis and factorize. The frame argument is exposed so
/// coordinate-independence checks can inject arbitrary orthonormal frames.
pub fn solve_dense_in_frame(
    p: &dyn ResidualProblem,
    x: &Point,
    grad: &Tangent,
    lambda: f64,
    basis: &TangentBasis,
) -> Result<SubproblemSolution> {
    let man = p.manifold();
    let n = basis.len();
    let m = p.residual_dim();

    let mut jhat = DMatrix::zeros(m, n);
    for (j, e) in basis.vectors().iter().enumerate() {
        jhat.set_column(j, &p.apply_jacobian(x, e)?);
    }
    let ghat = basis.coords_of(man, grad)?;

    let mut a = jhat.transpose() * &jhat;
    for i in 0..n {
        a[(i, i)] += lambda;
    }

    let chol = nalgebra::Cholesky::new(a.clone()).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "framed normal matrix not positive definite at lambda = {lambda:.3e}"
        ))
    })?;
    let rhs = -&ghat;
    let mut shat = chol.solve(&rhs);

    // Iterative refinement pushes the normal-equation residual to the
    // 1e-12 * |grad| target even for poorly scaled lambda.
    let gnorm = ghat.norm();
    let mut rounds = 0usize;
    for _ in 0..3 {
        let resid = &rhs - &a * &shat;
        if resid.norm() <= DENSE_TOL * gnorm.max(f64::MIN_POSITIVE) {
            break;
        }
        shat += chol.solve(&resid);
        rounds += 1;
    }

    let step = basis.combine(man, &shat)?;
    Ok(SubproblemSolution {
        step,
        iters: rounds,
        flagged: false,
    })
}

/// Conjugate gradients on the tangent space with operator
/// `v -> J*(J v) + lambda v`, started from zero.
///
/// The loop works on raw tangent coordinates in place; all iterates share the
/// base point by construction (checked once on entry).
fn solve_cg(
    p: &dyn ResidualProblem,
    x: &Point,
    grad: &Tangent,
    lambda: f64,
    cfg: &SubproblemConfig,
) -> Result<SubproblemSolution> {
    let man = p.manifold();
    grad.check_base_is(x)?;

    let gnorm = man.norm(grad)?;
    let mut s = man.zero_tangent(x).into_coords();
    if gnorm == 0.0 {
        return Ok(SubproblemSolution {
            step: Tangent::new(x.clone(), s),
            iters: 0,
            flagged: false,
        });
    }
    let tol = cfg.cg_tol_factor * gnorm.min(1.0) * gnorm;
    let max_iter = cfg.cg_max_iter.unwrap_or(10 * man.dim());

    // r = b - A s with b = -grad and s = 0.
    let mut r = grad.coords().clone();
    r.scale(-1.0);
    let mut d = r.clone();
    let mut rr = r.dot(&r);
    let mut iters = 0usize;
    let mut flagged = false;

    while rr.sqrt() > tol && iters < max_iter {
        let dir = Tangent::new(x.clone(), d.clone());
        let jd = p.apply_jacobian(x, &dir)?;
        let mut ad = p.apply_adjoint(x, &jd)?.into_coords();
        ad.axpy(lambda, &d);

        let dad = d.dot(&ad);
        if dad <= 0.0 || !dad.is_finite() {
            // The operator is positive definite, so this only happens through
            // rounding on nearly singular systems; keep the last iterate.
            flagged = true;
            break;
        }
        let alpha = rr / dad;
        s.axpy(alpha, &d);
        r.axpy(-alpha, &ad);
        let rr_new = r.dot(&r);
        let beta = rr_new / rr;
        // d = r + beta d
        d.scale(beta);
        d.axpy(1.0, &r);
        rr = rr_new;
        iters += 1;
    }

    Ok(SubproblemSolution {
        step: Tangent::new(x.clone(), s),
        iters,
        flagged,
    })
}

/// Normal-equation residual `|(J*J + lambda I) s + grad f|_x` of a candidate
/// step; used by tests and the per-iteration audit.
pub fn normal_equation_residual(
    p: &dyn ResidualProblem,
    x: &Point,
    s: &Tangent,
    lambda: f64,
) -> Result<f64> {
    let man = p.manifold();
    let js = p.apply_jacobian(x, s)?;
    let jtjs = p.apply_adjoint(x, &js)?;
    let grad = gradient(p, x)?;
    let resid = jtjs.add_scaled(lambda, s)?.add_scaled(1.0, &grad)?;
    man.norm(&resid)
}
