//! Residual-problem abstraction: evaluation of F, matrix-free application of
//! the Jacobian operator J(x) and its metric adjoint J(x)*, the induced
//! objective f = 1/2 |F|^2 with gradient J(x)* F(x), and numerical
//! self-checks (finite differences, adjoint identity, operator norm).

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::manifold::{Manifold, Point, Tangent};

/// A nonlinear least-squares problem on a manifold.
///
/// `J(x)` maps tangent vectors to residual space; `J(x)*` maps residual-space
/// vectors back to the tangent space and satisfies
/// `<J(x)* u, v>_x = <u, J(x) v>` for all probes. Evaluators are pure
/// functions of their arguments and safe to call concurrently at distinct
/// points.
pub trait ResidualProblem: Send + Sync {
    fn manifold(&self) -> &dyn Manifold;

    /// Length m of the residual vector.
    fn residual_dim(&self) -> usize;

    /// F(x). Implementations report non-finite entries as errors.
    fn residual(&self, x: &Point) -> Result<DVector<f64>>;

    /// J(x)[v] for a tangent v at x.
    fn apply_jacobian(&self, x: &Point, v: &Tangent) -> Result<DVector<f64>>;

    /// J(x)*[u] for u in residual space; the result is tangent at x.
    fn apply_adjoint(&self, x: &Point, u: &DVector<f64>) -> Result<Tangent>;
}

/// Rejects non-finite entries, naming the first offending index.
pub fn ensure_finite(v: &DVector<f64>, context: &'static str) -> Result<()> {
    if let Some(index) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteEval { index, context });
    }
    Ok(())
}

/// f(x) = 1/2 |F(x)|^2.
pub fn objective(p: &dyn ResidualProblem, x: &Point) -> Result<f64> {
    Ok(0.5 * p.residual(x)?.norm_squared())
}

/// grad f(x) = J(x)* F(x).
pub fn gradient(p: &dyn ResidualProblem, x: &Point) -> Result<Tangent> {
    let f = p.residual(x)?;
    p.apply_adjoint(x, &f)
}

/// Operator-norm estimate |J(x)| via power iteration on J*J.
///
/// Runs at least 20 steps and continues (up to 100) until the Rayleigh
/// quotient settles, so the estimate is accurate enough to audit the
/// per-iteration decrease bounds.
pub fn jacobian_norm_estimate(p: &dyn ResidualProblem, x: &Point) -> Result<f64> {
    let man = p.manifold();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
    let mut v = man.random_tangent(x, &mut rng);
    let nrm = man.norm(&v)?;
    if nrm == 0.0 {
        return Ok(0.0);
    }
    v = v.scaled(1.0 / nrm);
    let mut lambda = 0.0f64;
    for it in 0..100 {
        let jv = p.apply_jacobian(x, &v)?;
        let w = p.apply_adjoint(x, &jv)?;
        let new_lambda = man.inner(&v, &w)?;
        let wn = man.norm(&w)?;
        if wn == 0.0 {
            return Ok(0.0);
        }
        let settled = it >= 20 && (new_lambda - lambda).abs() <= 1e-13 * new_lambda.max(1.0);
        lambda = new_lambda;
        v = w.scaled(1.0 / wn);
        if settled {
            break;
        }
    }
    Ok(lambda.max(0.0).sqrt())
}

/// Report of [`fd_check`]: worst-case consistency defects over random probes.
#[derive(Debug, Clone)]
pub struct FdReport {
    /// Max relative error between `<grad f, v>_x` and the central difference
    /// of `f` along the retraction curve `t -> R_x(tv)`.
    pub max_grad_rel_err: f64,
    /// Max adjoint-identity defect `|<J*u, v>_x - <u, Jv>|` normalized by
    /// `1 + |u||v|`.
    pub max_adjoint_defect: f64,
    /// Max relative linearity defect of `v -> J(x)v` on random pairs.
    pub max_linearity_defect: f64,
    pub trials: usize,
}

/// Central-difference step for derivative checks.
pub const FD_STEP: f64 = 1e-6;

/// Numerical self-check of gradient, adjoint, and linearity at `x`.
///
/// For each trial a random unit tangent probes the gradient against the
/// central difference of `f` along the retraction; random `(u, v)` pairs
/// probe the adjoint identity and Jacobian linearity.
pub fn fd_check(p: &dyn ResidualProblem, x: &Point, trials: usize, seed: u64) -> Result<FdReport> {
    let man = p.manifold();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grad = gradient(p, x)?;
    let mut max_grad = 0.0f64;
    let mut max_adj = 0.0f64;
    let mut max_lin = 0.0f64;
    for _ in 0..trials {
        let v = man.random_tangent(x, &mut rng);
        let nv = man.norm(&v)?;
        if nv < 1e-12 {
            continue;
        }
        let v = v.scaled(1.0 / nv);

        let ip = man.inner(&grad, &v)?;
        let fp = objective(p, &man.retract(x, &v.scaled(FD_STEP))?)?;
        let fm = objective(p, &man.retract(x, &v.scaled(-FD_STEP))?)?;
        let fd = (fp - fm) / (2.0 * FD_STEP);
        let rel = (fd - ip).abs() / ip.abs().max(fd.abs()).max(1e-12);
        max_grad = max_grad.max(rel);

        let u = DVector::from_fn(p.residual_dim(), |_, _| crate::manifold::gauss(&mut rng));
        let jv = p.apply_jacobian(x, &v)?;
        let ju = p.apply_adjoint(x, &u)?;
        let lhs = man.inner(&ju, &v)?;
        let rhs = u.dot(&jv);
        let defect = (lhs - rhs).abs() / (1.0 + u.norm() * 1.0);
        max_adj = max_adj.max(defect);

        let w = man.random_tangent(x, &mut rng);
        let (a, b) = (0.7, -1.3);
        let combo = v.scaled(a).add_scaled(b, &w)?;
        let j_combo = p.apply_jacobian(x, &combo)?;
        let jw = p.apply_jacobian(x, &w)?;
        let mut expect = jv * a;
        expect.axpy(b, &jw, 1.0);
        let scale = j_combo.norm().max(expect.norm()).max(1e-12);
        max_lin = max_lin.max((&j_combo - &expect).norm() / scale);
    }
    Ok(FdReport {
        max_grad_rel_err: max_grad,
        max_adjoint_defect: max_adj,
        max_linearity_defect: max_lin,
        trials,
    })
}
