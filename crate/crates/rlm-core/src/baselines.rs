//! Comparison solvers: Riemannian Gauss-Newton with a truncated
//! pseudo-inverse, and Riemannian steepest descent with Armijo backtracking.
//! Both emit the same trace and summary schema as the main solver.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifold::{tangent_basis, Point};
use crate::problem::{gradient, ResidualProblem};
use crate::solver::{finish_run, RunSummary, Status};
use crate::subproblem::DENSE_DIM_LIMIT;
use crate::trace::{IterRecord, Trace};

#[derive(Debug, Clone, Serialize)]
pub struct GnConfig {
    /// Relative singular-value cutoff of the pseudo-inverse.
    pub pinv_tol: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub f_tol: f64,
    pub time_budget: Option<f64>,
}

impl Default for GnConfig {
    fn default() -> Self {
        GnConfig {
            pinv_tol: 1e-12,
            max_iter: 1000,
            grad_tol: 1e-8,
            f_tol: 0.0,
            time_budget: None,
        }
    }
}

impl GnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pinv_tol > 0.0 && self.pinv_tol < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "pinv_tol must be in (0,1), got {}",
                self.pinv_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SdConfig {
    /// Armijo sufficient-decrease constant, in (0, 1).
    pub armijo_c: f64,
    /// Step shrink factor per backtrack, in (0, 1).
    pub backtrack_factor: f64,
    /// First trial step; later iterations start from four times the last
    /// accepted step so the search adapts to the local curvature scale.
    pub initial_step: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub time_budget: Option<f64>,
}

impl Default for SdConfig {
    fn default() -> Self {
        SdConfig {
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            initial_step: 1.0,
            max_iter: 1000,
            grad_tol: 1e-8,
            time_budget: None,
        }
    }
}

impl SdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::InvalidConfig("armijo_c must be in (0,1)".into()));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::InvalidConfig(
                "backtrack_factor must be in (0,1)".into(),
            ));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::InvalidConfig("initial_step must be > 0".into()));
        }
        Ok(())
    }
}

const MAX_BACKTRACKS: usize = 60;

/// Gauss-Newton: `s_k = -pinv(J_k) F(x_k)` in an orthonormal tangent frame,
/// every step taken. Requires small intrinsic dimension; it exists to
/// reproduce the rank-deficiency comparison, not to scale.
pub fn rgn_run(p: &dyn ResidualProblem, x0: &Point, cfg: &GnConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let man = p.manifold();
    man.check_point(x0)?;
    if man.dim() > DENSE_DIM_LIMIT {
        return Err(Error::InvalidConfig(format!(
            "Gauss-Newton needs intrinsic dim <= {DENSE_DIM_LIMIT}, got {}",
            man.dim()
        )));
    }

    let start = Instant::now();
    let mut trace = Trace::default();
    let mut successful = 0usize;
    let mut x = x0.clone();
    let mut fvec = p.residual(&x)?;
    let mut grad = p.apply_adjoint(&x, &fvec)?;
    let mut grad_norm = man.norm(&grad)?;

    let mut k = 0usize;
    let status = loop {
        if grad_norm <= cfg.grad_tol {
            break Status::GradTol;
        }
        if 0.5 * fvec.norm_squared() <= cfg.f_tol {
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

        let basis = tangent_basis(man, &x)?;
        let n = basis.len();
        let mut jhat = DMatrix::zeros(p.residual_dim(), n);
        for (j, e) in basis.vectors().iter().enumerate() {
            jhat.set_column(j, &p.apply_jacobian(&x, e)?);
        }
        // Truncated pseudo-inverse: singular directions below
        // pinv_tol * sigma_1 are dropped so rank-deficient Jacobians still
        // yield finite steps.
        let svd = jhat.svd(true, true);
        let u = svd.u.as_ref().expect("svd with u");
        let vt = svd.v_t.as_ref().expect("svd with v_t");
        let sig = &svd.singular_values;
        let smax = sig.max();
        let utf = u.transpose() * &fvec;
        let mut coeffs: nalgebra::DVector<f64> = nalgebra::DVector::zeros(n);
        for i in 0..sig.len() {
            if sig[i] > cfg.pinv_tol * smax {
                let scale = -utf[i] / sig[i];
                for j in 0..n {
                    coeffs[j] += scale * vt[(i, j)];
                }
            }
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            break Status::StepFailure;
        }
        let step = basis.combine(man, &coeffs)?;
        let step_norm = man.norm(&step)?;

        let x_new = match man.retract(&x, &step) {
            Ok(y) => y,
            Err(Error::RankDrop { .. }) => break Status::StepFailure,
            Err(e) => return Err(e),
        };
        let f_new = match p.residual(&x_new) {
            Ok(v) => v,
            Err(Error::NonFiniteEval { .. }) => break Status::StepFailure,
            Err(e) => return Err(e),
        };

        trace.records.push(IterRecord {
            iter: k,
            f: 0.5 * fvec.norm_squared(),
            grad_norm,
            lambda: f64::NAN,
            mu: f64::NAN,
            rho: f64::NAN,
            step_norm,
            successful: true,
            sub_iters: 0,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });

        x = x_new;
        fvec = f_new;
        grad = p.apply_adjoint(&x, &fvec)?;
        grad_norm = man.norm(&grad)?;
        successful += 1;
        k += 1;
    };

    Ok(finish_run(
        status,
        start,
        trace,
        Vec::new(),
        successful,
        x,
        0.5 * fvec.norm_squared(),
        grad_norm,
    ))
}

/// Steepest descent along `-grad f` with Armijo backtracking.
pub fn rsd_run(p: &dyn ResidualProblem, x0: &Point, cfg: &SdConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let man = p.manifold();
    man.check_point(x0)?;

    let start = Instant::now();
    let mut trace = Trace::default();
    let mut successful = 0usize;
    let mut x = x0.clone();
    let mut f = 0.5 * p.residual(&x)?.norm_squared();
    let mut grad = gradient(p, &x)?;
    let mut grad_norm = man.norm(&grad)?;

    let mut k = 0usize;
    let mut t_init = cfg.initial_step;
    let status = loop {
        if grad_norm <= cfg.grad_tol {
            break Status::GradTol;
        }
        if k >= cfg.max_iter {
            break Status::MaxIter;
        }
        if let Some(budget) = cfg.time_budget {
            if start.elapsed().as_secs_f64() >= budget {
                break Status::TimeBudget;
            }
        }

        let dir = grad.scaled(-1.0);
        let slope = -grad_norm * grad_norm; // <grad, -grad>
        let mut t = t_init;
        let mut found: Option<(Point, f64)> = None;
        let mut backtracks = 0usize;
        for _ in 0..MAX_BACKTRACKS {
            match man.retract(&x, &dir.scaled(t)) {
                Ok(cand) => {
                    let fc = 0.5 * p.residual(&cand)?.norm_squared();
                    if fc <= f + cfg.armijo_c * t * slope {
                        found = Some((cand, fc));
                        break;
                    }
                }
                // Rank drops shrink the trial step like any failed probe.
                Err(Error::RankDrop { .. }) => {}
                Err(e) => return Err(e),
            }
            t *= cfg.backtrack_factor;
            backtracks += 1;
        }
        let Some((x_new, f_new)) = found else {
            break Status::StepFailure;
        };
        t_init = (4.0 * t).min(1e12);

        trace.records.push(IterRecord {
            iter: k,
            f,
            grad_norm,
            lambda: f64::NAN,
            mu: f64::NAN,
            rho: f64::NAN,
            step_norm: t * grad_norm,
            successful: true,
            sub_iters: backtracks,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });

        x = x_new;
        f = f_new;
        grad = gradient(p, &x)?;
        grad_norm = man.norm(&grad)?;
        successful += 1;
        k += 1;
    };

    Ok(finish_run(
        status, start, trace, Vec::new(), successful, x, f, grad_norm,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{Manifold, Tangent, TangentCoords};
    use crate::manifolds::Euclidean;
    use nalgebra::DVector;

    /// Linear residual F(x) = A x - b on Euclidean space.
    struct LinearResidual {
        manifold: Euclidean,
        a: DMatrix<f64>,
        b: DVector<f64>,
    }

    impl ResidualProblem for LinearResidual {
        fn manifold(&self) -> &dyn Manifold {
            &self.manifold
        }
        fn residual_dim(&self) -> usize {
            self.b.len()
        }
        fn residual(&self, x: &Point) -> Result<DVector<f64>> {
            Ok(&self.a * x.coords().as_vector() - &self.b)
        }
        fn apply_jacobian(&self, _x: &Point, v: &Tangent) -> Result<DVector<f64>> {
            Ok(&self.a * v.coords().as_vector())
        }
        fn apply_adjoint(&self, x: &Point, u: &DVector<f64>) -> Result<Tangent> {
            Ok(Tangent::new(
                x.clone(),
                TangentCoords::Vector(self.a.transpose() * u),
            ))
        }
    }

    #[test]
    fn gauss_newton_solves_full_rank_linear_in_one_step() {
        let p = LinearResidual {
            manifold: Euclidean::new(2),
            a: DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]),
            b: DVector::from_row_slice(&[1.0, 2.0, 3.0]),
        };
        let x0 = Point::from_slice(&[5.0, -4.0]);
        let summary = rgn_run(&p, &x0, &GnConfig::default()).unwrap();
        assert_eq!(summary.status, Status::GradTol);
        assert_eq!(summary.iters, 1);
    }

    #[test]
    fn gauss_newton_truncates_rank_deficient_directions() {
        // Second column of A duplicates the first: the framed Jacobian is
        // singular, yet steps must stay finite.
        let p = LinearResidual {
            manifold: Euclidean::new(2),
            a: DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]),
            b: DVector::from_row_slice(&[1.0, 2.0]),
        };
        let x0 = Point::from_slice(&[0.3, 0.7]);
        let summary = rgn_run(&p, &x0, &GnConfig::default()).unwrap();
        assert!(summary
            .trace
            .records
            .iter()
            .all(|r| r.step_norm.is_finite()));
        assert_eq!(summary.status, Status::GradTol);
    }

    #[test]
    fn steepest_descent_decreases_quadratic_bowl() {
        let p = LinearResidual {
            manifold: Euclidean::new(2),
            a: DMatrix::identity(2, 2),
            b: DVector::zeros(2),
        };
        let x0 = Point::from_slice(&[3.0, -4.0]);
        let summary = rsd_run(&p, &x0, &SdConfig::default()).unwrap();
        assert_eq!(summary.status, Status::GradTol);
        for w in summary.trace.records.windows(2) {
            assert!(w[1].f <= w[0].f);
        }
    }
}
