//! Low-rank matrix completion on the fixed-rank manifold:
//! f(X) = 1/2 |P_Omega(X) - A|_F^2 with a planted rank-k ground truth.
//!
//! The residual enumerates Omega in sorted row-major order; Jacobian and
//! adjoint applications run in O(|Omega| k + (m+n) k^2) without ever forming
//! an m-by-n matrix.

use std::collections::BTreeSet;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::manifold::{gauss, Manifold, Point, Tangent, TangentCoords};
use crate::manifolds::FixedRank;
use crate::problem::{ensure_finite, ResidualProblem};

#[derive(Debug, Clone)]
pub struct CompletionInstance {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub rs: f64,
    pub seed: u64,
    /// Observed index set, sorted row-major; |Omega| = round(rs * k(m+n-k)).
    pub omega: Vec<(usize, usize)>,
    /// Observed entries of the ground truth on omega, in omega order.
    pub values: Vec<f64>,
    /// Ground-truth factors: the full matrix is `al * ar^T`.
    pub al: DMatrix<f64>,
    pub ar: DMatrix<f64>,
}

impl CompletionInstance {
    /// |reconstruct(x) - A_L A_R^T|_F (dense; desk-scale diagnostics).
    pub fn error_to_truth(&self, man: &FixedRank, x: &Point) -> f64 {
        let truth = &self.al * self.ar.transpose();
        (man.reconstruct(x) - truth).norm()
    }

    /// The ground truth as a rank-k point.
    pub fn truth_point(&self, man: &FixedRank) -> Result<Point> {
        man.point_from_lr(&self.al, &self.ar)
    }
}

pub struct CompletionProblem {
    manifold: FixedRank,
    instance: Arc<CompletionInstance>,
}

impl CompletionProblem {
    pub fn instance(&self) -> &CompletionInstance {
        &self.instance
    }

    pub fn fixed_rank(&self) -> &FixedRank {
        &self.manifold
    }
}

/// Target sample count `round(rs * k(m+n-k))`.
pub fn omega_size(m: usize, n: usize, k: usize, rs: f64) -> usize {
    (rs * (k * (m + n - k)) as f64).round() as usize
}

/// Generates a completion instance: gaussian factors `A_L, A_R`, then Omega
/// by rejection sampling without replacement until the target size.
pub fn gen_completion(
    m: usize,
    n: usize,
    k: usize,
    rs: f64,
    seed: u64,
) -> Result<(Arc<CompletionInstance>, CompletionProblem)> {
    if k == 0 || k > m.min(n) {
        return Err(Error::Infeasible(format!(
            "rank k = {k} incompatible with {m}x{n}"
        )));
    }
    let target = omega_size(m, n, k, rs);
    if target > m * n {
        return Err(Error::Infeasible(format!(
            "requested |Omega| = {target} exceeds {m}x{n} = {}",
            m * n
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut al = DMatrix::zeros(m, k);
    for i in 0..m {
        for j in 0..k {
            al[(i, j)] = gauss(&mut rng);
        }
    }
    let mut ar = DMatrix::zeros(n, k);
    for i in 0..n {
        for j in 0..k {
            ar[(i, j)] = gauss(&mut rng);
        }
    }

    let mut set = BTreeSet::new();
    while set.len() < target {
        let i = rng.random_range(0..m);
        let j = rng.random_range(0..n);
        set.insert((i, j));
    }
    let omega: Vec<(usize, usize)> = set.into_iter().collect();
    let values: Vec<f64> = omega
        .iter()
        .map(|&(i, j)| al.row(i).dot(&ar.row(j)))
        .collect();

    let instance = Arc::new(CompletionInstance {
        m,
        n,
        k,
        rs,
        seed,
        omega,
        values,
        al,
        ar,
    });
    let problem = CompletionProblem {
        manifold: FixedRank::new(m, n, k),
        instance: instance.clone(),
    };
    Ok((instance, problem))
}

/// A fresh random rank-k point sampled the same way as the data matrix
/// (gaussian `A_L A_R^T`, truncated to rank k); the usual starting point
/// before steepest-descent refinement.
pub fn completion_random_start(
    m: usize,
    n: usize,
    k: usize,
    seed: u64,
) -> Result<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let man = FixedRank::new(m, n, k);
    let mut al = DMatrix::zeros(m, k);
    for i in 0..m {
        for j in 0..k {
            al[(i, j)] = gauss(&mut rng);
        }
    }
    let mut ar = DMatrix::zeros(n, k);
    for i in 0..n {
        for j in 0..k {
            ar[(i, j)] = gauss(&mut rng);
        }
    }
    man.point_from_lr(&al, &ar)
}

impl ResidualProblem for CompletionProblem {
    fn manifold(&self) -> &dyn Manifold {
        &self.manifold
    }

    fn residual_dim(&self) -> usize {
        self.instance.omega.len()
    }

    fn residual(&self, x: &Point) -> Result<DVector<f64>> {
        let (u, s, v) = x.coords().as_svd();
        let w = u * s; // X_ij = <w_i, v_j>
        let inst = &self.instance;
        let k = inst.k;
        let mut out = DVector::zeros(inst.omega.len());
        for (t, &(i, j)) in inst.omega.iter().enumerate() {
            let mut acc = 0.0;
            for q in 0..k {
                acc += w[(i, q)] * v[(j, q)];
            }
            out[t] = acc - inst.values[t];
        }
        ensure_finite(&out, "completion residual")?;
        Ok(out)
    }

    fn apply_jacobian(&self, x: &Point, t: &Tangent) -> Result<DVector<f64>> {
        t.check_base_is(x)?;
        let (u, _, v) = x.coords().as_svd();
        let (mm, up, vp) = t.coords().as_factored();
        // ambient(t)_ij = <(U M + U_p)_i, v_j> + <u_i, (V_p)_j>
        let a1 = u * mm + up;
        let inst = &self.instance;
        let k = inst.k;
        let mut out = DVector::zeros(inst.omega.len());
        for (t_idx, &(i, j)) in inst.omega.iter().enumerate() {
            let mut acc = 0.0;
            for q in 0..k {
                acc += a1[(i, q)] * v[(j, q)] + u[(i, q)] * vp[(j, q)];
            }
            out[t_idx] = acc;
        }
        ensure_finite(&out, "completion jacobian")?;
        Ok(out)
    }

    fn apply_adjoint(&self, x: &Point, uvec: &DVector<f64>) -> Result<Tangent> {
        if uvec.len() != self.instance.omega.len() {
            return Err(Error::ShapeMismatch(format!(
                "adjoint input has {} entries, |Omega| = {}",
                uvec.len(),
                self.instance.omega.len()
            )));
        }
        let (u, _, v) = x.coords().as_svd();
        let k = self.instance.k;
        // W = scatter(uvec) on Omega; accumulate W V and W^T U directly.
        let mut wv = DMatrix::zeros(self.instance.m, k);
        let mut wtu = DMatrix::zeros(self.instance.n, k);
        for (t_idx, &(i, j)) in self.instance.omega.iter().enumerate() {
            let c = uvec[t_idx];
            for q in 0..k {
                wv[(i, q)] += c * v[(j, q)];
                wtu[(j, q)] += c * u[(i, q)];
            }
        }
        let m_blk = u.transpose() * &wv;
        let up = &wv - u * &m_blk;
        let vp = &wtu - v * m_blk.transpose();
        Ok(Tangent::new(
            x.clone(),
            TangentCoords::Factored {
                m: m_blk,
                up,
                vp,
            },
        ))
    }
}
