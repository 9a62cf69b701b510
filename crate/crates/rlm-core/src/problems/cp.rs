//! Rank-r CP decomposition of a third-order tensor over a Euclidean product
//! of factor matrices: F(p) = vec(sum_q a1_q (x) a2_q (x) a3_q - B).
//!
//! The Jacobian of the multilinear map is rank-deficient everywhere (factor
//! scaling indeterminacy gives at least 2r null directions), which is the
//! stress case for damped solvers.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::manifold::{gauss, Manifold, Point, PointCoords, Tangent, TangentCoords};
use crate::manifolds::{Euclidean, Product};
use crate::problem::{ensure_finite, ResidualProblem};

/// Dense-storage cap on the input tensor.
pub const MAX_TENSOR_ENTRIES: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct CpInstance {
    pub dims: (usize, usize, usize),
    pub rank: usize,
    /// Noise exponent p in `B = A/|A| + 10^-p E/|E|`; `None` means no noise.
    pub noise_exp: Option<f64>,
    pub seed: u64,
    /// Input tensor B, flattened with index `(i * n2 + j) * n3 + l`.
    pub tensor: DVector<f64>,
    /// Ground-truth factors scaled so their reconstruction equals `A/|A|`.
    pub truth: [DMatrix<f64>; 3],
}

impl CpInstance {
    /// Tensor reconstruction distance `|Phi(x) - Phi(truth)|_F`; invariant to
    /// the factor scaling indeterminacy.
    pub fn error_to_truth(&self, x: &Point) -> f64 {
        let rec = reconstruct(self.dims, self.rank, x);
        let truth = phi(self.dims, self.rank, &self.truth[0], &self.truth[1], &self.truth[2]);
        (rec - truth).norm()
    }

    pub fn truth_point(&self) -> Point {
        Point::tuple(vec![
            PointCoords::Vector(flatten(&self.truth[0])),
            PointCoords::Vector(flatten(&self.truth[1])),
            PointCoords::Vector(flatten(&self.truth[2])),
        ])
    }
}

pub struct CpProblem {
    manifold: Product,
    instance: Arc<CpInstance>,
}

impl CpProblem {
    pub fn instance(&self) -> &CpInstance {
        &self.instance
    }
}

/// Factor matrices are stored row-major in flat Euclidean coordinates.
fn flatten(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(a.nrows() * a.ncols(), |idx, _| {
        a[(idx / a.ncols(), idx % a.ncols())]
    })
}

fn unflatten(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| v[i * cols + j])
}

/// Sum of rank-one terms, flattened row-major.
fn phi(
    dims: (usize, usize, usize),
    rank: usize,
    a1: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    a3: &DMatrix<f64>,
) -> DVector<f64> {
    let (n1, n2, n3) = dims;
    let mut out = DVector::zeros(n1 * n2 * n3);
    for i in 0..n1 {
        for j in 0..n2 {
            for l in 0..n3 {
                let mut acc = 0.0;
                for q in 0..rank {
                    acc += a1[(i, q)] * a2[(j, q)] * a3[(l, q)];
                }
                out[(i * n2 + j) * n3 + l] = acc;
            }
        }
    }
    out
}

fn factors_of(dims: (usize, usize, usize), rank: usize, x: &Point) -> [DMatrix<f64>; 3] {
    let parts = x.coords().as_tuple();
    [
        unflatten(parts[0].as_vector(), dims.0, rank),
        unflatten(parts[1].as_vector(), dims.1, rank),
        unflatten(parts[2].as_vector(), dims.2, rank),
    ]
}

/// Reconstruction Phi(x) of a factor-matrix point.
pub fn reconstruct(dims: (usize, usize, usize), rank: usize, x: &Point) -> DVector<f64> {
    let [a1, a2, a3] = factors_of(dims, rank, x);
    phi(dims, rank, &a1, &a2, &a3)
}

/// Generates a CP instance: gaussian ground-truth factors, unit-normalized
/// signal, additive gaussian noise of relative magnitude `10^-p`.
pub fn gen_cp(
    dims: (usize, usize, usize),
    rank: usize,
    noise_exp: Option<f64>,
    seed: u64,
) -> Result<(Arc<CpInstance>, CpProblem)> {
    let (n1, n2, n3) = dims;
    if rank == 0 {
        return Err(Error::Infeasible("rank must be at least 1".into()));
    }
    let entries = n1 * n2 * n3;
    if entries == 0 || entries > MAX_TENSOR_ENTRIES {
        return Err(Error::Infeasible(format!(
            "tensor with {entries} entries exceeds the dense-storage bound"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut factors = Vec::with_capacity(3);
    for &n in &[n1, n2, n3] {
        let mut a = DMatrix::zeros(n, rank);
        for i in 0..n {
            for q in 0..rank {
                a[(i, q)] = gauss(&mut rng);
            }
        }
        factors.push(a);
    }
    let signal = phi(dims, rank, &factors[0], &factors[1], &factors[2]);
    let signal_norm = signal.norm();
    let mut tensor = signal / signal_norm;
    if let Some(p) = noise_exp {
        let mut e = DVector::zeros(entries);
        for i in 0..entries {
            e[i] = gauss(&mut rng);
        }
        let en = e.norm();
        tensor.axpy(10f64.powf(-p) / en, &e, 1.0);
    }
    // Scale each factor by |A|^(-1/3) so the truth reconstructs the
    // normalized signal exactly.
    let scale = signal_norm.powf(-1.0 / 3.0);
    let truth = [
        &factors[0] * scale,
        &factors[1] * scale,
        &factors[2] * scale,
    ];

    let instance = Arc::new(CpInstance {
        dims,
        rank,
        noise_exp,
        seed,
        tensor,
        truth,
    });
    let manifold = Product::new(vec![
        Arc::new(Euclidean::new(n1 * rank)),
        Arc::new(Euclidean::new(n2 * rank)),
        Arc::new(Euclidean::new(n3 * rank)),
    ]);
    let problem = CpProblem {
        manifold,
        instance: instance.clone(),
    };
    Ok((instance, problem))
}

/// Random starting factors rescaled so the initial reconstruction has unit
/// Frobenius norm, matching the scale of the normalized input tensor.
pub fn cp_random_start(dims: (usize, usize, usize), rank: usize, seed: u64) -> Point {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n1, n2, n3) = dims;
    let mut factors = Vec::with_capacity(3);
    for &n in &[n1, n2, n3] {
        let mut a = DMatrix::zeros(n, rank);
        for i in 0..n {
            for q in 0..rank {
                a[(i, q)] = gauss(&mut rng);
            }
        }
        factors.push(a);
    }
    let norm = phi(dims, rank, &factors[0], &factors[1], &factors[2]).norm();
    let scale = if norm > 0.0 { norm.powf(-1.0 / 3.0) } else { 1.0 };
    Point::tuple(
        factors
            .iter()
            .map(|a| PointCoords::Vector(flatten(&(a * scale))))
            .collect(),
    )
}

impl ResidualProblem for CpProblem {
    fn manifold(&self) -> &dyn Manifold {
        &self.manifold
    }

    fn residual_dim(&self) -> usize {
        let (n1, n2, n3) = self.instance.dims;
        n1 * n2 * n3
    }

    fn residual(&self, x: &Point) -> Result<DVector<f64>> {
        let inst = &self.instance;
        let mut out = reconstruct(inst.dims, inst.rank, x);
        out -= &inst.tensor;
        ensure_finite(&out, "cp residual")?;
        Ok(out)
    }

    fn apply_jacobian(&self, x: &Point, t: &Tangent) -> Result<DVector<f64>> {
        t.check_base_is(x)?;
        let inst = &self.instance;
        let (n1, n2, n3) = inst.dims;
        let r = inst.rank;
        let [a1, a2, a3] = factors_of(inst.dims, r, x);
        let parts = t.coords().as_tuple();
        let x1 = unflatten(parts[0].as_vector(), n1, r);
        let x2 = unflatten(parts[1].as_vector(), n2, r);
        let x3 = unflatten(parts[2].as_vector(), n3, r);

        let mut out = DVector::zeros(n1 * n2 * n3);
        for i in 0..n1 {
            for j in 0..n2 {
                for l in 0..n3 {
                    let mut acc = 0.0;
                    for q in 0..r {
                        acc += x1[(i, q)] * a2[(j, q)] * a3[(l, q)]
                            + a1[(i, q)] * x2[(j, q)] * a3[(l, q)]
                            + a1[(i, q)] * a2[(j, q)] * x3[(l, q)];
                    }
                    out[(i * n2 + j) * n3 + l] = acc;
                }
            }
        }
        ensure_finite(&out, "cp jacobian")?;
        Ok(out)
    }

    fn apply_adjoint(&self, x: &Point, u: &DVector<f64>) -> Result<Tangent> {
        let inst = &self.instance;
        let (n1, n2, n3) = inst.dims;
        if u.len() != n1 * n2 * n3 {
            return Err(Error::ShapeMismatch(format!(
                "adjoint input has {} entries, tensor has {}",
                u.len(),
                n1 * n2 * n3
            )));
        }
        let r = inst.rank;
        let [a1, a2, a3] = factors_of(inst.dims, r, x);
        let mut g1 = DMatrix::zeros(n1, r);
        let mut g2 = DMatrix::zeros(n2, r);
        let mut g3 = DMatrix::zeros(n3, r);
        for i in 0..n1 {
            for j in 0..n2 {
                for l in 0..n3 {
                    let c = u[(i * n2 + j) * n3 + l];
                    if c == 0.0 {
                        continue;
                    }
                    for q in 0..r {
                        g1[(i, q)] += c * a2[(j, q)] * a3[(l, q)];
                        g2[(j, q)] += c * a1[(i, q)] * a3[(l, q)];
                        g3[(l, q)] += c * a1[(i, q)] * a2[(j, q)];
                    }
                }
            }
        }
        Ok(Tangent::new(
            x.clone(),
            TangentCoords::Tuple(vec![
                TangentCoords::Vector(flatten(&g1)),
                TangentCoords::Vector(flatten(&g2)),
                TangentCoords::Vector(flatten(&g3)),
            ]),
        ))
    }
}
