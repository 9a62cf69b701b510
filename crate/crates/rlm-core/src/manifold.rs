//! Manifold interface: points, tangent vectors, the metric/retraction contract,
//! orthonormal tangent bases, and retraction diagnostics.
//!
//! Points and tangent vectors are value-like; a tangent vector always carries
//! its base point and every binary operation verifies base agreement. Concrete
//! geometries live in [`crate::manifolds`].

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::error::{Error, Result};

/// Absolute tolerance for membership and tangency tests on defining residuals.
pub const MEMBERSHIP_TOL: f64 = 1e-10;

/// One standard-normal draw from a type-erased generator.
pub(crate) fn gauss(rng: &mut dyn RngCore) -> f64 {
    use rand_distr::Distribution;
    rand_distr::StandardNormal.sample(rng)
}

/// `a += alpha * b` for dense matrices.
pub(crate) fn mat_axpy(a: &mut DMatrix<f64>, alpha: f64, b: &DMatrix<f64>) {
    a.zip_apply(b, |x, y| *x += alpha * y);
}

/// Candidates whose norm after orthogonalization falls below this are skipped
/// during Gram-Schmidt.
pub const BASIS_SKIP_TOL: f64 = 1e-8;

/// Manifold-specific representation of a point.
#[derive(Debug, Clone, PartialEq)]
pub enum PointCoords {
    /// Flat array: Euclidean point, or ambient unit vector on the sphere.
    Vector(DVector<f64>),
    /// Factored `(U, S, V)` with `U` m-by-k and `V` n-by-k orthonormal,
    /// `S` a full k-by-k block; the represented matrix is `U S V^T`.
    Svd {
        u: DMatrix<f64>,
        s: DMatrix<f64>,
        v: DMatrix<f64>,
    },
    /// Tuple of component points on a product manifold.
    Tuple(Vec<PointCoords>),
}

impl PointCoords {
    pub fn as_vector(&self) -> &DVector<f64> {
        match self {
            PointCoords::Vector(v) => v,
            other => panic!("expected vector point coords, got {}", other.kind()),
        }
    }

    pub fn as_svd(&self) -> (&DMatrix<f64>, &DMatrix<f64>, &DMatrix<f64>) {
        match self {
            PointCoords::Svd { u, s, v } => (u, s, v),
            other => panic!("expected factored point coords, got {}", other.kind()),
        }
    }

    pub fn as_tuple(&self) -> &[PointCoords] {
        match self {
            PointCoords::Tuple(parts) => parts,
            other => panic!("expected tuple point coords, got {}", other.kind()),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            PointCoords::Vector(_) => "vector",
            PointCoords::Svd { .. } => "svd",
            PointCoords::Tuple(_) => "tuple",
        }
    }
}

/// A point on a manifold. Cheap to clone; clones share storage, which also
/// makes base-point equality checks O(1) on the common path.
#[derive(Debug, Clone)]
pub struct Point(Arc<PointCoords>);

impl Point {
    pub fn new(coords: PointCoords) -> Self {
        Point(Arc::new(coords))
    }

    pub fn vector(v: DVector<f64>) -> Self {
        Point::new(PointCoords::Vector(v))
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Point::vector(DVector::from_row_slice(v))
    }

    pub fn svd(u: DMatrix<f64>, s: DMatrix<f64>, v: DMatrix<f64>) -> Self {
        Point::new(PointCoords::Svd { u, s, v })
    }

    pub fn tuple(parts: Vec<PointCoords>) -> Self {
        Point::new(PointCoords::Tuple(parts))
    }

    pub fn coords(&self) -> &PointCoords {
        &self.0
    }
}

impl PartialEq for Point {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0 == other.0
    }
}

/// Manifold-specific representation of a tangent vector at some point.
#[derive(Debug, Clone, PartialEq)]
pub enum TangentCoords {
    Vector(DVector<f64>),
    /// Factored tangent `(M, U_p, V_p)` at a fixed-rank point `(U, S, V)`,
    /// with `U^T U_p = 0` and `V^T V_p = 0`; the ambient representation is
    /// `U M V^T + U_p V^T + U V_p^T`.
    Factored {
        m: DMatrix<f64>,
        up: DMatrix<f64>,
        vp: DMatrix<f64>,
    },
    Tuple(Vec<TangentCoords>),
}

impl TangentCoords {
    pub fn as_vector(&self) -> &DVector<f64> {
        match self {
            TangentCoords::Vector(v) => v,
            _ => panic!("expected vector tangent coords"),
        }
    }

    pub fn as_factored(&self) -> (&DMatrix<f64>, &DMatrix<f64>, &DMatrix<f64>) {
        match self {
            TangentCoords::Factored { m, up, vp } => (m, up, vp),
            _ => panic!("expected factored tangent coords"),
        }
    }

    pub fn as_tuple(&self) -> &[TangentCoords] {
        match self {
            TangentCoords::Tuple(parts) => parts,
            _ => panic!("expected tuple tangent coords"),
        }
    }

    /// Coordinate dot product; coincides with the Riemannian metric for every
    /// geometry in this crate (Euclidean, embedded sphere, embedded fixed
    /// rank, and products thereof).
    pub fn dot(&self, other: &TangentCoords) -> f64 {
        match (self, other) {
            (TangentCoords::Vector(a), TangentCoords::Vector(b)) => a.dot(b),
            (
                TangentCoords::Factored { m, up, vp },
                TangentCoords::Factored {
                    m: m2,
                    up: up2,
                    vp: vp2,
                },
            ) => m.dot(m2) + up.dot(up2) + vp.dot(vp2),
            (TangentCoords::Tuple(a), TangentCoords::Tuple(b)) => {
                debug_assert_eq!(a.len(), b.len());
                a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
            }
            _ => panic!("mismatched tangent representations"),
        }
    }

    /// In-place `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &TangentCoords) {
        match (self, other) {
            (TangentCoords::Vector(a), TangentCoords::Vector(b)) => a.axpy(alpha, b, 1.0),
            (
                TangentCoords::Factored { m, up, vp },
                TangentCoords::Factored {
                    m: m2,
                    up: up2,
                    vp: vp2,
                },
            ) => {
                mat_axpy(m, alpha, m2);
                mat_axpy(up, alpha, up2);
                mat_axpy(vp, alpha, vp2);
            }
            (TangentCoords::Tuple(a), TangentCoords::Tuple(b)) => {
                debug_assert_eq!(a.len(), b.len());
                for (x, y) in a.iter_mut().zip(b) {
                    x.axpy(alpha, y);
                }
            }
            _ => panic!("mismatched tangent representations"),
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        match self {
            TangentCoords::Vector(v) => *v *= alpha,
            TangentCoords::Factored { m, up, vp } => {
                *m *= alpha;
                *up *= alpha;
                *vp *= alpha;
            }
            TangentCoords::Tuple(parts) => parts.iter_mut().for_each(|p| p.scale(alpha)),
        }
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        match self {
            TangentCoords::Vector(v) => v.iter().all(|&x| x == 0.0),
            TangentCoords::Factored { m, up, vp } => {
                m.iter().all(|&x| x == 0.0)
                    && up.iter().all(|&x| x == 0.0)
                    && vp.iter().all(|&x| x == 0.0)
            }
            TangentCoords::Tuple(parts) => parts.iter().all(|p| p.is_zero()),
        }
    }
}

/// Tangent vector: coordinates plus the point they are anchored at.
#[derive(Debug, Clone)]
pub struct Tangent {
    base: Point,
    coords: TangentCoords,
}

impl Tangent {
    pub fn new(base: Point, coords: TangentCoords) -> Self {
        Tangent { base, coords }
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn coords(&self) -> &TangentCoords {
        &self.coords
    }

    pub fn into_coords(self) -> TangentCoords {
        self.coords
    }

    pub fn check_same_base(&self, other: &Tangent) -> Result<()> {
        if self.base == other.base {
            Ok(())
        } else {
            Err(Error::BaseMismatch)
        }
    }

    pub fn check_base_is(&self, x: &Point) -> Result<()> {
        if self.base == *x {
            Ok(())
        } else {
            Err(Error::BaseMismatch)
        }
    }

    /// Returns `self + alpha * other`, verifying both live in the same
    /// tangent space.
    pub fn add_scaled(&self, alpha: f64, other: &Tangent) -> Result<Tangent> {
        self.check_same_base(other)?;
        let mut coords = self.coords.clone();
        coords.axpy(alpha, &other.coords);
        Ok(Tangent::new(self.base.clone(), coords))
    }

    pub fn scaled(&self, alpha: f64) -> Tangent {
        let mut coords = self.coords.clone();
        coords.scale(alpha);
        Tangent::new(self.base.clone(), coords)
    }
}

/// Ambient-space vector used by tangent projection and diagnostics.
#[derive(Debug, Clone)]
pub enum AmbientVec {
    Vector(DVector<f64>),
    Matrix(DMatrix<f64>),
    Tuple(Vec<AmbientVec>),
}

impl AmbientVec {
    pub fn as_vector(&self) -> &DVector<f64> {
        match self {
            AmbientVec::Vector(v) => v,
            _ => panic!("expected ambient vector"),
        }
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        match self {
            AmbientVec::Matrix(m) => m,
            _ => panic!("expected ambient matrix"),
        }
    }

    pub fn as_tuple(&self) -> &[AmbientVec] {
        match self {
            AmbientVec::Tuple(t) => t,
            _ => panic!("expected ambient tuple"),
        }
    }

    pub fn axpy(&mut self, alpha: f64, other: &AmbientVec) {
        match (self, other) {
            (AmbientVec::Vector(a), AmbientVec::Vector(b)) => a.axpy(alpha, b, 1.0),
            (AmbientVec::Matrix(a), AmbientVec::Matrix(b)) => mat_axpy(a, alpha, b),
            (AmbientVec::Tuple(a), AmbientVec::Tuple(b)) => {
                debug_assert_eq!(a.len(), b.len());
                for (x, y) in a.iter_mut().zip(b) {
                    x.axpy(alpha, y);
                }
            }
            _ => panic!("mismatched ambient representations"),
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        match self {
            AmbientVec::Vector(v) => *v *= alpha,
            AmbientVec::Matrix(m) => *m *= alpha,
            AmbientVec::Tuple(t) => t.iter_mut().for_each(|p| p.scale(alpha)),
        }
    }

    pub fn dot(&self, other: &AmbientVec) -> f64 {
        match (self, other) {
            (AmbientVec::Vector(a), AmbientVec::Vector(b)) => a.dot(b),
            (AmbientVec::Matrix(a), AmbientVec::Matrix(b)) => a.dot(b),
            (AmbientVec::Tuple(a), AmbientVec::Tuple(b)) => {
                a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
            }
            _ => panic!("mismatched ambient representations"),
        }
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self - other` as a new value.
    pub fn sub(&self, other: &AmbientVec) -> AmbientVec {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }
}

/// The manifold contract consumed by problems, solvers, and diagnostics.
///
/// Implementations must keep descriptors immutable; points and tangents are
/// value-like and safe to move across threads.
pub trait Manifold: Send + Sync {
    /// Intrinsic dimension n; every tangent space has this dimension.
    fn dim(&self) -> usize;

    /// Human-readable kind tag plus shape parameters.
    fn descriptor(&self) -> String;

    /// Membership test within [`MEMBERSHIP_TOL`] on the defining residuals.
    fn check_point(&self, x: &Point) -> Result<()>;

    /// Tangency test at the carried base point, same tolerance.
    fn check_tangent(&self, v: &Tangent) -> Result<()>;

    /// Retraction. `retract(x, 0_x) = x`; the differential at zero is the
    /// identity. Results always satisfy the membership test (representations
    /// are re-normalized after the move).
    fn retract(&self, x: &Point, v: &Tangent) -> Result<Point>;

    /// Metric-orthogonal projection of an ambient vector onto `T_x M`.
    fn project_tangent(&self, x: &Point, w: &AmbientVec) -> Result<Tangent>;

    /// The zero vector of `T_x M`.
    fn zero_tangent(&self, x: &Point) -> Tangent;

    /// Embed a point in ambient coordinates (dense; diagnostics only for
    /// large factored manifolds).
    fn point_to_ambient(&self, x: &Point) -> AmbientVec;

    /// Embed a tangent vector in ambient coordinates.
    fn tangent_to_ambient(&self, v: &Tangent) -> AmbientVec;

    /// Deterministic ambient seed set spanning `T_x M`, consumed by
    /// Gram-Schmidt in [`tangent_basis`].
    fn candidate_tangents(&self, x: &Point) -> Vec<Tangent>;

    fn random_point(&self, rng: &mut dyn RngCore) -> Point;

    /// Random tangent vector at `x` (not normalized).
    fn random_tangent(&self, x: &Point, rng: &mut dyn RngCore) -> Tangent;

    /// Riemannian inner product. Symmetric, bilinear, positive definite.
    fn inner(&self, u: &Tangent, v: &Tangent) -> Result<f64> {
        u.check_same_base(v)?;
        Ok(u.coords().dot(v.coords()))
    }

    fn norm(&self, v: &Tangent) -> Result<f64> {
        Ok(self.inner(v, v)?.sqrt())
    }
}

/// Ordered orthonormal basis of a tangent space.
#[derive(Debug, Clone)]
pub struct TangentBasis {
    base: Point,
    vectors: Vec<Tangent>,
}

impl TangentBasis {
    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn vectors(&self) -> &[Tangent] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Coordinates of `v` in this basis (requires orthonormality).
    pub fn coords_of(&self, m: &dyn Manifold, v: &Tangent) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.vectors.len());
        for (i, e) in self.vectors.iter().enumerate() {
            out[i] = m.inner(e, v)?;
        }
        Ok(out)
    }

    /// Reassemble a tangent vector from basis coordinates.
    pub fn combine(&self, m: &dyn Manifold, coeffs: &DVector<f64>) -> Result<Tangent> {
        if coeffs.len() != self.vectors.len() {
            return Err(Error::ShapeMismatch(format!(
                "basis has {} vectors, got {} coefficients",
                self.vectors.len(),
                coeffs.len()
            )));
        }
        let mut acc = m.zero_tangent(&self.base);
        for (i, e) in self.vectors.iter().enumerate() {
            acc = acc.add_scaled(coeffs[i], e)?;
        }
        Ok(acc)
    }
}

/// Deterministic orthonormal tangent basis via Gram-Schmidt with
/// re-orthogonalization over the manifold's canonical candidate set.
pub fn tangent_basis(m: &dyn Manifold, x: &Point) -> Result<TangentBasis> {
    gram_schmidt(m, x, m.candidate_tangents(x))
}

/// Orthonormal basis from random candidates; used to test coordinate
/// independence of subproblem solutions.
pub fn random_tangent_basis(
    m: &dyn Manifold,
    x: &Point,
    rng: &mut dyn RngCore,
) -> Result<TangentBasis> {
    let want = m.dim() + 4;
    let candidates = (0..want).map(|_| m.random_tangent(x, rng)).collect();
    gram_schmidt(m, x, candidates)
}

fn gram_schmidt(m: &dyn Manifold, x: &Point, candidates: Vec<Tangent>) -> Result<TangentBasis> {
    let n = m.dim();
    let mut vectors: Vec<Tangent> = Vec::with_capacity(n);
    for cand in candidates {
        if vectors.len() == n {
            break;
        }
        cand.check_base_is(x)?;
        let mut w = cand;
        // Two projection passes keep the Gram matrix at identity to ~1e-15
        // even for nearly dependent candidates.
        for _ in 0..2 {
            for e in &vectors {
                let c = m.inner(&w, e)?;
                w = w.add_scaled(-c, e)?;
            }
        }
        let nrm = m.norm(&w)?;
        if nrm < BASIS_SKIP_TOL {
            continue;
        }
        vectors.push(w.scaled(1.0 / nrm));
    }
    if vectors.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "Gram-Schmidt produced {} of {} basis vectors on {}",
            vectors.len(),
            n,
            m.descriptor()
        )));
    }
    Ok(TangentBasis {
        base: x.clone(),
        vectors,
    })
}

/// Finite-difference diagnostics of a retraction at `(x, v)` with `|v|_x = 1`.
#[derive(Debug, Clone)]
pub struct RetractionCheck {
    /// Sampled step scales.
    pub ts: Vec<f64>,
    /// `|R_x(t v) - (x + t v)| / t` per sample; tends to 0 for any retraction.
    pub first_order_estimate: Vec<f64>,
    /// Norm of the tangent-projected second difference
    /// `(R_x(t v) - 2 x + R_x(-t v)) / t^2`; tends to 0 for second-order
    /// retractions.
    pub accel_estimate: Vec<f64>,
}

impl RetractionCheck {
    /// Log-log slope of the raw defect `|R_x(tv) - x - tv|` against `t`.
    /// `None` when the defect sits below floating-point floor everywhere
    /// (exact retractions like the Euclidean one).
    pub fn defect_slope(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .ts
            .iter()
            .zip(&self.first_order_estimate)
            .map(|(&t, &e)| (t, e * t))
            .filter(|&(_, d)| d > 1e-14)
            .collect();
        fit_slope(&pts)
    }

    /// Log-log slope of the first-order estimate (defect / t) against `t`.
    pub fn estimate_slope(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .ts
            .iter()
            .zip(&self.first_order_estimate)
            .map(|(&t, &e)| (t, e))
            .filter(|&(_, d)| d > 1e-14)
            .collect();
        fit_slope(&pts)
    }

    /// Best (smallest) acceleration estimate across sampled scales.
    pub fn min_accel(&self) -> f64 {
        self.accel_estimate.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

fn fit_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(t, d) in pts {
        let (x, y) = (t.ln(), d.ln());
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let denom = sxx - sx * sx / n;
    if denom == 0.0 {
        return None;
    }
    Some((sxy - sx * sy / n) / denom)
}

/// Probes the retraction contract at `(x, v)` for `t` in `{1e-2, 1e-3, 1e-4}`.
///
/// Returns the first-order defect estimates `|R_x(tv) - x - tv| / t` and the
/// tangent-projected acceleration estimates of the curve `t -> R_x(tv)` at 0.
pub fn check_retraction(m: &dyn Manifold, x: &Point, v: &Tangent) -> Result<RetractionCheck> {
    v.check_base_is(x)?;
    let nrm = m.norm(v)?;
    if (nrm - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidConfig(format!(
            "check_retraction requires a unit tangent, got norm {nrm:.3e}"
        )));
    }
    let ts = vec![1e-2, 1e-3, 1e-4];
    let xa = m.point_to_ambient(x);
    let va = m.tangent_to_ambient(v);
    let mut first = Vec::with_capacity(ts.len());
    let mut accel = Vec::with_capacity(ts.len());
    for &t in &ts {
        let fwd = m.point_to_ambient(&m.retract(x, &v.scaled(t))?);
        let bwd = m.point_to_ambient(&m.retract(x, &v.scaled(-t))?);

        // First-order defect: R_x(tv) - (x + t v).
        let mut lin = xa.clone();
        lin.axpy(t, &va);
        first.push(fwd.sub(&lin).norm() / t);

        // Second difference, projected back onto T_x M (covariant
        // acceleration; the radial component on curved embeddings is the
        // normal curvature, not a retraction defect).
        let mut second = fwd.clone();
        second.axpy(-2.0, &xa);
        second.axpy(1.0, &bwd);
        second.scale(1.0 / (t * t));
        let proj = m.project_tangent(x, &second)?;
        accel.push(m.norm(&proj)?);
    }
    Ok(RetractionCheck {
        ts,
        first_order_estimate: first,
        accel_estimate: accel,
    })
}
