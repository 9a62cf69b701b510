//! Manifold of m-by-n matrices of fixed rank k, an embedded submanifold of
//! dimension k(m+n-k).
//!
//! Points are stored factored as `(U, S, V)` with orthonormal `U` (m-by-k) and
//! `V` (n-by-k); tangents as `(M, U_p, V_p)` with `U^T U_p = 0`, `V^T V_p = 0`.
//! The retraction is the metric projection (truncated SVD) computed in
//! factored form via QR of `[U U_p]`, `[V V_p]` and an SVD of a 2k-by-2k core,
//! so no m-by-n matrix is ever materialized. Metric projection onto the
//! rank-k set is a second-order retraction.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::error::{Error, Result};
use crate::manifold::{
    gauss, AmbientVec, Manifold, Point, PointCoords, Tangent, TangentCoords, MEMBERSHIP_TOL,
};

/// Relative singular-value cutoff below which a retraction target is declared
/// to have left the manifold.
pub const RANK_DROP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedRank {
    m: usize,
    n: usize,
    k: usize,
}

impl FixedRank {
    pub fn new(m: usize, n: usize, k: usize) -> Self {
        assert!(k >= 1 && k <= m.min(n), "need 1 <= k <= min(m, n)");
        FixedRank { m, n, k }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.m, self.n, self.k)
    }

    /// Factor a dense matrix into a rank-k point by truncated SVD.
    pub fn point_from_dense(&self, a: &DMatrix<f64>) -> Result<Point> {
        if a.nrows() != self.m || a.ncols() != self.n {
            return Err(Error::ShapeMismatch(format!(
                "matrix is {}x{}, manifold is {}",
                a.nrows(),
                a.ncols(),
                self.descriptor()
            )));
        }
        let (u, sig, v) = svd_desc(a.clone());
        self.truncate_factors(&u, &sig, &v)
    }

    /// Rank-k point from a low-rank product `A_L A_R^T` without forming the
    /// dense matrix: QR both factors, SVD the k-by-k core.
    pub fn point_from_lr(&self, al: &DMatrix<f64>, ar: &DMatrix<f64>) -> Result<Point> {
        if al.nrows() != self.m || ar.nrows() != self.n || al.ncols() != ar.ncols() {
            return Err(Error::ShapeMismatch(
                "low-rank factors do not match manifold shape".into(),
            ));
        }
        let (ql, rl) = al.clone().qr().unpack();
        let (qv, rr) = ar.clone().qr().unpack();
        let core = &rl * rr.transpose();
        let (cu, sig, cv) = svd_desc(core);
        let u = &ql * cu.columns(0, cu.ncols());
        let v = &qv * cv.columns(0, cv.ncols());
        self.truncate_factors(&u, &sig, &v)
    }

    fn truncate_factors(&self, u: &DMatrix<f64>, sig: &DVector<f64>, v: &DMatrix<f64>) -> Result<Point> {
        let k = self.k;
        if sig.len() < k {
            return Err(Error::RankDrop { ratio: 0.0 });
        }
        let ratio = if sig[0] > 0.0 { sig[k - 1] / sig[0] } else { 0.0 };
        if ratio <= RANK_DROP_TOL {
            return Err(Error::RankDrop { ratio });
        }
        let s = DMatrix::from_diagonal(&sig.rows(0, k).into_owned());
        Ok(Point::svd(
            u.columns(0, k).into_owned(),
            s,
            v.columns(0, k).into_owned(),
        ))
    }

    /// Dense `U S V^T` of a point.
    pub fn reconstruct(&self, x: &Point) -> DMatrix<f64> {
        let (u, s, v) = x.coords().as_svd();
        u * s * v.transpose()
    }

    fn check_shapes(&self, x: &Point) -> Result<()> {
        match x.coords() {
            PointCoords::Svd { u, s, v }
                if u.nrows() == self.m
                    && u.ncols() == self.k
                    && s.nrows() == self.k
                    && s.ncols() == self.k
                    && v.nrows() == self.n
                    && v.ncols() == self.k =>
            {
                Ok(())
            }
            PointCoords::Svd { .. } => Err(Error::ShapeMismatch(format!(
                "factored point does not match {}",
                self.descriptor()
            ))),
            _ => Err(Error::NotOnManifold("expected factored coords".into())),
        }
    }
}

/// Singular value decomposition with columns permuted so the singular values
/// are in decreasing order.
fn svd_desc(a: DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let svd = a.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let vt = svd.v_t.expect("svd requested v_t");
    let sig = svd.singular_values;
    let mut idx: Vec<usize> = (0..sig.len()).collect();
    idx.sort_by(|&a, &b| sig[b].partial_cmp(&sig[a]).unwrap());
    let up = DMatrix::from_fn(u.nrows(), idx.len(), |r, c| u[(r, idx[c])]);
    let vp = DMatrix::from_fn(vt.ncols(), idx.len(), |r, c| vt[(idx[c], r)]);
    let sp = DVector::from_fn(idx.len(), |i, _| sig[idx[i]]);
    (up, sp, vp)
}

fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()))
}

fn orthonormality_defect(u: &DMatrix<f64>) -> f64 {
    let mut g = u.transpose() * u;
    for i in 0..g.nrows() {
        g[(i, i)] -= 1.0;
    }
    max_abs(&g)
}

impl Manifold for FixedRank {
    fn dim(&self) -> usize {
        self.k * (self.m + self.n - self.k)
    }

    fn descriptor(&self) -> String {
        format!("FixedRank({},{},{})", self.m, self.n, self.k)
    }

    fn check_point(&self, x: &Point) -> Result<()> {
        self.check_shapes(x)?;
        let (u, s, v) = x.coords().as_svd();
        let du = orthonormality_defect(u);
        let dv = orthonormality_defect(v);
        if du > MEMBERSHIP_TOL || dv > MEMBERSHIP_TOL {
            return Err(Error::NotOnManifold(format!(
                "orthonormality defect U {du:.3e}, V {dv:.3e} on {}",
                self.descriptor()
            )));
        }
        let sig = s.clone_owned().svd(false, false).singular_values;
        let (smax, smin) = (sig.max(), sig.min());
        if smin <= 1e-12 * smax {
            return Err(Error::NotOnManifold(format!(
                "numerical rank of S below k: sigma_k/sigma_1 = {:.3e}",
                smin / smax
            )));
        }
        Ok(())
    }

    fn check_tangent(&self, t: &Tangent) -> Result<()> {
        self.check_point(t.base())?;
        let (u, _, v) = t.base().coords().as_svd();
        let (m, up, vp) = match t.coords() {
            TangentCoords::Factored { m, up, vp } => (m, up, vp),
            _ => return Err(Error::NotTangent("expected factored coords".into())),
        };
        if m.nrows() != self.k
            || m.ncols() != self.k
            || up.nrows() != self.m
            || up.ncols() != self.k
            || vp.nrows() != self.n
            || vp.ncols() != self.k
        {
            return Err(Error::ShapeMismatch(format!(
                "tangent blocks do not match {}",
                self.descriptor()
            )));
        }
        let du = max_abs(&(u.transpose() * up));
        let dv = max_abs(&(v.transpose() * vp));
        if du > MEMBERSHIP_TOL || dv > MEMBERSHIP_TOL {
            return Err(Error::NotTangent(format!(
                "constraint defect U^T U_p {du:.3e}, V^T V_p {dv:.3e}"
            )));
        }
        Ok(())
    }

    fn retract(&self, x: &Point, t: &Tangent) -> Result<Point> {
        t.check_base_is(x)?;
        if t.coords().is_zero() {
            return Ok(x.clone());
        }
        let (u, s, v) = x.coords().as_svd();
        let (m, up, vp) = t.coords().as_factored();
        let k = self.k;

        // Target U(S+M)V^T + U_p V^T + U V_p^T factored as
        // [U U_p] * [[S+M, I],[I, 0]] * [V V_p]^T.
        let mut uu = DMatrix::zeros(self.m, 2 * k);
        uu.columns_mut(0, k).copy_from(u);
        uu.columns_mut(k, k).copy_from(up);
        let mut vv = DMatrix::zeros(self.n, 2 * k);
        vv.columns_mut(0, k).copy_from(v);
        vv.columns_mut(k, k).copy_from(vp);

        let (qu, ru) = uu.qr().unpack();
        let (qv, rv) = vv.qr().unpack();

        let mut core = DMatrix::zeros(2 * k, 2 * k);
        core.view_mut((0, 0), (k, k)).copy_from(&(s + m));
        for i in 0..k {
            core[(i, k + i)] = 1.0;
            core[(k + i, i)] = 1.0;
        }
        let small = &ru * core * rv.transpose();
        let (cu, sig, cv) = svd_desc(small);

        let ratio = if sig[0] > 0.0 { sig[k - 1] / sig[0] } else { 0.0 };
        if ratio <= RANK_DROP_TOL {
            return Err(Error::RankDrop { ratio });
        }

        let u_new = &qu * cu.columns(0, k);
        let v_new = &qv * cv.columns(0, k);

        // Thin-QR polish keeps the factors orthonormal over long runs; the
        // small triangular factors are absorbed into S.
        let (uq, ur) = u_new.qr().unpack();
        let (vq, vr) = v_new.qr().unpack();
        let s_new = ur * DMatrix::from_diagonal(&sig.rows(0, k).into_owned()) * vr.transpose();

        Ok(Point::svd(uq, s_new, vq))
    }

    fn project_tangent(&self, x: &Point, w: &AmbientVec) -> Result<Tangent> {
        let (u, _, v) = x.coords().as_svd();
        let w = w.as_matrix();
        if w.nrows() != self.m || w.ncols() != self.n {
            return Err(Error::ShapeMismatch(format!(
                "ambient matrix is {}x{}, manifold is {}",
                w.nrows(),
                w.ncols(),
                self.descriptor()
            )));
        }
        let wv = w * v;
        let wtu = w.transpose() * u;
        let m = u.transpose() * &wv;
        let up = &wv - u * &m;
        let vp = &wtu - v * m.transpose();
        Ok(Tangent::new(
            x.clone(),
            TangentCoords::Factored { m, up, vp },
        ))
    }

    fn zero_tangent(&self, x: &Point) -> Tangent {
        Tangent::new(
            x.clone(),
            TangentCoords::Factored {
                m: DMatrix::zeros(self.k, self.k),
                up: DMatrix::zeros(self.m, self.k),
                vp: DMatrix::zeros(self.n, self.k),
            },
        )
    }

    fn point_to_ambient(&self, x: &Point) -> AmbientVec {
        AmbientVec::Matrix(self.reconstruct(x))
    }

    fn tangent_to_ambient(&self, t: &Tangent) -> AmbientVec {
        let (u, _, v) = t.base().coords().as_svd();
        let (m, up, vp) = t.coords().as_factored();
        let mut out = u * m * v.transpose();
        out += up * v.transpose();
        out += u * vp.transpose();
        AmbientVec::Matrix(out)
    }

    fn candidate_tangents(&self, x: &Point) -> Vec<Tangent> {
        let (u, _, v) = x.coords().as_svd();
        let k = self.k;
        let mut out = Vec::with_capacity(k * k + self.m * k + self.n * k);
        for i in 0..k {
            for j in 0..k {
                let mut m = DMatrix::zeros(k, k);
                m[(i, j)] = 1.0;
                out.push(Tangent::new(
                    x.clone(),
                    TangentCoords::Factored {
                        m,
                        up: DMatrix::zeros(self.m, k),
                        vp: DMatrix::zeros(self.n, k),
                    },
                ));
            }
        }
        for i in 0..self.m {
            for j in 0..k {
                // (I - U U^T) E_ij: subtract U times the i-th row of U from
                // column j of E_ij.
                let mut up = DMatrix::zeros(self.m, k);
                up[(i, j)] = 1.0;
                let ui = u.row(i).transpose();
                for r in 0..self.m {
                    up[(r, j)] -= u.row(r).transpose().dot(&ui);
                }
                out.push(Tangent::new(
                    x.clone(),
                    TangentCoords::Factored {
                        m: DMatrix::zeros(k, k),
                        up,
                        vp: DMatrix::zeros(self.n, k),
                    },
                ));
            }
        }
        for i in 0..self.n {
            for j in 0..k {
                let mut vp = DMatrix::zeros(self.n, k);
                vp[(i, j)] = 1.0;
                let vi = v.row(i).transpose();
                for r in 0..self.n {
                    vp[(r, j)] -= v.row(r).transpose().dot(&vi);
                }
                out.push(Tangent::new(
                    x.clone(),
                    TangentCoords::Factored {
                        m: DMatrix::zeros(k, k),
                        up: DMatrix::zeros(self.m, k),
                        vp,
                    },
                ));
            }
        }
        out
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Point {
        let gu = DMatrix::from_fn(self.m, self.k, |_, _| gauss(rng));
        let gv = DMatrix::from_fn(self.n, self.k, |_, _| gauss(rng));
        let (u, _) = gu.qr().unpack();
        let (v, _) = gv.qr().unpack();
        let s = DMatrix::from_diagonal(&DVector::from_fn(self.k, |_, _| {
            let g: f64 = gauss(rng);
            g.abs() + 0.5
        }));
        Point::svd(u, s, v)
    }

    fn random_tangent(&self, x: &Point, rng: &mut dyn RngCore) -> Tangent {
        let (u, _, v) = x.coords().as_svd();
        let m = DMatrix::from_fn(self.k, self.k, |_, _| gauss(rng));
        let gu = DMatrix::from_fn(self.m, self.k, |_, _| gauss(rng));
        let gv = DMatrix::from_fn(self.n, self.k, |_, _| gauss(rng));
        let up = &gu - u * (u.transpose() * &gu);
        let vp = &gv - v * (v.transpose() * &gv);
        Tangent::new(x.clone(), TangentCoords::Factored { m, up, vp })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::tangent_basis;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rank_one_e11(m: usize, n: usize) -> Point {
        let mut u = DMatrix::zeros(m, 1);
        u[(0, 0)] = 1.0;
        let mut v = DMatrix::zeros(n, 1);
        v[(0, 0)] = 1.0;
        Point::svd(u, DMatrix::from_element(1, 1, 1.0), v)
    }

    #[test]
    fn dimension_formula() {
        assert_eq!(FixedRank::new(30, 30, 3).dim(), 171);
        assert_eq!(FixedRank::new(2, 2, 1).dim(), 3);
    }

    #[test]
    fn retract_zero_returns_base() {
        let man = FixedRank::new(4, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = man.random_point(&mut rng);
        let y = man.retract(&x, &man.zero_tangent(&x)).unwrap();
        assert!((man.reconstruct(&x) - man.reconstruct(&y)).norm() <= 1e-12);
    }

    #[test]
    fn rank_one_core_update() {
        let man = FixedRank::new(3, 3, 1);
        let x = rank_one_e11(3, 3);
        let t = Tangent::new(
            x.clone(),
            TangentCoords::Factored {
                m: DMatrix::from_element(1, 1, 0.5),
                up: DMatrix::zeros(3, 1),
                vp: DMatrix::zeros(3, 1),
            },
        );
        let y = man.retract(&x, &t).unwrap();
        let rec = man.reconstruct(&y);
        assert_relative_eq!(rec[(0, 0)], 1.5, epsilon = 1e-12);
        assert!(rec.iter().map(|v| v.abs()).sum::<f64>() - 1.5 < 1e-12);
    }

    #[test]
    fn projection_of_orthogonal_dyad_vanishes() {
        let man = FixedRank::new(2, 2, 1);
        let x = rank_one_e11(2, 2);
        let mut w = DMatrix::zeros(2, 2);
        w[(1, 1)] = 1.0;
        let t = man.project_tangent(&x, &AmbientVec::Matrix(w)).unwrap();
        let amb = man.tangent_to_ambient(&t);
        assert!(amb.as_matrix().norm() <= 1e-15);
    }

    #[test]
    fn projection_matches_basis_least_squares() {
        // Metric projection of a random ambient matrix must agree with
        // brute-force projection onto the span of an orthonormal basis.
        let man = FixedRank::new(4, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let x = man.random_point(&mut rng);
            let basis = tangent_basis(&man, &x).unwrap();
            let w = DMatrix::from_fn(4, 3, |_, _| gauss(&mut rng));
            let proj = man.project_tangent(&x, &AmbientVec::Matrix(w.clone())).unwrap();
            let proj_amb = man.tangent_to_ambient(&proj);

            let mut brute: DMatrix<f64> = DMatrix::zeros(4, 3);
            for e in basis.vectors() {
                let ea = man.tangent_to_ambient(e);
                brute += ea.as_matrix() * ea.as_matrix().dot(&w);
            }
            assert!((proj_amb.as_matrix() - brute).norm() <= 1e-8);
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let man = FixedRank::new(5, 4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = man.random_point(&mut rng);
        let w = DMatrix::from_fn(5, 4, |_, _| gauss(&mut rng));
        let p1 = man.project_tangent(&x, &AmbientVec::Matrix(w)).unwrap();
        let p2 = man
            .project_tangent(&x, &man.tangent_to_ambient(&p1))
            .unwrap();
        let diff = p1.add_scaled(-1.0, &p2).unwrap();
        assert!(man.norm(&diff).unwrap() <= 1e-12);
    }

    #[test]
    fn retraction_second_order_defect() {
        let man = FixedRank::new(4, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = man.random_point(&mut rng);
        let v = man.random_tangent(&x, &mut rng);
        let v = v.scaled(1.0 / man.norm(&v).unwrap());
        let check = crate::manifold::check_retraction(&man, &x, &v).unwrap();
        // First-order estimate (defect / t) decays linearly in t.
        assert!(check.estimate_slope().unwrap() >= 0.95);
    }

    #[test]
    fn rank_drop_is_reported() {
        let man = FixedRank::new(2, 2, 1);
        let x = rank_one_e11(2, 2);
        // Move by -S: the target matrix is zero, rank collapses.
        let t = Tangent::new(
            x.clone(),
            TangentCoords::Factored {
                m: DMatrix::from_element(1, 1, -1.0),
                up: DMatrix::zeros(2, 1),
                vp: DMatrix::zeros(2, 1),
            },
        );
        assert!(matches!(man.retract(&x, &t), Err(Error::RankDrop { .. })));
    }

    #[test]
    fn tangency_constraints_verified() {
        let man = FixedRank::new(4, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = man.random_point(&mut rng);
        let t = man.random_tangent(&x, &mut rng);
        man.check_tangent(&t).unwrap();

        let (u, _, _) = x.coords().as_svd();
        let bad = Tangent::new(
            x.clone(),
            TangentCoords::Factored {
                m: DMatrix::zeros(2, 2),
                up: u.clone(),
                vp: DMatrix::zeros(3, 2),
            },
        );
        assert!(man.check_tangent(&bad).is_err());
    }
}
