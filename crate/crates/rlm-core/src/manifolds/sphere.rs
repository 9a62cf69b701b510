//! Unit sphere S^{d-1} embedded in R^d, with the exponential-map retraction
//! (a second-order retraction: great circles are geodesics).

use nalgebra::DVector;
use rand::RngCore;

use crate::error::{Error, Result};
use crate::manifold::{
    gauss, AmbientVec, Manifold, Point, PointCoords, Tangent, TangentCoords, MEMBERSHIP_TOL,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sphere {
    ambient_dim: usize,
}

impl Sphere {
    pub fn new(ambient_dim: usize) -> Self {
        assert!(ambient_dim >= 2, "sphere needs ambient dimension >= 2");
        Sphere { ambient_dim }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    fn point_vec<'a>(&self, x: &'a Point) -> Result<&'a DVector<f64>> {
        match x.coords() {
            PointCoords::Vector(v) if v.len() == self.ambient_dim => Ok(v),
            PointCoords::Vector(v) => Err(Error::ShapeMismatch(format!(
                "point has {} coords, manifold is {}",
                v.len(),
                self.descriptor()
            ))),
            _ => Err(Error::NotOnManifold("expected vector coords".into())),
        }
    }
}

/// Great-circle retraction: `cos(|v|) x + sin(|v|) v/|v|`, with the exact
/// base point returned at `v = 0`.
pub fn sphere_exp_retract(x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let nv = v.norm();
    if nv == 0.0 {
        return x.clone();
    }
    let mut out = x * nv.cos();
    out.axpy(nv.sin() / nv, v, 1.0);
    // Renormalize so thousand-iteration runs cannot drift off the sphere.
    let n = out.norm();
    out / n
}

impl Manifold for Sphere {
    fn dim(&self) -> usize {
        self.ambient_dim - 1
    }

    fn descriptor(&self) -> String {
        format!("Sphere({})", self.ambient_dim)
    }

    fn check_point(&self, x: &Point) -> Result<()> {
        let v = self.point_vec(x)?;
        let defect = (v.norm() - 1.0).abs();
        if defect > MEMBERSHIP_TOL {
            return Err(Error::NotOnManifold(format!(
                "unit-norm defect {defect:.3e} on {}",
                self.descriptor()
            )));
        }
        Ok(())
    }

    fn check_tangent(&self, v: &Tangent) -> Result<()> {
        self.check_point(v.base())?;
        let x = self.point_vec(v.base())?;
        let t = match v.coords() {
            TangentCoords::Vector(t) if t.len() == self.ambient_dim => t,
            _ => return Err(Error::NotTangent("expected ambient vector coords".into())),
        };
        let defect = x.dot(t).abs();
        if defect > MEMBERSHIP_TOL {
            return Err(Error::NotTangent(format!(
                "radial component {defect:.3e} on {}",
                self.descriptor()
            )));
        }
        Ok(())
    }

    fn retract(&self, x: &Point, v: &Tangent) -> Result<Point> {
        v.check_base_is(x)?;
        if v.coords().is_zero() {
            return Ok(x.clone());
        }
        Ok(Point::vector(sphere_exp_retract(
            self.point_vec(x)?,
            v.coords().as_vector(),
        )))
    }

    fn project_tangent(&self, x: &Point, w: &AmbientVec) -> Result<Tangent> {
        let xv = self.point_vec(x)?;
        let w = w.as_vector();
        if w.len() != self.ambient_dim {
            return Err(Error::ShapeMismatch(format!(
                "ambient vector has {} coords, manifold is {}",
                w.len(),
                self.descriptor()
            )));
        }
        let mut t = w.clone();
        t.axpy(-xv.dot(w), xv, 1.0);
        Ok(Tangent::new(x.clone(), TangentCoords::Vector(t)))
    }

    fn zero_tangent(&self, x: &Point) -> Tangent {
        Tangent::new(
            x.clone(),
            TangentCoords::Vector(DVector::zeros(self.ambient_dim)),
        )
    }

    fn point_to_ambient(&self, x: &Point) -> AmbientVec {
        AmbientVec::Vector(x.coords().as_vector().clone())
    }

    fn tangent_to_ambient(&self, v: &Tangent) -> AmbientVec {
        AmbientVec::Vector(v.coords().as_vector().clone())
    }

    fn candidate_tangents(&self, x: &Point) -> Vec<Tangent> {
        let xv = x.coords().as_vector();
        (0..self.ambient_dim)
            .map(|i| {
                let mut e = DVector::zeros(self.ambient_dim);
                e[i] = 1.0;
                e.axpy(-xv[i], xv, 1.0);
                Tangent::new(x.clone(), TangentCoords::Vector(e))
            })
            .collect()
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Point {
        loop {
            let g = DVector::from_fn(self.ambient_dim, |_, _| gauss(rng));
            let n = g.norm();
            if n > 1e-6 {
                return Point::vector(g / n);
            }
        }
    }

    fn random_tangent(&self, x: &Point, rng: &mut dyn RngCore) -> Tangent {
        let g = DVector::from_fn(self.ambient_dim, |_, _| gauss(rng));
        self.project_tangent(x, &AmbientVec::Vector(g))
            .expect("projection of a gaussian is tangent")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn e(i: usize, d: usize) -> DVector<f64> {
        let mut v = DVector::zeros(d);
        v[i] = 1.0;
        v
    }

    #[test]
    fn retract_zero_is_identity() {
        let m = Sphere::new(3);
        let x = Point::vector(e(0, 3));
        let z = m.zero_tangent(&x);
        let y = m.retract(&x, &z).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn quarter_great_circle() {
        let m = Sphere::new(2);
        let x = Point::vector(e(0, 2));
        let v = Tangent::new(
            x.clone(),
            TangentCoords::Vector(e(1, 2) * std::f64::consts::FRAC_PI_2),
        );
        let y = m.retract(&x, &v).unwrap();
        let yv = y.coords().as_vector();
        assert_relative_eq!(yv[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(yv[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn half_great_circle() {
        let m = Sphere::new(3);
        let x = Point::vector(e(0, 3));
        let v = Tangent::new(
            x.clone(),
            TangentCoords::Vector(e(1, 3) * std::f64::consts::PI),
        );
        let y = m.retract(&x, &v).unwrap();
        let yv = y.coords().as_vector();
        assert_relative_eq!(yv[0], -1.0, epsilon = 1e-15);
        assert!(yv[1].abs() < 1e-15);
    }

    #[test]
    fn unit_tangent_has_unit_inner() {
        let m = Sphere::new(3);
        let x = Point::vector(e(0, 3));
        let u = Tangent::new(x.clone(), TangentCoords::Vector(e(1, 3)));
        assert_eq!(m.inner(&u, &u).unwrap(), 1.0);
    }

    #[test]
    fn projection_removes_radial_component() {
        let m = Sphere::new(3);
        let x = Point::vector(e(0, 3));
        let w = AmbientVec::Vector(DVector::from_row_slice(&[1.0, 1.0, 0.0]));
        let t = m.project_tangent(&x, &w).unwrap();
        assert_eq!(t.coords().as_vector().as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn basis_at_first_axis() {
        let m = Sphere::new(3);
        let x = Point::vector(e(0, 3));
        let b = crate::manifold::tangent_basis(&m, &x).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b.vectors()[0].coords().as_vector().as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(b.vectors()[1].coords().as_vector().as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn retraction_preserves_unit_norm_in_bulk() {
        let m = Sphere::new(5);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10_000 {
            let x = m.random_point(&mut rng);
            let v = m.random_tangent(&x, &mut rng);
            let y = m.retract(&x, &v).unwrap();
            assert!((y.coords().as_vector().norm() - 1.0).abs() <= 1e-12);
        }
    }
}
