//! Euclidean space R^n with the canonical inner product.

use nalgebra::DVector;
use rand::RngCore;

use crate::error::{Error, Result};
use crate::manifold::{gauss, AmbientVec, Manifold, Point, PointCoords, Tangent, TangentCoords};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Euclidean {
    n: usize,
}

impl Euclidean {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Euclidean dimension must be at least 1");
        Euclidean { n }
    }
}

fn gaussian_vector(n: usize, rng: &mut dyn RngCore) -> DVector<f64> {
    DVector::from_fn(n, |_, _| gauss(rng))
}

impl Manifold for Euclidean {
    fn dim(&self) -> usize {
        self.n
    }

    fn descriptor(&self) -> String {
        format!("Euclidean({})", self.n)
    }

    fn check_point(&self, x: &Point) -> Result<()> {
        let v = match x.coords() {
            PointCoords::Vector(v) => v,
            _ => return Err(Error::NotOnManifold("expected vector coords".into())),
        };
        if v.len() != self.n {
            return Err(Error::ShapeMismatch(format!(
                "point has {} coords, manifold is {}",
                v.len(),
                self.descriptor()
            )));
        }
        Ok(())
    }

    fn check_tangent(&self, v: &Tangent) -> Result<()> {
        self.check_point(v.base())?;
        match v.coords() {
            TangentCoords::Vector(t) if t.len() == self.n => Ok(()),
            TangentCoords::Vector(t) => Err(Error::ShapeMismatch(format!(
                "tangent has {} coords, manifold is {}",
                t.len(),
                self.descriptor()
            ))),
            _ => Err(Error::NotTangent("expected vector coords".into())),
        }
    }

    fn retract(&self, x: &Point, v: &Tangent) -> Result<Point> {
        v.check_base_is(x)?;
        if v.coords().is_zero() {
            return Ok(x.clone());
        }
        Ok(Point::vector(
            x.coords().as_vector() + v.coords().as_vector(),
        ))
    }

    fn project_tangent(&self, x: &Point, w: &AmbientVec) -> Result<Tangent> {
        let w = w.as_vector();
        if w.len() != self.n {
            return Err(Error::ShapeMismatch(format!(
                "ambient vector has {} coords, manifold is {}",
                w.len(),
                self.descriptor()
            )));
        }
        Ok(Tangent::new(x.clone(), TangentCoords::Vector(w.clone())))
    }

    fn zero_tangent(&self, x: &Point) -> Tangent {
        Tangent::new(x.clone(), TangentCoords::Vector(DVector::zeros(self.n)))
    }

    fn point_to_ambient(&self, x: &Point) -> AmbientVec {
        AmbientVec::Vector(x.coords().as_vector().clone())
    }

    fn tangent_to_ambient(&self, v: &Tangent) -> AmbientVec {
        AmbientVec::Vector(v.coords().as_vector().clone())
    }

    fn candidate_tangents(&self, x: &Point) -> Vec<Tangent> {
        (0..self.n)
            .map(|i| {
                let mut e = DVector::zeros(self.n);
                e[i] = 1.0;
                Tangent::new(x.clone(), TangentCoords::Vector(e))
            })
            .collect()
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Point {
        Point::vector(gaussian_vector(self.n, rng))
    }

    fn random_tangent(&self, x: &Point, rng: &mut dyn RngCore) -> Tangent {
        Tangent::new(
            x.clone(),
            TangentCoords::Vector(gaussian_vector(self.n, rng)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retraction_is_addition() {
        let m = Euclidean::new(2);
        let x = Point::from_slice(&[1.0, 2.0]);
        let v = Tangent::new(x.clone(), TangentCoords::Vector(DVector::from_row_slice(&[3.0, 4.0])));
        let y = m.retract(&x, &v).unwrap();
        assert_eq!(y.coords().as_vector().as_slice(), &[4.0, 6.0]);
    }

    #[test]
    fn orthogonal_axes_have_zero_inner() {
        let m = Euclidean::new(2);
        let x = Point::from_slice(&[0.0, 0.0]);
        let u = Tangent::new(x.clone(), TangentCoords::Vector(DVector::from_row_slice(&[1.0, 0.0])));
        let v = Tangent::new(x.clone(), TangentCoords::Vector(DVector::from_row_slice(&[0.0, 1.0])));
        assert_eq!(m.inner(&u, &v).unwrap(), 0.0);
    }

    #[test]
    fn projection_is_identity() {
        let m = Euclidean::new(2);
        let x = Point::from_slice(&[0.5, -0.5]);
        let w = AmbientVec::Vector(DVector::from_row_slice(&[5.0, 6.0]));
        let t = m.project_tangent(&x, &w).unwrap();
        assert_eq!(t.coords().as_vector().as_slice(), &[5.0, 6.0]);
    }

    #[test]
    fn basis_is_canonical() {
        let m = Euclidean::new(2);
        let x = Point::from_slice(&[1.0, 1.0]);
        let basis = crate::manifold::tangent_basis(&m, &x).unwrap();
        assert_eq!(basis.len(), 2);
        assert_eq!(basis.vectors()[0].coords().as_vector().as_slice(), &[1.0, 0.0]);
        assert_eq!(basis.vectors()[1].coords().as_vector().as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn base_mismatch_is_rejected() {
        let m = Euclidean::new(1);
        let x = Point::from_slice(&[1.0]);
        let y = Point::from_slice(&[2.0]);
        let u = Tangent::new(x, TangentCoords::Vector(DVector::from_row_slice(&[1.0])));
        let v = Tangent::new(y, TangentCoords::Vector(DVector::from_row_slice(&[1.0])));
        assert!(matches!(
            m.inner(&u, &v),
            Err(crate::error::Error::BaseMismatch)
        ));
    }
}
