//! Finite product of manifolds. Points and tangents are tuples; the metric is
//! the sum of the component metrics.

use std::sync::Arc;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::manifold::{AmbientVec, Manifold, Point, PointCoords, Tangent, TangentCoords};

#[derive(Clone)]
pub struct Product {
    components: Vec<Arc<dyn Manifold>>,
}

impl Product {
    pub fn new(components: Vec<Arc<dyn Manifold>>) -> Self {
        assert!(!components.is_empty(), "product needs at least one component");
        Product { components }
    }

    pub fn components(&self) -> &[Arc<dyn Manifold>] {
        &self.components
    }

    fn split_point<'a>(&self, x: &'a Point) -> Result<&'a [PointCoords]> {
        match x.coords() {
            PointCoords::Tuple(parts) if parts.len() == self.components.len() => Ok(parts),
            PointCoords::Tuple(parts) => Err(Error::ShapeMismatch(format!(
                "point has {} components, manifold has {}",
                parts.len(),
                self.components.len()
            ))),
            _ => Err(Error::NotOnManifold("expected tuple coords".into())),
        }
    }

    fn split_tangent<'a>(&self, t: &'a Tangent) -> Result<&'a [TangentCoords]> {
        match t.coords() {
            TangentCoords::Tuple(parts) if parts.len() == self.components.len() => Ok(parts),
            TangentCoords::Tuple(parts) => Err(Error::ShapeMismatch(format!(
                "tangent has {} components, manifold has {}",
                parts.len(),
                self.components.len()
            ))),
            _ => Err(Error::NotTangent("expected tuple coords".into())),
        }
    }
}

impl Manifold for Product {
    fn dim(&self) -> usize {
        self.components.iter().map(|c| c.dim()).sum()
    }

    fn descriptor(&self) -> String {
        let parts: Vec<String> = self.components.iter().map(|c| c.descriptor()).collect();
        format!("Product({})", parts.join(" x "))
    }

    fn check_point(&self, x: &Point) -> Result<()> {
        for (part, man) in self.split_point(x)?.iter().zip(&self.components) {
            man.check_point(&Point::new(part.clone()))?;
        }
        Ok(())
    }

    fn check_tangent(&self, t: &Tangent) -> Result<()> {
        let bases = self.split_point(t.base())?;
        for ((part, base), man) in self
            .split_tangent(t)?
            .iter()
            .zip(bases)
            .zip(&self.components)
        {
            man.check_tangent(&Tangent::new(Point::new(base.clone()), part.clone()))?;
        }
        Ok(())
    }

    fn retract(&self, x: &Point, t: &Tangent) -> Result<Point> {
        t.check_base_is(x)?;
        let bases = self.split_point(x)?;
        let parts = self.split_tangent(t)?;
        let mut out = Vec::with_capacity(self.components.len());
        for ((part, base), man) in parts.iter().zip(bases).zip(&self.components) {
            let bp = Point::new(base.clone());
            let moved = man.retract(&bp, &Tangent::new(bp.clone(), part.clone()))?;
            out.push(moved.coords().clone());
        }
        Ok(Point::tuple(out))
    }

    fn project_tangent(&self, x: &Point, w: &AmbientVec) -> Result<Tangent> {
        let bases = self.split_point(x)?;
        let ws = w.as_tuple();
        if ws.len() != self.components.len() {
            return Err(Error::ShapeMismatch(format!(
                "ambient tuple has {} components, manifold has {}",
                ws.len(),
                self.components.len()
            )));
        }
        let mut parts = Vec::with_capacity(self.components.len());
        for ((wi, base), man) in ws.iter().zip(bases).zip(&self.components) {
            let bp = Point::new(base.clone());
            parts.push(man.project_tangent(&bp, wi)?.into_coords());
        }
        Ok(Tangent::new(x.clone(), TangentCoords::Tuple(parts)))
    }

    fn zero_tangent(&self, x: &Point) -> Tangent {
        let parts = x
            .coords()
            .as_tuple()
            .iter()
            .zip(&self.components)
            .map(|(base, man)| man.zero_tangent(&Point::new(base.clone())).into_coords())
            .collect();
        Tangent::new(x.clone(), TangentCoords::Tuple(parts))
    }

    fn point_to_ambient(&self, x: &Point) -> AmbientVec {
        AmbientVec::Tuple(
            x.coords()
                .as_tuple()
                .iter()
                .zip(&self.components)
                .map(|(base, man)| man.point_to_ambient(&Point::new(base.clone())))
                .collect(),
        )
    }

    fn tangent_to_ambient(&self, t: &Tangent) -> AmbientVec {
        AmbientVec::Tuple(
            t.coords()
                .as_tuple()
                .iter()
                .zip(t.base().coords().as_tuple())
                .zip(&self.components)
                .map(|((part, base), man)| {
                    let bp = Point::new(base.clone());
                    man.tangent_to_ambient(&Tangent::new(bp, part.clone()))
                })
                .collect(),
        )
    }

    fn candidate_tangents(&self, x: &Point) -> Vec<Tangent> {
        let bases = x.coords().as_tuple();
        let zeros: Vec<TangentCoords> = bases
            .iter()
            .zip(&self.components)
            .map(|(base, man)| man.zero_tangent(&Point::new(base.clone())).into_coords())
            .collect();
        let mut out = Vec::new();
        for (i, (base, man)) in bases.iter().zip(&self.components).enumerate() {
            let bp = Point::new(base.clone());
            for cand in man.candidate_tangents(&bp) {
                let mut parts = zeros.clone();
                parts[i] = cand.into_coords();
                out.push(Tangent::new(x.clone(), TangentCoords::Tuple(parts)));
            }
        }
        out
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Point {
        Point::tuple(
            self.components
                .iter()
                .map(|man| man.random_point(rng).coords().clone())
                .collect(),
        )
    }

    fn random_tangent(&self, x: &Point, rng: &mut dyn RngCore) -> Tangent {
        let parts = x
            .coords()
            .as_tuple()
            .iter()
            .zip(&self.components)
            .map(|(base, man)| {
                let bp = Point::new(base.clone());
                man.random_tangent(&bp, rng).into_coords()
            })
            .collect();
        Tangent::new(x.clone(), TangentCoords::Tuple(parts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::{Euclidean, Sphere};
    use nalgebra::DVector;

    fn two_lines() -> Product {
        Product::new(vec![Arc::new(Euclidean::new(1)), Arc::new(Euclidean::new(1))])
    }

    #[test]
    fn componentwise_retraction() {
        let m = two_lines();
        let x = Point::tuple(vec![
            PointCoords::Vector(DVector::from_row_slice(&[1.0])),
            PointCoords::Vector(DVector::from_row_slice(&[2.0])),
        ]);
        let t = Tangent::new(
            x.clone(),
            TangentCoords::Tuple(vec![
                TangentCoords::Vector(DVector::from_row_slice(&[3.0])),
                TangentCoords::Vector(DVector::from_row_slice(&[4.0])),
            ]),
        );
        let y = m.retract(&x, &t).unwrap();
        let parts = y.coords().as_tuple();
        assert_eq!(parts[0].as_vector()[0], 4.0);
        assert_eq!(parts[1].as_vector()[0], 6.0);
    }

    #[test]
    fn inner_is_sum_of_components() {
        let m = two_lines();
        let x = Point::tuple(vec![
            PointCoords::Vector(DVector::from_row_slice(&[0.0])),
            PointCoords::Vector(DVector::from_row_slice(&[0.0])),
        ]);
        let u = Tangent::new(
            x.clone(),
            TangentCoords::Tuple(vec![
                TangentCoords::Vector(DVector::from_row_slice(&[1.0])),
                TangentCoords::Vector(DVector::from_row_slice(&[2.0])),
            ]),
        );
        // Components contribute 1 and 4 under the self inner product.
        assert_eq!(m.inner(&u, &u).unwrap(), 5.0);
        let v = Tangent::new(
            x.clone(),
            TangentCoords::Tuple(vec![
                TangentCoords::Vector(DVector::from_row_slice(&[1.0])),
                TangentCoords::Vector(DVector::from_row_slice(&[1.0])),
            ]),
        );
        // 1*1 + 2*1 = 3: additivity across factors.
        assert_eq!(m.inner(&u, &v).unwrap(), 3.0);
    }

    #[test]
    fn dimension_adds_up() {
        let m = Product::new(vec![Arc::new(Sphere::new(3)), Arc::new(Euclidean::new(2))]);
        assert_eq!(m.dim(), 4);
    }

    #[test]
    fn component_count_mismatch_is_rejected() {
        let m = two_lines();
        let x = Point::tuple(vec![PointCoords::Vector(DVector::from_row_slice(&[1.0]))]);
        assert!(m.check_point(&x).is_err());
    }
}
