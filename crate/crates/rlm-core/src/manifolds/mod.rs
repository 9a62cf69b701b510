//! Concrete geometries: Euclidean space, the unit sphere, fixed-rank
//! matrices, and finite products.

mod euclidean;
mod fixed_rank;
mod product;
mod sphere;

pub use euclidean::Euclidean;
pub use fixed_rank::{FixedRank, RANK_DROP_TOL};
pub use product::Product;
pub use sphere::{sphere_exp_retract, Sphere};
