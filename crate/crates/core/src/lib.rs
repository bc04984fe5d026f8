//! Sparse domination by convex bodies on dyadic torus grids.

pub mod bodies;
pub mod commutators;
pub mod domination;
pub mod error;
pub mod function;
pub mod grid;
pub mod john;
pub mod linalg;
pub mod norms;
pub mod sparse;
pub mod verify;
pub mod weights;

pub use bodies::{dot, ConvexBody, DotProduct, Normalization};
pub use error::{Error, Result};
pub use function::GridFunction;
pub use grid::{Cube, DyadicGrid};
pub use john::{mvee, Ellipsoid};
