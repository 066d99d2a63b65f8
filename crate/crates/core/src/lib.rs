//! Exact computations around Hoeffding-degenerate U-statistics on finite
//! product spaces: decompositions, moment sums, the coordinate-replacement
//! exchangeable pair, shadow-class constants, Wasserstein-type normal
//! approximation bounds, and a Monte Carlo harness that validates the bounds
//! against empirical distances.

pub mod bounds;
pub mod error;
pub mod exec;
pub mod generators;
pub mod hoeffding;
pub mod mc;
pub mod moments;
pub mod pair;
pub mod product;
pub mod sets;
pub mod shadows;
pub mod space;

pub use error::{Error, Result};
pub use hoeffding::{
    check_degenerate, decompose, DegenerateUStatistic, HoeffdingDecomposition, VectorModel,
};
pub use sets::IndexSet;
pub use space::{Budget, Coordinate, FiniteProductSpace, SubsetKernel};
