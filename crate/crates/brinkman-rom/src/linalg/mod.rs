//! Numeric kernel: sparse matrices, direct factorizations, generalized
//! symmetric eigensolves, a small linear-programming solver, and
//! inner-product-weighted orthonormalization.

pub mod eig;
pub mod factor;
pub mod lp;
pub mod orth;
pub mod sparse;

pub use eig::{eig_largest_generalized, eig_smallest_generalized, EigOptions, LinearOperator};
pub use factor::{factorize, FactorKind, Factorization};
pub use lp::{lp_maximize, lp_minimize, LinearProgram};
pub use orth::orthonormalize_append;
pub use sparse::{CsrMatrix, TripletBuilder};

/// Dense row-major matrix (column storage internally via nalgebra).
pub type DMat = nalgebra::DMatrix<f64>;
/// Dense real vector.
pub type DVec = nalgebra::DVector<f64>;
