pub mod dichotomy;
pub mod engine;
pub mod entail;
pub mod error;
pub mod fol;
pub mod ground;
pub mod io;
pub mod linalg;
pub mod pdb;
pub mod preprocess;
pub mod reduction;
pub mod scalar;
pub mod symmetric;

pub use error::{Error, Result};

pub type Rational = num_rational::BigRational;
