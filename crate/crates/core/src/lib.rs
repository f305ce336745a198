pub mod arch;
pub mod bench;
pub mod error;
pub mod eval;
pub mod mnist;
pub mod nn;
pub mod svm;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Scalar, Shape, Tensor};
