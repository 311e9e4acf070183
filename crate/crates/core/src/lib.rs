pub mod acquisition;
pub mod autodiff;
pub mod bench;
pub mod error;
pub mod fantasy;
pub mod gp;
pub mod harness;
pub mod linalg;
pub mod optim;
pub mod policy;
pub mod quadrature;
pub mod stats;

pub use error::{Error, Result};
