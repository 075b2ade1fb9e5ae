pub mod codegen;
pub mod corpus;
pub mod error;
pub mod interp;
pub mod ir;
pub mod kernel;
pub mod transforms;
pub mod sem;
pub mod tensorfile;

pub use error::{Error, Result};
