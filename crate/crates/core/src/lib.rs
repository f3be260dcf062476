pub mod corpus;
pub mod distributions;
pub mod gibbs;
pub mod measures;
pub mod run;
pub mod error;
pub mod eval;

pub use error::{NbpError, Result};
