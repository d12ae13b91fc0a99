pub mod cli;
pub mod error;
pub mod fock;
pub mod links;
pub mod optimize;

pub use error::{Error, Result};
pub mod swaps;
pub mod timing;
pub mod validation;
