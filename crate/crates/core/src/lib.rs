pub mod acceptance;
pub mod attack;
pub mod channels;
pub mod classical_sim;
pub mod closed_form;
pub mod error;
pub mod export;
pub mod protocol;
pub mod qlin;

pub use error::{Error, Result};
