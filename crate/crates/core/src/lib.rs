pub mod error;
pub mod hilbert;
pub mod learner;
pub mod master;
pub mod orchestrator;
pub mod signal;
pub mod trajectory;

pub use error::{Error, Result};
