pub mod error;
pub mod harness;
pub mod heights;
pub mod numeric;
pub mod asymptotics;
pub mod offspring;
pub mod oracle;
pub mod tree;
pub mod walk;

pub use error::{Error, Result};
