pub mod attack;
pub mod bp;
pub mod cipher;
pub mod encode;
pub mod error;
pub mod harness;
pub mod leakage;
pub mod wmc;

pub use error::{Error, Result};
