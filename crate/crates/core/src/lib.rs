pub mod assimilation;
pub mod config;
pub mod error;
pub mod integrate;
pub mod model;
pub mod orbit;
pub mod output;
pub mod record;
pub mod sweep;

pub use error::{Error, Result};
