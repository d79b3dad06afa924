pub mod coarse;
pub mod error;
pub mod field;
pub mod grid;
pub mod krylov;
pub mod linalg;
pub mod mgprec;
pub mod tpfa;
pub mod twophase;

pub use error::{Error, Result};
