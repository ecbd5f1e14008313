pub mod coopgame;
pub mod envs;
pub mod error;
pub mod nn;
pub mod par;
pub mod returns;
pub mod teammates;
pub mod tolerance;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
