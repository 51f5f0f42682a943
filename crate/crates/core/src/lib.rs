pub mod cli;
pub mod dynamics;
pub mod error;
pub mod learn;
pub mod mpc;
pub mod mpqp;
pub mod numerics;
pub mod polytope;
pub mod pwa;
pub mod qp;
pub mod relunet;
pub mod verify;

pub use error::{Error, Result};
