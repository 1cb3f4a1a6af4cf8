//! Capacity and rate-distortion solvers for finite-alphabet problems with
//! rate-limited two-sided partial side information.

pub mod ba;
pub mod case;
pub mod case2;
pub mod error;
pub mod gp;
pub mod instance;
pub mod par;
pub mod prob;
pub mod strategy;
pub mod theory;

pub use case::Case;
pub use error::{Error, Result};
pub use instance::{ChannelInstance, SourceInstance, WzSource};
pub use prob::{Alphabet, CondKernel, JointPmf, SimplexGrid};
pub use strategy::StrategySpace;
