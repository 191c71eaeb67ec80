//! Capacity bounds for OFDM links with an unknown residual Doppler shift.
//!
//! The Doppler-perturbed channel is linearized as `y = (F + sG)x + z`, and
//! the crate evaluates Gaussian and alignment-based lower bounds and
//! duality-based upper bounds on its capacity. Rates are in nats.

pub mod alignment;
pub mod channel;
mod covopt;
pub mod duality;
pub mod error;
pub mod gaussian;
pub mod linalg;
pub mod matrix_io;
pub mod mc;
pub mod ofdm;

pub use alignment::{AlignmentPrecoder, SEstimate, SchemeConfig, SchemeMode};
pub use channel::{ChannelSample, InputCovariance, StructuredChannel};
pub use duality::{DualityParams, SupMode, UpperBoundKind, UpperBoundResult};
pub use error::{Error, Result};
pub use gaussian::{LowerBoundKind, LowerBoundResult, Objective, OptimizeOpts, OptimizedInput};
pub use linalg::{CMat, CVec, C64};
pub use mc::{Estimate, MCConfig};
pub use ofdm::{DopplerLinearization, MultipathProfile, OfdmConfig, TapSet};
