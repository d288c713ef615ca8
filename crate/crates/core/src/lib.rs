//! Real-time portrait matting.
//!
//! A light dilated-dense segmentation network ([`segnet`]) predicts
//! foreground/background score maps; a learnable guided-filter block
//! ([`feathering`]) turns them into an alpha matte. Around that core sit
//! the tensor primitives with hand-written backward passes ([`ops`]),
//! the classic guided filter baseline ([`guided`]), training
//! ([`training`]), data generation and loading ([`data`]), and evaluation
//! ([`metrics`], [`bench`]).

pub mod bench;
pub mod data;
pub mod error;
pub mod feathering;
pub mod gradcheck;
pub mod guided;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod parallel;
pub mod paramset;
pub mod segnet;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use model::{predict, ModelParams, Refiner};
pub use paramset::ParamSet;
pub use tensor::{Real, Shape, Tensor};
