//! Losses, optimiser, augmentation and the three-stage training schedule.

mod augment;
mod config;
mod loss;
mod sgd;
mod trainer;

pub use augment::{apply_augment, augment, gaussian_blur, AugmentParams};
pub use config::{scaled, AugmentConfig, TrainConfig};
pub use loss::{cross_entropy_mask, loss_alpha, loss_color};
pub use sgd::{sgd_step, SgdConfig};
pub use trainer::{train_from, train_three_stage, HistoryRow, TrainHistory};

pub use crate::data::Sample;
