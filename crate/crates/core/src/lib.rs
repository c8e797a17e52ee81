//! Desk-scale laboratory for feature learning under data augmentation.
//!
//! Synthetic multi-view data ([`synthdata`]) is fitted by a smoothed-ReLU
//! patch network ([`network`]) with full-batch gradient descent
//! ([`trainer`]), optionally through augmentation operators ([`augment`]).
//! [`eval`] measures generalization and [`harness`] drives seeded experiments.

pub mod augment;
pub mod config;
pub mod error;
pub mod eval;
pub mod harness;
pub mod network;
pub mod seeding;
pub mod synthdata;
pub mod trainer;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
