//! Graph data, features, models and training loops.

pub mod augmenters;
pub mod config;
mod error;
pub mod gnn_models;
pub mod graph_data;
pub mod graph_features;
pub mod params;
pub mod trainers;

pub use error::{Error, Result};
