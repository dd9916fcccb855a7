//! Multimodal face generation and latent-space editing.

pub mod config;
pub mod editor;
pub mod embedding;
pub mod error;
pub mod evaluator;
pub mod generator;
pub mod image;
pub mod io;
pub mod mapping;
pub mod nn;
pub mod pipeline;
pub mod spatial;
pub mod toy;
pub mod trainer;

pub use error::{Error, Result};
