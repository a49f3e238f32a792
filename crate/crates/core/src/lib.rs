pub mod click_sim;
pub mod embeddings;
pub mod error;
pub mod extraction;
pub mod models;
pub mod numeric;
mod parallel;
pub mod pipeline;
pub mod rng;
pub mod text;
pub mod training;

pub use error::{Error, Result};
