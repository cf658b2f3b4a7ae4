//! Defect classification of electroluminescence solar cell images with
//! local descriptors, VLAD encoding and support vector machines.

pub mod container;
pub mod dataset;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod features;
pub mod imaging;
pub mod pipeline;
pub mod rng;
pub mod svm;
pub mod synthetic;

pub use error::{Error, Result, Stage};
