//! Threat image projection for X-ray baggage imagery.
//!
//! The pipeline takes a benign bag scan and a threat scan, extracts the
//! threat signature, rotates it, finds a valid insertion position inside
//! the bag region, and blends the signature into the scan with an
//! adaptive threshold so that only dense threat material is projected.
//! On top of the single-composite path sit a dataset builder that emits
//! COCO-annotated training corpora and an evaluator that scores
//! detections with per-class average precision.

pub mod compositor;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod morphology;
pub mod placement;
pub mod raster;
pub mod test_utils;
pub mod threat;

pub use error::{Error, Result};
