//! Synthetic-speech detection from cepstral features.
//!
//! The pipeline cuts audio into one-second clips, extracts MFCC and LFCC
//! matrices, centers both on a shared 136 x 44 grid, optionally masks bands
//! of each, fuses the two through attentional feature fusion, and classifies
//! with a squeeze-and-excitation ResNet. Metrics cover accuracy, ROC/AUC, and
//! equal error rate.

pub mod audio_io;
pub mod blocks;
pub mod dsp;
pub mod error;
pub mod features;
pub mod metrics;
pub mod nn;
pub mod pipeline;

pub use error::{Error, Result};
