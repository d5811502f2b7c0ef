//! Link-level simulator for integrated sensing and communication with
//! hybrid beamforming: channel generation, pilot design, compressed-sensing
//! channel recovery, Doppler estimation and Monte-Carlo experiments.

pub mod array_channel;
pub mod dictionary;
pub mod doppler;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod link_sim;
pub mod recovery;
pub mod waveform;

pub use error::{IsacError, Result};
