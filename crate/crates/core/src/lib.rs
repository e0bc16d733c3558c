//! Downlink simulator comparing centralized weighted sum-rate beamforming
//! on imperfect global CSI against pre-scheduled clusters served by local
//! SLNR beamformers.
//!
//! Numerical code is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the precision for the common containers.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamforming;
pub mod channel;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod prescheduler;
pub mod scalar;
pub mod scenario;
pub mod slnr;
pub mod topology;
pub mod wsr;

pub use error::{Error, Result};

pub type ChannelMatrix64 = channel::ChannelMatrix<f64>;
pub type ChannelMatrix32 = channel::ChannelMatrix<f32>;
pub type NoisyChannelMatrix64 = channel::NoisyChannelMatrix<f64>;
pub type NoisyChannelMatrix32 = channel::NoisyChannelMatrix<f32>;
pub type BeamformingSolution64 = beamforming::BeamformingSolution<f64>;
pub type BeamformingSolution32 = beamforming::BeamformingSolution<f32>;
pub type RateVector64 = beamforming::RateVector<f64>;
pub type RateVector32 = beamforming::RateVector<f32>;
pub type LocalCsi64 = slnr::LocalCsi<f64>;
pub type LocalCsi32 = slnr::LocalCsi<f32>;
