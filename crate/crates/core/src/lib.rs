//! Simulation and classical reconstruction of single-photon (SPAD) quanta
//! bursts.
//!
//! * [`sim`] turns sRGB ground truth into binary frames and nano-bursts.
//! * [`cube`] reads and writes `.pcube` photon cubes.
//! * [`recon`] aligns and merges bursts of nano-bursts into an image.
//! * [`metrics`] scores reconstructions (PSNR, SSIM, warping error).
//! * [`bench`] drives the simulate / reconstruct / evaluate workflow.

pub mod bayer;
pub mod bench;
pub mod cube;
pub mod error;
pub mod image;
pub mod metrics;
pub mod recon;
pub mod rng;
pub mod sim;

pub use crate::bayer::BayerPattern;
pub use crate::error::{Error, Result};
pub use crate::image::{Image, LinearImage, SrgbImage, DEFAULT_GAMMA};
pub use crate::rng::RngSpec;
