//! Simulation and analysis toolkit for the Arnold gas: a classical model gas in
//! which every pair collision conserves the pair's centre of mass and applies
//! the Arnold cat map to the relative coordinate.
//!
//! Modules, bottom up:
//!
//! - [`maps`]: cat map, pair collision, direct/switch matrices, spectral data.
//! - [`tree`]: the staged doubling collision tree and its dilation factors.
//! - [`gas`]: full N-particle gas with per-step random pairings.
//! - [`spectral`]: Fourier components of the phase density and their response.
//! - [`kinetics`]: kinetic-theory estimates and step-to-seconds conversion.
//! - [`ensemble`]: seeded multi-run measurements.
//! - [`output`], [`verify`], [`cli`]: file formats, release checks, front end.

pub mod cli;
pub mod ensemble;
pub mod error;
pub mod gas;
pub mod kinetics;
pub mod maps;
pub mod output;
pub mod spectral;
pub mod tree;
pub mod verify;

pub use error::{Error, Result};
pub use maps::{CollisionModel, PhasePoint, Role, TangentVector};
