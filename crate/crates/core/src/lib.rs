//! Soliton dynamics of the generalized nonlinear Schrödinger equation in
//! slowly varying random potentials: random-field synthesis, soliton
//! profiles, a split-step solver, modulation tracking, the classical
//! reduced dynamics and diffusion-limit tools.

pub mod classical;
pub mod diffusion;
pub mod envelope;
pub mod error;
pub mod grid;
pub mod hermite;
pub mod nls;
pub mod potential;
pub mod quad;
pub mod randfield;
pub mod seeds;
pub mod soliton;
pub mod spectral;
pub mod stats;
pub mod tracker;

pub use error::{Error, Result};
pub use grid::{Grid, Point};
pub use potential::{FieldSample, Potential};
