//! Simulation and analysis toolkit for velocity-scanning tomography of
//! superradiance lattices.
//!
//! The crate models a two-band momentum-space lattice of collective atomic
//! excitations, computes its Doppler-tilted Wannier-Stark spectra, assembles
//! thermal-ensemble absorption maps with a velocity-selective pump hole, and
//! extracts band geometry (Zak phases, Chern numbers) from the same data a
//! measurement would produce.
//!
//! Modules:
//! - [`model`]: lattice parameters, Bloch Hamiltonian, tilted chains,
//!   eigensystems, drive-modulation paths.
//! - [`spectra`]: density of states, Wannier-Stark levels, single-class
//!   absorption spectra, ladder-spacing estimation.
//! - [`peaks`]: prominence-based peak picking shared by the analysis code.
//! - [`tomography`]: thermal ensembles, pump-induced spectral holes,
//!   difference spectra and full velocity-frequency maps.
//! - [`topology`]: Zak phases (Wilson loop and ladder-slope routes), Chern
//!   numbers (lattice field sums and ladder-winding route).

pub mod error;
pub mod model;
pub mod peaks;
pub mod spectra;
pub mod tomography;
pub mod topology;

pub use error::{Error, Result};
