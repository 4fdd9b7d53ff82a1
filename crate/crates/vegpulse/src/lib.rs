//! Travelling vegetation pulses in a sloped-terrain Klausmeier model extended
//! with an autotoxicity compartment.
//!
//! The crate is organised around the pipeline used to study these pulses:
//!
//! * [`model`] — nondimensionalisation, pointwise kinetics and spatially
//!   homogeneous equilibria of the three-component system.
//! * [`pde`] — direct simulation of the reaction–advection–diffusion system on
//!   a periodic 1D grid, with wave-speed extraction.
//! * [`tw`] — the comoving-frame travelling-wave ODEs and the asymptotic
//!   rescaling between the physical and fast coordinate systems.
//! * [`gspt`] — slow-fast analysis of the fast system: critical manifolds and
//!   their eigenstructure, heteroclinic shooting, reduced slow flows, and the
//!   assembly of the singular skeleton orbit.
//! * [`continuation`] — pulse solutions as periodic collocation boundary value
//!   problems, continued in the model parameters with fold detection.
//!
//! Spatial update loops, shooting scans and distance computations run on rayon
//! when the `parallel` feature (default) is enabled; every parallel kernel has
//! a sequential twin with bit-identical output, compared in `benches/`.

pub mod continuation;
pub mod gspt;
pub mod model;
pub mod ode;
pub mod pde;
pub mod tw;

pub use model::{DimensionalParams, EquilibriumSet, NondimParams, ScaleFactors};
