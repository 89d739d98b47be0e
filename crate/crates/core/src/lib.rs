//! Full- and reduced-order simulation of the Shigesada–Kawasaki–Teramoto
//! cross-diffusion system.
//!
//! The pipeline: finite differences turn the PDE into a linear–quadratic ODE
//! system ([`fom`]), which is integrated with Kahan's linearly implicit
//! method. Snapshots feed a POD basis per species ([`pod`]), either over the
//! whole horizon or per time window ([`pid`]); Galerkin projection with
//! precomputed tensorized quadratic operators gives a reduced model whose
//! online cost does not depend on the grid size ([`rom`]).

pub mod banded;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod fom;
pub mod grid;
pub mod output;
pub mod par;
pub mod params;
pub mod pid;
pub mod pod;
pub mod rom;
pub mod rsvd;
pub mod snapshots;
pub mod sparse;
pub mod tensor;

pub use error::{Result, SktError};
pub use fom::{assemble_fom, integrate_fom, FomOperators, StateVector, SteadyStateRule, TimeGrid};
pub use grid::{build_laplacian, Axis, SpatialGrid};
pub use params::SktParams;
pub use pod::PodBasis;
pub use rom::{assemble_rom, ReducedModel, ReducedState};
pub use snapshots::{SnapshotMatrix, Species};
