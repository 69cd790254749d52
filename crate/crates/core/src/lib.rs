//! Spectral solvers for damped quantum hydrodynamics on the periodic unit square.
//!
//! The Schrödinger-Langevin equation is integrated in wave-function form and read back
//! through the Madelung transform; the quantum drift-diffusion limit has its own
//! semi-implicit solver, and [`relaxation`] compares the two as `τ → 0`.

pub mod error;
pub mod experiments;
pub mod functionals;
pub mod io;
pub mod madelung;
pub mod qdd;
pub mod relaxation;
pub mod sl;
pub mod spectral;

pub use error::{QhdError, Result};
pub use functionals::{DecayConstants, Dissipation, FunctionalRecord, RunningIntegrals};
pub use madelung::{Coupling, HydroState, PressureLaw, WaveFunction};
pub use qdd::{QDDParams, QDDTrajectory, QddRecord, QddStatus};
pub use relaxation::{RateFit, RelaxationReport, RescaledTrajectory};
pub use sl::{BalanceSample, RunStatus, SLParams, SLTrajectory};
pub use spectral::{ComplexField, Field, RealField, TorusGrid};
