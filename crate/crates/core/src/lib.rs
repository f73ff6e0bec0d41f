//! Incremental variational-inequality model of ferroelectric polarization.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensors`]: reduced-notation tensor algebra,
//! * [`material`]: constitutive law, enthalpy and driving force,
//! * [`vi_solver`]: point-level KKT system and the active-set loop,
//! * [`point_driver`]: load programs, traces and a closed-form uniaxial reference,
//! * [`fem`]: hexahedral finite elements for structural benchmarks,
//! * [`io`]: CSV, JSON, VTK and SVG output.

pub mod error;
pub mod fem;
pub mod io;
pub mod material;
pub mod point_driver;
pub mod tensors;
pub mod vi_solver;

pub use error::{Error, Result};
pub use material::{MaterialParams, MaterialTable};
pub use tensors::{PiezoTensor3, SymTensor2, SymTensor4};
