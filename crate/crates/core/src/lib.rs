//! Variance-reduced incremental gradient methods for nonconvex finite sums.
//!
//! The crate is organised around a [`FiniteSum`] problem and an [`Oracle`]
//! that counts incremental first-order oracle (IFO) calls. On top of that sit
//! the optimizers in [`optim`] (GD, SGD, SAGA, Reg-SAGA, Minibatch-SAGA,
//! GD-SAGA), executable forms of their analysis in [`theory`] and
//! [`diagnostics`], and an experiment runner in [`experiment`].

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod optim;
pub mod oracle;
pub mod problems;
pub mod theory;

pub use error::{Error, Result};
pub use oracle::{FiniteSum, IfoCounter, LinearStructure, Oracle, SmoothnessInfo};
