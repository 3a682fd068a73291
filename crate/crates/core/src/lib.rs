//! Finite element model updating for structural damage identification.
//!
//! The crate is organised bottom-up:
//!
//! * [`fe_model`] builds parameterized beam and plate models, `K(α) = K⁰ − Σ αᵢKᵢ`.
//! * [`modal`] solves the undamped generalized eigenproblem, pairs modes by MAC
//!   and computes eigenpair sensitivities.
//! * [`residuals`] turns measured modal data into a weighted residual, its
//!   sensitivity matrix and the least-squares objective.
//! * [`tv`] implements total-variation penalties on the parameter grid.
//! * [`interp`] implements the damage-function (interpolation) regularization.
//! * [`optimizer`] minimizes the regularized objective under box constraints and
//!   runs L-curve sweeps.
//! * [`harness`] ties everything into reproducible scenarios driven by JSON configs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fe_model;
pub mod harness;
pub mod interp;
pub mod modal;
pub mod optimizer;
pub mod residuals;
pub mod tv;

pub use error::{Error, Result};
