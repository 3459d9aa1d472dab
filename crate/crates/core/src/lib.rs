//! Parameter estimation and adaptive control of Euler-Lagrange systems.
//!
//! The crate builds linear regression equations for a mechanical system
//! either from its power balance or from its equations of motion, mixes
//! them into decoupled scalar regressions, turns those into regressions
//! whose regressor stays exciting, and runs gradient estimators and a
//! certainty-equivalent Slotine-Li controller on top. The [`harness`]
//! module couples everything into one ODE for a two-link arm.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod drem;
pub mod el_model;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod lre;
pub mod lre_gen;

pub use error::{Error, Result};
