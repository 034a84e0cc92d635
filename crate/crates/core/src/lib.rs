//! Physics-informed neural networks whose solid regions are circle patches
//! with learnable centers, plus a density-field baseline.
//!
//! The pieces, bottom up: [`diffengine`] (reverse-mode tape over second-order
//! spatial jets), [`network`] (tanh MLP), [`geometry`] (patches, masks, rings),
//! [`pde`] (residual operators), [`sampling`], [`losses`], [`training`] (Adam),
//! [`oracle`] (closed forms and a finite-difference solver), [`metrics`],
//! [`extract`] (density to outline), and [`experiment`] / [`cli`] on top.

// NaN must fail validation, so `!(x > 0.0)` is deliberate throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::too_many_arguments)]

pub mod cli;
pub mod diffengine;
pub mod error;
pub mod experiment;
pub mod extract;
pub mod geometry;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod oracle;
pub mod pde;
pub mod rng;
pub mod sampling;
pub mod training;

pub use error::{Error, Result};

/// A point in the plane.
pub type Point = [f64; 2];
