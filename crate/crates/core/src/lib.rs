//! Order-flow price-impact toolkit.
//!
//! Regularised deconvolution of impact kernels, exponential Hawkes models of
//! market-wide surge events, regime-conditional kernels, entropy production of
//! joint flow/return dynamics, surge memory statistics and an econometric
//! diagnostic battery, plus a planted-truth synthetic market generator and the
//! recipe runner that strings them together.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod deconv;
pub mod econometrics;
pub mod epr;
pub mod hawkes;
pub mod memory;
mod optim;
pub mod panel;
pub mod pipeline;
pub mod stats;
pub mod synth;
