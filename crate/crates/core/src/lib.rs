//! Bid shading for first-price auctions.
//!
//! A logistic win-rate model in request features and log bid is fitted from
//! censored auction feedback, and each bid is shaded to the price that
//! maximises expected surplus `(V − b)·Pr(win | b)`. A synthetic landscape
//! simulator and a set of benchmark shaders make the policy measurable.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod cli;
pub mod error;
pub mod evaluate;
pub mod exec;
pub mod experiment;
pub mod io;
pub mod landscape;
pub mod policy;
pub mod shading;
pub mod winrate;

pub use error::{Error, Result};
