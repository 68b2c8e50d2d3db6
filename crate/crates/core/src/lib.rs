//! Priority-weighted repeated VCG spectrum auctions between a mobile network
//! operator and vertical sector players, with a DDPG agent choosing per-bidder
//! bid coefficients.
//!
//! Layers, bottom up: [`domain`] value types, [`auction`] clearing, [`metrics`],
//! the [`environment`], the learner ([`nn`], [`replay`], [`agent`],
//! [`checkpoint`]), [`baselines`], and the [`experiment`] harness behind the CLI.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod auction;
pub mod baselines;
pub mod checkpoint;
pub mod domain;
pub mod environment;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod replay;

pub use error::{Error, Result};
