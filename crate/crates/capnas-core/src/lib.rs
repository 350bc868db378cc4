//! Core algorithms for data-free capacity scoring of Transformer architecture
//! candidates: search-space modelling, the per-module capacity metric with
//! attention/FFN decoupling, rank-correlation statistics, balance-parameter
//! (alpha) optimization, and NSGA-II multi-objective search.
//!
//! The crate is `no_std`-compatible (an allocator is required). File formats,
//! benchmark ingestion and the command-line interface live in the companion
//! `capnas-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod alphaopt;
pub mod archspace;
pub mod capacity;
pub mod rankstats;
pub mod rng;
pub mod search;

// Space sizes are exact big integers; re-exported so downstream crates can
// name the type without a separate dependency.
pub use num_bigint;
