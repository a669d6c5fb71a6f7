//! Memorizer–Recaller networks that learn to store key–value pairs in a
//! fixed-size, appendable memory vector and recall them without any
//! parameter update.
//!
//! - [`nn`]: tensors, dense layers, LeakyReLU, softmax cross-entropy, Adam,
//!   finite-difference gradient checking.
//! - [`model`]: Memorizer and Recaller forward passes and full
//!   backpropagation through time.
//! - [`episodes`]: seeded generation of key–value and sorting episodes.
//! - [`trainer`]: standard (fixed dataset) and randomized (fresh data every
//!   epoch) training.
//! - [`experiments`]: capacity, positional and sorting evaluations.
//! - [`memstore`]: deployment sessions and binary checkpoint/memory files.
//! - [`cli`]: the `appendmem` command line.

pub mod nn;
pub mod model;
pub mod episodes;
pub mod trainer;
pub mod experiments;
pub mod memstore;
pub mod cli;
