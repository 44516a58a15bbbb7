//! Simulation and numerical verification of self-similar fragmentation
//! processes with positive index.
//!
//! The crate is `no_std` (it needs `alloc`) and carries every algorithm:
//! dislocation measures and their Laplace exponents ([`partitions`]), the
//! tagged-fragment subordinator and its Lamperti clock ([`spine`]), the
//! event-driven fragmentation engine with its Crump–Mode–Jagers projection
//! ([`fragsim`]), closed-form asymptotic laws ([`asymptotics`]) and the
//! constrained minimisation problems behind them ([`variational`]).
//!
//! Randomness always comes from a caller-owned [`rand_core::RngCore`];
//! replica seeds are derived with [`rng::replica_seed`], so a sequential
//! run and a parallel run over the same seeds produce identical numbers.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod asymptotics;
mod error;
pub mod fragsim;
pub mod math;
pub mod numeric;
pub mod partitions;
pub mod rng;
pub mod spine;
pub mod stats;
pub mod variational;

pub use error::{Error, Result};
pub use partitions::{DislocationMeasure, MassPartition, SlowlyVarying, SlowlyVaryingHandle};
