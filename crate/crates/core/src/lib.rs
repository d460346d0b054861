//! Nonadaptive group testing from q-ary codes.
//!
//! Builds Kautz–Singleton test matrices from Reed–Solomon and
//! Gilbert–Varshamov outer codes, measures their distance statistics,
//! certifies recovery guarantees for random defective sets, and checks those
//! guarantees by exhaustive search and seeded Monte Carlo simulation.

pub mod analysis;
pub mod bounds;
pub mod cli;
pub mod concat;
pub mod error;
pub mod field;
pub mod qary;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
