//! Prime-divisibility operators on integer windows.
//!
//! The crate is organised bottom-up:
//!
//! * [`arith`] sieves primes and factors windows of integers;
//! * [`divgraph`] builds the divisibility operator `A` and its exceptional sets;
//! * [`spectral`] estimates eigenvalues and traces of `A`;
//! * [`sievekit`] contains exact combinatorial sieve identities and the Kubilius model;
//! * [`walkshapes`] and [`graphcore`] handle the combinatorics of closed walks;
//! * [`correlations`] measures Chowla-type sums of the Liouville function.

pub mod arith;
pub mod correlations;
pub mod divgraph;
pub mod error;
pub mod graphcore;
pub mod sievekit;
pub mod spectral;
pub mod walkshapes;

pub use arith::{build_factor_table, sieve_primes, FactorTable, PrimeWindow};
pub use divgraph::{OperatorSpec, SupportMask};
pub use error::{DivlabError, Result};
