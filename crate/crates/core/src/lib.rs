//! Simulation and optimization toolkit for Bayesian estimation of a static
//! magnetic field with electron-spin qubits in quantum dots that decohere
//! through hyperfine contact with their nuclear baths.
//!
//! The crate provides, bottom up: dense complex linear algebra for small
//! multi-qubit systems ([`linalg`]), material constants ([`material`]),
//! nuclear-bath combinatorics plus an exact small-bath oracle ([`bath`]),
//! the closed-form decoherence channel and its N-dot extension
//! ([`channel`]), the Bayesian estimation layer with optimal observables
//! and bounds ([`estimation`]), iterative initial-state optimization
//! ([`optimize`]), and time sweeps with metrological regime and transition
//! detection ([`sweep`]).

pub mod bath;
pub mod channel;
pub mod error;
pub mod estimation;
pub mod linalg;
pub mod material;
pub mod optimize;
pub mod sweep;

pub use error::{Error, Result};
