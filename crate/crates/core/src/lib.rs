//! Escaping sets, limit sets and recurrence for flows, their induced
//! hyperspace dynamics, and finitely generated semigroups of continuous maps.
//!
//! Every verdict in this crate is finite-horizon evidence: escape is certified
//! against a finite compact exhaustion up to a time horizon, limit sets are
//! ε-cluster estimates of sampled orbits.

pub mod error;
pub mod expr;
pub mod escape_analysis;
pub mod flows;
pub mod hyperspace;
pub mod limit_set;
pub mod phase_space;
pub mod report;
pub mod scenario;
pub mod semigroup;
pub mod suites;

pub use error::{Error, Result};
