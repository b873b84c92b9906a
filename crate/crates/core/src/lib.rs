//! Storage codes built from a piggybacked MDS code plus parity nodes of
//! plain data sums, with exact repair-cost accounting and brute-force
//! checkers.
//!
//! Data is a `k x k` array over a finite field; node `j < k` stores column
//! `j`. Class A parity nodes (`k..n_a`) give fault tolerance, Class B parity
//! nodes (`n_a..n`) make single-node repair cheap.

pub mod class_a;
pub mod class_b;
pub mod cli;
pub mod code;
pub mod gf;
pub mod layout;
pub mod metrics;
pub mod oracle;
pub mod repair;

pub use code::{CodeParams, CodeSpec};
pub use gf::{Elem, Field, FieldSpec};
pub use layout::{CodeArray, DataArray, Pos};
