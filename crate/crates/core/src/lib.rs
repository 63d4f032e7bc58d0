//! Catalog knowledge graph, refinement rules, inventories and the
//! deterministic intent-to-actions traversal.

pub mod canonical;
pub mod catalog;
pub mod inventory;
pub mod money;
pub mod rules;
pub mod scalar;
pub mod traversal;

pub use money::Money;
pub use scalar::{Decimal, Scalar, ValueKind};
