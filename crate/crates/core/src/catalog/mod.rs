//! Catalog knowledge graph: offerings, specifications, test specs and rules.

mod graph;
mod model;
mod validate;

pub use graph::{
    find_offerings, load_catalog, serialize_catalog, CatalogDocument, CatalogError, CatalogGraph, NodeRef,
    OfferingSummary,
};
pub use model::*;
pub use validate::{validate_catalog, Violation, ViolationRule, TIER_CHARACTERISTIC};

/// The bundled reference catalog (nine offerings across five families).
pub const FIXTURE_CATALOG: &str = include_str!("../../fixtures/catalog.json");

/// Loads [`FIXTURE_CATALOG`].
pub fn fixture() -> CatalogGraph {
    load_catalog(FIXTURE_CATALOG).expect("bundled catalog is valid")
}
