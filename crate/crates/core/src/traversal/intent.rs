use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::catalog::CatalogGraph;
use crate::money::Money;
use crate::scalar::{Decimal, Scalar};
use crate::traversal::TraversalError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OfferingSelection {
    pub offering_id: String,
    #[serde(default)]
    pub characteristic_values: BTreeMap<String, Scalar>,
}

impl OfferingSelection {
    pub fn new(offering_id: impl Into<String>) -> Self {
        OfferingSelection { offering_id: offering_id.into(), characteristic_values: BTreeMap::new() }
    }

    pub fn with(mut self, name: impl Into<String>, value: Scalar) -> Self {
        self.characteristic_values.insert(name.into(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IntentConstraints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<Money>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_concurrent_users: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ceiling_ms: Option<Decimal>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Period {
    pub start_date: NaiveDate,
    pub days: u32,
}

impl Period {
    /// Inclusive last day: `start + days - 1`.
    pub fn end_date(&self) -> NaiveDate {
        self.start_date + Days::new(u64::from(self.days.saturating_sub(1)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Confirmation {
    pub confirmed_by: String,
    pub transcript_ref: String,
}

/// An intent after explicit operator confirmation; input to [`build_plan`](crate::traversal::build_plan).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConfirmedIntent {
    pub intent_id: String,
    pub offering_selections: Vec<OfferingSelection>,
    #[serde(default)]
    pub constraints: IntentConstraints,
    pub period: Period,
    pub confirmation: Confirmation,
}

impl ConfirmedIntent {
    /// Checks that selections resolve and their values satisfy the
    /// offerings' characteristic specs.
    pub fn check(&self, graph: &CatalogGraph) -> Result<(), TraversalError> {
        if self.period.days == 0 {
            return Err(TraversalError::InvalidIntent { detail: "period.days must be positive".into() });
        }
        for sel in &self.offering_selections {
            let offering = graph
                .offering(&sel.offering_id)
                .ok_or_else(|| TraversalError::UnknownOffering { id: sel.offering_id.clone() })?;
            for (name, value) in &sel.characteristic_values {
                let spec = offering.characteristic(name).ok_or_else(|| TraversalError::InvalidIntent {
                    detail: format!("offering {} has no characteristic `{name}`", offering.id),
                })?;
                spec.admits(value).map_err(|detail| TraversalError::InvalidIntent {
                    detail: format!("offering {}: {detail}", offering.id),
                })?;
            }
        }
        Ok(())
    }
}
