use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::money::Money;
use crate::scalar::{Scalar, ValueKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CharacteristicSpec {
    pub name: String,
    pub value_kind: ValueKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_values: Option<Vec<Scalar>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_value: Option<Scalar>,
}

impl CharacteristicSpec {
    /// Checks a concrete value against kind and allowed values.
    pub fn admits(&self, value: &Scalar) -> Result<(), String> {
        if value.kind() != self.value_kind {
            return Err(format!("`{}` expects a {}, got {value}", self.name, self.value_kind));
        }
        if let Some(allowed) = &self.allowed_values {
            if !allowed.contains(value) {
                return Err(format!("`{}` does not allow {value}", self.name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CostPeriod {
    PerDay,
    Once,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProductOffering {
    pub id: String,
    pub name: String,
    pub tier: String,
    pub unit_cost: Money,
    pub cost_period: CostPeriod,
    pub product_spec_id: String,
    #[serde(default)]
    pub characteristics: Vec<CharacteristicSpec>,
    #[serde(default)]
    pub fixed_characteristic_values: BTreeMap<String, Scalar>,
}

impl ProductOffering {
    /// `"<name> / <tier>"`, the label used in conversation and reports.
    pub fn label(&self) -> String {
        format!("{} / {}", self.name, self.tier)
    }

    pub fn characteristic(&self, name: &str) -> Option<&CharacteristicSpec> {
        self.characteristics.iter().find(|c| c.name == name)
    }

    /// Concurrent-user capacity, when the offering declares one.
    pub fn capacity(&self) -> Option<i64> {
        self.fixed_characteristic_values
            .get(CAPACITY_CHARACTERISTIC)
            .and_then(|v| v.as_number())
            .and_then(|d| d.to_i64())
    }
}

pub const CAPACITY_CHARACTERISTIC: &str = "maxConcurrentUsers";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProductSpecification {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub service_spec_ids: Vec<String>,
    #[serde(default)]
    pub rule_set_ids: Vec<String>,
    #[serde(default)]
    pub test_spec_ids: Vec<String>,
    #[serde(default)]
    pub characteristics: Vec<CharacteristicSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ServiceSpecification {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub child_service_spec_ids: Vec<String>,
    #[serde(default)]
    pub resource_spec_ids: Vec<String>,
    #[serde(default)]
    pub rule_set_ids: Vec<String>,
    #[serde(default)]
    pub test_spec_ids: Vec<String>,
    #[serde(default)]
    pub characteristics: Vec<CharacteristicSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "RAN")]
    Ran,
    Transport,
    Core,
    Infrastructure,
}

impl Domain {
    pub const ALL: [Domain; 4] = [Domain::Ran, Domain::Transport, Domain::Core, Domain::Infrastructure];
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Ran => "RAN",
            Domain::Transport => "Transport",
            Domain::Core => "Core",
            Domain::Infrastructure => "Infrastructure",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResourceSpecification {
    pub id: String,
    pub name: String,
    pub domain: Domain,
    #[serde(default)]
    pub characteristics: Vec<CharacteristicSpec>,
    #[serde(default)]
    pub test_spec_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TestKind {
    Connectivity,
    Latency,
    Throughput,
    SliceAdmission,
    ApiAvailability,
}

impl TestKind {
    /// Presence kinds pass on heartbeat samples rather than a measured QoS value.
    pub fn is_presence(self) -> bool {
        matches!(self, TestKind::Connectivity | TestKind::SliceAdmission | TestKind::ApiAvailability)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Comparator {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl Comparator {
    pub fn holds<T: PartialOrd>(self, observed: &T, threshold: &T) -> bool {
        match self {
            Comparator::Lt => observed < threshold,
            Comparator::Le => observed <= threshold,
            Comparator::Gt => observed > threshold,
            Comparator::Ge => observed >= threshold,
            Comparator::Eq => observed == threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ThresholdSource {
    Literal,
    CharacteristicRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TestSpecification {
    pub id: String,
    pub name: String,
    pub kind: TestKind,
    pub target_metric: String,
    pub comparator: Comparator,
    pub threshold_source: ThresholdSource,
    /// A literal scalar, or the characteristic name for `characteristicRef`.
    pub threshold_value: Scalar,
    pub evaluation_window_ticks: u32,
}
