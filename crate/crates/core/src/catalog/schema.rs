//! Serialized form of a solution case.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CaseSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Exponent of the `σ₃^k` Lagrangian: `"p/q"`, a decimal, or a parameter name.
    pub k: String,
    #[serde(default)]
    pub parameters: Vec<ParameterSpec>,
    /// Parameter conditions that must evaluate positive.
    #[serde(default)]
    pub requires: Vec<Requirement>,
    /// Named sub-expressions over the domain coordinates, in order.
    #[serde(default)]
    pub definitions: Vec<Definition>,
    pub domain: ChartSpec,
    pub codomain: ChartSpec,
    /// Components of the map in codomain order.
    pub map: Vec<String>,
    pub expected: ExpectedSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_eigenvalues: Option<Vec<String>>,
    #[serde(default)]
    pub flags: FlagSpec,
    /// Coupling constant multiplying the field stress in `G = α S`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<String>,
    /// Pressure at which the fluid index is normalized to 1.
    #[serde(default = "default_reference")]
    pub reference_pressure: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<String>,
    pub grid: GridSpec,
}

fn default_reference() -> String {
    "1".into()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParameterSpec {
    pub name: String,
    /// Default value: a number, `p/q`, or an expression of earlier parameters.
    pub default: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Requirement {
    pub expr: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Definition {
    pub name: String,
    pub expr: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChartSpec {
    pub coordinates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<String>,
    #[serde(default)]
    pub definitions: Vec<Definition>,
    #[serde(default)]
    pub constraints: Vec<ConstraintSpec>,
    pub metric: MetricSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConstraintSpec {
    pub label: String,
    /// Valid where this expression is positive.
    pub margin: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum MetricSpec {
    Diagonal { diagonal: Vec<String> },
    Full { matrix: Vec<Vec<String>> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExpectedSpec {
    pub u: Vec<String>,
    pub rho: String,
    pub p: String,
}

/// A flag is asserted (`true`/`false`), left open (`null`), or decided by a
/// parameter expression (true iff nonzero, or iff zero with a leading `!`).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum FlagValue {
    Fixed(bool),
    Condition(String),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct FlagSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shear_free: Option<FlagValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub irrotational: Option<FlagValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accelerating: Option<FlagValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gravity_coupled: Option<FlagValue>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AxisSpec {
    pub name: String,
    pub lo: String,
    pub hi: String,
    #[serde(default = "one")]
    pub n: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GridSpec {
    pub axes: Vec<AxisSpec>,
    /// Chart point as expressions of the axis names; defaults to the axes
    /// themselves when they are named after the coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<String>>,
}
