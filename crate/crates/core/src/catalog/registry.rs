use serde_json::{json, Value};

use crate::energy_stress::parse_rational;
use crate::error::{Error, Result};

use super::schema::CaseSpec;

const CASES: [(&str, &str); 11] = [
    ("hb1_stiff", include_str!("../../cases/hb1_stiff.json")),
    ("hb1_power", include_str!("../../cases/hb1_power.json")),
    ("hb1_corotational", include_str!("../../cases/hb1_corotational.json")),
    ("hb2_stiff", include_str!("../../cases/hb2_stiff.json")),
    ("hb2_radiation", include_str!("../../cases/hb2_radiation.json")),
    ("gubser_ds3", include_str!("../../cases/gubser_ds3.json")),
    ("morawetz_radiation", include_str!("../../cases/morawetz_radiation.json")),
    ("skew_projection", include_str!("../../cases/skew_projection.json")),
    ("einstein_universe", include_str!("../../cases/einstein_universe.json")),
    ("rw_affine", include_str!("../../cases/rw_affine.json")),
    ("rw_sqrt", include_str!("../../cases/rw_sqrt.json")),
];

pub fn case_names() -> Vec<&'static str> {
    CASES.iter().map(|(n, _)| *n).collect()
}

pub fn case_spec(name: &str) -> Result<CaseSpec> {
    let (_, text) = CASES
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::UnknownCase(name.to_string()))?;
    serde_json::from_str(text).map_err(|e| Error::InvalidCase(format!("{name}: {e}")))
}

pub fn registry() -> Result<Vec<CaseSpec>> {
    CASES.iter().map(|(n, _)| case_spec(n)).collect()
}

/// Registry summary for tooling: name, parameters, charts and equation of state.
pub fn registry_json() -> Result<Value> {
    let mut out = Vec::new();
    for spec in registry()? {
        let eos = match parse_rational(&spec.k) {
            Ok(k) => json!({"law": "linear", "w": (k * 2 - 1).to_string()}),
            Err(_) => json!({"law": "linear", "w": format!("2*{} - 1", spec.k)}),
        };
        out.push(json!({
            "name": spec.name,
            "description": spec.description,
            "k": spec.k,
            "parameters": spec.parameters,
            "domain": spec.domain.coordinates,
            "codomain": spec.codomain.coordinates,
            "eos": eos,
            "flags": spec.flags,
        }));
    }
    Ok(Value::Array(out))
}
