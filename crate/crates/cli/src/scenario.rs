//! Scenario files: a [`Scenario`] document plus optional `series`, `sweep`
//! and `outputs` sections.
//!
//! ```json
//! {
//!   "profile": {"kind": "homogeneous", "p": 0.01, "r": 20},
//!   "arrivals": {"kind": "geometric", "lambda": 0.5},
//!   "num_packets": 100000,
//!   "series": [{"label": "r=20"}, {"label": "r=100", "profile": {"r": 100}}],
//!   "sweep": {"variable": "alpha", "start": 0.9, "stop": 1.0, "count": 11},
//!   "outputs": ["pe_empirical", "pe_exact"]
//! }
//! ```
//!
//! Each series entry is deep-merged over the top-level document before it is
//! parsed and validated.

use std::path::Path;

use ivelox_core::model::{validate_scenario, Scenario};
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum SweepVariable {
    N,
    #[serde(rename = "alpha")]
    Alpha,
    #[serde(rename = "lambda")]
    Lambda,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFixed {
    /// Fixes `r = round(alpha N)` in an N sweep, or the exponent's rate in a
    /// lambda sweep.
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub start: Option<f64>,
    #[serde(default)]
    pub stop: Option<f64>,
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub fixed: SweepFixed,
}

impl SweepSpec {
    /// Explicit values, or `count` evenly spaced points from `start` to `stop`
    /// inclusive.
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        match (&self.values, self.start, self.stop, self.count) {
            (Some(values), None, None, None) => Ok(values.clone()),
            (None, Some(start), Some(stop), Some(count)) => Ok(match count {
                0 => Vec::new(),
                1 => vec![start],
                _ => {
                    let step = (stop - start) / (count - 1) as f64;
                    (0..count)
                        .map(|i| {
                            if i + 1 == count {
                                stop
                            } else {
                                start + i as f64 * step
                            }
                        })
                        .collect()
                }
            }),
            _ => Err(CliError::Config(
                "sweep needs either `values` or all of `start`, `stop`, `count`".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: Option<String>,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub series: Vec<Series>,
    pub sweep: Option<SweepSpec>,
    pub outputs: Vec<String>,
}

/// Field overrides taken from the command line. They are applied after the
/// series merge, so flags win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub r: Option<usize>,
    pub p: Option<f64>,
    pub lambda: Option<f64>,
    pub mode: Option<ivelox_core::model::LinkMode>,
    pub seed: Option<u64>,
    pub packets: Option<u64>,
    pub warmup: Option<u64>,
    pub paper_scale: bool,
}

pub const PAPER_PACKETS: u64 = 1_000_000;
pub const PAPER_WARMUP: u64 = 900_000;

impl Overrides {
    pub fn apply(&self, doc: &mut Value) {
        let obj = ensure_object(doc);
        if self.r.is_some() || self.p.is_some() {
            let profile = ensure_object(
                obj.entry("profile")
                    .or_insert_with(|| Value::Object(Map::new())),
            );
            if let Some(r) = self.r {
                profile.insert("r".into(), r.into());
            }
            if let Some(p) = self.p {
                profile.insert("p".into(), p.into());
            }
        }
        if let Some(lambda) = self.lambda {
            obj.insert(
                "arrivals".into(),
                serde_json::json!({"kind": "geometric", "lambda": lambda}),
            );
        }
        if let Some(mode) = self.mode {
            obj.insert(
                "mode".into(),
                serde_json::to_value(mode).expect("mode serializes"),
            );
        }
        if self.paper_scale {
            obj.insert("num_packets".into(), PAPER_PACKETS.into());
            obj.insert("warmup_packets".into(), PAPER_WARMUP.into());
        }
        if let Some(n) = self.packets {
            obj.insert("num_packets".into(), n.into());
            if self.warmup.is_none() {
                // a file warm-up sized for a longer run would exceed the horizon
                obj.remove("warmup_packets");
            }
        }
        if let Some(w) = self.warmup {
            obj.insert("warmup_packets".into(), w.into());
        }
        if let Some(seed) = self.seed {
            obj.insert("seed".into(), seed.into());
        }
    }
}

fn ensure_object(v: &mut Value) -> &mut Map<String, Value> {
    if !v.is_object() {
        *v = Value::Object(Map::new());
    }
    v.as_object_mut().expect("just made an object")
}

/// Recursive merge: objects merge key by key, anything else replaces.
pub fn deep_merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

pub fn read_scenario_file(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Split a document into validated series plus its sweep and outputs.
pub fn parse_document(mut doc: Value, overrides: &Overrides) -> Result<ScenarioFile, CliError> {
    let obj = doc
        .as_object_mut()
        .ok_or_else(|| CliError::Config("scenario file must be a JSON object".into()))?;
    let series_patches = match obj.remove("series") {
        None => vec![Value::Object(Map::new())],
        Some(Value::Array(items)) if !items.is_empty() => items,
        Some(_) => {
            return Err(CliError::Config(
                "`series` must be a non-empty array".into(),
            ))
        }
    };
    let sweep = obj
        .remove("sweep")
        .map(serde_json::from_value::<SweepSpec>)
        .transpose()
        .map_err(|e| CliError::Config(format!("sweep: {e}")))?;
    let outputs = obj
        .remove("outputs")
        .map(serde_json::from_value::<Vec<String>>)
        .transpose()
        .map_err(|e| CliError::Config(format!("outputs: {e}")))?
        .unwrap_or_default();

    let mut series = Vec::with_capacity(series_patches.len());
    for mut patch in series_patches {
        let label = match patch.as_object_mut().map(|p| p.remove("label")) {
            Some(Some(Value::String(s))) => Some(s),
            Some(Some(other)) => Some(other.to_string()),
            Some(None) => None,
            None => {
                return Err(CliError::Config(
                    "each `series` entry must be an object".into(),
                ))
            }
        };
        let mut merged = doc.clone();
        deep_merge(&mut merged, &patch);
        overrides.apply(&mut merged);
        let raw: Scenario = serde_json::from_value(merged)
            .map_err(|e| CliError::Config(format!("scenario: {e}")))?;
        series.push(Series {
            label,
            scenario: validate_scenario(&raw)?,
        });
    }
    Ok(ScenarioFile {
        series,
        sweep,
        outputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ivelox_core::model::{ArrivalSpec, LinkProfile};
    use serde_json::json;

    fn base() -> Value {
        json!({
            "profile": {"kind": "homogeneous", "p": 0.01, "r": 20},
            "arrivals": {"kind": "geometric", "lambda": 0.5},
            "num_packets": 1000,
            "seed": 3
        })
    }

    #[test]
    fn series_merge_nested_fields() {
        let mut doc = base();
        doc["series"] = json!([{"label": "a"}, {"label": "b", "profile": {"r": 100}}]);
        let file = parse_document(doc, &Overrides::default()).unwrap();
        assert_eq!(file.series.len(), 2);
        assert_eq!(file.series[1].label.as_deref(), Some("b"));
        assert_eq!(
            file.series[1].scenario.profile,
            LinkProfile::Homogeneous { p: 0.01, r: 100 }
        );
        assert_eq!(file.series[0].scenario.warmup_packets, Some(100));
    }

    #[test]
    fn flags_win_over_series() {
        let mut doc = base();
        doc["series"] = json!([{"profile": {"r": 100}, "seed": 9}]);
        let overrides = Overrides {
            r: Some(7),
            seed: Some(11),
            lambda: Some(0.2),
            ..Default::default()
        };
        let s = &parse_document(doc, &overrides).unwrap().series[0].scenario;
        assert_eq!(s.profile.link_count(), 7);
        assert_eq!(s.seed, 11);
        assert_eq!(s.arrivals, ArrivalSpec::Geometric { lambda: 0.2 });
    }

    #[test]
    fn packets_override_resets_file_warmup() {
        let mut doc = base();
        doc["warmup_packets"] = json!(900);
        let overrides = Overrides {
            packets: Some(200),
            ..Default::default()
        };
        let s = &parse_document(doc, &overrides).unwrap().series[0].scenario;
        assert_eq!((s.num_packets, s.warmup()), (200, 20));
    }

    #[test]
    fn linear_grid_hits_endpoints() {
        let spec: SweepSpec = serde_json::from_value(
            json!({"variable": "alpha", "start": 0.1, "stop": 0.3, "count": 3}),
        )
        .unwrap();
        assert_eq!(spec.points().unwrap(), vec![0.1, 0.2, 0.3]);
        let bad: SweepSpec =
            serde_json::from_value(json!({"variable": "N", "start": 1.0})).unwrap();
        assert!(bad.points().is_err());
    }

    #[test]
    fn bad_type_vector_is_a_model_error() {
        let doc = json!({
            "profile": {"kind": "fixed_type", "P": [0.01, 0.1], "Q": [0.7, 0.5], "r": 10},
            "arrivals": {"kind": "single_packet"},
            "num_packets": 10
        });
        match parse_document(doc, &Overrides::default()) {
            Err(CliError::Model(e)) => assert!(e.to_string().starts_with("NonSimplexType")),
            other => panic!("{other:?}"),
        }
    }
}
