//! Model files.
//!
//! A model file is a JSON object with the sections `states`, `actions`,
//! `transitions`, `policy` and the optional `metric` and `defaults`. The
//! canonical layout written by [`ModelDocument::to_canonical_string`] puts
//! one entry per line:
//!
//! ```text
//! {
//!   "states": [
//!     {"id": 1, "class": "taboo"},
//!     {"id": 2, "class": "goal"},
//!     {"id": 3, "class": "forbidden"}
//!   ],
//!   "actions": [1],
//!   "transitions": [
//!     {"from": 1, "action": 1, "to": 2, "prob": 0.7},
//!     {"from": 1, "action": 1, "to": 3, "prob": 0.3}
//!   ],
//!   "policy": [
//!     {"state": 1, "action": 1, "prob": 1.0}
//!   ],
//!   "metric": {"kind": "abs_diff"},
//!   "defaults": {"delta": 0.1, "p": 0.5}
//! }
//! ```
//!
//! `metric` is either `{"kind": "abs_diff"}` (the default) or
//! `{"kind": "matrix", "matrix": [[...], ...]}` with rows and columns in
//! ascending state-label order. Omitted transitions and policy entries
//! have probability zero. Unknown keys are errors in strict mode and
//! warnings in lax mode.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::mdp::{
    validate_model, ActionId, MdpModel, ModelError, PolicyTable, RawModel, RawTransition,
    StateClass, StateId,
};
use crate::transport::{GroundMetric, MetricError};

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{location}: {message}")]
    Field { location: String, message: String },
    #[error("{location}: unknown field")]
    UnknownField { location: String },
    #[error("{location}: duplicate entry {entry}")]
    DuplicateEntry { location: String, entry: String },
    #[error("{location}: {source}")]
    Model {
        location: String,
        #[source]
        source: ModelError,
    },
    #[error("metric: {0}")]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    #[default]
    Strict,
    Lax,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetricSpec {
    AbsDiff,
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Defaults {
    pub delta: Option<f64>,
    pub p: Option<f64>,
}

/// Parsed contents of a model file, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDocument {
    pub states: Vec<(StateId, StateClass)>,
    pub actions: Vec<ActionId>,
    pub transitions: Vec<RawTransition>,
    pub policy: Vec<(StateId, ActionId, f64)>,
    pub metric: MetricSpec,
    pub defaults: Defaults,
}

/// A validated model with everything needed to run it.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: MdpModel,
    pub policy: PolicyTable,
    pub metric: GroundMetric,
    pub defaults: Defaults,
    pub warnings: Vec<String>,
    pub document: ModelDocument,
}

impl LoadedModel {
    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn digest(&self) -> String {
        self.document.digest()
    }
}

pub fn parse_model(path: &Path, strictness: Strictness) -> Result<LoadedModel, DocumentError> {
    let text = std::fs::read_to_string(path).map_err(|e| DocumentError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_model_str(&text, strictness)
}

pub fn parse_model_str(text: &str, strictness: Strictness) -> Result<LoadedModel, DocumentError> {
    let value: Value = serde_json::from_str(text).map_err(|e| DocumentError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut warnings = Vec::new();
    let doc = ModelDocument::from_value(&value, strictness, &mut warnings)?;
    doc.load(warnings)
}

struct Reader<'a> {
    strictness: Strictness,
    warnings: &'a mut Vec<String>,
}

impl Reader<'_> {
    fn object<'v>(&mut self, v: &'v Value, loc: &str, allowed: &[&str]) -> Result<&'v Map<String, Value>, DocumentError> {
        let map = v.as_object().ok_or_else(|| field(loc, "expected an object"))?;
        for key in map.keys() {
            if !allowed.contains(&key.as_str()) {
                let location = format!("{loc}.{key}");
                match self.strictness {
                    Strictness::Strict => return Err(DocumentError::UnknownField { location }),
                    Strictness::Lax => self.warnings.push(format!("{location}: unknown field ignored")),
                }
            }
        }
        Ok(map)
    }
}

fn field(location: &str, message: &str) -> DocumentError {
    DocumentError::Field {
        location: location.to_string(),
        message: message.to_string(),
    }
}

fn required<'v>(map: &'v Map<String, Value>, key: &str, loc: &str) -> Result<&'v Value, DocumentError> {
    map.get(key)
        .ok_or_else(|| field(&format!("{loc}.{key}"), "missing field"))
}

fn int(v: &Value, loc: &str) -> Result<i64, DocumentError> {
    v.as_i64().ok_or_else(|| field(loc, "expected an integer"))
}

fn number(v: &Value, loc: &str) -> Result<f64, DocumentError> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| field(loc, "number out of range")),
        _ => Err(field(loc, "expected a decimal number")),
    }
}

fn array<'v>(v: &'v Value, loc: &str) -> Result<&'v Vec<Value>, DocumentError> {
    v.as_array().ok_or_else(|| field(loc, "expected an array"))
}

impl ModelDocument {
    fn from_value(
        v: &Value,
        strictness: Strictness,
        warnings: &mut Vec<String>,
    ) -> Result<Self, DocumentError> {
        let mut r = Reader { strictness, warnings };
        let top = r.object(
            v,
            "$",
            &["states", "actions", "transitions", "policy", "metric", "defaults"],
        )?;

        let mut states = Vec::new();
        let mut seen = HashSet::new();
        for (i, s) in array(required(top, "states", "$")?, "$.states")?.iter().enumerate() {
            let loc = format!("$.states[{i}]");
            let m = r.object(s, &loc, &["id", "class"])?;
            let id = StateId(int(required(m, "id", &loc)?, &format!("{loc}.id"))?);
            let class = match required(m, "class", &loc)?.as_str() {
                Some("goal") => StateClass::Goal,
                Some("forbidden") => StateClass::Forbidden,
                Some("taboo") => StateClass::Taboo,
                _ => {
                    return Err(field(
                        &format!("{loc}.class"),
                        "expected \"goal\", \"forbidden\" or \"taboo\"",
                    ))
                }
            };
            if !seen.insert(id) {
                return Err(DocumentError::DuplicateEntry {
                    location: loc,
                    entry: format!("state {id}"),
                });
            }
            states.push((id, class));
        }

        let mut actions = Vec::new();
        for (i, a) in array(required(top, "actions", "$")?, "$.actions")?.iter().enumerate() {
            let loc = format!("$.actions[{i}]");
            let id = ActionId(int(a, &loc)?);
            if actions.contains(&id) {
                return Err(DocumentError::DuplicateEntry {
                    location: loc,
                    entry: format!("action {id}"),
                });
            }
            actions.push(id);
        }

        let mut transitions = Vec::new();
        let mut seen = HashSet::new();
        let entries = array(required(top, "transitions", "$")?, "$.transitions")?;
        for (i, t) in entries.iter().enumerate() {
            let loc = format!("$.transitions[{i}]");
            let m = r.object(t, &loc, &["from", "action", "to", "prob"])?;
            let tr = RawTransition {
                from: StateId(int(required(m, "from", &loc)?, &format!("{loc}.from"))?),
                action: ActionId(int(required(m, "action", &loc)?, &format!("{loc}.action"))?),
                to: StateId(int(required(m, "to", &loc)?, &format!("{loc}.to"))?),
                prob: number(required(m, "prob", &loc)?, &format!("{loc}.prob"))?,
            };
            if !seen.insert((tr.from, tr.action, tr.to)) {
                return Err(DocumentError::DuplicateEntry {
                    location: loc,
                    entry: format!("transition ({}, {}, {})", tr.from, tr.action, tr.to),
                });
            }
            transitions.push(tr);
        }

        let mut policy = Vec::new();
        let mut seen = HashSet::new();
        let entries = array(required(top, "policy", "$")?, "$.policy")?;
        for (i, e) in entries.iter().enumerate() {
            let loc = format!("$.policy[{i}]");
            let m = r.object(e, &loc, &["state", "action", "prob"])?;
            let state = StateId(int(required(m, "state", &loc)?, &format!("{loc}.state"))?);
            let action = ActionId(int(required(m, "action", &loc)?, &format!("{loc}.action"))?);
            let prob = number(required(m, "prob", &loc)?, &format!("{loc}.prob"))?;
            if !seen.insert((state, action)) {
                return Err(DocumentError::DuplicateEntry {
                    location: loc,
                    entry: format!("policy ({state}, {action})"),
                });
            }
            policy.push((state, action, prob));
        }

        let metric = match top.get("metric") {
            None => MetricSpec::AbsDiff,
            Some(mv) => {
                let m = r.object(mv, "$.metric", &["kind", "matrix"])?;
                match required(m, "kind", "$.metric")?.as_str() {
                    Some("abs_diff") => MetricSpec::AbsDiff,
                    Some("matrix") => {
                        let rows = array(required(m, "matrix", "$.metric")?, "$.metric.matrix")?;
                        let mut out = Vec::new();
                        for (i, row) in rows.iter().enumerate() {
                            let loc = format!("$.metric.matrix[{i}]");
                            out.push(
                                array(row, &loc)?
                                    .iter()
                                    .enumerate()
                                    .map(|(j, v)| number(v, &format!("{loc}[{j}]")))
                                    .collect::<Result<Vec<_>, _>>()?,
                            );
                        }
                        MetricSpec::Matrix(out)
                    }
                    _ => return Err(field("$.metric.kind", "expected \"abs_diff\" or \"matrix\"")),
                }
            }
        };

        let defaults = match top.get("defaults") {
            None => Defaults::default(),
            Some(dv) => {
                let m = r.object(dv, "$.defaults", &["delta", "p"])?;
                Defaults {
                    delta: m.get("delta").map(|v| number(v, "$.defaults.delta")).transpose()?,
                    p: m.get("p").map(|v| number(v, "$.defaults.p")).transpose()?,
                }
            }
        };

        Ok(Self {
            states,
            actions,
            transitions,
            policy,
            metric,
            defaults,
        })
    }

    /// Validates the document and sorts it into canonical order.
    pub fn load(mut self, mut warnings: Vec<String>) -> Result<LoadedModel, DocumentError> {
        let raw = RawModel {
            states: self.states.clone(),
            actions: self.actions.clone(),
            transitions: self.transitions.clone(),
        };
        let validated = validate_model(&raw).map_err(|e| DocumentError::Model {
            location: model_location(&e),
            source: e,
        })?;
        let model = validated.model;
        warnings.extend(validated.warnings.iter().map(|w| w.to_string()));
        let policy = PolicyTable::new(&model, &self.policy).map_err(|e| DocumentError::Model {
            location: "$.policy".into(),
            source: e,
        })?;
        let metric = match &self.metric {
            MetricSpec::AbsDiff => GroundMetric::abs_diff(model.labels())?,
            MetricSpec::Matrix(rows) => {
                let n = model.num_states();
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(MetricError::DimensionMismatch {
                        expected: n,
                        got: rows.len(),
                    }
                    .into());
                }
                GroundMetric::matrix(n, rows.concat())?
            }
        };

        self.states.sort_by_key(|s| s.0);
        self.actions.sort();
        self.transitions.retain(|t| t.prob != 0.0);
        self.transitions.sort_by_key(|t| (t.from, t.action, t.to));
        self.policy.retain(|e| e.2 != 0.0);
        self.policy.sort_by_key(|e| (e.0, e.1));
        Ok(LoadedModel {
            model,
            policy,
            metric,
            defaults: self.defaults,
            warnings,
            document: self,
        })
    }

    /// One entry per line, sections in fixed order.
    pub fn to_canonical_string(&self) -> String {
        fn num(x: f64) -> String {
            serde_json::to_string(&x).expect("finite number")
        }
        fn block(out: &mut String, name: &str, items: Vec<String>) {
            writeln!(out, "  \"{name}\": [").unwrap();
            let last = items.len().saturating_sub(1);
            for (i, item) in items.iter().enumerate() {
                let sep = if i == last { "" } else { "," };
                writeln!(out, "    {item}{sep}").unwrap();
            }
            writeln!(out, "  ],").unwrap();
        }
        let mut out = String::from("{\n");
        block(
            &mut out,
            "states",
            self.states
                .iter()
                .map(|(id, c)| {
                    let class = match c {
                        StateClass::Goal => "goal",
                        StateClass::Forbidden => "forbidden",
                        StateClass::Taboo => "taboo",
                    };
                    format!("{{\"id\": {id}, \"class\": \"{class}\"}}")
                })
                .collect(),
        );
        let actions: Vec<String> = self.actions.iter().map(|a| a.to_string()).collect();
        writeln!(out, "  \"actions\": [{}],", actions.join(", ")).unwrap();
        block(
            &mut out,
            "transitions",
            self.transitions
                .iter()
                .map(|t| {
                    format!(
                        "{{\"from\": {}, \"action\": {}, \"to\": {}, \"prob\": {}}}",
                        t.from,
                        t.action,
                        t.to,
                        num(t.prob)
                    )
                })
                .collect(),
        );
        block(
            &mut out,
            "policy",
            self.policy
                .iter()
                .map(|(s, a, p)| format!("{{\"state\": {s}, \"action\": {a}, \"prob\": {}}}", num(*p)))
                .collect(),
        );
        match &self.metric {
            MetricSpec::AbsDiff => out.push_str("  \"metric\": {\"kind\": \"abs_diff\"},\n"),
            MetricSpec::Matrix(rows) => {
                out.push_str("  \"metric\": {\"kind\": \"matrix\", \"matrix\": [\n");
                let last = rows.len().saturating_sub(1);
                for (i, row) in rows.iter().enumerate() {
                    let cells: Vec<String> = row.iter().map(|&x| num(x)).collect();
                    let sep = if i == last { "" } else { "," };
                    writeln!(out, "    [{}]{sep}", cells.join(", ")).unwrap();
                }
                out.push_str("  ]},\n");
            }
        }
        let mut defaults = Vec::new();
        if let Some(d) = self.defaults.delta {
            defaults.push(format!("\"delta\": {}", num(d)));
        }
        if let Some(p) = self.defaults.p {
            defaults.push(format!("\"p\": {}", num(p)));
        }
        writeln!(out, "  \"defaults\": {{{}}}", defaults.join(", ")).unwrap();
        out.push_str("}\n");
        out
    }

    pub fn digest(&self) -> String {
        Sha256::digest(self.to_canonical_string().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn model_location(e: &ModelError) -> String {
    match e {
        ModelError::DuplicateState(_) | ModelError::EmptyTaboo | ModelError::NoTerminal => "$.states".into(),
        ModelError::DuplicateAction(_) | ModelError::NoActions => "$.actions".into(),
        _ => "$.transitions".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled::ECC_MODEL_TEXT;

    #[test]
    fn bundled_model_is_canonical() {
        let loaded = parse_model_str(ECC_MODEL_TEXT, Strictness::Strict).unwrap();
        assert_eq!(loaded.document.transitions.len(), 28);
        assert_eq!(loaded.document.to_canonical_string(), ECC_MODEL_TEXT);
        assert!(loaded.warnings.is_empty());
        assert_eq!(loaded.defaults.p, Some(0.5));
        let row = loaded.model.row_of(StateId(1), ActionId(1)).unwrap();
        assert_eq!(row[1], 0.4);
        assert_eq!(row[2], 0.6);
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_model_str("{\n  \"states\": [,]\n}", Strictness::Strict).unwrap_err();
        assert!(matches!(err, DocumentError::Syntax { line: 2, .. }), "{err}");
    }

    #[test]
    fn missing_policy_row_names_state() {
        let text = ECC_MODEL_TEXT.replace(
            concat!(
                "    {\"state\": 6, \"action\": 2, \"prob\": 0.5},\n",
                "    {\"state\": 7, \"action\": 1, \"prob\": 0.5},\n",
                "    {\"state\": 7, \"action\": 2, \"prob\": 0.5}\n",
            ),
            "    {\"state\": 6, \"action\": 2, \"prob\": 0.5}\n",
        );
        assert_ne!(text, ECC_MODEL_TEXT);
        match parse_model_str(&text, Strictness::Strict).unwrap_err() {
            DocumentError::Model { source, .. } => assert_eq!(
                source,
                ModelError::PolicyRowSum { state: StateId(7), sum: 0.0 }
            ),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn duplicate_transition() {
        let text = ECC_MODEL_TEXT.replace(
            "{\"from\": 1, \"action\": 1, \"to\": 3, \"prob\": 0.6}",
            "{\"from\": 1, \"action\": 1, \"to\": 2, \"prob\": 0.6}",
        );
        assert!(matches!(
            parse_model_str(&text, Strictness::Strict).unwrap_err(),
            DocumentError::DuplicateEntry { .. }
        ));
    }

    #[test]
    fn unknown_fields_strict_and_lax() {
        let text = ECC_MODEL_TEXT.replace("\"actions\": [1, 2],", "\"actions\": [1, 2],\n  \"comment\": \"x\",");
        match parse_model_str(&text, Strictness::Strict).unwrap_err() {
            DocumentError::UnknownField { location } => assert_eq!(location, "$.comment"),
            other => panic!("{other}"),
        }
        let loaded = parse_model_str(&text, Strictness::Lax).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
    }

    #[test]
    fn probability_must_be_a_number() {
        let text = ECC_MODEL_TEXT.replace("\"prob\": 0.4}", "\"prob\": \"0.4\"}");
        match parse_model_str(&text, Strictness::Strict).unwrap_err() {
            DocumentError::Field { location, .. } => assert_eq!(location, "$.transitions[0].prob"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn matrix_metric_roundtrip() {
        let text = r#"{
  "states": [{"id": 1, "class": "taboo"}, {"id": 2, "class": "goal"}, {"id": 3, "class": "forbidden"}],
  "actions": [1],
  "transitions": [{"from": 1, "action": 1, "to": 2, "prob": 0.7}, {"from": 1, "action": 1, "to": 3, "prob": 0.3}, {"from": 1, "action": 1, "to": 1, "prob": 0}],
  "policy": [{"state": 1, "action": 1, "prob": 1}],
  "metric": {"kind": "matrix", "matrix": [[0, 1, 2], [1, 0, 1.5], [2, 1.5, 0]]}
}"#;
        let a = parse_model_str(text, Strictness::Strict).unwrap();
        let canon = a.document.to_canonical_string();
        let b = parse_model_str(&canon, Strictness::Strict).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.metric, b.metric);
        assert_eq!(canon, b.document.to_canonical_string());
        assert_eq!(b.document.transitions.len(), 2);
    }
}
