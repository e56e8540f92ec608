//! Instance and report files.
//!
//! An instance is a JSON object `{"version": 1, "kind": ..., "payload": ...}`.
//! Rationals are `p/q` strings and circuits are embedded in the circuit text
//! format. Parsing is strict: unknown fields are rejected and every schema
//! error names the offending field.

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

pub mod float;
pub mod run;
pub mod schema;

pub use run::{digest, solve_circuit, solve_instance, summarize, verify_instance, Block, PointFile, RunError, RunReport, Timing};
pub use schema::{Gate, Problem, Q, Text};

pub const FORMAT_VERSION: u64 = 1;

pub const KINDS: [&str; 12] =
    ["nash", "concave", "ccc", "eps_proper", "stochastic", "cake", "kkm", "bapat", "ad_market", "hz", "cp", "raw_circuit"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("schema error at `{field}`: {msg}")]
    Schema { field: String, msg: String },
}

pub(crate) fn schema_err(field: impl Into<String>, msg: impl std::fmt::Display) -> InstanceError {
    InstanceError::Schema { field: field.into(), msg: msg.to_string() }
}

/// A parsed instance: the format version and the kind-specific payload.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceFile {
    pub version: u64,
    pub payload: schema::Payload,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: u64,
    kind: &'a str,
    payload: &'a T,
}

/// Parse JSON text, reporting syntax errors by position.
pub(crate) fn parse_json(bytes: &[u8]) -> Result<Value, InstanceError> {
    serde_json::from_slice(bytes).map_err(|e| InstanceError::Parse { line: e.line(), column: e.column(), msg: e.to_string() })
}

/// Deserialize `value` as `T`, prefixing the failing path with `prefix`.
pub(crate) fn typed<T: serde::de::DeserializeOwned>(value: Value, prefix: &str) -> Result<T, InstanceError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let field = match (path.as_str(), prefix) {
            (".", _) => prefix.to_string(),
            (_, "") => path,
            _ => format!("{prefix}.{path}"),
        };
        schema_err(field, e.into_inner())
    })
}

impl InstanceFile {
    pub fn parse(bytes: &[u8]) -> Result<InstanceFile, InstanceError> {
        let Value::Object(mut top) = parse_json(bytes)? else {
            return Err(schema_err("", "instance must be a JSON object"));
        };
        if let Some(k) = top.keys().find(|k| !matches!(k.as_str(), "version" | "kind" | "payload")) {
            return Err(schema_err(k.clone(), "unknown field"));
        }
        let version = match top.remove("version") {
            Some(v) => v.as_u64().ok_or_else(|| schema_err("version", "expected an integer"))?,
            None => return Err(schema_err("version", "missing field")),
        };
        if version != FORMAT_VERSION {
            return Err(schema_err("version", format!("unsupported version {version}")));
        }
        let kind = match top.remove("kind") {
            Some(Value::String(s)) => s,
            Some(_) => return Err(schema_err("kind", "expected a string")),
            None => return Err(schema_err("kind", "missing field")),
        };
        let payload = top.remove("payload").ok_or_else(|| schema_err("payload", "missing field"))?;
        let payload = schema::Payload::from_value(&kind, payload)?;
        // Cross-field shapes are part of the schema.
        payload.to_problem()?;
        Ok(InstanceFile { version, payload })
    }

    pub fn kind(&self) -> &'static str {
        self.payload.kind()
    }

    /// Canonical text: pretty JSON with a trailing newline. Parsing a
    /// canonical file and writing it back reproduces it byte for byte.
    pub fn to_canonical(&self) -> String {
        let env = Envelope { version: self.version, kind: self.kind(), payload: &self.payload };
        let mut s = serde_json::to_string_pretty(&env).expect("payloads serialize");
        s.push('\n');
        s
    }

    pub fn problem(&self) -> Result<Problem, InstanceError> {
        self.payload.to_problem()
    }

    pub fn from_problem(p: &Problem) -> InstanceFile {
        InstanceFile { version: FORMAT_VERSION, payload: schema::Payload::from_problem(p) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PENNIES: &str = r#"{
  "version": 1,
  "kind": "nash",
  "payload": {
    "actions": [2, 2],
    "payoffs": [["1/1", "-1/1", "-1/1", "1/1"], ["-1/1", "1/1", "1/1", "-1/1"]]
  }
}"#;

    #[test]
    fn minimal_nash_parses() {
        let f = InstanceFile::parse(PENNIES.as_bytes()).unwrap();
        assert_eq!(f.kind(), "nash");
        match f.problem().unwrap() {
            Problem::Nash(g) => {
                assert_eq!(g.actions, vec![2, 2]);
                assert_eq!(g.payoffs[0][1], crate::circuit::rat(-1, 1));
            }
            other => panic!("unexpected {}", other.kind()),
        }
    }

    #[test]
    fn rational_round_trips_exactly() {
        let text = PENNIES.replace("\"-1/1\", \"-1/1\"", "\"1/3\", \"-1/1\"");
        let f = InstanceFile::parse(text.as_bytes()).unwrap();
        let canon = f.to_canonical();
        assert!(canon.contains("\"1/3\""));
        assert_eq!(InstanceFile::parse(canon.as_bytes()).unwrap().to_canonical(), canon);
        let Problem::Nash(g) = f.problem().unwrap() else { panic!() };
        assert_eq!(g.payoffs[0][1], crate::circuit::rat(1, 3));
    }

    #[test]
    fn shape_mismatch_names_the_field() {
        let text = PENNIES.replace("[\"-1/1\", \"1/1\", \"1/1\", \"-1/1\"]", "[\"-1/1\", \"1/1\", \"1/1\"]");
        let err = InstanceFile::parse(text.as_bytes()).and_then(|f| f.problem()).unwrap_err();
        assert!(matches!(&err, InstanceError::Schema { field, .. } if field == "payload.payoffs[1]"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = InstanceFile::parse(b"{\n  \"version\": 1,\n  \"kind\" \"nash\"\n}").unwrap_err();
        assert!(matches!(err, InstanceError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn strictness() {
        let unknown = PENNIES.replace("\"actions\"", "\"extra\": 0, \"actions\"");
        let err = InstanceFile::parse(unknown.as_bytes()).unwrap_err();
        assert!(matches!(&err, InstanceError::Schema { field, .. } if field.starts_with("payload")), "{err}");
        let bad_version = PENNIES.replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(InstanceFile::parse(bad_version.as_bytes()), Err(InstanceError::Schema { field, .. }) if field == "version"));
        let bad_kind = PENNIES.replace("\"nash\"", "\"poker\"");
        assert!(matches!(InstanceFile::parse(bad_kind.as_bytes()), Err(InstanceError::Schema { field, .. }) if field == "kind"));
        let bad_rat = PENNIES.replace("\"-1/1\", \"1/1\", \"1/1\"", "\"-1/0\", \"1/1\", \"1/1\"");
        let err = InstanceFile::parse(bad_rat.as_bytes()).unwrap_err();
        assert!(matches!(&err, InstanceError::Schema { field, .. } if field == "payload.payoffs[1][0]"), "{err}");
    }

    #[test]
    fn every_kind_round_trips() {
        let samples = crate::fixtures::sample_problems();
        let kinds: Vec<&str> = samples.iter().map(|(_, p)| p.kind()).collect();
        assert_eq!(kinds, KINDS.to_vec());
        for (name, p) in samples {
            let canon = InstanceFile::from_problem(&p).to_canonical();
            let back = InstanceFile::parse(canon.as_bytes()).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(back.to_canonical(), canon, "{name}");
            assert_eq!(back.problem().unwrap(), p, "{name}");
        }
    }
}
