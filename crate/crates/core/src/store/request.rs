use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A request-supplied or literal scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Num(f64),
    Str(String),
}

impl Scalar {
    /// Numbers as-is, strings only if they parse as a number.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Num(v) => Some(*v),
            Scalar::Str(s) => s.trim().parse().ok(),
        }
    }

    /// Parses a CSV cell: numbers become `Num`, everything else `Str`.
    pub fn parse_cell(cell: &str) -> Scalar {
        match cell.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Scalar::Num(v),
            _ => Scalar::Str(cell.to_string()),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Num(v) => write!(f, "{v}"),
            Scalar::Str(s) => f.write_str(s),
        }
    }
}

/// One inference request: an id plus named fields (partition keys and
/// pass-through features).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub id: u64,
    #[serde(flatten)]
    pub fields: BTreeMap<String, Scalar>,
}

impl RequestRecord {
    pub fn new(id: u64) -> Self {
        Self {
            id,
            fields: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: impl Into<String>, value: Scalar) -> Self {
        self.fields.insert(name.into(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Scalar> {
        self.fields.get(name)
    }
}
