//! Step payload records and the transform registry.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A flat record of named fields, serialized as canonical JSON (sorted
/// keys, no whitespace).
pub type Record = BTreeMap<String, FieldValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldValue {
    Bool(bool),
    Number(f64),
    Text(String),
}

impl FieldValue {
    /// `true`/`false` become booleans, finite decimals numbers, anything
    /// else text.
    pub fn parse_loose(s: &str) -> FieldValue {
        match s {
            "true" => FieldValue::Bool(true),
            "false" => FieldValue::Bool(false),
            _ => match s.parse::<f64>() {
                Ok(n) if n.is_finite() => FieldValue::Number(n),
                _ => FieldValue::Text(s.to_string()),
            },
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            FieldValue::Number(n) => Some(*n),
            _ => None,
        }
    }
}

pub fn record_to_bytes(record: &Record) -> Vec<u8> {
    serde_json::to_vec(record).expect("records serialize")
}

pub fn record_from_bytes(bytes: &[u8]) -> Result<Record, String> {
    serde_json::from_slice(bytes).map_err(|e| format!("payload is not a flat JSON record: {e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
    Ne,
}

impl Comparator {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparator::Gt => lhs > rhs,
            Comparator::Ge => lhs >= rhs,
            Comparator::Lt => lhs < rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Eq => lhs == rhs,
            Comparator::Ne => lhs != rhs,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Comparator::Gt => "gt",
            Comparator::Ge => "ge",
            Comparator::Lt => "lt",
            Comparator::Le => "le",
            Comparator::Eq => "eq",
            Comparator::Ne => "ne",
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Comparator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "gt" => Comparator::Gt,
            "ge" => Comparator::Ge,
            "lt" => Comparator::Lt,
            "le" => Comparator::Le,
            "eq" => Comparator::Eq,
            "ne" => Comparator::Ne,
            other => return Err(format!("unknown comparator {other:?}")),
        })
    }
}

/// Name and parameters of a transform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformSpec {
    pub name: String,
    pub params: BTreeMap<String, String>,
}

impl TransformSpec {
    pub fn new(name: impl Into<String>) -> Self {
        TransformSpec {
            name: name.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.params.insert(key.into(), value.into());
        self
    }
}

/// A deterministic, pure function from a record to a record.
pub type TransformFn = fn(&BTreeMap<String, String>, &Record) -> Result<Record, String>;

#[derive(Clone)]
pub struct Registry {
    transforms: BTreeMap<String, TransformFn>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.transforms.keys()).finish()
    }
}

impl Default for Registry {
    fn default() -> Self {
        Self::standard()
    }
}

impl Registry {
    pub fn empty() -> Self {
        Registry {
            transforms: BTreeMap::new(),
        }
    }

    /// `identity`, `set`, `fold` and `classify`.
    pub fn standard() -> Self {
        let mut r = Registry::empty();
        r.register("identity", identity);
        r.register("set", set);
        r.register("fold", fold);
        r.register("classify", classify);
        r
    }

    pub fn register(&mut self, name: &str, f: TransformFn) {
        self.transforms.insert(name.to_string(), f);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.transforms.contains_key(name)
    }

    pub fn apply(&self, spec: &TransformSpec, input: &Record) -> Result<Record, String> {
        let f = self
            .transforms
            .get(&spec.name)
            .ok_or_else(|| format!("unknown transform {:?}", spec.name))?;
        let out = f(&spec.params, input)?;
        if out.values().any(|v| matches!(v, FieldValue::Number(n) if !n.is_finite())) {
            return Err(format!("transform {:?} produced a non-finite number", spec.name));
        }
        Ok(out)
    }
}

fn param<'a>(params: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str, String> {
    params
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| format!("missing parameter {key:?}"))
}

fn number(record: &Record, field: &str) -> Result<f64, String> {
    match record.get(field) {
        Some(FieldValue::Number(n)) => Ok(*n),
        Some(_) => Err(format!("field {field:?} is not numeric")),
        None => Err(format!("missing field {field:?}")),
    }
}

fn identity(_: &BTreeMap<String, String>, input: &Record) -> Result<Record, String> {
    Ok(input.clone())
}

/// Copies the input and assigns every parameter as a field.
fn set(params: &BTreeMap<String, String>, input: &Record) -> Result<Record, String> {
    let mut out = input.clone();
    for (k, v) in params {
        out.insert(k.clone(), FieldValue::parse_loose(v));
    }
    Ok(out)
}

/// `fields=a,b,... op=sum|product|min|max into=name`
fn fold(params: &BTreeMap<String, String>, input: &Record) -> Result<Record, String> {
    let fields: Vec<&str> = param(params, "fields")?.split(',').collect();
    let into = param(params, "into")?;
    let op = params.get("op").map_or("sum", String::as_str);
    let values = fields
        .iter()
        .map(|f| number(input, f))
        .collect::<Result<Vec<_>, _>>()?;
    let result = match op {
        "sum" => values.iter().sum(),
        "product" => values.iter().product(),
        "min" => values.iter().copied().fold(f64::INFINITY, f64::min),
        "max" => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        other => return Err(format!("unknown fold op {other:?}")),
    };
    let mut out = input.clone();
    out.insert(into.to_string(), FieldValue::Number(result));
    Ok(out)
}

/// `field=x cmp=gt bound=0.5 [into=final]`
fn classify(params: &BTreeMap<String, String>, input: &Record) -> Result<Record, String> {
    let field = param(params, "field")?;
    let cmp: Comparator = param(params, "cmp")?.parse()?;
    let bound: f64 = param(params, "bound")?
        .parse()
        .map_err(|_| "bound is not a number".to_string())?;
    let into = params.get("into").map_or("final", String::as_str);
    let value = number(input, field)?;
    let mut out = input.clone();
    out.insert(into.to_string(), FieldValue::Bool(cmp.holds(value, bound)));
    Ok(out)
}
