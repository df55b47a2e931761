use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::dataset::{ColumnData, ColumnType, Dataset, KeyValue};
use super::request::{RequestRecord, Scalar};
use super::StoreError;
use crate::stats::{self, quantile_select};

/// Supported aggregation operators. TOP-K, DISTINCT, MIN and MAX are not
/// approximable by uniform sampling and are rejected when parsing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Sum,
    Count,
    Avg,
    Var,
    Std,
    Median,
    Quantile(f64),
}

impl Operator {
    /// MEDIAN and QUANTILE need the bootstrap.
    pub fn is_holistic(self) -> bool {
        matches!(self, Operator::Median | Operator::Quantile(_))
    }

    pub fn quantile_level(self) -> Option<f64> {
        match self {
            Operator::Median => Some(0.5),
            Operator::Quantile(q) => Some(q),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Operator::Sum => "sum",
            Operator::Count => "count",
            Operator::Avg => "avg",
            Operator::Var => "var",
            Operator::Std => "std",
            Operator::Median => "median",
            Operator::Quantile(_) => "quantile",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    #[inline]
    fn holds<T: PartialOrd + ?Sized>(self, lhs: &T, rhs: &T) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
        }
    }
}

/// Right-hand side of a condition: a literal or a request field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Operand {
    Field { field: String },
    Value { value: Scalar },
}

/// `column <op> operand`; a predicate is the conjunction of its conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub column: String,
    pub op: CmpOp,
    #[serde(flatten)]
    pub operand: Operand,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionBinding {
    /// Request field whose value selects the partition.
    pub field: String,
}

/// One aggregation feature of a pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationSpec {
    #[serde(rename = "id")]
    pub feature_id: String,
    pub table: String,
    /// Value column; optional only for COUNT.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    pub op: Operator,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub predicate: Vec<Condition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionBinding>,
}

impl AggregationSpec {
    fn err(&self, message: impl Into<String>) -> StoreError {
        StoreError::Aggregation {
            feature: self.feature_id.clone(),
            message: message.into(),
        }
    }

    /// Request-independent checks against the dataset schema.
    pub fn validate(&self, dataset: &Dataset) -> Result<(), StoreError> {
        let table = dataset.table(&self.table)?;
        if let Some(q) = self.op.quantile_level() {
            if !(q > 0.0 && q < 1.0) {
                return Err(self.err(format!("quantile level {q} outside (0, 1)")));
            }
        }
        match &self.column {
            Some(col) => {
                let data = table.column(col)?;
                if !matches!(data.ty(), ColumnType::Float64 | ColumnType::Int64) {
                    return Err(StoreError::ColumnType {
                        table: self.table.clone(),
                        column: col.clone(),
                        found: data.ty().name(),
                        expected: "float64 or int64",
                    });
                }
            }
            None if self.op != Operator::Count => {
                return Err(self.err(format!("operator {} needs a value column", self.op.name())));
            }
            None => {}
        }
        for cond in &self.predicate {
            let data = table.column(&cond.column)?;
            if data.ty() == ColumnType::Category && !matches!(cond.op, CmpOp::Eq | CmpOp::Ne) {
                return Err(self.err(format!(
                    "category column `{}` supports only eq/ne",
                    cond.column
                )));
            }
        }
        match (&self.partition, table.partition()) {
            (Some(_), None) => Err(self.err(format!("table `{}` has no partition key", self.table))),
            _ => Ok(()),
        }
    }

    /// Resolves the spec against a request: partition range, value column
    /// and predicate operands.
    pub fn bind<'d>(
        &self,
        dataset: &'d Dataset,
        request: &RequestRecord,
    ) -> Result<BoundAggregation<'d>, StoreError> {
        self.validate(dataset)?;
        let table = dataset.table(&self.table)?;
        let rows = match (&self.partition, table.partition()) {
            (Some(binding), Some(index)) => {
                let value = request.get(&binding.field).ok_or_else(|| {
                    StoreError::MissingRequestField {
                        request: request.id,
                        field: binding.field.clone(),
                    }
                })?;
                let key_ty = table.column(&index.column)?.ty();
                match key_for(value, key_ty).and_then(|k| index.range(&k)) {
                    Some(r) => r,
                    None => {
                        log::debug!(
                            "feature `{}`: no partition for {}={} (request {})",
                            self.feature_id,
                            binding.field,
                            value,
                            request.id
                        );
                        0..0
                    }
                }
            }
            _ => 0..table.rows(),
        };
        let values = self.column.as_deref().map(|c| table.column(c)).transpose()?;
        let conditions = self
            .predicate
            .iter()
            .map(|cond| {
                let column = table.column(&cond.column)?;
                let rhs = match &cond.operand {
                    Operand::Value { value } => value.clone(),
                    Operand::Field { field } => request
                        .get(field)
                        .cloned()
                        .ok_or_else(|| StoreError::MissingRequestField {
                            request: request.id,
                            field: field.clone(),
                        })?,
                };
                BoundCondition::new(column, cond.op, rhs)
                    .ok_or_else(|| self.err(format!("cannot compare column `{}` with {rhs_desc}", cond.column, rhs_desc = describe(&cond.operand))))
            })
            .collect::<Result<_, _>>()?;
        Ok(BoundAggregation {
            op: self.op,
            rows,
            values,
            conditions,
        })
    }
}

fn describe(op: &Operand) -> String {
    match op {
        Operand::Field { field } => format!("request field `{field}`"),
        Operand::Value { value } => format!("literal {value}"),
    }
}

fn key_for(value: &Scalar, ty: ColumnType) -> Option<KeyValue> {
    match ty {
        ColumnType::Int64 => match value {
            Scalar::Num(v) if v.fract() == 0.0 && v.abs() < 9.0e15 => Some(KeyValue::Int(*v as i64)),
            Scalar::Str(s) => s.trim().parse().ok().map(KeyValue::Int),
            _ => None,
        },
        ColumnType::StringKey | ColumnType::Category => Some(KeyValue::Str(match value {
            Scalar::Num(v) if v.fract() == 0.0 => format!("{}", *v as i64),
            other => other.to_string(),
        })),
        ColumnType::Float64 => None,
    }
}

#[derive(Debug, Clone)]
enum Rhs {
    Num(f64),
    Str(String),
    /// Category code; `None` when the literal is absent from the dictionary.
    Code(Option<u32>),
}

#[derive(Debug, Clone)]
struct BoundCondition<'d> {
    column: &'d ColumnData,
    op: CmpOp,
    rhs: Rhs,
}

impl<'d> BoundCondition<'d> {
    fn new(column: &'d ColumnData, op: CmpOp, rhs: Scalar) -> Option<Self> {
        let rhs = match column {
            ColumnData::Float64(_) | ColumnData::Int64(_) => Rhs::Num(rhs.as_f64()?),
            ColumnData::Category { dictionary, .. } => {
                let s = rhs.to_string();
                Rhs::Code(dictionary.iter().position(|d| *d == s).map(|p| p as u32))
            }
            ColumnData::StringKey(_) => Rhs::Str(rhs.to_string()),
        };
        Some(Self { column, op, rhs })
    }

    #[inline]
    fn matches(&self, row: usize) -> bool {
        match (self.column, &self.rhs) {
            (ColumnData::Float64(v), Rhs::Num(x)) => self.op.holds(&v[row], x),
            (ColumnData::Int64(v), Rhs::Num(x)) => self.op.holds(&(v[row] as f64), x),
            (ColumnData::Category { codes, .. }, Rhs::Code(code)) => {
                let eq = Some(codes[row]) == *code;
                if self.op == CmpOp::Eq {
                    eq
                } else {
                    !eq
                }
            }
            (ColumnData::StringKey(v), Rhs::Str(s)) => self.op.holds(v[row].as_str(), s.as_str()),
            _ => false,
        }
    }
}

/// An aggregation resolved against one request.
#[derive(Debug, Clone)]
pub struct BoundAggregation<'d> {
    pub op: Operator,
    /// Row range of the bound partition (the whole table when unpartitioned).
    pub rows: Range<usize>,
    values: Option<&'d ColumnData>,
    conditions: Vec<BoundCondition<'d>>,
}

impl BoundAggregation<'_> {
    /// Population size N: rows in the bound partition.
    pub fn population(&self) -> usize {
        self.rows.len()
    }

    pub fn has_predicate(&self) -> bool {
        !self.conditions.is_empty()
    }

    /// Value of an absolute row (0 for COUNT without a value column).
    #[inline]
    pub fn value(&self, row: usize) -> f64 {
        self.values.and_then(|c| c.numeric(row)).unwrap_or(0.0)
    }

    #[inline]
    pub fn matches(&self, row: usize) -> bool {
        self.conditions.iter().all(|c| c.matches(row))
    }

    /// Matching values in row order over the whole partition.
    pub fn scan_matching(&self) -> Vec<f64> {
        self.rows
            .clone()
            .filter(|&r| self.matches(r))
            .map(|r| self.value(r))
            .collect()
    }
}

/// Applies an operator to the complete set of matching values, given in row
/// order. Empty input yields 0 for every operator.
pub fn aggregate_values(op: Operator, matched: &[f64]) -> f64 {
    let n = matched.len();
    if n == 0 {
        if !matches!(op, Operator::Count | Operator::Sum) {
            log::warn!("{} over empty input; using 0", op.name());
        }
        return 0.0;
    }
    match op {
        Operator::Count => n as f64,
        Operator::Sum => matched.iter().sum(),
        Operator::Avg => matched.iter().sum::<f64>() / n as f64,
        Operator::Var => exact_sample_variance(matched),
        Operator::Std => exact_sample_variance(matched).sqrt(),
        Operator::Median | Operator::Quantile(_) => {
            let mut scratch = matched.to_vec();
            quantile_select(&mut scratch, op.quantile_level().expect("holistic"))
        }
    }
}

fn exact_sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = stats::mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// Full-partition scan: the operator applied to every matching row.
pub fn exact_aggregate(
    dataset: &Dataset,
    spec: &AggregationSpec,
    request: &RequestRecord,
) -> Result<f64, StoreError> {
    let bound = spec.bind(dataset, request)?;
    Ok(aggregate_values(spec.op, &bound.scan_matching()))
}
