use std::collections::{HashMap, HashSet};
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnType {
    #[serde(rename = "float64")]
    Float64,
    #[serde(rename = "int64")]
    Int64,
    #[serde(rename = "category")]
    Category,
    #[serde(rename = "string-key")]
    StringKey,
}

impl ColumnType {
    pub fn name(self) -> &'static str {
        match self {
            ColumnType::Float64 => "float64",
            ColumnType::Int64 => "int64",
            ColumnType::Category => "category",
            ColumnType::StringKey => "string-key",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableManifest {
    pub name: String,
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition_key: Option<String>,
    pub columns: Vec<ColumnSchema>,
}

/// Schema manifest: `{tables:[{name, file, partition_key?, columns:[{name,type}]}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tables: Vec<TableManifest>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Float64(Vec<f64>),
    Int64(Vec<i64>),
    Category { codes: Vec<u32>, dictionary: Vec<String> },
    StringKey(Vec<String>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Float64(v) => v.len(),
            ColumnData::Int64(v) => v.len(),
            ColumnData::Category { codes, .. } => codes.len(),
            ColumnData::StringKey(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ty(&self) -> ColumnType {
        match self {
            ColumnData::Float64(_) => ColumnType::Float64,
            ColumnData::Int64(_) => ColumnType::Int64,
            ColumnData::Category { .. } => ColumnType::Category,
            ColumnData::StringKey(_) => ColumnType::StringKey,
        }
    }

    /// Numeric view of a row; `None` for non-numeric columns.
    #[inline]
    pub fn numeric(&self, row: usize) -> Option<f64> {
        match self {
            ColumnData::Float64(v) => Some(v[row]),
            ColumnData::Int64(v) => Some(v[row] as f64),
            _ => None,
        }
    }

    pub fn key(&self, row: usize) -> Option<KeyValue> {
        match self {
            ColumnData::Int64(v) => Some(KeyValue::Int(v[row])),
            ColumnData::StringKey(v) => Some(KeyValue::Str(v[row].clone())),
            ColumnData::Category { codes, dictionary } => {
                Some(KeyValue::Str(dictionary[codes[row] as usize].clone()))
            }
            ColumnData::Float64(_) => None,
        }
    }

    fn permute(&self, order: &[usize]) -> ColumnData {
        match self {
            ColumnData::Float64(v) => ColumnData::Float64(order.iter().map(|&i| v[i]).collect()),
            ColumnData::Int64(v) => ColumnData::Int64(order.iter().map(|&i| v[i]).collect()),
            ColumnData::Category { codes, dictionary } => ColumnData::Category {
                codes: order.iter().map(|&i| codes[i]).collect(),
                dictionary: dictionary.clone(),
            },
            ColumnData::StringKey(v) => {
                ColumnData::StringKey(order.iter().map(|&i| v[i].clone()).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn new(name: impl Into<String>, data: ColumnData) -> Self {
        Self {
            name: name.into(),
            data,
        }
    }
}

/// Partition key value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeyValue {
    Int(i64),
    Str(String),
}

impl std::fmt::Display for KeyValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KeyValue::Int(v) => write!(f, "{v}"),
            KeyValue::Str(s) => f.write_str(s),
        }
    }
}

/// Map from key value to its contiguous row range (rows sorted by key).
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionIndex {
    pub column: String,
    ranges: HashMap<KeyValue, Range<usize>>,
}

impl PartitionIndex {
    pub fn range(&self, key: &KeyValue) -> Option<Range<usize>> {
        self.ranges.get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Keys in ascending order.
    pub fn keys(&self) -> Vec<&KeyValue> {
        let mut keys: Vec<_> = self.ranges.keys().collect();
        keys.sort();
        keys
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    columns: Vec<Column>,
    rows: usize,
    partition: Option<PartitionIndex>,
}

impl Table {
    /// Builds a table; with a partition key, rows are stably sorted by key
    /// and indexed.
    pub fn new(
        name: impl Into<String>,
        columns: Vec<Column>,
        partition_key: Option<&str>,
    ) -> Result<Table, StoreError> {
        let name = name.into();
        let rows = columns.first().map_or(0, |c| c.data.len());
        if columns.iter().any(|c| c.data.len() != rows) {
            return Err(StoreError::RaggedColumns { table: name });
        }
        let mut table = Table {
            name,
            columns,
            rows,
            partition: None,
        };
        if let Some(key) = partition_key {
            table.build_partition(key)?;
        }
        Ok(table)
    }

    fn build_partition(&mut self, key: &str) -> Result<(), StoreError> {
        let key_col = self.column(key)?;
        if key_col.ty() == ColumnType::Float64 {
            return Err(StoreError::ColumnType {
                table: self.name.clone(),
                column: key.to_string(),
                found: "float64",
                expected: "int64, category or string-key",
            });
        }
        let keys: Vec<KeyValue> = (0..self.rows)
            .map(|r| key_col.key(r).expect("non-float column has keys"))
            .collect();
        let mut order: Vec<usize> = (0..self.rows).collect();
        order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
        for col in &mut self.columns {
            col.data = col.data.permute(&order);
        }
        let mut ranges = HashMap::new();
        let mut start = 0;
        while start < order.len() {
            let k = &keys[order[start]];
            let mut end = start + 1;
            while end < order.len() && &keys[order[end]] == k {
                end += 1;
            }
            ranges.insert(k.clone(), start..end);
            start = end;
        }
        self.partition = Some(PartitionIndex {
            column: key.to_string(),
            ranges,
        });
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn partition(&self) -> Option<&PartitionIndex> {
        self.partition.as_ref()
    }

    pub fn column(&self, name: &str) -> Result<&ColumnData, StoreError> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| &c.data)
            .ok_or_else(|| StoreError::UnknownColumn {
                table: self.name.clone(),
                column: name.to_string(),
            })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    tables: Vec<Table>,
}

impl Dataset {
    pub fn new(tables: Vec<Table>) -> Result<Dataset, StoreError> {
        let mut seen = HashSet::new();
        for t in &tables {
            if !seen.insert(t.name.as_str()) {
                return Err(StoreError::DuplicateTable(t.name.clone()));
            }
        }
        Ok(Dataset { tables })
    }

    pub fn table(&self, name: &str) -> Result<&Table, StoreError> {
        self.tables
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| StoreError::UnknownTable(name.to_string()))
    }

    pub fn tables(&self) -> &[Table] {
        &self.tables
    }

    pub fn total_rows(&self) -> usize {
        self.tables.iter().map(Table::rows).sum()
    }
}

/// Loads every table named in a schema manifest. `path` may be the
/// manifest file itself or a directory holding `manifest.json`; CSV paths
/// resolve relative to the manifest.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, StoreError> {
    let path = path.as_ref();
    let manifest_path: PathBuf = if path.is_dir() {
        path.join("manifest.json")
    } else {
        path.to_path_buf()
    };
    let manifest_err = |message: String| StoreError::Manifest {
        path: manifest_path.display().to_string(),
        message,
    };
    let text = fs::read_to_string(&manifest_path).map_err(|e| manifest_err(e.to_string()))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| manifest_err(e.to_string()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let mut names = HashSet::new();
    let mut tables = Vec::with_capacity(manifest.tables.len());
    for tm in &manifest.tables {
        if !names.insert(tm.name.clone()) {
            return Err(StoreError::DuplicateTable(tm.name.clone()));
        }
        tables.push(load_table(base, tm)?);
    }
    Dataset::new(tables)
}

fn load_table(base: &Path, tm: &TableManifest) -> Result<Table, StoreError> {
    let file = base.join(&tm.file);
    if !file.is_file() {
        return Err(StoreError::MissingFile {
            table: tm.name.clone(),
            path: file.display().to_string(),
        });
    }
    let csv_err = |row: usize, e: csv::Error| StoreError::Csv {
        table: tm.name.clone(),
        row,
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&file)
        .map_err(|e| csv_err(0, e))?;
    let headers = reader.headers().map_err(|e| csv_err(0, e))?.clone();
    let positions: Vec<usize> = tm
        .columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h.trim() == c.name)
                .ok_or_else(|| StoreError::MissingColumn {
                    table: tm.name.clone(),
                    column: c.name.clone(),
                })
        })
        .collect::<Result<_, _>>()?;

    let mut builders: Vec<ColumnBuilder> = tm.columns.iter().map(|c| ColumnBuilder::new(c.ty)).collect();
    let mut record = csv::StringRecord::new();
    let mut row = 0usize;
    while reader.read_record(&mut record).map_err(|e| csv_err(row + 1, e))? {
        row += 1;
        for ((schema, &pos), builder) in tm.columns.iter().zip(&positions).zip(&mut builders) {
            let cell = record.get(pos).unwrap_or("");
            builder.push(cell).map_err(|expected| StoreError::Parse {
                table: tm.name.clone(),
                column: schema.name.clone(),
                row,
                value: cell.to_string(),
                expected,
            })?;
        }
    }
    let columns = tm
        .columns
        .iter()
        .zip(builders)
        .map(|(c, b)| Column::new(c.name.clone(), b.finish()))
        .collect();
    Table::new(tm.name.clone(), columns, tm.partition_key.as_deref())
}

enum ColumnBuilder {
    Float64(Vec<f64>),
    Int64(Vec<i64>),
    Category(Vec<u32>, Vec<String>, HashMap<String, u32>),
    StringKey(Vec<String>),
}

impl ColumnBuilder {
    fn new(ty: ColumnType) -> Self {
        match ty {
            ColumnType::Float64 => ColumnBuilder::Float64(Vec::new()),
            ColumnType::Int64 => ColumnBuilder::Int64(Vec::new()),
            ColumnType::Category => ColumnBuilder::Category(Vec::new(), Vec::new(), HashMap::new()),
            ColumnType::StringKey => ColumnBuilder::StringKey(Vec::new()),
        }
    }

    // Rust's float parser is locale-independent: dot decimal separator only.
    fn push(&mut self, cell: &str) -> Result<(), &'static str> {
        match self {
            ColumnBuilder::Float64(v) => {
                let x: f64 = cell.trim().parse().map_err(|_| "finite float64")?;
                if !x.is_finite() {
                    return Err("finite float64");
                }
                v.push(x);
            }
            ColumnBuilder::Int64(v) => v.push(cell.trim().parse().map_err(|_| "int64")?),
            ColumnBuilder::Category(codes, dict, lookup) => {
                let code = *lookup.entry(cell.to_string()).or_insert_with(|| {
                    dict.push(cell.to_string());
                    (dict.len() - 1) as u32
                });
                codes.push(code);
            }
            ColumnBuilder::StringKey(v) => v.push(cell.to_string()),
        }
        Ok(())
    }

    fn finish(self) -> ColumnData {
        match self {
            ColumnBuilder::Float64(v) => ColumnData::Float64(v),
            ColumnBuilder::Int64(v) => ColumnData::Int64(v),
            ColumnBuilder::Category(codes, dictionary, _) => ColumnData::Category { codes, dictionary },
            ColumnBuilder::StringKey(v) => ColumnData::StringKey(v),
        }
    }
}
