//! Request logs: CSV with an `id` column plus named fields.

use std::path::Path;

use crate::store::{RequestRecord, Scalar};
use crate::{Error, Result};

/// Reads a request CSV. Every name in `required` must be a column; missing
/// columns are all reported together before any row is parsed.
pub fn load_requests(path: impl AsRef<Path>, required: &[String]) -> Result<Vec<RequestRecord>> {
    let path = path.as_ref();
    let err = |msg: String| Error::Pipeline(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| err(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut missing: Vec<&str> = required
        .iter()
        .map(String::as_str)
        .filter(|r| !headers.iter().any(|h| h == r))
        .collect();
    let id_col = headers.iter().position(|h| h == "id");
    if id_col.is_none() {
        missing.insert(0, "id");
    }
    if !missing.is_empty() {
        return Err(err(format!("missing request columns: {}", missing.join(", "))));
    }
    let id_col = id_col.expect("checked above");
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| err(e.to_string()))?;
        let raw_id = record.get(id_col).unwrap_or("").trim();
        let id = raw_id
            .parse()
            .map_err(|_| err(format!("row {}: id `{raw_id}` is not an unsigned integer", i + 1)))?;
        let mut request = RequestRecord::new(id);
        for (name, cell) in headers.iter().zip(record.iter()) {
            if name != "id" {
                request.fields.insert(name.clone(), Scalar::parse_cell(cell));
            }
        }
        out.push(request);
    }
    Ok(out)
}

/// Writes requests with columns `id` then `fields` in order.
pub fn write_requests(path: impl AsRef<Path>, fields: &[String], requests: &[RequestRecord]) -> Result<()> {
    let path = path.as_ref();
    let err = |e: csv::Error| Error::Pipeline(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let mut header = vec!["id".to_string()];
    header.extend(fields.iter().cloned());
    w.write_record(&header).map_err(err)?;
    for r in requests {
        let mut row = vec![r.id.to_string()];
        row.extend(fields.iter().map(|f| r.get(f).map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
