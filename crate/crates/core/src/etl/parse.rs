use chrono::NaiveDate;
use serde_json::Value;

use super::config::{SourceDescriptor, SourceFormat};
use super::{EtlError, RawRecord, Reject, Result};

/// Records read from one payload. Counts are per (row, measure) cell, so
/// `records.len() + rejects.len()` is the number of cells read.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedPayload {
    pub records: Vec<RawRecord>,
    pub rejects: Vec<Reject>,
}

impl ParsedPayload {
    pub fn cells_read(&self) -> usize {
        self.records.len() + self.rejects.len()
    }
}

/// Parses a CSV or JSON payload according to `descriptor`.
///
/// Rows whose fields fail coercion become rejects; only an undecodable
/// payload or a missing mapped column aborts.
pub fn parse_source(descriptor: &SourceDescriptor, payload: &[u8]) -> Result<ParsedPayload> {
    let text = std::str::from_utf8(payload)?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    match descriptor.format {
        SourceFormat::Csv => parse_csv(descriptor, text),
        SourceFormat::Json => parse_json(descriptor, text),
    }
}

struct RowFields<'a> {
    region: Option<&'a str>,
    date: Option<&'a str>,
    values: Vec<Option<&'a str>>,
}

fn parse_csv(descriptor: &SourceDescriptor, text: &str) -> Result<ParsedPayload> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(descriptor.delimiter as u8)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let position = |name: &str| headers.iter().position(|h| h.trim() == name);

    let fields = &descriptor.fields;
    let mut missing = Vec::new();
    let region_col = position(&fields.region);
    let date_col = position(&fields.date);
    if region_col.is_none() {
        missing.push(fields.region.clone());
    }
    if date_col.is_none() {
        missing.push(fields.date.clone());
    }
    let measure_cols: Vec<Option<usize>> = fields.measures.iter().map(|m| position(&m.column)).collect();
    for (m, col) in fields.measures.iter().zip(&measure_cols) {
        if col.is_none() {
            missing.push(m.column.clone());
        }
    }
    if !missing.is_empty() {
        return Err(EtlError::MissingColumns(missing));
    }

    let mut out = ParsedPayload::default();
    for (row_index, record) in reader.records().enumerate() {
        let record = record?;
        let row = RowFields {
            region: region_col.and_then(|c| record.get(c)),
            date: date_col.and_then(|c| record.get(c)),
            values: measure_cols
                .iter()
                .map(|c| c.and_then(|c| record.get(c)))
                .collect(),
        };
        coerce_row(descriptor, row_index, row, &mut out);
    }
    Ok(out)
}

fn parse_json(descriptor: &SourceDescriptor, text: &str) -> Result<ParsedPayload> {
    let doc: Value = serde_json::from_str(text)?;
    let Value::Array(items) = doc else {
        return Err(EtlError::Config(format!(
            "{}: JSON payload must be an array of objects",
            descriptor.source_id
        )));
    };
    let fields = &descriptor.fields;
    if let Some(Value::Object(first)) = items.first() {
        let mut missing: Vec<String> = [&fields.region, &fields.date]
            .into_iter()
            .chain(fields.measures.iter().map(|m| &m.column))
            .filter(|k| !first.contains_key(k.as_str()))
            .cloned()
            .collect();
        missing.dedup();
        if !missing.is_empty() {
            return Err(EtlError::MissingColumns(missing));
        }
    }

    let mut out = ParsedPayload::default();
    for (row_index, item) in items.iter().enumerate() {
        let Value::Object(obj) = item else {
            for _ in &fields.measures {
                out.rejects.push(Reject {
                    row_index,
                    reason: "row is not an object".into(),
                    raw_region_key: String::new(),
                    raw_date: String::new(),
                });
            }
            continue;
        };
        let scalars: Vec<Option<String>> = [&fields.region, &fields.date]
            .into_iter()
            .chain(fields.measures.iter().map(|m| &m.column))
            .map(|k| obj.get(k.as_str()).and_then(scalar_text))
            .collect();
        let row = RowFields {
            region: scalars[0].as_deref(),
            date: scalars[1].as_deref(),
            values: scalars[2..].iter().map(|v| v.as_deref()).collect(),
        };
        coerce_row(descriptor, row_index, row, &mut out);
    }
    Ok(out)
}

fn scalar_text(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Null | Value::Array(_) | Value::Object(_) => None,
    }
}

fn coerce_row(descriptor: &SourceDescriptor, row_index: usize, row: RowFields<'_>, out: &mut ParsedPayload) {
    let raw_region = row.region.unwrap_or("").trim().to_string();
    let raw_date = row.date.unwrap_or("").trim().to_string();
    let reject_all = |out: &mut ParsedPayload, reason: &str| {
        for _ in &descriptor.fields.measures {
            out.rejects.push(Reject {
                row_index,
                reason: reason.to_string(),
                raw_region_key: raw_region.clone(),
                raw_date: raw_date.clone(),
            });
        }
    };
    if raw_region.is_empty() {
        return reject_all(out, "missing region key");
    }
    let Ok(date) = NaiveDate::parse_from_str(&raw_date, &descriptor.date_format) else {
        return reject_all(out, "unparseable date");
    };
    for (field, raw) in descriptor.fields.measures.iter().zip(row.values) {
        match parse_count(raw.unwrap_or("")) {
            Ok(value) => out.records.push(RawRecord {
                row_index,
                region_key: raw_region.clone(),
                date,
                measure: field.measure,
                value,
            }),
            Err(reason) => out.rejects.push(Reject {
                row_index,
                reason: format!("{reason} in {}", field.column),
                raw_region_key: raw_region.clone(),
                raw_date: raw_date.clone(),
            }),
        }
    }
}

/// Counts are integers; "12.0" is accepted, "12.5" and "-3" are not.
fn parse_count(raw: &str) -> std::result::Result<u64, &'static str> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err("missing value");
    }
    if let Ok(v) = raw.parse::<i64>() {
        return u64::try_from(v).map_err(|_| "negative value");
    }
    match raw.parse::<f64>() {
        Ok(v) if !v.is_finite() => Err("unparseable value"),
        Ok(v) if v < 0.0 => Err("negative value"),
        Ok(v) if v.fract() != 0.0 || v > u64::MAX as f64 => Err("non-integer value"),
        Ok(v) => Ok(v as u64),
        Err(_) => Err("unparseable value"),
    }
}
