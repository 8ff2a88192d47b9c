//! CSV interchange for experiment records and training-curve points.
//!
//! Headers are matched byte-for-byte; derived columns, when present, are
//! re-validated against the counting formulas rather than trusted. Reals are
//! written in the shortest form that parses back to the identical f64 (never
//! more than 17 significant digits), so emitted files re-read losslessly.

use std::fs;
use std::path::Path;

use crate::accounting::{format_gran, parse_gran, ModelDims};
use crate::chinchilla::CurvePoint;
use crate::error::PlannerError;
use crate::regression::ExperimentRecord;

pub const RECORDS_HEADER: &str = "l,d,g,n_exp,n_topk,tokens_D,loss_L";
pub const RECORDS_HEADER_EXTENDED: &str = "l,d,g,n_exp,n_topk,tokens_D,loss_L,n_total,n_active,s";
pub const CURVE_HEADER: &str = "n_total,tokens_D,loss_L";

/// Shortest round-trip rendering: plain decimal in the human range, exponent
/// notation outside it, fixed spellings for non-finite values.
pub fn format_real(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let a = x.abs();
    if (1e-4..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn parse_real(s: &str) -> Result<f64, PlannerError> {
    s.parse::<f64>()
        .map_err(|e| PlannerError::Parse(format!("bad real {s:?}: {e}")))
}

fn parse_u64(s: &str, col: &str) -> Result<u64, PlannerError> {
    s.parse::<u64>()
        .map_err(|e| PlannerError::Parse(format!("bad {col} value {s:?}: {e}")))
}

fn parse_f64(s: &str, col: &str) -> Result<f64, PlannerError> {
    s.parse::<f64>()
        .map_err(|e| PlannerError::Parse(format!("bad {col} value {s:?}: {e}")))
}

fn row_context<T>(row: usize, r: Result<T, PlannerError>) -> Result<T, PlannerError> {
    r.map_err(|e| PlannerError::Parse(format!("row {row}: {e}")))
}

fn check_header(got: &csv::StringRecord, expected: &[&str]) -> bool {
    got.len() == expected.len() && got.iter().zip(expected).all(|(a, b)| a == *b)
}

/// Read experiment records. Accepts the base seven-column header or the
/// extended ten-column form whose derived columns are validated, not trusted.
pub fn read_records_str(text: &str) -> Result<Vec<ExperimentRecord>, PlannerError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| PlannerError::Parse(format!("unreadable records header: {e}")))?
        .clone();
    let base: Vec<&str> = RECORDS_HEADER.split(',').collect();
    let extended: Vec<&str> = RECORDS_HEADER_EXTENDED.split(',').collect();
    let has_derived = if check_header(&header, &base) {
        false
    } else if check_header(&header, &extended) {
        true
    } else {
        return Err(PlannerError::Parse(format!(
            "bad records header {:?}: expected {RECORDS_HEADER:?} \
             (optionally extended with ,n_total,n_active,s)",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    };

    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| PlannerError::Parse(format!("row {row}: {e}")))?;
        let field = |j: usize| rec.get(j).unwrap_or("");
        let record = row_context(row, (|| {
            let l = parse_u64(field(0), "l")?;
            let d = parse_u64(field(1), "d")?;
            let g = parse_gran(field(2))?;
            let n_exp = parse_u64(field(3), "n_exp")?;
            let n_topk = parse_u64(field(4), "n_topk")?;
            let tokens_d = parse_u64(field(5), "tokens_D")?;
            let loss_l = parse_f64(field(6), "loss_L")?;
            let dims = ModelDims::new(l, d, g, n_exp, n_topk)?;
            if has_derived {
                let n_total = parse_f64(field(7), "n_total")?;
                let n_active = parse_f64(field(8), "n_active")?;
                let s = parse_f64(field(9), "s")?;
                ExperimentRecord::with_provided(dims, tokens_d, loss_l, n_total, n_active, s)
            } else {
                ExperimentRecord::new(dims, tokens_d, loss_l)
            }
        })())?;
        out.push(record);
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<ExperimentRecord>, PlannerError> {
    read_records_str(&fs::read_to_string(path)?)
}

/// Write records in the extended ten-column form.
pub fn write_records(records: &[ExperimentRecord]) -> String {
    let mut out = String::from(RECORDS_HEADER_EXTENDED);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.dims.l,
            r.dims.d,
            format_gran(r.dims.g),
            r.dims.n_exp,
            r.dims.n_topk,
            r.tokens_d,
            format_real(r.loss_l),
            format_real(r.n_total),
            format_real(r.n_active),
            format_real(r.s),
        ));
    }
    out
}

/// Read training-curve points (n_total,tokens_D,loss_L).
pub fn read_curve_str(text: &str) -> Result<Vec<CurvePoint>, PlannerError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| PlannerError::Parse(format!("unreadable curve header: {e}")))?
        .clone();
    let expected: Vec<&str> = CURVE_HEADER.split(',').collect();
    if !check_header(&header, &expected) {
        return Err(PlannerError::Parse(format!(
            "bad curve header {:?}: expected {CURVE_HEADER:?}",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| PlannerError::Parse(format!("row {row}: {e}")))?;
        let field = |j: usize| rec.get(j).unwrap_or("");
        let point = row_context(row, (|| {
            let n_total = parse_f64(field(0), "n_total")?;
            let tokens_d = parse_f64(field(1), "tokens_D")?;
            let loss = parse_f64(field(2), "loss_L")?;
            CurvePoint::new(n_total, tokens_d, loss)
        })())?;
        out.push(point);
    }
    Ok(out)
}

pub fn read_curve(path: &Path) -> Result<Vec<CurvePoint>, PlannerError> {
    read_curve_str(&fs::read_to_string(path)?)
}

pub fn write_curve(points: &[CurvePoint]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!(
            "{},{},{}\n",
            format_real(p.n_total),
            format_real(p.tokens_d),
            format_real(p.loss),
        ));
    }
    out
}
