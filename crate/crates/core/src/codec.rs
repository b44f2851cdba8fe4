//! Text serialization of pinned fields, shared by sampler checkpoints.
//!
//! A record is a header line `gil-field v1 d=<d> m=<m>` followed by the
//! m^d site values in site order, one per line. A checkpoint file is a
//! sequence of records on the same torus.

use std::fmt::Write as _;

use crate::error::{GilError, Result};
use crate::lattice::{Field, Torus};

const MAGIC: &str = "gil-field";
const VERSION: &str = "v1";
/// Upper bound on m^d accepted by the decoder.
pub const MAX_DECODE_VOLUME: usize = 1 << 20;

pub fn encode_field(t: &Torus, f: &Field) -> String {
    let mut out = String::with_capacity(32 + 26 * f.len());
    write_record(&mut out, t, f);
    out
}

pub fn encode_stream<'a, I: IntoIterator<Item = &'a Field>>(t: &Torus, fields: I) -> String {
    let mut out = String::new();
    for f in fields {
        write_record(&mut out, t, f);
    }
    out
}

fn write_record(out: &mut String, t: &Torus, f: &Field) {
    let _ = writeln!(out, "{MAGIC} {VERSION} d={} m={}", t.d(), t.m());
    for v in f.values() {
        let _ = writeln!(out, "{v:.16e}");
    }
}

fn bad(msg: impl Into<String>) -> GilError {
    GilError::FieldFormat(msg.into())
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(bad(format!("expected '{MAGIC}' header, got {line:?}")));
    }
    if parts.next() != Some(VERSION) {
        return Err(bad("unsupported version"));
    }
    let mut kv = |key: &str| -> Result<usize> {
        let tok = parts.next().ok_or_else(|| bad(format!("missing {key}=")))?;
        let val = tok.strip_prefix(key).and_then(|r| r.strip_prefix('=')).ok_or_else(|| bad(format!("expected {key}=<n>, got {tok:?}")))?;
        val.parse::<usize>().map_err(|e| bad(format!("{key}: {e}")))
    };
    let d = kv("d")?;
    let m = kv("m")?;
    if parts.next().is_some() {
        return Err(bad("trailing tokens in header"));
    }
    Ok((d, m))
}

/// Decodes every record in `input`. All records must share one torus.
pub fn decode_stream(input: &str) -> Result<(Torus, Vec<Field>)> {
    let mut lines = input.lines().map(str::trim).filter(|l| !l.is_empty());
    let mut torus: Option<Torus> = None;
    let mut fields = Vec::new();
    while let Some(header) = lines.next() {
        let (d, m) = parse_header(header)?;
        let volume = u32::try_from(d)
            .ok()
            .and_then(|d32| m.checked_pow(d32))
            .filter(|&v| v <= MAX_DECODE_VOLUME && d >= 1 && m >= 2)
            .ok_or_else(|| bad(format!("unsupported geometry d={d} m={m}")))?;
        let t = match &torus {
            Some(t) if t.d() == d && t.m() == m => t.clone(),
            Some(_) => return Err(bad("records on different tori")),
            None => Torus::new(d, m)?,
        };
        let mut values = Vec::with_capacity(volume);
        for _ in 0..volume {
            let line = lines.next().ok_or_else(|| bad("truncated record"))?;
            let v: f64 = line.parse().map_err(|e| bad(format!("value {line:?}: {e}")))?;
            if !v.is_finite() {
                return Err(bad("non-finite value"));
            }
            values.push(v);
        }
        fields.push(Field::from_values(values).map_err(|e| bad(e.to_string()))?);
        torus.get_or_insert(t);
    }
    let t = torus.ok_or_else(|| bad("no records"))?;
    Ok((t, fields))
}

/// Decodes a single record.
pub fn decode_field(input: &str) -> Result<(Torus, Field)> {
    let (t, mut fields) = decode_stream(input)?;
    if fields.len() != 1 {
        return Err(bad(format!("expected one record, found {}", fields.len())));
    }
    Ok((t, fields.pop().expect("one record")))
}
