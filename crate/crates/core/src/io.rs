//! Run artifacts: time-series CSV, field dumps, and the run summary.
//!
//! The field-dump format is a plain structured-grid container — a short text
//! header (degree, element counts, domain box, sim time) terminated by a line
//! reading `end`, followed by row-major 8-byte IEEE-754 little-endian values,
//! one contiguous block per conserved field. Any plotting stack can consume
//! it with a dozen lines of code. Both readers in this module are total: they
//! return errors on malformed input and never panic or over-allocate.

use crate::field::{FieldArray, NUM_FIELDS};
use crate::mesh::Box3;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;

/// The fixed column set of `timeseries.csv`.
pub const TIMESERIES_HEADER: &str =
    "step,t,dt,err_estimate,E_K,total_entropy,entropy_rate,min_rho,min_p";

pub const FIELD_NAMES: [&str; NUM_FIELDS] = ["rho", "rhou1", "rhou2", "rhou3", "rhoE"];

const DUMP_MAGIC: &str = "fielddump 1";
/// The text header of a dump may not exceed this many bytes.
const MAX_HEADER: usize = 65536;

// ---------------------------------------------------------------------------
// Time series
// ---------------------------------------------------------------------------

/// One accepted-step record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeseriesRow {
    pub step: u64,
    pub t: f64,
    pub dt: f64,
    pub err_estimate: f64,
    pub e_k: f64,
    pub total_entropy: f64,
    pub entropy_rate: f64,
    pub min_rho: f64,
    pub min_p: f64,
}

/// Streaming CSV writer with the mandatory header row and 17-significant-
/// digit fixed formatting.
pub struct TimeseriesWriter<W: std::io::Write> {
    w: W,
}

impl TimeseriesWriter<std::io::BufWriter<std::fs::File>> {
    pub fn create(path: &Path) -> Result<Self> {
        let file = std::fs::File::create(path)?;
        Self::new(std::io::BufWriter::new(file))
    }
}

impl<W: std::io::Write> TimeseriesWriter<W> {
    pub fn new(mut w: W) -> Result<Self> {
        writeln!(w, "{TIMESERIES_HEADER}")?;
        Ok(TimeseriesWriter { w })
    }

    pub fn write_row(&mut self, r: &TimeseriesRow) -> Result<()> {
        writeln!(
            self.w,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.step,
            r.t,
            r.dt,
            r.err_estimate,
            r.e_k,
            r.total_entropy,
            r.entropy_rate,
            r.min_rho,
            r.min_p
        )?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

/// Parse a `timeseries.csv` body. Total: malformed rows are errors.
pub fn read_timeseries(text: &str) -> Result<Vec<TimeseriesRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == TIMESERIES_HEADER => {}
        Some(h) => {
            return Err(Error::Format(format!(
                "bad time-series header `{h}` (expected `{TIMESERIES_HEADER}`)"
            )))
        }
        None => return Err(Error::Format("empty time-series file".into())),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 9 {
            return Err(Error::Format(format!(
                "line {line_no}: expected 9 columns, found {}",
                cols.len()
            )));
        }
        let step: u64 = cols[0]
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("line {line_no}: bad step `{}`", cols[0])))?;
        let mut vals = [0.0f64; 8];
        for (k, col) in cols[1..].iter().enumerate() {
            vals[k] = col
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("line {line_no}: bad number `{col}`")))?;
        }
        rows.push(TimeseriesRow {
            step,
            t: vals[0],
            dt: vals[1],
            err_estimate: vals[2],
            e_k: vals[3],
            total_entropy: vals[4],
            entropy_rate: vals[5],
            min_rho: vals[6],
            min_p: vals[7],
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Field dumps
// ---------------------------------------------------------------------------

/// A parsed field dump: grid shape plus the five per-field value blocks.
#[derive(Clone, Debug)]
pub struct FieldDump {
    pub p: usize,
    pub elements: [usize; 3],
    pub domain: Box3,
    pub time: f64,
    /// `NUM_FIELDS` blocks of `total_nodes` values each, element-major and
    /// row-major within the element.
    pub values: Vec<f64>,
}

impl FieldDump {
    pub fn total_nodes(&self) -> usize {
        let n = self.p + 1;
        n * n * n * self.elements[0] * self.elements[1] * self.elements[2]
    }

    /// Reassemble the interleaved solver layout.
    pub fn to_field_array(&self) -> FieldArray {
        let n = self.p + 1;
        let npe = n * n * n;
        let num_elements = self.elements[0] * self.elements[1] * self.elements[2];
        let total = self.total_nodes();
        let mut field = FieldArray::zeros(num_elements, npe);
        for e in 0..num_elements {
            let block = field.elem_mut(e);
            for c in 0..NUM_FIELDS {
                let src = &self.values[c * total + e * npe..c * total + (e + 1) * npe];
                block[c * npe..(c + 1) * npe].copy_from_slice(src);
            }
        }
        field
    }
}

/// Serialize a field dump.
pub fn write_field_dump(
    path: &Path,
    p: usize,
    elements: [usize; 3],
    domain: &Box3,
    time: f64,
    field: &FieldArray,
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "{DUMP_MAGIC}")?;
    writeln!(w, "p {p}")?;
    writeln!(w, "elements {} {} {}", elements[0], elements[1], elements[2])?;
    writeln!(
        w,
        "domain {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e}",
        domain.lo[0], domain.lo[1], domain.lo[2], domain.hi[0], domain.hi[1], domain.hi[2]
    )?;
    writeln!(w, "time {time:.17e}")?;
    writeln!(w, "fields {}", FIELD_NAMES.join(" "))?;
    writeln!(w, "end")?;
    for c in 0..NUM_FIELDS {
        for e in 0..field.num_elements() {
            for &v in field.comp(e, c) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_field_dump(path: &Path) -> Result<FieldDump> {
    let bytes = std::fs::read(path)?;
    read_field_dump_bytes(&bytes)
}

/// Deserialize a field dump from raw bytes. Total on arbitrary input: the
/// payload length is validated against the header before any allocation.
pub fn read_field_dump_bytes(bytes: &[u8]) -> Result<FieldDump> {
    let mut pos = 0usize;
    let mut p: Option<usize> = None;
    let mut elements: Option<[usize; 3]> = None;
    let mut domain: Option<Box3> = None;
    let mut time: Option<f64> = None;
    let mut fields_seen = false;
    let mut magic_seen = false;
    let mut header_done = false;

    while pos < bytes.len() {
        if pos > MAX_HEADER {
            return Err(Error::Format("dump header exceeds 64 KiB".into()));
        }
        let line_end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| pos + i)
            .ok_or_else(|| Error::Format("dump header not terminated by `end`".into()))?;
        let line = std::str::from_utf8(&bytes[pos..line_end])
            .map_err(|_| Error::Format("dump header is not valid UTF-8".into()))?
            .trim_end_matches('\r');
        pos = line_end + 1;

        if !magic_seen {
            if line != DUMP_MAGIC {
                return Err(Error::Format(format!(
                    "not a field dump (first line `{line}`, expected `{DUMP_MAGIC}`)"
                )));
            }
            magic_seen = true;
            continue;
        }
        if line == "end" {
            header_done = true;
            break;
        }
        let mut it = line.split_whitespace();
        let key = it.next().unwrap_or("");
        match key {
            "p" => {
                let v: usize = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Format("bad `p` line in dump header".into()))?;
                if !(1..=15).contains(&v) {
                    return Err(Error::Format(format!("dump degree p = {v} out of range")));
                }
                p = Some(v);
            }
            "elements" => {
                let mut k = [0usize; 3];
                for slot in k.iter_mut() {
                    *slot = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::Format("bad `elements` line in dump header".into()))?;
                    if *slot < 1 || *slot > 128 {
                        return Err(Error::Format(format!(
                            "dump element count {slot} out of range"
                        )));
                    }
                }
                elements = Some(k);
            }
            "domain" => {
                let mut v = [0.0f64; 6];
                for slot in v.iter_mut() {
                    *slot = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::Format("bad `domain` line in dump header".into()))?;
                    if !slot.is_finite() {
                        return Err(Error::Format("dump domain must be finite".into()));
                    }
                }
                if v[0] >= v[3] || v[1] >= v[4] || v[2] >= v[5] {
                    return Err(Error::Format("dump domain box is empty".into()));
                }
                domain = Some(Box3::new([v[0], v[1], v[2]], [v[3], v[4], v[5]]));
            }
            "time" => {
                let v: f64 = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Format("bad `time` line in dump header".into()))?;
                if !v.is_finite() {
                    return Err(Error::Format("dump time must be finite".into()));
                }
                time = Some(v);
            }
            "fields" => {
                let names: Vec<&str> = it.by_ref().collect();
                if names != FIELD_NAMES {
                    return Err(Error::Format(format!(
                        "dump field list {names:?} does not match {FIELD_NAMES:?}"
                    )));
                }
                fields_seen = true;
            }
            _ => {
                return Err(Error::Format(format!(
                    "unknown dump header line `{line}`"
                )));
            }
        }
        if it.next().is_some() {
            return Err(Error::Format(format!(
                "trailing tokens on dump header line `{line}`"
            )));
        }
    }

    if !header_done {
        return Err(Error::Format("dump header not terminated by `end`".into()));
    }
    let (p, elements, domain, time) = match (p, elements, domain, time, fields_seen) {
        (Some(p), Some(k), Some(d), Some(t), true) => (p, k, d, t),
        _ => {
            return Err(Error::Format(
                "dump header missing one of p/elements/domain/time/fields".into(),
            ))
        }
    };

    let n = p + 1;
    let total_nodes = n * n * n * elements[0] * elements[1] * elements[2];
    let expected = NUM_FIELDS
        .checked_mul(total_nodes)
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(|| Error::Format("dump size overflows".into()))?;
    let payload = &bytes[pos..];
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "dump payload is {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let mut values = Vec::with_capacity(NUM_FIELDS * total_nodes);
    for chunk in payload.chunks_exact(8) {
        values.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    Ok(FieldDump { p, elements, domain, time, values })
}

// ---------------------------------------------------------------------------
// Run summary
// ---------------------------------------------------------------------------

/// Deterministic numerical payload of a run: identical configuration and
/// seed must reproduce these bytes exactly, so wall-clock time lives outside.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SummaryPayload {
    pub case: String,
    pub scheme: String,
    pub p: usize,
    pub elements: [usize; 3],
    pub dofs_per_direction: usize,
    pub viscous: bool,
    pub dissipation: bool,
    pub c_diss: f64,
    pub c_ip: Option<f64>,
    pub atol: f64,
    pub rtol: f64,
    pub seed: u64,
    pub t_final_target: f64,
    pub outcome: String,
    pub t_reached: f64,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub rhs_evaluations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blow_up: Option<BlowUpInfo>,
    /// Discrete L² error per conserved field against the exact solution,
    /// for the cases that have one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l2_error: Option<[f64; 5]>,
    /// Largest nodewise deviation from the initial state (free stream).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_deviation: Option<f64>,
    pub final_diagnostics: FinalDiagnostics,
    /// Effective case parameters after defaults were resolved.
    pub case_parameters: serde_json::Value,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BlowUpInfo {
    pub time: f64,
    pub element: usize,
    pub node: usize,
    pub what: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FinalDiagnostics {
    pub e_k: f64,
    pub total_entropy: f64,
    pub min_rho: f64,
    pub min_p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_rms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ma_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub re_lambda: Option<f64>,
}

/// Full summary: payload plus non-reproducible timing.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub payload: SummaryPayload,
    pub wall_clock_seconds: f64,
}

impl Summary {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("summary serialization failed: {e}")))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Summary> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("summary deserialization failed: {e}")))
    }

    /// The canonical bytes of the deterministic payload.
    pub fn payload_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.payload).expect("payload serialization cannot fail")
    }
}
