//! Text file formats.
//!
//! * Traces: line-delimited JSON. The first line is a header
//!   `{"horizon": T, "epoch": i, "seed": s}`, followed by one
//!   `{"t": time, "items": [j, ...]}` record per session.
//! * Catalogs: a `d m` header line, then `m` rows of `d` space-separated values.
//!
//! Real numbers are written in positional notation with 17 significant
//! digits, which round-trips every `f64` exactly.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EpochTrace, ItemCatalog, SessionRecord};

/// Positional decimal rendering of `x` with exactly 17 significant digits.
pub fn format_sig17(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0000000000000000" } else { "0.0000000000000000" }.to_string();
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exponent) = sci.split_once('e').expect("scientific format");
    let exponent: i32 = exponent.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let before_point = exponent + 1;
    let body = if before_point <= 0 {
        format!("0.{}{}", "0".repeat((-before_point) as usize), digits)
    } else if before_point as usize >= digits.len() {
        format!("{}{}.0", digits, "0".repeat(before_point as usize - digits.len()))
    } else {
        let (int, frac) = digits.split_at(before_point as usize);
        format!("{int}.{frac}")
    };
    if negative {
        format!("-{body}")
    } else {
        body
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub horizon: f64,
    pub epoch: u64,
    pub seed: u64,
}

#[derive(Deserialize)]
struct TraceLine {
    t: f64,
    items: Vec<usize>,
}

pub fn write_trace<W: Write>(mut w: W, trace: &EpochTrace, epoch: u64, seed: u64) -> Result<()> {
    writeln!(
        w,
        "{{\"horizon\": {}, \"epoch\": {epoch}, \"seed\": {seed}}}",
        format_sig17(trace.horizon())
    )?;
    for s in trace.sessions() {
        let items: Vec<String> = s.items.iter().map(usize::to_string).collect();
        writeln!(w, "{{\"t\": {}, \"items\": [{}]}}", format_sig17(s.t), items.join(", "))?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(r: R) -> Result<(TraceHeader, EpochTrace)> {
    let mut header = None;
    let mut sessions = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let number = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |e: serde_json::Error| Error::Parse {
            line: number,
            message: e.to_string(),
        };
        if header.is_none() {
            header = Some(serde_json::from_str::<TraceHeader>(&line).map_err(parse_err)?);
        } else {
            let rec: TraceLine = serde_json::from_str(&line).map_err(parse_err)?;
            if rec.items.is_empty() {
                return Err(Error::Parse {
                    line: number,
                    message: "session has no items".into(),
                });
            }
            sessions.push(SessionRecord {
                t: rec.t,
                items: rec.items,
            });
        }
    }
    let header = header.ok_or(Error::Parse {
        line: 1,
        message: "missing trace header".into(),
    })?;
    let trace = EpochTrace::new(sessions, header.horizon)?;
    Ok((header, trace))
}

pub fn write_catalog<W: Write>(mut w: W, catalog: &ItemCatalog) -> Result<()> {
    writeln!(w, "{} {}", catalog.dim(), catalog.count())?;
    for row in catalog.rows() {
        let cells: Vec<String> = row.iter().map(|&x| format_sig17(x)).collect();
        writeln!(w, "{}", cells.join(" "))?;
    }
    Ok(())
}

pub fn read_catalog<R: BufRead>(r: R) -> Result<ItemCatalog> {
    let mut lines = r.lines().enumerate();
    let (dim, count) = loop {
        let Some((i, line)) = lines.next() else {
            return Err(Error::Parse {
                line: 1,
                message: "missing \"d m\" header".into(),
            });
        };
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parsed = match fields.as_slice() {
            [d, m] => d.parse::<usize>().ok().zip(m.parse::<usize>().ok()),
            _ => None,
        };
        break parsed.ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected \"d m\" header, found {line:?}"),
        })?;
    };
    let mut data = Vec::with_capacity(dim * count);
    let mut rows = 0;
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for cell in line.split_whitespace() {
            data.push(cell.parse::<f64>().map_err(|e| Error::Parse {
                line: i + 1,
                message: format!("bad number {cell:?}: {e}"),
            })?);
        }
        if data.len() - before != dim {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected {dim} values, found {}", data.len() - before),
            });
        }
        rows += 1;
    }
    if rows != count {
        return Err(Error::Parse {
            line: rows + 1,
            message: format!("header announces {count} rows, found {rows}"),
        });
    }
    ItemCatalog::new(dim, data)
}
