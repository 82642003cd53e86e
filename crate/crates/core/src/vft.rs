//! `VFT1` text format for valuation tensors.
//!
//! ```text
//! VFT1
//! R m1 m2 ... mR
//! v0 v1 ...            (N values, row-major, any whitespace)
//! ```
//!
//! The writer puts one run of the last resource per line and prints values in
//! shortest round-trip form.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::tensor::{ResourceCapacity, ValuationTensor};

pub const MAGIC: &str = "VFT1";

pub fn write_vft<W: Write>(tensor: &ValuationTensor, mut out: W) -> Result<()> {
    let cap = tensor.capacity();
    writeln!(out, "{MAGIC}")?;
    write!(out, "{}", cap.resources())?;
    for m in cap.units() {
        write!(out, " {m}")?;
    }
    writeln!(out)?;
    let row = *cap.units().last().expect("at least one resource") as usize + 1;
    for chunk in tensor.values().chunks(row) {
        let mut first = true;
        for v in chunk {
            if !first {
                out.write_all(b" ")?;
            }
            first = false;
            write!(out, "{v:?}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn to_vft_string(tensor: &ValuationTensor) -> String {
    let mut buf = Vec::new();
    write_vft(tensor, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("VFT1 output is ASCII")
}

/// Reads a tensor. A nonzero value at the empty allocation is shifted away.
pub fn read_vft<R: BufRead>(input: R) -> Result<ValuationTensor> {
    let mut lines = input.lines();
    let magic = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::parse("line 1", "empty input"))?;
    if magic.trim() != MAGIC {
        return Err(Error::parse("line 1", format!("expected `{MAGIC}`, got `{}`", magic.trim())));
    }
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::parse("line 2", "missing shape line"))?;
    let mut fields = header.split_whitespace();
    let resources: usize = fields
        .next()
        .ok_or_else(|| Error::parse("line 2", "missing resource count"))?
        .parse()
        .map_err(|e| Error::parse("line 2", format!("resource count: {e}")))?;
    let units = fields
        .map(|f| {
            f.parse::<u32>()
                .map_err(|e| Error::parse("line 2", format!("unit count `{f}`: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if units.len() != resources {
        return Err(Error::parse(
            "line 2",
            format!("declared {resources} resources but listed {}", units.len()),
        ));
    }
    let cap = ResourceCapacity::new(units)?;
    let mut values = Vec::with_capacity(cap.cells());
    for (offset, line) in lines.enumerate() {
        let line = line?;
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|e| {
                Error::parse(format!("line {}", offset + 3), format!("value `{tok}`: {e}"))
            })?;
            values.push(v);
        }
    }
    if values.len() != cap.cells() {
        return Err(Error::parse(
            "body",
            format!("expected {} values for shape {cap}, found {}", cap.cells(), values.len()),
        ));
    }
    ValuationTensor::normalized(cap, values)
}

pub fn from_vft_str(text: &str) -> Result<ValuationTensor> {
    read_vft(text.as_bytes())
}
