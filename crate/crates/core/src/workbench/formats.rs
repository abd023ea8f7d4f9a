//! File formats.
//!
//! Coefficient fields and snapshot sequences are JSON lines: a header object
//! followed by one object per atom. Grid functions use a small little-endian
//! binary layout: `u32 dim`, `u32 n`, `f64 extent`, then `n^dim` pairs of
//! `f32` (real, imaginary).

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coeff::{CoefficientField, Normalization};
use crate::error::{Error, Result};
use crate::profiler::SequenceSnapshots;
use crate::sampling::{AtomIndex, SamplingSet};
use crate::transform::{GridFunction, GridSpec};

pub const FIELD_FORMAT: &str = "coefficient_field";
pub const SNAPSHOT_FORMAT: &str = "sequence_snapshots";
pub const GRID_FORMAT: &str = "grid_function";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    sampling: SamplingSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normalization: Option<Normalization>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_values: Option<Vec<i64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<i64>,
    j: i32,
    gamma: Vec<i64>,
    re: f64,
    im: f64,
}

fn write_line<W: Write, T: Serialize>(w: &mut W, v: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, v)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn entry(n: Option<i64>, idx: &AtomIndex, v: &Complex64) -> EntryLine {
    EntryLine {
        n,
        j: idx.j,
        gamma: idx.gamma.clone(),
        re: v.re,
        im: v.im,
    }
}

pub fn write_field<W: Write>(w: &mut W, c: &CoefficientField) -> Result<()> {
    write_line(
        w,
        &Header {
            format: FIELD_FORMAT.into(),
            version: VERSION,
            sampling: c.sampling().clone(),
            normalization: Some(c.normalization()),
            n_values: None,
        },
    )?;
    for (idx, v) in c.iter() {
        write_line(w, &entry(None, idx, v))?;
    }
    Ok(())
}

pub fn write_snapshots<W: Write>(w: &mut W, s: &SequenceSnapshots) -> Result<()> {
    write_line(
        w,
        &Header {
            format: SNAPSHOT_FORMAT.into(),
            version: VERSION,
            sampling: s.sampling().clone(),
            normalization: Some(s.normalization()),
            n_values: Some(s.n_values().to_vec()),
        },
    )?;
    for (n, f) in s.n_values().iter().zip(s.fields()) {
        for (idx, v) in f.iter() {
            write_line(w, &entry(Some(*n), idx, v))?;
        }
    }
    Ok(())
}

/// Numbered non-blank lines.
fn lines<R: BufRead>(r: R) -> impl Iterator<Item = Result<(usize, String)>> {
    r.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(Ok((i + 1, l))),
        Err(e) => Some(Err(Error::Io(e))),
    })
}

fn read_header(line: usize, text: &str, format: &str) -> Result<(SamplingSet, Normalization, Option<Vec<i64>>)> {
    let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::ingest(line, e.to_string()))?;
    let found = raw.get("format").and_then(|f| f.as_str()).unwrap_or("");
    if found != format {
        return Err(Error::ingest(line, format!("expected a {format} header, found format {found:?}")));
    }
    let h: Header = serde_json::from_value(raw).map_err(|e| Error::ingest(line, e.to_string()))?;
    if h.version != VERSION {
        return Err(Error::ingest(line, format!("unsupported version {}", h.version)));
    }
    let Some(norm) = h.normalization else {
        return Err(Error::ingest(
            line,
            "legacy file without a normalization tag; add \"normalization\": {\"kind\": \"l1_atoms\"} \
             or {\"kind\": \"lp_atoms\", \"p\": ...} to the header once the convention is known",
        ));
    };
    if let Normalization::LpAtoms { p } = norm {
        Normalization::lp(p).map_err(|e| Error::ingest(line, e.to_string()))?;
    }
    Ok((h.sampling, norm, h.n_values))
}

fn parse_entry(line: usize, text: &str, gs: &SamplingSet) -> Result<(Option<i64>, AtomIndex, Complex64)> {
    let e: EntryLine = serde_json::from_str(text).map_err(|e| Error::ingest(line, e.to_string()))?;
    if !e.re.is_finite() || !e.im.is_finite() {
        return Err(Error::ingest(line, "non-finite coefficient"));
    }
    let dim = gs.group().dim();
    if e.gamma.len() != dim {
        return Err(Error::ingest(line, format!("gamma has {} coordinates, expected {dim}", e.gamma.len())));
    }
    Ok((e.n, AtomIndex::new(e.j, e.gamma), Complex64::new(e.re, e.im)))
}

fn insert(field: &mut CoefficientField, line: usize, idx: AtomIndex, v: Complex64) -> Result<()> {
    field.insert(idx, v).map_err(|e| Error::ingest(line, e.to_string()))
}

pub fn read_field<R: BufRead>(r: R) -> Result<CoefficientField> {
    let mut it = lines(r);
    let (line, text) = it.next().ok_or_else(|| Error::ingest(1, "empty file"))??;
    let (gs, norm, _) = read_header(line, &text, FIELD_FORMAT)?;
    let mut field = CoefficientField::new(gs.clone(), norm);
    for item in it {
        let (line, text) = item?;
        let (n, idx, v) = parse_entry(line, &text, &gs)?;
        if n.is_some() {
            return Err(Error::ingest(line, "unexpected \"n\" in a coefficient field"));
        }
        insert(&mut field, line, idx, v)?;
    }
    field.apply_floor();
    Ok(field)
}

pub fn read_snapshots<R: BufRead>(r: R) -> Result<SequenceSnapshots> {
    let mut it = lines(r);
    let (line, text) = it.next().ok_or_else(|| Error::ingest(1, "empty file"))??;
    let (gs, norm, n_values) = read_header(line, &text, SNAPSHOT_FORMAT)?;
    let n_values = n_values.ok_or_else(|| Error::ingest(line, "header lacks n_values"))?;
    let mut fields: BTreeMap<i64, CoefficientField> = n_values
        .iter()
        .map(|&n| (n, CoefficientField::new(gs.clone(), norm)))
        .collect();
    if fields.len() != n_values.len() {
        return Err(Error::ingest(line, "repeated n in n_values"));
    }
    for item in it {
        let (line, text) = item?;
        let (n, idx, v) = parse_entry(line, &text, &gs)?;
        let n = n.ok_or_else(|| Error::ingest(line, "missing \"n\""))?;
        let field = fields
            .get_mut(&n)
            .ok_or_else(|| Error::ingest(line, format!("n = {n} is not listed in the header")))?;
        insert(field, line, idx, v)?;
    }
    let (ns, mut fs): (Vec<i64>, Vec<CoefficientField>) = fields.into_iter().unzip();
    fs.iter_mut().for_each(|f| f.apply_floor());
    SequenceSnapshots::new(ns, fs)
}

pub fn write_grid_binary<W: Write>(w: &mut W, f: &GridFunction) -> Result<()> {
    let g = f.grid();
    w.write_all(&(g.dim as u32).to_le_bytes())?;
    w.write_all(&(g.n as u32).to_le_bytes())?;
    w.write_all(&g.extent.to_le_bytes())?;
    for v in f.data() {
        w.write_all(&(v.re as f32).to_le_bytes())?;
        w.write_all(&(v.im as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_grid_binary<R: Read>(mut r: R) -> Result<GridFunction> {
    let mut head = [0u8; 16];
    r.read_exact(&mut head)?;
    let dim = u32::from_le_bytes(head[0..4].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let extent = f64::from_le_bytes(head[8..16].try_into().unwrap());
    let grid = GridSpec::new(dim, n, extent)?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != grid.len() * 8 {
        return Err(Error::Layout(format!(
            "grid body has {} bytes, expected {}",
            body.len(),
            grid.len() * 8
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[0..4].try_into().unwrap());
            let im = f32::from_le_bytes(c[4..8].try_into().unwrap());
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    GridFunction::from_samples(grid, data)
}

/// JSON-lines export of a grid function, for small grids.
pub fn write_grid_jsonl<W: Write>(w: &mut W, f: &GridFunction) -> Result<()> {
    let g = f.grid();
    write_line(
        w,
        &serde_json::json!({"format": GRID_FORMAT, "version": VERSION, "dim": g.dim, "n": g.n, "extent": g.extent}),
    )?;
    for v in f.data() {
        write_line(w, &serde_json::json!({"re": v.re, "im": v.im}))?;
    }
    Ok(())
}
