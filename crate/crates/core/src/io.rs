//! File formats.
//!
//! * TLT1 tensors: `b"TLT1"`, a `u8` mode count, that many little-endian
//!   `u32` extents, then the entries as little-endian `f64` in storage order.
//!   Masks use the same container with entries restricted to 0.0 / 1.0.
//! * CSV matrices: one row per first-mode index, no header.
//! * Model JSON and trace / curve CSV as written below.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::CurveRecord;
use crate::bmp::{Atom, FitConfig, FitTrace, Model};
use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;
use crate::tensor::{MaskTensor, ModeSubset, Tensor};

const MAGIC: &[u8; 4] = b"TLT1";

pub fn encode_tensor(t: &Tensor) -> Result<Vec<u8>> {
    let order = u8::try_from(t.order()).map_err(|_| Error::InvalidDims(t.dims().to_vec()))?;
    let mut out = Vec::with_capacity(5 + 4 * t.order() + 8 * t.len());
    out.extend_from_slice(MAGIC);
    out.push(order);
    for &d in t.dims() {
        let d = u32::try_from(d).map_err(|_| Error::InvalidDims(t.dims().to_vec()))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let bad = |reason: &str| Error::Format {
        what: "TLT1 tensor",
        reason: reason.to_string(),
    };
    if bytes.len() < 5 || &bytes[..4] != MAGIC {
        return Err(bad("missing TLT1 magic"));
    }
    let order = bytes[4] as usize;
    let header = 5 + 4 * order;
    if bytes.len() < header {
        return Err(bad("truncated extents"));
    }
    let dims: Vec<usize> = bytes[5..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let n = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| bad("extents overflow"))?;
    if bytes.len() != header + 8 * n {
        return Err(bad(&format!(
            "expected {} payload bytes, found {}",
            8 * n,
            bytes.len() - header
        )));
    }
    let data = bytes[header..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Tensor::new(dims, data)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    write_bytes(path.as_ref(), &encode_tensor(t)?)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_tensor(&read_bytes(path.as_ref())?)
}

pub fn write_mask(path: impl AsRef<Path>, m: &MaskTensor) -> Result<()> {
    write_tensor(path, m.as_tensor())
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<MaskTensor> {
    MaskTensor::new(read_tensor(path)?)
}

/// Tensor from either a TLT1 file or, for `.csv` paths, a 2-mode CSV matrix.
pub fn read_tensor_any(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        read_csv_matrix(path)
    } else {
        read_tensor(path)
    }
}

pub fn parse_csv_matrix(text: &str) -> Result<Tensor> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Format {
                    what: "CSV matrix",
                    reason: format!("{f:?} is not a number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format {
            what: "CSV matrix",
            reason: "no rows".into(),
        });
    }
    Tensor::from_rows(&rows)
}

pub fn read_csv_matrix(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv_matrix(&text)
}

pub fn format_csv_matrix(m: &SquareMatrix) -> String {
    let mut s = String::new();
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn write_csv_matrix(path: impl AsRef<Path>, m: &SquareMatrix) -> Result<()> {
    write_bytes(path.as_ref(), format_csv_matrix(m).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AtomDoc {
    modes: Vec<usize>,
    z: String,
    v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub seed: u64,
    pub config: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelDoc {
    dims: Vec<usize>,
    atoms: Vec<AtomDoc>,
    coeffs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<ModelMeta>,
}

pub fn model_to_json(model: &Model, meta: Option<&ModelMeta>) -> Result<String> {
    let doc = ModelDoc {
        dims: model.dims.clone(),
        atoms: model
            .atoms
            .iter()
            .map(|a| AtomDoc {
                modes: a.subset.modes().to_vec(),
                z: a.z.iter().map(|&b| if b { '1' } else { '0' }).collect(),
                v: a.v.clone(),
            })
            .collect(),
        coeffs: model.coeffs.clone(),
        meta: meta.cloned(),
    };
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

pub fn model_from_json(text: &str) -> Result<(Model, Option<ModelMeta>)> {
    let doc: ModelDoc = serde_json::from_str(text)?;
    let order = doc.dims.len();
    let atoms = doc
        .atoms
        .into_iter()
        .map(|a| {
            let z =
                a.z.chars()
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        other => Err(Error::Format {
                            what: "model JSON",
                            reason: format!("code character {other:?}"),
                        }),
                    })
                    .collect::<Result<Vec<_>>>()?;
            Atom::new(ModeSubset::new(a.modes, order)?, z, a.v, &doc.dims)
        })
        .collect::<Result<Vec<_>>>()?;
    if atoms.len() != doc.coeffs.len() {
        return Err(Error::Format {
            what: "model JSON",
            reason: "atom and coefficient counts differ".into(),
        });
    }
    Ok((
        Model {
            dims: doc.dims,
            atoms,
            coeffs: doc.coeffs,
        },
        doc.meta,
    ))
}

pub fn write_model(path: impl AsRef<Path>, model: &Model, meta: Option<&ModelMeta>) -> Result<()> {
    write_bytes(path.as_ref(), model_to_json(model, meta)?.as_bytes())
}

pub fn read_model(path: impl AsRef<Path>) -> Result<(Model, Option<ModelMeta>)> {
    let path = path.as_ref();
    model_from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// `iter,objective,partition,score,c_l1,rmse`; `partition` is the 0-based
/// position in the partition list, `rmse` is empty without a reference.
pub fn trace_to_csv(trace: &FitTrace) -> String {
    let mut s = String::from("iter,objective,partition,score,c_l1,rmse\n");
    for r in &trace.records {
        let rmse = r.rmse.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            s,
            "{},{},{},{},{},{}",
            r.iter, r.objective, r.partition, r.score, r.c_l1, rmse
        )
        .expect("writing to a String");
    }
    s
}

pub fn write_trace(path: impl AsRef<Path>, trace: &FitTrace) -> Result<()> {
    write_bytes(path.as_ref(), trace_to_csv(trace).as_bytes())
}

/// `atom_count,rmse,objective,wall_time_ms`, plus `heldout_rmse` when any
/// record carries one.
pub fn curve_to_csv(records: &[CurveRecord]) -> String {
    let held = records.iter().any(|r| r.heldout_rmse.is_some());
    let mut s = String::from("atom_count,rmse,objective,wall_time_ms");
    s.push_str(if held { ",heldout_rmse\n" } else { "\n" });
    for r in records {
        write!(
            s,
            "{},{},{},{:.3}",
            r.atom_count, r.rmse, r.objective, r.wall_time_ms
        )
        .expect("writing to a String");
        if held {
            write!(
                s,
                ",{}",
                r.heldout_rmse.map(|v| v.to_string()).unwrap_or_default()
            )
            .expect("writing to a String");
        }
        s.push('\n');
    }
    s
}

pub fn write_curve(path: impl AsRef<Path>, records: &[CurveRecord]) -> Result<()> {
    write_bytes(path.as_ref(), curve_to_csv(records).as_bytes())
}
