//! Interpretability.
//!
//! Static: the Frobenius norm of each field-pair block of a cross matrix.
//! Dynamic: per-instance gate vectors at bit level and averaged per field,
//! and their mean over many instances as a field-importance profile.

pub mod stats;

use std::io::Write;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::crossnet::GateMode;
use crate::embedding::offsets;
use crate::error::{Error, Result};
use crate::features::EncodedDataset;
use crate::model::{Mode, Model};

pub use stats::{cosine_similarity, pearson, Correlation};

/// Gate values above this mark important crosses, below it unimportant.
pub const IMPORTANCE_THRESHOLD: f64 = 0.5;

/// `F × F` matrix of block Frobenius norms; block `(i, j)` spans rows of
/// field `i` and columns of field `j`.
pub fn block_norms(w_c: ArrayView2<f64>, dims: &[usize]) -> Result<Array2<f64>> {
    let offs = offsets(dims);
    let d = offs[dims.len()];
    if w_c.dim() != (d, d) {
        return Err(Error::shape(format!(
            "cross matrix {:?} vs dims summing to {d}",
            w_c.dim()
        )));
    }
    let f = dims.len();
    Ok(Array2::from_shape_fn((f, f), |(i, j)| {
        w_c.slice(s![offs[i]..offs[i + 1], offs[j]..offs[j + 1]])
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }))
}

/// Mean of each field's bits.
pub fn field_means(bits: &[f64], dims: &[usize]) -> Vec<f64> {
    let offs = offsets(dims);
    (0..dims.len())
        .map(|f| bits[offs[f]..offs[f + 1]].iter().sum::<f64>() / dims[f] as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGates {
    /// Width `D`.
    pub bitwise: Vec<f64>,
    /// Width `F`.
    pub fieldwise: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateProfile {
    pub instance_id: usize,
    pub layers: Vec<LayerGates>,
}

impl GateProfile {
    /// `(layer, field)` pairs whose field-wise gate exceeds the threshold.
    pub fn important_fields(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(l, g)| {
                g.fieldwise
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v > IMPORTANCE_THRESHOLD)
                    .map(move |(f, _)| (l, f))
            })
            .collect()
    }
}

fn require_learned(model: &Model) -> Result<()> {
    if model.cross.gate_mode == GateMode::AllOnes {
        return Err(Error::Unsupported(
            "gate profiling needs learned gates; this model runs with gates fixed at 1".into(),
        ));
    }
    Ok(())
}

/// Gate vectors of every cross layer for one instance.
pub fn gate_profile(model: &Model, indices: &[u32], instance_id: usize) -> Result<GateProfile> {
    require_learned(model)?;
    let dims = model.topology.cross_block_dims();
    let (_, trace) = model.forward(indices)?;
    let layers = trace
        .gate_trace()
        .into_iter()
        .map(|g| {
            let bitwise = g.row(0).to_vec();
            let fieldwise = field_means(&bitwise, &dims);
            LayerGates { bitwise, fieldwise }
        })
        .collect();
    Ok(GateProfile { instance_id, layers })
}

/// Mean field-wise gate vector per layer over the first `n` instances.
pub fn aggregate_importance(model: &Model, data: &EncodedDataset, n: usize) -> Result<Vec<Vec<f64>>> {
    require_learned(model)?;
    if n == 0 || data.is_empty() {
        return Err(Error::config("aggregate importance needs at least one instance"));
    }
    let n = n.min(data.len());
    let dims = model.topology.cross_block_dims();
    let f = dims.len();
    let mut sums = vec![vec![0.0; f]; model.cross.depth()];
    let rows: Vec<&[u32]> = (0..n).map(|i| data.row(i)).collect();
    for chunk in rows.chunks(4096) {
        let trace = model.forward_batch(chunk, Mode::Eval)?;
        for (l, g) in trace.gate_trace().into_iter().enumerate() {
            for row in g.rows() {
                let fm = field_means(row.as_slice().expect("standard layout"), &dims);
                for (acc, v) in sums[l].iter_mut().zip(fm) {
                    *acc += v;
                }
            }
        }
    }
    for layer in &mut sums {
        for v in layer.iter_mut() {
            *v /= n as f64;
        }
    }
    Ok(sums)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

/// Writes a matrix as headerless CSV.
pub fn write_matrix_csv(path: &Path, m: ArrayView2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in m.rows() {
        w.write_record(row.iter().map(|&v| fmt(v)))?;
    }
    w.flush().map_err(io_err(path))
}

/// `layer,section,values…` with one `bit` and one `field` row per layer.
pub fn write_gates_csv(path: &Path, profile: &GateProfile) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_path(path)?;
    w.write_record(["layer", "section", "values"])?;
    for (l, g) in profile.layers.iter().enumerate() {
        let mut rec = vec![(l + 1).to_string(), "bit".to_string()];
        rec.extend(g.bitwise.iter().map(|&v| fmt(v)));
        w.write_record(&rec)?;
        let mut rec = vec![(l + 1).to_string(), "field".to_string()];
        rec.extend(g.fieldwise.iter().map(|&v| fmt(v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err(path))
}

/// Header `layer,<field names…>`, then one row per layer.
pub fn write_field_importance_csv(path: &Path, names: &[String], importance: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["layer".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (l, row) in importance.iter().enumerate() {
        let mut rec = vec![(l + 1).to_string()];
        rec.extend(row.iter().map(|&v| fmt(v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainStats {
    /// Layer whose block norms and importance the statistics use (1-based).
    pub layer: usize,
    pub cosine_similarity: Option<f64>,
    /// FDO dims against mean field importance at `layer`.
    pub dims_importance: Option<Correlation>,
}

pub fn write_stats_json(path: &Path, stats: &ExplainStats) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    serde_json::to_writer_pretty(&mut f, stats)?;
    f.write_all(b"\n").map_err(io_err(path))
}
