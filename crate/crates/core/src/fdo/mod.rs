//! Field-level dimension optimization.
//!
//! Given embedding tables trained at a common width, each field's table is
//! reduced to its singular-value spectrum and the field keeps the smallest
//! number of leading directions whose cumulative information reaches the
//! requested ratio. Information defaults to squared singular values of the
//! column-centered table (explained variance); the uncentered and raw-σ
//! readings are available through [`SpectrumConfig`].

pub mod spectrum;

use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTables;
use crate::error::{Error, Result};

pub use spectrum::{center_columns, singular_values_of};

/// How a field's information is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Energy {
    /// `σ²`.
    Squared,
    /// `σ`.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectrumConfig {
    pub center: bool,
    pub energy: Energy,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            center: true,
            energy: Energy::Squared,
        }
    }
}

/// Descending singular values of the (optionally centered) table.
pub fn singular_values(table: ArrayView2<f64>, center: bool) -> Vec<f64> {
    if center {
        singular_values_of(center_columns(table).view())
    } else {
        singular_values_of(table)
    }
}

/// Smallest `k` whose leading `k` values hold at least `ratio` of the total
/// information. A zero spectrum gives 1.
pub fn choose_dim(sigma: &[f64], ratio: f64, energy: Energy) -> usize {
    let e = |s: f64| match energy {
        Energy::Squared => s * s,
        Energy::Linear => s,
    };
    let total: f64 = sigma.iter().map(|&s| e(s)).sum();
    if sigma.is_empty() || total <= 0.0 {
        return 1;
    }
    let mut acc = 0.0;
    for (k, &s) in sigma.iter().enumerate() {
        acc += e(s);
        if acc / total >= ratio {
            return k + 1;
        }
    }
    sigma.len()
}

/// Embedding-parameter accounting for a set of field dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamCount {
    /// `P_e = Σ d_f |E_f|`.
    pub embedding_params: u64,
    /// `D̄ = P_e / T`.
    pub weighted_avg_dim: f64,
    /// `K̄ = Σ d_f / F`.
    pub arithmetic_avg_dim: f64,
    pub total_features: u64,
}

pub fn param_count(field_sizes: &[usize], dims: &[usize]) -> Result<ParamCount> {
    if field_sizes.len() != dims.len() || dims.is_empty() {
        return Err(Error::config(format!(
            "{} field sizes for {} dims",
            field_sizes.len(),
            dims.len()
        )));
    }
    let p_e: u64 = field_sizes.iter().zip(dims).map(|(&n, &d)| (n * d) as u64).sum();
    let t: u64 = field_sizes.iter().map(|&n| n as u64).sum();
    let k: usize = dims.iter().sum();
    Ok(ParamCount {
        embedding_params: p_e,
        weighted_avg_dim: p_e as f64 / t as f64,
        arithmetic_avg_dim: k as f64 / dims.len() as f64,
        total_features: t,
    })
}

/// The `|E_f|^0.25` rule of thumb, rounded to nearest and floored at 1.
pub fn formula_dims(field_sizes: &[usize]) -> Vec<usize> {
    field_sizes
        .iter()
        .map(|&n| ((n as f64).powf(0.25).round() as usize).max(1))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpectrum {
    pub field: usize,
    pub rows: usize,
    pub singular_values: Vec<f64>,
    /// Chosen dimension for each ratio of the report, same order.
    pub dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub ratio: f64,
    pub dims: Vec<usize>,
    pub params: ParamCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdoReport {
    pub source_checkpoint: String,
    pub config: SpectrumConfig,
    pub ratios: Vec<f64>,
    pub fields: Vec<FieldSpectrum>,
    pub summaries: Vec<RatioSummary>,
}

/// Analyzes every field of `tables` at each ratio.
pub fn fdo_plan(
    tables: &EmbeddingTables,
    ratios: &[f64],
    config: SpectrumConfig,
    source_checkpoint: &str,
) -> Result<FdoReport> {
    if tables.tables.is_empty() {
        return Err(Error::Format("no embedding tables to analyze".into()));
    }
    if let Some(r) = ratios.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
        return Err(Error::config(format!("information ratio {r} not in (0, 1]")));
    }
    let fields: Vec<FieldSpectrum> = tables
        .tables
        .iter()
        .enumerate()
        .map(|(f, t)| {
            let sv = singular_values(t.view(), config.center);
            let cap = t.nrows().min(t.ncols()).max(1);
            let dims = ratios
                .iter()
                .map(|&r| choose_dim(&sv, r, config.energy).clamp(1, cap))
                .collect();
            FieldSpectrum {
                field: f,
                rows: t.nrows(),
                singular_values: sv,
                dims,
            }
        })
        .collect();
    let sizes = tables.field_sizes();
    let summaries = ratios
        .iter()
        .enumerate()
        .map(|(i, &ratio)| {
            let dims: Vec<usize> = fields.iter().map(|f| f.dims[i]).collect();
            let params = param_count(&sizes, &dims)?;
            Ok(RatioSummary { ratio, dims, params })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FdoReport {
        source_checkpoint: source_checkpoint.to_string(),
        config,
        ratios: ratios.to_vec(),
        fields,
        summaries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimsEntry {
    pub field: usize,
    pub dim: usize,
    pub singular_values: Vec<f64>,
}

/// Per-ratio dimension plan, reusable as `train --dims`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimsFile {
    pub source_checkpoint: String,
    pub ratio: f64,
    pub fields: Vec<DimsEntry>,
}

impl DimsFile {
    pub fn dims(&self) -> Vec<usize> {
        self.fields.iter().map(|e| e.dim).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: DimsFile = serde_json::from_str(&text)?;
        if file.fields.iter().enumerate().any(|(i, e)| e.field != i || e.dim == 0) {
            return Err(Error::Format(
                "dims file must list fields 0..F in order with positive dims".into(),
            ));
        }
        Ok(file)
    }
}

impl FdoReport {
    pub fn dims_files(&self) -> Vec<DimsFile> {
        self.ratios
            .iter()
            .enumerate()
            .map(|(i, &ratio)| DimsFile {
                source_checkpoint: self.source_checkpoint.clone(),
                ratio,
                fields: self
                    .fields
                    .iter()
                    .map(|f| DimsEntry {
                        field: f.field,
                        dim: f.dims[i],
                        singular_values: f.singular_values.clone(),
                    })
                    .collect(),
            })
            .collect()
    }
}
