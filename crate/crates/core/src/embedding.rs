//! Per-field embedding tables with heterogeneous widths, the concatenated
//! base vector, the optional dimension-alignment layer, and sparse gradient
//! accumulation.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

/// Uniform `[-1/√fan_in, 1/√fan_in]` initialization.
pub(crate) fn uniform_init(rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> Array2<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..=bound))
}

/// Column offsets of each field's segment within a width-`Σd` vector.
pub fn offsets(dims: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(dims.len() + 1);
    let mut acc = 0;
    out.push(0);
    for &d in dims {
        acc += d;
        out.push(acc);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTables {
    /// Table `f` has shape `|E_f| × d_f`.
    pub tables: Vec<Array2<f64>>,
}

impl EmbeddingTables {
    pub fn init(field_sizes: &[usize], dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() != field_sizes.len() {
            return Err(Error::config(format!(
                "got {} dims for {} fields",
                dims.len(),
                field_sizes.len()
            )));
        }
        if let Some(f) = dims.iter().position(|&d| d == 0) {
            return Err(Error::config(format!("field {f} has dimension 0")));
        }
        let tables = field_sizes
            .iter()
            .zip(dims)
            .enumerate()
            .map(|(f, (&n, &d))| {
                let mut rng = seed::rng(seed, "embedding", &[f as u64]);
                uniform_init(n, d, d, &mut rng)
            })
            .collect();
        Ok(EmbeddingTables { tables })
    }

    pub fn zeros(field_sizes: &[usize], dims: &[usize]) -> Self {
        EmbeddingTables {
            tables: field_sizes
                .iter()
                .zip(dims)
                .map(|(&n, &d)| Array2::zeros((n, d)))
                .collect(),
        }
    }

    pub fn num_fields(&self) -> usize {
        self.tables.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.tables.iter().map(|t| t.ncols()).collect()
    }

    pub fn field_sizes(&self) -> Vec<usize> {
        self.tables.iter().map(|t| t.nrows()).collect()
    }

    /// `D = Σ d_f`.
    pub fn width(&self) -> usize {
        self.tables.iter().map(|t| t.ncols()).sum()
    }

    pub fn num_params(&self) -> usize {
        self.tables.iter().map(|t| t.len()).sum()
    }

    fn check(&self, indices: &[u32]) -> Result<()> {
        if indices.len() != self.tables.len() {
            return Err(Error::shape(format!(
                "instance has {} indices for {} fields",
                indices.len(),
                self.tables.len()
            )));
        }
        for (f, (&i, t)) in indices.iter().zip(&self.tables).enumerate() {
            if i as usize >= t.nrows() {
                return Err(Error::Lookup {
                    field: f,
                    index: i,
                    size: t.nrows(),
                });
            }
        }
        Ok(())
    }

    /// `c₀ = [e₁ ∥ … ∥ e_F]` for one instance.
    pub fn lookup_concat(&self, indices: &[u32]) -> Result<Array1<f64>> {
        self.check(indices)?;
        let mut out = Vec::with_capacity(self.width());
        for (&i, t) in indices.iter().zip(&self.tables) {
            out.extend(t.row(i as usize).iter());
        }
        Ok(Array1::from(out))
    }

    /// Batch lookup; row `b` of the result is `c₀` of `rows[b]`.
    pub fn lookup_batch<'a, I>(&self, rows: I) -> Result<Array2<f64>>
    where
        I: ExactSizeIterator<Item = &'a [u32]>,
    {
        let width = self.width();
        let mut out = Array2::zeros((rows.len(), width));
        for (b, idx) in rows.enumerate() {
            self.check(idx)?;
            let mut row = out.row_mut(b);
            let mut off = 0;
            for (&i, t) in idx.iter().zip(&self.tables) {
                let d = t.ncols();
                row.slice_mut(s![off..off + d]).assign(&t.row(i as usize));
                off += d;
            }
        }
        Ok(out)
    }
}

/// Sparse per-row gradient for embedding tables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRowGrads {
    pub fields: Vec<BTreeMap<u32, Array1<f64>>>,
}

impl SparseRowGrads {
    pub fn new(num_fields: usize) -> Self {
        SparseRowGrads {
            fields: vec![BTreeMap::new(); num_fields],
        }
    }

    pub fn get(&self, field: usize, row: u32) -> Option<&Array1<f64>> {
        self.fields[field].get(&row)
    }

    pub fn touched_rows(&self) -> usize {
        self.fields.iter().map(BTreeMap::len).sum()
    }

    pub fn scale(&mut self, k: f64) {
        for f in &mut self.fields {
            for g in f.values_mut() {
                *g *= k;
            }
        }
    }

    /// Adds segment `f` of `grad_c0` into row `(f, indices[f])`.
    pub fn scatter(&mut self, indices: &[u32], grad_c0: ArrayView1<f64>, dims: &[usize]) -> Result<()> {
        let total: usize = dims.iter().sum();
        if grad_c0.len() != total || indices.len() != dims.len() || self.fields.len() != dims.len() {
            return Err(Error::shape(format!(
                "gradient width {} vs D = {total}, {} indices for {} fields",
                grad_c0.len(),
                indices.len(),
                dims.len()
            )));
        }
        let mut off = 0;
        for (f, (&i, &d)) in indices.iter().zip(dims).enumerate() {
            let seg = grad_c0.slice(s![off..off + d]);
            self.fields[f]
                .entry(i)
                .and_modify(|acc| *acc += &seg)
                .or_insert_with(|| seg.to_owned());
            off += d;
        }
        Ok(())
    }

    pub fn scatter_batch<'a, I>(&mut self, rows: I, grad_c0: ArrayView2<f64>, dims: &[usize]) -> Result<()>
    where
        I: Iterator<Item = &'a [u32]>,
    {
        for (idx, g) in rows.zip(grad_c0.axis_iter(Axis(0))) {
            self.scatter(idx, g, dims)?;
        }
        Ok(())
    }
}

/// Free-function form of [`SparseRowGrads::scatter`].
pub fn scatter_gradient(
    indices: &[u32],
    grad_c0: ArrayView1<f64>,
    dims: &[usize],
    accumulator: &mut SparseRowGrads,
) -> Result<()> {
    accumulator.scatter(indices, grad_c0, dims)
}

/// Per-field projections `M_f ∈ ℝ^{d_f × d_max}` that bring heterogeneous
/// embeddings to a common width.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentLayer {
    pub matrices: Vec<Array2<f64>>,
}

impl AlignmentLayer {
    pub fn init(dims: &[usize], seed: u64) -> Self {
        let d_max = dims.iter().copied().max().unwrap_or(0);
        let matrices = dims
            .iter()
            .enumerate()
            .map(|(f, &d)| {
                let mut rng = seed::rng(seed, "align", &[f as u64]);
                uniform_init(d, d_max, d, &mut rng)
            })
            .collect();
        AlignmentLayer { matrices }
    }

    /// Identity on the first `d_f` columns, zero elsewhere.
    pub fn identity_padded(dims: &[usize]) -> Self {
        let d_max = dims.iter().copied().max().unwrap_or(0);
        AlignmentLayer {
            matrices: dims
                .iter()
                .map(|&d| Array2::from_shape_fn((d, d_max), |(i, j)| if i == j { 1.0 } else { 0.0 }))
                .collect(),
        }
    }

    pub fn d_max(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.ncols())
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.matrices.iter().map(|m| m.nrows()).collect()
    }

    /// `Σ_f d_max · d_f`.
    pub fn num_params(&self) -> usize {
        self.matrices.iter().map(|m| m.len()).sum()
    }

    /// Batch alignment of a concatenated `B × Σd_f` input to `B × F·d_max`.
    pub fn forward(&self, raw: &Array2<f64>) -> Result<Array2<f64>> {
        let dims = self.input_dims();
        let offs = offsets(&dims);
        if raw.ncols() != offs[dims.len()] {
            return Err(Error::shape(format!(
                "alignment input width {} vs {}",
                raw.ncols(),
                offs[dims.len()]
            )));
        }
        let d_max = self.d_max();
        let mut out = Array2::zeros((raw.nrows(), dims.len() * d_max));
        for (f, m) in self.matrices.iter().enumerate() {
            let seg = raw.slice(s![.., offs[f]..offs[f + 1]]);
            out.slice_mut(s![.., f * d_max..(f + 1) * d_max]).assign(&seg.dot(m));
        }
        Ok(out)
    }

    /// Returns `(∂L/∂raw, ∂L/∂M_f per field)` given `∂L/∂aligned`.
    pub fn backward(&self, raw: &Array2<f64>, grad_aligned: &Array2<f64>) -> (Array2<f64>, Vec<Array2<f64>>) {
        let dims = self.input_dims();
        let offs = offsets(&dims);
        let d_max = self.d_max();
        let mut grad_raw = Array2::zeros(raw.raw_dim());
        let mut grad_m = Vec::with_capacity(dims.len());
        for (f, m) in self.matrices.iter().enumerate() {
            let seg = raw.slice(s![.., offs[f]..offs[f + 1]]);
            let g = grad_aligned.slice(s![.., f * d_max..(f + 1) * d_max]);
            grad_m.push(seg.t().dot(&g));
            grad_raw.slice_mut(s![.., offs[f]..offs[f + 1]]).assign(&g.dot(&m.t()));
        }
        (grad_raw, grad_m)
    }
}

/// `ê_f = e_f · M_f`.
pub fn align(e: ArrayView1<f64>, m: ArrayView2<f64>) -> Result<Array1<f64>> {
    if e.len() != m.nrows() {
        return Err(Error::shape(format!(
            "embedding width {} vs alignment rows {}",
            e.len(),
            m.nrows()
        )));
    }
    Ok(e.dot(&m))
}
