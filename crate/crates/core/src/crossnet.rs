//! Gated cross layers.
//!
//! Layer `l` maps `c_l` to
//!
//! ```text
//! c_{l+1} = c_0 ⊙ (W_c · c_l + b) ⊙ σ(W_g · c_l) + c_l
//! ```
//!
//! The crossing term raises the polynomial degree by one; the sigmoid gate
//! weighs each bit of the new crosses. With every gate fixed at 1 the layer is
//! exactly the ungated matrix cross layer of DCN-V2.
//!
//! All functions operate on minibatches laid out as `B × D` matrices, one
//! instance per row. Single-instance callers pass a `1 × D` batch.

use ndarray::{Array1, Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::embedding::uniform_init;
use crate::error::{Error, Result};
use crate::seed;

/// Logistic function, split by sign so `exp` never overflows.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// `g = σ(W_g · c_l)`.
    #[default]
    Learned,
    /// `g = 1`; the layer ignores `W_g` and reduces to the ungated cross layer.
    AllOnes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatedCrossParams {
    /// Cross matrix, `D × D`.
    pub w_c: Array2<f64>,
    /// Gate matrix, `D × D`.
    pub w_g: Array2<f64>,
    pub b: Array1<f64>,
}

impl GatedCrossParams {
    pub fn init(width: usize, seed: u64, layer: usize) -> Self {
        let mut rng = seed::rng(seed, "cross", &[layer as u64]);
        let w_c = uniform_init(width, width, width, &mut rng);
        let w_g = uniform_init(width, width, width, &mut rng);
        GatedCrossParams {
            w_c,
            w_g,
            b: Array1::zeros(width),
        }
    }

    pub fn zeros(width: usize) -> Self {
        GatedCrossParams {
            w_c: Array2::zeros((width, width)),
            w_g: Array2::zeros((width, width)),
            b: Array1::zeros(width),
        }
    }

    pub fn width(&self) -> usize {
        self.b.len()
    }

    fn check(&self) -> Result<()> {
        let d = self.b.len();
        if self.w_c.dim() != (d, d) || self.w_g.dim() != (d, d) {
            return Err(Error::shape(format!(
                "cross params: W_c {:?}, W_g {:?}, b {d}",
                self.w_c.dim(),
                self.w_g.dim()
            )));
        }
        Ok(())
    }
}

/// Intermediates kept by the forward pass.
#[derive(Debug, Clone)]
pub struct CrossCache {
    pub c_l: Array2<f64>,
    /// `W_c · c_l + b`.
    pub a: Array2<f64>,
    /// Gate values; `None` under [`GateMode::AllOnes`].
    pub g: Option<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct CrossLayerGrads {
    pub grad_c_l: Array2<f64>,
    pub grad_c0: Array2<f64>,
    pub w_c: Array2<f64>,
    pub w_g: Array2<f64>,
    pub b: Array1<f64>,
}

pub fn gated_cross_forward(
    c0: &Array2<f64>,
    c_l: &Array2<f64>,
    p: &GatedCrossParams,
    mode: GateMode,
) -> Result<(Array2<f64>, CrossCache)> {
    p.check()?;
    let d = p.width();
    if c0.ncols() != d || c_l.dim() != c0.dim() {
        return Err(Error::shape(format!(
            "cross layer width {d}: c0 {:?}, c_l {:?}",
            c0.dim(),
            c_l.dim()
        )));
    }
    let a = c_l.dot(&p.w_c.t()) + &p.b;
    let g = match mode {
        GateMode::Learned => Some(c_l.dot(&p.w_g.t()).mapv_into(sigmoid)),
        GateMode::AllOnes => None,
    };
    let mut next = c_l.clone();
    match &g {
        Some(g) => Zip::from(&mut next)
            .and(c0)
            .and(&a)
            .and(g)
            .for_each(|n, &x0, &a, &g| *n += x0 * a * g),
        None => Zip::from(&mut next)
            .and(c0)
            .and(&a)
            .for_each(|n, &x0, &a| *n += x0 * a),
    }
    Ok((
        next,
        CrossCache {
            c_l: c_l.clone(),
            a,
            g,
        },
    ))
}

pub fn gated_cross_backward(
    cache: &CrossCache,
    c0: &Array2<f64>,
    p: &GatedCrossParams,
    grad_next: &Array2<f64>,
) -> Result<CrossLayerGrads> {
    let dim = cache.c_l.dim();
    if c0.dim() != dim
        || cache.a.dim() != dim
        || grad_next.dim() != dim
        || cache.g.as_ref().is_some_and(|g| g.dim() != dim)
        || p.width() != dim.1
    {
        return Err(Error::shape("cross cache does not match layer inputs"));
    }
    // dL/da = grad ⊙ c0 ⊙ g ; dL/dc0 = grad ⊙ a ⊙ g
    let mut grad_a = grad_next * c0;
    let mut grad_c0 = grad_next * &cache.a;
    let grad_z = match &cache.g {
        Some(g) => {
            // dL/dz = grad ⊙ c0 ⊙ a ⊙ g(1 - g), with z = W_g c_l
            let mut gz = grad_next * c0;
            Zip::from(&mut gz)
                .and(&cache.a)
                .and(g)
                .for_each(|v, &a, &g| *v *= a * g * (1.0 - g));
            grad_a *= g;
            grad_c0 *= g;
            Some(gz)
        }
        None => None,
    };
    let w_c = grad_a.t().dot(&cache.c_l);
    let b = grad_a.sum_axis(Axis(0));
    let mut grad_c_l = grad_next + &grad_a.dot(&p.w_c);
    let w_g = match &grad_z {
        Some(gz) => {
            grad_c_l += &gz.dot(&p.w_g);
            gz.t().dot(&cache.c_l)
        }
        None => Array2::zeros(p.w_g.raw_dim()),
    };
    Ok(CrossLayerGrads {
        grad_c_l,
        grad_c0,
        w_c,
        w_g,
        b,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossStack {
    pub layers: Vec<GatedCrossParams>,
    pub gate_mode: GateMode,
}

#[derive(Debug, Clone)]
pub struct StackOutput {
    pub output: Array2<f64>,
    pub caches: Vec<CrossCache>,
}

impl StackOutput {
    /// Per-layer gate matrices (`B × D`); empty under [`GateMode::AllOnes`].
    pub fn gate_trace(&self) -> Vec<&Array2<f64>> {
        self.caches.iter().filter_map(|c| c.g.as_ref()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct StackGrads {
    pub grad_c0: Array2<f64>,
    pub layers: Vec<CrossLayerGrads>,
}

impl CrossStack {
    pub fn init(width: usize, depth: usize, gate_mode: GateMode, seed: u64) -> Self {
        CrossStack {
            layers: (0..depth).map(|l| GatedCrossParams::init(width, seed, l)).collect(),
            gate_mode,
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|p| p.w_c.len() + p.w_g.len() + p.b.len())
            .sum()
    }

    /// Runs every layer against the same `c0`. An empty stack returns `c0`.
    pub fn forward(&self, c0: &Array2<f64>) -> Result<StackOutput> {
        let mut c = c0.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for p in &self.layers {
            let (next, cache) = gated_cross_forward(c0, &c, p, self.gate_mode)?;
            caches.push(cache);
            c = next;
        }
        Ok(StackOutput { output: c, caches })
    }

    pub fn backward(&self, c0: &Array2<f64>, out: &StackOutput, grad_out: &Array2<f64>) -> Result<StackGrads> {
        if out.caches.len() != self.layers.len() {
            return Err(Error::shape("stack cache depth does not match the stack"));
        }
        let mut grad = grad_out.clone();
        let mut grad_c0 = Array2::zeros(c0.raw_dim());
        let mut layers = Vec::with_capacity(self.layers.len());
        for (p, cache) in self.layers.iter().zip(&out.caches).rev() {
            let mut lg = gated_cross_backward(cache, c0, p, &grad)?;
            grad_c0 += &lg.grad_c0;
            grad = std::mem::replace(&mut lg.grad_c_l, Array2::zeros((0, 0)));
            layers.push(lg);
        }
        layers.reverse();
        grad_c0 += &grad;
        Ok(StackGrads { grad_c0, layers })
    }
}
