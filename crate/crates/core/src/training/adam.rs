//! Adam with sparse row updates for embedding tables.

use ndarray::{Array2, ArrayD, ArrayViewD, ArrayViewMutD, Zip};

use crate::error::{Error, Result};
use crate::model::{Model, ModelGrads};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of a single tensor at step `t` (1-based).
pub fn adam_update(
    mut param: ArrayViewMutD<f64>,
    grad: ArrayViewD<f64>,
    m: &mut ArrayD<f64>,
    v: &mut ArrayD<f64>,
    t: u64,
    lr: f64,
    cfg: AdamConfig,
) {
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    Zip::from(&mut param)
        .and(&grad)
        .and(m)
        .and(v)
        .for_each(|p, &g, m, v| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        });
}

/// Moment estimates for every parameter of a [`Model`].
///
/// Embedding moments are only touched for rows present in a batch's
/// gradient; untouched rows keep their moments and values unchanged.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub step: u64,
    dense_m: Vec<ArrayD<f64>>,
    dense_v: Vec<ArrayD<f64>>,
    emb_m: Vec<Array2<f64>>,
    emb_v: Vec<Array2<f64>>,
}

impl AdamState {
    pub fn new(model: &mut Model, cfg: AdamConfig) -> Self {
        let dense_m: Vec<ArrayD<f64>> = model
            .dense_params_mut()
            .iter()
            .map(|p| ArrayD::zeros(p.raw_dim()))
            .collect();
        let emb_m: Vec<Array2<f64>> = model
            .embedding
            .tables
            .iter()
            .map(|t| Array2::zeros(t.raw_dim()))
            .collect();
        AdamState {
            cfg,
            step: 0,
            dense_v: dense_m.clone(),
            dense_m,
            emb_v: emb_m.clone(),
            emb_m,
        }
    }

    /// Applies one update. Non-finite gradients abort before anything changes.
    pub fn apply(&mut self, model: &mut Model, grads: &ModelGrads, lr: f64) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite gradient at optimizer step {} (batch loss {})",
                self.step + 1,
                grads.loss
            )));
        }
        let dense_grads = grads.dense();
        let mut params = model.dense_params_mut();
        if params.len() != dense_grads.len() || params.len() != self.dense_m.len() {
            return Err(Error::shape("gradient tensors do not mirror model parameters"));
        }
        self.step += 1;
        let t = self.step;
        for (((p, g), m), v) in params
            .drain(..)
            .zip(dense_grads)
            .zip(&mut self.dense_m)
            .zip(&mut self.dense_v)
        {
            if p.shape() != g.shape() {
                return Err(Error::shape("gradient shape drift"));
            }
            adam_update(p, g, m, v, t, lr, self.cfg);
        }
        let cfg = self.cfg;
        let bc1 = 1.0 - cfg.beta1.powi(t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(t as i32);
        for (f, rows) in grads.embedding.fields.iter().enumerate() {
            let table = &mut model.embedding.tables[f];
            for (&r, g) in rows {
                let r = r as usize;
                let mut p = table.row_mut(r);
                let mut m = self.emb_m[f].row_mut(r);
                let mut v = self.emb_v[f].row_mut(r);
                Zip::from(&mut p)
                    .and(g)
                    .and(&mut m)
                    .and(&mut v)
                    .for_each(|p, &g, m, v| {
                        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                        *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + cfg.eps);
                    });
            }
        }
        Ok(())
    }
}
