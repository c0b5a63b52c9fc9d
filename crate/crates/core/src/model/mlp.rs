//! ReLU multilayer perceptron with inverted dropout after every hidden layer.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;

use crate::embedding::uniform_init;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `n_out × n_in`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
    pub dropout_rate: f64,
}

/// Identifies one dropout draw: masks are a pure function of
/// `(seed, step, layer)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropoutKey {
    pub seed: u64,
    pub step: u64,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    /// Kept units hold `1/(1-rate)`, dropped units 0.
    masks: Vec<Option<Array2<f64>>>,
}

#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub grad_h0: Array2<f64>,
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Mlp {
    pub fn init(input: usize, widths: &[usize], dropout_rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::config(format!("dropout rate {dropout_rate} not in [0, 1)")));
        }
        if widths.contains(&0) {
            return Err(Error::config("hidden widths must be positive"));
        }
        let mut n_in = input;
        let mut layers = Vec::with_capacity(widths.len());
        for (l, &n_out) in widths.iter().enumerate() {
            let mut rng = seed::rng(seed, "dnn", &[l as u64]);
            layers.push(DenseLayer {
                w: uniform_init(n_out, n_in, n_in, &mut rng),
                b: Array1::zeros(n_out),
            });
            n_in = n_out;
        }
        Ok(Mlp { layers, dropout_rate })
    }

    pub fn output_width(&self, input: usize) -> usize {
        self.layers.last().map_or(input, |l| l.b.len())
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn mask(&self, key: DropoutKey, layer: usize, shape: (usize, usize)) -> Array2<f64> {
        let mut rng = seed::rng(key.seed, "dropout", &[key.step, layer as u64]);
        let keep = 1.0 / (1.0 - self.dropout_rate);
        let rate = self.dropout_rate;
        Array2::from_shape_fn(shape, |_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
    }

    /// `dropout = None` is inference; `Some(key)` samples masks for training.
    pub fn forward(&self, h0: &Array2<f64>, dropout: Option<DropoutKey>) -> Result<(Array2<f64>, MlpCache)> {
        let mut h = h0.clone();
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
            masks: Vec::with_capacity(self.layers.len()),
        };
        for (l, layer) in self.layers.iter().enumerate() {
            if h.ncols() != layer.w.ncols() {
                return Err(Error::shape(format!(
                    "dnn layer {l}: input width {} vs weight {:?}",
                    h.ncols(),
                    layer.w.dim()
                )));
            }
            let pre = h.dot(&layer.w.t()) + &layer.b;
            let mut out = pre.mapv(|v| v.max(0.0));
            let mask = match dropout {
                Some(key) if self.dropout_rate > 0.0 => {
                    let m = self.mask(key, l, out.dim());
                    out *= &m;
                    Some(m)
                }
                _ => None,
            };
            cache.inputs.push(std::mem::replace(&mut h, out));
            cache.pre.push(pre);
            cache.masks.push(mask);
        }
        Ok((h, cache))
    }

    pub fn backward(&self, cache: &MlpCache, grad_out: &Array2<f64>) -> Result<MlpGrads> {
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::shape("dnn cache depth does not match the network"));
        }
        let mut grad = grad_out.clone();
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            if let Some(m) = &cache.masks[l] {
                grad *= m;
            }
            // ReLU subgradient at 0 is 0.
            Zip::from(&mut grad)
                .and(&cache.pre[l])
                .for_each(|g, &p| {
                    if p <= 0.0 {
                        *g = 0.0
                    }
                });
            let gw = grad.t().dot(&cache.inputs[l]);
            let gb = grad.sum_axis(Axis(0));
            grad = grad.dot(&self.layers[l].w);
            layers.push((gw, gb));
        }
        layers.reverse();
        Ok(MlpGrads { grad_h0: grad, layers })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_weights_give_zero_output() {
        let mut mlp = Mlp::init(3, &[4, 2], 0.5, 0).unwrap();
        for l in &mut mlp.layers {
            l.w.fill(0.0);
        }
        let (out, _) = mlp.forward(&array![[1.0, 2.0, 3.0]], None).unwrap();
        assert_eq!(out, Array2::<f64>::zeros((1, 2)));
    }

    #[test]
    fn no_dropout_train_equals_inference() {
        let mlp = Mlp::init(3, &[5, 4], 0.0, 9).unwrap();
        let x = array![[1.0, -2.0, 3.0], [0.5, 0.1, -0.3]];
        let key = DropoutKey { seed: 1, step: 3 };
        assert_eq!(mlp.forward(&x, Some(key)).unwrap().0, mlp.forward(&x, None).unwrap().0);
    }

    #[test]
    fn dropout_masks_are_keyed() {
        let mlp = Mlp::init(8, &[64], 0.5, 9).unwrap();
        let x = Array2::ones((4, 8));
        let k = DropoutKey { seed: 1, step: 3 };
        let a = mlp.forward(&x, Some(k)).unwrap().0;
        assert_eq!(a, mlp.forward(&x, Some(k)).unwrap().0);
        assert_ne!(a, mlp.forward(&x, Some(DropoutKey { seed: 1, step: 4 })).unwrap().0);
        let (_, cache) = mlp.forward(&x, Some(k)).unwrap();
        let m = cache.masks[0].as_ref().unwrap();
        assert!(m.iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn single_layer_weight_grad_is_outer_product() {
        let mlp = Mlp {
            layers: vec![DenseLayer {
                w: array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
                b: array![1.0, 1.0, 1.0],
            }],
            dropout_rate: 0.0,
        };
        let h0 = array![[2.0, 3.0]];
        let (_, cache) = mlp.forward(&h0, None).unwrap();
        let g = array![[0.5, -1.0, 2.0]];
        let grads = mlp.backward(&cache, &g).unwrap();
        let outer = g.t().dot(&h0);
        assert_eq!(grads.layers[0].0, outer);
        assert_eq!(grads.layers[0].1, array![0.5, -1.0, 2.0]);
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let mlp = Mlp::init(3, &[4, 2], 0.5, 0).unwrap();
        let (_, cache) = mlp
            .forward(&array![[1.0, 2.0, 3.0]], Some(DropoutKey { seed: 0, step: 0 }))
            .unwrap();
        let g = mlp.backward(&cache, &Array2::zeros((1, 2))).unwrap();
        assert!(g.grad_h0.iter().all(|&v| v == 0.0));
        assert!(g.layers.iter().all(|(w, b)| w.iter().chain(b.iter()).all(|&v| v == 0.0)));
    }

    #[test]
    fn rejects_bad_rates() {
        assert!(Mlp::init(3, &[4], 1.0, 0).is_err());
        assert!(Mlp::init(3, &[0], 0.1, 0).is_err());
    }
}
