//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use gdcn::features::{FieldKind, RawRecord};
use gdcn::model::{mean_logloss, DropoutKey, Mode, Model};
use nalgebra::{DMatrix, SymmetricEigen};

/// Mean LogLoss of a batch under fixed dropout masks.
pub fn batch_loss(model: &Model, rows: &[&[u32]], labels: &[u8], key: DropoutKey) -> f64 {
    let trace = model.forward_batch(rows, Mode::Train(key)).unwrap();
    mean_logloss(trace.probs.as_slice().unwrap(), labels).unwrap()
}

/// Relative errors use at least this denominator, so vanishing gradients are
/// compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel: f64,
    pub worst: String,
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Compares every analytic gradient (dense tensors and all embedding
/// entries) with a fourth-order central difference of the batch loss.
#[allow(clippy::needless_range_loop)]
pub fn check_gradients(model: &Model, rows: &[&[u32]], labels: &[u8], key: DropoutKey) -> GradCheck {
    let trace = model.forward_batch(rows, Mode::Train(key)).unwrap();
    let grads = model.backward(&trace, labels).unwrap();
    let dense: Vec<Vec<f64>> = grads.dense().iter().map(|g| g.iter().copied().collect()).collect();
    let f = model.embedding.num_fields();
    let h = 1e-4;

    let names: Vec<(String, usize, Vec<usize>)> = model
        .named_tensors()
        .iter()
        .map(|(n, t)| (n.clone(), t.len(), t.shape().to_vec()))
        .collect();
    let mut out = GradCheck {
        checked: 0,
        max_rel: 0.0,
        worst: String::new(),
    };
    for (k, (name, len, shape)) in names.iter().enumerate() {
        for i in 0..*len {
            let analytic = if k < f {
                let cols = shape[1];
                let (r, c) = (i / cols, i % cols);
                grads.embedding.get(k, r as u32).map_or(0.0, |g| g[c])
            } else {
                dense[k - f][i]
            };
            let eval = |delta: f64| {
                let mut m = model.clone();
                {
                    let mut t = m.named_tensors_mut();
                    let v = t[k].1.iter_mut().nth(i).unwrap();
                    *v += delta;
                }
                batch_loss(&m, rows, labels, key)
            };
            let numeric = (-eval(2.0 * h) + 8.0 * eval(h) - 8.0 * eval(-h) + eval(-2.0 * h)) / (12.0 * h);
            let rel = rel_err(analytic, numeric);
            out.checked += 1;
            if rel > out.max_rel {
                out.max_rel = rel;
                out.worst = format!("{name}[{i}]: analytic {analytic:e} numeric {numeric:e}");
            }
        }
    }
    out
}

/// One cross layer without gates, written with plain loops:
/// `out_i = c0_i · (Σ_j W_ij c_j + b_i) + c_i`.
pub fn cn_v2_layer(c0: &[f64], cl: &[f64], w: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    (0..c0.len())
        .map(|i| {
            let mut s = b[i];
            for j in 0..cl.len() {
                s += w[i][j] * cl[j];
            }
            c0[i] * s + cl[i]
        })
        .collect()
}

/// `Σ_{pos, neg} [s⁺ > s⁻] + ½[s⁺ = s⁻]` over `P·N`, kept as an integer until
/// the final division.
pub fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut twice: u128 = 0;
    let (mut p, mut n) = (0u128, 0u128);
    for (i, &li) in labels.iter().enumerate() {
        if li == 0 {
            n += 1;
            continue;
        }
        p += 1;
        for (j, &lj) in labels.iter().enumerate() {
            if lj != 0 {
                continue;
            }
            if scores[i] > scores[j] {
                twice += 2;
            } else if scores[i] == scores[j] {
                twice += 1;
            }
        }
    }
    twice as f64 / (2 * p * n) as f64
}

/// Singular values of the column-centered matrix from the eigenvalues of the
/// smaller Gram matrix. When rows ≤ cols the centered row space loses the
/// all-ones direction; it is projected out with a Helmert basis and the
/// resulting exact zero appended, so no eigenvalue has to resolve it.
pub fn centered_gram_singular_values(m: &[Vec<f64>]) -> Vec<f64> {
    let rows = m.len();
    let cols = m[0].len();
    let mut c = DMatrix::from_fn(rows, cols, |i, j| m[i][j]);
    for j in 0..cols {
        let mean = c.column(j).sum() / rows as f64;
        for i in 0..rows {
            c[(i, j)] -= mean;
        }
    }
    let mut sv: Vec<f64> = if rows == 1 {
        vec![0.0]
    } else if cols < rows {
        let g = c.transpose() * &c;
        eigen_roots(g)
    } else {
        // Helmert rows: orthonormal basis of the complement of 1/√n.
        let h = DMatrix::from_fn(rows - 1, rows, |k, i| {
            let k1 = (k + 1) as f64;
            let norm = (k1 * (k1 + 1.0)).sqrt();
            if i <= k {
                1.0 / norm
            } else if i == k + 1 {
                -k1 / norm
            } else {
                0.0
            }
        });
        let r = h * &c;
        let mut v = eigen_roots(&r * r.transpose());
        v.push(0.0);
        v
    };
    sv.sort_by(|a, b| b.total_cmp(a));
    sv.truncate(rows.min(cols));
    sv
}

fn eigen_roots(g: DMatrix<f64>) -> Vec<f64> {
    SymmetricEigen::new(g)
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0).sqrt())
        .collect()
}

/// Vocabulary sizes from counting raw tokens with a hash map, independent of
/// the schema builder.
pub fn brute_force_vocab_sizes(kinds: &[FieldKind], rows: &[RawRecord], threshold: u64) -> Vec<usize> {
    (0..kinds.len())
        .map(|f| {
            let mut counts: HashMap<String, u64> = HashMap::new();
            for r in rows {
                let raw = r.values[f].as_str();
                let token = match kinds[f] {
                    FieldKind::Categorical => raw.to_string(),
                    FieldKind::Numeric => oracle_numeric_token(raw),
                };
                *counts.entry(token).or_default() += 1;
            }
            counts.values().filter(|&&c| c >= threshold).count() + 1
        })
        .collect()
}

/// `⌊log₂ z⌋` above 2, `⌊z⌋` otherwise, `<missing>` for empty or unparsable.
fn oracle_numeric_token(raw: &str) -> String {
    match raw.trim().parse::<f64>() {
        Ok(z) if z.is_finite() => {
            let v = if z > 2.0 { z.log2().floor() } else { z.floor() };
            format!("{}", v as i64)
        }
        _ => "<missing>".to_string(),
    }
}

/// Mean of field-wise gate vectors recomputed from bit-wise gates with a
/// two-pass sum.
pub fn naive_mean(vectors: &[Vec<f64>]) -> Vec<f64> {
    let n = vectors.len() as f64;
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for v in vectors {
        for (i, x) in v.iter().enumerate() {
            *acc.entry(i).or_default() += x;
        }
    }
    acc.values().map(|s| s / n).collect()
}

/// `order`-th forward differences of equally spaced samples.
pub fn forward_difference(values: &[f64], order: usize) -> Vec<f64> {
    let mut v = values.to_vec();
    for _ in 0..order {
        v = v.windows(2).map(|w| w[1] - w[0]).collect();
    }
    v
}

/// Worst relative deviation of a gate-off stack from iterated `cn_v2_layer`
/// over `cases` random widths, depths and inputs.
pub fn cn_v2_max_deviation(cases: usize, seed: u64) -> f64 {
    use gdcn::crossnet::{CrossStack, GateMode};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let d = rng.gen_range(1..=12);
        let depth = rng.gen_range(1..=4);
        let batch = rng.gen_range(1..=5);
        let mut stack = CrossStack::init(d, depth, GateMode::AllOnes, case as u64);
        for p in &mut stack.layers {
            p.b.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
            // Learned-gate weights must be ignored entirely.
            p.w_g.mapv_inplace(|_| rng.gen_range(-5.0..5.0));
        }
        let c0 = Array2::from_shape_fn((batch, d), |_| rng.gen_range(-2.0..2.0));
        let out = stack.forward(&c0).unwrap();
        for r in 0..batch {
            let x0: Vec<f64> = c0.row(r).to_vec();
            let mut x = x0.clone();
            for (l, p) in stack.layers.iter().enumerate() {
                let w: Vec<Vec<f64>> = p.w_c.rows().into_iter().map(|row| row.to_vec()).collect();
                x = cn_v2_layer(&x0, &x, &w, p.b.as_slice().unwrap());
                // layer l's output is the next layer's input
                let got = if l + 1 < depth {
                    out.caches[l + 1].c_l.row(r).to_vec()
                } else {
                    out.output.row(r).to_vec()
                };
                for (a, b) in got.iter().zip(&x) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    worst
}

/// For each depth, the largest `(L+2)`-th forward difference of a gate-off
/// stack's outputs along `c₀ = t·v` (8 equally spaced `t`), relative to the
/// largest output magnitude, and the same for the `(L+1)`-th difference.
pub fn polynomial_degree_residuals(depths: &[usize], width: usize, seed: u64) -> Vec<(usize, f64, f64)> {
    use gdcn::crossnet::{CrossStack, GateMode};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    depths
        .iter()
        .map(|&depth| {
            let mut stack = CrossStack::init(width, depth, GateMode::AllOnes, seed + depth as u64);
            for p in &mut stack.layers {
                p.b.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
            }
            let v: Vec<f64> = (0..width).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ts: Vec<f64> = (0..8).map(|k| -1.5 + 3.0 * k as f64 / 7.0).collect();
            let c0 = Array2::from_shape_fn((ts.len(), width), |(k, j)| ts[k] * v[j]);
            let out = stack.forward(&c0).unwrap().output;
            let scale = out.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let mut vanish: f64 = 0.0;
            let mut previous: f64 = 0.0;
            for j in 0..width {
                let col: Vec<f64> = out.column(j).to_vec();
                for d in forward_difference(&col, depth + 2) {
                    vanish = vanish.max(d.abs() / scale);
                }
                for d in forward_difference(&col, depth + 1) {
                    previous = previous.max(d.abs() / scale);
                }
            }
            (depth, vanish, previous)
        })
        .collect()
}

/// Raw records with a planted pairwise interaction: four categorical fields
/// and one numeric field carrying the first field's value.
pub fn toy_raw(n: usize, seed: u64) -> (Vec<gdcn::features::FieldDecl>, Vec<RawRecord>) {
    use gdcn::features::FieldDecl;
    let data = gdcn::synthetic::PlantedInteractions::pairwise(vec![8, 8, 5, 3], seed).generate(n);
    let mut decls: Vec<FieldDecl> = ["user", "item", "context", "slot"]
        .iter()
        .map(|name| FieldDecl {
            name: name.to_string(),
            kind: FieldKind::Categorical,
        })
        .collect();
    decls.push(FieldDecl {
        name: "count".into(),
        kind: FieldKind::Numeric,
    });
    let rows = (0..data.len())
        .map(|i| {
            let idx = data.row(i);
            let mut values: Vec<String> = idx.iter().enumerate().map(|(f, v)| format!("f{f}v{v}")).collect();
            values.push(format!("{}", idx[0] * 3));
            RawRecord {
                label: data.labels[i].to_string(),
                values,
            }
        })
        .collect();
    (decls, rows)
}

/// Writes a toy raw CSV and its declaration file into `dir`.
pub fn write_toy_inputs(dir: &std::path::Path, n: usize, seed: u64) -> (std::path::PathBuf, std::path::PathBuf) {
    let (decls, rows) = toy_raw(n, seed);
    let raw = dir.join("raw.csv");
    let decl = dir.join("fields.txt");
    gdcn::features::write_raw_csv(&raw, &decls, &rows).unwrap();
    std::fs::write(&decl, gdcn::features::format_field_decls(&decls)).unwrap();
    (raw, decl)
}

/// Scores and labels of random length ≤ 1000; half the cases draw scores
/// from at most five levels so ties dominate.
pub fn random_auc_case(rng: &mut rand_chacha::ChaCha8Rng) -> (Vec<f64>, Vec<u8>) {
    use rand::Rng;
    let n = rng.gen_range(2..=1000);
    let levels = if rng.gen_bool(0.5) { rng.gen_range(1..=5) } else { 0 };
    let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.3))).collect();
    labels[0] = 0;
    labels[1] = 1;
    let scores = (0..n)
        .map(|_| {
            if levels > 0 {
                rng.gen_range(0..levels) as f64 / levels as f64
            } else {
                rng.gen_range(0.0..1.0)
            }
        })
        .collect();
    (scores, labels)
}

/// Random nonzero cross and MLP biases and a larger head, so no ReLU input
/// sits exactly on its kink and no gradient is trivially zero.
pub fn perturb_for_gradcheck(m: &mut Model, seed: u64) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for p in &mut m.cross.layers {
        p.b.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
    }
    for l in &mut m.mlp.layers {
        l.b.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
    }
    m.head.mapv_inplace(|v| 4.0 * v);
}
