//! Synthetic data with known structure: labels driven by planted feature
//! interactions, embedding tables with planted per-field rank, and raw
//! Criteo-shaped records.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::embedding::EmbeddingTables;
use crate::features::{EncodedDataset, EncodedInstance, FieldDecl, FieldKind, RawRecord};
use crate::seed;

/// A multiplicative interaction among `fields` with weight `weight`.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub fields: Vec<usize>,
    pub weight: f64,
}

/// Labels are `1[Σ_S w_S Π_{f∈S} a_f(x_f) + noise·ε > median]` with a
/// per-feature value `a_f(v)` drawn uniformly from `[-1, 1]` and logistic `ε`.
#[derive(Debug, Clone)]
pub struct PlantedInteractions {
    pub field_sizes: Vec<usize>,
    pub interactions: Vec<Interaction>,
    pub noise: f64,
    pub seed: u64,
}

impl PlantedInteractions {
    /// One 2nd-order interaction between fields 0 and 1, no noise.
    pub fn pairwise(field_sizes: Vec<usize>, seed: u64) -> Self {
        PlantedInteractions {
            field_sizes,
            interactions: vec![Interaction {
                fields: vec![0, 1],
                weight: 1.0,
            }],
            noise: 0.0,
            seed,
        }
    }

    /// Interactions of orders 2, 3 and 4 over the first four fields, plus a
    /// weak first-order term on every field.
    pub fn up_to_order_four(field_sizes: Vec<usize>, noise: f64, seed: u64) -> Self {
        let mut interactions: Vec<Interaction> = (0..field_sizes.len())
            .map(|f| Interaction {
                fields: vec![f],
                weight: 0.3,
            })
            .collect();
        interactions.extend([
            Interaction {
                fields: vec![0, 1],
                weight: 1.0,
            },
            Interaction {
                fields: vec![1, 2, 3],
                weight: 1.0,
            },
            Interaction {
                fields: vec![0, 2, 3, 4],
                weight: 1.5,
            },
        ]);
        PlantedInteractions {
            field_sizes,
            interactions,
            noise,
            seed,
        }
    }

    fn values(&self) -> Vec<Vec<f64>> {
        self.field_sizes
            .iter()
            .enumerate()
            .map(|(f, &n)| {
                let mut rng = seed::rng(self.seed, "planted-values", &[f as u64]);
                (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
            })
            .collect()
    }

    pub fn generate(&self, n: usize) -> EncodedDataset {
        let values = self.values();
        let mut rng = seed::rng(self.seed, "planted-rows", &[n as u64]);
        let mut rows = Vec::with_capacity(n);
        let mut scores = Vec::with_capacity(n);
        for _ in 0..n {
            let idx: Vec<u32> = self.field_sizes.iter().map(|&s| rng.gen_range(0..s) as u32).collect();
            let mut score: f64 = self
                .interactions
                .iter()
                .map(|it| it.weight * it.fields.iter().map(|&f| values[f][idx[f] as usize]).product::<f64>())
                .sum();
            if self.noise > 0.0 {
                let u: f64 = rng.gen_range(1e-12..1.0 - 1e-12);
                score += self.noise * (u / (1.0 - u)).ln();
            }
            rows.push(idx);
            scores.push(score);
        }
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted.get(n / 2).copied().unwrap_or(0.0);
        let mut ds = EncodedDataset::new(self.field_sizes.len());
        for (indices, s) in rows.into_iter().zip(scores) {
            ds.push(&EncodedInstance {
                indices,
                label: u8::from(s > median),
            });
        }
        ds
    }
}

/// `k` orthonormal rows of width `d` (Gram–Schmidt on random vectors).
fn orthonormal_rows(k: usize, d: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((k, d));
    let mut i = 0;
    while i < k {
        let mut v: Array1<f64> = Array1::from_shape_fn(d, |_| rng.gen_range(-1.0..1.0));
        for j in 0..i {
            let u = out.row(j);
            let proj = v.dot(&u);
            v.scaled_add(-proj, &u);
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-6 {
            out.row_mut(i).assign(&(v / norm));
            i += 1;
        }
    }
    out
}

/// Tables whose rows are `μ_f + U_f V_f + noise`, with `V_f` holding `r_f`
/// orthonormal directions, so each centered table has effective rank `r_f`.
pub fn planted_rank_tables(rows: &[usize], dim: usize, ranks: &[usize], noise: f64, seed: u64) -> EmbeddingTables {
    assert_eq!(rows.len(), ranks.len());
    let tables = rows
        .iter()
        .zip(ranks)
        .enumerate()
        .map(|(f, (&n, &r))| {
            let mut rng = seed::rng(seed, "planted-rank", &[f as u64]);
            let basis = orthonormal_rows(r, dim, &mut rng);
            let coeffs = Array2::from_shape_fn((n, r), |_| rng.gen_range(-1.0..1.0));
            let mean = Array1::from_shape_fn(dim, |_| rng.gen_range(-1.0..1.0));
            let mut t = coeffs.dot(&basis) + &mean;
            t.mapv_inplace(|v| v + noise * rng.gen_range(-1.0..1.0));
            t
        })
        .collect();
    EmbeddingTables { tables }
}

/// Vocabulary sizes of the 39 Criteo fields (I1..I13, C1..C26) after the
/// usual frequency-threshold preprocessing.
pub const CRITEO_FIELD_SIZES: [usize; 39] = [
    49, 101, 126, 45, 223, 118, 84, 76, 95, 9, 30, 40, 75, 1458, 555, 193_949, 138_801, 306, 19, 11_970, 634, 4,
    42_646, 5178, 192_773, 3175, 27, 11_422, 181_075, 11, 4654, 2032, 5, 189_657, 18, 16, 59_697, 86, 45_571,
];

/// Published FDO dimensions for those fields at 95% information.
pub const CRITEO_FDO_DIMS_95: [usize; 39] = [
    5, 13, 7, 4, 13, 9, 8, 5, 9, 4, 3, 4, 4, 12, 12, 4, 8, 10, 6, 14, 11, 2, 15, 14, 2, 13, 4, 13, 5, 5, 12, 11, 3,
    5, 5, 7, 11, 5, 10,
];

/// Published FDO dimensions at 80% information.
pub const CRITEO_FDO_DIMS_80: [usize; 39] = [
    2, 8, 3, 2, 7, 4, 3, 2, 3, 2, 2, 2, 2, 8, 5, 3, 5, 6, 4, 10, 6, 2, 10, 10, 2, 9, 3, 9, 4, 4, 8, 7, 2, 2, 4, 4,
    8, 3, 6,
];

/// Field declarations in Criteo layout: 13 numeric then 26 categorical.
pub fn criteo_decls() -> Vec<FieldDecl> {
    (0..13)
        .map(|i| FieldDecl {
            name: format!("I{}", i + 1),
            kind: FieldKind::Numeric,
        })
        .chain((0..26).map(|i| FieldDecl {
            name: format!("C{}", i + 1),
            kind: FieldKind::Categorical,
        }))
        .collect()
}

/// Raw records shaped like Criteo: skewed integer counts with some missing
/// cells, and categorical hashes drawn from Zipf-like vocabularies.
pub fn criteo_like_records(n: usize, seed: u64) -> Vec<RawRecord> {
    let mut rng = seed::rng(seed, "criteo-like", &[]);
    (0..n)
        .map(|_| {
            let mut values = Vec::with_capacity(39);
            for i in 0..13 {
                if rng.gen_bool(0.1) {
                    values.push(String::new());
                } else {
                    let scale = 2f64.powi(i % 7 + 1);
                    let u: f64 = rng.gen_range(0.0..1.0);
                    values.push(format!("{}", ((scale / (u + 0.01)) as i64) - 1));
                }
            }
            for c in 0..26u32 {
                let vocab = 5 + 40 * c as usize;
                let u: f64 = rng.gen_range(0.0..1.0);
                let tok = ((u * u * u) * vocab as f64) as usize;
                values.push(if rng.gen_bool(0.03) {
                    String::new()
                } else {
                    format!("{:08x}", (c as usize * 1_000_003 + tok) as u32)
                });
            }
            RawRecord {
                label: if rng.gen_bool(0.26) { "1" } else { "0" }.to_string(),
                values,
            }
        })
        .collect()
}
