mod common;

use gdcn::fdo::{self, choose_dim, param_count, singular_values, Energy, SpectrumConfig};
use gdcn::synthetic::{planted_rank_tables, CRITEO_FDO_DIMS_80, CRITEO_FDO_DIMS_95, CRITEO_FIELD_SIZES};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RATIOS: [f64; 7] = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.98];

#[test]
fn jacobi_matches_centered_gram_oracle_up_to_8x8() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst: f64 = 0.0;
    for rows in 1..=8 {
        for cols in 1..=8 {
            for _ in 0..5 {
                let m: Vec<Vec<f64>> = (0..rows)
                    .map(|_| (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect();
                let a = Array2::from_shape_fn((rows, cols), |(i, j)| m[i][j]);
                let ours = singular_values(a.view(), true);
                let oracle = common::centered_gram_singular_values(&m);
                assert_eq!(ours.len(), oracle.len());
                for (x, y) in ours.iter().zip(&oracle) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
    }
    assert!(worst <= 1e-10, "max deviation {worst:e}");
}

#[test]
fn choose_dim_is_monotone_in_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=32);
        let mut s: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0f64).powi(3)).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        for energy in [Energy::Squared, Energy::Linear] {
            let dims: Vec<usize> = RATIOS.iter().map(|&r| choose_dim(&s, r, energy)).collect();
            violations += dims.windows(2).filter(|w| w[0] > w[1]).count();
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn planted_ranks_are_recovered() {
    let ranks = [1, 2, 3, 4, 5];
    let tables = planted_rank_tables(&[300, 250, 400, 200, 500], 16, &ranks, 1e-4, 3);
    let report = fdo::fdo_plan(&tables, &[0.999], SpectrumConfig::default(), "planted").unwrap();
    assert_eq!(report.summaries[0].dims, ranks.to_vec());
}

#[test]
fn full_ratio_keeps_nonzero_rank() {
    let tables = planted_rank_tables(&[50, 60], 8, &[2, 6], 0.0, 9);
    let report = fdo::fdo_plan(&tables, &[1.0], SpectrumConfig::default(), "").unwrap();
    // trailing round-off is far below one ulp of the total energy
    let sv = &report.fields[0].singular_values;
    assert!(sv[2] < 1e-12 * sv[0]);
    assert_eq!(report.fields[0].dims[0], 2);
    assert_eq!(report.fields[1].dims[0], 6);
}

#[test]
fn published_dims_give_published_averages() {
    let p = param_count(&CRITEO_FIELD_SIZES, &CRITEO_FDO_DIMS_95).unwrap();
    assert_eq!(p.total_features, 1_086_810);
    assert!((p.weighted_avg_dim - 5.92).abs() <= 0.005, "{}", p.weighted_avg_dim);
    assert!((p.arithmetic_avg_dim - 7.87).abs() <= 0.005, "{}", p.arithmetic_avg_dim);
    let p80 = param_count(&CRITEO_FIELD_SIZES, &CRITEO_FDO_DIMS_80).unwrap();
    assert!((p80.weighted_avg_dim - 3.98).abs() <= 0.005, "{}", p80.weighted_avg_dim);
    // the 80% dims average to 186/39, not the 4.85 printed alongside them
    assert_eq!(p80.arithmetic_avg_dim, 186.0 / 39.0);
}

#[test]
fn fewer_dims_fewer_params() {
    let sizes = CRITEO_FIELD_SIZES;
    let p16 = param_count(&sizes, &[16; 39]).unwrap();
    let p95 = param_count(&sizes, &CRITEO_FDO_DIMS_95).unwrap();
    let p80 = param_count(&sizes, &CRITEO_FDO_DIMS_80).unwrap();
    assert!(p80.embedding_params < p95.embedding_params && p95.embedding_params < p16.embedding_params);
    assert_eq!(p16.weighted_avg_dim, 16.0);
}
