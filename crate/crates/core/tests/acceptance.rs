//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so every line reaches stdout. The Frappe
//! benchmark needs the dataset on disk (`GDCN_FRAPPE_DIR`); without it the
//! criterion reports BLOCKED, which fails the run only under
//! `GDCN_ACCEPTANCE_STRICT=1`.

mod common;

use std::path::{Path, PathBuf};

use gdcn::cli::main_with;
use gdcn::crossnet::GateMode;
use gdcn::experiments::{self, DepthConfig};
use gdcn::fdo::{self, choose_dim, param_count, singular_values, Energy, SpectrumConfig};
use gdcn::model::{logloss, mean_logloss, DropoutKey, Model, Topology, Variant};
use gdcn::synthetic::{planted_rank_tables, CRITEO_FDO_DIMS_95, CRITEO_FIELD_SIZES};
use gdcn::training::auc;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Blocked(String),
}

type Criterion = (&'static str, fn() -> Outcome);

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn frappe_benchmark() -> Outcome {
    let Some(dir) = std::env::var_os("GDCN_FRAPPE_DIR").map(PathBuf::from) else {
        return Outcome::Blocked("GDCN_FRAPPE_DIR not set; Frappe libFM files unavailable".into());
    };
    let mut medians = Vec::new();
    for (variant, floor) in [(Variant::Parallel, 0.980), (Variant::GcnOnly, 0.977)] {
        let mut aucs = Vec::new();
        for seed in [2023, 2024, 2025] {
            match experiments::frappe_run(&dir, variant, seed, 100) {
                Ok(r) => aucs.push(r.test_auc),
                Err(e) => return Outcome::Fail(format!("{variant:?} seed {seed}: {e}")),
            }
        }
        medians.push((variant, median(aucs), floor));
    }
    let ok = medians.iter().all(|&(_, m, floor)| m >= floor);
    let detail = medians
        .iter()
        .map(|(v, m, floor)| format!("{v:?} median test AUC {m:.4} (≥ {floor})"))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(ok, detail)
}

fn gradient_check() -> Outcome {
    let cases = [
        (Variant::GcnOnly, vec![3, 5, 4, 6], false, GateMode::Learned),
        (Variant::Stacked, vec![3, 5, 4, 6], false, GateMode::Learned),
        (Variant::Parallel, vec![3, 5, 4, 6], false, GateMode::Learned),
        (Variant::Parallel, vec![2, 4, 3, 5], true, GateMode::Learned),
        (Variant::Stacked, vec![3, 5, 4, 6], false, GateMode::AllOnes),
    ];
    let sizes = [5u32, 4, 6, 3];
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    let mut complete = true;
    for (i, (variant, dims, align, gate)) in cases.into_iter().enumerate() {
        let mut t = Topology::new(variant, sizes.iter().map(|&s| s as usize).collect());
        t.dims = dims;
        t.cross_layers = 3;
        t.dnn_widths = if variant == Variant::GcnOnly { vec![] } else { vec![7, 5] };
        t.dropout = 0.3;
        t.gate_mode = gate;
        t.align = align;
        let mut m = Model::init(t, 11 + i as u64).unwrap();
        common::perturb_for_gradcheck(&mut m, i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64 ^ 0xabc);
        let rows: Vec<Vec<u32>> = (0..6).map(|_| sizes.iter().map(|&s| rng.gen_range(0..s)).collect()).collect();
        let refs: Vec<&[u32]> = rows.iter().map(Vec::as_slice).collect();
        let r = common::check_gradients(&m, &refs, &[1, 0, 1, 1, 0, 0], DropoutKey { seed: 9, step: 4 });
        complete &= r.checked == m.num_params();
        if r.max_rel > worst {
            worst = r.max_rel;
            worst_at = format!("{variant:?} {}", r.worst);
        }
    }
    verdict(
        worst <= 1e-4 && complete,
        format!("max relative error {worst:.2e} over 5 topologies (≤ 1e-4), all parameters checked: {complete}; worst {worst_at}"),
    )
}

fn cn_v2_equivalence() -> Outcome {
    let worst = common::cn_v2_max_deviation(100, 17);
    verdict(worst <= 1e-12, format!("max abs deviation {worst:.2e} on 100 cases (≤ 1e-12)"))
}

fn polynomial_degree() -> Outcome {
    let res = common::polynomial_degree_residuals(&[1, 2, 3], 6, 5);
    let vanish = res.iter().fold(0.0f64, |m, r| m.max(r.1));
    let exact = res.iter().all(|r| r.2 > 1e-6);
    verdict(
        vanish <= 1e-8 && exact,
        format!("max (L+2)-th difference {vanish:.2e} (≤ 1e-8), degree exactly L+1: {exact}"),
    )
}

fn depth_stability() -> Outcome {
    let rows = match experiments::depth_stability(&DepthConfig::default()) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    print!("{}", experiments::depth_table(&rows));
    let auc_at = |mode: GateMode, l: usize| {
        rows.iter()
            .find(|r| r.gate_mode == mode && r.layers == l)
            .map(|r| r.best_val_auc)
            .unwrap()
    };
    let (shallow, deep) = (auc_at(GateMode::Learned, 2), auc_at(GateMode::Learned, 8));
    verdict(
        deep >= shallow - 0.002,
        format!("learned gates: L=8 AUC {deep:.4} vs L=2 AUC {shallow:.4} (drop ≤ 0.002)"),
    )
}

fn fdo_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ratios = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.98];
    let mut violations = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=32);
        let mut s: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0f64).powi(3)).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        let dims: Vec<usize> = ratios.iter().map(|&r| choose_dim(&s, r, Energy::Squared)).collect();
        violations += dims.windows(2).filter(|w| w[0] > w[1]).count();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut oracle_dev: f64 = 0.0;
    for rows in 1..=8 {
        for cols in 1..=8 {
            let m: Vec<Vec<f64>> = (0..rows)
                .map(|_| (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let a = Array2::from_shape_fn((rows, cols), |(i, j)| m[i][j]);
            let ours = singular_values(a.view(), true);
            for (x, y) in ours.iter().zip(common::centered_gram_singular_values(&m)) {
                oracle_dev = oracle_dev.max((x - y).abs());
            }
        }
    }

    let ranks = [1, 2, 3, 4, 5];
    let tables = planted_rank_tables(&[300, 250, 400, 200, 500], 16, &ranks, 1e-4, 3);
    let recovered = fdo::fdo_plan(&tables, &[0.999], SpectrumConfig::default(), "planted")
        .map(|r| r.summaries[0].dims.clone())
        .unwrap_or_default();
    verdict(
        violations == 0 && oracle_dev <= 1e-10 && recovered == ranks,
        format!(
            "{violations} monotonicity violations in 1000 spectra, oracle deviation {oracle_dev:.2e} (≤ 1e-10), planted ranks {ranks:?} recovered as {recovered:?}"
        ),
    )
}

fn parameter_accounting() -> Outcome {
    let p = param_count(&CRITEO_FIELD_SIZES, &CRITEO_FDO_DIMS_95).unwrap();
    verdict(
        (p.weighted_avg_dim - 5.92).abs() <= 0.005 && (p.arithmetic_avg_dim - 7.87).abs() <= 0.005,
        format!(
            "weighted avg dim {:.4} (5.92 ± 0.005), arithmetic avg dim {:.4} (7.87 ± 0.005)",
            p.weighted_avg_dim, p.arithmetic_avg_dim
        ),
    )
}

fn auc_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mismatches = (0..200)
        .filter(|_| {
            let (s, l) = common::random_auc_case(&mut rng);
            auc(&s, &l).ok() != Some(common::pairwise_auc(&s, &l))
        })
        .count();
    verdict(mismatches == 0, format!("{mismatches} of 200 random sets differ from pairwise AUC"))
}

fn logloss_anchors() -> Outcome {
    let half = logloss(0.5, 1).unwrap().0;
    let labels: Vec<u8> = (0..3000).map(|i| u8::from(i % 3 == 0)).collect();
    let ll = mean_logloss(&vec![1.0 / 3.0; labels.len()], &labels).unwrap();
    verdict(
        (half - 2f64.ln()).abs() < 1e-12 && (ll - 0.6365).abs() <= 1e-4,
        format!("LogLoss(0.5) = {half:.15} (ln 2), base-rate stream {ll:.6} (0.6365 ± 1e-4)"),
    )
}

fn run(args: &[&str]) -> i32 {
    main_with(std::iter::once("gdcn").chain(args.iter().copied()))
}

fn train_into(data: &Path, out: &Path) -> i32 {
    let (data, out) = (data.to_str().unwrap(), out.to_str().unwrap());
    run(&[
        "train", "--data", data, "--out", out, "--variant", "gdcn-p", "--dnn", "16,8", "--dim", "4",
        "--cross-layers", "2", "--batch-size", "64", "--max-epochs", "3", "--seed", "7", "--timing", "off",
    ])
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (raw, decl) = common::write_toy_inputs(dir.path(), 600, 3);
    let data = dir.path().join("data");
    let prep = run(&[
        "prep", "--raw", raw.to_str().unwrap(), "--decl", decl.to_str().unwrap(), "--out", data.to_str().unwrap(),
    ]);
    if prep != 0 {
        return Outcome::Fail(format!("prep exited {prep}"));
    }
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let codes = (train_into(&data, &a), train_into(&data, &b));
    if codes != (0, 0) {
        return Outcome::Fail(format!("train exited {codes:?}"));
    }
    let same: Vec<bool> = ["checkpoint.gdcn", "epochs.jsonl"]
        .iter()
        .map(|f| std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap())
        .collect();
    verdict(
        same.iter().all(|&s| s),
        format!("checkpoint identical: {}, epoch log identical: {}", same[0], same[1]),
    )
}

fn main() {
    let strict = std::env::var("GDCN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let criteria: [Criterion; 10] = [
        ("Frappe test AUC", frappe_benchmark),
        ("analytic gradients", gradient_check),
        ("gate-off equals CN-V2", cn_v2_equivalence),
        ("gate-off polynomial degree", polynomial_degree),
        ("depth stability", depth_stability),
        ("FDO dimension selection", fdo_checks),
        ("parameter accounting", parameter_accounting),
        ("exact AUC", auc_exactness),
        ("LogLoss anchors", logloss_anchors),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (tag, detail) = match check() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Blocked(d) => {
                if strict {
                    failed += 1;
                }
                ("BLOCKED", d)
            }
        };
        println!("criterion {:>2} {name}: {tag}: {detail}", i + 1);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
