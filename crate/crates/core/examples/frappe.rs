//! Frappe benchmark: GDCN-P and GCN at default settings over several seeds.
//!
//! cargo run --release --example frappe -- <dir with frappe.*.libfm> [seeds]

use std::path::PathBuf;

use gdcn::experiments::frappe_run;
use gdcn::model::Variant;

fn main() -> gdcn::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().ok_or_else(|| gdcn::Error::config("usage: frappe <dir> [seeds]"))?);
    let seeds: Vec<u64> = args
        .next()
        .unwrap_or_else(|| "2023,2024,2025".into())
        .split(',')
        .map(|s| s.parse().map_err(|_| gdcn::Error::config("bad seed")))
        .collect::<gdcn::Result<_>>()?;

    for variant in [Variant::Parallel, Variant::GcnOnly] {
        let mut aucs = Vec::new();
        for &seed in &seeds {
            let r = frappe_run(&dir, variant, seed, 100)?;
            println!(
                "{} seed {seed}: test AUC {:.4}, LogLoss {:.4}, {} epochs",
                variant.flag(),
                r.test_auc,
                r.test_logloss,
                r.epochs
            );
            aucs.push(r.test_auc);
        }
        aucs.sort_by(f64::total_cmp);
        println!("{} median AUC {:.4}", variant.flag(), aucs[aucs.len() / 2]);
    }
    Ok(())
}
