//! Field-level dimension selection on embeddings with known rank, then the
//! parameter accounting of the published Criteo dims.

use gdcn::fdo::{fdo_plan, param_count, SpectrumConfig};
use gdcn::synthetic::{planted_rank_tables, CRITEO_FDO_DIMS_80, CRITEO_FDO_DIMS_95, CRITEO_FIELD_SIZES};

fn main() -> gdcn::Result<()> {
    let ranks = [1, 2, 3, 4, 5, 8];
    let tables = planted_rank_tables(&[300, 250, 400, 200, 500, 350], 16, &ranks, 1e-3, 7);
    let report = fdo_plan(&tables, &[0.999, 0.95, 0.8], SpectrumConfig::default(), "planted")?;

    println!("planted ranks {ranks:?}");
    for s in &report.summaries {
        println!(
            "ratio {:<5} dims {:?}  embedding params {} (avg dim {:.2})",
            s.ratio, s.dims, s.params.embedding_params, s.params.weighted_avg_dim
        );
    }
    let top: Vec<String> = report.fields[5].singular_values.iter().take(10).map(|v| format!("{v:.3}")).collect();
    println!("field 5 leading singular values: {}", top.join(" "));

    for (label, dims) in [("95%", &CRITEO_FDO_DIMS_95), ("80%", &CRITEO_FDO_DIMS_80)] {
        let p = param_count(&CRITEO_FIELD_SIZES, dims)?;
        println!(
            "Criteo {label}: {} features, {} embedding params, weighted dim {:.3}, mean dim {:.3}",
            p.total_features, p.embedding_params, p.weighted_avg_dim, p.arithmetic_avg_dim
        );
    }
    let full = param_count(&CRITEO_FIELD_SIZES, &[16; 39])?;
    println!("Criteo at dim 16: {} embedding params", full.embedding_params);
    Ok(())
}
