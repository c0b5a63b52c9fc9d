//! Static and dynamic interpretation of a GCN trained on planted data:
//! block norms of the first cross matrix, one instance's gates, and mean
//! field importance.

use gdcn::experiments::{planted_splits, DepthConfig};
use gdcn::interpret::{aggregate_importance, block_norms, gate_profile};
use gdcn::model::{Model, Topology, Variant};
use gdcn::training::{train, TrainConfig};

fn main() -> gdcn::Result<()> {
    let data = DepthConfig {
        rows: 20_000,
        ..Default::default()
    };
    let (tr, va, _) = planted_splits(&data);
    let mut t = Topology::new(Variant::GcnOnly, data.field_sizes.clone());
    t.dims = vec![6; t.field_sizes.len()];
    t.cross_layers = 3;
    let cfg = TrainConfig {
        learning_rate: 3e-3,
        batch_size: 512,
        max_epochs: 8,
        record_timing: false,
        ..Default::default()
    };
    let model = train(Model::init(t, 1)?, &tr, &va, &cfg)?.model;
    let dims = model.topology.cross_block_dims();

    let norms = block_norms(model.cross.layers[0].w_c.view(), &dims)?;
    println!("layer 1 block norms (planted crosses use fields 0 to 3):");
    for row in norms.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:6.3}")).collect();
        println!("  {}", cells.join(" "));
    }

    let profile = gate_profile(&model, va.row(0), 0)?;
    for (l, g) in profile.layers.iter().enumerate() {
        let cells: Vec<String> = g.fieldwise.iter().map(|v| format!("{v:.3}")).collect();
        println!("instance 0, layer {} field gates: {}", l + 1, cells.join(" "));
    }
    let important: Vec<(usize, usize)> = profile.important_fields().into_iter().map(|(l, f)| (l + 1, f)).collect();
    println!("gates above 0.5 at (layer, field): {important:?}");

    for (l, imp) in aggregate_importance(&model, &va, 1000)?.iter().enumerate() {
        let cells: Vec<String> = imp.iter().map(|v| format!("{v:.3}")).collect();
        println!("mean importance, layer {}: {}", l + 1, cells.join(" "));
    }
    Ok(())
}
