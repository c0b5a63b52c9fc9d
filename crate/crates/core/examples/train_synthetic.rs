//! Trains GDCN-P on planted interactions and reports test metrics.
//!
//! cargo run --release --example train_synthetic -- [rows] [epochs]

use gdcn::experiments::{planted_splits, DepthConfig};
use gdcn::model::{Model, Topology, Variant};
use gdcn::training::{evaluate, train, TrainConfig};

fn main() -> gdcn::Result<()> {
    let mut args = std::env::args().skip(1);
    let rows: usize = args.next().map_or(Ok(20_000), |s| s.parse()).map_err(|_| gdcn::Error::config("rows"))?;
    let epochs: usize = args.next().map_or(Ok(10), |s| s.parse()).map_err(|_| gdcn::Error::config("epochs"))?;

    let data = DepthConfig {
        rows,
        ..Default::default()
    };
    let (tr, va, te) = planted_splits(&data);

    let mut t = Topology::new(Variant::Parallel, data.field_sizes.clone());
    t.dims = vec![8; t.field_sizes.len()];
    t.dnn_widths = vec![64, 32];
    t.dropout = 0.1;
    let cfg = TrainConfig {
        learning_rate: 3e-3,
        batch_size: 256,
        max_epochs: epochs,
        ..Default::default()
    };

    let out = train(Model::init(t, cfg.seed)?, &tr, &va, &cfg)?;
    for r in &out.log {
        println!(
            "epoch {:>2} lr {:.0e} train {:.4} val {:.4} auc {:.4}",
            r.epoch,
            r.lr,
            r.train_logloss,
            r.val_logloss,
            r.val_auc.unwrap_or(f64::NAN)
        );
    }
    let m = evaluate(&out.model, &te)?;
    println!(
        "best epoch {:?}: test AUC {:.4}, LogLoss {:.4} on {} rows",
        out.best_epoch,
        m.auc.unwrap_or(f64::NAN),
        m.logloss,
        m.n
    );
    Ok(())
}
