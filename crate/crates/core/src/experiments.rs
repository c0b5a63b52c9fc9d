//! End-to-end experiment drivers: cross-depth stability on planted data and
//! the Frappe benchmark run.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::crossnet::GateMode;
use crate::error::{Error, Result};
use crate::features::{self, EncodedDataset, FieldDecl, FieldKind, RawRecord, SplitRatios};
use crate::model::{Model, Topology, Variant};
use crate::synthetic::PlantedInteractions;
use crate::training::{self, evaluate, TrainConfig};

#[derive(Debug, Clone)]
pub struct DepthConfig {
    pub rows: usize,
    pub field_sizes: Vec<usize>,
    pub noise: f64,
    pub dim: usize,
    pub depths: Vec<usize>,
    /// Gate modes to compare at every depth.
    pub gate_modes: Vec<GateMode>,
    pub train: TrainConfig,
    pub data_seed: u64,
}

impl Default for DepthConfig {
    fn default() -> Self {
        DepthConfig {
            rows: 50_000,
            field_sizes: vec![20; 6],
            noise: 0.1,
            dim: 6,
            depths: vec![2, 8],
            gate_modes: vec![GateMode::Learned, GateMode::AllOnes],
            train: TrainConfig {
                learning_rate: 3e-3,
                batch_size: 512,
                max_epochs: 50,
                record_timing: false,
                ..Default::default()
            },
            data_seed: 2023,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthRow {
    pub gate_mode: GateMode,
    pub layers: usize,
    pub best_val_auc: f64,
    pub best_epoch: usize,
    pub epochs: usize,
    pub seconds: f64,
}

/// Planted data with interactions up to order four, split 80/10/10.
pub fn planted_splits(cfg: &DepthConfig) -> (EncodedDataset, EncodedDataset, EncodedDataset) {
    let all = PlantedInteractions::up_to_order_four(cfg.field_sizes.clone(), cfg.noise, cfg.data_seed).generate(cfg.rows);
    let [a, b, c] = features::split_indices(all.len(), SplitRatios::default(), cfg.data_seed)
        .expect("default ratios are valid");
    (all.subset(&a), all.subset(&b), all.subset(&c))
}

/// Trains a GCN-only model per (gate mode, depth) and records its best
/// validation AUC.
pub fn depth_stability(cfg: &DepthConfig) -> Result<Vec<DepthRow>> {
    let (train, valid, _) = planted_splits(cfg);
    let mut rows = Vec::new();
    for &gate_mode in &cfg.gate_modes {
        for &layers in &cfg.depths {
            let mut t = Topology::new(Variant::GcnOnly, cfg.field_sizes.clone());
            t.dims = vec![cfg.dim; cfg.field_sizes.len()];
            t.cross_layers = layers;
            t.gate_mode = gate_mode;
            let started = Instant::now();
            let out = training::train(Model::init(t, cfg.train.seed)?, &train, &valid, &cfg.train)?;
            let best_epoch = out.best_epoch.unwrap_or(0);
            let best_val_auc = evaluate(&out.model, &valid)?
                .auc
                .ok_or_else(|| Error::UndefinedMetric("validation split has one class".into()))?;
            rows.push(DepthRow {
                gate_mode,
                layers,
                best_val_auc,
                best_epoch,
                epochs: out.log.len(),
                seconds: started.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(rows)
}

pub fn depth_table(rows: &[DepthRow]) -> String {
    let mut s = String::from("| gates | L_c | val AUC | best epoch | epochs | seconds |\n|---|---|---|---|---|---|\n");
    for r in rows {
        let gates = match r.gate_mode {
            GateMode::Learned => "learned",
            GateMode::AllOnes => "off",
        };
        let _ = writeln!(
            s,
            "| {gates} | {} | {:.4} | {} | {} | {:.1} |",
            r.layers, r.best_val_auc, r.best_epoch, r.epochs, r.seconds
        );
    }
    s
}

/// Reads a libFM-format file (`label idx:1 idx:1 …`) as raw records whose
/// `f`-th value is the `f`-th feature id on the line. Labels ≤ 0 become 0.
pub fn read_libfm(path: &Path) -> Result<Vec<RawRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut width = None;
    for (row, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(label) = parts.next() else { continue };
        let y: f64 = label.parse().map_err(|_| Error::Encode {
            row,
            message: format!("bad label `{label}`"),
        })?;
        let values: Vec<String> = parts
            .map(|p| p.split(':').next().unwrap_or(p).to_string())
            .collect();
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Arity {
                    position: row,
                    expected: w,
                    found: values.len(),
                })
            }
            _ => {}
        }
        out.push(RawRecord {
            label: if y > 0.0 { "1" } else { "0" }.into(),
            values,
        });
    }
    Ok(out)
}

pub fn libfm_decls(fields: usize) -> Vec<FieldDecl> {
    (0..fields)
        .map(|f| FieldDecl {
            name: format!("field{f}"),
            kind: FieldKind::Categorical,
        })
        .collect()
}

/// Test AUC of one Frappe run at the default protocol for `variant`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrappeResult {
    pub variant: Variant,
    pub seed: u64,
    pub test_auc: f64,
    pub test_logloss: f64,
    pub epochs: usize,
}

/// Pools `frappe.{train,validation,test}.libfm` from `dir`, re-splits them
/// 80/10/10 with `seed`, and trains `variant` with the default topology.
pub fn frappe_run(dir: &Path, variant: Variant, seed: u64, max_epochs: usize) -> Result<FrappeResult> {
    let mut records = Vec::new();
    for part in ["train", "validation", "test"] {
        records.extend(read_libfm(&dir.join(format!("frappe.{part}.libfm")))?);
    }
    let fields = records.first().map_or(0, |r| r.values.len());
    let decls = libfm_decls(fields);
    let [a, b, c] = features::split_indices(records.len(), SplitRatios::default(), seed)?;
    let schema = features::build_schema(&decls, a.iter().map(|&i| &records[i]), 1)?;
    let encode = |ids: &[usize]| {
        let part: Vec<RawRecord> = ids.iter().map(|&i| records[i].clone()).collect();
        EncodedDataset::encode(&part, &schema)
    };
    let (train, valid, test) = (encode(&a)?, encode(&b)?, encode(&c)?);
    let cfg = TrainConfig {
        seed,
        max_epochs,
        record_timing: false,
        ..Default::default()
    };
    let model = Model::init(Topology::new(variant, schema.field_sizes()), seed)?;
    let out = training::train(model, &train, &valid, &cfg)?;
    let m = evaluate(&out.model, &test)?;
    Ok(FrappeResult {
        variant,
        seed,
        test_auc: m.auc.unwrap_or(f64::NAN),
        test_logloss: m.logloss,
        epochs: out.log.len(),
    })
}
