//! Builds a thresholded schema over Criteo-shaped synthetic rows and
//! encodes them.
//!
//! cargo run --release --example preprocess -- [rows] [threshold]

use gdcn::features::{build_schema, split_dataset, EncodedDataset, SplitRatios};
use gdcn::synthetic::{criteo_decls, criteo_like_records};

fn main() -> gdcn::Result<()> {
    let mut args = std::env::args().skip(1);
    let rows: usize = args.next().map_or(Ok(20_000), |s| s.parse()).map_err(|_| gdcn::Error::config("rows"))?;
    let threshold: u64 = args.next().map_or(Ok(10), |s| s.parse()).map_err(|_| gdcn::Error::config("threshold"))?;

    let decls = criteo_decls();
    let records = criteo_like_records(rows, 2023);
    let (train, valid, test) = split_dataset(&records, SplitRatios::default(), 2023)?;
    let schema = build_schema(&decls, &train, threshold)?;

    let sizes = schema.field_sizes();
    println!("{} fields, {} features after threshold {threshold}", sizes.len(), sizes.iter().sum::<usize>());
    for (d, size) in decls.iter().zip(&sizes).take(6) {
        println!("  {:<4} {:?} vocabulary {size}", d.name, d.kind);
    }

    for (name, part) in [("train", &train), ("valid", &valid), ("test", &test)] {
        let ds = EncodedDataset::encode(part, &schema)?;
        println!("{name}: {} rows, positive rate {:.3}", ds.len(), ds.positive_rate());
    }
    println!("schema digest {}", schema.digest());
    Ok(())
}
