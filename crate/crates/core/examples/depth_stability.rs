//! Cross-depth sweep on planted order-4 interactions.
//!
//! cargo run --release --example depth_stability -- [rows] [depths,…]

use gdcn::experiments::{depth_stability, depth_table, DepthConfig};

fn main() -> gdcn::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = DepthConfig::default();
    if let Some(rows) = args.next() {
        cfg.rows = rows.parse().map_err(|_| gdcn::Error::config("rows must be an integer"))?;
    }
    if let Some(depths) = args.next() {
        cfg.depths = depths
            .split(',')
            .map(|d| d.parse().map_err(|_| gdcn::Error::config("bad depth")))
            .collect::<gdcn::Result<_>>()?;
    }
    let rows = depth_stability(&cfg)?;
    print!("{}", depth_table(&rows));
    Ok(())
}
