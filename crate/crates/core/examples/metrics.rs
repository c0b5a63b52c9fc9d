//! AUC with ties and LogLoss anchors.

use gdcn::model::{logloss, mean_logloss};
use gdcn::training::auc;

fn main() -> gdcn::Result<()> {
    let scores = [0.9, 0.7, 0.7, 0.4, 0.2, 0.7];
    let labels = [1, 1, 0, 1, 0, 0];
    // 9 positive/negative pairs: 5 ordered, 2 tied, 2 reversed
    println!("AUC {} (expected 6/9 = {:.6})", auc(&scores, &labels)?, 6.0 / 9.0);

    println!("LogLoss at 0.5: {:.6} (ln 2 = {:.6})", logloss(0.5, 1)?.0, 2f64.ln());
    let stream: Vec<u8> = (0..3000).map(|i| u8::from(i % 3 == 0)).collect();
    println!("base-rate LogLoss at 1/3 positives: {:.6}", mean_logloss(&vec![1.0 / 3.0; 3000], &stream)?);
    Ok(())
}
