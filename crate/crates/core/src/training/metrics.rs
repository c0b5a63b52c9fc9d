use crate::error::{Error, Result};

/// Area under the ROC curve via the Mann–Whitney rank statistic with
/// mid-ranks for ties.
///
/// The rank sum is kept as an exact doubled integer, so the result is
/// bit-identical to counting `P(s⁺ > s⁻) + ½·P(s⁺ = s⁻)` over all pairs.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l != 0).count() as u128;
    let neg = labels.len() as u128 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the rank sum of positives; a tie group spanning 1-based ranks
    // i..=j gives every member rank (i + j) / 2.
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        let twice_rank = (start + 1 + end + 1) as u128;
        let positives = order[start..=end].iter().filter(|&&i| labels[i] != 0).count() as u128;
        twice_rank_sum += twice_rank * positives;
        start = end + 1;
    }
    let twice_u = twice_rank_sum - pos * (pos + 1);
    Ok(twice_u as f64 / (2 * pos * neg) as f64)
}
