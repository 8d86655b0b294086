//! Area under the ROC curve from anomaly scores (higher = more anomalous).

/// Mann–Whitney estimate: the probability that a random positive outscores
/// a random negative, ties counting one half. `None` when either side is
/// empty or a score is NaN.
pub fn auroc(positives: &[f64], negatives: &[f64]) -> Option<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return None;
    }
    if positives.iter().chain(negatives).any(|s| s.is_nan()) {
        return None;
    }
    let mut all: Vec<(f64, bool)> = positives
        .iter()
        .map(|&s| (s, true))
        .chain(negatives.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    // positives beating negatives = Σ over groups of equal scores
    let (mut wins, mut neg_below) = (0.0, 0usize);
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0usize, 0usize);
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        wins += pos as f64 * (neg_below as f64 + 0.5 * neg as f64);
        neg_below += neg;
        i = j;
    }
    Some(wins / (positives.len() as f64 * negatives.len() as f64))
}
