use std::cmp::Ordering;

/// Descending score, then ascending doc id.
pub(crate) fn by_score_then_id(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Top `k` corpus positions by score with the crate-wide tie-break rule,
/// skipping positions for which `exclude` returns true.
pub(crate) fn top_k<F>(scores: &[f64], ids: &[&str], k: usize, exclude: F) -> Vec<(usize, f64)>
where
    F: Fn(usize) -> bool,
{
    let mut candidates: Vec<usize> = (0..scores.len()).filter(|&i| !exclude(i)).collect();
    let cmp = |&a: &usize, &b: &usize| by_score_then_id((scores[a], ids[a]), (scores[b], ids[b]));
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k, cmp);
        candidates.truncate(k);
    }
    candidates.sort_by(cmp);
    candidates.into_iter().map(|i| (i, scores[i])).collect()
}
