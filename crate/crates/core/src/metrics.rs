//! Rank statistics used in calibration reports.

/// Average ranks (1-based) of the values in descending order; ties share
/// the mean of the ranks they span.
pub fn average_ranks_desc(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
///
/// Returns 0 when either side has no rank variance (all values tied),
/// which keeps means over many small candidate sets well defined.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    if a.len() < 2 {
        return 0.0;
    }
    let ra = average_ranks_desc(a);
    let rb = average_ranks_desc(b);
    pearson(&ra, &rb)
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx) * (xi - mx);
        syy += (yi - my) * (yi - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_agreement() {
        let a = [0.9, 0.5, 0.1];
        let b = [3.0, 2.0, 1.0];
        assert!((spearman(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_disagreement() {
        let a = [0.9, 0.5, 0.1];
        let b = [1.0, 2.0, 3.0];
        assert!((spearman(&a, &b) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_share_average_rank() {
        let ranks = average_ranks_desc(&[2.0, 2.0, 1.0]);
        assert_eq!(ranks, vec![1.5, 1.5, 3.0]);
    }

    #[test]
    fn degenerate_input_is_zero() {
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[3.0, 2.0, 1.0]), 0.0);
        assert_eq!(spearman(&[0.5], &[0.5]), 0.0);
    }

    #[test]
    fn spearman_in_unit_interval() {
        let a = [0.3, 0.9, 0.4, 0.2, 0.8];
        let b = [0.1, 0.7, 0.9, 0.3, 0.5];
        let s = spearman(&a, &b);
        assert!((-1.0..=1.0).contains(&s));
    }
}
