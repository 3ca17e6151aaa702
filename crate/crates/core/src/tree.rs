//! One-dimensional best-first regression tree, used to place initial
//! threshold biases at variance-reducing cut points.

/// Split thresholds of a variance-reduction regression tree fitted to
/// `(x, y)` and grown best-first to at most `max_leaves` leaves.
///
/// Cuts are midpoints between adjacent distinct sorted `x` values and are
/// returned in the order the tree discovered them (largest gain first).
pub fn tree_thresholds(x: &[f64], y: &[f64], max_leaves: usize) -> Vec<f64> {
    assert_eq!(x.len(), y.len(), "x and y must have equal length");
    if x.len() < 2 || max_leaves < 2 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]).then(i.cmp(&j)));
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let mut sum = vec![0.0; xs.len() + 1];
    let mut sq = vec![0.0; xs.len() + 1];
    for (k, &i) in order.iter().enumerate() {
        sum[k + 1] = sum[k] + y[i];
        sq[k + 1] = sq[k] + y[i] * y[i];
    }
    let total_sse = sq[xs.len()] - sum[xs.len()] * sum[xs.len()] / xs.len() as f64;
    let tol = 1e-12 * (1.0 + total_sse.abs());

    let best_split = |lo: usize, hi: usize| -> Option<(f64, usize)> {
        let n = (hi - lo) as f64;
        let s = sum[hi] - sum[lo];
        let base = s * s / n;
        let mut best: Option<(f64, usize)> = None;
        for k in lo + 1..hi {
            if xs[k - 1] >= xs[k] {
                continue;
            }
            let sl = sum[k] - sum[lo];
            let sr = s - sl;
            let gain = sl * sl / (k - lo) as f64 + sr * sr / (hi - k) as f64 - base;
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, k));
            }
        }
        best.filter(|&(g, _)| g > tol)
    };

    // frontier of splittable leaves: (gain, cut position, lo, hi)
    let mut frontier: Vec<(f64, usize, usize, usize)> = Vec::new();
    if let Some((g, k)) = best_split(0, xs.len()) {
        frontier.push((g, k, 0, xs.len()));
    }
    let mut cuts = Vec::new();
    let mut leaves = 1;
    while leaves < max_leaves && !frontier.is_empty() {
        let mut pick = 0;
        for (idx, f) in frontier.iter().enumerate() {
            if f.0 > frontier[pick].0 {
                pick = idx;
            }
        }
        let (_, k, lo, hi) = frontier.remove(pick);
        cuts.push(0.5 * (xs[k - 1] + xs[k]));
        leaves += 1;
        for (a, b) in [(lo, k), (k, hi)] {
            if let Some((g, kk)) = best_split(a, b) {
                frontier.push((g, kk, a, b));
            }
        }
    }
    cuts
}

/// `count` evenly spaced interior points of [0, 1]: i/(count+1).
pub fn uniform_grid(count: usize) -> Vec<f64> {
    (1..=count).map(|i| i as f64 / (count + 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_function_split_found_first() {
        let x: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| if v > 0.3 { 1.0 } else { 0.0 }).collect();
        let cuts = tree_thresholds(&x, &y, 6);
        assert!(!cuts.is_empty());
        // brute force oracle over all midpoints
        let mut best = (f64::NEG_INFINITY, 0.0);
        for k in 1..x.len() {
            let (l, r) = y.split_at(k);
            let sse = |v: &[f64]| {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                v.iter().map(|t| (t - m).powi(2)).sum::<f64>()
            };
            let score = -(sse(l) + sse(r));
            if score > best.0 {
                best = (score, 0.5 * (x[k - 1] + x[k]));
            }
        }
        assert_eq!(cuts[0], best.1);
        assert!((cuts[0] - 0.3).abs() < 0.01);
    }

    #[test]
    fn constant_feature_has_no_splits() {
        let x = vec![0.4; 20];
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert!(tree_thresholds(&x, &y, 6).is_empty());
    }

    #[test]
    fn leaf_budget_respected() {
        let x: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 12.0).sin()).collect();
        assert!(tree_thresholds(&x, &y, 6).len() <= 5);
        assert!(tree_thresholds(&x, &y, 1).is_empty());
    }

    #[test]
    fn grid_is_interior() {
        assert_eq!(uniform_grid(3), vec![0.25, 0.5, 0.75]);
        assert!(uniform_grid(0).is_empty());
    }
}
