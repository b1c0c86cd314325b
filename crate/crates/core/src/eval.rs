//! Label-agreement scores between an inferred segmentation and ground truth.

use pathfinding::matrix::Matrix;
use pathfinding::prelude::kuhn_munkres;

/// `table[p][q]` = frames with predicted id `p` and true id `q`.
pub fn contingency(predicted: &[usize], truth: &[usize]) -> Vec<Vec<i64>> {
    assert_eq!(predicted.len(), truth.len(), "label sequences differ in length");
    let rows = predicted.iter().max().map_or(0, |m| m + 1);
    let cols = truth.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0i64; cols]; rows];
    for (&p, &q) in predicted.iter().zip(truth) {
        table[p][q] += 1;
    }
    table
}

/// One-to-one mapping of predicted ids onto true ids maximizing the number
/// of agreeing frames. Returns `(mapping, matched_frames)` where
/// `mapping[p]` is the true id assigned to `p`, or `None` when `p` is left
/// unmatched because there are more predicted than true ids.
pub fn hungarian_match(predicted: &[usize], truth: &[usize]) -> (Vec<Option<usize>>, usize) {
    let table = contingency(predicted, truth);
    let (rows, cols) = (table.len(), table.first().map_or(0, Vec::len));
    if rows == 0 || cols == 0 {
        return (vec![None; rows], 0);
    }
    let n = rows.max(cols);
    let weights = Matrix::from_fn(n, n, |(p, q)| {
        if p < rows && q < cols {
            table[p][q]
        } else {
            0
        }
    });
    let (total, assignment) = kuhn_munkres(&weights);
    let mapping = (0..rows)
        .map(|p| (assignment[p] < cols).then_some(assignment[p]))
        .collect();
    (mapping, total as usize)
}

/// Fraction of frames whose predicted label agrees with the truth after the
/// optimal one-to-one relabeling.
pub fn matched_accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if predicted.is_empty() {
        return 1.0;
    }
    let (_, matched) = hungarian_match(predicted, truth);
    matched as f64 / predicted.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for i in 0..=p.len() {
                let mut q = p.clone();
                q.insert(i, n - 1);
                out.push(q);
            }
        }
        out
    }

    /// Best agreement over every injective relabeling, by enumeration.
    fn brute_force_matched(predicted: &[usize], truth: &[usize]) -> i64 {
        let table = contingency(predicted, truth);
        let (rows, cols) = (table.len(), table[0].len());
        let n = rows.max(cols);
        permutations(n)
            .iter()
            .map(|perm| {
                (0..rows)
                    .filter(|&p| perm[p] < cols)
                    .map(|p| table[p][perm[p]])
                    .sum::<i64>()
            })
            .max()
            .unwrap()
    }

    #[test]
    fn relabeled_truth_scores_one() {
        let truth = [0, 0, 1, 1, 2, 2, 2];
        let pred = [5, 5, 3, 3, 0, 0, 0];
        assert_eq!(matched_accuracy(&pred, &truth), 1.0);
        let (map, _) = hungarian_match(&pred, &truth);
        assert_eq!(map[5], Some(0));
        assert_eq!(map[3], Some(1));
        assert_eq!(map[1], None);
    }

    #[test]
    fn oversegmentation_is_penalized() {
        let truth = [0, 0, 0, 0];
        let pred = [0, 0, 1, 1];
        assert_eq!(matched_accuracy(&pred, &truth), 0.5);
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            pairs in prop::collection::vec((0usize..5, 0usize..4), 1..60),
        ) {
            let (pred, truth): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let (_, matched) = hungarian_match(&pred, &truth);
            prop_assert_eq!(matched as i64, brute_force_matched(&pred, &truth));
        }
    }
}
