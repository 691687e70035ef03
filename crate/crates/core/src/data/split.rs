use serde::{Deserialize, Serialize};

use super::{ClassLabel, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::rng::Prng;

/// Fold assignment for every sample index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    k: usize,
    assignment: Vec<usize>,
}

impl FoldSplit {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Held-out indices of `fold`, ascending.
    pub fn eval_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    /// Indices of every other fold, ascending.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }
}

/// Per-class shuffle, then round-robin deal into `k` folds.
///
/// Classes are dealt in label order from one seeded stream. Each class
/// resumes dealing at the fold after the one where the previous class
/// stopped, so fold totals stay within one of each other as well.
pub fn stratified_kfold(labels: &[ClassLabel], k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("k must be >= 2, got {k}")));
    }
    let mut by_class: [Vec<usize>; NUM_CLASSES] = Default::default();
    for (i, l) in labels.iter().enumerate() {
        by_class[l.index()].push(i);
    }
    for label in ClassLabel::ALL {
        let count = by_class[label.index()].len();
        if count < k {
            return Err(Error::InsufficientClassSamples {
                class: label,
                count,
                k,
            });
        }
    }

    let mut rng = Prng::new(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next_fold = 0;
    for members in by_class.iter_mut() {
        rng.shuffle(members);
        for &idx in members.iter() {
            assignment[idx] = next_fold;
            next_fold = (next_fold + 1) % k;
        }
    }
    Ok(FoldSplit { k, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ClassLabel::MidLatePd;

    fn labels_from_counts(counts: [usize; 3]) -> Vec<ClassLabel> {
        ClassLabel::ALL
            .iter()
            .zip(counts)
            .flat_map(|(&l, n)| std::iter::repeat_n(l, n))
            .collect()
    }

    fn per_fold_class_counts(labels: &[ClassLabel], split: &FoldSplit) -> Vec<[usize; 3]> {
        let mut out = vec![[0; 3]; split.k()];
        for (l, &f) in labels.iter().zip(split.assignment()) {
            out[f][l.index()] += 1;
        }
        out
    }

    #[test]
    fn exact_divisibility() {
        let labels = labels_from_counts([9, 3, 3]);
        let split = stratified_kfold(&labels, 3, 1).unwrap();
        assert_eq!(per_fold_class_counts(&labels, &split), vec![[3, 1, 1]; 3]);
    }

    #[test]
    fn partition_contract() {
        let labels = labels_from_counts([10, 4, 3]);
        let split = stratified_kfold(&labels, 3, 8).unwrap();
        let mut seen: Vec<usize> = (0..3).flat_map(|f| split.eval_indices(f)).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..labels.len()).collect::<Vec<_>>());
        for f in 0..3 {
            let eval = split.eval_indices(f);
            let train = split.train_indices(f);
            assert!(!eval.is_empty());
            assert_eq!(eval.len() + train.len(), labels.len());
            assert!(eval.iter().all(|i| !train.contains(i)));
        }
    }

    #[test]
    fn uneven_counts_match_enumeration() {
        // Enumerate the dealing rule's size profile: a class of n samples
        // over k folds yields n % k folds of ceil(n / k), the rest floor.
        let counts = [10, 4, 3];
        let labels = labels_from_counts(counts);
        for seed in 0..10 {
            let split = stratified_kfold(&labels, 3, seed).unwrap();
            let table = per_fold_class_counts(&labels, &split);
            for c in 0..3 {
                let mut sizes: Vec<usize> = table.iter().map(|row| row[c]).collect();
                sizes.sort_unstable();
                let n = counts[c];
                let mut want: Vec<usize> = (0..3).map(|f| n / 3 + usize::from(f < n % 3)).collect();
                want.sort_unstable();
                assert_eq!(sizes, want, "class {c}, seed {seed}");
            }
        }
        let split = stratified_kfold(&labels, 3, 0).unwrap();
        let mut class0: Vec<usize> = per_fold_class_counts(&labels, &split)
            .iter()
            .map(|r| r[0])
            .collect();
        class0.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(class0, vec![4, 3, 3]);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let labels = labels_from_counts([40, 30, 30]);
        let a = stratified_kfold(&labels, 5, 7).unwrap();
        assert_eq!(a, stratified_kfold(&labels, 5, 7).unwrap());
        let b = stratified_kfold(&labels, 5, 8).unwrap();
        assert_ne!(a, b);
        assert_eq!(
            per_fold_class_counts(&labels, &a),
            per_fold_class_counts(&labels, &b)
        );
    }

    #[test]
    fn too_few_samples_names_the_class() {
        let labels = labels_from_counts([10, 10, 4]);
        match stratified_kfold(&labels, 5, 0) {
            Err(Error::InsufficientClassSamples { class, count, k }) => {
                assert_eq!((class, count, k), (MidLatePd, 4, 5));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(stratified_kfold(&labels, 1, 0).is_err());
    }

    #[test]
    fn order_of_input_does_not_change_profile() {
        let mut labels = labels_from_counts([12, 7, 6]);
        labels.reverse();
        let split = stratified_kfold(&labels, 5, 3).unwrap();
        for row in per_fold_class_counts(&labels, &split) {
            assert!(row[0] >= 2 && row[0] <= 3);
            assert!(row[1] >= 1 && row[1] <= 2);
            assert!(row[2] >= 1 && row[2] <= 2);
        }
    }
}
