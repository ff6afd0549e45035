use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffled k-fold partition of `0..n`. The first `n % k` folds hold one extra index.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k-fold needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::InvalidArgument(format!("cannot split {n} items into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut test = order[start..start + size].to_vec();
        let mut train: Vec<usize> = order[..start].iter().chain(&order[start + size..]).copied().collect();
        test.sort_unstable();
        train.sort_unstable();
        folds.push(Fold { train, test });
        start += size;
    }
    Ok(folds)
}

/// Per-class shuffled split holding out `round(test_fraction * class_count)` of each class
/// (at least one when the class has two or more members).
pub fn stratified_split(labels: &[usize], test_fraction: f64, seed: u64) -> Result<Fold> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        let mut n_test = (members.len() as f64 * test_fraction).round() as usize;
        if members.len() >= 2 {
            n_test = n_test.clamp(1, members.len() - 1);
        } else {
            n_test = 0;
        }
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Fold { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn check_partition(n: usize, k: usize, folds: &[Fold]) {
        let mut seen = BTreeSet::new();
        for f in folds {
            for &i in &f.test {
                assert!(seen.insert(i), "index {i} in two test folds");
            }
            let train: BTreeSet<_> = f.train.iter().copied().collect();
            assert!(f.test.iter().all(|i| !train.contains(i)));
            assert_eq!(train.len() + f.test.len(), n);
        }
        assert_eq!(seen, (0..n).collect());
        let sizes: Vec<usize> = folds.iter().map(|f| f.test.len()).collect();
        assert_eq!(folds.len(), k);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn leave_one_out() {
        let folds = kfold_split(10, 10, 3).unwrap();
        check_partition(10, 10, &folds);
        assert!(folds.iter().all(|f| f.test.len() == 1));
    }

    #[test]
    fn uneven_sizes() {
        let folds = kfold_split(101, 10, 7).unwrap();
        check_partition(101, 10, &folds);
        let mut sizes: Vec<usize> = folds.iter().map(|f| f.test.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, [vec![10; 9], vec![11]].concat());
    }

    #[test]
    fn deterministic_by_seed() {
        assert_eq!(kfold_split(50, 5, 1).unwrap(), kfold_split(50, 5, 1).unwrap());
        assert_ne!(kfold_split(50, 5, 1).unwrap(), kfold_split(50, 5, 2).unwrap());
    }

    #[test]
    fn invalid_arguments() {
        assert!(kfold_split(10, 1, 0).is_err());
        assert!(kfold_split(3, 4, 0).is_err());
        assert!(stratified_split(&[0, 1], 0.0, 0).is_err());
    }

    #[test]
    fn stratified_keeps_class_proportions() {
        let labels: Vec<usize> = (0..100).map(|i| usize::from(i < 45)).collect();
        let f = stratified_split(&labels, 0.2, 9).unwrap();
        assert_eq!(f.test.len(), 20);
        assert_eq!(f.test.iter().filter(|&&i| labels[i] == 1).count(), 9);
        assert_eq!(f.train.len() + f.test.len(), 100);
    }

    proptest::proptest! {
        #[test]
        fn folds_always_partition(n in 2usize..300, k in 2usize..20, seed in 0u64..1000) {
            proptest::prop_assume!(n >= k);
            let folds = kfold_split(n, k, seed).unwrap();
            check_partition(n, k, &folds);
        }
    }
}
