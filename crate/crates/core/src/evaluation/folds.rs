//! Class-stratified k-fold partitions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fold id in `0..k` for every row.
///
/// Each class is shuffled with the seeded RNG and dealt round-robin onto the
/// folds; the dealing offset carries over from one class to the next so fold
/// sizes differ by at most one overall. Classes with fewer than `k` members
/// are still dealt, leaving some folds without them.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Vec<usize> {
    assert!(k >= 1, "need at least one fold");
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        members[y].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; labels.len()];
    let mut next = 0;
    for (class, rows) in members.iter_mut().enumerate() {
        if rows.is_empty() {
            continue;
        }
        if rows.len() < k {
            log::warn!(
                "class {class} has {} rows, fewer than {k} folds; stratification is partial",
                rows.len()
            );
        }
        rows.shuffle(&mut rng);
        for &i in rows.iter() {
            folds[i] = next;
            next = (next + 1) % k;
        }
    }
    folds
}

/// `(train, test)` row indices for fold `f`.
pub fn fold_split(folds: &[usize], f: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, &g) in folds.iter().enumerate() {
        if g == f {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    (train, test)
}
