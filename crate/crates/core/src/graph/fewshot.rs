use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Gp2fError, Result};
use crate::numerics::SeedStream;

/// Fraction of nodes held out for testing.
pub const TEST_FRACTION: f64 = 0.9;
/// The test pool is drawn once per graph with this seed, shared by all
/// few-shot samplings.
pub const TEST_POOL_SEED: u64 = 0;

/// k-shot training nodes plus the fixed test pool.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotSplit {
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

/// `(test, sampling_pool)` node sets, each sorted ascending.
pub fn test_pool(num_nodes: usize) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..num_nodes).collect();
    SeedStream::new(TEST_POOL_SEED).shuffle(&mut order);
    let n_test = (TEST_FRACTION * num_nodes as f64).floor() as usize;
    let mut test = order[..n_test].to_vec();
    let mut pool = order[n_test..].to_vec();
    test.sort_unstable();
    pool.sort_unstable();
    (test, pool)
}

/// Sample exactly `k` training nodes per class from the 10% pool.
pub fn sample_few_shot(g: &Graph, k: usize, seed: u64) -> Result<FewShotSplit> {
    let labels = g.require_labels()?;
    if k == 0 {
        return Err(Gp2fError::Config("k must be at least 1".into()));
    }
    let (test_idx, pool) = test_pool(g.num_nodes());
    let mut rng = SeedStream::new(seed);
    let mut train_idx = Vec::with_capacity(k * g.num_classes());
    for class in 0..g.num_classes() {
        let candidates: Vec<usize> = pool.iter().copied().filter(|&i| labels[i] == class).collect();
        if candidates.len() < k {
            return Err(Gp2fError::Protocol(format!(
                "class {class} has {} candidates in the sampling pool, need {k}",
                candidates.len()
            )));
        }
        train_idx.extend(rng.sample_without_replacement(&candidates, k));
    }
    Ok(FewShotSplit {
        train_idx,
        test_idx,
        k,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::DenseMatrix;
    use proptest::prelude::*;

    fn labelled(n: usize, classes: usize) -> Graph {
        let y = (0..n).map(|i| i % classes).collect();
        Graph::new(DenseMatrix::zeros(n, 1), [], Some(y)).unwrap()
    }

    #[test]
    fn one_shot_seven_classes() {
        let g = labelled(700, 7);
        let s = sample_few_shot(&g, 1, 12345).unwrap();
        assert_eq!(s.train_idx.len(), 7);
        assert_eq!(s.test_idx.len(), 630);
    }

    #[test]
    fn same_inputs_same_split() {
        let g = labelled(300, 3);
        assert_eq!(sample_few_shot(&g, 2, 4).unwrap(), sample_few_shot(&g, 2, 4).unwrap());
    }

    #[test]
    fn test_pool_is_shared_across_seeds() {
        let g = labelled(300, 3);
        let a = sample_few_shot(&g, 1, 1).unwrap();
        let b = sample_few_shot(&g, 1, 2).unwrap();
        assert_eq!(a.test_idx, b.test_idx);
    }

    #[test]
    fn empty_class_in_pool_is_protocol_error() {
        // class 1 has a single node; it lands in the pool only by chance.
        let mut y = vec![0usize; 50];
        let (test, _) = test_pool(50);
        y[test[0]] = 1;
        let g = Graph::new(DenseMatrix::zeros(50, 1), [], Some(y)).unwrap();
        match sample_few_shot(&g, 1, 0) {
            Err(Gp2fError::Protocol(m)) => assert!(m.contains("class 1")),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn disjoint_with_k_per_class(k in 1usize..4, seed in any::<u64>()) {
            let g = labelled(400, 4);
            let s = sample_few_shot(&g, k, seed).unwrap();
            let y = g.labels().unwrap();
            prop_assert!(s.train_idx.iter().all(|i| !s.test_idx.contains(i)));
            for c in 0..4 {
                prop_assert_eq!(s.train_idx.iter().filter(|&&i| y[i] == c).count(), k);
            }
        }
    }
}
