//! Graph data model, ingestion, synthetic generation and sampling protocol.

mod augment;
mod fewshot;
mod io;
mod sbm;

use std::collections::BTreeSet;

pub use augment::augment_view;
pub use fewshot::{sample_few_shot, test_pool, FewShotSplit, TEST_FRACTION, TEST_POOL_SEED};
pub use io::{load_graph, write_graph, GraphFiles};
pub use sbm::{generate_sbm, generate_sbm_pair, SbmPairSpec, SbmSpec};

use crate::error::{Gp2fError, Result};
use crate::numerics::DenseMatrix;

/// Undirected attributed graph with optional node labels.
///
/// Edges are stored once as `(i, j)` with `i < j`, sorted, with no self-loops.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: DenseMatrix,
    labels: Option<Vec<usize>>,
    num_classes: usize,
}

impl Graph {
    /// Build a graph from an arbitrary edge list. Edges are symmetrized,
    /// deduplicated and canonicalized; self-loops are dropped.
    pub fn new(features: DenseMatrix, edges: impl IntoIterator<Item = (usize, usize)>, labels: Option<Vec<usize>>) -> Result<Self> {
        let n = features.rows();
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Gp2fError::Validation(format!(
                    "edge ({a}, {b}) has an endpoint outside 0..{n}"
                )));
            }
            if a != b {
                set.insert((a.min(b), a.max(b)));
            }
        }
        let num_classes = match &labels {
            Some(y) => {
                if y.len() != n {
                    return Err(Gp2fError::Validation(format!(
                        "{} labels for {n} nodes",
                        y.len()
                    )));
                }
                y.iter().max().map_or(0, |m| m + 1)
            }
            None => 0,
        };
        if !features.is_finite() {
            return Err(Gp2fError::Validation("features contain non-finite values".into()));
        }
        Ok(Self {
            num_nodes: n,
            edges: set.into_iter().collect(),
            features,
            labels,
            num_classes,
        })
    }

    /// Like [`Graph::new`] but with an explicit class count (labels must be below it).
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self> {
        if let Some(y) = &self.labels {
            if let Some(&bad) = y.iter().find(|&&c| c >= num_classes) {
                return Err(Gp2fError::Validation(format!(
                    "label {bad} not below class count {num_classes}"
                )));
            }
        }
        self.num_classes = num_classes;
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub(crate) fn require_labels(&self) -> Result<&[usize]> {
        self.labels()
            .ok_or_else(|| Gp2fError::Protocol("graph has no labels".into()))
    }

    /// Binary adjacency without self-loops.
    pub fn adjacency(&self) -> DenseMatrix {
        let n = self.num_nodes;
        let mut a = DenseMatrix::zeros(n, n);
        for &(i, j) in &self.edges {
            a.set(i, j, 1.0);
            a.set(j, i, 1.0);
        }
        a
    }

    /// Sorted neighbor lists.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_nodes];
        for &(i, j) in &self.edges {
            out[i].push(j);
            out[j].push(i);
        }
        out.iter_mut().for_each(|v| v.sort_unstable());
        out
    }

    pub(crate) fn replace_parts(&self, edges: Vec<(usize, usize)>, features: DenseMatrix) -> Self {
        Self {
            num_nodes: self.num_nodes,
            edges,
            features,
            labels: self.labels.clone(),
            num_classes: self.num_classes,
        }
    }
}

/// `D̃^{-1/2}(A+I)D̃^{-1/2}` for the GCN propagation step.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency(DenseMatrix);

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.0
    }
}

pub fn normalize_adjacency(g: &Graph) -> NormalizedAdjacency {
    let n = g.num_nodes();
    let mut deg = vec![1.0f64; n];
    for &(i, j) in g.edges() {
        deg[i] += 1.0;
        deg[j] += 1.0;
    }
    let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut m = DenseMatrix::zeros(n, n);
    for i in 0..n {
        m.set(i, i, inv_sqrt[i] * inv_sqrt[i]);
    }
    for &(i, j) in g.edges() {
        let v = inv_sqrt[i] * inv_sqrt[j];
        m.set(i, j, v);
        m.set(j, i, v);
    }
    NormalizedAdjacency(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeedStream;
    use proptest::prelude::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::new(DenseMatrix::zeros(n, 1), edges.iter().copied(), None).unwrap()
    }

    #[test]
    fn edges_are_canonical_and_deduplicated() {
        let g = graph(3, &[(1, 0), (0, 1), (2, 1), (1, 1)]);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn out_of_range_endpoint_rejected() {
        let r = Graph::new(DenseMatrix::zeros(3, 1), [(0, 5)], None);
        assert!(matches!(r, Err(Gp2fError::Validation(_))));
    }

    #[test]
    fn edgeless_normalizes_to_identity() {
        assert_eq!(normalize_adjacency(&graph(2, &[])).into_matrix(), DenseMatrix::identity(2));
    }

    #[test]
    fn single_edge_normalizes_to_halves() {
        let a = normalize_adjacency(&graph(2, &[(0, 1)])).into_matrix();
        for v in a.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn triangle_normalizes_to_thirds() {
        let a = normalize_adjacency(&graph(3, &[(0, 1), (1, 2), (0, 2)])).into_matrix();
        for v in a.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    fn brute_force(g: &Graph) -> DenseMatrix {
        let n = g.num_nodes();
        let mut a = g.adjacency();
        for i in 0..n {
            a.set(i, i, a.get(i, i) + 1.0);
        }
        let d: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a.get(i, j)).sum()).collect();
        DenseMatrix::from_fn(n, n, |i, j| a.get(i, j) / (d[i] * d[j]).sqrt())
    }

    proptest! {
        #[test]
        fn normalization_matches_reconstruction(n in 1usize..=32, p in 0.0f64..1.0, seed in any::<u64>()) {
            let mut rng = SeedStream::new(seed);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.bernoulli(p) {
                        edges.push((i, j));
                    }
                }
            }
            let g = graph(n, &edges);
            let a = normalize_adjacency(&g).into_matrix();
            prop_assert!(a.max_abs_diff(&brute_force(&g)) < 1e-12);
            prop_assert!(a.max_abs_diff(&a.transpose()) <= 1e-12);
            prop_assert!(a.data().iter().all(|&v| v >= 0.0));
        }
    }
}
