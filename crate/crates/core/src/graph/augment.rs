use super::Graph;
use crate::error::{Gp2fError, Result};
use crate::numerics::SeedStream;

/// Stochastic view of `g`: each edge dropped with probability `p_edge_drop`,
/// each feature column zeroed for all nodes with probability `p_feat_mask`.
pub fn augment_view(g: &Graph, p_edge_drop: f64, p_feat_mask: f64, seed: u64) -> Result<Graph> {
    for (name, p) in [("p_edge_drop", p_edge_drop), ("p_feat_mask", p_feat_mask)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Gp2fError::Config(format!("{name} must lie in [0,1], got {p}")));
        }
    }
    let root = SeedStream::new(seed);
    let mut edge_rng = root.named("edge_drop");
    let edges: Vec<_> = g
        .edges()
        .iter()
        .copied()
        .filter(|_| !edge_rng.bernoulli(p_edge_drop))
        .collect();

    let mut mask_rng = root.named("feature_mask");
    let masked: Vec<bool> = (0..g.feature_dim()).map(|_| mask_rng.bernoulli(p_feat_mask)).collect();
    let mut features = g.features().clone();
    if masked.iter().any(|&m| m) {
        for i in 0..features.rows() {
            for (v, &m) in features.row_mut(i).iter_mut().zip(&masked) {
                if m {
                    *v = 0.0;
                }
            }
        }
    }
    Ok(g.replace_parts(edges, features))
}
