use crate::encoder::Checkpoint;
use crate::graph::{generate_sbm_pair, Graph, SbmSpec};
use crate::pretrain::{pretrain_from_scratch, PretrainConfig};

pub fn sbm(blocks: usize, per: usize, dim: usize, noise: f64) -> SbmSpec {
    SbmSpec {
        blocks,
        nodes_per_block: per,
        p_in: 0.3,
        p_out: 0.02,
        feature_dim: dim,
        center_scale: 1.0,
        noise_scale: noise,
        feature_shift: vec![],
    }
}

/// Small source/target pair and a briefly pre-trained checkpoint.
pub fn fixture(seed: u64) -> (Graph, Graph, Checkpoint) {
    let (src, tgt) = generate_sbm_pair(&sbm(3, 20, 6, 1.0), &sbm(3, 40, 6, 1.0), seed).unwrap();
    let cfg = PretrainConfig {
        epochs: 20,
        hidden_dim: 16,
        seed,
        ..PretrainConfig::default()
    };
    let ck = pretrain_from_scratch(&src, &cfg).unwrap().checkpoint;
    (src, tgt, ck)
}
