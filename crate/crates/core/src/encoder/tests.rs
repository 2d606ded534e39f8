use proptest::prelude::*;

use super::*;
use crate::graph::normalize_adjacency;
use crate::numerics::{logistic, SeedStream};

// --- straight-line oracle, independent of the tape ---

fn mm(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += a.get(i, k) * b.get(k, j);
            }
            out.set(i, j, s);
        }
    }
    out
}

fn add_bias(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(a.rows(), a.cols(), |i, j| a.get(i, j) + b.get(0, j))
}

fn relu(a: &DenseMatrix) -> DenseMatrix {
    a.map(|x| x.max(0.0))
}

fn oracle_project(x: &DenseMatrix, p: &ProjectorParams) -> DenseMatrix {
    add_bias(&mm(&relu(&add_bias(&mm(x, &p.w1), &p.b1)), &p.w2), &p.b2)
}

fn oracle_layer(h: &DenseMatrix, a: &DenseMatrix, w: &DenseMatrix, act: bool) -> DenseMatrix {
    let out = mm(a, &mm(h, w));
    if act {
        relu(&out)
    } else {
        out
    }
}

fn oracle_adapter(h: &DenseMatrix, l: &AdapterLayer) -> DenseMatrix {
    let r = mm(&relu(&mm(h, &l.down)), &l.up);
    DenseMatrix::from_fn(h.rows(), h.cols(), |i, j| h.get(i, j) + l.beta.item() * r.get(i, j))
}

fn random_graph(n: usize, d: usize, p: f64, rng: &mut SeedStream) -> Graph {
    let mut edges = vec![];
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.bernoulli(p) {
                edges.push((i, j));
            }
        }
    }
    Graph::new(rng.normal_matrix(n, d, 1.0), edges, None).unwrap()
}

fn frozen(h: usize, rng: &mut SeedStream) -> EncoderParams {
    let mut e = EncoderParams::init(h, rng);
    e.freeze();
    e
}

#[test]
fn gcn_identity_propagation() {
    let g = Graph::new(DenseMatrix::zeros(3, 1), [], None).unwrap();
    let adj = normalize_adjacency(&g);
    let h = SeedStream::new(1).normal_matrix(3, 4, 1.0);
    assert_eq!(gcn_layer(&h, &adj, &DenseMatrix::identity(4), false).unwrap(), h);
}

#[test]
fn gcn_edgeless_rows_independent() {
    let g = Graph::new(DenseMatrix::zeros(2, 1), [], None).unwrap();
    let adj = normalize_adjacency(&g);
    let mut rng = SeedStream::new(2);
    let h = rng.normal_matrix(2, 3, 1.0);
    let w = rng.normal_matrix(3, 3, 1.0);
    let out = gcn_layer(&h, &adj, &w, false).unwrap();
    for i in 0..2 {
        let single = h.select_rows(&[i]).matmul(&w).unwrap();
        assert!(out.select_rows(&[i]).max_abs_diff(&single) < 1e-15);
    }
}

#[test]
fn gcn_path_matches_triple_loop() {
    let g = Graph::new(DenseMatrix::zeros(3, 1), [(0, 1), (1, 2)], None).unwrap();
    let adj = normalize_adjacency(&g);
    let mut rng = SeedStream::new(3);
    let h = rng.normal_matrix(3, 4, 1.0);
    let w = rng.normal_matrix(4, 4, 1.0);
    let out = gcn_layer(&h, &adj, &w, true).unwrap();
    let a = adj.matrix();
    for i in 0..3 {
        for c in 0..4 {
            let mut s = 0.0;
            for j in 0..3 {
                for k in 0..4 {
                    s += a.get(i, j) * h.get(j, k) * w.get(k, c);
                }
            }
            assert!((out.get(i, c) - s.max(0.0)).abs() < 1e-12);
        }
    }
}

#[test]
fn frozen_identity_weights_collapse_to_two_hop_propagation() {
    let mut rng = SeedStream::new(4);
    let x = rng.normal_matrix(5, 6, 1.0).map(f64::abs);
    let g = Graph::new(x.clone(), [(0, 1), (1, 2), (2, 3), (1, 4)], None).unwrap();
    let adj = normalize_adjacency(&g);
    let mut enc = EncoderParams::new(DenseMatrix::identity(6), DenseMatrix::identity(6)).unwrap();
    enc.freeze();
    let h = encode_frozen(&g, &adj, &enc, &ProjectorParams::identity(6)).unwrap();
    let a = adj.matrix();
    let expect = mm(a, &mm(a, &x));
    assert!(h.max_abs_diff(&expect) < 1e-12);
}

#[test]
fn unfrozen_encoder_is_contract_error() {
    let mut rng = SeedStream::new(5);
    let g = random_graph(4, 3, 0.5, &mut rng);
    let enc = EncoderParams::init(8, &mut rng);
    let proj = ProjectorParams::init(3, 8, &mut rng);
    let r = encode_frozen(&g, &normalize_adjacency(&g), &enc, &proj);
    assert!(matches!(r, Err(Gp2fError::Contract(_))));
}

#[test]
fn frozen_branch_matches_straight_line_oracle_and_is_deterministic() {
    let mut rng = SeedStream::new(6);
    let g = random_graph(8, 5, 0.4, &mut rng);
    let adj = normalize_adjacency(&g);
    let enc = frozen(12, &mut rng);
    let proj = ProjectorParams::init(5, 12, &mut rng);
    let h = encode_frozen(&g, &adj, &enc, &proj).unwrap();
    let h0 = oracle_project(g.features(), &proj);
    let expect = oracle_layer(&oracle_layer(&h0, adj.matrix(), &enc.w1, true), adj.matrix(), &enc.w2, false);
    assert!(h.max_abs_diff(&expect) < 1e-12);
    assert_eq!(h, encode_frozen(&g, &adj, &enc, &proj).unwrap());
}

#[test]
fn adapted_branch_matches_straight_line_oracle() {
    let mut rng = SeedStream::new(7);
    let g = random_graph(6, 4, 0.5, &mut rng);
    let adj = normalize_adjacency(&g);
    let enc = frozen(10, &mut rng);
    let proj = ProjectorParams::init(4, 10, &mut rng);
    let mut ad = AdapterParams::init(10, 3, 0.7, &mut rng).unwrap();
    ad.layers[1].beta = DenseMatrix::scalar(-0.4);
    let h = encode_adapted(&g, &adj, &enc, &ad, &proj).unwrap();
    let a = adj.matrix();
    let h0 = oracle_project(g.features(), &proj);
    let h1 = oracle_adapter(&oracle_layer(&h0, a, &enc.w1, true), &ad.layers[0]);
    let h2 = oracle_adapter(&oracle_layer(&h1, a, &enc.w2, false), &ad.layers[1]);
    assert!(h.max_abs_diff(&h2) < 1e-12);
}

fn bits_equal(a: &DenseMatrix, b: &DenseMatrix) -> bool {
    a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
}

#[test]
fn zero_beta_collapses_to_frozen_branch_bitwise() {
    let mut rng = SeedStream::new(8);
    let g = random_graph(9, 4, 0.4, &mut rng);
    let adj = normalize_adjacency(&g);
    let enc = frozen(16, &mut rng);
    let proj = ProjectorParams::init(4, 16, &mut rng);
    let mut ad = AdapterParams::init(16, 4, 0.0, &mut rng).unwrap();
    ad.set_betas(0.0);
    for logit in [-3.0, 0.0, 2.0, 7.5] {
        let out = encode_branches(&g, &adj, &enc, &proj, &ad, &FusionParams::new(logit), AlphaMode::Learned).unwrap();
        assert!(bits_equal(&out.adp, &out.pre));
        assert!(bits_equal(&out.mix, &out.pre));
    }
}

#[test]
fn zero_up_projection_collapses_regardless_of_beta() {
    let mut rng = SeedStream::new(9);
    let g = random_graph(7, 3, 0.5, &mut rng);
    let adj = normalize_adjacency(&g);
    let enc = frozen(8, &mut rng);
    let proj = ProjectorParams::init(3, 8, &mut rng);
    let mut ad = AdapterParams::init(8, 2, 5.0, &mut rng).unwrap();
    for l in &mut ad.layers {
        l.up = DenseMatrix::zeros(2, 8);
    }
    let pre = encode_frozen(&g, &adj, &enc, &proj).unwrap();
    let adp = encode_adapted(&g, &adj, &enc, &ad, &proj).unwrap();
    assert!(bits_equal(&pre, &adp));
}

#[test]
fn fuse_limits() {
    let mut rng = SeedStream::new(10);
    let pre = rng.normal_matrix(4, 3, 1.0);
    let adp = rng.normal_matrix(4, 3, 1.0);
    let near_one = fuse(&pre, &adp, &FusionParams::new(50.0)).unwrap();
    let scale = pre.sub(&adp).unwrap().data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(near_one.max_abs_diff(&pre) <= 1e-15 * scale.max(1.0) * 10.0);

    let half = fuse(&pre, &adp, &FusionParams::new(0.0)).unwrap();
    let mid = DenseMatrix::from_fn(4, 3, |i, j| 0.5 * pre.get(i, j) + 0.5 * adp.get(i, j));
    assert!(half.max_abs_diff(&mid) < 1e-15);

    for logit in [-10.0, -1.0, 0.3, 4.0] {
        assert_eq!(fuse(&pre, &pre, &FusionParams::new(logit)).unwrap(), pre);
    }
    assert!(fuse(&pre, &DenseMatrix::zeros(2, 2), &FusionParams::default()).is_err());
}

#[test]
fn default_alpha_favours_frozen_branch() {
    let a = FusionParams::default().alpha();
    assert!((a - logistic(2.0)).abs() < 1e-15 && a > 0.88 && a < 0.881);
}

proptest! {
    #[test]
    fn fused_values_lie_between_branches(logit in -30.0f64..30.0, seed in any::<u64>()) {
        let mut rng = SeedStream::new(seed);
        let pre = rng.normal_matrix(5, 4, 3.0);
        let adp = rng.normal_matrix(5, 4, 3.0);
        let mix = fuse(&pre, &adp, &FusionParams::new(logit)).unwrap();
        let alpha = logistic(logit);
        prop_assert!(alpha > 0.0 && alpha <= 1.0);
        for k in 0..mix.len() {
            let (p, q, m) = (pre.data()[k], adp.data()[k], mix.data()[k]);
            let slack = 4.0 * f64::EPSILON * p.abs().max(q.abs());
            prop_assert!(m >= p.min(q) - slack && m <= p.max(q) + slack);
            prop_assert!((m - (alpha * p + (1.0 - alpha) * q)).abs() < 1e-12);
        }
    }
}

#[test]
fn classify_cases() {
    let mut rng = SeedStream::new(11);
    let h = rng.normal_matrix(5, 6, 1.0);
    assert_eq!(classify(&h, &ClassifierParams::zeros(6, 3)).unwrap(), DenseMatrix::zeros(5, 3));
    let one = ClassifierParams::init(6, 1, &mut rng);
    assert_eq!(classify(&h, &one).unwrap().shape(), (5, 1));

    let mut c = ClassifierParams::init(6, 4, &mut rng);
    c.b = rng.normal_matrix(1, 4, 1.0);
    let z = classify(&h, &c).unwrap();
    for i in 0..5 {
        for k in 0..4 {
            let dot: f64 = (0..6).map(|j| h.get(i, j) * c.w.get(j, k)).sum();
            assert!((z.get(i, k) - dot - c.b.get(0, k)).abs() < 1e-12);
        }
    }
    assert!(classify(&h, &ClassifierParams::zeros(5, 2)).is_err());
}

#[test]
fn bottleneck_must_be_below_width() {
    let mut rng = SeedStream::new(12);
    assert!(AdapterParams::init(8, 8, 1e-3, &mut rng).is_err());
    let ad = AdapterParams::init(128, DEFAULT_BOTTLENECK, DEFAULT_BETA_INIT, &mut rng).unwrap();
    assert_eq!(ad.betas(), [1e-3, 1e-3]);
    assert_eq!(ad.bottleneck(), 32);
}

#[test]
fn checkpoint_round_trips_bytes() {
    let mut rng = SeedStream::new(13);
    let ck = Checkpoint {
        encoder: frozen(6, &mut rng),
        projector: ProjectorParams::init(3, 6, &mut rng),
        pretrain_seed: 99,
    };
    let text = ck.to_json().unwrap();
    let back = Checkpoint::from_json(&text).unwrap();
    assert_eq!(back, ck);
    assert!(back.encoder.is_frozen());
    assert_eq!(back.to_json().unwrap(), text);
    assert!(Checkpoint::from_json(&text.replace(CHECKPOINT_FORMAT, "other")).is_err());
}
