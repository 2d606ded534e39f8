use crate::error::{Gp2fError, Result};
use crate::numerics::{logistic, DenseMatrix, SeedStream};

pub const DEFAULT_HIDDEN_DIM: usize = 128;
pub const DEFAULT_BOTTLENECK: usize = 32;
pub const DEFAULT_BETA_INIT: f64 = 1e-3;
/// logistic(2.0) ≈ 0.88: the fused output starts close to the frozen branch.
pub const DEFAULT_ALPHA_LOGIT: f64 = 2.0;

/// Two biasless GCN weight matrices (`d_h x d_h`).
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub w1: DenseMatrix,
    pub w2: DenseMatrix,
    frozen: bool,
}

impl EncoderParams {
    pub fn new(w1: DenseMatrix, w2: DenseMatrix) -> Result<Self> {
        let h = w1.rows();
        if w1.shape() != (h, h) || w2.shape() != (h, h) {
            return Err(Gp2fError::dim(
                "encoder",
                format!("weights must be square and equal: {:?}, {:?}", w1.shape(), w2.shape()),
            ));
        }
        Ok(Self { w1, w2, frozen: false })
    }

    pub fn init(hidden_dim: usize, rng: &mut SeedStream) -> Self {
        Self {
            w1: rng.glorot(hidden_dim, hidden_dim),
            w2: rng.glorot(hidden_dim, hidden_dim),
            frozen: false,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// Trainable copy, used by full fine-tuning.
    pub fn unfrozen_copy(&self) -> Self {
        Self {
            frozen: false,
            ..self.clone()
        }
    }

    pub(crate) fn require_frozen(&self) -> Result<()> {
        if self.frozen {
            Ok(())
        } else {
            Err(Gp2fError::Contract("encoder weights must be frozen before downstream use".into()))
        }
    }
}

/// One-hidden-layer MLP mapping raw features to the encoder width.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectorParams {
    pub w1: DenseMatrix,
    pub b1: DenseMatrix,
    pub w2: DenseMatrix,
    pub b2: DenseMatrix,
}

impl ProjectorParams {
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut SeedStream) -> Self {
        Self {
            w1: rng.glorot(input_dim, hidden_dim),
            b1: DenseMatrix::zeros(1, hidden_dim),
            w2: rng.glorot(hidden_dim, hidden_dim),
            b2: DenseMatrix::zeros(1, hidden_dim),
        }
    }

    /// Identity weights and zero biases (requires `input_dim == hidden_dim`).
    pub fn identity(dim: usize) -> Self {
        Self {
            w1: DenseMatrix::identity(dim),
            b1: DenseMatrix::zeros(1, dim),
            w2: DenseMatrix::identity(dim),
            b2: DenseMatrix::zeros(1, dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols()
    }

    pub(crate) fn tensors(&self) -> [&DenseMatrix; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut DenseMatrix; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

/// Bottleneck adapter attached after one GCN layer.
#[derive(Clone, Debug, PartialEq)]
pub struct AdapterLayer {
    pub down: DenseMatrix,
    pub up: DenseMatrix,
    /// Residual scale, stored as a `1 x 1` matrix so it trains like any tensor.
    pub beta: DenseMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdapterParams {
    pub layers: [AdapterLayer; 2],
}

impl AdapterParams {
    pub fn init(hidden_dim: usize, bottleneck: usize, beta_init: f64, rng: &mut SeedStream) -> Result<Self> {
        if bottleneck == 0 || bottleneck >= hidden_dim {
            return Err(Gp2fError::Config(format!(
                "adapter bottleneck r={bottleneck} must satisfy 0 < r < d_h={hidden_dim}"
            )));
        }
        let mut layer = || AdapterLayer {
            down: rng.glorot(hidden_dim, bottleneck),
            up: rng.glorot(bottleneck, hidden_dim),
            beta: DenseMatrix::scalar(beta_init),
        };
        Ok(Self {
            layers: [layer(), layer()],
        })
    }

    pub fn bottleneck(&self) -> usize {
        self.layers[0].down.cols()
    }

    pub fn betas(&self) -> [f64; 2] {
        [self.layers[0].beta.item(), self.layers[1].beta.item()]
    }

    pub fn set_betas(&mut self, beta: f64) {
        for l in &mut self.layers {
            l.beta = DenseMatrix::scalar(beta);
        }
    }

    pub(crate) fn tensors(&self) -> Vec<&DenseMatrix> {
        self.layers.iter().flat_map(|l| [&l.down, &l.up, &l.beta]).collect()
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.down, &mut l.up, &mut l.beta])
            .collect()
    }
}

/// Raw logit `a` of the branch weight `α = logistic(a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionParams {
    pub logit: DenseMatrix,
}

impl FusionParams {
    pub fn new(logit: f64) -> Self {
        Self {
            logit: DenseMatrix::scalar(logit),
        }
    }

    pub fn alpha(&self) -> f64 {
        logistic(self.logit.item())
    }
}

impl Default for FusionParams {
    fn default() -> Self {
        Self::new(DEFAULT_ALPHA_LOGIT)
    }
}

/// Linear classification head.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams {
    pub w: DenseMatrix,
    pub b: DenseMatrix,
}

impl ClassifierParams {
    pub fn init(hidden_dim: usize, classes: usize, rng: &mut SeedStream) -> Self {
        Self {
            w: rng.glorot(hidden_dim, classes),
            b: DenseMatrix::zeros(1, classes),
        }
    }

    pub fn zeros(hidden_dim: usize, classes: usize) -> Self {
        Self {
            w: DenseMatrix::zeros(hidden_dim, classes),
            b: DenseMatrix::zeros(1, classes),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.w.cols()
    }
}
