//! Tape-level building blocks shared by training and inference, so both paths
//! produce identical values.

use crate::error::Result;
use crate::numerics::{Tape, Var};

use super::params::{AdapterParams, ClassifierParams, EncoderParams, FusionParams, ProjectorParams};

fn leaf(tape: &mut Tape, m: &crate::numerics::DenseMatrix, trainable: bool) -> Var {
    if trainable {
        tape.param(m.clone())
    } else {
        tape.constant(m.clone())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ProjectorVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl ProjectorVars {
    pub fn record(tape: &mut Tape, p: &ProjectorParams, trainable: bool) -> Self {
        Self {
            w1: leaf(tape, &p.w1, trainable),
            b1: leaf(tape, &p.b1, trainable),
            w2: leaf(tape, &p.w2, trainable),
            b2: leaf(tape, &p.b2, trainable),
        }
    }

    pub fn vars(&self) -> [Var; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderVars {
    pub w1: Var,
    pub w2: Var,
}

impl EncoderVars {
    /// Frozen weights are always recorded as constants.
    pub fn record(tape: &mut Tape, p: &EncoderParams) -> Self {
        let trainable = !p.is_frozen();
        Self {
            w1: leaf(tape, &p.w1, trainable),
            w2: leaf(tape, &p.w2, trainable),
        }
    }

    pub fn weights(&self) -> [Var; 2] {
        [self.w1, self.w2]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AdapterVars {
    pub down: [Var; 2],
    pub up: [Var; 2],
    pub beta: [Var; 2],
}

impl AdapterVars {
    pub fn record(tape: &mut Tape, p: &AdapterParams, trainable: bool) -> Self {
        let mut rec = |l: usize| {
            (
                leaf(tape, &p.layers[l].down, trainable),
                leaf(tape, &p.layers[l].up, trainable),
                leaf(tape, &p.layers[l].beta, trainable),
            )
        };
        let (d0, u0, b0) = rec(0);
        let (d1, u1, b1) = rec(1);
        Self {
            down: [d0, d1],
            up: [u0, u1],
            beta: [b0, b1],
        }
    }

    /// In the order of `AdapterParams::tensors`.
    pub fn vars(&self) -> Vec<Var> {
        (0..2).flat_map(|l| [self.down[l], self.up[l], self.beta[l]]).collect()
    }
}

/// Branch weight on the tape: learned through a logit, or pinned.
#[derive(Clone, Copy, Debug)]
pub enum AlphaVar {
    Learned { logit: Var, alpha: Var },
    Fixed(f64),
}

impl AlphaVar {
    pub fn learned(tape: &mut Tape, p: &FusionParams, trainable: bool) -> Result<Self> {
        let logit = leaf(tape, &p.logit, trainable);
        let alpha = tape.sigmoid(logit)?;
        Ok(AlphaVar::Learned { logit, alpha })
    }

    pub fn value(&self, tape: &Tape) -> f64 {
        match self {
            AlphaVar::Learned { alpha, .. } => tape.scalar(*alpha),
            AlphaVar::Fixed(a) => *a,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ClassifierVars {
    pub w: Var,
    pub b: Var,
}

impl ClassifierVars {
    pub fn record(tape: &mut Tape, p: &ClassifierParams, trainable: bool) -> Self {
        Self {
            w: leaf(tape, &p.w, trainable),
            b: leaf(tape, &p.b, trainable),
        }
    }
}

/// `relu(X W1 + b1) W2 + b2`.
pub fn project(tape: &mut Tape, x: Var, p: &ProjectorVars) -> Result<Var> {
    let h = tape.matmul(x, p.w1)?;
    let h = tape.add_row(h, p.b1)?;
    let h = tape.relu(h)?;
    let h = tape.matmul(h, p.w2)?;
    tape.add_row(h, p.b2)
}

/// `Â (H W)`, optionally followed by relu.
pub fn gcn(tape: &mut Tape, h: Var, adj: Var, w: Var, activate: bool) -> Result<Var> {
    let hw = tape.matmul(h, w)?;
    let out = tape.matmul(adj, hw)?;
    if activate {
        tape.relu(out)
    } else {
        Ok(out)
    }
}

/// Two GCN layers, relu after the first only.
pub fn frozen_branch(tape: &mut Tape, h0: Var, adj: Var, enc: &EncoderVars) -> Result<Var> {
    let h1 = gcn(tape, h0, adj, enc.w1, true)?;
    gcn(tape, h1, adj, enc.w2, false)
}

/// Same layers with a residual bottleneck adapter after each:
/// `H_adp = H + β · UP(relu(DOWN(H)))`.
pub fn adapted_branch(tape: &mut Tape, h0: Var, adj: Var, enc: &EncoderVars, ad: &AdapterVars) -> Result<Var> {
    let mut h = h0;
    for (l, w) in enc.weights().into_iter().enumerate() {
        let base = gcn(tape, h, adj, w, l == 0)?;
        let down = tape.matmul(base, ad.down[l])?;
        let act = tape.relu(down)?;
        let up = tape.matmul(act, ad.up[l])?;
        let res = tape.scale_by(up, ad.beta[l])?;
        h = tape.add(base, res)?;
    }
    Ok(h)
}

/// `α·pre + (1−α)·adp`, evaluated as `adp + α(pre − adp)`. A pinned α of
/// exactly 1 or 0 selects the branch itself.
pub fn fuse(tape: &mut Tape, pre: Var, adp: Var, alpha: &AlphaVar) -> Result<Var> {
    match *alpha {
        AlphaVar::Fixed(1.0) => Ok(pre),
        AlphaVar::Fixed(0.0) => Ok(adp),
        AlphaVar::Fixed(a) => {
            let d = tape.sub(pre, adp)?;
            let s = tape.scale(d, a)?;
            tape.add(adp, s)
        }
        AlphaVar::Learned { alpha, .. } => {
            let d = tape.sub(pre, adp)?;
            let s = tape.scale_by(d, alpha)?;
            tape.add(adp, s)
        }
    }
}

/// `H W_c + b_c`.
pub fn classify(tape: &mut Tape, h: Var, c: &ClassifierVars) -> Result<Var> {
    let z = tape.matmul(h, c.w)?;
    tape.add_row(z, c.b)
}
