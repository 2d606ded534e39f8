//! Program evaluation with gradients, and central-difference verification.

use crate::error::{Gp2fError, Result};

use super::{DenseMatrix, Tape, Var};

/// A named parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedMatrix {
    pub name: String,
    pub value: DenseMatrix,
}

impl NamedMatrix {
    pub fn new(name: impl Into<String>, value: DenseMatrix) -> Self {
        Self {
            name: name.into(),
            value,
        }
    }
}

/// Output of [`forward_and_grad`].
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub output: f64,
    pub grads: Vec<NamedMatrix>,
}

/// Builds a scalar on the tape from parameter leaves (in the order given).
pub trait Program {
    fn build(&self, tape: &mut Tape, params: &[Var]) -> Result<Var>;
}

impl<F> Program for F
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    fn build(&self, tape: &mut Tape, params: &[Var]) -> Result<Var> {
        self(tape, params)
    }
}

fn record(program: &dyn Program, params: &[NamedMatrix]) -> Result<(Tape, Vec<Var>, Var)> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.value.clone())).collect();
    let out = program.build(&mut tape, &vars)?;
    if tape.value(out).shape() != (1, 1) {
        return Err(Gp2fError::dim(
            "forward_and_grad",
            format!("program output has shape {:?}", tape.value(out).shape()),
        ));
    }
    Ok((tape, vars, out))
}

/// Evaluate `program` and its exact reverse-mode gradient per parameter.
pub fn forward_and_grad(program: &dyn Program, params: &[NamedMatrix]) -> Result<Evaluation> {
    let (tape, vars, out) = record(program, params)?;
    let g = tape.backward(out)?;
    Ok(Evaluation {
        output: tape.scalar(out),
        grads: params
            .iter()
            .zip(&vars)
            .map(|(p, v)| NamedMatrix::new(p.name.clone(), g.get_or_zeros(*v)))
            .collect(),
    })
}

fn evaluate(program: &dyn Program, params: &[NamedMatrix]) -> Result<f64> {
    let (tape, _, out) = record(program, params)?;
    Ok(tape.scalar(out))
}

/// Per-parameter outcome of [`finite_diff_check`].
#[derive(Clone, Debug)]
pub struct GradCheckEntry {
    pub name: String,
    pub relative_error: f64,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub entries: Vec<GradCheckEntry>,
    /// Number of `+KINK_SHIFT` nudges applied to move relu inputs off the kink.
    pub kink_shifts: usize,
}

/// Parameters are shifted by this amount when a relu input sits on its kink.
pub const KINK_SHIFT: f64 = 1e-3;
const MAX_KINK_SHIFTS: usize = 3;

/// Compare reverse-mode gradients with central differences of step `h`.
///
/// The error for each named parameter is
/// `‖analytic − numeric‖ / max(1e-8, ‖numeric‖)` (Euclidean norms over the
/// tensor); the report's maximum is taken over parameters. If any relu input
/// lies within `10·h` of zero, every parameter entry is shifted by
/// [`KINK_SHIFT`] first.
pub fn finite_diff_check(program: &dyn Program, params: &[NamedMatrix], h: f64) -> Result<GradCheckReport> {
    let mut params = params.to_vec();
    let mut kink_shifts = 0;
    loop {
        let (tape, _, _) = record(program, &params)?;
        if tape.relu_kink_count(10.0 * h) == 0 || kink_shifts == MAX_KINK_SHIFTS {
            break;
        }
        for p in &mut params {
            p.value.data_mut().iter_mut().for_each(|x| *x += KINK_SHIFT);
        }
        kink_shifts += 1;
    }

    let analytic = forward_and_grad(program, &params)?;
    let mut entries = Vec::with_capacity(params.len());
    for (k, grad) in analytic.grads.iter().enumerate() {
        let mut numeric = DenseMatrix::zeros(grad.value.rows(), grad.value.cols());
        for idx in 0..numeric.len() {
            let orig = params[k].value.data()[idx];
            params[k].value.data_mut()[idx] = orig + h;
            let plus = evaluate(program, &params)?;
            params[k].value.data_mut()[idx] = orig - h;
            let minus = evaluate(program, &params)?;
            params[k].value.data_mut()[idx] = orig;
            numeric.data_mut()[idx] = (plus - minus) / (2.0 * h);
        }
        let diff = grad.value.sub(&numeric)?.frobenius_norm();
        let numeric_norm = numeric.frobenius_norm();
        entries.push(GradCheckEntry {
            name: grad.name.clone(),
            relative_error: diff / numeric_norm.max(1e-8),
            analytic_norm: grad.value.frobenius_norm(),
            numeric_norm,
        });
    }
    Ok(GradCheckReport {
        max_relative_error: entries.iter().map(|e| e.relative_error).fold(0.0, f64::max),
        entries,
        kink_shifts,
    })
}
