//! Dense matrices, the gradient tape, Adam and seeded random streams.

mod adam;
mod gradcheck;
mod matrix;
mod rng;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{
    finite_diff_check, forward_and_grad, Evaluation, GradCheckEntry, GradCheckReport, NamedMatrix, Program,
    KINK_SHIFT,
};
pub use matrix::DenseMatrix;
pub use rng::{derive_seed, label_tag, SeedStream};
pub use tape::{logistic, Gradients, Tape, Var, ROW_NORM_EPS};
