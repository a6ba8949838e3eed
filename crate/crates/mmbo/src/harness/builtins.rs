use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{MmboError, Result};
use crate::geometry::{BoxSet, ConvexSet};
use crate::model::{Dims, MinimaxBilevelProblem, QuadraticLower, QuadraticUpper};

/// Identifiers accepted by [`builtin_example`].
pub const BUILTIN_IDS: [&str; 3] = ["ex61", "ex62", "ex63"];

fn unit_box(n: usize, lo: f64, hi: f64) -> Result<ConvexSet> {
    Ok(ConvexSet::Box(BoxSet::uniform(n, lo, hi)?))
}

/// `f = y² + λ(x + y − 1)`, `g = ½z² + λz`, all sets `[0, 1]`.
pub fn ex61() -> MinimaxBilevelProblem {
    let fbar = QuadraticUpper::new(
        1,
        DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 2.0])),
        DVector::zeros(2),
    )
    .expect("consistent shapes");
    let g = QuadraticLower::new(
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        DVector::zeros(1),
    )
    .expect("consistent shapes");
    MinimaxBilevelProblem::new(
        "ex61",
        Dims::new(1, 1, 1).expect("positive"),
        Arc::new(fbar),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        DVector::from_element(1, 1.0),
        Arc::new(g),
        unit_box(1, 0.0, 1.0).expect("valid box"),
        unit_box(1, 0.0, 1.0).expect("valid box"),
        unit_box(1, 0.0, 1.0).expect("valid box"),
    )
    .expect("consistent problem")
}

/// `f = x² + y² + λ(x + y − 2)`, `g = z² + λz`, `x, y ∈ [−1, 1]`, `λ ∈ [−2, 2]`.
pub fn ex62() -> MinimaxBilevelProblem {
    let fbar = QuadraticUpper::new(1, DMatrix::identity(2, 2) * 2.0, DVector::zeros(2))
        .expect("consistent shapes");
    let g = QuadraticLower::new(
        DMatrix::from_element(1, 1, 2.0),
        DMatrix::from_element(1, 1, 1.0),
        DVector::zeros(1),
    )
    .expect("consistent shapes");
    MinimaxBilevelProblem::new(
        "ex62",
        Dims::new(1, 1, 1).expect("positive"),
        Arc::new(fbar),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        DVector::from_element(1, 2.0),
        Arc::new(g),
        unit_box(1, -1.0, 1.0).expect("valid box"),
        unit_box(1, -1.0, 1.0).expect("valid box"),
        unit_box(1, -2.0, 2.0).expect("valid box"),
    )
    .expect("consistent problem")
}

/// `f = ‖x‖² + ‖y‖² + λᵀ(x + y)`, `g = 2‖z‖² − 4λᵀz`, all sets `[−1, 1]²`.
pub fn ex63() -> MinimaxBilevelProblem {
    let fbar = QuadraticUpper::new(2, DMatrix::identity(4, 4) * 2.0, DVector::zeros(4))
        .expect("consistent shapes");
    let g = QuadraticLower::new(
        DMatrix::identity(2, 2) * 4.0,
        DMatrix::identity(2, 2) * -4.0,
        DVector::zeros(2),
    )
    .expect("consistent shapes");
    MinimaxBilevelProblem::new(
        "ex63",
        Dims::new(2, 2, 2).expect("positive"),
        Arc::new(fbar),
        DMatrix::identity(2, 2),
        DMatrix::identity(2, 2),
        DVector::zeros(2),
        Arc::new(g),
        unit_box(2, -1.0, 1.0).expect("valid box"),
        unit_box(2, -1.0, 1.0).expect("valid box"),
        unit_box(2, -1.0, 1.0).expect("valid box"),
    )
    .expect("consistent problem")
}

/// Looks up a built-in example by id (`ex61`, `ex62`, `ex63`).
pub fn builtin_example(id: &str) -> Result<MinimaxBilevelProblem> {
    match id {
        "ex61" => Ok(ex61()),
        "ex62" => Ok(ex62()),
        "ex63" => Ok(ex63()),
        other => Err(MmboError::InvalidParameter(format!(
            "unknown built-in example {other:?}; expected one of {BUILTIN_IDS:?}"
        ))),
    }
}
