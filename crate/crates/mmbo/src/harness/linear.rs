use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, MmboError, Result};
use crate::geometry::{BoxSet, ConvexSet, Polyhedron, SetSpec};
use crate::model::{Dims, MinimaxBilevelProblem, QuadraticLower, QuadraticUpper};

/// Dimensions as stored in problem JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearDims {
    pub dx: usize,
    pub dy: usize,
    pub dl: usize,
}

/// Data of `min_x max_{y,λ} c1ᵀx + λᵀ(Ax + By − b)` subject to `y ∈ argmin_z (c2 + λ)ᵀz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct LinearProblemData {
    #[serde(rename = "type")]
    pub kind: String,
    pub dims: LinearDims,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub A: Vec<Vec<f64>>,
    pub B: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    #[serde(rename = "setX")]
    pub set_x: SetSpec,
    #[serde(rename = "setY")]
    pub set_y: SetSpec,
    #[serde(rename = "setLambda")]
    pub set_lambda: SetSpec,
    /// Strictly feasible points `(x̂, ŷ, λ̂)` kept by the generator; not part of the JSON.
    #[serde(skip)]
    pub anchors: Option<[Vec<f64>; 3]>,
}

impl LinearProblemData {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let data: Self = serde_json::from_str(text)?;
        if data.kind != "linear" {
            return Err(MmboError::Format(format!(
                "unsupported problem type {:?}",
                data.kind
            )));
        }
        Ok(data)
    }
}

fn rows_to_matrix(
    rows: &[Vec<f64>],
    nrows: usize,
    ncols: usize,
    context: &'static str,
) -> Result<DMatrix<f64>> {
    check_dim(context, nrows, rows.len())?;
    for r in rows {
        check_dim(context, ncols, r.len())?;
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Builds the problem with `f̄ = c1ᵀx` and `g(z, λ) = c2ᵀz + λᵀz`. Requires `dλ = dy`.
pub fn build_linear_problem(data: &LinearProblemData) -> Result<MinimaxBilevelProblem> {
    let LinearDims { dx, dy, dl } = data.dims;
    let dims = Dims::new(dx, dy, dl)?;
    if dl != dy {
        return Err(MmboError::InvalidParameter(format!(
            "the bilinear lower level needs dl = dy, got dl = {dl}, dy = {dy}"
        )));
    }
    check_dim("c1", dx, data.c1.len())?;
    check_dim("c2", dy, data.c2.len())?;
    check_dim("b", dl, data.b.len())?;
    let a = rows_to_matrix(&data.A, dl, dx, "A")?;
    let b = rows_to_matrix(&data.B, dl, dy, "B")?;
    let mut sets = Vec::with_capacity(3);
    for (i, spec) in [&data.set_x, &data.set_y, &data.set_lambda]
        .into_iter()
        .enumerate()
    {
        let mut set = spec.to_set()?;
        if let (Some(anchors), ConvexSet::Polyhedron(p)) = (&data.anchors, &set) {
            let anchored = p
                .clone()
                .with_anchor(DVector::from_vec(anchors[i].clone()), 1e-8)?;
            set = ConvexSet::Polyhedron(anchored);
        }
        sets.push(set);
    }
    let set_lambda = sets.pop().expect("three sets");
    let set_y = sets.pop().expect("three sets");
    let set_x = sets.pop().expect("three sets");
    MinimaxBilevelProblem::new(
        "linear",
        dims,
        Arc::new(QuadraticUpper::linear(
            DVector::from_vec(data.c1.clone()),
            dy,
        )),
        a,
        b,
        DVector::from_vec(data.b.clone()),
        Arc::new(QuadraticLower::linear(DVector::from_vec(data.c2.clone()))),
        set_x,
        set_y,
        set_lambda,
    )
}

/// Options of the random linear instance recipe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearRecipe {
    /// Constant part of the inequality slack `Δε`.
    pub bias: f64,
    /// Standard deviation of the normal part of `Δε`.
    pub noise_sd: f64,
    /// Rows of each equality block; `None` gives square blocks, which fix `x`, `y` and `λ`
    /// to their anchors.
    pub eq_rows: Option<usize>,
}

impl Default for LinearRecipe {
    fn default() -> Self {
        Self {
            bias: 0.5,
            noise_sd: 0.1,
            eq_rows: None,
        }
    }
}

/// Generator substreams; each random block reads from its own ChaCha8 stream.
#[derive(Clone, Copy)]
enum Stream {
    C1 = 0,
    C2,
    A,
    B,
    Rhs,
    E1,
    E2,
    H1,
    H2,
    H3,
    H4,
    AnchorX,
    AnchorY,
    AnchorL,
    NoiseX,
    NoiseY,
    NoiseL,
}

fn stream(seed: u64, s: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s as u64);
    rng
}

fn normal_matrix(seed: u64, s: Stream, rows: usize, cols: usize) -> DMatrix<f64> {
    let dist = Normal::new(-1.0, 2.0).expect("valid normal");
    let mut rng = stream(seed, s);
    // Row-major fill so that the stream order matches the JSON layout.
    let data: Vec<f64> = (0..rows * cols).map(|_| dist.sample(&mut rng)).collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

fn std_normal_vec(seed: u64, s: Stream, n: usize) -> DVector<f64> {
    let mut rng = stream(seed, s);
    DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng))
}

struct GeneratedSet {
    set: ConvexSet,
    anchor: DVector<f64>,
    margin: f64,
}

#[allow(clippy::too_many_arguments)]
fn gen_set(
    seed: u64,
    n: usize,
    lo: f64,
    hi: f64,
    streams: [Stream; 4],
    recipe: &LinearRecipe,
) -> Result<GeneratedSet> {
    let [ineq, eq, anchor_s, noise_s] = streams;
    let h1 = normal_matrix(seed, ineq, n, n);
    let eq_rows = recipe.eq_rows.unwrap_or(n).min(n);
    let h2 = normal_matrix(seed, eq, eq_rows, n);
    let bounds = BoxSet::uniform(n, lo, hi)?;
    let anchor = bounds.project(&std_normal_vec(seed, anchor_s, n));
    let noise = std_normal_vec(seed, noise_s, n);
    let slack = noise.map(|e| recipe.bias + recipe.noise_sd * e);
    let b1 = &h1 * &anchor + &slack;
    let b2 = &h2 * &anchor;
    let poly = Polyhedron::new(h1, b1, h2, b2, bounds)?.with_anchor(anchor.clone(), 1e-8)?;
    let set = ConvexSet::Polyhedron(poly);
    // Exercise the projector once so rank-deficient equality blocks surface here.
    set.project(&anchor)?;
    Ok(GeneratedSet {
        set,
        anchor,
        margin: slack.min(),
    })
}

/// Random instance with `c1`, `c2`, `b` standard normal; `A`, `B` and the set matrices
/// `N(−1, 2²)`; anchors standard normal projected to the boxes `x ∈ [−5, 5]`,
/// `y ∈ [−3, 3]`, `λ ∈ [0, 5]`; inequality right-hand sides `H v̂ + bias + sd·N(0, 1)` and
/// equality right-hand sides `H v̂`. A degenerate draw (an infeasible anchor or a
/// rank-deficient equality block) is redrawn with the next seed.
pub fn gen_linear_instance(
    dims: LinearDims,
    seed: u64,
    recipe: &LinearRecipe,
) -> Result<(MinimaxBilevelProblem, LinearProblemData)> {
    if dims.dx == 0 || dims.dy == 0 || dims.dl == 0 {
        return Err(MmboError::InvalidParameter("dims must be positive".into()));
    }
    if !(recipe.noise_sd >= 0.0) {
        return Err(MmboError::InvalidParameter(
            "noise_sd must be nonnegative".into(),
        ));
    }
    const MAX_REDRAWS: u64 = 100;
    let mut last_err = None;
    for attempt in 0..MAX_REDRAWS {
        let s = seed.wrapping_add(attempt);
        match try_generate(dims, s, recipe) {
            Ok(out) => return Ok(out),
            Err(e) => {
                warn!(
                    "linear instance with seed {s} is degenerate ({e}); redrawing with seed {}",
                    s.wrapping_add(1)
                );
                last_err = Some(e);
            }
        }
    }
    Err(last_err.expect("at least one attempt"))
}

fn try_generate(
    dims: LinearDims,
    seed: u64,
    recipe: &LinearRecipe,
) -> Result<(MinimaxBilevelProblem, LinearProblemData)> {
    let LinearDims { dx, dy, dl } = dims;
    let c1 = std_normal_vec(seed, Stream::C1, dx);
    let c2 = std_normal_vec(seed, Stream::C2, dy);
    let a = normal_matrix(seed, Stream::A, dl, dx);
    let b = normal_matrix(seed, Stream::B, dl, dy);
    let rhs = std_normal_vec(seed, Stream::Rhs, dl);
    let sx = gen_set(
        seed,
        dx,
        -5.0,
        5.0,
        [Stream::E1, Stream::E2, Stream::AnchorX, Stream::NoiseX],
        recipe,
    )?;
    let sy = gen_set(
        seed,
        dy,
        -3.0,
        3.0,
        [Stream::H1, Stream::H2, Stream::AnchorY, Stream::NoiseY],
        recipe,
    )?;
    let sl = gen_set(
        seed,
        dl,
        0.0,
        5.0,
        [Stream::H3, Stream::H4, Stream::AnchorL, Stream::NoiseL],
        recipe,
    )?;
    for (name, s) in [("X", &sx), ("Y", &sy), ("Lambda", &sl)] {
        if !(s.margin > 0.0) {
            return Err(MmboError::Infeasible(format!(
                "set {name} anchor has slack {:.3e}",
                s.margin
            )));
        }
    }
    let data = LinearProblemData {
        kind: "linear".into(),
        dims,
        c1: c1.iter().copied().collect(),
        c2: c2.iter().copied().collect(),
        A: matrix_to_rows(&a),
        B: matrix_to_rows(&b),
        b: rhs.iter().copied().collect(),
        set_x: SetSpec::from_set(&sx.set),
        set_y: SetSpec::from_set(&sy.set),
        set_lambda: SetSpec::from_set(&sl.set),
        anchors: Some([
            sx.anchor.iter().copied().collect(),
            sy.anchor.iter().copied().collect(),
            sl.anchor.iter().copied().collect(),
        ]),
    };
    let problem = build_linear_problem(&data)?;
    Ok((problem, data))
}
