//! Convex feasible sets, Euclidean projections and linear-programming helpers.
//!
//! Boxes project by clamping. Polyhedra `{H1 v <= h1, H2 v = h2, lb <= v <= ub}` project with
//! Dykstra's alternating projections over one factor per inequality row, the affine equality
//! block and the box. Linear programs over polyhedra are solved by a dense two-phase simplex.

mod dykstra;
mod lower;
mod simplex;

pub use lower::{lower_level_solve, LowerLevelSolution};
pub use simplex::{lp_simplex, LpSolution};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, MmboError, Result};

/// Coordinate-wise bounds `lb <= v <= ub`. Infinite entries mark unbounded directions.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

impl BoxSet {
    pub fn new(lb: DVector<f64>, ub: DVector<f64>) -> Result<Self> {
        check_dim("box bounds", lb.len(), ub.len())?;
        for i in 0..lb.len() {
            if lb[i].is_nan() || ub[i].is_nan() {
                return Err(MmboError::InvalidParameter("box bound is NaN".into()));
            }
            if lb[i] > ub[i] {
                return Err(MmboError::Infeasible(format!(
                    "box coordinate {i}: lb {} > ub {}",
                    lb[i], ub[i]
                )));
            }
        }
        Ok(Self { lb, ub })
    }

    /// The box `[lo, hi]^n`.
    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(DVector::from_element(n, lo), DVector::from_element(n, hi))
    }

    pub fn unbounded(n: usize) -> Self {
        Self {
            lb: DVector::from_element(n, f64::NEG_INFINITY),
            ub: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn dim(&self) -> usize {
        self.lb.len()
    }

    pub fn is_bounded(&self) -> bool {
        self.lb.iter().chain(self.ub.iter()).all(|v| v.is_finite())
    }

    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(v.len(), |i, _| v[i].clamp(self.lb[i], self.ub[i]))
    }

    /// Largest bound violation of `v`.
    pub fn violation(&self, v: &DVector<f64>) -> f64 {
        (0..v.len())
            .map(|i| (self.lb[i] - v[i]).max(v[i] - self.ub[i]).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// `{v : H1 v <= h1, H2 v = h2, v in box}`.
#[derive(Debug, Clone)]
pub struct Polyhedron {
    pub h1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub h2: DMatrix<f64>,
    pub b2: DVector<f64>,
    pub bounds: BoxSet,
    anchor: Option<DVector<f64>>,
    affine: Option<std::result::Result<dykstra::AffineProjector, String>>,
}

impl Polyhedron {
    /// Builds the polyhedron. Pass zero-row matrices for absent inequality or equality blocks.
    pub fn new(
        h1: DMatrix<f64>,
        b1: DVector<f64>,
        h2: DMatrix<f64>,
        b2: DVector<f64>,
        bounds: BoxSet,
    ) -> Result<Self> {
        let n = bounds.dim();
        check_dim("inequality matrix columns", n, h1.ncols())?;
        check_dim("inequality rhs", h1.nrows(), b1.len())?;
        check_dim("equality matrix columns", n, h2.ncols())?;
        check_dim("equality rhs", h2.nrows(), b2.len())?;
        let affine = if h2.nrows() > 0 {
            Some(dykstra::AffineProjector::new(&h2, &b2).map_err(|e| e.to_string()))
        } else {
            None
        };
        Ok(Self {
            h1,
            b1,
            h2,
            b2,
            bounds,
            anchor: None,
            affine,
        })
    }

    /// Attaches a known feasible point, checked against the constraints.
    pub fn with_anchor(mut self, anchor: DVector<f64>, tol: f64) -> Result<Self> {
        check_dim("polyhedron anchor", self.dim(), anchor.len())?;
        let viol = self.violation(&anchor);
        if viol > tol {
            return Err(MmboError::Infeasible(format!(
                "anchor violates constraints by {viol:.3e}"
            )));
        }
        self.anchor = Some(anchor);
        Ok(self)
    }

    pub fn anchor(&self) -> Option<&DVector<f64>> {
        self.anchor.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn violation(&self, v: &DVector<f64>) -> f64 {
        let mut viol = self.bounds.violation(v);
        if self.h1.nrows() > 0 {
            let r = &self.h1 * v - &self.b1;
            viol = viol.max(r.max().max(0.0));
        }
        if self.h2.nrows() > 0 {
            let r = &self.h2 * v - &self.b2;
            viol = viol.max(r.amax());
        }
        viol
    }
}

/// Dykstra settings for polyhedral projections.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionSettings {
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for ProjectionSettings {
    fn default() -> Self {
        Self {
            max_sweeps: 10_000,
            tol: 1e-10,
        }
    }
}

/// A closed convex feasible set.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum ConvexSet {
    Box(BoxSet),
    Polyhedron(Polyhedron),
}

impl From<BoxSet> for ConvexSet {
    fn from(b: BoxSet) -> Self {
        ConvexSet::Box(b)
    }
}

impl From<Polyhedron> for ConvexSet {
    fn from(p: Polyhedron) -> Self {
        ConvexSet::Polyhedron(p)
    }
}

/// Result of [`feasibility_check`].
#[derive(Debug, Clone)]
pub struct FeasibilityCertificate {
    pub feasible: bool,
    /// A feasible point maximizing the smallest inequality slack (capped at 1).
    pub anchor: Option<DVector<f64>>,
    /// Smallest inequality and bound slack at the anchor; positive means strictly feasible.
    pub margin: f64,
}

impl ConvexSet {
    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Box(b) => b.dim(),
            ConvexSet::Polyhedron(p) => p.dim(),
        }
    }

    /// The coordinate bounds of the set (the whole box for a box, the bounding box of a polyhedron).
    pub fn bounds(&self) -> &BoxSet {
        match self {
            ConvexSet::Box(b) => b,
            ConvexSet::Polyhedron(p) => &p.bounds,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.bounds().is_bounded()
    }

    pub fn violation(&self, v: &DVector<f64>) -> f64 {
        match self {
            ConvexSet::Box(b) => b.violation(v),
            ConvexSet::Polyhedron(p) => p.violation(v),
        }
    }

    /// Euclidean projection with default settings.
    pub fn project(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.project_with(v, &ProjectionSettings::default())
    }

    pub fn project_with(
        &self,
        v: &DVector<f64>,
        settings: &ProjectionSettings,
    ) -> Result<DVector<f64>> {
        check_dim("projection input", self.dim(), v.len())?;
        match self {
            ConvexSet::Box(b) => Ok(b.project(v)),
            ConvexSet::Polyhedron(p) => dykstra::project(p, v, settings),
        }
    }

    /// Inequality form `G v <= r` of the set: bounds as `(v - ub; lb - v)` followed by the
    /// inequality rows and each equality row as a pair of opposite inequalities.
    /// Infinite bounds are skipped.
    pub fn inequality_form(&self) -> (DMatrix<f64>, DVector<f64>) {
        let bounds = self.bounds();
        let n = bounds.dim();
        let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
        for i in 0..n {
            if bounds.ub[i].is_finite() {
                rows.push((unit(n, i, 1.0), bounds.ub[i]));
            }
        }
        for i in 0..n {
            if bounds.lb[i].is_finite() {
                rows.push((unit(n, i, -1.0), -bounds.lb[i]));
            }
        }
        if let ConvexSet::Polyhedron(p) = self {
            for r in 0..p.h1.nrows() {
                rows.push((p.h1.row(r).transpose(), p.b1[r]));
            }
            for r in 0..p.h2.nrows() {
                rows.push((p.h2.row(r).transpose(), p.b2[r]));
                rows.push((-p.h2.row(r).transpose(), -p.b2[r]));
            }
        }
        let g = DMatrix::from_fn(rows.len(), n, |r, c| rows[r].0[c]);
        let rhs = DVector::from_fn(rows.len(), |r, _| rows[r].1);
        (g, rhs)
    }

    /// Minimizes the linear function `coeffᵀ v` over the set.
    pub fn linear_min(&self, coeff: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        check_dim("linear objective", self.dim(), coeff.len())?;
        match self {
            ConvexSet::Box(b) => linear_min_over_box(coeff, b),
            ConvexSet::Polyhedron(p) => {
                let sol = lp_simplex(coeff, p)?;
                Ok((sol.x, sol.value))
            }
        }
    }

    /// Draws a point uniformly from the bounding box and projects it onto the set.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        let b = self.bounds();
        if !b.is_bounded() {
            return Err(MmboError::Unbounded(
                "cannot sample an unbounded set".into(),
            ));
        }
        let v = DVector::from_fn(b.dim(), |i, _| {
            if b.ub[i] > b.lb[i] {
                rng.random_range(b.lb[i]..=b.ub[i])
            } else {
                b.lb[i]
            }
        });
        self.project(&v)
    }
}

fn unit(n: usize, i: usize, s: f64) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[i] = s;
    e
}

/// Minimizes `coeffᵀ v` over a finite box: `lb` where the coefficient is positive or zero,
/// `ub` where it is negative.
pub fn linear_min_over_box(coeff: &DVector<f64>, bx: &BoxSet) -> Result<(DVector<f64>, f64)> {
    check_dim("linear objective", bx.dim(), coeff.len())?;
    if !bx.is_bounded() {
        return Err(MmboError::Unbounded(
            "linear minimization over an unbounded box".into(),
        ));
    }
    let v = DVector::from_fn(coeff.len(), |i, _| {
        if coeff[i] < 0.0 {
            bx.ub[i]
        } else {
            bx.lb[i]
        }
    });
    let value = coeff.dot(&v);
    Ok((v, value))
}

/// Decides nonemptiness. For a polyhedron this solves the phase-1 style program
/// `max t  s.t.  H1 v + t <= h1, H2 v = h2, lb + t <= v <= ub - t, t <= 1` by simplex.
pub fn feasibility_check(set: &ConvexSet) -> FeasibilityCertificate {
    match set {
        ConvexSet::Box(b) => {
            let anchor = DVector::from_fn(b.dim(), |i, _| {
                match (b.lb[i].is_finite(), b.ub[i].is_finite()) {
                    (true, true) => 0.5 * (b.lb[i] + b.ub[i]),
                    (true, false) => b.lb[i] + 1.0,
                    (false, true) => b.ub[i] - 1.0,
                    (false, false) => 0.0,
                }
            });
            let margin = (0..b.dim())
                .map(|i| (anchor[i] - b.lb[i]).min(b.ub[i] - anchor[i]).min(1.0))
                .fold(1.0, f64::min);
            FeasibilityCertificate {
                feasible: true,
                anchor: Some(anchor),
                margin,
            }
        }
        ConvexSet::Polyhedron(p) => simplex::max_margin_point(p),
    }
}

/// Box part of a [`SetSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

/// A linear block `H v (<= or =) h` of a [`SetSpec`], rows stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct LinearSpec {
    pub H: Vec<Vec<f64>>,
    pub h: Vec<f64>,
}

/// JSON form of a set: `{"box":{"lb","ub"}, "ineq":{"H","h"}, "eq":{"H","h"}}` with the
/// linear blocks optional. Unbounded directions are not representable in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSpec {
    #[serde(rename = "box")]
    pub bx: BoxSpec,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ineq: Option<LinearSpec>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eq: Option<LinearSpec>,
}

fn matrix_from_rows(
    rows: &[Vec<f64>],
    ncols: usize,
    context: &'static str,
) -> Result<DMatrix<f64>> {
    for r in rows {
        check_dim(context, ncols, r.len())?;
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

impl SetSpec {
    pub fn to_set(&self) -> Result<ConvexSet> {
        let n = self.bx.lb.len();
        let bounds = BoxSet::new(
            DVector::from_vec(self.bx.lb.clone()),
            DVector::from_vec(self.bx.ub.clone()),
        )?;
        if self.ineq.is_none() && self.eq.is_none() {
            return Ok(ConvexSet::Box(bounds));
        }
        let block = |spec: &Option<LinearSpec>, context| -> Result<(DMatrix<f64>, DVector<f64>)> {
            match spec {
                Some(s) => Ok((
                    matrix_from_rows(&s.H, n, context)?,
                    DVector::from_vec(s.h.clone()),
                )),
                None => Ok((DMatrix::zeros(0, n), DVector::zeros(0))),
            }
        };
        let (h1, b1) = block(&self.ineq, "inequality row length")?;
        let (h2, b2) = block(&self.eq, "equality row length")?;
        Ok(ConvexSet::Polyhedron(Polyhedron::new(
            h1, b1, h2, b2, bounds,
        )?))
    }

    pub fn from_set(set: &ConvexSet) -> Self {
        let b = set.bounds();
        let bx = BoxSpec {
            lb: b.lb.iter().copied().collect(),
            ub: b.ub.iter().copied().collect(),
        };
        match set {
            ConvexSet::Box(_) => SetSpec {
                bx,
                ineq: None,
                eq: None,
            },
            ConvexSet::Polyhedron(p) => {
                let block = |m: &DMatrix<f64>, r: &DVector<f64>| {
                    (m.nrows() > 0).then(|| LinearSpec {
                        H: matrix_rows(m),
                        h: r.iter().copied().collect(),
                    })
                };
                SetSpec {
                    bx,
                    ineq: block(&p.h1, &p.b1),
                    eq: block(&p.h2, &p.b2),
                }
            }
        }
    }
}
