//! Brute-force oracles shared by the integration tests. None of them reuses the library's
//! projection, LP or ascent code.

#![allow(dead_code)]

use std::sync::Arc;

use mmbo::geometry::{BoxSet, ConvexSet};
use mmbo::model::{Dims, MinimaxBilevelProblem, QuadraticLower, QuadraticUpper};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Calls `f` on every subset of `0..m` with at most `k` elements.
fn for_subsets(m: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        f(cur);
        if cur.len() == k {
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, k, cur, f);
            cur.pop();
        }
    }
    rec(0, m, k, &mut Vec::new(), f);
}

fn rows(g: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), g.ncols(), |i, j| g[(idx[i], j)])
}

fn entries(r: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| r[idx[i]])
}

/// Projection of `v` onto `{x : G x <= r}` by enumerating active sets and keeping the one
/// that satisfies the KKT conditions.
pub fn project_enum(g: &DMatrix<f64>, r: &DVector<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
    let n = v.len();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for_subsets(g.nrows(), n, &mut |s| {
        let x = if s.is_empty() {
            v.clone()
        } else {
            let gs = rows(g, s);
            let gram = &gs * gs.transpose();
            let Some(mu) = gram.clone().lu().solve(&(&gs * v - entries(r, s))) else {
                return;
            };
            if (&gram * &mu - (&gs * v - entries(r, s))).amax() > 1e-9 || mu.min() < -1e-10 {
                return;
            }
            v - gs.transpose() * mu
        };
        if (g * &x - r).max() > 1e-9 {
            return;
        }
        let d = (&x - v).norm();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, x));
        }
    });
    best.map(|b| b.1)
}

/// `min cᵀx` over `{G x <= r}` by enumerating vertices. `None` when no vertex is feasible.
pub fn lp_enum(c: &DVector<f64>, g: &DMatrix<f64>, r: &DVector<f64>) -> Option<f64> {
    let n = c.len();
    let mut best: Option<f64> = None;
    for_subsets(g.nrows(), n, &mut |s| {
        if s.len() != n {
            return;
        }
        let gs = rows(g, s);
        let Some(x) = gs.clone().lu().solve(&entries(r, s)) else {
            return;
        };
        if (&gs * &x - entries(r, s)).amax() > 1e-9 || (g * &x - r).max() > 1e-8 {
            return;
        }
        let val = c.dot(&x);
        if best.is_none_or(|b| val < b) {
            best = Some(val);
        }
    });
    best
}

/// Maximizer of the concave quadratic `½ wᵀ H w + bᵀ w` over `lb <= w <= ub`, found by
/// enumerating which coordinates sit at which bound and checking the KKT signs.
pub fn box_qp_max(
    h: &DMatrix<f64>,
    b: &DVector<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
) -> DVector<f64> {
    let n = b.len();
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut pattern = vec![0u8; n];
        let mut c = code;
        for p in pattern.iter_mut() {
            *p = (c % 3) as u8;
            c /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| pattern[i] == 0).collect();
        let mut w = DVector::from_fn(n, |i, _| match pattern[i] {
            1 => lb[i],
            2 => ub[i],
            _ => 0.0,
        });
        if !free.is_empty() {
            let hff = DMatrix::from_fn(free.len(), free.len(), |i, j| h[(free[i], free[j])]);
            let rhs = DVector::from_fn(free.len(), |i, _| {
                let k = free[i];
                -(b[k]
                    + (0..n)
                        .filter(|j| pattern[*j] != 0)
                        .map(|j| h[(k, j)] * w[j])
                        .sum::<f64>())
            });
            let Some(sol) = hff.lu().solve(&rhs) else {
                continue;
            };
            for (i, &k) in free.iter().enumerate() {
                w[k] = sol[i];
            }
        }
        let grad = h * &w + b;
        let tol = 1e-9;
        let ok = (0..n).all(|i| match pattern[i] {
            0 => w[i] >= lb[i] - tol && w[i] <= ub[i] + tol,
            1 => grad[i] <= tol,
            _ => grad[i] >= -tol,
        });
        if ok {
            return w;
        }
    }
    panic!("no KKT point found; the quadratic is not strictly concave");
}

/// Quadratic test problem with its raw data kept for closed-form derivations.
pub struct QuadData {
    pub problem: MinimaxBilevelProblem,
    /// Hessian of `f̄` over `(x, y)`.
    pub hf: DMatrix<f64>,
    pub qf: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
    pub p: DMatrix<f64>,
    pub cg: DMatrix<f64>,
    pub d: DVector<f64>,
}

/// Random problem with a nonconvex quadratic `f̄`, a strongly convex quadratic `g` and unit
/// boxes.
pub fn random_quadratic(dims: (usize, usize, usize), seed: u64) -> QuadData {
    let (dx, dy, dl) = dims;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
    let hf0 = m(dx + dy, dx + dy);
    let hf: DMatrix<f64> = (&hf0 + hf0.transpose()) * 0.5;
    let qf = m(dx + dy, 1).column(0).into_owned();
    let a = m(dl, dx);
    let b = m(dl, dy);
    let c = m(dl, 1).column(0).into_owned();
    let mp = m(dy, dy);
    let p = mp.transpose() * &mp + DMatrix::identity(dy, dy) * 0.5;
    let cg = m(dl, dy);
    let d = m(dy, 1).column(0).into_owned();
    let problem = MinimaxBilevelProblem::new(
        "random-quadratic",
        Dims::new(dx, dy, dl).unwrap(),
        Arc::new(QuadraticUpper::new(dx, hf.clone(), qf.clone()).unwrap()),
        a.clone(),
        b.clone(),
        c.clone(),
        Arc::new(QuadraticLower::new(p.clone(), cg.clone(), d.clone()).unwrap()),
        ConvexSet::Box(BoxSet::uniform(dx, -1.0, 1.0).unwrap()),
        ConvexSet::Box(BoxSet::uniform(dy, -1.0, 1.0).unwrap()),
        ConvexSet::Box(BoxSet::uniform(dl, -1.0, 1.0).unwrap()),
    )
    .unwrap();
    QuadData {
        problem,
        hf,
        qf,
        a,
        b,
        c,
        p,
        cg,
        d,
    }
}

impl QuadData {
    /// Hessian and linear term of `Q` in `w = (y, λ)` at the outer point, derived by hand.
    pub fn inner_quadratic(
        &self,
        rho: f64,
        tau: f64,
        x: &DVector<f64>,
        z: &DVector<f64>,
        u: &DVector<f64>,
        v: &DVector<f64>,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let (dx, dy, dl) = (x.len(), u.len(), v.len());
        let n = dy + dl;
        let mut h = DMatrix::zeros(n, n);
        let hyy =
            self.hf.view((dx, dx), (dy, dy)) - &self.p * rho - DMatrix::identity(dy, dy) * tau;
        let hyl = self.b.transpose() - self.cg.transpose() * rho;
        h.view_mut((0, 0), (dy, dy)).copy_from(&hyy);
        h.view_mut((0, dy), (dy, dl)).copy_from(&hyl);
        h.view_mut((dy, 0), (dl, dy)).copy_from(&hyl.transpose());
        h.view_mut((dy, dy), (dl, dl))
            .copy_from(&(DMatrix::identity(dl, dl) * -tau));
        let hyx = self.hf.view((dx, 0), (dy, dx));
        let by = hyx * x + self.qf.rows(dx, dy) - &self.d * rho + u * tau;
        let bl = &self.a * x - &self.c + &self.cg * z * rho + v * tau;
        let mut b = DVector::zeros(n);
        b.rows_mut(0, dy).copy_from(&by);
        b.rows_mut(dy, dl).copy_from(&bl);
        (h, b)
    }

    /// `Q` at `w = (y, λ)` from the raw data.
    #[allow(clippy::too_many_arguments)]
    pub fn q_direct(
        &self,
        rho: f64,
        tau: f64,
        x: &DVector<f64>,
        z: &DVector<f64>,
        u: &DVector<f64>,
        v: &DVector<f64>,
        y: &DVector<f64>,
        l: &DVector<f64>,
    ) -> f64 {
        let dx = x.len();
        let mut w = DVector::zeros(dx + y.len());
        w.rows_mut(0, dx).copy_from(x);
        w.rows_mut(dx, y.len()).copy_from(y);
        let f = 0.5 * w.dot(&(&self.hf * &w))
            + self.qf.dot(&w)
            + l.dot(&(&self.a * x + &self.b * y - &self.c));
        let g =
            |s: &DVector<f64>| 0.5 * s.dot(&(&self.p * s)) + l.dot(&(&self.cg * s)) + self.d.dot(s);
        f - rho * (g(y) - g(z)) - 0.5 * tau * ((y - u).norm_squared() + (l - v).norm_squared())
    }

    /// `(ϑ, y*, λ*)` from the box-QP oracle.
    pub fn vartheta_oracle(
        &self,
        rho: f64,
        tau: f64,
        x: &DVector<f64>,
        z: &DVector<f64>,
        u: &DVector<f64>,
        v: &DVector<f64>,
    ) -> (f64, DVector<f64>, DVector<f64>) {
        let (h, b) = self.inner_quadratic(rho, tau, x, z, u, v);
        let n = b.len();
        let w = box_qp_max(
            &h,
            &b,
            &DVector::from_element(n, -1.0),
            &DVector::from_element(n, 1.0),
        );
        let dy = u.len();
        let y = w.rows(0, dy).into_owned();
        let l = w.rows(dy, n - dy).into_owned();
        (self.q_direct(rho, tau, x, z, u, v, &y, &l), y, l)
    }
}

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}
