use nalgebra::{DMatrix, DVector};

use super::{BoxSet, FeasibilityCertificate, Polyhedron};
use crate::error::{check_dim, MmboError, Result};

const PIVOT_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 200_000;

/// Optimal basic solution of `min costᵀ v` over a polyhedron.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub value: f64,
    /// Smallest reduced cost over nonbasic structural columns at termination (`>= -1e-9` at optimality).
    pub min_reduced_cost: f64,
    pub pivots: usize,
}

/// How each original coordinate is expressed through nonnegative standard-form columns.
enum VarMap {
    /// `v = lb + s`
    Shift { col: usize, lb: f64 },
    /// `v = ub - s`
    Flip { col: usize, ub: f64 },
    /// `v = s⁺ - s⁻`
    Split { pos: usize, neg: usize },
}

struct Tableau {
    /// `m` constraint rows plus the objective row; the last column is the right-hand side.
    t: DMatrix<f64>,
    basis: Vec<usize>,
    n_struct: usize,
    n_cols: usize,
    pivots: usize,
}

impl Tableau {
    fn m(&self) -> usize {
        self.basis.len()
    }

    fn rhs_col(&self) -> usize {
        self.n_cols
    }

    fn obj_row(&self) -> usize {
        self.m()
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.t[(r, c)];
        let width = self.t.ncols();
        for j in 0..width {
            self.t[(r, j)] /= piv;
        }
        for i in 0..self.t.nrows() {
            if i == r {
                continue;
            }
            let factor = self.t[(i, c)];
            if factor != 0.0 {
                for j in 0..width {
                    let delta = factor * self.t[(r, j)];
                    self.t[(i, j)] -= delta;
                }
                self.t[(i, c)] = 0.0;
            }
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Loads `cost` into the objective row as reduced costs for the current basis.
    fn set_objective(&mut self, cost: &[f64]) {
        let obj = self.obj_row();
        for j in 0..=self.n_cols {
            self.t[(obj, j)] = if j < cost.len() { cost[j] } else { 0.0 };
        }
        for r in 0..self.m() {
            let cb = cost.get(self.basis[r]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for j in 0..=self.n_cols {
                    let delta = cb * self.t[(r, j)];
                    self.t[(obj, j)] -= delta;
                }
            }
        }
    }

    /// Bland's rule iterations over columns `< allowed`. Returns `Ok(false)` when unbounded.
    fn run(&mut self, allowed: usize) -> Result<bool> {
        let obj = self.obj_row();
        let rhs = self.rhs_col();
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(MmboError::NoConvergence {
                    what: "simplex",
                    iterations: self.pivots,
                    residual: f64::NAN,
                });
            }
            let entering =
                (0..allowed).find(|&j| self.t[(obj, j)] < -PIVOT_TOL && !self.basis.contains(&j));
            let Some(c) = entering else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m() {
                let a = self.t[(r, c)];
                if a > PIVOT_TOL {
                    let ratio = self.t[(r, rhs)].max(0.0) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((best_r, best)) => {
                            if ratio < best - 1e-12
                                || ((ratio - best).abs() <= 1e-12
                                    && self.basis[r] < self.basis[best_r])
                            {
                                Some((r, ratio))
                            } else {
                                Some((best_r, best))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Ok(false),
                Some((r, _)) => self.pivot(r, c),
            }
        }
    }

    fn remove_row(&mut self, r: usize) {
        self.t = self.t.clone().remove_row(r);
        self.basis.remove(r);
    }
}

/// Dense two-phase simplex with Bland's anti-cycling rule.
pub fn lp_simplex(cost: &DVector<f64>, poly: &Polyhedron) -> Result<LpSolution> {
    let n = poly.dim();
    check_dim("LP cost", n, cost.len())?;
    let bx: &BoxSet = &poly.bounds;

    let mut maps = Vec::with_capacity(n);
    let mut ns = 0usize;
    let mut upper_rows: Vec<(usize, f64)> = Vec::new();
    for i in 0..n {
        let (lb, ub) = (bx.lb[i], bx.ub[i]);
        if lb.is_finite() {
            maps.push(VarMap::Shift { col: ns, lb });
            if ub.is_finite() {
                upper_rows.push((ns, ub - lb));
            }
            ns += 1;
        } else if ub.is_finite() {
            maps.push(VarMap::Flip { col: ns, ub });
            ns += 1;
        } else {
            maps.push(VarMap::Split {
                pos: ns,
                neg: ns + 1,
            });
            ns += 2;
        }
    }
    // v = offset + M s
    let mut offset = DVector::zeros(n);
    let mut mmap = DMatrix::zeros(n, ns);
    for (i, m) in maps.iter().enumerate() {
        match *m {
            VarMap::Shift { col, lb } => {
                offset[i] = lb;
                mmap[(i, col)] = 1.0;
            }
            VarMap::Flip { col, ub } => {
                offset[i] = ub;
                mmap[(i, col)] = -1.0;
            }
            VarMap::Split { pos, neg } => {
                mmap[(i, pos)] = 1.0;
                mmap[(i, neg)] = -1.0;
            }
        }
    }

    let m_in = poly.h1.nrows();
    let m_up = upper_rows.len();
    let m_eq = poly.h2.nrows();
    let m_le = m_in + m_up;
    let m = m_le + m_eq;

    let a_in = &poly.h1 * &mmap;
    let b_in = &poly.b1 - &poly.h1 * &offset;
    let a_eq = &poly.h2 * &mmap;
    let b_eq = &poly.b2 - &poly.h2 * &offset;

    // Columns: structural (ns), slacks (m_le), artificials (one per row needing it).
    let mut rows: Vec<(Vec<f64>, f64, bool)> = Vec::with_capacity(m); // (coeffs on s, rhs, is_le)
    for r in 0..m_in {
        rows.push((a_in.row(r).iter().copied().collect(), b_in[r], true));
    }
    for &(col, width) in &upper_rows {
        let mut coeffs = vec![0.0; ns];
        coeffs[col] = 1.0;
        rows.push((coeffs, width, true));
    }
    for r in 0..m_eq {
        rows.push((a_eq.row(r).iter().copied().collect(), b_eq[r], false));
    }

    let needs_art: Vec<bool> = rows.iter().map(|(_, b, le)| !(*le && *b >= 0.0)).collect();
    let n_art = needs_art.iter().filter(|&&x| x).count();
    let n_cols = ns + m_le + n_art;
    let mut t = DMatrix::zeros(m + 1, n_cols + 1);
    let mut basis = vec![0usize; m];
    let mut art_col = ns + m_le;
    for (r, (coeffs, b, le)) in rows.iter().enumerate() {
        let sign = if *b < 0.0 { -1.0 } else { 1.0 };
        for j in 0..ns {
            t[(r, j)] = sign * coeffs[j];
        }
        if *le {
            t[(r, ns + r)] = sign;
        }
        t[(r, n_cols)] = sign * b;
        if needs_art[r] {
            t[(r, art_col)] = 1.0;
            basis[r] = art_col;
            art_col += 1;
        } else {
            basis[r] = ns + r;
        }
    }
    let mut tab = Tableau {
        t,
        basis,
        n_struct: ns,
        n_cols,
        pivots: 0,
    };
    let first_art = ns + m_le;

    if n_art > 0 {
        let mut phase1 = vec![0.0; n_cols];
        for c in phase1.iter_mut().skip(first_art) {
            *c = 1.0;
        }
        tab.set_objective(&phase1);
        tab.run(n_cols)?;
        let infeas = -tab.t[(tab.obj_row(), tab.rhs_col())];
        let scale = 1.0 + rows.iter().map(|r| r.1.abs()).fold(0.0, f64::max);
        if infeas > 1e-8 * scale {
            return Err(MmboError::Infeasible(format!(
                "phase-1 objective {infeas:.3e} > 0"
            )));
        }
        // Drive remaining artificials out of the basis; drop redundant rows.
        let mut r = 0;
        while r < tab.m() {
            if tab.basis[r] >= first_art {
                let col = (0..first_art)
                    .find(|&j| tab.t[(r, j)].abs() > PIVOT_TOL && !tab.basis.contains(&j));
                match col {
                    Some(c) => {
                        tab.pivot(r, c);
                        r += 1;
                    }
                    None => tab.remove_row(r),
                }
            } else {
                r += 1;
            }
        }
    }

    let struct_cost = mmap.transpose() * cost;
    let mut phase2 = vec![0.0; n_cols];
    phase2[..ns].copy_from_slice(struct_cost.as_slice());
    tab.set_objective(&phase2);
    if !tab.run(first_art)? {
        return Err(MmboError::Unbounded(
            "LP objective is unbounded below".into(),
        ));
    }

    let mut s = DVector::zeros(ns);
    for (r, &b) in tab.basis.iter().enumerate() {
        if b < tab.n_struct {
            s[b] = tab.t[(r, tab.rhs_col())];
        }
    }
    let x = &offset + &mmap * s;
    let value = cost.dot(&x);
    let obj = tab.obj_row();
    let min_reduced_cost = (0..first_art)
        .filter(|j| !tab.basis.contains(j))
        .map(|j| tab.t[(obj, j)])
        .fold(f64::INFINITY, f64::min);
    Ok(LpSolution {
        x,
        value,
        min_reduced_cost: if min_reduced_cost.is_finite() {
            min_reduced_cost
        } else {
            0.0
        },
        pivots: tab.pivots,
    })
}

/// Maximizes the common slack `t in [0, 1]` of all inequality and finite bound constraints.
pub(super) fn max_margin_point(p: &Polyhedron) -> FeasibilityCertificate {
    let n = p.dim();
    let bx = &p.bounds;
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for r in 0..p.h1.nrows() {
        let mut a = DVector::zeros(n + 1);
        a.rows_mut(0, n).copy_from(&p.h1.row(r).transpose());
        a[n] = 1.0;
        rows.push((a, p.b1[r]));
    }
    for i in 0..n {
        if bx.ub[i].is_finite() {
            let mut a = DVector::zeros(n + 1);
            a[i] = 1.0;
            a[n] = 1.0;
            rows.push((a, bx.ub[i]));
        }
        if bx.lb[i].is_finite() {
            let mut a = DVector::zeros(n + 1);
            a[i] = -1.0;
            a[n] = 1.0;
            rows.push((a, -bx.lb[i]));
        }
    }
    let h1 = DMatrix::from_fn(rows.len(), n + 1, |r, c| rows[r].0[c]);
    let b1 = DVector::from_fn(rows.len(), |r, _| rows[r].1);
    let h2 = p.h2.clone().insert_column(n, 0.0);
    let mut lb = bx.lb.clone().insert_row(n, 0.0);
    let mut ub = bx.ub.clone().insert_row(n, 1.0);
    // Equal bounds leave no room for a positive margin; keep them but let t stay at 0.
    for i in 0..n {
        if lb[i] > ub[i] {
            std::mem::swap(&mut lb[i], &mut ub[i]);
        }
    }
    let lifted = match Polyhedron::new(h1, b1, h2, p.b2.clone(), BoxSet { lb, ub }) {
        Ok(l) => l,
        Err(_) => {
            return FeasibilityCertificate {
                feasible: false,
                anchor: None,
                margin: f64::NEG_INFINITY,
            }
        }
    };
    let mut cost = DVector::zeros(n + 1);
    cost[n] = -1.0;
    match lp_simplex(&cost, &lifted) {
        Ok(sol) => FeasibilityCertificate {
            feasible: true,
            margin: sol.x[n],
            anchor: Some(sol.x.rows(0, n).into_owned()),
        },
        Err(_) => FeasibilityCertificate {
            feasible: false,
            anchor: None,
            margin: f64::NEG_INFINITY,
        },
    }
}
