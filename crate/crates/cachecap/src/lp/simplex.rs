//! Dense two-phase primal simplex. Pivoting starts with Dantzig's rule and
//! falls back to Bland's rule after a stretch of non-improving pivots, so
//! degenerate instances terminate.

use super::scalar::LpScalar;
use super::{LinearProgram, LpSolution, LpStatus};
use crate::error::{Error, Result};

const STALL_LIMIT: usize = 100;

struct Tableau<T> {
    ncols: usize,
    rows: Vec<Vec<T>>, // constraint rows; each ncols + 1 wide, rhs last
    obj: Vec<T>,       // reduced-cost row (z_j - c_j), ncols + 1 wide
    basis: Vec<usize>,
    banned: Vec<bool>,
    bland: bool,
    stall: usize,
}

impl<T: LpScalar> Tableau<T> {
    fn rhs(&self, i: usize) -> &T {
        &self.rows[i][self.ncols]
    }

    fn objective(&self) -> T {
        self.obj[self.ncols].clone()
    }

    /// Rebuilds the reduced-cost row for a cost vector: `z_j - c_j` with
    /// `z_j = sum_i c_basis(i) * a_ij`.
    fn reset_objective(&mut self, costs: &[T]) {
        let width = self.ncols + 1;
        let mut obj = vec![T::zero(); width];
        for j in 0..self.ncols {
            obj[j] = -costs[j].clone();
        }
        for (i, row) in self.rows.iter().enumerate() {
            let cb = costs[self.basis[i]].clone();
            if !cb.is_zero() {
                for j in 0..width {
                    obj[j] = obj[j].clone() + cb.clone() * row[j].clone();
                }
            }
        }
        self.obj = obj;
        self.bland = false;
        self.stall = 0;
    }

    fn pivot(&mut self, prow: usize, pcol: usize) {
        let pv = self.rows[prow][pcol].clone();
        let width = self.ncols + 1;
        for j in 0..width {
            self.rows[prow][j] = self.rows[prow][j].clone() / pv.clone();
        }
        for i in 0..self.rows.len() {
            if i == prow {
                continue;
            }
            let factor = self.rows[i][pcol].clone();
            if factor.is_zero() {
                continue;
            }
            for j in 0..width {
                let delta = factor.clone() * self.rows[prow][j].clone();
                self.rows[i][j] = self.rows[i][j].clone() - delta;
            }
            self.rows[i][pcol] = T::zero();
        }
        let factor = self.obj[pcol].clone();
        if !factor.is_zero() {
            for j in 0..width {
                let delta = factor.clone() * self.rows[prow][j].clone();
                self.obj[j] = self.obj[j].clone() - delta;
            }
            self.obj[pcol] = T::zero();
        }
        self.basis[prow] = pcol;
    }

    fn entering(&self) -> Option<usize> {
        let tol = T::pivot_tol();
        let neg_tol = -tol;
        if self.bland {
            (0..self.ncols).find(|&j| !self.banned[j] && self.obj[j] < neg_tol)
        } else {
            let mut best: Option<(usize, T)> = None;
            for j in 0..self.ncols {
                if self.banned[j] || !(self.obj[j] < neg_tol) {
                    continue;
                }
                match &best {
                    Some((_, val)) if !(self.obj[j] < *val) => {}
                    _ => best = Some((j, self.obj[j].clone())),
                }
            }
            best.map(|(j, _)| j)
        }
    }

    /// Min-ratio leaving row; ties broken towards the smallest basis index
    /// so Bland's rule applies end to end once engaged.
    fn leaving(&self, pcol: usize) -> Option<usize> {
        let tol = T::pivot_tol();
        let mut best: Option<(usize, T)> = None;
        for i in 0..self.rows.len() {
            let a = &self.rows[i][pcol];
            if !(*a > tol) {
                continue;
            }
            let ratio = self.rhs(i).clone() / a.clone();
            best = match best {
                None => Some((i, ratio)),
                Some((bi, bratio)) => {
                    if ratio < bratio
                        || (ratio == bratio && self.basis[i] < self.basis[bi])
                    {
                        Some((i, ratio))
                    } else {
                        Some((bi, bratio))
                    }
                }
            };
        }
        best.map(|(i, _)| i)
    }

    /// Runs pivots until optimal or unbounded.
    fn run(&mut self, max_iters: usize) -> Result<LpStatus> {
        for _ in 0..max_iters {
            let Some(pcol) = self.entering() else {
                return Ok(LpStatus::Optimal);
            };
            let Some(prow) = self.leaving(pcol) else {
                return Ok(LpStatus::Unbounded);
            };
            let before = self.objective();
            self.pivot(prow, pcol);
            if !self.bland {
                if self.objective() > before {
                    self.stall = 0;
                } else {
                    self.stall += 1;
                    if self.stall >= STALL_LIMIT {
                        self.bland = true;
                    }
                }
            }
        }
        Err(Error::LpNumerical(format!(
            "simplex hit the {max_iters}-pivot cap"
        )))
    }
}

pub(super) fn solve<T: LpScalar>(lp: &LinearProgram<T>) -> Result<LpSolution<T>> {
    let n = lp.num_vars;
    let m = lp.rows.len();
    let negated: Vec<bool> = lp.rows.iter().map(|r| r.rhs < T::zero()).collect();
    let num_art = negated.iter().filter(|&&x| x).count();
    let ncols = n + m + num_art;

    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut art_col = n + m;
    for (i, row) in lp.rows.iter().enumerate() {
        let mut dense = vec![T::zero(); ncols + 1];
        for (j, v) in &row.coeffs {
            dense[*j] = dense[*j].clone() + v.clone();
        }
        dense[n + i] = T::one();
        dense[ncols] = row.rhs.clone();
        if negated[i] {
            for v in dense.iter_mut() {
                *v = -v.clone();
            }
            dense[art_col] = T::one();
            basis.push(art_col);
            art_col += 1;
        } else {
            basis.push(n + i);
        }
        rows.push(dense);
    }

    let mut tab = Tableau {
        ncols,
        rows,
        obj: vec![T::zero(); ncols + 1],
        basis,
        banned: vec![false; ncols],
        bland: false,
        stall: 0,
    };
    let max_iters = 20_000 + 50 * (n + m);

    if num_art > 0 {
        // Phase 1: maximize minus the sum of artificials.
        let mut costs = vec![T::zero(); ncols];
        for c in costs.iter_mut().take(ncols).skip(n + m) {
            *c = -T::one();
        }
        tab.reset_objective(&costs);
        let status = tab.run(max_iters)?;
        if status != LpStatus::Optimal {
            return Err(Error::LpNumerical("phase 1 came out unbounded".into()));
        }
        let infeas = -tab.objective();
        if infeas > T::from_f64(1e-7) {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                objective_value: T::zero(),
                primal: vec![T::zero(); n],
                dual: vec![T::zero(); m],
                primal_residual: 0.0,
                dual_residual: 0.0,
                duality_gap: 0.0,
            });
        }
        // Drive leftover artificials out of the basis where possible.
        for i in 0..m {
            if tab.basis[i] >= n + m {
                let tol = T::pivot_tol();
                if let Some(j) =
                    (0..n + m).find(|&j| tab.rows[i][j].abs_val() > tol)
                {
                    tab.pivot(i, j);
                }
            }
        }
        for j in (n + m)..ncols {
            tab.banned[j] = true;
        }
    }

    let mut costs = vec![T::zero(); ncols];
    costs[..n].clone_from_slice(&lp.objective);
    tab.reset_objective(&costs);
    let status = tab.run(max_iters)?;

    if status == LpStatus::Unbounded {
        return Ok(LpSolution {
            status,
            objective_value: T::zero(),
            primal: vec![T::zero(); n],
            dual: vec![T::zero(); m],
            primal_residual: 0.0,
            dual_residual: 0.0,
            duality_gap: 0.0,
        });
    }

    let mut primal = vec![T::zero(); n];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            primal[b] = tab.rhs(i).clone();
        }
    }
    // Duals sit in the reduced-cost row under the slack columns; rows that
    // were negated flip the sign of their slack.
    let mut dual = vec![T::zero(); m];
    for (i, d) in dual.iter_mut().enumerate() {
        let v = tab.obj[n + i].clone();
        *d = if negated[i] { -v } else { v };
    }
    let objective_value = tab.objective();

    let (primal_residual, dual_residual, duality_gap) =
        residuals(lp, &primal, &dual, &objective_value);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective_value,
        primal,
        dual,
        primal_residual,
        dual_residual,
        duality_gap,
    })
}

/// Relative feasibility and gap residuals, computed in the scalar and
/// reported as `f64`.
fn residuals<T: LpScalar>(
    lp: &LinearProgram<T>,
    primal: &[T],
    dual: &[T],
    objective: &T,
) -> (f64, f64, f64) {
    let mut primal_res = 0.0f64;
    for (row, y) in lp.rows.iter().zip(dual.iter()) {
        let mut ax = T::zero();
        for (j, v) in &row.coeffs {
            ax = ax + v.clone() * primal[*j].clone();
        }
        let viol = (ax - row.rhs.clone()).to_f64() / (1.0 + row.rhs.to_f64().abs());
        primal_res = primal_res.max(viol);
        primal_res = primal_res.max(-y.to_f64());
    }
    for x in primal {
        primal_res = primal_res.max(-x.to_f64());
    }

    // Dual feasibility: A^T y >= c on every structural variable.
    let mut aty = vec![T::zero(); lp.num_vars];
    for (row, y) in lp.rows.iter().zip(dual.iter()) {
        if y.is_zero() {
            continue;
        }
        for (j, v) in &row.coeffs {
            aty[*j] = aty[*j].clone() + v.clone() * y.clone();
        }
    }
    let mut dual_res = 0.0f64;
    for (j, c) in lp.objective.iter().enumerate() {
        let viol = (c.clone() - aty[j].clone()).to_f64() / (1.0 + c.to_f64().abs());
        dual_res = dual_res.max(viol);
    }

    let mut by = T::zero();
    for (row, y) in lp.rows.iter().zip(dual.iter()) {
        by = by + row.rhs.clone() * y.clone();
    }
    let gap = (by - objective.clone()).to_f64().abs() / (1.0 + objective.to_f64().abs());
    (primal_res.max(0.0), dual_res.max(0.0), gap)
}
