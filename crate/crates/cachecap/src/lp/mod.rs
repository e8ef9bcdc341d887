//! Linear programs in the standard form `maximize c.x, A x <= b, x >= 0`,
//! solved by a dense two-phase primal simplex with dual extraction.

mod scalar;
mod simplex;

pub use scalar::LpScalar;

use crate::error::Result;

/// One `<=` row, sparse.
#[derive(Debug, Clone)]
pub struct Row<T> {
    pub coeffs: Vec<(usize, T)>,
    pub rhs: T,
}

/// `maximize objective . x  subject to  rows, x >= 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram<T> {
    pub num_vars: usize,
    pub objective: Vec<T>,
    pub rows: Vec<Row<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Solver output. At `Optimal` the residuals certify the solution: primal
/// and dual feasibility and the duality gap are all reported relative and
/// should sit at or below 1e-8 for well-posed double-precision instances
/// (identically zero for exact scalars).
#[derive(Debug, Clone)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    pub objective_value: T,
    pub primal: Vec<T>,
    pub dual: Vec<T>,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub duality_gap: f64,
}

impl<T: LpScalar> LinearProgram<T> {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            num_vars,
            objective: vec![T::zero(); num_vars],
            rows: Vec::new(),
        }
    }

    pub fn set_objective(&mut self, var: usize, coeff: T) {
        self.objective[var] = coeff;
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, T)>, rhs: T) -> usize {
        debug_assert!(coeffs.iter().all(|(j, _)| *j < self.num_vars));
        self.rows.push(Row { coeffs, rhs });
        self.rows.len() - 1
    }
}

/// Solves the program. `Err` signals a numerical failure (iteration cap or
/// residuals above tolerance), which is reported distinctly from a
/// certified `Infeasible`/`Unbounded` status.
pub fn solve_lp<T: LpScalar>(lp: &LinearProgram<T>) -> Result<LpSolution<T>> {
    simplex::solve(lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ExactScalar;

    fn lp1() -> LinearProgram<f64> {
        // max x s.t. x <= 3
        let mut lp = LinearProgram::new(1);
        lp.set_objective(0, 1.0);
        lp.add_row(vec![(0, 1.0)], 3.0);
        lp
    }

    #[test]
    fn single_variable() {
        let sol = solve_lp(&lp1()).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective_value - 3.0).abs() < 1e-12);
        assert!((sol.primal[0] - 3.0).abs() < 1e-12);
        // The binding row carries dual multiplier one.
        assert!((sol.dual[0] - 1.0).abs() < 1e-12);
        assert!(sol.duality_gap < 1e-12);
    }

    #[test]
    fn redundant_rows_terminate() {
        // Heavily degenerate: duplicated and dominated rows.
        let mut lp = LinearProgram::new(2);
        lp.set_objective(0, 1.0);
        lp.set_objective(1, 1.0);
        for _ in 0..5 {
            lp.add_row(vec![(0, 1.0), (1, 1.0)], 1.0);
        }
        lp.add_row(vec![(0, 1.0)], 1.0);
        lp.add_row(vec![(1, 1.0)], 1.0);
        lp.add_row(vec![(0, 0.0), (1, 0.0)], 0.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective_value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LinearProgram::new(2);
        lp.set_objective(0, 1.0);
        lp.add_row(vec![(1, 1.0)], 4.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn infeasible_detected() {
        // x <= -1 with x >= 0 is empty.
        let mut lp = LinearProgram::new(1);
        lp.set_objective(0, 1.0);
        lp.add_row(vec![(0, 1.0)], -1.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn negative_rhs_feasible() {
        // max -x s.t. -x <= -2, x <= 5  -> x = 2.
        let mut lp = LinearProgram::new(1);
        lp.set_objective(0, -1.0);
        lp.add_row(vec![(0, -1.0)], -2.0);
        lp.add_row(vec![(0, 1.0)], 5.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.primal[0] - 2.0).abs() < 1e-9);
        assert!((sol.objective_value + 2.0).abs() < 1e-9);
        // Strong duality: b.y = -2 with y0 on the negated row.
        assert!(sol.duality_gap < 1e-9);
        assert!((sol.dual[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_phase_rational() {
        let mut lp: LinearProgram<ExactScalar> = LinearProgram::new(2);
        lp.set_objective(0, LpScalar::from_f64(3.0));
        lp.set_objective(1, LpScalar::from_f64(2.0));
        lp.add_row(
            vec![(0, LpScalar::from_f64(1.0)), (1, LpScalar::from_f64(1.0))],
            LpScalar::from_f64(4.0),
        );
        lp.add_row(
            vec![(0, LpScalar::from_f64(1.0)), (1, LpScalar::from_f64(3.0))],
            LpScalar::from_f64(6.0),
        );
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_eq!(sol.objective_value, LpScalar::from_f64(12.0));
        assert_eq!(sol.primal_residual, 0.0);
        assert_eq!(sol.dual_residual, 0.0);
        assert_eq!(sol.duality_gap, 0.0);
    }
}
