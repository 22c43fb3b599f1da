//! Linear programming with checkable optimality certificates.
//!
//! [`solve_lp`] runs a dense two-phase primal simplex. Every answer is checked
//! against the original data after the fact: an `Optimal` status comes with a
//! recomputed duality gap and primal residual, `Infeasible` with a Farkas
//! multiplier vector and `Unbounded` with an improving ray. All three can be
//! verified independently through [`LinearProgram::primal_residual`],
//! [`LinearProgram::check_farkas`] and [`LinearProgram::check_ray`].

mod audit;
mod lu;
mod projection;
mod simplex;

pub use projection::{project_l1_feasible, project_l1_feasible_toward, project_l1_feasible_with, BallPolytope};
pub use audit::{solve_audit, SolveAudit};
pub use simplex::LpWorkspace;

use crate::error::{Error, Result};
use crate::tol::TAU_LP;

/// One sparse linear constraint row.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self { coeffs, rhs }
    }

    pub fn dense(row: &[f64], rhs: f64) -> Self {
        let coeffs = row
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, v)| (j, *v))
            .collect();
        Self { coeffs, rhs }
    }

    fn dot(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

/// `minimize cᵀx  s.t.  G x ≤ h,  E x = d,  lower ≤ x ≤ upper`.
///
/// Bounds may be infinite. [`LinearProgram::new`] starts with `x ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub inequalities: Vec<Constraint>,
    pub equalities: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            inequalities: Vec::new(),
            equalities: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_le(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> &mut Self {
        self.inequalities.push(Constraint::new(coeffs, rhs));
        self
    }

    pub fn add_ge(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> &mut Self {
        let neg = coeffs.into_iter().map(|(j, a)| (j, -a)).collect();
        self.inequalities.push(Constraint::new(neg, -rhs));
        self
    }

    pub fn add_eq(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> &mut Self {
        self.equalities.push(Constraint::new(coeffs, rhs));
        self
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) -> &mut Self {
        self.lower[var] = lower;
        self.upper[var] = upper;
        self
    }

    pub fn set_free(&mut self, var: usize) -> &mut Self {
        self.set_bounds(var, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::dim(format!(
                "{n} variables but {} lower / {} upper bounds",
                self.lower.len(),
                self.upper.len()
            )));
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("objective must be finite".into()));
        }
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::InvalidArgument(format!("bad bounds on variable {j}")));
            }
        }
        for row in self.inequalities.iter().chain(&self.equalities) {
            if !row.rhs.is_finite() {
                return Err(Error::InvalidArgument("right-hand side must be finite".into()));
            }
            for &(j, a) in &row.coeffs {
                if j >= n {
                    return Err(Error::dim(format!(
                        "constraint references variable {j}, program has {n}"
                    )));
                }
                if !a.is_finite() {
                    return Err(Error::InvalidArgument("coefficients must be finite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for row in &self.inequalities {
            worst = worst.max(row.dot(x) - row.rhs);
        }
        for row in &self.equalities {
            worst = worst.max((row.dot(x) - row.rhs).abs());
        }
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        worst
    }

    /// Verifies a Farkas certificate of infeasibility:
    /// `Gᵀλ_G + Eᵀλ_E + λ_u − λ_l = 0` with sign-constrained multipliers and
    /// `hᵀλ_G + dᵀλ_E + uᵀλ_u − lᵀλ_l < 0`.
    pub fn check_farkas(&self, w: &FarkasWitness, tol: f64) -> bool {
        let n = self.num_vars();
        if w.inequalities.len() != self.inequalities.len()
            || w.equalities.len() != self.equalities.len()
            || w.lower.len() != n
            || w.upper.len() != n
        {
            return false;
        }
        if w.inequalities.iter().chain(&w.lower).chain(&w.upper).any(|v| *v < -tol) {
            return false;
        }
        let mut combo = vec![0.0; n];
        let mut value = 0.0;
        let rows = self
            .inequalities
            .iter()
            .zip(&w.inequalities)
            .chain(self.equalities.iter().zip(&w.equalities));
        for (row, &lambda) in rows {
            for &(j, a) in &row.coeffs {
                combo[j] += lambda * a;
            }
            value += lambda * row.rhs;
        }
        let mut scale = 1.0f64;
        for j in 0..n {
            combo[j] += w.upper[j] - w.lower[j];
            if w.upper[j] > tol {
                if !self.upper[j].is_finite() {
                    return false;
                }
                value += w.upper[j] * self.upper[j];
            }
            if w.lower[j] > tol {
                if !self.lower[j].is_finite() {
                    return false;
                }
                value -= w.lower[j] * self.lower[j];
            }
            scale = scale.max(w.upper[j].abs()).max(w.lower[j].abs());
        }
        combo.iter().all(|v| v.abs() <= tol * scale) && value < -tol
    }

    /// Verifies that `ray` is a recession direction of the feasible set along
    /// which the objective strictly decreases.
    pub fn check_ray(&self, ray: &[f64], tol: f64) -> bool {
        if ray.len() != self.num_vars() {
            return false;
        }
        let norm = ray.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if norm == 0.0 {
            return false;
        }
        let r: Vec<f64> = ray.iter().map(|v| v / norm).collect();
        let descent = self.objective_value(&r) < -tol;
        let ineq = self.inequalities.iter().all(|row| row.dot(&r) <= tol);
        let eq = self.equalities.iter().all(|row| row.dot(&r).abs() <= tol);
        let bounds = r.iter().enumerate().all(|(j, &v)| {
            (!self.lower[j].is_finite() || v >= -tol) && (!self.upper[j].is_finite() || v <= tol)
        });
        descent && ineq && eq && bounds
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Multipliers proving that a [`LinearProgram`] has no feasible point.
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasWitness {
    pub inequalities: Vec<f64>,
    pub equalities: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpWitness {
    Farkas(FarkasWitness),
    /// Improving direction; `LpSolution::x` holds a feasible starting point.
    Ray(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// `|primal objective − dual objective|`, both recomputed from the input data.
    pub duality_gap: f64,
    pub max_primal_residual: f64,
    /// Largest negative reduced cost of the dual solution.
    pub max_dual_residual: f64,
    pub witness: Option<LpWitness>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Returns the solution if optimal, otherwise the matching error.
    pub fn into_optimal(self) -> Result<Self> {
        match self.status {
            LpStatus::Optimal => Ok(self),
            LpStatus::Infeasible => Err(Error::Infeasible),
            LpStatus::Unbounded => Err(Error::Unbounded),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    /// Bound on duality gap, primal residual and dual residual of optimal answers.
    pub tol: f64,
    /// Pivot budget; `None` picks one from the problem size.
    pub max_iterations: Option<usize>,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            tol: TAU_LP,
            max_iterations: None,
        }
    }
}

impl LpOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    solve_lp_with(lp, LpOptions::default())
}

pub fn solve_lp_with(lp: &LinearProgram, opts: LpOptions) -> Result<LpSolution> {
    LpWorkspace::solve(lp, opts).map(|(_, sol)| sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_certified(sol: &LpSolution) {
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(sol.duality_gap <= TAU_LP, "gap {}", sol.duality_gap);
        assert!(sol.max_primal_residual <= TAU_LP);
        assert!(sol.max_dual_residual <= TAU_LP);
    }

    #[test]
    fn lower_bounded_minimum() {
        // min x s.t. x >= 1
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_ge(vec![(0, 1.0)], 1.0);
        let sol = solve_lp(&lp).unwrap();
        assert_certified(&sol);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
        assert!((sol.objective_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_with_ray() {
        // min -x s.t. x >= 0
        let lp = LinearProgram::new(vec![-1.0]);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
        match sol.witness {
            Some(LpWitness::Ray(ref r)) => assert!(lp.check_ray(r, 1e-9)),
            ref other => panic!("expected ray, got {other:?}"),
        }
        assert!(lp.primal_residual(&sol.x) <= 1e-9);
    }

    #[test]
    fn infeasible_with_farkas() {
        // x + y <= 1, x + y >= 3
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_le(vec![(0, 1.0), (1, 1.0)], 1.0);
        lp.add_ge(vec![(0, 1.0), (1, 1.0)], 3.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
        match sol.witness {
            Some(LpWitness::Farkas(ref w)) => assert!(lp.check_farkas(w, 1e-9)),
            ref other => panic!("expected Farkas witness, got {other:?}"),
        }
    }

    #[test]
    fn infeasible_through_bounds() {
        // x in [0, 1], y free, x - y = 0, y >= 2
        let mut lp = LinearProgram::new(vec![0.0, 1.0]);
        lp.set_bounds(0, 0.0, 1.0).set_free(1);
        lp.add_eq(vec![(0, 1.0), (1, -1.0)], 0.0);
        lp.add_ge(vec![(1, 1.0)], 2.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
        let Some(LpWitness::Farkas(w)) = sol.witness else {
            panic!("missing witness")
        };
        assert!(lp.check_farkas(&w, 1e-9));
    }

    #[test]
    fn free_and_mirrored_variables() {
        // min x0 - x1, x0 free >= via constraint, x1 <= 2 (no lower bound)
        let mut lp = LinearProgram::new(vec![1.0, -1.0]);
        lp.set_free(0).set_bounds(1, f64::NEG_INFINITY, 2.0);
        lp.add_ge(vec![(0, 1.0)], -3.0);
        let sol = solve_lp(&lp).unwrap();
        assert_certified(&sol);
        assert!((sol.x[0] + 3.0).abs() < 1e-12);
        assert!((sol.x[1] - 2.0).abs() < 1e-12);
        assert!((sol.objective_value + 5.0).abs() < 1e-12);
    }

    #[test]
    fn classic_two_variable() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let mut lp = LinearProgram::new(vec![-3.0, -5.0]);
        lp.add_le(vec![(0, 1.0)], 4.0);
        lp.add_le(vec![(1, 2.0)], 12.0);
        lp.add_le(vec![(0, 3.0), (1, 2.0)], 18.0);
        let sol = solve_lp(&lp).unwrap();
        assert_certified(&sol);
        assert!((sol.objective_value + 36.0).abs() < 1e-10);
        assert!((sol.x[0] - 2.0).abs() < 1e-10 && (sol.x[1] - 6.0).abs() < 1e-10);
    }

    #[test]
    fn redundant_equalities() {
        // x + y = 1 twice, min x + 2y -> x = 1
        let mut lp = LinearProgram::new(vec![1.0, 2.0]);
        lp.add_eq(vec![(0, 1.0), (1, 1.0)], 1.0);
        lp.add_eq(vec![(0, 2.0), (1, 2.0)], 2.0);
        let sol = solve_lp(&lp).unwrap();
        assert_certified(&sol);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_constraints() {
        let lp = LinearProgram::new(vec![1.0, 0.0]);
        let sol = solve_lp(&lp).unwrap();
        assert_certified(&sol);
        assert_eq!(sol.objective_value, 0.0);
        let empty = LinearProgram::new(vec![]);
        assert_certified(&solve_lp(&empty).unwrap());
    }

    #[test]
    fn bad_index_is_dimension_error() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_le(vec![(3, 1.0)], 1.0);
        assert!(matches!(solve_lp(&lp), Err(Error::Dimension(_))));
    }

    #[test]
    fn iteration_limit_reports_stall() {
        let mut lp = LinearProgram::new(vec![-3.0, -5.0]);
        lp.add_le(vec![(0, 1.0)], 4.0);
        lp.add_le(vec![(1, 2.0)], 12.0);
        lp.add_le(vec![(0, 3.0), (1, 2.0)], 18.0);
        let opts = LpOptions {
            max_iterations: Some(1),
            ..LpOptions::default()
        };
        assert!(matches!(solve_lp_with(&lp, opts), Err(Error::Stalled(_))));
    }
}
