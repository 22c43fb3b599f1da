//! Dense two-phase primal simplex over `M y = b, y ≥ 0`.
//!
//! Entering variable: most negative reduced cost, lowest index on ties. After a
//! run of degenerate pivots the rule switches to Bland's (first improving
//! column, lowest-index leaving row) until the objective moves again, which
//! rules out cycling. Optimal bases are refactorized from the original data
//! and the tableau is rebuilt if the recomputed solution disagrees.

use super::lu::Lu;
use super::{
    Constraint, FarkasWitness, LinearProgram, LpOptions, LpSolution, LpStatus, LpWitness,
};
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 30;
const MAX_REFINEMENTS: usize = 4;

#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `x = shift + y`
    Shifted { col: usize, shift: f64 },
    /// `x = shift - y`
    Mirrored { col: usize, shift: f64 },
    /// `x = y⁺ - y⁻`
    Split { pos: usize, neg: usize },
}

#[derive(Debug, Clone, Copy)]
enum RowOrigin {
    Le(usize),
    Eq(usize),
    Upper(usize),
}

/// `min cᵀy + offset  s.t.  M y = b ≥ 0,  y ≥ 0`.
#[derive(Debug, Clone)]
struct StandardForm {
    m: usize,
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    offset: f64,
    var_map: Vec<VarMap>,
    rows: Vec<(RowOrigin, f64)>,
    /// Slack column with coefficient +1, usable as an initial basic variable.
    slack: Vec<Option<usize>>,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> Self {
        let mut ncols = 0;
        let mut var_map = Vec::with_capacity(lp.num_vars());
        let mut uppers = Vec::new();
        for j in 0..lp.num_vars() {
            let (l, u) = (lp.lower[j], lp.upper[j]);
            let map = if l.is_finite() {
                if u.is_finite() {
                    uppers.push(j);
                }
                ncols += 1;
                VarMap::Shifted {
                    col: ncols - 1,
                    shift: l,
                }
            } else if u.is_finite() {
                ncols += 1;
                VarMap::Mirrored {
                    col: ncols - 1,
                    shift: u,
                }
            } else {
                ncols += 2;
                VarMap::Split {
                    pos: ncols - 2,
                    neg: ncols - 1,
                }
            };
            var_map.push(map);
        }
        let mut rows: Vec<(RowOrigin, f64)> = Vec::new();
        rows.extend((0..lp.inequalities.len()).map(|i| (RowOrigin::Le(i), 1.0)));
        rows.extend((0..lp.equalities.len()).map(|i| (RowOrigin::Eq(i), 1.0)));
        rows.extend(uppers.iter().map(|&j| (RowOrigin::Upper(j), 1.0)));
        let m = rows.len();
        let n_slack = lp.inequalities.len() + uppers.len();
        let n = ncols + n_slack;
        let mut a = vec![0.0; m * n];
        let mut b = vec![0.0; m];
        let mut slack = vec![None; m];
        let mut next_slack = ncols;
        for (r, (origin, sign)) in rows.iter_mut().enumerate() {
            let row = &mut a[r * n..(r + 1) * n];
            let mut slack_col = None;
            let rhs = match *origin {
                RowOrigin::Le(i) => {
                    slack_col = Some(next_slack);
                    next_slack += 1;
                    substitute(&lp.inequalities[i], &var_map, row)
                }
                RowOrigin::Eq(i) => substitute(&lp.equalities[i], &var_map, row),
                RowOrigin::Upper(j) => {
                    slack_col = Some(next_slack);
                    next_slack += 1;
                    let VarMap::Shifted { col, .. } = var_map[j] else {
                        unreachable!("upper rows only exist for shifted variables")
                    };
                    row[col] = 1.0;
                    lp.upper[j] - lp.lower[j]
                }
            };
            if let Some(s) = slack_col {
                row[s] = 1.0;
            }
            if rhs < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
                b[r] = -rhs;
                *sign = -1.0;
            } else {
                b[r] = rhs;
                slack[r] = slack_col;
            }
        }
        let mut sf = Self {
            m,
            n,
            a,
            b,
            c: vec![0.0; n],
            offset: 0.0,
            var_map,
            rows,
            slack,
        };
        sf.set_objective(&lp.objective);
        sf
    }

    fn set_objective(&mut self, objective: &[f64]) {
        self.c.iter_mut().for_each(|v| *v = 0.0);
        self.offset = 0.0;
        for (map, &cj) in self.var_map.iter().zip(objective) {
            match *map {
                VarMap::Shifted { col, shift } => {
                    self.c[col] += cj;
                    self.offset += cj * shift;
                }
                VarMap::Mirrored { col, shift } => {
                    self.c[col] -= cj;
                    self.offset += cj * shift;
                }
                VarMap::Split { pos, neg } => {
                    self.c[pos] += cj;
                    self.c[neg] -= cj;
                }
            }
        }
    }

    fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.m).map(move |r| self.a[r * self.n + j])
    }

    fn to_original(&self, y: &[f64]) -> Vec<f64> {
        self.var_map
            .iter()
            .map(|map| match *map {
                VarMap::Shifted { col, shift } => shift + y[col],
                VarMap::Mirrored { col, shift } => shift - y[col],
                VarMap::Split { pos, neg } => y[pos] - y[neg],
            })
            .collect()
    }

    fn direction_to_original(&self, dy: &[f64]) -> Vec<f64> {
        self.var_map
            .iter()
            .map(|map| match *map {
                VarMap::Shifted { col, .. } => dy[col],
                VarMap::Mirrored { col, .. } => -dy[col],
                VarMap::Split { pos, neg } => dy[pos] - dy[neg],
            })
            .collect()
    }

    /// Maps phase-one row duals (`yᵀM ≤ 0`, `yᵀb > 0`) to original multipliers.
    fn farkas(&self, lp: &LinearProgram, y: &[f64]) -> FarkasWitness {
        let n = lp.num_vars();
        let mut w = FarkasWitness {
            inequalities: vec![0.0; lp.inequalities.len()],
            equalities: vec![0.0; lp.equalities.len()],
            lower: vec![0.0; n],
            upper: vec![0.0; n],
        };
        for (r, &(origin, sign)) in self.rows.iter().enumerate() {
            let lambda = -sign * y[r];
            match origin {
                RowOrigin::Le(i) => w.inequalities[i] = lambda.max(0.0),
                RowOrigin::Eq(i) => w.equalities[i] = lambda,
                RowOrigin::Upper(j) => w.upper[j] = lambda.max(0.0),
            }
        }
        let mut combo = vec![0.0; n];
        let rows = lp
            .inequalities
            .iter()
            .zip(&w.inequalities)
            .chain(lp.equalities.iter().zip(&w.equalities));
        for (row, &lambda) in rows {
            for &(j, a) in &row.coeffs {
                combo[j] += lambda * a;
            }
        }
        for (j, map) in self.var_map.iter().enumerate() {
            match map {
                VarMap::Shifted { .. } => w.lower[j] = (combo[j] + w.upper[j]).max(0.0),
                VarMap::Mirrored { .. } => w.upper[j] = (-combo[j]).max(0.0),
                VarMap::Split { .. } => {}
            }
        }
        w
    }
}

fn substitute(row: &Constraint, var_map: &[VarMap], out: &mut [f64]) -> f64 {
    let mut rhs = row.rhs;
    for &(j, a) in &row.coeffs {
        match var_map[j] {
            VarMap::Shifted { col, shift } => {
                out[col] += a;
                rhs -= a * shift;
            }
            VarMap::Mirrored { col, shift } => {
                out[col] -= a;
                rhs -= a * shift;
            }
            VarMap::Split { pos, neg } => {
                out[pos] += a;
                out[neg] -= a;
            }
        }
    }
    rhs
}

enum Outcome {
    Optimal,
    Unbounded(usize),
}

#[derive(Debug, Clone)]
struct Tableau {
    m: usize,
    /// Real columns (structural + slack); artificials follow.
    n_real: usize,
    width: usize,
    t: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    blocked: Vec<bool>,
    /// Row of each artificial column.
    art_row: Vec<usize>,
    d: Vec<f64>,
    z: f64,
}

impl Tableau {
    fn initial(sf: &StandardForm) -> Self {
        let art_rows: Vec<usize> = (0..sf.m).filter(|&r| sf.slack[r].is_none()).collect();
        let width = sf.n + art_rows.len();
        let mut t = vec![0.0; sf.m * width];
        for r in 0..sf.m {
            t[r * width..r * width + sf.n].copy_from_slice(&sf.a[r * sf.n..(r + 1) * sf.n]);
        }
        let mut basis = vec![0; sf.m];
        for (r, s) in sf.slack.iter().enumerate() {
            if let Some(s) = s {
                basis[r] = *s;
            }
        }
        for (k, &r) in art_rows.iter().enumerate() {
            t[r * width + sf.n + k] = 1.0;
            basis[r] = sf.n + k;
        }
        let mut in_basis = vec![false; width];
        for &j in &basis {
            in_basis[j] = true;
        }
        Self {
            m: sf.m,
            n_real: sf.n,
            width,
            t,
            rhs: sf.b.clone(),
            basis,
            in_basis,
            blocked: vec![false; width],
            art_row: art_rows,
            d: vec![0.0; width],
            z: 0.0,
        }
    }

    fn has_artificial_basis(&self) -> bool {
        self.basis.iter().any(|&j| j >= self.n_real)
    }

    /// Reduced costs and objective for column costs `cost` (artificials use `art_cost`).
    fn price(&mut self, cost: &[f64], art_cost: f64) {
        let cost_of = |j: usize| if j < self.n_real { cost[j] } else { art_cost };
        let w = self.width;
        for j in 0..w {
            self.d[j] = cost_of(j);
        }
        self.z = 0.0;
        for r in 0..self.m {
            let cb = cost_of(self.basis[r]);
            if cb == 0.0 {
                continue;
            }
            let row = &self.t[r * w..(r + 1) * w];
            for (dj, &tj) in self.d.iter_mut().zip(row) {
                *dj -= cb * tj;
            }
            self.z += cb * self.rhs[r];
        }
        for &j in &self.basis {
            self.d[j] = 0.0;
        }
    }

    fn pivot(&mut self, p: usize, q: usize) {
        let w = self.width;
        let inv = 1.0 / self.t[p * w + q];
        for v in &mut self.t[p * w..(p + 1) * w] {
            *v *= inv;
        }
        self.t[p * w + q] = 1.0;
        self.rhs[p] *= inv;
        let prow: Vec<f64> = self.t[p * w..(p + 1) * w].to_vec();
        let nz: Vec<usize> = (0..w).filter(|&j| prow[j] != 0.0).collect();
        let rp = self.rhs[p];
        for i in 0..self.m {
            if i == p {
                continue;
            }
            let f = self.t[i * w + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * w..(i + 1) * w];
            for &j in &nz {
                row[j] -= f * prow[j];
            }
            row[q] = 0.0;
            self.rhs[i] -= f * rp;
        }
        let f = self.d[q];
        if f != 0.0 {
            for &j in &nz {
                self.d[j] -= f * prow[j];
            }
            self.d[q] = 0.0;
            self.z += f * rp;
        }
        self.in_basis[self.basis[p]] = false;
        self.basis[p] = q;
        self.in_basis[q] = true;
    }

    fn iterate(&mut self, opt_tol: f64, budget: &mut usize) -> Result<Outcome> {
        let w = self.width;
        let mut degenerate = 0usize;
        loop {
            let bland = degenerate >= DEGENERATE_RUN;
            let mut enter = None;
            let mut best = -opt_tol;
            for j in 0..w {
                if self.blocked[j] || self.in_basis[j] {
                    continue;
                }
                let dj = self.d[j];
                if dj < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = dj;
                }
            }
            let Some(q) = enter else {
                return Ok(Outcome::Optimal);
            };
            let mut min_ratio = f64::INFINITY;
            for i in 0..self.m {
                let a = self.t[i * w + q];
                if a > PIVOT_TOL {
                    min_ratio = min_ratio.min(self.rhs[i].max(0.0) / a);
                }
            }
            if !min_ratio.is_finite() {
                return Ok(Outcome::Unbounded(q));
            }
            let slack = 1e-12 * (1.0 + min_ratio);
            let mut leave: Option<usize> = None;
            for i in 0..self.m {
                let a = self.t[i * w + q];
                if a <= PIVOT_TOL || self.rhs[i].max(0.0) / a > min_ratio + slack {
                    continue;
                }
                leave = match leave {
                    None => Some(i),
                    Some(k) if bland => {
                        if self.basis[i] < self.basis[k] {
                            Some(i)
                        } else {
                            Some(k)
                        }
                    }
                    Some(k) => {
                        if a > self.t[k * w + q] {
                            Some(i)
                        } else {
                            Some(k)
                        }
                    }
                };
            }
            let p = leave.expect("ratio test found a row");
            if *budget == 0 {
                return Err(Error::Stalled("simplex iteration limit reached".into()));
            }
            *budget -= 1;
            if min_ratio <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(p, q);
        }
    }

    /// Dense basis matrix taken from the original data.
    fn basis_matrix(&self, sf: &StandardForm) -> Vec<f64> {
        let m = self.m;
        let mut bm = vec![0.0; m * m];
        for (k, &j) in self.basis.iter().enumerate() {
            if j < self.n_real {
                for (r, v) in sf.column(j).enumerate() {
                    bm[r * m + k] = v;
                }
            } else {
                bm[self.art_row[j - self.n_real] * m + k] = 1.0;
            }
        }
        bm
    }

    /// Replaces the tableau body with `B⁻¹ [M | I_art]` computed from scratch.
    fn rebuild(&mut self, sf: &StandardForm, lu: &Lu, x_b: &[f64]) {
        let (m, w) = (self.m, self.width);
        let mut col = vec![0.0; m];
        for j in 0..w {
            if j < self.n_real {
                for (r, v) in sf.column(j).enumerate() {
                    col[r] = v;
                }
            } else {
                col.iter_mut().for_each(|v| *v = 0.0);
                col[self.art_row[j - self.n_real]] = 1.0;
            }
            let s = lu.solve(&col);
            for r in 0..m {
                self.t[r * w + j] = if s[r].abs() < 1e-14 { 0.0 } else { s[r] };
            }
        }
        for (r, &j) in self.basis.iter().enumerate() {
            for i in 0..m {
                self.t[i * w + j] = if i == r { 1.0 } else { 0.0 };
            }
        }
        self.rhs.copy_from_slice(x_b);
    }
}

/// Solver state that can be re-optimized for new objectives over the same
/// constraints, starting from the previous optimal basis.
#[derive(Debug, Clone)]
pub struct LpWorkspace {
    lp: LinearProgram,
    sf: StandardForm,
    tab: Tableau,
    opts: LpOptions,
    infeasible: Option<LpSolution>,
}

impl LpWorkspace {
    /// Solves `lp` and keeps the final basis for [`LpWorkspace::resolve`].
    pub fn solve(lp: &LinearProgram, opts: LpOptions) -> Result<(Self, LpSolution)> {
        lp.validate()?;
        let sf = StandardForm::build(lp);
        let tab = Tableau::initial(&sf);
        let mut ws = Self {
            lp: lp.clone(),
            sf,
            tab,
            opts,
            infeasible: None,
        };
        let mut budget = ws.budget();
        let mut iterations = 0;
        if ws.tab.has_artificial_basis() {
            if let Some(sol) = ws.phase_one(&mut budget)? {
                ws.infeasible = Some(sol.clone());
                return Ok((ws, sol));
            }
            iterations = ws.budget() - budget;
        }
        let mut sol = ws.phase_two(&mut budget)?;
        sol.iterations += iterations;
        Ok((ws, sol))
    }

    /// Re-optimizes with a new objective vector.
    pub fn resolve(&mut self, objective: &[f64]) -> Result<LpSolution> {
        if objective.len() != self.lp.num_vars() {
            return Err(Error::dim(format!(
                "objective has {} entries, program has {} variables",
                objective.len(),
                self.lp.num_vars()
            )));
        }
        if objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("objective must be finite".into()));
        }
        if let Some(sol) = &self.infeasible {
            return Ok(sol.clone());
        }
        self.lp.objective = objective.to_vec();
        self.sf.set_objective(objective);
        let mut budget = self.budget();
        self.phase_two(&mut budget)
    }

    pub fn program(&self) -> &LinearProgram {
        &self.lp
    }

    fn budget(&self) -> usize {
        self.opts
            .max_iterations
            .unwrap_or(1000 + 50 * (self.tab.m + self.tab.width))
    }

    fn opt_tol(&self) -> f64 {
        let scale = self.sf.c.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        1e-11 * scale
    }

    /// Returns `Some(infeasible solution)` or `None` once a feasible basis is found.
    fn phase_one(&mut self, budget: &mut usize) -> Result<Option<LpSolution>> {
        let zeros = vec![0.0; self.sf.n];
        self.tab.price(&zeros, 1.0);
        self.tab.iterate(1e-11, budget)?;
        let bscale = self.sf.b.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        if self.tab.z > 1e-9 * bscale {
            // Confirm with a clean dual solve before declaring infeasibility.
            let bm = self.tab.basis_matrix(&self.sf);
            let lu = Lu::factor(bm, self.tab.m)
                .ok_or_else(|| Error::Stalled("singular basis in phase one".into()))?;
            let cb: Vec<f64> = self
                .tab
                .basis
                .iter()
                .map(|&j| if j >= self.tab.n_real { 1.0 } else { 0.0 })
                .collect();
            let y = lu.solve_transpose(&cb);
            let witness = self.sf.farkas(&self.lp, &y);
            let x = self.current_x();
            let sol = LpSolution {
                status: LpStatus::Infeasible,
                max_primal_residual: self.lp.primal_residual(&x),
                x,
                objective_value: f64::NAN,
                duality_gap: f64::NAN,
                max_dual_residual: f64::NAN,
                witness: Some(LpWitness::Farkas(witness)),
                iterations: self.budget() - *budget,
            };
            return Ok(Some(sol));
        }
        // Drive remaining artificials out of the basis; rows where that is
        // impossible are redundant and keep their artificial at zero.
        let w = self.tab.width;
        for r in 0..self.tab.m {
            if self.tab.basis[r] < self.tab.n_real {
                continue;
            }
            let row = &self.tab.t[r * w..r * w + self.tab.n_real];
            let mut best: Option<(usize, f64)> = None;
            for (j, &v) in row.iter().enumerate() {
                if self.tab.in_basis[j] || v.abs() <= 1e-9 {
                    continue;
                }
                if best.map_or(true, |(_, b)| v.abs() > b) {
                    best = Some((j, v.abs()));
                }
            }
            if let Some((q, _)) = best {
                self.tab.pivot(r, q);
            }
        }
        for j in self.tab.n_real..w {
            self.tab.blocked[j] = true;
        }
        Ok(None)
    }

    fn current_y(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.sf.n];
        for (r, &j) in self.tab.basis.iter().enumerate() {
            if j < self.tab.n_real {
                y[j] = self.tab.rhs[r].max(0.0);
            }
        }
        y
    }

    fn current_x(&self) -> Vec<f64> {
        self.sf.to_original(&self.current_y())
    }

    fn phase_two(&mut self, budget: &mut usize) -> Result<LpSolution> {
        let start = *budget;
        let opt_tol = self.opt_tol();
        let feas_tol = 1e-9 * self.sf.b.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        self.tab.price(&self.sf.c, 0.0);
        let mut refinements = 0;
        loop {
            if let Outcome::Unbounded(q) = self.tab.iterate(opt_tol, budget)? {
                return Ok(self.unbounded(q, start - *budget));
            }
            let m = self.tab.m;
            let (x_b, y, reduced) = if m == 0 {
                (Vec::new(), Vec::new(), self.sf.c.clone())
            } else {
                let bm = self.tab.basis_matrix(&self.sf);
                let lu = Lu::factor(bm, m)
                    .ok_or_else(|| Error::Stalled("singular optimal basis".into()))?;
                let x_b = lu.solve(&self.sf.b);
                let cb: Vec<f64> = self
                    .tab
                    .basis
                    .iter()
                    .map(|&j| if j < self.tab.n_real { self.sf.c[j] } else { 0.0 })
                    .collect();
                let y = lu.solve_transpose(&cb);
                let mut reduced = self.sf.c.clone();
                for (r, &yr) in y.iter().enumerate() {
                    if yr == 0.0 {
                        continue;
                    }
                    let row = &self.sf.a[r * self.sf.n..(r + 1) * self.sf.n];
                    for (rj, &a) in reduced.iter_mut().zip(row) {
                        *rj -= yr * a;
                    }
                }
                let worst_primal = x_b.iter().fold(0.0f64, |a, v| a.max(-v));
                let worst_dual = (0..self.tab.n_real)
                    .filter(|&j| !self.tab.in_basis[j])
                    .fold(0.0f64, |a, j| a.max(-reduced[j]));
                if (worst_primal > feas_tol || worst_dual > opt_tol.max(1e-10))
                    && refinements < MAX_REFINEMENTS
                {
                    refinements += 1;
                    self.tab.rebuild(&self.sf, &lu, &x_b);
                    self.tab.price(&self.sf.c, 0.0);
                    continue;
                }
                self.tab.rhs.copy_from_slice(&x_b);
                (x_b, y, reduced)
            };
            let _ = x_b;
            let x = self.current_x();
            let primal = self.lp.objective_value(&x);
            let dual: f64 =
                self.sf.b.iter().zip(&y).map(|(b, y)| b * y).sum::<f64>() + self.sf.offset;
            let dual_residual = (0..self.tab.n_real).fold(0.0f64, |a, j| a.max(-reduced[j]));
            let sol = LpSolution {
                status: LpStatus::Optimal,
                max_primal_residual: self.lp.primal_residual(&x),
                objective_value: primal,
                duality_gap: (primal - dual).abs(),
                max_dual_residual: dual_residual,
                x,
                witness: None,
                iterations: start - *budget,
            };
            let tol = self.opts.tol;
            if sol.duality_gap > tol || sol.max_primal_residual > tol || dual_residual > tol {
                return Err(Error::Stalled(format!(
                    "could not certify optimum: gap {:.3e}, primal residual {:.3e}, dual residual {:.3e}",
                    sol.duality_gap, sol.max_primal_residual, dual_residual
                )));
            }
            super::audit::record(&sol);
            return Ok(sol);
        }
    }

    fn unbounded(&self, q: usize, iterations: usize) -> LpSolution {
        let w = self.tab.width;
        let mut dy = vec![0.0; self.sf.n];
        dy[q] = 1.0;
        for (r, &j) in self.tab.basis.iter().enumerate() {
            if j < self.tab.n_real {
                dy[j] = -self.tab.t[r * w + q];
            }
        }
        let x = self.current_x();
        LpSolution {
            status: LpStatus::Unbounded,
            max_primal_residual: self.lp.primal_residual(&x),
            x,
            objective_value: f64::NEG_INFINITY,
            duality_gap: f64::NAN,
            max_dual_residual: f64::NAN,
            witness: Some(LpWitness::Ray(self.sf.direction_to_original(&dy))),
            iterations,
        }
    }
}
