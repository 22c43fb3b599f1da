//! LPs over `B_ε(center) ∩ {δ : R + Aδ ≥ 0}` in the flow domain.
//!
//! Both programs substitute `δ = center + u⁺ − u⁻` with `u± ≥ 0`, so the L1
//! ball becomes one row `Σ(u⁺ + u⁻) ≤ ε` and feasibility becomes
//! `−A(u⁺ − u⁻) ≤ R + A·center`.

use super::{LinearProgram, LpOptions, LpSolution, LpWorkspace};
use crate::error::{Error, Result};
use crate::grid::{Flow, FlowMatrix, GridImage, PixelValues};
use crate::tol::TAU_FEAS;

/// `R + A·center`, with negatives above `-TAU_FEAS` rounded up to zero.
fn center_image(reference: &GridImage, center: &Flow, matrix: &FlowMatrix) -> Result<Vec<f64>> {
    let base = matrix.affine(reference, center)?;
    let min = base.min();
    if min < -TAU_FEAS {
        return Err(Error::Infeasible);
    }
    Ok(base.values().iter().map(|v| v.max(0.0)).collect())
}

/// Adds the ball row and the pixel nonnegativity rows on variables
/// `offset..offset + 2d` (`u⁺` then `u⁻`).
fn add_region_rows(lp: &mut LinearProgram, matrix: &FlowMatrix, base: &[f64], eps: f64, offset: usize) {
    let d = matrix.ncols();
    let ball = (0..2 * d).map(|k| (offset + k, 1.0)).collect();
    lp.add_le(ball, eps);
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); matrix.nrows()];
    for (e, col) in matrix.columns().iter().enumerate() {
        // -(A u)_p = -(u⁺ - u⁻) at the head, +(u⁺ - u⁻) at the tail
        rows[col.head].push((offset + e, -1.0));
        rows[col.head].push((offset + d + e, 1.0));
        rows[col.tail].push((offset + e, 1.0));
        rows[col.tail].push((offset + d + e, -1.0));
    }
    for (row, &b) in rows.into_iter().zip(base) {
        if !row.is_empty() {
            lp.add_le(row, b);
        }
    }
}

pub fn project_l1_feasible(
    point: &Flow,
    center: &Flow,
    eps: f64,
    reference: &GridImage,
) -> Result<Flow> {
    project_l1_feasible_with(point, center, eps, reference, LpOptions::default())
}

/// L1-nearest point to `point` in `B_eps(center) ∩ {δ : R + Aδ ≥ 0}`.
pub fn project_l1_feasible_with(
    point: &Flow,
    center: &Flow,
    eps: f64,
    reference: &GridImage,
    opts: LpOptions,
) -> Result<Flow> {
    project_l1_feasible_toward(point, center, eps, reference, None, opts)
}

/// Like [`project_l1_feasible_with`]; when `direction` is given, the nearest
/// point minimizing `directionᵀδ` is returned (the projection is not unique).
pub fn project_l1_feasible_toward(
    point: &Flow,
    center: &Flow,
    eps: f64,
    reference: &GridImage,
    direction: Option<&[f64]>,
    opts: LpOptions,
) -> Result<Flow> {
    let shape = reference.shape();
    shape.ensure_same(&point.shape(), "projection point")?;
    shape.ensure_same(&center.shape(), "projection center")?;
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("radius must be >= 0, got {eps}")));
    }
    let matrix = FlowMatrix::new(shape);
    let base = center_image(reference, center, &matrix)?;
    let d = shape.flow_dim();
    if let Some(g) = direction {
        if g.len() != d {
            return Err(Error::dim(format!("direction has {} entries, flow has {d}", g.len())));
        }
    }
    // variables: u⁺ [0, d), u⁻ [d, 2d), w⁺ [2d, 3d), w⁻ [3d, 4d)
    let mut objective = vec![0.0; 4 * d];
    objective[2 * d..].iter_mut().for_each(|v| *v = 1.0);
    let mut lp = LinearProgram::new(objective);
    for e in 0..d {
        let target = point.as_slice()[e] - center.as_slice()[e];
        lp.add_eq(
            vec![(e, 1.0), (d + e, -1.0), (2 * d + e, 1.0), (3 * d + e, -1.0)],
            target,
        );
    }
    add_region_rows(&mut lp, &matrix, &base, eps, 0);
    let mut sol = super::solve_lp_with(&lp, opts)?.into_optimal()?;
    if let Some(g) = direction.filter(|g| g.iter().any(|v| *v != 0.0)) {
        let distance = (2 * d..4 * d).map(|k| (k, 1.0)).collect();
        lp.add_le(distance, sol.objective_value + 0.1 * opts.tol);
        let mut second = vec![0.0; 4 * d];
        for e in 0..d {
            second[e] = g[e];
            second[d + e] = -g[e];
        }
        lp.objective = second;
        sol = super::solve_lp_with(&lp, opts)?.into_optimal()?;
    }
    let data = (0..d)
        .map(|e| center.as_slice()[e] + sol.x[e] - sol.x[d + e])
        .collect();
    Flow::from_vec(shape, data)
}

/// Minimizes linear functionals of the flow over the ball ∩ feasible polytope,
/// reusing the optimal basis between calls.
#[derive(Debug, Clone)]
pub struct BallPolytope {
    center: Flow,
    radius: f64,
    workspace: LpWorkspace,
    last: LpSolution,
}

impl BallPolytope {
    pub fn new(
        reference: &GridImage,
        center: &Flow,
        radius: f64,
        matrix: &FlowMatrix,
        opts: LpOptions,
    ) -> Result<Self> {
        reference.shape().ensure_same(&center.shape(), "polytope center")?;
        reference.shape().ensure_same(&matrix.shape(), "polytope matrix")?;
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!("radius must be >= 0, got {radius}")));
        }
        let base = center_image(reference, center, matrix)?;
        let d = matrix.ncols();
        let mut lp = LinearProgram::new(vec![0.0; 2 * d]);
        add_region_rows(&mut lp, matrix, &base, radius, 0);
        let (workspace, last) = LpWorkspace::solve(&lp, opts)?;
        let last = last.into_optimal()?;
        Ok(Self {
            center: center.clone(),
            radius,
            workspace,
            last,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn center(&self) -> &Flow {
        &self.center
    }

    /// `min gᵀδ` over the region. The value is lowered by the certified duality
    /// gap so it never exceeds the true minimum by more than rounding.
    pub fn minimize(&mut self, g: &[f64]) -> Result<f64> {
        let d = self.center.as_slice().len();
        if g.len() != d {
            return Err(Error::dim(format!("functional has {} entries, flow has {d}", g.len())));
        }
        let mut objective = Vec::with_capacity(2 * d);
        objective.extend_from_slice(g);
        objective.extend(g.iter().map(|v| -v));
        let sol = self.workspace.resolve(&objective)?.into_optimal()?;
        let shift: f64 = g.iter().zip(self.center.as_slice()).map(|(a, b)| a * b).sum();
        let value = shift + sol.objective_value - sol.duality_gap;
        self.last = sol;
        Ok(value)
    }

    /// Minimizer from the most recent [`BallPolytope::minimize`] call.
    pub fn last_argmin(&self) -> Flow {
        let d = self.center.as_slice().len();
        let data = (0..d)
            .map(|e| self.center.as_slice()[e] + self.last.x[e] - self.last.x[d + e])
            .collect();
        Flow::from_vec(self.center.shape(), data).expect("same shape as center")
    }

    pub fn last_solution(&self) -> &LpSolution {
        &self.last
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{flow_l1, is_feasible, GridShape};

    fn setup() -> (GridShape, GridImage, Flow) {
        let s = GridShape::new(2, 2).unwrap();
        let r = GridImage::uniform(s);
        (s, r.clone(), Flow::zeros(s))
    }

    #[test]
    fn point_inside_is_fixed() {
        let (s, r, c) = setup();
        let p = Flow::from_vec(s, vec![0.05, -0.02, 0.03, 0.0]).unwrap();
        let q = project_l1_feasible(&p, &c, 0.5, &r).unwrap();
        assert!(q.l1_distance(&p) < 1e-12);
    }

    #[test]
    fn zero_radius_gives_center() {
        let (s, r, c) = setup();
        let p = Flow::from_vec(s, vec![0.3, 0.1, -0.2, 0.05]).unwrap();
        let q = project_l1_feasible(&p, &c, 0.0, &r).unwrap();
        assert!(flow_l1(&q) < 1e-12);
    }

    #[test]
    fn output_is_feasible_and_in_ball() {
        let (s, r, c) = setup();
        let p = Flow::from_vec(s, vec![2.0, -1.0, 0.7, -3.0]).unwrap();
        let q = project_l1_feasible(&p, &c, 0.4, &r).unwrap();
        assert!(is_feasible(&r, &q, TAU_FEAS).unwrap());
        assert!(q.l1_distance(&c) <= 0.4 + 1e-7);
    }

    #[test]
    fn direction_breaks_ties_among_nearest_points() {
        let (s, r, c) = setup();
        // every split of the 0.2 excess between the two coordinates is equally near
        let p = Flow::from_vec(s, vec![0.15, 0.15, 0.0, 0.0]).unwrap();
        let plain = project_l1_feasible(&p, &c, 0.1, &r).unwrap();
        let g = [0.0, 1.0, 0.0, 0.0];
        let q = project_l1_feasible_toward(&p, &c, 0.1, &r, Some(&g), LpOptions::default()).unwrap();
        assert!((q.l1_distance(&p) - plain.l1_distance(&p)).abs() < 1e-7);
        assert!(q.as_slice()[1].abs() < 1e-7);
        assert!((q.as_slice()[0] - 0.1).abs() < 1e-7);
    }

    #[test]
    fn infeasible_center_is_rejected() {
        let (s, r, _) = setup();
        let bad = Flow::from_vec(s, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            project_l1_feasible(&bad, &bad, 0.1, &r),
            Err(Error::Infeasible)
        ));
    }

    #[test]
    fn polytope_is_tighter_than_ball() {
        let (s, r, _) = setup();
        let mu = GridImage::point(s, 0, 0).unwrap();
        // flow from uniform to the corner
        let mut center = Flow::zeros(s);
        center.set_right(0, 0, -0.5);
        center.set_down(0, 0, -0.25);
        center.set_down(0, 1, -0.25);
        let m = FlowMatrix::new(s);
        assert_eq!(m.affine(&r, &center).unwrap().values(), mu.mass());
        let mut poly = BallPolytope::new(&r, &center, 0.5, &m, LpOptions::default()).unwrap();
        // moving mass out of the corner to the right is allowed, to the left is not
        let g = vec![-1.0, 0.0, 0.0, 0.0];
        let ball = g.iter().zip(center.as_slice()).map(|(a, b)| a * b).sum::<f64>() - 0.5;
        let lp = poly.minimize(&g).unwrap();
        assert!((lp - ball).abs() < 1e-9);
        let g = vec![1.0, 0.0, 0.0, 0.0];
        let ball = g.iter().zip(center.as_slice()).map(|(a, b)| a * b).sum::<f64>() - 0.5;
        let lp = poly.minimize(&g).unwrap();
        // Only a circulation around the 4-cycle can lower this edge: cost 4t <= 0.5.
        assert!((lp - (-0.5 - 0.125)).abs() < 1e-9);
        assert!(lp > ball + 0.3);
    }
}
