//! Couplings between grid images and the flows they induce.
//!
//! A coupling `π` is turned into a flow by routing every transported amount
//! along an L-shaped path: first along the source row to the target column,
//! then along the target column to the target row. Because the path length
//! equals the L1 ground distance, the flow norm never exceeds the transport
//! cost of `π`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{Flow, FlowMatrix, GridImage, GridShape, PixelValues};
use crate::linprog::{solve_lp_with, LinearProgram, LpOptions};
use crate::tol::TAU_MASS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
pub enum CouplingStrategy {
    /// Greedy fill over pixels in row-major order.
    #[default]
    NorthWestCorner,
    /// Independent coupling `source ⊗ target`.
    Product,
    /// Optimal coupling for the L1 ground cost.
    ExactOT,
}

impl CouplingStrategy {
    pub const ALL: [CouplingStrategy; 3] = [
        CouplingStrategy::NorthWestCorner,
        CouplingStrategy::Product,
        CouplingStrategy::ExactOT,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CouplingStrategy::NorthWestCorner => "nw",
            CouplingStrategy::Product => "product",
            CouplingStrategy::ExactOT => "exact",
        }
    }
}

impl fmt::Display for CouplingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CouplingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nw" | "northwest" => Ok(CouplingStrategy::NorthWestCorner),
            "product" => Ok(CouplingStrategy::Product),
            "exact" | "ot" => Ok(CouplingStrategy::ExactOT),
            other => Err(Error::InvalidArgument(format!(
                "unknown coupling strategy {other:?} (expected nw, product or exact)"
            ))),
        }
    }
}

/// One entry of a sparse coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Move {
    pub from: usize,
    pub to: usize,
    pub mass: f64,
}

/// Sparse coupling between two images on the same grid; only nonzero entries are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    shape: GridShape,
    moves: Vec<Move>,
}

impl TransportPlan {
    pub fn new(shape: GridShape, moves: Vec<Move>) -> Result<Self> {
        let p = shape.pixels();
        for mv in &moves {
            if mv.from >= p || mv.to >= p {
                return Err(Error::dim(format!("move {mv:?} outside grid {shape}")));
            }
            if !(mv.mass >= 0.0) {
                return Err(Error::Mass(format!("negative or NaN transported mass {}", mv.mass)));
            }
        }
        Ok(Self { shape, moves })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn moves(&self) -> &[Move] {
        &self.moves
    }

    /// Row sums (source marginal) and column sums (target marginal).
    pub fn marginals(&self) -> (Vec<f64>, Vec<f64>) {
        let p = self.shape.pixels();
        let (mut src, mut dst) = (vec![0.0; p], vec![0.0; p]);
        for mv in &self.moves {
            src[mv.from] += mv.mass;
            dst[mv.to] += mv.mass;
        }
        (src, dst)
    }

    /// Whether this is a coupling of `source` and `target` within `tol`.
    pub fn couples(&self, source: &GridImage, target: &GridImage, tol: f64) -> bool {
        if source.shape() != self.shape || target.shape() != self.shape {
            return false;
        }
        let (src, dst) = self.marginals();
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol);
        close(&src, source.mass()) && close(&dst, target.mass())
    }

    /// `Σ π · ‖x − y‖₁`.
    pub fn cost(&self) -> f64 {
        self.moves
            .iter()
            .map(|mv| mv.mass * pixel_distance(self.shape, mv.from, mv.to) as f64)
            .sum()
    }
}

pub fn pixel_distance(shape: GridShape, a: usize, b: usize) -> usize {
    let (i, j) = shape.coords(a);
    let (k, l) = shape.coords(b);
    i.abs_diff(k) + j.abs_diff(l)
}

fn check_pair(source: &GridImage, target: &GridImage) -> Result<()> {
    source.shape().ensure_same(&target.shape(), "coupling")?;
    for (name, img) in [("source", source), ("target", target)] {
        let total: f64 = img.mass().iter().sum();
        if (total - 1.0).abs() > TAU_MASS {
            return Err(Error::Mass(format!("{name} has total mass {total}")));
        }
    }
    Ok(())
}

pub fn make_coupling(
    source: &GridImage,
    target: &GridImage,
    strategy: CouplingStrategy,
) -> Result<TransportPlan> {
    check_pair(source, target)?;
    let shape = source.shape();
    let moves = match strategy {
        CouplingStrategy::NorthWestCorner => north_west_corner(source.mass(), target.mass()),
        CouplingStrategy::Product => {
            let mut moves = Vec::new();
            for (from, &a) in source.mass().iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (to, &b) in target.mass().iter().enumerate() {
                    if b > 0.0 {
                        moves.push(Move { from, to, mass: a * b });
                    }
                }
            }
            moves
        }
        CouplingStrategy::ExactOT => {
            let (_, flow) = exact_w1(source, target)?;
            decompose_flow(source, target, &flow)
        }
    };
    TransportPlan::new(shape, moves)
}

/// Greedy matching of two equal-mass vectors in index order.
fn north_west_corner(supply: &[f64], demand: &[f64]) -> Vec<Move> {
    let mut moves = Vec::new();
    let (mut i, mut j) = (0, 0);
    let (mut left, mut need) = (
        supply.first().copied().unwrap_or(0.0),
        demand.first().copied().unwrap_or(0.0),
    );
    while i < supply.len() && j < demand.len() {
        let amount = left.min(need);
        if amount > 0.0 {
            moves.push(Move {
                from: i,
                to: j,
                mass: amount,
            });
        }
        left -= amount;
        need -= amount;
        // Advance whichever side ran out; on the last index absorb rounding leftovers.
        if left <= need {
            i += 1;
            if i < supply.len() {
                left = supply[i];
            } else if need > 0.0 && j < demand.len() {
                if let Some(last) = moves.last_mut() {
                    if last.to == j {
                        last.mass += need;
                    }
                }
            }
        } else {
            j += 1;
            if j < demand.len() {
                need = demand[j];
            } else if left > 0.0 {
                if let Some(last) = moves.last_mut() {
                    if last.from == i {
                        last.mass += left;
                    }
                }
            }
        }
    }
    moves
}

/// Splits an optimal flow into source-to-target moves; unmoved mass stays on the diagonal.
fn decompose_flow(source: &GridImage, target: &GridImage, flow: &Flow) -> Vec<Move> {
    let shape = source.shape();
    let matrix = FlowMatrix::new(shape);
    let p = shape.pixels();
    let mu = source.mass();
    let nu = target.mass();
    let mut remaining: Vec<f64> = flow.as_slice().to_vec();
    // out-edges of a pixel: (edge, sign) where sign * flow > 0 means leaving it
    let mut incident: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p];
    for (e, col) in matrix.columns().iter().enumerate() {
        incident[col.tail].push((e, 1.0));
        incident[col.head].push((e, -1.0));
    }
    let other_end = |e: usize, from: usize| {
        let c = matrix.columns()[e];
        if c.tail == from {
            c.head
        } else {
            c.tail
        }
    };
    let mut supply: Vec<f64> = (0..p).map(|k| (mu[k] - nu[k]).max(0.0)).collect();
    let mut demand: Vec<f64> = (0..p).map(|k| (nu[k] - mu[k]).max(0.0)).collect();
    let mut moves: Vec<Move> = Vec::new();
    const EPS: f64 = 1e-15;
    for start in 0..p {
        while supply[start] > EPS {
            let mut path: Vec<(usize, f64)> = Vec::new();
            let mut visited = vec![false; p];
            let mut at = start;
            visited[at] = true;
            let mut bottleneck = supply[start];
            let end = loop {
                if at != start && demand[at] > EPS {
                    break Some(at);
                }
                let next = incident[at]
                    .iter()
                    .find(|&&(e, s)| s * remaining[e] > EPS && !visited[other_end(e, at)]);
                let Some(&(e, s)) = next else {
                    break None;
                };
                bottleneck = bottleneck.min(s * remaining[e]);
                path.push((e, s));
                at = other_end(e, at);
                visited[at] = true;
            };
            let Some(end) = end else {
                break;
            };
            let amount = bottleneck.min(demand[end]);
            for (e, s) in path {
                remaining[e] -= s * amount;
            }
            supply[start] -= amount;
            demand[end] -= amount;
            moves.push(Move {
                from: start,
                to: end,
                mass: amount,
            });
        }
    }
    // Rounding leftovers (if any) are matched directly.
    let leftover = north_west_corner(&supply, &demand);
    moves.extend(leftover.into_iter().filter(|mv| mv.mass > 0.0));
    let mut out_mass = vec![0.0; p];
    for mv in &moves {
        out_mass[mv.from] += mv.mass;
    }
    for k in 0..p {
        let stay = mu[k] - out_mass[k];
        if stay > 0.0 {
            moves.push(Move {
                from: k,
                to: k,
                mass: stay,
            });
        }
    }
    moves
}

/// Routes every move along its L-shaped path (row first, then column).
pub fn plan_to_flow(plan: &TransportPlan) -> Flow {
    let shape = plan.shape();
    let mut delta = Flow::zeros(shape);
    for mv in plan.moves() {
        if mv.mass == 0.0 || mv.from == mv.to {
            continue;
        }
        let (i, j) = shape.coords(mv.from);
        let (k, l) = shape.coords(mv.to);
        if l >= j {
            for step in j..l {
                delta.add_right(i, step, mv.mass);
            }
        } else {
            for step in l..j {
                delta.add_right(i, step, -mv.mass);
            }
        }
        if k >= i {
            for step in i..k {
                delta.add_down(step, l, mv.mass);
            }
        } else {
            for step in k..i {
                delta.add_down(step, l, -mv.mass);
            }
        }
    }
    delta
}

/// A flow `δ` with `apply_flow(reference, δ) = image`, built from a coupling.
pub fn delta_inverse(
    reference: &GridImage,
    image: &GridImage,
    strategy: CouplingStrategy,
) -> Result<Flow> {
    let plan = make_coupling(reference, image, strategy)?;
    Ok(plan_to_flow(&plan))
}

pub fn exact_w1(mu: &GridImage, nu: &GridImage) -> Result<(f64, Flow)> {
    exact_w1_with(mu, nu, LpOptions::default())
}

/// Exact 1-Wasserstein distance under the L1 ground metric, as
/// `min ‖δ‖₁ s.t. A δ = ν − μ`, together with a minimizing flow.
pub fn exact_w1_with(mu: &GridImage, nu: &GridImage, opts: LpOptions) -> Result<(f64, Flow)> {
    check_pair(mu, nu)?;
    let shape = mu.shape();
    let matrix = FlowMatrix::new(shape);
    let d = matrix.ncols();
    if d == 0 {
        return Ok((0.0, Flow::zeros(shape)));
    }
    let mut lp = LinearProgram::new(vec![1.0; 2 * d]);
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); matrix.nrows()];
    for (e, col) in matrix.columns().iter().enumerate() {
        rows[col.head].push((e, 1.0));
        rows[col.head].push((d + e, -1.0));
        rows[col.tail].push((e, -1.0));
        rows[col.tail].push((d + e, 1.0));
    }
    for (p, row) in rows.into_iter().enumerate() {
        lp.add_eq(row, nu.mass()[p] - mu.mass()[p]);
    }
    let sol = solve_lp_with(&lp, opts)?;
    assert!(
        sol.is_optimal(),
        "W1 program between equal-mass images must be solvable, got {:?}",
        sol.status
    );
    let data = (0..d).map(|e| sol.x[e] - sol.x[d + e]).collect();
    Ok((sol.objective_value.max(0.0), Flow::from_vec(shape, data)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::apply_flow;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape(n: usize, m: usize) -> GridShape {
        GridShape::new(n, m).unwrap()
    }

    fn roundtrip_error(r: &GridImage, mu: &GridImage, delta: &Flow) -> f64 {
        let out = apply_flow(r, delta).unwrap();
        out.values()
            .iter()
            .zip(mu.mass())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn product_reproduces_marginals() {
        let s = shape(3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mu = GridImage::random_uniform(s, &mut rng);
        let plan = make_coupling(&mu, &mu, CouplingStrategy::Product).unwrap();
        assert!(plan.couples(&mu, &mu, 1e-12));
    }

    #[test]
    fn unique_coupling_on_two_pixels() {
        let s = shape(1, 2);
        let a = GridImage::point(s, 0, 0).unwrap();
        let b = GridImage::point(s, 0, 1).unwrap();
        for strategy in CouplingStrategy::ALL {
            let plan = make_coupling(&a, &b, strategy).unwrap();
            let moved: Vec<_> = plan.moves().iter().filter(|m| m.mass > 0.0).collect();
            assert_eq!(moved.len(), 1, "{strategy}");
            assert_eq!((moved[0].from, moved[0].to), (0, 1));
            assert!((moved[0].mass - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_plan_cost_uniform_to_corner() {
        let s = shape(2, 2);
        let r = GridImage::uniform(s);
        let mu = GridImage::point(s, 0, 0).unwrap();
        let plan = make_coupling(&r, &mu, CouplingStrategy::ExactOT).unwrap();
        assert!(plan.couples(&r, &mu, 1e-12));
        // 0.25 * (0 + 1 + 1 + 2)
        assert!((plan.cost() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_plan_gives_zero_flow() {
        let s = shape(3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mu = GridImage::random_uniform(s, &mut rng);
        let plan = make_coupling(&mu, &mu, CouplingStrategy::NorthWestCorner).unwrap();
        let delta = plan_to_flow(&plan);
        assert!(delta.l1() < 1e-15);
    }

    #[test]
    fn two_steps_right() {
        let s = shape(1, 3);
        let plan = TransportPlan::new(s, vec![Move { from: 0, to: 2, mass: 1.0 }]).unwrap();
        assert_eq!(plan_to_flow(&plan).as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn up_left_move_uses_row_then_column() {
        let s = shape(2, 2);
        // (2,2) -> (1,1): left along row 2, then up along column 1
        let plan = TransportPlan::new(s, vec![Move { from: 3, to: 0, mass: 0.25 }]).unwrap();
        let delta = plan_to_flow(&plan);
        assert_eq!(delta.right(1, 0), -0.25);
        assert_eq!(delta.down(0, 0), -0.25);
        assert_eq!(delta.right(0, 0), 0.0);
        assert_eq!(delta.down(0, 1), 0.0);
        let source = RawGridHelper::point_values(s, 3, 0.25);
        let out = apply_flow(&source, &delta).unwrap();
        assert_eq!(out.values(), &[0.25, 0.0, 0.0, 0.0]);
    }

    struct RawGridHelper;
    impl RawGridHelper {
        fn point_values(s: GridShape, p: usize, v: f64) -> crate::grid::RawGrid {
            let mut vals = vec![0.0; s.pixels()];
            vals[p] = v;
            crate::grid::RawGrid::new(s, vals).unwrap()
        }
    }

    #[test]
    fn gather_round_trip_all_strategies() {
        let s = shape(2, 2);
        let r = GridImage::uniform(s);
        let mu = GridImage::point(s, 0, 0).unwrap();
        for strategy in CouplingStrategy::ALL {
            let delta = delta_inverse(&r, &mu, strategy).unwrap();
            assert!(roundtrip_error(&r, &mu, &delta) < 1e-12, "{strategy}");
        }
        let exact = delta_inverse(&r, &mu, CouplingStrategy::ExactOT).unwrap();
        assert!((exact.l1() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn self_inverse_nw_round_trips() {
        let s = shape(4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mu = GridImage::random_uniform(s, &mut rng);
        for strategy in CouplingStrategy::ALL {
            let delta = delta_inverse(&mu, &mu, strategy).unwrap();
            assert!(roundtrip_error(&mu, &mu, &delta) < 1e-12);
        }
    }

    #[test]
    fn w1_small_cases() {
        let s = shape(2, 2);
        let a = GridImage::point(s, 0, 0).unwrap();
        let b = GridImage::point(s, 1, 1).unwrap();
        assert!((exact_w1(&a, &b).unwrap().0 - 2.0).abs() < 1e-12);
        assert!(exact_w1(&a, &a).unwrap().0.abs() < 1e-12);
        let single = GridImage::uniform(shape(1, 1));
        assert_eq!(exact_w1(&single, &single).unwrap().0, 0.0);
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in CouplingStrategy::ALL {
            assert_eq!(s.as_str().parse::<CouplingStrategy>().unwrap(), s);
        }
        assert!("sinkhorn".parse::<CouplingStrategy>().is_err());
    }

    #[test]
    fn shape_mismatch() {
        let a = GridImage::uniform(shape(2, 2));
        let b = GridImage::uniform(shape(2, 3));
        assert!(matches!(
            make_coupling(&a, &b, CouplingStrategy::Product),
            Err(Error::Dimension(_))
        ));
    }
}
