//! Certified W1 radii for ReLU classifiers.
//!
//! Certification happens in the flow domain. A W1 ball of radius `ε` around
//! `μ` is contained in the image of the L1 ball `B_ε(δ^μ)` under `δ ↦ R + Aδ`,
//! so certifying the lifted network on that L1 ball certifies the W1 ball.
//! Intersecting the L1 ball with the feasible flows `{δ : R + Aδ ≥ 0}` gives
//! a smaller region and a tighter certificate.
//!
//! Bounds on the network over a region come from linear relaxation of the
//! ReLUs with backward substitution. Every substituted linear functional is
//! minimized exactly over the region: in closed form on the ball, by LP on the
//! ball intersected with the polytope.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{apply_flow, Flow, FlowMatrix, GridImage, GridShape, PixelValues};
use crate::linprog::{solve_lp_with, BallPolytope, LinearProgram, LpOptions};
use crate::network::{lift_network, LiftedNetwork, Network};
use crate::transport::{delta_inverse, CouplingStrategy};

/// A named reference distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub id: String,
    pub image: GridImage,
}

impl Reference {
    pub fn new(id: impl Into<String>, image: GridImage) -> Self {
        Self {
            id: id.into(),
            image,
        }
    }

    pub fn uniform(shape: GridShape) -> Self {
        Self::new("uniform", GridImage::uniform(shape))
    }

    pub fn point(shape: GridShape, i: usize, j: usize) -> Result<Self> {
        Ok(Self::new(format!("point:{i},{j}"), GridImage::point(shape, i, j)?))
    }

    pub fn random_uniform<R: Rng + ?Sized>(shape: GridShape, rng: &mut R, id: impl Into<String>) -> Self {
        Self::new(id, GridImage::random_uniform(shape, rng))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CertMethod {
    Vanilla,
    FineTunedFeasibility,
    MultiReference,
    LinearExactVanilla,
    LinearExactFineTuned,
}

impl CertMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            CertMethod::Vanilla => "vanilla",
            CertMethod::FineTunedFeasibility => "finetuned",
            CertMethod::MultiReference => "multiref",
            CertMethod::LinearExactVanilla => "linear-vanilla",
            CertMethod::LinearExactFineTuned => "linear-finetuned",
        }
    }
}

impl fmt::Display for CertMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-reference certifier used inside a multi-reference run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum BaseMethod {
    #[default]
    Vanilla,
    FineTuned,
}

impl FromStr for BaseMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(BaseMethod::Vanilla),
            "finetuned" => Ok(BaseMethod::FineTuned),
            other => Err(Error::InvalidArgument(format!(
                "unknown certification method {other:?} (expected vanilla or finetuned)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub radius: f64,
    pub method: CertMethod,
    pub reference_id: String,
    pub flow_strategy: CouplingStrategy,
    /// Certified class.
    pub label: usize,
    pub witness: Option<Flow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// First radius tried before doubling.
    pub start: f64,
    /// Absolute bisection resolution.
    pub tol: f64,
    /// Largest radius ever reported; `None` means the grid diameter.
    pub cap: Option<f64>,
    pub lp: LpOptions,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            start: 1e-3,
            tol: 1e-4,
            cap: None,
            lp: LpOptions::default(),
        }
    }
}

impl SearchConfig {
    pub fn cap_for(&self, shape: GridShape) -> f64 {
        self.cap.unwrap_or_else(|| shape.diameter())
    }
}

#[derive(Debug, Clone)]
pub struct BoundQuery<'a> {
    pub net: &'a LiftedNetwork,
    pub center: &'a Flow,
    pub radius: f64,
    /// Also require `R + Aδ ≥ 0` with `R` the lifted network's reference.
    pub feasibility: bool,
    pub label: usize,
    pub lp: LpOptions,
}

enum Region<'a> {
    Ball { center: &'a Flow, radius: f64 },
    Polytope { center: &'a Flow, radius: f64, lp: BallPolytope },
}

impl Region<'_> {
    fn ball_min(center: &Flow, radius: f64, g: &[f64]) -> f64 {
        let dot: f64 = g.iter().zip(center.as_slice()).map(|(a, b)| a * b).sum();
        let inf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        dot - radius * inf
    }

    /// Lower bound on `min gᵀδ` over the region; `need_lp` lets the caller skip
    /// the LP when the ball value already settles the question.
    fn min(&mut self, g: &[f64], need_lp: impl Fn(f64) -> bool) -> Result<f64> {
        match self {
            Region::Ball { center, radius } => Ok(Self::ball_min(center, *radius, g)),
            Region::Polytope { center, radius, lp } => {
                let ball = Self::ball_min(center, *radius, g);
                if !need_lp(ball) {
                    return Ok(ball);
                }
                Ok(lp.minimize(g)?.max(ball))
            }
        }
    }
}

/// Pre-activation bounds of one hidden layer.
struct Bounds {
    lower: Array1<f64>,
    upper: Array1<f64>,
}

/// Substitutes `Λ z_k + c` back to the input, relaxing every hidden ReLU.
fn back_substitute(
    net: &LiftedNetwork,
    bounds: &[Bounds],
    k: usize,
    mut lambda: Array2<f64>,
    mut c: Array1<f64>,
) -> (Array2<f64>, Array1<f64>) {
    let layers = net.layers();
    for j in (1..=k).rev() {
        c += &lambda.dot(layers[j].bias());
        let mut coeff = lambda.dot(layers[j].weights());
        let b = &bounds[j - 1];
        for (mut row, cr) in coeff.outer_iter_mut().zip(c.iter_mut()) {
            for (i, a) in row.iter_mut().enumerate() {
                let (l, u) = (b.lower[i], b.upper[i]);
                if l >= 0.0 {
                    continue;
                }
                if u <= 0.0 {
                    *a = 0.0;
                    continue;
                }
                if *a >= 0.0 {
                    if u <= -l {
                        *a = 0.0;
                    }
                } else {
                    let s = u / (u - l);
                    *cr += *a * (-s * l);
                    *a *= s;
                }
            }
        }
        lambda = coeff;
    }
    c += &lambda.dot(layers[0].bias());
    (lambda.dot(layers[0].weights()), c)
}

fn layer_bounds(net: &LiftedNetwork, region: &mut Region<'_>) -> Result<Vec<Bounds>> {
    let layers = net.layers();
    let mut bounds: Vec<Bounds> = Vec::with_capacity(layers.len() - 1);
    for k in 0..layers.len() - 1 {
        let width = layers[k].outputs();
        let mut lambda = Array2::zeros((2 * width, width));
        for i in 0..width {
            lambda[[i, i]] = 1.0;
            lambda[[width + i, i]] = -1.0;
        }
        let (g, c) = back_substitute(net, &bounds, k, lambda, Array1::zeros(2 * width));
        let mut lower = Array1::zeros(width);
        let mut upper = Array1::zeros(width);
        // ball values first; the LP only matters for neurons the ball leaves unstable
        let (center, radius) = (region_center(region), region_radius(region));
        let ball: Vec<f64> = (0..2 * width)
            .map(|r| c[r] + Region::ball_min(center, radius, g.row(r).as_slice().expect("contiguous")))
            .collect();
        for i in 0..width {
            let (bl, bu) = (ball[i], -ball[width + i]);
            let unstable = bl < 0.0 && bu > 0.0;
            lower[i] = c[i] + region.min(g.row(i).as_slice().expect("contiguous"), |_| unstable)?;
            upper[i] = -(c[width + i]
                + region.min(g.row(width + i).as_slice().expect("contiguous"), |_| unstable)?);
        }
        bounds.push(Bounds { lower, upper });
    }
    Ok(bounds)
}

fn region_center<'a>(region: &Region<'a>) -> &'a Flow {
    match region {
        Region::Ball { center, .. } | Region::Polytope { center, .. } => center,
    }
}

fn region_radius(region: &Region<'_>) -> f64 {
    match region {
        Region::Ball { radius, .. } | Region::Polytope { radius, .. } => *radius,
    }
}

/// Lower bounds on `f_y − f_t` over the region, one per competitor `t ≠ y` in index order.
fn margins_over(
    net: &LiftedNetwork,
    region: &mut Region<'_>,
    label: usize,
    need_lp: impl Fn(f64) -> bool + Copy,
) -> Result<Vec<f64>> {
    let bounds = layer_bounds(net, region)?;
    let classes = net.class_count();
    let mut lambda = Array2::zeros((classes - 1, classes));
    for (r, t) in (0..classes).filter(|&t| t != label).enumerate() {
        lambda[[r, label]] = 1.0;
        lambda[[r, t]] = -1.0;
    }
    let k = net.layers().len() - 1;
    let (g, c) = back_substitute(net, &bounds, k, lambda, Array1::zeros(classes - 1));
    let mut out = Vec::with_capacity(classes - 1);
    for r in 0..classes - 1 {
        let v = region.min(g.row(r).as_slice().expect("contiguous"), |ball| need_lp(c[r] + ball))?;
        out.push(c[r] + v);
    }
    Ok(out)
}

fn check_query(q: &BoundQuery<'_>) -> Result<()> {
    if !(q.radius >= 0.0) || !q.radius.is_finite() {
        return Err(Error::InvalidArgument(format!("radius must be >= 0, got {}", q.radius)));
    }
    q.net.shape().ensure_same(&q.center.shape(), "bound query center")?;
    if q.label >= q.net.class_count() {
        return Err(Error::InvalidArgument(format!("label {} out of range", q.label)));
    }
    Ok(())
}

fn ball_margins(q: &BoundQuery<'_>) -> Result<Vec<f64>> {
    let mut region = Region::Ball {
        center: q.center,
        radius: q.radius,
    };
    margins_over(q.net, &mut region, q.label, |_| false)
}

fn polytope_region<'a>(q: &BoundQuery<'a>) -> Result<Region<'a>> {
    let matrix = FlowMatrix::new(q.net.shape());
    let lp = BallPolytope::new(q.net.reference(), q.center, q.radius, &matrix, q.lp)?;
    Ok(Region::Polytope {
        center: q.center,
        radius: q.radius,
        lp,
    })
}

/// Sound lower bounds on `f̃_y − f̃_t` for every `t ≠ y` over the query region.
/// With the feasibility constraint each entry is at least the ball-only bound.
pub fn margin_lower_bound(q: &BoundQuery<'_>) -> Result<Vec<f64>> {
    check_query(q)?;
    let ball = ball_margins(q)?;
    if !q.feasibility {
        return Ok(ball);
    }
    let mut region = polytope_region(q)?;
    let poly = margins_over(q.net, &mut region, q.label, |_| true)?;
    Ok(ball.into_iter().zip(poly).map(|(a, b)| a.max(b)).collect())
}

/// Whether every margin bound over the query region is positive.
fn certifies(q: &BoundQuery<'_>) -> Result<bool> {
    if ball_margins(q)?.iter().all(|&m| m > 0.0) {
        return Ok(true);
    }
    if !q.feasibility {
        return Ok(false);
    }
    let mut region = polytope_region(q)?;
    // a competitor the ball already rules out needs no LP
    let bounds = margins_over(q.net, &mut region, q.label, |ball| ball <= 0.0)?;
    Ok(bounds.iter().all(|&m| m > 0.0))
}

/// Largest radius in the doubling/bisection search that passes `check`.
fn search(cfg: &SearchConfig, cap: f64, mut check: impl FnMut(f64) -> Result<bool>) -> Result<f64> {
    if !check(0.0)? {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut e = cfg.start.min(cap);
    let hi = loop {
        if e >= cap {
            if check(cap)? {
                return Ok(cap);
            }
            break cap;
        }
        if check(e)? {
            lo = e;
            e *= 2.0;
        } else {
            break e;
        }
    };
    let mut hi = hi;
    while hi - lo > cfg.tol {
        let mid = 0.5 * (lo + hi);
        if check(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Certified radius of the lifted network around `center` for `label`.
pub fn certify_flow(
    net: &LiftedNetwork,
    center: &Flow,
    label: usize,
    feasibility: bool,
    cfg: &SearchConfig,
) -> Result<f64> {
    let cap = cfg.cap_for(net.shape());
    let query = |radius: f64, feasibility: bool| BoundQuery {
        net,
        center,
        radius,
        feasibility,
        label,
        lp: cfg.lp,
    };
    let vanilla = search(cfg, cap, |r| certifies(&query(r, false)))?;
    if !feasibility || vanilla >= cap {
        return Ok(vanilla);
    }
    let tuned = search(cfg, cap, |r| {
        if r <= vanilla {
            return Ok(true);
        }
        certifies(&query(r, true))
    })?;
    Ok(tuned.max(vanilla))
}

fn prepare(
    net: &Network,
    reference: &Reference,
    mu: &GridImage,
    strategy: CouplingStrategy,
) -> Result<(LiftedNetwork, Flow, usize)> {
    net.shape().ensure_same(&mu.shape(), "image")?;
    let matrix = FlowMatrix::new(net.shape());
    let lifted = lift_network(net, &reference.image, &matrix)?;
    let center = delta_inverse(&reference.image, mu, strategy)?;
    let label = net.classify_image(mu)?;
    Ok((lifted, center, label))
}

fn certify_single(
    net: &Network,
    reference: &Reference,
    mu: &GridImage,
    strategy: CouplingStrategy,
    cfg: &SearchConfig,
    feasibility: bool,
) -> Result<Certificate> {
    let (lifted, center, label) = prepare(net, reference, mu, strategy)?;
    let radius = certify_flow(&lifted, &center, label, feasibility, cfg)?;
    Ok(Certificate {
        radius,
        method: if feasibility {
            CertMethod::FineTunedFeasibility
        } else {
            CertMethod::Vanilla
        },
        reference_id: reference.id.clone(),
        flow_strategy: strategy,
        label,
        witness: None,
    })
}

/// Certifies the L1 ball around `δ^μ` in the flow domain.
pub fn certify_vanilla(
    net: &Network,
    reference: &Reference,
    mu: &GridImage,
    strategy: CouplingStrategy,
    cfg: &SearchConfig,
) -> Result<Certificate> {
    certify_single(net, reference, mu, strategy, cfg, false)
}

/// Certifies the L1 ball intersected with the feasible flows.
pub fn certify_finetuned(
    net: &Network,
    reference: &Reference,
    mu: &GridImage,
    strategy: CouplingStrategy,
    cfg: &SearchConfig,
) -> Result<Certificate> {
    certify_single(net, reference, mu, strategy, cfg, true)
}

/// One certificate per reference, in input order.
pub fn certify_each_reference(
    net: &Network,
    mu: &GridImage,
    references: &[Reference],
    base: BaseMethod,
    strategy: CouplingStrategy,
    cfg: &SearchConfig,
) -> Result<Vec<Certificate>> {
    references
        .par_iter()
        .map(|r| match base {
            BaseMethod::Vanilla => certify_vanilla(net, r, mu, strategy, cfg),
            BaseMethod::FineTuned => certify_finetuned(net, r, mu, strategy, cfg),
        })
        .collect()
}

/// Best certificate over several references; the first reference wins ties.
pub fn certify_multi_reference(
    net: &Network,
    mu: &GridImage,
    references: &[Reference],
    base: BaseMethod,
    strategy: CouplingStrategy,
    cfg: &SearchConfig,
) -> Result<Certificate> {
    if references.is_empty() {
        return Err(Error::InvalidArgument("at least one reference is required".into()));
    }
    let all = certify_each_reference(net, mu, references, base, strategy, cfg)?;
    Ok(best_of(all))
}

pub(crate) fn best_of(all: Vec<Certificate>) -> Certificate {
    let mut best: Option<Certificate> = None;
    for c in all {
        if best.as_ref().map_or(true, |b| c.radius > b.radius) {
            best = Some(c);
        }
    }
    let mut best = best.expect("nonempty");
    best.method = CertMethod::MultiReference;
    best
}

/// Per-competitor margin functionals `w_t·δ + d_t` of a linear lifted network.
fn linear_margins(lifted: &LiftedNetwork, label: usize) -> Vec<(usize, Vec<f64>, f64)> {
    let layer = &lifted.layers()[0];
    let (w, b) = (layer.weights(), layer.bias());
    (0..layer.outputs())
        .filter(|&t| t != label)
        .map(|t| {
            let row: Vec<f64> = w.row(label).iter().zip(w.row(t).iter()).map(|(a, c)| a - c).collect();
            (t, row, b[label] - b[t])
        })
        .collect()
}

fn prepare_linear(
    net: &Network,
    reference: &Reference,
    mu: &GridImage,
    label: usize,
    strategy: CouplingStrategy,
) -> Result<(LiftedNetwork, Flow)> {
    if !net.is_linear() {
        return Err(Error::InvalidArgument("closed-form radii need a single-layer network".into()));
    }
    if label >= net.class_count() {
        return Err(Error::InvalidArgument(format!("label {label} out of range")));
    }
    net.shape().ensure_same(&mu.shape(), "image")?;
    let lifted = lift_network(net, &reference.image, &FlowMatrix::new(net.shape()))?;
    let center = delta_inverse(&reference.image, mu, strategy)?;
    Ok((lifted, center))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact L1 radius of a linear classifier in the flow domain: the L1 distance
/// from `δ^μ` to the nearest decision hyperplane. The witness lies on it.
pub fn linear_vanilla_radius(
    net: &Network,
    reference: &Reference,
    mu: &GridImage,
    label: usize,
    strategy: CouplingStrategy,
    cfg: &SearchConfig,
) -> Result<Certificate> {
    let (lifted, center) = prepare_linear(net, reference, mu, label, strategy)?;
    let cap = cfg.cap_for(net.shape());
    let mut best: Option<(f64, Flow)> = None;
    for (_, w, d) in linear_margins(&lifted, label) {
        let (mut j, mut big) = (0, 0.0f64);
        for (k, v) in w.iter().enumerate() {
            if v.abs() > big {
                big = v.abs();
                j = k;
            }
        }
        if big == 0.0 {
            continue;
        }
        let value = dot(&w, center.as_slice()) + d;
        let alpha = (-d - dot(&w, center.as_slice())) / w[j];
        let radius = if value <= 0.0 { 0.0 } else { alpha.abs() };
        if best.as_ref().map_or(true, |(r, _)| radius < *r) {
            let mut witness = center.clone();
            witness.as_mut_slice()[j] += alpha;
            best = Some((radius, witness));
        }
    }
    let (radius, witness) = match best {
        Some((r, w)) if r < cap => (r, Some(w)),
        Some(_) | None => (cap, None),
    };
    Ok(Certificate {
        radius,
        method: CertMethod::LinearExactVanilla,
        reference_id: reference.id.clone(),
        flow_strategy: strategy,
        label,
        witness,
    })
}

/// Exact minimal feasible flow perturbation that reaches a decision boundary
/// of a linear classifier: one LP per competitor class. The witness `δ*`
/// yields the closest misclassified (up to ties) image `R + Aδ*`.
pub fn linear_finetuned_radius(
    net: &Network,
    reference: &Reference,
    mu: &GridImage,
    label: usize,
    strategy: CouplingStrategy,
    cfg: &SearchConfig,
) -> Result<Certificate> {
    let (lifted, center) = prepare_linear(net, reference, mu, label, strategy)?;
    let shape = net.shape();
    let cap = cfg.cap_for(shape);
    let matrix = FlowMatrix::new(shape);
    let base = matrix.affine(&reference.image, &center)?;
    let d = shape.flow_dim();
    let mut best: Option<(f64, Flow)> = None;
    for (_, w, offset) in linear_margins(&lifted, label) {
        // δ = center + u⁺ − u⁻
        let mut lp = LinearProgram::new(vec![1.0; 2 * d]);
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); matrix.nrows()];
        for (e, col) in matrix.columns().iter().enumerate() {
            rows[col.head].push((e, -1.0));
            rows[col.head].push((d + e, 1.0));
            rows[col.tail].push((e, 1.0));
            rows[col.tail].push((d + e, -1.0));
        }
        for (row, &b) in rows.into_iter().zip(base.values()) {
            if !row.is_empty() {
                lp.add_le(row, b.max(0.0));
            }
        }
        let boundary = w
            .iter()
            .enumerate()
            .flat_map(|(e, &v)| [(e, v), (d + e, -v)])
            .filter(|&(_, v)| v != 0.0)
            .collect::<Vec<_>>();
        lp.add_le(boundary, -offset - dot(&w, center.as_slice()));
        let sol = solve_lp_with(&lp, cfg.lp)?;
        if !sol.is_optimal() {
            continue;
        }
        let radius = sol.objective_value.max(0.0);
        if best.as_ref().map_or(true, |(r, _)| radius < *r) {
            let data = (0..d)
                .map(|e| center.as_slice()[e] + sol.x[e] - sol.x[d + e])
                .collect();
            best = Some((radius, Flow::from_vec(shape, data)?));
        }
    }
    let (radius, witness) = match best {
        Some((r, w)) if r < cap => (r, Some(w)),
        Some(_) | None => (cap, None),
    };
    Ok(Certificate {
        radius,
        method: CertMethod::LinearExactFineTuned,
        reference_id: reference.id.clone(),
        flow_strategy: strategy,
        label,
        witness,
    })
}

/// Image `R + Aδ` of a witness flow, clipped and renormalized.
pub fn witness_image(reference: &GridImage, witness: &Flow) -> Result<GridImage> {
    apply_flow(reference, witness)?.into_image()
}
