//! Projected gradient descent on the margin loss in the flow domain.
//!
//! Steps are taken on the flow `δ`; whenever the iterate leaves the feasible
//! flows or the L1 budget around `δ^μ`, it is projected back with an LP. The
//! flow norm `‖δ − δ^μ‖₁` bounds the W1 distance of the resulting image.

use crate::error::{Error, Result};
use crate::grid::{apply_flow, is_feasible, Flow, FlowMatrix, GridImage, PixelValues};
use crate::linprog::{project_l1_feasible_toward, LpOptions};
use crate::network::{lift_network, margin_loss_and_grad, Network};
use crate::tol::{TAU_FEAS, TAU_MASS};
use crate::transport::{delta_inverse, CouplingStrategy};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    /// W1 budget.
    pub eps: f64,
    pub step_size: f64,
    pub max_iters: usize,
    pub strategy: CouplingStrategy,
    /// Project after every step instead of only when a constraint is violated.
    pub project_every_step: bool,
    pub lp: LpOptions,
}

impl AttackConfig {
    pub const DEFAULT_ITERS: usize = 30;

    /// Budget `eps` with step size `0.1 · eps / max_iters`.
    pub fn new(eps: f64) -> Self {
        let max_iters = Self::DEFAULT_ITERS;
        Self {
            eps,
            step_size: Self::default_step(eps, max_iters),
            max_iters,
            strategy: CouplingStrategy::default(),
            project_every_step: false,
            lp: LpOptions::default(),
        }
    }

    pub fn default_step(eps: f64, max_iters: usize) -> f64 {
        let alpha = 0.1 * eps / max_iters.max(1) as f64;
        if alpha > 0.0 {
            alpha
        } else {
            1e-3
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(Error::InvalidArgument(format!("eps must be >= 0, got {}", self.eps)));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "step size must be > 0, got {}",
                self.step_size
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub success: bool,
    /// Misclassified image, present on success.
    pub adversarial: Option<GridImage>,
    /// `‖δ̂ − δ^μ‖₁` of the final iterate, an upper bound on the W1 distance.
    pub w1_bound: f64,
    pub iterations: usize,
    pub loss_trace: Vec<f64>,
    pub flow: Flow,
}

const PLATEAU_WINDOW: usize = 5;
const PLATEAU_DELTA: f64 = 1e-9;

fn plateaued(trace: &[f64]) -> bool {
    trace.len() > PLATEAU_WINDOW
        && trace[trace.len() - PLATEAU_WINDOW - 1..]
            .windows(2)
            .all(|w| (w[1] - w[0]).abs() < PLATEAU_DELTA)
}

/// Untargeted attack on `label` within W1 distance `cfg.eps` of `mu`.
pub fn wpgd_attack(
    net: &Network,
    reference: &GridImage,
    mu: &GridImage,
    label: usize,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    cfg.validate()?;
    let shape = net.shape();
    shape.ensure_same(&reference.shape(), "attack reference")?;
    shape.ensure_same(&mu.shape(), "attack image")?;
    let total: f64 = mu.mass().iter().sum();
    if (total - 1.0).abs() > TAU_MASS {
        return Err(Error::Mass(format!("image has total mass {total}")));
    }
    if label >= net.class_count() {
        return Err(Error::InvalidArgument(format!("label {label} out of range")));
    }
    if net.classify_image(mu)? != label {
        return Ok(AttackResult {
            success: true,
            adversarial: Some(mu.clone()),
            w1_bound: 0.0,
            iterations: 0,
            loss_trace: Vec::new(),
            flow: Flow::zeros(shape),
        });
    }
    let lifted = lift_network(net, reference, &FlowMatrix::new(shape))?;
    let center = delta_inverse(reference, mu, cfg.strategy)?;
    // among equally near points the projection keeps the one lowest along the gradient
    let project = |point: &Flow, grad: &Flow| {
        project_l1_feasible_toward(point, &center, cfg.eps, reference, Some(grad.as_slice()), cfg.lp)
    };

    let mut delta = center.clone();
    let mut trace = Vec::with_capacity(cfg.max_iters);
    let mut iterations = 0;
    for it in 1..=cfg.max_iters {
        iterations = it;
        let (loss, grad) = margin_loss_and_grad(&lifted, &delta, label)?;
        trace.push(loss);
        delta = delta.axpy(-cfg.step_size, &grad)?;
        let outside = delta.l1_distance(&center) > cfg.eps || !is_feasible(reference, &delta, TAU_FEAS)?;
        if cfg.project_every_step || outside {
            delta = project(&delta, &grad)?;
        }
        if lifted.classify(&delta)? != label {
            delta = project(&delta, &grad)?;
            let image = apply_flow(reference, &delta)?.into_image()?;
            if net.classify_image(&image)? != label {
                return Ok(AttackResult {
                    success: true,
                    adversarial: Some(image),
                    w1_bound: delta.l1_distance(&center),
                    iterations,
                    loss_trace: trace,
                    flow: delta,
                });
            }
        }
        if plateaued(&trace) {
            break;
        }
    }
    Ok(AttackResult {
        success: false,
        adversarial: None,
        w1_bound: delta.l1_distance(&center),
        iterations,
        loss_trace: trace,
        flow: delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::{linear_finetuned_radius, linear_vanilla_radius, Reference, SearchConfig};
    use crate::grid::GridShape;
    use crate::tol::TAU_LP;
    use crate::transport::exact_w1;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (Network, Reference, GridImage, usize) {
        let s = GridShape::new(3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Network::random(s, &[], 3, &mut rng).unwrap();
        let r = Reference::random_uniform(s, &mut rng, "r");
        let mu = GridImage::random_uniform(s, &mut rng);
        let label = net.classify_image(&mu).unwrap();
        (net, r, mu, label)
    }

    #[test]
    fn zero_budget_fails_on_correct_label() {
        let (net, r, mu, label) = setup(1);
        let res = wpgd_attack(&net, &r.image, &mu, label, &AttackConfig::new(0.0)).unwrap();
        assert!(!res.success);
        assert!(res.w1_bound <= TAU_LP);
        let wrong = (label + 1) % 3;
        let res = wpgd_attack(&net, &r.image, &mu, wrong, &AttackConfig::new(0.0)).unwrap();
        assert!(res.success);
        assert_eq!(res.iterations, 0);
        assert_eq!(res.adversarial.unwrap(), mu);
    }

    #[test]
    fn success_respects_budget_and_exact_minimum() {
        let cfg = SearchConfig::default();
        let mut wins = 0;
        for seed in 0..6 {
            let (net, r, mu, label) = setup(100 + seed);
            let strategy = CouplingStrategy::NorthWestCorner;
            let exact = linear_finetuned_radius(&net, &r, &mu, label, strategy, &cfg).unwrap();
            let mut acfg = AttackConfig::new(2.0 * exact.radius);
            acfg.step_size = acfg.eps;
            let res = wpgd_attack(&net, &r.image, &mu, label, &acfg).unwrap();
            if res.success {
                wins += 1;
                let adv = res.adversarial.unwrap();
                assert_ne!(net.classify_image(&adv).unwrap(), label);
                assert!(res.w1_bound <= acfg.eps + TAU_LP);
                assert!(res.w1_bound >= exact.radius - 1e-7);
                assert!(exact_w1(&mu, &adv).unwrap().0 <= res.w1_bound + 1e-7);
            }
        }
        assert!(wins > 0);
    }

    #[test]
    fn certified_budget_never_breaks() {
        let cfg = SearchConfig::default();
        for seed in 0..6 {
            let (net, r, mu, label) = setup(200 + seed);
            let strategy = CouplingStrategy::NorthWestCorner;
            let lv = linear_vanilla_radius(&net, &r, &mu, label, strategy, &cfg).unwrap();
            let mut acfg = AttackConfig::new(0.99 * lv.radius);
            acfg.step_size = acfg.eps.max(1e-3);
            let res = wpgd_attack(&net, &r.image, &mu, label, &acfg).unwrap();
            assert!(!res.success);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let (net, r, mu, label) = setup(3);
        let mut cfg = AttackConfig::new(0.1);
        cfg.max_iters = 0;
        assert!(wpgd_attack(&net, &r.image, &mu, label, &cfg).is_err());
        cfg = AttackConfig::new(-1.0);
        assert!(wpgd_attack(&net, &r.image, &mu, label, &cfg).is_err());
    }
}
