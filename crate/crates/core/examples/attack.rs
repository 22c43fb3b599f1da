//! Projected gradient attack in flow space. Budgets below the certified
//! radius never succeed; twice the exact minimal perturbation usually does.

use flowcert::attack::{wpgd_attack, AttackConfig};
use flowcert::certify::{linear_finetuned_radius, Reference, SearchConfig};
use flowcert::network::Network;
use flowcert::{exact_w1, CouplingStrategy, GridImage, GridShape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> flowcert::Result<()> {
    let shape = GridShape::new(3, 3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = SearchConfig::default();
    for trial in 0..5 {
        let net = Network::random(shape, &[], 3, &mut rng)?;
        let reference = Reference::uniform(shape);
        let mu = GridImage::random_uniform(shape, &mut rng);
        let label = net.classify_image(&mu)?;
        let exact = linear_finetuned_radius(&net, &reference, &mu, label, CouplingStrategy::NorthWestCorner, &cfg)?;
        if exact.witness.is_none() {
            println!("trial {trial}: class {label} wins everywhere, nothing to attack");
            continue;
        }
        for scale in [0.9, 2.0] {
            let mut acfg = AttackConfig::new(scale * exact.radius);
            acfg.step_size = 0.1 * acfg.eps;
            let res = wpgd_attack(&net, &reference.image, &mu, label, &acfg)?;
            match &res.adversarial {
                Some(adv) if res.success => println!(
                    "trial {trial}: budget {scale}x{:.4} broke {label} -> {} at W1 {:.4} after {} steps",
                    exact.radius,
                    net.classify_image(adv)?,
                    exact_w1(&mu, adv)?.0,
                    res.iterations
                ),
                _ => println!("trial {trial}: budget {scale}x{:.4} held", exact.radius),
            }
        }
    }
    Ok(())
}
