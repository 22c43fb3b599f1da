//! On a linear classifier the bisection certificates can be compared with
//! exact answers: a closed form for the plain ball and an LP per competing
//! class once feasibility is taken into account.

use flowcert::certify::{
    certify_finetuned, certify_vanilla, linear_finetuned_radius, linear_vanilla_radius, witness_image, Reference,
    SearchConfig,
};
use flowcert::network::{margin, Network};
use flowcert::{exact_w1, CouplingStrategy, GridImage, GridShape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> flowcert::Result<()> {
    let shape = GridShape::new(3, 3)?;
    let cfg = SearchConfig::default();
    let strategy = CouplingStrategy::NorthWestCorner;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    println!("{:>4} {:>10} {:>10} {:>10} {:>10}", "seed", "vanilla", "exact", "finetuned", "exact");
    for seed in 0..5 {
        let net = Network::random(shape, &[], 3, &mut rng)?;
        let reference = Reference::random_uniform(shape, &mut rng, "r");
        let mu = GridImage::random_uniform(shape, &mut rng);
        let label = net.classify_image(&mu)?;

        let v = certify_vanilla(&net, &reference, &mu, strategy, &cfg)?;
        let f = certify_finetuned(&net, &reference, &mu, strategy, &cfg)?;
        let lv = linear_vanilla_radius(&net, &reference, &mu, label, strategy, &cfg)?;
        let lf = linear_finetuned_radius(&net, &reference, &mu, label, strategy, &cfg)?;
        println!("{seed:>4} {:>10.5} {:>10.5} {:>10.5} {:>10.5}", v.radius, lv.radius, f.radius, lf.radius);

        if let Some(w) = &lf.witness {
            let adv = witness_image(&reference.image, w)?;
            let (gap, rival) = margin(&net.forward_image(&adv)?, label);
            println!("     witness at W1 {:.5} ties class {label} with {rival} (margin {gap:.1e})", exact_w1(&mu, &adv)?.0);
        }
    }
    Ok(())
}
