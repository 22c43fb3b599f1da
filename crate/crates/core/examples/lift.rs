//! Folding the flow map into the first layer gives a network on flows that
//! agrees with the original on every image.

use flowcert::network::{lift_network, Network};
use flowcert::{delta_inverse, CouplingStrategy, FlowMatrix, GridImage, GridShape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> flowcert::Result<()> {
    let shape = GridShape::new(5, 5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = Network::random(shape, &[16, 16], 4, &mut rng)?;
    let reference = GridImage::random_uniform(shape, &mut rng);
    let lifted = lift_network(&net, &reference, &FlowMatrix::new(shape))?;
    println!("image net takes {} inputs, lifted net takes {}", net.input_dim(), lifted.flow_dim());

    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mu = GridImage::random_uniform(shape, &mut rng);
        let delta = delta_inverse(&reference, &mu, CouplingStrategy::ExactOT)?;
        let a = net.forward_image(&mu)?;
        let b = lifted.forward(&delta)?;
        worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(worst, f64::max);
        assert_eq!(net.classify_image(&mu)?, lifted.classify(&delta)?);
    }
    println!("largest logit difference over 20 images: {worst:.2e}");
    Ok(())
}
