//! Mapping an image to a flow from a reference with each coupling strategy,
//! compared with the exact W1 distance.

use flowcert::grid::PixelValues;
use flowcert::{apply_flow, delta_inverse, exact_w1, CouplingStrategy, GridImage, GridShape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> flowcert::Result<()> {
    let shape = GridShape::new(4, 4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let reference = GridImage::random_uniform(shape, &mut rng);
    let image = GridImage::random_uniform(shape, &mut rng);

    let (w1, _) = exact_w1(&reference, &image)?;
    println!("exact W1 = {w1:.6}");
    for strategy in CouplingStrategy::ALL {
        let delta = delta_inverse(&reference, &image, strategy)?;
        let back = apply_flow(&reference, &delta)?;
        let err = back
            .values()
            .iter()
            .zip(image.mass())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!("{:>8}: |delta|_1 = {:.6}  round-trip error {err:.1e}", strategy.as_str(), delta.l1());
    }

    let a = GridImage::point(GridShape::new(2, 2)?, 0, 0)?;
    let b = GridImage::point(GridShape::new(2, 2)?, 1, 1)?;
    println!("opposite corners of 2x2: W1 = {}", exact_w1(&a, &b)?.0);
    Ok(())
}
