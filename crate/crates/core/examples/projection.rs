//! L1 projection onto the feasible flows within a budget, solved as an LP.

use flowcert::linprog::project_l1_feasible;
use flowcert::{delta_inverse, is_feasible, CouplingStrategy, Flow, GridImage, GridShape};

fn main() -> flowcert::Result<()> {
    let shape = GridShape::new(3, 3)?;
    let reference = GridImage::point(shape, 0, 0)?;
    let image = GridImage::uniform(shape);
    let center = delta_inverse(&reference, &image, CouplingStrategy::NorthWestCorner)?;

    // a step that overdraws every pixel
    let mut step = Flow::zeros(shape);
    for i in 0..3 {
        for j in 0..2 {
            step.set_right(i, j, 0.3);
        }
    }
    let point = center.axpy(1.0, &step)?;
    let eps = 0.2;
    println!("before: feasible = {}, distance = {:.4}", is_feasible(&reference, &point, 1e-9)?, point.l1_distance(&center));

    let projected = project_l1_feasible(&point, &center, eps, &reference)?;
    println!(
        "after:  feasible = {}, distance = {:.4} (budget {eps}), moved {:.4}",
        is_feasible(&reference, &projected, 1e-9)?,
        projected.l1_distance(&center),
        projected.l1_distance(&point)
    );
    Ok(())
}
