//! Pixel flows on a small grid: layout, the affine map and feasibility.

use flowcert::{apply_flow, is_feasible, Flow, FlowMatrix, GridImage, GridShape};

fn main() -> flowcert::Result<()> {
    let shape = GridShape::new(3, 3)?;
    println!("{shape}: {} pixels, {} flow edges", shape.pixels(), shape.flow_dim());

    let mnist = GridShape::new(28, 28)?;
    println!("28x28 flow matrix has {} columns", FlowMatrix::new(mnist).ncols());

    // move a quarter of the center pixel right, then half of what lands there down
    let reference = GridImage::uniform(shape);
    let mut delta = Flow::zeros(shape);
    delta.set_right(1, 1, 0.25 / 9.0);
    delta.set_down(1, 2, 0.5 / 9.0);
    let moved = apply_flow(&reference, &delta)?;
    for i in 0..3 {
        let row: Vec<String> = (0..3).map(|j| format!("{:.4}", moved.get(i, j))).collect();
        println!("  {}", row.join(" "));
    }
    println!("feasible: {}", is_feasible(&reference, &delta, 1e-12)?);

    // pushing more than a pixel holds leaves the simplex
    delta.set_right(0, 0, 0.5);
    println!("after overdrawing (0,0): feasible = {}", is_feasible(&reference, &delta, 1e-12)?);
    Ok(())
}
