//! Train a small classifier on 8x8 MNIST and certify a few test images.
//!
//! ```text
//! cargo run --release --example mnist_certify
//! ```

use std::path::Path;

use flowcert::certify::{certify_finetuned, certify_multi_reference, certify_vanilla, BaseMethod, Reference, SearchConfig};
use flowcert::data::{idx_labels_path, ingest_idx, Resize};
use flowcert::network::{accuracy, train_small, TrainConfig};
use flowcert::{CouplingStrategy, GridShape};

fn main() -> flowcert::Result<()> {
    let images = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset-images.idx3-ubyte");
    let data = ingest_idx(&images, &idx_labels_path(&images), Resize::Mnist8)?;
    let (train, test) = (data.slice(0, 1000), data.slice(1000, 200));

    let net = train_small(&train.images, &train.labels, &TrainConfig::default())?;
    println!(
        "train accuracy {:.3}, test accuracy {:.3}",
        accuracy(&net, &train.images, &train.labels)?,
        accuracy(&net, &test.images, &test.labels)?
    );

    let shape = GridShape::new(8, 8)?;
    let refs = vec![Reference::uniform(shape), Reference::point(shape, 4, 4)?];
    let cfg = SearchConfig::default();
    let strategy = CouplingStrategy::NorthWestCorner;
    for k in 0..5 {
        let mu = &test.images[k];
        let v = certify_vanilla(&net, &refs[0], mu, strategy, &cfg)?;
        let f = certify_finetuned(&net, &refs[0], mu, strategy, &cfg)?;
        let m = certify_multi_reference(&net, mu, &refs, BaseMethod::Vanilla, strategy, &cfg)?;
        println!(
            "image {k}: label {} predicted {}  vanilla {:.5}  finetuned {:.5}  multiref {:.5} ({})",
            test.labels[k], v.label, v.radius, f.radius, m.radius, m.reference_id
        );
    }
    Ok(())
}
