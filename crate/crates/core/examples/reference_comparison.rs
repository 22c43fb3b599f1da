//! Radii for several references on 8x8 MNIST, written as reports to a
//! temporary directory, with the per-image maximum over references.

use std::path::Path;

use flowcert::certify::{BaseMethod, SearchConfig};
use flowcert::commands::{cmd_refs, sample_references, RefStyle};
use flowcert::data::{idx_labels_path, ingest_idx, Resize};
use flowcert::network::{train_small, TrainConfig};
use flowcert::CouplingStrategy;

fn main() -> flowcert::Result<()> {
    let images = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset-images.idx3-ubyte");
    let data = ingest_idx(&images, &idx_labels_path(&images), Resize::Mnist8)?;
    let train = data.slice(0, 1000);
    let net = train_small(&train.images, &train.labels, &TrainConfig::default())?;

    let styles = [RefStyle::Random, RefStyle::Point, RefStyle::Data];
    let refs = sample_references(net.shape(), 6, &styles, Some(&train), 0)?;
    let out = std::env::temp_dir().join("flowcert-refs");
    let summary = cmd_refs(
        &net,
        &data.slice(1000, 20),
        1000,
        &refs,
        BaseMethod::Vanilla,
        CouplingStrategy::NorthWestCorner,
        &SearchConfig::default(),
        &out,
    )?;
    for (id, s) in summary.references.iter().zip(&summary.per_reference) {
        println!("{id:>10}: mean {:.5} median {:.5} std {:.5}", s.mean, s.median, s.std);
    }
    println!("{:>10}: mean {:.5}", "max", summary.max_curve.mean);
    println!("best-reference counts {:?}, strict {:?}", summary.best_counts, summary.strict_best_counts);
    println!("reports in {}", out.display());
    Ok(())
}
