//! Regenerates the files under `data/`: the standard periodic benchmark
//! (`data/benchmark/`) and the small image set (`data/dataset/`).
//!
//!     cargo run --release --example make_data [-- <data dir>]

use std::path::PathBuf;

use varprox::pipeline::{shipped_dataset, PeriodicBenchmark};
use varprox::raster::write_png;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data"));

    let bench = PeriodicBenchmark::standard();
    bench.write_dir(&root.join("benchmark"))?;
    println!("wrote {}", root.join("benchmark").display());

    let dataset = root.join("dataset");
    std::fs::create_dir_all(&dataset)?;
    for (name, img) in shipped_dataset() {
        write_png(&img, dataset.join(&name))?;
        println!("wrote {}", dataset.join(name).display());
    }
    Ok(())
}
