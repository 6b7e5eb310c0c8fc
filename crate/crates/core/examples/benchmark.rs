//! A reduced version of the shipped benchmark: two noise levels, fixed
//! parameters, all methods. Writes the CSVs and per-run artifacts.
//!
//!     cargo run --release --example benchmark [-- <output dir>]

use std::path::{Path, PathBuf};

use varprox::pipeline::{run_benchmark, summary_table, BenchConfig, DegradationSpec, Tuning};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("varprox-bench"));
    let spec = DegradationSpec::from_json_file(&data.join("specs/bench.json"))?;
    let config = BenchConfig {
        sigmas: vec![10.0 / 255.0, 40.0 / 255.0],
        tuning: Tuning::Fixed { lambda: 10.0, beta_factor: 0.5 },
        max_iters: 100,
        out_dir: Some(out.clone()),
        ..BenchConfig::new(data.join("dataset"), spec)
    };
    let report = run_benchmark(&config)?;
    print!("{}", summary_table(&report.summary));
    println!("{} images, wrote {}", report.images_processed, out.display());
    Ok(())
}
