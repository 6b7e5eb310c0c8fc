//! All four methods on the standard periodic benchmark, TV prior, same
//! iteration budget. Richardson-Lucy has no prior, so on this noisy
//! observation it peaks after a couple of iterations and then amplifies noise.
//!
//!     cargo run --release --example compare_solvers

use std::time::Instant;

use varprox::denoise::TvDenoiser;
use varprox::linop::estimate_norm_sq;
use varprox::pipeline::{PeriodicBenchmark, TV_LAMBDA};
use varprox::raster::{psnr, ssim};
use varprox::solvers::{run_method, Method, RunOptions, CONDITION_POWER_ITERS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let b = PeriodicBenchmark::standard();
    let norm_sq = estimate_norm_sq(&b.operator, CONDITION_POWER_ITERS, 0);
    println!("observation: {:.2} dB", psnr(&b.y, &b.truth, 1.0)?);
    println!("{:<8} {:>9} {:>8} {:>6} {:>9}", "method", "psnr_db", "ssim", "iters", "seconds");
    let tv = TvDenoiser::default();
    for method in Method::ALL {
        let params = method.params(TV_LAMBDA, 1.0 / (b.sigma * b.sigma), b.sigma, norm_sq)?.with_max_iters(100);
        let start = Instant::now();
        let r = run_method(method, &b.y, &b.operator, &tv, &params, &RunOptions::default())?;
        println!(
            "{:<8} {:>9.3} {:>8.4} {:>6} {:>9.3}",
            method.name(),
            psnr(&r.x_hat, &b.truth, 1.0)?,
            ssim(&r.x_hat, &b.truth)?,
            r.iterations_run,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
