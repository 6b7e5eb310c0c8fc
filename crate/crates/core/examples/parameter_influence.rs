//! PSNR of PnP-LADMM (TV prior) across the prior weight and the penalty
//! beta, at a fixed budget. beta is given as a multiple of 1/sigma^2.
//!
//!     cargo run --release --example parameter_influence

use varprox::denoise::TvDenoiser;
use varprox::linop::estimate_norm_sq;
use varprox::pipeline::PeriodicBenchmark;
use varprox::raster::psnr;
use varprox::solvers::{run_pnp_ladmm, Method, RunOptions, CONDITION_POWER_ITERS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let b = PeriodicBenchmark::standard();
    let norm_sq = estimate_norm_sq(&b.operator, CONDITION_POWER_ITERS, 0);
    let factors = [0.25, 0.5, 1.0, 2.0, 4.0];
    let tv = TvDenoiser::default();

    print!("{:>8}", "lambda");
    for f in factors {
        print!(" {:>8}", format!("b*{f}"));
    }
    println!();
    for lambda in [1.0, 5.0, 10.0, 20.0, 50.0] {
        print!("{lambda:>8}");
        for f in factors {
            let params = Method::Ladmm.params(lambda, f / (b.sigma * b.sigma), b.sigma, norm_sq)?.with_max_iters(40).with_tol(0.0);
            let x = run_pnp_ladmm(&b.y, &b.operator, &tv, &params, &RunOptions::default())?.x_hat;
            print!(" {:>8.3}", psnr(&x, &b.truth, 1.0)?);
        }
        println!();
    }
    Ok(())
}
