//! Tunes (lambda, beta) for each method on the benchmark and prints the
//! scored grid.
//!
//!     cargo run --release --example grid_search

use varprox::denoise::TvDenoiser;
use varprox::linop::estimate_norm_sq;
use varprox::pipeline::{grid_search, ParamGrid, PeriodicBenchmark, TUNING_BUDGET};
use varprox::solvers::{Method, CONDITION_POWER_ITERS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let b = PeriodicBenchmark::standard();
    let norm_sq = estimate_norm_sq(&b.operator, CONDITION_POWER_ITERS, 0);
    let grid = ParamGrid::default();
    let tv = TvDenoiser::default();
    for method in [Method::Ladmm, Method::Ista] {
        let r = grid_search(&b.y, &b.operator, &b.truth, method, &tv, &grid, b.sigma, norm_sq, TUNING_BUDGET, 200)?;
        println!("{method}: {} points scored at {TUNING_BUDGET} iterations", r.table.len());
        for p in &r.table {
            println!("  lambda {:>5}  beta*sigma^2 {:>5}  {:.3} dB", p.lambda, p.beta * b.sigma * b.sigma, p.psnr);
        }
        println!("  best: lambda {}  beta {:.2}  L_x {:.2}", r.best.lambda, r.best.beta, r.best.l_x);
    }
    Ok(())
}
