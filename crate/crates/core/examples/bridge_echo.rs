//! Runs PnP-LADMM with a denoiser living in another process. The example
//! spawns itself with `--serve`, which answers bridge requests on
//! stdin/stdout with the built-in Gaussian smoother.
//!
//!     cargo run --release --example bridge_echo

use std::time::Duration;

use varprox::denoise::bridge::serve;
use varprox::denoise::{BridgeDenoiser, Denoiser, GaussianDenoiser};
use varprox::linop::estimate_norm_sq;
use varprox::pipeline::PeriodicBenchmark;
use varprox::raster::psnr;
use varprox::solvers::{run_pnp_ladmm, RunOptions, SolverParams, CONDITION_POWER_ITERS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    if std::env::args().nth(1).as_deref() == Some("--serve") {
        let model = |x: &varprox::raster::Raster, s: f64| GaussianDenoiser.denoise(x, s).map_err(|e| e.to_string());
        serve(&mut std::io::stdin().lock(), &mut std::io::stdout().lock(), model)?;
        return Ok(());
    }

    let exe = std::env::current_exe()?;
    let bridge = BridgeDenoiser::spawn(&format!("'{}' --serve", exe.display()), Duration::from_secs(30))?;

    let b = PeriodicBenchmark::standard();
    let norm_sq = estimate_norm_sq(&b.operator, CONDITION_POWER_ITERS, 0);
    let params = SolverParams::satisfying_conditions(10.0, b.sigma, norm_sq)?.with_max_iters(30).with_tol(0.0);
    let remote = run_pnp_ladmm(&b.y, &b.operator, &bridge, &params, &RunOptions::default())?;
    let local = run_pnp_ladmm(&b.y, &b.operator, &GaussianDenoiser, &params, &RunOptions::default())?;
    println!("bridge: {:.3} dB  in-process: {:.3} dB", psnr(&remote.x_hat, &b.truth, 1.0)?, psnr(&local.x_hat, &b.truth, 1.0)?);
    // the wire format is f32, so the two runs agree to single precision
    println!("max difference {:.1e}", remote.x_hat.zip_map(&local.x_hat, |a, b| (a - b).abs()).max());
    Ok(())
}
