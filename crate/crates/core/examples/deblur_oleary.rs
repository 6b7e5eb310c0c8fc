//! Degrades a colour image with a three-region spatially varying blur and
//! restores it with PnP-LADMM and the TV denoiser.
//!
//!     cargo run --release --example deblur_oleary [-- <output dir>]

use std::path::{Path, PathBuf};

use varprox::denoise::TvDenoiser;
use varprox::linop::estimate_norm_sq;
use varprox::pipeline::{synthesize_degradation, DegradationSpec};
use varprox::raster::{psnr, read_png, ssim, write_png};
use varprox::solvers::{run_pnp_ladmm, RunOptions, SolverParams, CONDITION_POWER_ITERS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("varprox-deblur"));

    let truth = read_png(data.join("dataset/scene_b.png"))?;
    let spec = DegradationSpec::from_json_file(&data.join("specs/voronoi3.json"))?;
    let deg = synthesize_degradation(&truth, &spec)?;
    println!("observation: {:.2} dB", psnr(&deg.y, &truth, 1.0)?);

    let norm_sq = estimate_norm_sq(&deg.operator, CONDITION_POWER_ITERS, 0);
    let params = SolverParams::satisfying_conditions(10.0, spec.noise_sigma, norm_sq)?.with_max_iters(150);
    println!("lambda {}  beta {:.2}  L_x {:.2}  sigma_d {:.4}", params.lambda, params.beta, params.l_x, params.sigma_d);

    let opts = RunOptions { truth: Some(&truth), ..Default::default() };
    let r = run_pnp_ladmm(&deg.y, &deg.operator, &TvDenoiser::default(), &params, &opts)?;
    println!(
        "restored in {} iterations: {:.2} dB, ssim {:.4}",
        r.iterations_run,
        psnr(&r.x_hat, &truth, 1.0)?,
        ssim(&r.x_hat, &truth)?
    );

    std::fs::create_dir_all(&out)?;
    write_png(&deg.y, out.join("y.png"))?;
    write_png(&r.x_hat, out.join("x_hat.png"))?;
    r.trace.write_csv(&out.join("trace.csv"))?;
    println!("wrote {}", out.display());
    Ok(())
}
