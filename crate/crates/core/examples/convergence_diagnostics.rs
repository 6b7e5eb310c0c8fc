//! Convergence diagnostics of PnP-LADMM with the Tikhonov prior: Lagrangian,
//! residuals, the dual-gradient gap, and what happens when L_x is too small.
//!
//!     cargo run --release --example convergence_diagnostics

use varprox::denoise::TikhonovDenoiser;
use varprox::linop::estimate_norm_sq;
use varprox::pipeline::PeriodicBenchmark;
use varprox::solvers::{check_conditions, run_pnp_ladmm, RunOptions, SolverError, CONDITION_POWER_ITERS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let b = PeriodicBenchmark::standard();
    let norm_sq = estimate_norm_sq(&b.operator, CONDITION_POWER_ITERS, 0);
    let params = b.tikhonov_params(norm_sq).with_max_iters(300).with_tol(0.0);
    let report = check_conditions(&b.operator, &params, 0);
    println!("beta >= L_h: {}  L_x >= beta ||H||^2: {}", report.beta_ok, report.l_x_ok);

    let opts = RunOptions { truth: Some(&b.truth), ..Default::default() };
    let r = run_pnp_ladmm(&b.y, &b.operator, &TikhonovDenoiser, &params, &opts)?;
    println!("{:>5} {:>16} {:>10} {:>10} {:>10} {:>8}", "k", "lagrangian", "res_x", "res_z", "res_w", "psnr");
    for row in r.trace.rows.iter().filter(|row| row.iter == 1 || row.iter % 50 == 0) {
        println!(
            "{:>5} {:>16.6} {:>10.2e} {:>10.2e} {:>10.2e} {:>8.3}",
            row.iter,
            row.lagrangian.unwrap_or(f64::NAN),
            row.res_x,
            row.res_z.unwrap_or(f64::NAN),
            row.res_w.unwrap_or(f64::NAN),
            row.psnr.unwrap_or(f64::NAN)
        );
    }
    let m = r.trace.lagrangian().expect("exact prox");
    // near the fixed point consecutive values agree to the last few bits
    let rises = m.windows(2).filter(|w| w[1] > w[0] + 1e-12 * w[0].abs()).count();
    println!("lagrangian increases above roundoff: {rises} of {}", m.len() - 1);
    if let Some(gap) = r.trace.dual_gradient_gap {
        println!("max |w_k - grad f(z_k)| = {gap:.2e}");
    }

    let bad = b.adversarial_params(norm_sq).with_max_iters(1000).with_tol(0.0);
    println!("\nL_x = {:.1} with beta ||H||^2 = {:.1}", bad.l_x, bad.beta * norm_sq);
    match run_pnp_ladmm(&b.y, &b.operator, &TikhonovDenoiser, &bad, &RunOptions::default()) {
        Err(SolverError::Diverged { iteration }) => println!("diverged at iteration {iteration}"),
        Ok(r) => println!("finished {} iterations", r.iterations_run),
        Err(e) => return Err(e.into()),
    }
    Ok(())
}
