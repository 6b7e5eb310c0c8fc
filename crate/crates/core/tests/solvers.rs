mod common;

use common::*;
use varprox::denoise::{GaussianDenoiser, TikhonovDenoiser, TvDenoiser};
use varprox::linop::{estimate_norm_sq, power_iteration, Boundary, ConvolutionOperator, Kernel, LinearOperator};
use varprox::pipeline::{grid_search, GridPoint, ParamGrid, PeriodicBenchmark, TIKHONOV_LAMBDA};
use varprox::raster::{psnr, Dims, Raster};
use varprox::solvers::{
    energy, run_method, run_pnp_admm_cg, run_pnp_ista, run_pnp_ladmm, run_richardson_lucy, CgSettings, Coupling,
    Method, RunOptions, SolverError, SolverParams, TRACE_HEADER,
};

fn setup() -> (PeriodicBenchmark, f64) {
    let b = PeriodicBenchmark::standard();
    let n = estimate_norm_sq(&b.operator, 100, 0);
    (b, n)
}

#[test]
fn lagrangian_decrease_dominates_the_step_length() {
    let (b, _) = setup();
    let norm_sq = power_iteration(&b.operator, 200, 1);
    let beta = 1.0 / (b.sigma * b.sigma);
    let l_x = 2.0 * beta * norm_sq;
    let params = Coupling { lambda: Some(TIKHONOV_LAMBDA), beta: Some(beta), l_x: Some(l_x), sigma_d: None }
        .resolve(b.sigma, None)
        .unwrap()
        .with_max_iters(300)
        .with_tol(0.0);
    let r = run_pnp_ladmm(&b.y, &b.operator, &TikhonovDenoiser, &params, &RunOptions::default()).unwrap();
    let m = r.trace.lagrangian().unwrap();
    let a = (l_x - beta * norm_sq) / 2.0;
    for k in 0..m.len() - 1 {
        let step = r.trace.rows[k + 1].res_x;
        let drop = m[k] - m[k + 1];
        assert!(drop >= a * step * step - 1e-6, "iteration {}: drop {drop:e} < {:e}", k + 1, a * step * step);
    }
}

#[test]
fn ladmm_at_beta_equal_lh_is_ista_shifted_by_one_iteration() {
    // with βσ² = 1 the z-update gives z − u = y exactly, so from the second
    // iteration on LADMM performs the ISTA step σ²/‖H‖²
    let (b, n) = setup();
    let params = SolverParams::satisfying_conditions(10.0, b.sigma, n).unwrap().with_tol(0.0);
    let tv = TvDenoiser::default();
    let first = run_pnp_ladmm(&b.y, &b.operator, &tv, &params.with_max_iters(1), &RunOptions::default()).unwrap().x_hat;
    let ladmm = run_pnp_ladmm(&b.y, &b.operator, &tv, &params.with_max_iters(41), &RunOptions::default()).unwrap();
    let opts = RunOptions { x0: Some(&first), ..Default::default() };
    let ista = run_pnp_ista(&b.y, &b.operator, &tv, &params.with_max_iters(40), None, &opts).unwrap();
    assert!(rel_err(&ladmm.x_hat, &ista.x_hat) < 1e-10, "{}", rel_err(&ladmm.x_hat, &ista.x_hat));
}

#[test]
fn loose_inner_solves_do_not_beat_tight_ones() {
    let (b, n) = setup();
    let params = b.tikhonov_params(n).with_max_iters(15).with_tol(0.0);
    let run = |tol| {
        let cg = CgSettings { iters: 200, tol };
        let x = run_pnp_admm_cg(&b.y, &b.operator, &TikhonovDenoiser, &params, cg, &RunOptions::default()).unwrap().x_hat;
        energy(&x, &b.y, &b.operator, &TikhonovDenoiser, &params).unwrap()
    };
    let (tight, loose) = (run(1e-10), run(1e-2));
    eprintln!("energy with cg_tol 1e-2 minus 1e-10: {:e}", loose - tight);
    assert!(loose >= tight, "loose {loose} < tight {tight}");
}

#[test]
fn grid_search_single_point_and_argmax() {
    let (b, n) = setup();
    let single = ParamGrid { lambdas: vec![20.0], beta_factors: vec![1.0] };
    let r = grid_search(&b.y, &b.operator, &b.truth, Method::Ladmm, &TikhonovDenoiser, &single, b.sigma, n, 20, 50).unwrap();
    assert_eq!(r.table.len(), 1);
    assert_eq!(r.best.lambda, 20.0);
    assert_eq!(r.best.max_iters, 50);

    let two = ParamGrid { lambdas: vec![1000.0, 20.0], beta_factors: vec![1.0] };
    let r = grid_search(&b.y, &b.operator, &b.truth, Method::Ladmm, &TikhonovDenoiser, &two, b.sigma, n, 20, 50).unwrap();
    let best = r.table.iter().copied().max_by(|a, b| a.psnr.total_cmp(&b.psnr)).unwrap();
    assert!(r.table.iter().all(|p| p.psnr <= best.psnr));
    assert_eq!(r.best.lambda, best.lambda);
    assert!(r.table[0].psnr != r.table[1].psnr);

    let empty = ParamGrid { lambdas: vec![], beta_factors: vec![1.0] };
    assert!(grid_search(&b.y, &b.operator, &b.truth, Method::Ladmm, &TikhonovDenoiser, &empty, b.sigma, n, 5, 5).is_err());
}

#[test]
fn tuned_lambda_agrees_with_an_exhaustive_full_budget_rerun() {
    let (b, n) = setup();
    let grid = ParamGrid { lambdas: vec![2.0, 10.0, 50.0], beta_factors: vec![0.5, 1.0, 2.0] };
    let tuned = grid_search(&b.y, &b.operator, &b.truth, Method::Ladmm, &TikhonovDenoiser, &grid, b.sigma, n, 100, 500).unwrap();
    let mut best: Option<GridPoint> = None;
    for &lambda in &grid.lambdas {
        for &f in &grid.beta_factors {
            let p = Method::Ladmm.params(lambda, f / (b.sigma * b.sigma), b.sigma, n).unwrap().with_max_iters(500).with_tol(0.0);
            let x = run_pnp_ladmm(&b.y, &b.operator, &TikhonovDenoiser, &p, &RunOptions::default()).unwrap().x_hat;
            let s = psnr(&x, &b.truth, 1.0).unwrap();
            if best.is_none_or(|g| s > g.psnr) {
                best = Some(GridPoint { lambda, beta: p.beta, psnr: s });
            }
        }
    }
    let idx = |l: f64| grid.lambdas.iter().position(|&v| v == l).unwrap() as isize;
    assert!((idx(tuned.best.lambda) - idx(best.unwrap().lambda)).abs() <= 1);
}

#[test]
fn richardson_lucy_rejects_negative_taps() {
    let dims = Dims::new(16, 16, 1);
    let k = Kernel::new(3, 3, vec![0.0, -0.25, 0.0, -0.25, 2.0, -0.25, 0.0, -0.25, 0.0]).unwrap();
    let h = ConvolutionOperator::new(k, Boundary::Periodic, dims).unwrap();
    let y = Raster::filled(dims, 0.5);
    let params = Method::Rl.params(1.0, 1.0, 0.1, 1.0).unwrap();
    assert!(matches!(run_richardson_lucy(&y, &h, &params, &RunOptions::default()), Err(SolverError::NotNonnegative)));
}

#[test]
fn richardson_lucy_keeps_iterates_nonnegative_and_preserves_flux() {
    let b = PeriodicBenchmark::new(32, Kernel::gaussian(1.2, 1.2, 0.0).unwrap(), 0.02, 4);
    let params = Method::Rl.params(1.0, 1.0, 1.0, 1.0).unwrap().with_max_iters(40).with_tol(0.0);
    let r = run_richardson_lucy(&b.y, &b.operator, &params, &RunOptions::default()).unwrap();
    assert!(r.x_hat.min() >= 0.0);
    // periodic normalized blur: Hᵀ1 = 1, so the total intensity equals that of max(y, 0)
    let flux = b.y.map(|v| v.max(0.0)).sum();
    assert!((r.x_hat.sum() - flux).abs() / flux < 1e-9);
}

#[test]
fn non_proximal_denoisers_record_residuals_only() {
    let (b, n) = setup();
    let params = SolverParams::satisfying_conditions(10.0, b.sigma, n).unwrap().with_max_iters(30).with_tol(0.0);
    for method in [Method::Ladmm, Method::Ista, Method::AdmmCg] {
        let r = run_method(method, &b.y, &b.operator, &GaussianDenoiser, &params, &RunOptions::default()).unwrap();
        assert!(r.trace.lagrangian().is_none(), "{method}");
        assert!(r.trace.energy().is_none(), "{method}");
        assert_eq!(r.trace.res_x().len(), 30);
        let csv = r.trace.to_csv();
        assert!(csv.starts_with(TRACE_HEADER));
        let row = csv.lines().nth(1).unwrap();
        assert_eq!(row.split(',').count(), 8);
        assert_eq!(row.split(',').nth(4), Some(""));
    }
}

#[test]
fn stopping_tolerance_ends_runs_early() {
    let (b, n) = setup();
    let params = b.tikhonov_params(n).with_max_iters(2000).with_tol(1e-6);
    let r = run_pnp_ladmm(&b.y, &b.operator, &TikhonovDenoiser, &params, &RunOptions::default()).unwrap();
    assert!(r.converged);
    assert!(r.iterations_run < 2000);
    let last = r.trace.last().unwrap();
    let scale = (b.y.len() as f64).sqrt();
    assert!(last.res_x / scale <= 1e-6 && last.res_z.unwrap() / scale <= 1e-6 && last.res_w.unwrap() / scale <= 1e-6);
}

#[test]
fn warm_starting_the_tv_prox_improves_accuracy_at_equal_inner_budget() {
    let (b, n) = setup();
    let params = SolverParams::satisfying_conditions(10.0, b.sigma, n).unwrap().with_max_iters(150).with_tol(0.0);
    let run = |d: &TvDenoiser| run_pnp_ladmm(&b.y, &b.operator, d, &params, &RunOptions::default()).unwrap().x_hat;
    let reference = run(&TvDenoiser::new(1000).with_tol(1e-10));
    let cold = rel_err(&run(&TvDenoiser::new(20).with_tol(0.0)), &reference);
    let warm = rel_err(&run(&TvDenoiser::new(20).with_tol(0.0).with_warm_start()), &reference);
    eprintln!("distance to the accurate-prox iterate: cold {cold:e}, warm {warm:e}");
    assert!(warm < cold);
}

#[test]
fn colour_images_restore_per_channel() {
    let dims = Dims::new(24, 24, 3);
    let truth = Raster::random_uniform(dims, 0.2, 0.8, 3);
    let h = ConvolutionOperator::new(Kernel::uniform(3).unwrap(), Boundary::Periodic, dims).unwrap();
    let y = h.forward(&truth);
    let n = estimate_norm_sq(&h, 100, 0);
    let params = SolverParams::satisfying_conditions(5.0, 0.05, n).unwrap().with_max_iters(40).with_tol(0.0);
    let whole = run_pnp_ladmm(&y, &h, &TikhonovDenoiser, &params, &RunOptions::default()).unwrap().x_hat;
    let single = Dims::new(24, 24, 1);
    let h1 = ConvolutionOperator::new(Kernel::uniform(3).unwrap(), Boundary::Periodic, single).unwrap();
    for c in 0..3 {
        let yc = Raster::from_vec(single, y.plane(c).to_vec()).unwrap();
        let xc = run_pnp_ladmm(&yc, &h1, &TikhonovDenoiser, &params, &RunOptions::default()).unwrap().x_hat;
        let diff = xc.as_slice().iter().zip(whole.plane(c)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "channel {c}: {diff}");
    }
}
