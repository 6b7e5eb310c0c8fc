//! Spectral-norm estimation and stochastic adjoint verification.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;

use super::LinearOperator;
use crate::raster::Raster;

/// Multiplier applied to the power-iteration estimate of `‖H‖²` before it is
/// used as an upper bound; power iteration approaches the top eigenvalue from
/// below.
pub const NORM_SAFETY_FACTOR: f64 = 1.01;

/// Raw power iteration on `HᵀH`: the Rayleigh quotient after `iters` steps,
/// starting from a seeded uniform `[0, 1)` vector.
///
/// The returned sequence is nondecreasing in `iters` for a fixed seed.
/// Returns 0 for the zero operator.
pub fn power_iteration(op: &dyn LinearOperator, iters: usize, seed: u64) -> f64 {
    assert!(iters >= 1, "power iteration needs at least one step");
    let dims = op.shape().input;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Raster::from_fn(dims, |_, _, _| rng.gen::<f64>());
    let n = v.norm();
    if n == 0.0 {
        v = Raster::filled(dims, 1.0);
    }
    v = v.scale(1.0 / v.norm());

    let mut rayleigh = 0.0f64;
    for _ in 0..iters {
        let w = op.adjoint(&op.forward(&v));
        rayleigh = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        v = w.scale(1.0 / wn);
    }
    rayleigh.max(0.0)
}

/// Upper-bound estimate of `‖H‖²`: [`power_iteration`] times
/// [`NORM_SAFETY_FACTOR`].
pub fn estimate_norm_sq(op: &dyn LinearOperator, iters: usize, seed: u64) -> f64 {
    power_iteration(op, iters, seed) * NORM_SAFETY_FACTOR
}

/// Largest relative violation of `⟨Hx, y⟩ = ⟨x, Hᵀy⟩` over `trials` seeded
/// Gaussian pairs, normalized by `‖Hx‖‖y‖`.
pub fn adjoint_check(op: &dyn LinearOperator, trials: usize, seed: u64) -> f64 {
    assert!(trials >= 1, "adjoint check needs at least one trial");
    let shape = op.shape();
    let mut worst = 0.0f64;
    for t in 0..trials as u64 {
        let x = Raster::random_normal(shape.input, seed.wrapping_mul(0x9E37_79B9).wrapping_add(2 * t));
        let y = Raster::random_normal(shape.output, seed.wrapping_mul(0x9E37_79B9).wrapping_add(2 * t + 1));
        let hx = op.forward(&x);
        let hty = op.adjoint(&y);
        let lhs = hx.dot(&y);
        let rhs = x.dot(&hty);
        let scale = hx.norm() * y.norm() + f64::MIN_POSITIVE;
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    worst
}
