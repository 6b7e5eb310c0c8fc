//! Independent oracles shared by the integration tests: dense matrices built
//! from the operator definitions, a naive-DFT closed-form MAP solve, and
//! central finite differences.

#![allow(dead_code)]

use nalgebra::DMatrix;
use varprox::linop::{Boundary, Kernel, LinearOperator};
use varprox::raster::{Dims, Raster};

pub fn resolve(boundary: Boundary, p: isize, len: usize) -> usize {
    match boundary {
        Boundary::Periodic => p.rem_euclid(len as isize) as usize,
        Boundary::Replicate => p.clamp(0, len as isize - 1) as usize,
    }
}

/// Dense matrix of `out(p) = Σ_d k(d) x(p − d)` on a single-channel
/// `w × h` image, pixels in row-major order.
pub fn dense_convolution(k: &Kernel, boundary: Boundary, w: usize, h: usize) -> DMatrix<f64> {
    let n = w * h;
    let mut a = DMatrix::zeros(n, n);
    let (cx, cy) = ((k.width() / 2) as isize, (k.height() / 2) as isize);
    for y in 0..h {
        for x in 0..w {
            for b in 0..k.height() {
                for i in 0..k.width() {
                    let sx = resolve(boundary, x as isize - (i as isize - cx), w);
                    let sy = resolve(boundary, y as isize - (b as isize - cy), h);
                    a[(y * w + x, sy * w + sx)] += k.tap(i, b);
                }
            }
        }
    }
    a
}

/// Keeps rows `(i·f, j·f)` of the full convolution.
pub fn dense_decimated(k: &Kernel, factor: usize, boundary: Boundary, w: usize, h: usize) -> DMatrix<f64> {
    let full = dense_convolution(k, boundary, w, h);
    let (ow, oh) = (w / factor, h / factor);
    let mut a = DMatrix::zeros(ow * oh, w * h);
    for j in 0..oh {
        for i in 0..ow {
            a.set_row(j * ow + i, &full.row(j * factor * w + i * factor));
        }
    }
    a
}

pub fn dense_diag(m: &Raster) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(m.as_slice()))
}

/// `Σᵢ diag(Uᵢ) Kᵢ`.
pub fn dense_oleary(kernels: &[Kernel], masks: &[Raster], boundary: Boundary, w: usize, h: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(w * h, w * h);
    for (k, m) in kernels.iter().zip(masks) {
        a += dense_diag(m) * dense_convolution(k, boundary, w, h);
    }
    a
}

/// Applies `op` to every basis vector; used only to compare against the
/// definitions above.
pub fn matrix_of(op: &dyn LinearOperator, adjoint: bool) -> DMatrix<f64> {
    let shape = op.shape();
    let (from, to) = if adjoint { (shape.output, shape.input) } else { (shape.input, shape.output) };
    let mut a = DMatrix::zeros(to.len(), from.len());
    for j in 0..from.len() {
        let mut e = Raster::zeros(from);
        e.as_mut_slice()[j] = 1.0;
        let col = if adjoint { op.adjoint(&e) } else { op.forward(&e) };
        for (i, v) in col.as_slice().iter().enumerate() {
            a[(i, j)] = *v;
        }
    }
    a
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn random_kernel(size: usize, seed: u64, nonneg: bool) -> Kernel {
    let lo = if nonneg { 0.0 } else { -1.0 };
    let r = Raster::random_uniform(Dims::new(size, size, 1), lo, 1.0, seed);
    Kernel::new(size, size, r.into_vec()).unwrap()
}

/// Random masks that are nonnegative and sum to one at every pixel.
pub fn random_partition(w: usize, h: usize, parts: usize, seed: u64) -> Vec<Raster> {
    let raw: Vec<Raster> =
        (0..parts).map(|i| Raster::random_uniform(Dims::new(w, h, 1), 0.05, 1.0, seed + i as u64)).collect();
    let mut total = Raster::zeros(Dims::new(w, h, 1));
    for m in &raw {
        total = total.add(m);
    }
    raw.iter().map(|m| m.zip_map(&total, |a, t| a / t)).collect()
}

type C = (f64, f64);

fn dft_1d(line: &[C], inverse: bool) -> Vec<C> {
    let n = line.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    (0..n)
        .map(|u| {
            let mut acc = (0.0, 0.0);
            for (x, &(re, im)) in line.iter().enumerate() {
                let phase = sign * std::f64::consts::TAU * ((u * x) % n) as f64 / n as f64;
                let (s, c) = phase.sin_cos();
                acc.0 += re * c - im * s;
                acc.1 += re * s + im * c;
            }
            acc
        })
        .collect()
}

/// Unnormalized separable 2-D DFT of a row-major `w × h` array.
pub fn dft_2d(data: &[C], w: usize, h: usize, inverse: bool) -> Vec<C> {
    let mut out = data.to_vec();
    for y in 0..h {
        let row = dft_1d(&out[y * w..(y + 1) * w], inverse);
        out[y * w..(y + 1) * w].copy_from_slice(&row);
    }
    for x in 0..w {
        let col: Vec<C> = (0..h).map(|y| out[y * w + x]).collect();
        for (y, v) in dft_1d(&col, inverse).into_iter().enumerate() {
            out[y * w + x] = v;
        }
    }
    out
}

/// Solves `(HᵀH/σ² + λI) x = Hᵀy/σ²` for a periodic convolution `H` in the
/// Fourier eigenbasis. `H e₀` places `k(d)` at pixel `d mod (w, h)`.
pub fn fourier_map(k: &Kernel, y: &Raster, sigma: f64, lambda: f64) -> Raster {
    let (w, h) = (y.width(), y.height());
    assert_eq!(y.channels(), 1);
    let mut impulse = vec![(0.0, 0.0); w * h];
    let (cx, cy) = ((k.width() / 2) as isize, (k.height() / 2) as isize);
    for b in 0..k.height() {
        for i in 0..k.width() {
            let px = (i as isize - cx).rem_euclid(w as isize) as usize;
            let py = (b as isize - cy).rem_euclid(h as isize) as usize;
            impulse[py * w + px].0 += k.tap(i, b);
        }
    }
    let kh = dft_2d(&impulse, w, h, false);
    let yh = dft_2d(&y.as_slice().iter().map(|&v| (v, 0.0)).collect::<Vec<_>>(), w, h, false);
    let s2 = sigma * sigma;
    let xh: Vec<C> = kh
        .iter()
        .zip(&yh)
        .map(|(&(hr, hi), &(yr, yi))| {
            // conj(ĥ)·ŷ / (|ĥ|² + λσ²)
            let num = (hr * yr + hi * yi, hr * yi - hi * yr);
            let den = hr * hr + hi * hi + lambda * s2;
            (num.0 / den, num.1 / den)
        })
        .collect();
    let x = dft_2d(&xh, w, h, true);
    let n = (w * h) as f64;
    Raster::from_vec(y.dims(), x.iter().map(|c| c.0 / n).collect()).unwrap()
}

pub fn rel_err(a: &Raster, b: &Raster) -> f64 {
    a.dist(b) / b.norm()
}

/// Central difference of `f` at `x` along coordinate `i`.
pub fn central_difference(f: impl Fn(&Raster) -> f64, x: &Raster, i: usize, step: f64) -> f64 {
    let mut plus = x.clone();
    plus.as_mut_slice()[i] += step;
    let mut minus = x.clone();
    minus.as_mut_slice()[i] -= step;
    (f(&plus) - f(&minus)) / (2.0 * step)
}

/// First 1-based iteration after which every PSNR stays within `band` dB
/// of the final value.
pub fn plateau_iteration(psnr: &[f64], band: f64) -> usize {
    let last = *psnr.last().expect("nonempty trace");
    let mut k = psnr.len();
    while k > 0 && (psnr[k - 1] - last).abs() <= band {
        k -= 1;
    }
    k + 1
}
