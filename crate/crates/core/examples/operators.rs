//! The matrix-free operators: convolution (direct and FFT), decimated
//! convolution and the O'Leary spatially varying blur. Prints the adjoint
//! mismatch and the power-iteration norm estimate of each.
//!
//!     cargo run --release --example operators

use varprox::linop::{
    adjoint_check, estimate_norm_sq, power_iteration, Boundary, ConvMethod, ConvolutionOperator, DecimatedConvolution,
    Kernel, LinearOperator, OLearyBlur, OLearyOperator,
};
use varprox::raster::{Dims, Raster};

fn report(name: &str, op: &dyn LinearOperator) {
    let shape = op.shape();
    println!(
        "{name:<22} {} -> {}  adjoint mismatch {:.1e}  ||H||^2 ~ {:.6} (with margin {:.6})",
        shape.input,
        shape.output,
        adjoint_check(op, 10, 0),
        power_iteration(op, 100, 0),
        estimate_norm_sq(op, 100, 0),
    );
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dims = Dims::new(64, 48, 3);
    let gauss = Kernel::gaussian(1.5, 1.5, 0.0)?;
    let motion = Kernel::motion(9.0, 0.6, 1.0)?;

    report("gaussian periodic", &ConvolutionOperator::new(gauss.clone(), Boundary::Periodic, dims)?);
    report("gaussian replicate", &ConvolutionOperator::new(gauss.clone(), Boundary::Replicate, dims)?);
    report("motion", &ConvolutionOperator::new(motion.clone(), Boundary::Periodic, dims)?);
    report("decimated x2", &DecimatedConvolution::new(gauss.clone(), 2, Boundary::Periodic, dims)?);

    // the two periodic paths compute the same thing
    let big = Kernel::gaussian(6.0, 3.0, 0.4)?;
    let direct = ConvolutionOperator::with_method(big.clone(), Boundary::Periodic, dims, ConvMethod::Direct)?;
    let fft = ConvolutionOperator::with_method(big, Boundary::Periodic, dims, ConvMethod::Fft)?;
    let x = Raster::random_uniform(dims, 0.0, 1.0, 3);
    println!("fft vs direct on a {}-wide kernel: {:.1e}", direct.kernel().width(), fft.forward(&x).dist(&direct.forward(&x)));

    // left half gaussian, right half motion, 8-pixel linear ramp between
    let (w, h) = (dims.width, dims.height);
    let left = Raster::from_fn(Dims::new(w, h, 1), |px, _, _| ((w as f64 / 2.0 + 4.0 - px as f64) / 8.0).clamp(0.0, 1.0));
    let right = left.map(|v| 1.0 - v);
    let blur = OLearyBlur::new(vec![gauss, motion], vec![left, right])?;
    report("o'leary (2 regions)", &OLearyOperator::new(blur, Boundary::Periodic, dims.channels)?);
    Ok(())
}
