pub mod cli;
pub mod denoise;
pub mod fsutil;
pub mod linop;
pub mod raster;
pub mod solvers;
pub mod pipeline;
