use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

pub const TRACE_HEADER: &str = "iter,res_x,res_z,res_w,lagrangian,energy,psnr,wall_ms";

/// One completed iteration. Quantities a method does not have are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    /// 1-based iteration index.
    pub iter: usize,
    /// `‖x_{k+1} − x_k‖`.
    pub res_x: f64,
    /// `‖z_{k+1} − z_k‖`.
    pub res_z: Option<f64>,
    /// `‖w_{k+1} − w_k‖` with `w = βu`.
    pub res_w: Option<f64>,
    pub lagrangian: Option<f64>,
    pub energy: Option<f64>,
    pub psnr: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IterateTrace {
    pub rows: Vec<TraceRow>,
    /// `max_k ‖w_k − ∇h(z_k)‖` over recorded iterations (LADMM only).
    pub dual_gradient_gap: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl IterateTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn res_x(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.res_x).collect()
    }

    pub fn res_z(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.res_z).collect()
    }

    pub fn res_w(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.res_w).collect()
    }

    /// The Lagrangian column, if every row has it.
    pub fn lagrangian(&self) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.lagrangian).collect()
    }

    pub fn energy(&self) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.energy).collect()
    }

    pub fn psnr(&self) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.psnr).collect()
    }

    /// CSV with [`TRACE_HEADER`]; absent values are empty fields.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(TRACE_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.iter,
                r.res_x,
                opt(r.res_z),
                opt(r.res_w),
                opt(r.lagrangian),
                opt(r.energy),
                opt(r.psnr),
                r.wall_ms
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        crate::fsutil::write_atomic(path, self.to_csv().as_bytes())
    }
}
