//! Flow and interpolation error statistics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::image::{derivatives, Image};

/// Flow error statistics over the masked pixels.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub mean_epe: f64,
    pub rms_epe: f64,
    pub median_epe: f64,
    pub percentile_99_epe: f64,
    pub mean_angular_error_deg: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interp_error_rms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalized_interp_error: Option<f64>,
    pub valid_pixel_count: usize,
}

impl ErrorReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("mean_epe              {:.6}\n", self.mean_epe));
        s.push_str(&format!("rms_epe               {:.6}\n", self.rms_epe));
        s.push_str(&format!("median_epe            {:.6}\n", self.median_epe));
        s.push_str(&format!("percentile_99_epe     {:.6}\n", self.percentile_99_epe));
        s.push_str(&format!("mean_angular_error_deg {:.6}\n", self.mean_angular_error_deg));
        if let Some(v) = self.interp_error_rms {
            s.push_str(&format!("interp_error_rms      {v:.6}\n"));
        }
        if let Some(v) = self.normalized_interp_error {
            s.push_str(&format!("normalized_interp_error {v:.6}\n"));
        }
        s.push_str(&format!("valid_pixel_count     {}\n", self.valid_pixel_count));
        s
    }
}

fn masked_indices(n: usize, mask: Option<&[bool]>) -> Result<Vec<usize>> {
    let idx: Vec<usize> = match mask {
        Some(m) => {
            if m.len() != n {
                return Err(Error::Dimension("mask length mismatch".into()));
            }
            (0..n).filter(|i| m[*i]).collect()
        }
        None => (0..n).collect(),
    };
    if idx.is_empty() {
        return Err(Error::Config("empty evaluation mask".into()));
    }
    Ok(idx)
}

fn check_dims(w: &FlowField, gt: &FlowField) -> Result<()> {
    if w.width() != gt.width() || w.height() != gt.height() {
        return Err(Error::Dimension("flow fields must share dimensions".into()));
    }
    Ok(())
}

/// Nearest-rank percentile of an ascending-sorted slice; p in (0,100].
fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Per-pixel endpoint error statistics: mean, RMS, median and the
/// nearest-rank 99th percentile over the masked pixels.
#[derive(Debug, Clone, Copy)]
pub struct EpeStats {
    pub mean: f64,
    pub rms: f64,
    pub median: f64,
    pub p99: f64,
    pub count: usize,
}

pub fn endpoint_error(w: &FlowField, gt: &FlowField, mask: Option<&[bool]>) -> Result<EpeStats> {
    check_dims(w, gt)?;
    let idx = masked_indices(w.len(), mask)?;
    let mut epe: Vec<f64> = idx
        .iter()
        .map(|&i| {
            let du = w.u_data()[i] - gt.u_data()[i];
            let dv = w.v_data()[i] - gt.v_data()[i];
            (du * du + dv * dv).sqrt()
        })
        .collect();
    let n = epe.len() as f64;
    let mean = epe.iter().sum::<f64>() / n;
    let rms = (epe.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    epe.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(EpeStats {
        mean,
        rms,
        median: nearest_rank(&epe, 50.0),
        p99: nearest_rank(&epe, 99.0),
        count: epe.len(),
    })
}

/// Mean angular error in degrees between the homogeneous 3-vectors (u,v,1).
pub fn angular_error(w: &FlowField, gt: &FlowField, mask: Option<&[bool]>) -> Result<f64> {
    check_dims(w, gt)?;
    let idx = masked_indices(w.len(), mask)?;
    let mut acc = 0.0;
    for &i in &idx {
        let (u, v) = (w.u_data()[i], w.v_data()[i]);
        let (gu, gv) = (gt.u_data()[i], gt.v_data()[i]);
        let num = u * gu + v * gv + 1.0;
        let den = ((u * u + v * v + 1.0) * (gu * gu + gv * gv + 1.0)).sqrt();
        acc += (num / den).clamp(-1.0, 1.0).acos();
    }
    Ok((acc / idx.len() as f64).to_degrees())
}

/// RMS intensity difference of a synthesized frame against the held-out true
/// frame; the normalized variant divides the per-pixel squared difference by
/// (|grad gt|^2 + 1) before averaging.
pub fn interpolation_error(predicted: &Image, gt: &Image, gradient_normalized: bool) -> Result<f64> {
    if predicted.width() != gt.width() || predicted.height() != gt.height() {
        return Err(Error::Dimension("frames must share dimensions".into()));
    }
    let n = gt.data().len();
    if gradient_normalized {
        let d = derivatives(gt)?;
        let mut acc = 0.0;
        for i in 0..n {
            let diff = predicted.data()[i] - gt.data()[i];
            let g2 = d.ix.data()[i].powi(2) + d.iy.data()[i].powi(2);
            acc += diff * diff / (g2 + 1.0);
        }
        Ok((acc / n as f64).sqrt())
    } else {
        let acc: f64 = (0..n).map(|i| (predicted.data()[i] - gt.data()[i]).powi(2)).sum();
        Ok((acc / n as f64).sqrt())
    }
}

/// Combined flow error report used by the evaluation harness.
pub fn flow_error_report(w: &FlowField, gt: &FlowField, mask: Option<&[bool]>) -> Result<ErrorReport> {
    let epe = endpoint_error(w, gt, mask)?;
    let ang = angular_error(w, gt, mask)?;
    Ok(ErrorReport {
        mean_epe: epe.mean,
        rms_epe: epe.rms,
        median_epe: epe.median,
        percentile_99_epe: epe.p99,
        mean_angular_error_deg: ang,
        interp_error_rms: None,
        normalized_interp_error: None,
        valid_pixel_count: epe.count,
    })
}
