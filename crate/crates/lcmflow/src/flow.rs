//! Per-pixel displacement fields.

use crate::error::{Error, Result};
use crate::image::{sample_bicubic, Image};

/// Dense displacement field w = (u, v), one vector per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || u.len() != width * height || v.len() != width * height {
            return Err(Error::Dimension("flow component length mismatch".into()));
        }
        if !u.iter().chain(v.iter()).all(|x| x.is_finite()) {
            return Err(Error::Numerical("flow field contains non-finite values".into()));
        }
        Ok(FlowField { width, height, u, v })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField { width, height, u: vec![0.0; width * height], v: vec![0.0; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> (f64, f64)) -> Self {
        let mut u = Vec::with_capacity(width * height);
        let mut v = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (du, dv) = f(x, y);
                u.push(du);
                v.push(dv);
            }
        }
        FlowField { width, height, u, v }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.u.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    #[inline]
    pub fn u(&self, x: usize, y: usize) -> f64 {
        self.u[y * self.width + x]
    }

    #[inline]
    pub fn v(&self, x: usize, y: usize) -> f64 {
        self.v[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, u: f64, v: f64) {
        let i = y * self.width + x;
        self.u[i] = u;
        self.v[i] = v;
    }

    pub fn u_data(&self) -> &[f64] {
        &self.u
    }

    pub fn v_data(&self) -> &[f64] {
        &self.v
    }

    pub fn u_data_mut(&mut self) -> &mut [f64] {
        &mut self.u
    }

    pub fn v_data_mut(&mut self) -> &mut [f64] {
        &mut self.v
    }

    pub fn max_magnitude(&self) -> f64 {
        self.u
            .iter()
            .zip(&self.v)
            .map(|(u, v)| (u * u + v * v).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn add_increment(&mut self, du: &[f64], dv: &[f64]) {
        debug_assert_eq!(du.len(), self.u.len());
        for i in 0..self.u.len() {
            self.u[i] += du[i];
            self.v[i] += dv[i];
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }
}

/// Resample a flow field to new dimensions by bicubic interpolation of each
/// component, with displacement magnitudes scaled by the per-axis size ratio.
pub fn resample_flow(w: &FlowField, new_width: usize, new_height: usize) -> FlowField {
    let ui = Image::from_fn(w.width(), w.height(), |x, y| w.u(x, y));
    let vi = Image::from_fn(w.width(), w.height(), |x, y| w.v(x, y));
    let sx = w.width() as f64 / new_width as f64;
    let sy = w.height() as f64 / new_height as f64;
    let gain_x = new_width as f64 / w.width() as f64;
    let gain_y = new_height as f64 / w.height() as f64;
    FlowField::from_fn(new_width, new_height, |x, y| {
        let cx = (x as f64 + 0.5) * sx - 0.5;
        let cy = (y as f64 + 0.5) * sy - 0.5;
        (gain_x * sample_bicubic(&ui, cx, cy), gain_y * sample_bicubic(&vi, cx, cy))
    })
}
