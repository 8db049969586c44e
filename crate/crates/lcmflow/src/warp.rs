//! Inverse image warping, middle-frame synthesis and flow color
//! visualization.

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::image::{sample_bicubic, Image};

/// Inverse-warped image plus a flag per pixel where X + w left the source
/// domain.
#[derive(Debug, Clone)]
pub struct WarpResult {
    pub image: Image,
    pub oob_mask: Vec<bool>,
}

/// out(X) = src(X + w(X)) via bicubic sampling with border clamp.
pub fn inverse_warp(src: &Image, w: &FlowField) -> Result<WarpResult> {
    if src.width() != w.width() || src.height() != w.height() {
        return Err(Error::Dimension("warp source and flow dimensions must match".into()));
    }
    let (width, height) = (src.width(), src.height());
    let mut image = Image::zeros(width, height);
    let mut oob_mask = vec![false; width * height];
    for y in 0..height {
        for x in 0..width {
            let sx = x as f64 + w.u(x, y);
            let sy = y as f64 + w.v(x, y);
            if sx < 0.0 || sy < 0.0 || sx > (width - 1) as f64 || sy > (height - 1) as f64 {
                oob_mask[y * width + x] = true;
            }
            image.set(x, y, sample_bicubic(src, sx, sy));
        }
    }
    Ok(WarpResult { image, oob_mask })
}

/// Synthesize the frame at time t in [0,1] between I1 and I2: the flow is
/// forward-splatted to time t, both inputs are inverse-warped towards it and
/// blended (1-t, t); splat holes are filled from the nearest valid blended
/// neighbor.
pub fn interpolate_middle_frame(i1: &Image, i2: &Image, w: &FlowField, t: f64) -> Result<Image> {
    if i1.width() != i2.width() || i1.height() != i2.height() || i1.width() != w.width() || i1.height() != w.height() {
        return Err(Error::Dimension("frame interpolation dimensions must match".into()));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Config(format!("interpolation time {t} must be in [0,1]")));
    }
    let (width, height) = (i1.width(), i1.height());
    let n = width * height;
    // forward splat: carry the full flow vector to the nearest target pixel,
    // resolving collisions by distance to the pixel center with the smaller
    // source index winning ties
    let mut best = vec![f64::INFINITY; n];
    let mut wu = vec![0.0f64; n];
    let mut wv = vec![0.0f64; n];
    for y in 0..height {
        for x in 0..width {
            let u = w.u(x, y);
            let v = w.v(x, y);
            let px = x as f64 + t * u;
            let py = y as f64 + t * v;
            let tx = px.round();
            let ty = py.round();
            if tx < 0.0 || ty < 0.0 || tx > (width - 1) as f64 || ty > (height - 1) as f64 {
                continue;
            }
            let ti = ty as usize * width + tx as usize;
            let d = (px - tx).powi(2) + (py - ty).powi(2);
            if d < best[ti] {
                best[ti] = d;
                wu[ti] = u;
                wv[ti] = v;
            }
        }
    }
    // bidirectional blend
    let mut out = Image::zeros(width, height);
    let mut filled = vec![false; n];
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if !best[i].is_finite() {
                continue;
            }
            let a = sample_bicubic(i1, x as f64 - t * wu[i], y as f64 - t * wv[i]);
            let b = sample_bicubic(i2, x as f64 + (1.0 - t) * wu[i], y as f64 + (1.0 - t) * wv[i]);
            out.set(x, y, (1.0 - t) * a + t * b);
            filled[i] = true;
        }
    }
    // hole fill: repeated deterministic dilation from the previous pass state
    while filled.iter().any(|f| !f) {
        let snapshot = out.clone();
        let filled_snapshot = filled.clone();
        let mut progressed = false;
        for y in 0..height {
            for x in 0..width {
                let i = y * width + x;
                if filled_snapshot[i] {
                    continue;
                }
                'search: for (ox, oy) in
                    [(1i64, 0i64), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, 1), (1, -1), (-1, -1)]
                {
                    let nx = x as i64 + ox;
                    let ny = y as i64 + oy;
                    if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                        continue;
                    }
                    let j = ny as usize * width + nx as usize;
                    if filled_snapshot[j] {
                        out.set(x, y, snapshot.get(nx as usize, ny as usize));
                        filled[i] = true;
                        progressed = true;
                        break 'search;
                    }
                }
            }
        }
        if !progressed {
            break; // no filled pixel anywhere; leave zeros
        }
    }
    Ok(out)
}

/// 8-bit RGB raster produced by the flow visualization.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbRaster {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

fn make_colorwheel() -> Vec<[f64; 3]> {
    const RY: usize = 15;
    const YG: usize = 6;
    const GC: usize = 4;
    const CB: usize = 11;
    const BM: usize = 13;
    const MR: usize = 6;
    let mut wheel = Vec::with_capacity(RY + YG + GC + CB + BM + MR);
    for i in 0..RY {
        wheel.push([255.0, 255.0 * i as f64 / RY as f64, 0.0]);
    }
    for i in 0..YG {
        wheel.push([255.0 - 255.0 * i as f64 / YG as f64, 255.0, 0.0]);
    }
    for i in 0..GC {
        wheel.push([0.0, 255.0, 255.0 * i as f64 / GC as f64]);
    }
    for i in 0..CB {
        wheel.push([0.0, 255.0 - 255.0 * i as f64 / CB as f64, 255.0]);
    }
    for i in 0..BM {
        wheel.push([255.0 * i as f64 / BM as f64, 0.0, 255.0]);
    }
    for i in 0..MR {
        wheel.push([255.0, 0.0, 255.0 - 255.0 * i as f64 / MR as f64]);
    }
    wheel
}

/// Color a single flow vector with the standard optical-flow color wheel;
/// `rad` is the magnitude already normalized by max_rad.
fn color_vector(u: f64, v: f64, rad: f64, wheel: &[[f64; 3]]) -> [u8; 3] {
    let ncols = wheel.len();
    let a = (-v).atan2(-u) / std::f64::consts::PI;
    let fk = (a + 1.0) / 2.0 * (ncols as f64 - 1.0);
    let k0 = fk.floor() as usize % ncols;
    let k1 = (k0 + 1) % ncols;
    let f = fk - fk.floor();
    let mut out = [0u8; 3];
    for c in 0..3 {
        let col0 = wheel[k0][c] / 255.0;
        let col1 = wheel[k1][c] / 255.0;
        let mut col = (1.0 - f) * col0 + f * col1;
        if rad <= 1.0 {
            col = 1.0 - rad * (1.0 - col);
        } else {
            col *= 0.75;
        }
        out[c] = (255.0 * col).round() as u8;
    }
    out
}

/// Middlebury-convention flow visualization: hue encodes direction,
/// saturation the magnitude relative to `max_rad` (auto = field maximum).
pub fn flow_to_color(w: &FlowField, max_rad: Option<f64>) -> RgbRaster {
    let wheel = make_colorwheel();
    let rad_scale = match max_rad {
        Some(r) if r > 0.0 => r,
        _ => w.max_magnitude().max(1e-12),
    };
    let (width, height) = (w.width(), w.height());
    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let u = w.u(x, y);
            let v = w.v(x, y);
            let rad = (u * u + v * v).sqrt() / rad_scale;
            let px = color_vector(u, v, rad.min(1.0), &wheel);
            data.extend_from_slice(&px);
        }
    }
    RgbRaster { width, height, data }
}
