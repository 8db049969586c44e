//! Grid triangulation stencils, cotangent/Voronoi ring geometry and the
//! Laplacian-coordinate (delta) vector field over flow space.

use std::io::Write;

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::sparse::Csr;

/// 1-ring offsets of the regular grid triangulation with NE-diagonal split,
/// listed in cyclic order so consecutive entries share a triangle.
pub const RING_OFFSETS: [(i64, i64); 6] = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)];

/// Cotangent sums are clamped to this magnitude under degenerate rings.
pub const COT_MAX: f64 = 1e4;

const MIN_T_DIST: f64 = 1e-6;

/// Grid triangulation topology: every pixel carries the six 1-ring neighbor
/// offsets of the vertex mesh, scaled by the vertex density.
#[derive(Debug, Clone)]
pub struct TriGridStencil {
    width: usize,
    height: usize,
    density: usize,
}

impl TriGridStencil {
    pub fn build(width: usize, height: usize, density: usize) -> Result<Self> {
        if density < 1 {
            return Err(Error::Config("mesh density must be >= 1".into()));
        }
        if 2 * density >= width.min(height) {
            return Err(Error::Config(format!(
                "mesh density {density} too large for {width}x{height} image"
            )));
        }
        Ok(TriGridStencil { width, height, density })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn density(&self) -> usize {
        self.density
    }

    /// The six ring offsets scaled by the density.
    pub fn offsets(&self) -> [(i64, i64); 6] {
        let d = self.density as i64;
        let mut out = RING_OFFSETS;
        for o in &mut out {
            o.0 *= d;
            o.1 *= d;
        }
        out
    }

    /// Pixel index of ring neighbor `k` of pixel (x, y), or None if it falls
    /// outside the image.
    #[inline]
    pub fn neighbor(&self, x: usize, y: usize, k: usize) -> Option<usize> {
        let d = self.density as i64;
        let nx = x as i64 + RING_OFFSETS[k].0 * d;
        let ny = y as i64 + RING_OFFSETS[k].1 * d;
        if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
            None
        } else {
            Some(ny as usize * self.width + nx as usize)
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Per-pixel deformed 1-ring geometry: clamped cotangent sums, endpoint edge
/// distances and the Voronoi area of the ring center.
#[derive(Debug, Clone)]
pub struct RingGeometry {
    pub cot_sum: Vec<[f64; 6]>,
    pub dist: Vec<[f64; 6]>,
    pub present: Vec<[bool; 6]>,
    pub voronoi_area: Vec<f64>,
}

impl RingGeometry {
    /// Inverse-distance t-weights of pixel `i`, normalized over present
    /// neighbors.
    pub fn t_weights(&self, i: usize) -> [f64; 6] {
        let mut t = [0.0f64; 6];
        let mut sum = 0.0;
        for k in 0..6 {
            if self.present[i][k] {
                t[k] = 1.0 / self.dist[i][k].max(MIN_T_DIST);
                sum += t[k];
            }
        }
        if sum > 0.0 {
            for w in &mut t {
                *w /= sum;
            }
        }
        t
    }
}

/// Per-pixel ring endpoint positions p = X + w.
pub fn endpoint_positions(w: &FlowField) -> (Vec<f64>, Vec<f64>) {
    let mut px = Vec::with_capacity(w.len());
    let mut py = Vec::with_capacity(w.len());
    for y in 0..w.height() {
        for x in 0..w.width() {
            px.push(x as f64 + w.u(x, y));
            py.push(y as f64 + w.v(x, y));
        }
    }
    (px, py)
}

/// Cotangent of the angle at vertex c in triangle (a, b, c).
#[inline]
fn cot_at(ax: f64, ay: f64, bx: f64, by: f64, cx: f64, cy: f64) -> f64 {
    let ux = ax - cx;
    let uy = ay - cy;
    let vx = bx - cx;
    let vy = by - cy;
    let cross = (ux * vy - uy * vx).abs();
    let dot = ux * vx + uy * vy;
    if cross == 0.0 {
        if dot > 0.0 {
            COT_MAX
        } else if dot < 0.0 {
            -COT_MAX
        } else {
            0.0
        }
    } else {
        dot / cross
    }
}

/// Cotangent weights and Voronoi areas of the deformed rings at the given
/// endpoint positions. Out-of-bounds neighbors are omitted from all sums.
pub fn ring_geometry(stencil: &TriGridStencil, pos_x: &[f64], pos_y: &[f64]) -> RingGeometry {
    let (w, h) = (stencil.width(), stencil.height());
    let n = w * h;
    debug_assert_eq!(pos_x.len(), n);
    debug_assert_eq!(pos_y.len(), n);
    let area_floor = 1e-4 * (stencil.density() as f64).powi(2);
    let mut geom = RingGeometry {
        cot_sum: vec![[0.0; 6]; n],
        dist: vec![[0.0; 6]; n],
        present: vec![[false; 6]; n],
        voronoi_area: vec![0.0; n],
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let cx = pos_x[i];
            let cy = pos_y[i];
            let mut npos = [(0.0f64, 0.0f64); 6];
            let mut pres = [false; 6];
            for k in 0..6 {
                if let Some(j) = stencil.neighbor(x, y, k) {
                    pres[k] = true;
                    npos[k] = (pos_x[j], pos_y[j]);
                }
            }
            let mut area = 0.0;
            for k in 0..6 {
                if !pres[k] {
                    continue;
                }
                let (jx, jy) = npos[k];
                let mut cs = 0.0;
                let prev = (k + 5) % 6;
                let next = (k + 1) % 6;
                if pres[prev] {
                    cs += cot_at(cx, cy, jx, jy, npos[prev].0, npos[prev].1);
                }
                if pres[next] {
                    cs += cot_at(cx, cy, jx, jy, npos[next].0, npos[next].1);
                }
                cs = cs.clamp(-COT_MAX, COT_MAX);
                let dist = ((jx - cx).powi(2) + (jy - cy).powi(2)).sqrt();
                geom.cot_sum[i][k] = cs;
                geom.dist[i][k] = dist;
                geom.present[i][k] = true;
                area += cs * dist * dist;
            }
            geom.voronoi_area[i] = (0.125 * area).max(area_floor);
        }
    }
    geom
}

/// Per-pixel Laplacian-coordinate field of the flow: the area-normalized
/// cotangent-weighted difference of each flow vector from its ring.
#[derive(Debug, Clone)]
pub struct DeltaField {
    pub delta_u: Vec<f64>,
    pub delta_v: Vec<f64>,
}

/// delta(w) with ring geometry evaluated at the endpoint positions X + w.
pub fn delta_field(stencil: &TriGridStencil, w: &FlowField) -> DeltaField {
    let (px, py) = endpoint_positions(w);
    let geom = ring_geometry(stencil, &px, &py);
    delta_from_geometry(stencil, &geom, w.u_data(), w.v_data())
}

/// delta of the scalar component fields (u, v) with frozen ring geometry;
/// linear in (u, v), which is what the inner linearization relies on.
pub fn delta_from_geometry(
    stencil: &TriGridStencil,
    geom: &RingGeometry,
    u: &[f64],
    v: &[f64],
) -> DeltaField {
    let (w, h) = (stencil.width(), stencil.height());
    let mut delta_u = vec![0.0; w * h];
    let mut delta_v = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut su = 0.0;
            let mut sv = 0.0;
            for k in 0..6 {
                if !geom.present[i][k] {
                    continue;
                }
                let j = stencil.neighbor(x, y, k).unwrap();
                let cs = geom.cot_sum[i][k];
                su += cs * (u[i] - u[j]);
                sv += cs * (v[i] - v[j]);
            }
            let norm = 2.0 * geom.voronoi_area[i];
            delta_u[i] = su / norm;
            delta_v[i] = sv / norm;
        }
    }
    DeltaField { delta_u, delta_v }
}

/// The delta operator as a sparse matrix over a scalar per-pixel field, with
/// frozen geometry: row i is sum_j cot_sum_ij (z_i - z_j) / (2 A_i).
pub fn delta_matrix(stencil: &TriGridStencil, geom: &RingGeometry) -> Csr {
    let (w, h) = (stencil.width(), stencil.height());
    let n = w * h;
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let norm = 2.0 * geom.voronoi_area[i];
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(7);
            let mut diag = 0.0;
            for k in 0..6 {
                if !geom.present[i][k] {
                    continue;
                }
                let j = stencil.neighbor(x, y, k).unwrap();
                let cs = geom.cot_sum[i][k] / norm;
                diag += cs;
                row.push((j, -cs));
            }
            row.push((i, diag));
            row.sort_unstable_by_key(|e| e.0);
            rows.push(row);
        }
    }
    Csr::from_rows(n, n, rows)
}

/// The diffusivity-weighted ring divergence as a sparse matrix L so that
/// L z = -Div(psi grad z) = sum_j t_ij g_ij (z_i - z_j), with
/// g_ij = (psi_i + psi_j)/2 and normalized inverse-distance t-weights.
pub fn ring_divergence_matrix(
    stencil: &TriGridStencil,
    geom: &RingGeometry,
    psi: &[f64],
) -> Csr {
    let (w, h) = (stencil.width(), stencil.height());
    let n = w * h;
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let t = geom.t_weights(i);
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(7);
            let mut diag = 0.0;
            for k in 0..6 {
                if !geom.present[i][k] {
                    continue;
                }
                let j = stencil.neighbor(x, y, k).unwrap();
                let g = t[k] * 0.5 * (psi[i] + psi[j]);
                diag += g;
                row.push((j, -g));
            }
            row.push((i, diag));
            row.sort_unstable_by_key(|e| e.0);
            rows.push(row);
        }
    }
    Csr::from_rows(n, n, rows)
}

/// Discrete weighted divergence of the diffusivity-scaled ring gradient of
/// delta: per pixel, sum_j t_ij g_ij (delta_j - delta_i) for each component.
pub fn delta_divergence(
    stencil: &TriGridStencil,
    geom: &RingGeometry,
    delta: &DeltaField,
    psi: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (stencil.width(), stencil.height());
    let n = w * h;
    let mut div_u = vec![0.0; n];
    let mut div_v = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let t = geom.t_weights(i);
            let mut su = 0.0;
            let mut sv = 0.0;
            for k in 0..6 {
                if !geom.present[i][k] {
                    continue;
                }
                let j = stencil.neighbor(x, y, k).unwrap();
                let g = t[k] * 0.5 * (psi[i] + psi[j]);
                su += g * (delta.delta_u[j] - delta.delta_u[i]);
                sv += g * (delta.delta_v[j] - delta.delta_v[i]);
            }
            div_u[i] = su;
            div_v[i] = sv;
        }
    }
    (div_u, div_v)
}

/// The ring-gradient operator G as a sparse matrix: (G z)_i is the
/// t-weighted neighbor average of z minus z_i, matching
/// [`delta_ring_gradient`] applied per component.
pub fn ring_gradient_matrix(stencil: &TriGridStencil, geom: &RingGeometry) -> Csr {
    let (w, h) = (stencil.width(), stencil.height());
    let n = w * h;
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let t = geom.t_weights(i);
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(7);
            for k in 0..6 {
                if !geom.present[i][k] {
                    continue;
                }
                let j = stencil.neighbor(x, y, k).unwrap();
                row.push((j, t[k]));
            }
            row.push((i, -1.0));
            row.sort_unstable_by_key(|e| e.0);
            rows.push(row);
        }
    }
    Csr::from_rows(n, n, rows)
}

/// Ring gradient of delta approximated as the t-weighted neighbor average
/// minus the center value, per component.
pub fn delta_ring_gradient(
    stencil: &TriGridStencil,
    geom: &RingGeometry,
    delta: &DeltaField,
) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (stencil.width(), stencil.height());
    let n = w * h;
    let mut gu = vec![0.0; n];
    let mut gv = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let t = geom.t_weights(i);
            let mut au = 0.0;
            let mut av = 0.0;
            for k in 0..6 {
                if !geom.present[i][k] {
                    continue;
                }
                let j = stencil.neighbor(x, y, k).unwrap();
                au += t[k] * delta.delta_u[j];
                av += t[k] * delta.delta_v[j];
            }
            gu[i] = au - delta.delta_u[i];
            gv[i] = av - delta.delta_v[i];
        }
    }
    (gu, gv)
}

/// Debug dump of the ring geometry as CSV rows (pixel, neighbor, cot_sum,
/// voronoi_area) for oracle comparison.
pub fn dump_ring_geometry_csv(
    stencil: &TriGridStencil,
    geom: &RingGeometry,
    mut out: impl Write,
) -> std::io::Result<()> {
    writeln!(out, "pixel,neighbor,cot_sum,voronoi_area")?;
    let (w, h) = (stencil.width(), stencil.height());
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            for k in 0..6 {
                if !geom.present[i][k] {
                    continue;
                }
                let j = stencil.neighbor(x, y, k).unwrap();
                writeln!(out, "{},{},{},{}", i, j, geom.cot_sum[i][k], geom.voronoi_area[i])?;
            }
        }
    }
    Ok(())
}
