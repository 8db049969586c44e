//! Energy minimization: robust penalty, diffusivities, sparse system
//! assembly and the coarse-to-fine nested fixed-point loop.

use crate::error::{Error, Result};
use crate::flow::{resample_flow, FlowField};
use crate::image::{
    build_pyramid, derivatives, gaussian_smooth, warped_derivatives, DerivativeSet, Image,
};
use crate::mesh::{
    delta_from_geometry, delta_matrix, delta_ring_gradient, endpoint_positions,
    ring_geometry, ring_gradient_matrix, DeltaField, RingGeometry, TriGridStencil,
};
use crate::sparse::Csr;

/// Iterative method for the inner linear systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearSolverKind {
    Cg,
    Sor,
}

/// All scalar knobs of the solver.
#[derive(Debug, Clone)]
pub struct SolverParams {
    /// Robust-penalty offset epsilon in Psi(s^2) = sqrt(s^2 + eps^2).
    pub epsilon: f64,
    /// Gradient-constancy weight theta in [0,1].
    pub theta: f64,
    /// Global smoothness weight lambda.
    pub lambda: f64,
    /// Laplacian cotangent mesh smoothness weight xi.
    pub xi: f64,
    /// Mesh vertex density in pixels at the finest level.
    pub mesh_density: usize,
    pub pyramid_factor: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub linear_solver: LinearSolverKind,
    /// Iteration count for the linear solver (CG or SOR sweeps).
    pub cg_iters: usize,
    pub sor_omega: f64,
    /// Coarsest pyramid dimension.
    pub min_dim: usize,
    /// Optional input pre-smoothing sigma; 0 disables it.
    pub presmooth_sigma: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            epsilon: 0.001,
            theta: 0.5,
            lambda: 0.85,
            xi: 0.6,
            mesh_density: 25,
            pyramid_factor: 0.75,
            outer_iters: 30,
            inner_iters: 5,
            linear_solver: LinearSolverKind::Cg,
            cg_iters: 45,
            sor_omega: 1.9,
            min_dim: 16,
            presmooth_sigma: 0.0,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Config("theta must lie in [0,1]".into()));
        }
        if self.lambda < 0.0 || self.xi < 0.0 {
            return Err(Error::Config("lambda and xi must be nonnegative".into()));
        }
        if self.outer_iters < 1 || self.inner_iters < 1 || self.cg_iters < 1 {
            return Err(Error::Config("iteration counts must be >= 1".into()));
        }
        if !(self.pyramid_factor > 0.0 && self.pyramid_factor < 1.0) {
            return Err(Error::Config("pyramid factor must be in (0,1)".into()));
        }
        if self.mesh_density < 1 {
            return Err(Error::Config("mesh density must be >= 1".into()));
        }
        if self.min_dim < 8 {
            return Err(Error::Config("min_dim must be >= 8".into()));
        }
        Ok(())
    }
}

/// Robust penalty Psi(s^2) = sqrt(s^2 + eps^2).
#[inline]
pub fn psi(s2: f64, epsilon: f64) -> f64 {
    (s2 + epsilon * epsilon).sqrt()
}

/// Psi'(s^2) = 1 / (2 sqrt(s^2 + eps^2)); bounded by 1/(2 eps).
#[inline]
pub fn psi_prime(s2: f64, epsilon: f64) -> f64 {
    1.0 / (2.0 * (s2 + epsilon * epsilon).sqrt())
}

/// Flow increment of one outer iteration.
#[derive(Debug, Clone)]
pub struct FlowIncrement {
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
}

impl FlowIncrement {
    pub fn zeros(n: usize) -> Self {
        FlowIncrement { du: vec![0.0; n], dv: vec![0.0; n] }
    }
}

/// The three per-pixel diffusivity fields of the linearized system.
#[derive(Debug, Clone)]
pub struct DiffusivityFields {
    pub psi_data: Vec<f64>,
    pub psi_global: Vec<f64>,
    pub psi_lap: Vec<f64>,
}

/// Frozen mesh context of one outer iteration: the stencil, the ring
/// geometry at the endpoint positions of w^k, and delta(w^k).
pub struct LapContext<'a> {
    pub stencil: &'a TriGridStencil,
    pub geometry: &'a RingGeometry,
    pub delta: &'a DeltaField,
}

fn field_gradient_sq(u: &[f64], v: &[f64], width: usize, height: usize) -> Result<Vec<f64>> {
    let ui = Image::new(width, height, u.to_vec())?;
    let vi = Image::new(width, height, v.to_vec())?;
    let du = derivatives(&ui)?;
    let dv = derivatives(&vi)?;
    let n = width * height;
    let mut out = vec![0.0; n];
    for i in 0..n {
        out[i] = du.ix.data()[i].powi(2)
            + du.iy.data()[i].powi(2)
            + dv.ix.data()[i].powi(2)
            + dv.iy.data()[i].powi(2);
    }
    Ok(out)
}

/// Evaluate the three Psi' fields at the current (w, dw). Without a mesh
/// context (xi = 0) the LCM diffusivity degenerates to its zero-argument
/// value 1/(2 eps).
pub fn diffusivities(
    deriv: &DerivativeSet,
    w: &FlowField,
    dw: &FlowIncrement,
    lap: Option<&LapContext>,
    params: &SolverParams,
) -> Result<DiffusivityFields> {
    let n = w.len();
    if dw.du.len() != n || deriv.iz.data().len() != n {
        return Err(Error::Dimension("diffusivity input dimensions mismatch".into()));
    }
    let eps = params.epsilon;
    let theta = params.theta;

    let mut psi_data = vec![0.0; n];
    for i in 0..n {
        let r = deriv.iz.data()[i] + deriv.ix.data()[i] * dw.du[i] + deriv.iy.data()[i] * dw.dv[i];
        let rx =
            deriv.ixz.data()[i] + deriv.ixx.data()[i] * dw.du[i] + deriv.ixy.data()[i] * dw.dv[i];
        let ry =
            deriv.iyz.data()[i] + deriv.ixy.data()[i] * dw.du[i] + deriv.iyy.data()[i] * dw.dv[i];
        psi_data[i] = psi_prime(r * r + theta * (rx * rx + ry * ry), eps);
    }

    let cur_u: Vec<f64> = w.u_data().iter().zip(&dw.du).map(|(a, b)| a + b).collect();
    let cur_v: Vec<f64> = w.v_data().iter().zip(&dw.dv).map(|(a, b)| a + b).collect();
    let grad2 = field_gradient_sq(&cur_u, &cur_v, w.width(), w.height())?;
    let psi_global: Vec<f64> = grad2.iter().map(|g| psi_prime(*g, eps)).collect();

    let psi_lap = match lap {
        Some(ctx) => {
            let delta_cur = delta_from_geometry(ctx.stencil, ctx.geometry, &cur_u, &cur_v);
            let (gu, gv) = delta_ring_gradient(ctx.stencil, ctx.geometry, &delta_cur);
            (0..n).map(|i| psi_prime(gu[i] * gu[i] + gv[i] * gv[i], eps)).collect()
        }
        None => vec![psi_prime(0.0, eps); n],
    };

    Ok(DiffusivityFields { psi_data, psi_global, psi_lap })
}

/// Assembled sparse linear system over the stacked unknowns (du, dv): the u
/// equations occupy rows 0..n, the v equations rows n..2n.
pub struct LinearSystem {
    pub n_pixels: usize,
    pub matrix: Csr,
    pub rhs: Vec<f64>,
}

const FOUR_NEIGHBORS: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Graph Laplacian of the 4-neighbor global smoothness term with
/// edge-averaged diffusivities: L z = sum_j g_ij (z_i - z_j).
fn global_laplacian(psi_global: &[f64], width: usize, height: usize) -> Csr {
    let n = width * height;
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(5);
            let mut diag = 0.0;
            for (ox, oy) in FOUR_NEIGHBORS {
                let nx = x as i64 + ox;
                let ny = y as i64 + oy;
                if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                    continue;
                }
                let j = ny as usize * width + nx as usize;
                let g = 0.5 * (psi_global[i] + psi_global[j]);
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

fn global_divergence(psi_global: &[f64], z: &[f64], width: usize, height: usize) -> Vec<f64> {
    let n = width * height;
    let mut out = vec![0.0; n];
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let mut acc = 0.0;
            for (ox, oy) in FOUR_NEIGHBORS {
                let nx = x as i64 + ox;
                let ny = y as i64 + oy;
                if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                    continue;
                }
                let j = ny as usize * width + nx as usize;
                acc += 0.5 * (psi_global[i] + psi_global[j]) * (z[j] - z[i]);
            }
            out[i] = acc;
        }
    }
    out
}

/// Assemble the coupled linear system of one inner iteration. The ring
/// geometry (cotangents, areas, t-weights) is frozen at w^k, which makes the
/// delta operator linear in the increment; the non-symmetric composed LCM
/// block is symmetrized by averaging with its transpose.
pub fn assemble_system(
    deriv: &DerivativeSet,
    w: &FlowField,
    diff: &DiffusivityFields,
    lap: Option<&LapContext>,
    params: &SolverParams,
) -> Result<LinearSystem> {
    let n = w.len();
    let (width, height) = (w.width(), w.height());
    let theta = params.theta;

    // scalar smoothness operator shared by the u and v blocks
    let mut smooth = global_laplacian(&diff.psi_global, width, height);
    if params.lambda != 1.0 {
        for v in &mut smooth.values {
            *v *= params.lambda;
        }
    }
    // The LCM energy sum_i Psi(|grad delta_i|^2) with frozen ring geometry is
    // quadratic in the flow through B = G * Lambda (ring gradient of the
    // delta coordinates), so its contribution is the positive-semidefinite
    // sandwich B^T D_psi B; composing the divergence with Lambda directly
    // drops the chain-rule factor and loses definiteness.
    let mut lcm_op: Option<(Csr, Csr)> = None; // (B, B^T with psi-scaled columns)
    if params.xi > 0.0 {
        if let Some(ctx) = lap {
            let lam = delta_matrix(ctx.stencil, ctx.geometry);
            let grad = ring_gradient_matrix(ctx.stencil, ctx.geometry);
            let b_op = Csr::multiply(&grad, &lam);
            let mut db = b_op.clone();
            for i in 0..db.nrows {
                for v in &mut db.values[db.indptr[i]..db.indptr[i + 1]] {
                    *v *= diff.psi_lap[i];
                }
            }
            let bt = b_op.transpose();
            let composed = Csr::multiply(&bt, &db).symmetrize();
            smooth = Csr::add_scaled(&smooth, 1.0, &composed, params.xi);
            lcm_op = Some((b_op, bt));
        }
    }

    // data-term 2x2 blocks and right-hand side constants
    let mut auu = vec![0.0; n];
    let mut auv = vec![0.0; n];
    let mut avv = vec![0.0; n];
    let mut bu = vec![0.0; n];
    let mut bv = vec![0.0; n];
    for i in 0..n {
        let pd = diff.psi_data[i];
        let ix = deriv.ix.data()[i];
        let iy = deriv.iy.data()[i];
        let ixx = deriv.ixx.data()[i];
        let iyy = deriv.iyy.data()[i];
        let ixy = deriv.ixy.data()[i];
        let iz = deriv.iz.data()[i];
        let ixz = deriv.ixz.data()[i];
        let iyz = deriv.iyz.data()[i];
        auu[i] = pd * (ix * ix + theta * (ixx * ixx + ixy * ixy));
        auv[i] = pd * (ix * iy + theta * (ixx * ixy + ixy * iyy));
        avv[i] = pd * (iy * iy + theta * (iyy * iyy + ixy * ixy));
        bu[i] = -pd * (ix * iz + theta * (ixx * ixz + ixy * iyz));
        bv[i] = -pd * (iy * iz + theta * (iyy * iyz + ixy * ixz));
    }

    // smoothness contributions at the current flow go to the right-hand side
    let div_u = global_divergence(&diff.psi_global, w.u_data(), width, height);
    let div_v = global_divergence(&diff.psi_global, w.v_data(), width, height);
    for i in 0..n {
        bu[i] += params.lambda * div_u[i];
        bv[i] += params.lambda * div_v[i];
    }
    if let Some((b_op, bt)) = &lcm_op {
        // -xi * B^T D_psi B w for each component, via the delta-coordinate
        // ring gradient B w = grad delta(w)
        let mut gu = vec![0.0; n];
        let mut gv = vec![0.0; n];
        b_op.matvec(w.u_data(), &mut gu);
        b_op.matvec(w.v_data(), &mut gv);
        for i in 0..n {
            gu[i] *= diff.psi_lap[i];
            gv[i] *= diff.psi_lap[i];
        }
        let mut ru = vec![0.0; n];
        let mut rv = vec![0.0; n];
        bt.matvec(&gu, &mut ru);
        bt.matvec(&gv, &mut rv);
        for i in 0..n {
            bu[i] -= params.xi * ru[i];
            bv[i] -= params.xi * rv[i];
        }
    }

    // stack into the 2n x 2n system
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(2 * n);
    for i in 0..n {
        let (cols, vals) = smooth.row(i);
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(cols.len() + 1);
        for (c, v) in cols.iter().zip(vals) {
            let mut val = *v;
            if *c == i {
                val += auu[i];
            }
            row.push((*c, val));
        }
        row.push((n + i, auv[i]));
        rows.push(row);
    }
    for i in 0..n {
        let (cols, vals) = smooth.row(i);
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(cols.len() + 1);
        row.push((i, auv[i]));
        for (c, v) in cols.iter().zip(vals) {
            let mut val = *v;
            if *c == i {
                val += avv[i];
            }
            row.push((n + *c, val));
        }
        rows.push(row);
    }
    let matrix = Csr::from_rows(2 * n, 2 * n, rows);

    let mut rhs = bu;
    rhs.extend_from_slice(&bv);

    for (r, v) in matrix.values.iter().enumerate() {
        if !v.is_finite() {
            let row = matrix.indptr.partition_point(|p| *p <= r) - 1;
            return Err(Error::Numerical(format!(
                "non-finite matrix entry at pixel {}",
                row % n
            )));
        }
    }
    for (i, v) in rhs.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Numerical(format!("non-finite rhs entry at pixel {}", i % n)));
        }
    }
    let diag = matrix.diagonal();
    if let Some(i) = diag.iter().position(|d| *d <= 0.0) {
        return Err(Error::Numerical(format!("non-positive diagonal at pixel {}", i % n)));
    }

    Ok(LinearSystem { n_pixels: n, matrix, rhs })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const RESIDUAL_EXIT: f64 = 1e-12;

/// The 8-bit intensity range the default term weights are calibrated for;
/// [0,1] inputs are rescaled by this factor before estimation.
pub const INTENSITY_SCALE: f64 = 255.0;

/// Zero-fill incomplete Cholesky factor L (lower triangular, CSR, columns
/// ascending per row) of a symmetric positive-definite sparse matrix. On
/// pivot breakdown the diagonal is shifted and the factorization restarted.
struct IncompleteCholesky {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl IncompleteCholesky {
    fn factor(a: &Csr) -> Option<IncompleteCholesky> {
        let n = a.nrows;
        // lower-triangular pattern of A
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut base = Vec::new();
        indptr.push(0);
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (c, v) in cols.iter().zip(vals) {
                if *c <= i {
                    indices.push(*c);
                    base.push(*v);
                }
            }
            indptr.push(indices.len());
            if indices.last() != Some(&i) {
                return None; // structurally missing diagonal
            }
        }
        let max_diag = a.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs())).max(1.0);
        let mut shift = 0.0;
        'attempt: for _ in 0..24 {
            let mut values = base.clone();
            if shift > 0.0 {
                for i in 0..n {
                    let last = indptr[i + 1] - 1;
                    if indices[last] == i {
                        values[last] = base[last] + shift;
                    }
                }
            }
            for i in 0..n {
                let row_start = indptr[i];
                let row_end = indptr[i + 1];
                for idx in row_start..row_end {
                    let j = indices[idx];
                    // dot of rows i and j over columns < j (sorted merge)
                    let mut acc = 0.0;
                    let mut pi = row_start;
                    let mut pj = indptr[j];
                    let pj_end = indptr[j + 1];
                    while pi < idx && pj < pj_end {
                        let (ci, cj) = (indices[pi], indices[pj]);
                        if cj >= j {
                            break;
                        }
                        if ci == cj {
                            acc += values[pi] * values[pj];
                            pi += 1;
                            pj += 1;
                        } else if ci < cj {
                            pi += 1;
                        } else {
                            pj += 1;
                        }
                    }
                    if j < i {
                        let ljj = values[indptr[j + 1] - 1];
                        values[idx] = (values[idx] - acc) / ljj;
                    } else {
                        let pivot = values[idx] - acc;
                        if pivot <= 0.0 || !pivot.is_finite() {
                            shift = if shift == 0.0 { 1e-8 * max_diag } else { shift * 10.0 };
                            if shift > 1e4 * max_diag {
                                return None;
                            }
                            continue 'attempt;
                        }
                        values[idx] = pivot.sqrt();
                    }
                }
            }
            return Some(IncompleteCholesky { indptr, indices, values });
        }
        None
    }

    /// Solve L L^T z = r.
    fn solve(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        // forward: L y = r (y stored in z)
        for i in 0..n {
            let mut acc = r[i];
            let end = self.indptr[i + 1] - 1;
            for idx in self.indptr[i]..end {
                acc -= self.values[idx] * z[self.indices[idx]];
            }
            z[i] = acc / self.values[end];
        }
        // backward: L^T z = y, in place
        for i in (0..n).rev() {
            let end = self.indptr[i + 1] - 1;
            z[i] /= self.values[end];
            let zi = z[i];
            for idx in self.indptr[i]..end {
                z[self.indices[idx]] -= self.values[idx] * zi;
            }
        }
    }
}

/// Preconditioned conjugate gradients; the diffusivity fields spread the
/// spectrum over several orders of magnitude, so an incomplete-Cholesky
/// preconditioner (Jacobi fallback) is essential for useful progress in a
/// fixed iteration budget.
fn cg_solve(a: &Csr, b: &[f64], iters: usize, x0: Option<&[f64]>) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = match x0 {
        Some(g) => g.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    a.matvec(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    if dot(&r, &r).sqrt() < RESIDUAL_EXIT {
        return Ok(x);
    }
    let ic = IncompleteCholesky::factor(a);
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d.max(f64::MIN_POSITIVE)).collect();
    let apply_pre = |r: &[f64], z: &mut [f64]| match &ic {
        Some(f) => f.solve(r, z),
        None => {
            for i in 0..r.len() {
                z[i] = r[i] * inv_diag[i];
            }
        }
    };
    let mut z = vec![0.0; n];
    apply_pre(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..iters {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap == 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("CG iterate diverged to non-finite values".into()));
        }
        if dot(&r, &r).sqrt() < RESIDUAL_EXIT {
            break;
        }
        apply_pre(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rz = rz_new;
    }
    Ok(x)
}

fn sor_solve(a: &Csr, b: &[f64], iters: usize, omega: f64, x0: Option<&[f64]>) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = match x0 {
        Some(g) => g.to_vec(),
        None => vec![0.0; n],
    };
    let diag = a.diagonal();
    let mut r = vec![0.0; n];
    for _ in 0..iters {
        for i in 0..n {
            let (cols, vals) = a.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                if *c != i {
                    acc += v * x[*c];
                }
            }
            let gs = (b[i] - acc) / diag[i];
            x[i] = (1.0 - omega) * x[i] + omega * gs;
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("SOR iterate diverged to non-finite values".into()));
        }
        a.matvec(&x, &mut r);
        let res: f64 = r.iter().zip(b).map(|(ax, bi)| (bi - ax).powi(2)).sum::<f64>().sqrt();
        if res < RESIDUAL_EXIT {
            break;
        }
    }
    Ok(x)
}

/// Fixed-iteration-count iterative solution from a zero initial guess.
pub fn solve_linear(
    system: &LinearSystem,
    method: LinearSolverKind,
    iters: usize,
) -> Result<FlowIncrement> {
    solve_linear_from(system, method, iters, 1.9, None)
}

/// Like [`solve_linear`] but warm-started; successive inner iterations of
/// the fixed point pass their previous increment here so the linear-solver
/// work accumulates.
pub fn solve_linear_from(
    system: &LinearSystem,
    method: LinearSolverKind,
    iters: usize,
    omega: f64,
    initial: Option<&FlowIncrement>,
) -> Result<FlowIncrement> {
    if iters < 1 {
        return Err(Error::Config("linear solver iteration count must be >= 1".into()));
    }
    let x0: Option<Vec<f64>> = initial.map(|inc| {
        let mut x = inc.du.clone();
        x.extend_from_slice(&inc.dv);
        x
    });
    let x = match method {
        LinearSolverKind::Cg => cg_solve(&system.matrix, &system.rhs, iters, x0.as_deref())?,
        LinearSolverKind::Sor => sor_solve(&system.matrix, &system.rhs, iters, omega, x0.as_deref())?,
    };
    let n = system.n_pixels;
    Ok(FlowIncrement { du: x[..n].to_vec(), dv: x[n..].to_vec() })
}

/// Mesh density at a pyramid level, counted from the finest level.
fn level_density(params: &SolverParams, level_from_finest: usize, width: usize, height: usize) -> usize {
    let scaled = (params.mesh_density as f64 * params.pyramid_factor.powi(level_from_finest as i32))
        .round() as usize;
    let max_density = (width.min(height) / 2).saturating_sub(1).max(1);
    scaled.clamp(1, max_density)
}

/// Full coarse-to-fine pipeline: image pyramids, per level the nested
/// fixed-point iterations with delta-field recomputation, and bicubic flow
/// propagation between levels.
pub fn compute_flow(i1: &Image, i2: &Image, params: &SolverParams) -> Result<FlowField> {
    params.validate()?;
    if i1.width() != i2.width() || i1.height() != i2.height() {
        return Err(Error::Dimension("input images must share dimensions".into()));
    }
    if i1.width() < params.min_dim || i1.height() < params.min_dim {
        return Err(Error::Dimension(format!(
            "input images {}x{} smaller than min_dim {}",
            i1.width(),
            i1.height(),
            params.min_dim
        )));
    }
    // Intensities arrive in [0,1]; the default term weights balance data
    // against smoothness for the 8-bit intensity range, so work on a 0..255
    // scale internally.
    let scale = |img: &Image| {
        Image::from_fn(img.width(), img.height(), |x, y| img.get(x, y) * INTENSITY_SCALE)
    };
    let (mut i1r, mut i2r) = (scale(i1), scale(i2));
    if params.presmooth_sigma > 0.0 {
        i1r = gaussian_smooth(&i1r, params.presmooth_sigma);
        i2r = gaussian_smooth(&i2r, params.presmooth_sigma);
    }
    let pyr1 = build_pyramid(&i1r, params.pyramid_factor, params.min_dim)?;
    let pyr2 = build_pyramid(&i2r, params.pyramid_factor, params.min_dim)?;

    let coarsest = pyr1.coarsest();
    let mut w = FlowField::zeros(coarsest.width(), coarsest.height());

    for (level_idx, lvl1) in pyr1.coarse_to_fine() {
        let lvl2 = &pyr2.levels()[level_idx];
        let (lw, lh) = (lvl1.width(), lvl1.height());
        if w.width() != lw || w.height() != lh {
            w = resample_flow(&w, lw, lh);
        }
        let stencil = if params.xi > 0.0 {
            Some(TriGridStencil::build(lw, lh, level_density(params, level_idx, lw, lh))?)
        } else {
            None
        };
        let n = lw * lh;
        for _outer in 0..params.outer_iters {
            let deriv = warped_derivatives(lvl1, lvl2, &w)?;
            let mesh_state = match &stencil {
                Some(s) => {
                    let (px, py) = endpoint_positions(&w);
                    let geometry = ring_geometry(s, &px, &py);
                    let delta = delta_from_geometry(s, &geometry, w.u_data(), w.v_data());
                    Some((geometry, delta))
                }
                None => None,
            };
            let mut dw = FlowIncrement::zeros(n);
            for _inner in 0..params.inner_iters {
                let ctx = mesh_state.as_ref().map(|(geometry, delta)| LapContext {
                    stencil: stencil.as_ref().unwrap(),
                    geometry,
                    delta,
                });
                let diff = diffusivities(&deriv, &w, &dw, ctx.as_ref(), params)?;
                let system = assemble_system(&deriv, &w, &diff, ctx.as_ref(), params)?;
                dw = solve_linear_from(
                    &system,
                    params.linear_solver,
                    params.cg_iters,
                    params.sor_omega,
                    Some(&dw),
                )?;
                // a first inner iteration that stays exactly at zero would
                // rebuild the identical system every remaining pass
                if _inner == 0
                    && dw.du.iter().chain(&dw.dv).all(|v| v.abs() < 1e-14)
                {
                    break;
                }
            }
            w.add_increment(&dw.du, &dw.dv);
            if !w.is_finite() {
                return Err(Error::Numerical("flow field diverged to non-finite values".into()));
            }
            // exact fixed point: a zero increment reproduces this outer
            // iteration verbatim, so the remaining ones are no-ops
            let max_dw = dw.du.iter().chain(&dw.dv).fold(0.0f64, |a, b| a.max(b.abs()));
            if max_dw < 1e-14 {
                break;
            }
        }
    }
    Ok(w)
}

/// Discretized total energy E(w) = E_Data + lambda E_Global + xi E_Lap,
/// evaluated directly from the definitions; used as an independent
/// diagnostic of the minimization.
pub fn evaluate_energy(i1: &Image, i2: &Image, w: &FlowField, params: &SolverParams) -> Result<f64> {
    // same internal intensity range as compute_flow
    let scale = |img: &Image| {
        Image::from_fn(img.width(), img.height(), |x, y| img.get(x, y) * INTENSITY_SCALE)
    };
    let (i1, i2) = (&scale(i1), &scale(i2));
    let deriv = warped_derivatives(i1, i2, w)?;
    let n = w.len();
    let eps = params.epsilon;
    let mut e_data = 0.0;
    for i in 0..n {
        e_data += psi(deriv.iz.data()[i].powi(2), eps);
        e_data += params.theta
            * psi(deriv.ixz.data()[i].powi(2) + deriv.iyz.data()[i].powi(2), eps);
    }
    let grad2 = field_gradient_sq(w.u_data(), w.v_data(), w.width(), w.height())?;
    let e_global: f64 = grad2.iter().map(|g| psi(*g, eps)).sum();
    let e_lap = if params.xi > 0.0 {
        let density = level_density(params, 0, w.width(), w.height());
        let stencil = TriGridStencil::build(w.width(), w.height(), density)?;
        let (px, py) = endpoint_positions(w);
        let geometry = ring_geometry(&stencil, &px, &py);
        let delta = delta_from_geometry(&stencil, &geometry, w.u_data(), w.v_data());
        let (gu, gv) = delta_ring_gradient(&stencil, &geometry, &delta);
        (0..n).map(|i| psi(gu[i] * gu[i] + gv[i] * gv[i], eps)).sum()
    } else {
        0.0
    };
    Ok(e_data + params.lambda * e_global + params.xi * e_lap)
}
