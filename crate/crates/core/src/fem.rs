//! Bilinear finite elements for the Dirichlet problem
//! `-∇·(a ∇u) = f` on `D = [-1, 1]²` with `u = 0` on the boundary, plus the
//! weighted-integral quantity of interest.
//!
//! The mesh is a uniform `N x N` grid of square elements. Stiffness and
//! load use 2x2 Gauss quadrature with the coefficient evaluated at the
//! quadrature points; the reduced system is solved with Jacobi-
//! preconditioned conjugate gradients. Solves are cheap (a few hundred
//! unknowns at the default mesh) but the studies run millions of them, so
//! the workspace is reusable and warm starts are supported.

use crate::error::{Error, Result};
use crate::gauss;
use crate::integrands::{GaussIntegrand, Integrand, Session};
use crate::randomfield::FieldBasis;

/// Uniform square mesh on [-1, 1]².
#[derive(Debug, Clone, Copy)]
pub struct Mesh {
    n: usize,
}

impl Mesh {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("mesh resolution {n} too small")));
        }
        Ok(Mesh { n })
    }

    pub fn cells_per_axis(&self) -> usize {
        self.n
    }

    pub fn node_count(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    pub fn spacing(&self) -> f64 {
        2.0 / self.n as f64
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    pub fn node_coords(&self, idx: usize) -> [f64; 2] {
        let i = idx % (self.n + 1);
        let j = idx / (self.n + 1);
        let h = self.spacing();
        [-1.0 + h * i as f64, -1.0 + h * j as f64]
    }

    #[inline]
    pub fn is_boundary(&self, idx: usize) -> bool {
        let i = idx % (self.n + 1);
        let j = idx / (self.n + 1);
        i == 0 || i == self.n || j == 0 || j == self.n
    }

    /// Physical quadrature points, element-major then the 2x2 Gauss points.
    pub fn quadrature_points(&self) -> Vec<[f64; 2]> {
        let h = self.spacing();
        let g = 1.0 / 3f64.sqrt();
        let mut pts = Vec::with_capacity(4 * self.n * self.n);
        for ej in 0..self.n {
            for ei in 0..self.n {
                let cx = -1.0 + h * (ei as f64 + 0.5);
                let cy = -1.0 + h * (ej as f64 + 0.5);
                for (qx, qy) in [(-g, -g), (g, -g), (-g, g), (g, g)] {
                    pts.push([cx + 0.5 * h * qx, cy + 0.5 * h * qy]);
                }
            }
        }
        pts
    }
}

// Reference-element shape functions and gradients at the 2x2 Gauss points.
// Local node order: (-1,-1), (1,-1), (-1,1), (1,1).
struct RefData {
    shape: [[f64; 4]; 4],    // shape[q][a]
    grad: [[[f64; 2]; 4]; 4], // grad[q][a] = reference gradient
}

fn ref_data() -> RefData {
    let g = 1.0 / 3f64.sqrt();
    let pts = [(-g, -g), (g, -g), (-g, g), (g, g)];
    let mut shape = [[0.0; 4]; 4];
    let mut grad = [[[0.0; 2]; 4]; 4];
    for (q, &(xi, eta)) in pts.iter().enumerate() {
        let signs = [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)];
        for (a, &(sx, sy)) in signs.iter().enumerate() {
            shape[q][a] = 0.25 * (1.0 + sx * xi) * (1.0 + sy * eta);
            grad[q][a] = [0.25 * sx * (1.0 + sy * eta), 0.25 * sy * (1.0 + sx * xi)];
        }
    }
    RefData { shape, grad }
}

/// Solver controls.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Relative residual target.
    pub tolerance: f64,
    /// Iteration cap as a multiple of the node count.
    pub max_iter_factor: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-10,
            max_iter_factor: 10,
        }
    }
}

/// Reusable assembly and solve scratch. One per worker thread.
pub struct FemWorkspace {
    mesh: Mesh,
    /// 9-point stencil per node; offset order is (dj, di) row-major.
    stencil: Vec<[f64; 9]>,
    rhs: Vec<f64>,
    solution: Vec<f64>,
    inv_diag: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    ap: Vec<f64>,
    has_previous: bool,
}

impl FemWorkspace {
    pub fn new(mesh: Mesh) -> Self {
        let nodes = mesh.node_count();
        FemWorkspace {
            mesh,
            stencil: vec![[0.0; 9]; nodes],
            rhs: vec![0.0; nodes],
            solution: vec![0.0; nodes],
            inv_diag: vec![0.0; nodes],
            r: vec![0.0; nodes],
            z: vec![0.0; nodes],
            p: vec![0.0; nodes],
            ap: vec![0.0; nodes],
            has_previous: false,
        }
    }

    /// Nodal values of the most recent solve.
    pub fn solution(&self) -> &[f64] {
        &self.solution
    }

    /// Drop the warm-start state.
    pub fn reset(&mut self) {
        self.has_previous = false;
    }
}

/// Iteration statistics of one solve; the solution stays in the workspace.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

/// A solved system with owned nodal values.
#[derive(Debug, Clone)]
pub struct FemSolution {
    pub nodal: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Assemble and solve with the coefficient and load given at the mesh's
/// quadrature points (see [`Mesh::quadrature_points`] for the ordering).
///
/// When `warm_start` is set, the previous solution held by the workspace
/// seeds the iteration; results agree with a cold start to solver
/// tolerance.
pub fn assemble_and_solve(
    ws: &mut FemWorkspace,
    a_quad: &[f64],
    f_quad: &[f64],
    options: SolverOptions,
    warm_start: bool,
) -> Result<SolveStats> {
    let mesh = ws.mesh;
    let n = mesh.cells_per_axis();
    assert_eq!(a_quad.len(), 4 * n * n, "coefficient sample count");
    assert_eq!(f_quad.len(), 4 * n * n, "load sample count");
    let refd = ref_data();
    let h = mesh.spacing();
    let jac = h * h / 4.0;

    for row in ws.stencil.iter_mut() {
        *row = [0.0; 9];
    }
    ws.rhs.iter_mut().for_each(|v| *v = 0.0);

    // Local node -> (di, dj) within the element.
    const LOCAL: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];
    for ej in 0..n {
        for ei in 0..n {
            let e = ej * n + ei;
            let aq = &a_quad[4 * e..4 * e + 4];
            let fq = &f_quad[4 * e..4 * e + 4];
            let mut ke = [[0.0f64; 4]; 4];
            let mut fe = [0.0f64; 4];
            for q in 0..4 {
                let aval = aq[q];
                if !aval.is_finite() || aval <= 0.0 {
                    return Err(Error::NonFinite {
                        context: format!("coefficient {aval} at element {e} quad point {q}"),
                    });
                }
                for a in 0..4 {
                    let ga = refd.grad[q][a];
                    fe[a] += fq[q] * refd.shape[q][a] * jac;
                    for b in a..4 {
                        let gb = refd.grad[q][b];
                        // The 2/h gradient scaling cancels the h²/4 Jacobian
                        // in two dimensions.
                        ke[a][b] += aval * (ga[0] * gb[0] + ga[1] * gb[1]);
                    }
                }
            }
            for a in 0..4 {
                for b in 0..a {
                    ke[a][b] = ke[b][a];
                }
            }
            for (a, &(dia, dja)) in LOCAL.iter().enumerate() {
                let ga = mesh.node_index(ei + dia, ej + dja);
                ws.rhs[ga] += fe[a];
                for (b, &(dib, djb)) in LOCAL.iter().enumerate() {
                    let off = 3 * (djb + 1 - dja) + (dib + 1 - dia);
                    ws.stencil[ga][off] += ke[a][b];
                }
            }
        }
    }

    // Homogeneous Dirichlet rows: identity row, zero rhs, and symmetric
    // elimination of boundary columns from interior rows.
    let nodes = mesh.node_count();
    let npa = n + 1;
    for idx in 0..nodes {
        if mesh.is_boundary(idx) {
            ws.stencil[idx] = [0.0; 9];
            ws.stencil[idx][4] = 1.0;
            ws.rhs[idx] = 0.0;
        } else {
            for dj in 0..3usize {
                for di in 0..3usize {
                    if di == 1 && dj == 1 {
                        continue;
                    }
                    let nb = idx + (dj * npa + di) - (npa + 1);
                    if mesh.is_boundary(nb) {
                        ws.stencil[idx][3 * dj + di] = 0.0;
                    }
                }
            }
        }
    }

    cg_solve(ws, options, warm_start)
}

fn cg_solve(ws: &mut FemWorkspace, options: SolverOptions, warm_start: bool) -> Result<SolveStats> {
    let nodes = ws.mesh.node_count();
    let npa = ws.mesh.cells_per_axis() + 1;
    let matvec = |stencil: &[[f64; 9]], x: &[f64], y: &mut [f64]| {
        for (idx, row) in stencil.iter().enumerate() {
            let mut acc = row[4] * x[idx];
            // Diagonal-only rows (boundary) skip the neighbor sweep.
            if row[0] != 0.0 || row[1] != 0.0 || row[2] != 0.0 || row[3] != 0.0
                || row[5] != 0.0 || row[6] != 0.0 || row[7] != 0.0 || row[8] != 0.0
            {
                let base = idx - npa - 1;
                acc += row[0] * x[base]
                    + row[1] * x[base + 1]
                    + row[2] * x[base + 2]
                    + row[3] * x[base + npa]
                    + row[5] * x[base + npa + 2]
                    + row[6] * x[base + 2 * npa]
                    + row[7] * x[base + 2 * npa + 1]
                    + row[8] * x[base + 2 * npa + 2];
            }
            y[idx] = acc;
        }
    };

    let norm_b: f64 = ws.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm_b == 0.0 {
        ws.solution.iter_mut().for_each(|v| *v = 0.0);
        ws.has_previous = true;
        return Ok(SolveStats {
            iterations: 0,
            residual: 0.0,
        });
    }

    if !(warm_start && ws.has_previous) {
        ws.solution.iter_mut().for_each(|v| *v = 0.0);
    } else {
        // The previous solution may violate the current boundary rows only
        // at machine noise, but pin them anyway.
        for idx in 0..nodes {
            if ws.mesh.is_boundary(idx) {
                ws.solution[idx] = 0.0;
            }
        }
    }

    // r = b - A x
    let (stencil, x, r) = (&ws.stencil, &mut ws.solution, &mut ws.r);
    matvec(stencil, x, r);
    for i in 0..nodes {
        r[i] = ws.rhs[i] - r[i];
    }
    for (d, row) in ws.inv_diag.iter_mut().zip(&ws.stencil) {
        *d = 1.0 / row[4];
    }

    let mut rz = 0.0;
    for i in 0..nodes {
        ws.z[i] = ws.inv_diag[i] * ws.r[i];
        rz += ws.r[i] * ws.z[i];
    }
    ws.p.copy_from_slice(&ws.z);

    let max_iter = options.max_iter_factor * nodes;
    let target = options.tolerance * norm_b;
    let mut res_norm = ws.r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut iterations = 0;
    while res_norm > target && iterations < max_iter {
        matvec(&ws.stencil, &ws.p, &mut ws.ap);
        let p_ap: f64 = ws.p.iter().zip(&ws.ap).map(|(p, ap)| p * ap).sum();
        if !(p_ap > 0.0) {
            return Err(Error::Solver {
                residual: res_norm / norm_b,
                iterations,
            });
        }
        let alpha = rz / p_ap;
        for i in 0..nodes {
            ws.solution[i] += alpha * ws.p[i];
            ws.r[i] -= alpha * ws.ap[i];
        }
        let mut rz_next = 0.0;
        for i in 0..nodes {
            ws.z[i] = ws.inv_diag[i] * ws.r[i];
            rz_next += ws.r[i] * ws.z[i];
        }
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..nodes {
            ws.p[i] = ws.z[i] + beta * ws.p[i];
        }
        res_norm = ws.r.iter().map(|v| v * v).sum::<f64>().sqrt();
        iterations += 1;
    }
    if res_norm > target {
        return Err(Error::Solver {
            residual: res_norm / norm_b,
            iterations,
        });
    }
    ws.has_previous = true;
    Ok(SolveStats {
        iterations,
        residual: res_norm / norm_b,
    })
}

/// Convenience wrapper evaluating coefficient and load closures at the
/// quadrature points.
pub fn solve_with(
    mesh: Mesh,
    a: impl Fn([f64; 2]) -> f64,
    f: impl Fn([f64; 2]) -> f64,
    options: SolverOptions,
) -> Result<FemSolution> {
    let pts = mesh.quadrature_points();
    let a_quad: Vec<f64> = pts.iter().map(|&x| a(x)).collect();
    let f_quad: Vec<f64> = pts.iter().map(|&x| f(x)).collect();
    let mut ws = FemWorkspace::new(mesh);
    let stats = assemble_and_solve(&mut ws, &a_quad, &f_quad, options, false)?;
    Ok(FemSolution {
        nodal: ws.solution,
        iterations: stats.iterations,
        residual: stats.residual,
    })
}

/// Smoothed-indicator weight: the indicator of
/// `[0.25, 0.5] x [-0.5, -0.25]` convolved with a centered Gaussian of
/// covariance (1/16) I. The convolution separates into per-axis normal-CDF
/// differences with width 1/4.
#[derive(Debug, Clone, Copy)]
pub struct QoiWeight {
    box_x: [f64; 2],
    box_y: [f64; 2],
    width: f64,
}

impl Default for QoiWeight {
    fn default() -> Self {
        QoiWeight {
            box_x: [0.25, 0.5],
            box_y: [-0.5, -0.25],
            width: 0.25,
        }
    }
}

impl QoiWeight {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let fx = gauss::norm_cdf((self.box_x[1] - x[0]) / self.width)
            - gauss::norm_cdf((self.box_x[0] - x[0]) / self.width);
        let fy = gauss::norm_cdf((self.box_y[1] - x[1]) / self.width)
            - gauss::norm_cdf((self.box_y[0] - x[1]) / self.width);
        fx * fy
    }

    pub fn box_area(&self) -> f64 {
        (self.box_x[1] - self.box_x[0]) * (self.box_y[1] - self.box_y[0])
    }

    /// Exact mass of the weight over D = [-1, 1]²: the box area minus the
    /// Gaussian tail mass leaking outside D (about 0.8% per axis at this
    /// width). Separable, via the antiderivative ∫Φ = zΦ(z) + φ(z).
    pub fn mass_over_domain(&self) -> f64 {
        let g = |z: f64| z * gauss::norm_cdf(z) + gauss::norm_pdf(z);
        let axis = |a: f64, b: f64| {
            self.width
                * ((g((b + 1.0) / self.width) - g((b - 1.0) / self.width))
                    - (g((a + 1.0) / self.width) - g((a - 1.0) / self.width)))
        };
        axis(self.box_x[0], self.box_x[1]) * axis(self.box_y[0], self.box_y[1])
    }
}

/// Weighted integral of the finite-element solution by element-wise 2x2
/// Gauss quadrature, with the weight given at the quadrature points.
pub fn qoi_from_quad(mesh: Mesh, nodal: &[f64], w_quad: &[f64]) -> f64 {
    let n = mesh.cells_per_axis();
    let refd = ref_data();
    let h = mesh.spacing();
    let jac = h * h / 4.0;
    const LOCAL: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];
    let mut total = 0.0;
    for ej in 0..n {
        for ei in 0..n {
            let e = ej * n + ei;
            for q in 0..4 {
                let mut uq = 0.0;
                for (a, &(di, dj)) in LOCAL.iter().enumerate() {
                    uq += nodal[mesh.node_index(ei + di, ej + dj)] * refd.shape[q][a];
                }
                total += w_quad[4 * e + q] * uq * jac;
            }
        }
    }
    total
}

/// Weighted integral with a weight closure.
pub fn qoi(mesh: Mesh, nodal: &[f64], weight: impl Fn([f64; 2]) -> f64) -> f64 {
    let w_quad: Vec<f64> = mesh.quadrature_points().iter().map(|&x| weight(x)).collect();
    qoi_from_quad(mesh, nodal, &w_quad)
}

/// The PDE quantity of interest as an integrand: each cube point maps
/// through the inverse normal CDF to field coefficients, a lognormal
/// coefficient field, one solve, and the weighted integral.
pub struct PdeIntegrand<'a, B: FieldBasis + ?Sized> {
    basis: &'a B,
    sigma: Vec<f64>,
    mesh: Mesh,
    options: SolverOptions,
    /// ψ_j at every quadrature point, mode-major.
    psi_quad: Vec<f64>,
    f_quad: Vec<f64>,
    w_quad: Vec<f64>,
}

impl<'a, B: FieldBasis + ?Sized> PdeIntegrand<'a, B> {
    pub fn new(
        basis: &'a B,
        sigma: Vec<f64>,
        mesh: Mesh,
        rhs: impl Fn([f64; 2]) -> f64,
        weight: impl Fn([f64; 2]) -> f64,
        options: SolverOptions,
    ) -> Result<Self> {
        if sigma.is_empty() || sigma.len() > basis.mode_count() {
            return Err(Error::Config(format!(
                "need 1..={} field modes, got {}",
                basis.mode_count(),
                sigma.len()
            )));
        }
        let pts = mesh.quadrature_points();
        let s = sigma.len();
        let mut psi_quad = Vec::with_capacity(s * pts.len());
        for j in 0..s {
            psi_quad.extend(pts.iter().map(|&x| basis.eval_mode(j, x)));
        }
        Ok(PdeIntegrand {
            basis,
            sigma,
            mesh,
            options,
            psi_quad,
            f_quad: pts.iter().map(|&x| rhs(x)).collect(),
            w_quad: pts.iter().map(|&x| weight(x)).collect(),
        })
    }

    pub fn basis(&self) -> &B {
        self.basis
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Solve at one coefficient vector using the provided workspace.
    fn qoi_at(
        &self,
        y: &[f64],
        log_a: &mut [f64],
        a: &mut [f64],
        ws: &mut FemWorkspace,
        warm: bool,
    ) -> Result<f64> {
        let q = self.f_quad.len();
        log_a.iter_mut().for_each(|v| *v = 0.0);
        for (j, (&yj, &sj)) in y.iter().zip(&self.sigma).enumerate() {
            let c = yj * sj;
            let row = &self.psi_quad[j * q..(j + 1) * q];
            for (acc, &psi) in log_a.iter_mut().zip(row) {
                *acc += c * psi;
            }
        }
        for (av, &lv) in a.iter_mut().zip(log_a.iter()) {
            *av = lv.exp();
        }
        assemble_and_solve(ws, a, &self.f_quad, self.options, warm)?;
        Ok(qoi_from_quad(self.mesh, ws.solution(), &self.w_quad))
    }
}

impl<B: FieldBasis + ?Sized> Integrand for PdeIntegrand<'_, B> {
    fn dimension(&self) -> usize {
        self.sigma.len()
    }

    fn session(&self) -> Session<'_> {
        let mut ws = FemWorkspace::new(self.mesh);
        let q = self.f_quad.len();
        let mut log_a = vec![0.0; q];
        let mut a = vec![0.0; q];
        let mut y = vec![0.0; self.sigma.len()];
        let mut warm = false;
        Session::new(move |t: &[f64]| {
            for (yj, &tj) in y.iter_mut().zip(t) {
                *yj = gauss::inv_norm_fast(tj);
            }
            let v = self.qoi_at(&y, &mut log_a, &mut a, &mut ws, warm)?;
            warm = true;
            Ok(v)
        })
    }
}

impl<B: FieldBasis + ?Sized> GaussIntegrand for PdeIntegrand<'_, B> {
    fn dimension(&self) -> usize {
        self.sigma.len()
    }

    fn gauss_session(&self) -> Session<'_> {
        let mut ws = FemWorkspace::new(self.mesh);
        let q = self.f_quad.len();
        let mut log_a = vec![0.0; q];
        let mut a = vec![0.0; q];
        let mut warm = false;
        Session::new(move |y: &[f64]| {
            let v = self.qoi_at(y, &mut log_a, &mut a, &mut ws, warm)?;
            warm = true;
            Ok(v)
        })
    }
}
