//! The nonlinear Hartree-von Neumann flow d rho/dt = -(i/hbar)[h + W(rho), rho]
//! with the self-consistent mean field W(rho) = Tr_2(V (I (x) rho)), its free
//! version, the conserved energy functional, and a Duhamel/Picard fixed-point
//! solver kept as an independent cross-check of the RK4 integrator.

use num_complex::Complex64 as C64;

use crate::eig::{eig_hermitian, SpectralPropagator, HERMITICITY_TOL};
use crate::error::{CoreError, Result};
use crate::fock::require_swap_symmetric;
use crate::matrix::ComplexMatrix;
use crate::tensor::{kron, partial_trace};

/// A d x d density matrix together with the hbar it evolves under.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub matrix: ComplexMatrix,
    pub hbar: f64,
}

impl DensityMatrix {
    /// Validating constructor: Hermitian to 1e-12, eigenvalues >= -1e-10,
    /// real trace.
    pub fn new(matrix: ComplexMatrix, hbar: f64) -> Result<Self> {
        assert!(hbar > 0.0, "hbar must be positive");
        matrix.require_hermitian(HERMITICITY_TOL)?;
        let scale = matrix.max_abs().max(1.0);
        let spec = eig_hermitian(&matrix)?;
        if spec.min_eigenvalue() < -1e-10 * scale {
            return Err(CoreError::NotPsd(spec.min_eigenvalue()));
        }
        if matrix.trace().im.abs() > 1e-12 * scale {
            return Err(CoreError::Shape("density matrix trace is not real".into()));
        }
        Ok(Self { matrix, hbar })
    }

    /// Wrap integrator output without re-validating; invariants are enforced
    /// by the conservation test suite instead.
    pub(crate) fn from_trusted(matrix: ComplexMatrix, hbar: f64) -> Self {
        Self { matrix, hbar }
    }

    pub fn d(&self) -> usize {
        self.matrix.rows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }
}

/// Single-particle Hamiltonian h and pair potential V, with the norm
/// ||v||_inf = op_norm(V) and a flag marking multiplication-type (diagonal)
/// potentials for which W(rho) reduces to the classical convolution.
#[derive(Debug, Clone)]
pub struct InteractionModel {
    pub h: ComplexMatrix,
    pub v: ComplexMatrix,
    pub v_inf: f64,
    pub diagonal_pair: bool,
}

impl InteractionModel {
    pub fn new(h: ComplexMatrix, v: ComplexMatrix) -> Result<Self> {
        let d = h.rows();
        if !h.is_square() {
            return Err(CoreError::Shape("h must be square".into()));
        }
        if v.rows() != d * d || v.cols() != d * d {
            return Err(CoreError::Shape(format!(
                "pair potential is {}x{}, expected {}x{}",
                v.rows(),
                v.cols(),
                d * d,
                d * d
            )));
        }
        h.require_hermitian(HERMITICITY_TOL)?;
        v.require_hermitian(HERMITICITY_TOL)?;
        require_swap_symmetric(&v, d)?;
        let v_inf = crate::eig::op_norm(&v);
        let diagonal_pair = is_diagonal(&v);
        Ok(Self { h, v, v_inf, diagonal_pair })
    }

    /// Free model: V = 0.
    pub fn free(h: ComplexMatrix) -> Result<Self> {
        let d = h.rows();
        Self::new(h, ComplexMatrix::zeros(d * d, d * d))
    }

    /// Multiplication-type pair potential from a symmetric weight table
    /// w(x, y) = w(y, x): V is diagonal with V[(x,y),(x,y)] = w(x,y).
    pub fn diagonal_pair(h: ComplexMatrix, w: &[Vec<f64>]) -> Result<Self> {
        let d = h.rows();
        if w.len() != d || w.iter().any(|row| row.len() != d) {
            return Err(CoreError::Shape("weight table must be d x d".into()));
        }
        for x in 0..d {
            for y in 0..d {
                if (w[x][y] - w[y][x]).abs() > 1e-12 {
                    return Err(CoreError::NotSwapSymmetric((w[x][y] - w[y][x]).abs()));
                }
            }
        }
        let mut v = ComplexMatrix::zeros(d * d, d * d);
        for x in 0..d {
            for y in 0..d {
                v[(x * d + y, x * d + y)] = C64::new(w[x][y], 0.0);
            }
        }
        Self::new(h, v)
    }

    pub fn d(&self) -> usize {
        self.h.rows()
    }

    /// Weight w(x, y) of a diagonal pair potential.
    pub fn pair_weight(&self, x: usize, y: usize) -> f64 {
        let d = self.d();
        self.v[(x * d + y, x * d + y)].re
    }
}

fn is_diagonal(m: &ComplexMatrix) -> bool {
    let scale = m.max_abs().max(1.0);
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            if i != j && m[(i, j)].norm() > 1e-14 * scale {
                return false;
            }
        }
    }
    true
}

/// Mean field W(rho) = Tr_2(V (I (x) rho)). For a diagonal pair potential
/// this is the diagonal matrix with entries sum_y w(x,y) rho_yy.
pub fn mean_field(model: &InteractionModel, rho: &ComplexMatrix) -> ComplexMatrix {
    let d = model.d();
    assert_eq!(rho.rows(), d, "density dimension does not match model");
    if model.v_inf == 0.0 {
        return ComplexMatrix::zeros(d, d);
    }
    let id = ComplexMatrix::identity(d);
    let prod = model.v.mul(&kron(&id, rho).expect("d^2 stays below any cap"));
    partial_trace(&prod, &[d, d], &[0]).expect("shape fixed by construction")
}

/// E(rho) = Tr(h rho) + (1/2) Tr(V rho (x) rho). The imaginary part must
/// vanish for valid inputs and is checked before being discarded.
pub fn energy(model: &InteractionModel, rho: &DensityMatrix) -> f64 {
    let d = model.d();
    let one_body = model.h.mul(&rho.matrix).trace();
    let mut pair = C64::new(0.0, 0.0);
    for x1 in 0..d {
        for x2 in 0..d {
            for y1 in 0..d {
                for y2 in 0..d {
                    let vel = model.v[(x1 * d + x2, y1 * d + y2)];
                    if vel.norm_sqr() == 0.0 {
                        continue;
                    }
                    pair += vel * rho.matrix[(y1, x1)] * rho.matrix[(y2, x2)];
                }
            }
        }
    }
    let total = one_body + pair * 0.5;
    debug_assert!(total.im.abs() <= 1e-10 * total.re.abs().max(1.0));
    total.re
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HartreeMethod {
    Rk4,
    Picard,
}

/// Integrator knobs; the defaults implement the documented step policy
/// dt = min(1e-3, tau/200).
#[derive(Debug, Clone)]
pub struct HartreeOpts {
    pub step_target: Option<f64>,
    pub picard_points: usize,
    pub picard_max_iter: usize,
    pub picard_tol: f64,
    pub quad_tol: f64,
}

impl Default for HartreeOpts {
    fn default() -> Self {
        Self {
            step_target: None,
            picard_points: 129,
            picard_max_iter: 60,
            picard_tol: 1e-12,
            quad_tol: 1e-6,
        }
    }
}

impl HartreeOpts {
    pub fn default_step(&self, model: &InteractionModel, hbar: f64) -> f64 {
        if let Some(s) = self.step_target {
            return s;
        }
        if model.v_inf == 0.0 {
            return 1e-3;
        }
        let tau = hbar / (8.0 * model.v_inf);
        (tau / 200.0).min(1e-3)
    }
}

fn rhs(model: &InteractionModel, hbar: f64, rho: &ComplexMatrix) -> ComplexMatrix {
    let h_rho = model.h.add(&mean_field(model, rho));
    h_rho.commutator(rho).scale(C64::new(0.0, -1.0 / hbar))
}

/// Fixed-step RK4 with a re-hermitization (rho + rho^dag)/2 after every step;
/// the observer sees every accepted step including the initial state.
pub fn rk4_trajectory(
    model: &InteractionModel,
    rho0: &DensityMatrix,
    t_final: f64,
    step_target: f64,
    mut observe: impl FnMut(f64, &ComplexMatrix),
) -> ComplexMatrix {
    let hbar = rho0.hbar;
    let mut rho = rho0.matrix.clone();
    observe(0.0, &rho);
    if t_final == 0.0 {
        return rho;
    }
    let n = (t_final / step_target).ceil().max(1.0) as usize;
    let dt = t_final / n as f64;
    let half = C64::new(0.5 * dt, 0.0);
    let sixth = C64::new(dt / 6.0, 0.0);
    let third = C64::new(dt / 3.0, 0.0);
    for k in 0..n {
        let k1 = rhs(model, hbar, &rho);
        let mut stage = rho.clone();
        stage.add_assign_scaled(&k1, half);
        let k2 = rhs(model, hbar, &stage);
        let mut stage = rho.clone();
        stage.add_assign_scaled(&k2, half);
        let k3 = rhs(model, hbar, &stage);
        let mut stage = rho.clone();
        stage.add_assign_scaled(&k3, C64::new(dt, 0.0));
        let k4 = rhs(model, hbar, &stage);
        rho.add_assign_scaled(&k1, sixth);
        rho.add_assign_scaled(&k2, third);
        rho.add_assign_scaled(&k3, third);
        rho.add_assign_scaled(&k4, sixth);
        rho = rho.hermitian_part();
        observe((k + 1) as f64 * dt, &rho);
    }
    rho
}

/// Solution of the Hartree-von Neumann equation at time t.
///
/// V = 0 short-circuits to the exact spectral free flow. Otherwise `Rk4` runs
/// the default fixed-step integrator and `Picard` iterates the Duhamel map on
/// contraction windows, failing with `PicardNoConvergence` if a window does
/// not settle.
pub fn evolve_hartree(
    model: &InteractionModel,
    rho0: &DensityMatrix,
    t: f64,
    method: HartreeMethod,
    opts: &HartreeOpts,
) -> Result<DensityMatrix> {
    assert!(t >= 0.0, "backward evolution is not supported");
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    if model.v_inf == 0.0 {
        let prop = SpectralPropagator::new(&model.h, rho0.hbar)?;
        return Ok(DensityMatrix::from_trusted(
            prop.evolve_state(t, &rho0.matrix),
            rho0.hbar,
        ));
    }
    match method {
        HartreeMethod::Rk4 => {
            let step = opts.default_step(model, rho0.hbar);
            let out = rk4_trajectory(model, rho0, t, step, |_, _| {});
            Ok(DensityMatrix::from_trusted(out, rho0.hbar))
        }
        HartreeMethod::Picard => picard_evolve(model, rho0, t, opts),
    }
}

/// Free flow: rho -> e^{-i h t / hbar} rho e^{i h t / hbar}.
pub fn free_flow(h: &ComplexMatrix, rho: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    let prop = SpectralPropagator::new(h, rho.hbar)?;
    Ok(DensityMatrix::from_trusted(prop.evolve_state(t, &rho.matrix), rho.hbar))
}

/// One application of the Duhamel map on a uniform grid:
/// F(rho)_t = sigma_t(rho_0) - (i/hbar) int_0^t sigma_{t-s}([W(rho_s), rho_s]) ds
/// with sigma_t(g) = e^{-iht/hbar} g e^{iht/hbar} and composite Simpson for
/// the integral. `traj[0]` supplies rho_0.
pub fn duhamel_map(
    model: &InteractionModel,
    traj: &[ComplexMatrix],
    grid: &[f64],
    hbar: f64,
    quad_tol: f64,
) -> Result<Vec<ComplexMatrix>> {
    if traj.len() != grid.len() || grid.len() < 3 {
        return Err(CoreError::Shape(
            "duhamel map needs matching trajectory/grid of at least 3 points".into(),
        ));
    }
    let dt = grid[1] - grid[0];
    for w in grid.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-12 * dt.max(1.0) {
            return Err(CoreError::Shape("duhamel grid must be uniform".into()));
        }
    }
    let prop = SpectralPropagator::new(&model.h, hbar)?;
    let scale = C64::new(0.0, -1.0 / hbar);
    // integrand rotated once into the interaction picture:
    // M_s = sigma_{-s}([W(rho_s), rho_s])
    let ms: Vec<ComplexMatrix> = traj
        .iter()
        .zip(grid)
        .map(|(rho, &s)| {
            let k = mean_field(model, rho).commutator(rho);
            prop.evolve_observable(s, &k)
        })
        .collect();
    let simpson = cumulative_quadrature(&ms, dt, QuadRule::Simpson);
    let trapezoid = cumulative_quadrature(&ms, dt, QuadRule::Trapezoid);
    let mut worst = 0.0f64;
    for (s, t2) in simpson.iter().zip(&trapezoid) {
        worst = worst.max(s.sub(t2).max_abs());
    }
    if worst > quad_tol {
        return Err(CoreError::GridTooCoarse { delta: worst, tol: quad_tol });
    }
    let rho0 = &traj[0];
    Ok(grid
        .iter()
        .zip(&simpson)
        .map(|(&t, integral)| {
            let mut inner = rho0.clone();
            inner.add_assign_scaled(integral, scale);
            prop.evolve_state(t, &inner)
        })
        .collect())
}

enum QuadRule {
    Simpson,
    Trapezoid,
}

/// Cumulative integral of matrix samples on a uniform grid. Simpson uses
/// half-panel Newton-Cotes corrections at odd indices.
fn cumulative_quadrature(f: &[ComplexMatrix], dt: f64, rule: QuadRule) -> Vec<ComplexMatrix> {
    let n = f.len();
    let dim = f[0].rows();
    let mut out = Vec::with_capacity(n);
    out.push(ComplexMatrix::zeros(dim, dim));
    match rule {
        QuadRule::Trapezoid => {
            for j in 1..n {
                let mut acc = out[j - 1].clone();
                acc.add_assign_scaled(&f[j - 1], C64::new(dt / 2.0, 0.0));
                acc.add_assign_scaled(&f[j], C64::new(dt / 2.0, 0.0));
                out.push(acc);
            }
        }
        QuadRule::Simpson => {
            for j in 1..n {
                if j % 2 == 0 {
                    let mut acc = out[j - 2].clone();
                    acc.add_assign_scaled(&f[j - 2], C64::new(dt / 3.0, 0.0));
                    acc.add_assign_scaled(&f[j - 1], C64::new(4.0 * dt / 3.0, 0.0));
                    acc.add_assign_scaled(&f[j], C64::new(dt / 3.0, 0.0));
                    out.push(acc);
                } else if j + 1 < n {
                    // forward half-panel through (j-1, j, j+1)
                    let mut acc = out[j - 1].clone();
                    acc.add_assign_scaled(&f[j - 1], C64::new(5.0 * dt / 12.0, 0.0));
                    acc.add_assign_scaled(&f[j], C64::new(8.0 * dt / 12.0, 0.0));
                    acc.add_assign_scaled(&f[j + 1], C64::new(-dt / 12.0, 0.0));
                    out.push(acc);
                } else {
                    // backward half-panel through (j-2, j-1, j)
                    let mut acc = out[j - 1].clone();
                    acc.add_assign_scaled(&f[j - 2], C64::new(-dt / 12.0, 0.0));
                    acc.add_assign_scaled(&f[j - 1], C64::new(8.0 * dt / 12.0, 0.0));
                    acc.add_assign_scaled(&f[j], C64::new(5.0 * dt / 12.0, 0.0));
                    out.push(acc);
                }
            }
        }
    }
    out
}

/// Trace norm of a Hermitian matrix: sum of |eigenvalues|.
pub fn trace_norm_hermitian(m: &ComplexMatrix) -> f64 {
    eig_hermitian(&m.hermitian_part())
        .expect("hermitian part is Hermitian")
        .eigenvalues
        .iter()
        .map(|l| l.abs())
        .sum()
}

fn picard_evolve(
    model: &InteractionModel,
    rho0: &DensityMatrix,
    t_final: f64,
    opts: &HartreeOpts,
) -> Result<DensityMatrix> {
    let hbar = rho0.hbar;
    // contraction window: tau/2 gives a Lipschitz constant of about 1/2 on
    // the radius-2 trace-norm ball
    let window = hbar / (16.0 * model.v_inf);
    let mut start = rho0.matrix.clone();
    let mut elapsed = 0.0f64;
    let mut window_idx = 0usize;
    while elapsed < t_final - 1e-15 * t_final.max(1.0) {
        let w = window.min(t_final - elapsed);
        let points = opts.picard_points.max(5) | 1; // odd point count
        let grid: Vec<f64> = (0..points).map(|j| w * j as f64 / (points - 1) as f64).collect();
        let prop = SpectralPropagator::new(&model.h, hbar)?;
        // free-flow initial guess
        let mut traj: Vec<ComplexMatrix> =
            grid.iter().map(|&s| prop.evolve_state(s, &start)).collect();
        let mut converged = false;
        for _iter in 0..opts.picard_max_iter {
            let next = duhamel_map(model, &traj, &grid, hbar, opts.quad_tol)?;
            let delta = traj
                .iter()
                .zip(&next)
                .map(|(a, b)| trace_norm_hermitian(&a.sub(b)))
                .fold(0.0f64, f64::max);
            traj = next;
            if delta <= opts.picard_tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(CoreError::PicardNoConvergence {
                window: window_idx,
                iterations: opts.picard_max_iter,
            });
        }
        start = traj.last().expect("grid is nonempty").hermitian_part();
        elapsed += w;
        window_idx += 1;
    }
    Ok(DensityMatrix::from_trusted(start, hbar))
}
