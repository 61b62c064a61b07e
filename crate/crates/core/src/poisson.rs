//! Polynomial classical field observables A(rho) = Tr(a rho^(x p)), their
//! Frechet derivatives, and the density-matrix Poisson bracket
//! {A, B} = -(i/hbar) Tr(dA rho dB - dB rho dA),
//! both as a scalar evaluation and as an explicit (p+q-1)-particle kernel.
//!
//! The kernel form of the bracket is defined by its evaluation contract:
//! eval(bracket_kernel(a, b), rho) must equal bracket_eval(a, b, rho) for all
//! rho, and the tests enforce exactly that before anything downstream uses it.

use num_complex::Complex64 as C64;

use crate::error::{CoreError, Result};
use crate::hartree::DensityMatrix;
use crate::matrix::ComplexMatrix;
use crate::tensor::{kron, kron_power, partial_trace, permute_slots, twirl};

/// A p-particle observable kernel on (C^d)^(x p), kept permutation-invariant:
/// U_sigma a U_sigma^dagger = a for every slot permutation.
///
/// Construction symmetrizes non-invariant inputs by the permutation twirl
/// (recorded in `projected`) rather than rejecting them: the twirl preserves
/// Tr(a rho^(x p)) for every state, so evaluation never notices, while the
/// slot-equivalence that the Frechet-derivative and bracket formulas rely on
/// becomes guaranteed.
#[derive(Debug, Clone)]
pub struct PObservable {
    p: usize,
    d: usize,
    kernel: ComplexMatrix,
    projected: bool,
}

impl PObservable {
    pub fn new(p: usize, d: usize, kernel: ComplexMatrix) -> Result<Self> {
        assert!(p >= 1, "observable arity must be at least 1");
        let dp = d.pow(p as u32);
        if kernel.rows() != dp || kernel.cols() != dp {
            return Err(CoreError::Shape(format!(
                "kernel is {}x{}, expected {dp}x{dp} for arity {p}",
                kernel.rows(),
                kernel.cols()
            )));
        }
        if !kernel.all_finite() {
            return Err(CoreError::Shape("kernel has non-finite entries".into()));
        }
        if p == 1 {
            return Ok(Self { p, d, kernel, projected: false });
        }
        let sym = twirl(&kernel, p, d);
        let scale = kernel.max_abs().max(1.0);
        if sym.sub(&kernel).max_abs() <= 1e-12 * scale {
            Ok(Self { p, d, kernel, projected: false })
        } else {
            Ok(Self { p, d, kernel: sym, projected: true })
        }
    }

    /// Errors with `NotSymmetric` instead of projecting.
    pub fn new_strict(p: usize, d: usize, kernel: ComplexMatrix) -> Result<Self> {
        let obs = Self::new(p, d, kernel)?;
        if obs.projected {
            return Err(CoreError::NotSymmetric(f64::NAN));
        }
        Ok(obs)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn kernel(&self) -> &ComplexMatrix {
        &self.kernel
    }

    /// True when construction had to project a non-symmetric input.
    pub fn was_projected(&self) -> bool {
        self.projected
    }

    /// Operator norm of the kernel — the ||a|| entering every bound.
    pub fn norm(&self) -> f64 {
        crate::eig::op_norm(&self.kernel)
    }

    pub fn dagger(&self) -> Self {
        Self { p: self.p, d: self.d, kernel: self.kernel.dagger(), projected: self.projected }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { p: self.p, d: self.d, kernel: self.kernel.scale(s), projected: self.projected }
    }
}

/// A(rho) = Tr(a rho^(x p)), contracted slot by slot without materializing
/// rho^(x p).
pub fn eval(a: &PObservable, rho: &DensityMatrix) -> Result<C64> {
    eval_kernel(a.kernel(), a.p(), a.d(), &rho.matrix)
}

pub(crate) fn eval_kernel(
    kernel: &ComplexMatrix,
    p: usize,
    d: usize,
    rho: &ComplexMatrix,
) -> Result<C64> {
    if rho.rows() != d {
        return Err(CoreError::Shape(format!(
            "density dimension {} does not match kernel local dimension {d}",
            rho.rows()
        )));
    }
    // fold rho into one slot at a time: contract the last slot of the kernel
    // against rho until only a scalar remains
    let mut current = kernel.clone();
    for m in (1..=p).rev() {
        let rows = d.pow((m - 1) as u32);
        let mut next = ComplexMatrix::zeros(rows, rows);
        for x in 0..rows {
            for y in 0..rows {
                let mut acc = C64::new(0.0, 0.0);
                for s in 0..d {
                    for t in 0..d {
                        acc += current[(x * d + s, y * d + t)] * rho[(t, s)];
                    }
                }
                next[(x, y)] = acc;
            }
        }
        current = next;
    }
    Ok(current[(0, 0)])
}

/// Frechet derivative of A(rho) = Tr(a rho^(x p)) as a one-particle operator:
/// dA = p Tr_{1..p-1}(a (rho^(x p-1) (x) I)). Defined by
/// Tr(dA xi) = d/ds A(rho + s xi)|_0, which needs a symmetric kernel.
pub fn frechet(a: &PObservable, rho: &DensityMatrix) -> Result<ComplexMatrix> {
    let p = a.p();
    let d = a.d();
    if rho.matrix.rows() != d {
        return Err(CoreError::Shape("density dimension mismatch".into()));
    }
    if p == 1 {
        return Ok(a.kernel().clone());
    }
    let rho_power = kron_power(&rho.matrix, p - 1)?;
    let big = a.kernel().mul(&kron(&rho_power, &ComplexMatrix::identity(d))?);
    let dims = vec![d; p];
    let reduced = partial_trace(&big, &dims, &[p - 1])?;
    Ok(reduced.scale(C64::new(p as f64, 0.0)))
}

/// {A, B}(rho) = -(i/hbar) Tr(dA rho dB - dB rho dA); antisymmetric in (a, b).
pub fn bracket_eval(a: &PObservable, b: &PObservable, rho: &DensityMatrix) -> Result<C64> {
    let da = frechet(a, rho)?;
    let db = frechet(b, rho)?;
    let first = da.mul(&rho.matrix).mul(&db).trace();
    let second = db.mul(&rho.matrix).mul(&da).trace();
    Ok(C64::new(0.0, -1.0 / rho.hbar) * (first - second))
}

/// The (p+q-1)-particle kernel c with eval(c, rho) = bracket_eval(a, b, rho)
/// for all rho: contract a and b through one shared slot in both operator
/// orders, weight by -(i/hbar) p q, and symmetrize.
pub fn bracket_kernel(a: &PObservable, b: &PObservable, hbar: f64) -> Result<PObservable> {
    assert!(hbar > 0.0);
    let (p, q, d) = (a.p(), b.p(), a.d());
    if b.d() != d {
        return Err(CoreError::Shape("bracket of kernels over different local spaces".into()));
    }
    let m = p + q - 1;
    // rotate b so its last slot (the shared one) comes first
    let b_rot = if q == 1 {
        b.kernel().clone()
    } else {
        let mut src_of_dst = vec![0usize; q];
        src_of_dst[0] = q - 1;
        for (j, slot) in src_of_dst.iter_mut().enumerate().skip(1) {
            *slot = j - 1;
        }
        permute_slots(b.kernel(), &vec![d; q], &src_of_dst)
    };
    // a on slots 1..p, b on slots p..p+q-1, composed through slot p
    let a_ext = if q > 1 {
        kron(a.kernel(), &ComplexMatrix::identity(d.pow((q - 1) as u32)))?
    } else {
        a.kernel().clone()
    };
    let b_ext = if p > 1 {
        kron(&ComplexMatrix::identity(d.pow((p - 1) as u32)), &b_rot)?
    } else {
        b_rot
    };
    let weight = C64::new(0.0, -((p * q) as f64) / hbar);
    let raw = b_ext.mul(&a_ext).sub(&a_ext.mul(&b_ext)).scale(weight);
    PObservable::new(m, d, twirl(&raw, m, d))
}

/// Both routes to the bracket at a rank-one state rho = |psi><psi|:
/// the density-matrix bracket and the wave-function form
/// (i/hbar) sum_x (d_psi A d_psibar B - d_psibar A d_psi B),
/// with the gradients computed in closed form. The two must agree.
pub fn rank_one_reduction_check(
    a: &PObservable,
    b: &PObservable,
    psi: &[C64],
    hbar: f64,
) -> Result<(C64, C64)> {
    let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    assert!((norm - 1.0).abs() < 1e-10, "psi must be a unit vector");
    let rho = DensityMatrix::new(crate::rng::projector(psi), hbar)?;
    let path_density = bracket_eval(a, b, &rho)?;

    let grad_a_psi = grad_psi(a, psi);
    let grad_a_psibar = grad_psibar(a, psi);
    let grad_b_psi = grad_psi(b, psi);
    let grad_b_psibar = grad_psibar(b, psi);
    let mut acc = C64::new(0.0, 0.0);
    for x in 0..psi.len() {
        acc += grad_a_psi[x] * grad_b_psibar[x] - grad_a_psibar[x] * grad_b_psi[x];
    }
    let path_wave = C64::new(0.0, 1.0 / hbar) * acc;
    Ok((path_density, path_wave))
}

/// d/d(psibar_x) of A(psi, psibar) = <psi^p, a psi^p>, using symmetry of a:
/// p * contraction of a psi^(x p) against psibar on the first p-1 row slots.
fn grad_psibar(a: &PObservable, psi: &[C64]) -> Vec<C64> {
    let (p, d) = (a.p(), a.d());
    let psi_p = vec_power(psi, p);
    let v = a.kernel().mul_vec(&psi_p);
    // contract rows (x1..x_{p-1}, x) against conj(psi) on the first p-1 slots
    let mut out = vec![C64::new(0.0, 0.0); d];
    let lead = d.pow((p - 1) as u32);
    for head in 0..lead {
        let w = head_weight(head, d, p - 1, psi, true);
        for x in 0..d {
            out[x] += w * v[head * d + x];
        }
    }
    for o in out.iter_mut() {
        *o *= p as f64;
    }
    out
}

/// d/d(psi_x) of A(psi, psibar): p * contraction of psibar^(x p) a against
/// psi on the first p-1 column slots.
fn grad_psi(a: &PObservable, psi: &[C64]) -> Vec<C64> {
    let (p, d) = (a.p(), a.d());
    let psibar_p: Vec<C64> = vec_power(psi, p).iter().map(|z| z.conj()).collect();
    // z = a^T psibar^p, i.e. z[col] = sum_row psibar[row] a[row, col]
    let dp = d.pow(p as u32);
    let mut z = vec![C64::new(0.0, 0.0); dp];
    for row in 0..dp {
        let w = psibar_p[row];
        if w.norm_sqr() == 0.0 {
            continue;
        }
        for (col, zc) in z.iter_mut().enumerate() {
            *zc += w * a.kernel()[(row, col)];
        }
    }
    let lead = d.pow((p - 1) as u32);
    let mut out = vec![C64::new(0.0, 0.0); d];
    for head in 0..lead {
        let w = head_weight(head, d, p - 1, psi, false);
        for x in 0..d {
            out[x] += w * z[head * d + x];
        }
    }
    for o in out.iter_mut() {
        *o *= p as f64;
    }
    out
}

/// Product of psi (or conj(psi)) over the slot-1-major digits of `code`.
fn head_weight(mut code: usize, d: usize, slots: usize, psi: &[C64], conjugate: bool) -> C64 {
    let mut w = C64::new(1.0, 0.0);
    let mut scale = d.pow(slots as u32) / d.max(1);
    for _ in 0..slots {
        let digit = if scale > 0 { code / scale } else { code % d };
        let f = if conjugate { psi[digit].conj() } else { psi[digit] };
        w *= f;
        if scale > 0 {
            code %= scale;
            scale /= d;
        }
    }
    w
}

fn vec_power(psi: &[C64], p: usize) -> Vec<C64> {
    let d = psi.len();
    let mut out = psi.to_vec();
    for _ in 1..p {
        let mut next = Vec::with_capacity(out.len() * d);
        for &a in &out {
            for &b in psi {
                next.push(a * b);
            }
        }
        out = next;
    }
    out
}

/// The Hamiltonian functional split into its one-body and pair parts:
/// H(rho) = Tr(h rho) + (1/2) Tr(V rho^(x 2)).
#[derive(Debug, Clone)]
pub struct ClassicalHamiltonian {
    pub h_part: PObservable,
    pub v_part: PObservable,
}

impl ClassicalHamiltonian {
    pub fn new(model: &crate::hartree::InteractionModel) -> Result<Self> {
        let d = model.d();
        let h_part = PObservable::new(1, d, model.h.clone())?;
        let v_part = PObservable::new(2, d, model.v.scale(C64::new(0.5, 0.0)))?;
        Ok(Self { h_part, v_part })
    }

    /// {H, A}(rho) composed over the split.
    pub fn bracket_with(&self, a: &PObservable, rho: &DensityMatrix) -> Result<C64> {
        Ok(bracket_eval(&self.h_part, a, rho)? + bracket_eval(&self.v_part, a, rho)?)
    }
}
