//! Occupation-number (bosonic) representation of the permutation-symmetric
//! subspace of (C^d)^(x N).
//!
//! The symmetric subspace has dimension C(N+d-1, N) instead of d^N, and every
//! operator this library cares about is sandwiched between symmetrizers, so
//! the whole N-body problem lives here. Matrix elements come from the
//! standard bosonic ladder calculus; the embedding coefficients are derived
//! formulas and are validated against brute-force full-tensor constructions
//! in the tests before anything trusts them at large N.

use num_complex::Complex64 as C64;

use crate::eig::{eig_hermitian, HERMITICITY_TOL};
use crate::error::{CoreError, Result};
use crate::matrix::ComplexMatrix;
use crate::tensor::swap_matrix;

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

/// Ordered basis of occupation vectors: all (n_1, ..., n_d) with sum N, in
/// lexicographically increasing order, with a combinatorial rank function as
/// the index map (a perfect hash; no hashing involved).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupationBasis {
    d: usize,
    n_particles: usize,
    states: Vec<Vec<u16>>,
}

impl OccupationBasis {
    pub fn new(d: usize, n_particles: usize) -> Self {
        assert!(d >= 1);
        let mut states = Vec::with_capacity(binomial(n_particles + d - 1, d - 1));
        let mut prefix = Vec::with_capacity(d);
        enumerate(d, n_particles, &mut prefix, &mut states);
        Self { d, n_particles, states }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[Vec<u16>] {
        &self.states
    }

    pub fn state(&self, idx: usize) -> &[u16] {
        &self.states[idx]
    }

    /// Number of basis states lexicographically below `occ`.
    pub fn rank(&self, occ: &[u16]) -> usize {
        debug_assert_eq!(occ.len(), self.d);
        debug_assert_eq!(occ.iter().map(|&x| x as usize).sum::<usize>(), self.n_particles);
        let mut rank = 0usize;
        let mut remaining = self.n_particles;
        for k in 0..self.d - 1 {
            let slots_after = self.d - k - 1;
            for v in 0..occ[k] as usize {
                // completions with slot k fixed to v
                rank += binomial(remaining - v + slots_after - 1, slots_after - 1);
            }
            remaining -= occ[k] as usize;
        }
        rank
    }

    /// Multinomial N! / prod(n_k!) — the number of product basis states in the
    /// permutation class of `occ`.
    pub fn class_size(&self, occ: &[u16]) -> f64 {
        let mut acc = 1.0f64;
        let mut placed = 0usize;
        for &nk in occ {
            for j in 1..=nk as usize {
                acc *= (placed + j) as f64 / j as f64;
            }
            placed += nk as usize;
        }
        acc
    }

    /// Occupation class of a product basis index (digits slot-1-major).
    pub fn classify(&self, mut product_index: usize, m: usize) -> Vec<u16> {
        let mut occ = vec![0u16; self.d];
        for _ in 0..m {
            occ[product_index % self.d] += 1;
            product_index /= self.d;
        }
        occ
    }
}

fn enumerate(d: usize, remaining: usize, prefix: &mut Vec<u16>, out: &mut Vec<Vec<u16>>) {
    if prefix.len() == d - 1 {
        let mut s = prefix.clone();
        s.push(remaining as u16);
        out.push(s);
        return;
    }
    for v in 0..=remaining {
        prefix.push(v as u16);
        enumerate(d, remaining - v, prefix, out);
        prefix.pop();
    }
}

/// Projection of a product state onto the symmetric subspace, kept in the
/// occupation basis of the single-particle basis that diagonalizes it.
#[derive(Debug, Clone)]
pub struct SymmetricNBodyState {
    pub basis: OccupationBasis,
    pub matrix: ComplexMatrix,
    pub mass: f64,
}

impl SymmetricNBodyState {
    pub fn new(basis: OccupationBasis, matrix: ComplexMatrix) -> Result<Self> {
        if matrix.rows() != basis.dim() || matrix.cols() != basis.dim() {
            return Err(CoreError::Shape(format!(
                "state matrix {}x{} does not match basis dimension {}",
                matrix.rows(),
                matrix.cols(),
                basis.dim()
            )));
        }
        matrix.require_hermitian(1e-10)?;
        let spec = eig_hermitian(&matrix.hermitian_part())?;
        let scale = matrix.max_abs().max(1.0);
        if spec.min_eigenvalue() < -1e-10 * scale {
            return Err(CoreError::NotPsd(spec.min_eigenvalue()));
        }
        let mass = matrix.trace().re;
        Ok(Self { basis, matrix, mass })
    }
}

/// Matrix of sum_i h_i restricted to the symmetric subspace, via
/// sum_{ab} h_ab a^dag_a a_b.
pub fn second_quantize_1body(h: &ComplexMatrix, basis: &OccupationBasis) -> Result<ComplexMatrix> {
    let d = basis.d();
    if h.rows() != d || h.cols() != d {
        return Err(CoreError::Shape(format!(
            "one-body operator is {}x{}, expected {d}x{d}",
            h.rows(),
            h.cols()
        )));
    }
    h.require_hermitian(HERMITICITY_TOL)?;
    Ok(second_quantize_1body_unchecked(h, basis))
}

/// Same matrix elements without the hermiticity gate; the hierarchy cascade
/// applies this to generically non-Hermitian kernels.
pub(crate) fn second_quantize_1body_unchecked(
    h: &ComplexMatrix,
    basis: &OccupationBasis,
) -> ComplexMatrix {
    let d = basis.d();
    let dim = basis.dim();
    let mut out = ComplexMatrix::zeros(dim, dim);
    let mut occ = vec![0u16; d];
    for col in 0..dim {
        let m = basis.state(col);
        for b in 0..d {
            if m[b] == 0 {
                continue;
            }
            for a in 0..d {
                let hab = h[(a, b)];
                if hab.norm_sqr() == 0.0 {
                    continue;
                }
                occ.copy_from_slice(m);
                let amp_low = (occ[b] as f64).sqrt();
                occ[b] -= 1;
                let amp_raise = ((occ[a] + 1) as f64).sqrt();
                occ[a] += 1;
                let row = basis.rank(&occ);
                out[(row, col)] += hab * amp_low * amp_raise;
            }
        }
    }
    out
}

/// Errors unless V is swap-symmetric: S V S = V.
pub fn require_swap_symmetric(v: &ComplexMatrix, d: usize) -> Result<()> {
    let s = swap_matrix(d);
    let r = s.mul(v).mul(&s).sub(v).max_abs();
    if r > 1e-12 * v.max_abs().max(1.0) {
        return Err(CoreError::NotSwapSymmetric(r));
    }
    Ok(())
}

/// Matrix of (g/2) sum_{i != j} V_ij on the symmetric subspace, via
/// (g/2) sum V_{(x1 x2),(y1 y2)} a^dag_{x1} a^dag_{x2} a_{y2} a_{y1}.
pub fn second_quantize_2body(
    v: &ComplexMatrix,
    g: f64,
    basis: &OccupationBasis,
) -> Result<ComplexMatrix> {
    let d = basis.d();
    if v.rows() != d * d || v.cols() != d * d {
        return Err(CoreError::Shape(format!(
            "pair potential is {}x{}, expected {}x{}",
            v.rows(),
            v.cols(),
            d * d,
            d * d
        )));
    }
    v.require_hermitian(HERMITICITY_TOL)?;
    require_swap_symmetric(v, d)?;
    let dim = basis.dim();
    let mut out = ComplexMatrix::zeros(dim, dim);
    if g == 0.0 {
        return Ok(out);
    }
    let half_g = C64::new(0.5 * g, 0.0);
    let mut occ = vec![0u16; d];
    for col in 0..dim {
        let m = basis.state(col);
        for y1 in 0..d {
            if m[y1] == 0 {
                continue;
            }
            for y2 in 0..d {
                occ.copy_from_slice(m);
                let a1 = (occ[y1] as f64).sqrt();
                occ[y1] -= 1;
                if occ[y2] == 0 {
                    continue;
                }
                let a2 = (occ[y2] as f64).sqrt();
                occ[y2] -= 1;
                let lowered = occ.clone();
                for x2 in 0..d {
                    for x1 in 0..d {
                        let vel = v[(x1 * d + x2, y1 * d + y2)];
                        if vel.norm_sqr() == 0.0 {
                            continue;
                        }
                        occ.copy_from_slice(&lowered);
                        let a3 = ((occ[x2] + 1) as f64).sqrt();
                        occ[x2] += 1;
                        let a4 = ((occ[x1] + 1) as f64).sqrt();
                        occ[x1] += 1;
                        let row = basis.rank(&occ);
                        out[(row, col)] += half_g * vel * (a1 * a2 * a3 * a4);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Matrix of P_S (a (x) I^{N-p}) P_S restricted to the symmetric subspace:
/// ((N-p)!/N!) sum a_{xvec,yvec} a^dag_{x1}..a^dag_{xp} a_{yp}..a_{y1}.
///
/// The kernel must be permutation-symmetric on its p slots for this formula
/// to equal the projected lift; callers validate that upstream.
pub fn embed_p_kernel(
    kernel: &ComplexMatrix,
    p: usize,
    basis: &OccupationBasis,
) -> Result<ComplexMatrix> {
    let d = basis.d();
    let n = basis.n_particles();
    if p > n {
        return Err(CoreError::BadArity { p, n });
    }
    let dp = d.pow(p as u32);
    if kernel.rows() != dp || kernel.cols() != dp {
        return Err(CoreError::Shape(format!(
            "p-kernel is {}x{}, expected {dp}x{dp}",
            kernel.rows(),
            kernel.cols()
        )));
    }
    // (N-p)!/N! as a running product, never through big factorials
    let mut scale = 1.0f64;
    for k in 0..p {
        scale /= (n - k) as f64;
    }
    let dim = basis.dim();
    let mut out = ComplexMatrix::zeros(dim, dim);
    let mut ys = vec![0usize; p];
    let mut xs = vec![0usize; p];
    let mut occ = vec![0u16; d];
    for col in 0..dim {
        let m = basis.state(col);
        for ycode in 0..dp {
            digits(ycode, d, &mut ys);
            occ.copy_from_slice(m);
            // lowering string a_{yp}..a_{y1}: y1 acts first
            let mut amp = 1.0f64;
            let mut dead = false;
            for &y in ys.iter() {
                if occ[y] == 0 {
                    dead = true;
                    break;
                }
                amp *= (occ[y] as f64).sqrt();
                occ[y] -= 1;
            }
            if dead {
                continue;
            }
            let lowered = occ.clone();
            let low_amp = amp;
            for xcode in 0..dp {
                let kval = kernel[(xcode, ycode)];
                if kval.norm_sqr() == 0.0 {
                    continue;
                }
                digits(xcode, d, &mut xs);
                occ.copy_from_slice(&lowered);
                // raising string a^dag_{x1}..a^dag_{xp}: xp acts first
                let mut amp = low_amp;
                for &x in xs.iter().rev() {
                    amp *= ((occ[x] + 1) as f64).sqrt();
                    occ[x] += 1;
                }
                let row = basis.rank(&occ);
                out[(row, col)] += kval * (scale * amp);
            }
        }
    }
    Ok(out)
}

/// Slot-1-major digit expansion: code = x1 * d^{p-1} + ... + xp.
fn digits(mut code: usize, d: usize, out: &mut [usize]) {
    for k in (0..out.len()).rev() {
        out[k] = code % d;
        code /= d;
    }
}

/// P_S rho^(x N) P_S in the occupation basis of the eigenbasis of rho:
/// diagonal with entries prod_k lambda_k^{n_k}. Also returns the
/// single-particle unitary U used for the basis change (columns are the
/// eigenvectors of rho).
pub fn project_product_state(
    rho: &ComplexMatrix,
    n_particles: usize,
) -> Result<(SymmetricNBodyState, ComplexMatrix)> {
    rho.require_hermitian(HERMITICITY_TOL)?;
    let spec = eig_hermitian(rho)?;
    let scale = rho.max_abs().max(1.0);
    if spec.min_eigenvalue() < -1e-10 * scale {
        return Err(CoreError::NotPsd(spec.min_eigenvalue()));
    }
    let d = rho.rows();
    // modes ordered by descending eigenvalue, so a pure state occupies mode 1
    let lambdas: Vec<f64> =
        spec.eigenvalues.iter().rev().map(|&l| l.max(0.0)).collect();
    let eigenvectors =
        ComplexMatrix::from_fn(d, d, |i, j| spec.eigenvectors[(i, d - 1 - j)]);
    let basis = OccupationBasis::new(d, n_particles);
    let mut diag = vec![C64::new(0.0, 0.0); basis.dim()];
    for (idx, occ) in basis.states().iter().enumerate() {
        let mut w = 1.0f64;
        for (k, &nk) in occ.iter().enumerate() {
            w *= lambdas[k].powi(nk as i32);
        }
        diag[idx] = C64::new(w, 0.0);
    }
    let matrix = ComplexMatrix::diag(&diag);
    let state = SymmetricNBodyState::new(basis, matrix)?;
    Ok((state, eigenvectors))
}

// ---------------------------------------------------------------------------
// Conversions between the dense product representation and the occupation
// representation, plus the branching isometries the hierarchy cascade uses.
// ---------------------------------------------------------------------------

/// B^dag K B for the isometry B: symmetric subspace -> product space. This is
/// the compression of K; it represents K itself exactly when K = P_S K P_S.
pub fn sym_from_dense(k: &ComplexMatrix, basis: &OccupationBasis, m: usize) -> ComplexMatrix {
    let d = basis.d();
    let dm = d.pow(m as u32);
    assert_eq!(k.rows(), dm);
    assert_eq!(k.cols(), dm);
    let dim = basis.dim();
    let (class_of, inv_sqrt) = class_tables(basis, m, dm, dim);
    let mut out = ComplexMatrix::zeros(dim, dim);
    for x in 0..dm {
        let r = class_of[x];
        for y in 0..dm {
            let c = class_of[y];
            out[(r, c)] += k[(x, y)] * (inv_sqrt[r] * inv_sqrt[c]);
        }
    }
    out
}

/// B w B^dag: expand an occupation-representation operator back to the dense
/// product space. The result is P_S-sandwiched by construction.
pub fn sym_to_dense(w: &ComplexMatrix, basis: &OccupationBasis, m: usize) -> ComplexMatrix {
    let d = basis.d();
    let dm = d.pow(m as u32);
    let dim = basis.dim();
    assert_eq!(w.rows(), dim);
    let (class_of, inv_sqrt) = class_tables(basis, m, dm, dim);
    ComplexMatrix::from_fn(dm, dm, |x, y| {
        let (r, c) = (class_of[x], class_of[y]);
        w[(r, c)] * (inv_sqrt[r] * inv_sqrt[c])
    })
}

fn class_tables(
    basis: &OccupationBasis,
    m: usize,
    dm: usize,
    dim: usize,
) -> (Vec<usize>, Vec<f64>) {
    let mut class_of = vec![0usize; dm];
    for (x, slot) in class_of.iter_mut().enumerate() {
        *slot = basis.rank(&basis.classify(x, m));
    }
    let mut inv_sqrt = vec![0.0f64; dim];
    for (idx, occ) in basis.states().iter().enumerate() {
        inv_sqrt[idx] = 1.0 / basis.class_size(occ).sqrt();
    }
    (class_of, inv_sqrt)
}

/// Branching isometry G_m = (B_{m-1}^dag (x) I_d) B_m, expanding the last
/// slot of a symmetric m-particle state:
/// |n> -> sum_k sqrt(n_k/m) |n - e_k> (x) |k>.
pub fn branching(basis_m: &OccupationBasis, basis_m1: &OccupationBasis) -> ComplexMatrix {
    let d = basis_m.d();
    let m = basis_m.n_particles();
    assert_eq!(basis_m1.d(), d);
    assert_eq!(basis_m1.n_particles() + 1, m);
    let mut g = ComplexMatrix::zeros(basis_m1.dim() * d, basis_m.dim());
    let mut lowered = vec![0u16; d];
    for (col, occ) in basis_m.states().iter().enumerate() {
        for k in 0..d {
            if occ[k] == 0 {
                continue;
            }
            lowered.copy_from_slice(occ);
            lowered[k] -= 1;
            let row = basis_m1.rank(&lowered) * d + k;
            g[(row, col)] = C64::new((occ[k] as f64 / m as f64).sqrt(), 0.0);
        }
    }
    g
}

/// Occupation representation of rho^(x m) (its compression to the symmetric
/// subspace), by the branching recursion R_m = G_m^dag (R_{m-1} (x) rho) G_m.
pub fn sym_power(rho: &ComplexMatrix, m: usize, d: usize) -> ComplexMatrix {
    assert!(m >= 1);
    assert_eq!(rho.rows(), d);
    // base case in occupation order: the rank of e_k is not k itself
    let basis_1 = OccupationBasis::new(d, 1);
    let mut mode_rank = vec![0usize; d];
    for (k, slot) in mode_rank.iter_mut().enumerate() {
        let mut occ = vec![0u16; d];
        occ[k] = 1;
        *slot = basis_1.rank(&occ);
    }
    let mut r = ComplexMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            r[(mode_rank[a], mode_rank[b])] = rho[(a, b)];
        }
    }
    let mut basis_prev = basis_1;
    for k in 2..=m {
        let basis_k = OccupationBasis::new(d, k);
        let g = branching(&basis_k, &basis_prev);
        let big = crate::tensor::kron(&r, rho).expect("occupation-side kron stays small");
        r = g.dagger().mul(&big).mul(&g);
        basis_prev = basis_k;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{projector, random_density, random_hermitian, random_pure_vector, SeedStreams};
    use crate::tensor::{kron, kron_power, symmetrize};

    #[test]
    fn basis_counts_order_and_rank_roundtrip() {
        for (d, n) in [(1usize, 5usize), (2, 3), (3, 4), (4, 2), (2, 20)] {
            let basis = OccupationBasis::new(d, n);
            assert_eq!(basis.dim(), binomial(n + d - 1, d - 1));
            for w in basis.states().windows(2) {
                assert!(w[0] < w[1], "lexicographic order violated");
            }
            for (idx, occ) in basis.states().iter().enumerate() {
                assert_eq!(basis.rank(occ), idx);
            }
        }
    }

    #[test]
    fn one_body_identity_counts_particles() {
        let basis = OccupationBasis::new(3, 4);
        let h = ComplexMatrix::identity(3);
        let q = second_quantize_1body(&h, &basis).unwrap();
        let expected = ComplexMatrix::identity(basis.dim()).scale(C64::new(4.0, 0.0));
        assert!(q.sub(&expected).max_abs() < 1e-12);
    }

    #[test]
    fn one_body_mode_occupation() {
        let n = 5;
        let basis = OccupationBasis::new(2, n);
        let h = ComplexMatrix::diag_real(&[0.0, 1.0]);
        let q = second_quantize_1body(&h, &basis).unwrap();
        for (idx, occ) in basis.states().iter().enumerate() {
            assert!((q[(idx, idx)].re - occ[1] as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn one_body_matches_full_tensor_oracle() {
        let mut rng = SeedStreams::new(31).stream("sq1");
        let d = 2;
        let n = 2;
        let basis = OccupationBasis::new(d, n);
        let h = random_hermitian(&mut rng, d);
        let q = second_quantize_1body(&h, &basis).unwrap();
        let id = ComplexMatrix::identity(d);
        let full = kron(&h, &id).unwrap().add(&kron(&id, &h).unwrap());
        let p = symmetrize(n, d).unwrap();
        let oracle = sym_from_dense(&p.mul(&full).mul(&p), &basis, n);
        assert!(q.sub(&oracle).max_abs() < 1e-12);
    }

    #[test]
    fn two_body_identity_counts_pairs() {
        let basis = OccupationBasis::new(2, 4);
        let v = ComplexMatrix::identity(4);
        let g = 0.25;
        let q = second_quantize_2body(&v, g, &basis).unwrap();
        let expected = ComplexMatrix::identity(basis.dim()).scale(C64::new(g * 6.0, 0.0));
        assert!(q.sub(&expected).max_abs() < 1e-12);
    }

    #[test]
    fn two_body_zero_coupling_is_zero() {
        let mut rng = SeedStreams::new(32).stream("sq2");
        let basis = OccupationBasis::new(2, 3);
        let v = crate::rng::random_swap_symmetric(&mut rng, 2);
        let q = second_quantize_2body(&v, 0.0, &basis).unwrap();
        assert_eq!(q.max_abs(), 0.0);
    }

    #[test]
    fn two_body_matches_full_tensor_oracle() {
        let mut rng = SeedStreams::new(33).stream("sq2-oracle");
        let d = 2;
        let basis = OccupationBasis::new(d, 2);
        let v = crate::rng::random_swap_symmetric(&mut rng, d);
        let g = 0.5;
        let q = second_quantize_2body(&v, g, &basis).unwrap();
        // at N = 2 the operator (g/2) sum_{i != j} V_ij equals g V_12
        let p = symmetrize(2, d).unwrap();
        let oracle = sym_from_dense(&p.mul(&v.scale(C64::new(g, 0.0))).mul(&p), &basis, 2);
        assert!(q.sub(&oracle).max_abs() < 1e-12);
    }

    #[test]
    fn two_body_rejects_non_swap_symmetric() {
        let mut rng = SeedStreams::new(34).stream("sq2-bad");
        let basis = OccupationBasis::new(2, 2);
        let bad = random_hermitian(&mut rng, 4);
        assert!(matches!(
            second_quantize_2body(&bad, 1.0, &basis),
            Err(CoreError::NotSwapSymmetric(_))
        ));
    }

    #[test]
    fn two_body_scales_inversely_with_particle_number() {
        let mut rng = SeedStreams::new(42).stream("sq2-scaling");
        let basis = OccupationBasis::new(2, 4);
        let v = crate::rng::random_swap_symmetric(&mut rng, 2);
        let n = 4.0;
        let full = second_quantize_2body(&v, 1.0 / n, &basis).unwrap();
        let half = second_quantize_2body(&v, 1.0 / (2.0 * n), &basis).unwrap();
        assert!(full.scale(C64::new(0.5, 0.0)).sub(&half).max_abs() < 1e-13);
    }

    #[test]
    fn embed_identity_gives_identity() {
        let basis = OccupationBasis::new(2, 3);
        let q = embed_p_kernel(&ComplexMatrix::identity(4), 2, &basis).unwrap();
        assert!(q.sub(&ComplexMatrix::identity(basis.dim())).max_abs() < 1e-12);
    }

    #[test]
    fn embed_one_body_diag_gives_occupation_fraction() {
        let d = 2;
        let n = 3;
        let basis = OccupationBasis::new(d, n);
        let a = ComplexMatrix::diag_real(&[1.0, 0.0]);
        let q = embed_p_kernel(&a, 1, &basis).unwrap();
        for (idx, occ) in basis.states().iter().enumerate() {
            assert!((q[(idx, idx)].re - occ[0] as f64 / n as f64).abs() < 1e-12);
        }
        // brute-force check in the 8-dim tensor space
        let id = ComplexMatrix::identity(d);
        let full = kron(&kron(&a, &id).unwrap(), &id).unwrap();
        let p = symmetrize(n, d).unwrap();
        let oracle = sym_from_dense(&p.mul(&full).mul(&p), &basis, n);
        assert!(q.sub(&oracle).max_abs() < 1e-12);
    }

    #[test]
    fn embed_full_arity_is_plain_projection() {
        let mut rng = SeedStreams::new(35).stream("embed-full");
        let d = 2;
        let basis = OccupationBasis::new(d, 2);
        let p = symmetrize(2, d).unwrap();
        let raw = random_hermitian(&mut rng, 4);
        let a = p.mul(&raw).mul(&p);
        let q = embed_p_kernel(&a, 2, &basis).unwrap();
        let oracle = sym_from_dense(&p.mul(&a).mul(&p), &basis, 2);
        assert!(q.sub(&oracle).max_abs() < 1e-12);
    }

    #[test]
    fn embed_matches_brute_force_for_small_instances() {
        let mut rng = SeedStreams::new(36).stream("embed-bf");
        for d in [1usize, 2] {
            for n in [2usize, 3] {
                let basis = OccupationBasis::new(d, n);
                for p in 1..=2usize.min(n) {
                    let dp = d.pow(p as u32);
                    let ps = symmetrize(p, d).unwrap();
                    let raw = random_hermitian(&mut rng, dp);
                    let a = ps.mul(&raw).mul(&ps);
                    let q = embed_p_kernel(&a, p, &basis).unwrap();
                    let big = if n > p {
                        kron(&a, &ComplexMatrix::identity(d.pow((n - p) as u32))).unwrap()
                    } else {
                        a.clone()
                    };
                    let pn = symmetrize(n, d).unwrap();
                    let oracle = sym_from_dense(&pn.mul(&big).mul(&pn), &basis, n);
                    assert!(
                        q.sub(&oracle).max_abs() < 1e-10,
                        "embed mismatch at d={d} n={n} p={p}"
                    );
                }
            }
        }
    }

    #[test]
    fn embed_is_linear_and_dagger_preserving() {
        let mut rng = SeedStreams::new(37).stream("embed-lin");
        let d = 2;
        let basis = OccupationBasis::new(d, 3);
        let ps = symmetrize(2, d).unwrap();
        let sym = |m: &ComplexMatrix| ps.mul(m).mul(&ps);
        let a = sym(&crate::rng::random_ginibre(&mut rng, 4));
        let b = sym(&crate::rng::random_ginibre(&mut rng, 4));
        let qa = embed_p_kernel(&a, 2, &basis).unwrap();
        let qb = embed_p_kernel(&b, 2, &basis).unwrap();
        let qsum = embed_p_kernel(&a.add(&b), 2, &basis).unwrap();
        assert!(qsum.sub(&qa.add(&qb)).max_abs() < 1e-12);
        let qdag = embed_p_kernel(&a.dagger(), 2, &basis).unwrap();
        assert!(qdag.sub(&qa.dagger()).max_abs() < 1e-12);
    }

    #[test]
    fn embed_rejects_bad_arity() {
        let basis = OccupationBasis::new(2, 1);
        assert!(matches!(
            embed_p_kernel(&ComplexMatrix::identity(4), 2, &basis),
            Err(CoreError::BadArity { .. })
        ));
    }

    #[test]
    fn projected_pure_state_is_rank_one() {
        let psi = vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let rho = projector(&psi);
        let (state, _u) = project_product_state(&rho, 4).unwrap();
        assert!((state.mass - 1.0).abs() < 1e-12);
        for (idx, occ) in state.basis.states().iter().enumerate() {
            let e = state.matrix[(idx, idx)].re;
            if occ.as_slice() == [4u16, 0] {
                assert!((e - 1.0).abs() < 1e-12);
            } else {
                assert!(e.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projected_maximally_mixed_two_particles() {
        let rho = ComplexMatrix::diag_real(&[0.5, 0.5]);
        let (state, _u) = project_product_state(&rho, 2).unwrap();
        assert_eq!(state.basis.dim(), 3);
        for idx in 0..3 {
            assert!((state.matrix[(idx, idx)].re - 0.25).abs() < 1e-12);
        }
        assert!((state.mass - 0.75).abs() < 1e-12);
        // brute force in the 4-dim tensor space
        let p = symmetrize(2, 2).unwrap();
        let dense = p.mul(&kron_power(&rho, 2).unwrap()).mul(&p);
        let oracle = sym_from_dense(&dense, &state.basis, 2);
        assert!(state.matrix.sub(&oracle).max_abs() < 1e-12);
    }

    #[test]
    fn projected_mass_at_most_one_with_equality_iff_pure() {
        let mut rng = SeedStreams::new(38).stream("mass");
        for d in 2..=4usize {
            for n in 2..=4usize {
                let rho = random_density(&mut rng, d);
                let (state, _) = project_product_state(&rho, n).unwrap();
                assert!(state.mass <= 1.0 + 1e-12);
                assert!(state.mass < 1.0 - 1e-6, "a random mixed state is never pure");
                let psi = random_pure_vector(&mut rng, d);
                let (pure_state, _) = project_product_state(&projector(&psi), n).unwrap();
                assert!((pure_state.mass - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn trace_identity_for_pure_states() {
        // Tr(phi_p(a) P rho^N P) = Tr(a rho^p) for pure product states,
        // checked up to N = 20
        let mut rng = SeedStreams::new(39).stream("trace-id");
        for d in 2..=3usize {
            for &n in &[2usize, 5, 20] {
                for p in 1..=2usize {
                    let psi = random_pure_vector(&mut rng, d);
                    let rho = projector(&psi);
                    let (state, u) = project_product_state(&rho, n).unwrap();
                    let ps = symmetrize(p, d).unwrap();
                    let raw = random_hermitian(&mut rng, d.pow(p as u32));
                    let a = ps.mul(&raw).mul(&ps);
                    // rotate the kernel into the eigenbasis of rho
                    let up = kron_power(&u, p).unwrap();
                    let a_rot = up.dagger().mul(&a).mul(&up);
                    let embedded = embed_p_kernel(&a_rot, p, &state.basis).unwrap();
                    let lhs = embedded.mul(&state.matrix).trace();
                    let rhs = a.mul(&kron_power(&rho, p).unwrap()).trace();
                    assert!(
                        (lhs - rhs).norm() < 1e-10,
                        "trace identity failed at d={d} n={n} p={p}"
                    );
                }
            }
        }
    }

    #[test]
    fn branching_is_an_isometry() {
        for (d, m) in [(2usize, 2usize), (2, 4), (3, 3)] {
            let basis_m = OccupationBasis::new(d, m);
            let basis_m1 = OccupationBasis::new(d, m - 1);
            let g = branching(&basis_m, &basis_m1);
            let gram = g.dagger().mul(&g);
            assert!(gram.sub(&ComplexMatrix::identity(basis_m.dim())).max_abs() < 1e-12);
        }
    }

    #[test]
    fn branching_reproduces_the_embedded_lift() {
        // one-step lift: P_S (b (x) I) P_S in occupation form is
        // G^dag (b_occ (x) I_d) G
        let mut rng = SeedStreams::new(43).stream("branch-lift");
        let d = 2;
        let m = 3;
        let basis_m = OccupationBasis::new(d, m);
        let basis_m1 = OccupationBasis::new(d, m - 1);
        let ps = symmetrize(m - 1, d).unwrap();
        let b = ps.mul(&random_hermitian(&mut rng, d.pow((m - 1) as u32))).mul(&ps);
        let b_occ = sym_from_dense(&b, &basis_m1, m - 1);
        let g = branching(&basis_m, &basis_m1);
        let lifted =
            g.dagger().mul(&kron(&b_occ, &ComplexMatrix::identity(d)).unwrap()).mul(&g);
        let oracle = embed_p_kernel(&b, m - 1, &basis_m)
            .unwrap()
            .scale(C64::new(1.0, 0.0));
        // embed_p_kernel(b, m-1) is exactly P_S (b (x) I) P_S
        assert!(lifted.sub(&oracle).max_abs() < 1e-12);
    }

    #[test]
    fn sym_power_matches_dense_compression() {
        let mut rng = SeedStreams::new(40).stream("sym-power");
        for (d, m) in [(2usize, 2usize), (2, 3), (3, 2)] {
            let rho = random_density(&mut rng, d);
            let basis = OccupationBasis::new(d, m);
            let dense = kron_power(&rho, m).unwrap();
            let oracle = sym_from_dense(&dense, &basis, m);
            let fast = sym_power(&rho, m, d);
            assert!(fast.sub(&oracle).max_abs() < 1e-12, "sym_power mismatch d={d} m={m}");
        }
    }

    #[test]
    fn sym_round_trip_is_projection() {
        let mut rng = SeedStreams::new(41).stream("sym-rt");
        let d = 2;
        let m = 3;
        let basis = OccupationBasis::new(d, m);
        let k = random_hermitian(&mut rng, d.pow(m as u32));
        let p = symmetrize(m, d).unwrap();
        let projected = p.mul(&k).mul(&p);
        let round = sym_to_dense(&sym_from_dense(&k, &basis, m), &basis, m);
        assert!(round.sub(&projected).max_abs() < 1e-12);
    }
}
