//! Dense Hermitian eigendecomposition and the spectral propagators built on it.
//!
//! A cyclic complex Jacobi iteration: every operator this library evolves has
//! dimension at most a few hundred, where Jacobi is fast and delivers
//! reconstruction residuals near machine precision. All matrix exponentials
//! go through spectra; there is no series expansion anywhere.

use num_complex::Complex64 as C64;

use crate::error::{CoreError, Result};
use crate::matrix::ComplexMatrix;

/// Tolerance against which `propagate` and friends check hermiticity.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// Eigendecomposition of a Hermitian matrix: M = U diag(lambda) U^dagger,
/// eigenvalues ascending, U unitary.
#[derive(Debug, Clone)]
pub struct HermitianSpectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl HermitianSpectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// U diag(f(lambda)) U^dagger.
    pub fn apply_to_spectrum(&self, mut f: impl FnMut(f64) -> C64) -> ComplexMatrix {
        let n = self.dim();
        let u = &self.eigenvectors;
        let fs: Vec<C64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        // U * diag(fs) * U^dagger without forming the diagonal matrix
        let mut out = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..n {
                    acc += u[(i, k)] * fs[k] * u[(j, k)].conj();
                }
                out[(i, j)] = acc;
            }
        }
        out
    }

    /// Reconstruct the original matrix (used by the accuracy invariants).
    pub fn reconstruct(&self) -> ComplexMatrix {
        self.apply_to_spectrum(|l| C64::new(l, 0.0))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi rotations.
///
/// Errors with `NotHermitian` if the input fails the hermiticity check.
pub fn eig_hermitian(m: &ComplexMatrix) -> Result<HermitianSpectrum> {
    if !m.is_square() {
        return Err(CoreError::Shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    m.require_hermitian(HERMITICITY_TOL)?;
    let n = m.rows();
    // Work on the exact Hermitian part so roundoff skew cannot leak in.
    let mut a = m.hermitian_part();
    let mut v = ComplexMatrix::identity(n);

    let fro = a.frobenius_norm();
    if n <= 1 || fro == 0.0 {
        let eigenvalues = (0..n).map(|i| a[(i, i)].re).collect();
        return Ok(HermitianSpectrum { eigenvalues, eigenvectors: v });
    }
    let stop = 1e-15 * fro;

    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += 2.0 * a[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let abs = apq.norm();
                if abs <= stop / (n as f64) {
                    continue;
                }
                let phase = apq / abs;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let tau = (aqq - app) / (2.0 * abs);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // columns: col_p <- c col_p - s conj(phase) col_q
                //          col_q <- s phase col_p + c col_q
                let su = C64::new(s, 0.0) * phase;
                let su_conj = su.conj();
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * c - akq * su_conj;
                    a[(k, q)] = akp * su + akq * c;
                }
                // rows: row_p <- c row_p - s phase row_q
                //       row_q <- s conj(phase) row_p + c row_q
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = apk * c - aqk * su;
                    a[(q, k)] = apk * su_conj + aqk * c;
                }
                a[(p, q)] = C64::new(0.0, 0.0);
                a[(q, p)] = C64::new(0.0, 0.0);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c - vkq * su_conj;
                    v[(k, q)] = vkp * su + vkq * c;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let lambdas: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    order.sort_by(|&i, &j| lambdas[i].partial_cmp(&lambdas[j]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| lambdas[i]).collect();
    let eigenvectors = ComplexMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(HermitianSpectrum { eigenvalues, eigenvectors })
}

/// Largest singular value, via the spectrum of M^dagger M.
pub fn op_norm(m: &ComplexMatrix) -> f64 {
    if m.rows() == 0 || m.cols() == 0 {
        return 0.0;
    }
    let gram = m.dagger().mul(m);
    let spec = eig_hermitian(&gram.hermitian_part())
        .expect("gram matrix is Hermitian by construction");
    spec.max_eigenvalue().max(0.0).sqrt()
}

/// Reusable propagator for a fixed Hermitian generator: one eigendecomposition,
/// arbitrarily many times t.
#[derive(Debug, Clone)]
pub struct SpectralPropagator {
    spectrum: HermitianSpectrum,
    hbar: f64,
}

impl SpectralPropagator {
    pub fn new(h: &ComplexMatrix, hbar: f64) -> Result<Self> {
        assert!(hbar > 0.0, "hbar must be positive");
        Ok(Self { spectrum: eig_hermitian(h)?, hbar })
    }

    pub fn spectrum(&self) -> &HermitianSpectrum {
        &self.spectrum
    }

    /// e^{iHt/hbar} as a dense matrix.
    pub fn unitary(&self, t: f64) -> ComplexMatrix {
        let w = t / self.hbar;
        self.spectrum.apply_to_spectrum(|l| C64::new(0.0, l * w).exp())
    }

    /// Heisenberg direction: e^{iHt/hbar} X e^{-iHt/hbar}.
    pub fn evolve_observable(&self, t: f64, x: &ComplexMatrix) -> ComplexMatrix {
        let u = self.unitary(t);
        u.mul(x).mul(&u.dagger())
    }

    /// Schroedinger direction: e^{-iHt/hbar} X e^{iHt/hbar}.
    pub fn evolve_state(&self, t: f64, x: &ComplexMatrix) -> ComplexMatrix {
        let u = self.unitary(-t);
        u.mul(x).mul(&u.dagger())
    }
}

/// Free evolution of an observable: e^{iHt/hbar} X e^{-iHt/hbar}.
///
/// One-shot form; build a [`SpectralPropagator`] to reuse the decomposition.
pub fn propagate(h: &ComplexMatrix, t: f64, hbar: f64, x: &ComplexMatrix) -> Result<ComplexMatrix> {
    let prop = SpectralPropagator::new(h, hbar)?;
    Ok(prop.evolve_observable(t, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStreams;

    #[test]
    fn eig_reconstructs_random_hermitian() {
        let mut rng = SeedStreams::new(7).stream("eig-test");
        for n in [1usize, 2, 3, 6, 12, 40] {
            let h = crate::rng::random_hermitian(&mut rng, n);
            let spec = eig_hermitian(&h).unwrap();
            let scale = h.max_abs().max(1.0);
            assert!(
                spec.reconstruct().sub(&h).max_abs() <= 1e-12 * scale,
                "reconstruction failed at n={n}"
            );
            let u = &spec.eigenvectors;
            let gram = u.dagger().mul(u);
            assert!(gram.sub(&ComplexMatrix::identity(n)).max_abs() <= 1e-12);
            for w in spec.eigenvalues.windows(2) {
                assert!(w[0] <= w[1]);
            }
        }
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let mut m = ComplexMatrix::identity(2);
        m[(0, 1)] = C64::new(1.0, 0.0);
        assert!(matches!(eig_hermitian(&m), Err(CoreError::NotHermitian(_))));
    }

    #[test]
    fn op_norm_examples() {
        assert!((op_norm(&ComplexMatrix::identity(5)) - 1.0).abs() < 1e-12);
        let d = ComplexMatrix::diag_real(&[3.0, -5.0]);
        assert!((op_norm(&d) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn op_norm_matches_eig_oracle_on_random_matrix() {
        let mut rng = SeedStreams::new(11).stream("opnorm");
        let m = crate::rng::random_hermitian(&mut rng, 6)
            .add(&crate::rng::random_hermitian(&mut rng, 6).scale(C64::new(0.0, 1.0)));
        let gram = m.dagger().mul(&m).hermitian_part();
        let oracle = eig_hermitian(&gram).unwrap().max_eigenvalue().sqrt();
        assert!((op_norm(&m) - oracle).abs() <= 1e-10 * oracle.max(1.0));
    }

    #[test]
    fn propagate_at_zero_and_identity_generator() {
        let mut rng = SeedStreams::new(3).stream("prop");
        let h = crate::rng::random_hermitian(&mut rng, 4);
        let x = crate::rng::random_hermitian(&mut rng, 4);
        assert!(propagate(&h, 0.0, 1.0, &x).unwrap().sub(&x).max_abs() < 1e-13);
        // scalar generator: phases cancel
        let id = ComplexMatrix::identity(4);
        assert!(propagate(&id, 1.7, 0.5, &x).unwrap().sub(&x).max_abs() < 1e-12);
    }

    #[test]
    fn propagate_is_a_group_and_preserves_norm() {
        let mut rng = SeedStreams::new(5).stream("group");
        let h = crate::rng::random_hermitian(&mut rng, 5);
        let x = crate::rng::random_hermitian(&mut rng, 5);
        let prop = SpectralPropagator::new(&h, 2.0).unwrap();
        let a = prop.evolve_observable(0.3, &prop.evolve_observable(0.9, &x));
        let b = prop.evolve_observable(1.2, &x);
        assert!(a.sub(&b).max_abs() <= 1e-10 * x.max_abs().max(1.0));
        let norm0 = op_norm(&x);
        let norm1 = op_norm(&b);
        assert!((norm0 - norm1).abs() <= 1e-10 * norm0.max(1.0));
    }
}
