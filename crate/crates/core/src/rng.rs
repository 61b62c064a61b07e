//! Seeded random instance generation.
//!
//! The generators here are part of the external reproducibility contract:
//! a random Hermitian matrix is (G + G^dagger)/2 with independent standard
//! normal real and imaginary parts drawn row-major (re before im), and a
//! random density matrix is G G^dagger / Tr(G G^dagger). Identical seeds
//! produce identical instances on every platform.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::matrix::ComplexMatrix;
use crate::tensor::swap_matrix;

/// Derives independent named substreams from one master seed, so that adding
/// a draw to one component never shifts another component's stream.
#[derive(Debug, Clone, Copy)]
pub struct SeedStreams {
    master: u64,
}

impl SeedStreams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn stream(&self, label: &str) -> ChaCha12Rng {
        // FNV-1a over the label keeps the derivation platform-independent.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        ChaCha12Rng::seed_from_u64(self.master ^ h)
    }
}

pub fn complex_normal(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

/// Ginibre draw: independent standard normal real/imaginary entries, row-major.
pub fn random_ginibre(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, n, |_, _| complex_normal(rng))
}

/// (G + G^dagger)/2 for a Ginibre G.
pub fn random_hermitian(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
    random_ginibre(rng, n).hermitian_part()
}

/// G G^dagger / Tr(G G^dagger): a random density matrix of unit trace.
pub fn random_density(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
    let g = random_ginibre(rng, n);
    let gg = g.mul(&g.dagger());
    let tr = gg.trace().re;
    gg.scale(C64::new(1.0 / tr, 0.0))
}

/// Normalized random pure state vector.
pub fn random_pure_vector(rng: &mut impl Rng, n: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..n).map(|_| complex_normal(rng)).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

/// Rank-one projection |psi><psi| from a unit vector.
pub fn projector(psi: &[C64]) -> ComplexMatrix {
    let n = psi.len();
    ComplexMatrix::from_fn(n, n, |i, j| psi[i] * psi[j].conj())
}

/// Random Hermitian swap-symmetric pair potential on C^d (x) C^d:
/// (H + S H S)/2 for a random Hermitian H and the swap S.
pub fn random_swap_symmetric(rng: &mut impl Rng, d: usize) -> ComplexMatrix {
    let h = random_hermitian(rng, d * d);
    let s = swap_matrix(d);
    h.add(&s.mul(&h).mul(&s)).scale(C64::new(0.5, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_deterministic_and_independent() {
        let s = SeedStreams::new(42);
        let a1 = random_hermitian(&mut s.stream("h"), 3);
        let a2 = random_hermitian(&mut s.stream("h"), 3);
        let b = random_hermitian(&mut s.stream("v"), 3);
        assert_eq!(a1, a2);
        assert!(a1.sub(&b).max_abs() > 1e-6);
    }

    #[test]
    fn density_has_unit_trace_and_is_psd() {
        let mut rng = SeedStreams::new(9).stream("rho");
        let rho = random_density(&mut rng, 4);
        assert!((rho.trace().re - 1.0).abs() < 1e-14);
        let spec = crate::eig::eig_hermitian(&rho).unwrap();
        assert!(spec.min_eigenvalue() >= -1e-14);
    }

    #[test]
    fn swap_symmetric_draw_satisfies_its_symmetry() {
        let mut rng = SeedStreams::new(1).stream("v");
        let v = random_swap_symmetric(&mut rng, 3);
        let s = swap_matrix(3);
        assert!(s.mul(&v).mul(&s).sub(&v).max_abs() < 1e-14);
        assert!(v.hermiticity_residual() < 1e-14);
    }
}
