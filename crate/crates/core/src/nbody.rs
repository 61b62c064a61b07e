//! Exact N-body von Neumann dynamics on the symmetric subspace and the
//! quantum expectation values Tr(A rho_N(t)).
//!
//! Everything runs in the eigenbasis of the initial one-particle state, where
//! the projected product state is diagonal in the occupation basis; h, V, and
//! observable kernels are conjugated by the same unitary. One
//! eigendecomposition of the N-body Hamiltonian serves every time point.

use num_complex::Complex64 as C64;

use crate::eig::{SpectralPropagator, HERMITICITY_TOL};
use crate::error::{CoreError, Result};
use crate::fock::{
    embed_p_kernel, project_product_state, second_quantize_1body, second_quantize_2body,
    OccupationBasis, SymmetricNBodyState,
};
use crate::hartree::{DensityMatrix, InteractionModel};
use crate::matrix::ComplexMatrix;
use crate::poisson::PObservable;
use crate::tensor::{kron, kron_power};

/// H_N = H0 + HV on the symmetric subspace, with H0 = sum_i h_i and
/// HV = (1/2N) sum_{i != j} V_ij (mean-field coupling g = 1/N).
#[derive(Debug, Clone)]
pub struct NBodyHamiltonian {
    pub d: usize,
    pub n_particles: usize,
    pub hbar: f64,
    pub basis: OccupationBasis,
    pub h0: ComplexMatrix,
    pub hv: ComplexMatrix,
    propagator: SpectralPropagator,
}

impl NBodyHamiltonian {
    /// Build from single-particle data already expressed in the basis the
    /// N-body computation will use.
    pub fn new(
        h: &ComplexMatrix,
        v: &ComplexMatrix,
        n_particles: usize,
        hbar: f64,
    ) -> Result<Self> {
        let d = h.rows();
        let basis = OccupationBasis::new(d, n_particles);
        let h0 = second_quantize_1body(h, &basis)?;
        let g = 1.0 / n_particles as f64;
        let hv = second_quantize_2body(v, g, &basis)?;
        h0.require_hermitian(HERMITICITY_TOL)?;
        hv.require_hermitian(HERMITICITY_TOL)?;
        let total = h0.add(&hv);
        let propagator = SpectralPropagator::new(&total, hbar)?;
        Ok(Self { d, n_particles, hbar, basis, h0, hv, propagator })
    }

    pub fn total(&self) -> ComplexMatrix {
        self.h0.add(&self.hv)
    }

    pub fn propagator(&self) -> &SpectralPropagator {
        &self.propagator
    }
}

/// e^{-iHt/hbar} state e^{iHt/hbar} via the cached spectral propagator.
pub fn evolve_state(
    h: &NBodyHamiltonian,
    state0: &SymmetricNBodyState,
    t: f64,
) -> Result<SymmetricNBodyState> {
    if state0.basis != h.basis {
        return Err(CoreError::BasisMismatch);
    }
    let matrix = h.propagator.evolve_state(t, &state0.matrix);
    Ok(SymmetricNBodyState {
        basis: state0.basis.clone(),
        mass: matrix.trace().re,
        matrix,
    })
}

/// Tr(phi_p(a) . state): embeds the kernel and contracts. The kernel must be
/// expressed in the same single-particle basis as the state.
pub fn expectation(a: &PObservable, state: &SymmetricNBodyState) -> Result<C64> {
    let embedded = embed_p_kernel(a.kernel(), a.p(), &state.basis)?;
    Ok(embedded.mul(&state.matrix).trace())
}

/// The full pipeline for Tr(A(t) rho0^(x N)) = Tr(A rho_N(t)):
/// rotate into the eigenbasis of rho0, project the product state, evolve on
/// the symmetric subspace, embed the rotated observable, contract.
pub fn heisenberg_expectation(
    model: &InteractionModel,
    rho0: &DensityMatrix,
    a: &PObservable,
    n_particles: usize,
    t: f64,
) -> Result<C64> {
    if a.p() > n_particles {
        return Err(CoreError::BadArity { p: a.p(), n: n_particles });
    }
    let (state0, u) = project_product_state(&rho0.matrix, n_particles)?;
    let h_rot = u.dagger().mul(&model.h).mul(&u);
    let u2 = kron(&u, &u)?;
    let v_rot = u2.dagger().mul(&model.v).mul(&u2);
    let h = NBodyHamiltonian::new(&h_rot, &v_rot, n_particles, rho0.hbar)?;
    let state_t = evolve_state(&h, &state0, t)?;
    let up = kron_power(&u, a.p())?;
    let a_rot = PObservable::new(a.p(), a.d(), up.dagger().mul(a.kernel()).mul(&up))?;
    expectation(&a_rot, &state_t)
}
