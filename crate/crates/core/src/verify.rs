//! Identity and estimate verification suites.
//!
//! Each suite runs one identity at its declared scale and reports the worst
//! residual against the declared tolerance. The CLI `verify-identities`
//! subcommand and the acceptance test target both run exactly these
//! functions, so the machine-readable report and the test suite can never
//! drift apart.

use num_complex::Complex64 as C64;
use num_traits::Signed;

use crate::bounds::{self, BoundParams};
use crate::config::ModelConfig;
use crate::eig::eig_hermitian;
use crate::error::Result;
use crate::hartree::{
    self, evolve_hartree, trace_norm_hermitian, DensityMatrix, HartreeMethod, HartreeOpts,
    InteractionModel,
};
use crate::hierarchy::{
    classical_potential_kernel, commutator_decomposition_check, dyson_terms, free_evolve_kernel,
    multit_coefficient_check, tree_apply,
};
use crate::matrix::{ComplexMatrix, DEFAULT_ELEMENT_CAP};
use crate::nbody;
use crate::poisson::{self, bracket_eval, bracket_kernel, rank_one_reduction_check, PObservable};
use crate::report::{IdentityReport, VerifyReport};
use crate::rng::{
    projector, random_density, random_hermitian, random_pure_vector, random_swap_symmetric,
    SeedStreams,
};

fn random_model(rng: &mut rand_chacha::ChaCha12Rng, d: usize) -> InteractionModel {
    InteractionModel::new(random_hermitian(rng, d), random_swap_symmetric(rng, d))
        .expect("generator output satisfies the model invariants")
}

fn random_obs(rng: &mut rand_chacha::ChaCha12Rng, p: usize, d: usize) -> PObservable {
    PObservable::new(p, d, random_hermitian(rng, d.pow(p as u32)))
        .expect("kernel shape is consistent")
}

fn pure_state(rng: &mut rand_chacha::ChaCha12Rng, d: usize, hbar: f64) -> DensityMatrix {
    DensityMatrix::new(projector(&random_pure_vector(rng, d)), hbar)
        .expect("a projector is a valid state")
}

/// Commutator decomposition into tree and loop parts, dense N-body residual.
pub fn treeloop_suite(streams: &SeedStreams, hbar: f64) -> Result<IdentityReport> {
    let mut rng = streams.stream("verify-treeloop");
    let model = random_model(&mut rng, 2);
    let mut worst = 0.0f64;
    for (p, n, r) in [(1usize, 3usize, 0.0f64), (2, 3, 0.3), (1, 4, 0.15), (2, 4, 0.05)] {
        let a = random_obs(&mut rng, p, 2);
        let res = commutator_decomposition_check(&a, r, n, &model, hbar, DEFAULT_ELEMENT_CAP)?
            / a.norm().max(1.0);
        worst = worst.max(res);
    }
    Ok(IdentityReport::new("treeloop", "d=2, N<=4, p<=2", worst, 1e-10))
}

/// Tree insertion against the Poisson bracket with the free-evolved pair
/// potential, on 50 random density matrices.
pub fn bracket_duality_suite(streams: &SeedStreams, hbar: f64) -> Result<IdentityReport> {
    let mut rng = streams.stream("verify-duality");
    let model = random_model(&mut rng, 2);
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let p = 1 + (trial % 2);
        let a = random_obs(&mut rng, p, 2);
        let t = rand::Rng::gen_range(&mut rng, 0.0..0.4);
        let x = tree_apply(&a, t, &model, hbar)?;
        let v_c = classical_potential_kernel(&model, t, hbar)?;
        let rho = DensityMatrix::new(random_density(&mut rng, 2), hbar)?;
        let lhs = poisson::eval(&x, &rho)?;
        let rhs = bracket_eval(&v_c, &a, &rho)?;
        worst = worst.max((lhs - rhs).norm() / a.norm().max(1.0));
    }
    Ok(IdentityReport::new("bracket-duality", "d=2, p<=2, 50 states", worst, 1e-10))
}

/// Tree-chain coefficient identity at oracle scale, n <= 2.
pub fn multitree_suite(streams: &SeedStreams, hbar: f64) -> Result<IdentityReport> {
    let mut rng = streams.stream("verify-multitree");
    let model = random_model(&mut rng, 2);
    let mut worst = 0.0f64;
    let rho = pure_state(&mut rng, 2, hbar);
    let a = random_obs(&mut rng, 1, 2);
    worst = worst.max(multit_coefficient_check(&a, &[], 0.3, 3, &rho, &model)?);
    worst = worst.max(multit_coefficient_check(&a, &[0.17], 0.3, 3, &rho, &model)?);
    worst = worst.max(multit_coefficient_check(&a, &[0.22, 0.08], 0.3, 4, &rho, &model)?);
    let a2 = random_obs(&mut rng, 2, 2);
    worst = worst.max(multit_coefficient_check(&a2, &[0.11], 0.2, 4, &rho, &model)?);
    Ok(IdentityReport::new("multitree", "d=2, N<=4, n<=2", worst, 1e-9))
}

/// Jacobi identity for nested bracket kernels, 50 random kernel triples.
pub fn jacobi_suite(streams: &SeedStreams, hbar: f64) -> Result<IdentityReport> {
    let mut rng = streams.stream("verify-jacobi");
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let d = 2 + (trial % 2);
        let mut arity = || 1 + (rand::Rng::gen_range(&mut rng, 0..2) as usize);
        let (pa, pb, pc) = (arity(), arity(), arity());
        let a = random_obs(&mut rng, pa, d);
        let b = random_obs(&mut rng, pb, d);
        let c = random_obs(&mut rng, pc, d);
        let ab_c = bracket_kernel(&bracket_kernel(&a, &b, hbar)?, &c, hbar)?;
        let ca_b = bracket_kernel(&bracket_kernel(&c, &a, hbar)?, &b, hbar)?;
        let bc_a = bracket_kernel(&bracket_kernel(&b, &c, hbar)?, &a, hbar)?;
        let scale = a.norm().max(1.0) * b.norm().max(1.0) * c.norm().max(1.0);
        for _ in 0..4 {
            let rho = DensityMatrix::new(random_density(&mut rng, d), hbar)?;
            let total = poisson::eval(&ab_c, &rho)?
                + poisson::eval(&ca_b, &rho)?
                + poisson::eval(&bc_a, &rho)?;
            worst = worst.max(total.norm() / scale);
        }
    }
    Ok(IdentityReport::new("jacobi", "p,q,r<=2, d<=3, 50 trials", worst, 1e-10))
}

/// Rank-one reduction: density-matrix bracket against wave-function bracket.
pub fn rank_one_suite(streams: &SeedStreams, hbar: f64) -> Result<IdentityReport> {
    let mut rng = streams.stream("verify-rank-one");
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let d = 2 + (trial % 2);
        let p = 1 + (trial % 2);
        let q = 1 + ((trial / 2) % 2);
        let a = random_obs(&mut rng, p, d);
        let b = random_obs(&mut rng, q, d);
        let psi = random_pure_vector(&mut rng, d);
        let (x, y) = rank_one_reduction_check(&a, &b, &psi, hbar)?;
        worst = worst.max((x - y).norm() / (a.norm().max(1.0) * b.norm().max(1.0)));
    }
    Ok(IdentityReport::new("rank-one-reduction", "p,q<=2, d<=3, 50 trials", worst, 1e-10))
}

/// Exact rational series identity: partial sum + closed tail = 2p.
pub fn numberseq1_suite() -> IdentityReport {
    let mut failures = 0usize;
    for p in 1..=20usize {
        for m in [0usize, 3, 17, 60] {
            let (partial, tail) = bounds::series_identity_2p(p, m);
            let total = partial + tail;
            if total != num_rational::BigRational::from(num_bigint::BigInt::from(2 * p as i64)) {
                failures += 1;
            }
        }
    }
    IdentityReport::new("numberseq1", "p<=20, exact rationals", failures as f64, 0.0)
}

/// Exact rational equality of the two combinatorial sums.
pub fn beta_suite() -> IdentityReport {
    let mut failures = 0usize;
    for n in 1..=60usize {
        for p in 1..=n {
            let id = bounds::appendix_c_identities(n, p).expect("p <= N by construction");
            if id.lhs != id.rhs {
                failures += 1;
            }
        }
    }
    IdentityReport::new("beta", "1<=p<=N<=60, exact rationals", failures as f64, 0.0)
}

/// Exact rational inequality lhs <= 2(p+1)/N, plus the S_{p,N} corollary.
pub fn numberseq2_suite() -> IdentityReport {
    let mut failures = 0usize;
    for n in 1..=60usize {
        for p in 1..=n {
            let id = bounds::appendix_c_identities(n, p).expect("p <= N by construction");
            if id.lhs > id.bound || id.lhs.is_negative() {
                failures += 1;
            }
            if !bounds::s_pn_bound_holds(n, p).expect("p <= N") {
                failures += 1;
            }
        }
    }
    IdentityReport::new("numberseq2", "1<=p<=N<=60, exact rationals", failures as f64, 0.0)
}

/// Norm estimate for the tree insertion on 100 random draws; the residual is
/// the worst relative excess over the bound (negative margins clamp to 0).
pub fn mtaest_suite(streams: &SeedStreams, hbar: f64) -> Result<IdentityReport> {
    let mut rng = streams.stream("verify-mtaest");
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let d = 2 + (trial % 2);
        let p = 1 + (trial % 3);
        let model = random_model(&mut rng, d);
        let a = random_obs(&mut rng, p, d);
        let r = rand::Rng::gen_range(&mut rng, 0.0..0.5);
        let x = tree_apply(&a, r, &model, hbar)?;
        let bound = (2.0 * model.v_inf / hbar) * p as f64 * a.norm();
        worst = worst.max((x.norm() - bound) / bound.max(1e-300));
    }
    Ok(IdentityReport::new("mtaest", "p<=3, d<=3, 100 draws", worst.max(0.0), 1e-9))
}

/// Norm estimate for the loop insertion on 100 random draws.
pub fn loopnorm_suite(streams: &SeedStreams, hbar: f64) -> Result<IdentityReport> {
    let mut rng = streams.stream("verify-loopnorm");
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let d = 2 + (trial % 2);
        let p = 2 + (trial % 2);
        let n = 4 + (trial % 9);
        let model = random_model(&mut rng, d);
        let a = random_obs(&mut rng, p, d);
        let r = rand::Rng::gen_range(&mut rng, 0.0..0.5);
        let y = crate::hierarchy::loop_apply(&a, r, n, &model, hbar)?;
        let bound = (model.v_inf / hbar) * (p * (p - 1)) as f64 / n as f64 * a.norm();
        worst = worst.max((y.norm() - bound) / bound.max(1e-300));
    }
    Ok(IdentityReport::new("loopnorm", "p<=3, d<=3, 100 draws", worst.max(0.0), 1e-9))
}

/// Term bounds |A^c_{t,n}(rho)| <= (t/2tau)^n 2^{p-1} ||a|| for n <= 6 on
/// 100 random density matrices (the dense twirled cascade handles mixed
/// states exactly).
pub fn voltera_suite(streams: &SeedStreams, hbar: f64) -> Result<IdentityReport> {
    let mut rng = streams.stream("verify-voltera");
    let model = random_model(&mut rng, 2);
    let tau = bounds::tau(hbar, model.v_inf)?;
    let mut worst = 0.0f64;
    for p in 1..=2usize {
        let a = random_obs(&mut rng, p, 2);
        let t = tau * if p == 1 { 1.0 } else { 0.6 };
        let cascade = crate::hierarchy::dyson_terms_dense(&a, t, 6, &model, hbar, 100)?;
        for _ in 0..50 {
            let rho = random_density(&mut rng, 2);
            for n in 0..=6usize {
                let term = cascade.classical_term(n, &rho)?.norm();
                let bound =
                    (t / (2.0 * tau)).powi(n as i32) * f64::powi(2.0, p as i32 - 1) * a.norm();
                worst = worst.max((term - bound) / bound.max(1e-300));
            }
        }
    }
    Ok(IdentityReport::new("voltera", "p<=2, n<=6, t<=tau, 100 states", worst.max(0.0), 1e-9))
}

/// Expectation-form flow convergence:
/// |Tr((alpha_t(A) - Gamma_t^H(A_t)) rho^(x N))| <= 2^{p-2} (p/N)(t/tau) ||a||
/// at d = 2, p = 1, N in {4, 8}, t <= tau, full truncation.
pub fn flowconv_suite(streams: &SeedStreams, hbar: f64) -> Result<IdentityReport> {
    let mut rng = streams.stream("verify-flowconv");
    let model = random_model(&mut rng, 2);
    let tau = bounds::tau(hbar, model.v_inf)?;
    let p = 1usize;
    let mut worst = 0.0f64;
    for n_particles in [4usize, 8] {
        let a = random_obs(&mut rng, p, 2);
        let rho = pure_state(&mut rng, 2, hbar);
        for frac in [0.25, 0.5, 1.0] {
            let t = tau * frac;
            let qm = nbody::heisenberg_expectation(&model, &rho, &a, n_particles, t)?;
            let cascade = dyson_terms(&a, t, n_particles - p, &model, hbar, 300)?;
            let gh = cascade.gamma_h_expectation(&rho.matrix, n_particles);
            let bound = f64::powi(2.0, p as i32 - 2) * (p as f64 / n_particles as f64)
                * (t / tau)
                * a.norm();
            worst = worst.max(((qm - gh).norm() - bound) / bound);
        }
    }
    Ok(IdentityReport::new("flowconv", "d=2, p=1, N in {4,8}, t<=tau", worst.max(0.0), 1e-9))
}

/// Small-time theorem: |Tr(A(t) rho^(x N)) - U_t(A^c(rho))| against
/// 2^{p+1}((p+1)/N)(t/tau)||a|| for N in {8,16,32}, t in {tau/4, tau/2, tau},
/// 10 seeds.
pub fn tau_estimate_suite(streams: &SeedStreams, hbar: f64) -> Result<IdentityReport> {
    let p = 1usize;
    let mut worst = 0.0f64;
    for seed_idx in 0..10u64 {
        let mut rng = streams.stream(&format!("verify-tau-estimate-{seed_idx}"));
        let model = random_model(&mut rng, 2);
        let tau = bounds::tau(hbar, model.v_inf)?;
        let a = random_obs(&mut rng, p, 2);
        let rho = pure_state(&mut rng, 2, hbar);
        let opts = HartreeOpts::default();
        for n_particles in [8usize, 16, 32] {
            for frac in [0.25, 0.5, 1.0] {
                let t = tau * frac;
                let qm = nbody::heisenberg_expectation(&model, &rho, &a, n_particles, t)?;
                let rho_t = evolve_hartree(&model, &rho, t, HartreeMethod::Rk4, &opts)?;
                let classical = poisson::eval(&a, &rho_t)?;
                let params = BoundParams {
                    hbar,
                    v_inf: model.v_inf,
                    p,
                    n_particles,
                    t,
                };
                let bound = bounds::small_time_bound(&params, a.norm())?;
                worst = worst.max(((qm - classical).norm() - bound) / bound);
            }
        }
    }
    Ok(IdentityReport::new(
        "tau-estimate",
        "d=2, p=1, N in {8,16,32}, t<=tau, 10 seeds",
        worst.max(0.0),
        1e-9,
    ))
}

/// Free-theory coincidence: with V = 0 the N-body and Hartree expectations
/// agree to 1e-10 for p <= 2, N <= 16, t in {0.1, 0.5, 1.0}.
pub fn free_theory_suite(streams: &SeedStreams, hbar: f64) -> Result<IdentityReport> {
    let mut rng = streams.stream("verify-free");
    let mut worst = 0.0f64;
    for p in 1..=2usize {
        let h = random_hermitian(&mut rng, 2);
        let model = InteractionModel::free(h)?;
        let a = random_obs(&mut rng, p, 2);
        let rho = pure_state(&mut rng, 2, hbar);
        for n_particles in [2usize, 4, 8, 16] {
            for t in [0.1f64, 0.5, 1.0] {
                let qm = nbody::heisenberg_expectation(&model, &rho, &a, n_particles, t)?;
                let rho_t = evolve_hartree(
                    &model,
                    &rho,
                    t,
                    HartreeMethod::Rk4,
                    &HartreeOpts::default(),
                )?;
                let classical = poisson::eval(&a, &rho_t)?;
                worst = worst.max((qm - classical).norm());
            }
        }
    }
    Ok(IdentityReport::new(
        "free-theory",
        "d=2, p<=2, N<=16, t in {0.1,0.5,1.0}",
        worst,
        1e-10,
    ))
}

/// Conservation suite for the Hartree flow: trace, energy, spectrum,
/// hermiticity, positivity over t <= 1 for 20 seeded instances, d <= 4.
pub fn conservation_suite(streams: &SeedStreams, hbar: f64) -> Result<IdentityReport> {
    let mut worst = 0.0f64;
    for instance in 0..20u64 {
        let mut rng = streams.stream(&format!("verify-conservation-{instance}"));
        let d = 2 + (instance % 3) as usize;
        let model = random_model(&mut rng, d);
        let rho0 = DensityMatrix::new(random_density(&mut rng, d), hbar)?;
        let spec0: Vec<f64> = eig_hermitian(&rho0.matrix)?.eigenvalues;
        let e0 = hartree::energy(&model, &rho0);
        let step = HartreeOpts::default().default_step(&model, hbar);
        let mut sample = 0usize;
        let mut local = 0.0f64;
        hartree::rk4_trajectory(&model, &rho0, 1.0, step, |_t, rho| {
            sample += 1;
            if sample % 40 != 0 {
                return;
            }
            let trace_drift = (rho.trace().re - 1.0).abs() / 1e-10;
            let dm = DensityMatrix::from_trusted(rho.clone(), hbar);
            let energy_drift =
                (hartree::energy(&model, &dm) - e0).abs() / e0.abs().max(1.0) / 1e-8;
            let spec = eig_hermitian(&rho.hermitian_part())
                .expect("hermitian part decomposes")
                .eigenvalues;
            let mut spec_drift = 0.0f64;
            for (a, b) in spec.iter().zip(&spec0) {
                spec_drift = spec_drift.max((a - b).abs());
            }
            let herm = rho.hermiticity_residual() / 1e-10;
            let positivity = (-spec[0]).max(0.0) / 1e-8;
            local = local
                .max(trace_drift)
                .max(energy_drift)
                .max(spec_drift / 1e-7)
                .max(herm)
                .max(positivity);
        });
        worst = worst.max(local);
    }
    // residual is the worst drift in units of its own tolerance
    Ok(IdentityReport::new("conservation", "d<=4, t<=1, 20 instances", worst, 1.0))
}

/// Cross-solver agreement: RK4 vs Picard within the contraction window, and
/// the cascade against nested simplex quadrature for n <= 2.
pub fn cross_solver_suite(streams: &SeedStreams, hbar: f64) -> Result<IdentityReport> {
    let mut rng = streams.stream("verify-cross");
    let model = random_model(&mut rng, 2);
    let rho0 = DensityMatrix::new(random_density(&mut rng, 2), hbar)?;
    let t = (1.0 / (4.0 * model.v_inf)).min(0.2);
    let opts = HartreeOpts::default();
    let a = evolve_hartree(&model, &rho0, t, HartreeMethod::Rk4, &opts)?;
    let b = evolve_hartree(&model, &rho0, t, HartreeMethod::Picard, &opts)?;
    let solver_gap = trace_norm_hermitian(&a.matrix.sub(&b.matrix));

    // cascade terms n = 1, 2 against direct simplex quadrature
    let obs = random_obs(&mut rng, 1, 2);
    let tq = 0.1f64;
    let cascade = crate::hierarchy::dyson_terms_dense(&obs, tq, 2, &model, hbar, 300)?;
    let a_t = free_evolve_kernel(&obs, tq, &model.h, hbar)?;
    let nodes = simpson_nodes(tq, 48);
    let mut c1 = ComplexMatrix::zeros(4, 4);
    for &(s, w) in &nodes {
        c1.add_assign_scaled(tree_apply(&a_t, s, &model, hbar)?.kernel(), C64::new(w, 0.0));
    }
    let gap1 = cascade.kernel(1).sub(&c1).max_abs();
    let mut c2 = ComplexMatrix::zeros(8, 8);
    for &(t1, w1) in &simpson_nodes(tq, 24) {
        if t1 == 0.0 {
            continue;
        }
        let inner = tree_apply(&a_t, t1, &model, hbar)?;
        for &(t2, w2) in &simpson_nodes(t1, 24) {
            c2.add_assign_scaled(
                tree_apply(&inner, t2, &model, hbar)?.kernel(),
                C64::new(w1 * w2, 0.0),
            );
        }
    }
    let gap2 = cascade.kernel(2).sub(&c2).max_abs();
    let worst = solver_gap.max(gap1).max(gap2);
    Ok(IdentityReport::new("cross-solver", "rk4 vs picard; cascade vs quadrature", worst, 1e-6))
}

fn simpson_nodes(t: f64, intervals: usize) -> Vec<(f64, f64)> {
    let n = intervals + intervals % 2;
    let h = t / n as f64;
    (0..=n)
        .map(|j| {
            let w = if j == 0 || j == n {
                h / 3.0
            } else if j % 2 == 1 {
                4.0 * h / 3.0
            } else {
                2.0 * h / 3.0
            };
            (j as f64 * h, w)
        })
        .collect()
}

/// The thirteen identity suites behind `verify-identities`, in report order.
pub fn run_verify_identities(cfg: &ModelConfig, seed_override: Option<u64>) -> Result<VerifyReport> {
    // building the model exercises the validation path (e.g. a corrupted
    // pair potential is rejected here, before any suite runs)
    let streams = cfg.streams(seed_override);
    cfg.build_model(&streams)?;
    let hbar = cfg.model.hbar;
    let identities = vec![
        treeloop_suite(&streams, hbar)?,
        bracket_duality_suite(&streams, hbar)?,
        multitree_suite(&streams, hbar)?,
        jacobi_suite(&streams, hbar)?,
        rank_one_suite(&streams, hbar)?,
        beta_suite(),
        numberseq1_suite(),
        numberseq2_suite(),
        mtaest_suite(&streams, hbar)?,
        loopnorm_suite(&streams, hbar)?,
        voltera_suite(&streams, hbar)?,
        flowconv_suite(&streams, hbar)?,
        tau_estimate_suite(&streams, hbar)?,
    ];
    Ok(VerifyReport::new(seed_override.unwrap_or(cfg.run.seed), identities))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::example_config;

    #[test]
    fn fast_suites_pass_on_the_example_seed() {
        let streams = SeedStreams::new(42);
        let hbar = 1.0;
        for report in [
            treeloop_suite(&streams, hbar).unwrap(),
            bracket_duality_suite(&streams, hbar).unwrap(),
            multitree_suite(&streams, hbar).unwrap(),
            mtaest_suite(&streams, hbar).unwrap(),
            loopnorm_suite(&streams, hbar).unwrap(),
        ] {
            assert!(report.pass, "{} failed with residual {}", report.name, report.residual);
        }
    }

    #[test]
    fn exact_suites_have_zero_residual() {
        assert_eq!(beta_suite().residual, 0.0);
        assert_eq!(numberseq1_suite().residual, 0.0);
        assert_eq!(numberseq2_suite().residual, 0.0);
    }

    #[test]
    fn full_report_passes_and_serializes() {
        let cfg = example_config();
        let report = run_verify_identities(&cfg, None).unwrap();
        assert_eq!(report.identities.len(), 13);
        assert!(
            report.all_pass,
            "failing identities: {:?}",
            report
                .identities
                .iter()
                .filter(|i| !i.pass)
                .map(|i| (i.name.clone(), i.residual))
                .collect::<Vec<_>>()
        );
        let json = report.to_json();
        let back: VerifyReport = serde_json::from_str(&json).unwrap();
        assert!(back.all_pass);
    }
}
