//! Closed-form quantitative objects: the coupling time tau, the decay
//! exponent gamma(t), the coarse and fine convergence bounds, the small-time
//! bound, the induction constants, and the exact combinatorial identities.
//!
//! Everything combinatorial is evaluated in exact rational arithmetic with
//! big integers; floating point appears only at the final comparison
//! boundary. The identities are exact and rounding would reduce their tests
//! to tautologies.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{CoreError, Result};

/// tau = hbar / (8 ||v||_inf); the free theory (||v|| = 0) has no finite tau.
pub fn tau(hbar: f64, v_inf: f64) -> Result<f64> {
    assert!(hbar > 0.0);
    if v_inf == 0.0 {
        return Err(CoreError::FreeTheory);
    }
    Ok(hbar / (8.0 * v_inf))
}

/// Left-continuous integer part of t/tau: the induction step count. On
/// (k-1) tau < t <= k tau this equals k-1; exact multiples take the value
/// from the left, matching the step count that reaches them.
pub fn time_steps(t: f64, tau: f64) -> usize {
    assert!(t >= 0.0 && tau > 0.0);
    if t == 0.0 {
        return 0;
    }
    // guard against 2.0000000000000004-style roundoff at exact multiples
    let ratio = t / tau;
    let k = (ratio - 1e-12 * ratio.max(1.0)).ceil() - 1.0;
    k.max(0.0) as usize
}

/// gamma(t) = 1 / (4 e ([t/tau] + 1)!).
pub fn gamma(t: f64, tau: f64) -> f64 {
    let k = time_steps(t, tau) + 1;
    let mut fact = 1.0f64;
    for j in 2..=k {
        fact *= j as f64;
    }
    1.0 / (4.0 * std::f64::consts::E * fact)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundForm {
    /// 2^{([t/tau]+2) p} N^{-gamma(t)} ||a||
    Coarse,
    /// 2^{([t/tau]+1) p} (p N^{-1/2} + N^{-gamma(t)}) ||a||
    Fine,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundParams {
    pub hbar: f64,
    pub v_inf: f64,
    pub p: usize,
    pub n_particles: usize,
    pub t: f64,
}

/// The theorem's convergence bound in either form.
pub fn theorem_bound(params: &BoundParams, a_norm: f64, form: BoundForm) -> Result<f64> {
    let tau = tau(params.hbar, params.v_inf)?;
    assert!(params.n_particles >= 1);
    let steps = time_steps(params.t, tau) as f64;
    let g = gamma(params.t, tau);
    let n = params.n_particles as f64;
    let p = params.p as f64;
    let value = match form {
        BoundForm::Coarse => f64::powf(2.0, (steps + 2.0) * p) * n.powf(-g),
        BoundForm::Fine => {
            f64::powf(2.0, (steps + 1.0) * p) * (p * n.powf(-0.5) + n.powf(-g))
        }
    };
    Ok(value * a_norm)
}

/// Small-time bound 2^{p+1} ((p+1)/N) (t/tau) ||a||, valid for t <= tau.
pub fn small_time_bound(params: &BoundParams, a_norm: f64) -> Result<f64> {
    let tau = tau(params.hbar, params.v_inf)?;
    if params.t > tau * (1.0 + 1e-12) {
        return Err(CoreError::TOutOfRange { t: params.t, tau });
    }
    let p = params.p as f64;
    Ok(f64::powf(2.0, p + 1.0) * (p + 1.0) / params.n_particles as f64 * (params.t / tau)
        * a_norm)
}

/// Induction constants: L_0 = log2(N)/(4e), L_r = L_0/(r-1)!, and
/// R_{p,k} = 2^{kp} (2^{sum_{r<=k} r L_r} p/N + 2^{-L_k}).
/// The L values stay real-valued; only the closed-form bound is exposed.
pub fn induction_constants(n_particles: usize, p: usize, k: usize) -> (Vec<f64>, f64) {
    assert!(k >= 1 && n_particles >= 2);
    let l0 = (n_particles as f64).log2() / (4.0 * std::f64::consts::E);
    let mut ls = Vec::with_capacity(k);
    let mut fact = 1.0f64;
    for r in 1..=k {
        if r >= 2 {
            fact *= (r - 1) as f64;
        }
        ls.push(l0 / fact);
    }
    let weighted: f64 = ls.iter().enumerate().map(|(i, l)| (i + 1) as f64 * l).sum();
    let lk = ls[k - 1];
    let n = n_particles as f64;
    let r_pk = f64::powf(2.0, (k * p) as f64)
        * (f64::powf(2.0, weighted) * p as f64 / n + f64::powf(2.0, -lk));
    (ls, r_pk)
}

fn big_rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn pow2_inv(n: usize) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::from(2u64).pow(n as u32))
}

/// Exact partial sum and closed-form tail of sum_{n>=0} 2^{-n} (p+n-1) = 2p:
/// returns (partial up to M, tail 2^{-M}(p+M+1)); their sum is exactly 2p.
pub fn series_identity_2p(p: usize, m: usize) -> (BigRational, BigRational) {
    let mut partial = BigRational::zero();
    for n in 0..=m {
        let term = BigRational::from(BigInt::from((p + n) as i64 - 1)) * pow2_inv(n);
        partial += term;
    }
    let tail = BigRational::from(BigInt::from((p + m + 1) as i64)) * pow2_inv(m);
    (partial, tail)
}

/// Falling factorial ratio (N-p)! / ((N-p-n)! N^n) as an exact rational.
fn falling_coeff(n_particles: usize, p: usize, n: usize) -> BigRational {
    let mut acc = BigRational::one();
    for k in 0..n {
        acc *= big_rational((n_particles - p - k) as i64, n_particles as i64);
    }
    acc
}

/// Exact evaluation of the two sides of the combinatorial identity
/// 1 - sum_{n=1}^{N-p} c_n 2^{-n} = sum_{n=0}^{N-p} c_n ((p+n)/N) 2^{-n}
/// with c_n = (N-p)!/((N-p-n)! N^n), plus the bound 2(p+1)/N.
pub struct AppendixIdentity {
    pub lhs: BigRational,
    pub rhs: BigRational,
    pub bound: BigRational,
}

pub fn appendix_c_identities(n_particles: usize, p: usize) -> Result<AppendixIdentity> {
    if p > n_particles || p == 0 {
        return Err(CoreError::BadArity { p, n: n_particles });
    }
    let mut lhs = BigRational::one();
    for n in 1..=(n_particles - p) {
        lhs -= falling_coeff(n_particles, p, n) * pow2_inv(n);
    }
    let mut rhs = BigRational::zero();
    for n in 0..=(n_particles - p) {
        rhs += falling_coeff(n_particles, p, n)
            * big_rational((p + n) as i64, n_particles as i64)
            * pow2_inv(n);
    }
    let bound = big_rational(2 * (p + 1) as i64, n_particles as i64);
    Ok(AppendixIdentity { lhs, rhs, bound })
}

/// S_{p,N} = (1 - sum_{n=1}^{N-p} c_n 2^{-n}) 2^{p-1}, exactly rational.
pub fn s_pn(n_particles: usize, p: usize) -> Result<BigRational> {
    let identity = appendix_c_identities(n_particles, p)?;
    Ok(identity.lhs * BigRational::from(BigInt::from(2u64).pow(p as u32 - 1)))
}

/// True when S_{p,N} <= 2^p (p+1)/N holds exactly.
pub fn s_pn_bound_holds(n_particles: usize, p: usize) -> Result<bool> {
    let s = s_pn(n_particles, p)?;
    let bound = BigRational::new(
        BigInt::from(2u64).pow(p as u32) * BigInt::from((p + 1) as u64),
        BigInt::from(n_particles as u64),
    );
    Ok(s <= bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Signed;

    #[test]
    fn tau_examples_and_scaling() {
        assert!((tau(1.0, 1.0).unwrap() - 0.125).abs() < 1e-15);
        assert!((tau(2.0, 0.5).unwrap() - 0.5).abs() < 1e-15);
        let base = tau(1.3, 0.7).unwrap();
        let scaled = tau(2.6, 1.4).unwrap();
        assert!((base - scaled).abs() < 1e-15);
        assert!(matches!(tau(1.0, 0.0), Err(CoreError::FreeTheory)));
    }

    #[test]
    fn gamma_plateaus_and_monotonicity() {
        let tau = 0.125;
        let quarter = 1.0 / (4.0 * std::f64::consts::E);
        assert!((gamma(0.0, tau) - quarter).abs() < 1e-15);
        assert!((gamma(0.06, tau) - quarter).abs() < 1e-15);
        // interior of [tau, 2 tau): factorial of 2
        assert!((gamma(0.1875, tau) - quarter / 2.0).abs() < 1e-15);
        // exact multiples take the left-continuous value
        assert!((gamma(tau, tau) - quarter).abs() < 1e-15);
        assert!((gamma(2.0 * tau, tau) - quarter / 2.0).abs() < 1e-15);
        let mut last = f64::INFINITY;
        for j in 0..40 {
            let g = gamma(0.05 * j as f64, tau);
            assert!(g <= last + 1e-15);
            last = g;
        }
    }

    #[test]
    fn time_steps_left_continuity_and_roundoff_guard() {
        let tau = 0.125;
        assert_eq!(time_steps(0.0, tau), 0);
        assert_eq!(time_steps(0.06, tau), 0);
        assert_eq!(time_steps(0.125, tau), 0);
        assert_eq!(time_steps(0.1875, tau), 1);
        assert_eq!(time_steps(0.25, tau), 1);
        assert_eq!(time_steps(0.2500000000000002, tau), 1);
        assert_eq!(time_steps(0.26, tau), 2);
    }

    #[test]
    fn theorem_bound_paper_values() {
        let params = BoundParams { hbar: 1.0, v_inf: 1.0, p: 1, n_particles: 16, t: 0.0 };
        let coarse = theorem_bound(&params, 1.0, BoundForm::Coarse).unwrap();
        assert!((coarse - 4.0 * 16f64.powf(-1.0 / (4.0 * std::f64::consts::E))).abs() < 1e-12);
        assert!((coarse - 3.0998).abs() < 1e-3);
        let fine = theorem_bound(&params, 1.0, BoundForm::Fine).unwrap();
        assert!((fine - 2.0 * (0.25 + 16f64.powf(-1.0 / (4.0 * std::f64::consts::E)))).abs()
            < 1e-12);
        assert!((fine - 2.0499).abs() < 1e-3);
    }

    #[test]
    fn bounds_decay_in_n_and_fine_below_coarse() {
        let mut last = f64::INFINITY;
        for n in [8usize, 16, 32, 64, 128, 1024] {
            let params = BoundParams { hbar: 1.0, v_inf: 1.0, p: 2, n_particles: n, t: 0.3 };
            let coarse = theorem_bound(&params, 1.0, BoundForm::Coarse).unwrap();
            let fine = theorem_bound(&params, 1.0, BoundForm::Fine).unwrap();
            assert!(fine <= coarse, "fine {fine} above coarse {coarse}");
            assert!(coarse < last);
            last = coarse;
        }
        // grid check of fine <= coarse
        for p in 1..=3usize {
            for n in [2usize, 4, 32, 512] {
                for t in [0.0, 0.1, 0.25, 0.7, 2.0] {
                    let params = BoundParams { hbar: 1.0, v_inf: 1.0, p, n_particles: n, t };
                    let coarse = theorem_bound(&params, 1.3, BoundForm::Coarse).unwrap();
                    let fine = theorem_bound(&params, 1.3, BoundForm::Fine).unwrap();
                    assert!(fine <= coarse * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn small_time_examples_and_range_gate() {
        let p1 = BoundParams { hbar: 1.0, v_inf: 1.0, p: 1, n_particles: 8, t: 0.125 };
        assert!((small_time_bound(&p1, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let p2 = BoundParams { hbar: 1.0, v_inf: 1.0, p: 2, n_particles: 64, t: 0.0625 };
        assert!((small_time_bound(&p2, 1.0).unwrap() - 0.1875).abs() < 1e-12);
        let zero = BoundParams { t: 0.0, ..p1 };
        assert_eq!(small_time_bound(&zero, 1.0).unwrap(), 0.0);
        let out = BoundParams { t: 0.2, ..p1 };
        assert!(matches!(small_time_bound(&out, 1.0), Err(CoreError::TOutOfRange { .. })));
    }

    #[test]
    fn induction_constants_structure() {
        let n = 64;
        let (ls, r1) = induction_constants(n, 1, 1);
        let l0 = (n as f64).log2() / (4.0 * std::f64::consts::E);
        assert!((ls[0] - l0).abs() < 1e-14);
        let expect =
            2.0f64 * (f64::powf(2.0, l0) / n as f64 + f64::powf(2.0, -l0));
        assert!((r1 - expect).abs() < 1e-12);
        // L_k = k L_{k+1}
        let (ls, _) = induction_constants(n, 1, 6);
        for k in 1..6 {
            assert!((ls[k - 1] - k as f64 * ls[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_l_sum_below_closed_bound() {
        for n in [4usize, 64, 4096] {
            let l0 = (n as f64).log2() / (4.0 * std::f64::consts::E);
            for k in 1..=30usize {
                let (ls, _) = induction_constants(n, 1, k);
                let sum: f64 = ls.iter().enumerate().map(|(i, l)| (i + 1) as f64 * l).sum();
                assert!(sum <= 2.0 * std::f64::consts::E * l0 + 1e-12);
            }
        }
    }

    #[test]
    fn induction_constants_recover_the_fine_bound() {
        // at k - 1 = [t/tau], R_{p,k} is dominated by the fine form: the
        // prefactors agree and each term is bounded by its counterpart
        for (n, p, t) in [(64usize, 1usize, 0.3f64), (256, 2, 0.5), (1024, 1, 0.11)] {
            let params = BoundParams { hbar: 1.0, v_inf: 1.0, p, n_particles: n, t };
            let tau = tau(1.0, 1.0).unwrap();
            let k = time_steps(t, tau) + 1;
            let (ls, r_pk) = induction_constants(n, p, k);
            let fine = theorem_bound(&params, 1.0, BoundForm::Fine).unwrap();
            assert!(r_pk <= fine * (1.0 + 1e-9), "R_{{p,k}} = {r_pk} above fine = {fine}");
            // term-by-term: 2^{sum r L_r} <= sqrt(N) and 2^{-L_k} <= N^{-gamma}
            let weighted: f64 = ls.iter().enumerate().map(|(i, l)| (i + 1) as f64 * l).sum();
            assert!(f64::powf(2.0, weighted) <= (n as f64).sqrt() * (1.0 + 1e-12));
            let g = gamma(t, tau);
            assert!(f64::powf(2.0, -ls[k - 1]) <= (n as f64).powf(-g) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn series_identity_exact() {
        for p in 1..=20usize {
            for m in [0usize, 1, 7, 60] {
                let (partial, tail) = series_identity_2p(p, m);
                let total = partial + tail;
                assert_eq!(total, BigRational::from(BigInt::from(2 * p as i64)));
            }
        }
    }

    #[test]
    fn appendix_identity_exact_equality_and_bound() {
        for n in 1..=60usize {
            for p in 1..=n {
                let identity = appendix_c_identities(n, p).unwrap();
                assert_eq!(identity.lhs, identity.rhs, "identity fails at N={n} p={p}");
                assert!(identity.lhs <= identity.bound, "bound fails at N={n} p={p}");
                assert!(!identity.lhs.is_negative());
            }
        }
    }

    #[test]
    fn appendix_identity_degenerate_case() {
        // p = N: empty sums leave lhs = 1 and rhs = p/N = 1
        let identity = appendix_c_identities(5, 5).unwrap();
        assert_eq!(identity.lhs, BigRational::one());
        assert_eq!(identity.rhs, BigRational::one());
    }

    #[test]
    fn s_pn_bound_exact() {
        for n in 1..=60usize {
            for p in 1..=n {
                assert!(s_pn_bound_holds(n, p).unwrap(), "S bound fails at N={n} p={p}");
            }
        }
    }

    #[test]
    fn appendix_identity_rejects_bad_arity() {
        assert!(matches!(
            appendix_c_identities(3, 4),
            Err(CoreError::BadArity { .. })
        ));
    }
}
