//! Run configuration: a single TOML file fully determines a run, including
//! every random draw (the seed and the documented generator contracts pin
//! them). Explicit matrices are given as row-major interleaved (re, im)
//! pairs.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::hartree::{DensityMatrix, InteractionModel};
use crate::matrix::{ComplexMatrix, DEFAULT_ELEMENT_CAP};
use crate::poisson::PObservable;
use crate::rng::{self, SeedStreams};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model: ModelSection,
    pub run: RunSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub truncation: TruncationSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSection {
    pub d: usize,
    pub hbar: f64,
    pub h: OperatorSpec,
    pub v: PairSpec,
    pub rho0: StateSpec,
    pub observable: ObservableSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OperatorSpec {
    RandomHermitian,
    Explicit { entries: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PairSpec {
    Zero,
    DiagonalPair { w: Vec<Vec<f64>> },
    RandomSwapSymmetric,
    Explicit { entries: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StateSpec {
    Pure { psi: Vec<f64> },
    RandomPure,
    RandomPsd,
    Explicit { entries: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservableSpec {
    pub p: usize,
    #[serde(flatten)]
    pub kernel: OperatorSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSection {
    pub n_list: Vec<usize>,
    pub t_list: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntegratorSection {
    /// 0 means the policy default min(1e-3, tau/200).
    #[serde(default)]
    pub rk4_step: f64,
    #[serde(default = "default_picard_points")]
    pub picard_points: usize,
    #[serde(default = "default_quad_tol")]
    pub quadrature_tol: f64,
    #[serde(default = "default_cascade_steps")]
    pub cascade_steps: usize,
}

fn default_picard_points() -> usize {
    129
}

fn default_quad_tol() -> f64 {
    1e-6
}

fn default_cascade_steps() -> usize {
    200
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self {
            rk4_step: 0.0,
            picard_points: default_picard_points(),
            quadrature_tol: default_quad_tol(),
            cascade_steps: default_cascade_steps(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruncationSection {
    #[serde(default)]
    pub depth: DepthSpec,
    #[serde(default = "default_element_cap")]
    pub element_cap: usize,
}

fn default_element_cap() -> usize {
    DEFAULT_ELEMENT_CAP
}

impl Default for TruncationSection {
    fn default() -> Self {
        Self { depth: DepthSpec::default(), element_cap: default_element_cap() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DepthSpec {
    Fixed(usize),
    Named(String),
}

impl Default for DepthSpec {
    fn default() -> Self {
        DepthSpec::Named("auto".into())
    }
}

impl ModelConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ModelConfig =
            toml::from_str(text).map_err(|e| CoreError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.model.d;
        if d == 0 {
            return Err(CoreError::Config("d must be positive".into()));
        }
        if self.model.hbar <= 0.0 {
            return Err(CoreError::Config("hbar must be positive".into()));
        }
        if self.run.n_list.is_empty() || self.run.t_list.is_empty() {
            return Err(CoreError::Config("n_list and t_list must be nonempty".into()));
        }
        if self.run.t_list.iter().any(|&t| t < 0.0 || !t.is_finite()) {
            return Err(CoreError::Config("times must be finite and nonnegative".into()));
        }
        let p = self.model.observable.p;
        if p == 0 {
            return Err(CoreError::Config("observable arity must be at least 1".into()));
        }
        if let Some(&n_min) = self.run.n_list.iter().min() {
            if p > n_min {
                return Err(CoreError::Config(format!(
                    "observable arity {p} exceeds smallest particle count {n_min}"
                )));
            }
        }
        if let DepthSpec::Named(name) = &self.truncation.depth {
            if name != "auto" {
                return Err(CoreError::Config(format!(
                    "unknown truncation depth '{name}' (expected an integer or \"auto\")"
                )));
            }
        }
        Ok(())
    }

    pub fn streams(&self, seed_override: Option<u64>) -> SeedStreams {
        SeedStreams::new(seed_override.unwrap_or(self.run.seed))
    }

    pub fn build_model(&self, streams: &SeedStreams) -> Result<InteractionModel> {
        let d = self.model.d;
        let h = match &self.model.h {
            OperatorSpec::RandomHermitian => rng::random_hermitian(&mut streams.stream("h"), d),
            OperatorSpec::Explicit { entries } => {
                let m = ComplexMatrix::from_interleaved(d, d, entries)?;
                m.require_hermitian(1e-12)?;
                m
            }
        };
        let v = match &self.model.v {
            PairSpec::Zero => ComplexMatrix::zeros(d * d, d * d),
            PairSpec::DiagonalPair { w } => {
                return InteractionModel::diagonal_pair(h, w);
            }
            PairSpec::RandomSwapSymmetric => {
                rng::random_swap_symmetric(&mut streams.stream("v"), d)
            }
            PairSpec::Explicit { entries } => {
                ComplexMatrix::from_interleaved(d * d, d * d, entries)?
            }
        };
        InteractionModel::new(h, v)
    }

    pub fn build_rho0(&self, streams: &SeedStreams) -> Result<DensityMatrix> {
        let d = self.model.d;
        let hbar = self.model.hbar;
        let matrix = match &self.model.rho0 {
            StateSpec::Pure { psi } => {
                if psi.len() != 2 * d {
                    return Err(CoreError::Config(format!(
                        "pure state needs {} interleaved floats, got {}",
                        2 * d,
                        psi.len()
                    )));
                }
                let mut v: Vec<C64> =
                    psi.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect();
                let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Err(CoreError::Config("pure state vector is zero".into()));
                }
                for z in v.iter_mut() {
                    *z /= norm;
                }
                rng::projector(&v)
            }
            StateSpec::RandomPure => {
                rng::projector(&rng::random_pure_vector(&mut streams.stream("rho0"), d))
            }
            StateSpec::RandomPsd => rng::random_density(&mut streams.stream("rho0"), d),
            StateSpec::Explicit { entries } => ComplexMatrix::from_interleaved(d, d, entries)?,
        };
        DensityMatrix::new(matrix, hbar)
    }

    pub fn build_observable(&self, streams: &SeedStreams) -> Result<PObservable> {
        let d = self.model.d;
        let p = self.model.observable.p;
        let dp = d.pow(p as u32);
        let kernel = match &self.model.observable.kernel {
            OperatorSpec::RandomHermitian => {
                rng::random_hermitian(&mut streams.stream("observable"), dp)
            }
            OperatorSpec::Explicit { entries } => {
                ComplexMatrix::from_interleaved(dp, dp, entries)?
            }
        };
        PObservable::new(p, d, kernel)
    }

    pub fn rk4_step_target(&self) -> Option<f64> {
        if self.integrator.rk4_step > 0.0 {
            Some(self.integrator.rk4_step)
        } else {
            None
        }
    }

    /// Truncation depth for a Dyson cascade at time t: fixed, or the tail
    /// policy (t/2tau)^{L+1} 2^{p-1} <= 1e-8 under the arity cap.
    pub fn cascade_depth(&self, t: f64, tau: f64) -> Result<usize> {
        match &self.truncation.depth {
            DepthSpec::Fixed(l) => Ok(*l),
            DepthSpec::Named(_) => crate::hierarchy::auto_depth(
                self.model.observable.p,
                self.model.d,
                t,
                tau,
                1e-8,
                self.truncation.element_cap,
            ),
        }
    }
}

/// The configuration shipped with the README: the mean-field convergence
/// sweep at d = 2, ||v|| = 1, hbar = 1 with a pure seeded initial state.
pub fn example_config() -> ModelConfig {
    ModelConfig {
        model: ModelSection {
            d: 2,
            hbar: 1.0,
            h: OperatorSpec::RandomHermitian,
            v: PairSpec::DiagonalPair { w: vec![vec![0.0, 1.0], vec![1.0, 0.0]] },
            rho0: StateSpec::RandomPure,
            observable: ObservableSpec { p: 1, kernel: OperatorSpec::RandomHermitian },
        },
        run: RunSection {
            n_list: vec![4, 8, 16, 32, 64],
            t_list: vec![0.0625, 0.25],
            seed: 42,
        },
        integrator: IntegratorSection::default(),
        truncation: TruncationSection::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_round_trips_through_toml() {
        let cfg = example_config();
        let text = cfg.to_toml();
        let back = ModelConfig::from_toml(&text).unwrap();
        assert_eq!(back.model.d, 2);
        assert_eq!(back.run.n_list, vec![4, 8, 16, 32, 64]);
        assert!(matches!(back.model.v, PairSpec::DiagonalPair { .. }));
        assert!(matches!(back.truncation.depth, DepthSpec::Named(ref s) if s == "auto"));
    }

    #[test]
    fn builds_are_seed_deterministic() {
        let cfg = example_config();
        let s1 = cfg.streams(None);
        let s2 = cfg.streams(None);
        let m1 = cfg.build_model(&s1).unwrap();
        let m2 = cfg.build_model(&s2).unwrap();
        assert_eq!(m1.h, m2.h);
        let r1 = cfg.build_rho0(&s1).unwrap();
        let r2 = cfg.build_rho0(&s2).unwrap();
        assert_eq!(r1.matrix, r2.matrix);
        // a different seed changes the draws
        let s3 = cfg.streams(Some(7));
        let m3 = cfg.build_model(&s3).unwrap();
        assert!(m1.h.sub(&m3.h).max_abs() > 1e-9);
    }

    #[test]
    fn parses_explicit_sections() {
        let text = r#"
[model]
d = 2
hbar = 1.0

[model.h]
kind = "explicit"
entries = [0.0, 0.0, 0.5, 0.0, 0.5, 0.0, 1.0, 0.0]

[model.v]
kind = "zero"

[model.rho0]
kind = "pure"
psi = [1.0, 0.0, 0.0, 0.0]

[model.observable]
p = 1
kind = "random-hermitian"

[run]
n_list = [2, 4]
t_list = [0.1]
seed = 1
"#;
        let cfg = ModelConfig::from_toml(text).unwrap();
        let streams = cfg.streams(None);
        let model = cfg.build_model(&streams).unwrap();
        assert_eq!(model.v_inf, 0.0);
        let rho = cfg.build_rho0(&streams).unwrap();
        assert!((rho.trace() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_inconsistent_configs() {
        let mut cfg = example_config();
        cfg.model.observable.p = 9;
        assert!(matches!(cfg.validate(), Err(CoreError::Config(_))));
        let mut cfg = example_config();
        cfg.run.t_list = vec![];
        assert!(matches!(cfg.validate(), Err(CoreError::Config(_))));
        let mut cfg = example_config();
        cfg.truncation.depth = DepthSpec::Named("deep".into());
        assert!(matches!(cfg.validate(), Err(CoreError::Config(_))));
    }

    #[test]
    fn corrupted_pair_potential_is_rejected() {
        // a Hermitian but non-swap-symmetric explicit V
        let mut entries = vec![0.0f64; 2 * 16];
        // diag(1, 2, 3, 4) is not swap symmetric: w(1,2) != w(2,1)
        for (i, val) in [1.0, 2.0, 3.0, 4.0].iter().enumerate() {
            entries[2 * (i * 4 + i)] = *val;
        }
        let mut cfg = example_config();
        cfg.model.v = PairSpec::Explicit { entries };
        let streams = cfg.streams(None);
        assert!(matches!(
            cfg.build_model(&streams),
            Err(CoreError::NotSwapSymmetric(_))
        ));
    }
}
