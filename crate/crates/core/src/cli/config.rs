//! Experiment configuration: a single JSON document with defaults for every
//! field. The resolved configuration is written next to every artifact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{CoefficientField, Domain, Exponents, Mesh, ProblemSpec, DEFAULT_DELTA_REG};
use crate::rayleigh::ThresholdOptions;
use crate::solver::{MountainPassOptions, SolverOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    Constant {
        value: f64,
    },
    Affine {
        c0: f64,
        cx: f64,
        #[serde(default)]
        cy: f64,
        lower: f64,
        upper: f64,
    },
    SinusoidalBump {
        base: f64,
        amplitude: f64,
        lower: f64,
        upper: f64,
    },
}

impl CoefficientSpec {
    pub fn build(&self, domain: &Domain) -> Result<CoefficientField> {
        match *self {
            CoefficientSpec::Constant { value } => CoefficientField::constant(value),
            CoefficientSpec::Affine {
                c0,
                cx,
                cy,
                lower,
                upper,
            } => CoefficientField::affine(c0, cx, cy, lower, upper),
            CoefficientSpec::SinusoidalBump {
                base,
                amplitude,
                lower,
                upper,
            } => CoefficientField::sinusoidal_bump(base, amplitude, domain, lower, upper),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol_rel: f64,
    pub max_iters: usize,
    pub restarts: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            tol_rel: d.tol_rel,
            max_iters: d.max_iters,
            restarts: d.restarts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MountainPassConfig {
    pub tol_rel: f64,
    pub path_points: usize,
    pub max_iters: usize,
    pub perturbation: f64,
    /// Random fields sampled for the small-sphere barrier check.
    pub barrier_samples: usize,
}

impl Default for MountainPassConfig {
    fn default() -> Self {
        let d = MountainPassOptions::default();
        Self {
            tol_rel: d.tol_rel,
            path_points: d.path_points,
            max_iters: d.max_iters,
            perturbation: d.perturbation,
            barrier_samples: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    pub restarts: usize,
    pub max_iters: usize,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        let d = ThresholdOptions::default();
        Self {
            restarts: d.restarts,
            max_iters: d.max_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsymptoticsConfig {
    pub eta: f64,
    pub r_list: Vec<f64>,
}

impl Default for AsymptoticsConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            r_list: vec![1.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayerConfig {
    /// Profile range; defaults to `1.25 / sqrt(eps)`.
    pub xi_max: Option<f64>,
    pub points: usize,
}

impl Default for LayerConfig {
    fn default() -> Self {
        Self {
            xi_max: None,
            points: 4001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub exponents: Exponents,
    pub epsilon: f64,
    pub eps_list: Vec<f64>,
    pub domain: Domain,
    pub resolution: Vec<usize>,
    pub a: CoefficientSpec,
    pub b: CoefficientSpec,
    pub delta_reg: f64,
    pub seed: u64,
    pub solver: SolverConfig,
    pub mountain_pass: MountainPassConfig,
    pub thresholds: ThresholdConfig,
    pub asymptotics: AsymptoticsConfig,
    pub layer: LayerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            exponents: Exponents {
                p: 2.0,
                q: 3.0,
                gamma: 4.0,
            },
            epsilon: 1e-3,
            eps_list: vec![1e-1, 1e-2, 1e-3, 1e-4],
            domain: Domain::unit_interval(),
            resolution: vec![2001],
            a: CoefficientSpec::Constant { value: 1.0 },
            b: CoefficientSpec::Constant { value: 1.0 },
            delta_reg: DEFAULT_DELTA_REG,
            seed: 0,
            solver: SolverConfig::default(),
            mountain_pass: MountainPassConfig::default(),
            thresholds: ThresholdConfig::default(),
            asymptotics: AsymptoticsConfig::default(),
            layer: LayerConfig::default(),
        }
    }
}

/// 1-based line of the first occurrence of `"key"` in the source, if any.
fn line_of_key(source: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    source
        .lines()
        .position(|l| l.contains(&needle))
        .map(|i| i + 1)
}

fn at_key(source: &str, key: &str, msg: impl std::fmt::Display) -> Error {
    match line_of_key(source, key) {
        Some(line) => Error::Config(format!("line {line} (\"{key}\"): {msg}")),
        None => Error::Config(format!("\"{key}\" (default value): {msg}")),
    }
}

impl ExperimentConfig {
    /// Parses and validates; errors carry the offending line.
    pub fn parse(source: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(source)
            .map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        cfg.validate(source)?;
        Ok(cfg)
    }

    /// Checks every precondition the subcommands rely on.
    pub fn validate(&self, source: &str) -> Result<()> {
        self.exponents
            .validate()
            .map_err(|e| at_key(source, "exponents", e))?;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(at_key(
                source,
                "epsilon",
                format!("must be positive, got {}", self.epsilon),
            ));
        }
        if self.eps_list.is_empty() {
            return Err(at_key(source, "eps_list", "must not be empty"));
        }
        for w in self.eps_list.windows(2) {
            if !(w[1] < w[0]) {
                return Err(at_key(source, "eps_list", "must be strictly decreasing"));
            }
        }
        if self.eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(at_key(source, "eps_list", "entries must be positive"));
        }
        if !(self.delta_reg >= 0.0) {
            return Err(at_key(source, "delta_reg", "must be nonnegative"));
        }
        if !(self.solver.tol_rel > 0.0) {
            return Err(at_key(source, "solver", "tol_rel must be positive"));
        }
        if !(self.mountain_pass.tol_rel > 0.0) || self.mountain_pass.path_points < 3 {
            return Err(at_key(
                source,
                "mountain_pass",
                "needs tol_rel > 0 and path_points >= 3",
            ));
        }
        if self.thresholds.restarts == 0 {
            return Err(at_key(source, "thresholds", "restarts must be at least 1"));
        }
        if !(self.asymptotics.eta > 0.0) {
            return Err(at_key(source, "asymptotics", "eta must be positive"));
        }
        if let Some(&r) = self
            .asymptotics
            .r_list
            .iter()
            .find(|&&r| !(r >= 1.0 && r < self.exponents.gamma))
        {
            return Err(at_key(
                source,
                "r_list",
                format!(
                    "r = {r} outside [1, gamma): strong convergence is only measured for r < gamma"
                ),
            ));
        }
        if let Some(x) = self.layer.xi_max {
            if !(x > 0.0) {
                return Err(at_key(source, "xi_max", "must be positive"));
            }
        }
        if self.layer.points < 2 {
            return Err(at_key(source, "layer", "points must be at least 2"));
        }
        let mesh = self.mesh().map_err(|e| at_key(source, "resolution", e))?;
        self.a
            .build(&self.domain)
            .map_err(|e| at_key(source, "a", e))?;
        let b = self
            .b
            .build(&self.domain)
            .map_err(|e| at_key(source, "b", e))?;
        if !(b.lower() > 0.0) {
            return Err(at_key(source, "b", "needs a positive lower bound sigma_b"));
        }
        self.spec_on(mesh, self.epsilon).map_err(|e| match e {
            Error::Config(m) if m.contains("coefficient") => at_key(source, "a", m),
            other => at_key(source, "exponents", other),
        })?;
        Ok(())
    }

    pub fn mesh(&self) -> Result<std::sync::Arc<Mesh>> {
        Mesh::build(self.domain, &self.resolution)
    }

    fn spec_on(&self, mesh: std::sync::Arc<Mesh>, eps: f64) -> Result<ProblemSpec> {
        let a = self.a.build(&self.domain)?;
        let b = self.b.build(&self.domain)?;
        Ok(ProblemSpec::new(self.exponents, eps, a, b, mesh)?.with_delta_reg(self.delta_reg))
    }

    pub fn spec(&self) -> Result<ProblemSpec> {
        self.spec_on(self.mesh()?, self.epsilon)
    }

    /// Requires `sigma_a > 0`, needed by every asymptotic quantity.
    pub fn require_sigma_a(&self, source: &str) -> Result<()> {
        let a = self.a.build(&self.domain)?;
        if !(a.lower() > 0.0) {
            return Err(at_key(
                source,
                "a",
                "asymptotics need a positive lower bound sigma_a",
            ));
        }
        Ok(())
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol_rel: self.solver.tol_rel,
            max_iters: self.solver.max_iters,
            seed: self.seed,
            restarts: self.solver.restarts,
        }
    }

    pub fn mountain_pass_options(&self) -> MountainPassOptions {
        MountainPassOptions {
            tol_rel: self.mountain_pass.tol_rel,
            path_points: self.mountain_pass.path_points,
            max_iters: self.mountain_pass.max_iters,
            seed: self.seed,
            perturbation: self.mountain_pass.perturbation,
        }
    }

    pub fn threshold_options(&self) -> ThresholdOptions {
        ThresholdOptions {
            restarts: self.thresholds.restarts,
            max_iters: self.thresholds.max_iters,
            seed: self.seed,
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = ExperimentConfig::parse("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn syntax_error_has_line() {
        let err = ExperimentConfig::parse("{\n  \"epsilon\": 0.1,\n  \"seed\": x\n}").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn semantic_error_has_line() {
        let src = "{\n  \"epsilon\": 0.1,\n  \"exponents\": {\"p\": 3, \"q\": 2, \"gamma\": 4}\n}";
        let err = ExperimentConfig::parse(src).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("line 3"), "{err}");
        let src = "{\n  \"b\": {\"kind\": \"constant\", \"value\": 0.0}\n}";
        assert!(ExperimentConfig::parse(src)
            .unwrap_err()
            .to_string()
            .contains("line 2"));
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(ExperimentConfig::parse("{\"epsilom\": 0.1}").is_err());
    }
}
