//! Run configuration: sectioned TOML, every section optional, unknown keys
//! rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::adaptivity::{AdaptConfig, SplitRule};
use crate::dual_solver::{Enrichment, GoalFunctional};
use crate::error::{Error, Result};
use crate::estimators::{GlobalParams, KernelMode, LocalParams, Representation};
use crate::kernel::{KernelSpec, PronyTerm};
use crate::problems::{by_name, scenario_bar, ProblemSpec, TimeSeries};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub kernel: Option<KernelSection>,
    pub mesh: MeshSection,
    pub time: TimeSection,
    pub goal: GoalSection,
    pub estimator: EstimatorSection,
    pub adapt: AdaptSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    /// `mms_linear`, `mms_smooth`, `mms_smooth_2d` or `scenario_bar`.
    pub name: String,
    /// Traction amplitude of `scenario_bar`.
    pub amplitude: f64,
    /// CSV time series `t,g` replacing the `scenario_bar` pulse.
    pub profile: Option<PathBuf>,
}

impl Default for ProblemSection {
    fn default() -> Self {
        ProblemSection { name: "mms_smooth".into(), amplitude: 1.0, profile: None }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, tag = "type", rename_all = "snake_case")]
pub enum KernelSection {
    Zero,
    /// `Σ γ_i exp(-λ_i t)`.
    Prony { gamma: Vec<f64>, lambda: Vec<f64> },
    /// `c t^(ρ-1) exp(-η t)`.
    PowerLaw { c: f64, rho: f64, eta: f64 },
}

impl KernelSection {
    pub fn spec(&self) -> Result<KernelSpec> {
        Ok(match self {
            KernelSection::Zero => KernelSpec::Zero,
            KernelSection::Prony { gamma, lambda } => {
                if gamma.len() != lambda.len() {
                    return Err(Error::Config(format!(
                        "kernel.gamma and kernel.lambda differ in length ({} vs {})",
                        gamma.len(),
                        lambda.len()
                    )));
                }
                KernelSpec::Prony(gamma.iter().zip(lambda).map(|(&gamma, &lambda)| PronyTerm { gamma, lambda }).collect())
            }
            KernelSection::PowerLaw { c, rho, eta } => KernelSpec::PowerLaw { c: *c, rho: *rho, eta: *eta },
        })
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshSection {
    /// Cells per unit length.
    pub per_unit: usize,
}

impl Default for MeshSection {
    fn default() -> Self {
        MeshSection { per_unit: 8 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub slabs: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection { slabs: 8 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GoalSection {
    /// Only `end_time_displacement`, weighted by the problem's goal weight.
    pub kind: String,
    pub enrichment_h: u32,
    pub enrichment_k: u32,
}

impl Default for GoalSection {
    fn default() -> Self {
        GoalSection { kind: "end_time_displacement".into(), enrichment_h: 1, enrichment_k: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Global,
    Local,
    Example1,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSection {
    /// `1`, `2` or `3`.
    pub representation: usize,
    pub kind: EstimatorKind,
    pub alpha: usize,
    pub beta: usize,
    pub gamma: usize,
    pub mode: KernelMode,
    pub endpoint_bound: bool,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        EstimatorSection {
            representation: 2,
            kind: EstimatorKind::Global,
            alpha: 2,
            beta: 2,
            gamma: 1,
            mode: KernelMode::Convolved,
            endpoint_bound: false,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptSection {
    pub tolerance: f64,
    pub fraction: f64,
    pub max_iterations: usize,
    pub split: SplitRule,
}

impl Default for AdaptSection {
    fn default() -> Self {
        AdaptSection { tolerance: 1e-4, fraction: 0.5, max_iterations: 6, split: SplitRule::Indicator }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("viscofem-out") }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: String| Err(Error::Config(format!("{key}: {why}")));
        if self.mesh.per_unit == 0 {
            return bad("mesh.per_unit", "must be positive".into());
        }
        if self.time.slabs == 0 {
            return bad("time.slabs", "must be positive".into());
        }
        if self.goal.kind != "end_time_displacement" {
            return bad("goal.kind", format!("unknown goal `{}`", self.goal.kind));
        }
        if !(1..=3).contains(&self.estimator.representation) {
            return bad("estimator.representation", format!("must be 1, 2 or 3, got {}", self.estimator.representation));
        }
        match self.estimator.kind {
            EstimatorKind::Global => self.global_params().validate().or_else(|e| bad("estimator", e.to_string()))?,
            EstimatorKind::Local => self.local_params().validate().or_else(|e| bad("estimator", e.to_string()))?,
            EstimatorKind::Example1 => {}
        }
        if !(self.adapt.fraction > 0.0 && self.adapt.fraction <= 1.0) {
            return bad("adapt.fraction", format!("must lie in (0, 1], got {}", self.adapt.fraction));
        }
        if !(self.adapt.tolerance > 0.0) {
            return bad("adapt.tolerance", format!("must be positive, got {}", self.adapt.tolerance));
        }
        if let Some(k) = &self.kernel {
            k.spec()?;
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<ProblemSpec> {
        let kernel = self.kernel.as_ref().map(KernelSection::spec).transpose()?;
        if self.problem.name == "scenario_bar" {
            if kernel.is_some() {
                return Err(Error::Config("kernel: scenario_bar has a fixed kernel".into()));
            }
            let profile = match &self.problem.profile {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("problem.profile: {e}")))?;
                    Some(TimeSeries::from_csv(&text)?)
                }
                None => None,
            };
            return scenario_bar(self.problem.amplitude, profile);
        }
        if self.problem.profile.is_some() {
            return Err(Error::Config("problem.profile: only scenario_bar takes a profile".into()));
        }
        by_name(&self.problem.name, kernel).map_err(|e| match e {
            Error::NonContractiveKernel { .. } | Error::NonPositiveParameter(_) | Error::KernelNotSquareIntegrable { .. } => {
                Error::Config(format!("kernel: {e}"))
            }
            other => other,
        })
    }

    pub fn representation(&self) -> Representation {
        Representation::from_index(self.estimator.representation).expect("validated representation")
    }

    pub fn enrichment(&self) -> Enrichment {
        Enrichment { refine_h: self.goal.enrichment_h, refine_k: self.goal.enrichment_k }
    }

    pub fn goal(&self, problem: &ProblemSpec) -> Result<GoalFunctional> {
        let weight = problem
            .goal_weight
            .clone()
            .ok_or_else(|| Error::Config(format!("goal: problem `{}` has no goal weight", problem.name)))?;
        Ok(GoalFunctional::EndTimeDisplacement { weight })
    }

    pub fn global_params(&self) -> GlobalParams {
        let e = &self.estimator;
        GlobalParams { alpha: e.alpha, beta: e.beta, gamma: e.gamma, mode: e.mode }
    }

    pub fn local_params(&self) -> LocalParams {
        let e = &self.estimator;
        LocalParams { alpha: e.alpha, mode: e.mode, endpoint_bound: e.endpoint_bound }
    }

    pub fn adapt_config(&self, problem: &ProblemSpec) -> Result<AdaptConfig> {
        let mut c = AdaptConfig::new(self.goal(problem)?, self.adapt.tolerance);
        c.fraction = self.adapt.fraction;
        c.max_iterations = self.adapt.max_iterations;
        c.split = self.adapt.split;
        c.representation = self.representation();
        c.enrichment = self.enrichment();
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_takes_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c.problem.name, "mms_smooth");
        assert_eq!(c.estimator.mode, KernelMode::Convolved);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = RunConfig::parse("[mesh]\nper_unit = 4\ncells = 3\n").unwrap_err().to_string();
        assert!(e.contains("cells"), "{e}");
    }

    #[test]
    fn prony_kernel_section() {
        let c = RunConfig::parse("[kernel]\ntype = \"prony\"\ngamma = [0.2, 0.1]\nlambda = [1.0, 3.0]\n").unwrap();
        assert_eq!(c.kernel.unwrap().spec().unwrap(), KernelSpec::Prony(vec![
            PronyTerm { gamma: 0.2, lambda: 1.0 },
            PronyTerm { gamma: 0.1, lambda: 3.0 },
        ]));
    }
}
