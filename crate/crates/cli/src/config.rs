//! Run configuration read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mixpot::experiments::{ExperimentSuite, MeasureSpec, Scene, Thresholds, EXPERIMENT_NAMES};
use mixpot::grid::Point;
use mixpot::params::ParamSet;
use mixpot::solver::{SolaConfig, SolveConfig};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Potential,
    Solve,
    Sola,
    Experiment,
    Audit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    #[default]
    Riesz,
    Wolff,
}

/// Potential profile of the scene measure at `x0` over `radii`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialConfig {
    pub kind: PotentialKind,
    pub x0: Point,
    pub radii: Vec<f64>,
    /// Wolff exponent `β`; ignored for the Riesz potential.
    pub beta: f64,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig {
            kind: PotentialKind::Riesz,
            x0: [0.1, 0.0],
            radii: vec![0.125, 0.25, 0.5, 1.0],
            beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Pipeline to run when the command line does not name one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<CommandKind>,
    pub params: ParamSet,
    pub scene: Scene,
    pub solver: SolveConfig,
    pub sola: SolaConfig,
    pub potential: PotentialConfig,
    /// Experiments run by `experiment` and `audit` when none is named.
    pub experiments: Vec<String>,
    pub suite: ExperimentSuite,
    pub thresholds: Thresholds,
    pub output: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
    /// Overrides the seeds of the randomized experiments.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub threads: usize,
    /// After `solve`, compare the nonlocal term against the dense kernel matrix.
    pub dense_check: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            params: ParamSet::new(2, 0.5, 2.0).expect("valid defaults"),
            scene: Scene {
                measure: MeasureSpec::Dirac {
                    at: [0.0, 0.0],
                    mass: 1.0,
                },
                ..Scene::perturbed_affine(2, 64)
            },
            solver: SolveConfig::default(),
            sola: SolaConfig::default(),
            potential: PotentialConfig::default(),
            experiments: Vec::new(),
            suite: ExperimentSuite::default(),
            thresholds: Thresholds::default(),
            output: PathBuf::from("out"),
            cache: None,
            seed: None,
            threads: 1,
            dense_check: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Measure files are given relative to the configuration file.
    fn resolve_paths(&mut self, base: &Path) {
        if let MeasureSpec::File { path } = &mut self.scene.measure {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    /// Applies the seed override to the randomized experiments.
    pub fn apply_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.suite.pointwise.seed = seed;
            self.suite.monotonicity.seed = seed;
        }
    }

    /// Experiment names selected for a run, with `all` expanded.
    pub fn selected(&self, names: &[String]) -> Vec<String> {
        let list = if names.is_empty() { &self.experiments } else { names };
        let mut out = Vec::new();
        for name in list {
            if name == "all" {
                out.extend(EXPERIMENT_NAMES.iter().map(|s| s.to_string()));
            } else {
                out.push(name.clone());
            }
        }
        out
    }

    fn experiment_params(&self, name: &str) -> Option<&ParamSet> {
        let s = &self.suite;
        Some(match name {
            "excess_decay" => &s.excess_decay.params,
            "mixed_local" => &s.mixed_local.params,
            "measure_comparison" => &s.measure_comparison.params,
            "dirac_gradient" => &s.dirac_gradient.params,
            "tail_decay" => &s.tail_decay.params,
            "energy" => &s.energy.params,
            "a_excess" => &s.a_excess.params,
            "pointwise" => &s.pointwise.params,
            _ => return None,
        })
    }

    /// Every violated range or reference for `command` over `experiments`.
    pub fn violations(&self, command: CommandKind, experiments: &[String]) -> Vec<String> {
        let mut out = Vec::new();
        if self.threads == 0 {
            out.push("threads = 0: requires at least one worker".into());
        }
        match command {
            CommandKind::Potential | CommandKind::Solve | CommandKind::Sola => {
                out.extend(self.params.violations().into_iter().map(|v| format!("params: {v}")));
                if let Err(e) = self.scene.validate() {
                    out.push(format!("scene: {e}"));
                }
                if let MeasureSpec::File { path } = &self.scene.measure {
                    if !path.exists() {
                        out.push(format!("scene: measure file {} does not exist", path.display()));
                    }
                }
                if command == CommandKind::Potential {
                    let pot = &self.potential;
                    if pot.radii.is_empty() || pot.radii.iter().any(|r| !(*r > 0.0)) {
                        out.push("potential: radii must be nonempty and positive".into());
                    }
                    if pot.kind == PotentialKind::Wolff && !(pot.beta > 0.0 && pot.beta.is_finite()) {
                        out.push(format!("potential: β = {} requires β > 0", pot.beta));
                    }
                }
            }
            CommandKind::Experiment | CommandKind::Audit => {
                for name in experiments {
                    if !EXPERIMENT_NAMES.contains(&name.as_str()) {
                        out.push(format!("unknown experiment `{name}`; available: {}", EXPERIMENT_NAMES.join(", ")));
                    } else if let Some(p) = self.experiment_params(name) {
                        out.extend(p.violations().into_iter().map(|v| format!("{name}.params: {v}")));
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn default_roundtrips_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(RunConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn all_range_violations_are_listed() {
        let cfg = RunConfig::from_toml("[params]\nn = 2\ns = 1.2\np = 1.2\n").unwrap();
        let v = cfg.violations(CommandKind::Solve, &[]);
        assert!(v.iter().any(|m| m.contains("s ∈ (0,1)")), "{v:?}");
        assert!(v.iter().any(|m| m.contains("p > 2 − 1/n")), "{v:?}");
    }

    #[test]
    fn all_expands_to_every_experiment() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.selected(&["all".into()]).len(), EXPERIMENT_NAMES.len());
        assert!(cfg.selected(&[]).is_empty());
    }

    #[test]
    fn seed_override_reaches_random_experiments() {
        let mut cfg = RunConfig {
            seed: Some(99),
            ..Default::default()
        };
        cfg.apply_seed();
        assert_eq!(cfg.suite.pointwise.seed, 99);
        assert_eq!(cfg.suite.monotonicity.seed, 99);
    }
}
