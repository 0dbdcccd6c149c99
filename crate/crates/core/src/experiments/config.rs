use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bounds::DEFAULT_ANCHORS;
use crate::mdp::{
    build_random_mdp, four_room, value_iteration, PolicyTable, TabularMdp, FOUR_ROOM_GAMMA,
};
use crate::operators::{
    AlphaSchedule, Divergence, ImprovementSpec, ProjectionSpec, Sampling, Solver, TrainSpec,
};
use crate::policy::{ParamMode, SoftmaxPolicy};
use crate::{Error, Result};

fn default_gamma() -> f64 {
    FOUR_ROOM_GAMMA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    FourRoom {
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
    /// Generated by [`build_random_mdp`]; `seed` defaults to the experiment
    /// seed.
    RandomMdp {
        n_states: usize,
        n_actions: usize,
        #[serde(default)]
        reward_sparsity: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// An MDP JSON document.
    File { path: PathBuf },
}

impl EnvSpec {
    pub fn build(&self, seed: u64) -> Result<TabularMdp> {
        match self {
            EnvSpec::FourRoom { gamma } => Ok(four_room(*gamma)?.mdp),
            EnvSpec::RandomMdp {
                n_states,
                n_actions,
                reward_sparsity,
                seed: env_seed,
            } => build_random_mdp(
                *n_states,
                *n_actions,
                *reward_sparsity,
                env_seed.unwrap_or(seed),
            ),
            EnvSpec::File { path } => TabularMdp::from_json(&std::fs::read_to_string(path)?),
        }
    }
}

/// Where improvement targets are computed from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplingSpec {
    #[default]
    Current,
    /// The deterministic value-iteration optimum of the environment.
    Optimal,
    /// A policy JSON document.
    Fixed { path: PathBuf },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    #[default]
    Uniform,
    /// Logits drawn from `N(0, scale²)` with the experiment seed.
    Random { scale: f64 },
}

fn default_grid_points() -> usize {
    101
}

fn default_anchors() -> Vec<f64> {
    DEFAULT_ANCHORS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeSpec {
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_anchors")]
    pub anchors: Vec<f64>,
}

impl Default for LandscapeSpec {
    fn default() -> Self {
        LandscapeSpec {
            grid_points: default_grid_points(),
            anchors: default_anchors(),
        }
    }
}

fn default_schedule() -> AlphaSchedule {
    AlphaSchedule::Fixed
}

/// A complete, reproducible experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub env: EnvSpec,
    pub policy_mode: ParamMode,
    #[serde(default)]
    pub init_policy: InitSpec,
    pub improvement: ImprovementSpec,
    pub projection: ProjectionSpec,
    pub n_iters: usize,
    #[serde(default = "default_schedule")]
    pub alpha_schedule: AlphaSchedule,
    #[serde(default)]
    pub sampling_policy: SamplingSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub record_wallclock: bool,
    #[serde(default)]
    pub landscape: LandscapeSpec,
}

fn config_error(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Parses and validates a JSON document. Errors name the offending
    /// field and, for syntax or type errors, the line and column.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let config: ExperimentConfig =
            serde_path_to_error::deserialize(&mut de).map_err(|err| {
                let path = err.path().to_string();
                let inner = err.into_inner();
                config_error(&path, format!("{inner}"))
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.improvement
            .validate()
            .map_err(|e| config_error("improvement", e.to_string()))?;
        self.projection
            .validate()
            .map_err(|e| config_error("projection", e.to_string()))?;
        if self.n_iters == 0 {
            return Err(config_error("n_iters", "must be at least 1"));
        }
        if let EnvSpec::FourRoom { gamma } = self.env {
            if !(0.0..1.0).contains(&gamma) {
                return Err(config_error("env.gamma", format!("{gamma} outside [0, 1)")));
            }
        }
        if let (ParamMode::Shared, Solver::ClosedFormTabular) =
            (self.policy_mode, self.projection.solver)
        {
            return Err(config_error(
                "projection.solver",
                "closed_form_tabular needs policy_mode = tabular",
            ));
        }
        if let InitSpec::Random { scale } = self.init_policy {
            if !(scale >= 0.0 && scale.is_finite()) {
                return Err(config_error(
                    "init_policy.scale",
                    "must be finite and nonnegative",
                ));
            }
        }
        match &self.alpha_schedule {
            AlphaSchedule::Fixed => {}
            AlphaSchedule::Anneal(alphas) => {
                if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
                    return Err(config_error(
                        "alpha_schedule.alphas",
                        "need a non-empty list in (0, 1]",
                    ));
                }
            }
            AlphaSchedule::LineSearch(candidates) => {
                if !candidates.contains(&1.0) {
                    return Err(config_error(
                        "alpha_schedule.alphas",
                        "line search candidates must contain 1.0",
                    ));
                }
                if candidates.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
                    return Err(config_error(
                        "alpha_schedule.alphas",
                        "candidates must lie in (0, 1]",
                    ));
                }
            }
        }
        if self.landscape.grid_points == 0 {
            return Err(config_error("landscape.grid_points", "must be at least 1"));
        }
        if self.landscape.anchors.is_empty()
            || self
                .landscape
                .anchors
                .iter()
                .any(|t| !(0.0..=1.0).contains(t))
        {
            return Err(config_error(
                "landscape.anchors",
                "need a non-empty list in [0, 1]",
            ));
        }
        Ok(())
    }

    pub fn build_env(&self) -> Result<TabularMdp> {
        self.env.build(self.seed)
    }

    pub fn initial_policy(&self, mdp: &TabularMdp) -> Result<SoftmaxPolicy> {
        let (ns, na) = (mdp.n_states(), mdp.n_actions());
        let uniform = SoftmaxPolicy::uniform(self.policy_mode, ns, na);
        match self.init_policy {
            InitSpec::Uniform => Ok(uniform),
            InitSpec::Random { scale } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let normal = Normal::new(0.0, scale)
                    .map_err(|e| config_error("init_policy.scale", e.to_string()))?;
                let theta = (0..uniform.n_params())
                    .map(|_| normal.sample(&mut rng))
                    .collect();
                uniform.with_theta(theta)
            }
        }
    }

    pub fn sampling(&self, mdp: &TabularMdp) -> Result<Sampling> {
        match &self.sampling_policy {
            SamplingSpec::Current => Ok(Sampling::Current),
            SamplingSpec::Optimal => {
                let opt = value_iteration(mdp, 1e-12)?;
                Ok(Sampling::Fixed(PolicyTable::deterministic(
                    &opt.greedy,
                    mdp.n_actions(),
                )?))
            }
            SamplingSpec::Fixed { path } => {
                let policy: SoftmaxPolicy = serde_json::from_str(&std::fs::read_to_string(path)?)?;
                if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
                    return Err(config_error(
                        "sampling_policy.path",
                        "policy shape does not match the environment",
                    ));
                }
                Ok(Sampling::Fixed(policy.table()))
            }
        }
    }

    pub fn train_spec(&self, mdp: &TabularMdp) -> Result<TrainSpec> {
        Ok(TrainSpec {
            improvement: self.improvement,
            projection: self.projection,
            n_iters: self.n_iters,
            schedule: self.alpha_schedule.clone(),
            sampling: self.sampling(mdp)?,
            record_wallclock: self.record_wallclock,
        })
    }
}

/// Candidate α grid used by the annealing preset.
pub const ANNEAL_CANDIDATES: [f64; 8] = [0.125, 0.25, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

pub const PRESET_NAMES: [&str; 6] = [
    "op-reinforce",
    "fig1-left",
    "fig1-middle",
    "fig1-anneal",
    "offpolicy-optimal",
    "fig-a1",
];

/// Iterations used by the four-room learning-curve presets.
pub const FIG1_ITERS: usize = 100;

fn four_room_shared(
    name: &str,
    improvement: ImprovementSpec,
    kind: Divergence,
) -> ExperimentConfig {
    ExperimentConfig {
        name: Some(name.into()),
        env: EnvSpec::FourRoom {
            gamma: FOUR_ROOM_GAMMA,
        },
        policy_mode: ParamMode::Shared,
        init_policy: InitSpec::Uniform,
        improvement,
        projection: ProjectionSpec {
            kind,
            solver: Solver::default(),
        },
        n_iters: FIG1_ITERS,
        alpha_schedule: AlphaSchedule::Fixed,
        sampling_policy: SamplingSpec::Current,
        seed: 0,
        output_dir: None,
        record_wallclock: false,
        landscape: LandscapeSpec::default(),
    }
}

/// Built-in experiment configurations.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let poly4 = ImprovementSpec::Polynomial { inv_alpha: 4.0 };
    let config = match name {
        "op-reinforce" => {
            four_room_shared(name, ImprovementSpec::OpReinforce, Divergence::WeightedKl)
        }
        "fig1-left" => four_room_shared(name, poly4, Divergence::WeightedKl),
        "fig1-middle" => four_room_shared(name, poly4, Divergence::AlphaDivergence { alpha: 0.25 }),
        "fig1-anneal" => {
            let mut c =
                four_room_shared(name, ImprovementSpec::OpReinforce, Divergence::WeightedKl);
            c.alpha_schedule = AlphaSchedule::LineSearch(ANNEAL_CANDIDATES.to_vec());
            c
        }
        "offpolicy-optimal" => {
            let mut c =
                four_room_shared(name, ImprovementSpec::OpReinforce, Divergence::WeightedKl);
            c.policy_mode = ParamMode::Tabular;
            c.projection.solver = Solver::ClosedFormTabular;
            c.sampling_policy = SamplingSpec::Optimal;
            c.n_iters = 50;
            c
        }
        "fig-a1" => {
            let mut c =
                four_room_shared(name, ImprovementSpec::OpReinforce, Divergence::WeightedKl);
            c.n_iters = 1;
            c
        }
        other => {
            return Err(config_error(
                "preset",
                format!(
                    "unknown preset `{other}`, expected one of {}",
                    PRESET_NAMES.join(", ")
                ),
            ))
        }
    };
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for name in PRESET_NAMES {
            let config = preset(name).unwrap();
            config.validate().unwrap();
            let back = ExperimentConfig::from_json_str(&config.to_json().unwrap()).unwrap();
            assert_eq!(back, config);
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn minimal_document() {
        let text = r#"{
            "env": {"kind": "random_mdp", "n_states": 4, "n_actions": 2},
            "policy_mode": "tabular",
            "improvement": {"kind": "op_reinforce"},
            "projection": {"kind": "weighted_kl", "solver": {"kind": "closed_form_tabular"}},
            "n_iters": 3,
            "seed": 7
        }"#;
        let config = ExperimentConfig::from_json_str(text).unwrap();
        assert_eq!(config.alpha_schedule, AlphaSchedule::Fixed);
        assert_eq!(config.sampling_policy, SamplingSpec::Current);
        assert_eq!(
            config.build_env().unwrap(),
            build_random_mdp(4, 2, 0.0, 7).unwrap()
        );
    }

    #[test]
    fn diagnostics_name_the_field() {
        let text = r#"{
            "env": {"kind": "four_room"},
            "policy_mode": "shared",
            "improvement": {"kind": "polynomial", "inv_alpha": "four"},
            "projection": {"kind": "weighted_kl"},
            "n_iters": 3
        }"#;
        match ExperimentConfig::from_json_str(text) {
            Err(Error::Config { path, message }) => {
                assert_eq!(path, "improvement");
                assert!(message.contains("line 4"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = r#"{
            "env": {"kind": "four_room"},
            "policy_mode": "shared",
            "improvement": {"kind": "op_reinforce"},
            "projection": {"kind": "weighted_kl"},
            "n_iters": 3,
            "alpha_schedule": {"kind": "line_search", "alphas": [0.5, 0.25]}
        }"#;
        match ExperimentConfig::from_json_str(text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "alpha_schedule.alphas"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn shared_closed_form_is_rejected() {
        let mut config = preset("fig1-left").unwrap();
        config.projection.solver = Solver::ClosedFormTabular;
        assert!(matches!(config.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn random_init_is_seeded() {
        let mut config = preset("op-reinforce").unwrap();
        config.init_policy = InitSpec::Random { scale: 1.0 };
        let mdp = config.build_env().unwrap();
        let a = config.initial_policy(&mdp).unwrap();
        let b = config.initial_policy(&mdp).unwrap();
        assert_eq!(a, b);
        config.seed = 1;
        assert_ne!(config.initial_policy(&mdp).unwrap(), a);
    }
}
