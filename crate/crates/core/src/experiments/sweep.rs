use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{preset, ExperimentConfig};
use super::reference::{class_optimum, ClassOptimum};
use super::run::run_experiment;
use crate::operators::{Divergence, ImprovementSpec, ProjectionSpec};
use crate::{Error, Result};

/// Largest number of cells a sweep may expand to.
pub const MAX_SWEEP_CELLS: usize = 10_000;
pub const SUMMARY_FILE: &str = "summary.json";

/// Lists of values to cross. An empty axis keeps the base config's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    /// Sets the polynomial improvement to `1/α` (Op-REINFORCE at 1) and the
    /// order of an α-divergence projection.
    #[serde(default)]
    pub alphas: Vec<f64>,
    /// Sets β of exponential improvements and of the reverse-KL projection.
    #[serde(default)]
    pub betas: Vec<f64>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Replaces the projection; an α-divergence order is then overridden by
    /// the α axis when both are present.
    #[serde(default)]
    pub projections: Vec<ProjectionSpec>,
}

/// A sweep document: a base experiment (inline or by preset name) and axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<ExperimentConfig>,
    #[serde(default)]
    pub axes: SweepAxes,
}

impl SweepConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let config: SweepConfig =
            serde_path_to_error::deserialize(&mut de).map_err(|err| Error::Config {
                path: err.path().to_string(),
                message: err.into_inner().to_string(),
            })?;
        config.base_config()?;
        Ok(config)
    }

    pub fn base_config(&self) -> Result<ExperimentConfig> {
        match (&self.preset, &self.base) {
            (Some(name), None) => preset(name),
            (None, Some(base)) => {
                base.validate()?;
                Ok(base.clone())
            }
            _ => Err(Error::Config {
                path: "preset".into(),
                message: "give exactly one of `preset` and `base`".into(),
            }),
        }
    }
}

/// Built-in grid: α ∈ {0.25, 0.5, 1} against both covering projections.
pub fn fig1_sweep() -> SweepConfig {
    let base = preset("fig1-left").expect("built-in preset");
    let solver = base.projection.solver;
    SweepConfig {
        preset: Some("fig1-left".into()),
        base: None,
        axes: SweepAxes {
            alphas: vec![0.25, 0.5, 1.0],
            projections: vec![
                ProjectionSpec {
                    kind: Divergence::WeightedKl,
                    solver,
                },
                ProjectionSpec {
                    kind: Divergence::AlphaDivergence { alpha: 1.0 },
                    solver,
                },
            ],
            ..SweepAxes::default()
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub index: usize,
    pub dir: String,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub seed: u64,
    pub projection: ProjectionSpec,
    pub final_j: f64,
    /// Updates needed to first reach 90% of the class optimum.
    pub iterations_to_90: Option<usize>,
    pub cumulative_regret: f64,
    /// Least-squares slope of cumulative regret against iteration.
    pub regret_slope: f64,
    pub j_star_class: f64,
    pub j_star_vi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub library_version: String,
    pub sweep: SweepConfig,
    pub cells: Vec<CellSummary>,
}

struct Cell {
    alpha: Option<f64>,
    beta: Option<f64>,
    config: ExperimentConfig,
}

fn axis<T: Copy>(values: &[T]) -> Vec<Option<T>> {
    if values.is_empty() {
        vec![None]
    } else {
        values.iter().copied().map(Some).collect()
    }
}

fn expand(base: &ExperimentConfig, axes: &SweepAxes) -> Result<Vec<Cell>> {
    let count = [
        axes.alphas.len(),
        axes.betas.len(),
        axes.seeds.len(),
        axes.projections.len(),
    ]
    .iter()
    .map(|n| (*n).max(1))
    .try_fold(1usize, |acc, n| acc.checked_mul(n))
    .unwrap_or(usize::MAX);
    if count > MAX_SWEEP_CELLS {
        return Err(Error::InvalidArgument(format!(
            "sweep expands to {count} cells, the limit is {MAX_SWEEP_CELLS}"
        )));
    }
    let mut cells = Vec::with_capacity(count);
    for projection in axis(&axes.projections) {
        for alpha in axis(&axes.alphas) {
            for beta in axis(&axes.betas) {
                for seed in axis(&axes.seeds) {
                    let mut config = base.clone();
                    if let Some(p) = projection {
                        config.projection = p;
                    }
                    if let Some(a) = alpha {
                        config.improvement = if a == 1.0 {
                            ImprovementSpec::OpReinforce
                        } else {
                            ImprovementSpec::Polynomial { inv_alpha: 1.0 / a }
                        };
                        config.projection = config.projection.with_alpha(a);
                    }
                    if let Some(b) = beta {
                        config.improvement = match config.improvement {
                            ImprovementSpec::PpoExp { .. } => ImprovementSpec::PpoExp { beta: b },
                            ImprovementSpec::MpoExp { .. } => ImprovementSpec::MpoExp { beta: b },
                            other => other,
                        };
                        if let Divergence::ReverseKlClipped { clip_eps, .. } =
                            config.projection.kind
                        {
                            config.projection.kind =
                                Divergence::ReverseKlClipped { beta: b, clip_eps };
                        }
                    }
                    if let Some(s) = seed {
                        config.seed = s;
                    }
                    config.validate()?;
                    cells.push(Cell {
                        alpha,
                        beta,
                        config,
                    });
                }
            }
        }
    }
    Ok(cells)
}

/// Cumulative regret `Σ_t (J* − J_t)` and the slope of its least-squares
/// line against `t`.
pub fn regret_stats(j_star: f64, js: &[f64]) -> (f64, f64) {
    let mut cumulative = Vec::with_capacity(js.len());
    let mut total = 0.0;
    for j in js {
        total += j_star - j;
        cumulative.push(total);
    }
    (total, linear_slope(&cumulative))
}

fn linear_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = ys.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mean_x;
        num += dx * (y - mean_y);
        den += dx * dx;
    }
    num / den
}

/// First `t` such that `js[t] ≥ 0.9 j_star`, as a count of updates.
pub fn iterations_to_fraction(j_star: f64, js: &[f64], fraction: f64) -> Option<usize> {
    js.iter()
        .position(|j| *j >= fraction * j_star)
        .map(|i| i + 1)
}

/// Runs every cell, each into its own subdirectory of `out_dir`, then
/// writes `summary.json`. Cells run on the current rayon pool.
pub fn run_sweep(sweep: &SweepConfig, out_dir: &Path) -> Result<SweepSummary> {
    let base = sweep.base_config()?;
    let cells = expand(&base, &sweep.axes)?;
    fs::create_dir_all(out_dir)?;

    // Reference optima depend only on the environment and the policy class.
    let mut references: BTreeMap<String, ClassOptimum> = BTreeMap::new();
    for cell in &cells {
        let key = reference_key(&cell.config)?;
        if let std::collections::btree_map::Entry::Vacant(slot) = references.entry(key) {
            let mdp = cell.config.build_env()?;
            slot.insert(class_optimum(&mdp, cell.config.policy_mode, 0)?);
        }
    }

    let summaries = cells
        .par_iter()
        .enumerate()
        .map(|(index, cell)| {
            let dir_name = format!("cell_{index:04}");
            let out = run_experiment(&cell.config, &out_dir.join(&dir_name))?;
            let reference = &references[&reference_key(&cell.config)?];
            let js: Vec<f64> = out.result.curve.iter().map(|r| r.j).collect();
            let (cumulative_regret, regret_slope) = regret_stats(reference.j, &js);
            Ok(CellSummary {
                index,
                dir: dir_name,
                alpha: cell.alpha,
                beta: cell.beta,
                seed: cell.config.seed,
                projection: cell.config.projection,
                final_j: out.manifest.final_j,
                iterations_to_90: iterations_to_fraction(reference.j, &js, 0.9),
                cumulative_regret,
                regret_slope,
                j_star_class: reference.j,
                j_star_vi: reference.value_iteration_j,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = SweepSummary {
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        sweep: sweep.clone(),
        cells: summaries,
    };
    fs::write(
        out_dir.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok(summary)
}

fn reference_key(config: &ExperimentConfig) -> Result<String> {
    let seed = match config.env {
        super::config::EnvSpec::RandomMdp { seed: None, .. } => config.seed,
        _ => 0,
    };
    Ok(format!(
        "{}|{:?}|{seed}",
        serde_json::to_string(&config.env)?,
        config.policy_mode
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::Solver;

    #[test]
    fn regret_of_linear_gap() {
        let (total, slope) = regret_stats(1.0, &[0.5; 10]);
        assert!((total - 5.0).abs() < 1e-12);
        assert!((slope - 0.5).abs() < 1e-12);
        let (_, flat) = regret_stats(1.0, &[1.0; 10]);
        assert_eq!(flat, 0.0);
    }

    #[test]
    fn ninety_percent_count() {
        assert_eq!(iterations_to_fraction(1.0, &[0.5, 0.95, 1.0], 0.9), Some(2));
        assert_eq!(iterations_to_fraction(1.0, &[0.5], 0.9), None);
    }

    #[test]
    fn fig1_grid_has_six_cells() {
        let sweep = fig1_sweep();
        let cells = expand(&sweep.base_config().unwrap(), &sweep.axes).unwrap();
        assert_eq!(cells.len(), 6);
        let matched = cells
            .iter()
            .filter(|c| matches!(c.config.projection.kind, Divergence::AlphaDivergence { alpha } if Some(alpha) == c.alpha))
            .count();
        assert_eq!(matched, 3);
    }

    #[test]
    fn axis_explosion_is_refused() {
        let base = preset("op-reinforce").unwrap();
        let axes = SweepAxes {
            seeds: (0..101).collect(),
            alphas: vec![0.5; 100],
            ..SweepAxes::default()
        };
        assert!(matches!(
            expand(&base, &axes),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn base_and_preset_are_exclusive() {
        let both = SweepConfig {
            preset: Some("op-reinforce".into()),
            base: Some(preset("op-reinforce").unwrap()),
            axes: SweepAxes::default(),
        };
        assert!(both.base_config().is_err());
        let text = r#"{"preset": "fig1-left", "axes": {"alphas": [0.5], "projections": [{"kind": "weighted_kl"}]}}"#;
        let parsed = SweepConfig::from_json_str(text).unwrap();
        assert_eq!(parsed.axes.projections[0].solver, Solver::default());
    }
}
