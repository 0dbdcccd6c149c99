use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{EnvSpec, ExperimentConfig};
use crate::bounds::{bound_landscape, uniform_grid, write_landscape_csv, LandscapeRow};
use crate::operators::{train, CurveRow, TrainResult};
use crate::{Error, Result};

pub const CURVE_FILE: &str = "curve.csv";
pub const POLICY_FILE: &str = "final_policy.json";
pub const MANIFEST_FILE: &str = "manifest.json";
/// Written instead of a manifest when a run aborts.
pub const PARTIAL_FILE: &str = "PARTIAL";

const CURVE_HEADER: [&str; 7] = [
    "iteration",
    "J",
    "alpha",
    "bound_at_mu",
    "bound_at_new",
    "divergence_to_target",
    "wallclock_ms",
];

pub fn write_curve_csv<W: Write>(rows: &[CurveRow], writer: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    out.write_record(CURVE_HEADER)?;
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a learning curve, checking the header and that iterations count up
/// from zero.
pub fn read_curve_csv<R: Read>(reader: R) -> Result<Vec<CurveRow>> {
    let mut input = csv::Reader::from_reader(reader);
    let header = input.headers()?.clone();
    if header.iter().ne(CURVE_HEADER) {
        return Err(Error::InvalidArgument(format!(
            "unexpected curve header {header:?}"
        )));
    }
    let rows = input
        .deserialize()
        .collect::<std::result::Result<Vec<CurveRow>, _>>()?;
    for (i, row) in rows.iter().enumerate() {
        if row.iteration != i {
            return Err(Error::InvalidArgument(format!(
                "row {i} has iteration {}",
                row.iteration
            )));
        }
    }
    Ok(rows)
}

/// Everything needed to re-run an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub library_version: String,
    pub initial_j: f64,
    pub final_j: f64,
    pub iterations: usize,
    /// Total runtime, recorded only when the config asks for wallclock.
    pub runtime_ms: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub result: TrainResult,
    pub manifest: Manifest,
}

/// Runs `config` and writes its result files into `out_dir`.
///
/// On failure a `PARTIAL` marker holding the error is left in `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let _ = fs::remove_file(out_dir.join(PARTIAL_FILE));
    match run_inner(config, out_dir) {
        Ok(out) => Ok(out),
        Err(err) => {
            fs::write(out_dir.join(PARTIAL_FILE), format!("{err}\n"))?;
            Err(err)
        }
    }
}

fn run_inner(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput> {
    let start = Instant::now();
    let mdp = config.build_env()?;
    let init = config.initial_policy(&mdp)?;
    let spec = config.train_spec(&mdp)?;
    log::info!(
        "running {} for {} iterations on {} states",
        config.name.as_deref().unwrap_or("experiment"),
        config.n_iters,
        mdp.n_states()
    );
    let result = train(&mdp, &init, &spec)?;
    let mut curve = Vec::new();
    write_curve_csv(&result.curve, &mut curve)?;
    fs::write(out_dir.join(CURVE_FILE), curve)?;
    fs::write(
        out_dir.join(POLICY_FILE),
        serde_json::to_string_pretty(&result.policy)? + "\n",
    )?;
    let manifest = Manifest {
        config: config.clone(),
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        initial_j: result.initial_j,
        final_j: result.curve.last().map_or(result.initial_j, |r| r.j),
        iterations: result.curve.len(),
        runtime_ms: if config.record_wallclock {
            start.elapsed().as_millis() as u64
        } else {
            0
        },
    };
    fs::write(
        out_dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(RunOutput {
        dir: out_dir.to_path_buf(),
        result,
        manifest,
    })
}

/// Landscape rows for one anchor, as written to disk.
#[derive(Debug, Clone)]
pub struct LandscapeFile {
    pub anchor: f64,
    pub path: PathBuf,
    pub rows: Vec<LandscapeRow>,
}

/// Largest tolerated excess of the operator bound over `J`.
pub const LANDSCAPE_SLACK: f64 = 1e-9;

pub fn landscape_file_name(anchor: f64) -> String {
    format!("landscape_anchor_{anchor:.3}.csv")
}

/// Writes one landscape CSV per anchor and checks every row against the
/// bound before returning.
pub fn run_landscape(config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<LandscapeFile>> {
    config.validate()?;
    if !matches!(config.env, EnvSpec::FourRoom { .. }) {
        return Err(Error::InvalidArgument(
            "the landscape is defined on the four-room environment".into(),
        ));
    }
    let mdp = config.build_env()?;
    let grid = uniform_grid(config.landscape.grid_points);
    let rows = bound_landscape(&mdp, &grid, &config.landscape.anchors)?;
    if let Some(bad) = rows.iter().find(|r| r.op_bound > r.j + LANDSCAPE_SLACK) {
        return Err(Error::Check(format!(
            "operator bound {} exceeds J {} at t = {}, anchor {}",
            bad.op_bound, bad.j, bad.t, bad.anchor_t
        )));
    }
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    for (anchor, chunk) in config.landscape.anchors.iter().zip(rows.chunks(grid.len())) {
        let path = out_dir.join(landscape_file_name(*anchor));
        let mut buf = Vec::new();
        write_landscape_csv(chunk, &mut buf)?;
        fs::write(&path, buf)?;
        files.push(LandscapeFile {
            anchor: *anchor,
            path,
            rows: chunk.to_vec(),
        });
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::preset;

    fn row(i: usize) -> CurveRow {
        CurveRow {
            iteration: i,
            j: 0.1 * i as f64,
            alpha: 1.0,
            bound_at_mu: 0.0,
            bound_at_new: 0.05,
            divergence_to_target: 1e-3,
            wallclock_ms: 0,
        }
    }

    #[test]
    fn curve_round_trip() {
        let rows: Vec<CurveRow> = (0..4).map(row).collect();
        let mut buf = Vec::new();
        write_curve_csv(&rows, &mut buf).unwrap();
        assert!(buf.starts_with(
            b"iteration,J,alpha,bound_at_mu,bound_at_new,divergence_to_target,wallclock_ms\n"
        ));
        assert_eq!(read_curve_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn curve_schema_errors() {
        assert!(read_curve_csv(&b"iteration,J\n0,1\n"[..]).is_err());
        let rows = vec![row(0), row(2)];
        let mut buf = Vec::new();
        write_curve_csv(&rows, &mut buf).unwrap();
        assert!(read_curve_csv(&buf[..]).is_err());
    }

    #[test]
    fn landscape_needs_four_room() {
        let mut config = preset("fig-a1").unwrap();
        config.env = EnvSpec::RandomMdp {
            n_states: 3,
            n_actions: 4,
            reward_sparsity: 0.0,
            seed: None,
        };
        let dir = tempfile::tempdir().unwrap();
        assert!(run_landscape(&config, dir.path()).is_err());
    }

    #[test]
    fn failed_run_leaves_marker() {
        let mut config = preset("op-reinforce").unwrap();
        config.env = EnvSpec::File {
            path: "/nonexistent/mdp.json".into(),
        };
        let dir = tempfile::tempdir().unwrap();
        assert!(run_experiment(&config, dir.path()).is_err());
        assert!(dir.path().join(PARTIAL_FILE).exists());
        assert!(!dir.path().join(MANIFEST_FILE).exists());
    }
}
