//! Run-directory plumbing: atomic writes, ownership lock, stage artifact
//! paths, and the config-hash handshake between stages.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

/// Errors carrying the pipeline exit codes: 1 runtime/numerical failure,
/// 2 missing artifact, 3 config mismatch, 4 invalid config.
#[derive(Debug)]
pub enum CliError {
    Runtime(String),
    MissingArtifact(PathBuf),
    ConfigMismatch { artifact: PathBuf, expected: String, found: String },
    InvalidConfig(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::MissingArtifact(_) => 2,
            CliError::ConfigMismatch { .. } => 3,
            CliError::InvalidConfig(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Runtime(m) => write!(f, "error: {m}"),
            CliError::MissingArtifact(p) => write!(
                f,
                "error: missing upstream artifact {} (run the producing stage first)",
                p.display()
            ),
            CliError::ConfigMismatch { artifact, expected, found } => write!(
                f,
                "error: {} was produced under config hash {found}, current config hashes to \
                 {expected}; rerun upstream stages or pass --force",
                artifact.display()
            ),
            CliError::InvalidConfig(m) => write!(f, "invalid config:\n{m}"),
        }
    }
}

impl From<fp_core::CoreError> for CliError {
    fn from(e: fp_core::CoreError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Write bytes atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".tmp-{}-{}",
        std::process::id(),
        path.file_name().map(|n| n.to_string_lossy().to_string()).unwrap_or_default()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::Runtime(format!("serialize {}: {e}", path.display())))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let bytes = fs::read(path).map_err(|_| CliError::MissingArtifact(path.to_path_buf()))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Runtime(format!("parse {}: {e}", path.display())))
}

pub fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact(path.to_path_buf()))
    }
}

/// Exclusive ownership of a run directory for the duration of a stage.
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(run_dir: &Path) -> CliResult<RunLock> {
        fs::create_dir_all(run_dir)?;
        let path = run_dir.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Runtime(
                format!(
                    "run directory {} is locked by another pipeline run (remove {} if stale)",
                    run_dir.display(),
                    path.display()
                ),
            )),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Canonical artifact layout inside a run directory.
pub struct Layout {
    pub run_dir: PathBuf,
}

impl Layout {
    pub fn new(run_dir: &Path) -> Layout {
        Layout {
            run_dir: run_dir.to_path_buf(),
        }
    }

    pub fn config(&self) -> PathBuf {
        self.run_dir.join("config.toml")
    }
    pub fn trajectory(&self) -> PathBuf {
        self.run_dir.join("trajectory.fpd")
    }
    pub fn trajectory_csv(&self) -> PathBuf {
        self.run_dir.join("trajectory.csv")
    }
    pub fn trajectory_stats(&self) -> PathBuf {
        self.run_dir.join("trajectory_stats.json")
    }
    pub fn drift_dir(&self) -> PathBuf {
        self.run_dir.join("drift")
    }
    pub fn drift_component(&self, k: usize) -> PathBuf {
        self.drift_dir().join(format!("component_{k}.ckpt"))
    }
    pub fn drift_report(&self) -> PathBuf {
        self.run_dir.join("drift_report.json")
    }
    pub fn diffusion_dir(&self) -> PathBuf {
        self.run_dir.join("diffusion")
    }
    pub fn diffusion_entry(&self, i: usize, j: usize) -> PathBuf {
        self.diffusion_dir().join(format!("entry_{i}_{j}.ckpt"))
    }
    pub fn diffusion_report(&self) -> PathBuf {
        self.run_dir.join("diffusion_report.json")
    }
    pub fn density(&self) -> PathBuf {
        self.run_dir.join("density.ckpt")
    }
    pub fn solve_report(&self) -> PathBuf {
        self.run_dir.join("solve_report.json")
    }
    pub fn verify_dir(&self) -> PathBuf {
        self.run_dir.join("verify")
    }
    pub fn verify_stats(&self) -> PathBuf {
        self.verify_dir().join("statistics.json")
    }
    pub fn marginal_csv(&self, label: &str) -> PathBuf {
        self.verify_dir().join(format!("marginal_{label}.csv"))
    }
    pub fn marginal_svg(&self, label: &str) -> PathBuf {
        self.verify_dir().join(format!("marginal_{label}.svg"))
    }
    pub fn report_dir(&self) -> PathBuf {
        self.run_dir.join("report")
    }
    pub fn report_table(&self) -> PathBuf {
        self.report_dir().join("statistics_table.json")
    }
    pub fn density_grid_csv(&self) -> PathBuf {
        self.report_dir().join("density_grid.csv")
    }
    pub fn heatmap(&self, label: &str) -> PathBuf {
        self.report_dir().join(format!("heatmap_{label}.svg"))
    }
    pub fn timing(&self) -> PathBuf {
        self.run_dir.join("timing.json")
    }
}

/// Wall-clock times are segregated here so every other artifact is
/// byte-reproducible across runs.
#[derive(Debug, Default, Serialize, serde::Deserialize)]
pub struct Timing {
    pub stages: std::collections::BTreeMap<String, f64>,
}

pub fn record_timing(layout: &Layout, stage: &str, seconds: f64) -> CliResult<()> {
    let mut timing: Timing = read_json(&layout.timing()).unwrap_or_default();
    timing.stages.insert(stage.to_string(), seconds);
    write_json_atomic(&layout.timing(), &timing)
}
