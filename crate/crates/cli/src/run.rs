use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context as _, Result};
use attfusion::attitude::AttitudeError;
use attfusion::counterfactual::CounterfactualError;
use attfusion::rng::derive_seed;
use serde::Serialize;

pub struct Context {
    pub seed: u64,
    pub quiet: bool,
}

impl Context {
    /// Seed for one purpose, derived from the global `--seed`.
    pub fn seed_for(&self, purpose: &str) -> u64 {
        derive_seed(self.seed, purpose, &[])
    }

    pub fn info(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// 2 for numerical failures (divergence, separation, singular systems), 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<AttitudeError>() {
            if matches!(e, AttitudeError::Divergence { .. } | AttitudeError::Separation { .. } | AttitudeError::Mnl(_)) {
                return 2;
            }
        }
        if let Some(CounterfactualError::RankDeficient { .. }) = cause.downcast_ref::<CounterfactualError>() {
            return 2;
        }
    }
    1
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let tmp = path.with_file_name(format!(
        ".{}.tmp",
        path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, serde_json::to_string_pretty(value)?.as_bytes())
}

/// `<dir>/<stem>.<suffix>` for an output file `path`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Provenance record written next to every output.
#[derive(Serialize)]
pub struct RunManifest<'a, C: Serialize> {
    pub subcommand: &'a str,
    pub argv: Vec<String>,
    pub config: &'a C,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub tool_version: &'static str,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub struct Recorder {
    started: u128,
}

impl Recorder {
    pub fn start() -> Self {
        Self { started: unix_ms() }
    }

    /// Writes the manifest: `<out>/run_manifest.json` when `out` is a
    /// directory, `<out>.manifest.json` otherwise.
    pub fn finish<C: Serialize>(
        self,
        ctx: &Context,
        subcommand: &str,
        config: &C,
        out: &Path,
        inputs: Vec<PathBuf>,
        outputs: Vec<PathBuf>,
    ) -> Result<()> {
        let m = RunManifest {
            subcommand,
            argv: std::env::args().collect(),
            config,
            seed: ctx.seed,
            inputs,
            outputs,
            tool_version: env!("CARGO_PKG_VERSION"),
            started_unix_ms: self.started,
            finished_unix_ms: unix_ms(),
        };
        let path = if out.is_dir() {
            out.join("run_manifest.json")
        } else {
            let name = out.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
            out.with_file_name(format!("{name}.manifest.json"))
        };
        write_json(&path, &m)
    }
}
