//! Reproducibility manifests: tool version, config hash, seed and the
//! sha256 of every output of the configured subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::commands::{self, Output};
use crate::config::Resolved;
use crate::error::{CliError, EXIT_CHECK_FAILED, EXIT_OK};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunEntry {
    pub command: String,
    pub exit_code: i32,
    /// File name to sha256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub runs: Vec<RunEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Runs every configured subcommand on a pool of `threads` threads.
pub fn produce(r: &Resolved, config_text: &str, threads: usize) -> Result<(Manifest, Output), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    let mut all = Output::default();
    let mut runs = Vec::new();
    for &cmd in &r.commands {
        let out = pool.install(|| commands::run(cmd, r))?;
        let outputs = out.files.iter().map(|(n, b)| (n.clone(), sha256_hex(b))).collect();
        runs.push(RunEntry {
            command: cmd.name().into(),
            exit_code: if out.failed { EXIT_CHECK_FAILED } else { EXIT_OK },
            outputs,
        });
        all.files.extend(out.files);
        all.report.push_str(&out.report);
    }
    let manifest = Manifest {
        tool: "specradius".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: sha256_hex(config_text.as_bytes()),
        seed: r.config.experiment.seed,
        runs,
    };
    Ok((manifest, all))
}

pub fn to_bytes(m: &Manifest) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(m).expect("manifest serialises");
    s.push('\n');
    s.into_bytes()
}

/// Builds the manifest; with `verify`, repeats the run at the same thread
/// count and on a single thread and compares all three.
pub fn cmd_manifest(r: &Resolved, config_text: &str, threads: usize, verify: bool) -> Result<Output, CliError> {
    let many = if verify { threads.max(2) } else { threads };
    let (m, mut out) = produce(r, config_text, many)?;
    let mut report = String::new();
    let mut failed = false;
    if verify {
        for (label, t) in [("repeat", many), ("single-thread", 1)] {
            let (other, _) = produce(r, config_text, t)?;
            let same = other == m;
            failed |= !same;
            writeln!(report, "verify {label} (threads {many} vs {t}): {}", if same { "identical" } else { "MISMATCH" }).ok();
            if !same {
                for (a, b) in m.runs.iter().zip(&other.runs) {
                    for (file, h) in &a.outputs {
                        if b.outputs.get(file) != Some(h) {
                            writeln!(report, "  differs: {file}").ok();
                        }
                    }
                }
            }
        }
    }
    let bytes = to_bytes(&m);
    report.insert_str(0, &String::from_utf8_lossy(&bytes));
    out.files.push((MANIFEST_FILE.into(), bytes));
    out.report = report;
    out.failed = failed;
    Ok(out)
}

/// Re-hashes the config and every output listed in a manifest; outputs
/// are looked up next to the manifest file.
pub fn cmd_check(manifest_path: &Path, config_text: &str) -> Result<Output, CliError> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| CliError::Io(format!("{}: {e}", manifest_path.display())))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Config { line: Some(e.line()), msg: e.to_string() })?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut report = String::new();
    let mut failed = false;
    if sha256_hex(config_text.as_bytes()) != m.config_sha256 {
        failed = true;
        writeln!(report, "hash mismatch: config").ok();
    }
    for run in &m.runs {
        for (file, want) in &run.outputs {
            match std::fs::read(dir.join(file)) {
                Ok(b) if sha256_hex(&b) == *want => writeln!(report, "ok: {file}").ok(),
                Ok(_) => {
                    failed = true;
                    writeln!(report, "hash mismatch: {file}").ok()
                }
                Err(_) => {
                    failed = true;
                    writeln!(report, "missing: {file}").ok()
                }
            };
        }
    }
    Ok(Output { files: Vec::new(), report, failed })
}
