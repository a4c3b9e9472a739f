//! Run manifests: enough to rerun an experiment and check that every CSV
//! comes out byte-identical.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::case::load_case;
use crate::experiments::{run, Experiment, ExperimentConfig, ExperimentOutput};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub experiment: Experiment,
    pub config: ExperimentConfig,
    pub case_sha256: String,
    pub draw_seeds: Vec<u64>,
    pub outputs: Vec<OutputRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Runs `exp`, writes its CSVs and the manifest into `cfg.out`.
pub fn run_and_record(exp: Experiment, cfg: &ExperimentConfig) -> anyhow::Result<(RunManifest, ExperimentOutput)> {
    let (case, text) = load_case(&cfg.case)?;
    let output = run(exp, &case, cfg)?;
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("cannot create {}", cfg.out.display()))?;
    let mut outputs = Vec::new();
    for (name, table) in &output.tables {
        let bytes = table.write(&cfg.out.join(name))?;
        outputs.push(OutputRecord {
            file: name.clone(),
            rows: table.rows.len(),
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: exp,
        config: cfg.clone(),
        case_sha256: sha256_hex(text.as_bytes()),
        draw_seeds: output.draw_seeds.clone(),
        outputs,
    };
    let json = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(cfg.out.join(MANIFEST_FILE), json)?;
    Ok((manifest, output))
}

pub fn read_manifest(path: &Path) -> anyhow::Result<RunManifest> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("malformed manifest {}", path.display()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerunCheck {
    pub file: String,
    pub expected: String,
    pub actual: String,
}

impl RerunCheck {
    pub fn matches(&self) -> bool {
        self.expected == self.actual
    }
}

/// Repeats the recorded run into `out` and compares output digests.
pub fn rerun(manifest: &RunManifest, out: &Path) -> anyhow::Result<Vec<RerunCheck>> {
    let text = std::fs::read_to_string(&manifest.config.case)
        .with_context(|| format!("cannot read {}", manifest.config.case.display()))?;
    if sha256_hex(text.as_bytes()) != manifest.case_sha256 {
        bail!("case file {} changed since the recorded run", manifest.config.case.display());
    }
    let mut cfg = manifest.config.clone();
    cfg.out = out.to_path_buf();
    let (fresh, _) = run_and_record(manifest.experiment, &cfg)?;
    Ok(manifest
        .outputs
        .iter()
        .map(|rec| RerunCheck {
            file: rec.file.clone(),
            expected: rec.sha256.clone(),
            actual: fresh
                .outputs
                .iter()
                .find(|o| o.file == rec.file)
                .map(|o| o.sha256.clone())
                .unwrap_or_default(),
        })
        .collect())
}
