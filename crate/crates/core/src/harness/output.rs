//! Result files and their run manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::safety_sim::{ChainScenario, SweepResult, SweepRow};

pub const CSV_HEADER: &str = "p,scheme,fading_m,mean_collision_prob,ci_halfwidth,trials";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub n_cs_roster: String,
    pub collision_count: String,
    pub information_flow: String,
}

impl Default for Conventions {
    fn default() -> Self {
        Conventions {
            n_cs_roster: "vehicles of the sub-chain within r_CS (inclusive) of the transmitter, \
                          receiver excluded; hidden nodes beyond the receiver"
                .into(),
            collision_count: "collided vehicles / (n - 1) per trial".into(),
            information_flow:
                "min(direct, relay, brake light of the vehicle ahead) + own reaction time; \
                               sub-chain heads informed by brake lights"
                    .into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub grid: Vec<f64>,
    pub fading_m: Vec<u32>,
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: ChainScenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSettings>,
    pub conventions: Conventions,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(config: ChainScenario, seed: u64) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config,
            sweep: None,
            conventions: Conventions::default(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        }
    }

    pub fn with_sweep(mut self, sweep: SweepSettings) -> Self {
        self.sweep = Some(sweep);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub rows: Vec<SweepRow>,
    pub manifest: RunManifest,
}

pub fn to_csv(result: &SweepResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &result.rows {
        // `Display` for f64 is locale-free and round-trips.
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.p,
            r.scheme.label(),
            r.fading_m,
            r.mean_collision_prob,
            r.ci_halfwidth,
            r.trials
        )
        .expect("writing to a String");
    }
    out
}

pub fn to_json(result: &SweepResult, manifest: &RunManifest) -> Result<String> {
    let doc = ResultDocument {
        rows: result.rows.clone(),
        manifest: manifest.clone(),
    };
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str) -> Result<(SweepResult, RunManifest)> {
    let doc: ResultDocument = serde_json::from_str(text)?;
    Ok((SweepResult { rows: doc.rows }, doc.manifest))
}

/// Sidecar manifest written next to a CSV file: `<out>.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Writes `result` to `out`. CSV output gets a sidecar manifest; JSON
/// output embeds it.
pub fn emit_results(
    result: &SweepResult,
    manifest: &RunManifest,
    format: OutputFormat,
    out: &Path,
) -> Result<()> {
    if result.rows.is_empty() {
        return Err(Error::InvalidParameter(
            "nothing to write: empty result".into(),
        ));
    }
    match format {
        OutputFormat::Csv => {
            std::fs::write(out, to_csv(result))?;
            let mut m = serde_json::to_string_pretty(manifest)?;
            m.push('\n');
            std::fs::write(manifest_path(out), m)?;
        }
        OutputFormat::Json => std::fs::write(out, to_json(result, manifest)?)?,
    }
    Ok(())
}
