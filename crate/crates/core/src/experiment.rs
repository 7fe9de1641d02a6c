//! Experiment specs, result bundles and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compare::{compare_policies, emissions, write_comparison, write_records, CompareSetup, ComparisonReport};
use crate::error::{Error, Result};
use crate::optimal::{write_metrics, LpOptions};
use crate::sim::{SimConfig, GENERATOR};
use crate::state::{AirportConfig, Fairness};
use crate::transition::{build_transitions, TransitionModel};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Airport config path, relative to the spec file.
    pub airport: PathBuf,
    pub betas: Vec<f64>,
    pub thresholds: Vec<u32>,
    #[serde(default)]
    pub sim: Option<SimConfig>,
    /// Overrides the airport's fairness rule.
    #[serde(default)]
    pub fairness: Option<Fairness>,
    /// Relative to the spec file.
    pub output_dir: PathBuf,
    /// kg per aircraft-minute.
    #[serde(default)]
    pub emissions_factor: Option<f64>,
    /// Cost weight reported for threshold policies.
    #[serde(default = "default_threshold_beta")]
    pub threshold_beta: f64,
    #[serde(default = "yes")]
    pub mls: bool,
}

fn default_threshold_beta() -> f64 {
    10.0
}

fn yes() -> bool {
    true
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() {
            return Err(Error::InvalidArgument("beta list is empty".into()));
        }
        if self.thresholds.is_empty() {
            return Err(Error::InvalidArgument("threshold list is empty".into()));
        }
        if let Some(sim) = &self.sim {
            sim.validate()?;
        }
        if let Some(f) = self.emissions_factor {
            if !(f > 0.0) {
                return Err(Error::InvalidArgument(format!("emissions factor {f} must be positive")));
            }
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Run record. Contains no timestamps so reruns are byte-identical.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub generator: String,
    pub config_sha256: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    /// Stage name to `ok` or the failure message.
    pub stages: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config: &AirportConfig, seed: Option<u64>) -> Self {
        Manifest {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            seed,
            generator: GENERATOR.into(),
            config_sha256: sha256_hex(config.to_json().as_bytes()),
            ..Default::default()
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        self.inputs.insert(name, sha256_hex(&bytes));
        Ok(())
    }

    pub fn failed(&self) -> bool {
        self.stages.values().any(|s| s != "ok")
    }
}

/// Output directory that hashes every file it writes.
pub struct Bundle {
    dir: PathBuf,
    pub manifest: Manifest,
}

impl Bundle {
    pub fn create(dir: &Path, manifest: Manifest) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Bundle { dir: dir.to_path_buf(), manifest })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.manifest.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    /// Records a stage outcome; failures leave a labeled marker file.
    pub fn stage<T>(&mut self, name: &str, result: Result<T>) -> Result<Option<T>> {
        match result {
            Ok(v) => {
                self.manifest.stages.insert(name.into(), "ok".into());
                Ok(Some(v))
            }
            Err(e) => {
                let msg = e.to_string();
                self.write(&format!("FAILED_{name}.txt"), format!("{msg}\n").as_bytes())?;
                self.manifest.stages.insert(name.into(), format!("failed: {msg}"));
                Ok(None)
            }
        }
    }

    pub fn finish(self) -> Result<Manifest> {
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        fs::write(self.dir.join("manifest.json"), text)?;
        Ok(self.manifest)
    }
}

pub fn policy_file(beta: f64) -> String {
    format!("policies/policy_beta_{beta}.csv")
}

/// Writes the metric tables, policies, comparison and emissions of a finished
/// comparison into `bundle`.
pub fn write_report(
    bundle: &mut Bundle,
    model: &TransitionModel,
    report: &ComparisonReport,
    factor: Option<f64>,
) -> Result<()> {
    bundle.write("config.json", model.config().to_json().as_bytes())?;
    let opt: Vec<_> = report.optimal.iter().filter_map(|r| Some((r.beta, r.analytic?))).collect();
    bundle.write_with("optimal_metrics.csv", |b| write_metrics("beta", &opt, b))?;
    let thr: Vec<_> = report.threshold.iter().filter_map(|r| Some((r.parameter, r.analytic?))).collect();
    bundle.write_with("threshold_metrics.csv", |b| write_metrics("threshold", &thr, b))?;
    if !report.mls.is_empty() {
        bundle.write_with("mls_metrics.csv", |b| write_records(&report.mls, b))?;
    }
    let all: Vec<_> = report.optimal.iter().chain(&report.threshold).chain(&report.mls).cloned().collect();
    bundle.write_with("records.csv", |b| write_records(&all, b))?;
    for (beta, policy) in &report.policies {
        bundle.write_with(&policy_file(*beta), |b| policy.write_csv(model, b))?;
    }
    bundle.write_with("comparison.csv", |b| write_comparison(&report.rows, b))?;
    if let Some(f) = factor {
        let rows = emissions(&report.rows, f)?;
        bundle.write_with("emissions.csv", |b| write_emissions(&rows, b))?;
    }
    if !report.failures.is_empty() {
        bundle.write("failures.txt", (report.failures.join("\n") + "\n").as_bytes())?;
    }
    Ok(())
}

pub fn write_emissions<W: std::io::Write>(rows: &[crate::compare::EmissionsRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads the spec's airport config, applying the fairness override.
pub fn load_airport(spec: &ExperimentSpec, base: &Path) -> Result<(PathBuf, AirportConfig)> {
    let path = base.join(&spec.airport);
    let text = fs::read_to_string(&path)?;
    let mut cfg = AirportConfig::from_json(&text)?;
    if let Some(f) = spec.fairness {
        cfg.fairness = f;
    }
    cfg.validate()?;
    Ok((path, cfg))
}

/// Runs the full experiment. `out` and `seed` override the spec.
pub fn run_experiment(spec_path: &Path, out: Option<&Path>, seed: Option<u64>, lp: &LpOptions) -> Result<Manifest> {
    let text = fs::read_to_string(spec_path)?;
    let mut spec = ExperimentSpec::from_json(&text)?;
    let base = spec_path.parent().unwrap_or(Path::new("."));
    if let (Some(s), Some(sim)) = (seed, spec.sim.as_mut()) {
        sim.seed = s;
    }
    let (airport_path, cfg) = load_airport(&spec, base)?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| base.join(&spec.output_dir));
    let mut manifest = Manifest::new("run", &cfg, spec.sim.map(|s| s.seed));
    manifest.input(spec_path)?;
    manifest.input(&airport_path)?;
    let mut bundle = Bundle::create(&dir, manifest)?;

    let model = bundle.stage("build", build_transitions(&cfg))?;
    if let Some(model) = model {
        let setup = CompareSetup {
            betas: &spec.betas,
            thresholds: &spec.thresholds,
            threshold_beta: spec.threshold_beta,
            sim: spec.sim,
            mls: spec.mls,
            lp: *lp,
        };
        let report = compare_policies(&model, &setup);
        if let Some(report) = bundle.stage("compare", report)? {
            let written = write_report(&mut bundle, &model, &report, spec.emissions_factor);
            bundle.stage("write", written)?;
            if !report.failures.is_empty() {
                bundle.manifest.stages.insert("points".into(), format!("failed: {}", report.failures.join("; ")));
            }
        }
    }
    bundle.finish()
}
