use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use d3dp::aggregate::Aggregator;
use d3dp::camera::CameraIntrinsics;
use d3dp::denoise::{RegressionTarget, TrainConfig};
use d3dp::metrics::Alignment;
use d3dp::sampler::{FlipMode, SamplerConfig, SigmaMode};
use d3dp::synth::ScenarioConfig;
use d3dp::Skeleton;

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Perfect,
    Contractive,
    Noisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserConfig {
    /// Use a ground-truth oracle instead of a trained network.
    pub oracle: Option<OracleKind>,
    pub contraction: f64,
    pub noise_mm: f64,
    pub checkpoint: Option<PathBuf>,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub target: RegressionTarget,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            oracle: None,
            contraction: 0.5,
            noise_mm: 20.0,
            checkpoint: None,
            hidden_width: 64,
            hidden_layers: 2,
            target: RegressionTarget::PredictY0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchGrid {
    pub hypotheses: Vec<usize>,
    pub iterations: Vec<usize>,
}

impl Default for BenchGrid {
    fn default() -> Self {
        Self {
            hypotheses: vec![1, 5, 10, 20],
            iterations: vec![1, 5, 10],
        }
    }
}

/// Every knob of a run, serialized as one JSON document.
///
/// `seed` is the single source of randomness; it replaces the seeds of the
/// nested scenario, sampler and training sections when the config is resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Dataset directory; defaults to `<out>/dataset`.
    pub dataset: Option<PathBuf>,
    pub t_max: usize,
    pub signal_scale: f64,
    /// Image width (pixels) used to mirror 2D keypoints for flip augmentation.
    pub image_width: f64,
    pub camera_file: Option<PathBuf>,
    pub skeleton_file: Option<PathBuf>,
    pub scenario: ScenarioConfig,
    pub sampler: SamplerConfig,
    pub denoiser: DenoiserConfig,
    pub train: TrainConfig,
    pub aggregators: Vec<Aggregator>,
    pub alignment: Alignment,
    pub bench: BenchGrid,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            dataset: None,
            t_max: 1000,
            signal_scale: 2.0,
            image_width: 1000.0,
            camera_file: None,
            skeleton_file: None,
            scenario: ScenarioConfig::default(),
            sampler: SamplerConfig::default(),
            denoiser: DenoiserConfig::default(),
            train: TrainConfig::default(),
            aggregators: Aggregator::ALL.to_vec(),
            alignment: Alignment::Similarity,
            bench: BenchGrid::default(),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub hypotheses: Option<usize>,
    pub iterations: Option<usize>,
    pub aggregators: Option<Vec<Aggregator>>,
    pub oracle: Option<OracleKind>,
    pub flip: Option<FlipMode>,
    pub sigma_mode: Option<SigmaMode>,
    pub checkpoint: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, Failure> {
        let mut cfg = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Failure::config(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Failure::config(format!("invalid config {}: {e}", p.display())))?
            }
        };
        cfg.apply(overrides);
        cfg.resolve()?;
        Ok(cfg)
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(h) = o.hypotheses {
            self.sampler.hypotheses = h;
            self.scenario.hypotheses = h;
        }
        if let Some(k) = o.iterations {
            self.sampler.iterations = k;
        }
        if let Some(a) = &o.aggregators {
            self.aggregators = a.clone();
        }
        if let Some(k) = o.oracle {
            self.denoiser.oracle = Some(k);
        }
        if let Some(f) = o.flip {
            self.sampler.flip = f;
        }
        if let Some(m) = o.sigma_mode {
            self.sampler.sigma_mode = m;
        }
        if let Some(c) = &o.checkpoint {
            self.denoiser.checkpoint = Some(c.clone());
        }
    }

    /// Pulls in referenced files, propagates the seed and checks consistency.
    fn resolve(&mut self) -> Result<(), Failure> {
        if let Some(p) = &self.camera_file {
            self.scenario.camera = CameraIntrinsics::load(p)
                .map_err(|e| Failure::config(format!("camera file {}: {e}", p.display())))?;
        }
        if let Some(p) = &self.skeleton_file {
            self.scenario.skeleton =
                Skeleton::load(p).map_err(|e| Failure::config(format!("skeleton file {}: {e}", p.display())))?;
        }
        self.scenario.seed = self.seed;
        self.sampler.seed = self.seed;
        self.train.seed = self.seed;
        if self.t_max < 2 {
            return Err(Failure::config("t_max must be at least 2"));
        }
        self.sampler
            .validate(self.t_max)
            .map_err(|e| Failure::config(format!("sampler: {e}")))?;
        self.scenario
            .validate()
            .map_err(|e| Failure::config(format!("scenario: {e}")))?;
        if self.signal_scale.is_nan() || self.signal_scale <= 0.0 {
            return Err(Failure::config("signal_scale must be positive"));
        }
        if self.aggregators.is_empty() {
            return Err(Failure::config("no aggregators requested"));
        }
        Ok(())
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.dataset.clone().unwrap_or_else(|| self.out.join("dataset"))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config_sha256: String,
    config: &'a RunConfig,
}

pub fn write_run_manifest(cfg: &RunConfig, command: &str, dir: &Path) -> Result<(), Failure> {
    let m = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config_sha256: cfg.hash(),
        config: cfg,
    };
    let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
    crate::write_file(&dir.join(format!("{command}_manifest.json")), &text)
}
