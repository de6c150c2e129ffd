//! TOML run configuration.

use std::path::{Path, PathBuf};

use aimrom::integrate::SamplerConfig;
use aimrom::nn::TrainConfig;
use aimrom::rom::{ModelKind, PipelineConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Model store directory; defaults to `<out>/models`.
    #[serde(default)]
    pub store: Option<PathBuf>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub sample: Option<SampleConfig>,
    #[serde(default)]
    pub train: Option<TrainSection>,
    #[serde(default)]
    pub pipeline: Option<PipelineConfig>,
    #[serde(default)]
    pub ensemble: Option<EnsembleConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: ModelKind,
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default)]
    pub n_modes: Option<usize>,
    pub initial_condition: Vec<f64>,
    pub final_time: f64,
    pub dt: f64,
    #[serde(default = "default_grid")]
    pub grid_nodes: usize,
}

fn default_grid() -> usize {
    aimrom::spectral::DEFAULT_GRID_NODES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub model: ModelKind,
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default)]
    pub n_modes: Option<usize>,
    pub dt: f64,
    pub sampler: SamplerConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainKind {
    /// Reduced vector field learned from scratch.
    BlackBox,
    /// Truncated Galerkin field plus a learned correction.
    GrayBox,
    /// Network from reduced coordinates to the remaining coordinates.
    Closure,
    Autoencoder,
    /// Network from reduced coordinates to the latent coordinates of a stored model.
    LatentMap,
    Pod,
    /// Diffusion map with harmonic pruning and a geometric-harmonics lift.
    Dmaps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub kind: TrainKind,
    pub alias: String,
    /// Dataset CSV written by `sample`.
    pub dataset: PathBuf,
    pub model: ModelKind,
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default)]
    pub n_reduced: Option<usize>,
    #[serde(default)]
    pub hidden: Option<Vec<usize>>,
    /// Autoencoder bottleneck width; defaults to `n_reduced`.
    #[serde(default)]
    pub bottleneck: Option<usize>,
    /// Stored POD model whose coordinates replace Fourier coefficients.
    #[serde(default)]
    pub pod: Option<String>,
    /// Stored latent model (autoencoder or double diffusion map) for `latent-map`.
    #[serde(default)]
    pub latent: Option<String>,
    #[serde(default = "yes")]
    pub center: bool,
    #[serde(default)]
    pub dmaps: DmapsSettings,
    #[serde(default)]
    pub optimizer: TrainConfig,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmapsSettings {
    /// Kernel bandwidth; the median squared distance when absent.
    pub epsilon: Option<f64>,
    pub n_eigs: usize,
    pub bandwidth_factor: f64,
    pub residual_threshold: f64,
    /// Lift bandwidth; the median squared distance of the embedding when absent.
    pub epsilon_star: Option<f64>,
    pub delta: f64,
    /// Use at most this many leading snapshots.
    pub max_points: Option<usize>,
}

impl Default for DmapsSettings {
    fn default() -> Self {
        Self {
            epsilon: None,
            n_eigs: 10,
            bandwidth_factor: 3.0,
            residual_threshold: 0.2,
            epsilon_star: None,
            delta: 1e-6,
            max_points: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_ic: usize,
    pub final_time: f64,
    pub ic_box: Vec<[f64; 2]>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bins")]
    pub n_bins: usize,
    pub members: Vec<EnsembleMemberConfig>,
}

fn default_bins() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleMemberConfig {
    pub label: String,
    pub pipeline: PipelineConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Replaces every seed in the document.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(s) = &mut self.sample {
            s.sampler.seed = seed;
        }
        if let Some(t) = &mut self.train {
            t.optimizer.seed = seed;
        }
        if let Some(p) = &mut self.pipeline {
            p.seed = seed;
        }
        if let Some(e) = &mut self.ensemble {
            e.seed = seed;
            for m in &mut e.members {
                m.pipeline.seed = seed;
            }
        }
    }
}
