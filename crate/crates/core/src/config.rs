//! Flat `key = value` pipeline configuration with strict unknown-key
//! rejection. Every stage of the pipeline reads its knobs from here so a
//! config file plus a seed pins a whole run.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::extraction::ExtractionConfig;
use crate::hmm::{FeatureMode, GaussianSelectOptions, SelectOptions, Topology, TrainOptions};
use crate::synth::{DatasetParams, NoiseSigmas, Variability};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Common sampling rate (Hz) for synthesis and resampling.
    pub rate: f64,
    pub smooth_window: usize,
    pub min_reach_magnitude: f64,
    pub min_rotate_magnitude: f64,
    pub debounce: usize,
    pub peak_min_prominence: f64,
    /// Optional tabulated profile CSV; the analytic bell when absent.
    pub profile_path: Option<String>,

    pub hmm_n_min: usize,
    pub hmm_n_max: usize,
    pub hmm_topologies: TopologyChoice,
    pub hmm_restarts: usize,
    pub hmm_epsilon: f64,
    pub hmm_max_iter: usize,
    pub hmm_tol: f64,

    pub gmm_components: usize,
    pub gmm_n_min: usize,
    pub gmm_n_max: usize,
    pub gmm_restarts: usize,
    pub gmm_max_iter: usize,
    pub raw_features: FeatureMode,

    pub subjects: usize,
    pub trials_per_action: usize,
    pub noise_scale: f64,
    pub variability: Variability,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyChoice {
    Both,
    Bakis,
    Ergodic,
}

impl TopologyChoice {
    fn parse(s: &str) -> Option<TopologyChoice> {
        match s {
            "both" => Some(TopologyChoice::Both),
            "bakis" => Some(TopologyChoice::Bakis),
            "ergodic" => Some(TopologyChoice::Ergodic),
            _ => None,
        }
    }

    pub fn topologies(self) -> Vec<Topology> {
        match self {
            TopologyChoice::Both => vec![Topology::Bakis, Topology::Ergodic],
            TopologyChoice::Bakis => vec![Topology::Bakis],
            TopologyChoice::Ergodic => vec![Topology::Ergodic],
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            rate: 50.0,
            smooth_window: 5,
            min_reach_magnitude: 0.10,
            min_rotate_magnitude: 0.5,
            debounce: 5,
            peak_min_prominence: 0.2,
            profile_path: None,
            hmm_n_min: 3,
            hmm_n_max: 10,
            hmm_topologies: TopologyChoice::Both,
            hmm_restarts: 5,
            hmm_epsilon: 0.01,
            hmm_max_iter: 100,
            hmm_tol: 1e-4,
            gmm_components: 2,
            gmm_n_min: 3,
            gmm_n_max: 5,
            gmm_restarts: 2,
            gmm_max_iter: 30,
            raw_features: FeatureMode::Reduced,
            subjects: 5,
            trials_per_action: 6,
            noise_scale: 1.0,
            variability: Variability::Default,
            seed: 42,
        }
    }
}

impl PipelineConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unknown keys are
    /// rejected by name.
    pub fn parse(text: &str) -> Result<PipelineConfig> {
        let mut config = PipelineConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Argument(format!("config line {}: expected `key = value`", i + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            config.set(key, value).map_err(|e| match e {
                Error::Argument(msg) => {
                    Error::Argument(format!("config line {}: {msg}", i + 1))
                }
                other => other,
            })?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PipelineConfig::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Argument(format!("bad value `{value}` for `{key}`")))
        }
        match key {
            "rate" => self.rate = num(key, value)?,
            "smooth_window" => self.smooth_window = num(key, value)?,
            "min_reach_magnitude" => self.min_reach_magnitude = num(key, value)?,
            "min_rotate_magnitude" => self.min_rotate_magnitude = num(key, value)?,
            "debounce" => self.debounce = num(key, value)?,
            "peak_min_prominence" => self.peak_min_prominence = num(key, value)?,
            "profile" => self.profile_path = Some(value.to_string()),
            "hmm_n_min" => self.hmm_n_min = num(key, value)?,
            "hmm_n_max" => self.hmm_n_max = num(key, value)?,
            "hmm_topologies" => {
                self.hmm_topologies = TopologyChoice::parse(value).ok_or_else(|| {
                    Error::Argument(format!(
                        "bad value `{value}` for `hmm_topologies` (both|bakis|ergodic)"
                    ))
                })?
            }
            "hmm_restarts" => self.hmm_restarts = num(key, value)?,
            "hmm_epsilon" => self.hmm_epsilon = num(key, value)?,
            "hmm_max_iter" => self.hmm_max_iter = num(key, value)?,
            "hmm_tol" => self.hmm_tol = num(key, value)?,
            "gmm_components" => self.gmm_components = num(key, value)?,
            "gmm_n_min" => self.gmm_n_min = num(key, value)?,
            "gmm_n_max" => self.gmm_n_max = num(key, value)?,
            "gmm_restarts" => self.gmm_restarts = num(key, value)?,
            "gmm_max_iter" => self.gmm_max_iter = num(key, value)?,
            "raw_features" => {
                self.raw_features = FeatureMode::parse(value).ok_or_else(|| {
                    Error::Argument(format!(
                        "bad value `{value}` for `raw_features` (reduced|full)"
                    ))
                })?
            }
            "subjects" => self.subjects = num(key, value)?,
            "trials_per_action" => self.trials_per_action = num(key, value)?,
            "noise_scale" => self.noise_scale = num(key, value)?,
            "variability" => {
                self.variability = Variability::parse(value).ok_or_else(|| {
                    Error::Argument(format!(
                        "bad value `{value}` for `variability` (default|high)"
                    ))
                })?
            }
            "seed" => self.seed = num(key, value)?,
            _ => return Err(Error::Argument(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.extraction()?.validate()?;
        if !(self.rate > 0.0) {
            return Err(Error::Argument("rate must be > 0".into()));
        }
        if self.hmm_n_min == 0 || self.hmm_n_min > self.hmm_n_max {
            return Err(Error::Argument("need 1 <= hmm_n_min <= hmm_n_max".into()));
        }
        if self.gmm_n_min == 0 || self.gmm_n_min > self.gmm_n_max {
            return Err(Error::Argument("need 1 <= gmm_n_min <= gmm_n_max".into()));
        }
        if self.hmm_restarts == 0 || self.gmm_restarts == 0 {
            return Err(Error::Argument("restarts must be >= 1".into()));
        }
        if self.gmm_components == 0 {
            return Err(Error::Argument("gmm_components must be >= 1".into()));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(Error::Argument("noise_scale must be >= 0".into()));
        }
        Ok(())
    }

    pub fn extraction(&self) -> Result<ExtractionConfig> {
        let config = ExtractionConfig {
            min_reach_magnitude: self.min_reach_magnitude,
            min_rotate_magnitude: self.min_rotate_magnitude,
            debounce: self.debounce,
            peak_min_prominence: self.peak_min_prominence,
            smooth_window: self.smooth_window,
            ..ExtractionConfig::default()
        };
        config.validate()?;
        Ok(config)
    }

    pub fn dataset(&self) -> DatasetParams {
        DatasetParams {
            n_subjects: self.subjects,
            trials_per_action: self.trials_per_action,
            noise: NoiseSigmas::scaled(self.noise_scale),
            rate: self.rate,
            seed: self.seed,
            variability: self.variability,
        }
    }

    pub fn select_options(&self) -> SelectOptions {
        SelectOptions {
            n_range: self.hmm_n_min..=self.hmm_n_max,
            topologies: self.hmm_topologies.topologies(),
            restarts: self.hmm_restarts,
            train: TrainOptions {
                smoothing: self.hmm_epsilon,
                max_iter: self.hmm_max_iter,
                tol: self.hmm_tol,
                seed: self.seed,
            },
        }
    }

    pub fn gaussian_options(&self) -> GaussianSelectOptions {
        GaussianSelectOptions {
            n_range: self.gmm_n_min..=self.gmm_n_max,
            topologies: self.hmm_topologies.topologies(),
            restarts: self.gmm_restarts,
            n_components: self.gmm_components,
            train: TrainOptions {
                smoothing: self.hmm_epsilon,
                max_iter: self.gmm_max_iter,
                tol: self.hmm_tol,
                seed: self.seed,
            },
        }
    }
}
