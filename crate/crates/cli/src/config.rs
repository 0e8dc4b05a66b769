//! Run configuration: defaults, an optional flat TOML file, then flags.

use std::path::Path;

use anyhow::Context;
use serde::Deserialize;

use narrate_core::embed::{PerturbationSpec, RegressionLossParams, ScoreScale, DEFAULT_JITTER};
use narrate_core::matching::MatchThresholds;
use narrate_core::stats::ReportEdges;

use crate::UsageError;

/// Keys accepted in a `--config` file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub iou_low: Option<f64>,
    pub iou_high: Option<f64>,
    pub max_start_diff: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub noise_scale: Option<f64>,
    pub mask_rate: Option<f64>,
    pub shuffle: Option<bool>,
    pub k: Option<usize>,
    pub jitter: Option<f64>,
    pub scale: Option<ScoreScale>,
    pub video_length_edges: Option<Vec<f64>>,
    pub clip_length_edges: Option<Vec<f64>>,
    pub clips_per_video_edges: Option<Vec<f64>>,
    pub word_edges: Option<Vec<f64>>,
    pub token_edges: Option<Vec<f64>>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub thresholds: MatchThresholds,
    pub loss_params: RegressionLossParams,
    pub perturbation: PerturbationSpec,
    pub k: usize,
    pub jitter: f64,
    pub scale: ScoreScale,
    pub edges: ReportEdges,
    pub seed: u64,
    /// 0 lets the thread pool pick.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            thresholds: MatchThresholds::default(),
            loss_params: RegressionLossParams::default(),
            perturbation: PerturbationSpec::default(),
            k: 2,
            jitter: DEFAULT_JITTER,
            scale: ScoreScale::Percent,
            edges: ReportEdges::default(),
            seed: 0,
            threads: 0,
        }
    }
}

/// Overrides from a config file or from flags.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub iou_low: Option<f64>,
    pub iou_high: Option<f64>,
    pub max_start_diff: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub noise_scale: Option<f64>,
    pub mask_rate: Option<f64>,
    pub shuffle: Option<bool>,
    pub k: Option<usize>,
    pub jitter: Option<f64>,
    pub scale: Option<ScoreScale>,
}

impl RunConfig {
    pub fn apply_file(&mut self, f: ConfigFile) {
        self.apply(&Overrides {
            seed: f.seed,
            threads: f.threads,
            iou_low: f.iou_low,
            iou_high: f.iou_high,
            max_start_diff: f.max_start_diff,
            alpha: f.alpha,
            beta: f.beta,
            noise_scale: f.noise_scale,
            mask_rate: f.mask_rate,
            shuffle: f.shuffle,
            k: f.k,
            jitter: f.jitter,
            scale: f.scale,
        });
        let e = &mut self.edges;
        if let Some(v) = f.video_length_edges {
            e.video_length_s = v;
        }
        if let Some(v) = f.clip_length_edges {
            e.clip_length_s = v;
        }
        if let Some(v) = f.clips_per_video_edges {
            e.clips_per_video = v;
        }
        if let Some(v) = f.word_edges {
            e.words = v;
        }
        if let Some(v) = f.token_edges {
            e.tokens = v;
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($src:ident => $($dst:tt)+) => {
                if let Some(v) = o.$src {
                    self.$($dst)+ = v;
                }
            };
        }
        set!(seed => seed);
        set!(threads => threads);
        set!(iou_low => thresholds.iou_low);
        set!(iou_high => thresholds.iou_high);
        set!(max_start_diff => thresholds.max_start_diff_s);
        set!(alpha => loss_params.alpha);
        set!(beta => loss_params.beta);
        set!(noise_scale => perturbation.noise_scale);
        set!(mask_rate => perturbation.mask_rate);
        set!(shuffle => perturbation.shuffle);
        set!(k => k);
        set!(jitter => jitter);
        set!(scale => scale);
        self.perturbation.seed = self.seed;
    }

    pub fn check(&self) -> Result<(), UsageError> {
        self.thresholds
            .check()
            .map_err(|e| UsageError(e.to_string()))?;
        self.loss_params
            .check()
            .map_err(|e| UsageError(e.to_string()))?;
        self.perturbation
            .check()
            .map_err(|e| UsageError(e.to_string()))?;
        if !(1..=3).contains(&self.k) {
            return Err(UsageError(format!("--k must be 1, 2 or 3, got {}", self.k)));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(UsageError(format!(
                "--jitter must be finite and >= 0, got {}",
                self.jitter
            )));
        }
        Ok(())
    }
}
