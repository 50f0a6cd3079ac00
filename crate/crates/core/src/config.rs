//! Flat `key = value` run configuration.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::minibatch::DEFAULT_BATCH;
use crate::pipeline::{FeatureProvider, PipelineConfig};
use crate::registration::MetricMode;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Root seed; `pipeline.seed` and `pipeline.solver.seed` follow it.
    pub seed: u64,
    pub pipeline: PipelineConfig,
    pub batch_size: usize,
    pub batch_count: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { seed: 0, pipeline: PipelineConfig::default(), batch_size: DEFAULT_BATCH, batch_count: 8 }
    }
}

/// Every accepted key, in the order `describe` lists them.
pub const KEYS: [&str; 21] = [
    "seed",
    "epsilon",
    "outer_iters",
    "inner_iters",
    "tol",
    "alpha",
    "mass",
    "super_points",
    "features",
    "feature_dim",
    "feature_noise",
    "descriptor_radius",
    "overlap_filter",
    "n_samples",
    "temperature",
    "normalize",
    "inlier_thresh",
    "ransac_iters",
    "mode",
    "batch_size",
    "batch_count",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::invalid(format!("bad value {value:?} for {key}")))
}

impl RunConfig {
    /// Reads a config file; blank lines and `#` comments are skipped.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(path, &fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, path: &Path, text: &str) -> Result<()> {
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (key, value) = pair.split_once('=').ok_or_else(|| Error::invalid(format!("expected key=value, got {pair:?}")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let p = &mut self.pipeline;
        match key {
            "seed" => {
                self.seed = parse(key, value)?;
                p.seed = self.seed;
                p.solver.seed = self.seed;
            }
            "epsilon" => p.solver.epsilon = parse(key, value)?,
            "outer_iters" => p.solver.outer_iters = parse(key, value)?,
            "inner_iters" => p.solver.inner_iters = parse(key, value)?,
            "tol" => p.solver.tol = parse(key, value)?,
            "alpha" => p.alpha = parse(key, value)?,
            "mass" => p.mass = parse(key, value)?,
            "super_points" => p.super_points = parse(key, value)?,
            "features" => {
                let (dim, noise, radius) = self.feature_params();
                self.pipeline.features = match value {
                    "oracle" => FeatureProvider::Oracle { dim, noise },
                    "descriptor" => FeatureProvider::Descriptor { dim, radius },
                    _ => return Err(Error::invalid(format!("unknown feature provider {value:?}"))),
                };
            }
            "feature_dim" => {
                let d = parse(key, value)?;
                match &mut p.features {
                    FeatureProvider::Oracle { dim, .. } | FeatureProvider::Descriptor { dim, .. } => *dim = d,
                }
            }
            "feature_noise" => match &mut p.features {
                FeatureProvider::Oracle { noise, .. } => *noise = parse(key, value)?,
                FeatureProvider::Descriptor { .. } => return Err(Error::invalid("feature_noise needs features = oracle")),
            },
            "descriptor_radius" => match &mut p.features {
                FeatureProvider::Descriptor { radius, .. } => *radius = parse(key, value)?,
                FeatureProvider::Oracle { .. } => return Err(Error::invalid("descriptor_radius needs features = descriptor")),
            },
            "overlap_filter" => p.overlap_filter = parse(key, value)?,
            "n_samples" => p.n_samples = parse(key, value)?,
            "temperature" => p.sampling.temperature = parse(key, value)?,
            "normalize" => p.sampling.normalize = parse(key, value)?,
            "inlier_thresh" => p.inlier_thresh = parse(key, value)?,
            "ransac_iters" => p.ransac_iters = parse(key, value)?,
            "mode" => {
                p.mode = match value {
                    "indoor" => MetricMode::Indoor,
                    "kitti" => MetricMode::Kitti,
                    _ => return Err(Error::invalid(format!("unknown mode {value:?}"))),
                }
            }
            "batch_size" => self.batch_size = parse(key, value)?,
            "batch_count" => self.batch_count = parse(key, value)?,
            _ => return Err(Error::invalid(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    fn feature_params(&self) -> (usize, f64, f64) {
        match self.pipeline.features {
            FeatureProvider::Oracle { dim, noise } => (dim, noise, 0.4),
            FeatureProvider::Descriptor { dim, radius } => (dim, 0.0, radius),
        }
    }

    /// `key = value` text that reproduces this configuration.
    pub fn describe(&self) -> String {
        let p = &self.pipeline;
        let (dim, noise, radius) = self.feature_params();
        let features = match p.features {
            FeatureProvider::Oracle { .. } => "oracle",
            FeatureProvider::Descriptor { .. } => "descriptor",
        };
        let mode = match p.mode {
            MetricMode::Indoor => "indoor",
            MetricMode::Kitti => "kitti",
        };
        let values: [String; 21] = [
            self.seed.to_string(),
            p.solver.epsilon.to_string(),
            p.solver.outer_iters.to_string(),
            p.solver.inner_iters.to_string(),
            p.solver.tol.to_string(),
            p.alpha.to_string(),
            p.mass.to_string(),
            p.super_points.to_string(),
            features.to_string(),
            dim.to_string(),
            noise.to_string(),
            radius.to_string(),
            p.overlap_filter.to_string(),
            p.n_samples.to_string(),
            p.sampling.temperature.to_string(),
            p.sampling.normalize.to_string(),
            p.inlier_thresh.to_string(),
            p.ransac_iters.to_string(),
            mode.to_string(),
            self.batch_size.to_string(),
            self.batch_count.to_string(),
        ];
        KEYS.iter()
            .zip(values)
            .filter(|(k, _)| match p.features {
                FeatureProvider::Oracle { .. } => **k != "descriptor_radius",
                FeatureProvider::Descriptor { .. } => **k != "feature_noise",
            })
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.solver.validate()?;
        if self.batch_size == 0 || self.batch_count == 0 {
            return Err(Error::invalid("batch_size and batch_count must be positive"));
        }
        if self.pipeline.n_samples < 3 {
            return Err(Error::invalid("n_samples must be at least 3"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(Path::new("run.cfg"), "# defaults\nseed = 7\nfeatures = oracle  # leak gt\nfeature_noise = 0.1\n\nmass=0.4\n")
            .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.pipeline.seed, 7);
        assert_eq!(cfg.pipeline.features, FeatureProvider::Oracle { dim: 32, noise: 0.1 });
        cfg.set_pair("mass=0.6").unwrap();
        assert_eq!(cfg.pipeline.mass, 0.6);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let mut cfg = RunConfig::default();
        let e = cfg.apply_text(Path::new("run.cfg"), "seed = 1\nbogus = 2\n").unwrap_err();
        assert_eq!(e.to_string(), "run.cfg:2: invalid argument: unknown config key \"bogus\"");
        assert!(cfg.apply_text(Path::new("run.cfg"), "seed\n").unwrap_err().to_string().starts_with("run.cfg:1:"));
        assert!(cfg.set("epsilon", "abc").is_err());
        assert!(cfg.set("feature_noise", "0.1").is_err());
    }

    #[test]
    fn describe_round_trips() {
        for text in ["features = oracle\nseed = 3\nmode = kitti\n", "descriptor_radius = 0.3\nnormalize = false\n"] {
            let mut a = RunConfig::default();
            a.apply_text(Path::new("a"), text).unwrap();
            let mut b = RunConfig::default();
            b.apply_text(Path::new("b"), &a.describe()).unwrap();
            assert_eq!(a, b);
        }
    }
}
