//! Pipeline configuration and its flat `key = value` file format.
//!
//! Every key has a default, so an empty file (or no file) is a valid
//! configuration. Lines starting with `#` are comments. The blur schedule is
//! written as colon-separated std-dev pairs: `schedule = 4:4,2:2,1:1`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::optim::OptimConfig;
use crate::{Error, Result};

/// Full parameterization of one denoising run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Blur std-dev pairs (x, y), strongest first.
    pub schedule: Vec<(f64, f64)>,
    /// Weight of the gradient-magnitude term mixed into each level.
    pub grad_weight: f64,
    /// Weight of the Laplacian term mixed into each level.
    pub lap_weight: f64,
    /// Color tolerance for region growing.
    pub color_tol: f64,
    /// Smallest component kept, in pixels.
    pub min_area: usize,
    /// Residual threshold for discovering new components at finer scales.
    pub residual_tol: f64,
    /// A component whose redraw diff falls below this is accepted and frozen.
    pub accept_diff: f64,
    /// Cubic segments per freshly initialized path.
    pub segments_per_path: usize,
    /// Subdivision refinements allowed per component before re-initialization.
    pub max_refinements: usize,
    pub optim: OptimConfig,
    /// Directory for debug dumps (pyramid levels, label maps); disabled when
    /// unset.
    pub dump_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            schedule: vec![(4.0, 4.0), (2.0, 2.0), (1.0, 1.0)],
            grad_weight: 0.0,
            lap_weight: 0.0,
            color_tol: 0.05,
            min_area: 16,
            residual_tol: 0.05,
            accept_diff: 0.1,
            segments_per_path: 4,
            max_refinements: 3,
            optim: OptimConfig::default(),
            dump_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::InvalidConfig("schedule must not be empty".into()));
        }
        for (sx, sy) in &self.schedule {
            if *sx <= 0.0 || *sy <= 0.0 {
                return Err(Error::InvalidConfig("schedule entries must be positive".into()));
            }
        }
        for pair in self.schedule.windows(2) {
            if pair[1].0 >= pair[0].0 || pair[1].1 >= pair[0].1 {
                return Err(Error::InvalidConfig(
                    "schedule must be strictly decreasing in both axes".into(),
                ));
            }
        }
        if self.grad_weight < 0.0 || self.lap_weight < 0.0 {
            return Err(Error::InvalidConfig("mix weights must be non-negative".into()));
        }
        if self.color_tol <= 0.0 || self.residual_tol <= 0.0 {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if self.min_area == 0 {
            return Err(Error::InvalidConfig("min_area must be at least 1".into()));
        }
        if self.accept_diff <= 0.0 {
            return Err(Error::InvalidConfig("accept_diff must be positive".into()));
        }
        if self.segments_per_path < 2 {
            return Err(Error::InvalidConfig("segments_per_path must be at least 2".into()));
        }
        self.optim.validate()
    }

    /// Parses the flat key-value format; unknown keys are rejected.
    pub fn from_str_config(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| {
                Error::InvalidConfig(format!("line {}: bad {} value '{}'", lineno + 1, what, value))
            };
            match key {
                "schedule" => {
                    let mut schedule = Vec::new();
                    for pair in value.split(',') {
                        let (sx, sy) =
                            pair.trim().split_once(':').ok_or_else(|| bad("schedule pair"))?;
                        let sx: f64 = sx.trim().parse().map_err(|_| bad("schedule"))?;
                        let sy: f64 = sy.trim().parse().map_err(|_| bad("schedule"))?;
                        schedule.push((sx, sy));
                    }
                    cfg.schedule = schedule;
                }
                "grad_weight" => cfg.grad_weight = value.parse().map_err(|_| bad(key))?,
                "lap_weight" => cfg.lap_weight = value.parse().map_err(|_| bad(key))?,
                "color_tol" => cfg.color_tol = value.parse().map_err(|_| bad(key))?,
                "min_area" => cfg.min_area = value.parse().map_err(|_| bad(key))?,
                "residual_tol" => cfg.residual_tol = value.parse().map_err(|_| bad(key))?,
                "accept_diff" => cfg.accept_diff = value.parse().map_err(|_| bad(key))?,
                "segments_per_path" => {
                    cfg.segments_per_path = value.parse().map_err(|_| bad(key))?
                }
                "max_refinements" => cfg.max_refinements = value.parse().map_err(|_| bad(key))?,
                "point_lr" => cfg.optim.point_lr = value.parse().map_err(|_| bad(key))?,
                "color_lr" => cfg.optim.color_lr = value.parse().map_err(|_| bad(key))?,
                "xing_weight" => cfg.optim.xing_weight = value.parse().map_err(|_| bad(key))?,
                "steps" => cfg.optim.steps = value.parse().map_err(|_| bad(key))?,
                "softness" => cfg.optim.softness = value.parse().map_err(|_| bad(key))?,
                "seed" => cfg.optim.seed = value.parse().map_err(|_| bad(key))?,
                "dump_dir" => cfg.dump_dir = Some(PathBuf::from(value)),
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "line {}: unknown key '{}'",
                        lineno + 1,
                        other
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_config(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let cfg = PipelineConfig::from_str_config("").unwrap();
        assert_eq!(cfg.schedule, vec![(4.0, 4.0), (2.0, 2.0), (1.0, 1.0)]);
        assert_eq!(cfg.min_area, 16);
        assert_eq!(cfg.optim.steps, 300);
        assert_eq!(cfg.accept_diff, 0.1);
    }

    #[test]
    fn comments_and_overrides_parse() {
        let text = "\
# two coarse levels only
schedule = 3:3, 1.5:1.5
steps = 50        # quick run
min_area = 8
color_tol = 0.04
";
        let cfg = PipelineConfig::from_str_config(text).unwrap();
        assert_eq!(cfg.schedule, vec![(3.0, 3.0), (1.5, 1.5)]);
        assert_eq!(cfg.optim.steps, 50);
        assert_eq!(cfg.min_area, 8);
        assert_eq!(cfg.color_tol, 0.04);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(PipelineConfig::from_str_config("bogus = 1").is_err());
    }

    #[test]
    fn malformed_and_invalid_values_rejected() {
        assert!(PipelineConfig::from_str_config("steps fifty").is_err());
        assert!(PipelineConfig::from_str_config("steps = fifty").is_err());
        assert!(PipelineConfig::from_str_config("schedule = 1:1, 2:2").is_err());
        assert!(PipelineConfig::from_str_config("schedule = 4;4").is_err());
        assert!(PipelineConfig::from_str_config("color_tol = 0").is_err());
        assert!(PipelineConfig::from_str_config("segments_per_path = 1").is_err());
    }

    #[test]
    fn default_config_validates() {
        PipelineConfig::default().validate().unwrap();
    }
}
