use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_err, HarnessError};
use crate::benchmarks::BenchmarkSpec;

/// Horizon up to which every step is logged regardless of `log_stride`.
pub const FULL_LOG_HORIZON: u64 = 100_000;

fn default_delta() -> f64 {
    0.05
}

fn default_stride() -> u64 {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// JSON experiment description.
///
/// ```json
/// {"benchmark": {"family": "chain", "length": 6, "seed": 0},
///  "delta": 0.05, "horizon": 10000, "seeds": [0, 1], "output": "out/chain"}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkSpec,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub horizon: u64,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Trace row stride applied when `horizon` exceeds 100 000; rows with a
    /// control event and the final row are always kept.
    #[serde(default = "default_stride")]
    pub log_stride: u64,
    /// Worker threads for seed fan-out; `None` uses the global pool.
    #[serde(default)]
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.horizon == 0 {
            return Err(HarnessError::Config("horizon must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("no seeds".into()));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(HarnessError::Config(format!("delta {} not in (0, 1]", self.delta)));
        }
        if self.log_stride == 0 {
            return Err(HarnessError::Config("log_stride must be positive".into()));
        }
        Ok(())
    }

    /// Effective trace stride.
    pub fn stride(&self) -> u64 {
        if self.horizon > FULL_LOG_HORIZON {
            self.log_stride
        } else {
            1
        }
    }
}

/// Parses `a..b` (half-open), `a..=b`, or a comma-separated list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, HarnessError> {
    let bad = || HarnessError::Config(format!("cannot parse seeds {text:?}"));
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..=") {
        (num(a)?..=num(b)?).collect()
    } else if let Some((a, b)) = text.split_once("..") {
        (num(a)?..num(b)?).collect()
    } else {
        text.split(',').map(num).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("2..=4").unwrap(), vec![2, 3, 4]);
        assert_eq!(parse_seeds("7, 9").unwrap(), vec![7, 9]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn config_schema() {
        let c: ExperimentConfig = serde_json::from_str(
            r#"{"benchmark": {"family": "korder_process", "observations": 2, "order": 2,
                "actions": 2, "seed": 3},
                "delta": 0.1, "horizon": 500, "seeds": [1, 2], "output": "x"}"#,
        )
        .unwrap();
        assert!(c.validate().is_ok());
        assert_eq!(c.benchmark.seed, 3);
        assert_eq!(c.stride(), 1);
        let mut bad = c.clone();
        bad.seeds.clear();
        assert!(bad.validate().is_err());
        bad = c.clone();
        bad.delta = 0.0;
        assert!(bad.validate().is_err());
        bad = c;
        bad.horizon = 0;
        assert!(bad.validate().is_err());
    }
}
