use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SensorArray, SourcePosition};
use crate::pipeline::GnConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// `m` sensors uniformly on the surface of a cube around the reference;
    /// sizes are sensor counts.
    UniformCube,
    /// The ten-sensor array repeated `T` times; sizes are repeat counts.
    FixedArray,
    /// An array loaded from `sensors_csv` repeated `T` times.
    CustomCsv,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::UniformCube => "uniform_cube",
            Scenario::FixedArray => "fixed_array",
            Scenario::CustomCsv => "custom_csv",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform_cube" => Ok(Scenario::UniformCube),
            "fixed_array" => Ok(Scenario::FixedArray),
            "custom_csv" => Ok(Scenario::CustomCsv),
            other => Err(Error::Config(format!(
                "unknown scenario {other:?} (expected uniform_cube, fixed_array or custom_csv)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Least squares on the squared model, true variance in `b`.
    Biased,
    BiasEliminatedTrueSigma,
    BiasEliminatedEstSigma,
    /// Full pipeline: estimated variance, bias elimination, Gauss-Newton.
    TwoStep,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Biased,
        EstimatorKind::BiasEliminatedTrueSigma,
        EstimatorKind::BiasEliminatedEstSigma,
        EstimatorKind::TwoStep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Biased => "biased",
            EstimatorKind::BiasEliminatedTrueSigma => "bias_eliminated_true_sigma",
            EstimatorKind::BiasEliminatedEstSigma => "bias_eliminated_est_sigma",
            EstimatorKind::TwoStep => "two_step",
        }
    }
}

fn all_estimators() -> Vec<EstimatorKind> {
    EstimatorKind::ALL.to_vec()
}

fn default_cube_edge() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub source: SourcePosition,
    pub sigma: f64,
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub gn: GnConfig,
    #[serde(default = "all_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Draw a fresh array every trial. Defaults to true for `uniform_cube`;
    /// the other scenarios always keep their geometry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub redraw_geometry: Option<bool>,
    #[serde(default = "default_cube_edge")]
    pub cube_edge: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensors_csv: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Randomly deployed cube: source `[15, 15, 15]`, sigma 10, 1000 trials.
    pub fn uniform_cube() -> Self {
        Self {
            scenario: Scenario::UniformCube,
            source: SourcePosition::new(&[15.0, 15.0, 15.0]).expect("valid"),
            sigma: 10.0,
            sizes: vec![10, 30, 100, 300, 1000, 3000],
            trials: 1000,
            seed: 1,
            gn: GnConfig::default(),
            estimators: all_estimators(),
            output_dir: None,
            redraw_geometry: None,
            cube_edge: default_cube_edge(),
            sensors_csv: None,
        }
    }

    /// Repeated fixed array: source `[52, 52, 52]`, sigma 5, 1000 trials.
    pub fn fixed_array() -> Self {
        Self {
            scenario: Scenario::FixedArray,
            source: SourcePosition::new(&[52.0, 52.0, 52.0]).expect("valid"),
            sigma: 5.0,
            sizes: vec![1, 3, 10, 30, 100, 300],
            ..Self::uniform_cube()
        }
    }

    pub fn preset(scenario: Scenario) -> Self {
        match scenario {
            Scenario::FixedArray => Self::fixed_array(),
            Scenario::UniformCube | Scenario::CustomCsv => Self {
                scenario,
                ..Self::uniform_cube()
            },
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let (Some(csv), Some(dir)) = (&cfg.sensors_csv, path.parent()) {
            if csv.is_relative() {
                cfg.sensors_csv = Some(dir.join(csv));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn redraws_geometry(&self) -> bool {
        self.scenario == Scenario::UniformCube && self.redraw_geometry.unwrap_or(true)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.trials >= u32::MAX as usize {
            return bad(format!("trials must be below {}", u32::MAX));
        }
        if self.sizes.is_empty() {
            return bad("sizes must not be empty".into());
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("sizes must be strictly ascending, got {:?}", self.sizes));
        }
        if self.sizes[0] == 0 {
            return bad("sizes must be positive".into());
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return bad(format!("sigma must be finite and nonnegative, got {}", self.sigma));
        }
        if self.estimators.is_empty() {
            return bad("at least one estimator must be selected".into());
        }
        if !(self.cube_edge.is_finite() && self.cube_edge > 0.0) {
            return bad(format!("cube_edge must be positive, got {}", self.cube_edge));
        }
        self.gn.validate().map_err(|e| Error::Config(e.to_string()))?;
        match self.scenario {
            Scenario::UniformCube | Scenario::FixedArray if self.source.dim() != 3 => {
                bad(format!("{} needs a 3D source", self.scenario.name()))
            }
            Scenario::UniformCube if self.sizes[0] < 6 => {
                bad("uniform_cube needs at least 6 sensors per size".into())
            }
            Scenario::CustomCsv if self.sensors_csv.is_none() => {
                bad("custom_csv needs sensors_csv".into())
            }
            _ => Ok(()),
        }
    }

    /// Base array for the fixed-geometry scenarios.
    pub(crate) fn base_array(&self) -> Result<SensorArray> {
        match self.scenario {
            Scenario::CustomCsv => {
                let path = self.sensors_csv.as_ref().expect("validated");
                let array = SensorArray::read_csv(path)?;
                if array.dim() != self.source.dim() {
                    return Err(Error::Config(format!(
                        "{} holds a {}D array but the source is {}D",
                        path.display(),
                        array.dim(),
                        self.source.dim()
                    )));
                }
                Ok(array)
            }
            _ => crate::model::deploy_fixed_paper_array(1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid_and_round_trip_through_toml() {
        for cfg in [ExperimentConfig::uniform_cube(), ExperimentConfig::fixed_array()] {
            cfg.validate().unwrap();
            let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn minimal_toml_uses_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "scenario = \"fixed_array\"\nsource = [52.0, 52.0, 52.0]\nsigma = 5.0\nsizes = [1, 3]\ntrials = 10\nseed = 9\n",
        )
        .unwrap();
        assert_eq!(cfg.gn, GnConfig::default());
        assert_eq!(cfg.estimators, EstimatorKind::ALL.to_vec());
        assert!(!cfg.redraws_geometry());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = ExperimentConfig::uniform_cube();
        let cases = [
            ExperimentConfig { trials: 0, ..base.clone() },
            ExperimentConfig { sizes: vec![], ..base.clone() },
            ExperimentConfig { sizes: vec![100, 30], ..base.clone() },
            ExperimentConfig { sizes: vec![5, 30], ..base.clone() },
            ExperimentConfig { sigma: -1.0, ..base.clone() },
            ExperimentConfig { estimators: vec![], ..base.clone() },
            ExperimentConfig { scenario: Scenario::CustomCsv, ..base.clone() },
            ExperimentConfig { source: SourcePosition::new(&[1.0, 2.0]).unwrap(), ..base.clone() },
        ];
        for cfg in cases {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
        assert!(ExperimentConfig::from_toml_str("scenario = \"moon\"").is_err());
        assert!(ExperimentConfig::from_toml_str(&format!("{}\nbogus = 1\n", base.to_toml_string())).is_err());
    }

    #[test]
    fn scenario_names_parse() {
        for s in [Scenario::UniformCube, Scenario::FixedArray, Scenario::CustomCsv] {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
        assert!("cube".parse::<Scenario>().is_err());
    }
}
