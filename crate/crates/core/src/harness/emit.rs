use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CampaignResult, ExperimentConfig};
use crate::error::{Error, Result};
use crate::rng::RNG_NAME;

/// Contents of `campaign.json`: enough to rerun the campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignArtifact {
    pub tool: String,
    pub version: String,
    pub rng: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub results: CampaignResult,
}

impl CampaignArtifact {
    pub fn new(config: &ExperimentConfig, results: &CampaignResult) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            rng: RNG_NAME.to_string(),
            seed: config.seed,
            config: config.clone(),
            results: results.clone(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Write `bias.csv`, `rmse.csv`, `sigma2.csv`, `timing.csv` and
/// `campaign.json` into `dir`, creating it if needed. Returns the paths
/// written. Missing values (every trial diverged) are empty cells.
pub fn emit_results(config: &ExperimentConfig, res: &CampaignResult, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut bias = String::from("size,estimator,value\n");
    let mut rmse = String::from("size,estimator,value,rcrlb\n");
    let mut timing = String::from("size,estimator,value\n");
    for row in &res.rows {
        let name = row.estimator.name();
        let _ = writeln!(bias, "{},{name},{}", row.size, cell(row.bias));
        let _ = writeln!(rmse, "{},{name},{},{}", row.size, cell(row.rmse), row.rcrlb);
        let _ = writeln!(timing, "{},{name},{}", row.size, row.mean_wall_time);
    }
    let mut sigma2 = String::from("size,value,mean,failures\n");
    for row in &res.variance {
        let _ = writeln!(sigma2, "{},{},{},{}", row.size, cell(row.rmse), cell(row.mean), row.failures);
    }
    let json = serde_json::to_string_pretty(&CampaignArtifact::new(config, res))
        .map_err(|e| Error::Parse(e.to_string()))?;

    Ok(vec![
        write(dir, "bias.csv", &bias)?,
        write(dir, "rmse.csv", &rmse)?,
        write(dir, "sigma2.csv", &sigma2)?,
        write(dir, "timing.csv", &timing)?,
        write(dir, "campaign.json", &json)?,
    ])
}
