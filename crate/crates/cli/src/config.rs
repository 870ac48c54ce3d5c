use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use clustersync::simulator::InitialCondition;
use clustersync::FourierCoupling;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Every knob any subcommand reads. Values given on the command line
/// override the file; the merged result is what gets digested and echoed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<FourierCoupling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guess: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_steps: Option<usize>,

    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialCondition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enter_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_dwell: Option<f64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_density: Option<usize>,
}

/// Takes `b`'s value wherever it has one.
macro_rules! overlay {
    ($a:expr, $b:expr, $($f:ident),*) => {
        $( if $b.$f.is_some() { $a.$f = $b.$f.clone(); } )*
    };
}

impl RunConfig {
    pub fn overlay(&mut self, other: &RunConfig) {
        overlay!(
            self, other, preset, g, sizes, guess, omega, max_iterations, seed, epsilon, r_min,
            r_max, r_steps, n, t_end, dt, noise_amplitude, initial, record_stride, reference,
            enter_tol, min_dwell, resolution, grid_density
        );
    }

    /// Reads a JSON config; parse failures carry the file name, line and
    /// column.
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        RunConfig::parse(&text).map_err(|e| anyhow!("{}:{e}", path.display()))
    }

    pub fn parse(text: &str) -> Result<RunConfig, String> {
        serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            // serde_json appends " at line L column C"; report it up front
            let msg = msg.split(" at line ").next().unwrap_or(&msg).to_string();
            format!("{}:{}: {msg}", e.line(), e.column())
        })
    }

    pub fn canonical(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    /// The coupling named by `g` or, failing that, by `preset`.
    pub fn coupling(&self) -> anyhow::Result<FourierCoupling> {
        if let Some(g) = &self.g {
            return Ok(g.clone());
        }
        match &self.preset {
            Some(name) => FourierCoupling::preset(name).ok_or_else(|| {
                anyhow!(
                    "unknown preset {name:?}; expected one of {}",
                    clustersync::coupling::PRESETS.join(", ")
                )
            }),
            None => Err(anyhow!("no coupling: pass --preset or give \"g\" in the config")),
        }
    }

    /// Newton guess: explicit, else a per-preset default near the known
    /// (2,2,2) state.
    pub fn guess_or_default(&self) -> Vec<f64> {
        if let Some(g) = &self.guess {
            return g.clone();
        }
        match self.preset.as_deref() {
            Some("case0") => vec![0.0, 1.5, 3.1],
            Some("case2") => vec![0.0, 1.70, 4.78],
            _ => vec![0.0, 1.70, 4.76],
        }
    }

    pub fn sizes_or_default(&self) -> Vec<usize> {
        self.sizes.clone().unwrap_or_else(|| vec![2, 2, 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_error_has_position() {
        let err = RunConfig::parse("{\n  \"preset\": \"case1\",\n  \"r_min\": oops\n}").unwrap_err();
        assert!(err.starts_with("3:"), "{err}");
        let err = RunConfig::parse("{\"bogus\": 1}").unwrap_err();
        assert!(err.contains("unknown field"), "{err}");
    }

    #[test]
    fn canonical_round_trip() {
        let cfg = RunConfig {
            preset: Some("case1".into()),
            guess: Some(vec![0.0, 1.7, 4.76]),
            initial: Some(InitialCondition::Random),
            n: Some(6),
            ..Default::default()
        };
        let back = RunConfig::parse(&cfg.canonical()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
        assert_eq!(cfg.digest().len(), 64);
    }

    #[test]
    fn overlay_prefers_later_values() {
        let mut a = RunConfig {
            preset: Some("case1".into()),
            seed: Some(1),
            ..Default::default()
        };
        a.overlay(&RunConfig {
            seed: Some(7),
            ..Default::default()
        });
        assert_eq!(a.seed, Some(7));
        assert_eq!(a.preset.as_deref(), Some("case1"));
    }
}
