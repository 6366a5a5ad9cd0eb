//! Run configuration: one JSON document, every field optional.

use std::path::Path;

use radnet::driver::SurfaceParams;
use radnet::refrad::RefRadConfig;
use radnet::scenegen::{SceneSpec, Timestamp, VortexSpec, SEPTEMBER_2022};
use radnet::train::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scene: SceneSection,
    pub sampling: SamplingSection,
    pub train: TrainConfig,
    pub emulator: EmulatorSection,
    pub eval: EvalSection,
    pub driver: DriverSection,
}

/// A linear vortex track from `start` to `end` over the series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VortexTrack {
    pub start: (f64, f64),
    pub end: (f64, f64),
    pub depth: f64,
    pub radius: f64,
    pub v_max: f64,
}

impl VortexTrack {
    /// Nearest-cell centers for each of `n` steps.
    pub fn specs(&self, n: usize) -> Vec<VortexSpec> {
        (0..n)
            .map(|k| {
                let f = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
                let x = self.start.0 + f * (self.end.0 - self.start.0);
                let y = self.start.1 + f * (self.end.1 - self.start.1);
                VortexSpec {
                    center: (x.round().max(0.0) as usize, y.round().max(0.0) as usize),
                    depth: self.depth,
                    radius: self.radius,
                    v_max: self.v_max,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    pub spec: SceneSpec,
    pub t0: Timestamp,
    /// Seconds between scenes.
    pub dt: i64,
    pub steps: usize,
    /// Evolve temperatures under the reference scheme instead of using
    /// independent snapshots.
    pub coupled: bool,
    pub vortex: Option<VortexTrack>,
}

impl Default for SceneSection {
    fn default() -> Self {
        Self {
            spec: SceneSpec::default(),
            t0: SEPTEMBER_2022,
            dt: 1800,
            steps: 48,
            coupled: true,
            vortex: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    /// Samples per key; `None` takes 90 % of what is available.
    pub n: Option<usize>,
    pub seed: u64,
    pub balanced: bool,
    pub train_fraction: f64,
    pub split_seed: u64,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            n: None,
            seed: 1,
            balanced: true,
            train_fraction: 0.9,
            split_seed: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmulatorSection {
    /// Reference scheme used for labels and comparisons.
    pub reference: RefRadConfig,
    pub bench_reps: usize,
}

impl Default for EmulatorSection {
    fn default() -> Self {
        Self {
            reference: RefRadConfig::default(),
            bench_reps: 5,
        }
    }
}

/// Thresholds used by `--check`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub max_val_nrmse: f64,
    pub min_pearson: f64,
    pub max_track_separation: f64,
    pub max_t_skin_error: f64,
    pub min_speedup: f64,
    pub refine_radius: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            max_val_nrmse: 0.05,
            min_pearson: 0.95,
            max_track_separation: 3.0,
            max_t_skin_error: 2.0,
            min_speedup: 5.0,
            refine_radius: radnet::evalkit::DEFAULT_REFINE_RADIUS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriverSection {
    pub steps: usize,
    /// Seconds.
    pub dt: f64,
    /// Cells `(i, j)` to integrate; empty means a diagonal sample of 8.
    pub cells: Vec<(usize, usize)>,
    pub surface: SurfaceParams,
}

impl Default for DriverSection {
    fn default() -> Self {
        Self {
            steps: 336,
            dt: 1800.0,
            cells: Vec::new(),
            surface: SurfaceParams::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.train.hidden = 17;
        c.scene.vortex = Some(VortexTrack { start: (1.0, 2.0), end: (5.0, 2.0), depth: 20.0, radius: 3.0, v_max: 30.0 });
        let back: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for doc in [r#"{"trian": {}}"#, r#"{"train": {"hiden": 3}}"#, r#"{"scene": {"spec": {"nx": 9, "colour": 1}}}"#] {
            assert!(serde_json::from_str::<RunConfig>(doc).is_err(), "{doc}");
        }
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"train": {"hidden": 8}}"#).unwrap();
        assert_eq!(c.train.hidden, 8);
        assert_eq!(c.train.batch, TrainConfig::default().batch);
    }

    #[test]
    fn track_interpolates_endpoints() {
        let t = VortexTrack { start: (2.0, 3.0), end: (12.0, 3.0), depth: 1.0, radius: 2.0, v_max: 0.0 };
        let s = t.specs(11);
        assert_eq!(s[0].center, (2, 3));
        assert_eq!(s[5].center, (7, 3));
        assert_eq!(s[10].center, (12, 3));
    }
}
