//! Flat key-value run configuration.
//!
//! A config file is a flat TOML table whose keys are the fields of
//! [`RunConfig`]; `key=value` overrides are applied on top, with values in
//! TOML syntax (bare words fall back to strings).

use serde::{Deserialize, Serialize};

use super::LabError;
use crate::lattice::BoxRegion;

/// Every key with its default. Keys left as `None` take a per-command
/// default, listed on the field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; replica `i` uses `mix(seed, i)`.
    pub seed: u64,
    pub replicas: u64,
    /// Worker threads; results never depend on it.
    pub workers: usize,
    pub out_dir: String,
    /// Time horizon `T`.
    pub t: f64,
    /// Dominating-rate factor of the thinned engines.
    pub c_dom: f64,
    /// Segment half-width. Defaults: dla 2, stationarity 64, mixing 128.
    pub n: Option<i32>,
    /// Defaults: interface-tail [8, 16, 32], couple [8, 16],
    /// locality [4, 8, 16, 32], dla none.
    pub n_list: Option<Vec<i32>>,
    /// Observation window `[x_min, x_max, y_min, y_max]`.
    pub window: [i32; 4],
    /// Exceedance exponent: threshold `n^alpha` on `|E_D|`.
    pub alpha: f64,
    pub confidence: f64,
    /// Margin of the truncation box for uncoupled runs; large enough that it
    /// is essentially never reached by `t = 1`.
    pub margin: i32,

    /// Aggregate file for `harmonic`; the floor alone when absent.
    pub aggregate: Option<String>,
    /// `exact`, `mc` or `both`.
    pub method: String,
    /// Height `N` of the source line; defaults to `2 h + 4`.
    pub height_n: Option<i32>,
    pub n_sequence: Vec<i32>,
    pub walks: u64,
    pub step_budget: u64,
    pub solver_tol: f64,
    /// Audit columns of heights `1..=audit_columns`; 0 disables.
    pub audit_columns: i32,
    pub audit_tol: f64,

    pub k_max: u32,
    pub envelope_samples: u64,
    /// Dominating factor of the interface process (1 = the bare rates).
    pub interface_c_dom: f64,

    pub shift: i32,
    pub site_height: i32,
    pub separations: Vec<i32>,

    /// Replicas of `couple` that record the `λ^D` trace.
    pub lambda_samples: u64,
    /// Replicas used for window-field stabilization in `locality`.
    pub field_replicas: u64,
    /// Record per-recompute wall time in diagnostics (breaks byte identity).
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            replicas: 1000,
            workers: 1,
            out_dir: "out".into(),
            t: 1.0,
            c_dom: 2.0,
            n: None,
            n_list: None,
            window: [-2, 2, 0, 2],
            alpha: 0.5,
            confidence: 0.95,
            margin: 64,
            aggregate: None,
            method: "exact".into(),
            height_n: None,
            n_sequence: Vec::new(),
            walks: 100_000,
            step_budget: crate::lattice::DEFAULT_STEP_BUDGET,
            solver_tol: crate::harmonic::DEFAULT_SOLVER_TOL,
            audit_columns: 0,
            audit_tol: 0.1,
            k_max: 8,
            envelope_samples: 1_000_000,
            interface_c_dom: 1.0,
            shift: 5,
            site_height: 1,
            separations: vec![8, 16, 32],
            lambda_samples: 100,
            field_replicas: 200,
            timing: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, LabError> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    /// Loads an optional file, then applies `key=value` overrides in order.
    pub fn load(file_text: Option<&str>, overrides: &[String]) -> Result<Self, LabError> {
        let mut table: toml::Table = match file_text {
            Some(t) => t.parse().map_err(|e: toml::de::Error| LabError::Config(e.to_string()))?,
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        table
            .try_into()
            .map_err(|e: toml::de::Error| LabError::Config(e.to_string()))
    }

    pub fn window_box(&self) -> Result<BoxRegion, LabError> {
        let [a, b, c, d] = self.window;
        BoxRegion::new(a, b, c, d).ok_or_else(|| LabError::Config(format!("invalid window {:?}", self.window)))
    }

    pub fn n_or(&self, default: i32) -> i32 {
        self.n.unwrap_or(default)
    }

    pub fn n_list_or(&self, default: &[i32]) -> Vec<i32> {
        self.n_list.clone().unwrap_or_else(|| default.to_vec())
    }
}

/// Applies one `key=value` override to a config table.
pub fn apply_override(table: &mut toml::Table, kv: &str) -> Result<(), LabError> {
    let (key, value) = kv
        .split_once('=')
        .ok_or_else(|| LabError::Config(format!("override {kv:?} is not key=value")))?;
    let key = key.trim();
    let parsed: toml::Value = match format!("v = {}", value.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(value.trim().to_string()),
    };
    table.insert(key.to_string(), parsed);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn overrides_win_over_file() {
        let cfg = RunConfig::load(
            Some("seed = 1\nreplicas = 10\n"),
            &["replicas=20".into(), "method=both".into(), "n_list=[4, 8]".into()],
        )
        .unwrap();
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.replicas, 20);
        assert_eq!(cfg.method, "both");
        assert_eq!(cfg.n_list, Some(vec![4, 8]));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::load(None, &["sed=3".into()]), Err(LabError::Config(_))));
        assert!(matches!(RunConfig::load(None, &["seed".into()]), Err(LabError::Config(_))));
    }
}
