//! Reference accelerator description: PE array, global buffer, DRAM,
//! weight sparsity and the normalized energy cost table.
//!
//! The simulator works purely in cycles. DRAM bandwidth is given in bytes
//! per cycle; 16 bytes/cycle corresponds to 16 GB/s at a 1 GHz reference
//! clock.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown preset `{0}` (expected 8x8_32KB or 16x16_128KB)")]
    UnknownPreset(String),
    #[error("field `{field}` out of range: {reason}")]
    OutOfRange { field: &'static str, reason: String },
    #[error("missing field `{0}` (give it explicitly or start from a preset)")]
    Missing(&'static str),
    #[error("malformed config: {0}")]
    Malformed(#[from] serde_json::Error),
}

/// Energy per 16-bit access or operation, normalized to one MAC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyCostTable {
    pub mac: f64,
    pub rf_access: f64,
    pub buffer_access: f64,
    pub dram_access: f64,
}

impl Default for EnergyCostTable {
    fn default() -> Self {
        Self {
            mac: 1.0,
            rf_access: 1.0,
            buffer_access: 6.0,
            dram_access: 200.0,
        }
    }
}

impl EnergyCostTable {
    pub fn check(&self) -> Result<(), ConfigError> {
        for (field, v) in [
            ("energy.mac", self.mac),
            ("energy.rf_access", self.rf_access),
            ("energy.buffer_access", self.buffer_access),
            ("energy.dram_access", self.dram_access),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::OutOfRange {
                    field,
                    reason: format!("{v} must be a positive finite number"),
                });
            }
        }
        if self.dram_access <= self.buffer_access {
            return Err(ConfigError::OutOfRange {
                field: "energy.dram_access",
                reason: format!(
                    "{} must exceed buffer_access {}",
                    self.dram_access, self.buffer_access
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceleratorConfig {
    pub pe_rows: u64,
    pub pe_cols: u64,
    pub buffer_bytes: u64,
    pub element_bytes: u64,
    pub dram_latency_cycles: u64,
    pub dram_bytes_per_cycle: f64,
    pub weight_sparsity: f64,
    pub energy: EnergyCostTable,
}

pub const PRESET_NAMES: [&str; 2] = ["8x8_32KB", "16x16_128KB"];

impl AcceleratorConfig {
    /// Config with the reference defaults for everything but the array and
    /// buffer.
    pub fn new(pe_rows: u64, pe_cols: u64, buffer_bytes: u64) -> Self {
        Self {
            pe_rows,
            pe_cols,
            buffer_bytes,
            element_bytes: 2,
            dram_latency_cycles: 100,
            dram_bytes_per_cycle: 16.0,
            weight_sparsity: 0.40,
            energy: EnergyCostTable::default(),
        }
    }

    pub fn pes(&self) -> u64 {
        self.pe_rows * self.pe_cols
    }

    /// Label in the preset naming scheme, e.g. `16x16_128KB`.
    pub fn label(&self) -> String {
        if self.buffer_bytes.is_multiple_of(1024) {
            format!(
                "{}x{}_{}KB",
                self.pe_rows,
                self.pe_cols,
                self.buffer_bytes / 1024
            )
        } else {
            format!("{}x{}_{}B", self.pe_rows, self.pe_cols, self.buffer_bytes)
        }
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        let positive = |field: &'static str, v: u64| {
            if v == 0 {
                Err(ConfigError::OutOfRange {
                    field,
                    reason: "must be positive".into(),
                })
            } else {
                Ok(())
            }
        };
        positive("pe_rows", self.pe_rows)?;
        positive("pe_cols", self.pe_cols)?;
        positive("element_bytes", self.element_bytes)?;
        if self.buffer_bytes < self.element_bytes {
            return Err(ConfigError::OutOfRange {
                field: "buffer_bytes",
                reason: format!(
                    "{} is smaller than one {}-byte element",
                    self.buffer_bytes, self.element_bytes
                ),
            });
        }
        if !(self.dram_bytes_per_cycle > 0.0 && self.dram_bytes_per_cycle.is_finite()) {
            return Err(ConfigError::OutOfRange {
                field: "dram_bytes_per_cycle",
                reason: format!("{} must be positive", self.dram_bytes_per_cycle),
            });
        }
        if !(0.0..1.0).contains(&self.weight_sparsity) {
            return Err(ConfigError::OutOfRange {
                field: "weight_sparsity",
                reason: format!("{} not in [0, 1)", self.weight_sparsity),
            });
        }
        self.energy.check()
    }
}

/// One of the two reference configurations.
pub fn preset(name: &str) -> Result<AcceleratorConfig, ConfigError> {
    match name {
        "8x8_32KB" => Ok(AcceleratorConfig::new(8, 8, 32 * 1024)),
        "16x16_128KB" => Ok(AcceleratorConfig::new(16, 16, 128 * 1024)),
        other => Err(ConfigError::UnknownPreset(other.to_string())),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnergyOverrides {
    mac: Option<f64>,
    rf_access: Option<f64>,
    buffer_access: Option<f64>,
    dram_access: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    preset: Option<String>,
    pe_rows: Option<u64>,
    pe_cols: Option<u64>,
    buffer_bytes: Option<u64>,
    element_bytes: Option<u64>,
    dram_latency_cycles: Option<u64>,
    dram_bytes_per_cycle: Option<f64>,
    weight_sparsity: Option<f64>,
    energy: Option<EnergyOverrides>,
}

/// Parses a config document.
///
/// With a `preset` key the named preset is the base and every other field
/// overrides it. Without one, `pe_rows`, `pe_cols` and `buffer_bytes` are
/// required and the rest default to the reference values. Energy entries
/// override individually.
pub fn load_config(doc: &str) -> Result<AcceleratorConfig, ConfigError> {
    let d: ConfigDoc = serde_json::from_str(doc)?;
    let mut cfg = match &d.preset {
        Some(name) => preset(name)?,
        None => AcceleratorConfig::new(
            d.pe_rows.ok_or(ConfigError::Missing("pe_rows"))?,
            d.pe_cols.ok_or(ConfigError::Missing("pe_cols"))?,
            d.buffer_bytes.ok_or(ConfigError::Missing("buffer_bytes"))?,
        ),
    };
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = d.$f { cfg.$f = v; } )* };
    }
    set!(
        pe_rows,
        pe_cols,
        buffer_bytes,
        element_bytes,
        dram_latency_cycles,
        dram_bytes_per_cycle,
        weight_sparsity
    );
    if let Some(e) = d.energy {
        let t = &mut cfg.energy;
        t.mac = e.mac.unwrap_or(t.mac);
        t.rf_access = e.rf_access.unwrap_or(t.rf_access);
        t.buffer_access = e.buffer_access.unwrap_or(t.buffer_access);
        t.dram_access = e.dram_access.unwrap_or(t.dram_access);
    }
    cfg.check()?;
    Ok(cfg)
}

/// Writes every field explicitly (no `preset` key).
pub fn save_config(cfg: &AcceleratorConfig) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("config serializes");
    s.push('\n');
    s
}
