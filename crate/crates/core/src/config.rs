//! Experiment configuration: flat `key = value` documents with `#` comments.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phy::{calibrated_tx_power_dbm, RadioParams};
use crate::security::{CostTable, Scheme};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    MalformedLine { line: usize, text: String },
    #[error("unknown configuration key `{0}`")]
    MalformedKey(String),
    #[error("configuration key `{0}` given twice")]
    DuplicateKey(String),
    #[error("missing required key `{0}`")]
    MissingRequiredKey(&'static str),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("`{key}` out of range: must be {bound}")]
    OutOfRange { key: String, bound: String },
    #[error("inconsistent `{first}` and `{second}`: {reason}")]
    InconsistentPair { first: String, second: String, reason: String },
}

fn out_of_range(key: &str, bound: &str) -> ConfigError {
    ConfigError::OutOfRange { key: key.to_owned(), bound: bound.to_owned() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProcessingBudget {
    Unlimited,
    PerSlotMs(f64),
}

impl ProcessingBudget {
    pub fn as_option(self) -> Option<f64> {
        match self {
            ProcessingBudget::Unlimited => None,
            ProcessingBudget::PerSlotMs(ms) => Some(ms),
        }
    }
}

impl fmt::Display for ProcessingBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcessingBudget::Unlimited => f.write_str("unlimited"),
            ProcessingBudget::PerSlotMs(ms) => write!(f, "{ms}"),
        }
    }
}

/// Which platoon receivers feed the per-slot processing statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProcessingReceivers {
    /// The platoon member closest to the platoon midpoint.
    Middle,
    /// Every platoon member, pooled.
    Platoon,
}

impl fmt::Display for ProcessingReceivers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProcessingReceivers::Middle => "middle",
            ProcessingReceivers::Platoon => "platoon",
        })
    }
}

/// Every tunable of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub lanes: u32,
    pub mean_spacing_m: f64,
    pub mean_speed_mps: f64,
    pub speed_sigma_mps: f64,
    pub lane_width_m: f64,
    pub scheme: Scheme,
    pub alpha: u32,
    pub beta: u32,
    pub tau_s: f64,
    pub gamma_hz: f64,
    pub payload_bytes: u32,
    pub nominal_range_m: f64,
    /// Same-heading relevance radius; `None` means the nominal range.
    pub relevance_radius_m: Option<f64>,
    pub warmup_s: f64,
    pub decel_mps2: f64,
    pub reaction_min_s: f64,
    pub reaction_max_s: f64,
    pub brake_light_visibility_m: f64,
    pub vehicle_length_m: f64,
    pub platoon_size: u32,
    pub seed: u64,
    pub replications: u32,
    pub processing_budget: ProcessingBudget,
    pub processing_receivers: ProcessingReceivers,
    /// Radios on. When off, only brake lights warn drivers.
    pub v2v: bool,
    pub emergency: bool,
    /// Emergency brake time; `None` means at the end of warm-up.
    pub emergency_at_s: Option<f64>,
    /// Run length after warm-up when no emergency is simulated.
    pub steady_state_s: f64,
    pub max_duration_s: f64,
    pub mobility_dt_ms: f64,
    pub record_pdr: bool,
    /// Drop SHORT messages from pseudonyms not yet validated.
    pub gate_unvalidated: bool,
    pub radio: RadioParams,
    pub costs: CostTable,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            lanes: 0,
            mean_spacing_m: 20.0,
            mean_speed_mps: 22.22,
            speed_sigma_mps: 2.0,
            lane_width_m: 3.5,
            scheme: Scheme::NoSecurity,
            alpha: 1,
            beta: 0,
            tau_s: 60.0,
            gamma_hz: 10.0,
            payload_bytes: 200,
            nominal_range_m: 200.0,
            relevance_radius_m: None,
            warmup_s: 60.0,
            decel_mps2: 4.0,
            reaction_min_s: 0.75,
            reaction_max_s: 1.5,
            brake_light_visibility_m: 20.0,
            vehicle_length_m: 4.0,
            platoon_size: 100,
            seed: 1,
            replications: 1,
            processing_budget: ProcessingBudget::Unlimited,
            processing_receivers: ProcessingReceivers::Middle,
            v2v: true,
            emergency: true,
            emergency_at_s: None,
            steady_state_s: 120.0,
            max_duration_s: 400.0,
            mobility_dt_ms: 10.0,
            record_pdr: true,
            gate_unvalidated: true,
            radio: RadioParams::default(),
            costs: CostTable::default(),
        }
    }
}

/// Every accepted key, in dump order.
pub const KEYS: &[&str] = &[
    "lanes",
    "mean_spacing_m",
    "mean_speed_mps",
    "speed_sigma_mps",
    "lane_width_m",
    "scheme",
    "alpha",
    "beta",
    "tau_s",
    "gamma_hz",
    "payload_bytes",
    "nominal_range_m",
    "relevance_radius_m",
    "warmup_s",
    "decel_mps2",
    "reaction_min_s",
    "reaction_max_s",
    "brake_light_visibility_m",
    "vehicle_length_m",
    "platoon_size",
    "seed",
    "replications",
    "processing_budget_ms_per_slot",
    "processing_receivers",
    "v2v",
    "emergency",
    "emergency_at_s",
    "steady_state_s",
    "max_duration_s",
    "mobility_dt_ms",
    "record_pdr",
    "gate_unvalidated",
    "radio.bitrate_mbps",
    "radio.preamble_us",
    "radio.slot_time_us",
    "radio.aifs_us",
    "radio.cw_min",
    "radio.tx_power_dbm",
    "radio.path_loss_exponent",
    "radio.reference_loss_db",
    "radio.nakagami_m_near",
    "radio.nakagami_m_mid",
    "radio.nakagami_m_far",
    "radio.nakagami_near_limit_m",
    "radio.nakagami_far_limit_m",
    "radio.noise_floor_dbm",
    "radio.sinr_threshold_db",
    "radio.carrier_sense_dbm",
    "radio.mac_header_bytes",
    "radio.reception_cutoff_m",
    "cost.bp_long.sign_ms",
    "cost.bp_long.verify_ms",
    "cost.bp_long.overhead_bytes",
    "cost.hybrid_long.sign_ms",
    "cost.hybrid_long.verify_ms",
    "cost.hybrid_long.overhead_bytes",
    "cost.short.sign_ms",
    "cost.short.verify_ms",
    "cost.short.overhead_bytes",
    "cost.long_adds_message_verify",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::InvalidValue {
        key: key.to_owned(),
        value: value.to_owned(),
        reason: e.to_string(),
    })
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = parse_value(key, value)?;
    if v.is_nan() {
        return Err(ConfigError::InvalidValue { key: key.into(), value: value.into(), reason: "NaN".into() });
    }
    Ok(v)
}

fn parse_opt_f64(key: &str, value: &str, none_word: &str) -> Result<Option<f64>, ConfigError> {
    if value.eq_ignore_ascii_case(none_word) {
        Ok(None)
    } else {
        parse_f64(key, value).map(Some)
    }
}

fn fmt_opt(v: Option<f64>, none_word: &str) -> String {
    v.map_or_else(|| none_word.to_owned(), |x| x.to_string())
}

impl ExperimentConfig {
    /// Assign one key from its textual value. Does not check invariants.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let k = key;
        let r = &mut self.radio;
        let c = &mut self.costs;
        match key {
            "lanes" => self.lanes = parse_value(k, value)?,
            "mean_spacing_m" => self.mean_spacing_m = parse_f64(k, value)?,
            "mean_speed_mps" => self.mean_speed_mps = parse_f64(k, value)?,
            "speed_sigma_mps" => self.speed_sigma_mps = parse_f64(k, value)?,
            "lane_width_m" => self.lane_width_m = parse_f64(k, value)?,
            "scheme" => self.scheme = parse_value(k, value)?,
            "alpha" => self.alpha = parse_value(k, value)?,
            "beta" => self.beta = parse_value(k, value)?,
            "tau_s" => self.tau_s = parse_f64(k, value)?,
            "gamma_hz" => self.gamma_hz = parse_f64(k, value)?,
            "payload_bytes" => self.payload_bytes = parse_value(k, value)?,
            "nominal_range_m" => self.nominal_range_m = parse_f64(k, value)?,
            "relevance_radius_m" => self.relevance_radius_m = parse_opt_f64(k, value, "nominal")?,
            "warmup_s" => self.warmup_s = parse_f64(k, value)?,
            "decel_mps2" => self.decel_mps2 = parse_f64(k, value)?,
            "reaction_min_s" => self.reaction_min_s = parse_f64(k, value)?,
            "reaction_max_s" => self.reaction_max_s = parse_f64(k, value)?,
            "brake_light_visibility_m" => self.brake_light_visibility_m = parse_f64(k, value)?,
            "vehicle_length_m" => self.vehicle_length_m = parse_f64(k, value)?,
            "platoon_size" => self.platoon_size = parse_value(k, value)?,
            "seed" => self.seed = parse_value(k, value)?,
            "replications" => self.replications = parse_value(k, value)?,
            "processing_budget_ms_per_slot" => {
                self.processing_budget = match parse_opt_f64(k, value, "unlimited")? {
                    None => ProcessingBudget::Unlimited,
                    Some(ms) => ProcessingBudget::PerSlotMs(ms),
                }
            }
            "processing_receivers" => {
                self.processing_receivers = match value.to_ascii_lowercase().as_str() {
                    "middle" => ProcessingReceivers::Middle,
                    "platoon" => ProcessingReceivers::Platoon,
                    _ => {
                        return Err(ConfigError::InvalidValue {
                            key: k.into(),
                            value: value.into(),
                            reason: "expected `middle` or `platoon`".into(),
                        })
                    }
                }
            }
            "v2v" => self.v2v = parse_value(k, value)?,
            "emergency" => self.emergency = parse_value(k, value)?,
            "emergency_at_s" => self.emergency_at_s = parse_opt_f64(k, value, "warmup")?,
            "steady_state_s" => self.steady_state_s = parse_f64(k, value)?,
            "max_duration_s" => self.max_duration_s = parse_f64(k, value)?,
            "mobility_dt_ms" => self.mobility_dt_ms = parse_f64(k, value)?,
            "record_pdr" => self.record_pdr = parse_value(k, value)?,
            "gate_unvalidated" => self.gate_unvalidated = parse_value(k, value)?,
            "radio.bitrate_mbps" => r.bitrate_mbps = parse_f64(k, value)?,
            "radio.preamble_us" => r.preamble_us = parse_f64(k, value)?,
            "radio.slot_time_us" => r.slot_time_us = parse_f64(k, value)?,
            "radio.aifs_us" => r.aifs_us = parse_f64(k, value)?,
            "radio.cw_min" => r.cw_min = parse_value(k, value)?,
            "radio.tx_power_dbm" => r.tx_power_dbm = parse_opt_f64(k, value, "calibrated")?,
            "radio.path_loss_exponent" => r.path_loss_exponent = parse_f64(k, value)?,
            "radio.reference_loss_db" => r.reference_loss_db = parse_f64(k, value)?,
            "radio.nakagami_m_near" => r.nakagami_m_near = parse_f64(k, value)?,
            "radio.nakagami_m_mid" => r.nakagami_m_mid = parse_f64(k, value)?,
            "radio.nakagami_m_far" => r.nakagami_m_far = parse_f64(k, value)?,
            "radio.nakagami_near_limit_m" => r.nakagami_near_limit_m = parse_f64(k, value)?,
            "radio.nakagami_far_limit_m" => r.nakagami_far_limit_m = parse_f64(k, value)?,
            "radio.noise_floor_dbm" => r.noise_floor_dbm = parse_f64(k, value)?,
            "radio.sinr_threshold_db" => r.sinr_threshold_db = parse_f64(k, value)?,
            "radio.carrier_sense_dbm" => r.carrier_sense_dbm = parse_f64(k, value)?,
            "radio.mac_header_bytes" => r.mac_header_bytes = parse_value(k, value)?,
            "radio.reception_cutoff_m" => r.reception_cutoff_m = parse_f64(k, value)?,
            "cost.bp_long.sign_ms" => c.bp_long.sign_ms = parse_f64(k, value)?,
            "cost.bp_long.verify_ms" => c.bp_long.verify_ms = parse_f64(k, value)?,
            "cost.bp_long.overhead_bytes" => c.bp_long.overhead_bytes = parse_value(k, value)?,
            "cost.hybrid_long.sign_ms" => c.hybrid_long.sign_ms = parse_f64(k, value)?,
            "cost.hybrid_long.verify_ms" => c.hybrid_long.verify_ms = parse_f64(k, value)?,
            "cost.hybrid_long.overhead_bytes" => c.hybrid_long.overhead_bytes = parse_value(k, value)?,
            "cost.short.sign_ms" => c.short.sign_ms = parse_f64(k, value)?,
            "cost.short.verify_ms" => c.short.verify_ms = parse_f64(k, value)?,
            "cost.short.overhead_bytes" => c.short.overhead_bytes = parse_value(k, value)?,
            "cost.long_adds_message_verify" => c.long_adds_message_verify = parse_value(k, value)?,
            _ => return Err(ConfigError::MalformedKey(key.to_owned())),
        }
        Ok(())
    }

    /// Current value of `key` in the same syntax [`set`](Self::set) accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        let r = &self.radio;
        let c = &self.costs;
        Some(match key {
            "lanes" => self.lanes.to_string(),
            "mean_spacing_m" => self.mean_spacing_m.to_string(),
            "mean_speed_mps" => self.mean_speed_mps.to_string(),
            "speed_sigma_mps" => self.speed_sigma_mps.to_string(),
            "lane_width_m" => self.lane_width_m.to_string(),
            "scheme" => self.scheme.to_string(),
            "alpha" => self.alpha.to_string(),
            "beta" => self.beta.to_string(),
            "tau_s" => self.tau_s.to_string(),
            "gamma_hz" => self.gamma_hz.to_string(),
            "payload_bytes" => self.payload_bytes.to_string(),
            "nominal_range_m" => self.nominal_range_m.to_string(),
            "relevance_radius_m" => fmt_opt(self.relevance_radius_m, "nominal"),
            "warmup_s" => self.warmup_s.to_string(),
            "decel_mps2" => self.decel_mps2.to_string(),
            "reaction_min_s" => self.reaction_min_s.to_string(),
            "reaction_max_s" => self.reaction_max_s.to_string(),
            "brake_light_visibility_m" => self.brake_light_visibility_m.to_string(),
            "vehicle_length_m" => self.vehicle_length_m.to_string(),
            "platoon_size" => self.platoon_size.to_string(),
            "seed" => self.seed.to_string(),
            "replications" => self.replications.to_string(),
            "processing_budget_ms_per_slot" => self.processing_budget.to_string(),
            "processing_receivers" => self.processing_receivers.to_string(),
            "v2v" => self.v2v.to_string(),
            "emergency" => self.emergency.to_string(),
            "emergency_at_s" => fmt_opt(self.emergency_at_s, "warmup"),
            "steady_state_s" => self.steady_state_s.to_string(),
            "max_duration_s" => self.max_duration_s.to_string(),
            "mobility_dt_ms" => self.mobility_dt_ms.to_string(),
            "record_pdr" => self.record_pdr.to_string(),
            "gate_unvalidated" => self.gate_unvalidated.to_string(),
            "radio.bitrate_mbps" => r.bitrate_mbps.to_string(),
            "radio.preamble_us" => r.preamble_us.to_string(),
            "radio.slot_time_us" => r.slot_time_us.to_string(),
            "radio.aifs_us" => r.aifs_us.to_string(),
            "radio.cw_min" => r.cw_min.to_string(),
            "radio.tx_power_dbm" => fmt_opt(r.tx_power_dbm, "calibrated"),
            "radio.path_loss_exponent" => r.path_loss_exponent.to_string(),
            "radio.reference_loss_db" => r.reference_loss_db.to_string(),
            "radio.nakagami_m_near" => r.nakagami_m_near.to_string(),
            "radio.nakagami_m_mid" => r.nakagami_m_mid.to_string(),
            "radio.nakagami_m_far" => r.nakagami_m_far.to_string(),
            "radio.nakagami_near_limit_m" => r.nakagami_near_limit_m.to_string(),
            "radio.nakagami_far_limit_m" => r.nakagami_far_limit_m.to_string(),
            "radio.noise_floor_dbm" => r.noise_floor_dbm.to_string(),
            "radio.sinr_threshold_db" => r.sinr_threshold_db.to_string(),
            "radio.carrier_sense_dbm" => r.carrier_sense_dbm.to_string(),
            "radio.mac_header_bytes" => r.mac_header_bytes.to_string(),
            "radio.reception_cutoff_m" => r.reception_cutoff_m.to_string(),
            "cost.bp_long.sign_ms" => c.bp_long.sign_ms.to_string(),
            "cost.bp_long.verify_ms" => c.bp_long.verify_ms.to_string(),
            "cost.bp_long.overhead_bytes" => c.bp_long.overhead_bytes.to_string(),
            "cost.hybrid_long.sign_ms" => c.hybrid_long.sign_ms.to_string(),
            "cost.hybrid_long.verify_ms" => c.hybrid_long.verify_ms.to_string(),
            "cost.hybrid_long.overhead_bytes" => c.hybrid_long.overhead_bytes.to_string(),
            "cost.short.sign_ms" => c.short.sign_ms.to_string(),
            "cost.short.verify_ms" => c.short.verify_ms.to_string(),
            "cost.short.overhead_bytes" => c.short.overhead_bytes.to_string(),
            "cost.long_adds_message_verify" => c.long_adds_message_verify.to_string(),
            _ => return None,
        })
    }

    /// Check every cross-field invariant.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.lanes == 0 || !self.lanes.is_multiple_of(2) {
            return Err(out_of_range("lanes", "a positive even number"));
        }
        if self.alpha < 1 {
            return Err(out_of_range("alpha", ">= 1"));
        }
        let positive: [(&str, f64); 17] = [
            ("mean_spacing_m", self.mean_spacing_m),
            ("mean_speed_mps", self.mean_speed_mps),
            ("lane_width_m", self.lane_width_m),
            ("tau_s", self.tau_s),
            ("gamma_hz", self.gamma_hz),
            ("nominal_range_m", self.nominal_range_m),
            ("warmup_s", self.warmup_s),
            ("decel_mps2", self.decel_mps2),
            ("reaction_min_s", self.reaction_min_s),
            ("reaction_max_s", self.reaction_max_s),
            ("brake_light_visibility_m", self.brake_light_visibility_m),
            ("vehicle_length_m", self.vehicle_length_m),
            ("steady_state_s", self.steady_state_s),
            ("max_duration_s", self.max_duration_s),
            ("mobility_dt_ms", self.mobility_dt_ms),
            ("radio.bitrate_mbps", self.radio.bitrate_mbps),
            ("radio.reception_cutoff_m", self.radio.reception_cutoff_m),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(out_of_range(key, "> 0"));
            }
        }
        let non_negative: [(&str, f64); 5] = [
            ("speed_sigma_mps", self.speed_sigma_mps),
            ("radio.preamble_us", self.radio.preamble_us),
            ("radio.slot_time_us", self.radio.slot_time_us),
            ("radio.aifs_us", self.radio.aifs_us),
            ("radio.path_loss_exponent", self.radio.path_loss_exponent),
        ];
        for (key, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(out_of_range(key, ">= 0"));
            }
        }
        for (key, m) in [
            ("radio.nakagami_m_near", self.radio.nakagami_m_near),
            ("radio.nakagami_m_mid", self.radio.nakagami_m_mid),
            ("radio.nakagami_m_far", self.radio.nakagami_m_far),
        ] {
            if m.is_nan() || m < 0.5 {
                return Err(out_of_range(key, ">= 0.5"));
            }
        }
        if self.radio.nakagami_near_limit_m > self.radio.nakagami_far_limit_m {
            return Err(ConfigError::InconsistentPair {
                first: "radio.nakagami_near_limit_m".into(),
                second: "radio.nakagami_far_limit_m".into(),
                reason: "near limit exceeds far limit".into(),
            });
        }
        if let Some(d) = self.relevance_radius_m {
            if d.is_nan() || d <= 0.0 {
                return Err(out_of_range("relevance_radius_m", "> 0"));
            }
        }
        if self.payload_bytes == 0 {
            return Err(out_of_range("payload_bytes", ">= 1"));
        }
        if self.platoon_size < 1 {
            return Err(out_of_range("platoon_size", ">= 1"));
        }
        if self.replications < 1 {
            return Err(out_of_range("replications", ">= 1"));
        }
        if self.reaction_min_s > self.reaction_max_s {
            return Err(ConfigError::InconsistentPair {
                first: "reaction_min_s".into(),
                second: "reaction_max_s".into(),
                reason: format!("{} > {}", self.reaction_min_s, self.reaction_max_s),
            });
        }
        // At least one LONG per pseudonym lifetime.
        if self.tau_s * self.gamma_hz < f64::from(self.alpha) {
            return Err(ConfigError::InconsistentPair {
                first: "alpha".into(),
                second: "tau_s".into(),
                reason: format!(
                    "certificate period {} exceeds the {} messages sent per pseudonym",
                    self.alpha,
                    self.tau_s * self.gamma_hz
                ),
            });
        }
        if let ProcessingBudget::PerSlotMs(ms) = self.processing_budget {
            let slot = 1000.0 / self.gamma_hz;
            if !(ms > 0.0 && ms <= slot) {
                return Err(out_of_range("processing_budget_ms_per_slot", &format!("in (0, {slot}] or `unlimited`")));
            }
        }
        if let Some(t0) = self.emergency_at_s {
            if t0 < self.warmup_s {
                return Err(ConfigError::InconsistentPair {
                    first: "emergency_at_s".into(),
                    second: "warmup_s".into(),
                    reason: "the emergency cannot start during warm-up".into(),
                });
            }
        }
        if !self.costs.is_valid() {
            return Err(out_of_range("cost.*", "non-negative"));
        }
        Ok(())
    }

    pub fn emergency_time_s(&self) -> f64 {
        self.emergency_at_s.unwrap_or(self.warmup_s)
    }

    pub fn relevance_radius(&self) -> f64 {
        self.relevance_radius_m.unwrap_or(self.nominal_range_m)
    }

    pub fn slot_ms(&self) -> f64 {
        1000.0 / self.gamma_hz
    }

    pub fn tx_power_dbm(&self) -> f64 {
        self.radio.tx_power_dbm.unwrap_or_else(|| calibrated_tx_power_dbm(&self.radio, self.nominal_range_m))
    }

    /// Apply `key = value` overrides, then revalidate.
    pub fn with_overrides<'a, I>(&self, overrides: I) -> Result<ExperimentConfig, ConfigError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut cfg = self.clone();
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A parsed document plus the keys the user set explicitly.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub config: ExperimentConfig,
    pub user_keys: BTreeSet<String>,
    pub override_keys: BTreeSet<String>,
}

impl ResolvedConfig {
    /// `(key, value, provenance)` for every key.
    pub fn entries(&self) -> Vec<(&'static str, String, &'static str)> {
        KEYS.iter()
            .map(|k| {
                let origin = if self.override_keys.contains(*k) {
                    "override"
                } else if self.user_keys.contains(*k) {
                    "user"
                } else {
                    "default"
                };
                (*k, self.config.get(k).expect("every listed key has a value"), origin)
            })
            .collect()
    }

    /// Apply command-line `key = value` overrides and revalidate.
    pub fn apply_overrides<'a, I>(&mut self, overrides: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        for (k, v) in overrides {
            self.config.set(k, v)?;
            self.override_keys.insert(k.to_owned());
        }
        self.config.validate()
    }
}

pub fn parse_config_resolved(text: &str) -> Result<ResolvedConfig, ConfigError> {
    let mut config = ExperimentConfig::default();
    let mut user_keys = BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::MalformedLine { line: idx + 1, text: raw.trim().to_owned() });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::MalformedLine { line: idx + 1, text: raw.trim().to_owned() });
        }
        if !user_keys.insert(key.to_owned()) {
            return Err(ConfigError::DuplicateKey(key.to_owned()));
        }
        config.set(key, value)?;
    }
    if !user_keys.contains("lanes") {
        return Err(ConfigError::MissingRequiredKey("lanes"));
    }
    config.validate()?;
    Ok(ResolvedConfig { config, user_keys, override_keys: BTreeSet::new() })
}

/// Parse a configuration document, filling defaults for omitted keys.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    parse_config_resolved(text).map(|r| r.config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_needs_lanes() {
        assert_eq!(parse_config(""), Err(ConfigError::MissingRequiredKey("lanes")));
        assert_eq!(parse_config("# only a comment\n\n"), Err(ConfigError::MissingRequiredKey("lanes")));
    }

    #[test]
    fn defaults_fill_omitted_keys() {
        let cfg = parse_config("lanes = 8\nscheme = Hybrid\nalpha = 10\nbeta = 5\nseed = 1\n").unwrap();
        assert_eq!(cfg.lanes, 8);
        assert_eq!(cfg.scheme, Scheme::Hybrid);
        assert_eq!((cfg.alpha, cfg.beta, cfg.seed), (10, 5, 1));
        assert_eq!(cfg.gamma_hz, 10.0);
        assert_eq!(cfg.tau_s, 60.0);
        assert_eq!(cfg.payload_bytes, 200);
        assert_eq!(cfg.emergency_time_s(), 60.0);
        assert_eq!(cfg.relevance_radius(), 200.0);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(parse_config("lanes=8\nalpha=0"), Err(ConfigError::OutOfRange { key, .. }) if key == "alpha"));
        assert!(matches!(parse_config("lanes=6\nlanes=8"), Err(ConfigError::DuplicateKey(_))));
        assert!(matches!(parse_config("lanes=5"), Err(ConfigError::OutOfRange { key, .. }) if key == "lanes"));
        assert!(matches!(parse_config("lanes=4\nwarp=9"), Err(ConfigError::MalformedKey(k)) if k == "warp"));
        assert!(matches!(parse_config("lanes=4\nalpha"), Err(ConfigError::MalformedLine { line: 2, .. })));
        assert!(matches!(parse_config("lanes=4\nalpha=x"), Err(ConfigError::InvalidValue { .. })));
        assert!(matches!(
            parse_config("lanes=4\nreaction_min_s=2\nreaction_max_s=1"),
            Err(ConfigError::InconsistentPair { .. })
        ));
        assert!(matches!(parse_config("lanes=4\nalpha=700"), Err(ConfigError::InconsistentPair { .. })));
        assert!(matches!(
            parse_config("lanes=4\nprocessing_budget_ms_per_slot=150"),
            Err(ConfigError::OutOfRange { .. })
        ));
        assert!(matches!(parse_config("lanes=4\nemergency_at_s=30"), Err(ConfigError::InconsistentPair { .. })));
        assert!(matches!(parse_config("lanes=4\ndecel_mps2=0"), Err(ConfigError::OutOfRange { .. })));
    }

    #[test]
    fn radio_and_cost_overrides() {
        let cfg = parse_config(
            "lanes = 4 # trailing comment\nradio.cw_min = 31\ncost.short.verify_ms = 1.5\nprocessing_budget_ms_per_slot = 80\n",
        )
        .unwrap();
        assert_eq!(cfg.radio.cw_min, 31);
        assert_eq!(cfg.costs.short.verify_ms, 1.5);
        assert_eq!(cfg.processing_budget, ProcessingBudget::PerSlotMs(80.0));
        assert!((cfg.tx_power_dbm() - 4.88).abs() < 0.01);
    }

    #[test]
    fn get_set_roundtrip_for_every_key() {
        let base = parse_config("lanes = 4").unwrap();
        for key in KEYS {
            let v = base.get(key).unwrap();
            let mut c = base.clone();
            c.set(key, &v).unwrap();
            assert_eq!(c, base, "key {key}");
        }
        assert!(base.get("nope").is_none());
    }

    #[test]
    fn provenance() {
        let r = parse_config_resolved("lanes = 4\nalpha = 5").unwrap();
        let e = r.entries();
        assert_eq!(e.len(), KEYS.len());
        assert!(e.iter().any(|(k, v, o)| *k == "alpha" && v == "5" && *o == "user"));
        assert!(e.iter().any(|(k, _, o)| *k == "tau_s" && *o == "default"));
    }

    #[test]
    fn overrides_are_tracked_and_validated() {
        let mut r = parse_config_resolved("lanes = 4\nalpha = 5").unwrap();
        r.apply_overrides([("alpha", "10"), ("scheme", "Hybrid")]).unwrap();
        assert_eq!(r.config.alpha, 10);
        let e = r.entries();
        assert!(e.iter().any(|(k, v, o)| *k == "alpha" && v == "10" && *o == "override"));
        assert!(matches!(r.apply_overrides([("alpha", "0")]), Err(ConfigError::OutOfRange { .. })));
    }
}
