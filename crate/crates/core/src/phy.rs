//! Radio channel: log-distance path loss, Nakagami-m power fading and
//! SINR-based reception.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    pub bitrate_mbps: f64,
    pub preamble_us: f64,
    pub slot_time_us: f64,
    pub aifs_us: f64,
    pub cw_min: u32,
    /// `None` means calibrated from the nominal range.
    pub tx_power_dbm: Option<f64>,
    pub path_loss_exponent: f64,
    pub reference_loss_db: f64,
    pub nakagami_m_near: f64,
    pub nakagami_m_mid: f64,
    pub nakagami_m_far: f64,
    pub nakagami_near_limit_m: f64,
    pub nakagami_far_limit_m: f64,
    pub noise_floor_dbm: f64,
    pub sinr_threshold_db: f64,
    pub carrier_sense_dbm: f64,
    pub mac_header_bytes: u32,
    /// Receivers farther than this are not evaluated.
    pub reception_cutoff_m: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams {
            bitrate_mbps: 6.0,
            preamble_us: 40.0,
            slot_time_us: 13.0,
            aifs_us: 58.0,
            cw_min: 15,
            tx_power_dbm: None,
            path_loss_exponent: 2.0,
            // Free space at 1 m, 5.9 GHz.
            reference_loss_db: 47.86,
            nakagami_m_near: 3.0,
            nakagami_m_mid: 1.5,
            nakagami_m_far: 1.0,
            nakagami_near_limit_m: 50.0,
            nakagami_far_limit_m: 150.0,
            noise_floor_dbm: -99.0,
            sinr_threshold_db: 10.0,
            carrier_sense_dbm: -96.0,
            mac_header_bytes: 36,
            reception_cutoff_m: 600.0,
        }
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Frame duration: preamble plus MAC header and body at the PHY bitrate.
pub fn airtime(size_bytes: u32, params: &RadioParams) -> SimTime {
    let bits = 8.0 * f64::from(size_bytes + params.mac_header_bytes);
    SimTime::from_micros_f64(params.preamble_us + bits / params.bitrate_mbps)
}

/// Transmit power that puts the mean received power at `nominal_range_m`
/// exactly at `noise_floor + sinr_threshold`.
pub fn calibrated_tx_power_dbm(params: &RadioParams, nominal_range_m: f64) -> f64 {
    params.noise_floor_dbm
        + params.sinr_threshold_db
        + params.reference_loss_db
        + 10.0 * params.path_loss_exponent * nominal_range_m.log10()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanRxPower {
    pub dbm: f64,
    /// The distance was below the 1 m reference and was clamped.
    pub degenerate: bool,
}

pub fn mean_rx_power(tx_power_dbm: f64, distance_m: f64, params: &RadioParams) -> MeanRxPower {
    let degenerate = distance_m.is_nan() || distance_m < 1.0;
    let d = if degenerate { 1.0 } else { distance_m };
    MeanRxPower {
        dbm: tx_power_dbm - params.reference_loss_db - 10.0 * params.path_loss_exponent * d.log10(),
        degenerate,
    }
}

/// Nakagami shape parameter for a link of the given length.
pub fn nakagami_m(distance_m: f64, params: &RadioParams) -> f64 {
    if distance_m < params.nakagami_near_limit_m {
        params.nakagami_m_near
    } else if distance_m < params.nakagami_far_limit_m {
        params.nakagami_m_mid
    } else {
        params.nakagami_m_far
    }
}

/// Unit-mean Nakagami-m power fading sampler (Gamma, shape m, scale 1/m).
#[derive(Debug, Clone)]
pub struct Fading {
    near: Option<Gamma<f64>>,
    mid: Option<Gamma<f64>>,
    far: Option<Gamma<f64>>,
    near_limit: f64,
    far_limit: f64,
}

fn unit_gamma(m: f64) -> Option<Gamma<f64>> {
    // An infinite shape degenerates to no fading.
    m.is_finite().then(|| Gamma::new(m, 1.0 / m).expect("nakagami m must be positive"))
}

impl Fading {
    pub fn new(params: &RadioParams) -> Self {
        Fading {
            near: unit_gamma(params.nakagami_m_near),
            mid: unit_gamma(params.nakagami_m_mid),
            far: unit_gamma(params.nakagami_m_far),
            near_limit: params.nakagami_near_limit_m,
            far_limit: params.nakagami_far_limit_m,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, distance_m: f64, rng: &mut R) -> f64 {
        let dist = if distance_m < self.near_limit {
            &self.near
        } else if distance_m < self.far_limit {
            &self.mid
        } else {
            &self.far
        };
        dist.as_ref().map_or(1.0, |g| g.sample(rng))
    }
}

/// One-shot fading draw for a link of length `distance_m`.
pub fn fading_sample<R: Rng + ?Sized>(distance_m: f64, rng: &mut R, params: &RadioParams) -> f64 {
    unit_gamma(nakagami_m(distance_m, params)).map_or(1.0, |g| g.sample(rng))
}

/// Precomputed linear link budget for fast mean-power evaluation.
#[derive(Debug, Clone, Copy)]
pub struct LinkBudget {
    /// Mean received power at 1 m, in mW.
    coeff_mw: f64,
    exponent: f64,
    pub noise_mw: f64,
    pub sinr_threshold: f64,
    pub carrier_sense_mw: f64,
}

impl LinkBudget {
    pub fn new(params: &RadioParams, tx_power_dbm: f64) -> Self {
        LinkBudget {
            coeff_mw: dbm_to_mw(tx_power_dbm - params.reference_loss_db),
            exponent: params.path_loss_exponent,
            noise_mw: dbm_to_mw(params.noise_floor_dbm),
            sinr_threshold: dbm_to_mw(params.sinr_threshold_db),
            carrier_sense_mw: dbm_to_mw(params.carrier_sense_dbm),
        }
    }

    /// Mean received power in mW from the squared distance.
    #[inline]
    pub fn mean_mw_sq(&self, dist_sq: f64) -> f64 {
        let d2 = dist_sq.max(1.0);
        if self.exponent == 2.0 {
            self.coeff_mw / d2
        } else {
            self.coeff_mw * d2.powf(-0.5 * self.exponent)
        }
    }
}

/// Interfering frame as seen at one receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interference {
    pub start: SimTime,
    pub end: SimTime,
    pub power_mw: f64,
}

/// Highest total interference power during `[start, end)`.
pub fn peak_interference(start: SimTime, end: SimTime, interferers: &[Interference]) -> f64 {
    let mut edges: Vec<(SimTime, f64)> = Vec::with_capacity(2 * interferers.len());
    for i in interferers {
        let s = i.start.max(start);
        let e = i.end.min(end);
        if s < e {
            edges.push((s, i.power_mw));
            edges.push((e, -i.power_mw));
        }
    }
    // Ends sort before starts at the same instant (half-open intervals).
    edges.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut level = 0.0f64;
    let mut peak = 0.0f64;
    for (_, delta) in edges {
        level += delta;
        peak = peak.max(level);
    }
    peak
}

/// Frame capture decision: the SINR must clear the threshold on every
/// overlap interval, and a transmitting receiver hears nothing.
pub fn reception_decision(
    start: SimTime,
    end: SimTime,
    signal_mw: f64,
    interferers: &[Interference],
    receiver_transmitting: bool,
    budget: &LinkBudget,
) -> bool {
    if receiver_transmitting {
        return false;
    }
    let worst = budget.noise_mw + peak_interference(start, end, interferers);
    signal_mw >= budget.sinr_threshold * worst
}
