//! Highway scenario generation: background traffic on every lane plus one
//! instrumented platoon.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::rng::{stream, Subsystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VehicleId(pub u32);

impl VehicleId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heading {
    Forward,
    Backward,
}

impl Heading {
    pub fn sign(self) -> f64 {
        match self {
            Heading::Forward => 1.0,
            Heading::Backward => -1.0,
        }
    }

    /// Road coordinate of an along-heading position.
    pub fn to_road_x(self, position_m: f64) -> f64 {
        self.sign() * position_m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub id: VehicleId,
    pub lane: u32,
    pub heading: Heading,
    /// Longitudinal position, increasing along `heading`.
    pub position_m: f64,
    pub speed_mps: f64,
    /// 1-based platoon index (1 = head) for platoon members.
    pub platoon_index: Option<u32>,
}

impl VehicleSpec {
    pub fn is_platoon_member(&self) -> bool {
        self.platoon_index.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Platoon members first (head to tail), then background traffic.
    pub vehicles: Vec<VehicleSpec>,
    pub road_length_m: f64,
    pub lane_width_m: f64,
    pub platoon_lane: u32,
}

impl Scenario {
    pub fn platoon(&self) -> impl Iterator<Item = &VehicleSpec> {
        self.vehicles.iter().filter(|v| v.is_platoon_member())
    }

    pub fn platoon_size(&self) -> usize {
        self.platoon().count()
    }

    pub fn lane(&self, lane: u32) -> Vec<&VehicleSpec> {
        let mut v: Vec<&VehicleSpec> = self.vehicles.iter().filter(|v| v.lane == lane).collect();
        v.sort_by(|a, b| a.position_m.total_cmp(&b.position_m));
        v
    }

    /// The platoon member nearest the platoon midpoint.
    pub fn platoon_middle(&self) -> Option<&VehicleSpec> {
        let n = self.platoon_size() as u32;
        self.platoon().find(|v| v.platoon_index == Some(n.div_ceil(2)))
    }

    pub fn lateral_m(&self, lane: u32) -> f64 {
        f64::from(lane) * self.lane_width_m
    }
}

/// Headway sampler: exponential gaps clamped so vehicles never overlap.
struct Gaps {
    exp: Exp<f64>,
    min: f64,
}

impl Gaps {
    fn new(cfg: &ExperimentConfig) -> Self {
        Gaps {
            exp: Exp::new(1.0 / cfg.mean_spacing_m).expect("spacing is positive"),
            min: cfg.vehicle_length_m + 1.0,
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        self.exp.sample(rng).max(self.min)
    }
}

/// Truncated normal speed draw, `mean ± 3 sigma`, strictly positive.
pub fn draw_speed<R: Rng>(cfg: &ExperimentConfig, rng: &mut R) -> f64 {
    if cfg.speed_sigma_mps == 0.0 {
        return cfg.mean_speed_mps;
    }
    let normal = Normal::new(cfg.mean_speed_mps, cfg.speed_sigma_mps).expect("sigma is finite");
    loop {
        let v = normal.sample(rng);
        if (v - cfg.mean_speed_mps).abs() <= 3.0 * cfg.speed_sigma_mps && v > 0.0 {
            return v;
        }
    }
}

/// Lay out every lane for the replication keyed by `rep_seed`.
///
/// The platoon occupies lane 0 (forward heading) in the middle of the
/// segment, with `nominal_range_m + 100` of background traffic on each side.
/// Forward lanes take along-heading positions in `[0, L)`; backward lanes in
/// `[-L, 0)` so that every vehicle's road x lies in `[0, L]`.
pub fn build_scenario(cfg: &ExperimentConfig, rep_seed: u64) -> Scenario {
    let mut place = stream(rep_seed, Subsystem::Placement);
    let mut speeds = stream(rep_seed, Subsystem::Speeds);
    let gaps = Gaps::new(cfg);

    let platoon_gaps: Vec<f64> = (1..cfg.platoon_size).map(|_| gaps.draw(&mut place)).collect();
    let extent: f64 = platoon_gaps.iter().sum();
    let margin = cfg.nominal_range_m + 100.0;
    let road = extent + 2.0 * margin;

    let mut vehicles = Vec::new();
    let mut next_id = 0u32;
    let mut push = |vehicles: &mut Vec<VehicleSpec>, lane, heading, position_m, speed_mps, platoon_index| {
        vehicles.push(VehicleSpec { id: VehicleId(next_id), lane, heading, position_m, speed_mps, platoon_index });
        next_id += 1;
    };

    // Platoon members share one cruising speed so that the column stays
    // intact through warm-up.
    let platoon_speed = draw_speed(cfg, &mut speeds);
    let tail = margin;
    let head = margin + extent;
    let mut pos = head;
    for idx in 1..=cfg.platoon_size {
        push(&mut vehicles, 0, Heading::Forward, pos, platoon_speed, Some(idx));
        if let Some(g) = platoon_gaps.get(idx as usize - 1) {
            pos -= g;
        }
    }

    let half = cfg.lanes / 2;
    for lane in 0..cfg.lanes {
        let heading = if lane < half { Heading::Forward } else { Heading::Backward };
        let mut along: Vec<f64> = Vec::new();
        if lane == 0 {
            let mut s = tail - gaps.draw(&mut place);
            while s >= 0.0 {
                along.push(s);
                s -= gaps.draw(&mut place);
            }
            along.reverse();
            let mut s = head + gaps.draw(&mut place);
            while s < road {
                along.push(s);
                s += gaps.draw(&mut place);
            }
        } else {
            let mut s = place.random::<f64>() * cfg.mean_spacing_m;
            while s < road {
                along.push(s);
                s += gaps.draw(&mut place);
            }
        }
        for s in along {
            let position = match heading {
                Heading::Forward => s,
                Heading::Backward => s - road,
            };
            let v = draw_speed(cfg, &mut speeds);
            push(&mut vehicles, lane, heading, position, v, None);
        }
    }

    Scenario { vehicles, road_length_m: road, lane_width_m: cfg.lane_width_m, platoon_lane: 0 }
}
