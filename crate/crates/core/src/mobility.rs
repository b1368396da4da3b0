//! Longitudinal kinematics, driver reaction, brake lights and crashes.

use serde::{Deserialize, Serialize};

use crate::scenario::{Heading, VehicleId};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Cruising,
    Braking,
    Stopped,
    Crashed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: VehicleId,
    pub lane: u32,
    pub heading: Heading,
    /// Front bumper position along `heading`.
    pub position_m: f64,
    pub speed_mps: f64,
    pub mode: Mode,
    pub brake_light: bool,
    pub length_m: f64,
}

impl VehicleState {
    pub fn rear_m(&self) -> f64 {
        self.position_m - self.length_m
    }

    pub fn is_immobile(&self) -> bool {
        matches!(self.mode, Mode::Stopped | Mode::Crashed)
    }

    pub fn road_x(&self) -> f64 {
        self.heading.to_road_x(self.position_m)
    }
}

/// Advance one vehicle by `dt_s` under constant deceleration `decel` when
/// braking. A vehicle that reaches zero speed inside the step stops exactly
/// at `v^2 / 2a` from where the step began.
pub fn step_kinematics(v: &VehicleState, dt_s: f64, decel: f64) -> VehicleState {
    debug_assert!(dt_s > 0.0);
    let mut next = v.clone();
    match v.mode {
        Mode::Cruising => next.position_m += v.speed_mps * dt_s,
        Mode::Braking => {
            let t_stop = v.speed_mps / decel;
            if t_stop <= dt_s {
                next.position_m += v.speed_mps * v.speed_mps / (2.0 * decel);
                next.speed_mps = 0.0;
                next.mode = Mode::Stopped;
            } else {
                next.position_m += v.speed_mps * dt_s - 0.5 * decel * dt_s * dt_s;
                next.speed_mps -= decel * dt_s;
            }
            next.brake_light = true;
        }
        Mode::Stopped | Mode::Crashed => {}
    }
    next
}

/// Enter emergency braking.
pub fn start_braking(v: &mut VehicleState) {
    if v.mode == Mode::Cruising {
        v.mode = if v.speed_mps > 0.0 { Mode::Braking } else { Mode::Stopped };
        v.brake_light = true;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriverState {
    pub warned_at: Option<SimTime>,
    pub reaction_delay: SimTime,
    pub braking_from: Option<SimTime>,
}

impl DriverState {
    pub fn new(reaction_delay: SimTime) -> Self {
        DriverState { warned_at: None, reaction_delay, braking_from: None }
    }

    /// Record a warning. Only the first one counts; returns whether this
    /// call warned the driver.
    pub fn warn(&mut self, now: SimTime) -> bool {
        if self.warned_at.is_some() {
            return false;
        }
        self.warned_at = Some(now);
        self.braking_from = Some(now + self.reaction_delay);
        true
    }

    /// Braking with no reaction delay (the vehicle that causes the event).
    pub fn brake_immediately(&mut self, now: SimTime) {
        if self.warned_at.is_none() {
            self.warned_at = Some(now);
        }
        self.braking_from = Some(now);
    }
}

/// Switch a cruising vehicle to braking once its driver has reacted.
pub fn driver_update(v: &VehicleState, d: &DriverState, now: SimTime) -> (VehicleState, DriverState) {
    let mut next = v.clone();
    if let Some(t) = d.braking_from {
        if now >= t && v.mode == Mode::Cruising {
            start_braking(&mut next);
        }
    }
    (next, d.clone())
}

/// Whether `follower` can see `leader`'s brake lights over a bumper gap of
/// `gap_m`. Only the vehicle directly behind has line of sight.
pub fn visual_warning_check(leader: &VehicleState, gap_m: f64, visibility_m: f64) -> bool {
    leader.brake_light && gap_m <= visibility_m
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrashEvent {
    pub follower: VehicleId,
    pub leader: VehicleId,
    /// Contact point (leader rear bumper).
    pub at_m: f64,
}

/// Detect overlaps in one lane ordered head first. Both vehicles of a pair
/// stop dead; the follower is pulled back to exact contact.
pub fn detect_crashes(lane: &mut [VehicleState]) -> Vec<CrashEvent> {
    let mut events = Vec::new();
    for i in 1..lane.len() {
        let (ahead, behind) = lane.split_at_mut(i);
        let leader = &mut ahead[i - 1];
        let follower = &mut behind[0];
        if follower.position_m >= leader.rear_m() {
            let newly = follower.mode != Mode::Crashed || leader.mode != Mode::Crashed;
            let contact = leader.rear_m();
            follower.position_m = contact;
            for v in [&mut *leader, &mut *follower] {
                v.mode = Mode::Crashed;
                v.speed_mps = 0.0;
                v.brake_light = true;
            }
            if newly {
                events.push(CrashEvent { follower: follower.id, leader: leader.id, at_m: contact });
            }
        }
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;

    fn car(id: u32, pos: f64, speed: f64, mode: Mode) -> VehicleState {
        VehicleState {
            id: VehicleId(id),
            lane: 0,
            heading: Heading::Forward,
            position_m: pos,
            speed_mps: speed,
            mode,
            brake_light: mode != Mode::Cruising,
            length_m: 4.0,
        }
    }

    fn stop_distance(v0: f64, dt: f64) -> (f64, f64) {
        let mut v = car(0, 0.0, v0, Mode::Braking);
        let mut t = 0.0;
        while v.mode == Mode::Braking {
            let next = step_kinematics(&v, dt, 4.0);
            if next.mode == Mode::Stopped {
                t += v.speed_mps / 4.0;
            } else {
                t += dt;
            }
            v = next;
        }
        (v.position_m, t)
    }

    #[test]
    fn closed_form_stopping() {
        let exact = 22.22f64 * 22.22 / 8.0;
        assert!((exact - 61.72).abs() < 0.01);
        for dt in [0.001, 0.01, 0.037, 0.1, 1.0, 10.0] {
            let (d, t) = stop_distance(22.22, dt);
            assert!((d - exact).abs() < 1e-6, "dt={dt}: {d}");
            assert!((t - 5.555).abs() < 1e-3);
        }
    }

    #[test]
    fn friction_gives_four() {
        assert!((0.41f64 * 9.81 - 4.0).abs() < 0.03);
    }

    #[test]
    fn rest_and_immobile_cases() {
        let v = car(0, 5.0, 0.0, Mode::Cruising);
        assert_eq!(step_kinematics(&v, 0.5, 4.0).position_m, 5.0);
        let s = car(0, 5.0, 0.0, Mode::Stopped);
        assert_eq!(step_kinematics(&s, 0.5, 4.0), s);
        let c = car(0, 5.0, 0.0, Mode::Crashed);
        assert_eq!(step_kinematics(&c, 0.5, 4.0), c);
    }

    #[test]
    fn reaction_is_additive_and_idempotent() {
        let mut d = DriverState::new(SimTime::from_secs_f64(1.0));
        assert!(d.warn(SimTime::from_secs_f64(10.0)));
        assert_eq!(d.braking_from, Some(SimTime::from_secs_f64(11.0)));
        assert!(!d.warn(SimTime::from_secs_f64(10.5)));
        assert_eq!(d.braking_from, Some(SimTime::from_secs_f64(11.0)));
        let v = car(1, 0.0, 20.0, Mode::Cruising);
        let (a, _) = driver_update(&v, &d, SimTime::from_secs_f64(10.9));
        assert_eq!(a.mode, Mode::Cruising);
        let (b, _) = driver_update(&v, &d, SimTime::from_secs_f64(11.0));
        assert_eq!(b.mode, Mode::Braking);
        assert!(b.brake_light);
        let stopped = car(1, 0.0, 0.0, Mode::Stopped);
        let (c, _) = driver_update(&stopped, &d, SimTime::from_secs_f64(12.0));
        assert_eq!(c.mode, Mode::Stopped);
    }

    #[test]
    fn brake_light_visibility() {
        let lit = car(0, 0.0, 10.0, Mode::Braking);
        let dark = car(0, 0.0, 10.0, Mode::Cruising);
        assert!(visual_warning_check(&lit, 15.0, 20.0));
        assert!(!visual_warning_check(&lit, 25.0, 20.0));
        assert!(!visual_warning_check(&dark, 5.0, 20.0));
    }

    #[test]
    fn overlap_pins_follower_at_contact() {
        let mut lane = vec![car(1, 100.0, 0.0, Mode::Stopped), car(2, 96.5, 3.0, Mode::Braking)];
        let ev = detect_crashes(&mut lane);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].at_m, 96.0);
        assert_eq!(lane[1].position_m, 96.0);
        assert!(lane.iter().all(|v| v.mode == Mode::Crashed && v.speed_mps == 0.0));
        // Already crashed pair in contact is not a new event.
        assert!(detect_crashes(&mut lane).is_empty());
    }

    #[test]
    fn touching_is_not_crashing() {
        let mut lane = vec![car(1, 100.0, 0.0, Mode::Stopped), car(2, 95.9, 0.0, Mode::Stopped)];
        assert!(detect_crashes(&mut lane).is_empty());
    }

    #[test]
    fn chain_collision_scripted() {
        // V2 stopped at 100. V3 braking from 10 m/s with front at 86.
        // V4 cruising at 10 m/s with front at 70, never brakes.
        let dt = 0.01;
        let mut lane = vec![
            car(2, 100.0, 0.0, Mode::Stopped),
            car(3, 86.0, 10.0, Mode::Braking),
            car(4, 70.0, 10.0, Mode::Cruising),
        ];
        let mut log = Vec::new();
        let mut t = 0.0;
        for _ in 0..400 {
            t += dt;
            for v in lane.iter_mut() {
                *v = step_kinematics(v, dt, 4.0);
            }
            for e in detect_crashes(&mut lane) {
                log.push((t, e));
            }
        }
        // V3 needs 12.5 m to stop but only has 10 m: contact when
        // 10 t - 2 t^2 = 10, t = 1.382 s.
        let t3 = (10.0 - (100.0f64 - 80.0).sqrt()) / 4.0;
        assert_eq!(log.len(), 2);
        assert_eq!(log[0].1.follower, VehicleId(3));
        assert!((log[0].0 - t3).abs() <= dt + 1e-9);
        // V4 then covers 70 -> 92 (V3's rear) at 10 m/s: t = 2.2 s.
        assert_eq!(log[1].1.follower, VehicleId(4));
        assert_eq!(log[1].1.at_m, 92.0);
        assert!((log[1].0 - 2.2).abs() <= dt + 1e-9);
        assert_eq!(lane[2].position_m, 92.0);
    }
}
