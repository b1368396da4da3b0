//! Beaconing and the emergency-brake warning application with the
//! relay-suppression rule.

use std::collections::HashMap;

use thiserror::Error;

use crate::mobility::{start_braking, DriverState, VehicleState};
use crate::scenario::VehicleId;
use crate::security::{
    packet_size, CostTable, PacketKind, PacketMeta, PayloadClass, Pseudonym, Scheme, SenderSchedule,
};
use crate::time::SimTime;

#[derive(Debug, Error, PartialEq)]
pub enum AppError {
    #[error("emergency at {t0} falls inside the {warmup} warm-up")]
    EmergencyDuringWarmup { t0: SimTime, warmup: SimTime },
}

/// Sender-side security settings shared by every vehicle.
#[derive(Debug, Clone)]
pub struct SecurityProfile {
    pub scheme: Scheme,
    pub alpha: u32,
    pub beta: u32,
    pub payload_bytes: u32,
    pub costs: CostTable,
}

impl SecurityProfile {
    fn packet(&self, v: &VehicleState, app: &mut AppState, kind: PacketKind, class: PayloadClass, now: SimTime) -> PacketMeta {
        app.seq += 1;
        PacketMeta {
            sender: v.id,
            pseudonym: app.pseudonym.id,
            kind,
            size_bytes: packet_size(self.payload_bytes, self.scheme, kind, &self.costs),
            seq: app.seq,
            class,
            sender_position_m: v.position_m,
            sender_heading: v.heading,
            sender_braking: v.brake_light,
            timestamp: now,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborEntry {
    pub position_m: f64,
    pub heard_at: SimTime,
}

#[derive(Debug, Clone)]
pub struct AppState {
    /// Offset of this vehicle's beacons within the slot.
    pub beacon_phase: SimTime,
    pub warning_active: bool,
    pub suppressed: bool,
    pub warned: bool,
    pub schedule: SenderSchedule,
    pub pseudonym: Pseudonym,
    pub seq: u64,
    pub suppressed_at: Option<SimTime>,
    pub neighbors: HashMap<VehicleId, NeighborEntry>,
}

impl AppState {
    pub fn new(beacon_phase: SimTime, pseudonym: Pseudonym) -> Self {
        AppState {
            beacon_phase,
            warning_active: false,
            suppressed: false,
            warned: false,
            schedule: SenderSchedule::default(),
            pseudonym,
            seq: 0,
            suppressed_at: None,
            neighbors: HashMap::new(),
        }
    }

    /// Warnings run half a slot after the beacons.
    pub fn warning_phase(&self, slot: SimTime) -> SimTime {
        SimTime((self.beacon_phase.0 + slot.0 / 2) % slot.0)
    }

    /// Whether this vehicle should be transmitting warnings.
    pub fn sends_warnings(&self) -> bool {
        self.warning_active && !self.suppressed
    }
}

/// One beacon; advances the LONG/SHORT schedule.
pub fn beacon_tick(v: &VehicleState, app: &mut AppState, now: SimTime, profile: &SecurityProfile) -> PacketMeta {
    let kind = if profile.scheme.is_secured() {
        app.schedule.next_kind(profile.alpha, profile.beta)
    } else {
        PacketKind::Plain
    };
    profile.packet(v, app, kind, PayloadClass::Beacon, now)
}

/// One warning if the vehicle is actively warning. Warnings do not
/// advance the schedule, so the certificate period keeps counting beacons.
pub fn warning_tick(v: &VehicleState, app: &mut AppState, now: SimTime, profile: &SecurityProfile) -> Option<PacketMeta> {
    if !app.sends_warnings() {
        return None;
    }
    let kind = if profile.scheme.is_secured() {
        app.schedule.extra_kind(profile.alpha, profile.beta)
    } else {
        PacketKind::Plain
    };
    Some(profile.packet(v, app, kind, PayloadClass::Warning, now))
}

/// The platoon head brakes at `t0` with no reaction delay and starts warning.
pub fn emergency_trigger(
    v: &mut VehicleState,
    driver: &mut DriverState,
    app: &mut AppState,
    t0: SimTime,
    warmup: SimTime,
) -> Result<(), AppError> {
    if t0 < warmup {
        return Err(AppError::EmergencyDuringWarmup { t0, warmup });
    }
    driver.brake_immediately(t0);
    start_braking(v);
    app.warned = true;
    app.warning_active = true;
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReceiveOutcome {
    pub newly_warned: bool,
    pub newly_suppressed: bool,
}

/// Apply a delivered packet to the receiving vehicle's application state.
pub fn on_app_receive(
    receiver: &VehicleState,
    app: &mut AppState,
    driver: &mut DriverState,
    packet: &PacketMeta,
    now: SimTime,
) -> ReceiveOutcome {
    let mut out = ReceiveOutcome::default();
    match packet.class {
        PayloadClass::Beacon => {
            app.neighbors
                .insert(packet.sender, NeighborEntry { position_m: packet.sender_position_m, heard_at: now });
        }
        PayloadClass::Warning => {
            if !app.warned {
                app.warned = true;
                driver.warn(now);
                app.warning_active = true;
                out.newly_warned = true;
            }
            let behind = packet.sender_heading == receiver.heading && packet.sender_position_m < receiver.position_m;
            if behind && !app.suppressed {
                app.suppressed = true;
                app.suppressed_at = Some(now);
                out.newly_suppressed = true;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::Mode;
    use crate::scenario::Heading;
    use crate::security::PseudonymId;

    fn car(id: u32, pos: f64) -> VehicleState {
        VehicleState {
            id: VehicleId(id),
            lane: 0,
            heading: Heading::Forward,
            position_m: pos,
            speed_mps: 20.0,
            mode: Mode::Cruising,
            brake_light: false,
            length_m: 4.0,
        }
    }

    fn app(id: u32, phase_ms: f64) -> AppState {
        let p = Pseudonym {
            id: PseudonymId(u64::from(id)),
            owner: VehicleId(id),
            activated_at: SimTime::ZERO,
            lifetime: SimTime::from_secs_f64(60.0),
        };
        AppState::new(SimTime::from_millis_f64(phase_ms), p)
    }

    fn profile(scheme: Scheme, alpha: u32) -> SecurityProfile {
        SecurityProfile { scheme, alpha, beta: 0, payload_bytes: 200, costs: CostTable::default() }
    }

    #[test]
    fn beacons_follow_schedule() {
        let v = car(0, 0.0);
        let mut a = app(0, 3.0);
        let prof = profile(Scheme::Bp, 5);
        let kinds: Vec<_> = (0..6).map(|_| beacon_tick(&v, &mut a, SimTime::ZERO, &prof).kind).collect();
        assert_eq!(kinds[0], PacketKind::Long);
        assert!(kinds[1..5].iter().all(|k| *k == PacketKind::Short));
        assert_eq!(kinds[5], PacketKind::Long);
        let p = beacon_tick(&v, &mut a, SimTime::ZERO, &profile(Scheme::NoSecurity, 5));
        assert_eq!((p.kind, p.size_bytes), (PacketKind::Plain, 200));
    }

    #[test]
    fn warning_needs_active_unsuppressed() {
        let mut v = car(0, 50.0);
        let mut a = app(0, 10.0);
        let prof = profile(Scheme::Hybrid, 10);
        assert!(warning_tick(&v, &mut a, SimTime::ZERO, &prof).is_none());
        let mut d = DriverState::new(SimTime::from_secs_f64(1.0));
        let t0 = SimTime::from_secs_f64(60.0);
        emergency_trigger(&mut v, &mut d, &mut a, t0, t0).unwrap();
        assert_eq!(v.mode, Mode::Braking);
        assert_eq!(d.braking_from, Some(t0));
        let w = warning_tick(&v, &mut a, t0, &prof).unwrap();
        assert_eq!(w.class, PayloadClass::Warning);
        assert!(w.sender_braking);
        assert_eq!(w.sender_position_m, 50.0);
        // Warnings do not advance the beacon counters.
        assert_eq!(a.schedule, SenderSchedule::default());
        a.suppressed = true;
        assert!(warning_tick(&v, &mut a, t0, &prof).is_none());
        assert_eq!(a.warning_phase(SimTime::from_millis_f64(100.0)), SimTime::from_millis_f64(60.0));
    }

    #[test]
    fn emergency_rejected_during_warmup() {
        let mut v = car(0, 0.0);
        let mut a = app(0, 0.0);
        let mut d = DriverState::new(SimTime::from_secs_f64(1.0));
        let r = emergency_trigger(&mut v, &mut d, &mut a, SimTime::from_secs_f64(30.0), SimTime::from_secs_f64(60.0));
        assert!(r.is_err());
        assert_eq!(v.mode, Mode::Cruising);
    }

    #[test]
    fn relay_and_suppression() {
        let prof = profile(Scheme::NoSecurity, 1);
        let mut v2 = car(2, 200.0);
        v2.brake_light = true;
        let mut a2 = app(2, 0.0);
        a2.warning_active = true;
        let v5 = car(5, 140.0);
        let mut a5 = app(5, 0.0);
        let mut d5 = DriverState::new(SimTime::from_secs_f64(1.0));
        let now = SimTime::from_secs_f64(61.0);
        let w = warning_tick(&v2, &mut a2, now, &prof).unwrap();
        let out = on_app_receive(&v5, &mut a5, &mut d5, &w, now);
        assert_eq!(out, ReceiveOutcome { newly_warned: true, newly_suppressed: false });
        assert!(a5.sends_warnings());
        assert_eq!(d5.warned_at, Some(now));

        let v9 = car(9, 60.0);
        let mut a9 = app(9, 0.0);
        a9.warning_active = true;
        let later = SimTime::from_secs_f64(61.3);
        let w9 = warning_tick(&v9, &mut a9, later, &prof).unwrap();
        let out = on_app_receive(&v5, &mut a5, &mut d5, &w9, later);
        assert_eq!(out, ReceiveOutcome { newly_warned: false, newly_suppressed: true });
        assert!(!a5.sends_warnings());
        assert_eq!(d5.warned_at, Some(now));
    }

    #[test]
    fn beacons_only_touch_neighbor_table() {
        let prof = profile(Scheme::NoSecurity, 1);
        let v1 = car(1, 100.0);
        let mut a1 = app(1, 0.0);
        let v2 = car(2, 80.0);
        let mut a2 = app(2, 0.0);
        let mut d2 = DriverState::new(SimTime::from_secs_f64(1.0));
        let b = beacon_tick(&v1, &mut a1, SimTime::ZERO, &prof);
        let out = on_app_receive(&v2, &mut a2, &mut d2, &b, SimTime::ZERO);
        assert_eq!(out, ReceiveOutcome::default());
        assert!(!a2.warned);
        assert_eq!(a2.neighbors[&VehicleId(1)].position_m, 100.0);
    }
}
