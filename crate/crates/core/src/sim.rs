//! Event-driven replication engine tying mobility, MAC/PHY, security and
//! the warning application together.
//!
//! Background vehicles only load the channel: they cruise at constant
//! speed, ignore the platoon physically and wrap around a window centred
//! on the platoon middle so the traffic density around the platoon stays
//! constant. Frame reception is evaluated at platoon members only.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app::{beacon_tick, emergency_trigger, on_app_receive, warning_tick, AppError, AppState, SecurityProfile};
use crate::config::{ExperimentConfig, ProcessingReceivers};
use crate::mac::{Contention, MacStation, MacTiming};
use crate::metrics::{CrashReport, PdrHistogram, ProcessingLedger};
use crate::mobility::{detect_crashes, start_braking, step_kinematics, visual_warning_check, DriverState, Mode, VehicleState};
use crate::phy::{airtime, peak_interference, Fading, Interference, LinkBudget};
use crate::rng::{keyed, stream, Subsystem};
use crate::scenario::{build_scenario, Heading, Scenario, VehicleId};
use crate::security::{
    classify, rotate_pseudonym, Decision, PacketKind, PacketMeta, PayloadClass, PseudonymId, PseudonymIssuer,
    RotationClock, SecurityError, SlotBudget, ValidationCache,
};
use crate::time::SimTime;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    App(#[from] AppError),
    #[error(transparent)]
    Security(#[from] SecurityError),
}

/// How frame reception is decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ChannelModel {
    /// Path loss, Nakagami fading and SINR capture.
    #[default]
    Fading,
    /// Every frame within the nominal range is received unless the
    /// receiver is transmitting.
    Ideal,
}

/// Drop the first `count` matching frames from `sender` to `receiver`
/// whose transmission ends at or after `after`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRule {
    pub sender: VehicleId,
    pub receiver: VehicleId,
    pub kind: Option<PacketKind>,
    pub class: Option<PayloadClass>,
    pub after: SimTime,
    pub count: u32,
}

impl LossRule {
    fn matches(&self, p: &PacketMeta, receiver: VehicleId, now: SimTime) -> bool {
        self.count > 0
            && p.sender == self.sender
            && receiver == self.receiver
            && now >= self.after
            && self.kind.is_none_or(|k| k == p.kind)
            && self.class.is_none_or(|c| c == p.class)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    pub channel: ChannelModel,
    pub losses: Vec<LossRule>,
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TraceEvent {
    Emergency { at: SimTime },
    Rotation { at: SimTime, vehicle: VehicleId, pseudonym: PseudonymId },
    /// A relevant frame at a platoon receiver.
    Reception {
        at: SimTime,
        sender: VehicleId,
        receiver: VehicleId,
        kind: PacketKind,
        class: PayloadClass,
        received: bool,
        forced_loss: bool,
        decision: Option<Decision>,
        admitted: bool,
    },
    Warned { at: SimTime, vehicle: VehicleId, visual: bool },
    Suppressed { at: SimTime, vehicle: VehicleId },
    Crash { at: SimTime, follower: VehicleId, leader: VehicleId },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub events: u64,
    pub frames: u64,
    pub beacons: u64,
    pub warnings: u64,
    pub replaced: u64,
    pub receptions: u64,
    pub long_created: u64,
    pub short_created: u64,
}

/// Everything one replication produces.
#[derive(Debug, Clone)]
pub struct ReplicationOutcome {
    pub rep_seed: u64,
    pub pdr: PdrHistogram,
    pub ledgers: Vec<ProcessingLedger>,
    /// Measurement window in absolute slot indices, half-open.
    pub window: (u64, u64),
    pub crash: Option<CrashReport>,
    pub stats: SimStats,
    pub trace: Vec<TraceEvent>,
    pub end_time: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    Mobility,
    TxEnd(u64),
    Emergency,
    Rotate(u32),
    Beacon(u32),
    Warning(u32),
    MacWake(u64),
    End,
}

impl Ev {
    fn priority(self) -> u8 {
        match self {
            Ev::Mobility => 0,
            Ev::TxEnd(_) => 1,
            Ev::Emergency => 2,
            Ev::Rotate(_) => 3,
            Ev::Beacon(_) | Ev::Warning(_) => 4,
            Ev::MacWake(_) => 5,
            Ev::End => 6,
        }
    }
}

#[derive(Debug, Clone)]
struct Frame {
    id: u64,
    sender: u32,
    start: SimTime,
    end: SimTime,
    x: f64,
    y: f64,
    heading: Heading,
    packet: PacketMeta,
    /// Set once the frame's end has been processed.
    done: bool,
}

const NOT_PENDING: usize = usize::MAX;

pub struct Simulation {
    cfg: ExperimentConfig,
    opts: SimOptions,
    rep_seed: u64,
    profile: SecurityProfile,
    budget: LinkBudget,
    fading: Fading,
    timing: MacTiming,
    slot: SimTime,
    dt: SimTime,
    tau: SimTime,
    t0: SimTime,
    warmup: SimTime,
    road_length: f64,

    states: Vec<VehicleState>,
    lateral: Vec<f64>,
    apps: Vec<AppState>,
    macs: Vec<MacStation>,
    warning_scheduled: Vec<bool>,
    n_platoon: usize,
    drivers: Vec<DriverState>,
    caches: Vec<ValidationCache>,
    budgets: Vec<SlotBudget>,
    ledger_of: Vec<Option<usize>>,
    ledgers: Vec<ProcessingLedger>,
    window: (u64, u64),
    crash_times: Vec<Option<SimTime>>,
    stop_times: Vec<Option<SimTime>>,

    issuer: PseudonymIssuer,
    backoff_rng: ChaCha8Rng,
    queue: BinaryHeap<Reverse<(SimTime, u8, u64, Ev)>>,
    seq: u64,
    now: SimTime,
    last_step: SimTime,
    emergency_done: bool,
    finished: bool,

    frames: Vec<Frame>,
    next_frame: u64,
    pending: Vec<u32>,
    pending_pos: Vec<usize>,
    wake_gen: u64,
    wake_at: Option<SimTime>,

    pdr: PdrHistogram,
    stats: SimStats,
    trace: Vec<TraceEvent>,
}

fn uniform_offset(rng: &mut ChaCha8Rng, span: SimTime) -> SimTime {
    if span.0 == 0 {
        SimTime::ZERO
    } else {
        SimTime(rng.random_range(0..span.0))
    }
}

impl Simulation {
    pub fn new(cfg: &ExperimentConfig, scenario: Scenario, rep_seed: u64, opts: SimOptions) -> Result<Self, SimError> {
        let n_platoon = scenario.platoon_size();
        if n_platoon == 0 {
            return Err(SimError::InvalidScenario("empty platoon".into()));
        }
        for (i, v) in scenario.vehicles.iter().enumerate() {
            if v.id.index() != i {
                return Err(SimError::InvalidScenario(format!("vehicle ids must be dense, found {} at {i}", v.id.0)));
            }
            let expect_platoon = i < n_platoon;
            if v.is_platoon_member() != expect_platoon {
                return Err(SimError::InvalidScenario("platoon members must come first".into()));
            }
            if expect_platoon && (v.lane != scenario.platoon_lane || v.heading != Heading::Forward) {
                return Err(SimError::InvalidScenario("platoon must drive forward in one lane".into()));
            }
        }
        for w in scenario.vehicles[..n_platoon].windows(2) {
            if w[1].position_m > w[0].position_m - cfg.vehicle_length_m {
                return Err(SimError::InvalidScenario("platoon members overlap or are out of order".into()));
            }
        }

        let slot = SimTime::from_millis_f64(cfg.slot_ms());
        let tau = SimTime::from_secs_f64(cfg.tau_s);
        let warmup = SimTime::from_secs_f64(cfg.warmup_s);
        let t0 = SimTime::from_secs_f64(cfg.emergency_time_s());
        let profile = SecurityProfile {
            scheme: cfg.scheme,
            alpha: cfg.alpha,
            beta: cfg.beta,
            payload_bytes: cfg.payload_bytes,
            costs: cfg.costs.clone(),
        };

        let mut phase_rng = stream(rep_seed, Subsystem::BeaconPhase);
        let mut pseudo_rng = stream(rep_seed, Subsystem::PseudonymPhase);
        let mut reaction_rng = stream(rep_seed, Subsystem::Reaction);
        let mut issuer = PseudonymIssuer::default();

        let n = scenario.vehicles.len();
        let mut states = Vec::with_capacity(n);
        let mut lateral = Vec::with_capacity(n);
        let mut apps = Vec::with_capacity(n);
        let mut clocks = Vec::with_capacity(n);
        for v in &scenario.vehicles {
            states.push(VehicleState {
                id: v.id,
                lane: v.lane,
                heading: v.heading,
                position_m: v.position_m,
                speed_mps: v.speed_mps,
                mode: Mode::Cruising,
                brake_light: false,
                length_m: cfg.vehicle_length_m,
            });
            lateral.push(scenario.lateral_m(v.lane));
            let clock = RotationClock::new(uniform_offset(&mut pseudo_rng, tau), tau);
            let pseudonym = clock.initial(v.id, &mut issuer);
            apps.push(AppState::new(uniform_offset(&mut phase_rng, slot), pseudonym));
            clocks.push(clock);
        }
        let drivers = (0..n_platoon)
            .map(|_| {
                let r = reaction_rng.random_range(cfg.reaction_min_s..=cfg.reaction_max_s);
                DriverState::new(SimTime::from_secs_f64(r))
            })
            .collect();

        let measure_end = if cfg.emergency {
            t0
        } else {
            warmup + SimTime::from_secs_f64(cfg.steady_state_s)
        };
        let window = (warmup.0.div_ceil(slot.0), measure_end.0 / slot.0);
        let n_slots = window.1.saturating_sub(window.0);
        let mut ledger_of = vec![None; n_platoon];
        let mut ledgers = Vec::new();
        match cfg.processing_receivers {
            ProcessingReceivers::Middle => {
                let mid = scenario.platoon_middle().expect("platoon is not empty").id.index();
                ledger_of[mid] = Some(0);
                ledgers.push(ProcessingLedger::new(window.0, n_slots));
            }
            ProcessingReceivers::Platoon => {
                for (i, l) in ledger_of.iter_mut().enumerate() {
                    *l = Some(i);
                    ledgers.push(ProcessingLedger::new(window.0, n_slots));
                }
            }
        }

        let tx_power = cfg.tx_power_dbm();
        let mut sim = Simulation {
            profile,
            budget: LinkBudget::new(&cfg.radio, tx_power),
            fading: Fading::new(&cfg.radio),
            timing: MacTiming::new(&cfg.radio),
            slot,
            dt: SimTime::from_millis_f64(cfg.mobility_dt_ms),
            tau,
            t0,
            warmup,
            road_length: scenario.road_length_m,
            warning_scheduled: vec![false; n],
            macs: vec![MacStation::default(); n],
            n_platoon,
            drivers,
            caches: vec![ValidationCache::default(); n_platoon],
            budgets: vec![SlotBudget::new(cfg.processing_budget.as_option()); n_platoon],
            ledger_of,
            ledgers,
            window,
            crash_times: vec![None; n_platoon],
            stop_times: vec![None; n_platoon],
            issuer,
            backoff_rng: stream(rep_seed, Subsystem::Backoff),
            queue: BinaryHeap::new(),
            seq: 0,
            now: SimTime::ZERO,
            last_step: SimTime::ZERO,
            emergency_done: false,
            finished: false,
            frames: Vec::new(),
            next_frame: 0,
            pending: Vec::new(),
            pending_pos: vec![NOT_PENDING; n],
            wake_gen: 0,
            wake_at: None,
            pdr: PdrHistogram::default(),
            stats: SimStats::default(),
            trace: Vec::new(),
            states,
            lateral,
            apps,
            cfg: cfg.clone(),
            opts,
            rep_seed,
        };

        sim.schedule(sim.dt, Ev::Mobility);
        if cfg.v2v {
            for (i, clock) in clocks.iter().enumerate().take(n) {
                let phase = sim.apps[i].beacon_phase;
                sim.schedule(phase, Ev::Beacon(i as u32));
                sim.schedule(clock.next_change(SimTime::ZERO), Ev::Rotate(i as u32));
            }
        }
        if cfg.emergency {
            sim.schedule(t0, Ev::Emergency);
        } else {
            sim.schedule(measure_end, Ev::End);
        }
        sim.schedule(SimTime::from_secs_f64(cfg.max_duration_s), Ev::End);
        Ok(sim)
    }

    fn schedule(&mut self, at: SimTime, ev: Ev) {
        self.seq += 1;
        self.queue.push(Reverse((at, ev.priority(), self.seq, ev)));
    }

    pub fn run(mut self) -> Result<ReplicationOutcome, SimError> {
        while let Some(Reverse((at, _, _, ev))) = self.queue.pop() {
            debug_assert!(at >= self.now);
            self.now = at;
            self.stats.events += 1;
            match ev {
                Ev::Mobility => self.on_mobility()?,
                Ev::TxEnd(id) => self.on_tx_end(id)?,
                Ev::Emergency => self.on_emergency()?,
                Ev::Rotate(i) => self.on_rotate(i as usize)?,
                Ev::Beacon(i) => self.on_beacon(i as usize),
                Ev::Warning(i) => self.on_warning(i as usize),
                Ev::MacWake(gen) => {
                    if gen == self.wake_gen {
                        self.on_wake()?;
                    }
                }
                Ev::End => self.finished = true,
            }
            if self.finished {
                break;
            }
        }
        self.finish()
    }

    fn finish(self) -> Result<ReplicationOutcome, SimError> {
        for l in &self.ledgers {
            if let Some(bad) = l.slots.iter().position(|c| !c.is_conserved()) {
                return Err(SimError::Invariant(format!("ledger conservation in slot {}", l.first_slot + bad as u64)));
            }
        }
        let crash = self.cfg.emergency.then(|| {
            let platoon = &self.states[..self.n_platoon];
            CrashReport {
                platoon_size: self.n_platoon,
                crashed: platoon.iter().map(|v| v.mode == Mode::Crashed).collect(),
                crash_times: self.crash_times.clone(),
                warned_times: self.drivers.iter().map(|d| d.warned_at).collect(),
                stop_times: self.stop_times.clone(),
                moving: platoon.iter().filter(|v| !v.is_immobile()).count(),
            }
        });
        let mut stats = self.stats;
        stats.replaced = self.macs.iter().map(|m| m.replaced).sum();
        Ok(ReplicationOutcome {
            rep_seed: self.rep_seed,
            pdr: self.pdr,
            ledgers: self.ledgers,
            window: self.window,
            crash,
            stats,
            trace: self.trace,
            end_time: self.now,
        })
    }

    fn road_x(&self, i: usize) -> f64 {
        self.states[i].road_x()
    }

    fn dist_sq(&self, x: f64, y: f64, i: usize) -> f64 {
        let dx = self.road_x(i) - x;
        let dy = self.lateral[i] - y;
        dx * dx + dy * dy
    }

    // ---- mobility ----

    fn on_mobility(&mut self) -> Result<(), SimError> {
        let from = self.last_step;
        let to = self.now;
        let dt_s = (to - from).as_secs_f64();
        let decel = self.cfg.decel_mps2;
        for i in 0..self.states.len() {
            if i < self.n_platoon {
                let v = &self.states[i];
                let next = match self.drivers[i].braking_from {
                    Some(b) if v.mode == Mode::Cruising && b < to => {
                        let mut v = v.clone();
                        if b > from {
                            v = step_kinematics(&v, (b - from).as_secs_f64(), decel);
                        }
                        start_braking(&mut v);
                        let rest = (to - b.max(from)).as_secs_f64();
                        if rest > 0.0 {
                            step_kinematics(&v, rest, decel)
                        } else {
                            v
                        }
                    }
                    _ => step_kinematics(v, dt_s, decel),
                };
                self.states[i] = next;
            } else {
                let v = &mut self.states[i];
                v.position_m += v.speed_mps * dt_s;
            }
        }
        self.last_step = to;

        for ev in detect_crashes(&mut self.states[..self.n_platoon]) {
            if self.opts.trace {
                self.trace.push(TraceEvent::Crash { at: to, follower: ev.follower, leader: ev.leader });
            }
        }
        for i in 0..self.n_platoon {
            let v = &self.states[i];
            if v.mode == Mode::Crashed && self.crash_times[i].is_none() {
                self.crash_times[i] = Some(to);
            }
            if v.is_immobile() && self.stop_times[i].is_none() {
                self.stop_times[i] = Some(to);
            }
        }
        for w in self.states[..self.n_platoon].windows(2) {
            if w[1].position_m > w[0].rear_m() + 1e-9 {
                return Err(SimError::Invariant(format!("platoon order broken behind vehicle {}", w[0].id.0)));
            }
        }

        if self.emergency_done {
            for i in 1..self.n_platoon {
                if self.drivers[i].warned_at.is_some() {
                    continue;
                }
                let leader = &self.states[i - 1];
                let gap = leader.rear_m() - self.states[i].position_m;
                if visual_warning_check(leader, gap, self.cfg.brake_light_visibility_m) {
                    self.drivers[i].warn(to);
                    if self.opts.trace {
                        self.trace.push(TraceEvent::Warned { at: to, vehicle: VehicleId(i as u32), visual: true });
                    }
                }
            }
            if self.states[..self.n_platoon].iter().all(VehicleState::is_immobile) {
                self.finished = true;
                return Ok(());
            }
        }

        self.wrap_background()?;
        self.schedule(to + self.dt, Ev::Mobility);
        Ok(())
    }

    fn wrap_background(&mut self) -> Result<(), SimError> {
        let mid = self.n_platoon.div_ceil(2).min(self.n_platoon - 1);
        let centre = self.road_x(mid);
        let half = 0.5 * self.road_length;
        let mut moved_pending = false;
        for i in self.n_platoon..self.states.len() {
            let x = self.road_x(i);
            let shift = if x >= centre + half {
                -self.road_length
            } else if x < centre - half {
                self.road_length
            } else {
                continue;
            };
            let v = &mut self.states[i];
            v.position_m += v.heading.sign() * shift;
            if self.pending_pos[i] != NOT_PENDING {
                let sensed = self.sensed_at(i);
                let now = self.now;
                let cs = self.budget.carrier_sense_mw;
                let c = self.macs[i].contention.as_mut().expect("pending station contends");
                c.sense(sensed, now, cs, &self.timing, &mut self.backoff_rng);
                moved_pending = true;
            }
        }
        if moved_pending {
            self.reschedule_wake();
        }
        Ok(())
    }

    // ---- application ----

    fn on_emergency(&mut self) -> Result<(), SimError> {
        emergency_trigger(&mut self.states[0], &mut self.drivers[0], &mut self.apps[0], self.t0, self.warmup)?;
        self.emergency_done = true;
        if self.opts.trace {
            self.trace.push(TraceEvent::Emergency { at: self.now });
        }
        if self.cfg.v2v {
            self.schedule_warning(0);
        }
        Ok(())
    }

    fn schedule_warning(&mut self, i: usize) {
        if self.warning_scheduled[i] {
            return;
        }
        self.warning_scheduled[i] = true;
        let phase = self.apps[i].warning_phase(self.slot);
        let at = self.now.next_on_grid(phase, self.slot);
        self.schedule(at, Ev::Warning(i as u32));
    }

    fn on_beacon(&mut self, i: usize) {
        let p = beacon_tick(&self.states[i], &mut self.apps[i], self.now, &self.profile);
        self.stats.beacons += 1;
        self.count_kind(p.kind);
        self.submit(i, p);
        self.schedule(self.now + self.slot, Ev::Beacon(i as u32));
    }

    fn on_warning(&mut self, i: usize) {
        // Crashed vehicles keep beaconing but stop warning.
        let p = if self.states[i].mode == Mode::Crashed {
            None
        } else {
            warning_tick(&self.states[i], &mut self.apps[i], self.now, &self.profile)
        };
        match p {
            Some(p) => {
                self.stats.warnings += 1;
                self.count_kind(p.kind);
                self.submit(i, p);
                self.schedule(self.now + self.slot, Ev::Warning(i as u32));
            }
            None => self.warning_scheduled[i] = false,
        }
    }

    fn count_kind(&mut self, kind: PacketKind) {
        match kind {
            PacketKind::Long => self.stats.long_created += 1,
            PacketKind::Short => self.stats.short_created += 1,
            PacketKind::Plain => {}
        }
    }

    fn on_rotate(&mut self, i: usize) -> Result<(), SimError> {
        let app = &mut self.apps[i];
        app.pseudonym = rotate_pseudonym(&app.pseudonym, self.now, self.tau, &mut self.issuer, &mut app.schedule)?;
        if self.opts.trace {
            self.trace.push(TraceEvent::Rotation { at: self.now, vehicle: VehicleId(i as u32), pseudonym: app.pseudonym.id });
        }
        self.schedule(self.now + self.tau, Ev::Rotate(i as u32));
        Ok(())
    }

    // ---- MAC ----

    fn submit(&mut self, i: usize, p: PacketMeta) {
        self.macs[i].enqueue(p);
        if !self.macs[i].transmitting && self.macs[i].contention.is_none() {
            self.begin_contention(i);
        }
    }

    /// Aggregate mean power of frames on air at station `i`.
    fn sensed_at(&self, i: usize) -> f64 {
        self.frames
            .iter()
            .filter(|f| !f.done && f.sender as usize != i)
            .map(|f| self.budget.mean_mw_sq(self.dist_sq(f.x, f.y, i)))
            .sum()
    }

    fn begin_contention(&mut self, i: usize) {
        let sensed = self.sensed_at(i);
        let c = Contention::arrive(self.now, sensed, self.budget.carrier_sense_mw, &self.timing, &mut self.backoff_rng);
        let t = c.tx_time(&self.timing);
        self.macs[i].contention = Some(c);
        self.pending_pos[i] = self.pending.len();
        self.pending.push(i as u32);
        if let Some(t) = t {
            if self.wake_at.is_none_or(|w| t < w) {
                self.set_wake(Some(t));
            }
        }
    }

    fn remove_pending(&mut self, i: usize) {
        let pos = self.pending_pos[i];
        debug_assert_ne!(pos, NOT_PENDING);
        self.pending.swap_remove(pos);
        if let Some(&moved) = self.pending.get(pos) {
            self.pending_pos[moved as usize] = pos;
        }
        self.pending_pos[i] = NOT_PENDING;
    }

    fn set_wake(&mut self, at: Option<SimTime>) {
        if at == self.wake_at {
            return;
        }
        self.wake_gen += 1;
        self.wake_at = at;
        if let Some(t) = at {
            self.schedule(t, Ev::MacWake(self.wake_gen));
        }
    }

    fn reschedule_wake(&mut self) {
        let next = self
            .pending
            .iter()
            .filter_map(|&i| self.macs[i as usize].contention.as_ref().and_then(|c| c.tx_time(&self.timing)))
            .min();
        self.set_wake(next);
    }

    fn on_wake(&mut self) -> Result<(), SimError> {
        self.wake_at = None;
        let now = self.now;
        let ready: Vec<u32> = self
            .pending
            .iter()
            .copied()
            .filter(|&i| {
                self.macs[i as usize].contention.as_ref().and_then(|c| c.tx_time(&self.timing)).is_some_and(|t| t <= now)
            })
            .collect();
        let first_new = self.frames.len();
        for &i in &ready {
            let i = i as usize;
            self.remove_pending(i);
            let mac = &mut self.macs[i];
            mac.contention = None;
            let Some(packet) = mac.queue.pop_front() else {
                return Err(SimError::Invariant(format!("station {i} contended with an empty queue")));
            };
            if mac.transmitting {
                return Err(SimError::Invariant(format!("station {i} started overlapping frames")));
            }
            mac.transmitting = true;
            let end = now + airtime(packet.size_bytes, &self.cfg.radio);
            let id = self.next_frame;
            self.next_frame += 1;
            self.stats.frames += 1;
            self.frames.push(Frame {
                id,
                sender: i as u32,
                start: now,
                end,
                x: self.road_x(i),
                y: self.lateral[i],
                heading: self.states[i].heading,
                packet,
                done: false,
            });
            self.schedule(end, Ev::TxEnd(id));
        }
        let cs = self.budget.carrier_sense_mw;
        for k in 0..self.pending.len() {
            let i = self.pending[k] as usize;
            let added: f64 = self.frames[first_new..]
                .iter()
                .map(|f| self.budget.mean_mw_sq(self.dist_sq(f.x, f.y, i)))
                .sum();
            let c = self.macs[i].contention.as_mut().expect("pending station contends");
            let sensed = c.sensed_mw + added;
            c.sense(sensed, now, cs, &self.timing, &mut self.backoff_rng);
        }
        self.reschedule_wake();
        Ok(())
    }

    fn on_tx_end(&mut self, id: u64) -> Result<(), SimError> {
        let Some(fi) = self.frames.iter().position(|f| f.id == id) else {
            return Err(SimError::Invariant(format!("unknown frame {id} ended")));
        };
        let sender = self.frames[fi].sender as usize;
        self.macs[sender].transmitting = false;
        self.frames[fi].done = true;

        let now = self.now;
        let cs = self.budget.carrier_sense_mw;
        let any_on_air = self.frames.iter().any(|f| !f.done);
        for k in 0..self.pending.len() {
            let i = self.pending[k] as usize;
            let f = &self.frames[fi];
            let sensed = if any_on_air {
                let c = self.macs[i].contention.as_ref().expect("pending station contends");
                c.sensed_mw - self.budget.mean_mw_sq(self.dist_sq(f.x, f.y, i))
            } else {
                0.0
            };
            let c = self.macs[i].contention.as_mut().expect("pending station contends");
            c.sense(sensed, now, cs, &self.timing, &mut self.backoff_rng);
        }

        self.receive(fi)?;

        if !self.macs[sender].queue.is_empty() {
            self.begin_contention(sender);
        }
        self.reschedule_wake();

        // Finished frames matter only while they overlap one still on air.
        let horizon = self.frames.iter().filter(|f| !f.done).map(|f| f.start).min().unwrap_or(now);
        self.frames.retain(|f| !f.done || f.end > horizon);
        Ok(())
    }

    // ---- reception ----

    fn fade(&self, frame_id: u64, receiver: usize, dist: f64) -> f64 {
        let mut rng = keyed(self.rep_seed, frame_id, receiver as u64);
        self.fading.sample(dist, &mut rng)
    }

    fn receive(&mut self, fi: usize) -> Result<(), SimError> {
        let f = self.frames[fi].clone();
        let platoon_heading = Heading::Forward;
        let relevance = self.cfg.relevance_radius();
        let record_pdr = self.cfg.record_pdr && f.start >= self.warmup;
        let same_heading = f.heading == platoon_heading;
        let reach = if record_pdr {
            self.cfg.radio.reception_cutoff_m
        } else if same_heading {
            relevance
        } else {
            return Ok(());
        };

        // Platoon road x is non-increasing with index.
        let platoon = &self.states[..self.n_platoon];
        let lo = platoon.partition_point(|v| v.road_x() > f.x + reach);
        let hi = platoon.partition_point(|v| v.road_x() >= f.x - reach);
        if lo >= hi {
            return Ok(());
        }

        let others: Vec<&Frame> =
            self.frames.iter().filter(|o| o.id != f.id && o.start < f.end && o.end > f.start).collect();
        let mut interferers: Vec<Interference> = Vec::with_capacity(others.len());

        let reach_sq = reach * reach;
        let mut deliveries: Vec<(usize, bool, bool)> = Vec::new();
        for r in lo..hi {
            if r == f.sender as usize {
                continue;
            }
            let d2 = self.dist_sq(f.x, f.y, r);
            if d2 > reach_sq {
                continue;
            }
            let dist = d2.sqrt();
            let relevant = same_heading && dist <= relevance;
            if !relevant && !record_pdr {
                continue;
            }
            self.stats.receptions += 1;
            let transmitting = others.iter().any(|o| o.sender as usize == r);
            let mut ok = match self.opts.channel {
                ChannelModel::Ideal => !transmitting && dist <= self.cfg.nominal_range_m,
                ChannelModel::Fading => {
                    if transmitting {
                        false
                    } else {
                        let signal = self.budget.mean_mw_sq(d2) * self.fade(f.id, r, dist);
                        let thr = self.budget.sinr_threshold;
                        if signal < thr * self.budget.noise_mw {
                            false
                        } else {
                            interferers.clear();
                            for o in &others {
                                let od2 = self.dist_sq(o.x, o.y, r);
                                let p = self.budget.mean_mw_sq(od2) * self.fade(o.id, r, od2.sqrt());
                                interferers.push(Interference { start: o.start, end: o.end, power_mw: p });
                            }
                            let total: f64 = interferers.iter().map(|i| i.power_mw).sum();
                            if signal >= thr * (self.budget.noise_mw + total) {
                                true
                            } else {
                                let peak = peak_interference(f.start, f.end, &interferers);
                                signal >= thr * (self.budget.noise_mw + peak)
                            }
                        }
                    }
                }
            };
            let mut forced = false;
            if ok {
                let rid = VehicleId(r as u32);
                if let Some(rule) = self.opts.losses.iter_mut().find(|l| l.matches(&f.packet, rid, self.now)) {
                    rule.count -= 1;
                    ok = false;
                    forced = true;
                }
            }
            if record_pdr {
                self.pdr.record(dist, ok);
            }
            if relevant {
                deliveries.push((r, ok, forced));
            }
        }

        for (r, ok, forced) in deliveries {
            self.deliver(r, &f.packet, ok, forced);
        }
        Ok(())
    }

    fn deliver(&mut self, r: usize, p: &PacketMeta, received: bool, forced: bool) {
        let now = self.now;
        if !received {
            if self.opts.trace {
                self.trace.push(TraceEvent::Reception {
                    at: now,
                    sender: p.sender,
                    receiver: VehicleId(r as u32),
                    kind: p.kind,
                    class: p.class,
                    received: false,
                    forced_loss: forced,
                    decision: None,
                    admitted: false,
                });
            }
            return;
        }
        let scheme = self.profile.scheme;
        let (mut decision, mut cost) = classify(p, &self.caches[r], scheme, &self.profile.costs);
        if decision == Decision::DropUnvalidatedShort && !self.cfg.gate_unvalidated {
            decision = Decision::ProcessShort;
            cost = self.profile.costs.message_verify_ms(scheme);
        }
        let slot = now.0 / self.slot.0;
        let admitted = self.budgets[r].admit(slot, cost);
        if admitted && decision == Decision::ValidateLongAndProcess {
            self.caches[r].insert(p.pseudonym, p.sender);
        }
        if let Some(l) = self.ledger_of[r] {
            if let Some(c) = self.ledgers[l].slot_mut(slot) {
                c.record(p.kind, decision, cost, admitted);
            }
        }
        if self.opts.trace {
            self.trace.push(TraceEvent::Reception {
                at: now,
                sender: p.sender,
                receiver: VehicleId(r as u32),
                kind: p.kind,
                class: p.class,
                received: true,
                forced_loss: false,
                decision: Some(decision),
                admitted,
            });
        }
        if !(admitted && decision.delivers()) {
            return;
        }
        let out = on_app_receive(&self.states[r], &mut self.apps[r], &mut self.drivers[r], p, now);
        if out.newly_warned {
            if self.opts.trace {
                self.trace.push(TraceEvent::Warned { at: now, vehicle: VehicleId(r as u32), visual: false });
            }
            self.schedule_warning(r);
        }
        if out.newly_suppressed && self.opts.trace {
            self.trace.push(TraceEvent::Suppressed { at: now, vehicle: VehicleId(r as u32) });
        }
    }
}

/// Build the scenario for `rep_seed` and run one replication.
pub fn run_replication(cfg: &ExperimentConfig, rep_seed: u64) -> Result<ReplicationOutcome, SimError> {
    run_replication_with(cfg, rep_seed, SimOptions::default())
}

pub fn run_replication_with(cfg: &ExperimentConfig, rep_seed: u64, opts: SimOptions) -> Result<ReplicationOutcome, SimError> {
    let scenario = build_scenario(cfg, rep_seed);
    Simulation::new(cfg, scenario, rep_seed, opts)?.run()
}
