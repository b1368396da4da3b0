//! Pseudonymous authentication modeled as size and time overlays.
//!
//! No cryptography is computed. A pseudonym is an opaque token, a LONG
//! message carries the pseudonym and its certificate on top of the message
//! signature, a SHORT message carries the signature only. Verification
//! always succeeds and only its cost (from [`CostTable`]) is charged.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{Heading, VehicleId};
use crate::time::SimTime;

#[derive(Debug, Error, PartialEq)]
pub enum SecurityError {
    #[error("pseudonym {id:?} rotated at {now} before it expired at {expires}")]
    RotationBeforeExpiry { id: PseudonymId, now: SimTime, expires: SimTime },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    NoSecurity,
    #[serde(rename = "BP")]
    Bp,
    Hybrid,
}

impl Scheme {
    pub fn is_secured(self) -> bool {
        self != Scheme::NoSecurity
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::NoSecurity => "NoSecurity",
            Scheme::Bp => "BP",
            Scheme::Hybrid => "Hybrid",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nosecurity" | "none" | "no_security" => Ok(Scheme::NoSecurity),
            "bp" | "baseline" => Ok(Scheme::Bp),
            "hybrid" => Ok(Scheme::Hybrid),
            _ => Err(format!("expected one of NoSecurity, BP, Hybrid; got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PacketKind {
    Long,
    Short,
    Plain,
}

impl fmt::Display for PacketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PacketKind::Long => "LONG",
            PacketKind::Short => "SHORT",
            PacketKind::Plain => "PLAIN",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PayloadClass {
    Beacon,
    Warning,
}

/// Per-message cost of one packet type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEntry {
    pub sign_ms: f64,
    pub verify_ms: f64,
    pub overhead_bytes: u32,
}

impl CostEntry {
    pub const FREE: CostEntry = CostEntry { sign_ms: 0.0, verify_ms: 0.0, overhead_bytes: 0 };
}

/// Signing/verification cost and byte overhead per (scheme, kind).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    pub bp_long: CostEntry,
    pub hybrid_long: CostEntry,
    pub short: CostEntry,
    /// First validation of a LONG also pays for the message signature.
    pub long_adds_message_verify: bool,
}

impl Default for CostTable {
    fn default() -> Self {
        CostTable {
            bp_long: CostEntry { sign_ms: 1.3, verify_ms: 7.2, overhead_bytes: 141 },
            hybrid_long: CostEntry { sign_ms: 54.2, verify_ms: 52.3, overhead_bytes: 302 },
            short: CostEntry { sign_ms: 0.5, verify_ms: 3.0, overhead_bytes: 48 },
            long_adds_message_verify: true,
        }
    }
}

impl CostTable {
    pub fn entry(&self, scheme: Scheme, kind: PacketKind) -> CostEntry {
        match (scheme, kind) {
            (Scheme::NoSecurity, _) | (_, PacketKind::Plain) => CostEntry::FREE,
            (Scheme::Bp, PacketKind::Long) => self.bp_long,
            (Scheme::Hybrid, PacketKind::Long) => self.hybrid_long,
            (_, PacketKind::Short) => self.short,
        }
    }

    /// Cost of validating a pseudonym the first time it is seen.
    pub fn first_validation_ms(&self, scheme: Scheme) -> f64 {
        let cert = self.entry(scheme, PacketKind::Long).verify_ms;
        if self.long_adds_message_verify && scheme.is_secured() {
            cert + self.short.verify_ms
        } else {
            cert
        }
    }

    pub fn message_verify_ms(&self, scheme: Scheme) -> f64 {
        self.entry(scheme, PacketKind::Short).verify_ms
    }

    pub fn is_valid(&self) -> bool {
        [self.bp_long, self.hybrid_long, self.short].iter().all(|e| {
            e.sign_ms >= 0.0 && e.verify_ms >= 0.0 && e.sign_ms.is_finite() && e.verify_ms.is_finite()
        })
    }
}

pub fn packet_size(payload_bytes: u32, scheme: Scheme, kind: PacketKind, costs: &CostTable) -> u32 {
    payload_bytes + costs.entry(scheme, kind).overhead_bytes
}

/// Steady-state mean frame payload+security size with one LONG per `alpha`
/// messages, rounded to the nearest byte.
pub fn avg_packet_size(scheme: Scheme, alpha: u32, payload_bytes: u32, costs: &CostTable) -> u32 {
    assert!(alpha >= 1, "alpha must be at least 1");
    if !scheme.is_secured() {
        return payload_bytes;
    }
    let long = f64::from(costs.entry(scheme, PacketKind::Long).overhead_bytes);
    let short = f64::from(costs.short.overhead_bytes);
    let alpha = f64::from(alpha);
    let overhead = (long + (alpha - 1.0) * short) / alpha;
    (f64::from(payload_bytes) + overhead).round() as u32
}

/// Slot duration in milliseconds for beacon rate `gamma_hz`.
pub fn slot_ms(gamma_hz: f64) -> f64 {
    1000.0 / gamma_hz
}

/// How many messages of a given verification cost fit in one slot.
pub fn slot_capacity(verify_ms: f64, gamma_hz: f64) -> f64 {
    slot_ms(gamma_hz) / verify_ms
}

/// All work in a slot completes iff its summed cost is strictly below the
/// slot duration.
pub fn slot_feasibility(costs_ms: &[f64], gamma_hz: f64) -> bool {
    costs_ms.iter().sum::<f64>() < slot_ms(gamma_hz)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PseudonymId(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct Pseudonym {
    pub id: PseudonymId,
    pub owner: VehicleId,
    pub activated_at: SimTime,
    pub lifetime: SimTime,
}

impl Pseudonym {
    pub fn expires_at(&self) -> SimTime {
        self.activated_at + self.lifetime
    }

    pub fn is_active(&self, now: SimTime) -> bool {
        now >= self.activated_at && now < self.expires_at()
    }
}

/// Hands out pseudonym tokens that are never reused within a run.
#[derive(Debug, Default)]
pub struct PseudonymIssuer {
    next: u64,
}

impl PseudonymIssuer {
    pub fn fresh(&mut self) -> PseudonymId {
        let id = PseudonymId(self.next);
        self.next += 1;
        id
    }

    pub fn issued(&self) -> u64 {
        self.next
    }
}

/// Per-vehicle pseudonym change times: `phase + k * tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationClock {
    pub phase: SimTime,
    pub tau: SimTime,
}

impl RotationClock {
    pub fn new(phase: SimTime, tau: SimTime) -> Self {
        assert!(phase < tau, "rotation phase must lie in [0, tau)");
        RotationClock { phase, tau }
    }

    /// The pseudonym in use at t=0. Its lifetime is cut short so that it
    /// expires at the first change.
    pub fn initial(&self, owner: VehicleId, issuer: &mut PseudonymIssuer) -> Pseudonym {
        Pseudonym { id: issuer.fresh(), owner, activated_at: SimTime::ZERO, lifetime: self.phase }
    }

    /// First change time at or after `now`.
    pub fn next_change(&self, now: SimTime) -> SimTime {
        now.next_on_grid(self.phase, self.tau)
    }
}

/// Retires `current` and activates a fresh pseudonym of the given lifetime at
/// `now`, resetting the sender's LONG/SHORT counters.
pub fn rotate_pseudonym(
    current: &Pseudonym,
    now: SimTime,
    lifetime: SimTime,
    issuer: &mut PseudonymIssuer,
    schedule: &mut SenderSchedule,
) -> Result<Pseudonym, SecurityError> {
    if now < current.expires_at() {
        return Err(SecurityError::RotationBeforeExpiry {
            id: current.id,
            now,
            expires: current.expires_at(),
        });
    }
    schedule.reset();
    Ok(Pseudonym { id: issuer.fresh(), owner: current.owner, activated_at: now, lifetime })
}

/// Sender-side LONG/SHORT scheduling under the certificate period `alpha`
/// and push period `beta`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SenderSchedule {
    pub messages_since_pseudonym_change: u32,
    /// `None` until the first LONG under the current pseudonym.
    pub messages_since_last_long: Option<u32>,
}

impl SenderSchedule {
    pub fn reset(&mut self) {
        *self = SenderSchedule::default();
    }

    /// Kind the next counted message would carry.
    pub fn peek_kind(&self, alpha: u32, beta: u32) -> PacketKind {
        if self.messages_since_pseudonym_change < beta {
            return PacketKind::Long;
        }
        match self.messages_since_last_long {
            None => PacketKind::Long,
            Some(n) if n + 1 >= alpha => PacketKind::Long,
            Some(_) => PacketKind::Short,
        }
    }

    /// Kind of an off-schedule message (a warning). The periodic LONG is
    /// reserved for the counted messages, so an extra message only carries
    /// the certificate while the pseudonym is being pushed or not yet
    /// announced, or when every message is LONG. Counters do not advance.
    pub fn extra_kind(&self, alpha: u32, beta: u32) -> PacketKind {
        if alpha <= 1 || self.messages_since_pseudonym_change < beta || self.messages_since_last_long.is_none() {
            PacketKind::Long
        } else {
            PacketKind::Short
        }
    }

    /// Decide the kind of the next message and advance the counters.
    pub fn next_kind(&mut self, alpha: u32, beta: u32) -> PacketKind {
        let kind = self.peek_kind(alpha, beta);
        self.messages_since_pseudonym_change = self.messages_since_pseudonym_change.saturating_add(1);
        self.messages_since_last_long = match kind {
            PacketKind::Long => Some(0),
            _ => self.messages_since_last_long.map(|n| n + 1),
        };
        kind
    }
}

/// Metadata of one transmitted frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketMeta {
    pub sender: VehicleId,
    pub pseudonym: PseudonymId,
    pub kind: PacketKind,
    pub size_bytes: u32,
    pub seq: u64,
    pub class: PayloadClass,
    /// Sender position along its heading when the packet was built.
    pub sender_position_m: f64,
    pub sender_heading: Heading,
    pub sender_braking: bool,
    pub timestamp: SimTime,
}

/// Pseudonyms a receiver has already validated, with their owners.
#[derive(Debug, Clone, Default)]
pub struct ValidationCache {
    validated: HashMap<PseudonymId, VehicleId>,
}

impl ValidationCache {
    pub fn contains(&self, id: PseudonymId) -> bool {
        self.validated.contains_key(&id)
    }

    /// Returns `false` if the pseudonym was already present.
    pub fn insert(&mut self, id: PseudonymId, owner: VehicleId) -> bool {
        use std::collections::hash_map::Entry;
        match self.validated.entry(id) {
            Entry::Occupied(_) => false,
            Entry::Vacant(v) => {
                v.insert(owner);
                true
            }
        }
    }

    pub fn owner(&self, id: PseudonymId) -> Option<VehicleId> {
        self.validated.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.validated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.validated.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    ValidateLongAndProcess,
    SkipCachedLong,
    ProcessShort,
    DropUnvalidatedShort,
    /// Unsecured traffic is delivered without verification.
    ProcessPlain,
}

impl Decision {
    pub fn delivers(self) -> bool {
        !matches!(self, Decision::DropUnvalidatedShort)
    }
}

/// What the receiver would do with `p`, without touching the cache.
pub fn classify(p: &PacketMeta, cache: &ValidationCache, scheme: Scheme, costs: &CostTable) -> (Decision, f64) {
    match p.kind {
        PacketKind::Plain => (Decision::ProcessPlain, 0.0),
        PacketKind::Long if cache.contains(p.pseudonym) => {
            (Decision::SkipCachedLong, costs.message_verify_ms(scheme))
        }
        PacketKind::Long => (Decision::ValidateLongAndProcess, costs.first_validation_ms(scheme)),
        PacketKind::Short if cache.contains(p.pseudonym) => {
            (Decision::ProcessShort, costs.message_verify_ms(scheme))
        }
        PacketKind::Short => (Decision::DropUnvalidatedShort, 0.0),
    }
}

/// Receiver-side handling of a relevant, successfully received packet.
pub fn receiver_decide(
    p: &PacketMeta,
    cache: &mut ValidationCache,
    scheme: Scheme,
    costs: &CostTable,
) -> (Decision, f64) {
    let (decision, cost) = classify(p, cache, scheme, costs);
    if decision == Decision::ValidateLongAndProcess {
        cache.insert(p.pseudonym, p.sender);
    }
    (decision, cost)
}

/// Per-slot verification budget. Messages are admitted in arrival order
/// until the next one would exceed the budget.
#[derive(Debug, Clone)]
pub struct SlotBudget {
    budget_ms: Option<f64>,
    slot: u64,
    busy_ms: f64,
}

impl SlotBudget {
    pub fn new(budget_ms: Option<f64>) -> Self {
        SlotBudget { budget_ms, slot: 0, busy_ms: 0.0 }
    }

    pub fn admit(&mut self, slot: u64, cost_ms: f64) -> bool {
        if slot != self.slot {
            self.slot = slot;
            self.busy_ms = 0.0;
        }
        match self.budget_ms {
            Some(b) if self.busy_ms + cost_ms > b => false,
            _ => {
                self.busy_ms += cost_ms;
                true
            }
        }
    }

    pub fn busy_ms(&self) -> f64 {
        self.busy_ms
    }
}
