//! Broadcast CSMA/CA: carrier sense, AIFS and a single random backoff.
//! No ACKs, retransmissions or RTS/CTS.

use std::collections::VecDeque;

use rand::Rng;

use crate::phy::RadioParams;
use crate::security::{PacketMeta, PayloadClass};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacTiming {
    pub aifs: SimTime,
    pub slot: SimTime,
    pub cw_min: u32,
}

impl MacTiming {
    pub fn new(params: &RadioParams) -> Self {
        MacTiming {
            aifs: SimTime::from_micros_f64(params.aifs_us),
            slot: SimTime::from_micros_f64(params.slot_time_us),
            cw_min: params.cw_min,
        }
    }
}

/// Channel access state of a station with a frame waiting to go out.
#[derive(Debug, Clone, PartialEq)]
pub struct Contention {
    /// Remaining backoff slots; `None` if the frame found the medium idle.
    pub backoff: Option<u32>,
    /// Start of the current idle period, `None` while the medium is busy.
    pub idle_since: Option<SimTime>,
    /// Aggregate sensed power from frames on air, mW.
    pub sensed_mw: f64,
}

impl Contention {
    /// A frame reaches the head of the queue at `now`.
    pub fn arrive<R: Rng + ?Sized>(now: SimTime, sensed_mw: f64, cs_mw: f64, timing: &MacTiming, rng: &mut R) -> Self {
        if sensed_mw < cs_mw {
            Contention { backoff: None, idle_since: Some(now), sensed_mw }
        } else {
            Contention { backoff: Some(rng.random_range(0..=timing.cw_min)), idle_since: None, sensed_mw }
        }
    }

    pub fn is_idle(&self) -> bool {
        self.idle_since.is_some()
    }

    /// When the frame goes out if the medium stays idle.
    pub fn tx_time(&self, timing: &MacTiming) -> Option<SimTime> {
        let since = self.idle_since?;
        let slots = u64::from(self.backoff.unwrap_or(0));
        Some(since + timing.aifs + SimTime(slots * timing.slot.0))
    }

    /// Medium turned busy: freeze the backoff, counting only whole idle
    /// slots that elapsed after AIFS. A frame that was waiting out AIFS
    /// draws a backoff now.
    pub fn on_busy<R: Rng + ?Sized>(&mut self, now: SimTime, timing: &MacTiming, rng: &mut R) {
        let Some(since) = self.idle_since.take() else { return };
        match self.backoff {
            None => self.backoff = Some(rng.random_range(0..=timing.cw_min)),
            Some(k) => {
                let start = since + timing.aifs;
                if now > start {
                    let elapsed = (now - start).0 / timing.slot.0.max(1);
                    self.backoff = Some(k - k.min(elapsed as u32));
                }
            }
        }
    }

    pub fn on_idle(&mut self, now: SimTime) {
        if self.idle_since.is_none() {
            self.idle_since = Some(now);
        }
    }

    /// Apply a change in sensed power; returns true if idle/busy flipped.
    pub fn sense<R: Rng + ?Sized>(
        &mut self,
        sensed_mw: f64,
        now: SimTime,
        cs_mw: f64,
        timing: &MacTiming,
        rng: &mut R,
    ) -> bool {
        self.sensed_mw = sensed_mw.max(0.0);
        let busy = self.sensed_mw >= cs_mw;
        match (self.is_idle(), busy) {
            (true, true) => {
                self.on_busy(now, timing, rng);
                true
            }
            (false, false) => {
                self.on_idle(now);
                true
            }
            _ => false,
        }
    }
}

/// Scheduled transmission time of a frame handed to an idle station at
/// `now`, or `None` if the medium is busy and the frame must wait for it.
pub fn try_send<R: Rng + ?Sized>(
    now: SimTime,
    sensed_mw: f64,
    cs_mw: f64,
    timing: &MacTiming,
    rng: &mut R,
) -> (Contention, Option<SimTime>) {
    let c = Contention::arrive(now, sensed_mw, cs_mw, timing, rng);
    let t = c.tx_time(timing);
    (c, t)
}

/// Outgoing queue of one vehicle: at most one beacon and one warning; a
/// newer packet of the same class replaces a stale one.
#[derive(Debug, Clone, Default)]
pub struct MacStation {
    pub queue: VecDeque<PacketMeta>,
    pub contention: Option<Contention>,
    pub transmitting: bool,
    pub replaced: u64,
}

impl MacStation {
    pub fn enqueue(&mut self, p: PacketMeta) {
        if let Some(slot) = self.queue.iter_mut().find(|q| q.class == p.class) {
            *slot = p;
            self.replaced += 1;
        } else if p.class == PayloadClass::Warning {
            // Warnings go ahead of a queued beacon, but never displace the
            // frame already contending.
            let at = if self.contention.is_some() { 1.min(self.queue.len()) } else { 0 };
            self.queue.insert(at, p);
        } else {
            self.queue.push_back(p);
        }
    }

    pub fn is_contending(&self) -> bool {
        self.contention.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Heading, VehicleId};
    use crate::security::{PacketKind, PseudonymId};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn timing() -> MacTiming {
        MacTiming::new(&RadioParams::default())
    }

    fn us(x: f64) -> SimTime {
        SimTime::from_micros_f64(x)
    }

    #[test]
    fn idle_channel_waits_aifs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (c, t) = try_send(us(1000.0), 0.0, 1.0, &timing(), &mut rng);
        assert_eq!(t, Some(us(1058.0)));
        assert_eq!(c.backoff, None);
    }

    #[test]
    fn busy_channel_defers_then_counts_down() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tm = timing();
        let (mut c, t) = try_send(us(0.0), 2.0, 1.0, &tm, &mut rng);
        assert_eq!(t, None);
        let k = c.backoff.unwrap();
        assert!(k <= 15);
        assert!(c.sense(0.0, us(500.0), 1.0, &tm, &mut rng));
        assert_eq!(c.tx_time(&tm), Some(us(500.0 + 58.0 + 13.0 * f64::from(k))));
        // Busy again after AIFS + 2.5 slots: two slots are consumed.
        let k_before = c.backoff.unwrap();
        if k_before >= 3 {
            c.sense(5.0, us(500.0 + 58.0 + 32.5), 1.0, &tm, &mut rng);
            assert_eq!(c.backoff, Some(k_before - 2));
            assert_eq!(c.tx_time(&tm), None);
        }
    }

    #[test]
    fn aifs_interrupted_draws_backoff() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let tm = timing();
        let (mut c, _) = try_send(us(0.0), 0.0, 1.0, &tm, &mut rng);
        c.sense(3.0, us(20.0), 1.0, &tm, &mut rng);
        assert!(c.backoff.is_some());
        assert!(!c.is_idle());
    }

    #[test]
    fn smaller_backoff_goes_first() {
        let tm = timing();
        let a = Contention { backoff: Some(2), idle_since: Some(us(100.0)), sensed_mw: 0.0 };
        let b = Contention { backoff: Some(5), idle_since: Some(us(100.0)), sensed_mw: 0.0 };
        assert!(a.tx_time(&tm) < b.tx_time(&tm));
        let c = Contention { backoff: Some(2), ..b };
        assert_eq!(a.tx_time(&tm), c.tx_time(&tm));
    }

    fn pkt(class: PayloadClass, seq: u64) -> PacketMeta {
        PacketMeta {
            sender: VehicleId(0),
            pseudonym: PseudonymId(0),
            kind: PacketKind::Plain,
            size_bytes: 200,
            seq,
            class,
            sender_position_m: 0.0,
            sender_heading: Heading::Forward,
            sender_braking: false,
            timestamp: SimTime::ZERO,
        }
    }

    #[test]
    fn queue_replaces_stale_packets() {
        let mut s = MacStation::default();
        s.enqueue(pkt(PayloadClass::Beacon, 1));
        s.enqueue(pkt(PayloadClass::Beacon, 2));
        assert_eq!(s.queue.len(), 1);
        assert_eq!(s.queue[0].seq, 2);
        assert_eq!(s.replaced, 1);
        s.enqueue(pkt(PayloadClass::Warning, 3));
        assert_eq!(s.queue[0].class, PayloadClass::Warning);
        s.contention = Some(Contention { backoff: None, idle_since: None, sensed_mw: 0.0 });
        s.queue.pop_front();
        s.enqueue(pkt(PayloadClass::Warning, 4));
        assert_eq!(s.queue.iter().map(|p| p.seq).collect::<Vec<_>>(), vec![2, 4]);
    }
}
