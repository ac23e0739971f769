//! Bookkeeping of packets in flight and loss detection.
//!
//! A packet is declared lost when
//!
//! * a packet numbered at least 3 higher has been acknowledged, or
//! * it is still unacknowledged 9/8 x max(srtt, latest rtt) after being
//!   sent while a later packet has been acknowledged, or
//! * the retransmission timer (srtt + 4 rttvar, at least one second, doubled
//!   per consecutive expiry) fires, which declares everything in flight lost.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::ops::Range;

use crate::cc::CongestionState;
use crate::intervals::IntervalSet;
use crate::wire::MAX_DATA_PAYLOAD;

pub const PACKET_THRESHOLD: u64 = 3;
pub const TIME_THRESHOLD: f64 = 9.0 / 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SentPacket {
    pub packet_number: u64,
    pub time_sent: f64,
    /// Byte range of the file carried by the packet.
    pub range: Range<u64>,
    pub wire_size: usize,
}

/// Packets in flight, indexed by packet number and by offset.
#[derive(Debug, Clone, Default)]
pub struct SentLog {
    in_flight: BTreeMap<u64, SentPacket>,
    by_offset: BTreeSet<(u64, u64)>,
    bytes_in_flight: u64,
    largest_acked: Option<u64>,
    /// Last time the timer was (re)started: new data acknowledged, or a send
    /// into an empty flight.
    timer_base: f64,
    backoff: u32,
}

/// Packets found lost by one detection pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossReport {
    pub lost: Vec<SentPacket>,
    pub timer_expired: bool,
}

impl SentLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes_in_flight(&self) -> u64 {
        self.bytes_in_flight
    }

    pub fn is_empty(&self) -> bool {
        self.in_flight.is_empty()
    }

    pub fn len(&self) -> usize {
        self.in_flight.len()
    }

    pub fn largest_acked(&self) -> Option<u64> {
        self.largest_acked
    }

    pub fn get(&self, pn: u64) -> Option<&SentPacket> {
        self.in_flight.get(&pn)
    }

    pub fn on_sent(&mut self, packet: SentPacket) {
        if self.in_flight.is_empty() {
            self.timer_base = packet.time_sent;
        }
        self.bytes_in_flight += packet.wire_size as u64;
        self.by_offset
            .insert((packet.range.start, packet.packet_number));
        self.in_flight.insert(packet.packet_number, packet);
    }

    fn take(&mut self, pn: u64) -> Option<SentPacket> {
        let p = self.in_flight.remove(&pn)?;
        self.by_offset.remove(&(p.range.start, pn));
        self.bytes_in_flight -= p.wire_size as u64;
        Some(p)
    }

    /// Marks a packet acknowledged by number.
    pub fn on_acked(&mut self, pn: u64, now: f64) -> Option<SentPacket> {
        let p = self.take(pn)?;
        if self.largest_acked.is_none_or(|l| pn > l) {
            self.largest_acked = Some(pn);
        }
        self.timer_base = now;
        self.backoff = 0;
        Some(p)
    }

    /// Removes every in-flight packet whose bytes are now fully covered by
    /// `acked`, looking only at packets that may overlap `touched`.
    pub fn ack_covered(
        &mut self,
        acked: &IntervalSet,
        touched: Range<u64>,
        now: f64,
    ) -> Vec<SentPacket> {
        let lo = touched.start.saturating_sub(MAX_DATA_PAYLOAD as u64);
        let candidates: Vec<u64> = self
            .by_offset
            .range((lo, 0)..(touched.end, 0))
            .filter(|&&(_, pn)| {
                let p = &self.in_flight[&pn];
                p.range.end > touched.start && acked.covers(p.range.clone())
            })
            .map(|&(_, pn)| pn)
            .collect();
        candidates
            .into_iter()
            .filter_map(|pn| self.on_acked(pn, now))
            .collect()
    }

    /// Time after which an unacknowledged earlier packet counts as lost.
    pub fn loss_delay(cc: &CongestionState) -> f64 {
        TIME_THRESHOLD * cc.srtt.max(cc.latest_rtt)
    }

    pub fn rto_deadline(&self, cc: &CongestionState) -> Option<f64> {
        if self.in_flight.is_empty() {
            None
        } else {
            Some(self.timer_base + cc.rto() * f64::from(1u32 << self.backoff.min(6)))
        }
    }

    /// Earliest time a time-threshold loss could be declared.
    pub fn loss_deadline(&self, cc: &CongestionState) -> Option<f64> {
        let largest = self.largest_acked?;
        let (_, first) = self.in_flight.range(..largest).next()?;
        Some(first.time_sent + Self::loss_delay(cc))
    }

    pub fn next_deadline(&self, cc: &CongestionState) -> Option<f64> {
        match (self.loss_deadline(cc), self.rto_deadline(cc)) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Declares packets lost and removes them from flight.
    pub fn detect_loss(&mut self, cc: &CongestionState, now: f64) -> LossReport {
        let mut report = LossReport::default();
        if let Some(deadline) = self.rto_deadline(cc) {
            if now >= deadline {
                let all: Vec<u64> = self.in_flight.keys().copied().collect();
                report.lost = all.into_iter().filter_map(|pn| self.take(pn)).collect();
                report.timer_expired = true;
                self.backoff += 1;
                self.timer_base = now;
                return report;
            }
        }
        let Some(largest) = self.largest_acked else {
            return report;
        };
        let delay = Self::loss_delay(cc);
        let lost: Vec<u64> = self
            .in_flight
            .range(..largest)
            .filter(|(&pn, p)| pn + PACKET_THRESHOLD <= largest || p.time_sent + delay <= now)
            .map(|(&pn, _)| pn)
            .collect();
        report.lost = lost.into_iter().filter_map(|pn| self.take(pn)).collect();
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cc::Algorithm;

    fn sent(pn: u64, t: f64) -> SentPacket {
        SentPacket {
            packet_number: pn,
            time_sent: t,
            range: pn * 1000..(pn + 1) * 1000,
            wire_size: 1025,
        }
    }

    fn cc_with_rtt(srtt: f64, rttvar: f64) -> CongestionState {
        let mut cc = CongestionState::new(Algorithm::NewReno);
        cc.srtt = srtt;
        cc.rttvar = rttvar;
        cc.latest_rtt = srtt;
        cc
    }

    #[test]
    fn packet_threshold() {
        let cc = cc_with_rtt(0.6, 0.1);
        let mut log = SentLog::new();
        for pn in 1..=5 {
            log.on_sent(sent(pn, 0.0));
        }
        for pn in 2..=4 {
            log.on_acked(pn, 0.6);
        }
        let report = log.detect_loss(&cc, 0.6);
        let lost: Vec<u64> = report.lost.iter().map(|p| p.packet_number).collect();
        assert_eq!(lost, [1]);
        assert!(!report.timer_expired);
        assert_eq!(log.len(), 1);
    }

    #[test]
    fn below_threshold_waits_for_time() {
        let cc = cc_with_rtt(0.6, 0.1);
        let mut log = SentLog::new();
        for pn in 1..=3 {
            log.on_sent(sent(pn, 0.0));
        }
        log.on_acked(2, 0.6);
        assert!(log.detect_loss(&cc, 0.6).lost.is_empty());
        let deadline = log.loss_deadline(&cc).unwrap();
        assert!((deadline - 0.675).abs() < 1e-12);
        let lost = log.detect_loss(&cc, deadline).lost;
        assert_eq!(lost.len(), 1);
        assert_eq!(lost[0].packet_number, 1);
    }

    #[test]
    fn timer_fires_without_acks() {
        let cc = cc_with_rtt(1.0, 0.25);
        let mut log = SentLog::new();
        log.on_sent(sent(0, 0.0));
        log.on_sent(sent(1, 0.1));
        assert_eq!(log.rto_deadline(&cc), Some(2.0));
        assert!(log.detect_loss(&cc, 1.9).lost.is_empty());
        let report = log.detect_loss(&cc, 2.0);
        assert!(report.timer_expired);
        assert_eq!(report.lost.len(), 2);
        assert_eq!(log.bytes_in_flight(), 0);
    }

    #[test]
    fn timer_has_one_second_floor_and_backs_off() {
        let cc = cc_with_rtt(0.03, 0.005);
        let mut log = SentLog::new();
        log.on_sent(sent(0, 0.0));
        assert_eq!(log.rto_deadline(&cc), Some(1.0));
        log.detect_loss(&cc, 1.0);
        log.on_sent(sent(1, 1.0));
        assert_eq!(log.rto_deadline(&cc), Some(3.0));
    }

    #[test]
    fn covered_packets_are_acked() {
        let mut log = SentLog::new();
        for pn in 0..4 {
            log.on_sent(sent(pn, 0.0));
        }
        let mut acked = IntervalSet::new();
        acked.insert(1000..3000).unwrap();
        let got = log.ack_covered(&acked, 1000..3000, 0.5);
        let pns: Vec<u64> = got.iter().map(|p| p.packet_number).collect();
        assert_eq!(pns, [1, 2]);
        assert_eq!(log.largest_acked(), Some(2));
        assert_eq!(log.bytes_in_flight(), 2 * 1025);
    }
}
