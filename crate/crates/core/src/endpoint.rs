//! Sans-IO state machines of the reference server (sender) and client
//! (receiver).
//!
//! Neither side owns a socket or a clock: the driver feeds datagrams and the
//! current time in, polls for datagrams to send, and wakes the machine up at
//! [`Sender::poll_timeout`] / [`Receiver::poll_timeout`].

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::cc::{AckSummary, Algorithm, CongestionState};
use crate::intervals::IntervalSet;
use crate::recovery::{SentLog, SentPacket};
use crate::wire::{
    close_code, Body, WirePacket, DATA_HEADER_LEN, MAX_DATA_PAYLOAD, MAX_SACK_RANGES,
};

/// Fin retransmissions before the sender gives up on a silent peer.
pub const MAX_FIN_ATTEMPTS: u32 = 8;
/// Interval between repeated requests while no data has arrived.
pub const REQUEST_RETRY: f64 = 1.0;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SenderStats {
    pub data_packets: u64,
    pub retransmitted_packets: u64,
    pub lost_packets: Vec<u64>,
    pub timeouts: u64,
    pub window_reductions: u64,
}

#[derive(Debug, Clone)]
enum Content {
    File(Arc<[u8]>),
    Missing,
}

/// Server side of one connection.
#[derive(Debug, Clone)]
pub struct Sender {
    conn_id: u32,
    content: Content,
    next_pn: u64,
    next_offset: u64,
    acked: IntervalSet,
    retransmit: IntervalSet,
    log: SentLog,
    cc: CongestionState,
    next_send_time: f64,
    fin_attempts: u32,
    fin_deadline: f64,
    closed: bool,
    stats: SenderStats,
    window_log: Option<Vec<(f64, f64)>>,
}

impl Sender {
    /// Connection serving `file`, or an error close when it is `None`.
    pub fn new(conn_id: u32, file: Option<Arc<[u8]>>, algorithm: Algorithm) -> Self {
        Self {
            conn_id,
            content: file.map_or(Content::Missing, Content::File),
            next_pn: 0,
            next_offset: 0,
            acked: IntervalSet::new(),
            retransmit: IntervalSet::new(),
            log: SentLog::new(),
            cc: CongestionState::new(algorithm),
            next_send_time: 0.0,
            fin_attempts: 0,
            fin_deadline: 0.0,
            closed: false,
            stats: SenderStats::default(),
            window_log: None,
        }
    }

    /// Records `(time, cwnd)` after every acknowledgement and loss.
    pub fn record_window(&mut self) {
        self.window_log = Some(Vec::new());
    }

    pub fn window_log(&self) -> &[(f64, f64)] {
        self.window_log.as_deref().unwrap_or(&[])
    }

    pub fn conn_id(&self) -> u32 {
        self.conn_id
    }

    pub fn congestion(&self) -> &CongestionState {
        &self.cc
    }

    pub fn stats(&self) -> &SenderStats {
        &self.stats
    }

    pub fn bytes_in_flight(&self) -> u64 {
        self.log.bytes_in_flight()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    fn file_len(&self) -> u64 {
        match &self.content {
            Content::File(f) => f.len() as u64,
            Content::Missing => 0,
        }
    }

    fn all_acked(&self) -> bool {
        self.acked.contiguous_prefix() >= self.file_len()
    }

    fn close_code(&self) -> u8 {
        match self.content {
            Content::File(_) => close_code::OK,
            Content::Missing => close_code::NOT_FOUND,
        }
    }

    fn log_window(&mut self, now: f64) {
        if let Some(log) = &mut self.window_log {
            log.push((now, self.cc.cwnd));
        }
    }

    pub fn handle_packet(&mut self, now: f64, pkt: &WirePacket) {
        if pkt.conn_id != self.conn_id || self.closed {
            return;
        }
        match &pkt.body {
            Body::Ack { cumulative, ranges } => self.on_ack(now, *cumulative, ranges),
            Body::Fin { .. } => self.closed = true,
            Body::Request { .. } | Body::Data { .. } => {}
        }
    }

    fn on_ack(&mut self, now: f64, cumulative: u64, ranges: &[Range<u64>]) {
        let len = self.file_len();
        let mut newly: Vec<SentPacket> = Vec::new();
        let clipped = core::iter::once(0..cumulative.min(len))
            .chain(ranges.iter().map(|r| r.start.min(len)..r.end.min(len)));
        for r in clipped {
            if r.start >= r.end {
                continue;
            }
            let out = self.acked.insert(r.clone()).expect("non-empty range");
            self.retransmit.remove(r.clone());
            if out.new_bytes > 0 {
                newly.extend(self.log.ack_covered(&self.acked, r, now));
            }
        }
        if let Some(largest) = newly.iter().max_by_key(|p| p.packet_number) {
            let rtt_sample = (self.log.largest_acked() == Some(largest.packet_number))
                .then_some(now - largest.time_sent);
            let summary = AckSummary {
                newly_acked: newly.iter().map(|p| p.wire_size as u64).sum(),
                largest_newly_acked: largest.packet_number,
                largest_newly_acked_sent: largest.time_sent,
                rtt_sample,
            };
            self.cc.on_ack_received(&summary, now);
            self.log_window(now);
        }
        self.detect_loss(now);
    }

    fn detect_loss(&mut self, now: f64) {
        let report = self.log.detect_loss(&self.cc, now);
        if report.lost.is_empty() {
            return;
        }
        let mut latest_sent = f64::NEG_INFINITY;
        for p in &report.lost {
            self.stats.lost_packets.push(p.packet_number);
            latest_sent = latest_sent.max(p.time_sent);
            let mut start = p.range.start;
            // queue only the parts not yet acknowledged
            for covered in self.acked.iter() {
                if covered.end <= start || covered.start >= p.range.end {
                    continue;
                }
                if covered.start > start {
                    let _ = self.retransmit.insert(start..covered.start);
                }
                start = start.max(covered.end);
            }
            if start < p.range.end {
                let _ = self.retransmit.insert(start..p.range.end);
            }
        }
        if report.timer_expired {
            self.stats.timeouts += 1;
            self.cc.on_retransmission_timeout(now);
            self.stats.window_reductions += 1;
        } else if self.cc.on_loss(latest_sent, now) {
            self.stats.window_reductions += 1;
        }
        self.log_window(now);
    }

    pub fn handle_timeout(&mut self, now: f64) {
        if self.closed {
            return;
        }
        if self.log.next_deadline(&self.cc).is_some_and(|d| d <= now) {
            self.detect_loss(now);
        }
    }

    fn has_data_to_send(&self) -> bool {
        !self.retransmit.is_empty() || self.next_offset < self.file_len()
    }

    /// Next time the sender wants to be woken up.
    pub fn poll_timeout(&self) -> Option<f64> {
        if self.closed {
            return None;
        }
        if self.all_acked() {
            return (self.fin_attempts < MAX_FIN_ATTEMPTS).then_some(self.fin_deadline);
        }
        let mut deadline = self.log.next_deadline(&self.cc);
        if self.has_data_to_send() && self.cc.can_send(self.log.bytes_in_flight()) {
            deadline = Some(deadline.map_or(self.next_send_time, |d| d.min(self.next_send_time)));
        }
        deadline
    }

    pub fn poll_transmit(&mut self, now: f64) -> Option<WirePacket> {
        if self.closed {
            return None;
        }
        if self.all_acked() {
            if self.fin_attempts >= MAX_FIN_ATTEMPTS {
                self.closed = true;
                return None;
            }
            if now < self.fin_deadline {
                return None;
            }
            self.fin_attempts += 1;
            self.fin_deadline = now + self.cc.rto();
            return Some(self.packet(Body::Fin {
                code: self.close_code(),
            }));
        }
        if now < self.next_send_time || !self.cc.can_send(self.log.bytes_in_flight()) {
            return None;
        }
        let Content::File(file) = &self.content else {
            return None;
        };
        let max = MAX_DATA_PAYLOAD as u64;
        let (range, retransmission) = if let Some(r) = self.retransmit.pop_front(max) {
            (r, true)
        } else if self.next_offset < file.len() as u64 {
            let end = (self.next_offset + max).min(file.len() as u64);
            let r = self.next_offset..end;
            self.next_offset = end;
            (r, false)
        } else {
            return None;
        };
        let payload = file[range.start as usize..range.end as usize].to_vec();
        let wire_size = DATA_HEADER_LEN + payload.len();
        let pn = self.next_pn;
        let pkt = self.packet(Body::Data {
            offset: range.start,
            payload,
        });
        self.log.on_sent(SentPacket {
            packet_number: pn,
            time_sent: now,
            range,
            wire_size,
        });
        self.cc.on_packet_sent(pn, now);
        self.stats.data_packets += 1;
        if retransmission {
            self.stats.retransmitted_packets += 1;
        }
        self.next_send_time = self.next_send_time.max(now) + self.cc.pacing_interval(wire_size);
        Some(pkt)
    }

    fn packet(&mut self, body: Body) -> WirePacket {
        let pn = self.next_pn;
        self.next_pn += 1;
        WirePacket {
            conn_id: self.conn_id,
            packet_number: pn,
            body,
        }
    }
}

/// Server holding any number of independent connections, keyed by
/// connection id. A connection is created by its first Request.
#[derive(Debug, Clone)]
pub struct Server {
    files: BTreeMap<String, Arc<[u8]>>,
    algorithm: Algorithm,
    conns: BTreeMap<u32, Sender>,
    finished: BTreeMap<u32, SenderStats>,
    record_windows: bool,
    cursor: u32,
}

impl Server {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            files: BTreeMap::new(),
            algorithm,
            conns: BTreeMap::new(),
            finished: BTreeMap::new(),
            record_windows: false,
            cursor: 0,
        }
    }

    pub fn add_file(&mut self, name: &str, content: Arc<[u8]>) {
        self.files.insert(name.into(), content);
    }

    /// New connections record their congestion window over time.
    pub fn record_windows(&mut self) {
        self.record_windows = true;
    }

    pub fn connection(&self, conn_id: u32) -> Option<&Sender> {
        self.conns.get(&conn_id)
    }

    pub fn connections(&self) -> impl Iterator<Item = &Sender> + '_ {
        self.conns.values()
    }

    pub fn handle_packet(&mut self, now: f64, pkt: &WirePacket) {
        if let Some(conn) = self.conns.get_mut(&pkt.conn_id) {
            conn.handle_packet(now, pkt);
            return;
        }
        if self.finished.contains_key(&pkt.conn_id) {
            return;
        }
        if let Body::Request { name } = &pkt.body {
            let mut sender =
                Sender::new(pkt.conn_id, self.files.get(name).cloned(), self.algorithm);
            if self.record_windows {
                sender.record_window();
            }
            self.conns.insert(pkt.conn_id, sender);
        }
    }

    pub fn handle_timeout(&mut self, now: f64) {
        for c in self.conns.values_mut() {
            c.handle_timeout(now);
        }
    }

    pub fn poll_timeout(&self) -> Option<f64> {
        self.conns
            .values()
            .filter_map(Sender::poll_timeout)
            .min_by(f64::total_cmp)
    }

    /// Round-robin over connections so none starves the others.
    pub fn poll_transmit(&mut self, now: f64) -> Option<WirePacket> {
        let ids: Vec<u32> = self
            .conns
            .range(self.cursor..)
            .chain(self.conns.range(..self.cursor))
            .map(|(id, _)| *id)
            .collect();
        for id in ids {
            let conn = self.conns.get_mut(&id).expect("listed connection");
            if let Some(p) = conn.poll_transmit(now) {
                self.cursor = id.wrapping_add(1);
                return Some(p);
            }
        }
        None
    }

    /// Drops closed connections, keeping their ids so late duplicates of
    /// their Request do not restart the transfer.
    pub fn reap(&mut self) -> Vec<(u32, SenderStats)> {
        let closed: Vec<u32> = self
            .conns
            .iter()
            .filter(|(_, c)| c.is_closed())
            .map(|(id, _)| *id)
            .collect();
        closed
            .into_iter()
            .map(|id| {
                let stats = self.conns.remove(&id).expect("listed connection").stats;
                self.finished.insert(id, stats.clone());
                (id, stats)
            })
            .collect()
    }
}

/// How a client connection ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientOutcome {
    /// The whole file arrived; `completion` is when its last new byte did.
    Complete { data: Vec<u8> },
    /// The server closed with a non-zero code.
    Refused { code: u8 },
    /// Fin arrived while the received bytes still had gaps.
    ProtocolViolation,
}

/// Client side of one connection.
#[derive(Debug, Clone)]
pub struct Receiver {
    conn_id: u32,
    name: String,
    next_pn: u64,
    received: IntervalSet,
    buffer: Vec<u8>,
    pending: Vec<WirePacket>,
    request_deadline: Option<f64>,
    last_new_data: Option<f64>,
    data_seen: bool,
    outcome: Option<ClientOutcome>,
}

impl Receiver {
    pub fn new(conn_id: u32, name: &str) -> Self {
        Self {
            conn_id,
            name: name.into(),
            next_pn: 0,
            received: IntervalSet::new(),
            buffer: Vec::new(),
            pending: Vec::new(),
            request_deadline: Some(0.0),
            last_new_data: None,
            data_seen: false,
            outcome: None,
        }
    }

    pub fn conn_id(&self) -> u32 {
        self.conn_id
    }

    pub fn outcome(&self) -> Option<&ClientOutcome> {
        self.outcome.as_ref()
    }

    pub fn take_outcome(&mut self) -> Option<ClientOutcome> {
        self.outcome.take()
    }

    pub fn is_done(&self) -> bool {
        self.outcome.is_some()
    }

    /// Arrival time of the byte that completed the file, once complete.
    pub fn completion_time(&self) -> Option<f64> {
        match self.outcome {
            Some(ClientOutcome::Complete { .. }) => self.last_new_data,
            _ => None,
        }
    }

    pub fn received(&self) -> &IntervalSet {
        &self.received
    }

    pub fn poll_timeout(&self) -> Option<f64> {
        if self.outcome.is_some() {
            None
        } else {
            self.request_deadline
        }
    }

    pub fn handle_timeout(&mut self, _now: f64) {}

    pub fn poll_transmit(&mut self, now: f64) -> Option<WirePacket> {
        if let Some(deadline) = self.request_deadline {
            if self.outcome.is_none() && now >= deadline {
                self.request_deadline = Some(now + REQUEST_RETRY);
                return Some(self.packet(Body::Request {
                    name: self.name.clone(),
                }));
            }
        }
        if self.pending.is_empty() {
            None
        } else {
            Some(self.pending.remove(0))
        }
    }

    fn packet(&mut self, body: Body) -> WirePacket {
        let pn = self.next_pn;
        self.next_pn += 1;
        WirePacket {
            conn_id: self.conn_id,
            packet_number: pn,
            body,
        }
    }

    pub fn handle_packet(&mut self, now: f64, pkt: &WirePacket) {
        if pkt.conn_id != self.conn_id {
            return;
        }
        match &pkt.body {
            Body::Data { offset, payload } => {
                if !self.data_seen {
                    self.data_seen = true;
                    self.request_deadline = None;
                }
                if payload.is_empty() || self.outcome.is_some() {
                    return;
                }
                let range = *offset..offset + payload.len() as u64;
                let out = self
                    .received
                    .insert(range.clone())
                    .expect("non-empty range");
                if out.new_bytes > 0 {
                    let end = range.end as usize;
                    if self.buffer.len() < end {
                        self.buffer.resize(end, 0);
                    }
                    self.buffer[range.start as usize..end].copy_from_slice(payload);
                    self.last_new_data = Some(now);
                }
                let ack = self.ack_for(range.start);
                self.pending.push(ack);
            }
            Body::Fin { code } => {
                self.request_deadline = None;
                if self.outcome.is_none() {
                    self.outcome = Some(if *code != close_code::OK {
                        ClientOutcome::Refused { code: *code }
                    } else if self.received.len() > 1
                        || self.received.contiguous_prefix() != self.buffer.len() as u64
                    {
                        ClientOutcome::ProtocolViolation
                    } else {
                        ClientOutcome::Complete {
                            data: core::mem::take(&mut self.buffer),
                        }
                    });
                }
                let reply = self.packet(Body::Fin {
                    code: close_code::OK,
                });
                self.pending.push(reply);
            }
            Body::Request { .. } | Body::Ack { .. } => {}
        }
    }

    /// Cumulative offset plus up to three blocks above it: the block holding
    /// `latest` first, then the highest remaining blocks.
    fn ack_for(&mut self, latest: u64) -> WirePacket {
        let cumulative = self.received.contiguous_prefix();
        let mut ranges: Vec<Range<u64>> = vec![];
        if let Some(r) = self.received.range_containing(latest) {
            if r.start > 0 {
                ranges.push(r);
            }
        }
        for r in self.received.iter().rev() {
            if ranges.len() >= MAX_SACK_RANGES {
                break;
            }
            if r.start > 0 && !ranges.contains(&r) {
                ranges.push(r);
            }
        }
        self.packet(Body::Ack { cumulative, ranges })
    }
}
