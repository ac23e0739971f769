//! Per-run metrics derived from traces and the aggregate statistics reported
//! over a result matrix.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use thiserror::Error;

use crate::intervals::IntervalSet;
use crate::linkem::Direction;
use crate::trace::{Fate, Tap, Trace};
use crate::wire::PacketKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Status {
    Success,
    Timeout,
    Error,
}

/// Result of one iteration of one (scenario, client, server) combination.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferOutcome {
    pub status: Status,
    pub time_to_completion: Option<f64>,
    pub goodput: Option<f64>,
    /// Zero for anything but a success.
    pub efficiency: f64,
    pub wire_bytes_forward: u64,
    pub wire_bytes_reverse: u64,
    /// `None` when the trace carries no offset annotations.
    pub redundancy_factor: Option<f64>,
    pub nonmonotone_offset_count: u64,
}

impl TransferOutcome {
    pub fn failure(status: Status) -> Self {
        Self {
            status,
            time_to_completion: None,
            goodput: None,
            efficiency: 0.0,
            wire_bytes_forward: 0,
            wire_bytes_reverse: 0,
            redundancy_factor: None,
            nonmonotone_offset_count: 0,
        }
    }

    pub fn is_success(&self) -> bool {
        self.status == Status::Success
    }

    /// Efficiency as plotted in CDFs: failures count as zero.
    pub fn plotted_efficiency(&self) -> f64 {
        if self.is_success() {
            self.efficiency
        } else {
            0.0
        }
    }
}

/// Goodput relative to the forward link rate.
pub fn efficiency(goodput: f64, forward_rate: f64) -> f64 {
    goodput / forward_rate
}

pub fn goodput(file_size: u64, time_to_completion: f64) -> f64 {
    file_size as f64 * 8.0 / time_to_completion
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OffsetClass {
    FirstTransmission,
    Retransmission,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OffsetEvent {
    pub timestamp_ns: u64,
    pub range: Range<u64>,
    pub class: OffsetClass,
}

/// Classifies every annotated Data packet the server put on the link.
/// Any overlap with bytes sent before marks the whole packet as a
/// retransmission.
pub fn classify_offsets(trace: &Trace) -> Vec<OffsetEvent> {
    let mut seen = IntervalSet::new();
    let mut events: Vec<OffsetEvent> = Vec::new();
    for r in trace.tap(Tap::ServerSide) {
        if r.direction != Direction::Forward {
            continue;
        }
        let Some(range) = r.data_range() else {
            continue;
        };
        if range.is_empty() {
            continue;
        }
        let out = seen.insert(range.clone()).expect("non-empty range");
        events.push(OffsetEvent {
            timestamp_ns: r.timestamp_ns,
            range,
            class: if out.overlap_bytes > 0 {
                OffsetClass::Retransmission
            } else {
                OffsetClass::FirstTransmission
            },
        });
    }
    events
}

/// First transmissions that start below the highest byte already sent.
pub fn nonmonotone_offset_count(events: &[OffsetEvent]) -> u64 {
    let mut frontier = 0;
    let mut count = 0;
    for e in events {
        if e.class != OffsetClass::FirstTransmission {
            continue;
        }
        if e.range.start < frontier {
            count += 1;
        }
        frontier = frontier.max(e.range.end);
    }
    count
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("trace never completes coverage of the {file_size}-byte file")]
    Incomplete { file_size: u64 },
    #[error("trace has no client request")]
    NoRequest,
    #[error("time to completion is not positive")]
    ZeroDuration,
}

/// Metrics of a successful run, recomputable from its trace alone.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub time_to_completion: f64,
    pub goodput: f64,
    pub efficiency: f64,
    pub wire_bytes_forward: u64,
    pub wire_bytes_reverse: u64,
    pub redundancy_factor: Option<f64>,
    pub nonmonotone_offset_count: u64,
}

impl RunMetrics {
    pub fn into_outcome(self) -> TransferOutcome {
        TransferOutcome {
            status: Status::Success,
            time_to_completion: Some(self.time_to_completion),
            goodput: Some(self.goodput),
            efficiency: self.efficiency,
            wire_bytes_forward: self.wire_bytes_forward,
            wire_bytes_reverse: self.wire_bytes_reverse,
            redundancy_factor: self.redundancy_factor,
            nonmonotone_offset_count: self.nonmonotone_offset_count,
        }
    }
}

/// Bytes the server tap saw in each direction.
pub fn wire_bytes(trace: &Trace) -> (u64, u64) {
    let mut fwd = 0;
    let mut rev = 0;
    for r in trace.tap(Tap::ServerSide) {
        match r.direction {
            Direction::Forward => fwd += r.size as u64,
            Direction::Reverse => rev += r.size as u64,
        }
    }
    (fwd, rev)
}

/// Data payload bytes the server sent divided by the file size.
pub fn redundancy_factor(trace: &Trace, file_size: u64) -> f64 {
    let sent: u64 = trace
        .tap(Tap::ServerSide)
        .filter(|r| r.direction == Direction::Forward)
        .filter_map(|r| r.data_range())
        .map(|r| r.end - r.start)
        .sum();
    sent as f64 / file_size as f64
}

/// Time-to-completion window: from the client's first Request to the client
/// tap delivery that completes `[0, file_size)`. Opaque traces fall back to
/// the first client-side reverse packet and the last delivered forward one.
pub fn completion_window(trace: &Trace, file_size: u64) -> Result<(u64, u64), MetricsError> {
    if !trace.is_annotated() {
        let start = trace
            .tap(Tap::ClientSide)
            .find(|r| r.direction == Direction::Reverse)
            .ok_or(MetricsError::NoRequest)?
            .timestamp_ns;
        let end = trace
            .tap(Tap::ClientSide)
            .filter(|r| r.direction == Direction::Forward && r.fate == Fate::Delivered)
            .last()
            .ok_or(MetricsError::Incomplete { file_size })?
            .timestamp_ns;
        return Ok((start, end));
    }
    let start = trace
        .tap(Tap::ClientSide)
        .find(|r| r.direction == Direction::Reverse && r.kind() == Some(PacketKind::Request))
        .ok_or(MetricsError::NoRequest)?
        .timestamp_ns;
    let mut got = IntervalSet::new();
    for r in trace.tap(Tap::ClientSide) {
        if r.direction != Direction::Forward || r.fate != Fate::Delivered {
            continue;
        }
        let Some(range) = r.data_range() else {
            continue;
        };
        let clipped = range.start.min(file_size)..range.end.min(file_size);
        if clipped.is_empty() {
            continue;
        }
        got.insert(clipped).expect("non-empty range");
        if got.covers(0..file_size) {
            return Ok((start, r.timestamp_ns));
        }
    }
    Err(MetricsError::Incomplete { file_size })
}

pub fn compute_outcome_metrics(
    trace: &Trace,
    file_size: u64,
    forward_rate: f64,
) -> Result<RunMetrics, MetricsError> {
    let (start, end) = completion_window(trace, file_size)?;
    if end <= start {
        return Err(MetricsError::ZeroDuration);
    }
    let ttc = crate::trace::to_seconds(end - start);
    let gp = goodput(file_size, ttc);
    let (fwd, rev) = wire_bytes(trace);
    let annotated = trace.is_annotated();
    let nonmono = if annotated {
        nonmonotone_offset_count(&classify_offsets(trace))
    } else {
        0
    };
    Ok(RunMetrics {
        time_to_completion: ttc,
        goodput: gp,
        efficiency: efficiency(gp, forward_rate),
        wire_bytes_forward: fwd,
        wire_bytes_reverse: rev,
        redundancy_factor: annotated.then(|| redundancy_factor(trace, file_size)),
        nonmonotone_offset_count: nonmono,
    })
}

/// Sum independent of input order.
fn stable_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

fn mean(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    Some(stable_sum(&mut values) / n)
}

fn max(values: &[f64]) -> Option<f64> {
    values.iter().copied().max_by(f64::total_cmp)
}

/// Scenario-level statistics. Means and maxima cover successes only.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub mean_goodput: Option<f64>,
    pub max_goodput: Option<f64>,
    pub mean_efficiency: Option<f64>,
    pub max_efficiency: Option<f64>,
    pub successes: usize,
    pub timeouts: usize,
    pub errors: usize,
}

pub fn summarize<'a, I>(outcomes: I) -> Summary
where
    I: IntoIterator<Item = &'a TransferOutcome>,
{
    let mut goodputs = Vec::new();
    let mut effs = Vec::new();
    let (mut timeouts, mut errors) = (0, 0);
    for o in outcomes {
        match o.status {
            Status::Success => {
                goodputs.push(o.goodput.unwrap_or(0.0));
                effs.push(o.efficiency);
            }
            Status::Timeout => timeouts += 1,
            Status::Error => errors += 1,
        }
    }
    Summary {
        max_goodput: max(&goodputs),
        max_efficiency: max(&effs),
        successes: goodputs.len(),
        mean_goodput: mean(goodputs),
        mean_efficiency: mean(effs),
        timeouts,
        errors,
    }
}

/// Mean goodput of a cell's successful runs.
pub fn cell_mean_goodput(outcomes: &[TransferOutcome]) -> Option<f64> {
    mean(
        outcomes
            .iter()
            .filter_map(|o| o.goodput.filter(|_| o.is_success()))
            .collect(),
    )
}

/// Empirical CDF over plotted efficiencies: `(x, F(x))` at every distinct x.
pub fn efficiency_cdf<'a, I>(outcomes: I) -> Vec<(f64, f64)>
where
    I: IntoIterator<Item = &'a TransferOutcome>,
{
    let mut xs: Vec<f64> = outcomes
        .into_iter()
        .map(|o| o.plotted_efficiency())
        .collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut steps: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in xs.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match steps.last_mut() {
            Some(last) if last.0 == x => last.1 = f,
            _ => steps.push((x, f)),
        }
    }
    steps
}

/// Quantile of sorted data by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub fn quartiles(values: &[f64]) -> Option<[f64; 3]> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some([quantile(&v, 0.25)?, quantile(&v, 0.5)?, quantile(&v, 0.75)?])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Client,
    Server,
}

/// Goodput distribution of one implementation in one role, over all peers.
#[derive(Debug, Clone, PartialEq)]
pub struct RoleDistribution {
    pub name: String,
    pub role: Role,
    /// Sorted goodputs of successful runs.
    pub values: Vec<f64>,
    pub quartiles: Option<[f64; 3]>,
}

/// Per-implementation, per-role goodput distributions. `cells` yields
/// `(client, server, outcomes)`.
pub fn role_distributions<'a, I>(cells: I) -> Vec<RoleDistribution>
where
    I: IntoIterator<Item = (&'a str, &'a str, &'a [TransferOutcome])>,
{
    let mut acc: BTreeMap<(String, Role), Vec<f64>> = BTreeMap::new();
    for (client, server, outcomes) in cells {
        let gps = outcomes
            .iter()
            .filter(|o| o.is_success())
            .filter_map(|o| o.goodput);
        for g in gps {
            acc.entry((client.into(), Role::Client))
                .or_default()
                .push(g);
            acc.entry((server.into(), Role::Server))
                .or_default()
                .push(g);
        }
        acc.entry((client.into(), Role::Client)).or_default();
        acc.entry((server.into(), Role::Server)).or_default();
    }
    acc.into_iter()
        .map(|((name, role), mut values)| {
            values.sort_by(f64::total_cmp);
            let quartiles = quartiles(&values);
            RoleDistribution {
                name,
                role,
                values,
                quartiles,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no successful run to select from")]
pub struct NoSuccess;

/// Index (into `outcomes`) of the lower-median successful run by time to
/// completion. Ties keep iteration order.
pub fn select_median_run(outcomes: &[TransferOutcome]) -> Result<usize, NoSuccess> {
    let mut ok: Vec<(f64, usize)> = outcomes
        .iter()
        .enumerate()
        .filter(|(_, o)| o.is_success())
        .map(|(i, o)| (o.time_to_completion.unwrap_or(f64::INFINITY), i))
        .collect();
    if ok.is_empty() {
        return Err(NoSuccess);
    }
    ok.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(ok[(ok.len() - 1) / 2].1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{PacketRecord, RunIdentity};
    use crate::wire::Annotation;
    use alloc::vec;

    fn ok(eff: f64) -> TransferOutcome {
        TransferOutcome {
            efficiency: eff,
            goodput: Some(eff * 20e6),
            time_to_completion: Some(1.0),
            ..TransferOutcome::failure(Status::Success)
        }
    }

    fn ttc(t: f64) -> TransferOutcome {
        TransferOutcome {
            time_to_completion: Some(t),
            ..ok(0.5)
        }
    }

    #[test]
    fn efficiency_examples() {
        let gp = goodput(10 * 1024 * 1024, 7.3);
        assert!((gp / 1e6 - 11.49).abs() < 0.005);
        assert!((efficiency(gp, 20e6) - 0.574).abs() < 0.001);
        assert!((efficiency(7e6, 50e6) - 0.14).abs() < 1e-12);
        assert_eq!(efficiency(20e6, 20e6), 1.0);
    }

    #[test]
    fn summary_excludes_failures() {
        let runs = [ok(0.5), TransferOutcome::failure(Status::Error), ok(0.25)];
        let s = summarize(&runs);
        assert_eq!(s.mean_efficiency, Some(0.375));
        assert_eq!(s.max_efficiency, Some(0.5));
        assert_eq!((s.successes, s.timeouts, s.errors), (2, 0, 1));
        let cdf = efficiency_cdf(&runs);
        assert_eq!(cdf, vec![(0.0, 1.0 / 3.0), (0.25, 2.0 / 3.0), (0.5, 1.0)]);
    }

    #[test]
    fn all_failures() {
        let runs = vec![TransferOutcome::failure(Status::Timeout); 4];
        let s = summarize(&runs);
        assert_eq!(s.mean_goodput, None);
        assert_eq!(s.timeouts, 4);
        assert_eq!(cell_mean_goodput(&runs), None);
    }

    #[test]
    fn cdf_examples() {
        let f = TransferOutcome::failure(Status::Error);
        let runs = [ok(0.1), ok(0.2), f.clone(), f];
        assert_eq!(efficiency_cdf(&runs)[0], (0.0, 0.5));
        let ones = [ok(1.0), ok(1.0)];
        assert_eq!(efficiency_cdf(&ones), vec![(1.0, 1.0)]);
    }

    #[test]
    fn interpolated_quartiles() {
        assert_eq!(quartiles(&[4.0, 2.0, 1.0, 3.0]), Some([1.75, 2.5, 3.25]));
        assert_eq!(quartiles(&[]), None);
        assert_eq!(quartiles(&[7.0]), Some([7.0, 7.0, 7.0]));
    }

    #[test]
    fn median_run() {
        assert_eq!(select_median_run(&[ttc(9.0), ttc(3.0), ttc(5.0)]), Ok(2));
        assert_eq!(
            select_median_run(&[ttc(11.0), ttc(5.0), ttc(9.0), ttc(3.0)]),
            Ok(1)
        );
        let runs = [TransferOutcome::failure(Status::Timeout), ttc(4.0)];
        assert_eq!(select_median_run(&runs), Ok(1));
        assert_eq!(select_median_run(&runs[..1]), Err(NoSuccess));
    }

    #[test]
    fn role_split() {
        let a = [ok(0.5)];
        let b = [ok(0.25), TransferOutcome::failure(Status::Error)];
        let d = role_distributions([("x", "y", &a[..]), ("y", "x", &b[..])]);
        assert_eq!(d.len(), 4);
        let xc = d
            .iter()
            .find(|r| r.name == "x" && r.role == Role::Client)
            .unwrap();
        assert_eq!(xc.values, vec![10e6]);
        let xs = d
            .iter()
            .find(|r| r.name == "x" && r.role == Role::Server)
            .unwrap();
        assert_eq!(xs.values, vec![5e6]);
    }

    fn data(ts: u64, tap: Tap, fate: Fate, offset: u64, length: u32, pn: u64) -> PacketRecord {
        PacketRecord {
            timestamp_ns: ts,
            tap,
            direction: Direction::Forward,
            size: length + 25,
            fate,
            annotation: Some(Annotation {
                kind: PacketKind::Data,
                offset,
                length,
                packet_number: pn,
            }),
        }
    }

    fn request(ts: u64) -> PacketRecord {
        PacketRecord {
            timestamp_ns: ts,
            tap: Tap::ClientSide,
            direction: Direction::Reverse,
            size: 26,
            fate: Fate::Delivered,
            annotation: Some(Annotation {
                kind: PacketKind::Request,
                offset: 0,
                length: 0,
                packet_number: 0,
            }),
        }
    }

    #[test]
    fn classification_matches_constructed_duplicates() {
        let mut t = Trace::new(RunIdentity::default());
        let sends = [
            (0, 100),
            (100, 100),
            (0, 100),
            (200, 50),
            (150, 100),
            (250, 10),
        ];
        for (i, (off, len)) in sends.iter().enumerate() {
            t.record(data(
                i as u64,
                Tap::ServerSide,
                Fate::Delivered,
                *off,
                *len,
                i as u64,
            ))
            .unwrap();
        }
        let classes: Vec<_> = classify_offsets(&t).iter().map(|e| e.class).collect();
        use OffsetClass::*;
        assert_eq!(
            classes,
            vec![
                FirstTransmission,
                FirstTransmission,
                Retransmission,
                FirstTransmission,
                Retransmission,
                FirstTransmission
            ]
        );
    }

    #[test]
    fn metrics_from_trace() {
        let mut t = Trace::new(RunIdentity::default());
        t.record(request(1_000_000_000)).unwrap();
        t.record(data(
            1_300_000_000,
            Tap::ServerSide,
            Fate::Delivered,
            0,
            1000,
            1,
        ))
        .unwrap();
        t.record(data(
            1_300_100_000,
            Tap::ServerSide,
            Fate::RandomLoss,
            1000,
            1000,
            2,
        ))
        .unwrap();
        t.record(data(
            1_600_000_000,
            Tap::ClientSide,
            Fate::Delivered,
            0,
            1000,
            1,
        ))
        .unwrap();
        t.record(data(
            2_900_000_000,
            Tap::ServerSide,
            Fate::Delivered,
            1000,
            1000,
            3,
        ))
        .unwrap();
        t.record(data(
            3_000_000_000,
            Tap::ClientSide,
            Fate::Delivered,
            1000,
            1000,
            3,
        ))
        .unwrap();
        let m = compute_outcome_metrics(&t, 2000, 8000.0).unwrap();
        assert_eq!(m.time_to_completion, 2.0);
        assert_eq!(m.goodput, 8000.0);
        assert_eq!(m.efficiency, 1.0);
        assert_eq!(m.redundancy_factor, Some(1.5));
        assert_eq!(m.wire_bytes_forward, 3 * 1025);
        assert_eq!(
            compute_outcome_metrics(&t, 3000, 8000.0),
            Err(MetricsError::Incomplete { file_size: 3000 })
        );
    }

    #[test]
    fn sevenfold_redundancy() {
        let mut t = Trace::new(RunIdentity::default());
        let mut ts = 0;
        for _ in 0..7 {
            for k in 0..10u64 {
                ts += 1;
                t.record(data(
                    ts,
                    Tap::ServerSide,
                    Fate::Delivered,
                    k * 1000,
                    1000,
                    ts,
                ))
                .unwrap();
            }
        }
        let r = redundancy_factor(&t, 10_000);
        assert!((6.9..=7.1).contains(&r));
        let firsts: u64 = classify_offsets(&t)
            .iter()
            .filter(|e| e.class == OffsetClass::FirstTransmission)
            .map(|e| e.range.end - e.range.start)
            .sum();
        assert_eq!(firsts, 10_000);
    }
}
