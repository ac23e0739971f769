//! Sender-side congestion control: NewReno, CUBIC and a rate-based startup.
//!
//! Windows are tracked in bytes of datagrams in flight. NewReno and CUBIC
//! leave slow start either at `ssthresh`, on the first loss, or when the
//! minimum of the most recent RTT samples exceeds the path minimum by a
//! clamped eighth of it (a standing queue has formed). Both pace at 1.25 x cwnd / srtt.

use core::fmt;
use core::str::FromStr;

use crate::MTU;

const MTU_F: f64 = MTU as f64;
pub const INITIAL_WINDOW: f64 = 10.0 * MTU_F;
pub const MINIMUM_WINDOW: f64 = 2.0 * MTU_F;
pub const PACING_GAIN: f64 = 1.25;
pub const NEWRENO_BETA: f64 = 0.5;
pub const CUBIC_C: f64 = 0.4;
pub const CUBIC_BETA: f64 = 0.7;
/// Additive increase per RTT (in MTUs) that makes CUBIC's Reno-friendly
/// estimate match NewReno's average throughput for `CUBIC_BETA`.
const CUBIC_ALPHA: f64 = 3.0 * (1.0 - CUBIC_BETA) / (1.0 + CUBIC_BETA);

const DELAY_EXIT_MIN_THRESH: f64 = 0.004;
const DELAY_EXIT_MAX_THRESH: f64 = 0.016;
const DELAY_EXIT_SAMPLES: usize = 8;

const STARTUP_GAIN: f64 = 2.0;
const STARTUP_GROWTH: f64 = 1.25;
const STARTUP_CWND_GAIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Algorithm {
    NewReno,
    Cubic,
    RateStartup,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::NewReno, Algorithm::Cubic, Algorithm::RateStartup];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::NewReno => "newreno",
            Algorithm::Cubic => "cubic",
            Algorithm::RateStartup => "ratestartup",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownAlgorithm;

impl fmt::Display for UnknownAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("unknown congestion control algorithm (expected newreno, cubic or ratestartup)")
    }
}

impl core::error::Error for UnknownAlgorithm {}

impl FromStr for Algorithm {
    type Err = UnknownAlgorithm;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or(UnknownAlgorithm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    SlowStart,
    Avoidance,
    Recovery,
}

/// Parameters of the current CUBIC epoch. `w_max` is in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CubicState {
    pub w_max: f64,
    pub k: f64,
    pub epoch_start: Option<f64>,
    /// Reno-friendly window estimate, bytes.
    pub w_est: f64,
}

/// `K`: seconds until the cubic curve climbs back to `w_max`, starting from
/// `cwnd`. Windows are converted to MTU units inside the curve.
pub fn cubic_k(w_max: f64, cwnd: f64) -> f64 {
    if cwnd >= w_max {
        0.0
    } else {
        libm::cbrt((w_max - cwnd) / MTU_F / CUBIC_C)
    }
}

/// Window on the cubic curve `t` seconds into an epoch, bytes.
pub fn cubic_window(cubic: &CubicState, t: f64) -> f64 {
    let d = t - cubic.k;
    (CUBIC_C * d * d * d + cubic.w_max / MTU_F) * MTU_F
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct DelayExit {
    recent: [f64; DELAY_EXIT_SAMPLES],
    samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct RateProbe {
    in_startup: bool,
    round_end: Option<u64>,
    round_start_time: f64,
    round_start_delivered: u64,
    delivered: u64,
    best_rate: f64,
}

/// Summary of one acknowledgement as seen by the sender.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AckSummary {
    /// Bytes of newly acknowledged datagrams.
    pub newly_acked: u64,
    pub largest_newly_acked: u64,
    pub largest_newly_acked_sent: f64,
    pub rtt_sample: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CongestionState {
    pub algorithm: Algorithm,
    pub cwnd: f64,
    pub ssthresh: f64,
    pub phase: Phase,
    /// Seconds; zero until the first sample.
    pub srtt: f64,
    pub rttvar: f64,
    pub min_rtt: f64,
    pub latest_rtt: f64,
    pub cubic: CubicState,
    /// Bits per second; zero while unpaced.
    pub pacing_rate: f64,
    recovery_start: Option<f64>,
    last_sent: u64,
    delay_exit: DelayExit,
    probe: RateProbe,
}

impl CongestionState {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            cwnd: INITIAL_WINDOW,
            ssthresh: f64::INFINITY,
            phase: Phase::SlowStart,
            srtt: 0.0,
            rttvar: 0.0,
            min_rtt: f64::INFINITY,
            latest_rtt: 0.0,
            cubic: CubicState::default(),
            pacing_rate: 0.0,
            recovery_start: None,
            last_sent: 0,
            delay_exit: DelayExit::default(),
            probe: RateProbe {
                in_startup: true,
                ..RateProbe::default()
            },
        }
    }

    pub fn has_rtt_sample(&self) -> bool {
        self.srtt > 0.0
    }

    pub fn can_send(&self, bytes_in_flight: u64) -> bool {
        (bytes_in_flight as f64) < self.cwnd
    }

    /// Retransmission timeout: srtt + 4 rttvar, at least one second.
    pub fn rto(&self) -> f64 {
        if self.has_rtt_sample() {
            (self.srtt + 4.0 * self.rttvar).max(1.0)
        } else {
            1.0
        }
    }

    /// Whether the rate-based startup is still probing.
    pub fn in_startup(&self) -> bool {
        match self.algorithm {
            Algorithm::RateStartup => self.probe.in_startup,
            _ => self.phase == Phase::SlowStart,
        }
    }

    pub fn on_packet_sent(&mut self, packet_number: u64, now: f64) {
        self.last_sent = packet_number;
        if self.algorithm == Algorithm::RateStartup
            && self.probe.round_end.is_none()
            && self.has_rtt_sample()
        {
            self.begin_probe_round(now);
        }
    }

    pub fn on_rtt_sample(&mut self, sample: f64) {
        self.latest_rtt = sample;
        self.min_rtt = self.min_rtt.min(sample);
        if self.has_rtt_sample() {
            self.rttvar = 0.75 * self.rttvar + 0.25 * (self.srtt - sample).abs();
            self.srtt = 0.875 * self.srtt + 0.125 * sample;
        } else {
            self.srtt = sample;
            self.rttvar = sample / 2.0;
            if self.algorithm == Algorithm::RateStartup {
                self.pacing_rate = STARTUP_GAIN * self.cwnd * 8.0 / sample;
            }
        }
    }

    /// Full acknowledgement processing: RTT, recovery exit, slow-start exit
    /// and rate probing, then window growth.
    pub fn on_ack_received(&mut self, ack: &AckSummary, now: f64) {
        if let Some(rtt) = ack.rtt_sample {
            self.on_rtt_sample(rtt);
            if self.phase == Phase::SlowStart && self.algorithm != Algorithm::RateStartup {
                self.track_delay(rtt, now);
            }
        }
        if self.phase == Phase::Recovery
            && self
                .recovery_start
                .is_some_and(|start| ack.largest_newly_acked_sent > start)
        {
            self.phase = Phase::Avoidance;
        }
        if self.algorithm == Algorithm::RateStartup {
            self.probe_rate(ack, now);
        }
        if ack.newly_acked > 0 {
            self.on_ack(ack.newly_acked, now);
        }
        self.refresh_pacing();
    }

    /// Window growth for `newly_acked` bytes.
    pub fn on_ack(&mut self, newly_acked: u64, now: f64) {
        let acked = newly_acked as f64;
        match (self.algorithm, self.phase) {
            (_, Phase::Recovery) => {}
            (Algorithm::RateStartup, _) => self.rate_window(),
            (_, Phase::SlowStart) => {
                self.cwnd += acked;
                if self.cwnd >= self.ssthresh {
                    self.enter_avoidance(now);
                }
            }
            (Algorithm::NewReno, Phase::Avoidance) => {
                self.cwnd += MTU_F * acked / self.cwnd;
            }
            (Algorithm::Cubic, Phase::Avoidance) => self.cubic_grow(acked, now),
        }
        self.cwnd = self.cwnd.max(MINIMUM_WINDOW);
        self.refresh_pacing();
    }

    /// Reacts to a loss of a packet sent at `lost_sent_time`. Losses of
    /// packets sent before the current recovery period started are ignored,
    /// so there is at most one reduction per round trip. Returns whether the
    /// window was reduced.
    pub fn on_loss(&mut self, lost_sent_time: f64, now: f64) -> bool {
        if self
            .recovery_start
            .is_some_and(|start| lost_sent_time <= start)
        {
            return false;
        }
        match self.algorithm {
            Algorithm::RateStartup => return false,
            Algorithm::NewReno => {
                self.ssthresh = (self.cwnd * NEWRENO_BETA).max(MINIMUM_WINDOW);
                self.cwnd = self.ssthresh;
            }
            Algorithm::Cubic => {
                self.cubic.w_max = self.cwnd;
                self.cwnd = (self.cwnd * CUBIC_BETA).max(MINIMUM_WINDOW);
                self.ssthresh = self.cwnd;
                self.cubic.epoch_start = Some(now);
                self.cubic.k = cubic_k(self.cubic.w_max, self.cwnd);
                self.cubic.w_est = self.cwnd;
            }
        }
        self.recovery_start = Some(now);
        self.phase = Phase::Recovery;
        self.refresh_pacing();
        true
    }

    /// Collapse after the retransmission timer expired.
    pub fn on_retransmission_timeout(&mut self, now: f64) {
        self.recovery_start = Some(now);
        if self.algorithm == Algorithm::RateStartup {
            self.cwnd = MINIMUM_WINDOW.max(self.cwnd / 2.0);
            self.refresh_pacing();
            return;
        }
        let beta = match self.algorithm {
            Algorithm::Cubic => CUBIC_BETA,
            _ => NEWRENO_BETA,
        };
        self.ssthresh = (self.cwnd * beta).max(MINIMUM_WINDOW);
        self.cubic.w_max = self.cwnd;
        self.cubic.epoch_start = None;
        self.cwnd = MINIMUM_WINDOW;
        self.phase = Phase::SlowStart;
        self.refresh_pacing();
    }

    /// Seconds between two paced packets of `packet_size` bytes; zero when
    /// no RTT sample exists yet and the sender is unpaced.
    pub fn pacing_interval(&self, packet_size: usize) -> f64 {
        if self.pacing_rate > 0.0 {
            packet_size as f64 * 8.0 / self.pacing_rate
        } else {
            0.0
        }
    }

    fn refresh_pacing(&mut self) {
        if self.algorithm != Algorithm::RateStartup && self.has_rtt_sample() {
            self.pacing_rate = PACING_GAIN * self.cwnd * 8.0 / self.srtt;
        }
    }

    fn enter_avoidance(&mut self, now: f64) {
        self.phase = Phase::Avoidance;
        if self.ssthresh > self.cwnd {
            self.ssthresh = self.cwnd;
        }
        if self.algorithm == Algorithm::Cubic {
            self.start_cubic_epoch(now);
        }
    }

    fn start_cubic_epoch(&mut self, now: f64) {
        self.cubic.w_max = self.cubic.w_max.max(self.cwnd);
        self.cubic.k = cubic_k(self.cubic.w_max, self.cwnd);
        self.cubic.epoch_start = Some(now);
        self.cubic.w_est = self.cwnd;
    }

    fn cubic_grow(&mut self, acked: f64, now: f64) {
        let epoch_start = match self.cubic.epoch_start {
            Some(t) => t,
            None => {
                self.start_cubic_epoch(now);
                now
            }
        };
        self.cubic.w_est += CUBIC_ALPHA * MTU_F * acked / self.cwnd;
        let target = cubic_window(&self.cubic, now - epoch_start).max(self.cubic.w_est);
        if target > self.cwnd {
            self.cwnd = target.min(self.cwnd + acked);
        }
    }

    fn track_delay(&mut self, rtt: f64, now: f64) {
        let d = &mut self.delay_exit;
        d.recent[d.samples % DELAY_EXIT_SAMPLES] = rtt;
        d.samples += 1;
        if d.samples < DELAY_EXIT_SAMPLES {
            return;
        }
        let recent_min = d.recent.iter().copied().fold(f64::INFINITY, f64::min);
        let thresh = (self.min_rtt / 8.0).clamp(DELAY_EXIT_MIN_THRESH, DELAY_EXIT_MAX_THRESH);
        if recent_min >= self.min_rtt + thresh {
            self.enter_avoidance(now);
        }
    }

    fn begin_probe_round(&mut self, now: f64) {
        self.probe.round_end = Some(self.last_sent);
        self.probe.round_start_time = now;
        self.probe.round_start_delivered = self.probe.delivered;
    }

    fn probe_rate(&mut self, ack: &AckSummary, now: f64) {
        self.probe.delivered += ack.newly_acked;
        let Some(end) = self.probe.round_end else {
            return;
        };
        if ack.largest_newly_acked < end || ack.newly_acked == 0 {
            return;
        }
        let elapsed = now - self.probe.round_start_time;
        if elapsed > 0.0 {
            let rate =
                (self.probe.delivered - self.probe.round_start_delivered) as f64 * 8.0 / elapsed;
            if self.probe.in_startup {
                if rate >= STARTUP_GROWTH * self.probe.best_rate {
                    self.probe.best_rate = rate;
                    self.pacing_rate *= 2.0;
                } else {
                    self.probe.in_startup = false;
                    self.pacing_rate = self.probe.best_rate.max(rate);
                    self.phase = Phase::Avoidance;
                }
            }
        }
        self.begin_probe_round(now);
    }

    fn rate_window(&mut self) {
        if !self.has_rtt_sample() {
            return;
        }
        let bdp = if self.probe.in_startup {
            self.probe.best_rate.max(self.pacing_rate / STARTUP_GAIN) * self.min_rtt / 8.0
        } else {
            self.pacing_rate * self.min_rtt / 8.0
        };
        self.cwnd = (STARTUP_CWND_GAIN * bdp)
            .max(INITIAL_WINDOW.min(self.cwnd))
            .max(MINIMUM_WINDOW);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ack(bytes: u64, pn: u64, sent: f64) -> AckSummary {
        AckSummary {
            newly_acked: bytes,
            largest_newly_acked: pn,
            largest_newly_acked_sent: sent,
            rtt_sample: None,
        }
    }

    #[test]
    fn newreno_slow_start_doubles() {
        let mut cc = CongestionState::new(Algorithm::NewReno);
        cc.cwnd = 12_000.0;
        cc.on_ack(12_000, 1.0);
        assert_eq!(cc.cwnd, 24_000.0);
        assert_eq!(cc.phase, Phase::SlowStart);
    }

    #[test]
    fn newreno_avoidance_adds_one_mtu_per_window() {
        let mut cc = CongestionState::new(Algorithm::NewReno);
        cc.cwnd = 30_000.0;
        cc.phase = Phase::Avoidance;
        for _ in 0..20 {
            cc.on_ack(1500, 1.0);
        }
        assert!((cc.cwnd - 31_500.0).abs() < 40.0, "{}", cc.cwnd);
    }

    #[test]
    fn newreno_halves_on_loss() {
        let mut cc = CongestionState::new(Algorithm::NewReno);
        cc.cwnd = 100_000.0;
        assert!(cc.on_loss(0.9, 1.0));
        assert_eq!(cc.ssthresh, 50_000.0);
        assert_eq!(cc.cwnd, 50_000.0);
        assert_eq!(cc.phase, Phase::Recovery);
    }

    #[test]
    fn one_reduction_per_round_trip() {
        let mut cc = CongestionState::new(Algorithm::NewReno);
        cc.cwnd = 100_000.0;
        assert!(cc.on_loss(0.9, 1.0));
        assert!(!cc.on_loss(0.95, 1.05));
        assert_eq!(cc.cwnd, 50_000.0);
        // a packet sent after recovery began ends it
        cc.on_ack_received(&ack(1500, 10, 1.2), 1.8);
        assert_eq!(cc.phase, Phase::Avoidance);
        assert_eq!(cc.cwnd, 50_045.0);
        assert!(cc.on_loss(1.3, 2.0));
        assert_eq!(cc.cwnd, 25_022.5);
    }

    #[test]
    fn cubic_reduces_by_beta() {
        let mut cc = CongestionState::new(Algorithm::Cubic);
        cc.cwnd = 100_000.0;
        cc.on_loss(0.5, 1.0);
        assert!((cc.cwnd - 70_000.0).abs() < 1e-9);
        assert_eq!(cc.cubic.w_max, 100_000.0);
        assert_eq!(cc.cubic.epoch_start, Some(1.0));
    }

    #[test]
    fn cubic_k_for_hundred_mtu() {
        // w_max = 150 000 B = 100 MTU: K = cbrt(100 * 0.3 / 0.4)
        let k = cubic_k(150_000.0, 150_000.0 * CUBIC_BETA);
        assert!((k - 4.217163326508746).abs() < 1e-9, "{k}");
        let mut cc = CongestionState::new(Algorithm::Cubic);
        cc.cwnd = 150_000.0;
        cc.on_loss(0.0, 0.0);
        assert!((cc.cubic.k - k).abs() < 1e-12);
    }

    #[test]
    fn cubic_curve_shape() {
        let c = CubicState {
            w_max: 150_000.0,
            k: cubic_k(150_000.0, 105_000.0),
            epoch_start: Some(0.0),
            w_est: 0.0,
        };
        assert!((cubic_window(&c, 0.0) - 105_000.0).abs() < 1e-6);
        assert!((cubic_window(&c, c.k) - 150_000.0).abs() < 1e-6);
        assert!(cubic_window(&c, c.k + 1.0) > 150_000.0);
    }

    #[test]
    fn cubic_grows_back_toward_w_max() {
        let mut cc = CongestionState::new(Algorithm::Cubic);
        cc.cwnd = 150_000.0;
        cc.on_loss(0.0, 0.0);
        cc.phase = Phase::Avoidance;
        let k = cc.cubic.k;
        let mut t = 0.0;
        while t < k {
            t += 0.01;
            cc.on_ack(1500, t);
        }
        assert!((cc.cwnd - 150_000.0).abs() < 2_000.0, "{}", cc.cwnd);
    }

    #[test]
    fn minimum_window_holds() {
        let mut cc = CongestionState::new(Algorithm::NewReno);
        cc.cwnd = MINIMUM_WINDOW;
        cc.on_loss(0.0, 1.0);
        assert_eq!(cc.cwnd, MINIMUM_WINDOW);
        cc.on_retransmission_timeout(3.0);
        assert_eq!(cc.cwnd, MINIMUM_WINDOW);
        assert_eq!(cc.phase, Phase::SlowStart);
        assert!(cc.ssthresh >= cc.cwnd);
    }

    #[test]
    fn pacing_interval_values() {
        let mut cc = CongestionState::new(Algorithm::NewReno);
        assert_eq!(cc.pacing_interval(1500), 0.0);
        cc.on_rtt_sample(0.6);
        cc.cwnd = 1_500_000.0;
        cc.refresh_pacing();
        assert!((cc.pacing_rate - 25e6).abs() < 1e-3);
        assert!((cc.pacing_interval(1500) - 0.00048).abs() < 1e-12);

        cc.cwnd = MINIMUM_WINDOW;
        cc.refresh_pacing();
        assert!((cc.pacing_rate - 50e3).abs() < 1e-6);

        let before = cc.pacing_interval(1500);
        cc.cwnd *= 2.0;
        cc.refresh_pacing();
        assert!((cc.pacing_interval(1500) - before / 2.0).abs() < 1e-12);
    }

    #[test]
    fn rtt_estimator() {
        let mut cc = CongestionState::new(Algorithm::Cubic);
        assert_eq!(cc.rto(), 1.0);
        cc.on_rtt_sample(0.6);
        assert_eq!((cc.srtt, cc.rttvar), (0.6, 0.3));
        assert!((cc.rto() - 1.8).abs() < 1e-12);
        cc.on_rtt_sample(0.6);
        assert!((cc.rttvar - 0.225).abs() < 1e-12);
        assert_eq!(cc.min_rtt, 0.6);
    }

    #[test]
    fn delay_increase_leaves_slow_start() {
        let mut cc = CongestionState::new(Algorithm::NewReno);
        let mut pn = 0;
        let mut now = 0.0;
        // round one: flat 600 ms
        for _ in 0..10 {
            cc.on_packet_sent(pn, now);
            pn += 1;
        }
        for i in 0..10 {
            now += 0.001;
            cc.on_ack_received(
                &AckSummary {
                    newly_acked: 1500,
                    largest_newly_acked: i,
                    largest_newly_acked_sent: 0.0,
                    rtt_sample: Some(0.6),
                },
                now,
            );
        }
        assert_eq!(cc.phase, Phase::SlowStart);
        // round two: queueing pushes every sample up by 20 ms
        for _ in 0..20 {
            cc.on_packet_sent(pn, now);
            pn += 1;
        }
        for i in 10..20 {
            now += 0.001;
            cc.on_ack_received(
                &AckSummary {
                    newly_acked: 1500,
                    largest_newly_acked: i,
                    largest_newly_acked_sent: 0.0,
                    rtt_sample: Some(0.62),
                },
                now,
            );
        }
        assert_eq!(cc.phase, Phase::Avoidance);
        assert!(cc.ssthresh <= cc.cwnd);
    }

    #[test]
    fn algorithm_names() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!("NewReno".parse::<Algorithm>().unwrap(), Algorithm::NewReno);
        assert!("bbr".parse::<Algorithm>().is_err());
    }
}
