//! Built-in measurement scenarios and the line-oriented scenario file format.
//!
//! ```text
//! # 50/5 Mbit/s access with a GEO delay
//! name = EUTLIKE
//! forward.rate = 50M
//! reverse.rate = 5M
//! delay_ms = 300
//! ```
//!
//! Several `key=value` pairs may share a line. Keys left out take the SAT
//! defaults, except the queue sizes which default to one bandwidth-delay
//! product worth of full-size packets.

use alloc::format;
use alloc::string::{String, ToString};
use core::fmt::Write;

use thiserror::Error;

use crate::linkem::LinkDirectionParams;
use crate::MTU;

pub const MEBIBYTE: u64 = 1024 * 1024;
pub const DEFAULT_FILE_SIZE: u64 = 10 * MEBIBYTE;
pub const DEFAULT_ITERATIONS: u32 = 10;
pub const DEFAULT_TIMEOUT_S: f64 = 120.0;
pub const BUILTIN_NAMES: [&str; 3] = ["TERR", "SAT", "SATL"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{0}` (expected one of TERR, SAT, SATL)")]
    UnknownScenario(String),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid `{field}`: {reason}")]
    Invalid {
        field: &'static str,
        reason: &'static str,
    },
}

/// Full description of one emulated path and the transfer run over it.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScenarioSpec {
    pub name: String,
    /// Server to client.
    pub forward: LinkDirectionParams,
    /// Client to server.
    pub reverse: LinkDirectionParams,
    pub one_way_delay_ns: u64,
    pub file_size: u64,
    pub iterations: u32,
    pub timeout_s: f64,
}

impl ScenarioSpec {
    pub fn one_way_delay(&self) -> f64 {
        self.one_way_delay_ns as f64 / 1e9
    }

    /// Rate used as the efficiency denominator.
    pub fn link_rate(&self) -> f64 {
        self.forward.data_rate
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !is_identifier(&self.name) {
            return Err(ScenarioError::Invalid {
                field: "name",
                reason: "must be a non-empty identifier of [A-Za-z0-9_-]",
            });
        }
        self.forward.validate("forward")?;
        self.reverse.validate("reverse")?;
        if self.file_size == 0 {
            return Err(ScenarioError::Invalid {
                field: "file_size",
                reason: "must be at least one byte",
            });
        }
        if self.iterations == 0 {
            return Err(ScenarioError::Invalid {
                field: "iterations",
                reason: "must be at least 1",
            });
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(ScenarioError::Invalid {
                field: "timeout_s",
                reason: "must be positive",
            });
        }
        Ok(())
    }
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Bandwidth-delay product of the forward direction, in bytes.
pub fn bdp(spec: &ScenarioSpec) -> f64 {
    spec.forward.data_rate / 8.0 * (2 * spec.one_way_delay_ns) as f64 / 1e9
}

/// Queue capacity holding one BDP of full-size packets (at least one).
pub fn bdp_queue_packets(spec: &ScenarioSpec) -> usize {
    let packets = libm::ceil(bdp(spec) / MTU as f64 - 1e-9);
    if packets < 1.0 {
        1
    } else {
        packets as usize
    }
}

fn direction(rate: f64, queue: usize, plr: f64) -> LinkDirectionParams {
    LinkDirectionParams {
        data_rate: rate,
        queue_capacity: queue,
        plr,
    }
}

pub fn builtin(name: &str) -> Result<ScenarioSpec, ScenarioError> {
    let canonical = BUILTIN_NAMES
        .iter()
        .find(|n| n.eq_ignore_ascii_case(name))
        .ok_or_else(|| ScenarioError::UnknownScenario(name.to_string()))?;
    let spec = match *canonical {
        "TERR" => ScenarioSpec {
            name: "TERR".into(),
            forward: direction(20e6, 25, 0.0),
            reverse: direction(20e6, 25, 0.0),
            one_way_delay_ns: 15_000_000,
            file_size: DEFAULT_FILE_SIZE,
            iterations: DEFAULT_ITERATIONS,
            timeout_s: DEFAULT_TIMEOUT_S,
        },
        "SAT" => sat(0.0, "SAT"),
        _ => sat(0.01, "SATL"),
    };
    Ok(spec)
}

fn sat(plr: f64, name: &str) -> ScenarioSpec {
    let mut spec = ScenarioSpec {
        name: name.into(),
        forward: direction(20e6, 1, plr),
        reverse: direction(2e6, 1, plr),
        one_way_delay_ns: 300_000_000,
        file_size: DEFAULT_FILE_SIZE,
        iterations: DEFAULT_ITERATIONS,
        timeout_s: DEFAULT_TIMEOUT_S,
    };
    let queue = bdp_queue_packets(&spec);
    spec.forward.queue_capacity = queue;
    spec.reverse.queue_capacity = queue;
    spec
}

/// Splits a line into `key=value` pairs, tolerating spaces around `=`.
fn pairs(line: &str, lineno: usize) -> Result<alloc::vec::Vec<(String, String)>, ScenarioError> {
    let mut joined = String::new();
    let mut tokens = line.split_whitespace().peekable();
    let mut out = alloc::vec::Vec::new();
    while let Some(tok) = tokens.next() {
        joined.push_str(tok);
        let dangling = tok.ends_with('=') || tokens.peek().is_some_and(|n| n.starts_with('='));
        if dangling && tokens.peek().is_some() {
            continue;
        }
        let Some((k, v)) = joined.split_once('=') else {
            return Err(ScenarioError::Syntax {
                line: lineno,
                message: format!("expected `key = value`, found `{joined}`"),
            });
        };
        if k.is_empty() || v.is_empty() {
            return Err(ScenarioError::Syntax {
                line: lineno,
                message: format!("incomplete pair `{joined}`"),
            });
        }
        out.push((k.to_string(), v.to_string()));
        joined.clear();
    }
    Ok(out)
}

fn syntax(line: usize, message: String) -> ScenarioError {
    ScenarioError::Syntax { line, message }
}

fn parse_rate(v: &str, line: usize) -> Result<f64, ScenarioError> {
    let (num, mult) = match v.as_bytes().last() {
        Some(b'K') | Some(b'k') => (&v[..v.len() - 1], 1e3),
        Some(b'M') => (&v[..v.len() - 1], 1e6),
        _ => (v, 1.0),
    };
    num.parse::<f64>()
        .map(|x| x * mult)
        .map_err(|_| syntax(line, format!("bad rate `{v}`")))
}

fn parse_num<T: core::str::FromStr>(v: &str, line: usize, what: &str) -> Result<T, ScenarioError> {
    v.parse()
        .map_err(|_| syntax(line, format!("bad {what} `{v}`")))
}

/// Parses decimal milliseconds into integral nanoseconds without going
/// through floating point.
fn parse_delay_ms(v: &str, line: usize) -> Result<u64, ScenarioError> {
    let bad = || syntax(line, format!("bad delay `{v}`"));
    let (int, frac) = v.split_once('.').unwrap_or((v, ""));
    if int.is_empty() && frac.is_empty() || frac.len() > 6 {
        return Err(bad());
    }
    let int: u64 = if int.is_empty() {
        0
    } else {
        int.parse().map_err(|_| bad())?
    };
    let mut frac_ns: u64 = 0;
    for (i, c) in frac.bytes().enumerate() {
        if !c.is_ascii_digit() {
            return Err(bad());
        }
        frac_ns += u64::from(c - b'0') * 10u64.pow(5 - i as u32);
    }
    int.checked_mul(1_000_000)
        .and_then(|ns| ns.checked_add(frac_ns))
        .ok_or_else(bad)
}

pub fn parse_scenario(text: &str) -> Result<ScenarioSpec, ScenarioError> {
    let mut spec = builtin("SAT").expect("SAT is built in");
    let mut fwd_queue = None;
    let mut rev_queue = None;
    let mut seen: alloc::vec::Vec<String> = alloc::vec::Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("");
        for (key, value) in pairs(line, lineno)? {
            if seen.contains(&key) {
                return Err(syntax(lineno, format!("duplicate key `{key}`")));
            }
            let v = value.as_str();
            match key.as_str() {
                "name" => spec.name = value.clone(),
                "forward.rate" => spec.forward.data_rate = parse_rate(v, lineno)?,
                "reverse.rate" => spec.reverse.data_rate = parse_rate(v, lineno)?,
                "forward.queue" => fwd_queue = Some(parse_num(v, lineno, "queue size")?),
                "reverse.queue" => rev_queue = Some(parse_num(v, lineno, "queue size")?),
                "forward.plr" => spec.forward.plr = parse_num(v, lineno, "plr")?,
                "reverse.plr" => spec.reverse.plr = parse_num(v, lineno, "plr")?,
                "delay_ms" => spec.one_way_delay_ns = parse_delay_ms(v, lineno)?,
                "file_size" => spec.file_size = parse_num(v, lineno, "file size")?,
                "iterations" => spec.iterations = parse_num(v, lineno, "iteration count")?,
                "timeout_s" => spec.timeout_s = parse_num(v, lineno, "timeout")?,
                _ => return Err(syntax(lineno, format!("unknown key `{key}`"))),
            }
            seen.push(key);
        }
    }
    let default_queue = bdp_queue_packets(&spec);
    spec.forward.queue_capacity = fwd_queue.unwrap_or(default_queue);
    spec.reverse.queue_capacity = rev_queue.unwrap_or(default_queue);
    spec.validate()?;
    Ok(spec)
}

fn write_rate(out: &mut String, rate: f64) {
    let mega = rate / 1e6;
    let kilo = rate / 1e3;
    if libm::trunc(mega) == mega && mega * 1e6 == rate {
        let _ = write!(out, "{mega}M");
    } else if libm::trunc(kilo) == kilo && kilo * 1e3 == rate {
        let _ = write!(out, "{kilo}K");
    } else {
        let _ = write!(out, "{rate}");
    }
}

/// Renders `spec` in the scenario file format; [`parse_scenario`] reads it
/// back to an identical value.
pub fn serialize_scenario(spec: &ScenarioSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "name = {}", spec.name);
    for (prefix, p) in [("forward", &spec.forward), ("reverse", &spec.reverse)] {
        let _ = write!(out, "{prefix}.rate = ");
        write_rate(&mut out, p.data_rate);
        out.push('\n');
        let _ = writeln!(out, "{prefix}.queue = {}", p.queue_capacity);
        let _ = writeln!(out, "{prefix}.plr = {}", p.plr);
    }
    let ms = spec.one_way_delay_ns / 1_000_000;
    let frac = spec.one_way_delay_ns % 1_000_000;
    if frac == 0 {
        let _ = writeln!(out, "delay_ms = {ms}");
    } else {
        let digits = format!("{frac:06}");
        let _ = writeln!(out, "delay_ms = {ms}.{}", digits.trim_end_matches('0'));
    }
    let _ = writeln!(out, "file_size = {}", spec.file_size);
    let _ = writeln!(out, "iterations = {}", spec.iterations);
    let _ = writeln!(out, "timeout_s = {}", spec.timeout_s);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_values() {
        let sat = builtin("SAT").unwrap();
        assert_eq!(sat.one_way_delay(), 0.3);
        assert_eq!(sat.forward.data_rate, 20e6);
        assert_eq!(sat.reverse.data_rate, 2e6);
        assert_eq!(sat.forward.queue_capacity, 1000);
        assert_eq!(sat.file_size, 10_485_760);
        assert_eq!(sat.iterations, 10);
        assert_eq!(sat.timeout_s, 120.0);

        let satl = builtin("SATL").unwrap();
        assert_eq!(satl.forward.plr, 0.01);
        assert_eq!(satl.reverse.plr, 0.01);

        let terr = builtin("TERR").unwrap();
        assert_eq!(terr.forward.data_rate, 20e6);
        assert_eq!(terr.reverse.data_rate, 20e6);
        assert_eq!(terr.one_way_delay(), 0.015);
        assert_eq!(terr.forward.queue_capacity, 25);
        assert_eq!(terr.forward.plr, 0.0);
    }

    #[test]
    fn builtin_is_case_insensitive_and_rejects_unknown() {
        assert_eq!(builtin("sat").unwrap().name, "SAT");
        assert_eq!(
            builtin("LEO"),
            Err(ScenarioError::UnknownScenario("LEO".into()))
        );
    }

    #[test]
    fn sat_and_satl_differ_only_in_loss() {
        let mut sat = builtin("SAT").unwrap();
        let satl = builtin("SATL").unwrap();
        sat.name = satl.name.clone();
        sat.forward.plr = satl.forward.plr;
        sat.reverse.plr = satl.reverse.plr;
        assert_eq!(sat, satl);
    }

    #[test]
    fn bdp_values() {
        assert!((bdp(&builtin("SAT").unwrap()) - 1_500_000.0).abs() < 1e-6);
        assert!((bdp(&builtin("TERR").unwrap()) - 75_000.0).abs() < 1e-6);
        let mut s = builtin("SAT").unwrap();
        s.one_way_delay_ns = 0;
        assert_eq!(bdp(&s), 0.0);
    }

    #[test]
    fn parse_eut_like() {
        let spec = parse_scenario("forward.rate=50M reverse.rate=5M").unwrap();
        assert_eq!(spec.forward.data_rate, 50e6);
        assert_eq!(spec.reverse.data_rate, 5e6);
        assert_eq!(spec.one_way_delay(), 0.3);
        assert_eq!(spec.forward.queue_capacity, 2500);
    }

    #[test]
    fn empty_text_gives_sat() {
        assert_eq!(parse_scenario("").unwrap(), builtin("SAT").unwrap());
        assert_eq!(
            parse_scenario("# only a comment\n\n").unwrap(),
            builtin("SAT").unwrap()
        );
    }

    #[test]
    fn plr_out_of_range() {
        let err = parse_scenario("forward.plr=1.5").unwrap_err();
        assert_eq!(
            err,
            ScenarioError::Invalid {
                field: "forward.plr",
                reason: "plr out of range [0, 1]"
            }
        );
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = parse_scenario("name = X\nforward.rate = fast\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Syntax { line: 2, .. }));
        let err = parse_scenario("\n\nbogus = 1").unwrap_err();
        assert!(matches!(err, ScenarioError::Syntax { line: 3, .. }));
        let err = parse_scenario("delay_ms").unwrap_err();
        assert!(matches!(err, ScenarioError::Syntax { line: 1, .. }));
        let err = parse_scenario("iterations=1\niterations=2").unwrap_err();
        assert!(matches!(err, ScenarioError::Syntax { line: 2, .. }));
    }

    #[test]
    fn spaced_pairs_and_comments() {
        let spec = parse_scenario(
            "name = LAB # lab path\nforward.rate = 1500K reverse.rate =750K\ndelay_ms= 12.5\n",
        )
        .unwrap();
        assert_eq!(spec.name, "LAB");
        assert_eq!(spec.forward.data_rate, 1.5e6);
        assert_eq!(spec.reverse.data_rate, 750e3);
        assert_eq!(spec.one_way_delay_ns, 12_500_000);
    }

    #[test]
    fn invariant_violations_name_the_field() {
        assert!(matches!(
            parse_scenario("iterations=0"),
            Err(ScenarioError::Invalid {
                field: "iterations",
                ..
            })
        ));
        assert!(matches!(
            parse_scenario("timeout_s=0"),
            Err(ScenarioError::Invalid {
                field: "timeout_s",
                ..
            })
        ));
        assert!(matches!(
            parse_scenario("reverse.queue=0"),
            Err(ScenarioError::Invalid {
                field: "reverse.queue",
                ..
            })
        ));
        assert!(matches!(
            parse_scenario("file_size=0"),
            Err(ScenarioError::Invalid {
                field: "file_size",
                ..
            })
        ));
    }

    #[test]
    fn builtins_round_trip() {
        for name in BUILTIN_NAMES {
            let spec = builtin(name).unwrap();
            assert_eq!(parse_scenario(&serialize_scenario(&spec)).unwrap(), spec);
        }
    }
}
