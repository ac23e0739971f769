//! Plot artifacts. Every plot is first written as a CSV sidecar and the
//! SVG is then drawn from that CSV text alone, so the sidecar always
//! regenerates the image exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use satqic_core::analysis::{
    classify_offsets, efficiency_cdf, role_distributions, select_median_run, OffsetClass, Role,
    Status,
};
use satqic_core::results::{Cell, ResultMatrix, ScenarioResults};
use satqic_core::trace::Trace;
use thiserror::Error;

use crate::capture;

/// Abstract colour classes; backends only need [`PALETTE`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorClass {
    First,
    Retransmission,
    Highlight,
    Background,
    ScaleLow,
    ScaleHigh,
    Failure,
}

pub const PALETTE: [(ColorClass, &str); 7] = [
    (ColorClass::First, "#1f77b4"),
    (ColorClass::Retransmission, "#ff7f0e"),
    (ColorClass::Highlight, "#2ca02c"),
    (ColorClass::Background, "#b0b0b0"),
    (ColorClass::ScaleLow, "#fde725"),
    (ColorClass::ScaleHigh, "#3b528b"),
    (ColorClass::Failure, "#ffffff"),
];

/// Colours for the curves of multi-series plots, in order.
pub const SERIES: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

pub fn color(class: ColorClass) -> &'static str {
    PALETTE
        .iter()
        .find(|(c, _)| *c == class)
        .map(|(_, s)| *s)
        .expect("every class has a colour")
}

impl ColorClass {
    pub fn name(self) -> &'static str {
        match self {
            ColorClass::First => "first",
            ColorClass::Retransmission => "retransmission",
            ColorClass::Highlight => "highlight",
            ColorClass::Background => "background",
            ColorClass::ScaleLow => "scale-low",
            ColorClass::ScaleHigh => "scale-high",
            ColorClass::Failure => "failure",
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("malformed sidecar: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed sidecar: {0}")]
    Field(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_f64(s: &str) -> Result<f64, ReportError> {
    s.parse()
        .map_err(|_| ReportError::Field(format!("not a number: {s:?}")))
}

fn parse_opt(s: &str) -> Result<Option<f64>, ReportError> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(s).map(Some)
    }
}

fn records(csv_text: &str) -> Result<Vec<csv::StringRecord>, ReportError> {
    let mut rd = csv::Reader::from_reader(csv_text.as_bytes());
    Ok(rd.records().collect::<Result<_, _>>()?)
}

fn field(r: &csv::StringRecord, i: usize) -> Result<&str, ReportError> {
    r.get(i)
        .ok_or_else(|| ReportError::Field(format!("missing column {i}")))
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn svg_open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    )
}

fn lerp_hex(a: &str, b: &str, t: f64) -> String {
    let ch =
        |s: &str, i: usize| u8::from_str_radix(&s[1 + 2 * i..3 + 2 * i], 16).unwrap_or(0) as f64;
    let t = t.clamp(0.0, 1.0);
    let mut out = String::from("#");
    for i in 0..3 {
        let v = ch(a, i) + (ch(b, i) - ch(a, i)) * t;
        let _ = write!(out, "{:02x}", v.round() as u8);
    }
    out
}

/// Linear axis mapping from data space into a pixel span.
#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    px0: f64,
    px1: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, px0: f64, px1: f64) -> Self {
        let hi = if hi > lo { hi } else { lo + 1.0 };
        Self { lo, hi, px0, px1 }
    }
    fn map(&self, v: f64) -> f64 {
        self.px0 + (v - self.lo) / (self.hi - self.lo) * (self.px1 - self.px0)
    }
}

fn frame(out: &mut String, x: Axis, y: Axis, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        out,
        "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>",
        x.px0,
        y.px1,
        x.px1 - x.px0,
        y.px0 - y.px1
    );
    for (v, px) in [(x.lo, x.px0), (x.hi, x.px1)] {
        let _ = writeln!(
            out,
            "<text x=\"{px:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            y.px0 + 14.0,
            tick(v)
        );
    }
    for (v, px) in [(y.lo, y.px0), (y.hi, y.px1)] {
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{px:.1}\" text-anchor=\"end\">{}</text>",
            x.px0 - 4.0,
            tick(v)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
        (x.px0 + x.px1) / 2.0,
        y.px0 + 30.0,
        esc(xlabel)
    );
    let _ = writeln!(
        out,
        "<text x=\"14\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">{}</text>",
        (y.px0 + y.px1) / 2.0,
        (y.px0 + y.px1) / 2.0,
        esc(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e6 {
        format!("{:.1}M", v / 1e6)
    } else if v.abs() >= 1e3 {
        format!("{:.1}k", v / 1e3)
    } else {
        format!("{v:.2}")
    }
}

// Heatmap

pub const HEATMAP_HEADER: [&str; 5] = [
    "client",
    "server",
    "mean_goodput_bps",
    "marker",
    "normalized",
];

fn marker_text(m: Option<Status>) -> &'static str {
    match m {
        Some(Status::Timeout) => "T",
        Some(_) => "X",
        None => "",
    }
}

pub fn heatmap_csv(s: &ScenarioResults) -> String {
    let rows = s
        .heatmap()
        .into_iter()
        .map(|c| {
            vec![
                c.client,
                c.server,
                opt(c.mean_goodput),
                marker_text(c.marker).into(),
                opt(c.normalized),
            ]
        })
        .collect();
    csv_text(&HEATMAP_HEADER, rows)
}

/// Rows are clients, columns servers.
pub fn heatmap_svg(csv_text: &str) -> Result<String, ReportError> {
    let recs = records(csv_text)?;
    let mut clients: Vec<String> = Vec::new();
    let mut servers: Vec<String> = Vec::new();
    for r in &recs {
        for (list, i) in [(&mut clients, 0), (&mut servers, 1)] {
            let v = field(r, i)?.to_string();
            if !list.contains(&v) {
                list.push(v);
            }
        }
    }
    let (cw, ch, left, top) = (70.0, 28.0, 110.0, 40.0);
    let w = left + cw * servers.len() as f64 + 10.0;
    let h = top + ch * clients.len() as f64 + 10.0;
    let mut out = svg_open(w, h);
    let _ = writeln!(
        out,
        "<text x=\"{left}\" y=\"14\">server (columns) / client (rows), goodput Mbit/s</text>"
    );
    for (j, s) in servers.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            left + cw * (j as f64 + 0.5),
            top - 6.0,
            esc(s)
        );
    }
    for (i, c) in clients.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            left - 6.0,
            top + ch * (i as f64 + 0.5) + 4.0,
            esc(c)
        );
    }
    for r in &recs {
        let i = clients
            .iter()
            .position(|c| c == field(r, 0).unwrap_or_default())
            .unwrap_or(0);
        let j = servers
            .iter()
            .position(|s| s == field(r, 1).unwrap_or_default())
            .unwrap_or(0);
        let mean = parse_opt(field(r, 2)?)?;
        let marker = field(r, 3)?;
        let norm = parse_opt(field(r, 4)?)?;
        let fill = match norm {
            Some(t) => lerp_hex(color(ColorClass::ScaleLow), color(ColorClass::ScaleHigh), t),
            None => color(ColorClass::Failure).to_string(),
        };
        let (x, y) = (left + cw * j as f64, top + ch * i as f64);
        let _ = writeln!(
            out,
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cw}\" height=\"{ch}\" fill=\"{fill}\" stroke=\"black\"/>"
        );
        let label = match mean {
            Some(g) => format!("{:.2}", g / 1e6),
            None if marker == "T" => "T".into(),
            None => "\u{2717}".into(),
        };
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            x + cw / 2.0,
            y + ch / 2.0 + 4.0,
            label
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

// Efficiency CDF

pub const CDF_HEADER: [&str; 3] = ["scenario", "efficiency", "cumulative"];

/// One step series per scenario; failed runs sit at zero efficiency.
pub fn cdf_csv(m: &ResultMatrix) -> String {
    let mut rows = Vec::new();
    for s in &m.scenarios {
        let outcomes = s
            .cells
            .iter()
            .flat_map(|c| c.runs.iter().map(|r| &r.outcome));
        for (x, f) in efficiency_cdf(outcomes) {
            rows.push(vec![s.spec.name.clone(), x.to_string(), f.to_string()]);
        }
    }
    csv_text(&CDF_HEADER, rows)
}

pub fn cdf_svg(csv_text: &str) -> Result<String, ReportError> {
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in records(csv_text)? {
        let name = field(&r, 0)?;
        let p = (parse_f64(field(&r, 1)?)?, parse_f64(field(&r, 2)?)?);
        match series.iter_mut().find(|(n, _)| n == name) {
            Some((_, v)) => v.push(p),
            None => series.push((name.to_string(), vec![p])),
        }
    }
    let x = Axis::new(0.0, 1.0, 50.0, 430.0);
    let y = Axis::new(0.0, 1.0, 270.0, 20.0);
    let mut out = svg_open(460.0, 310.0);
    frame(&mut out, x, y, "efficiency", "CDF");
    for (k, (name, pts)) in series.iter().enumerate() {
        let col = SERIES[k % SERIES.len()];
        let mut d = format!("M{:.2},{:.2}", x.map(0.0), y.map(0.0));
        let mut prev = 0.0;
        for &(px, f) in pts {
            let _ = write!(d, " H{:.2} V{:.2}", x.map(px.clamp(0.0, 1.0)), y.map(f));
            prev = f;
        }
        let _ = write!(d, " H{:.2} V{:.2}", x.map(1.0), y.map(prev));
        let _ = writeln!(
            out,
            "<path d=\"{d}\" fill=\"none\" stroke=\"{col}\" stroke-width=\"1.5\"/>"
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{col}\">{}</text>",
            x.px0 + 8.0,
            y.px1 + 14.0 * (k as f64 + 1.0),
            esc(name)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

// Per-role goodput distributions

pub const VIOLIN_HEADER: [&str; 4] = ["implementation", "role", "kind", "goodput_bps"];

fn role_name(r: Role) -> &'static str {
    match r {
        Role::Client => "client",
        Role::Server => "server",
    }
}

/// Raw points and quartiles per implementation and role.
pub fn violin_csv(s: &ScenarioResults) -> String {
    let owned: Vec<(String, String, Vec<_>)> = s
        .cells
        .iter()
        .map(|c| (c.client.clone(), c.server.clone(), c.outcomes()))
        .collect();
    let dists = role_distributions(
        owned
            .iter()
            .map(|(c, v, o)| (c.as_str(), v.as_str(), o.as_slice())),
    );
    let mut rows = Vec::new();
    for d in dists {
        let base = |kind: &str, v: f64| {
            vec![
                d.name.clone(),
                role_name(d.role).into(),
                kind.into(),
                v.to_string(),
            ]
        };
        for &v in &d.values {
            rows.push(base("point", v));
        }
        if let Some([q1, q2, q3]) = d.quartiles {
            rows.push(base("q1", q1));
            rows.push(base("q2", q2));
            rows.push(base("q3", q3));
        }
        if d.values.is_empty() {
            rows.push(vec![
                d.name.clone(),
                role_name(d.role).into(),
                "none".into(),
                String::new(),
            ]);
        }
    }
    csv_text(&VIOLIN_HEADER, rows)
}

pub fn violin_svg(csv_text: &str) -> Result<String, ReportError> {
    let recs = records(csv_text)?;
    let mut groups: Vec<(String, String)> = Vec::new();
    let mut hi: f64 = 0.0;
    for r in &recs {
        let key = (field(r, 1)?.to_string(), field(r, 0)?.to_string());
        if !groups.contains(&key) {
            groups.push(key);
        }
        if let Some(v) = parse_opt(field(r, 3)?)? {
            hi = hi.max(v);
        }
    }
    let gw = 60.0;
    let width = 70.0 + gw * groups.len() as f64;
    let x = Axis::new(0.0, groups.len() as f64, 60.0, width - 10.0);
    let y = Axis::new(0.0, hi, 260.0, 20.0);
    let mut out = svg_open(width, 330.0);
    frame(&mut out, x, y, "", "goodput bit/s");
    for (k, (role, name)) in groups.iter().enumerate() {
        let cx = x.map(k as f64 + 0.5);
        let _ = writeln!(
            out,
            "<text x=\"{cx:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            y.px0 + 14.0,
            esc(name)
        );
        let _ = writeln!(
            out,
            "<text x=\"{cx:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            y.px0 + 28.0,
            esc(role)
        );
    }
    for r in &recs {
        let key = (field(r, 1)?.to_string(), field(r, 0)?.to_string());
        let k = groups.iter().position(|g| *g == key).unwrap_or(0);
        let cx = x.map(k as f64 + 0.5);
        let Some(v) = parse_opt(field(r, 3)?)? else {
            continue;
        };
        match field(r, 2)? {
            "point" => {
                let _ = writeln!(
                    out,
                    "<circle cx=\"{cx:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"{}\"/>",
                    y.map(v),
                    color(ColorClass::First)
                );
            }
            "q1" | "q2" | "q3" => {
                let _ = writeln!(
                    out,
                    "<line x1=\"{:.2}\" x2=\"{:.2}\" y1=\"{:.2}\" y2=\"{:.2}\" stroke=\"{}\"/>",
                    cx - gw * 0.35,
                    cx + gw * 0.35,
                    y.map(v),
                    y.map(v),
                    color(ColorClass::Highlight)
                );
            }
            _ => {}
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

// Time-offset plots

pub const OFFSET_HEADER: [&str; 6] = [
    "iteration",
    "highlight",
    "time_s",
    "offset",
    "length",
    "class",
];

pub fn class_name(c: OffsetClass) -> &'static str {
    match c {
        OffsetClass::FirstTransmission => "first",
        OffsetClass::Retransmission => "retransmission",
    }
}

/// Every server data packet of every annotated iteration, time measured
/// from that iteration's first record. `highlight` names the iteration
/// drawn in colour. `None` when no iteration is annotated.
pub fn time_offset_csv(iterations: &[(u32, &Trace)], highlight: Option<u32>) -> Option<String> {
    let mut rows = Vec::new();
    let mut any = false;
    for &(it, trace) in iterations {
        if !trace.is_annotated() {
            continue;
        }
        any = true;
        let t0 = trace.records().first().map(|r| r.timestamp_ns).unwrap_or(0);
        for e in classify_offsets(trace) {
            rows.push(vec![
                it.to_string(),
                u8::from(highlight == Some(it)).to_string(),
                ((e.timestamp_ns - t0) as f64 / 1e9).to_string(),
                e.range.start.to_string(),
                (e.range.end - e.range.start).to_string(),
                class_name(e.class).into(),
            ]);
        }
    }
    any.then(|| csv_text(&OFFSET_HEADER, rows))
}

/// Non-highlighted iterations are drawn first, in the background colour.
pub fn time_offset_svg(csv_text: &str) -> Result<String, ReportError> {
    struct Pt {
        hl: bool,
        t: f64,
        off: f64,
        retx: bool,
    }
    let mut pts = Vec::new();
    for r in records(csv_text)? {
        pts.push(Pt {
            hl: field(&r, 1)? == "1",
            t: parse_f64(field(&r, 2)?)?,
            off: parse_f64(field(&r, 3)?)?,
            retx: field(&r, 5)? == "retransmission",
        });
    }
    let tmax = pts.iter().map(|p| p.t).fold(0.0, f64::max);
    let omax = pts.iter().map(|p| p.off).fold(0.0, f64::max);
    let x = Axis::new(0.0, tmax, 70.0, 590.0);
    let y = Axis::new(0.0, omax, 360.0, 20.0);
    let mut out = svg_open(620.0, 400.0);
    frame(&mut out, x, y, "time (s)", "offset (bytes)");
    for pass in [false, true] {
        for p in pts.iter().filter(|p| p.hl == pass) {
            let class = match (p.hl, p.retx) {
                (false, _) => ColorClass::Background,
                (true, false) => ColorClass::First,
                (true, true) => ColorClass::Retransmission,
            };
            let _ = writeln!(
                out,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1\" fill=\"{}\"/>",
                x.map(p.t),
                y.map(p.off),
                color(class)
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Iteration chosen for colouring: the median-completion successful run.
pub fn highlighted_iteration(cell: &Cell) -> Option<u32> {
    select_median_run(&cell.outcomes())
        .ok()
        .map(|i| cell.runs[i].iteration)
}

#[derive(Debug, Default)]
pub struct ReportSummary {
    pub written: Vec<PathBuf>,
    /// Plots that could not be drawn, with the reason.
    pub skipped: Vec<String>,
}

fn write(path: &Path, text: &str, summary: &mut ReportSummary) -> Result<(), ReportError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))?;
    summary.written.push(path.to_path_buf());
    Ok(())
}

fn pair(
    dir: &Path,
    stem: &str,
    csv: &str,
    svg: String,
    summary: &mut ReportSummary,
) -> Result<(), ReportError> {
    write(&dir.join(format!("{stem}.csv")), csv, summary)?;
    write(&dir.join(format!("{stem}.svg")), &svg, summary)
}

/// Renders all plots of `m` into `report_dir`. Traces are looked up
/// relative to `results_dir`.
pub fn render_report(
    m: &ResultMatrix,
    results_dir: &Path,
    report_dir: &Path,
) -> Result<ReportSummary, ReportError> {
    let mut summary = ReportSummary::default();
    let cdf = cdf_csv(m);
    pair(report_dir, "cdf", &cdf, cdf_svg(&cdf)?, &mut summary)?;
    for s in &m.scenarios {
        let dir = report_dir.join(&s.spec.name);
        let h = heatmap_csv(s);
        pair(&dir, "heatmap", &h, heatmap_svg(&h)?, &mut summary)?;
        let v = violin_csv(s);
        pair(&dir, "violin", &v, violin_svg(&v)?, &mut summary)?;
        for cell in &s.cells {
            let label = format!("{}/{}--{}", s.spec.name, cell.client, cell.server);
            let mut traces: BTreeMap<u32, Trace> = BTreeMap::new();
            for run in &cell.runs {
                let Some(rel) = &run.trace_file else { continue };
                match capture::read_trace(&results_dir.join(rel)) {
                    Ok(t) => {
                        traces.insert(run.iteration, t);
                    }
                    Err(e) => summary
                        .skipped
                        .push(format!("{label} iteration {}: {e}", run.iteration)),
                }
            }
            let its: Vec<(u32, &Trace)> = traces.iter().map(|(k, t)| (*k, t)).collect();
            match time_offset_csv(&its, highlighted_iteration(cell)) {
                Some(csv) => {
                    let stem = format!("{}--{}", cell.client, cell.server);
                    pair(
                        &dir.join("offsets"),
                        &stem,
                        &csv,
                        time_offset_svg(&csv)?,
                        &mut summary,
                    )?;
                }
                None => summary.skipped.push(format!(
                    "{label}: no annotated trace, time-offset plot skipped"
                )),
            }
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use satqic_core::analysis::TransferOutcome;
    use satqic_core::results::RunResult;
    use satqic_core::scenarios::builtin;

    fn ok(goodput: f64) -> TransferOutcome {
        TransferOutcome {
            status: Status::Success,
            time_to_completion: Some(1.0),
            goodput: Some(goodput),
            efficiency: goodput / 20e6,
            ..TransferOutcome::failure(Status::Success)
        }
    }

    fn cell(client: &str, server: &str, outcomes: Vec<TransferOutcome>) -> Cell {
        Cell {
            client: client.into(),
            server: server.into(),
            runs: outcomes
                .into_iter()
                .enumerate()
                .map(|(i, outcome)| RunResult {
                    iteration: i as u32,
                    seed: 0,
                    outcome,
                    trace_file: None,
                })
                .collect(),
        }
    }

    fn scenario() -> ScenarioResults {
        ScenarioResults {
            spec: builtin("TERR").unwrap(),
            cells: vec![
                cell("a", "a", vec![ok(2e6)]),
                cell("a", "b", vec![ok(5e6)]),
                cell("b", "a", vec![ok(10e6)]),
                cell("b", "b", vec![TransferOutcome::failure(Status::Timeout)]),
            ],
        }
    }

    #[test]
    fn heatmap_sidecar() {
        let csv = heatmap_csv(&scenario());
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows[0], "client,server,mean_goodput_bps,marker,normalized");
        assert_eq!(rows[1], "a,a,2000000,,0");
        assert_eq!(rows[2], "a,b,5000000,,0.375");
        assert_eq!(rows[3], "b,a,10000000,,1");
        assert_eq!(rows[4], "b,b,,T,");
        let svg = heatmap_svg(&csv).unwrap();
        assert!(svg.contains(">T</text>"));
        assert_eq!(svg, heatmap_svg(&csv).unwrap());
    }

    #[test]
    fn cdf_failures_at_zero() {
        let m = ResultMatrix {
            version: "1".into(),
            shuffle_seed: 0,
            scenarios: vec![ScenarioResults {
                spec: builtin("SAT").unwrap(),
                cells: vec![cell(
                    "a",
                    "a",
                    vec![
                        ok(2e6),
                        TransferOutcome::failure(Status::Error),
                        ok(4e6),
                        TransferOutcome::failure(Status::Timeout),
                    ],
                )],
            }],
        };
        let csv = cdf_csv(&m);
        assert_eq!(csv.lines().nth(1), Some("SAT,0,0.5"));
        assert!(cdf_svg(&csv).unwrap().starts_with("<svg"));
    }

    #[test]
    fn violin_quartiles() {
        let csv = violin_csv(&scenario());
        assert!(csv.contains("a,client,q2,3500000\n"));
        assert!(csv.contains("b,server,q2,5000000\n"));
        assert!(violin_svg(&csv).unwrap().contains("<line"));
    }

    #[test]
    fn palette_is_total() {
        for (c, hex) in PALETTE {
            assert_eq!(color(c), hex);
            assert!(!c.name().is_empty());
        }
        assert_eq!(lerp_hex("#000000", "#ffffff", 0.5), "#808080");
    }

    #[test]
    fn unannotated_cells_are_skipped() {
        assert_eq!(time_offset_csv(&[(0, &Trace::default())], None), None);
    }
}
