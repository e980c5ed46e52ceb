//! CSV traces and `key = value` summaries.

use ermsim::grid::{GridEvent, GridScenarioResult};
use ermsim::pipeline::{DgBehavior, ScenarioResult};
use ermsim::signal::TimeSeries;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, BufWriter, Write};
use std::path::Path;

pub type Summary = BTreeMap<String, String>;

/// Nine significant digits.
pub fn fmt_f(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn format_summary(s: &Summary) -> String {
    let mut out = String::new();
    for (k, v) in s {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

pub fn behavior_label(b: &DgBehavior) -> String {
    match b {
        DgBehavior::Single(k) => k.as_str().to_string(),
        DgBehavior::Ambiguous(ks) => {
            let names: Vec<&str> = ks.iter().map(|k| k.as_str()).collect();
            format!("ambiguous({})", names.join("|"))
        }
    }
}

pub fn device_summary(res: &ScenarioResult, mode: &str, behavior: &DgBehavior) -> Summary {
    let mut s = Summary::new();
    s.insert("stage".into(), res.stage.as_str().into());
    s.insert("payload_mode".into(), mode.into());
    s.insert("dg_behavior".into(), behavior_label(behavior));
    for (k, v) in &res.summary {
        s.insert(k.clone(), fmt_f(*v));
    }
    for (i, (t, e)) in res.events.iter().enumerate() {
        s.insert(format!("event.{i:02}"), format!("{} {e}", fmt_f(*t)));
    }
    s
}

pub fn grid_summary(res: &GridScenarioResult) -> Summary {
    let mut s = Summary::new();
    s.insert("kind".into(), res.kind.as_str().into());
    if let (Some(first), Some(last)) = (res.samples.first(), res.samples.last()) {
        s.insert("t_last_s".into(), fmt_f(last.t));
        s.insert("f_last_hz".into(), fmt_f(last.f));
        s.insert("v_632_last_pu".into(), fmt_f(last.v_632));
        s.insert("v_target_last_pu".into(), fmt_f(last.v_target));
        s.insert("v_target_pre_pu".into(), fmt_f(first.v_target));
        let vmin = res.samples.iter().map(|x| x.v_632).fold(f64::INFINITY, f64::min);
        s.insert("v_632_min_pu".into(), fmt_f(vmin));
    }
    match res.time_to_instability() {
        Some(t) => s.insert("t_instability_s".into(), fmt_f(t)),
        None => s.insert("t_instability_s".into(), "none".into()),
    };
    let terminal = res.terminal_event().map_or("none".to_string(), |(_, e)| e.label().to_string());
    s.insert("terminal_event".into(), terminal);
    for (i, (t, e)) in res.events.iter().enumerate() {
        s.insert(format!("event.{i:02}"), format!("{} {e}", fmt_f(*t)));
    }
    s
}

pub fn merge_prefixed(into: &mut Summary, prefix: &str, other: &Summary) {
    for (k, v) in other {
        into.insert(format!("{prefix}.{k}"), v.clone());
    }
}

pub fn write_series_csv(path: &Path, name: &str, series: &TimeSeries, decimate: usize) -> io::Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "t_s,{name}")?;
    for (i, v) in series.samples.iter().enumerate().step_by(decimate.max(1)) {
        writeln!(w, "{},{}", fmt_f(series.time(i)), fmt_f(*v))?;
    }
    w.flush()
}

pub fn write_events_csv(path: &Path, events: &[(f64, String)]) -> io::Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "t_s,event")?;
    for (t, e) in events {
        writeln!(w, "{},{e}", fmt_f(*t))?;
    }
    w.flush()
}

/// One CSV per recorded channel plus `events.csv`.
pub fn write_device_outputs(dir: &Path, res: &ScenarioResult, decimate: usize) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, series) in &res.channels {
        write_series_csv(&dir.join(format!("{name}.csv")), name, series, decimate)?;
    }
    write_events_csv(&dir.join("events.csv"), &res.events)
}

/// Columns `t_s, f_hz, v_632_pu, v_<target>_pu, events`. Events landing on a
/// sample are joined with `;`. Decimation never drops a row with events.
pub fn write_grid_csv(path: &Path, res: &GridScenarioResult, target_bus: &str, decimate: usize) -> io::Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "t_s,f_hz,v_632_pu,v_{target_bus}_pu,events")?;
    let label_at = |t: f64| -> String {
        let l: Vec<String> =
            res.events.iter().filter(|(te, _)| (te - t).abs() < 1e-9).map(|(_, e)| event_text(e)).collect();
        l.join(";")
    };
    let k = decimate.max(1);
    for (i, s) in res.samples.iter().enumerate() {
        let ev = label_at(s.t);
        if i % k != 0 && ev.is_empty() {
            continue;
        }
        writeln!(w, "{},{},{},{},{ev}", fmt_f(s.t), fmt_f(s.f), fmt_f(s.v_632), fmt_f(s.v_target))?;
    }
    // A collapse stops the sweep without a sample at that instant.
    if let Some((t, e)) = res.events.last() {
        if res.samples.last().is_none_or(|s| s.t < *t - 1e-9) {
            writeln!(w, "{},,,,{}", fmt_f(*t), event_text(e))?;
        }
    }
    w.flush()
}

fn event_text(e: &GridEvent) -> String {
    e.to_string().replace(',', ";")
}

pub fn write_summary(path: &Path, s: &Summary) -> io::Result<()> {
    std::fs::write(path, format_summary(s))
}
