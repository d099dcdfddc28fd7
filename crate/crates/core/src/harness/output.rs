//! Files written for trials and campaigns.
//!
//! ```text
//! metrics.csv        one row per prediction tick of every trial
//! crossings.csv      one row per trial and threshold
//! timeseries.csv     per policy and tick, quartiles of explored fraction and accuracy
//! timeseries.svg     medians with interquartile bands of both metrics
//! summary.json       per policy crossing statistics, series and failures
//! trials/<policy>_w<world>_s<sim>/
//!     metrics.csv, crossings.csv, tasks.csv, auction_trace.jsonl
//!     truth.png, final_{observed,predicted,entropy,error}.png
//!     t<time>_{observed,predicted,entropy,error}.png, t<time>_checkpoint.json
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::campaign::{CampaignResult, PolicySummary};
use super::trial::{MapFrame, TrialRecord};
use crate::{imageio, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutputOptions {
    /// Write a directory per trial.
    pub trial_dirs: bool,
    /// Write map renderings into trial directories.
    pub maps: bool,
}

impl Default for OutputOptions {
    fn default() -> Self {
        Self {
            trial_dirs: true,
            maps: true,
        }
    }
}

#[derive(Serialize)]
struct MetricsRow {
    policy: String,
    world_seed: u64,
    sim_seed: u64,
    tick: u64,
    time: f64,
    explored: f64,
    accuracy: Option<f64>,
    entropy_bits: f64,
    live_tasks: usize,
    assigned_tasks: usize,
    auction_rounds: usize,
    degraded: bool,
}

#[derive(Serialize)]
struct CrossingRow {
    policy: String,
    world_seed: u64,
    sim_seed: u64,
    threshold: f64,
    time: Option<f64>,
    uncovered_threshold: f64,
    uncovered_time: Option<f64>,
}

#[derive(Serialize)]
struct SeriesRow {
    policy: String,
    time: f64,
    explored_q1: f64,
    explored_median: f64,
    explored_q3: f64,
    accuracy_q1: Option<f64>,
    accuracy_median: Option<f64>,
    accuracy_q3: Option<f64>,
}

#[derive(Serialize)]
struct Failure<'a> {
    policy: String,
    world_seed: u64,
    sim_seed: u64,
    error: &'a str,
}

#[derive(Serialize)]
struct Summary<'a> {
    policies: &'a [PolicySummary],
    failures: Vec<Failure<'a>>,
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(Error::from)
}

fn flush(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn metrics_rows(record: &TrialRecord) -> impl Iterator<Item = MetricsRow> + '_ {
    let c = &record.config;
    record.ticks.iter().map(move |t| MetricsRow {
        policy: c.policy().to_string(),
        world_seed: c.world_seed,
        sim_seed: c.sim_seed,
        tick: t.tick,
        time: t.time,
        explored: t.explored,
        accuracy: t.accuracy,
        entropy_bits: t.entropy_bits,
        live_tasks: t.live_tasks,
        assigned_tasks: t.assigned_tasks,
        auction_rounds: t.auction_rounds,
        degraded: t.degraded,
    })
}

fn crossing_rows(record: &TrialRecord) -> impl Iterator<Item = CrossingRow> + '_ {
    let c = &record.config;
    record
        .crossings
        .iter()
        .zip(&record.uncovered_crossings)
        .map(move |(a, u)| CrossingRow {
            policy: c.policy().to_string(),
            world_seed: c.world_seed,
            sim_seed: c.sim_seed,
            threshold: a.threshold,
            time: a.time,
            uncovered_threshold: super::equivalent_uncovered_threshold(a.threshold),
            uncovered_time: u.time,
        })
}

/// Writes the per-tick metrics of `records` to `path`.
pub fn write_metrics<'a>(path: &Path, records: impl IntoIterator<Item = &'a TrialRecord>) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in records {
        for row in metrics_rows(r) {
            w.serialize(row)?;
        }
    }
    flush(w, path)
}

fn write_crossings<'a>(path: &Path, records: impl IntoIterator<Item = &'a TrialRecord>) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in records {
        for row in crossing_rows(r) {
            w.serialize(row)?;
        }
    }
    flush(w, path)
}

fn write_frame(dir: &Path, stem: &str, frame: &MapFrame, record: &TrialRecord) -> Result<()> {
    let g = frame.observed.geometry();
    let (w, h) = g.dims();
    imageio::write_grid(&dir.join(format!("{stem}_observed.png")), &frame.observed)?;
    if let Some(p) = &frame.predicted {
        imageio::write_grid(&dir.join(format!("{stem}_predicted.png")), p)?;
    }
    imageio::write_gray(&dir.join(format!("{stem}_entropy.png")), w, h, &frame.entropy.to_gray())?;
    if let Some(e) = &frame.error {
        imageio::write_rgb(&dir.join(format!("{stem}_error.png")), w, h, &e.to_rgb())?;
    }
    let path = dir.join(format!("{stem}_checkpoint.json"));
    let text = serde_json::to_string_pretty(&frame.checkpoint(&record.truth))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Name of the directory a trial is written to.
pub fn trial_dir_name(record: &TrialRecord) -> String {
    let c = &record.config;
    format!("{}_w{}_s{}", c.policy(), c.world_seed, c.sim_seed)
}

/// Writes everything recorded for one trial into `dir`.
pub fn write_trial(record: &TrialRecord, dir: &Path, options: OutputOptions) -> Result<()> {
    create_dir(dir)?;
    write_metrics(&dir.join("metrics.csv"), [record])?;
    write_crossings(&dir.join("crossings.csv"), [record])?;

    let tasks_path = dir.join("tasks.csv");
    let mut w = csv_writer(&tasks_path)?;
    for e in &record.task_log {
        w.serialize(e)?;
    }
    flush(w, &tasks_path)?;

    if !record.auction_trace.is_empty() {
        let path = dir.join("auction_trace.jsonl");
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        for t in &record.auction_trace {
            serde_json::to_writer(&mut out, t)?;
            out.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        out.flush().map_err(|e| Error::io(&path, e))?;
    }

    if options.maps {
        imageio::write_grid(&dir.join("truth.png"), &record.truth)?;
        for f in &record.frames {
            write_frame(dir, &format!("t{:06.1}", f.time), f, record)?;
        }
        write_frame(dir, "final", &record.final_frame, record)?;
    }
    Ok(())
}

type Metric = fn(&super::SeriesPoint) -> Option<[f64; 3]>;

const COLORS: [&str; 4] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a"];

/// Two stacked panels, explored fraction and accuracy over time, with one
/// median line and interquartile band per policy.
fn series_svg(summaries: &[PolicySummary]) -> String {
    let (w, h, pad) = (720.0, 260.0, 50.0);
    let t_max = summaries
        .iter()
        .filter_map(|s| s.series.last().map(|p| p.time))
        .fold(1.0, f64::max);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"12\">\n",
        2.0 * h + 30.0
    );
    let panels: [(&str, Metric); 2] = [
        ("explored fraction", |p| Some(p.explored)),
        ("predicted accuracy", |p| p.accuracy),
    ];
    for (k, (label, pick)) in panels.iter().enumerate() {
        let top = k as f64 * h + 10.0;
        let x = |t: f64| pad + t / t_max * (w - 2.0 * pad);
        let y = |v: f64| top + (1.0 - v.clamp(0.0, 1.0)) * (h - 2.0 * pad) + pad / 2.0;
        svg += &format!(
            "<rect x=\"{pad}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>\n",
            y(1.0),
            w - 2.0 * pad,
            y(0.0) - y(1.0)
        );
        svg += &format!("<text x=\"{pad}\" y=\"{}\">{label}</text>\n", y(1.0) - 6.0);
        svg += &format!(
            "<text x=\"{}\" y=\"{}\">{t_max:.0} s</text>\n",
            w - pad - 30.0,
            y(0.0) + 16.0
        );
        for v in [0.0, 0.5, 1.0] {
            svg += &format!("<text x=\"{}\" y=\"{}\">{v}</text>\n", pad - 28.0, y(v) + 4.0);
        }
        for (i, s) in summaries.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let points: Vec<(f64, [f64; 3])> = s.series.iter().filter_map(|p| pick(p).map(|q| (p.time, q))).collect();
            if points.is_empty() {
                continue;
            }
            let band: Vec<String> = points
                .iter()
                .map(|(t, q)| format!("{:.1},{:.1}", x(*t), y(q[2])))
                .chain(points.iter().rev().map(|(t, q)| format!("{:.1},{:.1}", x(*t), y(q[0]))))
                .collect();
            svg += &format!(
                "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.2\" stroke=\"none\"/>\n",
                band.join(" ")
            );
            let line: Vec<String> = points
                .iter()
                .map(|(t, q)| format!("{:.1},{:.1}", x(*t), y(q[1])))
                .collect();
            svg += &format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                line.join(" ")
            );
            if k == 0 {
                svg += &format!(
                    "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>\n",
                    w - pad - 140.0,
                    y(0.0) - 10.0 - 16.0 * i as f64,
                    s.policy
                );
            }
        }
    }
    svg + "</svg>\n"
}

/// Writes campaign tables, the summary and (optionally) every trial.
pub fn write_campaign(result: &CampaignResult, out: &Path, options: OutputOptions) -> Result<()> {
    create_dir(out)?;
    let records: Vec<&TrialRecord> = result.outcomes.iter().filter_map(|o| o.result.as_ref().ok()).collect();
    write_metrics(&out.join("metrics.csv"), records.iter().copied())?;
    write_crossings(&out.join("crossings.csv"), records.iter().copied())?;

    let series_path = out.join("timeseries.csv");
    let mut w = csv_writer(&series_path)?;
    for s in &result.summaries {
        for p in &s.series {
            w.serialize(SeriesRow {
                policy: s.policy.to_string(),
                time: p.time,
                explored_q1: p.explored[0],
                explored_median: p.explored[1],
                explored_q3: p.explored[2],
                accuracy_q1: p.accuracy.map(|a| a[0]),
                accuracy_median: p.accuracy.map(|a| a[1]),
                accuracy_q3: p.accuracy.map(|a| a[2]),
            })?;
        }
    }
    flush(w, &series_path)?;

    let svg_path = out.join("timeseries.svg");
    fs::write(&svg_path, series_svg(&result.summaries)).map_err(|e| Error::io(&svg_path, e))?;

    let summary = Summary {
        policies: &result.summaries,
        failures: result
            .outcomes
            .iter()
            .filter_map(|o| {
                o.result.as_ref().err().map(|e| Failure {
                    policy: o.policy.to_string(),
                    world_seed: o.world_seed,
                    sim_seed: o.sim_seed,
                    error: e,
                })
            })
            .collect(),
    };
    let path = out.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)?).map_err(|e| Error::io(&path, e))?;

    if options.trial_dirs {
        let trials: PathBuf = out.join("trials");
        for r in records {
            write_trial(r, &trials.join(trial_dir_name(r)), options)?;
        }
    }
    Ok(())
}
