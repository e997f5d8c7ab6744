//! Result and plot-data emission. The contract is tabular: results are one
//! row per (seed, task, metric); plot data aggregates mean and standard
//! deviation across seeds per task step, grouped by precision label when a
//! record set mixes quantization settings. SVG emission is optional sugar
//! on top of the CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use hdqt::error::{Error, Result};

use crate::config::QuantMode;
use crate::runner::RunRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

impl OutputFormat {
    pub fn parse(name: &str) -> Result<OutputFormat> {
        match name {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(Error::param("format", format!("unknown format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    StepAcc,
    Forgetting,
    PerClassDelta,
    BinOccupancy,
}

impl Figure {
    pub fn parse(name: &str) -> Result<Figure> {
        match name {
            "step_acc" => Ok(Figure::StepAcc),
            "forgetting" => Ok(Figure::Forgetting),
            "per_class_delta" => Ok(Figure::PerClassDelta),
            "bin_occupancy" => Ok(Figure::BinOccupancy),
            other => Err(Error::param("figure", format!("unknown figure '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub seed: u64,
    pub task: usize,
    pub metric: String,
    pub value: f64,
}

/// Flattens records into the stable (seed, task, metric) schema.
pub fn result_rows(records: &[RunRecord]) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for r in records {
        for (task, &acc) in r.task_mean_acc.iter().enumerate() {
            rows.push(ResultRow {
                seed: r.seed,
                task,
                metric: "step_acc".into(),
                value: acc,
            });
        }
        for (i, &f) in r.forgetting.iter().enumerate() {
            rows.push(ResultRow {
                seed: r.seed,
                task: i + 1,
                metric: "forgetting".into(),
                value: f,
            });
        }
        rows.push(ResultRow {
            seed: r.seed,
            task: r.task_mean_acc.len().saturating_sub(1),
            metric: "final_accuracy".into(),
            value: r.final_accuracy,
        });
    }
    rows
}

pub fn emit_results(records: &[RunRecord], format: OutputFormat, out: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::data("no records to emit"));
    }
    let rows = result_rows(records);
    match format {
        OutputFormat::Json => {
            std::fs::write(out, serde_json::to_string_pretty(&rows)?)?;
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_path(out)?;
            w.write_record(["seed", "task", "metric", "value"])?;
            for row in &rows {
                w.write_record([
                    row.seed.to_string(),
                    row.task.to_string(),
                    row.metric.clone(),
                    format!("{}", row.value),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Records must agree on everything except precision; differing precision
/// settings become separate plot groups (fp vs b4a8 and so on).
fn group_records(records: &[RunRecord]) -> Result<BTreeMap<String, Vec<&RunRecord>>> {
    if records.is_empty() {
        return Err(Error::data("no records to plot"));
    }
    let fingerprint = |r: &RunRecord| {
        let mut stripped = r.config.clone();
        stripped.quant = QuantMode::Fp;
        serde_json::to_string(&stripped).expect("config serializes")
    };
    let reference = fingerprint(&records[0]);
    let mut groups: BTreeMap<String, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        if fingerprint(r) != reference {
            return Err(Error::data(
                "records mix incompatible configs (method/dataset/seeds differ)",
            ));
        }
        groups.entry(r.config.quant.label()).or_default().push(r);
    }
    Ok(groups)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One aggregated plot row: x is the task step (or code bin, or class rank).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub group: String,
    pub x: f64,
    pub mean: f64,
    pub std: f64,
}

pub fn plot_rows(records: &[RunRecord], figure: Figure) -> Result<Vec<PlotRow>> {
    let groups = group_records(records)?;
    let mut rows = Vec::new();
    match figure {
        Figure::StepAcc | Figure::Forgetting => {
            for (label, recs) in &groups {
                let n_tasks = recs[0].task_mean_acc.len();
                if recs.iter().any(|r| r.task_mean_acc.len() != n_tasks) {
                    return Err(Error::data("records disagree on task count"));
                }
                let series: Vec<Vec<f64>> = recs
                    .iter()
                    .map(|r| match figure {
                        Figure::StepAcc => r.task_mean_acc.clone(),
                        _ => r.forgetting.clone(),
                    })
                    .collect();
                let steps = series[0].len();
                for s in 0..steps {
                    let vals: Vec<f64> = series.iter().map(|v| v[s]).collect();
                    let (mean, std) = mean_std(&vals);
                    let x = match figure {
                        Figure::StepAcc => s as f64,
                        _ => (s + 1) as f64,
                    };
                    rows.push(PlotRow {
                        group: label.clone(),
                        x,
                        mean,
                        std,
                    });
                }
            }
        }
        Figure::PerClassDelta => {
            if groups.len() != 2 {
                return Err(Error::data(format!(
                    "per_class_delta needs exactly 2 precision groups, got {}",
                    groups.len()
                )));
            }
            let mut it = groups.iter();
            let (base_label, base) = it.next().expect("two groups");
            let (other_label, other) = it.next().expect("two groups");
            // Pair runs by seed; arrival order is seed-determined so both
            // sides of a pair share it.
            let by_seed: BTreeMap<u64, &&RunRecord> =
                other.iter().map(|r| (r.seed, r)).collect();
            let mut deltas: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            let mut arrival_rank: BTreeMap<usize, usize> = BTreeMap::new();
            for b in base {
                let o = by_seed.get(&b.seed).ok_or_else(|| {
                    Error::data(format!("seed {} missing from group {other_label}", b.seed))
                })?;
                let last_b = b.accuracy.num_tasks() - 1;
                let last_o = o.accuracy.num_tasks() - 1;
                for (rank, &class) in b.class_arrival.iter().enumerate() {
                    let (Some(a), Some(c)) = (
                        b.accuracy.accuracy(class, last_b),
                        o.accuracy.accuracy(class, last_o),
                    ) else {
                        continue;
                    };
                    deltas.entry(class).or_default().push(c - a);
                    arrival_rank.entry(class).or_insert(rank);
                }
            }
            let mut ordered: Vec<(usize, usize)> = arrival_rank
                .iter()
                .map(|(&class, &rank)| (rank, class))
                .collect();
            ordered.sort_unstable();
            for (rank, class) in ordered {
                let (mean, std) = mean_std(&deltas[&class]);
                rows.push(PlotRow {
                    group: format!("{other_label}-minus-{base_label}"),
                    x: rank as f64,
                    mean,
                    std,
                });
            }
        }
        Figure::BinOccupancy => {
            for (label, recs) in &groups {
                for (role, pick) in [("lhs", 0usize), ("rhs", 1usize)] {
                    let width = recs
                        .iter()
                        .map(|r| {
                            if pick == 0 {
                                r.gemm.bins_lhs.len()
                            } else {
                                r.gemm.bins_rhs.len()
                            }
                        })
                        .max()
                        .unwrap_or(0);
                    for code in 0..width {
                        let vals: Vec<f64> = recs
                            .iter()
                            .map(|r| {
                                let bins = if pick == 0 {
                                    &r.gemm.bins_lhs
                                } else {
                                    &r.gemm.bins_rhs
                                };
                                bins.get(code).copied().unwrap_or(0) as f64
                            })
                            .collect();
                        let (mean, std) = mean_std(&vals);
                        rows.push(PlotRow {
                            group: format!("{label}/{role}"),
                            x: code as f64,
                            mean,
                            std,
                        });
                    }
                }
            }
        }
    }
    Ok(rows)
}

pub fn emit_plotdata(
    records: &[RunRecord],
    figure: Figure,
    out: &Path,
    svg: Option<&Path>,
) -> Result<()> {
    let rows = plot_rows(records, figure)?;
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["group", "x", "mean", "std"])?;
    for row in &rows {
        w.write_record([
            row.group.clone(),
            format!("{}", row.x),
            format!("{}", row.mean),
            format!("{}", row.std),
        ])?;
    }
    w.flush()?;
    if let Some(svg_path) = svg {
        std::fs::write(svg_path, render_svg(&rows))?;
    }
    Ok(())
}

/// Minimal polyline chart, one series per group.
fn render_svg(rows: &[PlotRow]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    let mut groups: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        groups.entry(&r.group).or_default().push((r.x, r.mean));
    }
    let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for pts in groups.values() {
        for &(x, y) in pts {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if !xmin.is_finite() {
        return String::from("<svg xmlns=\"http://www.w3.org/2000/svg\"/>");
    }
    let xspan = (xmax - xmin).max(1e-9);
    let yspan = (ymax - ymin).max(1e-9);
    let sx = |x: f64| PAD + (x - xmin) / xspan * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - ymin) / yspan * (H - 2.0 * PAD);

    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut out = String::new();
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
    );
    let _ = write!(
        out,
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/><g stroke=\"#999\" stroke-width=\"1\">\
         <line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\"/><line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\"/></g>",
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD
    );
    for (i, (label, mut pts)) in groups.into_iter().enumerate() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let color = palette[i % palette.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = write!(
            out,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
            path.join(" ")
        );
        let _ = write!(
            out,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\" font-size=\"12\">{label}</text>",
            W - PAD + 4.0,
            PAD + 14.0 * i as f64
        );
    }
    out.push_str("</svg>");
    out
}
