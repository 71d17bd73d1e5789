//! CSV tables, aligned text tables and trace plots.

use std::fmt::Write;

use anyhow::{bail, Context, Result};
use occlusion_core::bench::CycleTimings;
use occlusion_core::sim::{Aggregate, MethodVariant, RunMetrics, TraceRow, TRACE_HEADER};

use crate::plot::{Chart, HLine, Series};

pub const METRICS_HEADER: &str =
    "scenario,variant,run,seed,collided,discomfort,traversal_time,froze,reached_goal,peak_abs_accel,mean_cycle_ms,p99_cycle_ms";
pub const TABLE1_HEADER: &str = "scenario,variant,runs,collision_rate,discomfort,traversal_time,freeze_rate";
pub const TABLE2_HEADER: &str = "scenario,variant,mean_ms,p99_ms";
pub const BENCH_HEADER: &str =
    "scenario,severity,mode,iterations,mean_ms,median_ms,p99_ms";

pub fn metrics_row(scenario: &str, variant: MethodVariant, run: usize, seed: u64, m: &RunMetrics) -> String {
    format!(
        "{scenario},{variant},{run},{seed},{},{:.6},{:.4},{},{},{:.4},{:.4},{:.4}",
        m.collided,
        m.discomfort,
        m.traversal_time,
        m.froze,
        m.reached_goal,
        m.peak_abs_accel,
        m.mean_cycle_time_ms,
        m.p99_cycle_time_ms
    )
}

/// One comparison row; the numbers are the batch aggregate verbatim.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub scenario: String,
    pub variant: MethodVariant,
    pub aggregate: Aggregate,
}

pub fn table1_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from(TABLE1_HEADER);
    out.push('\n');
    for r in rows {
        let a = &r.aggregate;
        let _ = writeln!(
            out,
            "{},{},{},{:.4},{:.6},{:.4},{:.4}",
            r.scenario, r.variant, a.n_runs, a.collision_rate, a.mean_discomfort, a.mean_traversal_time, a.freeze_rate
        );
    }
    out
}

pub fn table2_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from(TABLE2_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{:.4},{:.4}", r.scenario, r.variant, r.aggregate.mean_cycle_time_ms, r.aggregate.p99_cycle_time_ms);
    }
    out
}

/// Column-aligned rendering of a table given as header + rows.
pub fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

pub fn table1_text(rows: &[ComparisonRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let a = &r.aggregate;
            vec![
                r.scenario.clone(),
                r.variant.to_string(),
                format!("{:.2}%", 100.0 * a.collision_rate),
                format!("{:.4}", a.mean_discomfort),
                format!("{:.2}s", a.mean_traversal_time),
                format!("{:.2}%", 100.0 * a.freeze_rate),
            ]
        })
        .collect();
    aligned(&["scenario", "variant", "collision", "discomfort", "traversal", "freeze"], &body)
}

pub fn bench_rows(scenario: &str, severity: f64, iterations: usize, t: &CycleTimings) -> Vec<String> {
    [("with_visibility", &t.with_visibility), ("assessment_only", &t.assessment_only)]
        .into_iter()
        .map(|(mode, s)| {
            format!("{scenario},{severity},{mode},{iterations},{:.4},{:.4},{:.4}", s.mean_ms, s.median_ms, s.p99_ms)
        })
        .collect()
}

/// Parses a trace CSV produced by the simulator.
pub fn parse_trace(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines();
    let header = lines.next().context("empty trace")?;
    if header != TRACE_HEADER {
        bail!("unexpected trace header {header:?}");
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            bail!("trace line {}: expected 6 fields", i + 2);
        }
        let num = |k: usize| f[k].parse::<f64>().with_context(|| format!("trace line {}: field {}", i + 2, k + 1));
        rows.push(TraceRow {
            t: num(0)?,
            s: num(1)?,
            v: num(2)?,
            a: num(3)?,
            active_limit: if f[4].is_empty() { None } else { Some(num(4)?) },
            risk_ahead: num(5)?,
        });
    }
    Ok(rows)
}

/// The three trace plots: speed, acceleration (with the comfort threshold
/// marked) and risk ahead, all against route position.
pub fn trace_plots(rows: &[TraceRow], title: &str, a_th: f64) -> [(&'static str, String); 3] {
    let v_s = Chart {
        title: &format!("{title}: speed over route position"),
        x_label: "s [m]",
        y_label: "v [m/s]",
        series: vec![
            Series { label: "v", color: "#1f77b4", dashed: false, points: rows.iter().map(|r| Some((r.s, r.v))).collect() },
            Series {
                label: "active limit",
                color: "#d62728",
                dashed: true,
                points: rows.iter().map(|r| r.active_limit.map(|l| (r.s, l))).collect(),
            },
        ],
        hlines: vec![],
    }
    .render();
    let a_s = Chart {
        title: &format!("{title}: acceleration over route position"),
        x_label: "s [m]",
        y_label: "a [m/s²]",
        series: vec![Series { label: "a", color: "#1f77b4", dashed: false, points: rows.iter().map(|r| Some((r.s, r.a))).collect() }],
        hlines: vec![
            HLine { label: "+a_th", color: "magenta", y: a_th },
            HLine { label: "-a_th", color: "magenta", y: -a_th },
        ],
    }
    .render();
    let risk = Chart {
        title: &format!("{title}: risk ahead over route position"),
        x_label: "s [m]",
        y_label: "risk ahead",
        series: vec![Series {
            label: "risk",
            color: "#ff7f0e",
            dashed: false,
            points: rows.iter().map(|r| Some((r.s, r.risk_ahead))).collect(),
        }],
        hlines: vec![],
    }
    .render();
    [("v_s.svg", v_s), ("a_s.svg", a_s), ("risk_s.svg", risk)]
}
