mod plot;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use occlusion_core::assessment::AssessmentConfig;
use occlusion_core::bench::{bench_cycle, scale_occlusion};
use occlusion_core::sim::{run_batch, run_seed, simulate, trace_csv, MethodVariant, SimConfig};
use occlusion_core::{parse_scenario, ScenarioConfig};

use report::ComparisonRow;

/// Occlusion-aware driving scenarios: single runs, variant comparisons and
/// assessment timing.
#[derive(Parser)]
#[command(name = "occsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one seeded run and write its trace, metrics and plots.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "proposed")]
        variant: MethodVariant,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "occsim-out")]
        out: PathBuf,
    },
    /// Run every variant on every scenario and tabulate the outcomes.
    Compare {
        #[arg(long = "scenario", required = true, num_args = 1..)]
        scenarios: Vec<PathBuf>,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "occsim-out")]
        out: PathBuf,
    },
    /// Time the perception-to-directive cycle, with an occlusion sweep.
    Bench {
        #[arg(long = "scenario", required = true, num_args = 1..)]
        scenarios: Vec<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure classes with distinct exit codes.
enum Failure {
    /// Unreadable or invalid input (exit 2).
    Input(anyhow::Error),
    /// Simulation or output failure (exit 3).
    Run(anyhow::Error),
}

type Outcome = Result<(), Failure>;

fn input<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Input)
}

fn running<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Run)
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = input(fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())))?;
    input(parse_scenario(&text).with_context(|| format!("{}", path.display())))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    running(fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display())))
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    running(fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display())))
}

fn cmd_run(scenario: &Path, variant: MethodVariant, seed: u64, out: &Path) -> Outcome {
    let scn = load(scenario)?;
    let result = simulate(&scn, variant, seed, SimConfig::default());
    if !result.metrics.traversal_time.is_finite() || !result.metrics.discomfort.is_finite() {
        return Err(Failure::Run(anyhow!("simulation produced non-finite metrics")));
    }
    prepare_out(out)?;
    let csv = trace_csv(&result.trace);
    write(out, "trace.csv", &csv)?;
    write(
        out,
        "metrics.csv",
        &format!("{}\n{}\n", report::METRICS_HEADER, report::metrics_row(&scn.name, variant, 0, seed, &result.metrics)),
    )?;
    // plots are drawn from the CSV as written, never from in-memory state
    let rows = running(report::parse_trace(&csv))?;
    for (name, svg) in report::trace_plots(&rows, &format!("{} / {variant}", scn.name), scn.params.a_th) {
        write(out, name, &svg)?;
    }
    let m = &result.metrics;
    println!(
        "{} {variant} seed={seed}: collided={} froze={} reached_goal={} traversal={:.2}s discomfort={:.4} peak|a|={:.2}",
        scn.name, m.collided, m.froze, m.reached_goal, m.traversal_time, m.discomfort, m.peak_abs_accel
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_compare(paths: &[PathBuf], runs: usize, seed: u64, out: &Path) -> Outcome {
    if runs == 0 {
        return Err(Failure::Input(anyhow!("--runs must be at least 1")));
    }
    let scenarios = paths.iter().map(|p| load(p)).collect::<Result<Vec<_>, _>>()?;
    prepare_out(out)?;
    let mut rows = Vec::new();
    let mut metrics = String::from(report::METRICS_HEADER);
    metrics.push('\n');
    for scn in &scenarios {
        for variant in MethodVariant::ALL {
            let batch = run_batch(scn, variant, runs, seed, SimConfig::default());
            for (i, m) in batch.runs.iter().enumerate() {
                metrics.push_str(&report::metrics_row(&scn.name, variant, i, run_seed(seed, i), m));
                metrics.push('\n');
            }
            rows.push(ComparisonRow { scenario: scn.name.clone(), variant, aggregate: batch.aggregate });
        }
    }
    let text = report::table1_text(&rows);
    write(out, "metrics.csv", &metrics)?;
    write(out, "table1.csv", &report::table1_csv(&rows))?;
    write(out, "table1.txt", &text)?;
    write(out, "table2.csv", &report::table2_csv(&rows))?;
    print!("{text}");
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_bench(paths: &[PathBuf], iterations: usize, out: Option<&Path>) -> Outcome {
    if iterations < 100 {
        return Err(Failure::Input(anyhow!("--iterations must be at least 100")));
    }
    let scenarios = paths.iter().map(|p| load(p)).collect::<Result<Vec<_>, _>>()?;
    let cfg = AssessmentConfig::default();
    let mut csv = String::from(report::BENCH_HEADER);
    csv.push('\n');
    let mut table = Vec::new();
    for scn in &scenarios {
        let mut base_mean = None;
        for severity in [1.0, 2.0, 4.0] {
            let scaled = scale_occlusion(scn, severity);
            let t = bench_cycle(&scaled, &scaled.params, &cfg, iterations);
            for line in report::bench_rows(&scn.name, severity, iterations, &t) {
                csv.push_str(&line);
                csv.push('\n');
            }
            let base = *base_mean.get_or_insert(t.with_visibility.mean_ms);
            table.push(vec![
                scn.name.clone(),
                format!("x{severity}"),
                format!("{:.3}", t.with_visibility.mean_ms),
                format!("{:.3}", t.with_visibility.median_ms),
                format!("{:.3}", t.with_visibility.p99_ms),
                format!("{:.3}", t.assessment_only.mean_ms),
                format!("{:.2}", t.with_visibility.mean_ms / base.max(1e-12)),
            ]);
        }
    }
    print!(
        "{}",
        report::aligned(&["scenario", "severity", "mean_ms", "median_ms", "p99_ms", "no_vis_mean_ms", "vs_x1"], &table)
    );
    if let Some(dir) = out {
        prepare_out(dir)?;
        write(dir, "bench.csv", &csv)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { scenario, variant, seed, out } => cmd_run(scenario, *variant, *seed, out),
        Command::Compare { scenarios, runs, seed, out } => cmd_compare(scenarios, *runs, *seed, out),
        Command::Bench { scenarios, iterations, out } => cmd_bench(scenarios, *iterations, out.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
