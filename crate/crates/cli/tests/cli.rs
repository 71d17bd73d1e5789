use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use occlusion_core::parse_scenario;
use occlusion_core::sim::{run_batch, MethodVariant, SimConfig};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(format!("{name}.json"))
}

fn occsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_occsim")).args(args).output().expect("spawn occsim")
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("occsim-test-{}-{tag}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().to_string()).collect()
}

fn peak_abs_accel(trace: &str) -> f64 {
    column(trace, "a").iter().map(|a| a.parse::<f64>().unwrap().abs()).fold(0.0, f64::max)
}

#[test]
fn free_road_run_writes_trace_and_plots() {
    let out = scratch("free");
    let o = occsim(&["run", "--scenario", fixture("free_road").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,s,v,a,active_limit,risk_ahead\n"));
    let s: Vec<f64> = column(&trace, "s").iter().map(|v| v.parse().unwrap()).collect();
    assert!(s.len() > 10);
    assert!(s.windows(2).all(|w| w[1] >= w[0]));
    for f in ["metrics.csv", "v_s.svg", "a_s.svg", "risk_s.svg"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let a_s = fs::read_to_string(out.join("a_s.svg")).unwrap();
    assert!(a_s.starts_with("<svg") && a_s.contains("magenta"));
}

#[test]
fn outputs_are_reproducible() {
    let (a, b) = (scratch("rep-a"), scratch("rep-b"));
    for dir in [&a, &b] {
        let o = occsim(&[
            "run",
            "--scenario",
            fixture("t_junction").to_str().unwrap(),
            "--variant",
            "proposed",
            "--seed",
            "11",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    for f in ["trace.csv", "v_s.svg", "a_s.svg", "risk_s.svg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn invalid_scenario_exits_2_with_line() {
    let dir = scratch("bad");
    fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.json");
    fs::write(&bad, "{\n  \"schema\": 1,\n  \"lanes\": [oops]\n}\n").unwrap();
    let o = occsim(&["run", "--scenario", bad.to_str().unwrap(), "--out", dir.join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");

    let missing = occsim(&["run", "--scenario", dir.join("nope.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn proposed_brakes_more_gently_than_baseline1() {
    let mut peaks = Vec::new();
    for variant in ["proposed", "baseline1"] {
        let out = scratch(variant);
        let o = occsim(&[
            "run",
            "--scenario",
            fixture("four_way_blind").to_str().unwrap(),
            "--variant",
            variant,
            "--seed",
            "1",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        peaks.push(peak_abs_accel(&fs::read_to_string(out.join("trace.csv")).unwrap()));
    }
    assert!(peaks[0] < peaks[1], "{peaks:?}");
}

#[test]
fn compare_tables_match_batch_aggregates() {
    let out = scratch("cmp");
    let path = fixture("truck_side_road");
    let o = occsim(&["compare", "--scenario", path.to_str().unwrap(), "--runs", "2", "--seed", "5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("table1.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert_eq!(column(&table, "variant"), ["proposed", "baseline1", "baseline3"]);
    assert_eq!(fs::read_to_string(out.join("table2.csv")).unwrap().lines().count(), 4);
    assert_eq!(fs::read_to_string(out.join("metrics.csv")).unwrap().lines().count(), 7);

    let scn = parse_scenario(&fs::read_to_string(&path).unwrap()).unwrap();
    let collision = column(&table, "collision_rate");
    let discomfort = column(&table, "discomfort");
    let traversal = column(&table, "traversal_time");
    let freeze = column(&table, "freeze_rate");
    for (i, variant) in MethodVariant::ALL.into_iter().enumerate() {
        let a = run_batch(&scn, variant, 2, 5, SimConfig::default()).aggregate;
        assert_eq!(collision[i], format!("{:.4}", a.collision_rate));
        assert_eq!(discomfort[i], format!("{:.6}", a.mean_discomfort));
        assert_eq!(traversal[i], format!("{:.4}", a.mean_traversal_time));
        assert_eq!(freeze[i], format!("{:.4}", a.freeze_rate));
    }
}

#[test]
fn compare_rejects_zero_runs() {
    let o = occsim(&["compare", "--scenario", fixture("free_road").to_str().unwrap(), "--runs", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_reports_both_timings_for_each_severity() {
    let out = scratch("bench");
    let o = occsim(&[
        "bench",
        "--scenario",
        fixture("free_road").to_str().unwrap(),
        "--iterations",
        "100",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let csv = fs::read_to_string(out.join("bench.csv")).unwrap();
    assert_eq!(column(&csv, "mode").iter().filter(|m| *m == "with_visibility").count(), 3);
    assert_eq!(column(&csv, "mode").iter().filter(|m| *m == "assessment_only").count(), 3);
    for m in column(&csv, "mean_ms") {
        assert!(m.parse::<f64>().unwrap() > 0.0);
    }

    let too_few = occsim(&["bench", "--scenario", fixture("free_road").to_str().unwrap(), "--iterations", "10"]);
    assert_eq!(too_few.status.code(), Some(2));
}
