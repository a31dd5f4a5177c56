use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn idlewave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idlewave"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn manifest(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const HEADER: &str = r#"{"type":"header","format_version":1,"ranks":3,"cycles":3,"clock_hz":2100000000,"config_fingerprint":"0","source":"simulated"}"#;

fn write_trace(dir: &Path, name: &str, records: &[(u32, u64, &str, u64, u64)]) -> PathBuf {
    let mut text = format!("{HEADER}\n");
    for (rank, cycle, dir, start, end) in records {
        text.push_str(&format!(
            "{{\"type\":\"record\",\"rank\":{rank},\"cycle\":{cycle},\"peer\":null,\"dir\":\"{dir}\",\"start\":{start},\"end\":{end}}}\n"
        ));
    }
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn simulate_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.jsonl");
    let o = idlewave(&["simulate", "--config", s(&manifest("examples/fig1_delay.toml")), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.exists());
    let summary = stdout(&o);
    assert!(summary.contains("ranks 7") && summary.contains("records 240"), "{summary}");
}

#[test]
fn missing_config_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.toml");
    let o = idlewave(&["simulate", "--config", s(&missing), "--out", s(&dir.path().join("t.jsonl"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains(s(&missing)), "{}", stderr(&o));
}

#[test]
fn beskow_256_spans_eight_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("b.toml");
    std::fs::write(
        &cfg,
        "preset = \"beskow\"\nseed = 1\n[topology]\nranks = 256\ncores_per_socket = 1\nsockets_per_node = 1\n[app]\ncycles = 2\n",
    )
    .unwrap();
    let o = idlewave(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("t.jsonl"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("nodes 8"), "{}", stdout(&o));
}

#[test]
fn stats_prints_one_line_per_rank() {
    let dir = tempfile::tempdir().unwrap();
    let t = write_trace(
        dir.path(),
        "t.jsonl",
        &[(0, 0, "right", 0, 300), (1, 0, "left", 10, 110), (2, 0, "left", 20, 620)],
    );
    let o = idlewave(&["analyze", "stats", "--trace", s(&t)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    let got: Vec<(u64, f64, u64)> = lines
        .iter()
        .map(|v| {
            assert_eq!(v["type"], "rank_stats");
            (v["min_idle"].as_u64().unwrap(), v["mean_idle"].as_f64().unwrap(), v["max_idle"].as_u64().unwrap())
        })
        .collect();
    assert_eq!(got, vec![(300, 300.0, 300), (100, 100.0, 100), (600, 600.0, 600)]);
}

#[test]
fn waves_on_staircase_reports_one_front() {
    let dir = tempfile::tempdir().unwrap();
    let step = 20_000_000;
    let records: Vec<_> = (1..3u32)
        .map(|r| (r, 0, "left", u64::from(r) * step, u64::from(r) * step + 3_000_000))
        .chain(std::iter::once((0, 0, "right", 0, 3_000_000)))
        .collect();
    let t = write_trace(dir.path(), "t.jsonl", &records);
    let o = idlewave(&["analyze", "waves", "--trace", s(&t), "--window", "30000000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1, "{out}");
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["type"], "wave");
    assert_eq!(v["points"].as_array().unwrap().len(), 3);
}

#[test]
fn sync_below_min_periods_fails_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let o = idlewave(&["simulate", "--config", s(&manifest("examples/fig1_delay.toml")), "--out", s(&trace)]);
    assert!(o.status.success());
    let o = idlewave(&["analyze", "sync", "--trace", s(&trace), "--threshold", "1", "--time-bin", "100000", "--min-periods", "1000"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("low confidence"), "{}", stderr(&o));
}

#[test]
fn timelines_need_an_alignment() {
    let dir = tempfile::tempdir().unwrap();
    let t = write_trace(dir.path(), "t.jsonl", &[(0, 0, "right", 0, 3_000_000)]);
    let o = idlewave(&["render", "timelines", "--trace", s(&t), "--format", "ascii"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--shifts"), "{}", stderr(&o));
    let o = idlewave(&["render", "timelines", "--trace", s(&t), "--format", "ascii", "--shifts", "0:0,1:0", "--width", "16"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 2);
}

#[test]
fn ascii_goes_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let t = write_trace(dir.path(), "t.jsonl", &[(2, 0, "left", 0, 5_000_000)]);
    let o = idlewave(&["render", "heatmap", "--trace", s(&t), "--format", "ascii", "--width", "20", "--height", "16"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].contains('#') && !lines[1].contains('#') && !lines[2].contains('#'));
}

fn golden_heatmap(out: &Path) -> Output {
    idlewave(&[
        "render",
        "heatmap",
        "--trace",
        s(&manifest("../core/tests/golden/fig1.jsonl")),
        "--out",
        s(out),
        "--format",
        "ppm",
        "--time-bin",
        "500000",
        "--width",
        "64",
        "--height",
        "28",
        "--cores-per-socket",
        "2",
        "--sockets-per-node",
        "2",
    ])
}

#[test]
fn golden_heatmap_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig1.ppm");
    let o = golden_heatmap(&out);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::read(&out).unwrap() == std::fs::read(manifest("../core/tests/golden/fig1.ppm")).unwrap());
}

#[test]
fn reruns_overwrite_identically() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let stats = dir.path().join("stats.jsonl");
    let image = dir.path().join("h.svg");
    let csv = dir.path().join("t.csv");
    std::fs::write(&csv, "rank,cycle,peer,dir,start,end\n1,0,0,L,100,5000\n0,0,1,R,50,60\n").unwrap();
    let ingested = dir.path().join("i.jsonl");
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        let cfg = manifest("examples/fig1_delay.toml");
        assert!(idlewave(&["simulate", "--config", s(&cfg), "--out", s(&trace), "--seed", "4"]).status.success());
        assert!(idlewave(&["analyze", "stats", "--trace", s(&trace), "--out", s(&stats)]).status.success());
        assert!(idlewave(&["render", "heatmap", "--trace", s(&trace), "--out", s(&image), "--width", "32", "--height", "16"]).status.success());
        let o = idlewave(&["ingest", "--csv", s(&csv), "--clock-hz", "2000000000", "--ranks", "2", "--out", s(&ingested)]);
        assert!(o.status.success(), "{}", stderr(&o));
        snapshots.push([&trace, &stats, &image, &ingested].map(|p| std::fs::read(p).unwrap()));
    }
    assert!(snapshots[0] == snapshots[1]);
}
