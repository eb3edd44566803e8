use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bola360-lab"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_accepts_shipped_configs() {
    for name in ["benchmark.toml", "buffer_study.toml", "tiny_oracle.toml"] {
        let o = run(&["validate", configs().join(name).to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(stdout(&o).trim(), "ok");
    }
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(run(&["validate", missing.to_str().unwrap()]).status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[video]\nnum_chunks = 0\nnum_tiles = 2\npreset = \"small\"\n[algo]\nids = [\"bola360\"]\n[[trace]]\nkind = \"constant\"\nmbps = 5.0\n[head]\nkind = \"uniform\"\n[run]\nq_max = 6.0\n").unwrap();
    let o = run(&["run", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let unknown = dir.path().join("unknown.toml");
    fs::write(&unknown, fs::read_to_string(configs().join("tiny_oracle.toml")).unwrap().replace("bola360\"", "bola999\"")).unwrap();
    assert_eq!(run(&["validate", unknown.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn oracle_cap_is_a_runtime_error() {
    let o = run(&["oracle", configs().join("benchmark.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn oracle_prints_bound() {
    let o = run(&["oracle", configs().join("tiny_oracle.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("bound,t0,states_visited,peak_states"));
    let bound: f64 = lines.next().unwrap().split(',').next().unwrap().parse().unwrap();
    assert_eq!(bound, 2.57465);
}

#[test]
fn run_is_byte_identical_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("tiny_oracle.toml");
    let mut outputs = Vec::new();
    for i in 0..2 {
        let csv = dir.path().join(format!("r{i}.csv"));
        let json = dir.path().join(format!("r{i}.json"));
        let a = run(&["run", cfg.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
        let b = run(&["run", cfg.to_str().unwrap(), "--out", json.to_str().unwrap(), "--format", "json"]);
        assert_eq!((a.status.code(), b.status.code()), (Some(0), Some(0)));
        let summary = dir.path().join(format!("r{i}_summary.csv"));
        let cdf = dir.path().join(format!("r{i}_cdf.csv"));
        outputs.push([fs::read(&csv).unwrap(), fs::read(&json).unwrap(), fs::read(summary).unwrap(), fs::read(cdf).unwrap()]);
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv = String::from_utf8(outputs[0][0].clone()).unwrap();
    assert!(csv.starts_with("algorithm,trace,profile,trial,seed,qoe,"));
    assert_eq!(csv.lines().count(), 1 + 3 * 5);
    assert!(String::from_utf8_lossy(&outputs[0][1]).contains("\"schema_version\": 1"));
}

#[test]
fn run_writes_csv_to_stdout_by_default() {
    let o = run(&["run", configs().join("tiny_oracle.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 16);
}

#[test]
fn gen_trace_round_trips_through_a_config() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("sq.csv");
    let o = run(&["gen-trace", "--kind", "square", "--low", "1", "--high", "4", "--period", "10", "--duration", "30", "--out", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("time_s,bandwidth_mbps"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows, ["0,1", "5,4", "10,1", "15,4", "20,1", "25,4"]);

    let cfg = dir.path().join("exp.toml");
    let base = fs::read_to_string(configs().join("tiny_oracle.toml")).unwrap();
    let start = base.find("[[trace]]").unwrap();
    let end = base.find("[head]").unwrap();
    let text = format!("{}[[trace]]\nkind = \"file\"\npath = \"sq.csv\"\n\n{}", &base[..start], &base[end..]);
    fs::write(&cfg, text).unwrap();
    let o = run(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).lines().skip(1).all(|l| l.split(',').nth(1) == Some("sq")));
}

#[test]
fn gen_trace_rejects_bad_shape() {
    let o = run(&["gen-trace", "--kind", "square", "--period", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gen_profiles_lists_twelve_rows() {
    let o = run(&["gen-profiles", "--tiles", "8"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 13);
    assert_eq!(lines[0], "profile,positive_tiles,alpha,p1,p2,p3,p4,p5,p6,p7,p8");
    assert_eq!(lines[1], "1,8,0,0.125,0.125,0.125,0.125,0.125,0.125,0.125,0.125");
    assert!(lines[12].starts_with("12,2,0.5,"));
    assert!(lines[12].ends_with(",0,0,0,0,0,0"));
    assert_eq!(run(&["gen-profiles", "--tiles", "4"]).status.code(), Some(2));
}
