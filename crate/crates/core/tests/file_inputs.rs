use std::fs;

use bola360::experiment::{run_experiment, ExperimentConfig};
use bola360::report::{read_json, read_rows_csv, write_json, write_rows_csv};
use bola360::Error;

fn write_inputs(dir: &std::path::Path) {
    fs::write(dir.join("lte.csv"), "time_s,bandwidth_mbps\n0,3.5\n12.5,0.8\n30,6\n").unwrap();
    let rows: Vec<&str> = (0..6).map(|k| if k % 2 == 0 { "0.6,0.3,0.1" } else { "0.2,0.5,0.3" }).collect();
    fs::write(dir.join("probs.csv"), rows.join("\n") + "\n").unwrap();
    let viewed: String = (1..=6).map(|k| format!("{k},{}\n", 1 + k % 3)).collect();
    fs::write(dir.join("viewed.csv"), format!("chunk_index,tile_index\n{viewed}")).unwrap();
}

const CONFIG: &str = r#"
[video]
num_chunks = 6
num_tiles = 3
sizes = [1.0, 2.0, 3.0]

[algo]
ids = ["bola360", "top-x", "dp-on"]

[[trace]]
kind = "file"
path = "lte.csv"

[head]
kind = "matrix"
path = "probs.csv"
viewed = "viewed.csv"

[run]
trials = 3
q_max = 8.0
"#;

#[test]
fn file_backed_experiment_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let path = dir.path().join("exp.toml");
    fs::write(&path, CONFIG).unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    cfg.validate().unwrap();
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.rows.len(), 9);
    assert!(out.rows.iter().all(|r| r.trace == "lte" && r.profile == "probs"));

    // A fixed viewed sequence makes every trial of an algorithm identical.
    for alg in ["bola360", "top-x", "dp-on"] {
        let qoes: Vec<f64> = out.rows.iter().filter(|r| r.algorithm == alg).map(|r| r.metrics.qoe).collect();
        assert!(qoes.windows(2).all(|w| w[0] == w[1]), "{alg}");
    }

    let mut csv = Vec::new();
    write_rows_csv(&out.rows, &mut csv).unwrap();
    let back = read_rows_csv(csv.as_slice()).unwrap();
    assert_eq!(back.len(), 9);
    let mut json = Vec::new();
    write_json(&out, &mut json).unwrap();
    assert_eq!(read_json(json.as_slice()).unwrap().rows, back);
}

#[test]
fn broken_inputs_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    fs::write(dir.path().join("lte.csv"), "time_s,bandwidth_mbps\n0,3\n0,4\n").unwrap();
    let path = dir.path().join("exp.toml");
    fs::write(&path, CONFIG).unwrap();
    let err = ExperimentConfig::load(&path).unwrap().validate().unwrap_err();
    assert!(err.is_config_error(), "{err}");

    fs::write(&path, CONFIG.replace("probs.csv", "missing.csv")).unwrap();
    write_inputs(dir.path());
    let err = ExperimentConfig::load(&path).unwrap().validate().unwrap_err();
    assert!(err.is_config_error(), "{err}");

    fs::write(&path, CONFIG.replace("q_max = 8.0", "q_max = 8.0\nbogus = 1")).unwrap();
    assert!(matches!(ExperimentConfig::load(&path), Err(Error::Config(_))));
}
