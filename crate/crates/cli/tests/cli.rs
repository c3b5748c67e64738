use std::path::Path;
use std::process::{Command, Output};

fn beamtrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamtrack"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn run_to(config: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", config, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    beamtrack(&args)
}

fn files_under(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

const SINGLE: &str = r#"
horizon = 12
seeds = [7]
speeds = ["slow"]

[[policies]]
name = "spline"
kind = "spline"
phi = 0.25
"#;

const SMALL: &str = r#"
horizon = 30
seeds = [1, 2, 3]
speeds = ["slow", "fast"]

[[policies]]
name = "bo"
kind = "bayes_opt"
[policies.bayes_opt]
mc_samples = 256
snapshot_slots = [0, 20]

[[policies]]
name = "rand"
kind = "random_subset"
match_overhead_of = "bo"

[[policies]]
name = "oracle"
kind = "oracle_full_sweep"
"#;

#[test]
fn one_cell_gives_one_row_and_one_episode_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SINGLE);
    let out = dir.path().join("run");
    let o = run_to(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 2);
    assert!(results
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("spline,spline,slow,30,1,0,"));
    let episodes: Vec<_> = std::fs::read_dir(out.join("episodes")).unwrap().collect();
    assert_eq!(episodes.len(), 1);
    let csv = std::fs::read_to_string(out.join("episodes/spline__slow__seed7.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
    assert_eq!(
        std::fs::read_to_string(out.join("config.toml")).unwrap(),
        SINGLE
    );
}

#[test]
fn reruns_are_byte_identical_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run_to(&cfg, &a, &["--parallelism", "1"]).status.success());
    assert!(run_to(&cfg, &b, &["--parallelism", "3"]).status.success());
    assert_eq!(files_under(&a), files_under(&b));

    let v = beamtrack(&["verify", a.to_str().unwrap()]);
    assert!(v.status.success(), "{}", String::from_utf8_lossy(&v.stderr));

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([1, 2, 3]));
    assert_eq!(manifest["horizon"], 30);
    assert_eq!(manifest["episodes"].as_array().unwrap().len(), 18);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn seed_offset_shifts_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SINGLE);
    let out = dir.path().join("run");
    assert!(run_to(&cfg, &out, &["--seed-offset", "100"])
        .status
        .success());
    assert!(out.join("episodes/spline__slow__seed107.csv").exists());
}

#[test]
fn verify_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SINGLE);
    let out = dir.path().join("run");
    assert!(run_to(&cfg, &out, &[]).status.success());
    let path = out.join("episodes/spline__slow__seed7.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut cells: Vec<String> = lines[5].split(',').map(str::to_string).collect();
    cells[1] = if cells[1] == "64" {
        "1".into()
    } else {
        "64".into()
    };
    lines[5] = cells.join(",");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let v = beamtrack(&["verify", out.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&v.stderr).contains("results.csv differs"));
}

#[test]
fn config_errors_exit_2_with_a_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SINGLE.replace("phi = 0.25", "phi = -1.0"));
    let o = run_to(&cfg, &dir.path().join("run"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("exp.toml:9:"), "{err}");

    let cfg = write_config(
        dir.path(),
        "horizon = 5\nseeds = [1]\n[[policies]]\nname = \"x\"\nkind = \"magic\"\n",
    );
    let o = run_to(&cfg, &dir.path().join("run"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("exp.toml:5:"));
}

#[test]
fn plots_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    assert!(run_to(&cfg, &out, &[]).status.success());
    let run = out.to_str().unwrap();

    let o = beamtrack(&["plot-convergence", run]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for v in ["bo", "rand", "oracle"] {
        let svg = std::fs::read_to_string(out.join(format!("plots/convergence_{v}.svg"))).unwrap();
        assert!(svg.contains("<svg") && svg.contains("overhead"));
    }

    let o = beamtrack(&[
        "plot-landscape",
        run,
        "--slots",
        "0",
        "20",
        "--speed",
        "slow",
        "--seed",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out
        .join("plots/landscape_bo__slow__seed2_slot0.svg")
        .exists());
    assert!(out
        .join("plots/landscape_bo__slow__seed2_slot20.svg")
        .exists());

    let curves = beamtrack_cli::plot::convergence_curves(&out).unwrap();
    for c in curves.iter().filter(|c| c.variant == "oracle") {
        assert!(c.overhead.iter().all(|&o| o == 1.0));
    }

    let snaps =
        beamtrack_cli::plot::load_snapshots(&out.join("snapshots/bo__slow__seed2.json")).unwrap();
    let rows = beamtrack_cli::records::read_episode_csv(&out.join("episodes/bo__slow__seed2.csv"))
        .unwrap();
    assert_eq!(
        snaps.iter().map(|s| s.slot).collect::<Vec<_>>(),
        vec![0, 20]
    );
    assert!(snaps[0]
        .posterior_mean
        .iter()
        .all(|&m| m == snaps[0].posterior_mean[0]));
    for s in &snaps {
        let argmax = (0..s.true_rsrp_db.len())
            .max_by(|&a, &b| {
                s.true_rsrp_db[a]
                    .total_cmp(&s.true_rsrp_db[b])
                    .then(b.cmp(&a))
            })
            .unwrap();
        assert_eq!(argmax, s.true_best);
        assert_eq!(s.true_best, rows[s.slot as usize].true_best);
    }

    let o = beamtrack(&["plot-landscape", run, "--slots", "3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("slot 3 was not logged"));
}

#[test]
fn shipped_example_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/example.toml");
    let cfg = beamtrack_cli::ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.seeds.len(), 50);
    assert_eq!(cfg.horizon, 500);
    assert_eq!(cfg.variants.len(), 7);
}
