use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn noisytree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noisytree"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = noisytree(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const CHAIN7: &str = r#"
seed = 3
trials = 4
sample_sizes = [2000, 20000]

[model]
family = "perturbed"
shape = ["chain", "star"]
n = 7
k = 4
distance = [0.7]
delta = [0.0, 0.04]

[noise]
rule = "uniform"
q_max = [0.2]
"#;

const STAR12: &str = r#"
seed = 11
trials = 1
sample_sizes = [1000]

[model]
family = "symmetric"
shape = ["star"]
n = 12
k = 2
distance = [0.8]

[noise]
rule = "alternate"
q_max = [0.2]
"#;

#[test]
fn gen_model_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "star.toml", STAR12);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["gen-model", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["gen-model", "--config", s(&cfg), "--out", s(&b)]);
    let model = fs::read_to_string(a.join("model.json")).unwrap();
    assert_eq!(model, fs::read_to_string(b.join("model.json")).unwrap());
    let edges = fs::read_to_string(a.join("edges.txt")).unwrap();
    assert_eq!(edges.lines().count(), 11);
    assert!(edges.lines().all(|l| l.starts_with("0 ")));
    let stamp = fs::read_to_string(a.join("run.toml")).unwrap();
    assert!(stamp.contains("git_describe") && stamp.contains("[config.model]"));
}

#[test]
fn random_shape_depends_only_on_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "r.toml",
        &CHAIN7.replace(r#"["chain", "star"]"#, r#"["random"]"#),
    );
    let run = |seed: &str, out: &str| {
        let o = dir.path().join(out);
        ok(&[
            "gen-model",
            "--config",
            s(&cfg),
            "--seed",
            seed,
            "--out",
            s(&o),
        ]);
        fs::read_to_string(o.join("edges.txt")).unwrap()
    };
    assert_eq!(run("5", "a"), run("5", "b"));
}

#[test]
fn population_pipeline_on_a_symmetric_chain() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        &STAR12
            .replace(r#"["star"]"#, r#"["chain"]"#)
            .replace("n = 12", "n = 8"),
    );
    let g = dir.path().join("g");
    ok(&["gen-model", "--config", s(&cfg), "--out", s(&g)]);
    let r = dir.path().join("r");
    let stdout = ok(&[
        "recover",
        "--model",
        s(&g.join("model.json")),
        "--noise",
        s(&g.join("noise.json")),
        "--exact-pmf",
        "--out",
        s(&r),
    ]);
    let row = stdout.lines().nth(1).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[0], "ours");
    assert_eq!(fields[5], "true", "{row}");
    assert!(r.join("structure.json").exists());
}

#[test]
fn sampled_pipeline_and_baseline() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.toml", CHAIN7);
    let g = dir.path().join("g");
    ok(&["gen-model", "--config", s(&cfg), "--out", s(&g)]);
    let sm = dir.path().join("s");
    ok(&[
        "sample",
        "--model",
        s(&g.join("model.json")),
        "--noise",
        s(&g.join("noise.json")),
        "-n",
        "5000",
        "--seed",
        "9",
        "--csv",
        "--out",
        s(&sm),
    ]);
    let csv = fs::read_to_string(sm.join("samples.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.is_empty()).count(), 5001);
    for cmd in ["recover", "chowliu"] {
        let out = dir.path().join(cmd);
        let stdout = ok(&[
            cmd,
            "--model",
            s(&g.join("model.json")),
            "--noise",
            s(&g.join("noise.json")),
            "--samples",
            s(&sm.join("samples.bin")),
            "--out",
            s(&out),
        ]);
        assert!(
            stdout.lines().nth(1).unwrap().contains(",7,4,5000,"),
            "{stdout}"
        );
        assert_eq!(
            fs::read_to_string(out.join("edges.txt"))
                .unwrap()
                .lines()
                .count(),
            6
        );
    }
}

const PAIR_MODEL: &str = r#"{"k": 2, "root": 0, "root_marginal": [0.5, 0.5], "edges": [[0, 1]],
  "conditionals": {"0-1": [0.8, 0.2, 0.2, 0.8]}}"#;

#[test]
fn two_nodes_give_a_single_edge() {
    let dir = TempDir::new().unwrap();
    let m = write(dir.path(), "m.json", PAIR_MODEL);
    let out = dir.path().join("r");
    ok(&["recover", "--model", s(&m), "--exact-pmf", "--out", s(&out)]);
    assert_eq!(fs::read_to_string(out.join("edges.txt")).unwrap(), "0 1\n");
}

#[test]
fn independent_node_exits_with_recovery_failure() {
    let dir = TempDir::new().unwrap();
    // node 0 independent of nodes 1 and 2, which always agree
    let mut bytes = b"NTSM".to_vec();
    bytes.extend(4u64.to_le_bytes());
    bytes.extend(3u32.to_le_bytes());
    bytes.extend(2u32.to_le_bytes());
    bytes.extend([0, 0, 0, 0, 1, 1, 1, 0, 0, 1, 1, 1]);
    let samples = dir.path().join("s.bin");
    fs::write(&samples, bytes).unwrap();
    let out = noisytree(&[
        "recover",
        "--samples",
        s(&samples),
        "--d-min",
        "0.1",
        "--d-max",
        "2",
        "--out",
        s(&dir.path().join("r")),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn config_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let zero = write(
        dir.path(),
        "z.toml",
        &CHAIN7.replace("trials = 4", "trials = 0"),
    );
    let unknown = write(dir.path(), "u.toml", &format!("bogus = 1\n{CHAIN7}"));
    for cfg in [&zero, &unknown, &dir.path().join("missing.toml")] {
        let out = noisytree(&[
            "sweep",
            "--config",
            s(cfg),
            "--out",
            s(&dir.path().join("o")),
        ]);
        assert_eq!(out.status.code(), Some(2));
    }
    let out = noisytree(&["recover", "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_is_bit_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.toml", CHAIN7);
    let run = |threads: &str, out: &str| {
        let o = dir.path().join(out);
        ok(&[
            "--threads",
            threads,
            "sweep",
            "--config",
            s(&cfg),
            "--out",
            s(&o),
        ]);
        fs::read_to_string(o.join("sweep.csv")).unwrap()
    };
    let one = run("1", "one");
    assert_eq!(one, run("4", "four"));
    let header = one.lines().next().unwrap();
    assert!(
        header.starts_with("setting,N,fraction_exact,fraction_eq_class,algorithm"),
        "{header}"
    );
    // 4 settings x 2 sizes x 2 algorithms
    assert_eq!(one.lines().count(), 1 + 16);
    let trials = fs::read_to_string(dir.path().join("one/trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 1 + 4 * 4 * 2 * 2);
}

#[test]
fn exact_pmf_sweep_has_one_size() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.toml", CHAIN7);
    let o = dir.path().join("o");
    ok(&["sweep", "--config", s(&cfg), "--exact-pmf", "--out", s(&o)]);
    let csv = fs::read_to_string(o.join("sweep.csv")).unwrap();
    assert!(csv
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(1) == Some("0")));
}

#[test]
fn file_family_resolves_relative_paths() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "pair.json", PAIR_MODEL);
    let cfg = write(
        dir.path(),
        "f.toml",
        "trials = 2\nsample_sizes = [500]\n[model]\nfamily = \"file\"\nfile = \"pair.json\"\n[noise]\nrule = \"alternate\"\nq_max = [0.1]\n",
    );
    let o = dir.path().join("o");
    ok(&["sweep", "--config", s(&cfg), "--out", s(&o)]);
    assert!(fs::read_to_string(o.join("sweep.csv"))
        .unwrap()
        .contains("file_q0.1,500,"));
}

#[test]
fn identifiability_phase_map() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "i.toml",
        "k = [3, 5]\nalpha = [0.6]\ndelta = [0.0, 0.1]\nq = [0.1]\n",
    );
    let o = dir.path().join("o");
    ok(&["identifiability", "--config", s(&cfg), "--out", s(&o)]);
    let csv = fs::read_to_string(o.join("identifiability.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 8);
    for r in &rows {
        let leaf = r[col("center_role")] == "leaf";
        let expect = !(leaf && r[col("k")] == "5" && r[col("delta")] == "0.1");
        assert_eq!(r[col("feasible")] == "true", expect, "{r:?}");
        if !expect {
            let min: f64 = r[col("min_residual")].parse().unwrap();
            let bound: f64 = r[col("lower_bound")].parse().unwrap();
            assert!(min >= bound - 1e-9);
        }
    }
}
