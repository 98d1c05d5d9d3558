use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kasnerlab"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run_in(dir: &Path, cfg: &Path, extra: &[&str]) -> Output {
    bin().arg("--out-dir").arg(dir).args(extra).arg("run").arg(cfg).output().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn list_experiments_names_all_nine() {
    let out = bin().arg("list-experiments").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let names: Vec<&str> = text.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(
        names,
        ["kasner", "pulse", "constant", "mc-avg", "estimate", "bounds", "bianchi", "gbm", "stable-class"]
    );
}

#[test]
fn kasner_csv_holds_rolling_radii() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "k.cfg",
        "experiment = kasner\nseed = 1\ngrid.t_start = 0\ngrid.dt = 0.5\ngrid.n_steps = 8\n",
    );
    let out = run_in(dir.path(), &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("series.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["t", "quantity", "value", "path_id"]);
    let p = [-1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0];
    let mut seen = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let t: f64 = rec[0].parse().unwrap();
        if let Some(i) = rec[1].strip_prefix("a_") {
            let i: usize = i.parse().unwrap();
            let v: f64 = rec[2].parse().unwrap();
            let want = t.powf(p[i - 1]);
            assert!((v - want).abs() < 1e-12 * want.max(1.0), "a_{i}({t}) = {v}, want {want}");
            seen += 1;
        }
    }
    assert_eq!(seen, 3 * 8);
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(s["experiment"], "kasner");
    assert!(s["results"]["max_abs_h_residual"].as_f64().unwrap() < 1e-9);
    assert_eq!(s["reproducibility"]["seed"], 1);
    assert_eq!(s["reproducibility"]["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "m.cfg",
        "experiment = mc-avg\nseed = 99\nsize = 400\nn = 2\nmode = shared\n",
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run_in(&a, &cfg, &[]).status.success());
    assert!(run_in(&b, &cfg, &["--threads", "1"]).status.success());
    for f in ["series.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn zero_noise_average_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "z.cfg", "experiment = mc-avg\nsize = 200\nzeta = 0\n");
    let out = run_in(dir.path(), &cfg, &["--seed", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(s["results"]["averaging"]["analytic"].as_f64(), Some(0.0));
    assert_eq!(s["results"]["averaging"]["mc_mean"].as_f64(), Some(0.0));
    assert_eq!(s["config"]["seed"], "5");
}

#[test]
fn overrides_change_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "o.cfg", "experiment = kasner\nseed = 3\ngrid.t_start = 0\n");
    let out = run_in(dir.path(), &cfg, &["--override", "output.json=k.json", "--override", "n=3"]);
    assert!(out.status.success());
    let s = json(&dir.path().join("k.json"));
    assert_eq!(s["config"]["output.json"], "k.json");
}

#[test]
fn invalid_config_reports_json_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    for (text, needle) in [
        ("experiment = kasner\nseed = 1\nbogus = 2\n", "bogus"),
        ("experiment = kasner\n", "seed"),
        ("experiment = warp\nseed = 1\n", "warp"),
        ("experiment = mc-avg\nseed = 1\nsize = 10\n", "size"),
        ("experiment = kasner\nseed = 1\nkasner.p = 1, 1, 0.5\n", "kasner"),
    ] {
        let cfg = write_config(dir.path(), "bad.cfg", text);
        let out = run_in(dir.path(), &cfg, &[]);
        assert_eq!(out.status.code(), Some(2), "{text}");
        let err: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
        assert_eq!(err["error"]["kind"], "config");
        assert!(err["error"]["message"].as_str().unwrap().contains(needle), "{err}");
    }
    let out = bin().arg("run").arg(dir.path().join("missing.cfg")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    serde_json::from_slice::<Value>(&out.stderr).unwrap();
}

fn verify(dir: &Path, text: &str, extra: &[&str]) -> (Output, Vec<u8>) {
    let cfg = write_config(dir, "v.cfg", text);
    let out = bin().arg("--out-dir").arg(dir).args(extra).arg("verify").arg(&cfg).output().unwrap();
    (out, fs::read(dir.join("verify.json")).unwrap())
}

#[test]
fn verify_passes_and_is_deterministic() {
    let text = "experiment = mc-avg\nseed = 11\nverify.checks = 1, 5, 6, 13\nverify.scale = 0.02\n";
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (oa, ja) = verify(a.path(), text, &[]);
    let (ob, jb) = verify(b.path(), text, &["--threads", "1"]);
    assert!(oa.status.success(), "{}", String::from_utf8_lossy(&oa.stdout));
    assert!(ob.status.success());
    assert_eq!(ja, jb);
    let stdout = String::from_utf8(oa.stdout).unwrap();
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]")).count(), 4);
    let s: Value = serde_json::from_slice(&ja).unwrap();
    assert_eq!(s["passed"], true);
}

#[test]
fn verify_catches_corrupted_constant() {
    let dir = tempfile::tempdir().unwrap();
    let text = "experiment = mc-avg\nseed = 11\nverify.checks = 6\nverify.scale = 0.1\nverify.corrupt_lambda = true\n";
    let (out, body) = verify(dir.path(), text, &[]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("[FAIL] 06"), "{stdout}");
    assert!(stdout.contains("checks failed: 06"));
    let s: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(s["failed"], serde_json::json!([6]));
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in fs::read_dir(root).unwrap() {
        let p = entry.unwrap().path();
        let text = fs::read_to_string(&p).unwrap();
        let cfg = kasnerlab_cli::ExperimentConfig::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(p.file_stem().unwrap().to_str().unwrap(), cfg.experiment.name());
        count += 1;
    }
    assert_eq!(count, 9);
}
