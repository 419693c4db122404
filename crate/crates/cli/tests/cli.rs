use coulomb_cli::config::RunConfig;
use coulomb_cli::manifest::RunManifest;
use sha2::{Digest, Sha256};
use std::path::Path;
use std::process::{Command, Output};

fn coulomb(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coulomb"))
        .args(args)
        .current_dir(cwd)
        .env_remove("COULOMB_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn data_files(run: &Path) -> Vec<(String, Vec<u8>)> {
    let m = RunManifest::load(run).unwrap();
    m.files
        .iter()
        .map(|a| (a.path.clone(), std::fs::read(run.join(&a.path)).unwrap()))
        .collect()
}

const SAMPLE: &str = "command = 'sample'\nn = 64\nc = 4.0\nseeds = 4\nsweeps = 200\n";

#[test]
fn sample_writes_configs_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", SAMPLE);
    let out = coulomb(&["--config", &cfg, "--out", "run"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = tmp.path().join("run");
    let m = RunManifest::load(&run).unwrap();
    assert!(m.complete && m.error.is_none());
    assert_eq!(m.command, "sample");
    let configs: Vec<_> = m.files.iter().filter(|a| a.path.starts_with("configs/")).collect();
    assert_eq!(configs.len(), 4);
    // every file on disk is listed with a matching checksum
    for a in &m.files {
        let bytes = std::fs::read(run.join(&a.path)).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&bytes)), a.sha256, "{}", a.path);
        assert_eq!(bytes.len() as u64, a.bytes);
    }
    let on_disk = walk(&run);
    assert_eq!(on_disk.len(), m.files.len() + 1, "{on_disk:?}");
    assert_eq!(m.config_hash, RunConfig::parse(SAMPLE).unwrap().hash());
}

fn walk(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p.display().to_string());
        }
    }
    out
}

#[test]
fn runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", SAMPLE);
    assert!(coulomb(&["--config", &cfg, "--out", "a", "--threads", "1"], tmp.path())
        .status
        .success());
    assert!(coulomb(&["--config", &cfg, "--out", "b", "--threads", "3"], tmp.path())
        .status
        .success());
    let a = data_files(&tmp.path().join("a"));
    let b = data_files(&tmp.path().join("b"));
    assert!(!a.is_empty());
    assert_eq!(a, b);
    // a seed offset changes the draws
    assert!(
        coulomb(&["--config", &cfg, "--out", "c", "--seed-offset", "10"], tmp.path())
            .status
            .success()
    );
    let c = data_files(&tmp.path().join("c"));
    assert!(c.iter().any(|(p, _)| p.contains("_s10.json")));
}

#[test]
fn unknown_keys_are_listed_with_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", &format!("{SAMPLE}temprature = 3\nsweps = 10\n"));
    let out = coulomb(&["--config", &cfg, "--out", "run"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("temprature") && err.contains("sweps"), "{err}");
    assert!(!tmp.path().join("run").exists());
}

#[test]
fn failures_leave_incomplete_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    // no closed-form droplet: unsupported input
    let cfg = write(
        tmp.path(),
        "c.toml",
        "command = 'concentrate'\nn = 16\n[potential]\nkind = 'harmonic'\np = 2\nt = 1.0\nd = 2\n",
    );
    let out = coulomb(&["--config", &cfg, "--out", "run"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let m = RunManifest::load(&tmp.path().join("run")).unwrap();
    assert!(!m.complete && m.error.is_some());
    // the Krylov basis would not fit in memory: numerical failure
    let cfg = write(
        tmp.path(),
        "k.toml",
        "command = 'kernel'\nn = 400\n[potential]\nkind = 'harmonic'\np = 1\nt = 0.95\nd = 2\n",
    );
    let out = coulomb(&["--config", &cfg, "--out", "run2"], tmp.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!RunManifest::load(&tmp.path().join("run2")).unwrap().complete);
}

#[test]
fn verify_all_suites_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "v.toml", "command = 'verify'\nsuite = 'all'\n");
    let out = coulomb(&["--config", &cfg, "--out", "run"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("run/verify.json")).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["suites"].as_array().unwrap().len(), 6);
}

#[test]
fn init_templates_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    for c in ["sample", "fekete", "kernel", "concentrate", "verify", "stats", "report"] {
        let out = coulomb(&["init", c], tmp.path());
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        let cfg = RunConfig::parse(&text).unwrap();
        assert_eq!(RunConfig::parse(&cfg.emit()).unwrap(), cfg);
    }
}

#[test]
fn default_output_root_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "v.toml", "command = 'verify'\nsuite = 'special'\n");
    let out = Command::new(env!("CARGO_BIN_EXE_coulomb"))
        .args(["--config", &cfg])
        .current_dir(tmp.path())
        .env("COULOMB_OUT_DIR", tmp.path().join("root"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let hash = RunConfig::parse("command = 'verify'\nsuite = 'special'\n")
        .unwrap()
        .hash();
    assert!(tmp
        .path()
        .join("root")
        .join(format!("verify-{}", &hash[..12]))
        .join("manifest.json")
        .exists());
}

#[test]
fn stats_and_report_over_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let f = write(tmp.path(), "f.toml", "command = 'fekete'\nn_grid = [48, 96]\n");
    assert!(coulomb(&["--config", &f, "--out", "fek"], tmp.path()).status.success());
    let s = write(
        tmp.path(),
        "s.toml",
        "command = 'stats'\ninputs = ['fek']\nl_grid = [2.0, 3.0, 4.0]\ngamma = 0.2\n",
    );
    let out = coulomb(&["--config", &s, "--out", "st"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "spacing.csv",
        "density.csv",
        "discrepancy.csv",
        "separation.csv",
        "mz.csv",
        "density.svg",
    ] {
        assert!(tmp.path().join("st").join(f).exists(), "{f}");
    }
    let g = write(
        tmp.path(),
        "g.toml",
        "command = 'sample'\nn_grid = [32, 48]\nc = 2.0\nseeds = 2\nsweeps = 100\n",
    );
    assert!(coulomb(&["--config", &g, "--out", "gib"], tmp.path()).status.success());
    // drop one size from the Gibbs run to create a gap
    let mut m = RunManifest::load(&tmp.path().join("gib")).unwrap();
    m.files.retain(|a| !a.path.starts_with("configs/n00048"));
    std::fs::write(tmp.path().join("gib/manifest.json"), serde_json::to_string(&m).unwrap()).unwrap();
    let out = coulomb(&["report", "fek", "gib", "missing", "--out", "rep"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let md = std::fs::read_to_string(tmp.path().join("rep/report.md")).unwrap();
    assert!(md.contains("## Separation") && md.contains("## Density") && md.contains("## Discrepancy"));
    assert!(md.contains("missing n = 48"), "{md}");
    assert!(md.contains("skipped missing"));
    assert!(md.contains("scatter_z_2.svg"));
    assert!(tmp.path().join("rep/scatter_z_2.svg").exists());
}

#[test]
fn empty_report_warns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = coulomb(&["report", "--out", "rep"], tmp.path());
    assert!(out.status.success());
    let md = std::fs::read_to_string(tmp.path().join("rep/report.md")).unwrap();
    assert!(md.contains("Warnings") && md.contains("empty"));
}

#[test]
fn kernel_and_concentrate_emit_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let k = write(tmp.path(), "k.toml", "command = 'kernel'\nn = 64\nl_values = [0.0]\n");
    assert!(coulomb(&["--config", &k, "--out", "k"], tmp.path()).status.success());
    let m = RunManifest::load(&tmp.path().join("k")).unwrap();
    assert_eq!(m.spaces.len(), 1);
    assert!(m.spaces[0].gram_error < 1e-8);
    let c = write(
        tmp.path(),
        "c.toml",
        "command = 'concentrate'\nn = 64\nl_grid = [2.0, 3.0]\nregime = 'boundary'\nrho = 0.7\n",
    );
    let out = coulomb(&["--config", &c, "--out", "c"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = RunManifest::load(&tmp.path().join("c")).unwrap();
    assert!(m.warnings.iter().any(|w| w.contains("rounded")));
    let traces = std::fs::read_to_string(tmp.path().join("c/traces.csv")).unwrap();
    assert_eq!(traces.lines().count(), 3);
}
