use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use mspec_cli::compare_spectra;
use mspec_core::geometry::DomainSpec;
use mspec_core::moments::analytic_moments;
use mspec_core::spectral::analytic_spectrum;
use mspec_core::stieltjes::{invert_moments, measure_to_spectrum, Precision};

fn mspec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mspec")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn verify_on_the_interval_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "v.txt",
        "run.pipeline = verify\ndomain.kind = interval\ndomain.params = 0, 1\ngrid.h = 1/512\nverify.n_max = 6\n",
    );
    let out = dir.path().join("out");
    let o = mspec(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--strict"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rep = json(&out.join("verify_report.json"));
    let rows = rep["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r["rel_err"].as_f64().unwrap() < 1e-4));
    assert_eq!(rep["pass"], Value::Bool(true));
}

#[test]
fn verify_failure_only_fails_the_exit_under_strict() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "v.txt", "run.pipeline = verify\ngrid.h = 1/64\nverify.tol = 1e-12\n");
    let out = dir.path().join("out");
    let o = mspec(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("check failed: verify"));
    let o = mspec(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--strict"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn invert_rejects_a_non_psd_moment_file() {
    let dir = tempfile::tempdir().unwrap();
    // μ_1² > μ_0 μ_2, so the 2x2 Hankel section is indefinite
    let csv = dir.path().join("bad.csv");
    fs::write(&csv, "n,A_n,mu_n\n0,1,1\n1,0.5,0.5\n2,0.2,0.1\n3,3,0.5\n").unwrap();
    let cfg = write_config(
        dir.path(),
        "i.txt",
        &format!("run.pipeline = invert\nmoments.input = {}\ninvert.p = 2\n", csv.display()),
    );
    let out = dir.path().join("out");
    let o = mspec(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("Hankel positivity violated"), "{msg}");
    assert!(msg.contains("H0 = [mu_(i+j)]"), "{msg}");
    // the per-size diagnostics are still written
    let hankel = json(&out.join("hankel.json"));
    assert_eq!(hankel[1]["pass"], Value::Bool(false));
}

#[test]
fn zero_perturbation_leaves_the_square_report_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "p.txt",
        "run.pipeline = perturb\ndomain.kind = rectangle\ndomain.params = 1, 1\ngrid.h = 1/16\nspectrum.m = 6\nperturb.eps = 0\n",
    );
    let out = dir.path().join("out");
    let o = mspec(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rep = json(&out.join("perturb_report.json"));
    assert_eq!(rep["identical"], Value::Bool(true));
    assert_eq!(rep["base"], rep["perturbed"]);
    assert_eq!(rep["perturbed"]["holds"], Value::Bool(false));
    assert_eq!(
        fs::read(out.join("spectrum_base.csv")).unwrap(),
        fs::read(out.join("spectrum_perturbed.csv")).unwrap()
    );
}

#[test]
fn perturb_rejects_a_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "p.txt", "run.pipeline = perturb\ndomain.kind = disk\ndomain.params = 1\n");
    let o = mspec(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rectangle or polygon"));
}

fn spectrum_file(dir: &Path, name: &str, spec: &DomainSpec) -> String {
    let sd = analytic_spectrum(spec, 10).unwrap();
    let mut buf = Vec::new();
    sd.write_csv(&mut buf).unwrap();
    let path = dir.join(name);
    fs::write(&path, buf).unwrap();
    path.display().to_string()
}

#[test]
fn compare_a_file_with_itself_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let a = spectrum_file(dir.path(), "a.csv", &DomainSpec::interval(0.0, 1.0).unwrap());
    let o = mspec(&["compare", &a, &a, "--strict"]);
    assert_eq!(o.status.code(), Some(0));
    let rep: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rep["exact"], Value::Bool(true));
    assert_eq!(rep["unmatched_a"].as_array().unwrap().len(), 0);
    assert_eq!(rep["unmatched_b"].as_array().unwrap().len(), 0);
    assert_eq!(rep["max_rel_lambda"].as_f64(), Some(0.0));
}

#[test]
fn compare_interval_with_square_fails_under_strict() {
    let dir = tempfile::tempdir().unwrap();
    let a = spectrum_file(dir.path(), "a.csv", &DomainSpec::interval(0.0, 1.0).unwrap());
    let b = spectrum_file(dir.path(), "b.csv", &DomainSpec::rectangle(1.0, 1.0).unwrap());
    let report = dir.path().join("cmp.json");
    let o = mspec(&["compare", &a, &b, "--strict", "--out", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let rep = json(&report);
    assert!(!rep["unmatched_a"].as_array().unwrap().is_empty());
    assert!(!rep["unmatched_b"].as_array().unwrap().is_empty());
    // without --strict the same diff is only reported
    assert_eq!(mspec(&["compare", &a, &b]).status.code(), Some(0));
}

#[test]
fn compare_rejects_malformed_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = spectrum_file(dir.path(), "a.csv", &DomainSpec::interval(0.0, 1.0).unwrap());
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "lambda,multiplicity,a2\n1.0,1,abc\n").unwrap();
    let o = mspec(&["compare", &a, bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.csv"));
}

#[test]
fn inverted_interval_matches_the_first_eigenvalue() {
    let spec = DomainSpec::interval(0.0, 1.0).unwrap();
    let ms = analytic_moments(&spec, 5).unwrap();
    let inverted = measure_to_spectrum(&invert_moments(&ms, 3, Precision::Extended).unwrap()).unwrap();
    let reference = analytic_spectrum(&spec, 50).unwrap();
    let rep = compare_spectra(&reference, &inverted, 1e-3);
    let first = rep.matched.iter().find(|m| m.lambda_a == reference.entries()[0].lambda).unwrap();
    assert!(first.rel_lambda < 1e-3);
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.txt", "# comment\ngrid.h = 0.01\ngrid.hh = 0.01\n");
    let o = mspec(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("config line 3"), "{}", stderr(&o));
}

fn csv_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn archived_config_reproduces_outputs_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "mc.txt",
        "run.pipeline = mc\nmc.paths = 500\nmc.dt = 1e-3\nmc.workers = 3\n",
    );
    let first = dir.path().join("first");
    let o = mspec(&["run", "--config", &cfg, "--out", first.to_str().unwrap(), "--seed", "77"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let archived = first.join("config.txt");
    let text = fs::read_to_string(&archived).unwrap();
    assert!(text.contains("mc.seed = 77\n"));
    let manifest = json(&first.join("manifest.json"));
    assert_eq!(manifest["seeds"]["mc.seed"], 77);
    assert_eq!(manifest["pipeline"], "mc");
    assert_eq!(manifest["core_version"], mspec_core::VERSION);
    assert!(manifest["inputs"][0]["path"].as_str().unwrap().ends_with("mc.txt"));

    let second = dir.path().join("second");
    let o = mspec(&["run", "--config", archived.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let a = csv_outputs(&first);
    assert!(!a.is_empty());
    assert_eq!(a, csv_outputs(&second));
}

#[test]
fn manifest_checksums_match_the_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = mspec(&["run", "--pipeline", "moments", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest = json(&out.join("manifest.json"));
    let outputs = manifest["outputs"].as_array().unwrap();
    assert!(outputs.iter().any(|e| e["file"] == "moments.csv"));
    for entry in outputs {
        let bytes = fs::read(out.join(entry["file"].as_str().unwrap())).unwrap();
        assert_eq!(entry["sha256"].as_str().unwrap(), mspec_cli::run::sha256_hex(&bytes));
    }
}

#[test]
fn all_pipeline_writes_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = mspec(&["run", "--out", out.to_str().unwrap(), "--precision", "extended"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = json(&out.join("summary.json"));
    assert!(summary["lambda1_rel_err"].as_f64().unwrap() < 1e-3);
    assert!(summary["verify_max_rel_err"].as_f64().unwrap() < 1e-4);
    assert!(summary["max_abs_diff_reconstructed_vs_timestep"].as_f64().unwrap() < 1e-2);
}

#[test]
fn defaults_subcommand_prints_a_parseable_config() {
    let o = mspec(&["defaults"]);
    assert_eq!(o.status.code(), Some(0));
    let cfg = mspec_cli::RunConfig::parse(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(cfg, mspec_cli::RunConfig::default());
}
