use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hypermix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypermix")).args(args).output().expect("binary runs")
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for suite in fs::read_dir(dir).unwrap() {
        for hash in fs::read_dir(suite.unwrap().path()).unwrap() {
            for f in fs::read_dir(hash.unwrap().path()).unwrap() {
                let p = f.unwrap().path();
                if p.extension().is_some_and(|e| e == "csv") {
                    out.push(p);
                }
            }
        }
    }
    out.sort();
    out
}

#[test]
fn hyperbolicity_certificate_passes_at_sixteen() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let r = hypermix(&["hyperbolicity", "--alpha", "16", "--out", out]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let files = csv_files(dir.path());
    let cert = files.iter().find(|p| p.ends_with("hyperbolicity.csv")).unwrap();
    let text = fs::read_to_string(cert).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# hypermix "));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let pass = header.iter().position(|c| *c == "pass").unwrap();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.split(',').nth(pass) == Some("true")));
}

#[test]
fn every_csv_has_a_comment_and_a_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for suite in ["hyperbolicity", "jacobian", "doeblin"] {
        let r = hypermix(&[suite, "--out", out, "--seed", "11"]);
        assert!(r.status.success(), "{suite}: {}", String::from_utf8_lossy(&r.stderr));
    }
    let files = csv_files(dir.path());
    assert!(files.len() >= 4);
    for f in files {
        let text = fs::read_to_string(&f).unwrap();
        let mut lines = text.lines();
        let comment = lines.next().unwrap();
        assert!(comment.contains("config=") && comment.contains("seed=11"), "{}", f.display());
        assert!(lines.next().unwrap().split(',').count() >= 2);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let cfg = c.path().join("run.ini");
    fs::write(&cfg, "alpha = 16\nnu = 1e-2, 1e-3\nn_max = 4\nsamples_per_bin = 50\nthreads = 2\n").unwrap();
    for dir in [&a, &b] {
        let r = hypermix(&["doeblin", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let fa = csv_files(a.path());
    let fb = csv_files(b.path());
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.strip_prefix(a.path()).unwrap(), y.strip_prefix(b.path()).unwrap());
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
}

#[test]
fn under_resolved_viscosity_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let r = hypermix(&["pulsed", "--grid", "256", "--nu", "1e-5", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("kind=validation") && err.contains("under-resolved"), "{err}");
}

#[test]
fn invalid_configs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(hypermix(&["jacobian", "--alpha", "3", "--out", out]).status.code(), Some(2));
    assert_eq!(hypermix(&["mixscale", "--grid", "1000", "--out", out]).status.code(), Some(2));
    assert_eq!(hypermix(&["nosuchsuite"]).status.code(), Some(2));
    let cfg = dir.path().join("bad.ini");
    fs::write(&cfg, "viscosity = 1\n").unwrap();
    assert_eq!(hypermix(&["pulsed", "--config", cfg.to_str().unwrap(), "--out", out]).status.code(), Some(2));
    fs::write(&cfg, "[pulsed]\nnu = 1e-3\n").unwrap();
    assert_eq!(hypermix(&["pulsed", "--config", cfg.to_str().unwrap(), "--out", out]).status.code(), Some(2));
}

#[test]
fn resource_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = dir.path().join("tight.ini");
    fs::write(&cfg, "method = exact\nbudget = 2\nn = 6\npairs = 1\n").unwrap();
    let r = hypermix(&["overlap", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
    let missing = dir.path().join("missing.ini");
    assert_eq!(hypermix(&["pulsed", "--config", missing.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn output_layout_is_suite_then_hash() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    hypermix(&["jacobian", "--out", out, "--seed", "1"]);
    hypermix(&["jacobian", "--out", out, "--seed", "2"]);
    let hashes: Vec<_> = fs::read_dir(dir.path().join("jacobian")).unwrap().collect();
    assert_eq!(hashes.len(), 2);
}

#[test]
fn thread_count_does_not_change_results() {
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    let c = tempfile::tempdir().unwrap();
    for (i, threads) in [1, 3].iter().enumerate() {
        let cfg = c.path().join(format!("t{threads}.ini"));
        fs::write(&cfg, format!("steps = 4\nsamples = 300\nnu = 1e-3\nthreads = {threads}\n")).unwrap();
        let r = hypermix(&["jacobian", "--config", cfg.to_str().unwrap(), "--out", dirs[i].path().to_str().unwrap()]);
        assert!(r.status.success());
    }
    let fa = csv_files(dirs[0].path());
    let fb = csv_files(dirs[1].path());
    assert_eq!(fa.len(), 1);
    assert_eq!(fs::read(&fa[0]).unwrap(), fs::read(&fb[0]).unwrap());
}
