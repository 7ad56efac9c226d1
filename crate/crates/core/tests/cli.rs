use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcjoris")).args(args).output().expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().unwrap_or(-1)
}

#[test]
fn weights_verdicts() {
    assert_eq!(code(&["weights", "--sequence", "gevrey:1,0", "--check", "all"]), 0);
    assert_eq!(code(&["weights", "--sequence", "qgevrey:1", "--check", "moderate-growth"]), 3);
    assert_eq!(code(&["weights", "--sequence", "nonsense", "--check", "all"]), 2);
    assert_eq!(code(&["weights", "--sequence", "gevrey:-1,0", "--check", "all"]), 2);
}

#[test]
fn weights_hm_csv_is_monotone() {
    let out = run(&["weights", "--sequence", "gevrey:1,0", "--hm", "--tmin", "1e-6", "--tmax", "10", "--n", "50"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let col: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(col.len(), 50);
    assert!(col.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(*col.last().unwrap(), 1.0);
}

#[test]
fn sequence_file_lookup() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("seqs.toml");
    std::fs::write(&p, "[[sequence]]\nname = \"g2\"\nkind = \"gevrey\"\nalpha = 2.0\nbeta = 0.0\n").unwrap();
    let f = p.to_str().unwrap();
    assert_eq!(code(&["weights", "--sequence-file", f, "--sequence", "g2", "--check", "moderate-growth"]), 0);
    assert_eq!(code(&["weights", "--sequence-file", f, "--sequence", "missing", "--check", "all"]), 2);
    std::fs::write(&p, "[[sequence]\n").unwrap();
    assert_eq!(code(&["weights", "--sequence-file", f, "--sequence", "g2", "--check", "all"]), 4);
}

#[test]
fn selftest_filters_and_corrupt_golden() {
    let out = run(&["selftest", "--filter", "dbar"]);
    assert!(out.status.success());
    let log = String::from_utf8(out.stderr).unwrap();
    assert!(log.lines().all(|l| l.contains("[dbar]")), "{log}");
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("golden.json");
    std::fs::write(&g, "{ \"disk_transform\": ").unwrap();
    assert_eq!(code(&["selftest", "--golden", g.to_str().unwrap()]), 4);
    assert_eq!(code(&["selftest", "--filter", "nope"]), 2);
    assert_eq!(code(&["dbar-selftest"]), 0);
}

#[test]
fn joris_exit_codes_and_report() {
    assert_eq!(code(&["joris-run", "--p", "2", "--q", "4", "--f", "identity"]), 2);
    assert_eq!(code(&["joris-run", "--p", "2", "--q", "3", "--f", "nope"]), 2);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = out.to_str().unwrap();
    assert_eq!(code(&["joris-run", "--p", "2", "--q", "3", "--f", "identity", "--sequence", "gevrey:1,0", "--out", o]), 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let r = &v["result"];
    assert!(r["config"]["p"] == 2 && r["config"]["q"] == 3);
    let rungs = r["per_rung"].as_array().unwrap();
    assert_eq!(rungs.len(), 4);
    for k in ["eps", "sup_err_interval", "quotient_bound", "split", "closed_form", "correction", "delta", "r"] {
        assert!(rungs.iter().all(|x| x.get(k).is_some()), "missing {k}");
    }
    assert_eq!(r["verdict"]["checks_pass"], true);
    assert_eq!(v["manifest"]["seed"], 0);
    assert!(v["manifest"]["command"].as_array().unwrap().len() > 3);
}

#[test]
fn family_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("fam");
    let ds = d.to_str().unwrap();
    assert_eq!(code(&["pm-build", "--f", "square", "--eps0", "1", "--depth", "3", "--dir", ds]), 0);
    assert!(d.join("manifest.json").exists());
    let rep = dir.path().join("v.json");
    assert_eq!(code(&["pm-verify", "--dir", ds, "--out", rep.to_str().unwrap()]), 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    assert_eq!(v["result"]["pass"], true);
    assert_eq!(code(&["pm-verify", "--dir", dir.path().join("absent").to_str().unwrap()]), 4);
}

#[test]
fn cover_report() {
    let out = run(&["cover", "--eps", "0.5", "--samples", "500"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"]["cover"]["epsilon"], 0.5);
    assert!(!v["result"]["cover"]["centers"].as_array().unwrap().is_empty());
    assert_eq!(code(&["cover", "--eps", "0"]), 2);
}
