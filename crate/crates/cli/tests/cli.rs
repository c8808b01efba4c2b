use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn divgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_divgan")).args(args).output().expect("spawn divgan")
}

fn ok(args: &[&str]) -> String {
    let out = divgan(args);
    assert!(
        out.status.success(),
        "divgan {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn exit_codes() {
    assert_eq!(divgan(&["--help"]).status.code(), Some(0));
    assert_eq!(divgan(&[]).status.code(), Some(2));
    assert_eq!(divgan(&["gen-data", "--n", "3"]).status.code(), Some(2));
    assert_eq!(divgan(&["train", "--bogus"]).status.code(), Some(2));
    let out = divgan(&["evaluate", "--truth", "/nonexistent.cgf", "--ensembles", "/x.cgf", "--out", "/tmp/x.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn runtime_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    // 24 is not a power of two
    let out = divgan(&["gen-data", "--n", "2", "--size", "24", "--out", &p(dir.path(), "a.cgf")]);
    assert_eq!(out.status.code(), Some(1));
    let out = divgan(&["train", "--data", &p(dir.path(), "missing.cgf"), "--out", &p(dir.path(), "g.cgn")]);
    assert_eq!(out.status.code(), Some(1));
    ok(&["gen-data", "--n", "4", "--size", "16", "--out", &p(dir.path(), "d.cgf")]);
    // diversity training needs attached moments
    let out = divgan(&["train", "--data", &p(dir.path(), "d.cgf"), "--steps", "1", "--out", &p(dir.path(), "g.cgn")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("moment"));
    // the oracle refuses warped data
    ok(&["gen-data", "--n", "2", "--size", "16", "--warp", "0.3", "--out", &p(dir.path(), "w.cgf")]);
    let out = divgan(&["oracle", "--data", &p(dir.path(), "w.cgf"), "--out", &p(dir.path(), "o.cgf")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = p(d, "data.cgf");
    ok(&["--seed", "3", "gen-data", "--n", "48", "--size", "16", "--out", &data]);
    assert!(Path::new(&format!("{data}.meta.json")).exists());

    let moments = p(d, "data_m.cgf");
    let s = ok(&[
        "fit-moments", "--data", &data, "--model", "1", "--out-mean", &p(d, "mean.sem"), "--out-var",
        &p(d, "var.sem"), "--out-data", &moments,
    ]);
    assert!(s.contains("train mse"));

    let sweep = p(d, "sweep.json");
    let s = ok(&["sweep-basis", "--data", &data, "--models", "0..3", "--with-linear", "--out", &sweep]);
    assert_eq!(s.lines().count(), 1 + 8);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&sweep).unwrap()).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 8);

    let ck = p(d, "gan.cgn");
    let log = p(d, "log.csv");
    ok(&["train", "--data", &moments, "--steps", "3", "--m", "2", "--r", "2", "--out", &ck, "--log", &log]);
    let csv = std::fs::read_to_string(&log).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("step,l_content,l_adv_g,l_adv_d,l_div,action,"));

    let ens = p(d, "ens.cgf");
    ok(&["sample", "--checkpoint", &ck, "--data", &data, "--count", "3", "--limit", "5", "--out", &ens]);
    let report = p(d, "metrics.json");
    let s = ok(&["evaluate", "--truth", &data, "--ensembles", &ens, "--out", &report]);
    assert!(s.contains("diversity"), "{s}");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    for key in ["diversity_pct", "consistency_pct", "spectrum_E", "dissipation_E"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    for suffix in ["spectrum", "zeta", "sf"] {
        assert!(d.join(format!("metrics_{suffix}.csv")).exists());
    }

    for method in ["adm", "taylor"] {
        let out = p(d, &format!("{method}.cgf"));
        ok(&["deconv", "--method", method, "--data", &data, "--limit", "4", "--out", &out]);
        let s = ok(&["evaluate", "--truth", &data, "--ensembles", &out, "--reference", "none", "--out", &p(d, &format!("{method}.json"))]);
        assert!(s.starts_with("consistency"));
    }
    ok(&["deconv", "--method", "gan", "--checkpoint", &ck, "--data", &data, "--count", "2", "--limit", "2", "--out", &p(d, "g.cgf")]);

    let oracle = p(d, "oracle.cgf");
    ok(&["oracle", "--data", &data, "--limit", "6", "--out", &oracle]);
    let s = ok(&["evaluate", "--truth", &oracle, "--ensembles", &ens, "--reference", "moments", "--out", &p(d, "om.json")]);
    assert!(s.contains("diversity"));
}

fn pipeline_bytes(dir: &Path, seed: &str) -> Vec<Vec<u8>> {
    let data = p(dir, "d.cgf");
    let m = p(dir, "m.cgf");
    let ck = p(dir, "g.cgn");
    let log = p(dir, "log.csv");
    let ens = p(dir, "e.cgf");
    let g = ["--seed", seed, "--threads", "1"];
    let with = |rest: &[&str]| -> Vec<String> { g.iter().chain(rest).map(|s| s.to_string()).collect() };
    let run = |args: Vec<String>| ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    run(with(&["gen-data", "--n", "40", "--size", "16", "--out", &data]));
    run(with(&[
        "fit-moments", "--data", &data, "--model", "2", "--out-mean", &p(dir, "mean.sem"), "--out-var",
        &p(dir, "var.sem"), "--out-data", &m,
    ]));
    run(with(&["train", "--data", &m, "--steps", "4", "--m", "2", "--r", "2", "--out", &ck, "--log", &log]));
    run(with(&["sample", "--checkpoint", &ck, "--data", &data, "--count", "2", "--limit", "3", "--out", &ens]));
    let files = [
        data.clone(),
        format!("{data}.meta.json"),
        p(dir, "mean.sem"),
        p(dir, "var.sem"),
        m,
        ck,
        log,
        ens.clone(),
        format!("{ens}.meta.json"),
    ];
    files.iter().map(|f| std::fs::read(f).unwrap()).collect()
}

#[test]
fn byte_reproducible_given_seed_and_threads() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let x = pipeline_bytes(a.path(), "5");
    let y = pipeline_bytes(b.path(), "5");
    let z = pipeline_bytes(c.path(), "6");
    for (i, (u, v)) in x.iter().zip(&y).enumerate() {
        assert!(u == v, "output {i} differs between identical runs");
    }
    assert_ne!(x[0], z[0]);
    assert_ne!(x[5], z[5]);
}

#[test]
fn config_file_fills_unset_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg: PathBuf = d.join("gen.conf");
    std::fs::write(&cfg, "# defaults\nn = 5\nsize = 16\nwarp = 0.2\nseed = 9\n").unwrap();
    let out = p(d, "a.cgf");
    let s = ok(&["gen-data", "--config", cfg.to_str().unwrap(), "--n", "3", "--out", &out]);
    assert!(s.starts_with("wrote 3 samples of 16x16"), "{s}");
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(format!("{out}.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 9);
    assert_eq!(meta["params"]["warp"], 0.2);

    std::fs::write(&cfg, "epochs = 3\n").unwrap();
    let r = divgan(&["gen-data", "--config", cfg.to_str().unwrap(), "--n", "3", "--out", &out]);
    assert_eq!(r.status.code(), Some(2));
}
