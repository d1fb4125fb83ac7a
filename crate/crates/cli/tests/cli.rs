use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn latcap(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latcap"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("LATCAP_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn stdout_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("json on stdout")
}

#[test]
fn single_point_capacity() {
    let dir = tempfile::tempdir().unwrap();
    let set = dir.path().join("single.txt");
    fs::write(&set, "d=3\n0 0 0\n").unwrap();
    let o = latcap(&["capacity", "exact", "--set", set.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o)["value"].as_f64().unwrap();
    assert!((v - 0.6595).abs() < 1e-4, "{v}");
    let rec: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/capacity.record.json")).unwrap()).unwrap();
    assert_eq!(rec["command"], "capacity");
    assert_eq!(rec["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "d=3\n").unwrap();
    let o = latcap(&["capacity", "exact", "--set", empty.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(1));
    let o = latcap(&["capacity", "exact", "--set", "/nonexistent/set.txt"], &out);
    assert_eq!(o.status.code(), Some(1));
    let o = latcap(&["capacity", "sideways"], &out);
    assert_eq!(o.status.code(), Some(1));
    let o = latcap(&["--help"], &out);
    assert_eq!(o.status.code(), Some(0));

    // a fixed walk length below the scenario's minimum
    let o = latcap(&["scenario", "--strict", "--trials", "5", "--n", "10"], &out);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn oracle_sweep_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = latcap(&["oracle", "verify", "--max-total", "4"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("PASS"));
    assert!(dir.path().join("oracle-sweep.csv").exists());
}

#[test]
fn oracle_single_instance() {
    let dir = tempfile::tempdir().unwrap();
    let set = dir.path().join("set.txt");
    let th = dir.path().join("th.txt");
    fs::write(&set, "d=3\n0 0 0\n1 0 0\n").unwrap();
    fs::write(&th, "0 0 0 2\n1 0 0 1\n").unwrap();
    let o = latcap(
        &["oracle", "verify", "--set", set.to_str().unwrap(), "--thresholds", th.to_str().unwrap()],
        &dir.path().join("out"),
    );
    assert_eq!(o.status.code(), Some(0));
    let j = stdout_json(&o);
    assert_eq!(j["verdict"], "PASS");
    assert!(j["exact"][1].as_f64().unwrap() <= j["product_bound"][1].as_f64().unwrap());

    fs::write(&th, "0 0 0 2\n").unwrap();
    let o = latcap(
        &["oracle", "verify", "--set", set.to_str().unwrap(), "--thresholds", th.to_str().unwrap()],
        &dir.path().join("out"),
    );
    assert_eq!(o.status.code(), Some(1));
}

fn write_corpus(dir: &Path) {
    fs::create_dir_all(dir).unwrap();
    fs::write(dir.join("a-balls.txt"), "# r=2 kind=balls\nd=3\n0 0 0\n9 0 0\n0 9 0\n").unwrap();
    fs::write(dir.join("b-line.txt"), "# kind=line\nd=3\n0 0 0\n1 0 0\n2 0 0\n3 0 0\n").unwrap();
    fs::write(dir.join("c-cube.txt"), "# kind=cube\nd=3\n0 0 0\n1 0 0\n0 1 0\n1 1 0\n0 0 1\n1 0 1\n0 1 1\n1 1 1\n").unwrap();
}

#[test]
fn bounds_report_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    write_corpus(&corpus);
    let (o1, o2) = (dir.path().join("o1"), dir.path().join("o2"));
    for o in [&o1, &o2] {
        let r = latcap(&["bounds-report", "--corpus", corpus.to_str().unwrap()], o);
        assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    }
    for f in ["bounds.csv", "bounds.svg"] {
        assert_eq!(fs::read(o1.join(f)).unwrap(), fs::read(o2.join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(o1.join("bounds.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn bounds_report_skips_bad_entries() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    write_corpus(&corpus);
    fs::write(corpus.join("d-bad.txt"), "d=3\n0 0\n").unwrap();
    let r = latcap(&["bounds-report", "--corpus", corpus.to_str().unwrap()], &dir.path().join("o"));
    assert_eq!(r.status.code(), Some(2));
    let csv = fs::read_to_string(dir.path().join("o/bounds.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(String::from_utf8_lossy(&r.stderr).contains("d-bad.txt"));

    let empty = dir.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let r = latcap(&["bounds-report", "--corpus", empty.to_str().unwrap()], &dir.path().join("e"));
    assert_eq!(r.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("e/bounds.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn results_do_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let set = dir.path().join("set.txt");
    let th = dir.path().join("th.txt");
    fs::write(&set, "d=3\n0 0 0\n1 0 0\n").unwrap();
    fs::write(&th, "0 0 0 1\n1 0 0 1\n").unwrap();
    let run = |threads: &str, out: &str| {
        let o = latcap(
            &[
                "--seed", "7", "--threads", threads, "cover-mc", "--set", set.to_str().unwrap(),
                "--thresholds", th.to_str().unwrap(), "--trials", "5000",
            ],
            &dir.path().join(out),
        );
        assert_eq!(o.status.code(), Some(0));
        stdout_json(&o)["estimate"].clone()
    };
    assert_eq!(run("1", "t1"), run("8", "t8"));

    let mc = |threads: &str, out: &str| {
        let o = latcap(
            &[
                "--seed", "7", "--threads", threads, "capacity", "monte-carlo", "--set", set.to_str().unwrap(),
                "--walkers", "10000",
            ],
            &dir.path().join(out),
        );
        stdout_json(&o)["value"].as_f64().unwrap()
    };
    assert_eq!(mc("1", "m1").to_bits(), mc("8", "m8").to_bits());
}

#[test]
fn green_cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let set = dir.path().join("single.txt");
    fs::write(&set, "d=3\n0 0 0\n1 1 0\n").unwrap();
    let run = || {
        let o = Command::new(env!("CARGO_BIN_EXE_latcap"))
            .args(["--out", dir.path().join("out").to_str().unwrap()])
            .args(["capacity", "exact", "--set", set.to_str().unwrap()])
            .env("LATCAP_CACHE_DIR", dir.path().join("cache"))
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        stdout_json(&o)["value"].as_f64().unwrap()
    };
    let first = run();
    let cached: Vec<_> = fs::read_dir(dir.path().join("cache")).unwrap().collect();
    assert_eq!(cached.len(), 1);
    assert_eq!(first.to_bits(), run().to_bits());
}

#[test]
fn config_file_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, "seed = 3\n[fold]\nn = 300\nr = 1\nrho = 0.0\ntrials = 2\n").unwrap();
    let out = dir.path().join("out");
    let o = latcap(&["--config", cfg.to_str().unwrap(), "fold-sim"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("fold.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let svg = dir.path().join("re.svg");
    let o = latcap(
        &["plot", "--csv", out.join("fold.csv").to_str().unwrap(), "--x", "region", "--y", "shape", "--output", svg.to_str().unwrap()],
        &out,
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(fs::read_to_string(svg).unwrap().starts_with("<svg"));

    fs::write(&cfg, "bogus_key = 1\n").unwrap();
    let o = latcap(&["--config", cfg.to_str().unwrap(), "fold-sim"], &out);
    assert_eq!(o.status.code(), Some(1));
}
