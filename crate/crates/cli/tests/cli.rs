use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use permsync::sync::EstimateSet;
use permsync::{Instance, ModelParams};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_permsync")).current_dir(dir).args(args).output().expect("spawn permsync")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn gen_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.bin", "a.json"] {
        let o = run(dir.path(), &["gen", "--n", "64", "--d", "2", "--p", "1.0", "--sigma", "0", "--seed", "7", "--out", name]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("observed pairs: 2016"));
        let f = fs::File::open(dir.path().join(name)).unwrap();
        let loaded = if name.ends_with("json") { Instance::read_json(f) } else { Instance::read_binary(f) }.unwrap();
        let fresh = Instance::generate(&ModelParams::new(64, 2, 1.0, 0.0, 7)).unwrap();
        assert_eq!(loaded.params(), fresh.params());
        assert_eq!(loaded.truth(), fresh.truth());
        assert_eq!(loaded.observed_pairs(), fresh.observed_pairs());
        for &(j, k) in fresh.observed_pairs() {
            let (a, b) = (loaded.block(j as usize, k as usize).unwrap(), fresh.block(j as usize, k as usize).unwrap());
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}

#[test]
fn gen_rejects_bad_probability() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["gen", "--p", "1.5"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("p must"));
}

#[test]
fn gen_pair_count_is_binomial() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["gen", "--n", "512", "--d", "2", "--p", "0.5", "--seed", "1", "--out", "g.bin"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    let line = out.lines().find(|l| l.starts_with("observed pairs:")).unwrap();
    let count: f64 = line["observed pairs:".len()..].trim().parse().unwrap();
    let total = 512.0 * 511.0 / 2.0;
    let sd = (total * 0.25_f64).sqrt();
    assert!((count - 0.5 * total).abs() <= 3.0 * sd, "count {count}");
}

#[test]
fn solve_noiseless_reports_zero_loss() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["gen", "--n", "40", "--d", "3", "--p", "1", "--sigma", "0", "--seed", "3", "--out", "x.bin"]);
    assert_eq!(code(&o), 0);
    for method in ["anchored", "vanilla"] {
        let out_csv = format!("{method}.csv");
        let o = run(dir.path(), &["solve", "--input", "x.bin", "--method", method, "--out", &out_csv]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("loss: 0.000000"), "{}", stdout(&o));
        let est = EstimateSet::read_csv(fs::File::open(dir.path().join(&out_csv)).unwrap()).unwrap();
        assert_eq!(est.perms.len(), 40);
        assert!(est.perms.iter().all(|p| p.d() == 3));
    }
}

#[test]
fn solve_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["gen", "--n", "60", "--sigma", "0.8", "--seed", "5", "--out", "x.json"]);
    assert_eq!(code(&o), 0);
    for (out, dump) in [("e1.csv", "u1.csv"), ("e2.csv", "u2.csv")] {
        let o = run(dir.path(), &["solve", "--input", "x.json", "--out", out, "--dump-eigen", dump]);
        assert_eq!(code(&o), 0);
    }
    assert_eq!(fs::read(dir.path().join("e1.csv")).unwrap(), fs::read(dir.path().join("e2.csv")).unwrap());
    assert_eq!(fs::read(dir.path().join("u1.csv")).unwrap(), fs::read(dir.path().join("u2.csv")).unwrap());
    let dump = fs::read_to_string(dir.path().join("u1.csv")).unwrap();
    assert_eq!(dump.lines().count(), 1 + 120);
}

#[test]
fn solve_eigensolver_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["solve", "--n", "300", "--sigma", "3", "--max-iter", "1", "--tol", "1e-15"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sweep_shape_and_parallel_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["sweep", "--n", "128", "--d", "2", "--p", "0.5", "--sigmas", "0.2", "--trials", "5", "--seed", "9"];
    let mut a = base.to_vec();
    a.extend(["--out", "s1"]);
    let o = run(dir.path(), &a);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("anchored"));
    let summary = fs::read_to_string(dir.path().join("s1/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);

    let mut b = base.to_vec();
    b.extend(["--out", "s4", "--parallelism", "4"]);
    assert_eq!(code(&run(dir.path(), &b)), 0);
    assert_eq!(fs::read(dir.path().join("s1/raw.csv")).unwrap(), fs::read(dir.path().join("s4/raw.csv")).unwrap());
}

#[test]
fn sweep_with_every_trial_failing_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["sweep", "--n", "300", "--sigmas", "3", "--trials", "2", "--max-iter", "1", "--tol", "1e-15", "--out", "f"],
    );
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(dir.path().join("f/summary.csv")).unwrap();
    assert!(summary.lines().skip(1).all(|l| l.ends_with(",0,2")));
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "n = 24\nsigmas = [0.1, 0.3]\ntrials = 2\nmethods = [\"anchored\"]\nout = \"cfg\"\n")
        .unwrap();
    let o = run(dir.path(), &["sweep", "--config", "c.toml", "--trials", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let raw = fs::read_to_string(dir.path().join("cfg/raw.csv")).unwrap();
    // 2 sigmas × 3 trials × 1 method
    assert_eq!(raw.lines().count(), 1 + 6);
    assert!(raw.lines().skip(1).all(|l| l.contains(",anchored,")));

    fs::write(dir.path().join("bad.toml"), "bogus = 1\n").unwrap();
    assert_eq!(code(&run(dir.path(), &["sweep", "--config", "bad.toml"])), 2);
}

#[test]
fn plot_renders_legends_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let csv = "sigma,method,mean,median,q1,q3,min,max,std,n_ok,n_fail\n\
               1,vanilla,0.1,0.1,0.1,0.1,0.1,0.1,0,5,0\n\
               1,anchored,0.05,0.04,0.02,0.06,0,0.2,0.03,5,0\n";
    fs::write(dir.path().join("s.csv"), csv).unwrap();
    for style in ["lines", "box"] {
        let outs = [format!("{style}1.svg"), format!("{style}2.svg")];
        for out in &outs {
            assert_eq!(code(&run(dir.path(), &["plot", "s.csv", "--style", style, "--out", out])), 0);
        }
        let a = fs::read_to_string(dir.path().join(&outs[0])).unwrap();
        assert_eq!(a, fs::read_to_string(dir.path().join(&outs[1])).unwrap());
        assert_eq!(a.matches(r#"class="legend""#).count(), 2);
        if style == "box" {
            assert_eq!(a.matches("box degenerate").count(), 1);
        }
    }
    fs::write(dir.path().join("bad.csv"), "x,y\n1,2\n").unwrap();
    assert_eq!(code(&run(dir.path(), &["plot", "bad.csv"])), 2);
}

#[test]
fn help_documents_defaults() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["gen", "solve", "sweep", "plot"] {
        let o = run(dir.path(), &[sub, "--help"]);
        assert_eq!(code(&o), 0);
        let text = stdout(&o);
        for line in text.lines().filter(|l| l.trim_start().starts_with("--") && !l.contains("--help")) {
            assert!(line.contains("[default:"), "{sub}: {line}");
        }
    }
}
