use std::fs;
use std::process::{Command, Output};

fn macrospin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_macrospin"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

/// Data rows of a CSV with its comment and header lines stripped.
fn rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(2)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn lambda_max(text: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with("lambda_max")).unwrap();
    line.split_whitespace().nth(1).unwrap().parse().unwrap()
}

#[test]
fn schur_weyl_six_spins() {
    let out = macrospin(&["schur-weyl", "--n", "6"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config: "));
    assert_eq!(
        lines.next().unwrap(),
        "J,diagram_row1,diagram_row2,su2_dim,f,subtotal"
    );
    let subtotals: Vec<u64> = lines
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(subtotals, vec![7, 25, 27, 5]);
    assert_eq!(subtotals.iter().sum::<u64>(), 64);
}

#[test]
fn null_dynamics_is_constant() {
    let out = macrospin(&[
        "classical",
        "--gamma",
        "0",
        "--kappa",
        "0",
        "--j",
        "0,0,0",
        "--init",
        "x",
        "--t-end",
        "10",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let data = rows(&stdout(&out));
    assert!(data.len() > 100);
    assert_eq!(data.last().unwrap()[0], 10.0);
    for r in &data {
        assert_eq!(&r[1..4], &[1.0, 0.0, 0.0]);
    }
}

#[test]
fn mle_matches_library_and_chaotic_window() {
    let out = macrospin(&[
        "mle", "--gamma", "3.306", "--kappa", "0.02", "--j", "0,1,0", "--init", "x",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let p = macrospin::ModelParams::new(3.306, 0.02, macrospin::Couplings::new(0.0, 1.0, 0.0));
    let direct = macrospin::lyapunov::lyapunov_spectrum(
        macrospin::MacrospinState::X_POLARIZED,
        &p,
        macrospin::IntegratorSpec::rk4(1e-3),
        Default::default(),
    )
    .unwrap();
    assert!((lambda_max(&stdout(&out)) - direct.max_exponent()).abs() < 1e-6);

    // Averaged inside the chaotic stretch only.
    let out = macrospin(&[
        "mle",
        "--gamma",
        "3.306",
        "--kappa",
        "0.02",
        "--j",
        "0,1,0",
        "--init",
        "x",
        "--t-total",
        "500",
        "--transient",
        "0",
    ]);
    let l = lambda_max(&stdout(&out));
    assert!((l - 0.4827).abs() < 0.05, "{l}");
}

#[test]
fn mle_writes_running_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mle.csv");
    let out = macrospin(&[
        "mle",
        "--gamma",
        "3.306",
        "--kappa",
        "5",
        "--j",
        "0,1,0",
        "--t-total",
        "60",
        "--transient",
        "10",
        "-o",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "t,lambda_max");
    let data = rows(&text);
    assert_eq!(data.len(), 50);
    assert_eq!(data[0][0], 11.0);
    assert!(data.iter().all(|r| r[1] <= 1e-3));
}

#[test]
fn exit_codes() {
    let bad_flag = macrospin(&["mle", "--bogus"]);
    assert_eq!(bad_flag.status.code(), Some(1));
    assert!(stderr(&bad_flag).contains("--bogus"));

    let negative = macrospin(&["classical", "--kappa", "-1"]);
    assert_eq!(negative.status.code(), Some(1));
    assert!(stderr(&negative).contains("kappa must be non-negative"));

    let bad_dt = macrospin(&["classical", "--dt", "0.3"]);
    assert_eq!(bad_dt.status.code(), Some(1));

    let blow_up = macrospin(&[
        "classical",
        "--gamma",
        "1e6",
        "--j",
        "0,1,0",
        "--dt",
        "0.5",
        "--t-end",
        "50",
    ]);
    assert_eq!(blow_up.status.code(), Some(2), "{}", stderr(&blow_up));

    assert_eq!(macrospin(&["--help"]).status.code(), Some(0));
    assert_eq!(macrospin(&["--version"]).status.code(), Some(0));
}

#[test]
fn config_precedence_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "[params]\ngamma = 1.5\nkappa = 2\njy = 1.0\n\n[integrator]\ndt = 0.01\n\n[task]\nt_end = 3\nevery = 0\n",
    )
    .unwrap();
    let c = cfg.to_str().unwrap();

    let out = macrospin(&["classical", "--config", c, "--gamma", "2.5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let config = text.lines().next().unwrap();
    for kv in [
        "gamma=2.5",
        "kappa=2",
        "jy=1",
        "dt=0.01",
        "t_end=3",
        "every=0",
        "init=x",
    ] {
        assert!(
            config.split_whitespace().any(|w| w == kv),
            "{kv} missing from {config}"
        );
    }
    // every = 0 keeps only period boundaries: t = 0, 1, 2, 3.
    assert_eq!(rows(&text).len(), 4);

    let out = macrospin(&["classical", "--config", c, "--t-end", "1"]);
    assert_eq!(rows(&stdout(&out)).len(), 2);

    fs::write(&cfg, "[task]\nt_end = 3\nwindow = [1, 2]\n").unwrap();
    let out = macrospin(&["classical", "--config", c]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(
        err.contains("unknown key 'window'") && err.contains("t_end"),
        "{err}"
    );

    fs::write(&cfg, "[params]\nbeta = 1\n").unwrap();
    assert_eq!(
        macrospin(&["classical", "--config", c]).status.code(),
        Some(1)
    );

    fs::write(&cfg, "[solver]\ndt = 1\n").unwrap();
    let out = macrospin(&["classical", "--config", c]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unknown section [solver]"));

    fs::write(&cfg, "[params\ngamma = 1\n").unwrap();
    let out = macrospin(&["classical", "--config", c]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("malformed config"));
}

#[test]
fn output_path_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let target = dir.path().join("table.csv");
    fs::write(
        &cfg,
        format!(
            "[task]\nn = 4\n\n[output]\npath = \"{}\"\n",
            target.display()
        ),
    )
    .unwrap();
    let out = macrospin(&["schur-weyl", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).is_empty());
    let text = fs::read_to_string(&target).unwrap();
    assert!(text.starts_with("# config: ") && text.contains(" n=4"));
    assert_eq!(text.lines().count(), 2 + 3);
}

#[test]
fn sweeps_are_identical_across_thread_counts() {
    let args = |threads: &'static str| {
        vec![
            "bifurcation",
            "--gamma",
            "8.427",
            "--j",
            "0,1,0",
            "--axis",
            "2.5,3.5,4",
            "--policy",
            "global",
            "--global-count",
            "6",
            "--transient",
            "20",
            "--samples",
            "100",
            "--dt",
            "0.01",
            "--threads",
            threads,
        ]
    };
    let one = macrospin(&args("1"));
    let four = macrospin(&args("4"));
    assert!(one.status.success(), "{}", stderr(&one));
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(rows(&stdout(&one)).len(), 4 * 6 * 100);
}

#[test]
fn spectrum_finds_period_two() {
    let out = macrospin(&[
        "spectrum", "--gamma", "8.427", "--kappa", "3", "--j", "0,1,0",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("dominant frequency 0.5 (period 2)"));
    assert_eq!(stdout(&out).lines().nth(1).unwrap(), "freq,amplitude");
}

#[test]
fn logistic_feigenbaum_json() {
    let out = macrospin(&["feigenbaum", "--logistic"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let delta = v["delta"].as_f64().unwrap();
    assert!((delta - 4.669).abs() < 0.05 * 4.669, "{delta}");
    assert!(v["points"].as_array().unwrap().len() >= 3);
    assert!(v["ratios"].is_array());
    assert!(v["config"].as_str().unwrap().contains("logistic=true"));
}

#[test]
fn symmetry_check_passes() {
    let out = macrospin(&["symmetry-check", "--gamma", "3.306", "--seed", "7"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.lines().skip(1).all(|l| l.starts_with("PASS")),
        "{text}"
    );
    assert!(text.lines().next().unwrap().contains("seed=7"));
}

#[test]
fn quantum_snapshots_need_an_output_path() {
    let out = macrospin(&[
        "quantum",
        "--n-spins",
        "4",
        "--t-end",
        "1",
        "--snapshots",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.csv");
    let out = macrospin(&[
        "quantum",
        "--gamma",
        "3.306",
        "--kappa",
        "5",
        "--j",
        "0,1,0",
        "--n-spins",
        "6",
        "--t-end",
        "1",
        "--snapshots",
        "1",
        "-o",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let obs = fs::read_to_string(&path).unwrap();
    assert_eq!(obs.lines().nth(1).unwrap(), "t,mx,my,mz,purity,trace_err");
    let snap = fs::read_to_string(dir.path().join("q_rho_t1.csv")).unwrap();
    assert_eq!(
        snap.lines().nth(1).unwrap(),
        "two_m_over_n_row,two_m_over_n_col,abs_rho"
    );
    assert_eq!(snap.lines().count(), 2 + 7 * 7);
}

#[test]
fn compare_and_map_outputs() {
    let out = macrospin(&[
        "compare", "--gamma", "3.306", "--kappa", "5", "--j", "0,1,0", "--n-list", "2,4",
        "--t-end", "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let data = rows(&stdout(&out));
    assert_eq!(data.len(), 2 * 11);
    assert!(data.iter().all(|r| r[2] >= 0.0));

    let out = macrospin(&[
        "mle-map",
        "--gammas",
        "1,3,3",
        "--kappas",
        "1,2,2",
        "--t-total",
        "50",
        "--transient",
        "10",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().nth(1).unwrap(), "gamma,kappa,mle");
    assert_eq!(rows(&text).len(), 6);

    let out = macrospin(&["mle-map", "--format", "svg"]);
    assert_eq!(out.status.code(), Some(1));
}
