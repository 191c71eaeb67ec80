use std::path::Path;
use std::process::{Command, Output};

use dopcap_cli::config::Config;
use dopcap_cli::sweep::csv_string;
use dopcap_cli::{run_sweep, BoundName, SweepOptions, CSV_HEADER};
use dopcap_core::matrix_io;

fn dopcap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dopcap")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn single_cell_coherent_sweep_is_tight() {
    let cfg = Config::from_toml(
        r#"
        [sweep]
        snr_db = [20]
        sigma = [0.0]
        n_subcarriers = 8
        realizations = 1
        bounds = ["gaussian_optimal", "ub_logdet"]
        [lower]
        q_policy = "logdet_argmax"
        "#,
    )
    .unwrap();
    let rows = run_sweep(&cfg, &SweepOptions::default()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].q_policy, "logdet_argmax");
    assert!((rows[0].rate_nats - rows[1].rate_nats).abs() < 1e-6);
}

#[test]
fn empty_bound_list_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let res = dopcap(&["bounds", "sweep", "--out", path(&out), "--bounds", ""]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("bounds"));
    assert!(!out.exists());
}

#[test]
fn unknown_config_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[sweep]\nsnr = [1]\n").unwrap();
    let res = dopcap(&["bounds", "sweep", "--config", path(&cfg), "--out", path(&dir.path().join("x.csv"))]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn validate_passes_and_negative_control_fails() {
    let ok = dopcap(&["validate"]);
    let text = String::from_utf8_lossy(&ok.stdout);
    assert_eq!(ok.status.code(), Some(0), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 7);

    let bad = dopcap(&["validate", "--inject-transposed-g"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL linearization_finite_difference"));
}

#[test]
fn validate_is_stable_across_seeds() {
    for seed in 2..6 {
        let res = dopcap(&["validate", "--seed", &seed.to_string()]);
        assert_eq!(res.status.code(), Some(0), "seed {seed}: {}", String::from_utf8_lossy(&res.stdout));
    }
}

#[test]
fn channel_build_then_file_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let res = dopcap(&["channel", "build", "--n", "8", "--out-dir", path(dir.path()), "--doppler", "0.001"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let f = matrix_io::read_matrix(&dir.path().join("F.txt")).unwrap();
    let g = matrix_io::read_matrix(&dir.path().join("G.txt")).unwrap();
    let h = matrix_io::read_matrix(&dir.path().join("H.txt")).unwrap();
    assert_eq!(f.shape(), (8, 8));
    // First-order model holds at small Doppler.
    let lin = &f + &g * dopcap_core::linalg::re(0.001);
    assert!((&h - &lin).norm() < 1e-4 * g.norm());

    // Matrix paths in a config are relative to the config file.
    let cfg = dir.path().join("file.toml");
    std::fs::write(
        &cfg,
        "[sweep]\nsnr_db = [10]\nsigma = [0.1]\nbounds = [\"gaussian_linear\", \"ub_logdet\"]\n\
         [channel]\nsource = \"synthetic_file\"\nf_file = \"F.txt\"\ng_file = \"G.txt\"\n",
    )
    .unwrap();
    let out = dir.path().join("file.csv");
    let res = dopcap(&["bounds", "sweep", "--config", path(&cfg), "--out", path(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], CSV_HEADER);
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("10.0,0.1,8,gaussian_linear,"));
    let meta = std::fs::read_to_string(dir.path().join("file.csv.meta.toml")).unwrap();
    assert!(meta.contains("channel_source = \"synthetic_file\""));
    assert!(meta.contains("realizations = 1"));
}

#[test]
fn precoder_inspect_reports_alignment() {
    let res = dopcap(&["precoder", "inspect", "--n", "16", "--tap-seed", "3"]);
    assert!(res.status.success());
    let text = String::from_utf8_lossy(&res.stdout);
    let ratio: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("rank_ratio = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(ratio < 1e-8);
    assert!(text.contains("d_perp = "));
}

#[test]
fn snr_convention_flag_changes_power() {
    let dir = tempfile::tempdir().unwrap();
    let run = |conv: &str| {
        let out = dir.path().join(format!("{conv}.csv"));
        let res = dopcap(&[
            "--snr-convention",
            conv,
            "bounds",
            "sweep",
            "--out",
            path(&out),
            "--n",
            "4",
            "--realizations",
            "1",
            "--snr-db",
            "10",
            "--sigma",
            "0",
            "--bounds",
            "ub_logdet",
        ]);
        assert!(res.status.success());
        let meta = std::fs::read_to_string(dir.path().join(format!("{conv}.csv.meta.toml"))).unwrap();
        assert!(meta.contains(&format!("snr_convention = \"{conv}\"")));
        let text = std::fs::read_to_string(out).unwrap();
        text.lines().nth(1).unwrap().split(',').nth(4).unwrap().parse::<f64>().unwrap()
    };
    assert!(run("per-subcarrier") > run("total") + 1.0);
}

#[test]
fn failing_bound_leaves_error_row_and_sweep_continues() {
    let cfg = Config::from_toml(
        r#"
        [sweep]
        snr_db = [0, 10]
        sigma = [0.0]
        n_subcarriers = 4
        realizations = 2
        bounds = ["ub_dof", "ub_logdet"]
        "#,
    )
    .unwrap();
    let rows = run_sweep(&cfg, &SweepOptions::default()).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows[..2].iter().all(|r| r.is_error() && r.rate_nats.is_nan() && r.certified == "false"));
    assert!(rows[2..].iter().all(|r| !r.is_error() && r.certified == "true"));
}

/// Layout of the figure CSV consumed by the plotting tool: exact header,
/// one row per (sigma, bound, snr), rate_bits = rate_nats / ln 2.
#[test]
fn figure_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig.csv");
    let res = dopcap(&[
        "figure",
        "--out",
        path(&out),
        "--n",
        "8",
        "--realizations",
        "1",
        "--mc-samples",
        "1000",
        "--snr-db",
        "0,20",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let mut reader = csv::Reader::from_path(&out).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header.join(","), CSV_HEADER);
    let records: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    // Default figure bounds: 4 bounds × 2 sigmas × 2 SNRs.
    assert_eq!(records.len(), 16);
    let mut sigmas: Vec<&str> = records.iter().map(|r| &r[1]).collect();
    sigmas.dedup();
    assert_eq!(sigmas, ["0.1", "0.01"]);
    for r in &records {
        let nats: f64 = r[4].parse().unwrap();
        let bits: f64 = r[5].parse().unwrap();
        assert!((bits - nats / std::f64::consts::LN_2).abs() < 1e-9 * bits.abs().max(1.0));
        assert!(["true", "false", "na"].contains(&&r[12]));
        let upper = BoundName::parse(&r[3]).unwrap().is_upper();
        assert_eq!(&r[12] == "na", !upper);
        assert_eq!(&r[11], "0");
    }
}

#[test]
fn timing_flag_only_touches_wall_ms() {
    let mut cfg = Config::from_toml("[sweep]\nsnr_db = [10]\nsigma = [0.1]\nn_subcarriers = 4\nrealizations = 1\n").unwrap();
    cfg.sweep.bounds = vec![BoundName::GaussianLinear, BoundName::UbDof];
    let plain = run_sweep(&cfg, &SweepOptions::default()).unwrap();
    let timed = run_sweep(&cfg, &SweepOptions { timing: true }).unwrap();
    for (a, b) in plain.iter().zip(&timed) {
        assert_eq!(a.rate_nats, b.rate_nats);
        assert_eq!(a.wall_ms, 0);
    }
    assert_eq!(csv_string(&plain).unwrap(), csv_string(&run_sweep(&cfg, &SweepOptions::default()).unwrap()).unwrap());
}
