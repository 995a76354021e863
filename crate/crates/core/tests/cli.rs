//! End-to-end checks of the command-line interface: argument handling, exit
//! codes, config-file overrides, and the output-root environment variable.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_yieldgan"))
}

fn write_fred_fixtures(dir: &Path) {
    // 1962-01-02 was a Tuesday; include a holiday "." row
    std::fs::write(
        dir.join("DGS1.csv"),
        "observation_date,DGS1\n1962-01-02,3.22\n1962-01-03,3.24\n1962-01-04,.\n1962-01-05,3.26\n1962-01-08,3.28\n",
    )
    .unwrap();
    std::fs::write(
        dir.join("DGS10.csv"),
        "observation_date,DGS10\n1962-01-02,4.06\n1962-01-03,4.03\n1962-01-04,4.05\n1962-01-05,4.07\n1962-01-08,4.08\n",
    )
    .unwrap();
    std::fs::write(
        dir.join("USRECD.csv"),
        "observation_date,USRECD\n1962-01-02,0\n1962-01-03,0\n1962-01-04,0\n1962-01-05,1\n1962-01-08,1\n",
    )
    .unwrap();
}

#[test]
fn ingest_drops_holiday_rows_and_writes_panel() {
    let dir = tempfile::tempdir().unwrap();
    write_fred_fixtures(dir.path());
    let out = dir.path().join("panel.csv");
    let status = bin()
        .args(["ingest", "--start", "1962-01-02", "--end", "1962-12-31"])
        .arg("--y1")
        .arg(dir.path().join("DGS1.csv"))
        .arg("--y10")
        .arg(dir.path().join("DGS10.csv"))
        .arg("--rec")
        .arg(dir.path().join("USRECD.csv"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    // the "." day (1962-01-04) is dropped under the default policy
    assert_eq!(text.lines().count(), 1 + 4);
    assert!(!text.contains("1962-01-04"));
    assert!(text.contains("1962-01-05,3.26,4.07,1"));
    // a sibling manifest records the run
    assert!(dir.path().join("panel.csv.manifest.json").exists());
}

#[test]
fn forward_fill_policy_keeps_holiday_rows() {
    let dir = tempfile::tempdir().unwrap();
    write_fred_fixtures(dir.path());
    let out = dir.path().join("panel.csv");
    let status = bin()
        .args(["ingest", "--start", "1962-01-02", "--end", "1962-12-31", "--policy", "forward-fill"])
        .arg("--y1")
        .arg(dir.path().join("DGS1.csv"))
        .arg("--y10")
        .arg(dir.path().join("DGS10.csv"))
        .arg("--rec")
        .arg(dir.path().join("USRECD.csv"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("1962-01-04,3.24,4.05,0")); // y1 carried forward
}

#[test]
fn missing_input_file_exits_with_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["ingest", "--start", "1962-01-02", "--end", "1962-12-31"])
        .args(["--y1", "nope.csv", "--y10", "nope.csv", "--rec", "nope.csv"])
        .arg("--out")
        .arg(dir.path().join("panel.csv"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn bad_config_json_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    write_fred_fixtures(dir.path());
    let cfg = dir.path().join("broken.json");
    std::fs::write(&cfg, "{ not json").unwrap();
    let status = bin()
        .args(["run-experiment", "forecast", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("run"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let panel = yieldgan::toy::synthetic_weekday_panel(120, &[(20, 50)], 4);
    let panel_path = dir.path().join("panel.csv");
    panel.save_csv(&panel_path).unwrap();
    let status = bin()
        .args(["make-samples", "--kind", "gan", "--window", "10"])
        .arg("--panel")
        .arg(&panel_path)
        .arg("--out")
        .arg(dir.path().join("set"))
        .status()
        .unwrap();
    assert!(status.success());

    // flag says 9 epochs; config file overrides to 1
    let cfg = dir.path().join("gan.json");
    std::fs::write(
        &cfg,
        r#"{"t":10,"s":5,"z_attr":2,"z_minmax":2,"z_seq":2,"attr_hidden":[4],
            "minmax_hidden":[4],"seq_width":4,"critic_hidden":[6],"aux_hidden":[4],
            "epochs":1,"batch_size":8}"#,
    )
    .unwrap();
    let status = bin()
        .args(["train-gan", "--epochs", "9", "--seed", "3"])
        .arg("--data")
        .arg(dir.path().join("set"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("gan.ckpt"))
        .status()
        .unwrap();
    assert!(status.success());
    let history = std::fs::read_to_string(dir.path().join("gan.history.csv")).unwrap();
    assert_eq!(history.lines().count(), 2, "config epochs=1 should override --epochs 9");
}

#[test]
fn output_root_env_var_redirects_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    write_fred_fixtures(dir.path());
    let status = bin()
        .env("YIELDGAN_OUT", dir.path())
        .args(["ingest", "--start", "1962-01-02", "--end", "1962-12-31"])
        .arg("--y1")
        .arg(dir.path().join("DGS1.csv"))
        .arg("--y10")
        .arg(dir.path().join("DGS10.csv"))
        .arg("--rec")
        .arg(dir.path().join("USRECD.csv"))
        .args(["--out", "nested/panel.csv"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("nested/panel.csv").exists());
}

#[test]
fn forecast_writes_per_day_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let panel = yieldgan::toy::synthetic_weekday_panel(80, &[], 6);
    let panel_path = dir.path().join("panel.csv");
    panel.save_csv(&panel_path).unwrap();

    let status = bin()
        .args(["make-samples", "--kind", "forecast", "--window", "5", "--horizon", "1"])
        .arg("--panel")
        .arg(&panel_path)
        .arg("--out")
        .arg(dir.path().join("fc"))
        .status()
        .unwrap();
    assert!(status.success());

    let cfg = dir.path().join("net.json");
    std::fs::write(&cfg, r#"{"epochs":1,"lstm_widths":[4,4],"batch_size":64}"#).unwrap();
    let status = bin()
        .args(["train-forecaster", "--horizon", "1"])
        .arg("--data")
        .arg(dir.path().join("fc"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("fc.ckpt"))
        .status()
        .unwrap();
    assert!(status.success());

    let out = dir.path().join("forecasts.csv");
    let status = bin()
        .arg("forecast")
        .arg("--ckpt")
        .arg(dir.path().join("fc.ckpt"))
        .arg("--panel")
        .arg(&panel_path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next(), Some("date,y1,y10"));
    assert_eq!(text.lines().count() - 1, 80 - 5 + 1);
}

#[test]
fn classify_writes_date_probability_csv() {
    let dir = tempfile::tempdir().unwrap();
    let panel = yieldgan::toy::synthetic_weekday_panel(200, &[(50, 90)], 8);
    let panel_path = dir.path().join("panel.csv");
    panel.save_csv(&panel_path).unwrap();

    let status = bin()
        .args(["make-samples", "--kind", "classify", "--window", "10", "--lookahead", "20"])
        .arg("--panel")
        .arg(&panel_path)
        .arg("--out")
        .arg(dir.path().join("cls"))
        .status()
        .unwrap();
    assert!(status.success());

    let status = bin()
        .args(["train-classifier", "--kind", "logistic", "--lambda", "0.05"])
        .arg("--data")
        .arg(dir.path().join("cls"))
        .arg("--out")
        .arg(dir.path().join("logit.ckpt"))
        .status()
        .unwrap();
    assert!(status.success());

    let probs = dir.path().join("probs.csv");
    let status = bin()
        .arg("classify")
        .arg("--ckpt")
        .arg(dir.path().join("logit.ckpt"))
        .arg("--panel")
        .arg(&panel_path)
        .arg("--out")
        .arg(&probs)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&probs).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("date,probability"));
    let n = text.lines().count() - 1;
    assert_eq!(n, 200 - 10 + 1);
    for line in text.lines().skip(1) {
        let (date, p) = line.split_once(',').unwrap();
        assert_eq!(date.len(), 10);
        let p: f64 = p.parse().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
}
