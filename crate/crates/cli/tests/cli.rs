use std::process::{Command, Output};

use tfqkd_core::{ChannelPair, DeviceParams, ProtocolVariant, RunConfig, SourceParams};

fn tfqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tfqkd")).args(args).env_remove("TFQKD_CONFIG").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn missing_config_names_the_path() {
    let o = tfqkd(&["--config", "/definitely/not/here.cfg", "rate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/definitely/not/here.cfg"), "{}", stderr(&o));
}

#[test]
fn config_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("env.cfg");
    std::fs::write(&path, "len_b = 80\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_tfqkd")).arg("rate").env("TFQKD_CONFIG", &path).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("channel.len_b = 80.0"), "{}", stdout(&o));
}

#[test]
fn out_of_range_probability_is_a_config_error() {
    let o = tfqkd(&["--pz_a", "1.1", "rate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("probability out of range"), "{}", stderr(&o));
}

#[test]
fn malformed_config_line_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, "len_a = 0\nthis line is wrong\n").unwrap();
    let o = tfqkd(&["--config", path.to_str().unwrap(), "rate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn too_few_samples_is_rejected() {
    let o = tfqkd(&["verify", "--samples", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("samples"), "{}", stderr(&o));
}

#[test]
fn empty_or_bad_grid_is_rejected() {
    for args in [
        ["scan", "--la-from", "100", "--la-to", "50"],
        ["scan", "--la-step", "0", "--la-to", "50"],
        ["scan", "--la-step", "-5", "--la-to", "50"],
    ] {
        let o = tfqkd(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn injected_dark_rate_fault_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("noisy.cfg");
    let cfg = RunConfig { device: DeviceParams { dark_rate: 1e-3, ..DeviceParams::reference() }, ..RunConfig::default() };
    std::fs::write(&path, cfg.to_text()).unwrap();
    let o = tfqkd(&["--config", path.to_str().unwrap(), "verify", "--samples", "100000", "--fault-dark-rate", "10"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("s_vac"), "{}", stderr(&o));
}

#[test]
fn verify_passes_without_fault() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("noisy.cfg");
    let cfg = RunConfig { device: DeviceParams { dark_rate: 1e-4, ..DeviceParams::reference() }, ..RunConfig::default() };
    std::fs::write(&path, cfg.to_text()).unwrap();
    let o = tfqkd(&["--config", path.to_str().unwrap(), "--seed", "1", "verify", "--samples", "200000"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 9);
}

#[test]
fn symmetric_variant_rejects_asymmetric_parameters() {
    let o = tfqkd(&["--dec_b2", "0.35", "rate", "--variant", "original"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dec2"), "{}", stderr(&o));
}

#[test]
fn rate_json_mirrors_report_fields() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rate.json");
    let source = SourceParams::symmetric(0.5744, 0.0048, 0.2351, 0.0078, 0.9639, 0.0068, 0.0291, 0.0002, 0.0074);
    let cfg = RunConfig { source, channel: ChannelPair::new(0.0, 50.0), variant: ProtocolVariant::Original, ..RunConfig::default() };
    let path = dir.path().join("tuned.cfg");
    std::fs::write(&path, cfg.to_text()).unwrap();
    let o = tfqkd(&["--config", path.to_str().unwrap(), "--out", out.to_str().unwrap(), "rate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let report = &json["report"];
    for key in ["variant", "channel", "params", "key_length", "rate_per_window", "n1", "e1ph", "n_t", "e_z", "s1z_lower", "plob", "tgw", "security"] {
        assert!(!report[key].is_null(), "missing {key}");
    }
    assert!(report["rate_per_window"].as_f64().unwrap() > 1e-4);
    assert_eq!(json["manifest"]["command"], "rate");
}

#[test]
fn scan_csv_is_stable_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = tfqkd(&["--out", out.to_str().unwrap(), "--seed", "3", "scan", "--la-to", "50", "--variant", "original,general"]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read_to_string(out).unwrap()
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    let strip = |s: &str| s.lines().filter(|l| !l.starts_with("# timestamp") && !l.starts_with("# out")).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&a), strip(&b));

    let data: Vec<&str> = a.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], "la_km,lb_km,variant,rate,key_length,n1,e1ph,ez,plob,tgw");
    assert_eq!(data.len(), 1 + 3 * 2);
    let order: Vec<(&str, &str)> = data[1..].iter().map(|l| {
        let f: Vec<&str> = l.split(',').collect();
        (f[0], f[2])
    }).collect();
    assert_eq!(order, [("0", "original"), ("0", "general"), ("25", "original"), ("25", "general"), ("50", "original"), ("50", "general")]);
    for line in &data[1..] {
        for cell in line.split(',').skip(3) {
            let v: f64 = cell.parse().unwrap();
            assert_eq!(format!("{v:e}"), cell);
        }
    }
    assert!(a.lines().any(|l| l.starts_with("# seed: 3")));
}
