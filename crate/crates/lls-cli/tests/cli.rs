//! Integration tests for the `lls` binary: exit codes, output schemas,
//! and golden headers.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lls"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lls_cli_{}_{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn bad_config_exits_2() {
    let dir = scratch("badcfg");
    let cfg = dir.join("bad.json");
    std::fs::write(&cfg, "{ not json").unwrap();
    let status = bin().args(["sweep", "--config"]).arg(&cfg).arg("--out").arg(&dir).status().unwrap();
    assert_eq!(status.code(), Some(2));
    // invalid values also exit 2
    std::fs::write(&cfg, r#"{"delta_hz": -5.0}"#).unwrap();
    let status = bin().args(["sweep", "--config"]).arg(&cfg).arg("--out").arg(&dir).status().unwrap();
    assert_eq!(status.code(), Some(2));
    // unknown fields are rejected rather than silently ignored
    std::fs::write(&cfg, r#"{"delta_hzz": 90.7}"#).unwrap();
    let status = bin().args(["sweep", "--config"]).arg(&cfg).arg("--out").arg(&dir).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn fit_decay_failure_exits_4() {
    let dir = scratch("fitfail");
    let input = dir.join("two_points.csv");
    std::fs::write(&input, "tau_s,signal\n1.0,0.5\n2.0,0.3\n").unwrap();
    let status = bin()
        .args(["fit-decay", "--input"])
        .arg(&input)
        .arg("--out")
        .arg(&dir)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4));
}

#[test]
fn sweep_headers_and_grid_size() {
    let dir = scratch("sweep");
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, r#"{"t_list_s": [0.01, 0.05], "n_list": [10, 15]}"#).unwrap();
    let status = bin().args(["sweep", "--config"]).arg(&cfg).arg("--out").arg(&dir).status().unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t_total_s,n,mode,alpha_mode,fidelity_final");
    // 2 T x 2 N x 2 modes data rows
    assert_eq!(text.lines().count(), 1 + 8);
    assert!(text.ends_with('\n'));
    assert!(!text.contains('\r'));
    // aggregations exist with their headers
    let by_t = std::fs::read_to_string(dir.join("sweep_avg_by_t.csv")).unwrap();
    assert!(by_t.starts_with("t_total_s,mode,mean_fidelity\n"));
    let by_n = std::fs::read_to_string(dir.join("sweep_avg_by_n.csv")).unwrap();
    assert!(by_n.starts_with("n,mode,mean_fidelity\n"));
}

#[test]
fn default_grid_is_fifty_rows() {
    let dir = scratch("defaultgrid");
    let status = bin().args(["sweep", "--out"]).arg(&dir).status().unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 50, "5 T x 5 N x 2 modes");
}

#[test]
fn eigs_blocks_and_endpoint() {
    let dir = scratch("eigs");
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, r#"{"t_list_s": [0.01, 0.05], "eig_samples": 11}"#).unwrap();
    let status = bin().args(["eigs", "--config"]).arg(&cfg).arg("--out").arg(&dir).status().unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(dir.join("eigenvalues.csv")).unwrap();
    assert!(text.starts_with("t_over_T,e1_rad_s,e2_rad_s,e3_rad_s,e4_rad_s,mode,t_total_s\n"));
    // one block per (mode, T): 2 x 2 x 11 samples
    assert_eq!(text.lines().count(), 1 + 44);
    // AD endpoint rows carry the final-Hamiltonian spectrum
    let last_ad: Vec<&str> = text
        .lines()
        .filter(|l| l.contains(",AD,") && l.starts_with("1.00000000e0,"))
        .collect();
    assert_eq!(last_ad.len(), 2);
    for row in last_ad {
        let cols: Vec<&str> = row.split(',').collect();
        let e1: f64 = cols[1].parse().unwrap();
        let e4: f64 = cols[4].parse().unwrap();
        assert!((e1 + 15.268140296446395).abs() < 1e-6);
        assert!((e4 - 5.089380098815465).abs() < 1e-6);
    }
}

#[test]
fn phases_schema_and_ad_gamma() {
    let dir = scratch("phases");
    let status = bin().args(["phases", "--out"]).arg(&dir).status().unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(dir.join("phases.csv")).unwrap();
    assert!(text.starts_with("mode,t_s,theta_rad,gamma_rad\n"));
    for line in text.lines().skip(1).filter(|l| l.starts_with("AD,")) {
        let gamma: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(gamma.abs() < 1e-8, "AD geometric phase must vanish: {line}");
    }
    // both phases start at zero
    for mode in ["AD", "CD"] {
        let first = text.lines().find(|l| l.starts_with(&format!("{mode},"))).unwrap();
        let cols: Vec<&str> = first.split(',').collect();
        assert_eq!(cols[2].parse::<f64>().unwrap(), 0.0);
        assert_eq!(cols[3].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn compile_outputs_programs_and_timing() {
    let dir = scratch("compile");
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, r#"{"t_list_s": [0.1], "n_list": [10]}"#).unwrap();
    let status = bin().args(["compile", "--config"]).arg(&cfg).arg("--out").arg(&dir).status().unwrap();
    assert!(status.success());
    let ad = std::fs::read_to_string(dir.join("programs/program_ad_t0.1_n10.txt")).unwrap();
    assert!(ad.starts_with("# delta_hz="));
    // 3 init + 60 evolution + 1 storage + 2 detection event lines
    let events = ad.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(events, 66);
    let timing = std::fs::read_to_string(dir.join("timing.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&timing).unwrap();
    let cells = parsed.as_array().unwrap();
    assert_eq!(cells.len(), 1);
    let cell = &cells[0];
    assert!((cell["t_ad_s"].as_f64().unwrap() - 0.1).abs() < 1e-9);
    assert!(cell["f_factor"].as_f64().unwrap() > 1.0);
    assert!(cell["tau0_equalized_s"].as_f64().unwrap() > 0.01);
}

#[test]
fn spectrum_schema() {
    let dir = scratch("spectrum");
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, r#"{"spectrum_points": 512}"#).unwrap();
    let status = bin()
        .args(["spectrum", "--source", "one-pulse", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(dir.join("spectrum_one-pulse.csv")).unwrap();
    assert!(text.starts_with("frequency_hz,amplitude\n"));
    assert_eq!(text.lines().count(), 1 + 512);
    // frequency axis ascends
    let freqs: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(freqs.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn fit_decay_roundtrip_through_file() {
    let dir = scratch("fit");
    let input = dir.join("decay.csv");
    let mut csv = String::from("tau_s,signal\n");
    for k in 1..=8 {
        let tau = 4.0 * k as f64;
        csv.push_str(&format!("{tau},{}\n", 2.5 * (-tau / 12.0f64).exp()));
    }
    std::fs::write(&input, csv).unwrap();
    let status = bin()
        .args(["fit-decay", "--input"])
        .arg(&input)
        .arg("--out")
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("decay_fit.json")).unwrap()).unwrap();
    assert!((fit["t_dec_s"].as_f64().unwrap() - 12.0).abs() < 1e-8);
    assert!((fit["amplitude"].as_f64().unwrap() - 2.5).abs() < 1e-8);
}
