//! `lls` — command-line driver for the two-spin singlet-preparation study:
//! eigenvalue and phase tracks, fidelity sweeps, compiled pulse programs
//! with timing audits, detection spectra, and decay fits, all as CSV/JSON.

use lls_cli::{config, decay, spectrum};

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::RunConfig;
use lls_core::dynamics::{eigen_tracks, phases, sweep, DeviationState, DriveMode};
use lls_core::model::DriveSchedule;
use lls_core::pulse::{
    compile_program, equalize_durations, fmt9, render_program, simulate_program, timing_report,
    PulseError,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_CALIBRATION: u8 = 3;
const EXIT_FIT: u8 = 4;

#[derive(Parser)]
#[command(name = "lls", version, about = "Singlet-state preparation: simulation and pulse compilation")]
struct Cli {
    /// JSON run configuration; defaults reproduce the reference data.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Instantaneous drive eigenvalues per (mode, T) as CSV.
    Eigs,
    /// Dynamical and geometric phase tracks as CSV.
    Phases,
    /// Final-fidelity (T, N, mode) grid with aggregations as CSV.
    Sweep,
    /// Pulse programs for the full grid plus a timing report.
    Compile,
    /// Detection spectrum for a chosen source state.
    Spectrum {
        /// one-pulse | rho-s0 | ad | cd
        #[arg(long, default_value = "rho-s0")]
        source: String,
    },
    /// Fit an exponential decay to (tau_s, signal) CSV data.
    FitDecay {
        /// Input CSV; when omitted, a synthetic noiseless series is
        /// generated and fitted.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run every command with the current configuration.
    All,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match RunConfig::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(err) => {
            eprintln!("config error: {err:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run(&cli, &config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = classify(&err);
            ExitCode::from(code)
        }
    }
}

fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(PulseError::CalibrationFailed { .. }) = cause.downcast_ref::<PulseError>() {
            return EXIT_CALIBRATION;
        }
        if cause.to_string().starts_with("fit failed") {
            return EXIT_FIT;
        }
    }
    1
}

fn run(cli: &Cli, config: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("cannot create output directory {}", cli.out.display()))?;
    match &cli.command {
        Command::Eigs => cmd_eigs(config, &cli.out),
        Command::Phases => cmd_phases(config, &cli.out),
        Command::Sweep => cmd_sweep(config, &cli.out),
        Command::Compile => cmd_compile(config, &cli.out),
        Command::Spectrum { source } => cmd_spectrum(config, &cli.out, source),
        Command::FitDecay { input } => cmd_fit_decay(config, &cli.out, input.as_deref()),
        Command::All => {
            cmd_eigs(config, &cli.out)?;
            cmd_phases(config, &cli.out)?;
            cmd_sweep(config, &cli.out)?;
            cmd_compile(config, &cli.out)?;
            for source in ["one-pulse", "rho-s0", "ad", "cd"] {
                cmd_spectrum(config, &cli.out, source)?;
            }
            cmd_fit_decay(config, &cli.out, None)
        }
    }
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_eigs(config: &RunConfig, out: &Path) -> Result<()> {
    let sys = config.spin_system()?;
    let alpha = config.alpha_mode()?;
    let mut csv = String::from("t_over_T,e1_rad_s,e2_rad_s,e3_rad_s,e4_rad_s,mode,t_total_s\n");
    for mode in config.drive_modes()? {
        for &t_total in &config.t_list_s {
            let schedule = DriveSchedule::new(t_total, config.n_list[0])?;
            let track = eigen_tracks(&sys, &schedule, mode, alpha, config.eig_samples)?;
            for (frac, evs) in track.t_over_t.iter().zip(track.eigenvalues.iter()) {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    fmt9(*frac),
                    fmt9(evs[0]),
                    fmt9(evs[1]),
                    fmt9(evs[2]),
                    fmt9(evs[3]),
                    mode.label(),
                    fmt9(t_total),
                ));
            }
        }
    }
    write_text(&out.join("eigenvalues.csv"), &csv)
}

fn cmd_phases(config: &RunConfig, out: &Path) -> Result<()> {
    let sys = config.spin_system()?;
    let alpha = config.alpha_mode()?;
    let samples = config.phase_n * config.phase_oversample + 1;
    let schedule = DriveSchedule::new(config.phase_t_s, config.phase_n)?;
    let mut csv = String::from("mode,t_s,theta_rad,gamma_rad\n");
    for mode in config.drive_modes()? {
        let track = phases(&sys, &schedule, mode, alpha, samples)?;
        for k in 0..track.times.len() {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                mode.label(),
                fmt9(track.times[k]),
                fmt9(track.theta[k]),
                fmt9(track.gamma[k]),
            ));
        }
    }
    write_text(&out.join("phases.csv"), &csv)
}

fn cmd_sweep(config: &RunConfig, out: &Path) -> Result<()> {
    let sys = config.spin_system()?;
    let modes = config.drive_modes()?;
    let result = sweep(
        &sys,
        &config.t_list_s,
        &config.n_list,
        &modes,
        config.alpha_mode()?,
        config.initial_state()?,
    )?;
    let mut csv = String::from("t_total_s,n,mode,alpha_mode,fidelity_final\n");
    for cell in &result.cells {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt9(cell.t_total),
            cell.segments,
            cell.mode.label(),
            config.alpha_mode_label(),
            fmt9(cell.final_fidelity),
        ));
    }
    write_text(&out.join("sweep.csv"), &csv)?;

    // bar-chart style aggregations: mean over N per T, and mean over T per N
    let mut by_t = String::from("t_total_s,mode,mean_fidelity\n");
    for &t in &config.t_list_s {
        for &mode in &modes {
            let values: Vec<f64> = result
                .cells
                .iter()
                .filter(|c| c.t_total == t && c.mode == mode)
                .map(|c| c.final_fidelity)
                .collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            by_t.push_str(&format!("{},{},{}\n", fmt9(t), mode.label(), fmt9(mean)));
        }
    }
    write_text(&out.join("sweep_avg_by_t.csv"), &by_t)?;

    let mut by_n = String::from("n,mode,mean_fidelity\n");
    for &n in &config.n_list {
        for &mode in &modes {
            let values: Vec<f64> = result
                .cells
                .iter()
                .filter(|c| c.segments == n && c.mode == mode)
                .map(|c| c.final_fidelity)
                .collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            by_n.push_str(&format!("{},{},{}\n", n, mode.label(), fmt9(mean)));
        }
    }
    write_text(&out.join("sweep_avg_by_n.csv"), &by_n)
}

fn cmd_compile(config: &RunConfig, out: &Path) -> Result<()> {
    let sys = config.spin_system()?;
    let opts = config.compile_options()?;
    let modes = config.drive_modes()?;
    let programs_dir = out.join("programs");
    std::fs::create_dir_all(&programs_dir)?;

    let mut timing = String::from("[\n");
    let mut first = true;
    for &t_total in &config.t_list_s {
        for &n in &config.n_list {
            let schedule = DriveSchedule::new(t_total, n)?;
            for &mode in &modes {
                let program =
                    compile_program(&sys, &schedule, mode, &opts, config.tau_storage_s)?;
                let name = format!("program_{}_t{}_n{}.txt", mode.label().to_lowercase(), t_total, n);
                write_text(&programs_dir.join(name), &render_program(&program))?;
            }
            let report = timing_report(&sys, &schedule, &opts)?;
            let tau0_eq = equalize_durations(&sys, &schedule, &opts)?;
            if !first {
                timing.push_str(",\n");
            }
            first = false;
            timing.push_str(&format!(
                "  {{\"t_total_s\": {}, \"n\": {}, \"t_ad_s\": {}, \"t_cd_s\": {}, \"f_factor\": {}, \"symbolic_estimate_s\": {}, \"tau0_equalized_s\": {}}}",
                fmt9(t_total),
                n,
                fmt9(report.t_ad),
                fmt9(report.t_cd),
                fmt9(report.f_factor),
                fmt9(report.symbolic_estimate),
                fmt9(tau0_eq),
            ));
        }
    }
    timing.push_str("\n]\n");
    write_text(&out.join("timing.json"), &timing)
}

fn cmd_spectrum(config: &RunConfig, out: &Path, source: &str) -> Result<()> {
    let sys = config.spin_system()?;
    let params = spectrum::SpectrumParams {
        line_width_hz: config.spectrum_line_width_hz,
        points: config.spectrum_points,
        sweep_hz: config.spectrum_sweep_hz,
    };
    let opts = config.compile_options()?;

    let state = match source {
        "one-pulse" => {
            let pulse = lls_core::pulse::PulseEvent::HardPulse {
                phase: lls_core::pulse::Phase::PlusY,
                angle: std::f64::consts::FRAC_PI_2,
            };
            let u = lls_core::pulse::event_unitary(&sys, &pulse)?;
            DeviationState::thermal().conjugated_by(&u)
        }
        "rho-s0" => {
            // the idealized detected singlet order: storage state through
            // the detection block alone
            let schedule = DriveSchedule::new(config.spectrum_ad_t_s, config.spectrum_ad_n)?;
            let program =
                compile_program(&sys, &schedule, DriveMode::Adiabatic, &opts, config.tau_storage_s)?;
            lls_core::pulse::simulate_events(
                &sys,
                &program.detection,
                &DeviationState::singlet_order(),
            )?
        }
        "ad" | "cd" => {
            let (mode, t_total, n) = if source == "ad" {
                (DriveMode::Adiabatic, config.spectrum_ad_t_s, config.spectrum_ad_n)
            } else {
                (DriveMode::Counterdiabatic, config.spectrum_cd_t_s, config.spectrum_cd_n)
            };
            let schedule = DriveSchedule::new(t_total, n)?;
            let program = compile_program(&sys, &schedule, mode, &opts, config.tau_storage_s)?;
            simulate_program(&sys, &program, &DeviationState::thermal())?
        }
        other => anyhow::bail!("unknown spectrum source {other:?}"),
    };

    let points = spectrum::synthesize(&sys, &state, &params)?;
    let mut csv = String::from("frequency_hz,amplitude\n");
    for p in &points {
        csv.push_str(&format!("{},{}\n", fmt9(p.frequency_hz), fmt9(p.amplitude)));
    }
    write_text(&out.join(format!("spectrum_{source}.csv")), &csv)
}

fn cmd_fit_decay(config: &RunConfig, out: &Path, input: Option<&Path>) -> Result<()> {
    let samples: Vec<(f64, f64)> = match input {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            parse_decay_csv(&text)?
        }
        None => {
            // synthetic noiseless series at the reference lifetime
            let series: Vec<(f64, f64)> =
                (1..=10).map(|k| (5.0 * k as f64, (-(5.0 * k as f64) / 27.3).exp())).collect();
            let mut csv = String::from("tau_s,signal\n");
            for &(tau, signal) in &series {
                csv.push_str(&format!("{},{}\n", fmt9(tau), fmt9(signal)));
            }
            write_text(&out.join("decay_synthetic.csv"), &csv)?;
            series
        }
    };
    let fit = decay::fit_decay(&samples)?;
    let ratio = fit.t_dec_s / config.t1_s;
    let json = format!(
        "{{\n  \"amplitude\": {},\n  \"t_dec_s\": {},\n  \"residual_norm\": {},\n  \"points_used\": {},\n  \"points_skipped\": {},\n  \"t1_s\": {},\n  \"t_dec_over_t1\": {}\n}}\n",
        fmt9(fit.amplitude),
        fmt9(fit.t_dec_s),
        fmt9(fit.residual_norm),
        fit.points_used,
        fit.points_skipped,
        fmt9(config.t1_s),
        fmt9(ratio),
    );
    write_text(&out.join("decay_fit.json"), &json)
}

fn parse_decay_csv(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if idx == 0 && line.chars().any(|c| c.is_alphabetic()) {
            continue; // header row
        }
        let mut parts = line.split(',');
        let tau: f64 = parts
            .next()
            .context("missing tau column")?
            .trim()
            .parse()
            .with_context(|| format!("bad tau on line {}", idx + 1))?;
        let signal: f64 = parts
            .next()
            .context("missing signal column")?
            .trim()
            .parse()
            .with_context(|| format!("bad signal on line {}", idx + 1))?;
        out.push((tau, signal));
    }
    Ok(out)
}
