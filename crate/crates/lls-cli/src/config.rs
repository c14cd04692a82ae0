//! Run configuration: a single JSON document in which every field has a
//! default matching the reference parameters, so `lls all` reproduces all
//! outputs with no arguments.

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use lls_core::dynamics::{DriveMode, InitialState};
use lls_core::model::AlphaMode;
use lls_core::pulse::{CompileOptions, WMode};

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub delta_hz: f64,
    pub j_hz: f64,
    pub t_list_s: Vec<f64>,
    pub n_list: Vec<usize>,
    pub modes: Vec<String>,
    pub alpha_mode: String,
    pub initial_state: String,
    pub w_mode: String,
    pub nu_x_hz: f64,
    pub nu_f_hz: f64,
    pub tau_storage_s: f64,
    pub eig_samples: usize,
    pub phase_t_s: f64,
    pub phase_n: usize,
    pub phase_oversample: usize,
    pub spectrum_line_width_hz: f64,
    pub spectrum_points: usize,
    pub spectrum_sweep_hz: f64,
    pub spectrum_ad_t_s: f64,
    pub spectrum_ad_n: usize,
    pub spectrum_cd_t_s: f64,
    pub spectrum_cd_n: usize,
    pub t1_s: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            delta_hz: 90.7,
            j_hz: 3.24,
            t_list_s: vec![0.01, 0.05, 0.1, 0.3, 0.5],
            n_list: vec![10, 15, 20, 25, 30],
            modes: vec!["AD".into(), "CD".into()],
            alpha_mode: "closed-form".into(),
            initial_state: "rho1".into(),
            w_mode: "approx".into(),
            nu_x_hz: 20_000.0,
            nu_f_hz: 2_500.0,
            tau_storage_s: 30.0,
            eig_samples: 201,
            phase_t_s: 0.01,
            phase_n: 30,
            phase_oversample: 10,
            spectrum_line_width_hz: 0.5,
            spectrum_points: 4096,
            spectrum_sweep_hz: 512.0,
            spectrum_ad_t_s: 0.1,
            spectrum_ad_n: 15,
            spectrum_cd_t_s: 0.5,
            spectrum_cd_n: 30,
            t1_s: 5.1,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&std::path::Path>) -> Result<Self> {
        let config: RunConfig = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("cannot parse config {}", p.display()))?
            }
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_list_s.is_empty() || self.n_list.is_empty() || self.modes.is_empty() {
            bail!("t_list_s, n_list, and modes must be nonempty");
        }
        for &t in &self.t_list_s {
            if t.is_nan() || t <= 0.0 {
                bail!("total times must be positive, got {t}");
            }
        }
        for &n in &self.n_list {
            if n == 0 {
                bail!("segment counts must be >= 1");
            }
        }
        for quantity in [
            self.delta_hz,
            self.j_hz,
            self.nu_x_hz,
            self.nu_f_hz,
            self.tau_storage_s,
            self.phase_t_s,
            self.spectrum_line_width_hz,
            self.spectrum_sweep_hz,
            self.t1_s,
        ] {
            if quantity.is_nan() || quantity <= 0.0 || !quantity.is_finite() {
                bail!("physical quantities must be positive and finite, got {quantity}");
            }
        }
        self.drive_modes()?;
        self.alpha_mode()?;
        self.initial_state()?;
        self.w_mode()?;
        Ok(())
    }

    pub fn spin_system(&self) -> Result<lls_core::model::SpinSystem> {
        Ok(lls_core::model::SpinSystem::new(self.delta_hz, self.j_hz)?)
    }

    pub fn drive_modes(&self) -> Result<Vec<DriveMode>> {
        self.modes
            .iter()
            .map(|m| match m.as_str() {
                "AD" => Ok(DriveMode::Adiabatic),
                "CD" => Ok(DriveMode::Counterdiabatic),
                other => bail!("unknown mode {other:?} (expected \"AD\" or \"CD\")"),
            })
            .collect()
    }

    pub fn alpha_mode(&self) -> Result<AlphaMode> {
        match self.alpha_mode.as_str() {
            "closed-form" => Ok(AlphaMode::ClosedForm),
            "variational" => Ok(AlphaMode::Variational),
            other => bail!("unknown alpha_mode {other:?}"),
        }
    }

    pub fn initial_state(&self) -> Result<InitialState> {
        match self.initial_state.as_str() {
            "rho1" => Ok(InitialState::Rho1),
            "pure-ground" => Ok(InitialState::PureGround),
            other => bail!("unknown initial_state {other:?}"),
        }
    }

    pub fn w_mode(&self) -> Result<WMode> {
        match self.w_mode.as_str() {
            "approx" => Ok(WMode::Approx),
            "exact" => Ok(WMode::Exact),
            other => bail!("unknown w_mode {other:?}"),
        }
    }

    pub fn compile_options(&self) -> Result<CompileOptions> {
        Ok(CompileOptions {
            nu_x_hz: self.nu_x_hz,
            nu_f_hz: self.nu_f_hz,
            w_mode: self.w_mode()?,
            ..CompileOptions::default()
        })
    }

    pub fn alpha_mode_label(&self) -> &str {
        &self.alpha_mode
    }
}
