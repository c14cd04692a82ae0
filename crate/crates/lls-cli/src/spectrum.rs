//! Detection-spectrum synthesis: evolve a deviation state under H_I,
//! record the complex transverse magnetization, apodize, and Fourier
//! transform.

use anyhow::Result;
use lls_core::Complex64 as C64;
use rustfft::FftPlanner;

use lls_core::dynamics::DeviationState;
use lls_core::linalg::ComplexMatrix;
use lls_core::model::{SpinOperators, SpinSystem};
use lls_core::pulse::{event_unitary, PulseEvent};

#[derive(Debug, Clone, Copy)]
pub struct SpectrumParams {
    /// Exponential apodization, Lorentzian full width at half maximum, Hz.
    pub line_width_hz: f64,
    pub points: usize,
    /// Spectral width, Hz; the dwell time is its inverse.
    pub sweep_hz: f64,
}

/// One spectrum sample.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumPoint {
    pub frequency_hz: f64,
    pub amplitude: f64,
}

/// Synthesize the spectrum of a deviation state: the free-induction signal
/// M(t) = Tr[ρ(t)(I1x + iI1y + I2x + iI2y)] under H_I evolution with
/// exponential apodization, discrete Fourier transformed; the real part is
/// returned on an ascending frequency axis.
pub fn synthesize(
    sys: &SpinSystem,
    state: &DeviationState,
    params: &SpectrumParams,
) -> Result<Vec<SpectrumPoint>> {
    let ops = SpinOperators::cached();
    // F+ = (I1x + I2x) + i (I1y + I2y)
    let fplus = ops
        .i1x
        .add(&ops.i2x)
        .add(&ops.i1y.add(&ops.i2y).scale(C64::new(0.0, 1.0)));

    let dwell = 1.0 / params.sweep_hz;
    let step = event_unitary(sys, &PulseEvent::delay(dwell))?;
    let decay_rate = std::f64::consts::PI * params.line_width_hz;

    let mut rho: ComplexMatrix = state.operator().matrix().clone();
    let mut fid = Vec::with_capacity(params.points);
    for k in 0..params.points {
        let t = k as f64 * dwell;
        let m = rho.matmul(&fplus).trace();
        fid.push(m * C64::new((-decay_rate * t).exp() * dwell, 0.0));
        rho = step.matrix().matmul(&rho).matmul(&step.matrix().adjoint());
    }

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(params.points);
    let mut buffer: Vec<rustfft::num_complex::Complex<f64>> =
        fid.iter().map(|z| rustfft::num_complex::Complex::new(z.re, z.im)).collect();
    fft.process(&mut buffer);

    // reorder to an ascending frequency axis centered at zero
    let n = params.points;
    let half = n / 2;
    let mut out = Vec::with_capacity(n);
    for idx in 0..n {
        let bin = (idx + half) % n;
        let freq = (bin as f64 - if bin >= half { n as f64 } else { 0.0 }) / (n as f64 * dwell);
        out.push(SpectrumPoint { frequency_hz: freq, amplitude: buffer[bin].re });
    }
    Ok(out)
}
