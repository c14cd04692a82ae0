//! State propagation under the discretized drives: trajectories, eigenvalue
//! and phase tracks, adiabaticity diagnostics, fidelity sweeps.
//!
//! All propagation uses exact segment exponentials of the piecewise-constant
//! Hamiltonians; segment 1 is applied first. With the `parallel` feature the
//! sweep grid is evaluated on a rayon pool, and cells are reassembled in the
//! documented (T outer, N inner, mode innermost) order regardless of
//! completion order, so the output is identical to the sequential path.

use num_complex::Complex64 as C64;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{expm_i, herm_eig, HermitianOperator, LinalgError};
use crate::model::{
    discretize, h_ad, h_cd, h_final, h_initial, lambda_of, AlphaMode, DriveSchedule, ModelError,
    SpinOperators, SpinSystem,
};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("deviation state has nonzero trace {0:e}")]
    NonzeroTrace(f64),
    #[error("state has zero norm; fidelity undefined")]
    ZeroNorm,
    #[error("ground-state overlap {overlap} between adjacent samples below 0.5; sampling too coarse")]
    GapClosure { overlap: f64 },
    #[error("degenerate pair ({0}, {1}) carries a nonzero coupling {2:e}")]
    DegeneratePair(usize, usize, f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, DynamicsError>;

/// Traceless deviation density operator (the transformed and detected part
/// of an NMR density matrix). Dimensionless.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationState {
    op: HermitianOperator,
}

impl DeviationState {
    pub fn new(op: HermitianOperator) -> Result<Self> {
        let tr = op.matrix().trace();
        if tr.norm() > 1e-10 {
            return Err(DynamicsError::NonzeroTrace(tr.norm()));
        }
        Ok(Self { op })
    }

    /// Thermal deviation ρ0 = I1z + I2z.
    pub fn thermal() -> Self {
        let ops = SpinOperators::cached();
        Self { op: HermitianOperator::symmetrized(ops.i1z.add(&ops.i2z)) }
    }

    /// ρ1 = I1z - I2z, the state whose excess population sits in |01>.
    pub fn rho1() -> Self {
        let ops = SpinOperators::cached();
        Self { op: HermitianOperator::symmetrized(ops.d.clone()) }
    }

    /// ρ_S0 = -I1·I2, the singlet-order deviation state.
    pub fn singlet_order() -> Self {
        let ops = SpinOperators::cached();
        Self { op: HermitianOperator::symmetrized(ops.dot.scale_re(-1.0)) }
    }

    pub fn operator(&self) -> &HermitianOperator {
        &self.op
    }

    /// Tr[ρ²], conserved under unitary evolution.
    pub fn purity(&self) -> f64 {
        self.op.matrix().matmul(self.op.matrix()).trace().re
    }

    pub fn conjugated_by(&self, u: &crate::linalg::Unitary) -> Self {
        Self { op: u.conjugate(&self.op) }
    }
}

/// Which drive generates the segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DriveMode {
    Adiabatic,
    Counterdiabatic,
}

impl DriveMode {
    pub fn label(&self) -> &'static str {
        match self {
            DriveMode::Adiabatic => "AD",
            DriveMode::Counterdiabatic => "CD",
        }
    }
}

/// Initial condition of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    /// Pure ground state of H_I; fidelity is the singlet population and
    /// saturates near 1.
    PureGround,
    /// Deviation state ρ1; fidelity uses the normalized trace overlap and
    /// saturates at the transport-limited maximum ≈ 0.8165.
    Rho1,
}

/// How fidelity against the singlet order is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FidelityMode {
    /// |Tr[ρ ρ_S0]| / sqrt(Tr[ρ²] Tr[ρ_S0²])
    DeviationOverlap,
    /// |<S0|ψ>|²
    PurePopulation,
}

/// Per-sample record of a trajectory.
#[derive(Debug, Clone)]
pub enum StateSeries {
    Pure(Vec<Vec<C64>>),
    Deviation(Vec<DeviationState>),
}

/// Time series produced by [`evolve`]: one sample before the drive and one
/// after every segment.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: StateSeries,
    pub fidelities: Vec<f64>,
    /// Tr[ρ²] per sample (1.0 for pure states).
    pub purities: Vec<f64>,
    pub mode: DriveMode,
    pub alpha_mode: AlphaMode,
}

impl Trajectory {
    pub fn final_fidelity(&self) -> f64 {
        *self.fidelities.last().expect("trajectory has at least the initial sample")
    }

    /// Maximum |Tr[ρ²] - Tr[ρ(0)²]| along the trajectory.
    pub fn purity_drift(&self) -> f64 {
        let p0 = self.purities[0];
        self.purities.iter().map(|p| (p - p0).abs()).fold(0.0, f64::max)
    }
}

/// Fidelity of a deviation state against the singlet order ρ_S0.
pub fn fidelity_lls(state: &DeviationState) -> Result<f64> {
    let target = DeviationState::singlet_order();
    let overlap = state.op.matrix().matmul(target.op.matrix()).trace().re.abs();
    let n1 = state.purity();
    let n2 = target.purity();
    if n1 <= 1e-30 {
        return Err(DynamicsError::ZeroNorm);
    }
    Ok(overlap / (n1 * n2).sqrt())
}

/// Singlet population of a pure state.
pub fn fidelity_pure(psi: &[C64]) -> f64 {
    // |S0> = (|01> - |10>)/sqrt(2)
    let amp = (psi[1] - psi[2]) / C64::new(std::f64::consts::SQRT_2, 0.0);
    amp.norm_sqr()
}

/// Ground state of H_I as a state vector.
pub fn ground_state(sys: &SpinSystem) -> Result<Vec<C64>> {
    let dec = herm_eig(&h_initial(sys))?;
    Ok(dec.eigenvector(0))
}

/// Propagate an initial state through the N-segment drive, recording the
/// fidelity after every segment. Exact exponentials of the segment
/// Hamiltonians; segment 1 first.
pub fn evolve(
    sys: &SpinSystem,
    schedule: &DriveSchedule,
    mode: DriveMode,
    alpha_mode: AlphaMode,
    initial: InitialState,
) -> Result<Trajectory> {
    let segments = discretize(sys, schedule)?;
    let tau0 = schedule.tau0();
    let n = segments.len();

    let mut times = Vec::with_capacity(n + 1);
    times.push(0.0);

    match initial {
        InitialState::PureGround => {
            let mut psi = ground_state(sys)?;
            let mut states = vec![psi.clone()];
            let mut fids = vec![fidelity_pure(&psi)];
            let mut purities = vec![1.0];
            for seg in &segments {
                let u = segment_unitary(sys, seg, mode, alpha_mode)?;
                psi = u.apply(&psi);
                times.push(seg.n as f64 * tau0);
                fids.push(fidelity_pure(&psi));
                purities.push(1.0);
                states.push(psi.clone());
            }
            Ok(Trajectory {
                times,
                states: StateSeries::Pure(states),
                fidelities: fids,
                purities,
                mode,
                alpha_mode,
            })
        }
        InitialState::Rho1 => {
            let mut rho = DeviationState::rho1();
            let mut states = vec![rho.clone()];
            let mut fids = vec![fidelity_lls(&rho)?];
            let mut purities = vec![rho.purity()];
            for seg in &segments {
                let u = segment_unitary(sys, seg, mode, alpha_mode)?;
                rho = rho.conjugated_by(&u);
                times.push(seg.n as f64 * tau0);
                fids.push(fidelity_lls(&rho)?);
                purities.push(rho.purity());
                states.push(rho.clone());
            }
            Ok(Trajectory {
                times,
                states: StateSeries::Deviation(states),
                fidelities: fids,
                purities,
                mode,
                alpha_mode,
            })
        }
    }
}

/// Exact propagator of one segment.
pub fn segment_unitary(
    sys: &SpinSystem,
    segment: &crate::model::DriveSegment,
    mode: DriveMode,
    alpha_mode: AlphaMode,
) -> Result<crate::linalg::Unitary> {
    let h = segment_hamiltonian(sys, segment, mode, alpha_mode)?;
    Ok(expm_i(&h, segment.tau0)?)
}

/// The piecewise-constant Hamiltonian of one segment.
pub fn segment_hamiltonian(
    sys: &SpinSystem,
    segment: &crate::model::DriveSegment,
    mode: DriveMode,
    alpha_mode: AlphaMode,
) -> Result<HermitianOperator> {
    let h = h_ad(sys, segment.lambda)?;
    match mode {
        DriveMode::Adiabatic => Ok(h),
        DriveMode::Counterdiabatic => match alpha_mode {
            AlphaMode::ClosedForm => {
                let ops = SpinOperators::cached();
                Ok(h.add(&HermitianOperator::symmetrized(ops.y.scale_re(segment.kappa))))
            }
            AlphaMode::Variational => {
                // Reconstruct lambda_dot from kappa's closed form so the
                // segment carries the variational amplitude at the same
                // sampled point.
                let (d, j) = (sys.delta_hz(), sys.j_hz());
                let denom = 4.0 * d * d * (segment.lambda - 1.0).powi(2) + j * j;
                let lambda_dot = if segment.kappa == 0.0 {
                    0.0
                } else {
                    -segment.kappa * denom / (d * j)
                };
                let point = crate::model::SchedulePoint {
                    t: segment.n as f64 * segment.tau0,
                    lambda: segment.lambda,
                    lambda_dot,
                };
                Ok(crate::model::h_cd(sys, &point, AlphaMode::Variational)?)
            }
        },
    }
}

/// Instantaneous eigenvalues of the continuous drive Hamiltonian on a
/// uniform time grid.
#[derive(Debug, Clone)]
pub struct EigenTrack {
    /// t/T per sample.
    pub t_over_t: Vec<f64>,
    /// Four ascending eigenvalues per sample, rad/s.
    pub eigenvalues: Vec<[f64; 4]>,
}

impl EigenTrack {
    /// Largest (max - min) eigenvalue spread along the track.
    pub fn max_spread(&self) -> f64 {
        self.eigenvalues.iter().map(|e| e[3] - e[0]).fold(0.0, f64::max)
    }

    pub fn spreads(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|e| e[3] - e[0]).collect()
    }
}

pub fn eigen_tracks(
    sys: &SpinSystem,
    schedule: &DriveSchedule,
    mode: DriveMode,
    alpha_mode: AlphaMode,
    samples: usize,
) -> Result<EigenTrack> {
    assert!(samples >= 2, "need at least two samples");
    let mut t_over_t = Vec::with_capacity(samples);
    let mut eigenvalues = Vec::with_capacity(samples);
    for k in 0..samples {
        let frac = k as f64 / (samples - 1) as f64;
        let t = if k == samples - 1 { schedule.t_total } else { frac * schedule.t_total };
        let point = lambda_of(schedule, t)?;
        let h = match mode {
            DriveMode::Adiabatic => h_ad(sys, point.lambda)?,
            DriveMode::Counterdiabatic => h_cd(sys, &point, alpha_mode)?,
        };
        let dec = herm_eig(&h)?;
        t_over_t.push(frac);
        eigenvalues.push([
            dec.eigenvalues[0],
            dec.eigenvalues[1],
            dec.eigenvalues[2],
            dec.eigenvalues[3],
        ]);
    }
    Ok(EigenTrack { t_over_t, eigenvalues })
}

/// Dynamical and geometric phase of the instantaneous ground state.
#[derive(Debug, Clone)]
pub struct PhaseTrack {
    pub times: Vec<f64>,
    /// θ(t) = -∫ E_ground dt', trapezoidal.
    pub theta: Vec<f64>,
    /// γ(t) from the discrete overlap formula with gauge-fixed eigenvectors.
    pub gamma: Vec<f64>,
}

pub fn phases(
    sys: &SpinSystem,
    schedule: &DriveSchedule,
    mode: DriveMode,
    alpha_mode: AlphaMode,
    samples: usize,
) -> Result<PhaseTrack> {
    assert!(samples >= 2, "need at least two samples");
    let mut times = Vec::with_capacity(samples);
    let mut energies = Vec::with_capacity(samples);
    let mut vectors: Vec<Vec<C64>> = Vec::with_capacity(samples);
    for k in 0..samples {
        let t = if k == samples - 1 {
            schedule.t_total
        } else {
            k as f64 / (samples - 1) as f64 * schedule.t_total
        };
        let point = lambda_of(schedule, t)?;
        let h = match mode {
            DriveMode::Adiabatic => h_ad(sys, point.lambda)?,
            DriveMode::Counterdiabatic => h_cd(sys, &point, alpha_mode)?,
        };
        let dec = herm_eig(&h)?;
        assert!(
            dec.eigenvalues[1] - dec.eigenvalues[0] > 0.0,
            "ground state must stay nondegenerate"
        );
        times.push(t);
        energies.push(dec.eigenvalues[0]);
        vectors.push(dec.eigenvector(0));
    }

    let mut theta = vec![0.0f64];
    for k in 1..samples {
        let dt = times[k] - times[k - 1];
        theta.push(theta[k - 1] - 0.5 * (energies[k] + energies[k - 1]) * dt);
    }

    let mut gamma = vec![0.0f64];
    let mut acc = 0.0f64;
    for k in 1..samples {
        let overlap: C64 = vectors[k - 1]
            .iter()
            .zip(vectors[k].iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        if overlap.norm() < 0.5 {
            return Err(DynamicsError::GapClosure { overlap: overlap.norm() });
        }
        acc -= overlap.im.atan2(overlap.re);
        gamma.push(acc);
    }

    Ok(PhaseTrack { times, theta, gamma })
}

/// The printed adiabaticity ratio max over ordered pairs m ≠ n of
/// |<m|Ḣ|n>| / |E_n - E_m| with Ḣ = λ̇(H_F - H_I).
///
/// Degenerate pairs are skipped when their coupling vanishes (it always
/// does here) and rejected otherwise.
pub fn adiabaticity_ratio(sys: &SpinSystem, schedule: &DriveSchedule, t: f64) -> Result<f64> {
    let point = lambda_of(schedule, t)?;
    let h = h_ad(sys, point.lambda)?;
    let dec = herm_eig(&h)?;
    let dh = h_final(sys).sub(&h_initial(sys)).scale(point.lambda_dot);
    let v = dec.eigenvectors.matrix();
    let m_eig = v.adjoint().matmul(dh.matrix()).matmul(v);
    let mut best = 0.0f64;
    for m in 0..4 {
        for n in 0..4 {
            if m == n {
                continue;
            }
            let gap = (dec.eigenvalues[n] - dec.eigenvalues[m]).abs();
            let coupling = m_eig[(m, n)].norm();
            if gap < 1e-9 {
                if coupling > 1e-9 {
                    return Err(DynamicsError::DegeneratePair(m, n, coupling));
                }
                continue;
            }
            best = best.max(coupling / gap);
        }
    }
    Ok(best)
}

/// One cell of a fidelity sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub t_total: f64,
    pub segments: usize,
    pub mode: DriveMode,
    pub alpha_mode: AlphaMode,
    pub final_fidelity: f64,
    pub purity_drift: f64,
}

/// Complete (T, N, mode) fidelity grid in deterministic order: T outer,
/// N inner, mode innermost.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn get(&self, t_total: f64, segments: usize, mode: DriveMode) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.t_total == t_total && c.segments == segments && c.mode == mode)
    }
}

/// Evaluate the full sweep grid. Uses the rayon pool when the `parallel`
/// feature is enabled, falling back to [`sweep_serial`] otherwise; both
/// produce identical cell values and ordering.
pub fn sweep(
    sys: &SpinSystem,
    t_list: &[f64],
    n_list: &[usize],
    modes: &[DriveMode],
    alpha_mode: AlphaMode,
    initial: InitialState,
) -> Result<SweepResult> {
    assert!(!t_list.is_empty() && !n_list.is_empty() && !modes.is_empty());
    let grid = grid_cells(t_list, n_list, modes);
    #[cfg(feature = "parallel")]
    {
        let cells: Result<Vec<SweepCell>> = grid
            .par_iter()
            .map(|&(t, n, mode)| sweep_cell(sys, t, n, mode, alpha_mode, initial))
            .collect();
        Ok(SweepResult { cells: cells? })
    }
    #[cfg(not(feature = "parallel"))]
    {
        sweep_serial(sys, t_list, n_list, modes, alpha_mode, initial)
    }
}

/// Sequential sweep, always available; the reference for the parallel path.
pub fn sweep_serial(
    sys: &SpinSystem,
    t_list: &[f64],
    n_list: &[usize],
    modes: &[DriveMode],
    alpha_mode: AlphaMode,
    initial: InitialState,
) -> Result<SweepResult> {
    assert!(!t_list.is_empty() && !n_list.is_empty() && !modes.is_empty());
    let cells: Result<Vec<SweepCell>> = grid_cells(t_list, n_list, modes)
        .iter()
        .map(|&(t, n, mode)| sweep_cell(sys, t, n, mode, alpha_mode, initial))
        .collect();
    Ok(SweepResult { cells: cells? })
}

fn grid_cells(t_list: &[f64], n_list: &[usize], modes: &[DriveMode]) -> Vec<(f64, usize, DriveMode)> {
    let mut grid = Vec::with_capacity(t_list.len() * n_list.len() * modes.len());
    for &t in t_list {
        for &n in n_list {
            for &mode in modes {
                grid.push((t, n, mode));
            }
        }
    }
    grid
}

fn sweep_cell(
    sys: &SpinSystem,
    t_total: f64,
    segments: usize,
    mode: DriveMode,
    alpha_mode: AlphaMode,
    initial: InitialState,
) -> Result<SweepCell> {
    let schedule = DriveSchedule::new(t_total, segments)?;
    let traj = evolve(sys, &schedule, mode, alpha_mode, initial)?;
    Ok(SweepCell {
        t_total,
        segments,
        mode,
        alpha_mode,
        final_fidelity: traj.final_fidelity(),
        purity_drift: traj.purity_drift(),
    })
}

/// Transport-limited fidelity oracle: carry ρ1 through the spectral map
/// from the λ = 0 eigenbasis to the λ = 1 eigenbasis and measure the
/// overlap fidelity of the result. Independent of the propagation path.
pub fn transport_oracle_fidelity(sys: &SpinSystem) -> Result<f64> {
    let dec0 = herm_eig(&h_initial(sys))?;
    let dec1 = herm_eig(&h_final(sys))?;
    let u = dec1.eigenvectors.compose(&dec0.eigenvectors.adjoint());
    let transported = DeviationState::rho1().conjugated_by(&u);
    fidelity_lls(&transported)
}

/// The idealized transport cap 1/sqrt(1.5): the fidelity of
/// |S0><S0| - |T0><T0| against the singlet order.
pub fn transport_fidelity_cap() -> f64 {
    1.0 / 1.5f64.sqrt()
}
