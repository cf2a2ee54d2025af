//! Density-matrix master equation: unitary part plus σ^z dephasing on every
//! spin, integrated either with an adaptive Runge–Kutta pair or with
//! piecewise Magnus propagators and an exact dephasing split.

pub mod exponential;
pub mod frame;
pub mod rk;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{build_interaction, build_total, spin_operators, PhysicalConstants};
use crate::pulses::{GateSchedule, Stage};
use crate::spin::{
    double_commutator, electron_index, hermiticity_defect, nuclear_index, partial_trace_electrons,
    spin_bit, DensityMatrix, Mat16, Operator, Site, C64, DIM,
};

pub use frame::{from_rotating_frame, to_rotating_frame, RotatingFrame};

/// Trace drift above which a state is rescaled to unit trace.
pub const RENORMALIZE_THRESHOLD: f64 = 1e-10;

/// Pure-dephasing rates (1/μs) for the electron and nuclear spins.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DephasingParams {
    pub gamma_e: f64,
    pub gamma_n: f64,
}

fn rate_from_time(tau: f64) -> Result<f64> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::Config(format!("dephasing time must be positive, got {tau}")));
    }
    Ok(if tau.is_infinite() { 0.0 } else { 0.25 / tau })
}

impl DephasingParams {
    pub fn none() -> Self {
        DephasingParams::default()
    }

    /// From characteristic times in μs, `τ = 1/(4Γ)`. An infinite time
    /// switches that channel off.
    pub fn from_times(tau_e: f64, tau_n: f64) -> Result<Self> {
        Ok(DephasingParams { gamma_e: rate_from_time(tau_e)?, gamma_n: rate_from_time(tau_n)? })
    }

    pub fn tau_e(&self) -> f64 {
        0.25 / self.gamma_e
    }

    pub fn tau_n(&self) -> f64 {
        0.25 / self.gamma_n
    }

    pub fn is_zero(&self) -> bool {
        self.gamma_e == 0.0 && self.gamma_n == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_e >= 0.0 && self.gamma_e.is_finite() && self.gamma_n >= 0.0 && self.gamma_n.is_finite()) {
            return Err(Error::InvalidArgument(format!("dephasing rates must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }

    /// Decay rate of `ρ_ij`: `4Γ` for every site whose σ^z differs between
    /// the row and column basis states.
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        Site::ALL
            .iter()
            .filter(|&&s| spin_bit(i, s) != spin_bit(j, s))
            .map(|&s| 4.0 * if s.is_electron() { self.gamma_e } else { self.gamma_n })
            .sum()
    }

    pub fn rate_matrix(&self) -> [[f64; DIM]; DIM] {
        std::array::from_fn(|i| std::array::from_fn(|j| self.rate(i, j)))
    }

    /// Elementwise factors `exp(−rate_ij dt)` of the exact dephasing flow.
    pub fn decay_factors(&self, dt: f64) -> [[f64; DIM]; DIM] {
        let r = self.rate_matrix();
        std::array::from_fn(|i| std::array::from_fn(|j| (-r[i][j] * dt).exp()))
    }
}

/// `(1/iħ)[H, ρ]`.
pub fn rhs_unitary(h: &Operator, rho: &DensityMatrix, hbar: f64) -> Mat16 {
    commutator_rhs(h.matrix(), rho.matrix(), hbar)
}

/// `−(i/ħ)(X − X†)` with `X = Hρ`; valid for Hermitian `H` and `ρ`.
fn commutator_rhs(h: &Mat16, rho: &Mat16, hbar: f64) -> Mat16 {
    let x = h * rho;
    let s = C64::new(0.0, -1.0 / hbar);
    Mat16::from_fn(|i, j| s * (x[(i, j)] - x[(j, i)].conj()))
}

/// Sum of `−Γ [σ^z_k, [σ^z_k, ρ]]` over the four spins.
pub fn rhs_dephasing(rho: &DensityMatrix, params: &DephasingParams) -> Mat16 {
    let ops = spin_operators();
    let mut out = Mat16::zeros();
    for site in Site::ALL {
        let g = if site.is_electron() { params.gamma_e } else { params.gamma_n };
        if g != 0.0 {
            out -= double_commutator(ops.get(crate::spin::Axis::Z, site), rho) * C64::new(g, 0.0);
        }
    }
    out
}

fn apply_decay(rho: &mut Mat16, factors: &[[f64; DIM]; DIM]) {
    for j in 0..DIM {
        for i in 0..DIM {
            rho[(i, j)] *= factors[i][j];
        }
    }
}

fn dephasing_elementwise(rho: &Mat16, rates: &[[f64; DIM]; DIM]) -> Mat16 {
    Mat16::from_fn(|i, j| rho[(i, j)] * -rates[i][j])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Fourth-order commutator-free Magnus steps with exact dephasing split.
    Exponential,
    /// Dormand–Prince 5(4) on the full master equation.
    RungeKutta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Lab,
    /// Zeeman interaction frame for the ramps, drive frame for the swap.
    Rotating,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub method: Method,
    pub frame: Frame,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// μs
    pub initial_step: f64,
    pub max_step: f64,
    pub min_step: f64,
    /// Fixed step of the exponential method, μs.
    pub exp_step: f64,
    /// Spacing of stored trajectory samples, μs. `None` keeps stage ends only.
    pub sample_interval: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::Exponential,
            frame: Frame::Rotating,
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            initial_step: 1e-6,
            max_step: 0.05,
            min_step: 1e-13,
            exp_step: 2.5e-4,
            sample_interval: None,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !(pos(self.rel_tol) && pos(self.abs_tol)) {
            return Err(Error::Config("integrator tolerances must be > 0".into()));
        }
        if !(pos(self.min_step) && self.min_step <= self.max_step && pos(self.max_step) && pos(self.initial_step)) {
            return Err(Error::Config("integrator steps must satisfy 0 < min_step <= max_step".into()));
        }
        if !pos(self.exp_step) {
            return Err(Error::Config("exp_step must be > 0".into()));
        }
        if let Some(s) = self.sample_interval {
            if !pos(s) {
                return Err(Error::Config("sample_interval must be > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    pub rhs_evals: u64,
    pub renormalizations: u64,
    pub max_trace_drift: f64,
    pub max_hermiticity_defect: f64,
}

impl IntegrationStats {
    pub fn merge(&mut self, other: &IntegrationStats) {
        self.accepted_steps += other.accepted_steps;
        self.rejected_steps += other.rejected_steps;
        self.rhs_evals += other.rhs_evals;
        self.renormalizations += other.renormalizations;
        self.max_trace_drift = self.max_trace_drift.max(other.max_trace_drift);
        self.max_hermiticity_defect = self.max_hermiticity_defect.max(other.max_hermiticity_defect);
    }

    /// Measures drift and symmetry of `rho`, renormalising if needed.
    fn observe(&mut self, rho: &mut Mat16) {
        let tr: C64 = rho.trace();
        let drift = (tr - C64::new(1.0, 0.0)).norm();
        self.max_trace_drift = self.max_trace_drift.max(drift);
        self.max_hermiticity_defect = self.max_hermiticity_defect.max(hermiticity_defect(rho));
        if drift > RENORMALIZE_THRESHOLD {
            *rho /= tr;
            self.renormalizations += 1;
            log::debug!("renormalised trace drift {drift:.3e}");
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    /// μs
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub stats: IntegrationStats,
}

impl Trajectory {
    fn push(&mut self, t: f64, rho: &Mat16) {
        if self.times.last().is_some_and(|&last| t <= last) {
            if let Some(s) = self.states.last_mut() {
                *s = DensityMatrix::from_matrix(*rho);
            }
            return;
        }
        self.times.push(t);
        self.states.push(DensityMatrix::from_matrix(*rho));
    }

    pub fn final_state(&self) -> Option<&DensityMatrix> {
        self.states.last()
    }

    /// Writes `t_us,trace,purity,p00,p01,p10,p11,electron_ground` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "t_us,trace,purity,p00,p01,p10,p11,electron_ground")?;
        for (t, rho) in self.times.iter().zip(&self.states) {
            let red = partial_trace_electrons(rho);
            let ground: f64 = (0..DIM).filter(|&k| electron_index(k) == 3).map(|k| rho.population(k)).sum();
            write!(out, "{t:.16e},{:.16e},{:.16e}", rho.trace().re, rho.purity())?;
            for k in 0..4 {
                write!(out, ",{:.16e}", red[(k, k)].re)?;
            }
            writeln!(out, ",{ground:.16e}")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Nuclear register populations `<n|Tr_e ρ|n>`.
pub fn nuclear_populations(rho: &DensityMatrix) -> [f64; 4] {
    let mut p = [0.0; 4];
    for k in 0..DIM {
        p[nuclear_index(k)] += rho.population(k);
    }
    p
}

/// Sample times in `(t0, t1]` spaced by `interval`, always ending at `t1`.
fn sample_times(t0: f64, t1: f64, interval: Option<f64>) -> Vec<f64> {
    let mut out = Vec::new();
    if let Some(dt) = interval {
        let n = ((t1 - t0) / dt).round().max(1.0) as usize;
        for k in 1..n {
            out.push(t0 + (t1 - t0) * k as f64 / n as f64);
        }
    }
    out.push(t1);
    out
}

/// Adaptive Runge–Kutta solution of `ρ̇ = (1/iħ)[H(t), ρ] + D(ρ)` on
/// `[t0, t1]` for an arbitrary Hermitian `H(t)`.
pub fn integrate_master_equation<F>(
    rho0: &DensityMatrix,
    hamiltonian: F,
    t0: f64,
    t1: f64,
    hbar: f64,
    dephasing: &DephasingParams,
    config: &IntegratorConfig,
) -> Result<Trajectory>
where
    F: Fn(f64) -> Mat16,
{
    let frame = RotatingFrame::identity();
    integrate_in_frame(rho0, |t| hamiltonian(t), &frame, t0, t1, 0.0, hbar, dephasing, config)
}

/// Core RK driver. `h_frame(t)` is the generator in the frame; samples are
/// mapped back with `frame` at local time `t − frame_origin`.
#[allow(clippy::too_many_arguments)]
fn integrate_in_frame<F>(
    rho0: &DensityMatrix,
    h_frame: F,
    frame: &RotatingFrame,
    t0: f64,
    t1: f64,
    frame_origin: f64,
    hbar: f64,
    dephasing: &DephasingParams,
    config: &IntegratorConfig,
) -> Result<Trajectory>
where
    F: Fn(f64) -> Mat16,
{
    config.validate()?;
    dephasing.validate()?;
    let rates = dephasing.rate_matrix();
    let damped = !dephasing.is_zero();
    let ctl = rk::StepControl {
        rel_tol: config.rel_tol,
        abs_tol: config.abs_tol,
        initial_step: config.initial_step,
        max_step: config.max_step,
        min_step: config.min_step,
    };
    let mut traj = Trajectory::default();
    traj.push(t0, rho0.matrix());
    if t1 <= t0 {
        return Ok(traj);
    }
    let y0 = frame.to_frame(rho0.matrix(), t0 - frame_origin);
    let stops = sample_times(t0, t1, config.sample_interval);
    let mut stats = IntegrationStats::default();
    let mut samples: Vec<(f64, Mat16)> = Vec::with_capacity(stops.len());
    let (_, counters) = rk::integrate(
        |t, y| {
            let mut d = commutator_rhs(&h_frame(t), y, hbar);
            if damped {
                d += dephasing_elementwise(y, &rates);
            }
            d
        },
        t0,
        t1,
        y0,
        &ctl,
        &stops,
        |_, y| stats.observe(y),
        |t, y| samples.push((t, frame.from_frame(y, t - frame_origin))),
    )?;
    for (t, y) in &samples {
        traj.push(*t, y);
    }
    stats.accepted_steps = counters.accepted;
    stats.rejected_steps = counters.rejected;
    stats.rhs_evals = counters.rhs_evals;
    traj.stats = stats;
    Ok(traj)
}

/// Integrates one schedule stage with the adaptive Runge–Kutta pair.
/// `t_offset` is the global time at which the stage starts.
pub fn rk_adaptive_integrate(
    rho0: &DensityMatrix,
    consts: &PhysicalConstants,
    b_z: f64,
    stage: &Stage,
    t_offset: f64,
    dephasing: &DephasingParams,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    let hbar = consts.hbar_u_us();
    let (t0, t1) = (t_offset, t_offset + stage.duration);
    match config.frame {
        Frame::Lab => integrate_in_frame(
            rho0,
            |t| *build_total(consts, &stage.params_at(b_z, t - t_offset), t - t_offset).matrix(),
            &RotatingFrame::identity(),
            t0,
            t1,
            t_offset,
            hbar,
            dephasing,
            config,
        ),
        Frame::Rotating if stage.ac_on => {
            let frame = RotatingFrame::drive(stage.omega);
            if !stage.controls_constant() {
                return Err(Error::InvalidArgument("drive frame requires constant controls".into()));
            }
            let h_static = frame.hamiltonian_to_frame(build_total(consts, &stage.params_at(b_z, 0.0), 0.0).matrix(), 0.0, hbar);
            integrate_in_frame(rho0, |_| h_static, &frame, t0, t1, t_offset, hbar, dephasing, config)
        }
        Frame::Rotating => {
            let frame = RotatingFrame::zeeman(consts, b_z);
            integrate_in_frame(
                rho0,
                |t| {
                    let p = stage.params_at(b_z, t - t_offset);
                    frame.to_frame(build_interaction(p.a1, p.a2, p.j).matrix(), t - t_offset)
                },
                &frame,
                t0,
                t1,
                t_offset,
                hbar,
                dephasing,
                config,
            )
        }
    }
}

/// Chains every stage of `schedule`, carrying the state across boundaries.
pub fn evolve_schedule(
    rho0: &DensityMatrix,
    consts: &PhysicalConstants,
    schedule: &GateSchedule,
    dephasing: &DephasingParams,
    config: &IntegratorConfig,
) -> Result<(DensityMatrix, Trajectory)> {
    match config.method {
        Method::Exponential => {
            let mut out = exponential::evolve_schedule_batch(
                std::slice::from_ref(rho0),
                consts,
                schedule,
                dephasing,
                config,
                true,
            )?;
            let (rho, traj) = out.pop().expect("one input");
            Ok((rho, traj))
        }
        Method::RungeKutta => {
            let mut traj = Trajectory::default();
            traj.push(0.0, rho0.matrix());
            let mut rho = rho0.clone();
            let mut t = 0.0;
            for stage in &schedule.stages {
                let seg = rk_adaptive_integrate(&rho, consts, schedule.b_z, stage, t, dephasing, config)?;
                for (ts, s) in seg.times.iter().zip(&seg.states) {
                    traj.push(*ts, s.matrix());
                }
                traj.stats.merge(&seg.stats);
                rho = seg.final_state().cloned().unwrap_or(rho);
                t += stage.duration;
            }
            Ok((rho, traj))
        }
    }
}

/// Evolves several initial states through the same schedule. The
/// exponential method shares its propagators across the batch.
pub fn evolve_schedule_many(
    inputs: &[DensityMatrix],
    consts: &PhysicalConstants,
    schedule: &GateSchedule,
    dephasing: &DephasingParams,
    config: &IntegratorConfig,
    keep_trajectory: bool,
) -> Result<Vec<(DensityMatrix, Trajectory)>> {
    match config.method {
        Method::Exponential => {
            exponential::evolve_schedule_batch(inputs, consts, schedule, dephasing, config, keep_trajectory)
        }
        Method::RungeKutta => inputs
            .iter()
            .map(|rho| {
                let (r, mut traj) = evolve_schedule(rho, consts, schedule, dephasing, config)?;
                if !keep_trajectory {
                    traj.times.clear();
                    traj.states.clear();
                }
                Ok((r, traj))
            })
            .collect(),
    }
}
