//! Full CNOT runs, error metrics, drive calibration and the stage 2–3
//! state-mapping check.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::exponential::evolve_schedule_mixed;
use crate::dynamics::{
    evolve_schedule_many, DephasingParams, Method, IntegrationStats, IntegratorConfig, RotatingFrame, Trajectory,
};
use crate::error::{Error, Result};
use crate::hamiltonian::{
    best_match, build_total, register_state, resonance_frequency, special_states, HamiltonianParams,
    PhysicalConstants,
};
use crate::parallel;
use crate::pulses::{
    build_cnot_schedule, drive_omega, swap_point, GateSchedule, ProfileKind, ScheduleSpec, StageDurations,
};
use crate::spin::{
    combine_index, eigensystem_unchecked, hermitian_eigensystem, partial_trace_electrons, DensityMatrix, Mat16,
    Mat4, Vec16, C64, DIM,
};

/// Computational basis input `|n1 n2>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InputLabel {
    #[serde(rename = "00")]
    L00,
    #[serde(rename = "01")]
    L01,
    #[serde(rename = "10")]
    L10,
    #[serde(rename = "11")]
    L11,
}

impl InputLabel {
    pub const ALL: [InputLabel; 4] = [InputLabel::L00, InputLabel::L01, InputLabel::L10, InputLabel::L11];

    /// Nuclear register index `2·n1 + n2`.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(k: usize) -> Option<InputLabel> {
        InputLabel::ALL.get(k).copied()
    }

    pub fn as_str(self) -> &'static str {
        ["00", "01", "10", "11"][self.index()]
    }

    /// CNOT with qubit 1 as control.
    pub fn cnot(self) -> InputLabel {
        match self {
            InputLabel::L10 => InputLabel::L11,
            InputLabel::L11 => InputLabel::L10,
            other => other,
        }
    }

    /// Initial state: nuclear basis state with both electrons in their ground state.
    pub fn initial_state(self) -> DensityMatrix {
        DensityMatrix::pure(&register_state(self.index()))
    }
}

impl fmt::Display for InputLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InputLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InputLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown input label {s:?}")))
    }
}

/// Projector onto the ideal CNOT output for `input`.
pub fn ideal_cnot_target(input: InputLabel) -> Mat4 {
    let k = input.cnot().index();
    let mut p = Mat4::zeros();
    p[(k, k)] = C64::new(1.0, 0.0);
    p
}

/// `1 − tr(P_ideal Tr_e ρ)`.
pub fn gate_error(rho: &DensityMatrix, input: InputLabel) -> f64 {
    let red = partial_trace_electrons(rho);
    let k = input.cnot().index();
    (1.0 - red[(k, k)].re).clamp(0.0, 1.0)
}

/// Error against the ideal output with the electrons also back in their ground state.
pub fn full_gate_error(rho: &DensityMatrix, input: InputLabel) -> f64 {
    let k = combine_index(input.cnot().index(), 3);
    (1.0 - rho.population(k)).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMetric {
    /// Electron-traced nuclear state.
    #[default]
    Nuclear,
    /// Nuclear target with the electrons in their ground state.
    Full,
}

/// Swap drive amplitude: fixed in tesla or calibrated to the stage-4 duration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DriveSetting {
    Calibrate,
    Fixed(f64),
}

impl Serialize for DriveSetting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            DriveSetting::Calibrate => s.serialize_str("calibrate"),
            DriveSetting::Fixed(b) => s.serialize_f64(*b),
        }
    }
}

impl<'de> Deserialize<'de> for DriveSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Tesla(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Tesla(b) => Ok(DriveSetting::Fixed(b)),
            Raw::Word(w) if w == "calibrate" => Ok(DriveSetting::Calibrate),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("b_ac must be a number or \"calibrate\", got {w:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CnotConfig {
    pub constants: PhysicalConstants,
    /// T
    pub b_z: f64,
    /// Unbiased hyperfine coupling, u.
    pub a2: f64,
    /// Step-1 increase of A1, u.
    pub delta_a1: f64,
    /// u
    pub j_max: f64,
    pub profile: ProfileKind,
    pub durations: StageDurations,
    pub b_ac: DriveSetting,
    pub dephasing: DephasingParams,
    pub integrator: IntegratorConfig,
    pub error_metric: ErrorMetric,
}

pub const DEFAULT_A2: f64 = 1.706;
pub const DEFAULT_DELTA_A1: f64 = 0.02;

impl Default for CnotConfig {
    fn default() -> Self {
        CnotConfig {
            constants: PhysicalConstants::default(),
            b_z: 2.0,
            a2: DEFAULT_A2,
            delta_a1: DEFAULT_DELTA_A1,
            j_max: 810.0,
            profile: ProfileKind::Linsin,
            durations: StageDurations::default(),
            b_ac: DriveSetting::Calibrate,
            dephasing: DephasingParams::none(),
            integrator: IntegratorConfig::default(),
            error_metric: ErrorMetric::Nuclear,
        }
    }
}

impl CnotConfig {
    pub fn schedule_spec(&self, b_ac: f64) -> ScheduleSpec {
        ScheduleSpec {
            b_z: self.b_z,
            a2: self.a2,
            delta_a1: self.delta_a1,
            j_max: self.j_max,
            profile: self.profile,
            durations: self.durations,
            b_ac,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        self.dephasing.validate()?;
        self.integrator.validate()?;
        if let DriveSetting::Fixed(b) = self.b_ac {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Config(format!("b_ac must be > 0, got {b}")));
            }
        }
        if !(self.b_z > 0.0) {
            return Err(Error::Config("b_z must be > 0".into()));
        }
        build_cnot_schedule(&self.constants, &self.schedule_spec(1e-3)).map(|_| ())
    }

    /// Schedule with the drive amplitude fixed, calibrating if requested.
    pub fn resolve(&self) -> Result<ResolvedGate> {
        self.validate()?;
        let (b_ac, calibration) = match self.b_ac {
            DriveSetting::Fixed(b) => (b, None),
            DriveSetting::Calibrate => {
                let cal = calibrate_bac(self)?;
                (cal.b_ac, Some(cal))
            }
        };
        let schedule = build_cnot_schedule(&self.constants, &self.schedule_spec(b_ac))?;
        Ok(ResolvedGate { schedule, b_ac, calibration })
    }

    fn error_of(&self, rho: &DensityMatrix, input: InputLabel) -> f64 {
        match self.error_metric {
            ErrorMetric::Nuclear => gate_error(rho, input),
            ErrorMetric::Full => full_gate_error(rho, input),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ResolvedGate {
    pub schedule: GateSchedule,
    pub b_ac: f64,
    pub calibration: Option<Calibration>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// T
    pub b_ac: f64,
    /// Time of the first transfer maximum, μs.
    pub swap_duration: f64,
    pub peak_transfer: f64,
    /// Signed drive angular frequency, rad/μs.
    pub omega: f64,
}

/// Static swap-stage problem in the drive frame, with the dressed
/// `|symm>` and `|11>` states it transfers between.
struct SwapProblem {
    frame_generator_no_drive: Mat16,
    drive_unit: Mat16,
    from: Vec16,
    to: Vec16,
    hbar: f64,
    omega: f64,
}

impl SwapProblem {
    fn new(config: &CnotConfig) -> Result<Self> {
        let c = &config.constants;
        let spec = config.schedule_spec(0.0);
        let params = swap_point(&spec);
        let static_h = build_total(c, &params, 0.0);
        let eig = hermitian_eigensystem(&static_h)?;
        let specials = special_states();
        let (ks, ws) = best_match(&eig, &specials.symm);
        let (k11, w11) = best_match(&eig, &register_state(3));
        if ws < 0.5 {
            return Err(Error::Identification { what: "|symm>", overlap: ws });
        }
        if w11 < 0.5 {
            return Err(Error::Identification { what: "|11>", overlap: w11 });
        }
        let omega = drive_omega(resonance_frequency(c, &params)?);
        let frame = RotatingFrame::drive(omega);
        let hbar = c.hbar_u_us();
        let g0 = frame.hamiltonian_to_frame(static_h.matrix(), 0.0, hbar);
        let with_drive = HamiltonianParams { b_ac: 1.0, omega, ac_on: true, ..params };
        let unit = frame.to_frame(build_total(c, &with_drive, 0.0).matrix(), 0.0) - static_h.matrix();
        Ok(SwapProblem {
            frame_generator_no_drive: g0,
            drive_unit: unit,
            from: eig.vector(ks),
            to: eig.vector(k11),
            hbar,
            omega,
        })
    }

    /// Transfer probability `|<to|U(t)|from>|²` sampled at `times` (the frame is
    /// diagonal, so lab and frame populations agree).
    fn transfer(&self, b_ac: f64, times: &[f64]) -> Vec<f64> {
        let g = self.frame_generator_no_drive + self.drive_unit * C64::new(b_ac, 0.0);
        let eig = eigensystem_unchecked((g + g.adjoint()) * C64::new(0.5, 0.0));
        let a = eig.vectors.adjoint() * self.from;
        let b = eig.vectors.adjoint() * self.to;
        times
            .iter()
            .map(|&t| {
                let mut amp = C64::new(0.0, 0.0);
                for k in 0..DIM {
                    amp += b[k].conj() * a[k] * C64::from_polar(1.0, -eig.values[k] * t / self.hbar);
                }
                amp.norm_sqr()
            })
            .collect()
    }

    /// First transfer maximum within `window`: (time, population).
    fn first_peak(&self, b_ac: f64, window: f64) -> (f64, f64) {
        let n = 4000;
        let times: Vec<f64> = (0..=n).map(|k| window * k as f64 / n as f64).collect();
        let p = self.transfer(b_ac, &times);
        let mut k = 1;
        while k < n && !(p[k] >= p[k - 1] && p[k] >= p[k + 1] && p[k] > 0.5) {
            k += 1;
        }
        if k >= n {
            let (kb, pb) = p.iter().enumerate().fold((0, 0.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
            return (times[kb], pb);
        }
        // golden-section refine on [t_{k-1}, t_{k+1}]
        let (mut lo, mut hi) = (times[k - 1], times[k + 1]);
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..60 {
            let x1 = hi - r * (hi - lo);
            let x2 = lo + r * (hi - lo);
            let f = self.transfer(b_ac, &[x1, x2]);
            if f[0] > f[1] {
                hi = x2;
            } else {
                lo = x1;
            }
        }
        let t = 0.5 * (lo + hi);
        (t, self.transfer(b_ac, &[t])[0])
    }
}

/// Drive amplitude whose first `|symm> → |11>` transfer maximum falls at
/// the configured stage-4 duration, found by bisection.
pub fn calibrate_bac(config: &CnotConfig) -> Result<Calibration> {
    let problem = SwapProblem::new(config)?;
    let target = config.durations.stage4;
    let window = 10.0 * target;
    let swap_time = |b: f64| problem.first_peak(b, window);
    let (t_ref, p_ref) = swap_time(1e-3);
    if p_ref < 0.99 {
        return Err(Error::ResonanceMismatch { peak: p_ref, window });
    }
    // swap time falls as 1/B_ac at weak drive
    let guess = 1e-3 * t_ref / target;
    let (mut lo, mut hi) = (guess / 1.5, guess * 1.5);
    for _ in 0..20 {
        if swap_time(lo).0 > target {
            break;
        }
        lo /= 2.0;
    }
    for _ in 0..20 {
        if swap_time(hi).0 < target {
            break;
        }
        hi *= 2.0;
    }
    while (hi - lo) > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if swap_time(mid).0 > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let b_ac = 0.5 * (lo + hi);
    let (t, peak) = swap_time(b_ac);
    if peak < 0.99 {
        return Err(Error::ResonanceMismatch { peak, window });
    }
    Ok(Calibration { b_ac, swap_duration: t, peak_transfer: peak, omega: problem.omega })
}

/// Swap duration for a fixed drive amplitude.
pub fn measure_swap(config: &CnotConfig, b_ac: f64) -> Result<Calibration> {
    let problem = SwapProblem::new(config)?;
    let window = 10.0 * config.durations.stage4;
    let (t, peak) = problem.first_peak(b_ac, window);
    if peak < 0.99 {
        return Err(Error::ResonanceMismatch { peak, window });
    }
    Ok(Calibration { b_ac, swap_duration: t, peak_transfer: peak, omega: problem.omega })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MappingReport {
    /// `<symm|Tr_e ρ|symm>` for evolved `|10>`.
    pub symm: f64,
    /// `<anti|Tr_e ρ|anti>` for evolved `|01>`.
    pub anti: f64,
    /// `<00|Tr_e ρ|00>` for evolved `|00>`.
    pub zero: f64,
    /// Overlap of evolved `|10>` with the eigenstate of the stage-3 end
    /// Hamiltonian that best matches `|symm>`.
    pub dressed_symm: f64,
    pub dressed_anti: f64,
    /// Weight of bare `|anti>` in that eigenstate: the ceiling on `anti`.
    pub anti_content: f64,
}

fn nuclear_overlap(rho: &DensityMatrix, nuclear: &[C64; 4]) -> f64 {
    let red = partial_trace_electrons(rho);
    let v = nalgebra::Vector4::from_column_slice(nuclear);
    (v.adjoint() * red * v)[(0, 0)].re
}

/// Evolves `|10>`, `|01>`, `|00>` through stages 2–3 without dephasing.
pub fn verify_adiabatic_mapping(config: &CnotConfig) -> Result<MappingReport> {
    let full = build_cnot_schedule(&config.constants, &config.schedule_spec(0.0))?;
    let schedule = GateSchedule { b_z: full.b_z, stages: full.stages[..2].to_vec() };
    let inputs = [InputLabel::L10, InputLabel::L01, InputLabel::L00].map(InputLabel::initial_state);
    let out = evolve_schedule_many(&inputs, &config.constants, &schedule, &DephasingParams::none(), &config.integrator, false)?;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let o = C64::new(0.0, 0.0);
    let symm = [o, C64::new(r, 0.0), C64::new(r, 0.0), o];
    let anti = [o, C64::new(-r, 0.0), C64::new(r, 0.0), o];
    let zero = [C64::new(1.0, 0.0), o, o, o];

    let end = &schedule.stages[1];
    let h = build_total(&config.constants, &end.params_at(schedule.b_z, end.duration), 0.0);
    let eig = hermitian_eigensystem(&h)?;
    let sp = special_states();
    let (ks, _) = best_match(&eig, &sp.symm);
    let (ka, anti_content) = best_match(&eig, &sp.anti);
    let dressed = |rho: &DensityMatrix, k: usize| {
        let v = eig.vector(k);
        (v.adjoint() * rho.matrix() * v)[(0, 0)].re
    };
    Ok(MappingReport {
        symm: nuclear_overlap(&out[0].0, &symm),
        anti: nuclear_overlap(&out[1].0, &anti),
        zero: nuclear_overlap(&out[2].0, &zero),
        dressed_symm: dressed(&out[0].0, ks),
        dressed_anti: dressed(&out[1].0, ka),
        anti_content,
    })
}

#[derive(Clone, Debug)]
pub struct GateRunResult {
    pub input: InputLabel,
    pub final_rho: DensityMatrix,
    /// Error under the configured metric.
    pub error: f64,
    pub nuclear_error: f64,
    pub full_error: f64,
    pub stats: IntegrationStats,
    pub trajectory: Trajectory,
}

/// Runs every requested input through an already resolved gate. Steps 1 and
/// 7 are instantaneous changes of A1 and leave the state untouched.
pub fn run_inputs(
    config: &CnotConfig,
    gate: &ResolvedGate,
    inputs: &[InputLabel],
    keep_trajectory: bool,
) -> Result<Vec<GateRunResult>> {
    let states: Vec<DensityMatrix> = inputs.iter().map(|l| l.initial_state()).collect();
    let out = evolve_schedule_many(
        &states,
        &config.constants,
        &gate.schedule,
        &config.dephasing,
        &config.integrator,
        keep_trajectory,
    )?;
    Ok(inputs
        .iter()
        .zip(out)
        .map(|(&input, (rho, traj))| GateRunResult {
            input,
            error: config.error_of(&rho, input),
            nuclear_error: gate_error(&rho, input),
            full_error: full_gate_error(&rho, input),
            stats: traj.stats,
            final_rho: rho,
            trajectory: traj,
        })
        .collect())
}

/// All four inputs at each set of dephasing rates. The exponential method
/// evolves the whole batch against shared propagators; results do not depend
/// on how points are grouped.
pub fn run_dephasing_points(
    config: &CnotConfig,
    gate: &ResolvedGate,
    points: &[DephasingParams],
) -> Result<Vec<Vec<GateRunResult>>> {
    if config.integrator.method != Method::Exponential {
        return points
            .iter()
            .map(|d| run_inputs(&CnotConfig { dephasing: *d, ..config.clone() }, gate, &InputLabel::ALL, false))
            .collect();
    }
    let inputs: Vec<DensityMatrix> =
        points.iter().flat_map(|_| InputLabel::ALL.iter().map(|l| l.initial_state())).collect();
    let rates: Vec<DephasingParams> = points.iter().flat_map(|d| [*d; 4]).collect();
    let out = evolve_schedule_mixed(&inputs, &rates, &config.constants, &gate.schedule, &config.integrator, false)?;
    let mut runs = out.into_iter().zip(InputLabel::ALL.iter().cycle()).map(|((rho, traj), &input)| GateRunResult {
        input,
        error: config.error_of(&rho, input),
        nuclear_error: gate_error(&rho, input),
        full_error: full_gate_error(&rho, input),
        stats: traj.stats,
        final_rho: rho,
        trajectory: traj,
    });
    Ok(points.iter().map(|_| runs.by_ref().take(4).collect()).collect())
}

pub fn run_cnot(config: &CnotConfig, input: InputLabel) -> Result<GateRunResult> {
    let gate = config.resolve()?;
    Ok(run_inputs(config, &gate, &[input], false)?.remove(0))
}

/// All four basis inputs; independent runs go through the worker pool.
pub fn run_all_inputs(config: &CnotConfig, gate: &ResolvedGate, parallelism: usize) -> Result<Vec<GateRunResult>> {
    match config.integrator.method {
        Method::Exponential => run_inputs(config, gate, &InputLabel::ALL, false),
        Method::RungeKutta => parallel::map(&InputLabel::ALL, parallelism, |&l| {
            run_inputs(config, gate, &[l], false).map(|mut v| v.remove(0))
        })
        .into_iter()
        .collect(),
    }
}

pub fn worst_case_error(config: &CnotConfig) -> Result<f64> {
    let gate = config.resolve()?;
    let runs = run_all_inputs(config, &gate, 1)?;
    Ok(runs.iter().map(|r| r.error).fold(0.0, f64::max))
}
