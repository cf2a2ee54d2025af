//! Pulse profiles for the adiabatic ramps and assembly of the CNOT schedule.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{find_level_crossing, resonance_frequency, HamiltonianParams, PhysicalConstants};

/// Exchange value reached by the reference ramps, u.
pub const J_REFERENCE: f64 = 810.0;

const SECH_RATE: f64 = 5.0;

/// Normalisation that makes the sech ramp end exactly at its target,
/// `1 / (1 − sech 5)`.
pub fn sech_alpha() -> f64 {
    1.0 / (1.0 - sech(SECH_RATE))
}

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

/// Rejects `t` outside `[0, duration]`, allowing rounding at the ends, and
/// returns it clamped.
fn check_domain(t: f64, duration: f64) -> Result<f64> {
    let slack = 1e-12 * duration;
    if !(duration > 0.0) || !(-slack..=duration + slack).contains(&t) {
        return Err(Error::Domain { t, duration });
    }
    Ok(t.clamp(0.0, duration))
}

pub fn linear_profile(t: f64, duration: f64, j_max: f64) -> Result<f64> {
    let t = check_domain(t, duration)?;
    Ok(j_max * t / duration)
}

/// `810 α (1 − sech(5t/T))`.
pub fn sech_profile(t: f64, duration: f64) -> Result<f64> {
    let t = check_domain(t, duration)?;
    Ok(J_REFERENCE * ProfileKind::Sech.shape(t / duration))
}

/// Linear ramp to `J_max/2` followed by a quarter-sine rise to `J_max`.
pub fn linsin_profile(t: f64, duration: f64, j_max: f64) -> Result<f64> {
    let t = check_domain(t, duration)?;
    Ok(j_max * ProfileKind::Linsin.shape(t / duration))
}

/// Breakpoint of the linear-sinusoidal profile as a fraction of its duration.
pub fn linsin_breakpoint() -> f64 {
    1.0 / (1.0 + FRAC_PI_2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Linear,
    Sech,
    Linsin,
}

impl ProfileKind {
    pub const ALL: [ProfileKind; 3] = [ProfileKind::Linear, ProfileKind::Sech, ProfileKind::Linsin];

    pub fn name(self) -> &'static str {
        match self {
            ProfileKind::Linear => "linear",
            ProfileKind::Sech => "sech",
            ProfileKind::Linsin => "linsin",
        }
    }

    /// Normalised rising shape on `x ∈ [0, 1]`, 0 → 0 and 1 → 1.
    pub fn shape(self, x: f64) -> f64 {
        match self {
            ProfileKind::Linear => x,
            ProfileKind::Sech => sech_alpha() * (1.0 - sech(SECH_RATE * x)),
            ProfileKind::Linsin => {
                let xb = linsin_breakpoint();
                if x <= xb {
                    0.5 * x * (1.0 + FRAC_PI_2)
                } else {
                    // (x − x_b) / (1/(1 + 2/π)) reaches 1 at x = 1.
                    let phase = FRAC_PI_2 * (x - xb) * (1.0 + 2.0 / PI);
                    0.5 * (1.0 + phase.sin())
                }
            }
        }
    }

    /// `d shape / dx`.
    pub fn shape_derivative(self, x: f64) -> f64 {
        match self {
            ProfileKind::Linear => 1.0,
            ProfileKind::Sech => {
                let u = SECH_RATE * x;
                sech_alpha() * SECH_RATE * sech(u) * u.tanh()
            }
            ProfileKind::Linsin => {
                let xb = linsin_breakpoint();
                if x < xb {
                    0.5 * (1.0 + FRAC_PI_2)
                } else {
                    let k = FRAC_PI_2 * (1.0 + 2.0 / PI);
                    0.5 * k * (k * (x - xb)).cos()
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Rising,
    Falling,
}

/// A shaped ramp from `start_value` at `t = 0` to `end_value` at `t = duration`.
/// A falling profile is the exact time reverse of the rising profile between
/// the same two values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseProfile {
    pub kind: ProfileKind,
    pub start_value: f64,
    pub end_value: f64,
    pub duration: f64,
    pub direction: Direction,
}

impl PulseProfile {
    pub fn rising(kind: ProfileKind, start_value: f64, end_value: f64, duration: f64) -> Self {
        PulseProfile { kind, start_value, end_value, duration, direction: Direction::Rising }
    }

    pub fn falling(kind: ProfileKind, start_value: f64, end_value: f64, duration: f64) -> Self {
        PulseProfile { kind, start_value, end_value, duration, direction: Direction::Falling }
    }

    /// The same ramp played backwards.
    pub fn reversed(&self) -> Self {
        let direction = match self.direction {
            Direction::Rising => Direction::Falling,
            Direction::Falling => Direction::Rising,
        };
        PulseProfile {
            start_value: self.end_value,
            end_value: self.start_value,
            direction,
            ..*self
        }
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        Ok(self.value_unchecked(check_domain(t, self.duration)?))
    }

    pub fn derivative(&self, t: f64) -> Result<f64> {
        Ok(self.derivative_unchecked(check_domain(t, self.duration)?))
    }

    fn value_unchecked(&self, t: f64) -> f64 {
        match self.direction {
            Direction::Rising => {
                let x = (t / self.duration).clamp(0.0, 1.0);
                self.start_value + (self.end_value - self.start_value) * self.kind.shape(x)
            }
            Direction::Falling => {
                let x = ((self.duration - t) / self.duration).clamp(0.0, 1.0);
                self.end_value + (self.start_value - self.end_value) * self.kind.shape(x)
            }
        }
    }

    fn derivative_unchecked(&self, t: f64) -> f64 {
        let span = self.end_value - self.start_value;
        match self.direction {
            Direction::Rising => {
                let x = (t / self.duration).clamp(0.0, 1.0);
                span * self.kind.shape_derivative(x) / self.duration
            }
            Direction::Falling => {
                let x = ((self.duration - t) / self.duration).clamp(0.0, 1.0);
                span * self.kind.shape_derivative(x) / self.duration
            }
        }
    }
}

/// Analytic time derivative of a profile.
pub fn profile_derivative(profile: &PulseProfile, t: f64) -> Result<f64> {
    profile.derivative(t)
}

/// A scalar control held constant or ramped by a profile over one stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Control {
    Constant(f64),
    Ramp(PulseProfile),
}

impl Control {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Control::Constant(v) => *v,
            Control::Ramp(p) => p.value_unchecked(t),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            Control::Constant(_) => 0.0,
            Control::Ramp(p) => p.derivative_unchecked(t),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Control::Constant(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    /// Step number in the seven-step procedure (2..=6).
    pub label: u8,
    pub duration: f64,
    pub a1: Control,
    pub a2: Control,
    pub j: Control,
    pub b_ac: Control,
    /// Signed drive angular frequency, rad/μs.
    pub omega: f64,
    pub ac_on: bool,
}

impl Stage {
    /// Hamiltonian parameters at stage-local time `t`.
    pub fn params_at(&self, b_z: f64, t: f64) -> HamiltonianParams {
        HamiltonianParams {
            b_z,
            a1: self.a1.value(t),
            a2: self.a2.value(t),
            j: self.j.value(t),
            b_ac: self.b_ac.value(t),
            omega: self.omega,
            ac_on: self.ac_on,
        }
    }

    /// `(dA1/dt, dA2/dt, dJ/dt)` at stage-local time `t`.
    pub fn rates_at(&self, t: f64) -> (f64, f64, f64) {
        (self.a1.derivative(t), self.a2.derivative(t), self.j.derivative(t))
    }

    /// True when nothing but the drive phase depends on time.
    pub fn controls_constant(&self) -> bool {
        self.a1.is_constant() && self.a2.is_constant() && self.j.is_constant() && self.b_ac.is_constant()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSchedule {
    pub b_z: f64,
    pub stages: Vec<Stage>,
}

impl GateSchedule {
    pub fn total_duration(&self) -> f64 {
        self.stages.iter().map(|s| s.duration).sum()
    }

    /// Stage index and stage-local time for global time `t`.
    pub fn locate(&self, t: f64) -> Option<(usize, f64)> {
        let mut start = 0.0;
        for (k, s) in self.stages.iter().enumerate() {
            if t <= start + s.duration || k + 1 == self.stages.len() {
                let local = (t - start).clamp(0.0, s.duration);
                return Some((k, local));
            }
            start += s.duration;
        }
        None
    }

    pub fn params_at(&self, t: f64) -> Option<HamiltonianParams> {
        self.locate(t).map(|(k, local)| self.stages[k].params_at(self.b_z, local))
    }

    /// Evenly sampled `(t, stage label, params)` rows covering the whole gate.
    pub fn sample(&self, n: usize) -> Vec<(f64, u8, HamiltonianParams)> {
        let total = self.total_duration();
        let n = n.max(2);
        (0..n)
            .filter_map(|i| {
                let t = total * i as f64 / (n - 1) as f64;
                let (k, local) = self.locate(t)?;
                Some((t, self.stages[k].label, self.stages[k].params_at(self.b_z, local)))
            })
            .collect()
    }
}

/// Stage durations in μs, keyed by step number.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageDurations {
    /// J ramp up.
    pub stage2: f64,
    /// A1 ramp down.
    pub stage3: f64,
    /// Resonant swap.
    pub stage4: f64,
    /// A1 ramp up (reverse of stage 3).
    pub stage5: f64,
    /// J ramp down (reverse of stage 2).
    pub stage6: f64,
}

impl Default for StageDurations {
    fn default() -> Self {
        StageDurations { stage2: 9.0, stage3: 0.14, stage4: 7.5989, stage5: 0.14, stage6: 9.0 }
    }
}

impl StageDurations {
    pub fn as_array(&self) -> [f64; 5] {
        [self.stage2, self.stage3, self.stage4, self.stage5, self.stage6]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleSpec {
    pub b_z: f64,
    pub a2: f64,
    pub delta_a1: f64,
    pub j_max: f64,
    pub profile: ProfileKind,
    pub durations: StageDurations,
    pub b_ac: f64,
}

/// Parameters held during the swap: exchange at its maximum, hyperfine
/// couplings equal, drive off.
pub fn swap_point(spec: &ScheduleSpec) -> HamiltonianParams {
    HamiltonianParams::static_params(spec.b_z, spec.a2, spec.a2, spec.j_max)
}

/// Drive sense that co-rotates with the nuclear `|symm> → |11>` transition.
///
/// Nuclear σ^z = +1 is the lower Zeeman level while the electron's is σ^z = −1,
/// so the nuclear transition precesses opposite to the electrons and needs
/// a negative `ω` in the circular drive term.
pub fn drive_omega(resonance: f64) -> f64 {
    -resonance
}

/// Five simulated stages: J up, A1 down, resonant swap, A1 up, J down.
/// Steps 1 and 7 are instantaneous A1 changes applied by the caller.
pub fn build_cnot_schedule(consts: &PhysicalConstants, spec: &ScheduleSpec) -> Result<GateSchedule> {
    let d = spec.durations;
    if d.as_array().iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Config("stage durations must be positive".into()));
    }
    if spec.a2 < 0.0 || spec.delta_a1 < 0.0 || spec.b_ac < 0.0 || !(spec.j_max > 0.0) {
        return Err(Error::Config("A2, delta_a1, B_ac must be >= 0 and J_max > 0".into()));
    }
    let crossing = find_level_crossing(consts, spec.a2, spec.b_z)?;
    if spec.j_max >= crossing {
        return Err(Error::Config(format!(
            "J_max = {} must stay below the level crossing at J = {crossing:.2}",
            spec.j_max
        )));
    }
    let a_hi = spec.a2 + spec.delta_a1;
    let a_lo = spec.a2;
    let omega = drive_omega(resonance_frequency(consts, &swap_point(spec))?);

    let j_up = PulseProfile::rising(spec.profile, 0.0, spec.j_max, d.stage2);
    let a_down = PulseProfile::falling(ProfileKind::Linear, a_hi, a_lo, d.stage3);
    let mut a_up = a_down.reversed();
    a_up.duration = d.stage5;
    let mut j_down = j_up.reversed();
    j_down.duration = d.stage6;

    let quiet = |label, duration, a1, j| Stage {
        label,
        duration,
        a1,
        a2: Control::Constant(a_lo),
        j,
        b_ac: Control::Constant(0.0),
        omega: 0.0,
        ac_on: false,
    };
    let stages = vec![
        quiet(2, d.stage2, Control::Constant(a_hi), Control::Ramp(j_up)),
        quiet(3, d.stage3, Control::Ramp(a_down), Control::Constant(spec.j_max)),
        Stage {
            label: 4,
            duration: d.stage4,
            a1: Control::Constant(a_lo),
            a2: Control::Constant(a_lo),
            j: Control::Constant(spec.j_max),
            b_ac: Control::Constant(spec.b_ac),
            omega,
            ac_on: true,
        },
        quiet(5, d.stage5, Control::Ramp(a_up), Control::Constant(spec.j_max)),
        quiet(6, d.stage6, Control::Constant(a_hi), Control::Ramp(j_down)),
    ];
    Ok(GateSchedule { b_z: spec.b_z, stages })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec() -> ScheduleSpec {
        ScheduleSpec {
            b_z: 2.0,
            a2: 1.706,
            delta_a1: 0.1706,
            j_max: 810.0,
            profile: ProfileKind::Linsin,
            durations: StageDurations::default(),
            b_ac: 1e-3,
        }
    }

    #[test]
    fn linear_values() {
        assert_eq!(linear_profile(0.0, 9.0, 810.0).unwrap(), 0.0);
        assert_eq!(linear_profile(9.0, 9.0, 810.0).unwrap(), 810.0);
        assert_eq!(linear_profile(4.5, 9.0, 810.0).unwrap(), 405.0);
        assert!(matches!(linear_profile(9.1, 9.0, 810.0), Err(Error::Domain { .. })));
        assert!(linear_profile(-0.1, 9.0, 810.0).is_err());
    }

    #[test]
    fn sech_values() {
        assert_eq!(sech_profile(0.0, 9.0).unwrap(), 0.0);
        assert_abs_diff_eq!(sech_profile(9.0, 9.0).unwrap(), 810.0, epsilon = 1e-10);
        let e5 = 5f64.exp();
        assert_abs_diff_eq!(sech_alpha(), 1.0 / (1.0 - 2.0 / (e5 + 1.0 / e5)), epsilon = 1e-14);
        assert_abs_diff_eq!(sech_alpha(), 1.013_659_3, epsilon = 1e-7);
        assert!(sech_profile(10.0, 9.0).is_err());
    }

    #[test]
    fn linsin_values() {
        let t_b = 9.0 * linsin_breakpoint();
        assert_eq!(linsin_profile(0.0, 9.0, 810.0).unwrap(), 0.0);
        assert_abs_diff_eq!(linsin_profile(t_b, 9.0, 810.0).unwrap(), 405.0, epsilon = 1e-10);
        // The sine branch evaluated at the breakpoint gives the same value.
        let sine_branch = 405.0 * (1.0 + (FRAC_PI_2 * 0.0).sin());
        assert_abs_diff_eq!(sine_branch, 405.0);
        assert_abs_diff_eq!(linsin_profile(9.0, 9.0, 810.0).unwrap(), 810.0, epsilon = 1e-10);
    }

    #[test]
    fn derivatives() {
        let lin = PulseProfile::rising(ProfileKind::Linear, 0.0, 810.0, 9.0);
        for t in [0.0, 3.0, 9.0] {
            assert_abs_diff_eq!(profile_derivative(&lin, t).unwrap(), 90.0, epsilon = 1e-12);
        }
        let ls = PulseProfile::rising(ProfileKind::Linsin, 0.0, 810.0, 9.0);
        let t_b = 9.0 * linsin_breakpoint();
        let want = 810.0 * (1.0 + FRAC_PI_2) / (2.0 * 9.0);
        let left = 810.0 * 0.5 * (1.0 + FRAC_PI_2) / 9.0;
        let k = FRAC_PI_2 * (1.0 + 2.0 / PI);
        let right = 810.0 * 0.5 * k / 9.0;
        assert_abs_diff_eq!(left, want, epsilon = 1e-10);
        assert!((left - right).abs() < 1e-10 * want);
        assert_abs_diff_eq!(profile_derivative(&ls, t_b).unwrap(), want, epsilon = 1e-10);
        let sp = PulseProfile::rising(ProfileKind::Sech, 0.0, 810.0, 9.0);
        assert_eq!(profile_derivative(&sp, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for kind in ProfileKind::ALL {
            for p in [
                PulseProfile::rising(kind, 0.0, 810.0, 9.0),
                PulseProfile::falling(kind, 810.0, 0.0, 9.0),
            ] {
                for k in 1..30 {
                    let t = 0.3 * k as f64 - 0.01;
                    let h = 1e-6;
                    let fd = (p.value(t + h).unwrap() - p.value(t - h).unwrap()) / (2.0 * h);
                    assert_abs_diff_eq!(p.derivative(t).unwrap(), fd, epsilon = 1e-5);
                }
            }
        }
    }

    #[test]
    fn falling_is_time_reverse() {
        for kind in ProfileKind::ALL {
            let up = PulseProfile::rising(kind, 0.0, 810.0, 9.0);
            let down = up.reversed();
            for k in 0..=90 {
                let t = 0.1 * k as f64;
                let t = t.min(9.0);
                assert_eq!(down.value(t).unwrap(), up.value(9.0 - t).unwrap());
            }
            assert_eq!(down.reversed(), up);
        }
    }

    #[test]
    fn default_schedule_shape() {
        let c = PhysicalConstants::default();
        let s = build_cnot_schedule(&c, &spec()).unwrap();
        assert_abs_diff_eq!(s.total_duration(), 25.8789, epsilon = 1e-12);
        let labels: Vec<u8> = s.stages.iter().map(|s| s.label).collect();
        assert_eq!(labels, vec![2, 3, 4, 5, 6]);
        assert!(s.stages[2].omega < 0.0);
        assert!(s.stages.iter().enumerate().all(|(k, st)| st.ac_on == (k == 2)));
    }

    #[test]
    fn schedule_is_continuous_across_boundaries() {
        let c = PhysicalConstants::default();
        let s = build_cnot_schedule(&c, &spec()).unwrap();
        for w in s.stages.windows(2) {
            let end = w[0].params_at(2.0, w[0].duration);
            let start = w[1].params_at(2.0, 0.0);
            assert_eq!(end.a1, start.a1);
            assert_eq!(end.a2, start.a2);
            assert_eq!(end.j, start.j);
        }
        assert_eq!(s.stages[0].params_at(2.0, 9.0).j, 810.0);
        assert_eq!(s.stages[1].params_at(2.0, 0.0).j, 810.0);
    }

    #[test]
    fn reverse_stages_mirror_forward_stages() {
        let c = PhysicalConstants::default();
        let s = build_cnot_schedule(&c, &spec()).unwrap();
        for k in 0..=100 {
            let x = k as f64 / 100.0;
            let t2 = 9.0 * x;
            assert_abs_diff_eq!(s.stages[4].j.value(t2), s.stages[0].j.value(9.0 - t2), epsilon = 1e-10);
            let t3 = 0.14 * x;
            assert_abs_diff_eq!(s.stages[3].a1.value(t3), s.stages[1].a1.value(0.14 - t3), epsilon = 1e-12);
        }
    }

    #[test]
    fn j_max_beyond_crossing_is_rejected() {
        let c = PhysicalConstants::default();
        let mut bad = spec();
        bad.j_max = 820.0;
        assert!(matches!(build_cnot_schedule(&c, &bad), Err(Error::Config(_))));
    }
}
