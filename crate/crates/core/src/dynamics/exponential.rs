//! Fixed-step propagator integration.
//!
//! Ramp stages conserve total σ^z, so each step is a fourth-order
//! commutator-free Magnus product of two block-diagonal exponentials. The
//! swap stage is static in the drive frame and is exponentiated exactly.
//! Dephasing enters through a symmetric split with its exact elementwise
//! flow, which keeps every step completely positive and trace preserving.

use std::sync::OnceLock;

use nalgebra::DMatrix;

use super::{DephasingParams, IntegratorConfig, RotatingFrame, Trajectory};
use crate::error::{Error, Result};
use crate::hamiltonian::{build_total, PhysicalConstants};
use crate::pulses::{GateSchedule, Stage};
use crate::spin::{eigensystem_unchecked, magnetization, DensityMatrix, Mat16, C64, DIM};

const SQRT3_6: f64 = 0.288_675_134_594_812_9;
const NODE1: f64 = 0.5 - SQRT3_6;
const NODE2: f64 = 0.5 + SQRT3_6;
const W_BIG: f64 = 0.25 + SQRT3_6;
const W_SMALL: f64 = 0.25 - SQRT3_6;

/// Basis indices grouped by total magnetisation.
fn sectors() -> &'static [Vec<usize>] {
    static S: OnceLock<Vec<Vec<usize>>> = OnceLock::new();
    S.get_or_init(|| {
        (-4..=4)
            .step_by(2)
            .map(|m| (0..DIM).filter(|&k| magnetization(k) == m).collect())
            .collect()
    })
}

/// `exp(−i H dt/ħ)` for an `H` that conserves total σ^z.
pub fn expm_sectors(h: &Mat16, dt: f64, hbar: f64) -> Mat16 {
    let mut u = Mat16::zeros();
    for block in sectors() {
        let n = block.len();
        if n == 1 {
            let k = block[0];
            u[(k, k)] = C64::from_polar(1.0, -h[(k, k)].re * dt / hbar);
            continue;
        }
        let sub = DMatrix::from_fn(n, n, |a, b| 0.5 * (h[(block[a], block[b])] + h[(block[b], block[a])].conj()));
        let eig = sub.symmetric_eigen();
        let mut scaled = eig.eigenvectors.clone();
        for (c, e) in eig.eigenvalues.iter().enumerate() {
            let w = C64::from_polar(1.0, -e * dt / hbar);
            for r in 0..n {
                scaled[(r, c)] *= w;
            }
        }
        let ub = scaled * eig.eigenvectors.adjoint();
        for a in 0..n {
            for b in 0..n {
                u[(block[a], block[b])] = ub[(a, b)];
            }
        }
    }
    u
}

/// Members of the magnetisation sector of each basis index.
fn sector_members() -> &'static [Vec<usize>; DIM] {
    static S: OnceLock<[Vec<usize>; DIM]> = OnceLock::new();
    S.get_or_init(|| std::array::from_fn(|i| (0..DIM).filter(|&k| magnetization(k) == magnetization(i)).collect()))
}

/// `U ρ U†` for a `U` that is block diagonal in the magnetisation sectors.
fn conjugate_sectors(u: &Mat16, rho: &Mat16) -> Mat16 {
    let members = sector_members();
    let mut left = Mat16::zeros();
    for j in 0..DIM {
        for i in 0..DIM {
            let mut acc = C64::new(0.0, 0.0);
            for &k in &members[i] {
                acc += u[(i, k)] * rho[(k, j)];
            }
            left[(i, j)] = acc;
        }
    }
    let mut out = Mat16::zeros();
    for j in 0..DIM {
        for i in 0..DIM {
            let mut acc = C64::new(0.0, 0.0);
            for &l in &members[j] {
                acc += left[(i, l)] * u[(j, l)].conj();
            }
            out[(i, j)] = acc;
        }
    }
    out
}

fn stage_hamiltonian(consts: &PhysicalConstants, b_z: f64, stage: &Stage, t: f64) -> Mat16 {
    *build_total(consts, &stage.params_at(b_z, t), t).matrix()
}

/// One commutator-free Magnus step of order four from `t` to `t + dt`.
pub fn magnus_step(consts: &PhysicalConstants, b_z: f64, stage: &Stage, t: f64, dt: f64) -> Mat16 {
    let hbar = consts.hbar_u_us();
    let h1 = stage_hamiltonian(consts, b_z, stage, t + NODE1 * dt);
    let h2 = stage_hamiltonian(consts, b_z, stage, t + NODE2 * dt);
    let first = h1 * C64::new(W_BIG, 0.0) + h2 * C64::new(W_SMALL, 0.0);
    let second = h1 * C64::new(W_SMALL, 0.0) + h2 * C64::new(W_BIG, 0.0);
    expm_sectors(&second, dt, hbar) * expm_sectors(&first, dt, hbar)
}

fn step_count(duration: f64, h: f64) -> usize {
    ((duration / h) - 1e-9).ceil().max(1.0) as usize
}

/// Static drive-frame generator of a swap stage and its frame.
fn drive_frame_generator(consts: &PhysicalConstants, b_z: f64, stage: &Stage) -> Result<(RotatingFrame, Mat16)> {
    if !stage.controls_constant() {
        return Err(Error::InvalidArgument("swap stage must have constant controls".into()));
    }
    let frame = RotatingFrame::drive(stage.omega);
    let h = stage_hamiltonian(consts, b_z, stage, 0.0);
    Ok((frame, frame.hamiltonian_to_frame(&h, 0.0, consts.hbar_u_us())))
}

/// Lab-frame propagator of a single stage without dephasing.
pub fn stage_unitary(consts: &PhysicalConstants, b_z: f64, stage: &Stage, h: f64) -> Result<Mat16> {
    let hbar = consts.hbar_u_us();
    if stage.ac_on {
        let (frame, g) = drive_frame_generator(consts, b_z, stage)?;
        let u = eigensystem_unchecked(g).map(|e| C64::from_polar(1.0, -e * stage.duration / hbar));
        // ρ(T) = R(T)† Ũ ρ(0) Ũ† R(T), so the lab propagator is R(T)† Ũ
        let r = frame.rates();
        return Ok(Mat16::from_fn(|i, j| C64::from_polar(1.0, -r[i] * stage.duration) * u[(i, j)]));
    }
    let n = step_count(stage.duration, h);
    let dt = stage.duration / n as f64;
    let mut u = Mat16::identity();
    for k in 0..n {
        u = magnus_step(consts, b_z, stage, k as f64 * dt, dt) * u;
    }
    Ok(u)
}

/// Lab-frame propagator of the whole schedule without dephasing.
pub fn gate_unitary(consts: &PhysicalConstants, schedule: &GateSchedule, h: f64) -> Result<Mat16> {
    let mut u = Mat16::identity();
    for stage in &schedule.stages {
        u = stage_unitary(consts, schedule.b_z, stage, h)? * u;
    }
    Ok(u)
}

fn conjugate(u: &Mat16, rho: &Mat16) -> Mat16 {
    u * rho * u.adjoint()
}

fn apply_split(u: &Mat16, rho: &mut Mat16, half: &[[f64; DIM]; DIM], block: bool) {
    super::apply_decay(rho, half);
    *rho = if block { conjugate_sectors(u, rho) } else { conjugate(u, rho) };
    super::apply_decay(rho, half);
}

/// Steps after which a sample is stored, always including the last one.
fn sample_steps(n: usize, duration: f64, interval: Option<f64>, keep: bool) -> Vec<usize> {
    if !keep {
        return vec![n];
    }
    let per = match interval {
        Some(dt) => ((duration / dt).round().max(1.0) as usize).min(n),
        None => 1,
    };
    (1..=per).map(|k| (k * n).div_ceil(per)).collect()
}

fn record(
    states: &mut [Mat16],
    trajs: &mut [Trajectory],
    t: f64,
    keep: bool,
    to_lab: impl Fn(&Mat16) -> Mat16,
) {
    for (rho, traj) in states.iter_mut().zip(trajs.iter_mut()) {
        // trace and Hermiticity defect are invariant under the diagonal frame
        traj.stats.observe(rho);
        if keep {
            traj.push(t, &to_lab(rho));
        }
    }
}

/// Evolves every input through `schedule`, sharing propagators.
pub fn evolve_schedule_batch(
    inputs: &[DensityMatrix],
    consts: &PhysicalConstants,
    schedule: &GateSchedule,
    dephasing: &DephasingParams,
    config: &IntegratorConfig,
    keep_trajectory: bool,
) -> Result<Vec<(DensityMatrix, Trajectory)>> {
    let rates = vec![*dephasing; inputs.len()];
    evolve_schedule_mixed(inputs, &rates, consts, schedule, config, keep_trajectory)
}

/// Like [`evolve_schedule_batch`], with separate dephasing rates per input.
pub fn evolve_schedule_mixed(
    inputs: &[DensityMatrix],
    dephasing: &[DephasingParams],
    consts: &PhysicalConstants,
    schedule: &GateSchedule,
    config: &IntegratorConfig,
    keep_trajectory: bool,
) -> Result<Vec<(DensityMatrix, Trajectory)>> {
    config.validate()?;
    if dephasing.len() != inputs.len() {
        return Err(Error::InvalidArgument("one set of dephasing rates per input".into()));
    }
    for d in dephasing {
        d.validate()?;
    }
    let hbar = consts.hbar_u_us();
    let b_z = schedule.b_z;
    let damped: Vec<bool> = dephasing.iter().map(|d| !d.is_zero()).collect();
    let any_closed = damped.iter().any(|d| !d);
    let mut states: Vec<Mat16> = inputs.iter().map(|r| *r.matrix()).collect();
    let mut trajs: Vec<Trajectory> = inputs
        .iter()
        .map(|r| {
            let mut t = Trajectory::default();
            t.push(0.0, r.matrix());
            t
        })
        .collect();
    let mut t0 = 0.0;
    for stage in &schedule.stages {
        let n = step_count(stage.duration, config.exp_step);
        let dt = stage.duration / n as f64;
        let samples = sample_steps(n, stage.duration, config.sample_interval, keep_trajectory);
        let is_sample = |step: usize| samples.binary_search(&step).is_ok();
        let half: Vec<_> = dephasing.iter().map(|d| d.decay_factors(0.5 * dt)).collect();
        let starts = states.clone();

        if stage.ac_on {
            let (frame, g) = drive_frame_generator(consts, b_z, stage)?;
            let eig = eigensystem_unchecked(g);
            let u_step = eig.map(|e| C64::from_polar(1.0, -e * dt / hbar));
            for step in 1..=n {
                let tl = step as f64 * dt;
                let closed = any_closed && is_sample(step);
                let u = closed.then(|| eig.map(|e| C64::from_polar(1.0, -e * tl / hbar)));
                for (k, rho) in states.iter_mut().enumerate() {
                    if damped[k] {
                        apply_split(&u_step, rho, &half[k], false);
                    } else if let Some(u) = &u {
                        *rho = conjugate(u, &starts[k]);
                    }
                }
                if is_sample(step) {
                    record(&mut states, &mut trajs, t0 + tl, keep_trajectory, |r| frame.from_frame(r, tl));
                }
            }
            for rho in states.iter_mut() {
                *rho = frame.from_frame(rho, stage.duration);
            }
        } else {
            let mut acc = Mat16::identity();
            for step in 1..=n {
                let u = magnus_step(consts, b_z, stage, (step - 1) as f64 * dt, dt);
                if any_closed {
                    acc = u * acc;
                }
                for (k, rho) in states.iter_mut().enumerate() {
                    if damped[k] {
                        apply_split(&u, rho, &half[k], true);
                    } else if is_sample(step) {
                        *rho = conjugate_sectors(&acc, &starts[k]);
                    }
                }
                if is_sample(step) {
                    record(&mut states, &mut trajs, t0 + step as f64 * dt, keep_trajectory, |r| *r);
                }
            }
        }
        for traj in trajs.iter_mut() {
            traj.stats.accepted_steps += n as u64;
        }
        t0 += stage.duration;
    }
    Ok(states
        .into_iter()
        .zip(trajs)
        .map(|(rho, traj)| (DensityMatrix::from_matrix(rho), traj))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::integrate_master_equation;
    use crate::gate::CnotConfig;
    use crate::hamiltonian::build_interaction;
    use crate::pulses::build_cnot_schedule;
    use crate::spin::{max_abs, propagate_expm, Vec16};

    fn schedule() -> GateSchedule {
        let cfg = CnotConfig::default();
        build_cnot_schedule(&cfg.constants, &cfg.schedule_spec(1e-3)).unwrap()
    }

    fn superposition() -> DensityMatrix {
        let mut psi = Vec16::zeros();
        for (k, w) in [(12, 0.6), (14, 0.48), (15, 0.64)] {
            psi[k] = C64::new(w, 0.0);
        }
        DensityMatrix::pure(&psi)
    }

    fn rk_reference(consts: &PhysicalConstants, b_z: f64, stage: &Stage, rho: &DensityMatrix, deph: &DephasingParams) -> Mat16 {
        let cfg = IntegratorConfig { rel_tol: 1e-12, abs_tol: 1e-15, max_step: 1e-3, ..Default::default() };
        let traj = integrate_master_equation(
            rho,
            |t| stage_hamiltonian(consts, b_z, stage, t),
            0.0,
            stage.duration,
            consts.hbar_u_us(),
            deph,
            &cfg,
        )
        .unwrap();
        *traj.final_state().unwrap().matrix()
    }

    #[test]
    fn sector_conjugation_matches_dense() {
        let u = expm_sectors(build_interaction(1.3, 0.7, 2.1).matrix(), 0.37, 0.9);
        let rho = Mat16::from_fn(|i, j| C64::new((i * 3 + j) as f64, (i as f64) - (j as f64) * 0.5));
        assert!(max_abs(&(conjugate_sectors(&u, &rho) - conjugate(&u, &rho))) < 1e-11);
    }

    #[test]
    fn sector_exponential_matches_dense() {
        let h = build_interaction(1.3, 0.7, 2.1);
        let dense = propagate_expm(&h, 0.37, 0.9).unwrap();
        assert!(max_abs(&(expm_sectors(h.matrix(), 0.37, 0.9) - dense)) < 1e-12);
    }

    #[test]
    fn magnus_ramp_matches_runge_kutta() {
        let consts = PhysicalConstants::default();
        let mut stage = schedule().stages[0];
        stage.duration = 0.05;
        let rho = superposition();
        let reference = rk_reference(&consts, 0.2, &stage, &rho, &DephasingParams::none());
        let err = |h: f64| {
            let u = stage_unitary(&consts, 0.2, &stage, h).unwrap();
            max_abs(&(u * rho.matrix() * u.adjoint() - reference))
        };
        let (coarse, fine) = (err(1e-3), err(6.25e-5));
        assert!(fine < 1e-8, "{fine}");
        assert!(coarse / fine > 1e3);
    }

    #[test]
    fn drive_frame_swap_matches_lab_frame() {
        let consts = PhysicalConstants::default();
        let mut stage = schedule().stages[2];
        assert!(stage.ac_on);
        stage.duration = 0.02;
        let rho = superposition();
        let u = stage_unitary(&consts, 0.2, &stage, 2.5e-4).unwrap();
        let ours = u * rho.matrix() * u.adjoint();
        let reference = rk_reference(&consts, 0.2, &stage, &rho, &DephasingParams::none());
        assert!(max_abs(&(ours - reference)) < 1e-6);
    }

    #[test]
    fn split_step_matches_runge_kutta_with_dephasing() {
        let consts = PhysicalConstants::default();
        let mut stage = schedule().stages[0];
        stage.duration = 0.05;
        let deph = DephasingParams::from_times(0.05, 0.5).unwrap();
        let sched = GateSchedule { b_z: 0.2, stages: vec![stage] };
        let rho = superposition();
        let cfg = IntegratorConfig { exp_step: 5e-5, ..Default::default() };
        let out = evolve_schedule_batch(&[rho.clone()], &consts, &sched, &deph, &cfg, false).unwrap();
        let reference = rk_reference(&consts, 0.2, &stage, &rho, &deph);
        let d = max_abs(&(out[0].0.matrix() - reference));
        assert!(d < 3e-6, "{d}");
    }

    #[test]
    fn batch_equals_individual_runs() {
        let consts = PhysicalConstants::default();
        let mut sched = schedule();
        for s in sched.stages.iter_mut() {
            s.duration = s.duration.min(0.03);
        }
        let deph = DephasingParams::from_times(5.0, 500.0).unwrap();
        let cfg = IntegratorConfig::default();
        let inputs = [DensityMatrix::basis(12), superposition(), DensityMatrix::basis(15)];
        let batch = evolve_schedule_batch(&inputs, &consts, &sched, &deph, &cfg, false).unwrap();
        for (rho, (got, _)) in inputs.iter().zip(&batch) {
            let single = evolve_schedule_batch(std::slice::from_ref(rho), &consts, &sched, &deph, &cfg, false).unwrap();
            assert_eq!(single[0].0.matrix(), got.matrix());
        }
    }

    #[test]
    fn mixed_rates_match_separate_runs() {
        let consts = PhysicalConstants::default();
        let mut sched = schedule();
        for s in sched.stages.iter_mut() {
            s.duration = s.duration.min(0.03);
        }
        let cfg = IntegratorConfig::default();
        let rates = [DephasingParams::none(), DephasingParams::from_times(2.0, 200.0).unwrap()];
        let inputs = [superposition(), superposition()];
        let mixed = evolve_schedule_mixed(&inputs, &rates, &consts, &sched, &cfg, false).unwrap();
        for (k, d) in rates.iter().enumerate() {
            let single = evolve_schedule_batch(&inputs[k..=k], &consts, &sched, d, &cfg, false).unwrap();
            assert_eq!(single[0].0.matrix(), mixed[k].0.matrix());
        }
        assert!(mixed[1].0.purity() < mixed[0].0.purity());
    }

    #[test]
    fn unitary_gate_preserves_purity() {
        let consts = PhysicalConstants::default();
        let u = gate_unitary(&consts, &schedule(), 1e-3).unwrap();
        let defect = max_abs(&(u.adjoint() * u - Mat16::identity()));
        assert!(defect < 1e-10, "{defect}");
    }
}
