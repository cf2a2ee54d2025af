//! Adiabaticity measure
//! `Θ(t) = max_{a≠b} ħ|<a|∂H/∂t|b>| / (E_a − E_b)²` over instantaneous eigenstates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{build_derivative, build_total, PhysicalConstants};
use crate::parallel;
use crate::pulses::{build_cnot_schedule, ProfileKind, ScheduleSpec, Stage};
use crate::spin::{hermitian_eigensystem, Eigensystem, Operator, DIM};

pub const DEFAULT_GAP_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct ThetaPoint {
    pub theta: f64,
    /// Eigenvalue indices (ascending order) of the maximising pair.
    pub pair: (usize, usize),
    /// Pairs skipped because their gap is below the floor.
    pub excluded: Vec<(usize, usize)>,
}

fn theta_with_eigensystem(h: &Operator, dhdt: &Operator, hbar: f64, gap_floor: f64) -> Result<(ThetaPoint, Eigensystem)> {
    if dhdt.hermiticity_defect() > crate::spin::HERMITIAN_REJECT_TOL * crate::spin::max_abs(dhdt.matrix()).max(1.0) {
        return Err(Error::NonHermitian { defect: dhdt.hermiticity_defect() });
    }
    let eig = hermitian_eigensystem(h)?;
    let m = eig.vectors.adjoint() * dhdt.matrix() * eig.vectors;
    let mut best = ThetaPoint { theta: 0.0, pair: (0, 1), excluded: Vec::new() };
    let mut any = false;
    for a in 0..DIM {
        for b in (a + 1)..DIM {
            let gap = eig.values[b] - eig.values[a];
            if gap.abs() < gap_floor {
                best.excluded.push((a, b));
                continue;
            }
            let th = hbar * m[(a, b)].norm() / (gap * gap);
            if !any || th > best.theta {
                best.theta = th;
                best.pair = (a, b);
                any = true;
            }
        }
    }
    if !any {
        return Err(Error::Degeneracy { gap_floor });
    }
    Ok((best, eig))
}

pub fn theta_at(h: &Operator, dhdt: &Operator, hbar: f64, gap_floor: f64) -> Result<ThetaPoint> {
    theta_with_eigensystem(h, dhdt, hbar, gap_floor).map(|(p, _)| p)
}

/// Which level pairs enter the maximum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairSelection {
    /// Every pair of eigenstates.
    #[default]
    All,
    /// Pairs containing one of the four levels adiabatically connected to the
    /// register states, which start as the four lowest levels.
    Register,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThetaSeries {
    /// μs
    pub times: Vec<f64>,
    pub theta: Vec<f64>,
    /// Maximising pair, in level labels tracked by eigenvector overlap from
    /// the first sample (labels there are ascending energy order).
    pub pairs: Vec<(usize, usize)>,
}

impl ThetaSeries {
    pub fn max(&self) -> f64 {
        self.theta.iter().copied().fold(0.0, f64::max)
    }

    pub fn argmax(&self) -> usize {
        self.theta
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
            .0
    }
}

/// Maps eigenvalue indices at one sample to labels inherited from the
/// previous sample by largest overlap.
fn track_labels(prev: &Eigensystem, prev_labels: &[usize; DIM], cur: &Eigensystem) -> [usize; DIM] {
    let overlap = prev.vectors.adjoint() * cur.vectors;
    let mut labels = [usize::MAX; DIM];
    let mut taken = [false; DIM];
    let mut order: Vec<(usize, usize, f64)> = Vec::with_capacity(DIM * DIM);
    for i in 0..DIM {
        for j in 0..DIM {
            order.push((i, j, overlap[(i, j)].norm_sqr()));
        }
    }
    order.sort_by(|a, b| b.2.total_cmp(&a.2));
    for (i, j, _) in order {
        if !taken[i] && labels[j] == usize::MAX {
            taken[i] = true;
            labels[j] = prev_labels[i];
        }
    }
    labels
}

/// Θ for every pair (`None` below the gap floor).
fn pair_table(h: &Operator, dhdt: &Operator, hbar: f64, gap_floor: f64) -> Result<(Vec<(usize, usize, f64)>, Eigensystem)> {
    let eig = hermitian_eigensystem(h)?;
    let m = eig.vectors.adjoint() * dhdt.matrix() * eig.vectors;
    let mut out = Vec::with_capacity(DIM * (DIM - 1) / 2);
    for a in 0..DIM {
        for b in (a + 1)..DIM {
            let gap = eig.values[b] - eig.values[a];
            if gap.abs() >= gap_floor {
                out.push((a, b, hbar * m[(a, b)].norm() / (gap * gap)));
            }
        }
    }
    Ok((out, eig))
}

/// Θ on `n_samples` evenly spaced stage-local times, using analytic control
/// derivatives.
pub fn theta_scan(
    consts: &PhysicalConstants,
    b_z: f64,
    stage: &Stage,
    n_samples: usize,
    gap_floor: f64,
    selection: PairSelection,
    parallelism: usize,
) -> Result<ThetaSeries> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument("theta_scan needs at least two samples".into()));
    }
    let hbar = consts.hbar_u_us();
    let times: Vec<f64> = (0..n_samples).map(|k| stage.duration * k as f64 / (n_samples - 1) as f64).collect();
    let tables = parallel::map(&times, parallelism, |&t| {
        let h = build_total(consts, &stage.params_at(b_z, t), t);
        let (da1, da2, dj) = stage.rates_at(t);
        pair_table(&h, &build_derivative(da1, da2, dj), hbar, gap_floor)
    });
    let mut series = ThetaSeries::default();
    let mut labels: [usize; DIM] = std::array::from_fn(|k| k);
    let mut prev: Option<Eigensystem> = None;
    for (t, table) in times.into_iter().zip(tables) {
        let (pairs, eig) = table?;
        if let Some(pe) = &prev {
            labels = track_labels(pe, &labels, &eig);
        }
        let mut best: Option<(usize, usize, f64)> = None;
        for &(a, b, th) in &pairs {
            let (la, lb) = (labels[a], labels[b]);
            if selection == PairSelection::Register && la >= 4 && lb >= 4 {
                continue;
            }
            if best.is_none_or(|x| th > x.2) {
                best = Some((la.min(lb), la.max(lb), th));
            }
        }
        let (la, lb, th) = best.ok_or(Error::Degeneracy { gap_floor })?;
        series.times.push(t);
        series.theta.push(th);
        series.pairs.push((la, lb));
        prev = Some(eig);
    }
    Ok(series)
}

/// Θ over stage 2 for each J profile at equal durations.
pub fn compare_profiles(
    consts: &PhysicalConstants,
    spec: &ScheduleSpec,
    n_samples: usize,
    gap_floor: f64,
    selection: PairSelection,
    parallelism: usize,
) -> Result<Vec<(ProfileKind, ThetaSeries)>> {
    ProfileKind::ALL
        .iter()
        .map(|&kind| {
            let s = ScheduleSpec { profile: kind, ..*spec };
            let schedule = build_cnot_schedule(consts, &s)?;
            let series = theta_scan(consts, s.b_z, &schedule.stages[0], n_samples, gap_floor, selection, parallelism)?;
            Ok((kind, series))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::spin_operators;
    use crate::spin::{Axis, Site};
    use approx::assert_relative_eq;

    fn toy(delta: f64, v: f64, t: f64) -> (Operator, Operator) {
        let ops = spin_operators();
        let x = ops.get(Axis::X, Site::N1);
        let z = ops.get(Axis::Z, Site::N1);
        let mut h = x.scaled(delta);
        h.add_scaled(v * t, z);
        // commuting fields on the other sites split the eight copies
        h.add_scaled(10.0, ops.get(Axis::Z, Site::E1));
        h.add_scaled(20.0, ops.get(Axis::Z, Site::N2));
        h.add_scaled(40.0, ops.get(Axis::Z, Site::E2));
        (h, z.scaled(v))
    }

    #[test]
    fn constant_hamiltonian_has_zero_theta() {
        let (h, _) = toy(1.0, 0.5, 0.0);
        let p = theta_at(&h, &Operator::zero(), 1.0, 1e-6).unwrap();
        assert_eq!(p.theta, 0.0);
    }

    #[test]
    fn two_level_toy_matches_closed_form() {
        let (delta, v, hbar) = (0.8, 0.3, 0.7);
        let (h, dh) = toy(delta, v, 0.0);
        let p = theta_at(&h, &dh, hbar, 1e-6).unwrap();
        assert_relative_eq!(p.theta, hbar * v / (4.0 * delta * delta), max_relative = 1e-12);
        assert!(p.excluded.is_empty());
    }

    #[test]
    fn derivative_proportional_to_h_gives_zero() {
        let (h, _) = toy(0.8, 0.3, 1.0);
        let p = theta_at(&h, &h.scaled(2.5), 1.0, 1e-6).unwrap();
        assert!(p.theta < 1e-12);
    }

    #[test]
    fn identity_shift_is_irrelevant() {
        let (h, dh) = toy(0.8, 0.3, 0.4);
        let mut shifted = h.clone();
        shifted.add_scaled(17.0, &Operator::identity());
        let a = theta_at(&h, &dh, 1.0, 1e-6).unwrap();
        let b = theta_at(&shifted, &dh, 1.0, 1e-6).unwrap();
        assert_relative_eq!(a.theta, b.theta, max_relative = 1e-9);
    }

    #[test]
    fn fully_degenerate_spectrum_is_an_error() {
        let r = theta_at(&Operator::identity(), &Operator::zero(), 1.0, 1e-6);
        assert!(matches!(r, Err(Error::Degeneracy { .. })));
    }

    #[test]
    fn rejects_too_few_samples() {
        let c = PhysicalConstants::default();
        let spec = crate::gate::CnotConfig::default().schedule_spec(1e-3);
        let s = build_cnot_schedule(&c, &spec).unwrap();
        assert!(theta_scan(&c, 2.0, &s.stages[0], 1, 1e-6, PairSelection::All, 1).is_err());
    }
}
