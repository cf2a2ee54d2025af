use crate::hamiltonian::{build_zeeman, PhysicalConstants};
use crate::spin::{magnetization, Mat16, Operator, C64, DIM};

/// Frame `U(t) = exp(i ω t G)` for a diagonal generator `G`, stored as the
/// per-basis-state rates `ω G_kk` (rad/μs).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotatingFrame {
    rates: [f64; DIM],
}

impl RotatingFrame {
    pub fn new(omega: f64, generator: &[f64; DIM]) -> Self {
        RotatingFrame { rates: std::array::from_fn(|k| omega * generator[k]) }
    }

    pub fn identity() -> Self {
        RotatingFrame { rates: [0.0; DIM] }
    }

    /// Generator `S = Σ σ^z / 2` over all four spins. The circular drive at
    /// angular frequency `omega` is static in this frame.
    pub fn drive(omega: f64) -> Self {
        let g: [f64; DIM] = std::array::from_fn(|k| 0.5 * magnetization(k) as f64);
        RotatingFrame::new(omega, &g)
    }

    /// Interaction frame of the Zeeman term, removing the bare Larmor phases.
    pub fn zeeman(consts: &PhysicalConstants, b_z: f64) -> Self {
        let hz = build_zeeman(consts, b_z).diagonal();
        let hbar = consts.hbar_u_us();
        RotatingFrame { rates: std::array::from_fn(|k| hz[k] / hbar) }
    }

    pub fn rates(&self) -> &[f64; DIM] {
        &self.rates
    }

    pub fn is_identity(&self) -> bool {
        self.rates.iter().all(|&r| r == 0.0)
    }

    fn phases(&self, t: f64) -> [C64; DIM] {
        std::array::from_fn(|k| C64::from_polar(1.0, self.rates[k] * t))
    }

    /// `U ρ U†`.
    pub fn to_frame(&self, m: &Mat16, t: f64) -> Mat16 {
        let p = self.phases(t);
        Mat16::from_fn(|i, j| p[i] * m[(i, j)] * p[j].conj())
    }

    /// `U† ρ U`.
    pub fn from_frame(&self, m: &Mat16, t: f64) -> Mat16 {
        let p = self.phases(t);
        Mat16::from_fn(|i, j| p[i].conj() * m[(i, j)] * p[j])
    }

    /// `U H U† − ħ ω G`, the generator of the transformed state.
    pub fn hamiltonian_to_frame(&self, h: &Mat16, t: f64, hbar: f64) -> Mat16 {
        let mut out = self.to_frame(h, t);
        for k in 0..DIM {
            out[(k, k)] -= C64::new(hbar * self.rates[k], 0.0);
        }
        out
    }

    /// Inverse of [`hamiltonian_to_frame`](Self::hamiltonian_to_frame).
    pub fn hamiltonian_from_frame(&self, h: &Mat16, t: f64, hbar: f64) -> Mat16 {
        let mut shifted = *h;
        for k in 0..DIM {
            shifted[(k, k)] += C64::new(hbar * self.rates[k], 0.0);
        }
        self.from_frame(&shifted, t)
    }
}

/// Frame transformation for either a density matrix or a Hamiltonian.
pub fn to_rotating_frame(op: &Operator, frame: &RotatingFrame, t: f64) -> Operator {
    Operator::from_matrix(frame.to_frame(op.matrix(), t))
}

pub fn from_rotating_frame(op: &Operator, frame: &RotatingFrame, t: f64) -> Operator {
    Operator::from_matrix(frame.from_frame(op.matrix(), t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{rhs_dephasing, DephasingParams};
    use crate::hamiltonian::build_ac;
    use crate::spin::{max_abs, DensityMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(rng: &mut ChaCha8Rng) -> Mat16 {
        let m = Mat16::from_fn(|_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        (m + m.adjoint()) * C64::new(0.5, 0.0)
    }

    #[test]
    fn zero_time_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_hermitian(&mut rng);
        let f = RotatingFrame::drive(37.0);
        assert_eq!(f.to_frame(&m, 0.0), m);
    }

    #[test]
    fn round_trip_restores_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = PhysicalConstants::default();
        for frame in [RotatingFrame::drive(-812.0), RotatingFrame::zeeman(&c, 2.0)] {
            let m = random_hermitian(&mut rng);
            let t = rng.random_range(0.0..10.0);
            let back = frame.from_frame(&frame.to_frame(&m, t), t);
            assert!(max_abs(&(back - m)) < 1e-12);
            let hb = frame.hamiltonian_from_frame(&frame.hamiltonian_to_frame(&m, t, 0.3), t, 0.3);
            // ħ·rate reaches 5e4 for the Zeeman frame; round-off scales with it
            assert!(max_abs(&(hb - m)) < 1e-10);
        }
    }

    #[test]
    fn circular_drive_is_static_in_drive_frame() {
        let c = PhysicalConstants::default();
        for omega in [813.5, -813.5] {
            let frame = RotatingFrame::drive(omega);
            let h0 = frame.to_frame(build_ac(&c, 1e-3, omega, 0.0).matrix(), 0.0);
            for k in 1..50 {
                let t = 0.0137 * k as f64;
                let ht = frame.to_frame(build_ac(&c, 1e-3, omega, t).matrix(), t);
                assert!(max_abs(&(ht - h0)) < 1e-10);
            }
        }
    }

    #[test]
    fn frame_commutes_with_dephasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = DephasingParams { gamma_e: 0.3, gamma_n: 0.05 };
        let frame = RotatingFrame::drive(123.0);
        let rho = random_hermitian(&mut rng);
        let t = 0.77;
        let lhs = rhs_dephasing(&DensityMatrix::from_matrix(frame.to_frame(&rho, t)), &params);
        let rhs = frame.to_frame(&rhs_dephasing(&DensityMatrix::from_matrix(rho), &params), t);
        assert!(max_abs(&(lhs - rhs)) < 1e-12);
    }
}
