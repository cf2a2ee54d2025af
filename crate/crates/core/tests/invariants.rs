use proptest::prelude::*;

use kanesim::adiabaticity::{theta_at, theta_scan, PairSelection};
use kanesim::dynamics::{rhs_dephasing, rhs_unitary, DephasingParams, RotatingFrame};
use kanesim::gate::{gate_error, CnotConfig, InputLabel};
use kanesim::hamiltonian::{build_derivative, build_total, HamiltonianParams, PhysicalConstants};
use kanesim::pulses::{build_cnot_schedule, PulseProfile, ProfileKind};
use kanesim::spin::{hermiticity_defect, magnetization, max_abs, DensityMatrix, Mat16, Operator, C64, DIM};

fn state_from(entries: &[(f64, f64)]) -> DensityMatrix {
    let g = Mat16::from_fn(|i, j| {
        let (re, im) = entries[i * DIM + j];
        C64::new(re, im)
    });
    let m = g * g.adjoint();
    let tr = m.trace();
    DensityMatrix::from_matrix(m / tr)
}

fn entries() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), DIM * DIM)
}

fn profile_kind() -> impl Strategy<Value = ProfileKind> {
    prop_oneof![Just(ProfileKind::Linear), Just(ProfileKind::Sech), Just(ProfileKind::Linsin)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hamiltonian_is_hermitian_and_conserves_magnetisation(
        a1 in 0.0..3.0f64, a2 in 0.0..3.0f64, j in 0.0..816.0f64, b_z in 0.1..3.0f64
    ) {
        let h = build_total(&PhysicalConstants::default(), &HamiltonianParams::static_params(b_z, a1, a2, j), 0.0);
        prop_assert!(h.hermiticity_defect() < 1e-12);
        for r in 0..DIM {
            for c in 0..DIM {
                if magnetization(r) != magnetization(c) {
                    prop_assert_eq!(h.matrix()[(r, c)], C64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn master_equation_rhs_is_traceless_and_hermitian(
        e in entries(), a1 in 0.0..3.0f64, j in 0.0..816.0f64, tau_e in 0.1..100.0f64, tau_n in 0.1..100.0f64
    ) {
        let rho = state_from(&e);
        let h = build_total(&PhysicalConstants::default(), &HamiltonianParams::static_params(2.0, a1, 1.7, j), 0.0);
        let d = DephasingParams::from_times(tau_e, tau_n).unwrap();
        let rhs = rhs_unitary(&h, &rho, 9.27e-3) + rhs_dephasing(&rho, &d);
        let scale = max_abs(&rhs).max(1.0);
        prop_assert!(rhs.trace().norm() < 1e-9 * scale);
        prop_assert!(hermiticity_defect(&rhs) < 1e-9 * scale);
    }

    #[test]
    fn dephasing_only_reduces_purity(e in entries(), tau_e in 0.1..10.0f64, tau_n in 0.1..10.0f64) {
        let rho = state_from(&e);
        let d = DephasingParams::from_times(tau_e, tau_n).unwrap();
        let drho = rhs_dephasing(&rho, &d);
        // d/dt Tr ρ² = 2 Tr(ρ ρ̇) <= 0
        let rate = 2.0 * (rho.matrix() * drho).trace().re;
        prop_assert!(rate <= 1e-12);
    }

    #[test]
    fn frame_round_trip(e in entries(), t in 0.0..30.0f64) {
        let rho = state_from(&e);
        let f = RotatingFrame::zeeman(&PhysicalConstants::default(), 2.0);
        let back = f.from_frame(&f.to_frame(rho.matrix(), t), t);
        prop_assert!(max_abs(&(back - rho.matrix())) < 1e-12);
    }

    #[test]
    fn gate_error_is_a_probability(e in entries(), label in 0usize..4) {
        let rho = state_from(&e);
        let input = InputLabel::from_index(label).unwrap();
        let err = gate_error(&rho, input);
        prop_assert!((0.0..=1.0).contains(&err));
        let phased = DensityMatrix::from_matrix(rho.matrix() * C64::from_polar(1.0, 0.0));
        prop_assert_eq!(err, gate_error(&phased, input));
    }

    #[test]
    fn rising_profiles_are_monotone_and_bounded(kind in profile_kind(), j_max in 1.0..815.0f64, dur in 0.1..20.0f64) {
        let p = PulseProfile::rising(kind, 0.0, j_max, dur);
        let mut last = -1e-9;
        for k in 0..=200 {
            let v = p.value(dur * k as f64 / 200.0).unwrap();
            prop_assert!(v >= last - 1e-9 * j_max && v <= j_max * (1.0 + 1e-12));
            last = v;
        }
        prop_assert!(p.value(0.0).unwrap().abs() < 1e-9 * j_max);
        prop_assert!((p.value(dur).unwrap() - j_max).abs() < 1e-9 * j_max);
    }

    #[test]
    fn theta_ignores_identity_shift(a1 in 0.1..3.0f64, j in 1.0..800.0f64, shift in -1e3..1e3f64, dj in 1.0..500.0f64) {
        let consts = PhysicalConstants::default();
        let h = build_total(&consts, &HamiltonianParams::static_params(2.0, a1, 1.7, j), 0.0);
        let mut shifted = h.clone();
        shifted.add_scaled(shift, &Operator::identity());
        let dh = build_derivative(0.0, 0.0, dj);
        let a = theta_at(&h, &dh, consts.hbar_u_us(), 1e-6).unwrap();
        let b = theta_at(&shifted, &dh, consts.hbar_u_us(), 1e-6).unwrap();
        prop_assert!((a.theta - b.theta).abs() <= 1e-6 * a.theta.max(1e-300));
    }
}

#[test]
fn theta_scales_inversely_with_duration() {
    let cfg = CnotConfig::default();
    let scan = |t: f64| {
        let mut spec = cfg.schedule_spec(1e-3);
        spec.durations.stage2 = t;
        let s = build_cnot_schedule(&cfg.constants, &spec).unwrap();
        theta_scan(&cfg.constants, spec.b_z, &s.stages[0], 401, 1e-6, PairSelection::Register, 1).unwrap()
    };
    let (a, b) = (scan(9.0), scan(18.0));
    for (x, y) in a.theta.iter().zip(&b.theta) {
        if *x > 1e-12 {
            assert!((y / x - 0.5).abs() < 1e-6, "{x} {y}");
        }
    }
}
