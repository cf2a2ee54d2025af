//! Dormand–Prince 5(4) with PI step-size control, specialised to 16×16
//! complex matrices.

use crate::error::{Error, Result};
use crate::spin::{Mat16, C64};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;
const EXPO: f64 = 0.2 - BETA * 0.75;

#[derive(Clone, Copy, Debug)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub min_step: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RkCounters {
    pub accepted: u64,
    pub rejected: u64,
    pub rhs_evals: u64,
}

fn lin(terms: &[(f64, &Mat16)]) -> Mat16 {
    let mut out = Mat16::zeros();
    for &(w, m) in terms {
        if w != 0.0 {
            let w = C64::new(w, 0.0);
            for (o, x) in out.iter_mut().zip(m.iter()) {
                *o += w * x;
            }
        }
    }
    out
}

fn error_norm(err: &Mat16, y0: &Mat16, y1: &Mat16, ctl: &StepControl) -> f64 {
    let mut acc = 0.0;
    for k in 0..err.len() {
        let sc = ctl.abs_tol + ctl.rel_tol * y0[k].norm().max(y1[k].norm());
        acc += (err[k].norm() / sc).powi(2);
    }
    (acc / err.len() as f64).sqrt()
}

/// Integrates `dy/dt = f(t, y)` from `t0` to `t1`, landing exactly on every
/// time in `stops` (ascending, inside `(t0, t1]`). `on_step` sees each
/// accepted `(t, y)` and may modify `y` in place (used for renormalisation);
/// `on_stop` is called at each stop time.
pub fn integrate<F, S, P>(
    mut f: F,
    t0: f64,
    t1: f64,
    y0: Mat16,
    ctl: &StepControl,
    stops: &[f64],
    mut on_step: S,
    mut on_stop: P,
) -> Result<(Mat16, RkCounters)>
where
    F: FnMut(f64, &Mat16) -> Mat16,
    S: FnMut(f64, &mut Mat16),
    P: FnMut(f64, &Mat16),
{
    let mut counters = RkCounters::default();
    let mut y = y0;
    if t1 <= t0 {
        return Ok((y, counters));
    }
    let mut t = t0;
    let mut h = ctl.initial_step.min(ctl.max_step).min(t1 - t0);
    let mut k1 = f(t, &y);
    counters.rhs_evals += 1;
    let mut err_old = 1e-4_f64;
    let mut next_stop = 0;
    while next_stop < stops.len() && stops[next_stop] <= t0 {
        next_stop += 1;
    }
    loop {
        let target = if next_stop < stops.len() { stops[next_stop].min(t1) } else { t1 };
        let mut last = false;
        if t + h >= target - 1e-14 * target.abs().max(1.0) {
            h = target - t;
            last = true;
        }
        let k2 = f(t + C2 * h, &(y + lin(&[(h * A21, &k1)])));
        let k3 = f(t + C3 * h, &(y + lin(&[(h * A31, &k1), (h * A32, &k2)])));
        let k4 = f(t + C4 * h, &(y + lin(&[(h * A41, &k1), (h * A42, &k2), (h * A43, &k3)])));
        let k5 = f(
            t + C5 * h,
            &(y + lin(&[(h * A51, &k1), (h * A52, &k2), (h * A53, &k3), (h * A54, &k4)])),
        );
        let k6 = f(
            t + h,
            &(y + lin(&[
                (h * A61, &k1),
                (h * A62, &k2),
                (h * A63, &k3),
                (h * A64, &k4),
                (h * A65, &k5),
            ])),
        );
        let y_new = y + lin(&[
            (h * A71, &k1),
            (h * A73, &k3),
            (h * A74, &k4),
            (h * A75, &k5),
            (h * A76, &k6),
        ]);
        let k7 = f(t + h, &y_new);
        counters.rhs_evals += 6;
        let err_vec = lin(&[
            (h * E1, &k1),
            (h * E3, &k3),
            (h * E4, &k4),
            (h * E5, &k5),
            (h * E6, &k6),
            (h * E7, &k7),
        ]);
        let err = error_norm(&err_vec, &y, &y_new, ctl);

        if err <= 1.0 {
            counters.accepted += 1;
            t = if last { target } else { t + h };
            y = y_new;
            on_step(t, &mut y);
            // on_step may rescale y; k7 must follow
            k1 = if (y - y_new).iter().all(|z| *z == C64::new(0.0, 0.0)) {
                k7
            } else {
                counters.rhs_evals += 1;
                f(t, &y)
            };
            if last {
                if next_stop < stops.len() && target == stops[next_stop].min(t1) {
                    on_stop(t, &y);
                    next_stop += 1;
                }
                if t >= t1 {
                    break;
                }
            }
            let err_c = err.max(1e-10);
            let fac = (SAFETY * err_c.powf(-EXPO) * err_old.powf(BETA)).clamp(FAC_MIN, FAC_MAX);
            err_old = err_c;
            h = (h * fac).min(ctl.max_step);
        } else {
            counters.rejected += 1;
            let fac = (SAFETY * err.powf(-0.2)).max(FAC_MIN);
            h *= fac;
            if h < ctl.min_step {
                return Err(Error::StepSizeUnderflow { t, step: h, error: err });
            }
        }
    }
    Ok((y, counters))
}
