//! The four-spin Hamiltonian `H = H_Z + H_int(t) + H_ac(t)` and the spectral
//! quantities derived from it.
//!
//! Units: energies in `u = 7.1e-5 meV`, magnetic fields in tesla, time in μs
//! and angular frequency in rad/μs. ħ is therefore expressed in u·μs.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::{
    dot_coupling, embed_pauli, hermitian_eigensystem, product_state, Axis, Eigensystem, Operator,
    Site, Vec16, C64, DIM,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalConstants {
    /// Nuclear g-factor of ³¹P.
    pub g_n: f64,
    /// Nuclear magneton, eV/T.
    pub mu_n: f64,
    /// Bohr magneton, eV/T.
    pub mu_b: f64,
    /// Reduced Planck constant, eV·s.
    pub hbar: f64,
    /// Energy unit `u`, eV.
    pub unit_energy: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            g_n: 2.2632,
            mu_n: 3.15245e-8,
            mu_b: 5.78838e-5,
            hbar: 6.58212e-16,
            unit_energy: 7.1e-8,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("g_n", self.g_n),
            ("mu_n", self.mu_n),
            ("mu_b", self.mu_b),
            ("hbar", self.hbar),
            ("unit_energy", self.unit_energy),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("constants.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `g_n μ_n B` in u.
    pub fn nuclear_zeeman(&self, b: f64) -> f64 {
        self.g_n * self.mu_n * b / self.unit_energy
    }

    /// `μ_B B` in u.
    pub fn electron_zeeman(&self, b: f64) -> f64 {
        self.mu_b * b / self.unit_energy
    }

    /// ħ in u·μs.
    pub fn hbar_u_us(&self) -> f64 {
        self.hbar / self.unit_energy * 1e6
    }

    /// `(μ_B B + g_n μ_n B) / 2`, the exchange value at which the
    /// `|anti>` and `|11>`-singlet levels cross when the hyperfine couplings are equal.
    pub fn crossing_estimate(&self, b_z: f64) -> f64 {
        0.5 * (self.electron_zeeman(b_z) + self.nuclear_zeeman(b_z))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianParams {
    /// Static field, T.
    pub b_z: f64,
    /// Hyperfine couplings, u.
    pub a1: f64,
    pub a2: f64,
    /// Exchange coupling, u.
    pub j: f64,
    /// Transverse field amplitude, T.
    pub b_ac: f64,
    /// Signed drive angular frequency, rad/μs.
    pub omega: f64,
    pub ac_on: bool,
}

impl HamiltonianParams {
    pub fn static_params(b_z: f64, a1: f64, a2: f64, j: f64) -> Self {
        HamiltonianParams { b_z, a1, a2, j, b_ac: 0.0, omega: 0.0, ac_on: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b_z > 0.0) {
            return Err(Error::InvalidArgument(format!("B_z must be positive, got {}", self.b_z)));
        }
        if self.a1 < 0.0 || self.a2 < 0.0 || self.j < 0.0 || self.b_ac < 0.0 {
            return Err(Error::InvalidArgument(
                "A1, A2, J and B_ac must be non-negative".to_string(),
            ));
        }
        Ok(())
    }
}

/// Pauli sums reused by every Hamiltonian evaluation.
pub struct SpinOperators {
    pub sigma: [[Operator; 4]; 3],
    pub hyperfine1: Operator,
    pub hyperfine2: Operator,
    pub exchange: Operator,
    pub z_nuclear: Operator,
    pub z_electron: Operator,
    pub x_nuclear: Operator,
    pub x_electron: Operator,
    pub y_nuclear: Operator,
    pub y_electron: Operator,
}

impl SpinOperators {
    fn new() -> Self {
        let sigma = Axis::ALL.map(|axis| Site::ALL.map(|site| embed_pauli(axis, site)));
        let pair = |axis: usize, a: Site, b: Site| &sigma[axis][a.slot()] + &sigma[axis][b.slot()];
        SpinOperators {
            hyperfine1: dot_coupling(Site::N1, Site::E1).expect("distinct sites"),
            hyperfine2: dot_coupling(Site::N2, Site::E2).expect("distinct sites"),
            exchange: dot_coupling(Site::E1, Site::E2).expect("distinct sites"),
            z_nuclear: pair(2, Site::N1, Site::N2),
            z_electron: pair(2, Site::E1, Site::E2),
            x_nuclear: pair(0, Site::N1, Site::N2),
            x_electron: pair(0, Site::E1, Site::E2),
            y_nuclear: pair(1, Site::N1, Site::N2),
            y_electron: pair(1, Site::E1, Site::E2),
            sigma,
        }
    }

    pub fn get(&self, axis: Axis, site: Site) -> &Operator {
        let a = match axis {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        };
        &self.sigma[a][site.slot()]
    }
}

pub fn spin_operators() -> &'static SpinOperators {
    static OPS: OnceLock<SpinOperators> = OnceLock::new();
    OPS.get_or_init(SpinOperators::new)
}

pub fn build_zeeman(consts: &PhysicalConstants, b_z: f64) -> Operator {
    let ops = spin_operators();
    let mut h = ops.z_nuclear.scaled(-consts.nuclear_zeeman(b_z));
    h.add_scaled(consts.electron_zeeman(b_z), &ops.z_electron);
    h
}

pub fn build_interaction(a1: f64, a2: f64, j: f64) -> Operator {
    let ops = spin_operators();
    let mut h = ops.hyperfine1.scaled(a1);
    h.add_scaled(a2, &ops.hyperfine2);
    h.add_scaled(j, &ops.exchange);
    h
}

/// Circularly polarised transverse drive; `omega` is signed so either sense
/// of rotation can be selected.
pub fn build_ac(consts: &PhysicalConstants, b_ac: f64, omega: f64, t: f64) -> Operator {
    let ops = spin_operators();
    let nuc = -consts.nuclear_zeeman(b_ac);
    let ele = consts.electron_zeeman(b_ac);
    let (s, c) = (omega * t).sin_cos();
    let mut h = ops.x_nuclear.scaled(c * nuc);
    h.add_scaled(c * ele, &ops.x_electron);
    h.add_scaled(s * nuc, &ops.y_nuclear);
    h.add_scaled(s * ele, &ops.y_electron);
    h
}

pub fn build_total(consts: &PhysicalConstants, params: &HamiltonianParams, t: f64) -> Operator {
    let mut h = build_zeeman(consts, params.b_z);
    h += &build_interaction(params.a1, params.a2, params.j);
    if params.ac_on {
        h += &build_ac(consts, params.b_ac, params.omega, t);
    }
    h
}

/// `∂H/∂t` for given control rates (u/μs, T/μs). The drive phase is
/// excluded; it is only needed for static-drive stages.
pub fn build_derivative(da1: f64, da2: f64, dj: f64) -> Operator {
    build_interaction(da1, da2, dj)
}

/// Perturbative `|symm>`/`|anti>` splitting
/// `2A²(1/(μ_B B + g_n μ_n B) − 1/(μ_B B + g_n μ_n B − 2J))` in u.
///
/// With the exchange convention `J σ⃗_e1·σ⃗_e2` this equals
/// `E(anti) − E(symm)`.
pub fn delta_e(consts: &PhysicalConstants, a: f64, j: f64, b_z: f64) -> Result<f64> {
    let d1 = consts.electron_zeeman(b_z) + consts.nuclear_zeeman(b_z);
    let d2 = d1 - 2.0 * j;
    if d2.abs() < 1e-6 {
        return Err(Error::Singularity { j });
    }
    Ok(2.0 * a * a * (1.0 / d1 - 1.0 / d2))
}

/// Nuclear register basis labels as amplitudes over `|n1 n2>`.
fn nuclear_basis(label: usize) -> [C64; 4] {
    std::array::from_fn(|k| if k == label { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
}

const ELECTRON_GROUND: usize = 3; // both electrons σ^z = −1

fn electron_ground() -> [C64; 4] {
    nuclear_basis(ELECTRON_GROUND)
}

/// `(|10> ± |01>)/√2` on the nuclei with both electrons in their Zeeman ground state.
#[derive(Clone, Debug)]
pub struct SpecialStates {
    pub symm: Vec16,
    pub anti: Vec16,
}

pub fn special_states() -> SpecialStates {
    let r = 1.0 / 2f64.sqrt();
    let o = C64::new(0.0, 0.0);
    let symm_n = [o, C64::new(r, 0.0), C64::new(r, 0.0), o];
    let anti_n = [o, C64::new(-r, 0.0), C64::new(r, 0.0), o];
    // nuclear index 2·b(n1)+b(n2): |10> is index 2, |01> is index 1.
    SpecialStates {
        symm: product_state(&symm_n, &electron_ground()),
        anti: product_state(&anti_n, &electron_ground()),
    }
}

/// Nuclear basis state `|n1 n2>` (label `2·n1 + n2`) with both electrons down.
pub fn register_state(label: usize) -> Vec16 {
    product_state(&nuclear_basis(label), &electron_ground())
}

/// `|11>` on the nuclei with the electrons in the singlet `(|↑↓> − |↓↑>)/√2`.
pub fn singlet_11() -> Vec16 {
    let r = 1.0 / 2f64.sqrt();
    let o = C64::new(0.0, 0.0);
    // electron index 2·b(e1)+b(e2): ↑↓ is 1, ↓↑ is 2.
    let s = [o, C64::new(r, 0.0), C64::new(-r, 0.0), o];
    product_state(&nuclear_basis(3), &s)
}

/// Overlap weight of `target` with each eigenvector, summed over numerically
/// degenerate clusters so an arbitrary basis choice inside a degenerate
/// subspace does not matter. Returns (eigen index, weight) of the best match.
pub fn best_match(eig: &Eigensystem, target: &Vec16) -> (usize, f64) {
    let scale = eig.values.iter().fold(1.0_f64, |m, e| m.max(e.abs()));
    let tol = 1e-10 * scale;
    let mut best = (0, -1.0);
    let mut k = 0;
    while k < DIM {
        let mut end = k + 1;
        while end < DIM && eig.values[end] - eig.values[end - 1] < tol {
            end += 1;
        }
        let weight: f64 = (k..end)
            .map(|m| eig.vectors.column(m).dotc(target).norm_sqr())
            .sum();
        if weight > best.1 {
            best = (k, weight);
        }
        k = end;
    }
    best
}

/// Gap between the two levels that exchange character at the
/// `|anti>` ↔ `|11>`-singlet anticrossing.
pub fn anticrossing_gap(
    consts: &PhysicalConstants,
    a1: f64,
    a2: f64,
    j: f64,
    b_z: f64,
) -> Result<f64> {
    let h = build_total(consts, &HamiltonianParams::static_params(b_z, a1, a2, j), 0.0);
    let eig = hermitian_eigensystem(&h)?;
    let specials = special_states();
    let singlet = singlet_11();
    let mut weights: Vec<(usize, f64)> = (0..DIM)
        .map(|k| {
            let v = eig.vectors.column(k);
            (k, v.dotc(&specials.anti).norm_sqr() + v.dotc(&singlet).norm_sqr())
        })
        .collect();
    weights.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok((eig.values[weights[0].0] - eig.values[weights[1].0]).abs())
}

/// Exchange value minimising the anticrossing gap, by golden-section search
/// in a bracket around the analytic crossing estimate.
pub fn find_level_crossing(consts: &PhysicalConstants, a: f64, b_z: f64) -> Result<f64> {
    let centre = consts.crossing_estimate(b_z);
    let half = 20.0 + 10.0 * a;
    find_level_crossing_in(consts, a, b_z, (centre - half, centre + half))
}

pub fn find_level_crossing_in(
    consts: &PhysicalConstants,
    a: f64,
    b_z: f64,
    bracket: (f64, f64),
) -> Result<f64> {
    if a < 0.0 || !(b_z > 0.0) {
        return Err(Error::InvalidArgument("need A >= 0 and B_z > 0".into()));
    }
    let gap = |j: f64| anticrossing_gap(consts, a, a, j, b_z);
    let (mut lo, mut hi) = bracket;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = gap(x1)?;
    let mut f2 = gap(x2)?;
    let (g_lo, g_hi) = (gap(lo)?, gap(hi)?);
    while hi - lo > 1e-9 * centre_scale(lo, hi) {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = gap(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = gap(x2)?;
        }
    }
    let j_star = 0.5 * (lo + hi);
    let g_star = gap(j_star)?;
    if g_star >= g_lo.min(g_hi) || (j_star - bracket.0).abs() < 1e-6 || (bracket.1 - j_star).abs() < 1e-6 {
        return Err(Error::NoBracket { lo: bracket.0, hi: bracket.1 });
    }
    Ok(j_star)
}

fn centre_scale(lo: f64, hi: f64) -> f64 {
    lo.abs().max(hi.abs()).max(1.0)
}

/// Angular frequency (rad/μs, positive) of the `|symm>` ↔ `|11>` transition
/// of the static Hamiltonian.
pub fn resonance_frequency(consts: &PhysicalConstants, params: &HamiltonianParams) -> Result<f64> {
    if params.ac_on {
        return Err(Error::InvalidArgument(
            "resonance frequency is defined for the static (drive-off) Hamiltonian".into(),
        ));
    }
    let eig = hermitian_eigensystem(&build_total(consts, params, 0.0))?;
    let (a, wa) = best_match(&eig, &special_states().symm);
    if wa < 0.5 {
        return Err(Error::Identification { what: "|symm>", overlap: wa });
    }
    let (b, wb) = best_match(&eig, &register_state(3));
    if wb < 0.5 {
        return Err(Error::Identification { what: "|11>", overlap: wb });
    }
    Ok((eig.values[b] - eig.values[a]).abs() / consts.hbar_u_us())
}
