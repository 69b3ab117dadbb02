//! The noisy light-shift gate: dephasing channels, the Kraus form, the
//! context-dependent sequence channel and its intermediate maps, and the
//! breathing-mode bookkeeping (amplification, accumulated phase, trajectory).
//!
//! Every LS channel here is diagonal in the natural representation. Entry
//! `σ + 4γ` multiplies the matrix element |σ⟩⟨γ|; with z = ±1 the qubit
//! eigenvalues, s = z₁ + z₂ and a = z₁ − z₂, correlated dephasing damps it by
//! exp(−Γ_d (s_σ − s_γ)²/4) and the breathing mode by exp(−Γ_th (a_σ − a_γ)²/4).

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::qchan::{c, pauli, KrausSet, SuperOp};
use crate::{CMat, Error, Result, C64};

const LIMIT_WINDOW: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsParams {
    pub gamma_d: f64,
    pub gamma_th: f64,
    pub theta_ls: f64,
    /// Local phase ω₀·t_g accumulated during one gate.
    pub omega0_t: f64,
    /// Breathing-mode phase advance per gate, ω_{z,2}·t_g.
    pub x: f64,
    /// (|Ω̃_L| η_b / δ_b)², scale of the accumulated entangling phase ζ_b^p.
    pub zeta_prefactor: f64,
}

impl LsParams {
    pub fn ideal() -> Self {
        Self { gamma_d: 0.0, gamma_th: 0.0, theta_ls: PI / 4.0, omega0_t: 0.0, x: 0.0, zeta_prefactor: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceParams {
    pub p: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ContextMode {
    #[default]
    ContextDependent,
    ContextIndependent,
}

impl FromStr for ContextMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "context-dependent" | "dependent" | "cd" => Ok(ContextMode::ContextDependent),
            "context-independent" | "independent" | "ci" => Ok(ContextMode::ContextIndependent),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for ContextMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ContextMode::ContextDependent => "context-dependent",
            ContextMode::ContextIndependent => "context-independent",
        })
    }
}

/// z-eigenvalues (z₀, z₁) of computational basis state `b = 2·b₀ + b₁`.
pub fn z_values(b: usize) -> (f64, f64) {
    let z = |bit: usize| if bit == 0 { 1.0 } else { -1.0 };
    (z(b >> 1), z(b & 1))
}

/// Real 16-entry diagonal of the combined dephasing channel.
pub fn noise_diagonal(gamma_d: f64, gamma_th: f64) -> [f64; 16] {
    let mut out = [0.0; 16];
    for (k, entry) in out.iter_mut().enumerate() {
        let (sigma, gamma) = (k % 4, k / 4);
        let (a1, a2) = z_values(sigma);
        let (b1, b2) = z_values(gamma);
        let ds = (a1 + a2) - (b1 + b2);
        let da = (a1 - a2) - (b1 - b2);
        *entry = (-gamma_d * ds * ds / 4.0 - gamma_th * da * da / 4.0).exp();
    }
    out
}

pub fn noise_superop(gamma_d: f64, gamma_th: f64) -> SuperOp {
    let d: Vec<C64> = noise_diagonal(gamma_d, gamma_th).iter().map(|&v| c(v, 0.0)).collect();
    SuperOp::from_diagonal(&d).expect("16-entry diagonal is a valid two-qubit channel")
}

/// Diagonal of exp(−i·(local/2)(Z₁+Z₂))·exp(−i·angle·Z₁Z₂) acting by conjugation.
pub fn unitary_diagonal(angle: f64, local_phase: f64) -> [C64; 16] {
    let mut out = [c(0.0, 0.0); 16];
    for (k, entry) in out.iter_mut().enumerate() {
        let (sigma, gamma) = (k % 4, k / 4);
        let (a1, a2) = z_values(sigma);
        let (b1, b2) = z_values(gamma);
        let phase = 0.5 * local_phase * ((a1 + a2) - (b1 + b2)) + angle * (a1 * a2 - b1 * b2);
        *entry = C64::from_polar(1.0, -phase);
    }
    out
}

pub fn ls_unitary(angle: f64, local_phase: f64) -> CMat {
    let diag: Vec<C64> = (0..4)
        .map(|b| {
            let (z1, z2) = z_values(b);
            C64::from_polar(1.0, -(0.5 * local_phase * (z1 + z2) + angle * z1 * z2))
        })
        .collect();
    CMat::from_diagonal(&nalgebra::DVector::from_vec(diag))
}

/// Noise ∘ unitary for the given effective parameters; all LS channels of the
/// crate are built through this one diagonal.
pub fn ls_diagonal(gamma_d: f64, gamma_th: f64, angle: f64, local_phase: f64) -> [C64; 16] {
    let n = noise_diagonal(gamma_d, gamma_th);
    let u = unitary_diagonal(angle, local_phase);
    let mut out = [c(0.0, 0.0); 16];
    for k in 0..16 {
        out[k] = u[k] * n[k];
    }
    out
}

fn diag_superop(d: &[C64; 16]) -> SuperOp {
    SuperOp::from_diagonal(d).expect("16-entry diagonal is a valid two-qubit channel")
}

/// Seven-operator Kraus form of the noise channel. The Kraus weights use
/// χ = e^{−2Γ}, which is what reproduces the e^{−Γ}/e^{−4Γ} superoperator
/// entries.
pub fn kraus_set(gamma_d: f64, gamma_th: f64) -> Result<KrausSet> {
    if gamma_d < 0.0 || gamma_th < 0.0 {
        return Err(Error::CpViolation(format!("Kraus form needs Γ_d, Γ_th ≥ 0 (got {gamma_d}, {gamma_th})")));
    }
    let chi_d = (-2.0 * gamma_d).exp();
    let chi_th = (-2.0 * gamma_th).exp();
    let id = CMat::identity(4, 4);
    let z1 = pauli(3).kronecker(&pauli(0));
    let z2 = pauli(0).kronecker(&pauli(3));
    let zz = &z1 * &z2;
    let r = |x: f64| c(x, 0.0);
    let (sd, st) = (chi_d.sqrt(), chi_th.sqrt());
    let ops = vec![
        &id * r(0.5 * (sd + st)) + &zz * r(0.5 * (sd - st)),
        (&z1 - &z2) * r(0.5 * (chi_th * (1.0 - chi_th)).sqrt()),
        (&z1 + &z2) * r(0.5 * (chi_d * (1.0 - chi_d)).sqrt()),
        (&id + &z1) * (&id - &z2) * r(0.25 * (1.0 - chi_th)),
        (&id - &z1) * (&id + &z2) * r(0.25 * (1.0 - chi_th)),
        (&id + &z1) * (&id + &z2) * r(0.25 * (1.0 - chi_d)),
        (&id - &z1) * (&id - &z2) * r(0.25 * (1.0 - chi_d)),
    ];
    KrausSet::new(ops)
}

pub fn ls_gate_superop(p: &LsParams) -> SuperOp {
    diag_superop(&ls_diagonal(p.gamma_d, p.gamma_th, p.theta_ls, p.omega0_t))
}

/// A(p,x) = sin²(px/2)/sin²(x/2), with the limit p² near x ≡ 0 (mod 2π).
pub fn amplification_factor(p: usize, x: f64) -> f64 {
    let s = (0.5 * x).sin();
    let pf = p as f64;
    if s.abs() < LIMIT_WINDOW {
        pf * pf
    } else {
        (0.5 * pf * x).sin().powi(2) / (s * s)
    }
}

/// ζ_b^p = −½K(p sin x − sin px)/(cos x − 1).
pub fn zeta_phase(p: usize, x: f64, prefactor: f64) -> f64 {
    let pf = p as f64;
    let s = (0.5 * x).sin();
    if s.abs() < LIMIT_WINDOW {
        // Leading term of K·Σ_{l<p}(p − l) sin(lx) about the nearest multiple of 2π.
        let dx = x - 2.0 * PI * (x / (2.0 * PI)).round();
        return prefactor * dx * (pf * pf * pf - pf) / 6.0;
    }
    // cos x − 1 = −2 sin²(x/2)
    0.5 * prefactor * (pf * x.sin() - (pf * x).sin()) / (2.0 * s * s)
}

pub fn gamma_th_p(base: &LsParams, p: usize) -> f64 {
    base.gamma_th * amplification_factor(p, base.x)
}

/// Effective (Γ_d, Γ_th, angle, local phase) of p consecutive gates.
pub fn sequence_effective(base: &LsParams, p: usize, mode: ContextMode) -> (f64, f64, f64, f64) {
    let pf = p as f64;
    match mode {
        ContextMode::ContextDependent => (
            pf * base.gamma_d,
            gamma_th_p(base, p),
            pf * base.theta_ls + 0.5 * zeta_phase(p, base.x, base.zeta_prefactor),
            pf * base.omega0_t,
        ),
        ContextMode::ContextIndependent => (pf * base.gamma_d, pf * base.gamma_th, pf * base.theta_ls, pf * base.omega0_t),
    }
}

pub fn sequence_diagonal(base: &LsParams, p: usize, mode: ContextMode) -> [C64; 16] {
    let (gd, gth, angle, phase) = sequence_effective(base, p, mode);
    ls_diagonal(gd, gth, angle, phase)
}

pub fn sequence_superop(base: &LsParams, seq: SequenceParams, mode: ContextMode) -> SuperOp {
    diag_superop(&sequence_diagonal(base, seq.p, mode))
}

/// Effective parameters of the r-th gate inside a context-dependent sequence:
/// Γ_th^{r−1,r} = Γ_th (A(r) − A(r−1)) and a phase increment (ζ^r − ζ^{r−1})/2.
pub fn intermediate_effective(r: usize, base: &LsParams) -> (f64, f64, f64, f64) {
    assert!(r >= 1, "intermediate maps are indexed from r = 1");
    let gth = base.gamma_th * (amplification_factor(r, base.x) - amplification_factor(r - 1, base.x));
    let dz = zeta_phase(r, base.x, base.zeta_prefactor) - zeta_phase(r - 1, base.x, base.zeta_prefactor);
    (base.gamma_d, gth, base.theta_ls + 0.5 * dz, base.omega0_t)
}

/// The r-th intermediate map; it need not be completely positive.
pub fn intermediate_superop(r: usize, base: &LsParams) -> SuperOp {
    let (gd, gth, angle, phase) = intermediate_effective(r, base);
    diag_superop(&ls_diagonal(gd, gth, angle, phase))
}

pub fn g_index(p: usize, x: f64) -> f64 {
    (p as f64 * x / PI - 1.0) / 2.0
}

/// Depth in `range` whose g(p) is closest to an integer (smallest p on ties).
pub fn p_max(x: f64, range: impl IntoIterator<Item = usize>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for p in range {
        let g = g_index(p, x);
        let dist = (g - g.round()).abs();
        match best {
            Some((_, d)) if dist >= d => {}
            _ => best = Some((p, dist)),
        }
    }
    best.map(|(p, _)| p)
}

/// Cumulative breathing-mode displacement after k = 1..=p gates:
/// φ·Σ_{l<k} e^{ilx} = φ(1 − e^{ikx})/(1 − e^{ix}).
pub fn trajectory_endpoints(p: usize, x: f64, phi: C64) -> Vec<C64> {
    let one = c(1.0, 0.0);
    let denom = one - C64::from_polar(1.0, x);
    (1..=p)
        .map(|k| {
            if (0.5 * x).sin().abs() < LIMIT_WINDOW {
                phi * c(k as f64, 0.0)
            } else {
                phi * (one - C64::from_polar(1.0, k as f64 * x)) / denom
            }
        })
        .collect()
}

/// Centre (and radius = |centre|) of the circle the trajectory points lie on.
pub fn trajectory_centre(x: f64, phi: C64) -> C64 {
    phi / (c(1.0, 0.0) - C64::from_polar(1.0, x))
}
