//! The full noisy gate set: SPAM, five single-qubit pulses per qubit and the
//! LS gate, plus the mapping between physical parameters and the flat θ
//! vector used by the estimator.
//!
//! Circuits are evaluated in the Pauli-transfer representation, where the
//! single-qubit channels are real 4×4 blocks and two-qubit objects are real
//! 16-vectors / 16×16 matrices (Pauli index `4·i₀ + i₁`).

use std::f64::consts::PI;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{Matrix3, Matrix4, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::ls_model::{self, ContextMode, LsParams};
use crate::qchan::{self, c, kron, pauli, DensityMatrix, Povm, SuperOp};
use crate::spectra::PhysicalConfig;
use crate::{CMat, Error, Result, C64};

pub type Ptm1 = Matrix4<f64>;
pub type Ptm2 = SMatrix<f64, 16, 16>;
pub type PauliVec = SVector<f64, 16>;

pub const THETA_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SqKind {
    Xpi,
    Xp2,
    Xm2,
    Yp2,
    Ym2,
}

impl SqKind {
    pub const ALL: [SqKind; 5] = [SqKind::Xpi, SqKind::Xp2, SqKind::Xm2, SqKind::Yp2, SqKind::Ym2];

    /// Ideal (θ, φ) of the pulse; the rotation is exp(−iθ/2 (cos φ X − sin φ Y)).
    pub fn angles(self) -> (f64, f64) {
        match self {
            SqKind::Xpi => (PI, 0.0),
            SqKind::Xp2 => (PI / 2.0, 0.0),
            SqKind::Xm2 => (PI / 2.0, PI),
            SqKind::Yp2 => (PI / 2.0, PI / 2.0),
            SqKind::Ym2 => (PI / 2.0, 3.0 * PI / 2.0),
        }
    }

    /// Pulses driven by the same physical tone share their noise parameters.
    pub fn class(self) -> PulseClass {
        match self {
            SqKind::Xpi => PulseClass::Xpi,
            SqKind::Xp2 | SqKind::Xm2 => PulseClass::X90,
            SqKind::Yp2 | SqKind::Ym2 => PulseClass::Y90,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            SqKind::Xpi => "XPI",
            SqKind::Xp2 => "XP2",
            SqKind::Xm2 => "XM2",
            SqKind::Yp2 => "YP2",
            SqKind::Ym2 => "YM2",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for SqKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SqKind::ALL
            .into_iter()
            .find(|k| k.token() == s)
            .ok_or_else(|| Error::Config(format!("unknown single-qubit gate '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PulseClass {
    Xpi,
    X90,
    Y90,
}

impl PulseClass {
    pub const ALL: [PulseClass; 3] = [PulseClass::Xpi, PulseClass::X90, PulseClass::Y90];

    pub fn name(self) -> &'static str {
        match self {
            PulseClass::Xpi => "xpi",
            PulseClass::X90 => "x90",
            PulseClass::Y90 => "y90",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gate {
    Single { kind: SqKind, qubit: usize },
    Ls,
}

impl Gate {
    pub fn token(&self) -> String {
        match self {
            Gate::Single { kind, qubit } => format!("{}:{}", kind.token(), qubit),
            Gate::Ls => "LS".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SingleQubitNoise {
    pub gamma1: f64,
    pub delta1: f64,
    pub dgamma: f64,
    pub gamma2: f64,
    pub delta2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SpamModel {
    pub eps_rho: f64,
    pub eps_m0: f64,
    pub eps_m1: f64,
}

/// exp{−i(θ/2)(cos φ X − sin φ Y)}.
pub fn ideal_single_qubit(theta: f64, phi: f64) -> CMat {
    let gen = pauli(1) * c(phi.cos(), 0.0) - pauli(2) * c(phi.sin(), 0.0);
    CMat::identity(2, 2) * c((theta / 2.0).cos(), 0.0) - gen * c(0.0, (theta / 2.0).sin())
}

/// The 2×2 rotation embedded on `qubit` of the two-qubit register.
pub fn embed_single(u: &CMat, qubit: usize) -> CMat {
    let id = CMat::identity(2, 2);
    if qubit == 0 {
        kron(u, &id)
    } else {
        kron(&id, u)
    }
}

fn skew(n: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -n.z, n.y, n.z, 0.0, -n.x, -n.y, n.x, 0.0)
}

/// Rotation axis of a pulse with phase φ: the Bloch vector (cos φ, −sin φ, 0).
pub fn rotation_axis(phi: f64) -> Vector3<f64> {
    Vector3::new(phi.cos(), -phi.sin(), 0.0)
}

/// PTM of a noisy pulse. The noise generators commute with the rotation:
/// the rotation angle is over-driven by Δ₁ (+Δ₂), the Bloch component along
/// the rotation axis decays by e^{−ΔΓ} and the perpendicular components by
/// e^{−Γ₁−Γ₂−ΔΓ/2}. For Γ₁, Γ₂, ΔΓ ≥ 0 this is completely positive.
pub fn noisy_single_qubit(theta: f64, phi: f64, noise: &SingleQubitNoise) -> Ptm1 {
    let n = rotation_axis(phi);
    let alpha = theta + noise.delta1 + noise.delta2;
    let nn = n * n.transpose();
    let rot = Matrix3::identity() * alpha.cos() + skew(&n) * alpha.sin() + nn * (1.0 - alpha.cos());
    let lam_n = (-noise.dgamma).exp();
    let lam_perp = (-(noise.gamma1 + noise.gamma2) - 0.5 * noise.dgamma).exp();
    let damp = Matrix3::identity() * lam_perp + nn * (lam_n - lam_perp);
    let b = rot * damp;
    let mut out = Ptm1::zeros();
    out[(0, 0)] = 1.0;
    out.fixed_view_mut::<3, 3>(1, 1).copy_from(&b);
    out
}

pub fn ptm1_to_superop(r: &Ptm1) -> SuperOp {
    let dm = crate::RMat::from_fn(4, 4, |i, j| r[(i, j)]);
    qchan::ptm_to_superop(&dm).expect("4×4 PTM is a valid single-qubit channel")
}

pub fn ptm2_from_superop(s: &SuperOp) -> Ptm2 {
    let r = s.to_ptm();
    Ptm2::from_fn(|i, j| r[(i, j)])
}

// For a superoperator diagonal in the |σ⟩⟨γ| basis, R = T† diag(d) T and every
// row of T has exactly four nonzeros, so R is a sum of 256 rank-one terms.
fn diagonal_ptm_terms() -> &'static [(usize, usize, usize, C64)] {
    static TERMS: OnceLock<Vec<(usize, usize, usize, C64)>> = OnceLock::new();
    TERMS.get_or_init(|| {
        let t = qchan::pauli_transform(4);
        let mut out = Vec::with_capacity(256);
        for k in 0..16 {
            let nz: Vec<usize> = (0..16).filter(|&i| t[(k, i)].norm() > 1e-14).collect();
            for &i in &nz {
                for &j in &nz {
                    out.push((k, i, j, t[(k, i)].conj() * t[(k, j)]));
                }
            }
        }
        out
    })
}

/// PTM of a channel given by its natural-representation diagonal.
pub fn diagonal_to_ptm(d: &[C64; 16]) -> Ptm2 {
    let mut r = Ptm2::zeros();
    for &(k, i, j, w) in diagonal_ptm_terms() {
        r[(i, j)] += (w * d[k]).re;
    }
    r
}

/// Everything the gate set depends on, in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSetParams {
    pub ls: LsParams,
    /// `single[qubit][class]`.
    pub single: [[SingleQubitNoise; 3]; 2],
    pub spam: SpamModel,
}

impl GateSetParams {
    pub fn ideal(x: f64, zeta_prefactor: f64) -> Self {
        Self {
            ls: LsParams { x, zeta_prefactor, ..LsParams::ideal() },
            single: [[SingleQubitNoise::default(); 3]; 2],
            spam: SpamModel::default(),
        }
    }

    pub fn from_physical(cfg: &PhysicalConfig, single: [[SingleQubitNoise; 3]; 2], spam: SpamModel) -> Result<Self> {
        Ok(Self { ls: cfg.derive()?.params, single, spam })
    }

    pub fn noise(&self, kind: SqKind, qubit: usize) -> &SingleQubitNoise {
        &self.single[qubit][kind.class().index()]
    }

    /// All rates nonnegative and SPAM inside its physical range.
    pub fn is_physical(&self) -> bool {
        let rates_ok = self.ls.gamma_d >= 0.0
            && self.ls.gamma_th >= 0.0
            && self.single.iter().flatten().all(|n| n.gamma1 >= 0.0 && n.gamma2 >= 0.0 && n.dgamma >= 0.0);
        let s = &self.spam;
        rates_ok && (0.0..=1.0).contains(&s.eps_rho) && (0.0..=0.5).contains(&s.eps_m0) && (0.0..=0.5).contains(&s.eps_m1)
    }

    pub fn to_theta(&self, layout: ThetaLayout) -> Theta {
        let mut values = vec![self.ls.gamma_th, self.ls.gamma_d];
        if layout.ls_angles {
            values.push(self.ls.theta_ls);
            values.push(self.ls.omega0_t);
        }
        for q in 0..2 {
            for class in PulseClass::ALL {
                let n = &self.single[q][class.index()];
                values.push(n.gamma1);
                values.push(n.delta1);
                if layout.dgamma {
                    values.push(n.dgamma);
                }
            }
        }
        values.extend([self.spam.eps_rho, self.spam.eps_m0, self.spam.eps_m1]);
        Theta { layout, values }
    }

    /// Copy of `self` with every θ-covered field replaced; fields outside the
    /// layout (e.g. the breathing phase x) are kept.
    pub fn with_theta(&self, theta: &Theta) -> Result<Self> {
        let layout = theta.layout;
        if theta.values.len() != layout.len() {
            return Err(Error::Dimension(format!("θ has {} entries, layout expects {}", theta.values.len(), layout.len())));
        }
        let mut it = theta.values.iter().copied();
        let mut next = || it.next().expect("length checked above");
        let mut out = self.clone();
        out.ls.gamma_th = next();
        out.ls.gamma_d = next();
        if layout.ls_angles {
            out.ls.theta_ls = next();
            out.ls.omega0_t = next();
        }
        for q in 0..2 {
            for class in PulseClass::ALL {
                let n = &mut out.single[q][class.index()];
                n.gamma1 = next();
                n.delta1 = next();
                if layout.dgamma {
                    n.dgamma = next();
                }
            }
        }
        out.spam = SpamModel { eps_rho: next(), eps_m0: next(), eps_m1: next() };
        Ok(out)
    }
}

/// Which optional blocks θ carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThetaLayout {
    pub ls_angles: bool,
    pub dgamma: bool,
}

impl Default for ThetaLayout {
    fn default() -> Self {
        Self { ls_angles: false, dgamma: true }
    }
}

impl ThetaLayout {
    pub fn names(&self) -> Vec<String> {
        let mut names = vec!["gamma_th".to_string(), "gamma_d".to_string()];
        if self.ls_angles {
            names.push("theta_ls".into());
            names.push("omega0_tg".into());
        }
        for q in 0..2 {
            for class in PulseClass::ALL {
                names.push(format!("gamma1_{}_q{q}", class.name()));
                names.push(format!("delta1_{}_q{q}", class.name()));
                if self.dgamma {
                    names.push(format!("dgamma_{}_q{q}", class.name()));
                }
            }
        }
        names.extend(["eps_rho", "eps_m0", "eps_m1"].map(String::from));
        names
    }

    pub fn len(&self) -> usize {
        2 + if self.ls_angles { 2 } else { 0 } + 6 * if self.dgamma { 3 } else { 2 } + 3
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names().iter().position(|n| n == name)
    }

    /// Indices of rates that must stay nonnegative under the CP constraint.
    pub fn rate_indices(&self) -> Vec<usize> {
        self.names()
            .iter()
            .enumerate()
            .filter(|(_, n)| n.starts_with("gamma") || n.starts_with("dgamma"))
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    pub layout: ThetaLayout,
    pub values: Vec<f64>,
}

impl Theta {
    pub fn names(&self) -> Vec<String> {
        self.layout.names()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.layout.index_of(name).map(|i| self.values[i])
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (name, v) in self.names().into_iter().zip(&self.values) {
            map.insert(name, serde_json::json!(v));
        }
        serde_json::json!({ "schema_version": THETA_SCHEMA_VERSION, "theta": map })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let version = v.get("schema_version").and_then(|s| s.as_u64());
        if version != Some(THETA_SCHEMA_VERSION as u64) {
            return Err(Error::Config(format!("θ schema version {version:?} is not {THETA_SCHEMA_VERSION}")));
        }
        let map = v
            .get("theta")
            .and_then(|t| t.as_object())
            .ok_or_else(|| Error::Config("θ document lacks a 'theta' object".into()))?;
        let layout = ThetaLayout { ls_angles: map.contains_key("theta_ls"), dgamma: map.contains_key("dgamma_xpi_q0") };
        let names = layout.names();
        if names.len() != map.len() || names.iter().zip(map.keys()).any(|(a, b)| a != b) {
            return Err(Error::Config("θ entries are not in the documented order".into()));
        }
        let values = map
            .values()
            .map(|x| x.as_f64().ok_or_else(|| Error::Config("θ entries must be numbers".into())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Theta { layout, values })
    }
}

/// A fully built gate set, ready for circuit evaluation.
#[derive(Debug, Clone)]
pub struct GateSet {
    pub params: GateSetParams,
    pub mode: ContextMode,
    singles: [[Ptm1; 5]; 2],
    rho: PauliVec,
    effects: [PauliVec; 4],
}

fn pauli_coefficients(m: &CMat) -> PauliVec {
    // ⟨⟨P_i|m⟩⟩ = tr(P_i m)/2 for the normalized two-qubit basis.
    PauliVec::from_fn(|i, _| (qchan::pauli_string(i, 2) * m).trace().re / 2.0)
}

fn spam_rho(s: &SpamModel) -> CMat {
    let mut m = CMat::identity(4, 4) * c(s.eps_rho / 4.0, 0.0);
    m[(0, 0)] += c(1.0 - s.eps_rho, 0.0);
    m
}

fn spam_effects(s: &SpamModel) -> Vec<CMat> {
    let single = |e: f64, bit: usize| {
        let mut m = CMat::zeros(2, 2);
        m[(bit, bit)] = c(1.0 - e, 0.0);
        m[(1 - bit, 1 - bit)] = c(e, 0.0);
        m
    };
    (0..4).map(|b| kron(&single(s.eps_m0, b >> 1), &single(s.eps_m1, b & 1))).collect()
}

impl GateSet {
    pub fn new(params: GateSetParams, mode: ContextMode) -> Self {
        let mut singles = [[Ptm1::zeros(); 5]; 2];
        for (q, row) in singles.iter_mut().enumerate() {
            for kind in SqKind::ALL {
                let (theta, phi) = kind.angles();
                row[kind.index()] = noisy_single_qubit(theta, phi, params.noise(kind, q));
            }
        }
        let rho = pauli_coefficients(&spam_rho(&params.spam));
        let eff = spam_effects(&params.spam);
        let effects = [0, 1, 2, 3].map(|b| pauli_coefficients(&eff[b]));
        Self { params, mode, singles, rho, effects }
    }

    pub fn from_theta(base: &GateSetParams, theta: &Theta, mode: ContextMode) -> Result<Self> {
        Ok(Self::new(base.with_theta(theta)?, mode))
    }

    pub fn theta(&self, layout: ThetaLayout) -> Theta {
        self.params.to_theta(layout)
    }

    pub fn single_ptm(&self, kind: SqKind, qubit: usize) -> &Ptm1 {
        &self.singles[qubit][kind.index()]
    }

    /// PTM of `p` consecutive LS gates under this gate set's context mode.
    pub fn ls_sequence_ptm(&self, p: usize) -> Ptm2 {
        diagonal_to_ptm(&ls_model::sequence_diagonal(&self.params.ls, p, self.mode))
    }

    pub fn rho_pauli(&self) -> &PauliVec {
        &self.rho
    }

    pub fn effects_pauli(&self) -> &[PauliVec; 4] {
        &self.effects
    }

    pub fn rho0(&self) -> Result<DensityMatrix> {
        DensityMatrix::new(spam_rho(&self.params.spam))
    }

    pub fn povm(&self) -> Result<Povm> {
        Povm::new(spam_effects(&self.params.spam), ["00", "01", "10", "11"].map(String::from).to_vec())
    }

    /// Channel of a single gate: a one-qubit (4×4) superoperator for pulses,
    /// the two-qubit LS channel otherwise.
    pub fn gate_superop(&self, gate: &Gate) -> SuperOp {
        match gate {
            Gate::Single { kind, qubit } => ptm1_to_superop(self.single_ptm(*kind, *qubit)),
            Gate::Ls => ls_model::ls_gate_superop(&self.params.ls),
        }
    }

    pub fn labels() -> Vec<Gate> {
        let mut out: Vec<Gate> = (0..2)
            .flat_map(|qubit| SqKind::ALL.into_iter().map(move |kind| Gate::Single { kind, qubit }))
            .collect();
        out.push(Gate::Ls);
        out
    }
}

/// Applies a one-qubit PTM to `qubit` of a two-qubit Pauli vector.
pub fn apply_local(r: &Ptm1, qubit: usize, v: &PauliVec) -> PauliVec {
    let mut out = PauliVec::zeros();
    for i in 0..4 {
        for k in 0..4 {
            let rik = r[(i, k)];
            if rik == 0.0 {
                continue;
            }
            for j in 0..4 {
                if qubit == 0 {
                    out[4 * i + j] += rik * v[4 * k + j];
                } else {
                    out[4 * j + i] += rik * v[4 * j + k];
                }
            }
        }
    }
    out
}
