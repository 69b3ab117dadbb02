//! Circuits (`prep | germ^p | meas`), their text form, experimental designs,
//! and exact outcome probabilities.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::gateset::{apply_local, Gate, GateSet, PauliVec, SqKind};
use crate::ls_model::ContextMode;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Circuit {
    pub prep: Vec<Gate>,
    pub germ: Vec<Gate>,
    pub power: usize,
    pub meas: Vec<Gate>,
}

impl Circuit {
    pub fn new(prep: Vec<Gate>, germ: Vec<Gate>, power: usize, meas: Vec<Gate>) -> Self {
        Self { prep, germ, power, meas }
    }

    pub fn is_ls_germ(&self) -> bool {
        self.germ == [Gate::Ls]
    }

    /// Same fiducials and germ at a different depth.
    pub fn at_power(&self, power: usize) -> Self {
        Self { power, ..self.clone() }
    }
}

fn fmt_gates(gates: &[Gate]) -> String {
    if gates.is_empty() {
        "I".to_string()
    } else {
        gates.iter().map(Gate::token).collect::<Vec<_>>().join(" ")
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} | {}^{} | {}", fmt_gates(&self.prep), fmt_gates(&self.germ), self.power, fmt_gates(&self.meas))
    }
}

fn parse_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Parse { offset, msg: msg.into() }
}

fn parse_token(tok: &str, offset: usize) -> Result<Gate> {
    if tok == "LS" {
        return Ok(Gate::Ls);
    }
    let (name, qubit) = tok.split_once(':').ok_or_else(|| parse_err(offset, format!("gate '{tok}' needs a ':qubit' suffix")))?;
    let kind = SqKind::from_str(name).map_err(|_| parse_err(offset, format!("unknown gate '{name}'")))?;
    let qubit = match qubit {
        "0" => 0,
        "1" => 1,
        _ => return Err(parse_err(offset + name.len() + 1, format!("qubit must be 0 or 1, got '{qubit}'"))),
    };
    Ok(Gate::Single { kind, qubit })
}

/// Whitespace-separated gate list starting at byte `base` of the full text.
fn parse_gates(seg: &str, base: usize) -> Result<Vec<Gate>> {
    let mut out = Vec::new();
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in seg.char_indices().chain(std::iter::once((seg.len(), ' '))) {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push((s, &seg[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if tokens.is_empty() {
        return Err(parse_err(base, "empty gate list (write I for no gates)"));
    }
    if tokens.len() == 1 && tokens[0].1 == "I" {
        return Ok(out);
    }
    for (s, tok) in tokens {
        if tok == "I" {
            return Err(parse_err(base + s, "'I' only stands for an empty list"));
        }
        out.push(parse_token(tok, base + s)?);
    }
    Ok(out)
}

pub fn parse_circuit(text: &str) -> Result<Circuit> {
    let bars: Vec<usize> = text.match_indices('|').map(|(i, _)| i).collect();
    if bars.len() != 2 {
        let at = bars.get(2).copied().unwrap_or(text.len());
        return Err(parse_err(at, format!("expected exactly two '|' separators, found {}", bars.len())));
    }
    let (b1, b2) = (bars[0], bars[1]);
    let prep = parse_gates(&text[..b1], 0)?;
    let middle = &text[b1 + 1..b2];
    let caret = middle.rfind('^').ok_or_else(|| parse_err(b1 + 1, "germ needs a '^power'"))?;
    let germ = parse_gates(&middle[..caret], b1 + 1)?;
    let power_text = &middle[caret + 1..];
    let lead = power_text.len() - power_text.trim_start().len();
    let trimmed = power_text.trim();
    let power_at = b1 + 1 + caret + 1 + lead;
    if trimmed.is_empty() || !trimmed.bytes().all(|b| b.is_ascii_digit()) {
        return Err(parse_err(power_at, format!("malformed power '{trimmed}'")));
    }
    let power = trimmed.parse::<usize>().map_err(|e| parse_err(power_at, e.to_string()))?;
    let meas = parse_gates(&text[b2 + 1..], b2 + 1)?;
    Ok(Circuit { prep, germ, power, meas })
}

impl FromStr for Circuit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_circuit(s)
    }
}

pub fn serialize_circuit(c: &Circuit) -> String {
    c.to_string()
}

fn apply_gate(gs: &GateSet, gate: &Gate, v: &PauliVec) -> PauliVec {
    match gate {
        Gate::Single { kind, qubit } => apply_local(gs.single_ptm(*kind, *qubit), *qubit, v),
        Gate::Ls => gs.ls_sequence_ptm(1) * v,
    }
}

/// Outcome probabilities (order 00, 01, 10, 11) without any physicality check.
///
/// An LS germ raised to power p is evaluated through the sequence channel of
/// the gate set's mode, so in the context-dependent mode it is *not* the p-th
/// power of the single-gate map.
pub fn circuit_probabilities_raw(c: &Circuit, gs: &GateSet) -> Result<[f64; 4]> {
    let mut v = *gs.rho_pauli();
    for g in &c.prep {
        v = apply_gate(gs, g, &v);
    }
    if c.is_ls_germ() {
        v = gs.ls_sequence_ptm(c.power) * v;
    } else if c.power > 0 {
        if gs.mode == ContextMode::ContextDependent && c.germ.contains(&Gate::Ls) {
            return Err(Error::Design(format!(
                "germ '{}' mixes LS with other gates; its context-dependent channel is not modelled",
                fmt_gates(&c.germ)
            )));
        }
        for _ in 0..c.power {
            for g in &c.germ {
                v = apply_gate(gs, g, &v);
            }
        }
    }
    for g in &c.meas {
        v = apply_gate(gs, g, &v);
    }
    let eff = gs.effects_pauli();
    Ok([0, 1, 2, 3].map(|b| eff[b].dot(&v)))
}

/// Checked probabilities: entries below −1e-10 are an error.
pub fn circuit_probabilities(c: &Circuit, gs: &GateSet) -> Result<[f64; 4]> {
    let p = circuit_probabilities_raw(c, gs)?;
    if let Some(&bad) = p.iter().find(|&&x| x < -1e-10) {
        return Err(Error::Unphysical(bad));
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    LogSpaced,
    LastDepth,
    RamseyFi,
    Custom,
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log-spaced" => Ok(Scheme::LogSpaced),
            "last-depth" => Ok(Scheme::LastDepth),
            "ramsey-fi" => Ok(Scheme::RamseyFi),
            "custom" => Ok(Scheme::Custom),
            other => Err(Error::Config(format!("unknown design scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub circuits: Vec<Circuit>,
    pub samples_per_circuit: u64,
    pub scheme: Scheme,
}

#[derive(Serialize, Deserialize)]
struct DesignFile {
    circuits: Vec<String>,
    samples_per_circuit: u64,
    scheme: Scheme,
}

pub const DEFAULT_SAMPLES: u64 = 10_000;

impl Design {
    pub fn new(circuits: Vec<Circuit>, samples_per_circuit: u64, scheme: Scheme) -> Result<Self> {
        if circuits.is_empty() {
            return Err(Error::Design("a design needs at least one circuit".into()));
        }
        if samples_per_circuit == 0 {
            return Err(Error::Design("samples per circuit must be positive".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &circuits {
            if !seen.insert(c.clone()) {
                return Err(Error::Design(format!("circuit '{c}' appears twice")));
            }
        }
        Ok(Self { circuits, samples_per_circuit, scheme })
    }

    pub fn with_samples(mut self, n: u64) -> Self {
        self.samples_per_circuit = n;
        self
    }

    pub fn len(&self) -> usize {
        self.circuits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.circuits.is_empty()
    }

    pub fn total_shots(&self) -> u64 {
        self.samples_per_circuit * self.circuits.len() as u64
    }

    pub fn max_power(&self) -> usize {
        self.circuits.iter().map(|c| c.power).max().unwrap_or(0)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(DesignFile {
            circuits: self.circuits.iter().map(|c| c.to_string()).collect(),
            samples_per_circuit: self.samples_per_circuit,
            scheme: self.scheme,
        })
        .expect("design serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let f: DesignFile = serde_json::from_value(v.clone())?;
        let circuits = f.circuits.iter().map(|s| parse_circuit(s)).collect::<Result<Vec<_>>>()?;
        Self::new(circuits, f.samples_per_circuit, f.scheme)
    }
}

fn both(kind: SqKind) -> Vec<Gate> {
    vec![Gate::Single { kind, qubit: 0 }, Gate::Single { kind, qubit: 1 }]
}

/// The twelve germ–fiducial combinations, at germ power `p`.
///
/// Each single-qubit pulse class gets its germ sandwiched three ways — along
/// the rotation axis, in Z and in the transverse direction — on both qubits in
/// parallel, and the LS germ is read out in XX, YY and the computational basis.
pub fn base_circuits(p: usize) -> Vec<Circuit> {
    use SqKind::*;
    let none = Vec::new;
    vec![
        Circuit::new(both(Ym2), both(Xp2), p, both(Yp2)),
        Circuit::new(none(), both(Xp2), p, none()),
        Circuit::new(none(), both(Xp2), p, both(Xp2)),
        Circuit::new(both(Xm2), both(Yp2), p, both(Xp2)),
        Circuit::new(none(), both(Yp2), p, none()),
        Circuit::new(none(), both(Yp2), p, both(Yp2)),
        Circuit::new(both(Ym2), both(Xpi), p, both(Yp2)),
        Circuit::new(none(), both(Xpi), p, none()),
        Circuit::new(none(), both(Xpi), p, both(Xp2)),
        Circuit::new(both(Ym2), vec![Gate::Ls], p, both(Yp2)),
        Circuit::new(both(Ym2), vec![Gate::Ls], p, both(Xp2)),
        Circuit::new(none(), vec![Gate::Ls], p, none()),
    ]
}

/// Depths 1, 2, 4, …, p_max with the twelve base circuits at each.
pub fn design_log_spaced(p_max: usize) -> Result<Design> {
    if p_max == 0 || !p_max.is_power_of_two() {
        return Err(Error::Design(format!("log-spaced designs need a power-of-two maximum depth, got {p_max}")));
    }
    let mut circuits = Vec::new();
    let mut p = 1;
    while p <= p_max {
        circuits.extend(base_circuits(p));
        p *= 2;
    }
    Design::new(circuits, DEFAULT_SAMPLES, Scheme::LogSpaced)
}

pub fn design_last_depth(p: usize) -> Result<Design> {
    if p == 0 {
        return Err(Error::Design("last-depth design needs p ≥ 1".into()));
    }
    Design::new(base_circuits(p), DEFAULT_SAMPLES, Scheme::LastDepth)
}

pub fn design_default12() -> Design {
    Design::new(base_circuits(1), DEFAULT_SAMPLES, Scheme::Custom).expect("base circuits are distinct")
}

/// |++⟩ preparation, LS^p, and an X⊗X-basis measurement.
pub fn ramsey_circuit(p: usize) -> Circuit {
    Circuit::new(both(SqKind::Ym2), vec![Gate::Ls], p, both(SqKind::Yp2))
}

pub fn design_ramsey_fi(p: usize) -> Design {
    Design::new(vec![ramsey_circuit(p)], DEFAULT_SAMPLES, Scheme::RamseyFi).expect("single circuit")
}
