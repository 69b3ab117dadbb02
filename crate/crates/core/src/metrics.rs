//! Channel distances: trace norm, diamond distance and the gate-set average.

use crate::gateset::{Gate, GateSet};
use crate::qchan::{c, SuperOp};
use crate::sdp::{self, DiamondResult, SdpOptions};
use crate::{CMat, Error, Result};

pub fn trace_norm(m: &CMat) -> f64 {
    m.clone().svd(false, false).singular_values.iter().sum()
}

/// Trace norm through the eigenvalues, for matrices known to be Hermitian.
pub fn hermitian_trace_norm(m: &CMat) -> f64 {
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    h.symmetric_eigenvalues().iter().map(|v| v.abs()).sum()
}

/// ‖(A − B) ⊗ 1‖ over all inputs on the doubled space: the SDP upper iterate.
pub fn diamond_distance(a: &SuperOp, b: &SuperOp) -> Result<f64> {
    Ok(diamond_distance_detailed(a, b, &SdpOptions::default())?.value)
}

pub fn diamond_distance_detailed(a: &SuperOp, b: &SuperOp, opts: &SdpOptions) -> Result<DiamondResult> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("channels act on dimensions {} and {}", a.dim(), b.dim())));
    }
    let diff = a.matrix() - b.matrix();
    let mut r = sdp::diamond_norm(&diff, opts)?;
    if !r.converged {
        // Tighten the bracket with the restart maximizer before reporting.
        r.lower = r.lower.max(sdp::restart_lower_bound(&diff, 64, 0)?);
    }
    Ok(r)
}

/// Lower bound from 64+ random-restart pure-state maximizations.
pub fn diamond_lower_bound(a: &SuperOp, b: &SuperOp, restarts: usize, seed: u64) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("channels act on dimensions {} and {}", a.dim(), b.dim())));
    }
    sdp::restart_lower_bound(&(a.matrix() - b.matrix()), restarts.max(64), seed)
}

/// ‖J(A) − J(B)‖₁ with normalized Choi matrices; never exceeds the diamond distance.
pub fn choi_trace_distance(a: &SuperOp, b: &SuperOp) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("channels act on dimensions {} and {}", a.dim(), b.dim())));
    }
    Ok(trace_norm(&(a.choi() - b.choi())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateFilter {
    All,
    LsOnly,
    SingleQubitOnly,
}

impl GateFilter {
    pub fn includes(self, g: &Gate) -> bool {
        match self {
            GateFilter::All => true,
            GateFilter::LsOnly => *g == Gate::Ls,
            GateFilter::SingleQubitOnly => *g != Gate::Ls,
        }
    }
}

/// Mean diamond distance over the included gate labels; SPAM never enters.
pub fn avg_gate_distance(estimated: &GateSet, truth: &GateSet, include: GateFilter) -> Result<f64> {
    let labels: Vec<Gate> = GateSet::labels().into_iter().filter(|g| include.includes(g)).collect();
    if labels.is_empty() {
        return Err(Error::Config("gate filter selects no gates".into()));
    }
    let mut total = 0.0;
    for g in &labels {
        total += diamond_distance(&estimated.gate_superop(g), &truth.gate_superop(g))?;
    }
    Ok(total / labels.len() as f64)
}
