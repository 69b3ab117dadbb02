//! Fisher information of circuit outcome distributions and the Cramér–Rao
//! bounds built from it.
//!
//! Per circuit, I = N Σ_μ [(1/p_μ) ∇p_μ ∇p_μᵀ − H_μ]. The Hessian term sums to
//! zero for an exactly normalized model, so it only contributes numerical
//! noise; it is kept (optionally) to make that identity checkable.

use rayon::prelude::*;

use crate::circuits::{Circuit, Design};
use crate::estimator::{Model, PROBABILITY_FLOOR};
use crate::gateset::{GateSetParams, ThetaLayout};
use crate::ls_model::{amplification_factor, ContextMode};
use crate::{Error, Result, RMat};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeConfig {
    pub grad_step: f64,
    /// Second differences divide rounding noise of order 1e-16 by h², so the
    /// Hessian step is kept well above the gradient step.
    pub hess_step: f64,
    /// Combine steps h and h/2 as (4D(h/2) − D(h))/3.
    pub richardson: bool,
    pub hessian_term: bool,
}

impl Default for DerivativeConfig {
    fn default() -> Self {
        Self { grad_step: 1e-6, hess_step: 5e-4, richardson: true, hessian_term: true }
    }
}

impl DerivativeConfig {
    /// Plain central gradients and no Hessian term, for repeated use.
    pub fn fast() -> Self {
        Self { richardson: false, hessian_term: false, ..Self::default() }
    }
}

#[derive(Debug, Clone)]
pub struct ProbabilityDerivatives {
    pub p: Vec<f64>,
    /// Row `4·circuit + outcome`, column = free parameter.
    pub grad: RMat,
    /// max |D(h) − D(h/2)| when Richardson extrapolation was used.
    pub richardson_change: Option<f64>,
    /// One Hessian per probability row.
    pub hessians: Option<Vec<RMat>>,
}

fn central(model: &Model, x: &[f64], h: f64) -> Result<RMat> {
    model.jacobian(x, h)
}

fn shifted(model: &Model, x: &[f64], moves: &[(usize, f64)]) -> Result<Vec<f64>> {
    let mut y = x.to_vec();
    for &(k, d) in moves {
        y[k] += d;
    }
    model.probabilities(&y)
}

pub fn probability_derivatives(model: &Model, x: &[f64], cfg: &DerivativeConfig) -> Result<ProbabilityDerivatives> {
    let p = model.probabilities(x)?;
    let d1 = central(model, x, cfg.grad_step)?;
    let (grad, richardson_change) = if cfg.richardson {
        let d2 = central(model, x, 0.5 * cfg.grad_step)?;
        let change = (&d2 - &d1).amax();
        ((d2 * 4.0 - d1) / 3.0, Some(change))
    } else {
        (d1, None)
    };
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite probability derivative".into()));
    }

    let hessians = if cfg.hessian_term {
        let k = x.len();
        let h = cfg.hess_step;
        let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect();
        let entries = pairs
            .par_iter()
            .map(|&(i, j)| {
                if i == j {
                    let a = shifted(model, x, &[(i, h)])?;
                    let b = shifted(model, x, &[(i, -h)])?;
                    Ok(a.iter().zip(&b).zip(&p).map(|((a, b), c)| (a - 2.0 * c + b) / (h * h)).collect::<Vec<_>>())
                } else {
                    let pp = shifted(model, x, &[(i, h), (j, h)])?;
                    let pm = shifted(model, x, &[(i, h), (j, -h)])?;
                    let mp = shifted(model, x, &[(i, -h), (j, h)])?;
                    let mm = shifted(model, x, &[(i, -h), (j, -h)])?;
                    Ok((0..p.len()).map(|r| ((pp[r] - pm[r]) - (mp[r] - mm[r])) / (4.0 * h * h)).collect())
                }
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let mut hs = vec![RMat::zeros(k, k); p.len()];
        for (&(i, j), e) in pairs.iter().zip(&entries) {
            for (r, hr) in hs.iter_mut().enumerate() {
                hr[(i, j)] = e[r];
                hr[(j, i)] = e[r];
            }
        }
        if hs.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numerical("non-finite probability Hessian".into()));
        }
        Some(hs)
    } else {
        None
    };
    Ok(ProbabilityDerivatives { p, grad, richardson_change, hessians })
}

#[derive(Debug, Clone)]
pub struct FisherMatrix {
    pub matrix: RMat,
    pub names: Vec<String>,
    pub circuits: Vec<String>,
    /// Outcomes left out of the (1/p)∇p∇pᵀ term because p < 1e-12.
    pub dropped_outcomes: usize,
    /// max over circuits of |Σ_μ H_μ| (entrywise), when Hessians were used.
    pub hessian_sum_max: Option<f64>,
}

impl FisherMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn symmetry_error(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let sym = (&self.matrix + self.matrix.transpose()) * 0.5;
        let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Sum of two informations over the same parameters (disjoint data).
    pub fn add(&self, other: &FisherMatrix) -> Result<FisherMatrix> {
        if self.names != other.names {
            return Err(Error::Dimension("Fisher matrices over different parameters".into()));
        }
        Ok(FisherMatrix {
            matrix: &self.matrix + &other.matrix,
            names: self.names.clone(),
            circuits: self.circuits.iter().chain(&other.circuits).cloned().collect(),
            dropped_outcomes: self.dropped_outcomes + other.dropped_outcomes,
            hessian_sum_max: match (self.hessian_sum_max, other.hessian_sum_max) {
                (Some(a), Some(b)) => Some(a.max(b)),
                _ => None,
            },
        })
    }

    pub fn scaled(&self, factor: f64) -> FisherMatrix {
        FisherMatrix { matrix: &self.matrix * factor, ..self.clone() }
    }
}

/// Fisher information of the model's circuits with `shots[c]` samples each.
pub fn fisher_from_model(model: &Model, x: &[f64], shots: &[u64], cfg: &DerivativeConfig) -> Result<FisherMatrix> {
    if shots.len() != model.circuits.len() {
        return Err(Error::Dimension(format!("{} shot counts for {} circuits", shots.len(), model.circuits.len())));
    }
    let d = probability_derivatives(model, x, cfg)?;
    fisher_from_derivatives(model, &d, shots)
}

pub fn fisher_from_derivatives(model: &Model, d: &ProbabilityDerivatives, shots: &[u64]) -> Result<FisherMatrix> {
    let k = model.n_params();
    let mut m = RMat::zeros(k, k);
    let mut dropped = 0;
    let mut hsum_max: Option<f64> = None;
    for (c, &n) in shots.iter().enumerate() {
        let mut hsum = RMat::zeros(k, k);
        for mu in 0..4 {
            let row = 4 * c + mu;
            let p = d.p[row];
            if p >= PROBABILITY_FLOOR {
                let g = d.grad.row(row);
                m += (g.transpose() * g) * (n as f64 / p);
            } else {
                dropped += 1;
            }
            if let Some(hs) = &d.hessians {
                m -= &hs[row] * n as f64;
                hsum += &hs[row];
            }
        }
        if d.hessians.is_some() {
            let v = hsum.amax();
            hsum_max = Some(hsum_max.map_or(v, |h: f64| h.max(v)));
        }
    }
    Ok(FisherMatrix {
        matrix: m,
        names: model.free_names(),
        circuits: model.circuits.iter().map(|c| c.to_string()).collect(),
        dropped_outcomes: dropped,
        hessian_sum_max: hsum_max,
    })
}

pub fn fisher_per_circuit(
    c: &Circuit,
    params: &GateSetParams,
    layout: ThetaLayout,
    mode: ContextMode,
    n_samples: u64,
    cfg: &DerivativeConfig,
) -> Result<FisherMatrix> {
    let model = Model::new(params.clone(), layout, mode, vec![c.clone()]);
    let x = model.project_theta(&params.to_theta(layout));
    fisher_from_model(&model, &x, &[n_samples], cfg)
}

pub fn fisher_design(
    design: &Design,
    params: &GateSetParams,
    layout: ThetaLayout,
    mode: ContextMode,
    cfg: &DerivativeConfig,
) -> Result<FisherMatrix> {
    let model = Model::new(params.clone(), layout, mode, design.circuits.clone());
    let x = model.project_theta(&params.to_theta(layout));
    fisher_from_model(&model, &x, &vec![design.samples_per_circuit; design.len()], cfg)
}

#[derive(Debug, Clone)]
pub struct EigenBound {
    /// 1/√λ for eigenvalue λ of F (∞ in the null space).
    pub bound: f64,
    pub direction: Vec<f64>,
    /// Parameter with the largest weight in `direction`.
    pub dominant: usize,
}

#[derive(Debug, Clone)]
pub struct CrbBounds {
    pub names: Vec<String>,
    /// Sorted from the loosest (largest) bound down.
    pub eigen: Vec<EigenBound>,
    /// √diag(F⁻¹), through the pseudo-inverse when F is singular.
    pub diagonal: Vec<f64>,
    pub covariance: RMat,
    pub rank: usize,
    pub rank_deficient: bool,
}

impl CrbBounds {
    /// Largest eigen-bound whose direction is dominated by `name`.
    pub fn eigen_bound_for(&self, name: &str) -> Option<f64> {
        let idx = self.names.iter().position(|n| n == name)?;
        self.eigen.iter().find(|e| e.dominant == idx).map(|e| e.bound)
    }

    pub fn diagonal_for(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.diagonal[i])
    }
}

pub fn crb_bounds(f: &FisherMatrix) -> CrbBounds {
    let n = f.dim();
    let sym = (&f.matrix + f.matrix.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let tol = lmax * 1e-12 * n.max(1) as f64;
    let mut cov = RMat::zeros(n, n);
    let mut eigen = Vec::with_capacity(n);
    let mut rank = 0;
    for k in 0..n {
        let lam = eig.eigenvalues[k];
        let v = eig.eigenvectors.column(k);
        let dominant = v.iamax();
        if lam > tol {
            rank += 1;
            cov += (v * v.transpose()) / lam;
            eigen.push(EigenBound { bound: 1.0 / lam.sqrt(), direction: v.iter().copied().collect(), dominant });
        } else {
            eigen.push(EigenBound { bound: f64::INFINITY, direction: v.iter().copied().collect(), dominant });
        }
    }
    eigen.sort_by(|a, b| b.bound.total_cmp(&a.bound));
    let diagonal = (0..n).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    CrbBounds { names: f.names.clone(), eigen, diagonal, covariance: cov, rank, rank_deficient: rank < n }
}

/// Bounds for the two LS noise parameters from the Ramsey design (|++⟩
/// preparation, X⊗X readout) with everything else ideal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub p: usize,
    pub amplification: f64,
    /// From the FI spectrum: eigen-bounds dominated by Γ_th and Γ_d.
    pub spectrum_gamma_th: f64,
    pub spectrum_gamma_d: f64,
    /// Single-parameter bounds 1/√F_ii, i.e. the error of the effective
    /// sequence parameter divided by the derivative of its amplification.
    pub amplification_gamma_th: f64,
    pub amplification_gamma_d: f64,
    pub eigenvalues: [f64; 2],
}

pub fn ramsey_bound_curve(params: &GateSetParams, depths: &[usize], n_samples: u64) -> Result<Vec<BoundRow>> {
    let mut clean = GateSetParams::ideal(params.ls.x, params.ls.zeta_prefactor);
    clean.ls = params.ls;
    depths
        .par_iter()
        .map(|&p| {
            let model = Model::new(clean.clone(), ThetaLayout::default(), ContextMode::ContextDependent, vec![crate::circuits::ramsey_circuit(p)])
                .with_free(&["gamma_th", "gamma_d"])?;
            let x = [clean.ls.gamma_th, clean.ls.gamma_d];
            let f = fisher_from_model(&model, &x, &[n_samples], &DerivativeConfig { hessian_term: false, ..Default::default() })?;
            let crb = crb_bounds(&f);
            let ev = f.eigenvalues();
            let single = |i: usize| {
                let v = f.matrix[(i, i)];
                if v > 0.0 {
                    1.0 / v.sqrt()
                } else {
                    f64::INFINITY
                }
            };
            // With two parameters the eigen-directions may both lean on the same
            // entry; fall back to the other eigenvector in that case.
            let th = crb.eigen_bound_for("gamma_th");
            let d = crb.eigen_bound_for("gamma_d");
            let (th, d) = match (th, d) {
                (Some(a), Some(b)) => (a, b),
                (Some(a), None) => (a, crb.eigen[1].bound),
                (None, Some(b)) => (crb.eigen[1].bound, b),
                (None, None) => (f64::INFINITY, f64::INFINITY),
            };
            Ok(BoundRow {
                p,
                amplification: amplification_factor(p, clean.ls.x),
                spectrum_gamma_th: th,
                spectrum_gamma_d: d,
                amplification_gamma_th: single(0),
                amplification_gamma_d: single(1),
                eigenvalues: [ev[0], ev[1]],
            })
        })
        .collect()
}

pub const BOUND_CSV_HEADER: &str =
    "p,amplification,spectrum_bound_gamma_th,spectrum_bound_gamma_d,amp_bound_gamma_th,amp_bound_gamma_d,fi_eig_min,fi_eig_max";

pub fn bound_rows_csv(rows: &[BoundRow]) -> String {
    let mut s = String::from(BOUND_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}\n",
            r.p,
            r.amplification,
            r.spectrum_gamma_th,
            r.spectrum_gamma_d,
            r.amplification_gamma_th,
            r.amplification_gamma_d,
            r.eigenvalues[0],
            r.eigenvalues[1]
        ));
    }
    s
}
