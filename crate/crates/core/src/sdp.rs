//! A small dense log-barrier solver for linear matrix inequalities, and the
//! two semidefinite programs for the diamond norm built on it.
//!
//! Problems have the form  minimize cᵀy  s.t.  F_k(y) = F_k0 + Σ_i y_i F_ki ⪰ 0,
//! with Hermitian blocks F_k. Every F_ki is stored as a handful of (row, col,
//! coefficient) entries, which keeps the Newton Hessian
//! H_ij = Σ_k tr(G_k F_ki G_k F_kj), G_k = F_k⁻¹, cheap to assemble.
//!
//! At the end of each centering stage the barrier duality gap equals the total
//! LMI size divided by the barrier weight, so the feasible iterate's objective
//! is an upper bound and (objective − gap) a lower bound.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::qchan::c;
use crate::{CMat, Error, Result, C64};

#[derive(Debug, Clone, Copy)]
pub struct Entry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub coeff: C64,
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub constants: Vec<CMat>,
    pub vars: Vec<Vec<Entry>>,
    pub objective: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SdpOptions {
    pub gap_tol: f64,
    /// Relative gap target; the stopping gap is min(gap_tol, rel_gap_tol·|value|).
    pub rel_gap_tol: f64,
    pub barrier_growth: f64,
    pub max_newton: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-7, rel_gap_tol: 1e-4, barrier_growth: 20.0, max_newton: 2000 }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub y: Vec<f64>,
    /// Objective at the final (strictly feasible) iterate.
    pub value: f64,
    pub gap: f64,
    pub newton_steps: usize,
    pub converged: bool,
}

impl SdpProblem {
    pub fn new(constants: Vec<CMat>) -> Self {
        Self { constants, vars: Vec::new(), objective: Vec::new() }
    }

    /// Adds a scalar variable with the given objective weight; returns its index.
    pub fn add_var(&mut self, weight: f64, entries: Vec<Entry>) -> usize {
        self.vars.push(entries);
        self.objective.push(weight);
        self.vars.len() - 1
    }

    pub fn total_size(&self) -> usize {
        self.constants.iter().map(|m| m.nrows()).sum()
    }

    fn block_matrices(&self, y: &[f64]) -> Vec<CMat> {
        let mut f = self.constants.clone();
        for (v, entries) in y.iter().zip(&self.vars) {
            for e in entries {
                f[e.block][(e.row, e.col)] += e.coeff * *v;
            }
        }
        f
    }
}

/// Adds the entries of a Hermitian basis element (k, l) of an n×n variable
/// placed at `offset` within `block`, scaled by `scale`.
pub fn hermitian_entries(block: usize, offset: usize, k: usize, l: usize, imaginary: bool, scale: f64) -> Vec<Entry> {
    let (r, s) = (offset + k, offset + l);
    if k == l {
        return vec![Entry { block, row: r, col: r, coeff: c(scale, 0.0) }];
    }
    let z = if imaginary { c(0.0, scale) } else { c(scale, 0.0) };
    vec![Entry { block, row: r, col: s, coeff: z }, Entry { block, row: s, col: r, coeff: z.conj() }]
}

/// Enumerates the n² real coordinates of an n×n Hermitian matrix as (k, l, imaginary).
pub fn hermitian_coordinates(n: usize) -> Vec<(usize, usize, bool)> {
    let mut out = Vec::with_capacity(n * n);
    for k in 0..n {
        out.push((k, k, false));
        for l in k + 1..n {
            out.push((k, l, false));
            out.push((k, l, true));
        }
    }
    out
}

// Complex Cholesky happily takes square roots of negative pivots, so positive
// definiteness is read off the factor's diagonal.
fn cholesky(m: &CMat) -> Option<Cholesky<C64, Dyn>> {
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    let ch = Cholesky::new(h)?;
    ch.l_dirty().diagonal().iter().all(|z| z.re > 0.0 && z.im.abs() <= 1e-10 * z.re).then_some(ch)
}

fn log_det(ch: &Cholesky<C64, Dyn>) -> f64 {
    2.0 * ch.l_dirty().diagonal().iter().map(|z| z.re.ln()).sum::<f64>()
}

/// Barrier function value, or None outside the interior.
fn barrier(problem: &SdpProblem, y: &[f64], t: f64) -> Option<f64> {
    let mut val = t * problem.objective.iter().zip(y).map(|(c, v)| c * v).sum::<f64>();
    for f in problem.block_matrices(y) {
        let ch = cholesky(&f)?;
        val -= log_det(&ch);
    }
    Some(val)
}

pub fn solve(problem: &SdpProblem, y0: Vec<f64>, opts: &SdpOptions) -> Result<SdpSolution> {
    let m = problem.vars.len();
    if y0.len() != m {
        return Err(Error::Dimension(format!("{} starting values for {m} variables", y0.len())));
    }
    if barrier(problem, &y0, 1.0).is_none() {
        return Err(Error::Numerical("SDP starting point is not strictly feasible".into()));
    }
    let size = problem.total_size() as f64;
    let mut y = y0;
    let obj = |y: &[f64]| problem.objective.iter().zip(y).map(|(c, v)| c * v).sum::<f64>();
    // Start where the objective and barrier terms are comparable.
    let mut t = size / obj(&y).abs().max(1e-3);
    let mut steps = 0;
    let mut converged = false;
    let mut gap = f64::INFINITY;

    // Group each variable's entries by block for the Hessian assembly.
    let nb = problem.constants.len();
    let mut by_block: Vec<Vec<(usize, Vec<Entry>)>> = vec![Vec::new(); nb];
    for (i, entries) in problem.vars.iter().enumerate() {
        for b in 0..nb {
            let es: Vec<Entry> = entries.iter().filter(|e| e.block == b).copied().collect();
            if !es.is_empty() {
                by_block[b].push((i, es));
            }
        }
    }

    'outer: loop {
        // Centering by damped Newton.
        let mut decrement = f64::INFINITY;
        let mut inner = 0;
        loop {
            inner += 1;
            if inner > 200 {
                break;
            }
            if steps >= opts.max_newton {
                break 'outer;
            }
            steps += 1;
            let blocks = problem.block_matrices(&y);
            let mut grad = DVector::from_iterator(m, problem.objective.iter().map(|c| t * c));
            let mut hess = DMatrix::<f64>::zeros(m, m);
            for (b, f) in blocks.iter().enumerate() {
                let Some(ch) = cholesky(f) else {
                    return Err(Error::Numerical("SDP iterate left the feasible region".into()));
                };
                let g = ch.inverse();
                let vars = &by_block[b];
                for (i, es) in vars {
                    grad[*i] -= es.iter().map(|e| (e.coeff * g[(e.col, e.row)]).re).sum::<f64>();
                }
                for (a, (i, ei)) in vars.iter().enumerate() {
                    for (j, ej) in vars[a..].iter() {
                        let mut s = C64::new(0.0, 0.0);
                        for p in ei {
                            for q in ej {
                                s += p.coeff * q.coeff * g[(p.col, q.row)] * g[(q.col, p.row)];
                            }
                        }
                        hess[(*i, *j)] += s.re;
                        if i != j {
                            hess[(*j, *i)] += s.re;
                        }
                    }
                }
            }
            let Some(ch) = hess.clone().cholesky() else {
                // Fall back to a regularized system on loss of definiteness.
                let reg = hess.diagonal().amax().max(1.0) * 1e-12;
                let mut h = hess;
                for k in 0..m {
                    h[(k, k)] += reg;
                }
                let Some(ch) = h.cholesky() else {
                    return Err(Error::Numerical("singular SDP Newton system".into()));
                };
                let dy = ch.solve(&(-&grad));
                if !line_search(problem, &mut y, &dy, &grad, t) {
                    break;
                }
                continue;
            };
            let dy = ch.solve(&(-&grad));
            decrement = -grad.dot(&dy);
            if decrement / 2.0 < 1e-10 {
                break;
            }
            if !line_search(problem, &mut y, &dy, &grad, t) {
                break;
            }
        }
        // Off the central path the gap estimate grows with the Newton decrement λ:
        // gap ≤ (m + λ√m)/t for λ < 1.
        let lambda = decrement.max(0.0).sqrt();
        gap = if lambda < 1.0 { (size + lambda * size.sqrt()) / t } else { f64::INFINITY };
        let value = obj(&y);
        if gap <= opts.gap_tol.min(opts.rel_gap_tol * value.abs()).max(1e-13) {
            converged = true;
            break;
        }
        t *= opts.barrier_growth;
    }
    let value = obj(&y);
    Ok(SdpSolution { gap, value, y, newton_steps: steps, converged })
}

// Backtracking (Armijo) along dy; returns false if no progress is possible.
fn line_search(problem: &SdpProblem, y: &mut Vec<f64>, dy: &DVector<f64>, grad: &DVector<f64>, t: f64) -> bool {
    let f0 = barrier(problem, y, t).expect("current iterate is interior");
    let slope = grad.dot(dy);
    let mut s = 1.0;
    while s > 1e-12 {
        let cand: Vec<f64> = y.iter().zip(dy.iter()).map(|(a, b)| a + s * b).collect();
        if let Some(f) = barrier(problem, &cand, t) {
            if f <= f0 + 0.25 * s * slope {
                *y = cand;
                return true;
            }
        }
        s *= 0.5;
    }
    false
}

/// Result of a diamond-norm computation: the SDP value is an upper bound,
/// `lower` is the best certified lower bound available.
#[derive(Debug, Clone, Copy)]
pub struct DiamondResult {
    pub value: f64,
    pub lower: f64,
    pub gap: f64,
    pub converged: bool,
    pub schur: bool,
}

fn is_diagonal(m: &CMat) -> bool {
    m.iter().enumerate().all(|(k, z)| k % (m.nrows() + 1) == 0 || *z == c(0.0, 0.0))
}

/// ‖Φ‖⋄ for a Hermiticity-preserving map given in natural representation.
/// Diagonal maps (Schur multipliers ρ ↦ M∘ρ) use the reduced program
/// min τ s.t. [[R, M], [M†, S]] ⪰ 0, R_ii ≤ τ, S_jj ≤ τ; everything else uses
/// the standard program on the Choi matrix.
pub fn diamond_norm(phi: &CMat, opts: &SdpOptions) -> Result<DiamondResult> {
    let d2 = phi.nrows();
    let d = (d2 as f64).sqrt().round() as usize;
    if d * d != d2 || !phi.is_square() {
        return Err(Error::Dimension("superoperator must be d²×d²".into()));
    }
    if phi.iter().all(|z| z.norm() == 0.0) {
        return Ok(DiamondResult { value: 0.0, lower: 0.0, gap: 0.0, converged: true, schur: is_diagonal(phi) });
    }
    if is_diagonal(phi) {
        let m = CMat::from_fn(d, d, |s, g| phi[(s + d * g, s + d * g)]);
        let sol = schur_program(&m, opts)?;
        return Ok(DiamondResult { value: sol.value, lower: (sol.value - sol.gap).max(0.0), gap: sol.gap, converged: sol.converged, schur: true });
    }
    let sol = choi_program(phi, d, opts)?;
    Ok(DiamondResult { value: sol.value, lower: (sol.value - sol.gap).max(0.0), gap: sol.gap, converged: sol.converged, schur: false })
}

fn spectral_norm(m: &CMat) -> f64 {
    m.clone().svd(false, false).singular_values.iter().fold(0.0, |a: f64, &b| a.max(b))
}

fn schur_program(m: &CMat, opts: &SdpOptions) -> Result<SdpSolution> {
    let d = m.nrows();
    let mut f0 = CMat::zeros(2 * d, 2 * d);
    f0.view_mut((0, d), (d, d)).copy_from(m);
    f0.view_mut((d, 0), (d, d)).copy_from(&m.adjoint());
    // Block 0: the 2d×2d LMI; block 1: diagonal 2d×2d with τ − R_ii, τ − S_jj.
    let mut p = SdpProblem::new(vec![f0, CMat::zeros(2 * d, 2 * d)]);
    let a = spectral_norm(m) + 1.0;
    let mut y0 = Vec::new();
    for offset in [0, d] {
        for (k, l, im) in hermitian_coordinates(d) {
            let mut es = hermitian_entries(0, offset, k, l, im, 1.0);
            if k == l {
                es.push(Entry { block: 1, row: offset + k, col: offset + k, coeff: c(-1.0, 0.0) });
            }
            p.add_var(0.0, es);
            y0.push(if k == l { a } else { 0.0 });
        }
    }
    let tau: Vec<Entry> = (0..2 * d).map(|k| Entry { block: 1, row: k, col: k, coeff: c(1.0, 0.0) }).collect();
    p.add_var(1.0, tau);
    y0.push(a + 1.0);
    solve(&p, y0, opts)
}

/// Choi matrix in the output⊗input ordering: J = Σ_ij Φ(|i⟩⟨j|) ⊗ |i⟩⟨j|.
pub fn choi_output_first(phi: &CMat, d: usize) -> CMat {
    let mut j = CMat::zeros(d * d, d * d);
    for col in 0..d {
        for row in 0..d {
            let k = row + d * col;
            for b in 0..d {
                for a in 0..d {
                    j[(a * d + row, b * d + col)] = phi[(a + d * b, k)];
                }
            }
        }
    }
    j
}

// min ½(‖Tr_out Y0‖ + ‖Tr_out Y1‖) s.t. [[Y0, −J], [−J†, Y1]] ⪰ 0, with the
// spectral norms bounded through epigraph variables t0, t1.
fn choi_program(phi: &CMat, d: usize, opts: &SdpOptions) -> Result<SdpSolution> {
    let n = d * d;
    let j = choi_output_first(phi, d);
    let mut f0 = CMat::zeros(2 * n, 2 * n);
    f0.view_mut((0, n), (n, n)).copy_from(&(-&j));
    f0.view_mut((n, 0), (n, n)).copy_from(&(-j.adjoint()));
    let mut p = SdpProblem::new(vec![f0, CMat::zeros(d, d), CMat::zeros(d, d)]);
    let a = spectral_norm(&j) + 1.0;
    let mut y0 = Vec::new();
    for (which, offset) in [(1usize, 0usize), (2, n)] {
        for (k, l, im) in hermitian_coordinates(n) {
            let mut es = hermitian_entries(0, offset, k, l, im, 1.0);
            // Index k = out·d + in; the partial trace over the output keeps
            // input pairs with equal output index, entering with a minus sign.
            let (ok, ik) = (k / d, k % d);
            let (ol, il) = (l / d, l % d);
            if ok == ol {
                for mut e in hermitian_entries(which, 0, ik, il, im, -1.0) {
                    e.block = which;
                    es.push(e);
                }
            }
            p.add_var(0.0, es);
            y0.push(if k == l { a } else { 0.0 });
        }
    }
    for which in [1usize, 2] {
        let es = (0..d).map(|k| Entry { block: which, row: k, col: k, coeff: c(1.0, 0.0) }).collect();
        p.add_var(0.5, es);
        y0.push(a * d as f64 + 1.0);
    }
    solve(&p, y0, opts)
}

/// Applies Φ ⊗ 1 to an operator on system ⊗ ancilla (both of dimension d).
pub fn apply_extended(phi: &CMat, d: usize, rho: &CMat) -> CMat {
    let mut out = CMat::zeros(d * d, d * d);
    for a in 0..d {
        for b in 0..d {
            let block = CMat::from_fn(d, d, |i, j| rho[(i * d + a, j * d + b)]);
            let v = phi * DVector::from_column_slice(block.as_slice());
            for j in 0..d {
                for i in 0..d {
                    out[(i * d + a, j * d + b)] = v[i + d * j];
                }
            }
        }
    }
    out
}

/// Certified lower bound max_ψ ‖(Φ⊗1)(|ψ⟩⟨ψ|)‖₁ by alternating maximization
/// from random pure states: with U the sign of the current output, the next ψ
/// is the top eigenvector of (Φ†⊗1)(U); each step cannot decrease the value.
pub fn restart_lower_bound(phi: &CMat, restarts: usize, seed: u64) -> Result<f64> {
    let d2 = phi.nrows();
    let d = (d2 as f64).sqrt().round() as usize;
    if d * d != d2 {
        return Err(Error::Dimension("superoperator must be d²×d²".into()));
    }
    let adj = phi.adjoint();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for _ in 0..restarts {
        let mut psi = DVector::<C64>::from_fn(d * d, |_, _| c(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)));
        psi /= c(psi.norm(), 0.0);
        let mut value = 0.0;
        for _ in 0..200 {
            let rho = &psi * psi.adjoint();
            let x = apply_extended(phi, d, &rho);
            let h = (&x + x.adjoint()) * c(0.5, 0.0);
            let eig = h.symmetric_eigen();
            let current: f64 = eig.eigenvalues.iter().map(|v| v.abs()).sum();
            let mut u = CMat::zeros(d * d, d * d);
            for k in 0..d * d {
                let v = eig.eigenvectors.column(k);
                let s = if eig.eigenvalues[k] >= 0.0 { 1.0 } else { -1.0 };
                u += v * v.adjoint() * c(s, 0.0);
            }
            let w = apply_extended(&adj, d, &u);
            let w = (&w + w.adjoint()) * c(0.5, 0.0);
            let e = w.symmetric_eigen();
            let top = e.eigenvalues.imax();
            psi = e.eigenvectors.column(top).into_owned();
            if current - value < 1e-13 * current.max(1e-300) && value > 0.0 {
                value = value.max(current);
                break;
            }
            value = value.max(current);
        }
        best = best.max(value);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_lmi() {
        // minimize y s.t. [[y, 1], [1, y]] ⪰ 0  →  y = 1.
        let mut f0 = CMat::zeros(2, 2);
        f0[(0, 1)] = c(1.0, 0.0);
        f0[(1, 0)] = c(1.0, 0.0);
        let mut p = SdpProblem::new(vec![f0]);
        p.add_var(
            1.0,
            vec![Entry { block: 0, row: 0, col: 0, coeff: c(1.0, 0.0) }, Entry { block: 0, row: 1, col: 1, coeff: c(1.0, 0.0) }],
        );
        let s = solve(&p, vec![3.0], &SdpOptions::default()).unwrap();
        assert!(s.converged);
        assert!((s.value - 1.0).abs() < 1e-7 && s.value >= 1.0 - 1e-12);
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let mut p = SdpProblem::new(vec![CMat::identity(1, 1) * c(-1.0, 0.0)]);
        p.add_var(1.0, vec![Entry { block: 0, row: 0, col: 0, coeff: c(1.0, 0.0) }]);
        assert!(solve(&p, vec![0.0], &SdpOptions::default()).is_err());
    }

    #[test]
    fn choi_ordering() {
        let id = CMat::identity(4, 4);
        let j = choi_output_first(&id, 2);
        // Unnormalized maximally entangled projector: entries at (0,0), (0,3), (3,0), (3,3).
        for (r, s) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            assert_eq!(j[(r, s)], c(1.0, 0.0));
        }
        assert!((j.trace() - c(2.0, 0.0)).norm() < 1e-15);
    }
}
