//! CP-divisibility based non-Markovianity of LS sequences: the discrete
//! measure over whole intermediate gates and the continuous one over
//! instantaneous maps inside each gate.
//!
//! Every map here is diagonal in the natural representation, so its Choi
//! image on |Φ⟩⟨Φ| lives on span{|σσ⟩} and reduces to the 4×4 matrix
//! M_{σγ} = d[σ + 4γ]/4. The unitary part only conjugates M by a diagonal
//! phase and cannot change the trace norm.

use nalgebra::Matrix4;
use num_complex::Complex64;

use crate::ls_model::{amplification_factor, intermediate_effective, ls_diagonal, zeta_phase, LsParams};
use crate::qchan::c;
use crate::spectra::PhysicalConfig;
use crate::{Error, Result, C64};

// Eigenvalues of a PSD Choi matrix come out at roundoff level below zero;
// anything smaller in magnitude than this is treated as zero.
const NEG_EIGEN_TOL: f64 = 1e-13;

/// ‖(Φ⊗1)(|Φ⟩⟨Φ|)‖₁ − 1 for a trace-preserving diagonal map, computed as twice
/// the negative eigenvalue mass of the reduced Choi matrix.
pub fn diagonal_cp_violation(d: &[C64; 16]) -> f64 {
    let m = Matrix4::<C64>::from_fn(|s, g| d[s + 4 * g] * 0.25);
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    let eig = h.symmetric_eigenvalues();
    2.0 * eig.iter().filter(|&&v| v < -NEG_EIGEN_TOL).map(|v| -v).sum::<f64>()
}

/// g^d(k) for the k-th intermediate gate of a context-dependent sequence.
pub fn g_discrete(k: usize, base: &LsParams) -> f64 {
    let (gd, gth, angle, phase) = intermediate_effective(k, base);
    diagonal_cp_violation(&ls_diagonal(gd, gth, angle, phase))
}

/// N^d_CP(p) for p = 1..=p_max.
pub fn n_cp_discrete(p_max: usize, base: &LsParams) -> Vec<f64> {
    let mut acc = 0.0;
    (1..=p_max)
        .map(|k| {
            acc += g_discrete(k, base);
            acc
        })
        .collect()
}

/// Breathing-mode trajectory of ion 1 resolved inside each gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory {
    /// F/δ_b: the displacement within a gate is (F/δ_b)(1 − e^{iδ_b τ}).
    pub amplitude: f64,
    pub delta: f64,
    pub gate_time: f64,
    /// Mode phase advance per gate, ω_b·t_g.
    pub x: f64,
    pub nbar: f64,
}

impl Trajectory {
    /// Trajectory and LS parameters derived from the same configuration, so
    /// that 4(n̄ + ½)ξ at whole gates reproduces Γ_th·A(p, x).
    pub fn from_physical(cfg: &PhysicalConfig) -> Result<(Self, LsParams)> {
        let derived = cfg.derive()?;
        let [_, breathing] = cfg.modes();
        let delta = derived.delta_breathing;
        let traj = Self {
            amplitude: breathing.force(&derived.drive, 0) / delta,
            delta,
            gate_time: cfg.gate_time,
            x: derived.params.x,
            nbar: breathing.nbar,
        };
        Ok((traj, derived.params))
    }

    pub fn phi(&self, tau: f64) -> C64 {
        c(self.amplitude, 0.0) * (c(1.0, 0.0) - Complex64::from_polar(1.0, self.delta * tau))
    }

    /// ξ after p complete gates and a time τ into the next one. The partial
    /// gate enters with a plus sign, which is what makes ξ continuous across
    /// gate boundaries (τ = t_g at p equals τ = 0 at p + 1).
    pub fn xi(&self, p: usize, tau: f64) -> f64 {
        let mut sum = c(0.0, 0.0);
        for l in 0..p {
            sum += Complex64::from_polar(1.0, l as f64 * self.x);
        }
        self.xi_with_sum(p, sum, tau)
    }

    fn xi_with_sum(&self, p: usize, sum: C64, tau: f64) -> f64 {
        (self.phi(self.gate_time) * sum + self.phi(tau) * Complex64::from_polar(1.0, p as f64 * self.x)).norm_sqr()
    }

    /// ξ at absolute time t = p·t_g + τ.
    pub fn xi_at(&self, t: f64) -> f64 {
        let p = (t / self.gate_time).floor().max(0.0) as usize;
        self.xi(p, t - p as f64 * self.gate_time)
    }

    /// Accumulated thermal parameter 4(n̄ + ½)ξ.
    pub fn gamma_th_at(&self, t: f64) -> f64 {
        4.0 * (self.nbar + 0.5) * self.xi_at(t)
    }
}

/// Γ_th^{t, t+δt} = 4(n̄ + ½)(ξ(t + δt) − ξ(t)) with t = p·t_g + τ.
pub fn within_gate_rate(traj: &Trajectory, p: usize, tau: f64, dt: f64) -> f64 {
    let t = p as f64 * traj.gate_time + tau;
    traj.gamma_th_at(t + dt) - traj.gamma_th_at(t)
}

/// Default step: t_g/500, refined so that one intra-gate oscillation of the
/// breathing displacement spans at least 64 steps.
pub fn default_time_step(traj: &Trajectory) -> f64 {
    let by_gate = traj.gate_time / 500.0;
    if traj.delta == 0.0 {
        return by_gate;
    }
    by_gate.min(2.0 * std::f64::consts::PI / traj.delta.abs() / 64.0)
}

/// N_CP at the end of each gate p = 1..=p_max, summing the CP violations of
/// the instantaneous maps E_{t+Δt,t} = E_{t+Δt,0}E_{t,0}⁻¹. Inside a gate the
/// thermal parameter follows the trajectory, Γ_d grows linearly, and the
/// entangling and local phases are interpolated linearly between their
/// whole-gate values.
pub fn n_cp_continuous(p_max: usize, base: &LsParams, traj: &Trajectory, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || dt > traj.gate_time / 200.0 {
        return Err(Error::Config(format!("time step {dt:e} must be positive and at most t_g/200")));
    }
    let steps = (traj.gate_time / dt).ceil() as usize;
    let pref = 4.0 * (traj.nbar + 0.5);
    let angle = |p: usize| p as f64 * base.theta_ls + 0.5 * zeta_phase(p, base.x, base.zeta_prefactor);

    let mut out = Vec::with_capacity(p_max);
    let mut acc = 0.0;
    let mut sum = c(0.0, 0.0);
    for p in 0..p_max {
        let (a0, a1) = (angle(p), angle(p + 1));
        let mut prev_th = pref * traj.xi_with_sum(p, sum, 0.0);
        for s in 1..=steps {
            let frac = s as f64 / steps as f64;
            let th = pref * traj.xi_with_sum(p, sum, frac * traj.gate_time);
            let d = ls_diagonal(base.gamma_d / steps as f64, th - prev_th, (a1 - a0) / steps as f64, base.omega0_t / steps as f64);
            if d.iter().any(|z| !z.is_finite()) {
                return Err(Error::Numerical(format!("instantaneous map at p = {p}, step {s} is not finite")));
            }
            acc += diagonal_cp_violation(&d);
            prev_th = th;
        }
        sum += Complex64::from_polar(1.0, p as f64 * traj.x);
        out.push(acc);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmCurve {
    pub p: Vec<usize>,
    /// A(p, x)·Γ_th, the amplified thermal parameter.
    pub amplified_gamma_th: Vec<f64>,
    pub discrete: Vec<f64>,
    pub continuous: Vec<f64>,
    pub dt: f64,
}

pub const NM_CSV_HEADER: &str = "p,amplified_gamma_th,n_cp_discrete,n_cp_continuous";

impl NmCurve {
    pub fn compute(p_max: usize, base: &LsParams, traj: &Trajectory, dt: Option<f64>) -> Result<Self> {
        let dt = dt.unwrap_or_else(|| default_time_step(traj));
        Ok(Self {
            p: (1..=p_max).collect(),
            amplified_gamma_th: (1..=p_max).map(|p| amplification_factor(p, base.x) * base.gamma_th).collect(),
            discrete: n_cp_discrete(p_max, base),
            continuous: n_cp_continuous(p_max, base, traj, dt)?,
            dt,
        })
    }

    pub fn to_csv_rows(&self) -> String {
        let mut s = String::from(NM_CSV_HEADER);
        s.push('\n');
        for k in 0..self.p.len() {
            s.push_str(&format!("{},{:.12e},{:.12e},{:.12e}\n", self.p[k], self.amplified_gamma_th[k], self.discrete[k], self.continuous[k]));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ls_model::{gamma_th_p, intermediate_superop};
    use crate::metrics::hermitian_trace_norm;
    use std::f64::consts::PI;

    fn cfg95() -> PhysicalConfig {
        PhysicalConfig { ou_c: 2e7, gate_time: 95e-6, ..Default::default() }
    }

    fn base_x(x: f64) -> LsParams {
        LsParams { gamma_d: 2e-4, gamma_th: 5e-3, theta_ls: PI / 4.0, omega0_t: 0.2, x, zeta_prefactor: 1e-3 }
    }

    #[test]
    fn reduced_choi_matches_full_choi() {
        for k in 1..12 {
            let b = base_x(2.0);
            let full = hermitian_trace_norm(&intermediate_superop(k, &b).choi()) - 1.0;
            assert!((g_discrete(k, &b) - full.max(0.0)).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn discrete_measure_follows_the_sign_of_the_rate() {
        let b = base_x(2.0);
        let mut saw_negative = false;
        for k in 1..=40 {
            let inc = amplification_factor(k, b.x) - amplification_factor(k - 1, b.x);
            let g = g_discrete(k, &b);
            let min_eig = intermediate_superop(k, &b).min_choi_eigenvalue();
            if inc < 0.0 {
                saw_negative = true;
                assert!(g > 0.0 && min_eig < 0.0, "k={k}");
            } else {
                assert_eq!(g, 0.0, "k={k}");
                assert!(min_eig > -1e-10);
            }
        }
        assert!(saw_negative);
        let n = n_cp_discrete(40, &b);
        assert!(n.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn trajectory_reproduces_whole_gate_thermal_parameter() {
        let (traj, base) = Trajectory::from_physical(&cfg95()).unwrap();
        for p in 0..30 {
            let want = gamma_th_p(&base, p);
            let got = traj.gamma_th_at(p as f64 * traj.gate_time);
            assert!((got - want).abs() <= 1e-9 * want.abs().max(base.gamma_th), "p={p}: {got} vs {want}");
        }
    }

    #[test]
    fn xi_is_continuous_across_gate_boundaries() {
        let (traj, _) = Trajectory::from_physical(&cfg95()).unwrap();
        for p in 0..20 {
            let end = traj.xi(p, traj.gate_time);
            let start = traj.xi(p + 1, 0.0);
            assert!((end - start).abs() <= 1e-12 * end.abs().max(1e-30), "p={p}");
        }
    }

    #[test]
    fn within_gate_rate_has_negative_increments() {
        let (traj, base) = Trajectory::from_physical(&cfg95()).unwrap();
        let dt = default_time_step(&traj);
        let n = (traj.gate_time / dt).round() as usize;
        let rates: Vec<f64> = (0..n).map(|k| within_gate_rate(&traj, 0, k as f64 * dt, dt)).collect();
        assert!(rates.iter().any(|&r| r < 0.0));
        // Positive increments over a single gate cover at least its net Γ_th.
        let positive: f64 = rates.iter().filter(|&&r| r > 0.0).sum();
        assert!(positive >= base.gamma_th * (1.0 - 1e-9));
    }

    #[test]
    fn pure_dephasing_is_markovian() {
        let (mut traj, mut base) = Trajectory::from_physical(&cfg95()).unwrap();
        traj.amplitude = 0.0;
        base.gamma_th = 0.0;
        let dt = default_time_step(&traj);
        let n = n_cp_continuous(5, &base, &traj, dt).unwrap();
        assert!(n.iter().all(|&v| v == 0.0));
        assert!(n_cp_discrete(5, &base).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_must_resolve_the_gate() {
        let (traj, base) = Trajectory::from_physical(&cfg95()).unwrap();
        assert!(matches!(n_cp_continuous(2, &base, &traj, traj.gate_time / 100.0), Err(Error::Config(_))));
    }

    #[test]
    fn continuous_dominates_discrete() {
        let (traj, base) = Trajectory::from_physical(&cfg95()).unwrap();
        let curve = NmCurve::compute(24, &base, &traj, None).unwrap();
        for k in 0..curve.p.len() {
            assert!(curve.continuous[k] >= curve.discrete[k] - 1e-12, "p={}", curve.p[k]);
            if k > 0 {
                assert!(curve.continuous[k] >= curve.continuous[k - 1]);
            }
        }
        let csv = curve.to_csv_rows();
        assert_eq!(csv.lines().count(), 25);
    }
}
