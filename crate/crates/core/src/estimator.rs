//! Point estimation of θ from outcome counts: maximum-likelihood and weighted
//! least-squares costs minimized with a projected Levenberg–Marquardt loop.
//!
//! Both costs are written as sums of squared residuals so one solver serves
//! both. For ML the residual of outcome μ is the signed deviance
//! r = (f − p)/√p · √g(f/p − 1) with g(e) = 2((1+e)ln(1+e) − e)/e², whose square
//! sums (per circuit) to 2·(C_ML − entropy); the minimizers coincide.

use nalgebra::DVector;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{circuit_probabilities_raw, Circuit};
use crate::datagen::Dataset;
use crate::fisher;
use crate::gateset::{GateSet, GateSetParams, Theta, ThetaLayout};
use crate::ls_model::{self, amplification_factor, ContextMode};
use crate::qchan::SuperOp;
use crate::{Error, Result, RMat};

pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// θ ↦ outcome probabilities of a fixed circuit list. Parameters outside
/// `free` stay at their values in `base`.
#[derive(Debug, Clone)]
pub struct Model {
    pub base: GateSetParams,
    pub layout: ThetaLayout,
    pub mode: ContextMode,
    pub circuits: Vec<Circuit>,
    pub free: Vec<usize>,
    full: Vec<f64>,
}

impl Model {
    pub fn new(base: GateSetParams, layout: ThetaLayout, mode: ContextMode, circuits: Vec<Circuit>) -> Self {
        let full = base.to_theta(layout).values;
        let free = (0..layout.len()).collect();
        Self { base, layout, mode, circuits, free, full }
    }

    /// Restricts the free parameters to the named θ entries.
    pub fn with_free(mut self, names: &[&str]) -> Result<Self> {
        self.free = names
            .iter()
            .map(|n| self.layout.index_of(n).ok_or_else(|| Error::Config(format!("unknown θ entry '{n}'"))))
            .collect::<Result<_>>()?;
        Ok(self)
    }

    pub fn n_params(&self) -> usize {
        self.free.len()
    }

    pub fn free_names(&self) -> Vec<String> {
        let names = self.layout.names();
        self.free.iter().map(|&i| names[i].clone()).collect()
    }

    /// Free-parameter vector of a full θ.
    pub fn project_theta(&self, theta: &Theta) -> Vec<f64> {
        self.free.iter().map(|&i| theta.values[i]).collect()
    }

    pub fn full_theta(&self, x: &[f64]) -> Theta {
        let mut values = self.full.clone();
        for (&i, &v) in self.free.iter().zip(x) {
            values[i] = v;
        }
        Theta { layout: self.layout, values }
    }

    pub fn params(&self, x: &[f64]) -> Result<GateSetParams> {
        self.base.with_theta(&self.full_theta(x))
    }

    pub fn gateset(&self, x: &[f64]) -> Result<GateSet> {
        Ok(GateSet::new(self.params(x)?, self.mode))
    }

    /// Probabilities of every circuit, flattened as `4·circuit + outcome`.
    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        let gs = self.gateset(x)?;
        let mut out = Vec::with_capacity(4 * self.circuits.len());
        for c in &self.circuits {
            out.extend(circuit_probabilities_raw(c, &gs)?);
        }
        Ok(out)
    }

    /// Central-difference Jacobian ∂p/∂x (rows as in [`Model::probabilities`]).
    pub fn jacobian(&self, x: &[f64], step: f64) -> Result<RMat> {
        let cols = (0..x.len())
            .into_par_iter()
            .map(|k| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[k] += step;
                xm[k] -= step;
                let (pp, pm) = (self.probabilities(&xp)?, self.probabilities(&xm)?);
                Ok(pp.iter().zip(&pm).map(|(a, b)| (a - b) / (2.0 * step)).collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?;
        let rows = 4 * self.circuits.len();
        Ok(RMat::from_fn(rows, x.len(), |i, k| cols[k][i]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Cost {
    #[default]
    Ml,
    Ls,
}

impl std::str::FromStr for Cost {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ml" | "mle" => Ok(Cost::Ml),
            "ls" | "wls" => Ok(Cost::Ls),
            other => Err(Error::Config(format!("unknown cost '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub cost: Cost,
    /// Keep every rate (Γ_th, Γ_d, γ₁, ΔΓ) nonnegative.
    pub cp_constraint: bool,
    pub multistart: usize,
    pub multistart_spread: f64,
    pub gradient_tol: f64,
    pub step_tol: f64,
    pub max_iter: usize,
    pub mode: ContextMode,
    pub fd_step: f64,
    pub seed: u64,
    /// Compute standard errors from the Fisher information at θ̂.
    pub std_errors: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            cost: Cost::Ml,
            cp_constraint: false,
            multistart: 1,
            multistart_spread: 1e-3,
            gradient_tol: 1e-10,
            step_tol: 1e-12,
            max_iter: 200,
            mode: ContextMode::ContextDependent,
            fd_step: 1e-6,
            seed: 0,
            std_errors: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.gradient_tol, self.step_tol, self.fd_step, self.multistart_spread];
        if positive.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::Config("fit tolerances and steps must be positive".into()));
        }
        if self.multistart == 0 || self.max_iter == 0 {
            return Err(Error::Config("multistart and max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitStatus {
    GradientTolerance,
    StepTolerance,
    /// No damping level produced a decrease; the iterate is a numerical minimum.
    Stalled,
    MaxIterations,
}

impl FitStatus {
    pub fn converged(self) -> bool {
        self != FitStatus::MaxIterations
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta_hat: Theta,
    pub params: GateSetParams,
    pub mode: ContextMode,
    pub cost: f64,
    pub initial_cost: f64,
    pub status: FitStatus,
    pub iterations: usize,
    /// Minimized objective after each accepted step, starting with the initial
    /// point (for ML: ½Σr² + entropy of the frequencies).
    pub cost_trace: Vec<f64>,
    pub std_errors: Option<Vec<f64>>,
    pub rank_deficient: bool,
}

impl FitResult {
    pub fn gateset(&self) -> GateSet {
        GateSet::new(self.params.clone(), self.mode)
    }

    pub fn recover_gate_at(&self, r: usize) -> SuperOp {
        recover_gate_at(r, &self.params, self.mode)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "theta_hat": self.theta_hat.to_json(),
            "cost": self.cost,
            "initial_cost": self.initial_cost,
            "status": self.status,
            "iterations": self.iterations,
            "std_errors": self.std_errors.as_ref().map(|s| {
                self.theta_hat.names().into_iter().zip(s.iter()).map(|(n, v)| (n, serde_json::json!(v))).collect::<serde_json::Map<_, _>>()
            }),
            "cost_trace": {
                "first": self.cost_trace.first(),
                "last": self.cost_trace.last(),
                "accepted_steps": self.cost_trace.len().saturating_sub(1),
            },
            "mode": self.mode,
        })
    }
}

/// The r-th LS gate of a sequence under fitted parameters. Without context
/// dependence every position carries the same single-gate channel.
pub fn recover_gate_at(r: usize, params: &GateSetParams, mode: ContextMode) -> SuperOp {
    match mode {
        ContextMode::ContextDependent => ls_model::intermediate_superop(r.max(1), &params.ls),
        ContextMode::ContextIndependent => ls_model::ls_gate_superop(&params.ls),
    }
}

/// Γ_th from an estimate of the sequence parameter Γ_th^p = A(p,x)·Γ_th, with
/// the error propagated through the same linear amplification.
pub fn invert_amplification(gamma_p: f64, err_p: f64, p: usize, x: f64) -> Result<(f64, f64)> {
    let a = amplification_factor(p, x);
    if a.abs() < 1e-12 {
        return Err(Error::SensitivityLoss(p));
    }
    Ok((gamma_p / a, err_p / a))
}

/// Ideal gate set with every noise entry of θ raised by `offset`.
pub fn initial_theta(base: &GateSetParams, layout: ThetaLayout, offset: f64) -> Theta {
    let mut ideal = base.clone();
    ideal.ls.gamma_d = 0.0;
    ideal.ls.gamma_th = 0.0;
    ideal.single = Default::default();
    ideal.spam = Default::default();
    let mut t = ideal.to_theta(layout);
    for (v, name) in t.values.iter_mut().zip(layout.names()) {
        if name != "theta_ls" && name != "omega0_tg" {
            *v += offset;
        }
    }
    t
}

fn frequencies(dataset: &Dataset) -> Vec<f64> {
    dataset.records.iter().flat_map(|r| r.frequencies()).collect()
}

/// C_ML = −Σ_γ Σ_μ f log max(p, floor).
pub fn cost_ml_from(p: &[f64], f: &[f64]) -> f64 {
    p.iter().zip(f).filter(|(_, &f)| f > 0.0).map(|(&p, &f)| -f * p.max(PROBABILITY_FLOOR).ln()).sum()
}

/// C_LS = Σ (f − p)²/max(p, floor).
pub fn cost_ls_from(p: &[f64], f: &[f64]) -> f64 {
    p.iter().zip(f).map(|(&p, &f)| (f - p).powi(2) / p.max(PROBABILITY_FLOOR)).sum()
}

pub fn cost_ml(model: &Model, x: &[f64], dataset: &Dataset) -> Result<f64> {
    Ok(cost_ml_from(&model.probabilities(x)?, &frequencies(dataset)))
}

pub fn cost_ls(model: &Model, x: &[f64], dataset: &Dataset) -> Result<f64> {
    Ok(cost_ls_from(&model.probabilities(x)?, &frequencies(dataset)))
}

// 2((1+e)ln(1+e) − e)/e², smooth through e = 0 and equal to 2 at e = −1.
fn deviance_ratio(e: f64) -> f64 {
    if e.abs() < 1e-3 {
        1.0 - e / 3.0 + e * e / 6.0 - e.powi(3) / 10.0 + e.powi(4) / 15.0
    } else if e <= -1.0 {
        2.0
    } else {
        2.0 * ((1.0 + e) * e.ln_1p() - e) / (e * e)
    }
}

/// Residual and its derivative with respect to p.
fn residual(cost: Cost, p: f64, f: f64) -> (f64, f64) {
    let clamped = p < PROBABILITY_FLOOR;
    let p = p.max(PROBABILITY_FLOOR);
    let sp = p.sqrt();
    let (r, dr) = match cost {
        Cost::Ml => {
            let g = deviance_ratio(f / p - 1.0);
            ((f - p) / sp * g.sqrt(), -1.0 / (sp * g.sqrt()))
        }
        Cost::Ls => ((f - p) / sp, -(p + f) / (2.0 * p * sp)),
    };
    (r, if clamped { 0.0 } else { dr })
}

fn residuals(cost: Cost, p: &[f64], f: &[f64]) -> (DVector<f64>, DVector<f64>) {
    let (r, d): (Vec<f64>, Vec<f64>) = p.iter().zip(f).map(|(&p, &f)| residual(cost, p, f)).unzip();
    (DVector::from_vec(r), DVector::from_vec(d))
}

// The objective actually minimized, in cost units: C_LS itself, or
// ½Σr² + entropy(f) which equals C_ML for normalized probabilities.
fn objective(cost: Cost, ss: f64, entropy: f64) -> f64 {
    match cost {
        Cost::Ml => 0.5 * ss + entropy,
        Cost::Ls => ss,
    }
}

fn reported_cost(cost: Cost, p: &[f64], f: &[f64]) -> f64 {
    match cost {
        Cost::Ml => cost_ml_from(p, f),
        Cost::Ls => cost_ls_from(p, f),
    }
}

struct Run {
    x: Vec<f64>,
    cost: f64,
    initial_cost: f64,
    status: FitStatus,
    iterations: usize,
    trace: Vec<f64>,
}

fn project(x: &mut [f64], lower: &[Option<f64>]) {
    for (v, lo) in x.iter_mut().zip(lower) {
        if let Some(lo) = lo {
            *v = v.max(*lo);
        }
    }
}

fn levenberg_marquardt(model: &Model, f: &[f64], x0: Vec<f64>, lower: &[Option<f64>], cfg: &FitConfig) -> Result<Run> {
    let mut x = x0;
    project(&mut x, lower);
    let mut p = model.probabilities(&x)?;
    let (mut r, mut dr) = residuals(cfg.cost, &p, f);
    let mut ss = r.norm_squared();
    if !ss.is_finite() {
        return Err(Error::Numerical("cost is not finite at the initial point".into()));
    }
    let initial_cost = reported_cost(cfg.cost, &p, f);
    let entropy: f64 = f.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
    let mut trace = vec![objective(cfg.cost, ss, entropy)];
    let mut lambda = 1e-3;
    let n = x.len();
    let mut status = FitStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        let jp = model.jacobian(&x, cfg.fd_step)?;
        let mut j = jp;
        for (mut row, d) in j.row_iter_mut().zip(dr.iter()) {
            row *= *d;
        }
        let mut g = j.tr_mul(&r);
        // Bound-active coordinates that the gradient pushes outward are frozen.
        let mut frozen = vec![false; n];
        for k in 0..n {
            if let Some(lo) = lower[k] {
                if x[k] <= lo && g[k] > 0.0 {
                    frozen[k] = true;
                    g[k] = 0.0;
                }
            }
        }
        if g.amax() < cfg.gradient_tol {
            status = FitStatus::GradientTolerance;
            break;
        }
        let mut a = j.tr_mul(&j);
        for k in 0..n {
            if frozen[k] {
                a.row_mut(k).fill(0.0);
                a.column_mut(k).fill(0.0);
                a[(k, k)] = 1.0;
            }
        }
        let diag: Vec<f64> = (0..n).map(|k| a[(k, k)].max(1e-30)).collect();

        let mut accepted = false;
        let mut small_step = false;
        while lambda < 1e16 {
            let mut m = a.clone();
            for k in 0..n {
                m[(k, k)] += lambda * diag[k];
            }
            let Some(chol) = m.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&g));
            let mut xn: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            project(&mut xn, lower);
            let step = xn.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let pn = match model.probabilities(&xn) {
                Ok(pn) => pn,
                Err(_) => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let (rn, drn) = residuals(cfg.cost, &pn, f);
            let ssn = rn.norm_squared();
            if ssn.is_finite() && ssn < ss {
                x = xn;
                p = pn;
                r = rn;
                dr = drn;
                ss = ssn;
                trace.push(objective(cfg.cost, ss, entropy));
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                small_step = step <= cfg.step_tol * (scale + cfg.step_tol);
                break;
            }
            if step <= cfg.step_tol * (scale + cfg.step_tol) {
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            status = FitStatus::Stalled;
            break;
        }
        if small_step {
            status = FitStatus::StepTolerance;
            break;
        }
    }
    let cost = reported_cost(cfg.cost, &p, f);
    Ok(Run { x, cost, initial_cost, status, iterations, trace })
}

/// Fits θ to `dataset`; fields of `base` outside the θ layout (breathing phase,
/// ζ prefactor, and the LS angles unless the layout includes them) are held fixed.
pub fn fit(dataset: &Dataset, base: &GateSetParams, config: &FitConfig, theta0: &Theta) -> Result<FitResult> {
    config.validate()?;
    dataset.validate()?;
    let layout = theta0.layout;
    let model = Model::new(base.with_theta(theta0)?, layout, config.mode, dataset.circuits());
    let f = frequencies(dataset);
    // Rates, and the SPAM error probabilities alongside them, are bounded at zero.
    let names = layout.names();
    let rates = layout.rate_indices();
    let lower: Vec<Option<f64>> = (0..layout.len())
        .map(|k| (config.cp_constraint && (rates.contains(&k) || names[k].starts_with("eps"))).then_some(0.0))
        .collect();

    let mut starts = vec![theta0.values.clone()];
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    for _ in 1..config.multistart {
        starts.push(
            theta0
                .values
                .iter()
                .zip(&names)
                .map(|(&v, n)| if n == "theta_ls" || n == "omega0_tg" { v } else { v + rng.random::<f64>() * config.multistart_spread })
                .collect(),
        );
    }
    let runs: Vec<Result<Run>> = starts.into_par_iter().map(|x0| levenberg_marquardt(&model, &f, x0, &lower, config)).collect();
    let mut best: Option<Run> = None;
    let mut first_err = None;
    for run in runs {
        match run {
            Ok(run) => {
                if best.as_ref().is_none_or(|b| run.cost < b.cost) {
                    best = Some(run);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let Some(best) = best else {
        return Err(first_err.unwrap_or_else(|| Error::Numerical("no fit start succeeded".into())));
    };

    let theta_hat = model.full_theta(&best.x);
    let params = model.params(&best.x)?;
    let (std_errors, rank_deficient) = if config.std_errors {
        let shots: Vec<u64> = dataset.records.iter().map(|r| r.total()).collect();
        let fim = fisher::fisher_from_model(&model, &best.x, &shots, &fisher::DerivativeConfig::fast())?;
        let crb = fisher::crb_bounds(&fim);
        (Some(crb.diagonal), crb.rank_deficient)
    } else {
        (None, false)
    };
    Ok(FitResult {
        theta_hat,
        params,
        mode: config.mode,
        cost: best.cost,
        initial_cost: best.initial_cost,
        status: best.status,
        iterations: best.iterations,
        cost_trace: best.trace,
        std_errors,
        rank_deficient,
    })
}
