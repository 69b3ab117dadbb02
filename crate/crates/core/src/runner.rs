//! Experiment drivers behind the command-line tool: configuration, seeded
//! Monte Carlo over sample-and-fit cycles, and CSV emission.
//!
//! Every repetition draws its dataset from a seed derived from
//! (config seed, command, scheme, depth, repetition) alone, so results do not
//! depend on scheduling and any subset of tasks can be recomputed in isolation.

use std::path::{Path, PathBuf};

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::circuits::{design_last_depth, design_log_spaced, Design, Scheme};
use crate::datagen::{sample, Dataset};
use crate::estimator::{fit, initial_theta, FitConfig, FitResult};
use crate::fisher::{bound_rows_csv, crb_bounds, fisher_design, ramsey_bound_curve, DerivativeConfig};
use crate::gateset::{GateSet, GateSetParams, SingleQubitNoise, SpamModel, ThetaLayout};
use crate::ls_model::{amplification_factor, gamma_th_p, trajectory_centre, trajectory_endpoints, ContextMode};
use crate::metrics::{avg_gate_distance, diamond_distance, GateFilter};
use crate::nonmarkov::{NmCurve, Trajectory};
use crate::spectra::PhysicalConfig;
use crate::{Error, Result};

pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub physical: PhysicalConfig,
    /// Noise of every single-qubit pulse class on both qubits.
    pub single_qubit: SingleQubitNoise,
    pub spam: SpamModel,
    pub schemes: Vec<Scheme>,
    pub depths: Vec<usize>,
    pub samples: u64,
    pub repetitions: usize,
    pub seed: u64,
    pub mode: ContextMode,
    pub out: PathBuf,
    pub fit: FitConfig,
    /// Offset added to every noise entry of the ideal gate set for the first guess.
    pub init_offset: f64,
    pub confidence: f64,
    pub bootstrap_resamples: usize,
    /// Gate times of the amplification curves.
    pub gate_times: Vec<f64>,
    /// Largest depth of the pure-model curves (amplification, trajectory, non-Markovianity).
    pub p_max: usize,
    pub nm_time_step: Option<f64>,
    /// Dataset read by `fit`; defaults to `<out>/dataset.json`.
    pub dataset: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            physical: PhysicalConfig::default(),
            single_qubit: SingleQubitNoise { gamma1: 5e-4, delta1: 1e-3, dgamma: 2e-4, ..Default::default() },
            spam: SpamModel { eps_rho: 5e-3, eps_m0: 5e-3, eps_m1: 1e-2 },
            schemes: vec![Scheme::LogSpaced, Scheme::LastDepth],
            depths: vec![1, 2, 4, 8, 16, 32],
            samples: 10_000,
            repetitions: 100,
            seed: 0,
            mode: ContextMode::ContextDependent,
            out: PathBuf::from("out"),
            fit: FitConfig::default(),
            init_offset: 1e-4,
            confidence: 0.95,
            bootstrap_resamples: 2000,
            gate_times: vec![95e-6, 97e-6],
            p_max: 40,
            nm_time_step: None,
            dataset: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.physical.validate()?;
        self.fit.validate()?;
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.samples == 0 {
            return Err(Error::Config("samples must be positive".into()));
        }
        if self.depths.is_empty() || self.depths.contains(&0) {
            return Err(Error::Config("depths must be a nonempty list of positive integers".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::Config("confidence must lie in (0, 1)".into()));
        }
        if self.gate_times.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::Config("gate times must be positive".into()));
        }
        if self.p_max == 0 {
            return Err(Error::Config("p_max must be at least 1".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON form (after any command-line overrides).
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn truth_params(&self) -> Result<GateSetParams> {
        GateSetParams::from_physical(&self.physical, [[self.single_qubit; 3]; 2], self.spam)
    }

    pub fn design(&self, scheme: Scheme, depth: usize) -> Result<Design> {
        let d = match scheme {
            Scheme::LogSpaced => design_log_spaced(depth)?,
            Scheme::LastDepth => design_last_depth(depth)?,
            other => return Err(Error::Config(format!("scheme {other:?} cannot be scanned over depth"))),
        };
        Ok(d.with_samples(self.samples))
    }

    fn fit_config(&self, mode: ContextMode) -> FitConfig {
        FitConfig { mode, ..self.fit.clone() }
    }
}

/// splitmix64 finalizer folded over the tags.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    tags.iter().fold(mix(seed), |acc, &t| mix(acc ^ mix(t)))
}

fn scheme_tag(s: Scheme) -> u64 {
    match s {
        Scheme::LogSpaced => 1,
        Scheme::LastDepth => 2,
        Scheme::RamseyFi => 3,
        Scheme::Custom => 4,
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Percentile-bootstrap interval for the mean.
pub fn bootstrap_mean_ci(values: &[f64], level: f64, resamples: usize, seed: u64) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples.max(1))
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let q = |p: f64| means[((p * (means.len() - 1) as f64).round() as usize).min(means.len() - 1)];
    let alpha = 0.5 * (1.0 - level);
    (q(alpha), q(1.0 - alpha))
}

/// One sample-and-fit cycle; failures (errors or exhausted iterations) are
/// returned as `None` and counted by the caller.
fn sample_and_fit(design: &Design, truth: &GateSet, base: &GateSetParams, cfg: &FitConfig, offset: f64, seed: u64) -> Result<Option<(Dataset, FitResult)>> {
    let ds = sample(design, truth, seed)?;
    let theta0 = initial_theta(base, ThetaLayout::default(), offset);
    match fit(&ds, base, cfg, &theta0) {
        Ok(r) if r.status.converged() => Ok(Some((ds, r))),
        Ok(_) | Err(Error::Numerical(_)) | Err(Error::Unphysical(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub scheme: Scheme,
    pub depth: usize,
    pub shots: u64,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ok: usize,
    pub failed: usize,
    pub distances: Vec<f64>,
}

pub const SCAN_CSV_HEADER: &str = "scheme,depth,n_shots,mean_distance,ci_low,ci_high,n_ok,n_failed";

pub fn scan_rows_csv(rows: &[ScanRow]) -> String {
    let mut s = format!("{SCAN_CSV_HEADER}\n");
    for r in rows {
        let scheme = serde_json::to_value(r.scheme).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{:.10e},{:.10e},{:.10e},{},{}\n",
            scheme.as_str().unwrap_or("?"),
            r.depth,
            r.shots,
            r.mean,
            r.ci_low,
            r.ci_high,
            r.ok,
            r.failed
        ));
    }
    s
}

/// Average gate diamond distance against depth, for every configured scheme.
pub fn cmd_scan_depth(cfg: &ExperimentConfig) -> Result<Vec<ScanRow>> {
    cfg.validate()?;
    let truth_params = cfg.truth_params()?;
    let truth = GateSet::new(truth_params.clone(), cfg.mode);
    let fit_cfg = cfg.fit_config(cfg.mode);
    let mut rows = Vec::new();
    for &scheme in &cfg.schemes {
        for &depth in &cfg.depths {
            let design = cfg.design(scheme, depth)?;
            let results = (0..cfg.repetitions)
                .into_par_iter()
                .map(|rep| {
                    let seed = derive_seed(cfg.seed, &[1, scheme_tag(scheme), depth as u64, rep as u64]);
                    match sample_and_fit(&design, &truth, &truth_params, &fit_cfg, cfg.init_offset, seed)? {
                        Some((_, r)) => Ok(Some(avg_gate_distance(&r.gateset(), &truth, GateFilter::All)?)),
                        None => Ok(None),
                    }
                })
                .collect::<Result<Vec<Option<f64>>>>()?;
            rows.push(summarize(scheme, depth, design.total_shots(), results, cfg));
        }
    }
    Ok(rows)
}

fn summarize(scheme: Scheme, depth: usize, shots: u64, results: Vec<Option<f64>>, cfg: &ExperimentConfig) -> ScanRow {
    let distances: Vec<f64> = results.iter().flatten().copied().collect();
    let failed = results.len() - distances.len();
    let (ci_low, ci_high) =
        bootstrap_mean_ci(&distances, cfg.confidence, cfg.bootstrap_resamples, derive_seed(cfg.seed, &[99, scheme_tag(scheme), depth as u64]));
    ScanRow {
        scheme,
        depth,
        shots,
        mean: if distances.is_empty() { f64::NAN } else { mean(&distances) },
        ci_low,
        ci_high,
        ok: distances.len(),
        failed,
        distances,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamRow {
    pub p: usize,
    pub amplification: f64,
    /// A(p, x) below 5% of its maximum over the scanned depths.
    pub near_closure: bool,
    pub rmse_gamma_th: f64,
    pub se_gamma_th: f64,
    pub rmse_gamma_d: f64,
    pub se_gamma_d: f64,
    pub crb_gamma_th: f64,
    pub crb_gamma_d: f64,
    pub spectrum_gamma_th: f64,
    pub spectrum_gamma_d: f64,
    pub ok: usize,
    pub failed: usize,
}

pub const PARAM_CSV_HEADER: &str = "p,amplification,near_closure,rmse_gamma_th,se_gamma_th,rmse_gamma_d,se_gamma_d,crb_gamma_th,crb_gamma_d,spectrum_gamma_th,spectrum_gamma_d,n_ok,n_failed";

pub fn param_rows_csv(rows: &[ParamRow]) -> String {
    let mut s = format!("{PARAM_CSV_HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:.10e},{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{},{}\n",
            r.p,
            r.amplification,
            r.near_closure,
            r.rmse_gamma_th,
            r.se_gamma_th,
            r.rmse_gamma_d,
            r.se_gamma_d,
            r.crb_gamma_th,
            r.crb_gamma_d,
            r.spectrum_gamma_th,
            r.spectrum_gamma_d,
            r.ok,
            r.failed
        ));
    }
    s
}

/// Root-mean-square error about `truth` and its standard error,
/// se ≈ sd(e²)/(2·rmse·√n).
pub fn rmse_with_se(values: &[f64], truth: f64) -> (f64, f64) {
    let sq: Vec<f64> = values.iter().map(|v| (v - truth).powi(2)).collect();
    let n = sq.len() as f64;
    let m = mean(&sq);
    let var = sq.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let rmse = m.sqrt();
    (rmse, var.sqrt() / (2.0 * rmse * n.sqrt()))
}

/// Monte Carlo errors of Γ̂_th and Γ̂_d against depth (last-depth design),
/// with the Cramér–Rao bounds of the same design.
pub fn cmd_param_scaling(cfg: &ExperimentConfig) -> Result<Vec<ParamRow>> {
    cfg.validate()?;
    let truth_params = cfg.truth_params()?;
    let truth = GateSet::new(truth_params.clone(), cfg.mode);
    let fit_cfg = cfg.fit_config(cfg.mode);
    let a_max = cfg.depths.iter().map(|&p| amplification_factor(p, truth_params.ls.x)).fold(0.0, f64::max);
    let mut rows = Vec::new();
    for &p in &cfg.depths {
        let design = cfg.design(Scheme::LastDepth, p)?;
        let fits = (0..cfg.repetitions)
            .into_par_iter()
            .map(|rep| {
                let seed = derive_seed(cfg.seed, &[2, p as u64, rep as u64]);
                Ok(sample_and_fit(&design, &truth, &truth_params, &fit_cfg, cfg.init_offset, seed)?.map(|(_, r)| (r.params.ls.gamma_th, r.params.ls.gamma_d)))
            })
            .collect::<Result<Vec<_>>>()?;
        let ok: Vec<(f64, f64)> = fits.iter().flatten().copied().collect();
        let th: Vec<f64> = ok.iter().map(|v| v.0).collect();
        let d: Vec<f64> = ok.iter().map(|v| v.1).collect();
        let (rmse_th, se_th) = rmse_with_se(&th, truth_params.ls.gamma_th);
        let (rmse_d, se_d) = rmse_with_se(&d, truth_params.ls.gamma_d);
        let fim = fisher_design(&design, &truth_params, ThetaLayout::default(), cfg.mode, &DerivativeConfig::fast())?;
        let crb = crb_bounds(&fim);
        let amp = amplification_factor(p, truth_params.ls.x);
        rows.push(ParamRow {
            p,
            amplification: amp,
            near_closure: amp < 0.05 * a_max,
            rmse_gamma_th: rmse_th,
            se_gamma_th: se_th,
            rmse_gamma_d: rmse_d,
            se_gamma_d: se_d,
            crb_gamma_th: crb.diagonal_for("gamma_th").unwrap_or(f64::NAN),
            crb_gamma_d: crb.diagonal_for("gamma_d").unwrap_or(f64::NAN),
            spectrum_gamma_th: crb.eigen_bound_for("gamma_th").unwrap_or(f64::INFINITY),
            spectrum_gamma_d: crb.eigen_bound_for("gamma_d").unwrap_or(f64::INFINITY),
            ok: ok.len(),
            failed: fits.len() - ok.len(),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub p: usize,
    pub amplification: f64,
    pub dependent: ScanRow,
    pub independent: ScanRow,
    pub gamma_th_err_dependent: f64,
    pub gamma_th_err_independent: f64,
}

pub const COMPARE_CSV_HEADER: &str = "p,amplification,d_dependent,d_dependent_ci_low,d_dependent_ci_high,d_independent,d_independent_ci_low,d_independent_ci_high,gamma_th_rmse_dependent,gamma_th_rmse_independent,n_ok_dependent,n_ok_independent";

pub fn compare_rows_csv(rows: &[CompareRow]) -> String {
    let mut s = format!("{COMPARE_CSV_HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{},{}\n",
            r.p,
            r.amplification,
            r.dependent.mean,
            r.dependent.ci_low,
            r.dependent.ci_high,
            r.independent.mean,
            r.independent.ci_low,
            r.independent.ci_high,
            r.gamma_th_err_dependent,
            r.gamma_th_err_independent,
            r.dependent.ok,
            r.independent.ok
        ));
    }
    s
}

/// Context-dependent data fitted by both models on identical datasets; the
/// distance is that of the first LS gate of the sequence.
pub fn cmd_context_compare(cfg: &ExperimentConfig) -> Result<Vec<CompareRow>> {
    cfg.validate()?;
    let truth_params = cfg.truth_params()?;
    let truth = GateSet::new(truth_params.clone(), ContextMode::ContextDependent);
    let first_gate = crate::estimator::recover_gate_at(1, &truth_params, ContextMode::ContextDependent);
    let modes = [ContextMode::ContextDependent, ContextMode::ContextIndependent];
    let mut rows = Vec::new();
    for &p in &cfg.depths {
        let design = cfg.design(Scheme::LastDepth, p)?;
        let per_rep = (0..cfg.repetitions)
            .into_par_iter()
            .map(|rep| {
                let seed = derive_seed(cfg.seed, &[3, p as u64, rep as u64]);
                let ds = sample(&design, &truth, seed)?;
                let theta0 = initial_theta(&truth_params, ThetaLayout::default(), cfg.init_offset);
                let mut out = [None, None];
                for (k, &mode) in modes.iter().enumerate() {
                    match fit(&ds, &truth_params, &cfg.fit_config(mode), &theta0) {
                        Ok(r) if r.status.converged() => {
                            let d = diamond_distance(&r.recover_gate_at(1), &first_gate)?;
                            out[k] = Some((d, r.params.ls.gamma_th));
                        }
                        Ok(_) | Err(Error::Numerical(_)) | Err(Error::Unphysical(_)) => {}
                        Err(e) => return Err(e),
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        let column = |k: usize| -> (ScanRow, f64) {
            let dist: Vec<Option<f64>> = per_rep.iter().map(|o| o[k].map(|v| v.0)).collect();
            let th: Vec<f64> = per_rep.iter().filter_map(|o| o[k].map(|v| v.1)).collect();
            let row = summarize(Scheme::LastDepth, p * 2 + k, design.total_shots(), dist, cfg);
            (ScanRow { depth: p, ..row }, rmse_with_se(&th, truth_params.ls.gamma_th).0)
        };
        let (dependent, th_d) = column(0);
        let (independent, th_i) = column(1);
        rows.push(CompareRow {
            p,
            amplification: amplification_factor(p, truth_params.ls.x),
            dependent,
            independent,
            gamma_th_err_dependent: th_d,
            gamma_th_err_independent: th_i,
        });
    }
    Ok(rows)
}

pub const AMPLIFICATION_CSV_HEADER: &str = "gate_time,p,x,amplification,gamma_th,gamma_th_p";

/// A(p, x) and Γ_th^p for each configured gate time.
pub fn cmd_amplification(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    let mut s = format!("{AMPLIFICATION_CSV_HEADER}\n");
    for &tg in &cfg.gate_times {
        let phys = PhysicalConfig { gate_time: tg, ..cfg.physical.clone() };
        let ls = phys.derive()?.params;
        for p in 1..=cfg.p_max {
            s.push_str(&format!("{tg:e},{p},{:.12e},{:.12e},{:.12e},{:.12e}\n", ls.x, amplification_factor(p, ls.x), ls.gamma_th, gamma_th_p(&ls, p)));
        }
    }
    Ok(s)
}

pub const TRAJECTORY_CSV_HEADER: &str = "p,re,im,centre_re,centre_im,radius,closed";

/// Breathing-mode displacement of ion 1 after each whole gate; the points lie
/// on a circle and return to the origin when p·x ≡ 0 (mod 2π).
pub fn cmd_trajectory(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    let derived = cfg.physical.derive()?;
    let (x, phi) = (derived.params.x, derived.phi_breathing);
    let centre = trajectory_centre(x, phi);
    let radius = centre.norm();
    let mut s = format!("{TRAJECTORY_CSV_HEADER}\n");
    for (k, z) in trajectory_endpoints(cfg.p_max, x, phi).into_iter().enumerate() {
        let closed = z.norm() <= 1e-6 * radius.max(phi.norm());
        s.push_str(&format!("{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}\n", k + 1, z.re, z.im, centre.re, centre.im, radius, closed));
    }
    Ok(s)
}

pub fn cmd_nonmarkov(cfg: &ExperimentConfig) -> Result<NmCurve> {
    cfg.validate()?;
    let (traj, base) = Trajectory::from_physical(&cfg.physical)?;
    NmCurve::compute(cfg.p_max, &base, &traj, cfg.nm_time_step)
}

/// Draws one dataset for the first configured scheme at the largest depth.
pub fn cmd_sample(cfg: &ExperimentConfig) -> Result<Dataset> {
    cfg.validate()?;
    let scheme = *cfg.schemes.first().ok_or_else(|| Error::Config("no scheme configured".into()))?;
    let depth = *cfg.depths.iter().max().expect("validated nonempty");
    let params = cfg.truth_params()?;
    let mut ds = sample(&cfg.design(scheme, depth)?, &GateSet::new(params.clone(), cfg.mode), cfg.seed)?;
    ds.theta = Some(params.to_theta(ThetaLayout::default()).to_json());
    Ok(ds)
}

pub fn cmd_fit(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<FitResult> {
    cfg.validate()?;
    let base = cfg.truth_params()?;
    let theta0 = initial_theta(&base, ThetaLayout::default(), cfg.init_offset);
    fit(dataset, &base, &FitConfig { std_errors: true, ..cfg.fit_config(cfg.mode) }, &theta0)
}

/// Ramsey-design bound curves over 1..=p_max.
pub fn cmd_fisher(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    let params = cfg.truth_params()?;
    let depths: Vec<usize> = (1..=cfg.p_max).collect();
    Ok(bound_rows_csv(&ramsey_bound_curve(&params, &depths, cfg.samples)?))
}

/// Writes `<out>/<name>.csv` with the provenance header and returns the path.
pub fn write_csv(cfg: &ExperimentConfig, name: &str, body: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join(format!("{name}.csv"));
    let text = format!("# command={name} schema_version={CSV_SCHEMA_VERSION} config_sha256={} seed={}\n{body}", cfg.hash(), cfg.seed);
    std::fs::write(&path, text)?;
    Ok(path)
}

pub fn write_json(cfg: &ExperimentConfig, name: &str, value: &serde_json::Value) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join(format!("{name}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(value)?)?;
    Ok(path)
}
