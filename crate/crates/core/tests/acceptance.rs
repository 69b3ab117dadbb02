// Acceptance suite: one test per criterion. Each prints a single PASS/FAIL
// line straight to stdout (bypassing the test harness capture) so the lines
// show up in a plain `cargo test` log, then asserts.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use ctxgst::circuits::{base_circuits, design_default12, design_last_depth, Scheme};
use ctxgst::datagen::{exact_counts, sample};
use ctxgst::estimator::{fit, initial_theta, FitConfig};
use ctxgst::fisher::{crb_bounds, fisher_design, fisher_per_circuit, DerivativeConfig};
use ctxgst::gateset::{GateSet, ThetaLayout};
use ctxgst::ls_model::{
    amplification_factor, intermediate_superop, kraus_set, ls_gate_superop, noise_diagonal, noise_superop, sequence_superop,
    zeta_phase, ContextMode, LsParams, SequenceParams,
};
use ctxgst::metrics::{diamond_distance, diamond_lower_bound};
use ctxgst::nonmarkov::{default_time_step, n_cp_continuous, n_cp_discrete, Trajectory};
use ctxgst::qchan::{c, kraus_to_superop, max_abs, pauli, unitary_superop, SuperOp};
use ctxgst::runner::{cmd_context_compare, cmd_param_scaling, cmd_scan_depth, ExperimentConfig, ParamRow};
use ctxgst::spectra::{gamma_d_closed, gamma_d_quadrature, gamma_th_closed, gamma_th_from_qpsd, OuProcess, PhysicalConfig};
use ctxgst::{CMat, RMat};
use nalgebra::{DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

fn report(id: u32, pass: bool, detail: &str) {
    let line = format!("criterion {id}: {} — {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
}

/// Least-squares slope of ln y against ln x.
fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

// ---------------------------------------------------------------------------
// 1. Structural identities
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_structural_identities() {
    let start = Instant::now();
    let mut failures: Vec<String> = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };

    let rates = [0.0, 1e-6, 3e-4, 2.2e-3, 0.05, 0.4, 2.0];
    let mut kraus_ok = true;
    let mut equiv_ok = true;
    for &gd in &rates {
        for &gth in &rates {
            let k = kraus_set(gd, gth).unwrap();
            kraus_ok &= k.completeness_error() <= 1e-12;
            equiv_ok &= max_abs(&(kraus_to_superop(&k).unwrap().matrix() - noise_superop(gd, gth).matrix())) <= 1e-12;
        }
    }
    check("Kraus completeness", kraus_ok);
    check("Kraus/superoperator equivalence", equiv_ok);

    // Dephasing patterns from the population tables of (Z₁+Z₂)/2 and (Z₁−Z₂)/2
    // over |00⟩,|01⟩,|10⟩,|11⟩.
    let collective = [1.0, 0.0, 0.0, -1.0];
    let anti = [0.0, 1.0, -1.0, 0.0];
    let mut pattern_ok = true;
    for &g in &[1e-3, 0.37] {
        let dd = noise_diagonal(g, 0.0);
        let dt = noise_diagonal(0.0, g);
        for sigma in 0..4 {
            for gamma in 0..4 {
                let k = sigma + 4 * gamma;
                let wd: f64 = (collective[sigma] - collective[gamma]) * (collective[sigma] - collective[gamma]);
                let wt: f64 = (anti[sigma] - anti[gamma]) * (anti[sigma] - anti[gamma]);
                pattern_ok &= dd[k] == (-g * wd).exp() && dt[k] == (-g * wt).exp();
            }
        }
    }
    check("diagonal dephasing patterns", pattern_ok);

    let base = LsParams { gamma_d: 2.2e-3, gamma_th: 6.6e-4, theta_ls: PI / 4.0, omega0_t: 0.3, x: 2.9, zeta_prefactor: 0.04 };
    let ptm = ls_gate_superop(&base).to_ptm();
    let row_ok = (0..16).all(|j| ptm[(0, j)] == if j == 0 { 1.0 } else { 0.0 });
    check("trace-preserving PTM row", row_ok);

    let mut seq_err: f64 = 0.0;
    for x in [0.05, 1.3, 2.9, 4.0] {
        let b = LsParams { x, ..base };
        let mut prod = SuperOp::identity(4);
        for p in 1..=64 {
            prod = intermediate_superop(p, &b).after(&prod);
            let seq = sequence_superop(&b, SequenceParams { p }, ContextMode::ContextDependent);
            seq_err = seq_err.max(max_abs(&(seq.matrix() - prod.matrix())));
        }
    }
    check("sequence = product of intermediates", seq_err <= 1e-10);

    let mut trig_err: f64 = 0.0;
    let mut sum_err: f64 = 0.0;
    let mut zeta_ok = true;
    for x in [0.01, 0.3, 1.0, 2.0, 2.9, 3.5, 5.0, 6.2] {
        for p in 1..=64usize {
            let a = amplification_factor(p, x);
            // 1 − cos(px) over 1 − cos x
            let trig = (1.0 - (p as f64 * x).cos()) / (1.0 - x.cos());
            trig_err = trig_err.max((a - trig).abs() / trig.max(1.0));
            let s: num_complex::Complex64 = (0..p).map(|l| num_complex::Complex64::from_polar(1.0, l as f64 * x)).sum();
            sum_err = sum_err.max((s.norm_sqr() - a).abs() / a.max(1.0));
        }
        zeta_ok &= zeta_phase(1, x, 0.7) == 0.0;
    }
    check("A(p,x) trigonometric identity", trig_err <= 1e-12);
    check("|Σ e^{ilx}|² = A", sum_err <= 1e-10);
    check("ζ¹ = 0", zeta_ok);

    let mut params = ctxgst::gateset::GateSetParams::ideal(2.9, 0.04);
    params.ls.gamma_d = 2e-3;
    params.ls.gamma_th = 5e-4;
    let mut hess_max: f64 = 0.0;
    for circ in base_circuits(2) {
        let f = fisher_per_circuit(&circ, &params, ThetaLayout::default(), ContextMode::ContextDependent, 10_000, &DerivativeConfig::default())
            .unwrap();
        hess_max = hess_max.max(f.hessian_sum_max.unwrap());
    }
    check("Σ_μ Hessian = 0", hess_max <= 1e-8);

    let mut gd_err: f64 = 0.0;
    for (cc, tau) in [(2e7, 5e-4), (2e9, 5e-4), (1e8, 1e-4)] {
        let ou = OuProcess::new(cc, tau).unwrap();
        for t in [1e-5, 9.7e-5, 1e-3] {
            let q = gamma_d_quadrature(&ou, t, 1e-10).unwrap();
            gd_err = gd_err.max((q / gamma_d_closed(&ou, t) - 1.0).abs());
        }
    }
    check("Γ_d closed form vs quadrature", gd_err <= 1e-6);

    let mut th_err: f64 = 0.0;
    for tg in [95e-6, 96e-6, 97e-6] {
        let cfg = PhysicalConfig { gate_time: tg, ..Default::default() };
        let drive = cfg.drive().unwrap();
        let modes = cfg.modes();
        let closed: f64 = modes.iter().map(|m| gamma_th_closed(m, &drive).unwrap()).sum();
        let qpsd = gamma_th_from_qpsd(&modes, &drive).unwrap();
        th_err = th_err.max((closed - qpsd).abs() / closed);
    }
    check("Γ_th two routes", th_err <= 1e-12);

    let secs = start.elapsed().as_secs_f64();
    check("fast suite under 1 min", secs < 60.0);
    let pass = failures.is_empty();
    report(
        1,
        pass,
        &format!(
            "seq err {seq_err:.1e}, trig {trig_err:.1e}, |Σ|² {sum_err:.1e}, Hessian sum {hess_max:.1e}, Γ_d rel {gd_err:.1e}, Γ_th rel {th_err:.1e}, {secs:.1}s{}",
            if pass { String::new() } else { format!("; failed: {failures:?}") }
        ),
    );
    assert!(pass, "{failures:?}");
}

// ---------------------------------------------------------------------------
// 2. Diamond-norm oracle
// ---------------------------------------------------------------------------

fn zrot(angle: f64) -> SuperOp {
    let u = CMat::from_diagonal(&DVector::from_vec(vec![
        num_complex::Complex64::from_polar(1.0, -angle / 2.0),
        num_complex::Complex64::from_polar(1.0, angle / 2.0),
    ]));
    unitary_superop(&u).unwrap()
}

fn pauli_channel(q: [f64; 4]) -> SuperOp {
    let mut m = CMat::zeros(4, 4);
    for (k, &w) in q.iter().enumerate() {
        m += unitary_superop(&pauli(k)).unwrap().matrix() * c(w, 0.0);
    }
    SuperOp::from_matrix(m).unwrap()
}

fn random_qubit_channel(rng: &mut ChaCha20Rng) -> SuperOp {
    // Random mixture of random unitaries.
    let mut m = CMat::zeros(4, 4);
    let weights: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
    let total: f64 = weights.iter().sum();
    for w in weights {
        let (a, b, g) = (rng.random::<f64>() * 6.0, rng.random::<f64>() * 3.0, rng.random::<f64>() * 6.0);
        let u = CMat::from_row_slice(
            2,
            2,
            &[
                num_complex::Complex64::from_polar((b / 2.0).cos(), -(a + g) / 2.0),
                -num_complex::Complex64::from_polar((b / 2.0).sin(), -(a - g) / 2.0),
                num_complex::Complex64::from_polar((b / 2.0).sin(), (a - g) / 2.0),
                num_complex::Complex64::from_polar((b / 2.0).cos(), (a + g) / 2.0),
            ],
        );
        m += unitary_superop(&u).unwrap().matrix() * c(w / total, 0.0);
    }
    SuperOp::from_matrix(m).unwrap()
}

#[test]
fn criterion_2_diamond_oracle() {
    let mut z_err: f64 = 0.0;
    for delta in [0.01, 0.1, 0.5, 1.0] {
        let want = 2.0 * (delta / 2.0f64).sin().abs();
        z_err = z_err.max((diamond_distance(&zrot(delta), &zrot(0.0)).unwrap() - want).abs());
    }

    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let mut pauli_err: f64 = 0.0;
    let mut brute_err: f64 = 0.0;
    for _ in 0..5 {
        let mut draw = || {
            let mut v = [0.0; 4];
            v.iter_mut().for_each(|x| *x = rng.random::<f64>());
            let s: f64 = v.iter().sum();
            v.map(|x| x / s)
        };
        let (p, q) = (draw(), draw());
        let l1: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
        let (a, b) = (pauli_channel(p), pauli_channel(q));
        pauli_err = pauli_err.max((diamond_distance(&a, &b).unwrap() - l1).abs());
        brute_err = brute_err.max((diamond_lower_bound(&a, &b, 64, 5).unwrap() - l1).abs());
    }

    let mut axiom_err: f64 = 0.0;
    for _ in 0..6 {
        let (a, b, cc) = (random_qubit_channel(&mut rng), random_qubit_channel(&mut rng), random_qubit_channel(&mut rng));
        let ab = diamond_distance(&a, &b).unwrap();
        let ba = diamond_distance(&b, &a).unwrap();
        let bc = diamond_distance(&b, &cc).unwrap();
        let ac = diamond_distance(&a, &cc).unwrap();
        let aa = diamond_distance(&a, &a).unwrap();
        axiom_err = axiom_err.max((ab - ba).abs()).max(aa.abs()).max(ac - ab - bc).max(-ab);
    }

    let pass = z_err <= 1e-6 && pauli_err <= 1e-4 && brute_err <= 1e-4 && axiom_err <= 1e-6;
    report(
        2,
        pass,
        &format!("Z-rotation err {z_err:.1e}, Pauli ℓ₁ err {pauli_err:.1e} (restart bound {brute_err:.1e}), axiom slack {axiom_err:.1e}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 3. and 6. Long-sequence 1/p scaling and sampling cost
// ---------------------------------------------------------------------------

fn scaling_config() -> ExperimentConfig {
    // c = 2e9 s⁻³, τ_c = 5e-4 s, n̄_b = 5, 1e4 samples, 100 repetitions (all defaults).
    ExperimentConfig {
        mode: ContextMode::ContextIndependent,
        schemes: vec![Scheme::LogSpaced, Scheme::LastDepth],
        depths: vec![1, 2, 4, 8, 16, 32],
        ..Default::default()
    }
}

/// Leading run of depths over which the mean keeps dropping by at least 20%
/// per doubling; beyond it the curve is treated as saturated.
fn pre_saturation(means: &[f64]) -> usize {
    let mut n = 1;
    while n < means.len() && means[n] < 0.8 * means[n - 1] {
        n += 1;
    }
    n
}

#[test]
fn criterion_3_one_over_p_scaling() {
    let cfg = scaling_config();
    let start = Instant::now();
    let rows = cmd_scan_depth(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let log: Vec<_> = rows.iter().filter(|r| r.scheme == Scheme::LogSpaced).collect();
    let last: Vec<_> = rows.iter().filter(|r| r.scheme == Scheme::LastDepth).collect();
    let window = pre_saturation(&log.iter().map(|r| r.mean).collect::<Vec<_>>())
        .min(pre_saturation(&last.iter().map(|r| r.mean).collect::<Vec<_>>()));
    let depths: Vec<f64> = log[..window].iter().map(|r| r.depth as f64).collect();
    let slope_log = loglog_slope(&depths, &log[..window].iter().map(|r| r.mean).collect::<Vec<_>>());
    let slope_last = loglog_slope(&depths, &last[..window].iter().map(|r| r.mean).collect::<Vec<_>>());
    let ratios: Vec<f64> = (0..window).map(|k| last[k].mean / log[k].mean).collect();
    let failed: usize = rows.iter().map(|r| r.failed).sum();
    let total: usize = rows.iter().map(|r| r.ok + r.failed).sum();
    let pass = window >= 3
        && (-1.25..=-0.75).contains(&slope_log)
        && (-1.25..=-0.75).contains(&slope_last)
        && ratios.iter().all(|&r| (0.5..=2.0).contains(&r))
        && (failed as f64) < 0.05 * total as f64;
    report(
        3,
        pass,
        &format!(
            "window p ≤ {}, slopes log-spaced {slope_log:.3} / last-depth {slope_last:.3}, last/log ratios {:?}, failures {failed}/{total}, {secs:.0}s",
            depths.last().unwrap(),
            ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_sampling_cost() {
    let cfg = ExperimentConfig { schemes: vec![Scheme::LastDepth], ..scaling_config() };
    let rows = cmd_scan_depth(&cfg).unwrap();
    // Cheapest 12-circuit design whose mean average distance reaches 1e-3.
    let hit = rows.iter().filter(|r| r.mean <= 1e-3).min_by_key(|r| r.shots);
    let failed: usize = rows.iter().map(|r| r.failed).sum();
    let pass = hit.is_some_and(|r| r.shots as f64 <= 1.5e6) && (failed as f64) < 0.05 * (rows.len() * cfg.repetitions) as f64;
    let detail = match hit {
        Some(r) => format!("12 circuits at p = {} reach mean d⋄ {:.3e} with {} shots (limit 1.5e6)", r.depth, r.mean, r.shots),
        None => format!("no scanned depth reaches 1e-3; best {:.3e}", rows.iter().map(|r| r.mean).fold(f64::INFINITY, f64::min)),
    };
    report(6, pass, &detail);
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 4. Thermal 1/p² scaling, closure divergence and Fisher bounds
// ---------------------------------------------------------------------------

fn thermal_config(gate_time: f64, depths: Vec<usize>) -> ExperimentConfig {
    ExperimentConfig { physical: PhysicalConfig { ou_c: 2e7, gate_time, ..Default::default() }, depths, ..Default::default() }
}

#[test]
fn criterion_4_thermal_scaling() {
    // Monotone amplification at t_g = 97 µs.
    let cfg = thermal_config(97e-6, vec![1, 2, 4, 8, 16, 32]);
    let ls = cfg.physical.derive().unwrap().params;
    let rows = cmd_param_scaling(&cfg).unwrap();
    // Short-to-intermediate depths: the amplified thermal exponent Γ_th^p stays
    // below 0.2, where the coherences have not yet saturated.
    let short: Vec<&ParamRow> = rows.iter().filter(|r| r.amplification * ls.gamma_th <= 0.2).collect();
    let ps: Vec<f64> = short.iter().map(|r| r.p as f64).collect();
    let slope_th = loglog_slope(&ps, &short.iter().map(|r| r.rmse_gamma_th).collect::<Vec<_>>());
    let slope_d = loglog_slope(&ps, &short.iter().map(|r| r.rmse_gamma_d).collect::<Vec<_>>());

    // Fisher-spectrum bounds at the two largest depths.
    let mut bound_ok = true;
    let mut bound_notes = Vec::new();
    for r in rows.iter().rev().take(2) {
        let th = r.spectrum_gamma_th <= r.rmse_gamma_th + 3.0 * r.se_gamma_th;
        let d = r.spectrum_gamma_d <= r.rmse_gamma_d + 3.0 * r.se_gamma_d;
        bound_ok &= th && d;
        bound_notes.push(format!(
            "p={}: Γ_th {:.2e}≤{:.2e}±{:.1e}, Γ_d {:.2e}≤{:.2e}±{:.1e}",
            r.p, r.spectrum_gamma_th, r.rmse_gamma_th, r.se_gamma_th, r.spectrum_gamma_d, r.rmse_gamma_d, r.se_gamma_d
        ));
    }

    // Closures at t_g = 95 µs.
    let scan: Vec<usize> = (10..=14).chain(23..=27).chain(36..=40).collect();
    let cfg95 = thermal_config(95e-6, scan.clone());
    let x95 = cfg95.physical.derive().unwrap().params.x;
    let a_max = (1..=40).map(|p| amplification_factor(p, x95)).fold(0.0, f64::max);
    let rows95 = cmd_param_scaling(&cfg95).unwrap();
    let flagged = |p: usize| amplification_factor(p, x95) < 0.05 * a_max;
    let mut div_ratios = Vec::new();
    for (k, r) in rows95.iter().enumerate() {
        if !flagged(r.p) {
            continue;
        }
        let below = rows95[..k].iter().rev().find(|q| !flagged(q.p));
        let above = rows95[k + 1..].iter().find(|q| !flagged(q.p));
        let neigh: Vec<f64> = below.into_iter().chain(above).map(|q| q.rmse_gamma_th).collect();
        let baseline = neigh.iter().sum::<f64>() / neigh.len() as f64;
        div_ratios.push((r.p, r.rmse_gamma_th / baseline));
    }
    let diverges = !div_ratios.is_empty() && div_ratios.iter().all(|&(_, q)| q >= 10.0);

    let failed: usize = rows.iter().chain(&rows95).map(|r| r.failed).sum();
    let total: usize = rows.iter().chain(&rows95).map(|r| r.ok + r.failed).sum();
    let pass = short.len() >= 3
        && (-2.4..=-1.6).contains(&slope_th)
        && (-1.25..=-0.75).contains(&slope_d)
        && diverges
        && bound_ok
        && (failed as f64) < 0.05 * total as f64;
    report(
        4,
        pass,
        &format!(
            "97µs window p ≤ {}: Γ_th slope {slope_th:.3}, Γ_d slope {slope_d:.3}; 95µs divergence {:?}; bounds [{}]; failures {failed}/{total}",
            ps.last().unwrap(),
            div_ratios.iter().map(|(p, q)| format!("p={p}: {q:.0}×")).collect::<Vec<_>>(),
            bound_notes.join("; ")
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 5. Context-dependent versus context-independent fits
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_context_comparison() {
    let cfg = thermal_config(97e-6, vec![1, 2, 4, 8, 16, 32]);
    let x = cfg.physical.derive().unwrap().params.x;
    let rows = cmd_context_compare(&cfg).unwrap();
    let worst = rows
        .iter()
        .max_by(|a, b| (a.amplification - a.p as f64).abs().total_cmp(&(b.amplification - b.p as f64).abs()))
        .unwrap();
    let first = rows.iter().find(|r| r.p == 1).unwrap();
    let ratio = worst.independent.mean / worst.dependent.mean;
    let overlap = first.dependent.ci_low <= first.independent.ci_high && first.independent.ci_low <= first.dependent.ci_high;
    let failed: usize = rows.iter().map(|r| r.dependent.failed + r.independent.failed).sum();
    let total = 2 * cfg.repetitions * rows.len();
    let pass = ratio >= 3.0 && overlap && (failed as f64) < 0.05 * total as f64;
    report(
        5,
        pass,
        &format!(
            "at p = {} (A = {:.1}, x mod 2π = {:.4}) independent/dependent LS distance = {:.3e}/{:.3e} = {ratio:.1}×; p = 1 CIs [{:.2e}, {:.2e}] vs [{:.2e}, {:.2e}]; failures {failed}/{total}",
            worst.p,
            worst.amplification,
            x.rem_euclid(2.0 * PI),
            worst.independent.mean,
            worst.dependent.mean,
            first.dependent.ci_low,
            first.dependent.ci_high,
            first.independent.ci_low,
            first.independent.ci_high
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 7. Non-Markovianity
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_non_markovianity() {
    let cfg = PhysicalConfig { ou_c: 2e7, gate_time: 95e-6, ..Default::default() };
    let (traj, base) = Trajectory::from_physical(&cfg).unwrap();
    let p_max = 40;
    let discrete = n_cp_discrete(p_max, &base);

    // Whether each intermediate gate is CP, from the full 16×16 Choi matrix.
    let mut step_ok = true;
    let mut non_cp = 0;
    for k in 1..=p_max {
        let cp = intermediate_superop(k, &base).min_choi_eigenvalue() >= -1e-12;
        let prev = if k == 1 { 0.0 } else { discrete[k - 2] };
        if cp {
            step_ok &= discrete[k - 1] == prev;
        } else {
            non_cp += 1;
            step_ok &= discrete[k - 1] > prev;
        }
    }

    let dt = default_time_step(&traj);
    let cont = n_cp_continuous(p_max, &base, &traj, dt).unwrap();
    let half = n_cp_continuous(p_max, &base, &traj, dt / 2.0).unwrap();
    let monotone = cont.windows(2).all(|w| w[1] >= w[0]);
    let dominates = cont.iter().zip(&discrete).all(|(c, d)| *c >= *d);
    let change = cont
        .iter()
        .zip(&half)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| (a - b).abs() / a)
        .fold(0.0, f64::max);
    let pass = step_ok && non_cp > 0 && monotone && dominates && change < 0.01;
    report(
        7,
        pass,
        &format!(
            "{non_cp} non-CP intermediate gates of {p_max}; N_CP^d(40) = {:.3e}, N_CP(40) = {:.3e}; Δt halving changes N_CP by {:.2e} (relative)",
            discrete[p_max - 1],
            cont[p_max - 1],
            change
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 8. Estimator consistency
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_estimator_consistency() {
    let cfg = ExperimentConfig::default();
    let truth = cfg.truth_params().unwrap();
    let layout = ThetaLayout::default();
    let names = layout.names();
    let theta_true = truth.to_theta(layout);
    let mode = ContextMode::ContextDependent;
    let gs = GateSet::new(truth.clone(), mode);
    let fit_cfg = FitConfig { mode, ..Default::default() };
    let theta0 = initial_theta(&truth, layout, 1e-4);

    // Exact frequencies.
    let design = design_default12().with_samples(10_000);
    let exact = exact_counts(&design, &gs, 1_000_000_000).unwrap();
    let r = fit(&exact, &truth, &fit_cfg, &theta0).unwrap();
    let exact_err = names.iter().map(|n| (r.theta_hat.get(n).unwrap() - theta_true.get(n).unwrap()).abs()).fold(0.0, f64::max);

    // Empirical covariance over 100 seeds against the inverse Fisher matrix.
    let design = design_last_depth(8).unwrap().with_samples(10_000);
    let n_seeds = 100;
    let samples: Vec<Vec<f64>> = (0..n_seeds as u64)
        .map(|s| {
            let ds = sample(&design, &gs, 7_000 + s).unwrap();
            let r = fit(&ds, &truth, &fit_cfg, &theta0).unwrap();
            names.iter().map(|n| r.theta_hat.get(n).unwrap()).collect()
        })
        .collect();
    let k = names.len();
    let mean: Vec<f64> = (0..k).map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / n_seeds as f64).collect();
    let cov = RMat::from_fn(k, k, |i, j| samples.iter().map(|s| (s[i] - mean[i]) * (s[j] - mean[j])).sum::<f64>() / (n_seeds as f64 - 1.0));
    let fim = fisher_design(&design, &truth, layout, mode, &DerivativeConfig::default()).unwrap();
    let crb = crb_bounds(&fim);
    // In Fisher-whitened coordinates Σ_emp − F⁻¹ becomes W − 1 with
    // W = Lᵀ Σ_emp L (F = L Lᵀ); by Sylvester's law the signs of the
    // eigenvalues are unchanged. The smallest eigenvalue of a sample covariance
    // sits well below its population value (23 parameters, 100 seeds), so its
    // standard error and centre come from the sampling distribution of λ_min
    // for an efficient estimator (Σ = F⁻¹): Wishart draws with n − 1 degrees
    // of freedom.
    let l = fim.matrix.clone().cholesky().unwrap().l();
    let w = l.transpose() * &cov * &l;
    let lambda_min = SymmetricEigen::new((&w + w.transpose()) * 0.5).eigenvalues.min() - 1.0;
    let mut rng = ChaCha20Rng::seed_from_u64(88);
    let null: Vec<f64> = (0..2000)
        .map(|_| {
            let z: Vec<Vec<f64>> = (0..n_seeds).map(|_| (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();
            let m: Vec<f64> = (0..k).map(|i| z.iter().map(|r| r[i]).sum::<f64>() / n_seeds as f64).collect();
            let s = RMat::from_fn(k, k, |i, j| z.iter().map(|r| (r[i] - m[i]) * (r[j] - m[j])).sum::<f64>() / (n_seeds as f64 - 1.0));
            SymmetricEigen::new(s).eigenvalues.min() - 1.0
        })
        .collect();
    let mu0 = null.iter().sum::<f64>() / null.len() as f64;
    let sd0 = (null.iter().map(|v| (v - mu0).powi(2)).sum::<f64>() / (null.len() as f64 - 1.0)).sqrt();
    let worst = (lambda_min - mu0) / sd0;
    let pass = exact_err <= 1e-5 && worst >= -3.0 && !crb.rank_deficient;
    report(
        8,
        pass,
        &format!(
            "exact-frequency max |θ̂ − θ| = {exact_err:.2e}; whitened min eigenvalue of (Σ_emp − F⁻¹) = {lambda_min:.3} vs efficient-estimator {mu0:.3} ± {sd0:.3} ({worst:+.2} SE) over {n_seeds} seeds"
        ),
    );
    assert!(pass);
}
