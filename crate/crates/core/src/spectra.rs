//! Noise spectra, filter functions and the physical origin of the two LS
//! noise parameters: collective dephasing from an Ornstein–Uhlenbeck
//! frequency noise (Γ_d) and thermal dephasing from the unclosed
//! breathing-mode trajectory (Γ_th).
//!
//! All quantities are SI: angular frequencies in rad/s, times in s.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ls_model::LsParams;
use crate::quad;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuProcess {
    /// Diffusion constant (s⁻³).
    pub c: f64,
    /// Correlation time (s).
    pub tau_c: f64,
}

impl OuProcess {
    pub fn new(c: f64, tau_c: f64) -> Result<Self> {
        if !(c > 0.0 && tau_c > 0.0) {
            return Err(Error::Config(format!("OU process needs c > 0 and tau_c > 0, got c={c}, tau_c={tau_c}")));
        }
        Ok(Self { c, tau_c })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeKind {
    Com,
    Breathing,
}

impl ModeKind {
    /// Normalised ion displacements in the mode: com (+,+)/√2, breathing (+,−)/√2.
    pub fn displacement(self) -> [f64; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            ModeKind::Com => [h, h],
            ModeKind::Breathing => [h, -h],
        }
    }

    pub fn frequency_ratio(self) -> f64 {
        match self {
            ModeKind::Com => 1.0,
            ModeKind::Breathing => 3f64.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSpec {
    pub kind: ModeKind,
    /// Axial trap frequency ω_z (rad/s); the mode frequency is derived from it.
    pub omega_z: f64,
    pub lamb_dicke: f64,
    pub nbar: f64,
}

impl ModeSpec {
    pub fn frequency(&self) -> f64 {
        self.kind.frequency_ratio() * self.omega_z
    }

    /// δ_m = ω_{z,m} − Δω_L.
    pub fn detuning(&self, drive: &LaserDrive) -> f64 {
        self.frequency() - drive.beat_note
    }

    /// State-dependent force amplitude on ion `j`: F_{j,m} = |Ω̃|·η_m·M_{j,m}/2.
    pub fn force(&self, drive: &LaserDrive, j: usize) -> f64 {
        drive.stark_shift.abs() * self.lamb_dicke * self.kind.displacement()[j] / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserDrive {
    /// Crossed-beam ac Stark shift |Ω̃_L| (rad/s).
    pub stark_shift: f64,
    /// Beat note Δω_L (rad/s).
    pub beat_note: f64,
    pub gate_time: f64,
}

/// Lorentzian spectral density of the OU frequency noise.
pub fn ou_psd(omega: f64, p: &OuProcess) -> f64 {
    p.c * p.tau_c * p.tau_c / (1.0 + (omega * p.tau_c).powi(2))
}

/// F(ω,t) = (1 − cos ωt)/(2πω²), evaluated as sin²(ωt/2)/(πω²) to avoid
/// cancellation at small ωt.
pub fn filter_function(omega: f64, t: f64) -> f64 {
    let half = 0.5 * omega * t;
    if half.abs() < 1e-4 {
        // sin²(h)/h² = 1 − h²/3 + …
        t * t / (4.0 * PI) * (1.0 - half * half / 3.0)
    } else {
        half.sin().powi(2) / (PI * omega * omega)
    }
}

pub fn gamma_d_closed(p: &OuProcess, t: f64) -> f64 {
    let tau = p.tau_c;
    let r = t / tau;
    let bracket = if r < 1e-3 {
        // t + τ(e^{−r} − 1) = τ(r²/2 − r³/6 + r⁴/24 − …)
        tau * r * r * (0.5 - r / 6.0 + r * r / 24.0 - r * r * r / 120.0)
    } else {
        t + tau * (-r).exp_m1()
    };
    0.5 * p.c * tau * tau * bracket
}

/// Γ_d = ∫ S_δ(ω) F(ω,t) dω by adaptive quadrature.
///
/// Substituting u = ωt turns the integrand into
/// c τ² t · L(uτ/t) · sin²(u/2)/(π u²) with L the unit Lorentzian, which is
/// O(1) near the origin whatever the units; the integral is even, so only
/// u ≥ 0 is evaluated.
pub fn gamma_d_quadrature(p: &OuProcess, t: f64, rel_tol: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let ratio = p.tau_c / t;
    let upper = (100.0 / ratio).max(100.0);
    let integrand = |u: f64| {
        let lorentz = 1.0 / (1.0 + (u * ratio).powi(2));
        let h = 0.5 * u;
        let sinc2 = if h.abs() < 1e-4 { 0.25 * (1.0 - h * h / 3.0) } else { (h.sin() / u).powi(2) };
        lorentz * sinc2 / PI
    };
    let r = quad::integrate(integrand, 0.0, upper, 1e-14, rel_tol, 200_000)?;
    Ok(2.0 * p.c * p.tau_c * p.tau_c * t * r.value)
}

/// Residual-trajectory thermal parameter of one mode.
pub fn gamma_th_closed(mode: &ModeSpec, drive: &LaserDrive) -> Result<f64> {
    let delta = mode.detuning(drive);
    if delta == 0.0 {
        return Err(Error::Resonance);
    }
    let k = (drive.stark_shift.abs() * mode.lamb_dicke / delta).powi(2);
    let half = 0.5 * delta * drive.gate_time;
    // 1 − cos δt = 2 sin²(δt/2)
    Ok(k * 2.0 * half.sin().powi(2) * (mode.nbar + 0.5))
}

/// Γ_th from the quantum PSD: every mode contributes a symmetric pair of delta
/// peaks at ±δ_m with weight π·K_m each, where
/// K_m = 4(n̄_m + ½) Σ_j F_{j,m}², so the integral against the filter is
/// 2π K_m F(δ_m, t_g). The com term vanishes when the com loop closes.
pub fn gamma_th_from_qpsd(modes: &[ModeSpec], drive: &LaserDrive) -> Result<f64> {
    let mut total = 0.0;
    for mode in modes {
        let delta = mode.detuning(drive);
        if delta == 0.0 {
            return Err(Error::Resonance);
        }
        let weight: f64 = (0..2).map(|j| mode.force(drive, j).powi(2)).sum::<f64>() * 4.0 * (mode.nbar + 0.5);
        // δ(ω² − δ²) = [δ(ω − δ) + δ(ω + δ)]/(2|δ|); W carries a factor |δ|.
        let peaks = 2.0 * PI * weight * delta.abs() * (filter_function(delta, drive.gate_time) + filter_function(-delta, drive.gate_time))
            / (2.0 * delta.abs());
        total += peaks;
    }
    Ok(total)
}

/// Phase-space displacement of ion `j` in `mode` after time `t`:
/// φ = (F_{j,m}/δ_m)(1 − e^{iδ_m t}), with unit oscillator width and zero
/// laser and equilibrium phases.
pub fn displacement_amplitude(mode: &ModeSpec, drive: &LaserDrive, j: usize, t: f64) -> Result<Complex64> {
    let delta = mode.detuning(drive);
    if delta == 0.0 {
        return Err(Error::Resonance);
    }
    let pref = mode.force(drive, j) / delta;
    Ok(Complex64::new(pref, 0.0) * (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, delta * t)))
}

/// Spin-spin coupling accumulated up to time `t`:
/// J(t) = −Σ_m (2F_{1,m}F_{2,m}/δ_m)(t + sin(δ_m t)/δ_m).
pub fn coupling_strength(modes: &[ModeSpec], drive: &LaserDrive, t: f64) -> Result<f64> {
    let mut j = 0.0;
    for mode in modes {
        let delta = mode.detuning(drive);
        if delta == 0.0 {
            return Err(Error::Resonance);
        }
        let ff = mode.force(drive, 0) * mode.force(drive, 1);
        j -= 2.0 * ff / delta * (t + (delta * t).sin() / delta);
    }
    Ok(j)
}

/// Rescales |Ω̃_L| so that J(t_g) = target, by bisection on the amplitude.
pub fn calibrate_force(modes: &[ModeSpec], drive: &LaserDrive, target: f64) -> Result<LaserDrive> {
    let j_at = |amp: f64| coupling_strength(modes, &LaserDrive { stark_shift: amp, ..*drive }, drive.gate_time);
    let j0 = j_at(1.0)?;
    if j0 == 0.0 || j0.signum() != target.signum() {
        return Err(Error::Calibration(format!("coupling at unit amplitude is {j0:.3e}; no positive root for target {target}")));
    }
    let f = |amp: f64| -> Result<f64> { Ok(j_at(amp)? - target) };
    // J grows monotonically with the amplitude, so a doubling bracket works.
    let (mut lo, mut hi) = (0.0, drive.stark_shift.abs().max(1.0));
    let mut guard = 0;
    while f(hi)? < 0.0 {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(Error::Calibration("could not bracket the calibration root".into()));
        }
    }
    while (hi - lo) > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(LaserDrive { stark_shift: 0.5 * (lo + hi), ..*drive })
}

fn default_omega_z() -> f64 {
    2.0 * PI * 1.0238e6
}

/// Trap, laser and noise settings from which every LS noise parameter derives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalConfig {
    /// Axial (com) trap frequency, rad/s.
    pub omega_z: f64,
    pub gate_time: f64,
    /// Beat note Δω_L; `None` closes the com loop at t_g (δ_com = −2π/t_g).
    pub beat_note: Option<f64>,
    /// |Ω̃_L|; `None` calibrates it so that J(t_g) = θ_LS.
    pub stark_shift: Option<f64>,
    pub eta_com: f64,
    pub eta_breathing: f64,
    pub nbar_com: f64,
    pub nbar_breathing: f64,
    pub ou_c: f64,
    pub ou_tau_c: f64,
    pub theta_ls: f64,
    pub omega0_tg: f64,
}

impl Default for PhysicalConfig {
    fn default() -> Self {
        let eta_com = 0.1;
        Self {
            omega_z: default_omega_z(),
            gate_time: 97e-6,
            beat_note: None,
            stark_shift: None,
            eta_com,
            // η ∝ ω^{-1/2}
            eta_breathing: eta_com * 3f64.powf(-0.25),
            nbar_com: 5.0,
            nbar_breathing: 5.0,
            ou_c: 2e9,
            ou_tau_c: 5e-4,
            theta_ls: PI / 4.0,
            omega0_tg: 0.0,
        }
    }
}

/// Noise parameters and geometry derived from a [`PhysicalConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedLs {
    pub params: LsParams,
    pub drive: LaserDrive,
    /// Single-gate breathing-mode displacement of ion 1.
    pub phi_breathing: Complex64,
    pub delta_breathing: f64,
}

impl PhysicalConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("omega_z", self.omega_z),
            ("gate_time", self.gate_time),
            ("eta_com", self.eta_com),
            ("ou_c", self.ou_c),
            ("ou_tau_c", self.ou_tau_c),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.eta_breathing < 0.0 || self.nbar_com < 0.0 || self.nbar_breathing < 0.0 {
            return Err(Error::Config("Lamb-Dicke parameters and phonon numbers must be nonnegative".into()));
        }
        if self.eta_com > 0.3 || self.eta_breathing > 0.3 {
            eprintln!("warning: Lamb-Dicke parameter above 0.3; the Lamb-Dicke expansion is questionable");
        }
        Ok(())
    }

    pub fn ou(&self) -> Result<OuProcess> {
        OuProcess::new(self.ou_c, self.ou_tau_c)
    }

    pub fn modes(&self) -> [ModeSpec; 2] {
        [
            ModeSpec { kind: ModeKind::Com, omega_z: self.omega_z, lamb_dicke: self.eta_com, nbar: self.nbar_com },
            ModeSpec { kind: ModeKind::Breathing, omega_z: self.omega_z, lamb_dicke: self.eta_breathing, nbar: self.nbar_breathing },
        ]
    }

    /// Laser drive with the beat note and amplitude resolved (com closure
    /// and J(t_g) = θ_LS calibration when those are left unset).
    pub fn drive(&self) -> Result<LaserDrive> {
        self.validate()?;
        let beat_note = self.beat_note.unwrap_or(self.omega_z + 2.0 * PI / self.gate_time);
        let drive = LaserDrive { stark_shift: self.stark_shift.unwrap_or(1.0), beat_note, gate_time: self.gate_time };
        match self.stark_shift {
            Some(_) => Ok(drive),
            None => calibrate_force(&self.modes(), &drive, self.theta_ls),
        }
    }

    pub fn derive(&self) -> Result<DerivedLs> {
        let drive = self.drive()?;
        let [_, breathing] = self.modes();
        let delta_b = breathing.detuning(&drive);
        if delta_b == 0.0 {
            return Err(Error::Resonance);
        }
        let gamma_th = gamma_th_closed(&breathing, &drive)?;
        let gamma_d = gamma_d_closed(&self.ou()?, self.gate_time);
        let x = breathing.frequency() * self.gate_time;
        Ok(DerivedLs {
            params: LsParams {
                gamma_d,
                gamma_th,
                theta_ls: self.theta_ls,
                omega0_t: self.omega0_tg,
                x,
                zeta_prefactor: (drive.stark_shift.abs() * breathing.lamb_dicke / delta_b).powi(2),
            },
            drive,
            phi_breathing: displacement_amplitude(&breathing, &drive, 0, self.gate_time)?,
            delta_breathing: delta_b,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ou() -> OuProcess {
        OuProcess::new(2e9, 5e-4).unwrap()
    }

    #[test]
    fn ou_psd_values() {
        let p = ou();
        assert_eq!(ou_psd(0.0, &p), p.c * p.tau_c * p.tau_c);
        assert!((ou_psd(1.0 / p.tau_c, &p) - 0.5 * p.c * p.tau_c * p.tau_c).abs() < 1e-12);
        assert!((ou_psd(0.0, &p) - 500.0).abs() < 1e-9);
    }

    #[test]
    fn filter_limits() {
        let t = 1e-4;
        assert!((filter_function(0.0, t) - t * t / (4.0 * PI)).abs() < 1e-24);
        assert!(filter_function(2.0 * PI / t, t).abs() < 1e-20);
        // Small-ω branch joins the direct formula smoothly.
        let w = 2.0 * 1e-4 / t;
        let direct = (1.0 - (w * t).cos()) / (2.0 * PI * w * w);
        assert!((filter_function(w, t) / direct - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gamma_d_reference_values() {
        assert_eq!(gamma_d_closed(&ou(), 0.0), 0.0);
        // 250·(9.7e-5 + 5e-4·(e^{−0.194} − 1))
        let oracle = 250.0 * (9.7e-5 + 5e-4 * ((-0.194f64).exp() - 1.0));
        let g = gamma_d_closed(&ou(), 9.7e-5);
        assert!((g - oracle).abs() < 1e-15);
        assert!((g - 2.21e-3).abs() < 0.01e-3);

        let t = 100.0 * ou().tau_c;
        let asym = ou().c * ou().tau_c.powi(2) * t / 2.0;
        // the offset is exactly τ/t = 1%
        assert!((gamma_d_closed(&ou(), t) / asym - 1.0).abs() <= 0.01 + 1e-12);
    }

    #[test]
    fn gamma_d_series_branch_is_continuous() {
        let p = ou();
        let t = 1e-3 * p.tau_c;
        let series = gamma_d_closed(&p, t * (1.0 - 1e-9));
        let direct = gamma_d_closed(&p, t * (1.0 + 1e-9));
        assert!((series / direct - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gamma_d_quadrature_matches_closed_form() {
        let g = gamma_d_quadrature(&ou(), 9.7e-5, 1e-10).unwrap();
        assert!((g / gamma_d_closed(&ou(), 9.7e-5) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn calibration_reaches_quarter_turn() {
        let cfg = PhysicalConfig::default();
        let drive = cfg.drive().unwrap();
        let j = coupling_strength(&cfg.modes(), &drive, cfg.gate_time).unwrap();
        assert!((j - PI / 4.0).abs() < 1e-10);
        // The com mode dominates: |Ω̃|η_c ≈ π√2/t_g.
        let approx = PI * 2f64.sqrt() / cfg.gate_time;
        assert!(((drive.stark_shift * cfg.eta_com) / approx - 1.0).abs() < 0.01);

        // Recalibrating an already calibrated drive leaves it unchanged.
        let again = calibrate_force(&cfg.modes(), &drive, PI / 4.0).unwrap();
        assert!((again.stark_shift / drive.stark_shift - 1.0).abs() < 1e-11);

        // Halving the gate time needs a stronger drive but still reaches π/4.
        let short = PhysicalConfig { gate_time: cfg.gate_time / 2.0, ..cfg.clone() };
        let sd = short.drive().unwrap();
        assert!(sd.stark_shift > drive.stark_shift);
        let js = coupling_strength(&short.modes(), &sd, short.gate_time).unwrap();
        assert!((js - PI / 4.0).abs() < 1e-10);
        assert!(short.derive().unwrap().params.gamma_th.is_finite());
    }

    #[test]
    fn com_loop_closes_at_gate_time() {
        let cfg = PhysicalConfig::default();
        let drive = cfg.drive().unwrap();
        let [com, breathing] = cfg.modes();
        let delta = com.detuning(&drive);
        assert!((delta * cfg.gate_time + 2.0 * PI).abs() < 1e-9);
        assert!(displacement_amplitude(&com, &drive, 0, cfg.gate_time).unwrap().norm() < 1e-9 * com.force(&drive, 0) / delta.abs());
        assert_eq!(coupling_strength(&cfg.modes(), &drive, 0.0).unwrap(), 0.0);
        assert!(gamma_th_closed(&breathing, &drive).unwrap() > 0.0);
    }

    #[test]
    fn displacement_geometry() {
        let cfg = PhysicalConfig::default();
        let drive = cfg.drive().unwrap();
        let [_, b] = cfg.modes();
        let delta = b.detuning(&drive);
        let scale = b.force(&drive, 0) / delta;
        assert!(displacement_amplitude(&b, &drive, 0, 2.0 * PI / delta).unwrap().norm() < 1e-12 * scale.abs());
        let anti = displacement_amplitude(&b, &drive, 0, PI / delta).unwrap().norm();
        assert!((anti - 2.0 * scale.abs()).abs() < 1e-12 * scale.abs());
    }

    #[test]
    fn thermal_two_routes_agree() {
        for tg in [95e-6, 97e-6, 60e-6] {
            let cfg = PhysicalConfig { gate_time: tg, ..Default::default() };
            let drive = cfg.drive().unwrap();
            let closed = gamma_th_closed(&cfg.modes()[1], &drive).unwrap();
            let qpsd = gamma_th_from_qpsd(&cfg.modes(), &drive).unwrap();
            assert!((closed - qpsd).abs() <= 1e-12 * closed.max(1e-300) + 1e-24, "{closed} vs {qpsd}");
        }
    }

    #[test]
    fn thermal_scalings() {
        let cfg = PhysicalConfig { gate_time: 95e-6, stark_shift: Some(3e6), ..Default::default() };
        let drive = cfg.drive().unwrap();
        let [_, b] = cfg.modes();
        let g5 = gamma_th_closed(&b, &drive).unwrap();
        let g0 = gamma_th_closed(&ModeSpec { nbar: 0.0, ..b }, &drive).unwrap();
        assert!((g5 / g0 - 11.0).abs() < 1e-12);

        let doubled = LaserDrive { stark_shift: 2.0 * drive.stark_shift, ..drive };
        let q1 = gamma_th_from_qpsd(&cfg.modes(), &drive).unwrap();
        let q2 = gamma_th_from_qpsd(&cfg.modes(), &doubled).unwrap();
        assert!((q2 / q1 - 4.0).abs() < 1e-12);

        let com_only = [cfg.modes()[0], ModeSpec { lamb_dicke: 0.0, ..b }];
        assert!(gamma_th_from_qpsd(&com_only, &drive).unwrap() < 1e-20);

        // Closed breathing trajectory: δ_b t_g = 2πk.
        let delta = b.detuning(&drive);
        let k = (delta * cfg.gate_time / (2.0 * PI)).round();
        let closed_drive = LaserDrive { gate_time: 2.0 * PI * k / delta, ..drive };
        assert!(gamma_th_closed(&b, &closed_drive).unwrap() < 1e-20 * g5.max(1.0));
    }

    #[test]
    fn resonance_is_an_error() {
        let cfg = PhysicalConfig::default();
        let [_, b] = cfg.modes();
        let drive = LaserDrive { stark_shift: 1e5, beat_note: b.frequency(), gate_time: 1e-4 };
        assert!(matches!(gamma_th_closed(&b, &drive), Err(Error::Resonance)));
    }

    #[test]
    fn default_gate_times_land_where_expected() {
        let d97 = PhysicalConfig::default().derive().unwrap();
        assert!((d97.params.x.rem_euclid(2.0 * PI) - 0.0474).abs() < 1e-3);
        let d95 = PhysicalConfig { gate_time: 95e-6, ..Default::default() }.derive().unwrap();
        assert!((d95.params.x.rem_euclid(2.0 * PI) - 2.8965).abs() < 1e-3);
        // Neither gate time puts ω_z t_g on a multiple of 2π, where the breathing
        // loop would close together with the com loop and Γ_th would vanish.
        for (cfg, d) in [(PhysicalConfig::default(), d97), (PhysicalConfig { gate_time: 95e-6, ..Default::default() }, d95)] {
            let turns = cfg.omega_z * cfg.gate_time / (2.0 * PI);
            assert!((turns - turns.round()).abs() > 0.1);
            assert!(d.params.gamma_th > 1e-4);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn closed_form_equals_quadrature(lc in 7.0f64..10.0, lt in -5.0f64..-2.0, ratio in 0.01f64..20.0) {
            let p = OuProcess::new(10f64.powf(lc), 10f64.powf(lt)).unwrap();
            let t = ratio * p.tau_c;
            let q = gamma_d_quadrature(&p, t, 1e-10).unwrap();
            let c = gamma_d_closed(&p, t);
            prop_assert!((q / c - 1.0).abs() < 1e-6, "{} vs {}", q, c);
        }

        #[test]
        fn filter_and_psd_shape(w in -1e7f64..1e7, t in 0.0f64..1e-3) {
            prop_assert!(filter_function(w, t) >= 0.0);
            prop_assert_eq!(ou_psd(w, &ou()), ou_psd(-w, &ou()));
        }

        #[test]
        fn gamma_d_monotone_and_concave_to_linear(t in 1e-6f64..2e-3) {
            let p = ou();
            let h = 1e-3 * t;
            let (a, b, c) = (gamma_d_closed(&p, t - h), gamma_d_closed(&p, t), gamma_d_closed(&p, t + h));
            prop_assert!(a <= b && b <= c);
            // Γ_d'' = (cτ/2) e^{−t/τ} > 0 would make the curve convex in t; what
            // flattens is the rate Γ_d/t, which approaches cτ²/2 from below.
            prop_assert!(b / t <= p.c * p.tau_c * p.tau_c / 2.0 * (1.0 + 1e-12));
        }
    }
}
