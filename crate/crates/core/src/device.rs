//! Physical device model: parameters, flux tuning, Hamiltonians and
//! collapse operators.
//!
//! Frequencies are given in cyclic GHz (cavities, transmon) or MHz (couplings,
//! anharmonicity) and decay rates in μs⁻¹. Internally everything is converted
//! to angular rad/μs: `2π·1e3·f[GHz]` and `2π·g[MHz]`, while decay rates are
//! used as given.

use std::f64::consts::PI;

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{Ladders, Operator, Slot, TruncationConfig};

/// rad/μs per GHz.
pub const GHZ: f64 = 2.0 * PI * 1e3;
/// rad/μs per MHz.
pub const MHZ: f64 = 2.0 * PI;

/// Missing keys in a config file fall back to [`DeviceParams::measured`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceParams {
    #[serde(rename = "f_r_ghz")]
    pub f_r: f64,
    #[serde(rename = "kappa_r_per_us")]
    pub kappa_r: f64,
    #[serde(rename = "kappa_r_e_per_us")]
    pub kappa_r_e: f64,
    #[serde(rename = "g_r_mhz")]
    pub g_r: f64,
    #[serde(rename = "f_a_ghz")]
    pub f_a: f64,
    #[serde(rename = "kappa_a_per_us")]
    pub kappa_a: f64,
    #[serde(rename = "g_a_mhz")]
    pub g_a: f64,
    #[serde(rename = "f_ge_max_ghz")]
    pub f_ge_max: f64,
    /// Anharmonicity, negative for a transmon.
    #[serde(rename = "alpha_mhz")]
    pub alpha: f64,
    #[serde(rename = "gamma_per_us", default)]
    pub gamma: f64,
    #[serde(rename = "gamma_phi_per_us", default)]
    pub gamma_phi: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self::measured()
    }
}

impl DeviceParams {
    /// Parameters extracted from the fabricated device. Transmon relaxation and
    /// dephasing were not measured and default to zero.
    pub fn measured() -> Self {
        Self {
            f_r: 5.86,
            kappa_r: 0.69,
            kappa_r_e: 0.3,
            g_r: 11.0,
            f_a: 5.715,
            kappa_a: 90.0,
            g_a: 15.5,
            f_ge_max: 5.95,
            alpha: -180.0,
            gamma: 0.0,
            gamma_phi: 0.0,
        }
    }

    /// Target values of the design.
    pub fn design() -> Self {
        Self {
            f_r: 6.0,
            kappa_r: 0.31,
            kappa_r_e: 0.31,
            g_r: 6.5,
            f_a: 5.8,
            kappa_a: 138.0,
            g_a: 23.5,
            f_ge_max: 6.5,
            alpha: -200.0,
            gamma: 0.0,
            gamma_phi: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("kappa_r", self.kappa_r),
            ("kappa_r_e", self.kappa_r_e),
            ("kappa_a", self.kappa_a),
            ("gamma", self.gamma),
            ("gamma_phi", self.gamma_phi),
        ];
        for (name, v) in rates {
            if !(v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be >= 0")));
            }
        }
        if self.kappa_r_e > self.kappa_r {
            return Err(Error::InvalidParameter(format!(
                "kappa_r_e = {} exceeds total kappa_r = {}",
                self.kappa_r_e, self.kappa_r
            )));
        }
        let finite = [self.f_r, self.f_a, self.g_r, self.g_a, self.f_ge_max, self.alpha];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite frequency or coupling".into()));
        }
        Ok(())
    }

    /// Transmon frequency at a given flux.
    pub fn f_ge(&self, phi_ratio: f64) -> Result<f64> {
        transmon_frequency(self.f_ge_max, phi_ratio)
    }

    /// Two-photon g→f half frequency, the nominal pump frequency.
    pub fn half_f_gf(&self, f_ge: f64) -> f64 {
        f_ge + self.alpha * 1e-3 / 2.0
    }
}

/// Missing keys default to the pump at 5.7875 GHz, switched off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveParams {
    #[serde(rename = "f_p_ghz")]
    pub f_p: f64,
    /// Drive amplitude in rad/μs; `H_drive = (ε/2)(b + b†)`.
    #[serde(rename = "epsilon_rad_per_us", default)]
    pub epsilon: f64,
    /// Source power. When set it is converted to `epsilon` through a
    /// [`crate::calibration::DriveMap`].
    #[serde(rename = "power_dbm", default, skip_serializing_if = "Option::is_none")]
    pub power_dbm: Option<f64>,
}

impl Default for DriveParams {
    fn default() -> Self {
        Self::new(5.7875, 0.0)
    }
}

impl DriveParams {
    pub fn new(f_p: f64, epsilon: f64) -> Self {
        Self { f_p, epsilon, power_dbm: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon = {} must be >= 0", self.epsilon)));
        }
        if !self.f_p.is_finite() {
            return Err(Error::InvalidParameter("f_p is not finite".into()));
        }
        Ok(())
    }
}

/// `f_ge_max·√cos(π·Φ/Φ₀)`.
pub fn transmon_frequency(f_ge_max: f64, phi_ratio: f64) -> Result<f64> {
    let c = (PI * phi_ratio).cos();
    // cos(π/2) evaluates to ~6e-17, so tolerate roundoff at the domain edge
    if c < -1e-12 {
        return Err(Error::Domain(format!("cos(pi * {phi_ratio}) = {c:.3e} < 0")));
    }
    Ok(f_ge_max * c.max(0.0).sqrt())
}

/// Inverse of [`transmon_frequency`] on the branch `phi_ratio ∈ [0, 0.5]`.
pub fn flux_for_frequency(f_ge_max: f64, f_ge: f64) -> Result<f64> {
    if !(f_ge >= 0.0 && f_ge <= f_ge_max) {
        return Err(Error::Domain(format!("f_ge = {f_ge} outside [0, {f_ge_max}]")));
    }
    Ok(((f_ge / f_ge_max).powi(2)).acos() / PI)
}

/// Coherent drives present in a rotating frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameDrive {
    /// Frame (drive) frequency in GHz.
    pub f_frame: f64,
    /// Amplitude on the transmon, `(ε/2)(b + b†)`.
    pub transmon: f64,
    /// Amplitude on the reservoir, `(ε/2)(a_r + a_r†)`.
    pub reservoir: f64,
}

fn real(x: f64) -> c64 {
    c64::new(x, 0.0)
}

/// Hamiltonian with explicit transmon frequency, in a frame rotating at
/// `drive.f_frame` on all three modes. Zero-point terms are dropped.
pub fn hamiltonian_in_frame(
    p: &DeviceParams,
    f_ge: f64,
    drive: &FrameDrive,
    ladders: &Ladders,
) -> Operator {
    let nb = ladders.number(Slot::Transmon);
    let na = ladders.number(Slot::Aux);
    let nr = ladders.number(Slot::Reservoir);
    let dim = nb.dim();
    let id = Operator::identity(dim);

    let anharm = nb.matmul(&(&nb - &id));
    let mut h = &(&nb * (GHZ * (f_ge - drive.f_frame))) + &(&anharm * (MHZ * p.alpha / 2.0));
    h = &h + &(&nr * (GHZ * (p.f_r - drive.f_frame)));
    h = &h + &(&na * (GHZ * (p.f_a - drive.f_frame)));

    let b = &ladders.b;
    let bd = b.adjoint();
    for (a, g) in [(&ladders.a_r, p.g_r), (&ladders.a_a, p.g_a)] {
        let ex = &b.matmul(&a.adjoint()) + &bd.matmul(a);
        h = &h + &(&ex * (MHZ * g));
    }
    if drive.transmon != 0.0 {
        h = &h + &(&(b + &bd) * (drive.transmon / 2.0));
    }
    if drive.reservoir != 0.0 {
        let a = &ladders.a_r;
        h = &h + &(&(a + &a.adjoint()) * (drive.reservoir / 2.0));
    }
    h
}

/// Lab-frame Hamiltonian in rad/μs, including the cavity zero-point terms.
pub fn hamiltonian_lab(p: &DeviceParams, phi_ratio: f64, cfg: &TruncationConfig) -> Result<Operator> {
    p.validate()?;
    let f_ge = p.f_ge(phi_ratio)?;
    let ladders = Ladders::new(cfg)?;
    let h = hamiltonian_in_frame(p, f_ge, &FrameDrive::default(), &ladders);
    let zero_point = GHZ * (p.f_r + p.f_a) / 2.0;
    Ok(&h + &Operator::diagonal(&vec![real(zero_point); cfg.dim()]))
}

/// Time-independent Hamiltonian in the frame rotating at the pump frequency.
pub fn hamiltonian_rotating(
    p: &DeviceParams,
    d: &DriveParams,
    phi_ratio: f64,
    cfg: &TruncationConfig,
) -> Result<Operator> {
    p.validate()?;
    d.validate()?;
    let f_ge = p.f_ge(phi_ratio)?;
    let ladders = Ladders::new(cfg)?;
    let drive = FrameDrive { f_frame: d.f_p, transmon: d.epsilon, reservoir: 0.0 };
    Ok(hamiltonian_in_frame(p, f_ge, &drive, &ladders))
}

/// `[√κ_r a_r, √κ_a a_a, √γ b, √γ_φ b†b]`, omitting zero rates.
pub fn collapse_operators(p: &DeviceParams, cfg: &TruncationConfig) -> Result<Vec<Operator>> {
    let ladders = Ladders::new(cfg)?;
    collapse_from_ladders(p, &ladders)
}

pub(crate) fn collapse_from_ladders(p: &DeviceParams, ladders: &Ladders) -> Result<Vec<Operator>> {
    let terms = [
        ("kappa_r", p.kappa_r, ladders.a_r.clone()),
        ("kappa_a", p.kappa_a, ladders.a_a.clone()),
        ("gamma", p.gamma, ladders.b.clone()),
        ("gamma_phi", p.gamma_phi, ladders.number(Slot::Transmon)),
    ];
    let mut out = Vec::new();
    for (name, rate, op) in terms {
        if !(rate >= 0.0) {
            return Err(Error::InvalidParameter(format!("{name} = {rate} must be >= 0")));
        }
        if rate > 0.0 {
            out.push(&op * rate.sqrt());
        }
    }
    Ok(out)
}

/// Everything needed to build the Liouvillian at one operating point.
#[derive(Debug, Clone)]
pub struct MaserModel {
    pub cfg: TruncationConfig,
    pub ladders: Ladders,
    pub hamiltonian: Operator,
    pub c_ops: Vec<Operator>,
}

impl MaserModel {
    /// Pumped maser in the pump frame at transmon frequency `f_ge`.
    pub fn pumped(p: &DeviceParams, f_ge: f64, d: &DriveParams, cfg: &TruncationConfig) -> Result<Self> {
        d.validate()?;
        let drive = FrameDrive { f_frame: d.f_p, transmon: d.epsilon, reservoir: 0.0 };
        Self::with_drive(p, f_ge, &drive, cfg)
    }

    pub fn with_drive(p: &DeviceParams, f_ge: f64, drive: &FrameDrive, cfg: &TruncationConfig) -> Result<Self> {
        p.validate()?;
        if drive.transmon < 0.0 || drive.reservoir < 0.0 {
            return Err(Error::InvalidParameter("drive amplitudes must be >= 0".into()));
        }
        let ladders = Ladders::new(cfg)?;
        let hamiltonian = hamiltonian_in_frame(p, f_ge, drive, &ladders);
        let c_ops = collapse_from_ladders(p, &ladders)?;
        Ok(Self { cfg: *cfg, ladders, hamiltonian, c_ops })
    }

    pub fn liouvillian(&self) -> Result<crate::lindblad::Superoperator> {
        crate::lindblad::liouvillian(&self.hamiltonian, &self.c_ops)
    }
}
