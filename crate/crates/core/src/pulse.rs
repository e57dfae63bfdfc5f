//! Drive envelope on the coupler and resolution of the drive frequency.

use crate::device::{BasisLabel, DeviceParams};
use crate::error::{Error, Result};
use crate::num::{lit, tau, Real};
use crate::spectrum::device_spectrum;

/// Envelope and timing of one gate pulse.
///
/// The third shape coefficient is always `1 - lambda1`, which pins the
/// envelope to zero at both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseParams<T = f64> {
    /// Peak amplitude `Omega_0 / 2pi` in GHz.
    pub amp0: T,
    pub lambda1: T,
    pub lambda2: T,
    /// Pulse duration (= gate time) in ns.
    pub t_f: T,
    /// Drive detuning from the dressed `|000> -> |010>` transition, GHz.
    pub detuning: T,
    /// Resolved drive frequency in GHz; `None` until resolved against a device.
    pub drive_freq: Option<T>,
}

impl<T: Real> PulseParams<T> {
    pub fn new(amp0: T, lambda1: T, lambda2: T, t_f: T, detuning: T) -> Result<Self> {
        let p = Self {
            amp0,
            lambda1,
            lambda2,
            t_f,
            detuning,
            drive_freq: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_f.is_finite() && self.t_f > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "pulse duration must be positive, got {}",
                self.t_f
            )));
        }
        for (name, v) in [
            ("amp0", self.amp0),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("detuning", self.detuning),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    pub fn lambda3(&self) -> T {
        T::one() - self.lambda1
    }

    /// Copy with a new detuning; clears any resolved drive frequency.
    pub fn with_detuning(mut self, detuning: T) -> Self {
        self.detuning = detuning;
        self.drive_freq = None;
        self
    }

    pub fn with_duration(mut self, t_f: T) -> Self {
        self.t_f = t_f;
        self
    }

    pub fn with_shape(mut self, amp0: T, lambda1: T, lambda2: T) -> Self {
        self.amp0 = amp0;
        self.lambda1 = lambda1;
        self.lambda2 = lambda2;
        self
    }

    pub fn with_drive_freq(mut self, drive_freq: T) -> Self {
        self.drive_freq = Some(drive_freq);
        self
    }

    /// Resolves the drive frequency against `device` unless already set.
    pub fn resolved(self, device: &DeviceParams<T>) -> Result<Self> {
        match self.drive_freq {
            Some(_) => Ok(self),
            None => Ok(self.with_drive_freq(resolve_drive_frequency(device, self.detuning)?)),
        }
    }

    /// Envelope value without the range check.
    pub fn envelope_unchecked(&self, t: T) -> T {
        let x = (t - self.t_f * lit(0.5)) / self.t_f * tau::<T>();
        let term = |l: f64, lambda: T| lambda * (T::one() - (x * lit::<T>(l)).cos());
        let sum = term(1.0, self.lambda1) + term(2.0, self.lambda2) + term(3.0, self.lambda3());
        self.amp0 * (T::one() - lit::<T>(0.5) * sum)
    }

    /// Integral of the envelope over the pulse, GHz * ns.
    pub fn area(&self) -> T {
        self.amp0 * self.t_f * (T::one() - self.lambda2) * lit(0.5)
    }

    /// Embedded presets: `tableII-a`, `tableII-b`, `tableII-c`, `sec4-450ns`.
    pub fn preset(name: &str) -> Option<Self> {
        let p = |amp_mhz: f64, l1: f64, l2: f64, t_f: f64, det_mhz: f64| Self {
            amp0: lit(amp_mhz * 1e-3),
            lambda1: lit(l1),
            lambda2: lit(l2),
            t_f: lit(t_f),
            detuning: lit(det_mhz * 1e-3),
            drive_freq: None,
        };
        match name {
            "tableII-a" => Some(p(8.3, 0.3395, 0.0601, 250.0, -15.0)),
            "tableII-b" => Some(p(9.5, 0.0481, 0.3136, 150.0, -10.0)),
            "tableII-c" => Some(p(10.86, -0.2330, 0.2517, 150.0, -3.9)),
            "sec4-450ns" => Some(p(10.0, -0.0178, 0.2528, 450.0, 2.5)),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 4] = ["tableII-a", "tableII-b", "tableII-c", "sec4-450ns"];
}

/// `Omega_d(t) = Omega_0 [1 - 1/2 sum_l lambda_l (1 - cos(2 l pi (t - t_f/2) / t_f))]`
/// for `l = 1, 2, 3`, in GHz.
pub fn envelope<T: Real>(p: &PulseParams<T>, t: T) -> Result<T> {
    if !(t >= T::zero() && t <= p.t_f) {
        return Err(Error::InvalidArgument(format!(
            "time {t} ns outside pulse window [0, {}]",
            p.t_f
        )));
    }
    Ok(p.envelope_unchecked(t))
}

/// Peak amplitude whose envelope area drives a full `2pi` rotation of a
/// resonant `|m0n> <-> |m1n>` transition over `t_f`.
pub fn area_matched_amp0<T: Real>(t_f: T, lambda2: T) -> T {
    lit::<T>(2.0) / (t_f * (T::one() - lambda2))
}

/// `omega_d = omega_c00 + detuning`, with `omega_c00` the dressed
/// `|000> -> |010>` transition, in GHz.
pub fn resolve_drive_frequency<T: Real>(device: &DeviceParams<T>, detuning: T) -> Result<T> {
    let ground = BasisLabel::new(0, 0, 0);
    let excited = BasisLabel::new(0, 1, 0);
    let spec = device_spectrum(device, &[ground, excited])?;
    Ok(spec.energy_ghz(excited)? - spec.energy_ghz(ground)? + detuning)
}
