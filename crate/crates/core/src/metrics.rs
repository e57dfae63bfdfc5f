//! Gate metrics on the computational block of a propagator: accumulated
//! phases, conditional phase, leakage, average gate fidelity, and the
//! calibration cost.

use nalgebra::{DVector, Matrix4};

use crate::device::{BasisLabel, DeviceParams, OperatorMatrix};
use crate::error::{Error, Result};
use crate::num::{arg, cabs, cplx, lit, norm_sqr, wrap_angle, Real, C};
use crate::propagator::{EvolutionSettings, Propagator};
use crate::pulse::PulseParams;
use crate::spectrum::DressedSpectrum;

/// Cost assigned to parameter sets whose evaluation failed.
pub const COST_SENTINEL: f64 = 1e6;

/// Diagonal magnitudes below this make the accumulated phase meaningless.
pub const MIN_RETURN_AMPLITUDE: f64 = 0.1;

const STATE_NAMES: [&str; 4] = ["00", "10", "01", "11"];

/// 4x4 gate restricted to the dressed computational states, ordered
/// `|00>, |10>, |01>, |11>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComputationalBlock<T: Real = f64>(pub Matrix4<C<T>>);

impl<T: Real> ComputationalBlock<T> {
    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    pub fn from_diagonal(d: [C<T>; 4]) -> Self {
        Self(Matrix4::from_diagonal(&nalgebra::Vector4::from(d)))
    }

    /// `diag(1, 1, 1, -1)`.
    pub fn ideal_cz() -> Self {
        let one = cplx(T::one(), T::zero());
        Self::from_diagonal([one, one, one, -one])
    }

    pub fn matrix(&self) -> &Matrix4<C<T>> {
        &self.0
    }

    pub fn diagonal(&self) -> [C<T>; 4] {
        [self.0[(0, 0)], self.0[(1, 1)], self.0[(2, 2)], self.0[(3, 3)]]
    }

    /// Largest singular value.
    pub fn max_singular_value(&self) -> T {
        self.0.singular_values().iter().fold(T::zero(), |m, &s| m.max(s))
    }

    /// Left-multiplies by `diag(phases)`.
    fn rephase_rows(&self, phases: [C<T>; 4]) -> Self {
        let mut m = self.0;
        for (r, p) in phases.iter().enumerate() {
            for c in 0..4 {
                m[(r, c)] *= *p;
            }
        }
        Self(m)
    }
}

/// `<dressed_a| U |dressed_b>` over the four computational dressed states.
pub fn extract_block<T: Real>(u: &OperatorMatrix<T>, spectrum: &DressedSpectrum<T>) -> Result<ComputationalBlock<T>> {
    spectrum.require(&BasisLabel::COMPUTATIONAL)?;
    if u.dim() != spectrum.dims().total() {
        return Err(Error::InvalidArgument(format!(
            "operator dimension {} does not match spectrum dimension {}",
            u.dim(),
            spectrum.dims().total()
        )));
    }
    let v = spectrum.basis_matrix(&BasisLabel::COMPUTATIONAL)?;
    let block = v.adjoint() * u.as_matrix() * &v;
    Ok(ComputationalBlock(Matrix4::from_fn(|r, c| block[(r, c)])))
}

/// Block from already-propagated computational columns `U |dressed_b>`.
pub fn block_from_columns<T: Real>(
    spectrum: &DressedSpectrum<T>,
    evolved: &[DVector<C<T>>],
) -> Result<ComputationalBlock<T>> {
    spectrum.require(&BasisLabel::COMPUTATIONAL)?;
    if evolved.len() != 4 {
        return Err(Error::InvalidArgument(format!(
            "expected 4 evolved columns, got {}",
            evolved.len()
        )));
    }
    let bras = BasisLabel::COMPUTATIONAL
        .iter()
        .map(|&l| spectrum.get(l).map(|s| &s.vector))
        .collect::<Result<Vec<_>>>()?;
    Ok(ComputationalBlock(Matrix4::from_fn(|r, c| bras[r].dotc(&evolved[c]))))
}

/// `theta_mn = -arg(block[mn, mn])` in `(-pi, pi]`, for `e^{-i theta}` returns.
pub fn accumulated_phases<T: Real>(block: &ComputationalBlock<T>) -> Result<[T; 4]> {
    let d = block.diagonal();
    let mut theta = [T::zero(); 4];
    for k in 0..4 {
        let mag = cabs(d[k]);
        if !(mag > lit::<T>(MIN_RETURN_AMPLITUDE)) {
            return Err(Error::PhaseUndefined {
                label: STATE_NAMES[k],
                magnitude: mag.to_f64_lossy(),
            });
        }
        theta[k] = wrap_angle(-arg(d[k]));
    }
    Ok(theta)
}

/// `theta11 - theta01 - theta10 + theta00`, principal value in `(-pi, pi]`.
pub fn conditional_phase<T: Real>(theta: &[T; 4]) -> T {
    let [t00, t10, t01, t11] = *theta;
    wrap_angle((t11 - t01) - (t10 - t00))
}

/// `||dtheta| - pi|`.
pub fn phase_error<T: Real>(cond_phase: T) -> T {
    (cond_phase.abs() - T::PI()).abs()
}

/// `1 - (1/4) sum |block entries|^2`.
pub fn leakage_from_block<T: Real>(block: &ComputationalBlock<T>) -> T {
    let kept = block.0.iter().fold(T::zero(), |s, z| s + norm_sqr(*z));
    T::one() - kept / lit(4.0)
}

/// Leakage out of the dressed computational subspace.
pub fn leakage_l1<T: Real>(u: &OperatorMatrix<T>, spectrum: &DressedSpectrum<T>) -> Result<T> {
    Ok(leakage_from_block(&extract_block(u, spectrum)?))
}

/// Removes single-qubit phases with virtual Z rotations and the global phase,
/// leaving diagonal phases `(0, 0, 0, -dtheta)`.
pub fn virtual_z_compensate<T: Real>(block: &ComputationalBlock<T>) -> Result<ComputationalBlock<T>> {
    let [t00, t10, t01, _] = accumulated_phases(block)?;
    let phi1 = t10 - t00;
    let phi2 = t01 - t00;
    let e = |x: T| cplx(x.cos(), x.sin());
    // e^{i theta00} Z1(phi1) Z2(phi2)
    let phases = [e(t00), e(t00 + phi1), e(t00 + phi2), e(t00 + phi1 + phi2)];
    Ok(block.rephase_rows(phases))
}

/// Average gate fidelity against `diag(1, 1, 1, -1)`:
/// `F = [Tr(M M^dag) + |Tr M|^2] / 20` with `M = CZ^dag block`.
pub fn average_gate_fidelity<T: Real>(block: &ComputationalBlock<T>) -> T {
    let m = ComputationalBlock::<T>::ideal_cz().0.adjoint() * block.0;
    let tr_mm = (m * m.adjoint()).trace().re;
    let tr = m.trace();
    (tr_mm + norm_sqr(tr)) / lit(20.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateReport<T = f64> {
    /// `theta_00, theta_10, theta_01, theta_11` in rad.
    pub theta: [T; 4],
    pub cond_phase: T,
    pub phase_error: T,
    pub leakage: T,
    pub fidelity: T,
    /// `|<mn|U|mn>|^2` in the dressed basis, same order as `theta`.
    pub return_populations: [T; 4],
}

impl<T: Real> GateReport<T> {
    /// `||dtheta| - pi|^2 + L1`.
    pub fn cost(&self) -> T {
        self.phase_error * self.phase_error + self.leakage
    }

    pub fn infidelity(&self) -> T {
        T::one() - self.fidelity
    }
}

pub fn gate_report<T: Real>(block: &ComputationalBlock<T>) -> Result<GateReport<T>> {
    let theta = accumulated_phases(block)?;
    let cond_phase = conditional_phase(&theta);
    let compensated = virtual_z_compensate(block)?;
    Ok(GateReport {
        theta,
        cond_phase,
        phase_error: phase_error(cond_phase),
        leakage: leakage_from_block(block),
        fidelity: average_gate_fidelity(&compensated),
        return_populations: block.diagonal().map(norm_sqr),
    })
}

/// Runs gates on one device at one drive detuning; reuses the frame and the
/// dressed computational states across pulses.
#[derive(Debug, Clone)]
pub struct GateSimulator<T: Real = f64> {
    propagator: Propagator<T>,
    spectrum: DressedSpectrum<T>,
    detuning: T,
    settings: EvolutionSettings<T>,
}

impl<T: Real> GateSimulator<T> {
    pub fn new(device: &DeviceParams<T>, detuning: T, settings: EvolutionSettings<T>) -> Result<Self> {
        let drive_freq = crate::pulse::resolve_drive_frequency(device, detuning)?;
        let propagator = Propagator::new(device, drive_freq)?;
        let spectrum = propagator.frame_spectrum()?;
        spectrum.require(&BasisLabel::COMPUTATIONAL)?;
        Ok(Self {
            propagator,
            spectrum,
            detuning,
            settings,
        })
    }

    pub fn for_pulse(device: &DeviceParams<T>, pulse: &PulseParams<T>, settings: EvolutionSettings<T>) -> Result<Self> {
        let mut sim = Self::new(device, pulse.detuning, settings)?;
        if let Some(f) = pulse.drive_freq {
            if f != sim.propagator.drive_freq() {
                sim.propagator = Propagator::new(device, f)?;
                sim.spectrum = sim.propagator.frame_spectrum()?;
                sim.spectrum.require(&BasisLabel::COMPUTATIONAL)?;
            }
        }
        Ok(sim)
    }

    pub fn detuning(&self) -> T {
        self.detuning
    }

    pub fn drive_freq(&self) -> T {
        self.propagator.drive_freq()
    }

    pub fn propagator(&self) -> &Propagator<T> {
        &self.propagator
    }

    pub fn spectrum(&self) -> &DressedSpectrum<T> {
        &self.spectrum
    }

    pub fn settings(&self) -> &EvolutionSettings<T> {
        &self.settings
    }

    /// Pulse with this simulator's detuning and drive frequency.
    pub fn pulse(&self, amp0: T, lambda1: T, lambda2: T, t_f: T) -> PulseParams<T> {
        PulseParams {
            amp0,
            lambda1,
            lambda2,
            t_f,
            detuning: self.detuning,
            drive_freq: Some(self.drive_freq()),
        }
    }

    pub fn block(&self, amp0: T, lambda1: T, lambda2: T, t_f: T) -> Result<ComputationalBlock<T>> {
        let pulse = self.pulse(amp0, lambda1, lambda2, t_f);
        let starts = BasisLabel::COMPUTATIONAL
            .iter()
            .map(|&l| self.spectrum.get(l).map(|s| s.vector.clone()))
            .collect::<Result<Vec<_>>>()?;
        let evolved = self.propagator.propagate(&pulse, &self.settings, &starts)?;
        block_from_columns(&self.spectrum, &evolved)
    }

    pub fn report(&self, amp0: T, lambda1: T, lambda2: T, t_f: T) -> Result<GateReport<T>> {
        gate_report(&self.block(amp0, lambda1, lambda2, t_f)?)
    }

    /// Calibration cost, or [`COST_SENTINEL`] if the gate cannot be evaluated.
    pub fn cost(&self, amp0: T, lambda1: T, lambda2: T, t_f: T) -> T {
        match self.report(amp0, lambda1, lambda2, t_f) {
            Ok(r) if r.cost().is_finite() => r.cost(),
            _ => lit(COST_SENTINEL),
        }
    }
}

/// Full gate evaluation of one pulse on one device.
pub fn simulate_gate<T: Real>(
    device: &DeviceParams<T>,
    pulse: &PulseParams<T>,
    settings: &EvolutionSettings<T>,
) -> Result<GateReport<T>> {
    let sim = GateSimulator::for_pulse(device, pulse, *settings)?;
    sim.report(pulse.amp0, pulse.lambda1, pulse.lambda2, pulse.t_f)
}

/// `C_f = ||dtheta| - pi|^2 + L1` from a full propagation; failures map to
/// [`COST_SENTINEL`].
pub fn cost<T: Real>(
    device: &DeviceParams<T>,
    t_f: T,
    detuning: T,
    amp0: T,
    lambda1: T,
    lambda2: T,
    settings: &EvolutionSettings<T>,
) -> T {
    match GateSimulator::new(device, detuning, *settings) {
        Ok(sim) => sim.cost(amp0, lambda1, lambda2, t_f),
        Err(_) => lit(COST_SENTINEL),
    }
}
