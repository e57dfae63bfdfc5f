//! Time evolution under the rotating-frame Hamiltonian
//! `H(t) = H_static + pi * Omega_d(t) * (a_c + a_c^dag)`.
//!
//! Each step of length `h` applies `exp(-i h H(t_mid))` with the envelope
//! sampled at the step midpoint. The exponential is applied to state vectors
//! with a Taylor series that runs until the next term is below machine
//! precision, using the sparsity of `H` (about five nonzeros per row).

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::device::{build_rotating_hamiltonian, BasisLabel, DeviceParams, Dims, OperatorMatrix};
use crate::error::{Error, Result};
use crate::num::{cabs, cplx, czero, lit, norm_sqr, Real, C};
use crate::pulse::PulseParams;
use crate::spectrum::{label_eigenstates, DressedSpectrum};

/// Columns whose Gram matrix deviates from identity by more than this are
/// reported as an integration failure.
pub const UNITARITY_FAILURE: f64 = 1e-6;

/// `UNITARITY_FAILURE`, raised to `sqrt(eps)` where the scalar cannot reach it
/// (f32 accumulates ~1e-5 over a few thousand steps).
pub fn unitarity_threshold<T: Real>() -> f64 {
    UNITARITY_FAILURE.max(T::EPSILON.to_f64_lossy().sqrt())
}

const MAX_TAYLOR_TERMS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionSettings<T = f64> {
    /// Integration step in ns.
    pub dt: T,
    /// Trajectory decimation in steps.
    pub sample_stride: usize,
}

impl<T: Real> Default for EvolutionSettings<T> {
    fn default() -> Self {
        Self {
            dt: lit(0.005),
            sample_stride: 100,
        }
    }
}

impl<T: Real> EvolutionSettings<T> {
    pub fn with_dt(mut self, dt: T) -> Self {
        self.dt = dt;
        self
    }

    pub fn validate(&self, t_f: T) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > T::zero()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if t_f / self.dt < lit(10.0) {
            return Err(Error::InvalidArgument(format!(
                "t_f / dt must be at least 10 (t_f = {t_f}, dt = {})",
                self.dt
            )));
        }
        if self.sample_stride == 0 {
            return Err(Error::InvalidArgument("sample_stride must be positive".into()));
        }
        Ok(())
    }

    /// Number of equal steps covering `[0, t_f]`; the step is `t_f / n <= dt`.
    pub fn steps(&self, t_f: T) -> usize {
        (t_f / self.dt - lit(1e-9)).ceil().to_usize().unwrap_or(1).max(1)
    }
}

/// Row-compressed Hermitian generator: static values plus a drive pattern.
#[derive(Debug, Clone)]
struct SparseGenerator<T: Real> {
    row_start: Vec<usize>,
    cols: Vec<usize>,
    static_vals: Vec<C<T>>,
    drive_vals: Vec<C<T>>,
}

impl<T: Real> SparseGenerator<T> {
    fn new(static_part: &OperatorMatrix<T>, drive_op: &OperatorMatrix<T>) -> Self {
        let n = static_part.dim();
        let mut row_start = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut static_vals = Vec::new();
        let mut drive_vals = Vec::new();
        row_start.push(0);
        for i in 0..n {
            for j in 0..n {
                let s = static_part.get(i, j);
                let d = drive_op.get(i, j);
                if s != czero() || d != czero() {
                    cols.push(j);
                    static_vals.push(s);
                    drive_vals.push(d);
                }
            }
            row_start.push(cols.len());
        }
        Self {
            row_start,
            cols,
            static_vals,
            drive_vals,
        }
    }

    fn dim(&self) -> usize {
        self.row_start.len() - 1
    }

    /// Values of `H_static + c * drive`.
    fn combined(&self, c: T) -> Vec<C<T>> {
        self.static_vals
            .iter()
            .zip(&self.drive_vals)
            .map(|(s, d)| *s + *d * c)
            .collect()
    }

    fn apply(&self, vals: &[C<T>], x: &[C<T>], out: &mut [C<T>]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = czero();
            for k in self.row_start[i]..self.row_start[i + 1] {
                acc += vals[k] * x[self.cols[k]];
            }
            *o = acc;
        }
    }

    /// `psi <- exp(-i h H) psi` by a Taylor series truncated at machine
    /// precision.
    fn step(&self, vals: &[C<T>], h: T, psi: &mut [C<T>], term: &mut [C<T>], next: &mut [C<T>]) -> Result<()> {
        term.copy_from_slice(psi);
        let tol = T::EPSILON * lit(0.25);
        let neg_i_h = cplx(T::zero(), -h);
        for k in 1..=MAX_TAYLOR_TERMS {
            self.apply(vals, term, next);
            let scale = neg_i_h / cplx(lit::<T>(k as f64), T::zero());
            let mut size = T::zero();
            for ((p, t), nx) in psi.iter_mut().zip(term.iter_mut()).zip(next.iter()) {
                *t = *nx * scale;
                *p += *t;
                size = size.max(cabs(*t));
            }
            if size <= tol {
                return Ok(());
            }
        }
        Err(Error::IntegrationFailure {
            deviation: f64::INFINITY,
        })
    }
}

/// Time-dependent rotating-frame Hamiltonian for one device and drive
/// frequency, ready to propagate states under any envelope.
#[derive(Debug, Clone)]
pub struct Propagator<T: Real = f64> {
    device: DeviceParams<T>,
    drive_freq: T,
    generator: SparseGenerator<T>,
}

impl<T: Real> Propagator<T> {
    /// `drive_freq` in GHz.
    pub fn new(device: &DeviceParams<T>, drive_freq: T) -> Result<Self> {
        let rot = build_rotating_hamiltonian(device, drive_freq)?;
        Ok(Self {
            device: *device,
            drive_freq,
            generator: SparseGenerator::new(&rot.static_part, &rot.drive_op),
        })
    }

    /// Builds the propagator at the pulse's drive frequency, resolving it if
    /// needed.
    pub fn for_pulse(device: &DeviceParams<T>, pulse: &PulseParams<T>) -> Result<Self> {
        let pulse = pulse.resolved(device)?;
        Self::new(device, pulse.drive_freq.expect("resolved"))
    }

    pub fn device(&self) -> &DeviceParams<T> {
        &self.device
    }

    pub fn dims(&self) -> Dims {
        self.device.dims()
    }

    pub fn drive_freq(&self) -> T {
        self.drive_freq
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    fn check_pulse(&self, pulse: &PulseParams<T>, settings: &EvolutionSettings<T>) -> Result<()> {
        pulse.validate()?;
        settings.validate(pulse.t_f)?;
        if let Some(f) = pulse.drive_freq {
            if f != self.drive_freq {
                return Err(Error::InvalidArgument(format!(
                    "pulse drive frequency {f} GHz differs from propagator frame {} GHz",
                    self.drive_freq
                )));
            }
        }
        Ok(())
    }

    /// Rotating-frame spectrum of the undriven Hamiltonian.
    pub fn frame_spectrum(&self) -> Result<DressedSpectrum<T>> {
        let rot = build_rotating_hamiltonian(&self.device, self.drive_freq)?;
        label_eigenstates(&rot.static_part, self.dims())
    }

    /// Propagates one state over the steps in `range` of the step grid that
    /// `settings` induces on `[0, t_f]`, calling `observe(step, psi)` after
    /// every step.
    fn run_one<F>(
        &self,
        pulse: &PulseParams<T>,
        settings: &EvolutionSettings<T>,
        range: Range<usize>,
        psi: &mut [C<T>],
        mut observe: F,
    ) -> Result<()>
    where
        F: FnMut(usize, &[C<T>]),
    {
        let n = settings.steps(pulse.t_f);
        let h = pulse.t_f / lit(n as f64);
        let dim = self.dim();
        let mut term = vec![czero(); dim];
        let mut next = vec![czero(); dim];
        for k in range {
            let t_mid = h * (lit::<T>(k as f64) + lit(0.5));
            // 2pi * Omega / 2
            let c = T::PI() * pulse.envelope_unchecked(t_mid);
            let vals = self.generator.combined(c);
            self.generator.step(&vals, h, psi, &mut term, &mut next)?;
            observe(k + 1, psi);
        }
        Ok(())
    }

    /// Evolves each column of `states` over the full pulse.
    pub fn propagate(
        &self,
        pulse: &PulseParams<T>,
        settings: &EvolutionSettings<T>,
        states: &[DVector<C<T>>],
    ) -> Result<Vec<DVector<C<T>>>> {
        let n = settings.steps(pulse.t_f);
        self.propagate_steps(pulse, settings, 0..n, states)
    }

    /// Evolves each column over a sub-range of the step grid.
    pub fn propagate_steps(
        &self,
        pulse: &PulseParams<T>,
        settings: &EvolutionSettings<T>,
        range: Range<usize>,
        states: &[DVector<C<T>>],
    ) -> Result<Vec<DVector<C<T>>>> {
        self.check_pulse(pulse, settings)?;
        let n = settings.steps(pulse.t_f);
        if range.end > n || range.start > range.end {
            return Err(Error::InvalidArgument(format!(
                "step range {range:?} outside 0..{n}"
            )));
        }
        for s in states {
            if s.len() != self.dim() {
                return Err(Error::InvalidArgument(format!(
                    "state of length {} does not match dimension {}",
                    s.len(),
                    self.dim()
                )));
            }
        }
        let out = states
            .par_iter()
            .map(|s| {
                let mut psi: Vec<C<T>> = s.iter().copied().collect();
                self.run_one(pulse, settings, range.clone(), &mut psi, |_, _| {})?;
                Ok(DVector::from_vec(psi))
            })
            .collect::<Result<Vec<_>>>()?;
        let gram_in = gram(states);
        let gram_out = gram(&out);
        let deviation = gram_in
            .iter()
            .zip(gram_out.iter())
            .fold(T::zero(), |m, (a, b)| m.max(cabs(*a - *b)));
        let deviation = deviation.to_f64_lossy();
        if !(deviation <= unitarity_threshold::<T>()) {
            return Err(Error::IntegrationFailure { deviation });
        }
        Ok(out)
    }

    /// Full propagator `U(t_f)` in the bare basis.
    pub fn unitary(&self, pulse: &PulseParams<T>, settings: &EvolutionSettings<T>) -> Result<OperatorMatrix<T>> {
        let n = settings.steps(pulse.t_f);
        self.unitary_steps(pulse, settings, 0..n)
    }

    pub fn unitary_steps(
        &self,
        pulse: &PulseParams<T>,
        settings: &EvolutionSettings<T>,
        range: Range<usize>,
    ) -> Result<OperatorMatrix<T>> {
        let dim = self.dim();
        let basis: Vec<DVector<C<T>>> = (0..dim)
            .map(|j| {
                let mut v = DVector::from_element(dim, czero());
                v[j] = cplx(T::one(), T::zero());
                v
            })
            .collect();
        let cols = self.propagate_steps(pulse, settings, range, &basis)?;
        OperatorMatrix::from_matrix(DMatrix::from_columns(&cols))
    }

    /// Bare-basis populations sampled every `sample_stride` steps, plus the
    /// final time.
    pub fn trajectory(
        &self,
        pulse: &PulseParams<T>,
        settings: &EvolutionSettings<T>,
        initial: &DVector<C<T>>,
    ) -> Result<Trajectory<T>> {
        self.check_pulse(pulse, settings)?;
        let n = settings.steps(pulse.t_f);
        let h = pulse.t_f / lit(n as f64);
        let dims = self.dims();
        let computational: Vec<usize> = BasisLabel::COMPUTATIONAL
            .iter()
            .map(|&l| dims.index(l))
            .collect::<Result<_>>()?;
        let mut traj = Trajectory {
            times: Vec::new(),
            populations: dims.labels().map(|l| (l, Vec::new())).collect(),
            leakage_trace: Vec::new(),
        };
        let mut record = |k: usize, psi: &[C<T>]| {
            traj.times.push(h * lit(k as f64));
            let mut inside = T::zero();
            for (i, z) in psi.iter().enumerate() {
                let p = norm_sqr(*z);
                traj.populations
                    .get_mut(&dims.label(i))
                    .expect("label present")
                    .push(p);
                if computational.contains(&i) {
                    inside += p;
                }
            }
            traj.leakage_trace.push(T::one() - inside);
        };
        let mut psi: Vec<C<T>> = initial.iter().copied().collect();
        record(0, &psi);
        let stride = settings.sample_stride;
        self.run_one(pulse, settings, 0..n, &mut psi, |k, psi| {
            if k % stride == 0 || k == n {
                record(k, psi);
            }
        })?;
        Ok(traj)
    }
}

fn gram<T: Real>(states: &[DVector<C<T>>]) -> Vec<C<T>> {
    let mut g = Vec::with_capacity(states.len() * states.len());
    for a in states {
        for b in states {
            g.push(a.dotc(b));
        }
    }
    g
}

/// Population history of one propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T = f64> {
    /// ns.
    pub times: Vec<T>,
    pub populations: BTreeMap<BasisLabel, Vec<T>>,
    /// `1 - sum of bare |m0n>` populations.
    pub leakage_trace: Vec<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn population(&self, label: BasisLabel) -> Option<&[T]> {
        self.populations.get(&label).map(Vec::as_slice)
    }

    pub fn final_population(&self, label: BasisLabel) -> Option<T> {
        self.population(label).and_then(|p| p.last().copied())
    }

    /// Sum of all populations at sample `k`.
    pub fn total_population(&self, k: usize) -> T {
        self.populations.values().fold(T::zero(), |s, p| s + p[k])
    }

    /// Label other than `exclude` with the largest population at any sample.
    pub fn dominant_transient(&self, exclude: &[BasisLabel]) -> Option<(BasisLabel, T)> {
        self.populations
            .iter()
            .filter(|(l, _)| !exclude.contains(l))
            .map(|(l, p)| (*l, p.iter().copied().fold(T::zero(), |m, x| m.max(x))))
            .fold(None, |best: Option<(BasisLabel, T)>, (l, p)| match best {
                Some((_, q)) if q >= p => best,
                _ => Some((l, p)),
            })
    }
}

/// Which state a trajectory starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    Bare(BasisLabel),
    /// Eigenstate of the undriven Hamiltonian labelled by this bare state.
    Dressed(BasisLabel),
}

impl InitialState {
    pub fn label(&self) -> BasisLabel {
        match *self {
            InitialState::Bare(l) | InitialState::Dressed(l) => l,
        }
    }
}

pub fn initial_vector<T: Real>(
    propagator: &Propagator<T>,
    initial: InitialState,
) -> Result<DVector<C<T>>> {
    let dims = propagator.dims();
    match initial {
        InitialState::Bare(l) => {
            let mut v = DVector::from_element(dims.total(), czero());
            v[dims.index(l)?] = cplx(T::one(), T::zero());
            Ok(v)
        }
        InitialState::Dressed(l) => {
            let spec = propagator.frame_spectrum()?;
            spec.require(&[l])?;
            Ok(spec.get(l)?.vector.clone())
        }
    }
}

/// Full-space gate propagator `U(t_f)` in the bare basis.
pub fn evolve_unitary<T: Real>(
    device: &DeviceParams<T>,
    pulse: &PulseParams<T>,
    settings: &EvolutionSettings<T>,
) -> Result<OperatorMatrix<T>> {
    let pulse = pulse.resolved(device)?;
    Propagator::for_pulse(device, &pulse)?.unitary(&pulse, settings)
}

pub fn evolve_trajectory<T: Real>(
    device: &DeviceParams<T>,
    pulse: &PulseParams<T>,
    settings: &EvolutionSettings<T>,
    initial: InitialState,
) -> Result<Trajectory<T>> {
    let pulse = pulse.resolved(device)?;
    let prop = Propagator::for_pulse(device, &pulse)?;
    let psi0 = initial_vector(&prop, initial)?;
    prop.trajectory(&pulse, settings, &psi0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::build_static_hamiltonian;
    use crate::spectrum::hermitian_eigen;

    fn small_device() -> DeviceParams<f64> {
        DeviceParams::<f64>::paper_table_i().with_levels(2)
    }

    #[test]
    fn settings_validation() {
        let s = EvolutionSettings::<f64>::default();
        assert!(s.validate(250.0).is_ok());
        assert!(s.with_dt(30.0).validate(250.0).is_err());
        assert!(s.with_dt(0.0).validate(250.0).is_err());
        assert_eq!(s.steps(250.0), 50_000);
        assert_eq!(s.with_dt(0.3).steps(1.0 * 10.0), 34);
    }

    #[test]
    fn taylor_step_matches_eigen_exponential() {
        let dev = small_device();
        let h = build_static_hamiltonian(&dev).unwrap();
        let gen = SparseGenerator::new(&h, &OperatorMatrix::zeros(8));
        let (vals, vecs) = hermitian_eigen(&h);
        let dt = 0.01;
        let mut psi: Vec<C<f64>> = (0..8).map(|i| cplx(1.0 + i as f64, 0.5 * i as f64)).collect();
        let v0 = DVector::from_vec(psi.clone());
        let mut t = vec![czero(); 8];
        let mut nx = vec![czero(); 8];
        gen.step(&gen.combined(0.0), dt, &mut psi, &mut t, &mut nx).unwrap();
        let mut want = DVector::from_element(8, czero());
        for (e, v) in vals.iter().zip(&vecs) {
            want += v * (v.dotc(&v0) * C::new((-e * dt).cos(), -(e * dt).sin()));
        }
        for i in 0..8 {
            assert!((psi[i] - want[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn undriven_evolution_is_diagonal_in_dressed_basis() {
        let dev = DeviceParams::<f64>::paper_table_i();
        let pulse = PulseParams::new(0.0, 0.3, 0.1, 20.0, -0.015).unwrap();
        let settings = EvolutionSettings::default().with_dt(0.01);
        let prop = Propagator::for_pulse(&dev, &pulse).unwrap();
        let spec = prop.frame_spectrum().unwrap();
        let labels = BasisLabel::COMPUTATIONAL;
        let vecs: Vec<_> = labels.iter().map(|&l| spec.get(l).unwrap().vector.clone()).collect();
        let out = prop.propagate(&pulse, &settings, &vecs).unwrap();
        for (a, la) in labels.iter().enumerate() {
            let e = spec.get(*la).unwrap().energy;
            for (b, _) in labels.iter().enumerate() {
                let amp = vecs[b].dotc(&out[a]);
                if a == b {
                    let want = C::new((-e * 20.0).cos(), -(e * 20.0).sin());
                    assert!((amp - want).norm() < 1e-9, "{amp} vs {want}");
                } else {
                    assert!(amp.norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn unitary_is_unitary_and_composes() {
        let dev = small_device();
        let pulse = PulseParams::new(0.02, 0.3, 0.1, 10.0, 0.0)
            .unwrap()
            .with_drive_freq(5.49);
        let settings = EvolutionSettings::default().with_dt(0.005);
        let prop = Propagator::new(&dev, 5.49).unwrap();
        let n = settings.steps(pulse.t_f);
        let full = prop.unitary(&pulse, &settings).unwrap();
        assert!(full.unitarity_defect() < 1e-10);
        let first = prop.unitary_steps(&pulse, &settings, 0..n / 2).unwrap();
        let second = prop.unitary_steps(&pulse, &settings, n / 2..n).unwrap();
        let composed = second.mul(&first);
        assert!(composed.sub(&full).max_abs() < 1e-10);
    }

    #[test]
    fn trajectory_conserves_norm() {
        let dev = small_device();
        let pulse = PulseParams::new(0.02, 0.3, 0.1, 10.0, 0.0).unwrap();
        let settings = EvolutionSettings {
            dt: 0.005,
            sample_stride: 50,
        };
        let traj = evolve_trajectory(&dev, &pulse, &settings, InitialState::Bare(BasisLabel::new(0, 0, 0))).unwrap();
        assert_eq!(traj.times.len(), 2000 / 50 + 1);
        assert_eq!(traj.times[0], 0.0);
        assert!((traj.times.last().unwrap() - 10.0).abs() < 1e-12);
        for k in 0..traj.times.len() {
            assert!((traj.total_population(k) - 1.0).abs() < 1e-10);
        }
        assert_eq!(traj.leakage_trace[0], 0.0);
    }

    #[test]
    fn rejects_mismatched_frame() {
        let dev = small_device();
        let prop = Propagator::new(&dev, 5.49).unwrap();
        let pulse = PulseParams::new(0.02, 0.3, 0.1, 10.0, 0.0)
            .unwrap()
            .with_drive_freq(5.0);
        let e = prop.unitary(&pulse, &EvolutionSettings::default());
        assert!(matches!(e, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn oversized_step_fails_cleanly() {
        let dev = small_device();
        let prop = Propagator::new(&dev, 0.0).unwrap();
        let pulse = PulseParams::new(0.02, 0.3, 0.1, 1000.0, 0.0)
            .unwrap()
            .with_drive_freq(0.0);
        let settings = EvolutionSettings::default().with_dt(50.0);
        let e = prop.unitary(&pulse, &settings);
        assert!(matches!(e, Err(Error::IntegrationFailure { .. })), "{e:?}");
    }

    #[test]
    fn unitarity_threshold_follows_precision() {
        assert_eq!(unitarity_threshold::<f64>(), 1e-6);
        let t32 = unitarity_threshold::<f32>();
        assert!(t32 > 3e-4 && t32 < 4e-4);
    }
}
