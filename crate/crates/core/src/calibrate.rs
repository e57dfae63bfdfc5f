//! Pulse optimization against the calibration cost and characterization
//! sweeps over gate time and drive detuning.

use std::sync::Mutex;

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use argmin_math::{ArgminAdd, ArgminMul, ArgminSub};
use rayon::prelude::*;

use crate::device::DeviceParams;
use crate::error::{Error, Result};
use crate::metrics::{GateReport, GateSimulator, COST_SENTINEL};
use crate::num::{lit, Real};
use crate::propagator::EvolutionSettings;
use crate::pulse::{area_matched_amp0, PulseParams};
use crate::spectrum::{failure_reason, CellStatus};

/// Shape coefficients used when no initial point is supplied.
pub const DEFAULT_SEED_LAMBDAS: (f64, f64) = (0.3, 0.1);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeSettings<T = f64> {
    /// Starting `(amp0 GHz, lambda1, lambda2)`; `None` uses the
    /// area-matched seed.
    pub initial: Option<(T, T, T)>,
    pub max_evals: usize,
    /// Stop as soon as the best cost is at or below this value.
    pub cost_tol: T,
    /// Initial simplex edge relative to each starting coordinate.
    pub simplex_scale: T,
}

impl<T: Real> Default for OptimizeSettings<T> {
    fn default() -> Self {
        Self {
            initial: None,
            max_evals: 400,
            cost_tol: lit(1e-6),
            simplex_scale: lit(0.1),
        }
    }
}

impl<T: Real> OptimizeSettings<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_evals < 10 {
            return Err(Error::InvalidArgument(format!(
                "max_evals must be at least 10, got {}",
                self.max_evals
            )));
        }
        if !(self.simplex_scale.is_finite() && self.simplex_scale > T::zero()) {
            return Err(Error::InvalidArgument("simplex_scale must be positive".into()));
        }
        if !self.cost_tol.is_finite() {
            return Err(Error::InvalidArgument("cost_tol must be finite".into()));
        }
        if let Some((a, l1, l2)) = self.initial {
            if !(a.is_finite() && l1.is_finite() && l2.is_finite()) {
                return Err(Error::InvalidArgument("initial point must be finite".into()));
            }
        }
        Ok(())
    }

    /// Starting point for a gate of duration `t_f`.
    pub fn seed(&self, t_f: T) -> (T, T, T) {
        self.initial.unwrap_or_else(|| {
            let (l1, l2) = (lit::<T>(DEFAULT_SEED_LAMBDAS.0), lit::<T>(DEFAULT_SEED_LAMBDAS.1));
            (area_matched_amp0(t_f, l2), l1, l2)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome<T = f64> {
    pub pulse: PulseParams<T>,
    pub report: GateReport<T>,
    pub cost: T,
    pub evaluations: usize,
    /// Whether `cost <= cost_tol` was reached.
    pub converged: bool,
    /// Best cost seen after each evaluation.
    pub history: Vec<T>,
}

struct Tracker<T> {
    evals: usize,
    best: Option<([T; 3], T)>,
    history: Vec<T>,
}

struct CostProblem<'a, T: Real> {
    sim: &'a GateSimulator<T>,
    t_f: T,
    budget: usize,
    tracker: &'a Mutex<Tracker<T>>,
}

#[derive(Debug, thiserror::Error)]
#[error("evaluation budget exhausted")]
struct BudgetExhausted;

impl<T: Real> CostFunction for CostProblem<'_, T> {
    type Param = Vec<T>;
    type Output = T;

    fn cost(&self, p: &Self::Param) -> std::result::Result<T, argmin::core::Error> {
        let mut tr = self.tracker.lock().expect("tracker lock");
        if tr.evals >= self.budget {
            return Err(BudgetExhausted.into());
        }
        let c = self.sim.cost(p[0], p[1], p[2], self.t_f);
        tr.evals += 1;
        if tr.best.map_or(true, |(_, b)| c < b) {
            tr.best = Some(([p[0], p[1], p[2]], c));
        }
        let best = tr.best.map(|(_, b)| b).unwrap_or(c);
        tr.history.push(best);
        Ok(c)
    }
}

fn initial_simplex<T: Real>(x0: [T; 3], scale: T) -> Vec<Vec<T>> {
    // Fallback magnitudes for coordinates that start at zero.
    let floors = [lit::<T>(0.01), T::one(), T::one()];
    let mut simplex = vec![x0.to_vec()];
    for i in 0..3 {
        let mut v = x0.to_vec();
        let mag = if x0[i] != T::zero() { x0[i].abs() } else { floors[i] };
        v[i] += scale * mag;
        simplex.push(v);
    }
    simplex
}

/// Nelder-Mead descent of `||dtheta| - pi|^2 + L1` over
/// `(amp0, lambda1, lambda2)` at fixed duration and detuning.
///
/// Deterministic for fixed inputs. Running out of evaluations is reported
/// through `converged`, not as an error.
pub fn optimize_pulse<T>(
    device: &DeviceParams<T>,
    t_f: T,
    detuning: T,
    settings: &OptimizeSettings<T>,
    evolution: &EvolutionSettings<T>,
) -> Result<OptimizeOutcome<T>>
where
    T: Real + argmin::core::ArgminFloat + std::iter::Sum<T>,
    Vec<T>: ArgminAdd<Vec<T>, Vec<T>> + ArgminSub<Vec<T>, Vec<T>> + ArgminMul<T, Vec<T>>,
{
    settings.validate()?;
    evolution.validate(t_f)?;
    let sim = GateSimulator::new(device, detuning, *evolution)?;
    optimize_with(&sim, t_f, settings)
}

fn optimize_with<T>(sim: &GateSimulator<T>, t_f: T, settings: &OptimizeSettings<T>) -> Result<OptimizeOutcome<T>>
where
    T: Real + argmin::core::ArgminFloat + std::iter::Sum<T>,
    Vec<T>: ArgminAdd<Vec<T>, Vec<T>> + ArgminSub<Vec<T>, Vec<T>> + ArgminMul<T, Vec<T>>,
{
    let (a, l1, l2) = settings.seed(t_f);
    let tracker = Mutex::new(Tracker {
        evals: 0,
        best: None,
        history: Vec::with_capacity(settings.max_evals),
    });
    let problem = CostProblem {
        sim,
        t_f,
        budget: settings.max_evals,
        tracker: &tracker,
    };
    let solver = NelderMead::new(initial_simplex([a, l1, l2], settings.simplex_scale))
        .with_sd_tolerance(T::zero())
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let run = Executor::new(problem, solver)
        .configure(|s| s.max_iters(u64::MAX).target_cost(settings.cost_tol))
        .timer(false)
        .run();
    if let Err(e) = run {
        if e.downcast_ref::<BudgetExhausted>().is_none() {
            return Err(Error::InvalidArgument(format!("optimizer failed: {e}")));
        }
    }
    let tracker = tracker.into_inner().expect("tracker lock");
    let ([amp0, lambda1, lambda2], cost) = tracker
        .best
        .ok_or_else(|| Error::InvalidArgument("optimizer made no evaluations".into()))?;
    let pulse = sim.pulse(amp0, lambda1, lambda2, t_f);
    let report = sim.report(amp0, lambda1, lambda2, t_f)?;
    Ok(OptimizeOutcome {
        pulse,
        report,
        cost,
        evaluations: tracker.evals,
        converged: cost <= settings.cost_tol && cost < lit(COST_SENTINEL),
        history: tracker.history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepMode<T = f64> {
    /// Re-propagate one envelope at every cell, stretched to the cell's
    /// gate time.
    FixedPulse(PulseParams<T>),
    /// Re-optimize the envelope at every cell.
    Optimize(OptimizeSettings<T>),
}

/// One cell of a characterization sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow<T = f64> {
    /// Gate time in ns.
    pub t_g: T,
    /// Drive detuning in GHz.
    pub detuning: T,
    /// Present when the cell evaluated successfully.
    pub report: Option<GateReport<T>>,
    /// Envelope used (the optimized one in optimize mode).
    pub pulse: Option<PulseParams<T>>,
    pub status: CellStatus,
}

impl<T: Real> SweepRow<T> {
    pub fn leakage(&self) -> Option<T> {
        self.report.map(|r| r.leakage)
    }

    pub fn phase_error(&self) -> Option<T> {
        self.report.map(|r| r.phase_error)
    }

    pub fn infidelity(&self) -> Option<T> {
        self.report.map(|r| r.infidelity())
    }
}

fn run_cell<T>(
    device: &DeviceParams<T>,
    t_g: T,
    detuning: T,
    mode: &SweepMode<T>,
    evolution: &EvolutionSettings<T>,
) -> Result<(GateReport<T>, PulseParams<T>)>
where
    T: Real + argmin::core::ArgminFloat + std::iter::Sum<T>,
    Vec<T>: ArgminAdd<Vec<T>, Vec<T>> + ArgminSub<Vec<T>, Vec<T>> + ArgminMul<T, Vec<T>>,
{
    evolution.validate(t_g)?;
    let sim = GateSimulator::new(device, detuning, *evolution)?;
    match mode {
        SweepMode::FixedPulse(p) => {
            let report = sim.report(p.amp0, p.lambda1, p.lambda2, t_g)?;
            Ok((report, sim.pulse(p.amp0, p.lambda1, p.lambda2, t_g)))
        }
        SweepMode::Optimize(s) => {
            let out = optimize_with(&sim, t_g, s)?;
            Ok((out.report, out.pulse))
        }
    }
}

/// Gate metrics on the `t_g_grid x detuning_grid` product, gate-time major.
/// Cells run in parallel; the row order never depends on scheduling.
pub fn sweep_2d<T>(
    device: &DeviceParams<T>,
    t_g_grid: &[T],
    detuning_grid: &[T],
    mode: &SweepMode<T>,
    evolution: &EvolutionSettings<T>,
) -> Result<Vec<SweepRow<T>>>
where
    T: Real + argmin::core::ArgminFloat + std::iter::Sum<T>,
    Vec<T>: ArgminAdd<Vec<T>, Vec<T>> + ArgminSub<Vec<T>, Vec<T>> + ArgminMul<T, Vec<T>>,
{
    if t_g_grid.is_empty() || detuning_grid.is_empty() {
        return Err(Error::InvalidArgument("sweep grids must be nonempty".into()));
    }
    device.validate()?;
    match mode {
        SweepMode::FixedPulse(p) => p.validate()?,
        SweepMode::Optimize(s) => s.validate()?,
    }
    let cells: Vec<(T, T)> = t_g_grid
        .iter()
        .flat_map(|&t| detuning_grid.iter().map(move |&d| (t, d)))
        .collect();
    Ok(cells
        .par_iter()
        .map(|&(t_g, detuning)| match run_cell(device, t_g, detuning, mode, evolution) {
            Ok((report, pulse)) => SweepRow {
                t_g,
                detuning,
                report: Some(report),
                pulse: Some(pulse),
                status: CellStatus::Ok,
            },
            Err(e) => SweepRow {
                t_g,
                detuning,
                report: None,
                pulse: None,
                status: CellStatus::Failed(failure_reason(&e)),
            },
        })
        .collect())
}

/// One row per detuning at fixed gate time.
pub fn sweep_detuning<T>(
    device: &DeviceParams<T>,
    t_f: T,
    detuning_grid: &[T],
    mode: &SweepMode<T>,
    evolution: &EvolutionSettings<T>,
) -> Result<Vec<SweepRow<T>>>
where
    T: Real + argmin::core::ArgminFloat + std::iter::Sum<T>,
    Vec<T>: ArgminAdd<Vec<T>, Vec<T>> + ArgminSub<Vec<T>, Vec<T>> + ArgminMul<T, Vec<T>>,
{
    sweep_2d(device, &[t_f], detuning_grid, mode, evolution)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coarse() -> EvolutionSettings<f64> {
        EvolutionSettings::default().with_dt(0.05)
    }

    #[test]
    fn settings_validation() {
        let s = OptimizeSettings::<f64> {
            max_evals: 9,
            ..Default::default()
        };
        assert!(s.validate().is_err());
        assert!(OptimizeSettings::<f64>::default().validate().is_ok());
        let bad = OptimizeSettings {
            simplex_scale: 0.0,
            ..OptimizeSettings::<f64>::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn default_seed_is_area_matched() {
        let (a, l1, l2) = OptimizeSettings::<f64>::default().seed(250.0);
        assert_eq!((l1, l2), DEFAULT_SEED_LAMBDAS);
        assert!((a - 2.0 / (250.0 * 0.9)).abs() < 1e-15);
        let given = OptimizeSettings {
            initial: Some((0.008, 0.3, 0.1)),
            ..Default::default()
        };
        assert_eq!(given.seed(250.0), (0.008, 0.3, 0.1));
    }

    #[test]
    fn simplex_uses_relative_steps_and_floors() {
        let s = initial_simplex([0.008_f64, 0.0, -0.5], 0.1);
        assert_eq!(s.len(), 4);
        assert!((s[1][0] - 0.0088).abs() < 1e-15);
        assert!((s[2][1] - 0.1).abs() < 1e-15);
        assert!((s[3][2] + 0.45).abs() < 1e-15);
    }

    #[test]
    fn budget_history_and_report_integrity() {
        let dev = DeviceParams::<f64>::paper_table_i();
        let settings = OptimizeSettings {
            max_evals: 12,
            ..Default::default()
        };
        let out = optimize_pulse(&dev, 60.0, -0.015, &settings, &coarse()).unwrap();
        assert_eq!(out.evaluations, 12);
        assert_eq!(out.history.len(), 12);
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*out.history.last().unwrap(), out.cost);
        assert!(!out.converged);
        let again = GateSimulator::new(&dev, -0.015, coarse())
            .unwrap()
            .cost(out.pulse.amp0, out.pulse.lambda1, out.pulse.lambda2, 60.0);
        assert!((again - out.cost).abs() <= 1e-9);
        assert!((out.report.cost() - out.cost).abs() <= 1e-9);
        let twice = optimize_pulse(&dev, 60.0, -0.015, &settings, &coarse()).unwrap();
        assert_eq!(out, twice);
    }

    #[test]
    fn zero_drive_sweep_has_no_leakage() {
        let dev = DeviceParams::<f64>::paper_table_i();
        let pulse = PulseParams::new(0.0, 0.3, 0.1, 50.0, 0.0).unwrap();
        let rows = sweep_detuning(&dev, 50.0, &[-0.02, -0.01, 0.0], &SweepMode::FixedPulse(pulse), &coarse()).unwrap();
        assert_eq!(rows.len(), 3);
        for r in &rows {
            assert!(r.status.is_ok());
            assert!(r.leakage().unwrap() <= 1e-8);
        }
    }

    #[test]
    fn grid_order_is_gate_time_major() {
        let dev = DeviceParams::<f64>::paper_table_i();
        let pulse = PulseParams::<f64>::preset("tableII-a").unwrap();
        let rows = sweep_2d(&dev, &[40.0, 50.0], &[-0.015, -0.01], &SweepMode::FixedPulse(pulse), &coarse()).unwrap();
        let cells: Vec<_> = rows.iter().map(|r| (r.t_g, r.detuning)).collect();
        assert_eq!(cells, vec![(40.0, -0.015), (40.0, -0.01), (50.0, -0.015), (50.0, -0.01)]);
    }

    #[test]
    fn failing_cells_are_flagged() {
        let dev = DeviceParams::<f64>::paper_table_i();
        let pulse = PulseParams::<f64>::preset("tableII-a").unwrap();
        // 0.2 ns is shorter than ten steps of 0.05 ns.
        let rows = sweep_2d(&dev, &[0.2, 50.0], &[-0.015], &SweepMode::FixedPulse(pulse), &coarse()).unwrap();
        assert!(!rows[0].status.is_ok());
        assert!(rows[0].report.is_none());
        assert!(rows[1].status.is_ok());
        assert!(sweep_2d(&dev, &[], &[0.0], &SweepMode::FixedPulse(pulse), &coarse()).is_err());
    }
}
