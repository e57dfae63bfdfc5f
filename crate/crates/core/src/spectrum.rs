//! Dressed spectrum of the static Hamiltonian and the quantities derived
//! from it: static ZZ (exact and fourth-order), effective exchange `J`, and
//! the state-dependent coupler transition frequencies.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::device::{build_static_hamiltonian, BasisLabel, DeviceParams, Dims, OperatorMatrix};
use crate::error::{Error, Result};
use crate::num::{cabs, czero, lit, norm_sqr, tau, Real, C};

/// Assignments below this overlap are rejected.
pub const LABEL_OVERLAP_THRESHOLD: f64 = 0.5;

const GHZ_TO_KHZ: f64 = 1e6;
const GHZ_TO_MHZ: f64 = 1e3;

#[derive(Debug, Clone)]
pub struct DressedState<T: Real = f64> {
    pub label: BasisLabel,
    /// Eigenenergy in rad/ns.
    pub energy: T,
    /// `|<label|vector>|^2`.
    pub overlap: T,
    /// Diagonal element `<label|H|label>` in rad/ns.
    pub bare_energy: T,
    pub vector: DVector<C<T>>,
}

impl<T: Real> DressedState<T> {
    pub fn energy_ghz(&self) -> T {
        self.energy / tau::<T>()
    }

    /// Dressing shift `E - <label|H|label>` in GHz.
    pub fn shift_ghz(&self) -> T {
        (self.energy - self.bare_energy) / tau::<T>()
    }
}

#[derive(Debug, Clone)]
pub struct DressedSpectrum<T: Real = f64> {
    dims: Dims,
    /// Ascending in energy.
    states: Vec<DressedState<T>>,
    by_label: HashMap<BasisLabel, usize>,
    /// Labels whose assignment fell below the overlap threshold.
    ambiguous: Vec<BasisLabel>,
}

impl<T: Real> DressedSpectrum<T> {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn states(&self) -> &[DressedState<T>] {
        &self.states
    }

    /// Fails if any of `labels` was assigned with overlap below the threshold.
    pub fn require(&self, labels: &[BasisLabel]) -> Result<()> {
        let bad: Vec<_> = labels
            .iter()
            .copied()
            .filter(|l| self.ambiguous.contains(l))
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::AmbiguousLabeling { labels: bad })
        }
    }

    pub fn ambiguous_labels(&self) -> &[BasisLabel] {
        &self.ambiguous
    }

    pub fn get(&self, label: BasisLabel) -> Result<&DressedState<T>> {
        self.by_label
            .get(&label)
            .map(|&k| &self.states[k])
            .ok_or_else(|| Error::InvalidArgument(format!("no dressed state labelled |{label}>")))
    }

    /// Energy of the dressed state in GHz.
    pub fn energy_ghz(&self, label: BasisLabel) -> Result<T> {
        Ok(self.get(label)?.energy_ghz())
    }

    /// Columns are the dressed eigenvectors for `labels`, in order.
    pub fn basis_matrix(&self, labels: &[BasisLabel]) -> Result<DMatrix<C<T>>> {
        let n = self.dims.total();
        let mut m = DMatrix::from_element(n, labels.len(), czero());
        for (j, &l) in labels.iter().enumerate() {
            m.set_column(j, &self.get(l)?.vector);
        }
        Ok(m)
    }
}

/// Splits indices into connected components of the nonzero pattern of `h`.
fn coupled_blocks<T: Real>(h: &DMatrix<C<T>>) -> Vec<Vec<usize>> {
    let n = h.nrows();
    let mut seen = vec![false; n];
    let mut blocks = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut block = vec![start];
        let mut cursor = 0;
        while cursor < block.len() {
            let i = block[cursor];
            cursor += 1;
            for j in 0..n {
                if !seen[j] && (h[(i, j)] != czero() || h[(j, i)] != czero()) {
                    seen[j] = true;
                    block.push(j);
                }
            }
        }
        block.sort_unstable();
        blocks.push(block);
    }
    blocks
}

/// Eigenpairs of a Hermitian matrix, ascending.
///
/// Symmetry sectors that are exactly decoupled (for instance fixed total
/// excitation number) are diagonalized separately, which keeps eigenvectors
/// from mixing across sectors at accidental degeneracies.
pub fn hermitian_eigen<T: Real>(h: &OperatorMatrix<T>) -> (Vec<T>, Vec<DVector<C<T>>>) {
    let m = h.as_matrix();
    let n = m.nrows();
    let mut pairs: Vec<(T, DVector<C<T>>)> = Vec::with_capacity(n);
    for block in coupled_blocks(m) {
        let k = block.len();
        let sub = DMatrix::from_fn(k, k, |r, c| m[(block[r], block[c])]);
        let eig = SymmetricEigen::new(sub);
        for (col, &value) in eig.eigenvalues.iter().enumerate() {
            let mut v = DVector::from_element(n, czero());
            for (r, &i) in block.iter().enumerate() {
                v[i] = eig.eigenvectors[(r, col)];
            }
            pairs.push((value, v));
        }
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    pairs.into_iter().unzip()
}

/// Diagonalizes `h` and labels each eigenvector by the bare state it overlaps
/// most.
///
/// Eigenvectors are processed in descending order of their best overlap and
/// each takes its best still-unclaimed bare label. Any assignment with
/// overlap below [`LABEL_OVERLAP_THRESHOLD`] is an error.
pub fn dressed_spectrum<T: Real>(h: &OperatorMatrix<T>, dims: Dims) -> Result<DressedSpectrum<T>> {
    let spec = label_eigenstates(h, dims)?;
    if spec.ambiguous.is_empty() {
        Ok(spec)
    } else {
        Err(Error::AmbiguousLabeling {
            labels: spec.ambiguous,
        })
    }
}

/// Same assignment as [`dressed_spectrum`], but low-overlap labels are
/// recorded instead of rejected; check them with [`DressedSpectrum::require`].
pub fn label_eigenstates<T: Real>(h: &OperatorMatrix<T>, dims: Dims) -> Result<DressedSpectrum<T>> {
    let n = dims.total();
    if h.dim() != n {
        return Err(Error::InvalidArgument(format!(
            "operator dimension {} does not match truncation {:?}",
            h.dim(),
            dims.levels
        )));
    }
    let (energies, vectors) = hermitian_eigen(h);

    let best = |v: &DVector<C<T>>| -> (usize, T) {
        v.iter()
            .map(|z| norm_sqr(*z))
            .enumerate()
            .fold((0, -T::one()), |acc, (i, p)| if p > acc.1 { (i, p) } else { acc })
    };
    let mut order: Vec<(usize, T)> = vectors.iter().map(|v| best(v).1).enumerate().collect();
    order.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });

    let threshold = lit::<T>(LABEL_OVERLAP_THRESHOLD);
    let mut claimed = vec![false; n];
    let mut assigned: Vec<Option<(usize, T)>> = vec![None; n];
    let mut failed = Vec::new();
    for &(k, _) in &order {
        let (idx, p) = vectors[k]
            .iter()
            .map(|z| norm_sqr(*z))
            .enumerate()
            .filter(|(i, _)| !claimed[*i])
            .fold((usize::MAX, -T::one()), |acc, (i, p)| if p > acc.1 { (i, p) } else { acc });
        claimed[idx] = true;
        assigned[k] = Some((idx, p));
        if p < threshold {
            failed.push(dims.label(idx));
        }
    }
    failed.sort();

    let mut states = Vec::with_capacity(n);
    let mut by_label = HashMap::with_capacity(n);
    for (k, (energy, mut vector)) in energies.into_iter().zip(vectors).enumerate() {
        let (idx, overlap) = assigned[k].expect("every eigenvector is assigned");
        // fix the gauge so the amplitude on the labelling bare state is real positive
        let pivot = vector[idx];
        let norm = cabs(pivot);
        if norm > T::zero() {
            let rot = pivot.conj() / C::new(norm, T::zero());
            vector.iter_mut().for_each(|z| *z *= rot);
        }
        let label = dims.label(idx);
        by_label.insert(label, k);
        states.push(DressedState {
            label,
            energy,
            overlap,
            bare_energy: h.get(idx, idx).re,
            vector,
        });
    }
    Ok(DressedSpectrum {
        dims,
        states,
        by_label,
        ambiguous: failed,
    })
}

/// Labelled spectrum of the device's static Hamiltonian. Only `required`
/// labels must pass the overlap threshold.
pub fn device_spectrum<T: Real>(
    device: &DeviceParams<T>,
    required: &[BasisLabel],
) -> Result<DressedSpectrum<T>> {
    let h = build_static_hamiltonian(device)?;
    let spec = label_eigenstates(&h, device.dims())?;
    spec.require(required)?;
    Ok(spec)
}

/// `|m0n>` and `|m1n>` for `m, n` in `{0, 1}`.
pub const COUPLER_TRANSITION_LABELS: [BasisLabel; 8] = [
    BasisLabel::new(0, 0, 0),
    BasisLabel::new(1, 0, 0),
    BasisLabel::new(0, 0, 1),
    BasisLabel::new(1, 0, 1),
    BasisLabel::new(0, 1, 0),
    BasisLabel::new(1, 1, 0),
    BasisLabel::new(0, 1, 1),
    BasisLabel::new(1, 1, 1),
];

/// ZZ of a labelled spectrum, `/2pi` in kHz.
///
/// The bare part of the combination vanishes identically, so only dressing
/// shifts enter; this avoids cancelling four ~10 GHz energies.
pub fn zz_from_spectrum<T: Real>(spec: &DressedSpectrum<T>) -> Result<T> {
    spec.require(&BasisLabel::COMPUTATIONAL)?;
    let [s00, s10, s01, s11] = BasisLabel::COMPUTATIONAL.map(|l| spec.get(l).map(|s| s.shift_ghz()));
    let zeta = (s11? - s10?) - (s01? - s00?);
    Ok(zeta * lit::<T>(GHZ_TO_KHZ))
}

/// Static ZZ from exact diagonalization, `/2pi` in kHz.
pub fn zz_exact<T: Real>(device: &DeviceParams<T>) -> Result<T> {
    zz_from_spectrum(&device_spectrum(device, &BasisLabel::COMPUTATIONAL)?)
}

fn require_nonzero<T: Real>(name: &str, value: T, scale: T) -> Result<T> {
    if value.abs() <= T::EPSILON * lit::<T>(64.0) * scale {
        Err(Error::SingularConfiguration(format!("{name} vanishes")))
    } else {
        Ok(value)
    }
}

fn frequency_scale<T: Real>(device: &DeviceParams<T>) -> T {
    device
        .q1
        .frequency
        .abs()
        .max(device.coupler.frequency.abs())
        .max(device.q2.frequency.abs())
        .max(T::one())
}

/// Fourth-order closed form for the static ZZ, `/2pi` in kHz.
///
/// Second- and third-order contributions vanish identically, so this is the
/// leading term. No diagonalization is involved.
pub fn zz_perturbative<T: Real>(device: &DeviceParams<T>) -> Result<T> {
    let scale = frequency_scale(device);
    let a1 = device.q1.anharmonicity;
    let ac = device.coupler.anharmonicity;
    let a2 = device.q2.anharmonicity;
    let d1 = require_nonzero("Delta_1", device.delta1(), scale)?;
    let d2 = require_nonzero("Delta_2", device.delta2(), scale)?;
    let d12 = device.delta12();
    let lower = require_nonzero("Delta_12 - alpha_2", d12 - a2, scale)?;
    let upper = require_nonzero("Delta_12 + alpha_1", d12 + a1, scale)?;
    let coupler2 = require_nonzero("Delta_1 + Delta_2 - alpha_c", d1 + d2 - ac, scale)?;

    let g1 = device.g1c;
    let g2 = device.g2c;
    let prefactor = lit::<T>(2.0) * g1 * g1 * g2 * g2;
    let inv_sum = T::one() / d1 + T::one() / d2;
    let bracket = T::one() / (d1 * d1 * lower) - T::one() / (d2 * d2 * upper)
        + inv_sum * inv_sum / coupler2;
    Ok(prefactor * bracket * lit::<T>(GHZ_TO_KHZ))
}

/// Effective qubit-qubit exchange `g1c g2c / 2 (1/Delta_1 + 1/Delta_2)`,
/// `/2pi` in MHz.
pub fn effective_j<T: Real>(device: &DeviceParams<T>) -> Result<T> {
    let scale = frequency_scale(device);
    let d1 = require_nonzero("Delta_1", device.delta1(), scale)?;
    let d2 = require_nonzero("Delta_2", device.delta2(), scale)?;
    let j = device.g1c * device.g2c / lit::<T>(2.0) * (T::one() / d1 + T::one() / d2);
    Ok(j * lit::<T>(GHZ_TO_MHZ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZZReport<T = f64> {
    /// kHz.
    pub zeta_exact: T,
    /// kHz.
    pub zeta_pert4: T,
    /// MHz.
    pub j_eff: T,
    /// GHz.
    pub delta1: T,
    pub delta2: T,
    pub delta12: T,
}

pub fn zz_report<T: Real>(device: &DeviceParams<T>) -> Result<ZZReport<T>> {
    Ok(ZZReport {
        zeta_exact: zz_exact(device)?,
        zeta_pert4: zz_perturbative(device)?,
        j_eff: effective_j(device)?,
        delta1: device.delta1(),
        delta2: device.delta2(),
        delta12: device.delta12(),
    })
}

/// Coupler `|m0n> -> |m1n>` transition frequencies indexed `[m][n]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiReport<T = f64> {
    /// GHz.
    pub omega_c: [[T; 2]; 2],
    /// `omega_c[m][n] - omega_c[0][0]` in MHz.
    pub chi: [[T; 2]; 2],
}

impl<T: Real> ChiReport<T> {
    pub fn omega_c00(&self) -> T {
        self.omega_c[0][0]
    }
}

pub fn chi_from_spectrum<T: Real>(spec: &DressedSpectrum<T>) -> Result<ChiReport<T>> {
    spec.require(&COUPLER_TRANSITION_LABELS)?;
    let mut omega_c = [[T::zero(); 2]; 2];
    // dressing shift of each transition; the bare parts are identical
    let mut shift = [[T::zero(); 2]; 2];
    for m in 0..2u8 {
        for n in 0..2u8 {
            let lower = spec.get(BasisLabel::new(m, 0, n))?;
            let upper = spec.get(BasisLabel::new(m, 1, n))?;
            omega_c[m as usize][n as usize] = upper.energy_ghz() - lower.energy_ghz();
            shift[m as usize][n as usize] = upper.shift_ghz() - lower.shift_ghz();
        }
    }
    let mut chi = [[T::zero(); 2]; 2];
    for m in 0..2 {
        for n in 0..2 {
            chi[m][n] = (shift[m][n] - shift[0][0]) * lit::<T>(GHZ_TO_MHZ);
        }
    }
    Ok(ChiReport { omega_c, chi })
}

pub fn coupler_transitions<T: Real>(device: &DeviceParams<T>) -> Result<ChiReport<T>> {
    chi_from_spectrum(&device_spectrum(device, &COUPLER_TRANSITION_LABELS)?)
}

/// Outcome of one sweep cell; failures are data, not errors.
#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    Ok,
    Failed(String),
}

impl CellStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, CellStatus::Ok)
    }

    /// Single comma-free token for tables.
    pub fn token(&self) -> String {
        match self {
            CellStatus::Ok => "ok".to_string(),
            CellStatus::Failed(reason) => format!("failed:{}", reason.replace([',', ' '], "_")),
        }
    }
}

pub(crate) fn failure_reason(e: &Error) -> String {
    match e {
        Error::AmbiguousLabeling { .. } => "ambiguous-labeling".into(),
        Error::SingularConfiguration(_) => "singular".into(),
        Error::InvalidArgument(_) => "invalid-argument".into(),
        Error::IntegrationFailure { .. } => "integration-failure".into(),
        Error::PhaseUndefined { .. } => "phase-undefined".into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZzSweepRow<T = f64> {
    pub omega1: T,
    pub omega2: T,
    pub zeta_exact: Option<T>,
    pub zeta_pert4: Option<T>,
    pub status: CellStatus,
}

/// ZZ over an `omega_1 x omega_2` grid (GHz), `omega_1`-major.
pub fn zz_sweep<T: Real>(
    template: &DeviceParams<T>,
    omega1_grid: &[T],
    omega2_grid: &[T],
) -> Result<Vec<ZzSweepRow<T>>> {
    if omega1_grid.is_empty() || omega2_grid.is_empty() {
        return Err(Error::InvalidArgument("sweep grids must be nonempty".into()));
    }
    let cells: Vec<(T, T)> = omega1_grid
        .iter()
        .flat_map(|&w1| omega2_grid.iter().map(move |&w2| (w1, w2)))
        .collect();
    Ok(cells
        .into_par_iter()
        .map(|(w1, w2)| {
            let mut dev = *template;
            dev.q1.frequency = w1;
            dev.q2.frequency = w2;
            let exact = zz_exact(&dev);
            let pert = zz_perturbative(&dev);
            let status = match (&exact, &pert) {
                (Ok(_), Ok(_)) => CellStatus::Ok,
                (Err(e), _) | (_, Err(e)) => CellStatus::Failed(failure_reason(e)),
            };
            ZzSweepRow {
                omega1: w1,
                omega2: w2,
                zeta_exact: exact.ok(),
                zeta_pert4: pert.ok(),
                status,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChiSweepRow<T = f64> {
    /// Common coupling `g1c = g2c`, GHz.
    pub g: T,
    pub report: Option<ChiReport<T>>,
    pub status: CellStatus,
}

/// Coupler transition shifts versus a common qubit-coupler coupling.
pub fn chi_sweep<T: Real>(template: &DeviceParams<T>, g_grid: &[T]) -> Result<Vec<ChiSweepRow<T>>> {
    if g_grid.is_empty() {
        return Err(Error::InvalidArgument("sweep grid must be nonempty".into()));
    }
    Ok(g_grid
        .par_iter()
        .map(|&g| {
            let dev = template.with_couplings(g, g);
            match coupler_transitions(&dev) {
                Ok(r) => ChiSweepRow {
                    g,
                    report: Some(r),
                    status: CellStatus::Ok,
                },
                Err(e) => ChiSweepRow {
                    g,
                    report: None,
                    status: CellStatus::Failed(failure_reason(&e)),
                },
            }
        })
        .collect())
}
