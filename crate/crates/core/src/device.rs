//! Device parameters and operator construction on the truncated
//! qubit-coupler-qubit product space.
//!
//! All frequencies are stored as `omega / 2pi` in GHz. Hamiltonians carry the
//! `2pi`, so their entries are angular frequencies in rad/ns and a time in ns
//! multiplies them directly.
//!
//! Basis ordering is `|n1 nc n2>` with `q1` the most significant factor and
//! `q2` the least: `index = (n1 * L_c + n_c) * L_2 + n2`.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::num::{cabs, cplx, czero, lit, tau, Real, C};

pub const DEFAULT_LEVELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmonParams<T = f64> {
    /// `omega / 2pi` in GHz.
    pub frequency: T,
    /// `alpha / 2pi` in GHz, negative for a transmon.
    pub anharmonicity: T,
    pub levels: usize,
}

impl<T: Real> TransmonParams<T> {
    pub fn new(frequency: T, anharmonicity: T) -> Self {
        Self {
            frequency,
            anharmonicity,
            levels: DEFAULT_LEVELS,
        }
    }

    pub fn with_levels(mut self, levels: usize) -> Self {
        self.levels = levels;
        self
    }

    /// Bare energy `omega n + alpha n (n - 1) / 2` in GHz.
    pub fn bare_energy(&self, n: usize) -> T {
        let n = lit::<T>(n as f64);
        self.frequency * n + lit::<T>(0.5) * self.anharmonicity * n * (n - T::one())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Q1,
    Coupler,
    Q2,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::Q1, Slot::Coupler, Slot::Q2];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceParams<T = f64> {
    pub q1: TransmonParams<T>,
    pub coupler: TransmonParams<T>,
    pub q2: TransmonParams<T>,
    /// Qubit 1 to coupler coupling, `g / 2pi` in GHz.
    pub g1c: T,
    pub g2c: T,
}

impl<T: Real> DeviceParams<T> {
    pub fn new(
        q1: TransmonParams<T>,
        coupler: TransmonParams<T>,
        q2: TransmonParams<T>,
        g1c: T,
        g2c: T,
    ) -> Result<Self> {
        let device = Self {
            q1,
            coupler,
            q2,
            g1c,
            g2c,
        };
        device.validate()?;
        Ok(device)
    }

    /// Parameters of the straddling device used for the main gate study
    /// (6.5 / 5.5 / 4.5 GHz, -300 MHz anharmonicities, 80 MHz couplings).
    pub fn paper_table_i() -> Self {
        Self {
            q1: TransmonParams::new(lit(6.5), lit(-0.3)),
            coupler: TransmonParams::new(lit(5.5), lit(-0.3)),
            q2: TransmonParams::new(lit(4.5), lit(-0.3)),
            g1c: lit(0.080),
            g2c: lit(0.080),
        }
    }

    /// Parameters of the alternate device with the coupler above both qubits.
    pub fn paper_table_iii() -> Self {
        Self {
            q1: TransmonParams::new(lit(5.641), lit(-0.300)),
            coupler: TransmonParams::new(lit(6.317), lit(-0.303)),
            q2: TransmonParams::new(lit(5.507), lit(-0.381)),
            g1c: lit(0.040),
            g2c: lit(0.031),
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "paper-tableI" => Some(Self::paper_table_i()),
            "paper-tableIII" => Some(Self::paper_table_iii()),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 2] = ["paper-tableI", "paper-tableIII"];

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("q1", &self.q1), ("coupler", &self.coupler), ("q2", &self.q2)] {
            if t.levels < 2 {
                return Err(Error::InvalidArgument(format!(
                    "{name}.levels must be at least 2, got {}",
                    t.levels
                )));
            }
            if !t.frequency.is_finite() || !t.anharmonicity.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} parameters must be finite")));
            }
        }
        for (name, g) in [("g1c", self.g1c), ("g2c", self.g2c)] {
            if !g.is_finite() || g < T::zero() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and non-negative, got {g}"
                )));
            }
        }
        Ok(())
    }

    pub fn transmon(&self, slot: Slot) -> &TransmonParams<T> {
        match slot {
            Slot::Q1 => &self.q1,
            Slot::Coupler => &self.coupler,
            Slot::Q2 => &self.q2,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims::new([self.q1.levels, self.coupler.levels, self.q2.levels])
    }

    /// Copy with qubits exchanged (`q1 <-> q2`, `g1c <-> g2c`).
    pub fn swapped(&self) -> Self {
        Self {
            q1: self.q2,
            coupler: self.coupler,
            q2: self.q1,
            g1c: self.g2c,
            g2c: self.g1c,
        }
    }

    pub fn with_couplings(mut self, g1c: T, g2c: T) -> Self {
        self.g1c = g1c;
        self.g2c = g2c;
        self
    }

    pub fn with_levels(mut self, levels: usize) -> Self {
        self.q1.levels = levels;
        self.coupler.levels = levels;
        self.q2.levels = levels;
        self
    }

    /// `Delta_1 = omega_1 - omega_c` in GHz.
    pub fn delta1(&self) -> T {
        self.q1.frequency - self.coupler.frequency
    }

    /// `Delta_2 = omega_2 - omega_c` in GHz.
    pub fn delta2(&self) -> T {
        self.q2.frequency - self.coupler.frequency
    }

    /// `Delta_12 = omega_1 - omega_2` in GHz.
    pub fn delta12(&self) -> T {
        self.q1.frequency - self.q2.frequency
    }

    /// Sum of bare transmon energies for a product state, in GHz.
    pub fn bare_energy(&self, label: BasisLabel) -> T {
        self.q1.bare_energy(label.n1 as usize)
            + self.coupler.bare_energy(label.nc as usize)
            + self.q2.bare_energy(label.n2 as usize)
    }
}

/// Occupation triple `|n1 nc n2>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisLabel {
    pub n1: u8,
    pub nc: u8,
    pub n2: u8,
}

impl BasisLabel {
    pub const fn new(n1: u8, nc: u8, n2: u8) -> Self {
        Self { n1, nc, n2 }
    }

    /// Computational states `|m0n>` in the order `|00>, |10>, |01>, |11>`.
    pub const COMPUTATIONAL: [BasisLabel; 4] = [
        BasisLabel::new(0, 0, 0),
        BasisLabel::new(1, 0, 0),
        BasisLabel::new(0, 0, 1),
        BasisLabel::new(1, 0, 1),
    ];

    pub fn excitations(&self) -> usize {
        self.n1 as usize + self.nc as usize + self.n2 as usize
    }

    pub fn get(&self, slot: Slot) -> u8 {
        match slot {
            Slot::Q1 => self.n1,
            Slot::Coupler => self.nc,
            Slot::Q2 => self.n2,
        }
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.n1, self.nc, self.n2)
    }
}

impl std::str::FromStr for BasisLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().trim_start_matches('|').trim_end_matches('>');
        let digits: Vec<u8> = s
            .chars()
            .map(|c| c.to_digit(10).map(|d| d as u8))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::InvalidArgument(format!("bad basis label '{s}'")))?;
        match digits.as_slice() {
            [a, b, c] => Ok(BasisLabel::new(*a, *b, *c)),
            _ => Err(Error::InvalidArgument(format!(
                "basis label '{s}' must have exactly three digits"
            ))),
        }
    }
}

/// Level counts of the three factors and the flat-index mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub levels: [usize; 3],
}

impl Dims {
    pub fn new(levels: [usize; 3]) -> Self {
        Self { levels }
    }

    pub fn total(&self) -> usize {
        self.levels.iter().product()
    }

    pub fn contains(&self, label: BasisLabel) -> bool {
        (label.n1 as usize) < self.levels[0]
            && (label.nc as usize) < self.levels[1]
            && (label.n2 as usize) < self.levels[2]
    }

    pub fn index(&self, label: BasisLabel) -> Result<usize> {
        if !self.contains(label) {
            return Err(Error::InvalidArgument(format!(
                "label |{label}> outside truncation {:?}",
                self.levels
            )));
        }
        let [_, lc, l2] = self.levels;
        Ok((label.n1 as usize * lc + label.nc as usize) * l2 + label.n2 as usize)
    }

    pub fn label(&self, index: usize) -> BasisLabel {
        let [_, lc, l2] = self.levels;
        BasisLabel::new(
            (index / (lc * l2)) as u8,
            ((index / l2) % lc) as u8,
            (index % l2) as u8,
        )
    }

    pub fn labels(&self) -> impl Iterator<Item = BasisLabel> + '_ {
        (0..self.total()).map(move |i| self.label(i))
    }
}

/// Dense complex square matrix on the product space.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix<T: Real = f64>(DMatrix<C<T>>);

impl<T: Real> OperatorMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::from_element(dim, dim, czero()))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_matrix(m: DMatrix<C<T>>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidArgument(format!(
                "operator must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self(m))
    }

    /// Row-major constructor.
    pub fn from_row_slice(dim: usize, entries: &[C<T>]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::InvalidArgument(format!(
                "expected {} entries, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Ok(Self(DMatrix::from_row_slice(dim, dim, entries)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> C<T> {
        self.0[(row, col)]
    }

    pub fn as_matrix(&self) -> &DMatrix<C<T>> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C<T>> {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        Self(&self.0 * &rhs.0)
    }

    pub fn add(&self, rhs: &Self) -> Self {
        Self(&self.0 + &rhs.0)
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        Self(&self.0 - &rhs.0)
    }

    pub fn scale(&self, s: T) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn commutator(&self, rhs: &Self) -> Self {
        self.mul(rhs).sub(&rhs.mul(self))
    }

    pub fn kron(&self, rhs: &Self) -> Self {
        Self(self.0.kronecker(&rhs.0))
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> T {
        self.0.iter().fold(T::zero(), |m, z| m.max(cabs(*z)))
    }

    /// `max |H - H^dag|`.
    pub fn hermiticity_defect(&self) -> T {
        let n = self.dim();
        let mut worst = T::zero();
        for i in 0..n {
            for j in i..n {
                worst = worst.max(cabs(self.0[(i, j)] - self.0[(j, i)].conj()));
            }
        }
        worst
    }

    pub fn is_hermitian(&self, rel_tol: T) -> bool {
        self.hermiticity_defect() <= rel_tol * self.max_abs()
    }

    /// `max |U^dag U - I|`.
    pub fn unitarity_defect(&self) -> T {
        let g = self.0.adjoint() * &self.0;
        let n = self.dim();
        let mut worst = T::zero();
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max(cabs(g[(i, j)] - cplx(target, T::zero())));
            }
        }
        worst
    }

    pub fn is_diagonal(&self, tol: T) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || cabs(self.0[(i, j)]) <= tol))
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> T {
        let g = self.0.adjoint() * &self.0;
        let eig = nalgebra::SymmetricEigen::new(g);
        eig.eigenvalues
            .iter()
            .fold(T::zero(), |m, &v| m.max(v))
            .max(T::zero())
            .sqrt()
    }
}

/// Single-transmon annihilation operator with `<n-1|a|n> = sqrt(n)`.
pub fn lowering_operator<T: Real>(levels: usize) -> Result<OperatorMatrix<T>> {
    if levels < 2 {
        return Err(Error::InvalidArgument(format!(
            "lowering operator needs at least 2 levels, got {levels}"
        )));
    }
    let mut m = DMatrix::from_element(levels, levels, czero());
    for n in 1..levels {
        m[(n - 1, n)] = cplx(lit::<T>(n as f64).sqrt(), T::zero());
    }
    Ok(OperatorMatrix(m))
}

/// `op` acting on `slot`, identity on the other two factors.
pub fn embed<T: Real>(
    op: &OperatorMatrix<T>,
    slot: Slot,
    device: &DeviceParams<T>,
) -> Result<OperatorMatrix<T>> {
    let levels = device.transmon(slot).levels;
    if op.dim() != levels {
        return Err(Error::InvalidArgument(format!(
            "operator of dimension {} does not match {slot:?} with {levels} levels",
            op.dim()
        )));
    }
    let id = |l: usize| OperatorMatrix::<T>::identity(l);
    let [l1, lc, l2] = device.dims().levels;
    Ok(match slot {
        Slot::Q1 => op.kron(&id(lc)).kron(&id(l2)),
        Slot::Coupler => id(l1).kron(op).kron(&id(l2)),
        Slot::Q2 => id(l1).kron(&id(lc)).kron(op),
    })
}

struct Ladder<T: Real> {
    lower: OperatorMatrix<T>,
    raise: OperatorMatrix<T>,
    number: OperatorMatrix<T>,
    kerr: OperatorMatrix<T>,
}

fn ladder<T: Real>(device: &DeviceParams<T>, slot: Slot) -> Result<Ladder<T>> {
    let a = lowering_operator::<T>(device.transmon(slot).levels)?;
    let lower = embed(&a, slot, device)?;
    let raise = lower.adjoint();
    let number = raise.mul(&lower);
    let kerr = raise.mul(&raise).mul(&lower).mul(&lower);
    Ok(Ladder {
        lower,
        raise,
        number,
        kerr,
    })
}

/// Static Hamiltonian with every transmon frequency shifted by `-frame`.
fn hamiltonian_in_frame<T: Real>(device: &DeviceParams<T>, frame: T) -> Result<OperatorMatrix<T>> {
    device.validate()?;
    let dim = device.dims().total();
    let two_pi = tau::<T>();
    let half = lit::<T>(0.5);
    let mut h = OperatorMatrix::zeros(dim);
    let ladders = Slot::ALL
        .iter()
        .map(|&s| ladder(device, s))
        .collect::<Result<Vec<_>>>()?;
    for (slot, l) in Slot::ALL.iter().zip(&ladders) {
        let t = device.transmon(*slot);
        h = h
            .add(&l.number.scale(two_pi * (t.frequency - frame)))
            .add(&l.kerr.scale(two_pi * half * t.anharmonicity));
    }
    let c = &ladders[1];
    for (l, g) in [(&ladders[0], device.g1c), (&ladders[2], device.g2c)] {
        let exchange = l.raise.mul(&c.lower).add(&l.lower.mul(&c.raise));
        h = h.add(&exchange.scale(two_pi * g));
    }
    Ok(h)
}

/// Lab-frame static Hamiltonian in rad/ns.
pub fn build_static_hamiltonian<T: Real>(device: &DeviceParams<T>) -> Result<OperatorMatrix<T>> {
    hamiltonian_in_frame(device, T::zero())
}

/// Hamiltonian in the frame rotating at the drive frequency.
///
/// The full time-dependent Hamiltonian is
/// `static_part + 2pi * envelope(t) / 2 * drive_op` with the envelope in GHz.
#[derive(Debug, Clone)]
pub struct RotatingHamiltonian<T: Real = f64> {
    pub static_part: OperatorMatrix<T>,
    /// `a_c + a_c^dag` on the coupler.
    pub drive_op: OperatorMatrix<T>,
    pub drive_freq: T,
}

pub fn build_rotating_hamiltonian<T: Real>(
    device: &DeviceParams<T>,
    drive_freq: T,
) -> Result<RotatingHamiltonian<T>> {
    if !drive_freq.is_finite() || drive_freq < T::zero() {
        return Err(Error::InvalidArgument(format!(
            "drive frequency must be non-negative, got {drive_freq}"
        )));
    }
    let static_part = hamiltonian_in_frame(device, drive_freq)?;
    let c = ladder(device, Slot::Coupler)?;
    Ok(RotatingHamiltonian {
        static_part,
        drive_op: c.lower.add(&c.raise),
        drive_freq,
    })
}
