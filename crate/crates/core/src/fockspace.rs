//! Truncated tensor-product basis `|atom, n(A1), n(B1), n(A2), n(B2)>` and
//! sparse complex operators on it.
//!
//! Basis order is fixed: the atomic level is the slowest index, followed by
//! the modes in the order A1, B1, A2, B2 (B2 fastest). Atomic levels are
//! stored zero-based, so level `|3>` has index 2.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ATOM_LEVELS: usize = 3;

/// Default bound on the Hilbert space dimension.
pub const DEFAULT_MAX_DIM: usize = 10_000;

/// Normal modes of the two pairs, in basis order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    A1,
    B1,
    A2,
    B2,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::A1, Mode::B1, Mode::A2, Mode::B2];

    pub fn slot(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::A1 => "A1",
            Mode::B1 => "B1",
            Mode::A2 => "A2",
            Mode::B2 => "B2",
        }
    }
}

/// Atomic level, one-based as in `|1>`, `|2>`, `|3>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    G1,
    G2,
    Excited,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::G1, Level::G2, Level::Excited];

    pub fn index(self) -> usize {
        match self {
            Level::G1 => 0,
            Level::G2 => 1,
            Level::Excited => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Level> {
        Level::ALL.get(i).copied()
    }

    pub fn ground(i: crate::params::Pair) -> Level {
        match i {
            crate::params::Pair::One => Level::G1,
            crate::params::Pair::Two => Level::G2,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum FockError {
    #[error("Hilbert space dimension {dim} exceeds the bound {bound}")]
    DimensionOverflow { dim: usize, bound: usize },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
}

/// A basis state: atomic level plus photon numbers in A1, B1, A2, B2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisState {
    pub level: Level,
    pub photons: [usize; 4],
}

impl BasisState {
    pub fn photon_count(&self) -> usize {
        self.photons.iter().sum()
    }

    /// Number of excitations: photons plus one if the atom is excited.
    pub fn excitations(&self) -> usize {
        self.photon_count() + usize::from(self.level == Level::Excited)
    }
}

impl fmt::Display for BasisState {
    /// Renders e.g. `|1,B1>`, `|3,vac>`, `|2,B1B2>`, `|1,2A1>`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{},", self.level.index() + 1)?;
        if self.photon_count() == 0 {
            return write!(f, "vac>");
        }
        for m in Mode::ALL {
            match self.photons[m.slot()] {
                0 => {}
                1 => write!(f, "{}", m.label())?,
                n => write!(f, "{n}{}", m.label())?,
            }
        }
        write!(f, ">")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HilbertSpace {
    caps: [usize; 4],
    photon_budget: Option<usize>,
    strides: [usize; 4],
    /// Photon configurations in basis order.
    configs: Vec<[usize; 4]>,
    /// Position in `configs` for every point of the per-mode cap grid.
    lookup: Vec<Option<usize>>,
    dim: usize,
}

impl HilbertSpace {
    pub fn new(caps: [usize; 4]) -> Result<Self, FockError> {
        Self::with_bound(caps, DEFAULT_MAX_DIM)
    }

    pub fn with_bound(caps: [usize; 4], bound: usize) -> Result<Self, FockError> {
        Self::build(caps, None, bound)
    }

    /// Per-mode caps plus a cap on the total photon number.
    pub fn with_photon_budget(caps: [usize; 4], budget: usize) -> Result<Self, FockError> {
        Self::build(caps, Some(budget), DEFAULT_MAX_DIM)
    }

    fn build(caps: [usize; 4], photon_budget: Option<usize>, bound: usize) -> Result<Self, FockError> {
        let overflow = || FockError::DimensionOverflow { dim: usize::MAX, bound };
        let mut strides = [0usize; 4];
        let mut grid: usize = 1;
        for slot in (0..4).rev() {
            strides[slot] = grid;
            grid = caps[slot].checked_add(1).and_then(|n| grid.checked_mul(n)).ok_or_else(overflow)?;
        }
        let full = grid.checked_mul(ATOM_LEVELS).ok_or_else(overflow)?;
        if photon_budget.is_none() && full > bound {
            return Err(FockError::DimensionOverflow { dim: full, bound });
        }
        if grid > bound.saturating_mul(64) {
            return Err(overflow());
        }
        let mut configs = Vec::new();
        let mut lookup = vec![None; grid];
        for (g, slot) in lookup.iter_mut().enumerate() {
            let mut rest = g;
            let mut n = [0usize; 4];
            for k in 0..4 {
                n[k] = rest / strides[k];
                rest %= strides[k];
            }
            if photon_budget.is_none_or(|b| n.iter().sum::<usize>() <= b) {
                *slot = Some(configs.len());
                configs.push(n);
            }
        }
        let dim = configs.len() * ATOM_LEVELS;
        if dim > bound {
            return Err(FockError::DimensionOverflow { dim, bound });
        }
        Ok(HilbertSpace { caps, photon_budget, strides, configs, lookup, dim })
    }

    /// At most one photon per mode: dimension 48.
    pub fn single_photon() -> Self {
        Self::new([1; 4]).expect("48-dimensional space")
    }

    /// At most two photons in total: dimension 45.
    pub fn two_photon() -> Self {
        Self::with_photon_budget([2; 4], 2).expect("45-dimensional space")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn caps(&self) -> [usize; 4] {
        self.caps
    }

    pub fn cap(&self, mode: Mode) -> usize {
        self.caps[mode.slot()]
    }

    pub fn photon_budget(&self) -> Option<usize> {
        self.photon_budget
    }

    fn atom_stride(&self) -> usize {
        self.configs.len()
    }

    pub fn index(&self, state: &BasisState) -> Result<usize, FockError> {
        let mut g = 0;
        for slot in 0..4 {
            if state.photons[slot] > self.caps[slot] {
                return Err(FockError::IndexOutOfRange(format!(
                    "{} photons in {} exceeds cap {}",
                    state.photons[slot],
                    Mode::ALL[slot].label(),
                    self.caps[slot]
                )));
            }
            g += state.photons[slot] * self.strides[slot];
        }
        let k = self.lookup[g].ok_or_else(|| {
            FockError::IndexOutOfRange(format!("{state} exceeds the photon budget"))
        })?;
        Ok(state.level.index() * self.atom_stride() + k)
    }

    pub fn state(&self, index: usize) -> Result<BasisState, FockError> {
        if index >= self.dim {
            return Err(FockError::IndexOutOfRange(format!(
                "basis index {index} >= dimension {}",
                self.dim
            )));
        }
        let level = Level::from_index(index / self.atom_stride()).expect("in range");
        Ok(BasisState { level, photons: self.configs[index % self.atom_stride()] })
    }

    pub fn states(&self) -> impl Iterator<Item = BasisState> + '_ {
        (0..self.dim).map(|i| self.state(i).expect("in range"))
    }

    /// Annihilation operator of `mode` with hard truncation at the cap.
    pub fn annihilation(&self, mode: Mode) -> OperatorMatrix {
        let slot = mode.slot();
        let mut op = OperatorBuilder::new(self.dim);
        for (i, s) in self.states().enumerate() {
            let n = s.photons[slot];
            if n > 0 {
                let mut t = s;
                t.photons[slot] -= 1;
                let j = self.index(&t).expect("lowering stays inside the space");
                op.add(j, i, C64::new((n as f64).sqrt(), 0.0));
            }
        }
        op.build()
    }

    /// Creation operator; the amplitude that would leave the cap is dropped.
    pub fn creation(&self, mode: Mode) -> OperatorMatrix {
        self.annihilation(mode).adjoint()
    }

    pub fn number(&self, mode: Mode) -> OperatorMatrix {
        let mut op = OperatorBuilder::new(self.dim);
        for (i, s) in self.states().enumerate() {
            let n = s.photons[mode.slot()];
            if n > 0 {
                op.add(i, i, C64::new(n as f64, 0.0));
            }
        }
        op.build()
    }

    /// `|i><j|` on the atom, identity on the modes.
    pub fn atomic_op(&self, i: Level, j: Level) -> OperatorMatrix {
        let mut op = OperatorBuilder::new(self.dim);
        let offset_i = i.index() * self.atom_stride();
        let offset_j = j.index() * self.atom_stride();
        for k in 0..self.atom_stride() {
            op.add(offset_i + k, offset_j + k, C64::new(1.0, 0.0));
        }
        op.build()
    }

    /// Checked variant of [`atomic_op`](Self::atomic_op) taking one-based level numbers.
    pub fn atomic_op_checked(&self, i: usize, j: usize) -> Result<OperatorMatrix, FockError> {
        let lvl = |k: usize| {
            k.checked_sub(1)
                .and_then(Level::from_index)
                .ok_or_else(|| FockError::IndexOutOfRange(format!("atomic level {k}")))
        };
        Ok(self.atomic_op(lvl(i)?, lvl(j)?))
    }

    /// `S_i^+ = |3><i|`
    pub fn raising(&self, ground: Level) -> OperatorMatrix {
        self.atomic_op(Level::Excited, ground)
    }

    /// `S_i^- = |i><3|`
    pub fn lowering(&self, ground: Level) -> OperatorMatrix {
        self.atomic_op(ground, Level::Excited)
    }

    pub fn identity(&self) -> OperatorMatrix {
        OperatorMatrix::identity(self.dim)
    }
}

/// Accumulates triplets; duplicates are summed on [`build`](Self::build).
#[derive(Debug, Clone)]
pub struct OperatorBuilder {
    dim: usize,
    entries: BTreeMap<(usize, usize), C64>,
}

impl OperatorBuilder {
    pub fn new(dim: usize) -> Self {
        OperatorBuilder { dim, entries: BTreeMap::new() }
    }

    pub fn add(&mut self, row: usize, col: usize, value: C64) {
        debug_assert!(row < self.dim && col < self.dim);
        *self.entries.entry((row, col)).or_default() += value;
    }

    pub fn add_op(&mut self, op: &OperatorMatrix, scale: C64) {
        for &(r, c, v) in &op.entries {
            self.add(r, c, v * scale);
        }
    }

    pub fn build(self) -> OperatorMatrix {
        let entries = self
            .entries
            .into_iter()
            .filter(|(_, v)| *v != C64::new(0.0, 0.0))
            .map(|((r, c), v)| (r, c, v))
            .collect();
        OperatorMatrix { dim: self.dim, entries }
    }
}

/// Square sparse complex matrix stored as row-major sorted, deduplicated
/// triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    dim: usize,
    entries: Vec<(usize, usize, C64)>,
}

impl OperatorMatrix {
    pub fn zeros(dim: usize) -> Self {
        OperatorMatrix { dim, entries: Vec::new() }
    }

    pub fn identity(dim: usize) -> Self {
        OperatorMatrix { dim, entries: (0..dim).map(|i| (i, i, C64::new(1.0, 0.0))).collect() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, usize, C64)] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.entries
            .binary_search_by(|&(r, c, _)| (r, c).cmp(&(row, col)))
            .map(|k| self.entries[k].2)
            .unwrap_or_default()
    }

    pub fn adjoint(&self) -> Self {
        let mut b = OperatorBuilder::new(self.dim);
        for &(r, c, v) in &self.entries {
            b.add(c, r, v.conj());
        }
        b.build()
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut b = OperatorBuilder::new(self.dim);
        b.add_op(self, s);
        b.build()
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let mut b = OperatorBuilder::new(self.dim);
        b.add_op(self, C64::new(1.0, 0.0));
        b.add_op(other, C64::new(1.0, 0.0));
        b.build()
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let mut b = OperatorBuilder::new(self.dim);
        b.add_op(self, C64::new(1.0, 0.0));
        b.add_op(other, C64::new(-1.0, 0.0));
        b.build()
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let rows = other.row_lists();
        let mut b = OperatorBuilder::new(self.dim);
        for &(r, k, v) in &self.entries {
            for &(c, w) in &rows[k] {
                b.add(r, c, v * w);
            }
        }
        b.build()
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).sub(&other.mul(self))
    }

    /// Entries grouped by row: `rows[r] = [(col, value)]`.
    pub fn row_lists(&self) -> Vec<Vec<(usize, C64)>> {
        let mut rows = vec![Vec::new(); self.dim];
        for &(r, c, v) in &self.entries {
            rows[r].push((c, v));
        }
        rows
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.sub(other).entries.iter().map(|e| e.2.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|e| e.2.norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.adjoint()) <= tol
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<C64> {
        let mut m = vec![C64::new(0.0, 0.0); self.dim * self.dim];
        for &(r, c, v) in &self.entries {
            m[r * self.dim + c] = v;
        }
        m
    }

    /// `Tr(rho * self)` for a dense row-major `rho`.
    pub fn expectation(&self, rho: &[C64]) -> C64 {
        debug_assert_eq!(rho.len(), self.dim * self.dim);
        self.entries.iter().map(|&(r, c, v)| v * rho[c * self.dim + r]).sum()
    }

    /// Coordinate-triplet dump: a `# dim N nnz M` header then one
    /// `row col re im` line per entry, zero-based.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# dim {} nnz {}", self.dim, self.entries.len())?;
        for &(r, c, v) in &self.entries {
            writeln!(w, "{r} {c} {:e} {:e}", v.re, v.im)?;
        }
        Ok(())
    }
}
