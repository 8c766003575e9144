//! Dressed states: eigensystem of the drive-free Hamiltonian per excitation
//! sector, plus closed forms for the symmetric configuration.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::fockspace::{BasisState, HilbertSpace, Mode};
use crate::params::{Pair, ValidatedParams};
use crate::scalar::Scalar;
use crate::th::{build_hamiltonian, ThError};

/// Excited-manifold energies `E_e1..E_e5` for phases pi/2, equal couplings
/// `g`, equal splittings `h` and zero detunings.
///
/// `E_e1..E_e3` belong to the one-excitation sector, `E_e4, E_e5` to the
/// two-excitation sector.
pub fn closed_form_eigenvalues<T: Scalar>(g: T, h: T) -> [T; 5] {
    let two = T::lit(2.0);
    let r1 = (T::lit(8.0) * g * g + h * h).sqrt();
    let r2 = (T::lit(4.0) * g * g + h * h).sqrt();
    [
        (-h - r1) / two,
        -h,
        (-h + r1) / two,
        (-T::lit(3.0) * h + r2) / two,
        (-T::lit(3.0) * h - r2) / two,
    ]
}

/// Probe detuning at which a dressed level of energy `energy` is resonant.
pub fn resonant_detuning<T: Scalar>(energy: T) -> T {
    -energy
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DressedOptions {
    /// Set all atom and cavity detunings to zero.
    pub zero_detunings: bool,
    /// Keep only modes with a nonzero atom coupling.
    pub coupled_modes_only: bool,
}

impl Default for DressedOptions {
    fn default() -> Self {
        DressedOptions { zero_detunings: true, coupled_modes_only: true }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DressedState {
    pub energy: f64,
    /// Amplitudes over [`DressedSpectrum::basis`].
    pub amplitudes: Vec<C64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DressedSpectrum {
    pub sector: usize,
    /// Labels such as `|1,B1>`.
    pub basis: Vec<String>,
    /// Sorted by ascending energy.
    pub states: Vec<DressedState>,
}

impl DressedSpectrum {
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.energy).collect()
    }

    pub fn amplitude(&self, state: usize, label: &str) -> Option<C64> {
        let k = self.basis.iter().position(|b| b == label)?;
        Some(self.states[state].amplitudes[k])
    }

    /// Whether some eigenvalue lies within `tol` of `energy`.
    pub fn contains(&self, energy: f64, tol: f64) -> bool {
        self.states.iter().any(|s| (s.energy - energy).abs() <= tol)
    }
}

/// Diagonalize the drive-free Hamiltonian in the sector with `sector`
/// excitations (0, 1 or 2) on the one-photon-per-mode space.
pub fn numeric_dressed(
    params: &ValidatedParams<f64>,
    sector: usize,
    opts: DressedOptions,
) -> Result<DressedSpectrum, ThError> {
    let mut raw = params.raw().clone();
    raw.drive_1 = C64::new(0.0, 0.0);
    raw.drive_2 = C64::new(0.0, 0.0);
    if opts.zero_detunings {
        raw.atom_detuning_1 = 0.0;
        raw.atom_detuning_2 = 0.0;
        raw.delta_c_1 = 0.0;
        raw.delta_c_2 = 0.0;
    }
    let params = crate::params::validate(raw).expect("zeroing drive and detunings keeps parameters valid");
    let g = params.couplings();
    let active = |m: Mode| -> bool {
        if !opts.coupled_modes_only {
            return true;
        }
        match m {
            Mode::A1 => g.g_a(Pair::One) != 0.0,
            Mode::B1 => g.g_b(Pair::One) != 0.0,
            Mode::A2 => g.g_a(Pair::Two) != 0.0,
            Mode::B2 => g.g_b(Pair::Two) != 0.0,
        }
    };

    let space = HilbertSpace::single_photon();
    let h = build_hamiltonian(&space, &params)?;
    let keep: Vec<(usize, BasisState)> = space
        .states()
        .enumerate()
        .filter(|(_, s)| s.excitations() == sector)
        .filter(|(_, s)| Mode::ALL.iter().all(|&m| s.photons[m.slot()] == 0 || active(m)))
        .collect();
    let n = keep.len();
    let m = DMatrix::from_fn(n, n, |r, c| h.get(keep[r].0, keep[c].0));
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let states = order
        .into_iter()
        .map(|k| DressedState {
            energy: eig.eigenvalues[k],
            amplitudes: eig.eigenvectors.column(k).iter().copied().collect(),
        })
        .collect();
    Ok(DressedSpectrum {
        sector,
        basis: keep.iter().map(|(_, s)| s.to_string()).collect(),
        states,
    })
}
