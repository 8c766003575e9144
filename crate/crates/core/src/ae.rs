//! Adiabatic elimination of the cavity modes.
//!
//! In the bad-cavity limit the modes follow the atom, leaving an effective
//! three-level master equation with shifted detunings, effective Rabi
//! frequencies and a Purcell-enhanced decay matrix.

use nalgebra::Matrix3;
use num_complex::{Complex, Complex64};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::solve_dense;
use crate::observables::Populations;
use crate::params::{ModeCouplings, Pair, ValidatedParams};
use crate::scalar::{cplx, imag_unit, real, Scalar};

/// Coupling-to-linewidth ratio above which the elimination is flagged.
pub const VALIDITY_RATIO: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AeError {
    #[error("degenerate mode response in the {family} family (|1 - f f |c|^2| = {value:e})")]
    DegenerateResponse { family: &'static str, value: f64 },
    #[error("effective Hamiltonian is not Hermitian (max deviation {0:e})")]
    NonHermitianConstruction(f64),
    #[error("effective generator is singular: {0}")]
    SingularGenerator(String),
    #[error("atomic steady state violates physical invariants: {0}")]
    NonPhysicalResult(String),
}

/// All constants of the effective atomic master equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveConstants<T: Scalar> {
    pub f_a1: Complex<T>,
    pub f_b1: Complex<T>,
    pub f_a2: Complex<T>,
    pub f_b2: Complex<T>,
    pub mu: Complex<T>,
    pub nu: Complex<T>,
    pub lambda_a: Complex<T>,
    pub lambda_b: Complex<T>,
    pub xi_a: Complex<T>,
    pub xi_b: Complex<T>,
    pub big_f_a: Complex<T>,
    pub big_f_b: Complex<T>,
    pub omega_a1: Complex<T>,
    pub omega_b1: Complex<T>,
    pub omega_a2: Complex<T>,
    pub omega_b2: Complex<T>,
    pub omega_1: Complex<T>,
    pub omega_2: Complex<T>,
    pub delta_11: T,
    pub delta_22: T,
    pub delta_12: Complex<T>,
    pub delta_21: Complex<T>,
    pub gamma_11: T,
    pub gamma_22: T,
    pub gamma_12: Complex<T>,
    pub gamma_21: Complex<T>,
}

impl<T: Scalar> EffectiveConstants<T> {
    /// Labeled JSON text for regression snapshots.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("constants serialize")
    }
}

/// Mode response `i / (kappa - i x)`.
fn response<T: Scalar>(kappa: T, x: T) -> Complex<T> {
    imag_unit::<T>() / cplx(kappa, -x)
}

pub fn effective_constants<T: Scalar>(
    params: &ValidatedParams<T>,
    g: &ModeCouplings<T>,
) -> Result<EffectiveConstants<T>, AeError> {
    let p1 = params.pair(Pair::One);
    let p2 = params.pair(Pair::Two);
    let two = T::lit(2.0);
    let sqrt2 = T::SQRT_2();

    for pair in Pair::BOTH {
        let pp = params.pair(pair);
        let ratio = g.g_a(pair).abs().max(g.g_b(pair).abs()) / pp.kappa;
        if ratio > T::lit(VALIDITY_RATIO) {
            log::warn!(
                "pair {}: coupling/linewidth = {ratio} exceeds {VALIDITY_RATIO}; adiabatic elimination may be inaccurate",
                pair.index() + 1
            );
        }
    }

    let f_a1 = response(p1.kappa, p1.cavity_detuning + p1.h);
    let f_b1 = response(p1.kappa, p1.cavity_detuning - p1.h);
    let f_a2 = response(p2.kappa, p2.cavity_detuning + p2.h);
    let f_b2 = response(p2.kappa, p2.cavity_detuning - p2.h);

    // Evaluated at t = 0; validation forbids p, q != 0 together with epsilon != 0.
    let mu = real(params.q() + params.p());
    let nu = real(params.p() - params.q());

    let one = real(T::one());
    let den_a = one - f_a1 * f_a2 * mu * mu.conj();
    let den_b = one - f_b1 * f_b2 * nu * nu.conj();
    for (family, den) in [("A", den_a), ("B", den_b)] {
        if !(den.norm() >= T::tiny()) {
            return Err(AeError::DegenerateResponse {
                family,
                value: den.norm().to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    let lambda_a = f_a1 / den_a;
    let lambda_b = f_b1 / den_b;
    let xi_a = f_a2 / den_a;
    let xi_b = f_b2 / den_b;
    let big_f_a = f_a1 * f_a2 / den_a;
    let big_f_b = f_b1 * f_b2 / den_b;

    let (ga1, ga2, gb1, gb2) = (real(g.g_a1), real(g.g_a2), real(g.g_b1), real(g.g_b2));
    let e1 = p1.drive / sqrt2;
    let e2 = p2.drive / sqrt2;
    let i = imag_unit::<T>();

    let omega_a1 = lambda_a.conj() * ga1 * e1 + big_f_a.conj() * mu * ga1 * e2;
    let omega_a2 = xi_a.conj() * ga2 * e2 + big_f_a.conj() * mu.conj() * ga2 * e1;
    let omega_b1 = i * lambda_b.conj() * gb1 * e1 + i * big_f_b.conj() * nu * gb1 * e2;
    let omega_b2 = i * xi_b.conj() * gb2 * e2 + i * big_f_b.conj() * nu.conj() * gb2 * e1;

    let sq = |x: T| x * x;
    let delta_11 = sq(g.g_a1) * lambda_a.re + sq(g.g_b1) * lambda_b.re;
    let delta_22 = sq(g.g_a2) * xi_a.re + sq(g.g_b2) * xi_b.re;
    let gamma_11 = two * (sq(g.g_a1) * lambda_a.im + sq(g.g_b1) * lambda_b.im) + p1.gamma;
    let gamma_22 = two * (sq(g.g_a2) * xi_a.im + sq(g.g_b2) * xi_b.im) + p2.gamma;
    let gamma_12 = (ga1 * ga2 * mu * real(big_f_a.im) + gb1 * gb2 * nu * real(big_f_b.im)) * two;
    let zero = real(T::zero());

    Ok(EffectiveConstants {
        f_a1,
        f_b1,
        f_a2,
        f_b2,
        mu,
        nu,
        lambda_a,
        lambda_b,
        xi_a,
        xi_b,
        big_f_a,
        big_f_b,
        omega_a1,
        omega_b1,
        omega_a2,
        omega_b2,
        omega_1: omega_a1 + omega_b1,
        omega_2: omega_a2 + omega_b2,
        delta_11,
        delta_22,
        delta_12: zero,
        delta_21: zero,
        gamma_11,
        gamma_22,
        gamma_12,
        gamma_21: gamma_12.conj(),
    })
}

/// 3x3 complex matrix, row-major, levels ordered |1>, |2>, |3>.
pub type Mat3<T> = [[Complex<T>; 3]; 3];

fn zero3<T: Scalar>() -> Mat3<T> {
    [[real(T::zero()); 3]; 3]
}

fn matmul<T: Scalar>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = zero3();
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = real(T::zero());
            for k in 0..3 {
                acc = acc + a[i][k] * b[k][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

fn adjoint<T: Scalar>(a: &Mat3<T>) -> Mat3<T> {
    let mut out = zero3();
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i].conj();
        }
    }
    out
}

/// `S_k- = |k><3|`.
fn lowering<T: Scalar>(k: usize) -> Mat3<T> {
    let mut m = zero3();
    m[k][2] = real(T::one());
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveAtomModel<T: Scalar> {
    pub hamiltonian: Mat3<T>,
    /// `gamma[i][j]` multiplies `2 S_j- rho S_i+ - S_i+ S_j- rho - rho S_i+ S_j-` with weight 1/2.
    pub gamma: [[Complex<T>; 2]; 2],
}

pub fn build_effective_model<T: Scalar>(
    c: &EffectiveConstants<T>,
    params: &ValidatedParams<T>,
) -> Result<EffectiveAtomModel<T>, AeError> {
    let mut h = zero3::<T>();
    let deltas = [[real(c.delta_11), c.delta_12], [c.delta_21, real(c.delta_22)]];
    // sum_ij Delta_ij S_i+ S_j- = sum_ij Delta_ij |3><i|j><3| = (Delta_11 + Delta_22) |3><3|
    for (i, row) in deltas.iter().enumerate() {
        h[2][2] = h[2][2] + row[i];
    }
    for pair in Pair::BOTH {
        let k = pair.index();
        h[k][k] = h[k][k] - real(params.pair(pair).atom_detuning);
    }
    for (k, omega) in [c.omega_1, c.omega_2].into_iter().enumerate() {
        // Omega S_k+ + Omega* S_k-
        h[2][k] = h[2][k] + omega;
        h[k][2] = h[k][2] + omega.conj();
    }
    let dev = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| (h[i][j] - h[j][i].conj()).norm())
        .fold(T::zero(), T::max);
    let scale = T::one() + h.iter().flatten().map(|v| v.norm()).fold(T::zero(), T::max);
    if !(dev <= T::tiny() * scale) {
        return Err(AeError::NonHermitianConstruction(dev.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(EffectiveAtomModel {
        hamiltonian: h,
        gamma: [[real(c.gamma_11), c.gamma_12], [c.gamma_21, real(c.gamma_22)]],
    })
}

impl<T: Scalar> EffectiveAtomModel<T> {
    /// Applies the effective generator to `rho`.
    pub fn apply(&self, rho: &Mat3<T>) -> Mat3<T> {
        let i = imag_unit::<T>();
        let h = &self.hamiltonian;
        let hr = matmul(h, rho);
        let rh = matmul(rho, h);
        let mut out = zero3();
        for r in 0..3 {
            for c in 0..3 {
                out[r][c] = -i * (hr[r][c] - rh[r][c]);
            }
        }
        let half = T::lit(0.5);
        let two = real(T::lit(2.0));
        for a in 0..2 {
            for b in 0..2 {
                let rate = self.gamma[a][b] * half;
                if rate.norm() == T::zero() {
                    continue;
                }
                let sj = lowering::<T>(b);
                let si_dag = adjoint(&lowering::<T>(a));
                let jump = matmul(&matmul(&sj, rho), &si_dag);
                let sisj = matmul(&si_dag, &sj);
                let left = matmul(&sisj, rho);
                let right = matmul(rho, &sisj);
                for r in 0..3 {
                    for c in 0..3 {
                        out[r][c] = out[r][c] + rate * (two * jump[r][c] - left[r][c] - right[r][c]);
                    }
                }
            }
        }
        out
    }

    /// Vectorized 9x9 generator, row-major in both indices.
    pub fn generator(&self) -> Vec<Complex<T>> {
        let mut l = vec![real(T::zero()); 81];
        for col in 0..9 {
            let mut unit = zero3::<T>();
            unit[col / 3][col % 3] = real(T::one());
            let img = self.apply(&unit);
            for row in 0..9 {
                l[row * 9 + col] = img[row / 3][row % 3];
            }
        }
        l
    }
}

/// Steady state of the effective atomic master equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomicDM<T: Scalar> {
    pub rho: Mat3<T>,
    /// `max |L rho|`.
    pub residual: T,
    /// True when the resolvent fallback selected the state.
    pub used_fallback: bool,
}

impl<T: Scalar> AtomicDM<T> {
    /// Population of the zero-based level.
    pub fn population(&self, level: usize) -> T {
        self.rho[level][level].re
    }

    pub fn coherence(&self, row: usize, col: usize) -> Complex<T> {
        self.rho[row][col]
    }

    /// `<S_i-> = <3|rho|i>`.
    pub fn lowering_mean(&self, pair: Pair) -> Complex<T> {
        self.rho[2][pair.index()]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let m = Matrix3::from_fn(|i, j| {
            let v = (self.rho[i][j] + self.rho[j][i].conj()) * T::lit(0.5);
            Complex64::new(v.re.to_f64().unwrap_or(f64::NAN), v.im.to_f64().unwrap_or(f64::NAN))
        });
        m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl<T: Scalar> Populations for AtomicDM<T> {
    fn populations(&self) -> [f64; 3] {
        [0, 1, 2].map(|k| self.population(k).to_f64().unwrap_or(f64::NAN))
    }
}

fn from_vec<T: Scalar>(v: &[Complex<T>]) -> Mat3<T> {
    let mut m = zero3();
    for (k, x) in v.iter().enumerate() {
        m[k / 3][k % 3] = *x;
    }
    m
}

/// Tolerance for the density-matrix invariants in precision `T`.
fn invariant_tol<T: Scalar>() -> T {
    T::lit(1e-10).max(T::epsilon() * T::lit(1e3))
}

pub fn solve_atomic_steady_state<T: Scalar>(model: &EffectiveAtomModel<T>) -> Result<AtomicDM<T>, AeError> {
    let l = model.generator();
    let scale = T::one() + l.iter().map(|v| v.norm()).fold(T::zero(), T::max);

    // The rho_11 row is redundant with the other two population rows; it is
    // replaced by the trace. Solving for rho_33 directly keeps it accurate
    // when it is tiny.
    let mut g = l.clone();
    let mut rhs = vec![real(T::zero()); 9];
    for (c, v) in g.iter_mut().take(9).enumerate() {
        *v = real(if c % 4 == 0 { T::one() } else { T::zero() });
    }
    rhs[0] = real(T::one());
    let (rho, used_fallback) = match solve_dense(g, rhs) {
        Some(x) => (from_vec(&x), false),
        None => {
            log::debug!("effective generator singular; using the resolvent steady state");
            (resolvent_state(&l, scale)?, true)
        }
    };

    let img = model.apply(&rho);
    let residual = img.iter().flatten().map(|v| v.norm()).fold(T::zero(), T::max);
    let dm = AtomicDM { rho, residual, used_fallback };
    let tol = invariant_tol::<T>();
    if !(residual <= tol * scale) {
        return Err(AeError::SingularGenerator(format!("residual {residual}")));
    }
    let herm = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| (rho[i][j] - rho[j][i].conj()).norm())
        .fold(T::zero(), T::max);
    if herm > tol {
        return Err(AeError::NonPhysicalResult(format!("Hermiticity error {herm}")));
    }
    let tr = rho[0][0] + rho[1][1] + rho[2][2];
    if (tr - real(T::one())).norm() > tol {
        return Err(AeError::NonPhysicalResult(format!("trace {tr}")));
    }
    let min_eig = dm.min_eigenvalue();
    if min_eig < -tol.to_f64().unwrap_or(1e-10) {
        return Err(AeError::NonPhysicalResult(format!("minimum eigenvalue {min_eig:e}")));
    }
    Ok(dm)
}

/// `lim s (s - L)^-1 rho_0` for the maximally mixed `rho_0`, normalized.
fn resolvent_state<T: Scalar>(l: &[Complex<T>], scale: T) -> Result<Mat3<T>, AeError> {
    let s = T::tiny() * T::lit(100.0) * scale;
    let mut m: Vec<Complex<T>> = l.iter().map(|v| -*v).collect();
    for k in 0..9 {
        m[k * 9 + k] = m[k * 9 + k] + real(s);
    }
    let mut rhs = vec![real(T::zero()); 9];
    for k in [0, 4, 8] {
        rhs[k] = real(s / T::lit(3.0));
    }
    let x = solve_dense(m, rhs)
        .ok_or_else(|| AeError::SingularGenerator("resolvent system is singular".into()))?;
    let tr = x[0] + x[4] + x[8];
    if !(tr.norm() > T::zero()) {
        return Err(AeError::SingularGenerator("resolvent solution has zero trace".into()));
    }
    let mut rho = from_vec(&x);
    for row in rho.iter_mut() {
        for v in row.iter_mut() {
            *v = *v / tr;
        }
    }
    // Symmetrize away the rounding left by the ill-conditioned solve.
    let adj = adjoint(&rho);
    for r in 0..3 {
        for c in 0..3 {
            rho[r][c] = (rho[r][c] + adj[r][c]) * T::lit(0.5);
        }
    }
    Ok(rho)
}

/// Constants, model and steady state in one call.
pub fn steady_state<T: Scalar>(
    params: &ValidatedParams<T>,
) -> Result<(EffectiveConstants<T>, AtomicDM<T>), AeError> {
    let constants = effective_constants(params, &params.couplings())?;
    let model = build_effective_model(&constants, params)?;
    let dm = solve_atomic_steady_state(&model)?;
    Ok((constants, dm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{validate, PhysicalParams, Preset};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn bad(d1: f64, d2: f64) -> ValidatedParams<f64> {
        let mut raw = Preset::BadCavity.params::<f64>();
        raw.atom_detuning_1 = d1;
        raw.atom_detuning_2 = d2;
        validate(raw).unwrap()
    }

    #[test]
    fn dark_state_keeps_the_excited_level_empty() {
        for d in [-22.0, -15.0, 3.0] {
            let (_, dm) = steady_state(&bad(d, d)).unwrap();
            let p3 = dm.population(2);
            assert!(p3.abs() < 1e-30, "P3 = {p3:e} at {d}");
        }
    }

    #[test]
    fn bad_cavity_level_shift() {
        let p = bad(0.0, 0.0);
        let c = effective_constants(&p, &p.couplings()).unwrap();
        let expected = 70.0f64.powi(2) * 250.0 / (250.0f64.powi(2) + p.pair(Pair::One).kappa.powi(2));
        assert_relative_eq!(c.delta_11, expected, max_relative = 1e-12);
        assert!((c.delta_11 - 9.761).abs() < 5e-4, "{}", c.delta_11);
        assert_relative_eq!(c.delta_22, c.delta_11, max_relative = 1e-12);
    }

    #[test]
    fn decay_matches_purcell_rate() {
        let mut raw = Preset::Strong.params::<f64>();
        raw.atom_detuning_1 = 0.0;
        let p = validate(raw).unwrap();
        let c = effective_constants(&p, &p.couplings()).unwrap();
        let kappa = p.pair(Pair::One).kappa;
        assert_relative_eq!(kappa, 16.0333, epsilon = 1e-4);
        let expected = 2.0 * 100.0f64.powi(2) * kappa / (kappa * kappa + 225.0) + 1.0;
        assert_relative_eq!(c.gamma_11, expected, max_relative = 1e-12);
    }

    #[test]
    fn resonance_shift_eigenvalue() {
        let p = bad(0.0, 0.0);
        let c = effective_constants(&p, &p.couplings()).unwrap();
        let mut drive_free = c;
        drive_free.omega_1 = Complex::new(0.0, 0.0);
        drive_free.omega_2 = Complex::new(0.0, 0.0);
        let m = build_effective_model(&drive_free, &p).unwrap();
        let nonzero: Vec<f64> = (0..3)
            .map(|k| m.hamiltonian[k][k].re)
            .filter(|v| v.abs() > 1e-12)
            .collect();
        assert_eq!(nonzero.len(), 1);
        assert!((nonzero[0] - 19.52).abs() < 5e-3, "{nonzero:?}");
    }

    #[test]
    fn gamma_matrix_is_diagonal_without_scattering() {
        let p = bad(-20.0, 3.0);
        let c = effective_constants(&p, &p.couplings()).unwrap();
        let m = build_effective_model(&c, &p).unwrap();
        assert_eq!(m.gamma[0][1].norm(), 0.0);
        assert_eq!(m.gamma[1][0].norm(), 0.0);
    }

    #[test]
    fn symmetric_drive_equal_ground_populations() {
        let dm = steady_state(&bad(-22.0, -22.0)).unwrap().1;
        assert!((dm.population(0) - 0.5).abs() < 1e-10);
        assert!((dm.population(1) - 0.5).abs() < 1e-10);
        assert!(dm.population(2) < 1e-10);
    }

    #[test]
    fn one_sided_drive_pumps_into_ground_two() {
        let mut raw = Preset::BadCavity.params::<f64>();
        raw.drive_2 = Complex::new(0.0, 0.0);
        raw.atom_detuning_1 = -300.0;
        let dm = steady_state(&validate(raw).unwrap()).unwrap().1;
        assert!(dm.population(1) > 1.0 - 1e-8);
    }

    #[test]
    fn drive_free_returns_decay_fixed_point() {
        let mut raw = Preset::BadCavity.params::<f64>();
        raw.drive_1 = Complex::new(0.0, 0.0);
        raw.drive_2 = Complex::new(0.0, 0.0);
        let dm = steady_state(&validate(raw).unwrap()).unwrap().1;
        assert!(dm.used_fallback);
        assert!(dm.population(2) < 1e-8);
        assert!((dm.population(0) + dm.population(1) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn excited_population_peak_location() {
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut d = -60.0;
        while d <= 20.0 {
            let p3 = steady_state(&bad(d, -22.0)).unwrap().1.population(2);
            if p3 > best.0 {
                best = (p3, d);
            }
            d += 0.25;
        }
        assert!((-22.0..=-16.0).contains(&best.1), "{best:?}");
    }

    #[test]
    fn scattering_gives_hermitian_gamma() {
        let mut raw = Preset::BadCavity.params::<f64>();
        raw.p = 20.0;
        raw.q = 5.0;
        raw.phase_1 = 0.7;
        raw.phase_2 = 1.1;
        let p = validate(raw).unwrap();
        let c = effective_constants(&p, &p.couplings()).unwrap();
        assert!(c.gamma_12.norm() > 0.0);
        assert_eq!(c.gamma_21, c.gamma_12.conj());
        assert!(c.gamma_11 >= 1.0 && c.gamma_22 >= 1.0);
        let dm = steady_state(&p).unwrap().1;
        assert!(dm.min_eigenvalue() > -1e-10);
    }

    #[test]
    fn generator_preserves_trace() {
        let mut raw = Preset::BadCavity.params::<f64>();
        raw.p = 3.0;
        raw.q = -7.0;
        raw.phase_2 = 0.2;
        let p = validate(raw).unwrap();
        let c = effective_constants(&p, &p.couplings()).unwrap();
        let l = build_effective_model(&c, &p).unwrap().generator();
        for col in 0..9 {
            let s = l[col] + l[4 * 9 + col] + l[8 * 9 + col];
            assert!(s.norm() < 1e-12);
        }
    }

    #[test]
    fn f32_matches_f64() {
        let p64 = bad(-19.0, -22.0);
        let mut raw = Preset::BadCavity.params::<f32>();
        raw.atom_detuning_1 = -19.0;
        raw.atom_detuning_2 = -22.0;
        let p32 = validate(raw).unwrap();
        let (c64, d64) = steady_state(&p64).unwrap();
        let (c32, d32) = steady_state(&p32).unwrap();
        assert!((c64.delta_11 - c32.delta_11 as f64).abs() < 1e-4);
        assert!((d64.population(2) - d32.population(2) as f64).abs() < 1e-5);
    }

    #[test]
    fn constants_json_is_labeled() {
        let p = bad(0.0, 0.0);
        let json = effective_constants(&p, &p.couplings()).unwrap().to_json();
        for key in ["\"lambda_a\"", "\"delta_11\"", "\"gamma_12\"", "\"omega_1\""] {
            assert!(json.contains(key), "{key}");
        }
    }

    fn arbitrary_params() -> impl Strategy<Value = PhysicalParams<f64>> {
        (
            (1.0f64..200.0, 1.0f64..200.0, 0.0f64..300.0, 0.0f64..300.0),
            (0.1f64..50.0, 0.1f64..300.0, 0.1f64..5.0),
            (-300.0f64..300.0, -300.0f64..300.0, 0.0f64..std::f64::consts::PI, 0.0f64..std::f64::consts::PI),
        )
            .prop_map(|((g1, g2, h1, h2), (kin, kex, gamma), (d1, d2, ph1, ph2))| {
                let mut raw = Preset::BadCavity.params::<f64>();
                raw.g0_1 = g1;
                raw.g0_2 = g2;
                raw.h1 = h1;
                raw.h2 = h2;
                raw.kappa_in_1 = kin;
                raw.kappa_ex_1 = kex;
                raw.gamma_1 = gamma;
                raw.atom_detuning_1 = d1;
                raw.atom_detuning_2 = d2;
                raw.phase_1 = ph1;
                raw.phase_2 = ph2;
                raw
            })
    }

    proptest! {
        #[test]
        fn collapse_without_scattering(raw in arbitrary_params()) {
            let p = validate(raw).unwrap();
            let c = effective_constants(&p, &p.couplings()).unwrap();
            prop_assert_eq!(c.mu.norm(), 0.0);
            prop_assert_eq!(c.nu.norm(), 0.0);
            prop_assert_eq!(c.gamma_12.norm(), 0.0);
            prop_assert_eq!(c.lambda_a, c.f_a1);
            prop_assert_eq!(c.xi_a, c.f_a2);
            prop_assert_eq!(c.lambda_b, c.f_b1);
            prop_assert_eq!(c.xi_b, c.f_b2);
            prop_assert!(c.gamma_11 >= p.pair(Pair::One).gamma);
            prop_assert!(c.gamma_22 >= p.pair(Pair::Two).gamma);
        }

        #[test]
        fn steady_state_is_a_density_matrix(raw in arbitrary_params()) {
            let p = validate(raw).unwrap();
            let dm = steady_state(&p).unwrap().1;
            let tr: f64 = (0..3).map(|k| dm.population(k)).sum();
            prop_assert!((tr - 1.0).abs() < 1e-10);
            prop_assert!(dm.min_eigenvalue() > -1e-10);
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((dm.rho[i][j] - dm.rho[j][i].conj()).norm() < 1e-10);
                }
            }
        }

        #[test]
        fn level_shift_scales_with_frequencies(c in 0.1f64..10.0, d in -100.0f64..100.0) {
            let mut raw = Preset::BadCavity.params::<f64>();
            raw.atom_detuning_1 = d;
            let base = validate(raw.clone()).unwrap();
            let s0 = effective_constants(&base, &base.couplings()).unwrap().delta_11;
            raw.g0_1 *= c;
            raw.h1 *= c;
            raw.kappa_in_1 *= c;
            raw.kappa_ex_1 *= c;
            raw.atom_detuning_1 *= c;
            let scaled = validate(raw).unwrap();
            let s1 = effective_constants(&scaled, &scaled.couplings()).unwrap().delta_11;
            prop_assert!((s1 - c * s0).abs() <= 1e-9 * (1.0 + (c * s0).abs()));
        }
    }
}
