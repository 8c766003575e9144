//! Truncated-Hilbert-space steady state.
//!
//! The master equation generator is built in the normal-mode basis on a
//! [`HilbertSpace`], vectorized row-major (`rho_ij` sits at `i * dim + j`),
//! and the ground-state vacuum population is eliminated with the trace condition.
//! The remaining linear system `G x = -K` is solved by sparse LU.

use std::io::{self, Write};

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::fockspace::{FockError, HilbertSpace, Level, Mode, OperatorBuilder, OperatorMatrix};
use crate::observables::{mode_expansion, ObservableError, Populations};
use crate::params::{ModeCouplings, Pair, ValidatedParams};

const I: C64 = C64::new(0.0, 1.0);

/// Occupation above which a truncation warning is logged.
pub const OCCUPATION_WARNING: f64 = 0.1;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ThError {
    #[error(transparent)]
    Space(#[from] FockError),
    #[error("constructed Hamiltonian is not Hermitian (max deviation {0:e})")]
    NonHermitianConstruction(f64),
    #[error("steady-state generator is singular: {0}; the resolvent fallback can select a steady state")]
    SingularGenerator(String),
    #[error("steady state violates physical invariants: {0}")]
    NonPhysicalResult(String),
}

fn modes_of(pair: Pair) -> (Mode, Mode) {
    match pair {
        Pair::One => (Mode::A1, Mode::B1),
        Pair::Two => (Mode::A2, Mode::B2),
    }
}

/// Hamiltonian in the frame rotating with the probe, normal-mode basis.
pub fn build_hamiltonian(
    space: &HilbertSpace,
    params: &ValidatedParams<f64>,
) -> Result<OperatorMatrix, ThError> {
    build_hamiltonian_with(space, params, &params.couplings())
}

pub(crate) fn build_hamiltonian_with(
    space: &HilbertSpace,
    params: &ValidatedParams<f64>,
    g: &ModeCouplings<f64>,
) -> Result<OperatorMatrix, ThError> {
    let mut h = OperatorBuilder::new(space.dim());
    let sqrt2 = std::f64::consts::SQRT_2;
    for pair in Pair::BOTH {
        let pp = params.pair(pair);
        let (ma, mb) = modes_of(pair);
        let ground = Level::ground(pair);
        let lower = space.lowering(ground);
        let raise = lower.adjoint();
        let a = space.annihilation(ma);
        let b = space.annihilation(mb);
        let (ad, bd) = (a.adjoint(), b.adjoint());

        h.add_op(&space.atomic_op(ground, ground), C64::from(-pp.atom_detuning));
        h.add_op(&space.number(ma), C64::from(pp.cavity_detuning + pp.h));
        h.add_op(&space.number(mb), C64::from(pp.cavity_detuning - pp.h));

        let e = pp.drive / sqrt2;
        for (op, dag) in [(&a, &ad), (&b, &bd)] {
            h.add_op(op, e.conj());
            h.add_op(dag, e);
        }

        let ga = g.g_a(pair);
        if ga != 0.0 {
            h.add_op(&ad.mul(&lower), C64::from(ga));
            h.add_op(&raise.mul(&a), C64::from(ga));
        }
        let gb = g.g_b(pair);
        if gb != 0.0 {
            h.add_op(&bd.mul(&lower), -I * gb);
            h.add_op(&raise.mul(&b), I * gb);
        }
    }

    if params.has_inter_pair_scattering() && params.raw().epsilon == 0.0 {
        let mu = params.q() + params.p();
        let nu = params.p() - params.q();
        let a1 = space.annihilation(Mode::A1);
        let a2 = space.annihilation(Mode::A2);
        let b1 = space.annihilation(Mode::B1);
        let b2 = space.annihilation(Mode::B2);
        let aa = a1.adjoint().mul(&a2);
        let bb = b1.adjoint().mul(&b2);
        h.add_op(&aa, C64::from(mu));
        h.add_op(&aa.adjoint(), C64::from(mu));
        h.add_op(&bb, C64::from(nu));
        h.add_op(&bb.adjoint(), C64::from(nu));
    }

    let h = h.build();
    let dev = h.max_abs_diff(&h.adjoint());
    if !(dev <= 1e-12 * (1.0 + h.max_abs())) {
        return Err(ThError::NonHermitianConstruction(dev));
    }
    Ok(h)
}

/// A Lindblad channel `rate * (2 C rho C^dag - C^dag C rho - rho C^dag C)`.
#[derive(Debug, Clone)]
pub struct Channel {
    pub rate: f64,
    pub op: OperatorMatrix,
}

/// Cavity channels with rate `kappa` and atomic channels with rate `gamma / 2`.
pub fn dissipation_channels(space: &HilbertSpace, params: &ValidatedParams<f64>) -> Vec<Channel> {
    let mut out = Vec::new();
    for pair in Pair::BOTH {
        let pp = params.pair(pair);
        let (ma, mb) = modes_of(pair);
        for m in [ma, mb] {
            if pp.kappa > 0.0 {
                out.push(Channel { rate: pp.kappa, op: space.annihilation(m) });
            }
        }
        if pp.gamma > 0.0 {
            out.push(Channel { rate: 0.5 * pp.gamma, op: space.lowering(Level::ground(pair)) });
        }
    }
    out
}

/// Vectorized generator `L` (`d^2 x d^2`, row-major vectorization).
pub fn vectorized_generator(hamiltonian: &OperatorMatrix, channels: &[Channel]) -> OperatorMatrix {
    let d = hamiltonian.dim();
    let mut heff = OperatorBuilder::new(d);
    heff.add_op(hamiltonian, C64::from(1.0));
    for ch in channels {
        let cdc = ch.op.adjoint().mul(&ch.op);
        heff.add_op(&cdc, -I * ch.rate);
    }
    let heff = heff.build();

    let mut l = OperatorBuilder::new(d * d);
    for &(r, c, v) in heff.entries() {
        // -i Heff rho
        for j in 0..d {
            l.add(r * d + j, c * d + j, -I * v);
        }
        // +i rho Heff^dag: (rho Heff^dag)_ij = sum_k rho_ik conj(Heff_jk)
        for i in 0..d {
            l.add(i * d + r, i * d + c, I * v.conj());
        }
    }
    for ch in channels {
        for &(i, k, cik) in ch.op.entries() {
            for &(j, m, cjm) in ch.op.entries() {
                l.add(i * d + j, k * d + m, 2.0 * ch.rate * cik * cjm.conj());
            }
        }
    }
    l.build()
}

/// The trace-eliminated linear system `d/dt x = G x + K`.
#[derive(Debug, Clone)]
pub struct LiouvillianSystem {
    space: HilbertSpace,
    full: OperatorMatrix,
    g: OperatorMatrix,
    k: Vec<C64>,
    eliminated_index: usize,
}

impl LiouvillianSystem {
    /// Eliminate the population of the first basis state (ground level,
    /// empty modes) from a full generator.
    pub fn from_generator(space: HilbertSpace, full: OperatorMatrix) -> Self {
        let d = space.dim();
        let n = d * d;
        assert_eq!(full.dim(), n, "generator does not match the space");
        let e = 0;
        let shift = |x: usize| if x > e { x - 1 } else { x };
        let mut k = vec![C64::new(0.0, 0.0); n - 1];
        let mut g = OperatorBuilder::new(n - 1);
        for &(r, c, v) in full.entries() {
            if r == e {
                continue;
            }
            let r = shift(r);
            if c == e {
                k[r] += v;
                for i in (0..d).filter(|&i| i * d + i != e) {
                    g.add(r, shift(i * d + i), -v);
                }
            } else {
                g.add(r, shift(c), v);
            }
        }
        LiouvillianSystem { space, full, g: g.build(), k, eliminated_index: e }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    /// Full generator before elimination.
    pub fn full(&self) -> &OperatorMatrix {
        &self.full
    }

    pub fn g(&self) -> &OperatorMatrix {
        &self.g
    }

    pub fn k(&self) -> &[C64] {
        &self.k
    }

    /// Position of the eliminated population in the vectorized density matrix.
    pub fn eliminated_index(&self) -> usize {
        self.eliminated_index
    }

    /// Largest `|sum_i L[(i,i), col]|` over all columns; zero for a
    /// trace-preserving generator.
    pub fn trace_defect(&self) -> f64 {
        let d = self.space.dim();
        let mut sums = vec![C64::new(0.0, 0.0); d * d];
        for &(r, c, v) in self.full.entries() {
            if r / d == r % d {
                sums[c] += v;
            }
        }
        sums.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }

    /// Writes `G` and `K` as coordinate triplets.
    pub fn write_triplets<W: Write>(&self, mut g: W, mut k: W) -> io::Result<()> {
        self.g.write_triplets(&mut g)?;
        writeln!(k, "# len {}", self.k.len())?;
        for (i, v) in self.k.iter().enumerate() {
            if *v != C64::new(0.0, 0.0) {
                writeln!(k, "{i} {:e} {:e}", v.re, v.im)?;
            }
        }
        Ok(())
    }

    /// `max |L vec(rho)|`.
    pub fn residual(&self, rho: &[C64]) -> f64 {
        let mut out = vec![C64::new(0.0, 0.0); rho.len()];
        for &(r, c, v) in self.full.entries() {
            out[r] += v * rho[c];
        }
        out.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }
}

pub fn build_liouvillian(
    space: &HilbertSpace,
    params: &ValidatedParams<f64>,
) -> Result<LiouvillianSystem, ThError> {
    let h = build_hamiltonian(space, params)?;
    let channels = dissipation_channels(space, params);
    let full = vectorized_generator(&h, &channels);
    Ok(LiouvillianSystem::from_generator(space.clone(), full))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    /// Sparse LU on the real parametrization of Hermitian matrices.
    #[default]
    HermitianLu,
    /// Sparse LU on the complex trace-eliminated system `G x = -K`.
    SparseLu,
    /// Dense partial-pivoting LU. Cubic in `dim^2`; use on small spaces.
    DenseLu,
}

/// Photon-number truncation of the four normal modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Truncation {
    /// At most one photon in each mode: 48 states.
    #[default]
    OnePerMode,
    /// At most two photons in total: 45 states. Captures all second-order
    /// terms of a weak coherent drive.
    TwoPhotons,
}

impl Truncation {
    pub fn space(self) -> HilbertSpace {
        match self {
            Truncation::OnePerMode => HilbertSpace::single_photon(),
            Truncation::TwoPhotons => HilbertSpace::two_photon(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Truncation::OnePerMode => "one-per-mode",
            Truncation::TwoPhotons => "two-photon",
        }
    }
}

impl std::str::FromStr for Truncation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one-per-mode" => Ok(Truncation::OnePerMode),
            "two-photon" => Ok(Truncation::TwoPhotons),
            other => Err(format!("unknown truncation `{other}` (expected one-per-mode or two-photon)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub backend: Backend,
    /// Space used by the parameter-level entry points.
    pub truncation: Truncation,
    /// On a singular generator, return `s (s - L)^-1 rho_0` for small `s`,
    /// with `rho_0` the photon vacuum times a maximally mixed atom, instead
    /// of an error.
    pub singular_fallback: bool,
    /// Regularization used by the fallback.
    pub resolvent_shift: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            backend: Backend::default(),
            truncation: Truncation::default(),
            singular_fallback: false,
            resolvent_shift: 1e-9,
        }
    }
}

/// Moments of one pair's normal modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMoments {
    pub a_mean: C64,
    pub b_mean: C64,
    pub a_number: f64,
    pub b_number: f64,
    /// `<A^dag B>`
    pub a_dag_b: C64,
}

#[derive(Debug, Clone)]
pub struct SteadyStateDM {
    space: HilbertSpace,
    rho: Vec<C64>,
    residual: f64,
    moments: [PairMoments; 2],
    populations: [f64; 3],
    used_fallback: bool,
}

impl SteadyStateDM {
    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// Row-major density matrix.
    pub fn rho(&self) -> &[C64] {
        &self.rho
    }

    pub fn element(&self, row: usize, col: usize) -> C64 {
        self.rho[row * self.dim() + col]
    }

    /// `max |L vec(rho)|` on the full generator.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn used_fallback(&self) -> bool {
        self.used_fallback
    }

    pub fn expectation(&self, op: &OperatorMatrix) -> C64 {
        op.expectation(&self.rho)
    }

    pub fn pair_moments(&self, pair: Pair) -> PairMoments {
        self.moments[pair.index()]
    }

    /// `<n>` of A1, B1, A2, B2.
    pub fn mode_occupations(&self) -> [f64; 4] {
        let [m1, m2] = self.moments;
        [m1.a_number, m1.b_number, m2.a_number, m2.b_number]
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.element(i, j) - self.element(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.element(i, i)).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.dim();
        let m = DMatrix::from_fn(d, d, |i, j| 0.5 * (self.element(i, j) + self.element(j, i).conj()));
        m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn write_triplets<W: Write>(&self, mut w: W) -> io::Result<()> {
        let d = self.dim();
        let nnz = self.rho.iter().filter(|v| v.norm() > 0.0).count();
        writeln!(w, "# dim {d} nnz {nnz}")?;
        for (idx, v) in self.rho.iter().enumerate() {
            if v.norm() > 0.0 {
                writeln!(w, "{} {} {:e} {:e}", idx / d, idx % d, v.re, v.im)?;
            }
        }
        Ok(())
    }
}

impl Populations for SteadyStateDM {
    fn populations(&self) -> [f64; 3] {
        self.populations
    }
}

pub fn solve_steady_state(system: &LiouvillianSystem) -> Result<SteadyStateDM, ThError> {
    solve_steady_state_with(system, &SolveOptions::default())
}

pub fn solve_steady_state_with(
    system: &LiouvillianSystem,
    opts: &SolveOptions,
) -> Result<SteadyStateDM, ThError> {
    let d = system.space.dim();
    let e = system.eliminated_index;
    let rhs: Vec<C64> = system.k.iter().map(|v| -v).collect();

    let attempt = match opts.backend {
        Backend::HermitianLu => solve_hermitian(system),
        backend => solve_linear(system.g(), &rhs, backend).map(|mut rho| {
            rho.insert(e, C64::new(0.0, 0.0));
            let pop: C64 = (0..d).map(|i| rho[i * d + i]).sum();
            rho[e] = C64::new(1.0, 0.0) - pop;
            rho
        }),
    }
    .and_then(|rho| finish(system, rho, false));
    match attempt {
        Err(ThError::SingularGenerator(reason)) if opts.singular_fallback => {
            log::debug!("falling back to resolvent steady state: {reason}");
            let rho = resolvent_state(system, opts)?;
            finish(system, rho, true)
        }
        other => other,
    }
}

fn resolvent_state(system: &LiouvillianSystem, opts: &SolveOptions) -> Result<Vec<C64>, ThError> {
    let d = system.space.dim();
    let n = d * d;
    let s = opts.resolvent_shift * (1.0 + system.full.max_abs());
    let mut m = OperatorBuilder::new(n);
    m.add_op(&system.full, C64::from(-1.0));
    for i in 0..n {
        m.add(i, i, C64::from(s));
    }
    // Seed with empty modes and a fully mixed atom.
    let mut rhs = vec![C64::new(0.0, 0.0); n];
    for (i, state) in system.space.states().enumerate() {
        if state.photon_count() == 0 {
            rhs[i * d + i] = C64::from(s);
        }
    }
    let mut rho = solve_linear(&m.build(), &rhs, opts.backend)?;
    let tr: C64 = (0..d).map(|i| rho[i * d + i]).sum();
    if !(tr.norm() > 0.0) || !tr.re.is_finite() {
        return Err(ThError::SingularGenerator("resolvent solution has zero trace".into()));
    }
    for v in rho.iter_mut() {
        *v /= tr;
    }
    Ok(rho)
}

/// Condition estimate above which the real system counts as singular.
const MAX_CONDITION: f64 = 1e18;

/// Solves `L rho = 0`, `tr rho = 1` over Hermitian `rho`.
///
/// Unknowns are `Re rho_ij` for `i <= j` and `Im rho_ij` for `i < j`; the
/// equations are the real and imaginary parts of `(L rho)_kl` for `k <= l`,
/// with the equation of the eliminated population replaced by `tr rho = 1`.
fn solve_hermitian(system: &LiouvillianSystem) -> Result<Vec<C64>, ThError> {
    let d = system.space.dim();
    let e = system.eliminated_index;
    let none = usize::MAX;
    let mut re = vec![none; d * d];
    let mut im = vec![none; d * d];
    let mut n = 0;
    for i in 0..d {
        for j in i..d {
            re[i * d + j] = n;
            n += 1;
            if i < j {
                im[i * d + j] = n;
                n += 1;
            }
        }
    }
    // The equation of the eliminated population is replaced by the trace.
    let x0 = re[e];
    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(4 * system.full.nnz() + d);
    for i in 0..d {
        entries.push((x0, re[i * d + i], 1.0));
    }
    for &(r, c, v) in system.full.entries() {
        let (k, l) = (r / d, r % d);
        if k > l || r == e {
            continue;
        }
        let (i, j) = (c / d, c % d);
        // (variable, contribution to Re, contribution to Im)
        let terms: [(usize, f64, f64); 2] = if i == j {
            [(re[c], v.re, v.im), (none, 0.0, 0.0)]
        } else if i < j {
            [(re[c], v.re, v.im), (im[c], -v.im, v.re)]
        } else {
            let t = j * d + i;
            [(re[t], v.re, v.im), (im[t], v.im, -v.re)]
        };
        for (var, cr, ci) in terms {
            if var == none {
                continue;
            }
            entries.push((re[r], var, cr));
            if k < l {
                entries.push((im[r], var, ci));
            }
        }
    }
    entries.retain(|t| t.2 != 0.0);
    entries.sort_unstable_by_key(|&(r, c, _)| (c, r));
    let mut triplets: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(entries.len());
    for (r, c, v) in entries {
        match triplets.last_mut() {
            Some(t) if t.row == r && t.col == c => t.val += v,
            _ => triplets.push(Triplet::new(r, c, v)),
        }
    }
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|err| ThError::SingularGenerator(format!("sparse assembly failed: {err:?}")))?;
    let lu = a
        .sp_lu()
        .map_err(|err| ThError::SingularGenerator(format!("LU factorization failed: {err:?}")))?;
    let mut b = Mat::<f64>::zeros(n, 1);
    b[(x0, 0)] = 1.0;
    lu.solve_in_place(b.as_mut());
    if (0..n).any(|i| !b[(i, 0)].is_finite()) {
        return Err(ThError::SingularGenerator("non-finite solution".into()));
    }
    // Rounding turns exact zero pivots into tiny ones, so a singular system
    // still solves; two steps of inverse iteration expose it.
    let frob = triplets.iter().map(|t| t.val * t.val).sum::<f64>().sqrt();
    let mut probe = Mat::<f64>::from_fn(n, 1, |i, _| (1.7 * i as f64 + 0.3).cos());
    let mut growth = 0.0;
    for _ in 0..2 {
        let scale = probe.norm_l2();
        probe *= faer::Scale(1.0 / scale);
        lu.solve_in_place(probe.as_mut());
        growth = probe.norm_l2();
    }
    let cond = growth * frob;
    if !(cond < MAX_CONDITION) {
        return Err(ThError::SingularGenerator(format!("condition estimate {cond:e}")));
    }
    let value = |var: usize| b[(var, 0)];
    let mut rho = vec![C64::new(0.0, 0.0); d * d];
    for i in 0..d {
        for j in i..d {
            let v = if i == j {
                C64::new(value(re[i * d + i]), 0.0)
            } else {
                C64::new(value(re[i * d + j]), value(im[i * d + j]))
            };
            rho[i * d + j] = v;
            rho[j * d + i] = v.conj();
        }
    }
    Ok(rho)
}

fn solve_linear(a: &OperatorMatrix, rhs: &[C64], backend: Backend) -> Result<Vec<C64>, ThError> {
    let n = a.dim();
    let mut b = Mat::<C64>::from_fn(n, 1, |i, _| rhs[i]);
    match backend {
        Backend::SparseLu | Backend::HermitianLu => {
            let triplets: Vec<Triplet<usize, usize, C64>> =
                a.entries().iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
            let m = SparseColMat::<usize, C64>::try_new_from_triplets(n, n, &triplets)
                .map_err(|err| ThError::SingularGenerator(format!("sparse assembly failed: {err:?}")))?;
            let lu = m
                .sp_lu()
                .map_err(|err| ThError::SingularGenerator(format!("LU factorization failed: {err:?}")))?;
            lu.solve_in_place(b.as_mut());
        }
        Backend::DenseLu => {
            let mut dense = Mat::<C64>::zeros(n, n);
            for &(r, c, v) in a.entries() {
                dense[(r, c)] += v;
            }
            dense.partial_piv_lu().solve_in_place(b.as_mut());
        }
    }
    let x: Vec<C64> = (0..n).map(|i| b[(i, 0)]).collect();
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(ThError::SingularGenerator("non-finite solution".into()));
    }
    Ok(x)
}

fn finish(system: &LiouvillianSystem, rho: Vec<C64>, used_fallback: bool) -> Result<SteadyStateDM, ThError> {
    let space = system.space.clone();
    let d = space.dim();
    let residual = system.residual(&rho);
    let scale = 1.0 + system.full.max_abs();

    let mut populations = [0.0; 3];
    for (idx, st) in space.states().enumerate() {
        populations[st.level.index()] += rho[idx * d + idx].re;
    }
    let moments = Pair::BOTH.map(|pair| {
        let (ma, mb) = modes_of(pair);
        let a = space.annihilation(ma);
        let b = space.annihilation(mb);
        PairMoments {
            a_mean: a.expectation(&rho),
            b_mean: b.expectation(&rho),
            a_number: space.number(ma).expectation(&rho).re,
            b_number: space.number(mb).expectation(&rho).re,
            a_dag_b: a.adjoint().mul(&b).expectation(&rho),
        }
    });

    let ss = SteadyStateDM { space, rho, residual, moments, populations, used_fallback };

    if !(residual <= 1e-8 * scale) {
        return Err(ThError::SingularGenerator(format!("residual {residual:e}")));
    }
    let herm = ss.hermiticity_error();
    let diag_ok = (0..d).all(|i| {
        let v = ss.element(i, i).re;
        (-1e-6..=1.0 + 1e-6).contains(&v)
    });
    if !diag_ok || herm > 1e-6 {
        return Err(ThError::SingularGenerator(format!(
            "solution is not a density matrix (Hermiticity error {herm:e})"
        )));
    }
    if herm > 1e-10 {
        return Err(ThError::NonPhysicalResult(format!("Hermiticity error {herm:e}")));
    }
    let tr = ss.trace();
    if (tr - 1.0).norm() > 1e-12 {
        return Err(ThError::NonPhysicalResult(format!("trace {tr}")));
    }
    let min_eig = ss.min_eigenvalue();
    if min_eig < -1e-8 {
        return Err(ThError::NonPhysicalResult(format!("minimum eigenvalue {min_eig:e}")));
    }

    let occ = ss.mode_occupations();
    if occ.iter().any(|&n| n > OCCUPATION_WARNING) {
        log::warn!(
            "mean mode occupation {:?} exceeds {OCCUPATION_WARNING}; truncation may be inaccurate",
            occ
        );
    }
    Ok(ss)
}

/// Build and solve on the default truncation.
pub fn steady_state(params: &ValidatedParams<f64>) -> Result<SteadyStateDM, ThError> {
    steady_state_with(params, &SolveOptions::default())
}

pub fn steady_state_with(
    params: &ValidatedParams<f64>,
    opts: &SolveOptions,
) -> Result<SteadyStateDM, ThError> {
    let system = build_liouvillian(&opts.truncation.space(), params)?;
    solve_steady_state_with(&system, opts)
}

/// Driven-mode amplitudes without atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoAtomAmplitudes {
    /// `<A_1>`, `<A_2>`
    pub a: [C64; 2],
    /// `<B_1>`, `<B_2>`
    pub b: [C64; 2],
}

pub fn no_atom_reference(params: &ValidatedParams<f64>) -> Result<NoAtomAmplitudes, ObservableError> {
    let m = mode_expansion(params, &params.couplings())?;
    Ok(NoAtomAmplitudes { a: [m.a[0][0], m.a[1][0]], b: [m.b[0][0], m.b[1][0]] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::BasisState;
    use crate::params::{validate, PhysicalParams, Preset};

    fn zero_params() -> PhysicalParams<f64> {
        let mut raw = Preset::Strong.params::<f64>();
        raw.g0_1 = 0.0;
        raw.g0_2 = 0.0;
        raw.h1 = 0.0;
        raw.h2 = 0.0;
        // Losses do not enter the Hamiltonian; validation needs them positive.
        raw.kappa_in_1 = 1.0;
        raw.kappa_in_2 = 1.0;
        raw.kappa_ex_1 = 0.0;
        raw.kappa_ex_2 = 0.0;
        raw.gamma_1 = 0.0;
        raw.gamma_2 = 0.0;
        raw.atom_detuning_1 = 0.0;
        raw.atom_detuning_2 = 0.0;
        raw.drive_1 = C64::new(0.0, 0.0);
        raw.drive_2 = C64::new(0.0, 0.0);
        raw
    }

    fn strong(d1: f64, d2: f64) -> ValidatedParams<f64> {
        let mut raw = Preset::Strong.params::<f64>();
        raw.atom_detuning_1 = d1;
        raw.atom_detuning_2 = d2;
        validate(raw).unwrap()
    }

    fn sector_eigenvalues(h: &OperatorMatrix, space: &HilbertSpace, n: usize) -> Vec<f64> {
        let idx: Vec<usize> = space
            .states()
            .enumerate()
            .filter(|(_, s)| s.excitations() == n)
            .map(|(i, _)| i)
            .collect();
        let m = DMatrix::from_fn(idx.len(), idx.len(), |r, c| h.get(idx[r], idx[c]));
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    #[test]
    fn normal_mode_energies() {
        let mut raw = zero_params();
        raw.h1 = 15.0;
        let p = validate(raw).unwrap();
        let space = HilbertSpace::single_photon();
        let h = build_hamiltonian(&space, &p).unwrap();
        let ground = |m: Mode| {
            let mut photons = [0; 4];
            photons[m.slot()] = 1;
            space.index(&BasisState { level: Level::G1, photons }).unwrap()
        };
        let (ia, ib) = (ground(Mode::A1), ground(Mode::B1));
        assert_eq!(h.get(ia, ia).re, 15.0);
        assert_eq!(h.get(ib, ib).re, -15.0);
        assert_eq!(h.get(ia, ib).norm(), 0.0);
    }

    #[test]
    fn all_zero_parameters_give_zero_hamiltonian() {
        let p = validate(zero_params()).unwrap();
        let h = build_hamiltonian(&HilbertSpace::single_photon(), &p).unwrap();
        assert_eq!(h.nnz(), 0);
    }

    #[test]
    fn strong_single_excitation_spectrum() {
        let mut raw = Preset::Strong.params::<f64>();
        raw.drive_1 = C64::new(0.0, 0.0);
        raw.drive_2 = C64::new(0.0, 0.0);
        raw.atom_detuning_1 = 0.0;
        raw.atom_detuning_2 = 0.0;
        let p = validate(raw).unwrap();
        let space = HilbertSpace::single_photon();
        let h = build_hamiltonian(&space, &p).unwrap();
        let ev = sector_eigenvalues(&h, &space, 1);
        let closed = (-15.0 - (8.0f64 * 100.0 * 100.0 + 225.0).sqrt()) / 2.0;
        assert!((closed + 149.12).abs() < 5e-3);
        assert!(ev.iter().any(|e| (e - closed).abs() < 1e-9), "{ev:?}");
    }

    #[test]
    fn hamiltonian_is_hermitian_with_scattering() {
        let mut raw = Preset::Strong.params::<f64>();
        raw.p = 2.0;
        raw.q = -0.5;
        raw.phase_1 = 0.4;
        raw.drive_2 = C64::new(0.03, -0.02);
        let p = validate(raw).unwrap();
        let h = build_hamiltonian(&HilbertSpace::single_photon(), &p).unwrap();
        assert!(h.is_hermitian(1e-14));
    }

    #[test]
    fn drive_free_system_has_zero_k() {
        let mut raw = Preset::Strong.params::<f64>();
        raw.drive_1 = C64::new(0.0, 0.0);
        raw.drive_2 = C64::new(0.0, 0.0);
        let sys = build_liouvillian(&HilbertSpace::single_photon(), &validate(raw).unwrap()).unwrap();
        assert!(sys.k().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn generator_preserves_trace() {
        for p in [strong(-22.0, -22.0), strong(10.0, -300.0)] {
            let sys = build_liouvillian(&HilbertSpace::single_photon(), &p).unwrap();
            assert!(sys.trace_defect() < 1e-12, "{}", sys.trace_defect());
            assert_eq!(sys.eliminated_index(), 0);
            assert_eq!(sys.g().dim(), 48 * 48 - 1);
        }
    }

    #[test]
    fn ground_mixtures_are_drive_free_fixed_points() {
        let mut raw = Preset::Strong.params::<f64>();
        raw.drive_1 = C64::new(0.0, 0.0);
        raw.drive_2 = C64::new(0.0, 0.0);
        let space = HilbertSpace::single_photon();
        let sys = build_liouvillian(&space, &validate(raw).unwrap()).unwrap();
        let d = space.dim();
        let g1 = space.index(&BasisState { level: Level::G1, photons: [0; 4] }).unwrap();
        let g2 = space.index(&BasisState { level: Level::G2, photons: [0; 4] }).unwrap();
        for (w, c) in [(1.0, 0.0), (0.0, 0.0), (0.3, 0.2), (0.5, -0.4)] {
            let mut rho = vec![C64::new(0.0, 0.0); d * d];
            rho[g1 * d + g1] = C64::from(w);
            rho[g2 * d + g2] = C64::from(1.0 - w);
            rho[g1 * d + g2] = C64::new(0.0, c);
            rho[g2 * d + g1] = C64::new(0.0, -c);
            assert!(sys.residual(&rho) < 1e-14);
        }
    }

    #[test]
    fn families_couple_only_through_the_atom() {
        // With p = q = 0, no Hamiltonian entry may move a photon between an A
        // and a B mode while leaving the atom untouched.
        let p = strong(-10.0, 5.0);
        let space = HilbertSpace::single_photon();
        let h = build_hamiltonian(&space, &p).unwrap();
        for &(r, c, _) in h.entries() {
            let (sr, sc) = (space.state(r).unwrap(), space.state(c).unwrap());
            if sr.level == sc.level && r != c {
                let moved: Vec<usize> =
                    (0..4).filter(|&m| sr.photons[m] != sc.photons[m]).collect();
                assert!(moved.len() <= 1, "{sr} <-> {sc}");
            }
        }
    }

    #[test]
    fn dark_state_on_the_diagonal() {
        let p = strong(-22.0, -22.0);
        let ss = steady_state(&p).unwrap();
        let [p1, p2, p3] = ss.populations();
        assert!(p3 < 1e-6, "P3 = {p3:e}");
        assert!((p1 - 0.5).abs() < 1e-6 && (p2 - 0.5).abs() < 1e-6);
        let reference = no_atom_reference(&p).unwrap();
        for pair in Pair::BOTH {
            let m = ss.pair_moments(pair);
            assert!((m.a_mean - reference.a[pair.index()]).norm() < 1e-6);
            assert!((m.b_mean - reference.b[pair.index()]).norm() < 1e-6);
        }
        assert!(ss.residual() < 1e-10);
    }

    #[test]
    fn far_detuning_pumps_into_ground_one() {
        let ss = steady_state(&strong(-2000.0, 0.0)).unwrap();
        assert!(ss.populations()[0] > 0.99);
    }

    #[test]
    fn empty_cavity_matches_analytic_amplitudes() {
        let mut raw = Preset::Strong.params::<f64>();
        raw.g0_1 = 0.0;
        raw.g0_2 = 0.0;
        raw.atom_detuning_1 = 0.0;
        raw.atom_detuning_2 = 0.0;
        raw.drive_1 = C64::from(0.01);
        raw.drive_2 = C64::from(0.01);
        let p = validate(raw).unwrap();
        let opts = SolveOptions { singular_fallback: true, ..SolveOptions::default() };
        let ss = steady_state_with(&p, &opts).unwrap();
        let reference = no_atom_reference(&p).unwrap();
        assert!(ss.mode_occupations().iter().all(|&n| n < 1e-2));
        for pair in Pair::BOTH {
            let m = ss.pair_moments(pair);
            assert!((m.a_mean - reference.a[pair.index()]).norm() < 1e-8);
            assert!((m.b_mean - reference.b[pair.index()]).norm() < 1e-8);
        }
    }

    #[test]
    fn singular_generator_reported_without_fallback() {
        let mut raw = Preset::Strong.params::<f64>();
        raw.g0_1 = 0.0;
        raw.g0_2 = 0.0;
        let p = validate(raw).unwrap();
        assert!(matches!(steady_state(&p), Err(ThError::SingularGenerator(_))));
    }

    #[test]
    fn backends_agree() {
        let mut raw = Preset::Strong.params::<f64>();
        raw.atom_detuning_1 = -40.0;
        raw.atom_detuning_2 = 12.0;
        raw.p = 1.5;
        raw.drive_2 = C64::new(0.05, 0.08);
        let p = validate(raw).unwrap();
        // Small space keeps the dense solve fast.
        let space = HilbertSpace::new([1, 1, 0, 0]).unwrap();
        let sys = build_liouvillian(&space, &p).unwrap();
        let with = |backend| solve_steady_state_with(&sys, &SolveOptions { backend, ..Default::default() }).unwrap();
        let hermitian = with(Backend::HermitianLu);
        for other in [with(Backend::SparseLu), with(Backend::DenseLu)] {
            for (a, b) in hermitian.rho().iter().zip(other.rho()) {
                assert!((a - b).norm() < 1e-12, "{a} {b}");
            }
        }
        assert!(hermitian.residual() < 1e-12);
    }

    #[test]
    fn triplet_dumps() {
        let space = HilbertSpace::new([1, 0, 0, 0]).unwrap();
        let sys = build_liouvillian(&space, &strong(0.0, 0.0)).unwrap();
        let (mut g, mut k) = (Vec::new(), Vec::new());
        sys.write_triplets(&mut g, &mut k).unwrap();
        let g = String::from_utf8(g).unwrap();
        assert!(g.starts_with("# dim 35 nnz "));
        assert!(String::from_utf8(k).unwrap().starts_with("# len 35\n"));
    }
}
