//! Input-output relations: drive normalization, output operators expanded
//! over `{1, S1-, S2-}`, normalized fluxes and equal-time second-order
//! correlations.
//!
//! The fiber input drives `a_i` only; the `b_i` inputs carry vacuum. The
//! input field is treated as a c-number, so the only input contribution
//! kept in the output fluxes is the coherent `-<a_in>` interference term.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ae::AtomicDM;
use crate::params::{ModeCouplings, Pair, ValidatedParams};
use crate::scalar::{cplx, imag_unit, real, Scalar};
use crate::th::SteadyStateDM;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObservableError {
    #[error("pair {0} has zero fiber coupling; the input amplitude is undefined")]
    ZeroKappaEx(usize),
    #[error("mode response of the {family} family is singular (|det| = {det:e})")]
    DegenerateResponse { family: &'static str, det: f64 },
    #[error(
        "vanishing denominator in g2: <n_i> = {flux_i:e}, <n_j> = {flux_j:e}, numerator = {numerator:e}"
    )]
    VanishingDenominator { numerator: f64, flux_i: f64, flux_j: f64 },
}

/// Output channel in the fiber.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Port {
    /// `a_{i,out}`: forward (transmitted) direction.
    Transmitted(Pair),
    /// `b_{i,out}`: backward (reflected) direction.
    Reflected(Pair),
}

impl Port {
    /// In CSV column order: a1, b1, a2, b2.
    pub const ALL: [Port; 4] = [
        Port::Transmitted(Pair::One),
        Port::Reflected(Pair::One),
        Port::Transmitted(Pair::Two),
        Port::Reflected(Pair::Two),
    ];

    pub fn pair(self) -> Pair {
        match self {
            Port::Transmitted(p) | Port::Reflected(p) => p,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Port::Transmitted(Pair::One) => "a1",
            Port::Reflected(Pair::One) => "b1",
            Port::Transmitted(Pair::Two) => "a2",
            Port::Reflected(Pair::Two) => "b2",
        }
    }

    pub fn from_label(s: &str) -> Option<Port> {
        Port::ALL.into_iter().find(|p| p.label() == s)
    }
}

/// Coherent input amplitude `<a_in> = -i E / sqrt(2 kappa_ex)`.
pub fn input_amplitude<T: Scalar>(
    params: &ValidatedParams<T>,
    i: Pair,
) -> Result<Complex<T>, ObservableError> {
    let pp = params.pair(i);
    if !(pp.kappa_ex > T::zero()) {
        return Err(ObservableError::ZeroKappaEx(i.index() + 1));
    }
    Ok(-imag_unit::<T>() * pp.drive / (T::lit(2.0) * pp.kappa_ex).sqrt())
}

/// An operator `c0 + c1 S1- + c2 S2-`.
pub type AtomicLinear<T> = [Complex<T>; 3];

/// Steady-state normal-mode operators expanded over `{1, S1-, S2-}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeExpansion<T: Scalar> {
    /// `a[i]` is `A_{i+1}`.
    pub a: [AtomicLinear<T>; 2],
    /// `b[i]` is `B_{i+1}`.
    pub b: [AtomicLinear<T>; 2],
}

/// Solve the mode equations of motion in steady state with the atomic
/// lowering operators kept symbolic. Each family (A or B) is a 2x2 linear
/// system coupled through inter-pair scattering; for `p = q = 0` it is
/// diagonal.
pub fn mode_expansion<T: Scalar>(
    params: &ValidatedParams<T>,
    couplings: &ModeCouplings<T>,
) -> Result<ModeExpansion<T>, ObservableError> {
    let i = imag_unit::<T>();
    let sqrt2 = T::SQRT_2();
    let p1 = params.pair(Pair::One);
    let p2 = params.pair(Pair::Two);
    let zero = Complex::new(T::zero(), T::zero());

    let drive1 = -i * p1.drive / sqrt2;
    let drive2 = -i * p2.drive / sqrt2;

    let mu = params.q() + params.p();
    let nu = params.p() - params.q();

    // A family: (kappa + i(delta + h)) A_i + i mu A_other = -i E/sqrt2 - i gA S_i
    let ua = [
        cplx(p1.kappa, p1.cavity_detuning + p1.h),
        cplx(p2.kappa, p2.cavity_detuning + p2.h),
    ];
    let ra = [
        [drive1, -i * real(couplings.g_a1), zero],
        [drive2, zero, -i * real(couplings.g_a2)],
    ];
    let a = solve_family(ua, mu, ra, "A")?;

    // B family: (kappa + i(delta - h)) B_i + i nu B_other = -i E/sqrt2 - gB S_i
    let ub = [
        cplx(p1.kappa, p1.cavity_detuning - p1.h),
        cplx(p2.kappa, p2.cavity_detuning - p2.h),
    ];
    let rb = [
        [drive1, -real(couplings.g_b1), zero],
        [drive2, zero, -real(couplings.g_b2)],
    ];
    let b = solve_family(ub, nu, rb, "B")?;

    Ok(ModeExpansion { a, b })
}

fn solve_family<T: Scalar>(
    diag: [Complex<T>; 2],
    coupling: T,
    rhs: [AtomicLinear<T>; 2],
    family: &'static str,
) -> Result<[AtomicLinear<T>; 2], ObservableError> {
    let off = imag_unit::<T>() * coupling;
    let det = diag[0] * diag[1] - off * off;
    let norm = diag[0].norm().max(diag[1].norm()) + coupling.abs();
    let scale = norm * norm;
    if !(det.norm() > T::tiny() * scale) {
        return Err(ObservableError::DegenerateResponse {
            family,
            det: det.norm().to_f64().unwrap_or(f64::NAN),
        });
    }
    let mut out = [[Complex::new(T::zero(), T::zero()); 3]; 2];
    for k in 0..3 {
        out[0][k] = (diag[1] * rhs[0][k] - off * rhs[1][k]) / det;
        out[1][k] = (diag[0] * rhs[1][k] - off * rhs[0][k]) / det;
    }
    Ok(out)
}

/// Coefficients of `a_{i,out} = alpha_i0 + alpha_i1 S1- + alpha_i2 S2-` and
/// the analogous `beta` for `b_{i,out}`, plus the input amplitudes used to
/// normalize fluxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputCoefficients<T: Scalar> {
    pub alpha: [AtomicLinear<T>; 2],
    pub beta: [AtomicLinear<T>; 2],
    pub input: [Complex<T>; 2],
}

impl<T: Scalar> OutputCoefficients<T> {
    pub fn port(&self, port: Port) -> &AtomicLinear<T> {
        match port {
            Port::Transmitted(p) => &self.alpha[p.index()],
            Port::Reflected(p) => &self.beta[p.index()],
        }
    }

    /// `|<a_in>|^2` for the pair feeding `port`.
    pub fn input_intensity(&self, port: Port) -> T {
        self.input[port.pair().index()].norm_sqr()
    }
}

pub fn output_coefficients<T: Scalar>(
    params: &ValidatedParams<T>,
    couplings: &ModeCouplings<T>,
) -> Result<OutputCoefficients<T>, ObservableError> {
    let modes = mode_expansion(params, couplings)?;
    let zero = Complex::new(T::zero(), T::zero());
    let mut alpha = [[zero; 3]; 2];
    let mut beta = [[zero; 3]; 2];
    let mut input = [zero; 2];
    for pair in Pair::BOTH {
        let i = pair.index();
        let a_in = input_amplitude(params, pair)?;
        let root = real(params.pair(pair).kappa_ex.sqrt());
        for k in 0..3 {
            alpha[i][k] = root * (modes.a[i][k] + modes.b[i][k]);
            beta[i][k] = root * (modes.a[i][k] - modes.b[i][k]);
        }
        alpha[i][0] = alpha[i][0] - a_in;
        input[i] = a_in;
    }
    Ok(OutputCoefficients { alpha, beta, input })
}

/// Flux without atom: only the c-number part of the output operators.
pub fn flux_no_atom<T: Scalar>(coeffs: &OutputCoefficients<T>, port: Port) -> T {
    normalize(coeffs.port(port)[0].norm_sqr(), coeffs.input_intensity(port))
}

fn normalize<T: Scalar>(moment: T, input: T) -> T {
    if input > T::zero() {
        moment / input
    } else {
        T::nan()
    }
}

/// `<O^dag O>` for `O = c0 + c1 S1- + c2 S2-`, using `S_i+ S_j- = delta_ij |3><3|`.
pub fn linear_moment<T: Scalar>(c: &AtomicLinear<T>, dm: &AtomicDM<T>) -> T {
    let s = [dm.lowering_mean(Pair::One), dm.lowering_mean(Pair::Two)];
    let cross = c[0].conj() * (c[1] * s[0] + c[2] * s[1]);
    c[0].norm_sqr() + T::lit(2.0) * cross.re + (c[1].norm_sqr() + c[2].norm_sqr()) * dm.population(2)
}

/// Normalized flux from the adiabatic-elimination steady state.
pub fn flux_ae<T: Scalar>(dm: &AtomicDM<T>, coeffs: &OutputCoefficients<T>, port: Port) -> T {
    normalize(linear_moment(coeffs.port(port), dm), coeffs.input_intensity(port))
}

/// Normalized equal-time second-order correlation of two output ports.
///
/// Normal ordering plus `S_k- S_l- = 0` reduces `m_j m_i` to an operator
/// linear in the lowering operators, so the numerator is again a
/// [`linear_moment`].
pub fn g2<T: Scalar>(
    dm: &AtomicDM<T>,
    coeffs: &OutputCoefficients<T>,
    port_i: Port,
    port_j: Port,
) -> Result<T, ObservableError> {
    let ci = coeffs.port(port_i);
    let cj = coeffs.port(port_j);
    let product = [
        ci[0] * cj[0],
        cj[0] * ci[1] + ci[0] * cj[1],
        cj[0] * ci[2] + ci[0] * cj[2],
    ];
    let numerator = linear_moment(&product, dm);
    let ni = linear_moment(ci, dm);
    let nj = linear_moment(cj, dm);
    let threshold = T::lit(1e-14);
    let fi = normalize(ni, coeffs.input_intensity(port_i));
    let fj = normalize(nj, coeffs.input_intensity(port_j));
    if !(fi > threshold && fj > threshold) {
        let f = |x: T| x.to_f64().unwrap_or(f64::NAN);
        return Err(ObservableError::VanishingDenominator {
            numerator: f(numerator),
            flux_i: f(ni),
            flux_j: f(nj),
        });
    }
    Ok(numerator / (ni * nj))
}

/// Normalized flux from a truncated-space steady state.
///
/// `<a_out^dag a_out> = |<a_in>|^2 - 2 sqrt(2 kex) Re(<a_in>* <a>) + 2 kex <a^dag a>`,
/// `<b_out^dag b_out> = 2 kex <b^dag b>`.
pub fn flux_th(ss: &SteadyStateDM, params: &ValidatedParams<f64>, port: Port) -> Result<f64, ObservableError> {
    let pair = port.pair();
    let a_in = input_amplitude(params, pair)?;
    let kex = params.pair(pair).kappa_ex;
    let m = ss.pair_moments(pair);
    let sqrt2 = std::f64::consts::SQRT_2;
    let cross = 2.0 * m.a_dag_b.re;
    let moment = match port {
        Port::Transmitted(_) => {
            let mean = (m.a_mean + m.b_mean) / sqrt2;
            let number = 0.5 * (m.a_number + m.b_number + cross);
            a_in.norm_sqr() - 2.0 * (2.0 * kex).sqrt() * (a_in.conj() * mean).re + 2.0 * kex * number
        }
        Port::Reflected(_) => {
            let number = 0.5 * (m.a_number + m.b_number - cross);
            2.0 * kex * number
        }
    };
    Ok(normalize(moment, a_in.norm_sqr()))
}

/// Atomic populations `(P1, P2, P3)`.
pub trait Populations {
    fn populations(&self) -> [f64; 3];
}

/// Observables at one parameter point.
///
/// Fluxes are ordered a1, b1, a2, b2 and are `NaN` where the feeding probe
/// is off. `g2` holds `(a1,a1)`, `(a2,a2)`, `(a1,a2)`; a vanishing
/// denominator is stored as `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub delta_1: f64,
    pub delta_2: f64,
    pub flux: [f64; 4],
    pub populations: [f64; 3],
    pub g2: Option<[f64; 3]>,
    pub residual: f64,
}

/// The three correlation pairs stored in [`SpectrumPoint::g2`].
pub const G2_PAIRS: [(Port, Port); 3] = [
    (Port::Transmitted(Pair::One), Port::Transmitted(Pair::One)),
    (Port::Transmitted(Pair::Two), Port::Transmitted(Pair::Two)),
    (Port::Transmitted(Pair::One), Port::Transmitted(Pair::Two)),
];

/// Evaluation failure at a single point.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PointError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error(transparent)]
    Th(#[from] crate::th::ThError),
    #[error(transparent)]
    Ae(#[from] crate::ae::AeError),
}

fn point_base(params: &ValidatedParams<f64>) -> SpectrumPoint {
    SpectrumPoint {
        delta_1: params.pair(Pair::One).atom_detuning,
        delta_2: params.pair(Pair::Two).atom_detuning,
        flux: [f64::NAN; 4],
        populations: [f64::NAN; 3],
        g2: None,
        residual: 0.0,
    }
}

/// Observables from the truncated-space solver with default options.
pub fn spectrum_point_th(params: &ValidatedParams<f64>) -> Result<SpectrumPoint, PointError> {
    spectrum_point_th_with(params, &crate::th::SolveOptions::default())
}

pub fn spectrum_point_th_with(
    params: &ValidatedParams<f64>,
    opts: &crate::th::SolveOptions,
) -> Result<SpectrumPoint, PointError> {
    let ss = crate::th::steady_state_with(params, opts)?;
    let mut out = point_base(params);
    for (k, port) in Port::ALL.into_iter().enumerate() {
        out.flux[k] = flux_th(&ss, params, port)?;
    }
    out.populations = ss.populations();
    out.residual = ss.residual();
    Ok(out)
}

/// Observables from adiabatic elimination, optionally with correlations.
pub fn spectrum_point_ae(params: &ValidatedParams<f64>, with_g2: bool) -> Result<SpectrumPoint, PointError> {
    let (_, dm) = crate::ae::steady_state(params)?;
    let coeffs = output_coefficients(params, &params.couplings())?;
    let mut out = point_base(params);
    for (k, port) in Port::ALL.into_iter().enumerate() {
        out.flux[k] = flux_ae(&dm, &coeffs, port);
    }
    out.populations = dm.populations();
    out.residual = dm.residual;
    if with_g2 {
        out.g2 = Some(G2_PAIRS.map(|(a, b)| match g2(&dm, &coeffs, a, b) {
            Ok(v) => v,
            Err(ObservableError::VanishingDenominator { .. }) => f64::INFINITY,
            Err(_) => f64::NAN,
        }));
    }
    Ok(out)
}

/// Closed-form empty-resonator fluxes. The atom is reported in `|1>`.
pub fn spectrum_point_no_atom(params: &ValidatedParams<f64>) -> Result<SpectrumPoint, PointError> {
    let zero = ModeCouplings { g_a1: 0.0, g_a2: 0.0, g_b1: 0.0, g_b2: 0.0 };
    let coeffs = output_coefficients(params, &zero)?;
    let mut out = point_base(params);
    for (k, port) in Port::ALL.into_iter().enumerate() {
        out.flux[k] = flux_no_atom(&coeffs, port);
    }
    out.populations = [1.0, 0.0, 0.0];
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{validate, Preset};
    use approx::assert_relative_eq;

    fn params_at(preset: Preset, d1: f64, d2: f64) -> ValidatedParams<f64> {
        let mut raw = preset.params::<f64>();
        raw.atom_detuning_1 = d1;
        raw.atom_detuning_2 = d2;
        validate(raw).unwrap()
    }

    #[test]
    fn input_amplitude_values() {
        let mut raw = Preset::Strong.params::<f64>();
        raw.kappa_ex_1 = 15.0333;
        let p = validate(raw.clone()).unwrap();
        let a = input_amplitude(&p, Pair::One).unwrap();
        assert_relative_eq!(a.norm(), 0.1 / (2.0f64 * 15.0333).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(a.norm(), 0.0182372, epsilon = 1e-7);
        assert_eq!(a.re, 0.0);
        raw.drive_1 = Complex::new(0.0, 0.0);
        let p = validate(raw.clone()).unwrap();
        assert_eq!(input_amplitude(&p, Pair::One).unwrap().norm(), 0.0);
        raw.kappa_ex_1 = 0.0;
        let p = validate(raw).unwrap();
        assert_eq!(input_amplitude(&p, Pair::One), Err(ObservableError::ZeroKappaEx(1)));
    }

    #[test]
    fn critical_coupling_extinguishes_transmission() {
        for preset in [Preset::Strong, Preset::BadCavity] {
            let mut raw = preset.params::<f64>();
            raw.g0_1 = 0.0;
            raw.g0_2 = 0.0;
            let p = validate(raw).unwrap();
            let c = output_coefficients(&p, &p.couplings()).unwrap();
            for pair in Pair::BOTH {
                assert!(c.alpha[pair.index()][0].norm() < 1e-15);
                assert!(flux_no_atom(&c, Port::Transmitted(pair)) < 1e-26);
                for k in 1..3 {
                    assert_eq!(c.alpha[pair.index()][k].norm(), 0.0);
                    assert_eq!(c.beta[pair.index()][k].norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn far_detuned_transmission_approaches_one() {
        let p = params_at(Preset::Strong, 1e5, 0.0);
        let c = output_coefficients(&p, &p.couplings()).unwrap();
        assert!((flux_no_atom(&c, Port::Transmitted(Pair::One)) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn block_structure_without_inter_pair_scattering() {
        let p = params_at(Preset::Strong, -30.0, 12.0);
        let c = output_coefficients(&p, &p.couplings()).unwrap();
        assert_eq!(c.alpha[0][2].norm(), 0.0);
        assert_eq!(c.beta[0][2].norm(), 0.0);
        assert_eq!(c.alpha[1][1].norm(), 0.0);
        assert!(c.alpha[0][1].norm() > 0.0);
    }

    #[test]
    fn closed_form_mode_amplitudes() {
        let p = params_at(Preset::BadCavity, -22.0, 7.0);
        let m = mode_expansion(&p, &p.couplings()).unwrap();
        let i = Complex::new(0.0, 1.0);
        for pair in Pair::BOTH {
            let pp = p.pair(pair);
            let drive = -i * pp.drive / 2f64.sqrt();
            let a = drive / Complex::new(pp.kappa, pp.cavity_detuning + pp.h);
            let b = drive / Complex::new(pp.kappa, pp.cavity_detuning - pp.h);
            assert!((m.a[pair.index()][0] - a).norm() < 1e-16);
            assert!((m.b[pair.index()][0] - b).norm() < 1e-16);
        }
    }

    #[test]
    fn inter_pair_scattering_solves_coupled_system() {
        let mut raw = Preset::Strong.params::<f64>();
        raw.p = 3.0;
        raw.q = 1.5;
        raw.phase_1 = 0.3;
        raw.atom_detuning_1 = 10.0;
        raw.atom_detuning_2 = -4.0;
        let p = validate(raw).unwrap();
        let g = p.couplings();
        let m = mode_expansion(&p, &g).unwrap();
        let i = Complex::new(0.0, 1.0);
        let (p1, p2) = (p.pair(Pair::One), p.pair(Pair::Two));
        let mu = 4.5;
        // Residual of the A-family equations on the S1- component.
        let r1 = Complex::new(p1.kappa, p1.cavity_detuning + p1.h) * m.a[0][1] + i * mu * m.a[1][1]
            + i * g.g_a1;
        let r2 = Complex::new(p2.kappa, p2.cavity_detuning + p2.h) * m.a[1][1] + i * mu * m.a[0][1];
        assert!(r1.norm() < 1e-12 && r2.norm() < 1e-12);
        assert!(m.a[1][1].norm() > 0.0);
    }

    #[test]
    fn degenerate_response_detected() {
        // kappa -> 0 with delta + h = 0 and mu = 0 makes the A response singular.
        let mut raw = Preset::Strong.params::<f64>();
        raw.kappa_in_1 = 0.0;
        raw.kappa_ex_1 = 1e-300;
        raw.atom_detuning_1 = -15.0;
        let p = validate(raw).unwrap();
        assert!(matches!(
            mode_expansion(&p, &p.couplings()),
            Err(ObservableError::DegenerateResponse { family: "A", .. })
        ));
    }

    #[test]
    fn no_atom_power_balance() {
        // Input = transmitted + reflected + internal loss 2 kin (|A|^2 + |B|^2).
        for d in [-300.0, -40.0, -15.0, 0.0, 3.0, 15.0, 220.0] {
            for preset in [Preset::Strong, Preset::BadCavity] {
                let mut raw = preset.params::<f64>();
                raw.atom_detuning_1 = d;
                raw.kappa_ex_1 *= 0.7;
                let p = validate(raw).unwrap();
                let m = mode_expansion(&p, &p.couplings()).unwrap();
                let c = output_coefficients(&p, &p.couplings()).unwrap();
                let input = c.input[0].norm_sqr();
                let out = c.alpha[0][0].norm_sqr() + c.beta[0][0].norm_sqr();
                let lost = 2.0 * p.pair(Pair::One).kappa_in
                    * (m.a[0][0].norm_sqr() + m.b[0][0].norm_sqr());
                assert!(input >= out);
                assert_relative_eq!(input, out + lost, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn f32_matches_f64() {
        let p64 = params_at(Preset::BadCavity, -19.0, -22.0);
        let mut raw = Preset::BadCavity.params::<f32>();
        raw.atom_detuning_1 = -19.0;
        raw.atom_detuning_2 = -22.0;
        let p32 = validate(raw).unwrap();
        let c64 = output_coefficients(&p64, &p64.couplings()).unwrap();
        let c32 = output_coefficients(&p32, &p32.couplings()).unwrap();
        for k in 0..3 {
            let d = c64.alpha[0][k] - Complex::new(c32.alpha[0][k].re as f64, c32.alpha[0][k].im as f64);
            assert!(d.norm() < 1e-5 * (1.0 + c64.alpha[0][k].norm()));
        }
    }

    #[test]
    fn g2_is_one_without_coupling() {
        let mut raw = Preset::Strong.params::<f64>();
        raw.g0_1 = 0.0;
        raw.g0_2 = 0.0;
        raw.atom_detuning_1 = 40.0;
        raw.atom_detuning_2 = -25.0;
        let params = validate(raw).unwrap();
        let point = spectrum_point_ae(&params, true).unwrap();
        for v in point.g2.unwrap() {
            assert_relative_eq!(v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn g2_is_symmetric_in_ports() {
        let params = params_at(Preset::Strong, -12.0, 7.0);
        let (_, dm) = crate::ae::steady_state(&params).unwrap();
        let coeffs = output_coefficients(&params, &params.couplings()).unwrap();
        for a in Port::ALL {
            for b in Port::ALL {
                let ab = g2(&dm, &coeffs, a, b).unwrap();
                let ba = g2(&dm, &coeffs, b, a).unwrap();
                assert_relative_eq!(ab, ba, max_relative = 1e-12);
                assert!(ab >= 0.0);
            }
        }
    }

    #[test]
    fn port_labels() {
        for port in Port::ALL {
            assert_eq!(Port::from_label(port.label()), Some(port));
        }
        assert_eq!(Port::from_label("c1"), None);
    }
}
