//! Physical parameters, validation, derived couplings and presets.
//!
//! All frequencies and rates are dimensionless multiples of the atomic
//! decay rate, so `gamma_1 = gamma_2 = 1` in both presets.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Index of a mode pair (and of the atomic ground state it couples to).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pair {
    One,
    Two,
}

impl Pair {
    pub const BOTH: [Pair; 2] = [Pair::One, Pair::Two];

    pub fn index(self) -> usize {
        match self {
            Pair::One => 0,
            Pair::Two => 1,
        }
    }

    pub fn other(self) -> Pair {
        match self {
            Pair::One => Pair::Two,
            Pair::Two => Pair::One,
        }
    }
}

/// Raw parameter set as read from a config file or a preset.
///
/// Field names follow the config keys (see [`PARAM_KEYS`]) except where a
/// key is not a valid snake-case identifier: `Delta_i` is `atom_detuning_i`
/// and `E_i` is `drive_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams<T: Scalar> {
    pub g0_1: T,
    pub g0_2: T,
    pub h1: T,
    pub h2: T,
    pub kappa_in_1: T,
    pub kappa_in_2: T,
    pub kappa_ex_1: T,
    pub kappa_ex_2: T,
    pub gamma_1: T,
    pub gamma_2: T,
    /// Inter-pair scattering (same-direction component).
    pub p: T,
    /// Inter-pair scattering (direction-reversing component).
    pub q: T,
    /// Probe frequency difference.
    pub epsilon: T,
    /// Ground-state splitting. Carried as metadata; it enters the dynamics
    /// only through the atom-probe detunings.
    pub delta_ground: T,
    pub atom_detuning_1: T,
    pub atom_detuning_2: T,
    pub delta_c_1: T,
    pub delta_c_2: T,
    /// When set, the cavity-probe detunings follow the atom-probe detunings
    /// and `delta_c_*` are ignored.
    pub cavity_follows_atom: bool,
    pub drive_1: Complex<T>,
    pub drive_2: Complex<T>,
    /// Azimuthal phases `k_i x`.
    pub phase_1: T,
    pub phase_2: T,
    pub radial_factor: T,
}

/// Config keys, in declaration order.
pub const PARAM_KEYS: &[&str] = &[
    "g0_1",
    "g0_2",
    "h1",
    "h2",
    "kappa_in_1",
    "kappa_in_2",
    "kappa_ex_1",
    "kappa_ex_2",
    "gamma_1",
    "gamma_2",
    "p",
    "q",
    "epsilon",
    "delta_ground",
    "Delta_1",
    "Delta_2",
    "delta_c_1",
    "delta_c_2",
    "cavity_follows_atom",
    "E_1",
    "E_2",
    "phase_1",
    "phase_2",
    "radial_factor",
];

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown parameter key `{0}`")]
    UnknownKey(String),
    #[error("cannot parse `{value}` for key `{key}`")]
    BadValue { key: String, value: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
}

/// A single violated constraint.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("rate `{name}` is negative ({value})")]
    NegativeRate { name: &'static str, value: f64 },
    #[error("epsilon = {epsilon} is nonzero while p = {p}, q = {q}; no stationary frame exists")]
    EpsilonWithScattering { epsilon: f64, p: f64, q: f64 },
    #[error("total cavity decay of pair {pair} is zero")]
    ZeroTotalKappa { pair: usize },
    #[error("radial factor {0} outside [0, 1]")]
    RadialFactorOutOfRange(f64),
    #[error("parameter `{0}` is not finite")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct InvalidParams(pub Vec<Violation>);

impl fmt::Display for InvalidParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid parameters:")?;
        for v in &self.0 {
            write!(f, " {v};")?;
        }
        Ok(())
    }
}

/// Per-pair view with derived quantities resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairParams<T: Scalar> {
    pub g0: T,
    pub h: T,
    pub kappa_in: T,
    pub kappa_ex: T,
    /// `kappa_in + kappa_ex`
    pub kappa: T,
    pub gamma: T,
    pub atom_detuning: T,
    /// Effective cavity-probe detuning (after slaving).
    pub cavity_detuning: T,
    pub drive: Complex<T>,
    pub phase: T,
}

/// Parameters that passed [`validate`]. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedParams<T: Scalar> {
    raw: PhysicalParams<T>,
    pairs: [PairParams<T>; 2],
}

impl<T: Scalar> ValidatedParams<T> {
    pub fn raw(&self) -> &PhysicalParams<T> {
        &self.raw
    }

    pub fn into_raw(self) -> PhysicalParams<T> {
        self.raw
    }

    pub fn pair(&self, i: Pair) -> &PairParams<T> {
        &self.pairs[i.index()]
    }

    pub fn p(&self) -> T {
        self.raw.p
    }

    pub fn q(&self) -> T {
        self.raw.q
    }

    pub fn radial_factor(&self) -> T {
        self.raw.radial_factor
    }

    /// True when inter-pair scattering terms are present.
    pub fn has_inter_pair_scattering(&self) -> bool {
        self.raw.p != T::zero() || self.raw.q != T::zero()
    }

    pub fn couplings(&self) -> ModeCouplings<T> {
        mode_couplings(self)
    }
}

/// Real couplings of the atom to the normal modes of each pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeCouplings<T: Scalar> {
    pub g_a1: T,
    pub g_a2: T,
    pub g_b1: T,
    pub g_b2: T,
}

impl<T: Scalar> ModeCouplings<T> {
    pub fn g_a(&self, i: Pair) -> T {
        match i {
            Pair::One => self.g_a1,
            Pair::Two => self.g_a2,
        }
    }

    pub fn g_b(&self, i: Pair) -> T {
        match i {
            Pair::One => self.g_b1,
            Pair::Two => self.g_b2,
        }
    }
}

/// Fiber coupling at which the on-resonance transmission vanishes.
pub fn critical_kappa_ex<T: Scalar>(h: T, kappa_in: T) -> T {
    h.hypot(kappa_in)
}

pub fn mode_couplings<T: Scalar>(params: &ValidatedParams<T>) -> ModeCouplings<T> {
    let f = params.radial_factor();
    let one = params.pair(Pair::One);
    let two = params.pair(Pair::Two);
    ModeCouplings {
        g_a1: one.g0 * f * snap(one.phase.cos()),
        g_b1: one.g0 * f * snap(one.phase.sin()),
        g_a2: two.g0 * f * snap(two.phase.cos()),
        g_b2: two.g0 * f * snap(two.phase.sin()),
    }
}

/// Rounds the trigonometric residue at multiples of pi/2 to an exact zero.
fn snap<T: Scalar>(x: T) -> T {
    if x.abs() <= T::lit(4.0) * T::epsilon() {
        T::zero()
    } else {
        x
    }
}

pub fn validate<T: Scalar>(params: PhysicalParams<T>) -> Result<ValidatedParams<T>, InvalidParams> {
    let mut violations = Vec::new();
    let to_f64 = |x: T| x.to_f64().unwrap_or(f64::NAN);

    let reals: [(&'static str, T); 23] = [
        ("g0_1", params.g0_1),
        ("g0_2", params.g0_2),
        ("h1", params.h1),
        ("h2", params.h2),
        ("kappa_in_1", params.kappa_in_1),
        ("kappa_in_2", params.kappa_in_2),
        ("kappa_ex_1", params.kappa_ex_1),
        ("kappa_ex_2", params.kappa_ex_2),
        ("gamma_1", params.gamma_1),
        ("gamma_2", params.gamma_2),
        ("p", params.p),
        ("q", params.q),
        ("epsilon", params.epsilon),
        ("delta_ground", params.delta_ground),
        ("Delta_1", params.atom_detuning_1),
        ("Delta_2", params.atom_detuning_2),
        ("delta_c_1", params.delta_c_1),
        ("delta_c_2", params.delta_c_2),
        ("phase_1", params.phase_1),
        ("phase_2", params.phase_2),
        ("radial_factor", params.radial_factor),
        ("E_1", params.drive_1.norm()),
        ("E_2", params.drive_2.norm()),
    ];
    for (name, value) in reals {
        if !value.is_finite() {
            violations.push(Violation::NonFinite(name));
        }
    }

    // p and q are scattering amplitudes that may carry either sign; every
    // other entry here is a rate.
    let rates: [(&'static str, T); 10] = [
        ("g0_1", params.g0_1),
        ("g0_2", params.g0_2),
        ("h1", params.h1),
        ("h2", params.h2),
        ("kappa_in_1", params.kappa_in_1),
        ("kappa_in_2", params.kappa_in_2),
        ("kappa_ex_1", params.kappa_ex_1),
        ("kappa_ex_2", params.kappa_ex_2),
        ("gamma_1", params.gamma_1),
        ("gamma_2", params.gamma_2),
    ];
    for (name, value) in rates {
        if value < T::zero() {
            violations.push(Violation::NegativeRate { name, value: to_f64(value) });
        }
    }

    if params.radial_factor < T::zero() || params.radial_factor > T::one() {
        violations.push(Violation::RadialFactorOutOfRange(to_f64(params.radial_factor)));
    }

    for (pair, kin, kex) in [
        (1, params.kappa_in_1, params.kappa_ex_1),
        (2, params.kappa_in_2, params.kappa_ex_2),
    ] {
        if !(kin + kex > T::zero()) {
            violations.push(Violation::ZeroTotalKappa { pair });
        }
    }

    if params.epsilon != T::zero() && (params.p != T::zero() || params.q != T::zero()) {
        violations.push(Violation::EpsilonWithScattering {
            epsilon: to_f64(params.epsilon),
            p: to_f64(params.p),
            q: to_f64(params.q),
        });
    }

    if !violations.is_empty() {
        return Err(InvalidParams(violations));
    }

    let pair = |g0, h, kappa_in, kappa_ex, gamma, atom_detuning, delta_c, drive, phase| {
        PairParams {
            g0,
            h,
            kappa_in,
            kappa_ex,
            kappa: kappa_in + kappa_ex,
            gamma,
            atom_detuning,
            cavity_detuning: if params.cavity_follows_atom { atom_detuning } else { delta_c },
            drive,
            phase,
        }
    };
    let pairs = [
        pair(
            params.g0_1,
            params.h1,
            params.kappa_in_1,
            params.kappa_ex_1,
            params.gamma_1,
            params.atom_detuning_1,
            params.delta_c_1,
            params.drive_1,
            params.phase_1,
        ),
        pair(
            params.g0_2,
            params.h2,
            params.kappa_in_2,
            params.kappa_ex_2,
            params.gamma_2,
            params.atom_detuning_2,
            params.delta_c_2,
            params.drive_2,
            params.phase_2,
        ),
    ];
    Ok(ValidatedParams { raw: params, pairs })
}

/// Named parameter presets for the two regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    /// `g0 = 100`, `h = 15`: coupling dominates cavity loss.
    Strong,
    /// `g0 = 70`, `h = 250`: cavity loss dominates coupling.
    BadCavity,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Strong => "strong",
            Preset::BadCavity => "bad_cavity",
        }
    }

    pub fn params<T: Scalar>(self) -> PhysicalParams<T> {
        match self {
            Preset::Strong => symmetric_preset(T::lit(100.0), T::lit(15.0)),
            Preset::BadCavity => symmetric_preset(T::lit(70.0), T::lit(250.0)),
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strong" => Ok(Preset::Strong),
            "bad_cavity" | "bad-cavity" => Ok(Preset::BadCavity),
            other => Err(format!("unknown preset `{other}` (expected strong or bad_cavity)")),
        }
    }
}

/// Default drive magnitude for both probes.
pub const DEFAULT_DRIVE: f64 = 0.1;

/// Symmetric configuration with critical coupling, phases pi/2 and the
/// default drive on both probes.
pub fn symmetric_preset<T: Scalar>(g0: T, h: T) -> PhysicalParams<T> {
    let kappa_in = T::one();
    let kappa_ex = critical_kappa_ex(h, kappa_in);
    let drive = Complex::new(T::lit(DEFAULT_DRIVE), T::zero());
    PhysicalParams {
        g0_1: g0,
        g0_2: g0,
        h1: h,
        h2: h,
        kappa_in_1: kappa_in,
        kappa_in_2: kappa_in,
        kappa_ex_1: kappa_ex,
        kappa_ex_2: kappa_ex,
        gamma_1: T::one(),
        gamma_2: T::one(),
        p: T::zero(),
        q: T::zero(),
        epsilon: T::zero(),
        delta_ground: T::zero(),
        atom_detuning_1: T::zero(),
        atom_detuning_2: T::zero(),
        delta_c_1: T::zero(),
        delta_c_2: T::zero(),
        cavity_follows_atom: true,
        drive_1: drive,
        drive_2: drive,
        phase_1: T::FRAC_PI_2(),
        phase_2: T::FRAC_PI_2(),
        radial_factor: T::one(),
    }
}

impl<T: Scalar> PhysicalParams<T> {
    /// Set a parameter from its config key and textual value.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue { key: key.to_string(), value: value.to_string() };
        let v = value.trim();
        match key {
            "cavity_follows_atom" => {
                self.cavity_follows_atom = match v {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    _ => return Err(bad()),
                };
                Ok(())
            }
            "E_1" | "E_2" => {
                let c = parse_complex(v).ok_or_else(bad)?;
                let c = Complex::new(T::lit(c.re), T::lit(c.im));
                if key == "E_1" {
                    self.drive_1 = c;
                } else {
                    self.drive_2 = c;
                }
                Ok(())
            }
            _ => {
                let x: f64 = v.parse().map_err(|_| bad())?;
                self.set_real(key, x)
            }
        }
    }

    /// Set a real-valued parameter. Drives are set to a real amplitude; the
    /// boolean switch is rejected.
    pub fn set_real(&mut self, key: &str, value: f64) -> Result<(), ConfigError> {
        let x = T::lit(value);
        let slot = match key {
            "g0_1" => &mut self.g0_1,
            "g0_2" => &mut self.g0_2,
            "h1" => &mut self.h1,
            "h2" => &mut self.h2,
            "kappa_in_1" => &mut self.kappa_in_1,
            "kappa_in_2" => &mut self.kappa_in_2,
            "kappa_ex_1" => &mut self.kappa_ex_1,
            "kappa_ex_2" => &mut self.kappa_ex_2,
            "gamma_1" => &mut self.gamma_1,
            "gamma_2" => &mut self.gamma_2,
            "p" => &mut self.p,
            "q" => &mut self.q,
            "epsilon" => &mut self.epsilon,
            "delta_ground" => &mut self.delta_ground,
            "Delta_1" => &mut self.atom_detuning_1,
            "Delta_2" => &mut self.atom_detuning_2,
            "delta_c_1" => &mut self.delta_c_1,
            "delta_c_2" => &mut self.delta_c_2,
            "phase_1" => &mut self.phase_1,
            "phase_2" => &mut self.phase_2,
            "radial_factor" => &mut self.radial_factor,
            "E_1" => {
                self.drive_1 = Complex::new(x, T::zero());
                return Ok(());
            }
            "E_2" => {
                self.drive_2 = Complex::new(x, T::zero());
                return Ok(());
            }
            "cavity_follows_atom" => {
                return Err(ConfigError::BadValue { key: key.to_string(), value: value.to_string() })
            }
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        };
        *slot = x;
        Ok(())
    }

    /// Apply a flat `key = value` config text. `#` starts a comment.
    pub fn apply_config(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: n + 1 })?;
            self.set_key(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Render as config text that [`apply_config`](Self::apply_config) reads back.
    pub fn to_config(&self) -> String {
        let mut out = String::new();
        let c = |z: Complex<T>| format!("{}{:+}i", z.re, z.im);
        let vals: Vec<String> = vec![
            self.g0_1.to_string(),
            self.g0_2.to_string(),
            self.h1.to_string(),
            self.h2.to_string(),
            self.kappa_in_1.to_string(),
            self.kappa_in_2.to_string(),
            self.kappa_ex_1.to_string(),
            self.kappa_ex_2.to_string(),
            self.gamma_1.to_string(),
            self.gamma_2.to_string(),
            self.p.to_string(),
            self.q.to_string(),
            self.epsilon.to_string(),
            self.delta_ground.to_string(),
            self.atom_detuning_1.to_string(),
            self.atom_detuning_2.to_string(),
            self.delta_c_1.to_string(),
            self.delta_c_2.to_string(),
            self.cavity_follows_atom.to_string(),
            c(self.drive_1),
            c(self.drive_2),
            self.phase_1.to_string(),
            self.phase_2.to_string(),
            self.radial_factor.to_string(),
        ];
        for (k, v) in PARAM_KEYS.iter().zip(vals) {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

/// Accepts `re`, `re+imi`, `re-imi`, `imi` (num-complex syntax).
fn parse_complex(s: &str) -> Option<Complex<f64>> {
    if let Ok(x) = s.parse::<f64>() {
        return Some(Complex::new(x, 0.0));
    }
    Complex::<f64>::from_str(&s.replace(' ', "")).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn strong_preset_is_valid() {
        let p = validate(Preset::Strong.params::<f64>()).unwrap();
        let one = p.pair(Pair::One);
        assert_eq!(one.g0, 100.0);
        assert_eq!(one.h, 15.0);
        assert_relative_eq!(one.kappa_ex, 226f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(one.kappa, 1.0 + 226f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn bad_cavity_preset_kappa() {
        let p = validate(Preset::BadCavity.params::<f64>()).unwrap();
        assert_relative_eq!(p.pair(Pair::Two).kappa_ex, 62501f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(p.pair(Pair::Two).kappa, 251.002, epsilon = 1e-3);
    }

    #[test]
    fn negative_rate_rejected() {
        let mut raw = Preset::Strong.params::<f64>();
        raw.kappa_in_1 = -1.0;
        let err = validate(raw).unwrap_err();
        assert!(err
            .0
            .iter()
            .any(|v| matches!(v, Violation::NegativeRate { name: "kappa_in_1", .. })));
    }

    #[test]
    fn epsilon_with_scattering_rejected() {
        let mut raw = Preset::Strong.params::<f64>();
        raw.epsilon = 5.0;
        raw.p = 1.0;
        let err = validate(raw).unwrap_err();
        assert!(err.0.iter().any(|v| matches!(v, Violation::EpsilonWithScattering { .. })));
    }

    #[test]
    fn zero_total_kappa_rejected() {
        let mut raw = Preset::Strong.params::<f64>();
        raw.kappa_in_2 = 0.0;
        raw.kappa_ex_2 = 0.0;
        let err = validate(raw).unwrap_err();
        assert_eq!(err.0, vec![Violation::ZeroTotalKappa { pair: 2 }]);
    }

    #[test]
    fn violations_are_collected() {
        let mut raw = Preset::Strong.params::<f64>();
        raw.gamma_1 = -1.0;
        raw.radial_factor = 1.5;
        assert_eq!(validate(raw).unwrap_err().0.len(), 2);
    }

    #[test]
    fn critical_coupling_values() {
        assert_relative_eq!(critical_kappa_ex(15.0, 1.0), 15.033296, epsilon = 1e-6);
        assert_eq!(critical_kappa_ex(0.0, 1.0), 1.0);
        assert_relative_eq!(critical_kappa_ex(250.0, 1.0), 250.002, epsilon = 1e-6);
        assert_relative_eq!(critical_kappa_ex(250.0f32, 1.0), 250.002, epsilon = 1e-3);
    }

    fn with_phase(phase: f64) -> ModeCouplings<f64> {
        let mut raw = Preset::Strong.params::<f64>();
        raw.phase_1 = phase;
        raw.phase_2 = phase;
        validate(raw).unwrap().couplings()
    }

    #[test]
    fn couplings_at_special_phases() {
        let c = with_phase(std::f64::consts::FRAC_PI_2);
        assert!(c.g_a1.abs() < 1e-12);
        assert_relative_eq!(c.g_b1, 100.0);
        let c = with_phase(0.0);
        assert_eq!((c.g_a1, c.g_b1), (100.0, 0.0));
        let c = with_phase(std::f64::consts::FRAC_PI_4);
        assert_relative_eq!(c.g_a2, 70.710678, epsilon = 1e-6);
        assert_relative_eq!(c.g_b2, 70.710678, epsilon = 1e-6);
    }

    #[test]
    fn cavity_detuning_slaving() {
        let mut raw = Preset::Strong.params::<f64>();
        raw.atom_detuning_1 = -22.0;
        raw.delta_c_1 = 3.0;
        let v = validate(raw.clone()).unwrap();
        assert_eq!(v.pair(Pair::One).cavity_detuning, -22.0);
        raw.cavity_follows_atom = false;
        let v = validate(raw).unwrap();
        assert_eq!(v.pair(Pair::One).cavity_detuning, 3.0);
    }

    #[test]
    fn config_round_trip_and_errors() {
        let mut raw = Preset::BadCavity.params::<f64>();
        raw.apply_config("# comment\nDelta_1 = -22\nE_2 = 0.05+0.02i\ncavity_follows_atom=false\n")
            .unwrap();
        assert_eq!(raw.atom_detuning_1, -22.0);
        assert_eq!(raw.drive_2, Complex::new(0.05, 0.02));
        assert!(!raw.cavity_follows_atom);
        let mut back = Preset::Strong.params::<f64>();
        back.apply_config(&raw.to_config()).unwrap();
        assert_eq!(back, raw);

        assert_eq!(
            raw.apply_config("nope = 1"),
            Err(ConfigError::UnknownKey("nope".into()))
        );
        assert!(matches!(raw.apply_config("h1 = abc"), Err(ConfigError::BadValue { .. })));
        assert_eq!(raw.apply_config("h1 2"), Err(ConfigError::Syntax { line: 1 }));
    }

    #[test]
    fn every_key_is_settable() {
        let mut raw = Preset::Strong.params::<f64>();
        for key in PARAM_KEYS {
            if *key == "cavity_follows_atom" {
                assert!(raw.set_real(key, 1.0).is_err());
                raw.set_key(key, "false").unwrap();
            } else {
                raw.set_real(key, 0.5).unwrap();
            }
        }
        assert!(!raw.cavity_follows_atom);
    }

    proptest! {
        #[test]
        fn critical_coupling_identity(h in 0.0f64..500.0, kin in 0.0f64..50.0) {
            let k = critical_kappa_ex(h, kin);
            let scale = (h * h + kin * kin).max(1.0);
            prop_assert!((k * k - h * h - kin * kin).abs() / scale < 1e-12);
        }

        #[test]
        fn pythagorean_couplings(g1 in 0.0f64..300.0, g2 in 0.0f64..300.0,
                                 ph1 in -7.0f64..7.0, ph2 in -7.0f64..7.0, f in 0.0f64..=1.0) {
            let mut raw = Preset::Strong.params::<f64>();
            raw.g0_1 = g1; raw.g0_2 = g2; raw.phase_1 = ph1; raw.phase_2 = ph2;
            raw.radial_factor = f;
            let c = validate(raw).unwrap().couplings();
            for (ga, gb, g0) in [(c.g_a1, c.g_b1, g1), (c.g_a2, c.g_b2, g2)] {
                let want = (g0 * f).powi(2);
                prop_assert!((ga * ga + gb * gb - want).abs() <= 1e-12 * want.max(1e-300));
            }
        }

        #[test]
        fn validate_is_idempotent(d1 in -300.0f64..300.0, d2 in -300.0f64..300.0, follow: bool) {
            let mut raw = Preset::BadCavity.params::<f64>();
            raw.atom_detuning_1 = d1; raw.atom_detuning_2 = d2; raw.cavity_follows_atom = follow;
            let once = validate(raw).unwrap();
            let twice = validate(once.raw().clone()).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
