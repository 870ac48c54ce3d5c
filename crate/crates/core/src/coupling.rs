//! Coupling functions on the circle.
//!
//! A coupling function is a 2π-periodic scalar function `g(φ)`; the pairwise
//! interaction of oscillators `i` and `j` is `g(θ_i - θ_j)`. The main
//! representation is a truncated Fourier series, [`FourierCoupling`]. A
//! compactly supported bump, [`BumpPerturbation`], can be added to it to move
//! `g'(0)` while leaving `g` and `g'` untouched away from the origin.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `[0, 2π)`.
#[inline]
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if y >= TAU {
        0.0
    } else {
        y
    }
}

/// Wraps an angle into `(-π, π]`.
#[inline]
pub fn wrap_signed(x: f64) -> f64 {
    let y = wrap_phase(x);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// `d(φ, ψ) = 1 - cos(φ - ψ)`, a metric on the circle with values in `[0, 2]`.
#[inline]
pub fn circle_distance(phi: f64, psi: f64) -> f64 {
    1.0 - (phi - psi).cos()
}

/// A point on the circle, stored as its representative in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Phase(f64);

impl Phase {
    pub const ZERO: Phase = Phase(0.0);

    pub fn new(value: f64) -> Self {
        Phase(wrap_phase(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Representative in `(-π, π]`.
    pub fn signed(self) -> f64 {
        wrap_signed(self.0)
    }

    pub fn distance(self, other: Phase) -> f64 {
        circle_distance(self.0, other.0)
    }
}

impl From<f64> for Phase {
    fn from(value: f64) -> Self {
        Phase::new(value)
    }
}

impl From<Phase> for f64 {
    fn from(p: Phase) -> f64 {
        p.0
    }
}

impl Add for Phase {
    type Output = Phase;
    fn add(self, rhs: Phase) -> Phase {
        Phase::new(self.0 + rhs.0)
    }
}

impl Sub for Phase {
    type Output = Phase;
    fn sub(self, rhs: Phase) -> Phase {
        Phase::new(self.0 - rhs.0)
    }
}

impl Neg for Phase {
    type Output = Phase;
    fn neg(self) -> Phase {
        Phase::new(-self.0)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Anything that can act as a coupling function: a value and a first derivative
/// at every phase difference.
pub trait Coupling: Sync {
    fn value(&self, phi: f64) -> f64;

    fn derivative(&self, phi: f64) -> f64;

    fn value_and_derivative(&self, phi: f64) -> (f64, f64) {
        (self.value(phi), self.derivative(phi))
    }
}

impl<C: Coupling + ?Sized> Coupling for &C {
    fn value(&self, phi: f64) -> f64 {
        (**self).value(phi)
    }
    fn derivative(&self, phi: f64) -> f64 {
        (**self).derivative(phi)
    }
    fn value_and_derivative(&self, phi: f64) -> (f64, f64) {
        (**self).value_and_derivative(phi)
    }
}

/// `g(φ) = Σ_{r=0}^{R} c_r cos(rφ) + s_r sin(rφ)`.
///
/// Serialized as `{"c": [c0, ..., cR], "s": [s1, ..., sR]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFourier", into = "RawFourier")]
pub struct FourierCoupling {
    cos_coeffs: Vec<f64>,
    sin_coeffs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawFourier {
    c: Vec<f64>,
    s: Vec<f64>,
}

impl TryFrom<RawFourier> for FourierCoupling {
    type Error = Error;
    fn try_from(raw: RawFourier) -> Result<Self> {
        FourierCoupling::new(raw.c, raw.s)
    }
}

impl From<FourierCoupling> for RawFourier {
    fn from(g: FourierCoupling) -> Self {
        RawFourier {
            c: g.cos_coeffs,
            s: g.sin_coeffs,
        }
    }
}

/// Named coupling functions shipped with the crate.
pub const PRESETS: [&str; 3] = ["case0", "case1", "case2"];

impl FourierCoupling {
    /// `cos_coeffs` holds `c_0..c_R`, `sin_coeffs` holds `s_1..s_R`.
    pub fn new(cos_coeffs: Vec<f64>, sin_coeffs: Vec<f64>) -> Result<Self> {
        if sin_coeffs.is_empty() {
            return Err(Error::InvalidConfig(
                "coupling needs at least one Fourier mode".into(),
            ));
        }
        if cos_coeffs.len() != sin_coeffs.len() + 1 {
            return Err(Error::InvalidConfig(format!(
                "expected {} cosine coefficients (c0..cR) for {} sine coefficients, got {}",
                sin_coeffs.len() + 1,
                sin_coeffs.len(),
                cos_coeffs.len()
            )));
        }
        if cos_coeffs.iter().chain(&sin_coeffs).any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig(
                "coupling coefficients must be finite".into(),
            ));
        }
        Ok(FourierCoupling {
            cos_coeffs,
            sin_coeffs,
        })
    }

    /// The identically zero coupling with `modes` Fourier modes.
    pub fn zero(modes: usize) -> Self {
        let modes = modes.max(1);
        FourierCoupling {
            cos_coeffs: vec![0.0; modes + 1],
            sin_coeffs: vec![0.0; modes],
        }
    }

    /// `g(φ) = amplitude · sin(mode · φ)`.
    pub fn pure_sine(mode: usize, amplitude: f64) -> Self {
        let mut g = FourierCoupling::zero(mode);
        g.sin_coeffs[mode - 1] = amplitude;
        g
    }

    /// `case0`: `-sin 4φ`; `case1` and `case2`: four-mode couplings that
    /// support a (2,2,2) heteroclinic network on six oscillators.
    pub fn preset(name: &str) -> Option<Self> {
        let (c, s) = match name {
            "case0" => (
                vec![0.0, 0.0, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, -1.0],
            ),
            "case1" => (
                vec![0.0, 0.31185, 0.37096, 0.0, 0.99008],
                vec![0.10793, 0.58180, 0.0, -0.14053],
            ),
            "case2" => (
                vec![0.0, 0.31185, 0.39, 0.0, 0.99008],
                vec![0.10793, 0.58180, 0.0, -0.14053],
            ),
            _ => return None,
        };
        Some(FourierCoupling {
            cos_coeffs: c,
            sin_coeffs: s,
        })
    }

    pub fn modes(&self) -> usize {
        self.sin_coeffs.len()
    }

    pub fn cos_coeffs(&self) -> &[f64] {
        &self.cos_coeffs
    }

    pub fn sin_coeffs(&self) -> &[f64] {
        &self.sin_coeffs
    }

    /// Multiplies every coefficient by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        FourierCoupling {
            cos_coeffs: self.cos_coeffs.iter().map(|c| c * factor).collect(),
            sin_coeffs: self.sin_coeffs.iter().map(|s| s * factor).collect(),
        }
    }

    pub fn eval(&self, phi: f64) -> f64 {
        self.value_and_derivative(phi).0
    }

    pub fn eval_derivative(&self, phi: f64) -> f64 {
        self.value_and_derivative(phi).1
    }
}

impl Coupling for FourierCoupling {
    fn value(&self, phi: f64) -> f64 {
        let (s1, c1) = phi.sin_cos();
        let (mut sr, mut cr) = (s1, c1);
        let mut value = self.cos_coeffs[0];
        for (&c, &s) in self.cos_coeffs[1..].iter().zip(&self.sin_coeffs) {
            value += c * cr + s * sr;
            let next_c = cr * c1 - sr * s1;
            sr = sr * c1 + cr * s1;
            cr = next_c;
        }
        value
    }

    fn derivative(&self, phi: f64) -> f64 {
        self.value_and_derivative(phi).1
    }

    fn value_and_derivative(&self, phi: f64) -> (f64, f64) {
        let (s1, c1) = phi.sin_cos();
        let (mut sr, mut cr) = (s1, c1);
        let mut value = self.cos_coeffs[0];
        let mut deriv = 0.0;
        for (r, (&c, &s)) in self.cos_coeffs[1..].iter().zip(&self.sin_coeffs).enumerate() {
            let k = (r + 1) as f64;
            value += c * cr + s * sr;
            deriv += k * (s * cr - c * sr);
            let next_c = cr * c1 - sr * s1;
            sr = sr * c1 + cr * s1;
            cr = next_c;
        }
        (value, deriv)
    }
}

/// `h(φ) = -x · B(x/ε)` with `x` the signed representative of `φ` and
/// `B(u) = exp(1 - 1/(1 - u²))` on `|u| < 1`, zero elsewhere.
///
/// `h(0) = 0`, `h'(0) = -1`, and `h` vanishes identically for `|x| ≥ ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpPerturbation {
    epsilon: f64,
    strength: f64,
}

impl BumpPerturbation {
    pub fn new(epsilon: f64, strength: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < PI) || !strength.is_finite() {
            return Err(Error::InvalidBump(epsilon));
        }
        Ok(BumpPerturbation { epsilon, strength })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn with_strength(self, strength: f64) -> Self {
        BumpPerturbation { strength, ..self }
    }

    /// Unscaled bump `h(φ)`.
    pub fn shape(&self, phi: f64) -> f64 {
        let x = wrap_signed(phi);
        let u = x / self.epsilon;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        -x * bump_envelope(u)
    }

    /// Unscaled `h'(φ)`.
    pub fn shape_derivative(&self, phi: f64) -> f64 {
        let x = wrap_signed(phi);
        let u = x / self.epsilon;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - u * u;
        -bump_envelope(u) * (1.0 - 2.0 * u * u / (q * q))
    }

    /// `true` when `φ` lies strictly inside the support.
    pub fn in_support(&self, phi: f64) -> bool {
        wrap_signed(phi).abs() < self.epsilon
    }
}

#[inline]
fn bump_envelope(u: f64) -> f64 {
    (1.0 - 1.0 / (1.0 - u * u)).exp()
}

/// `g_r(φ) = g(φ) + r·h(φ)`. Outside the bump support only `g` is evaluated.
#[derive(Debug, Clone, Copy)]
pub struct PerturbedCoupling<'a, C: Coupling + ?Sized> {
    base: &'a C,
    bump: BumpPerturbation,
}

impl<'a, C: Coupling + ?Sized> PerturbedCoupling<'a, C> {
    pub fn new(base: &'a C, bump: BumpPerturbation) -> Self {
        PerturbedCoupling { base, bump }
    }

    pub fn bump(&self) -> BumpPerturbation {
        self.bump
    }
}

impl<C: Coupling + ?Sized> Coupling for PerturbedCoupling<'_, C> {
    fn value(&self, phi: f64) -> f64 {
        if self.bump.in_support(phi) {
            self.base.value(phi) + self.bump.strength * self.bump.shape(phi)
        } else {
            self.base.value(phi)
        }
    }

    fn derivative(&self, phi: f64) -> f64 {
        if self.bump.in_support(phi) {
            self.base.derivative(phi) + self.bump.strength * self.bump.shape_derivative(phi)
        } else {
            self.base.derivative(phi)
        }
    }
}

/// Half the smallest wrapped absolute pairwise difference of `phases`.
///
/// Returns `None` for fewer than two phases.
pub fn default_bump_epsilon(phases: &[f64]) -> Option<f64> {
    min_pairwise_separation(phases).map(|s| 0.5 * s)
}

/// Smallest `|wrap_signed(φ_j - φ_k)|` over `j != k`.
pub fn min_pairwise_separation(phases: &[f64]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (j, a) in phases.iter().enumerate() {
        for b in &phases[j + 1..] {
            let d = wrap_signed(a - b).abs();
            best = Some(best.map_or(d, |m: f64| m.min(d)));
        }
    }
    best
}
