//! Problem definition: transition matrix, ξ-numbers, potentials, and the
//! λ ↔ ρ branch bookkeeping.

use num_complex::Complex;

use crate::error::{Result, SlwError};
use crate::quadrature::{composite, graded_edges};
use crate::scalar::{ci, cone, czero, is_finite, Real};

/// Below this value of `|sin πν|` the order is treated as an integer.
pub const NEAR_INTEGER_NU: f64 = 1e-8;

/// Matching matrix `A` relating the `s_k` basis on the two sides of `x = a`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionMatrix<R> {
    pub a11: Complex<R>,
    pub a12: Complex<R>,
    pub a21: Complex<R>,
    pub a22: Complex<R>,
}

impl<R: Real> TransitionMatrix<R> {
    pub fn new(a11: Complex<R>, a12: Complex<R>, a21: Complex<R>, a22: Complex<R>) -> Self {
        TransitionMatrix { a11, a12, a21, a22 }
    }

    pub fn identity() -> Self {
        Self::new(cone(), czero(), czero(), cone())
    }

    pub fn det(&self) -> Complex<R> {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    /// `A · v`.
    pub fn apply(&self, v: [Complex<R>; 2]) -> [Complex<R>; 2] {
        [self.a11 * v[0] + self.a12 * v[1], self.a21 * v[0] + self.a22 * v[1]]
    }

    /// `A⁻¹ · v`.
    pub fn solve(&self, v: [Complex<R>; 2]) -> [Complex<R>; 2] {
        let d = self.det();
        [(self.a22 * v[0] - self.a12 * v[1]) / d, (self.a11 * v[1] - self.a21 * v[0]) / d]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XiMatrix<R> {
    pub xi11: Complex<R>,
    pub xi12: Complex<R>,
    pub xi21: Complex<R>,
    pub xi22: Complex<R>,
}

impl<R: Real> XiMatrix<R> {
    /// `ξ_jj` for `j = 1, 2`.
    pub fn diag(&self, j: usize) -> Complex<R> {
        if j == 1 {
            self.xi11
        } else {
            self.xi22
        }
    }
}

/// The ξ-numbers governing the large-ρ behaviour of `Δ`, `φ` and `e`.
pub fn compute_xi<R: Real>(a: &TransitionMatrix<R>, nu: Complex<R>) -> Result<XiMatrix<R>> {
    let pi = R::PI();
    let s = (nu * pi).sin();
    if s.norm() < R::lit(NEAR_INTEGER_NU) {
        return Err(SlwError::NearIntegerNu(s.norm().as_f64()));
    }
    let i = ci::<R>();
    let two = R::lit(2.0);
    let pre = cone::<R>() / (s * two);
    let e1 = (i * nu * pi).exp();
    let e2 = e1 * e1;
    let xi11 = pre * (-a.a11 * e2 + a.a22 / e2);
    let xi12 = pre * (-i * (a.a11 * e1 - a.a22 / e1));
    let xi22 = pre * (a.a11 - a.a22);
    Ok(XiMatrix { xi11, xi12, xi21: xi12, xi22 })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegimeReport<R> {
    pub supported: bool,
    pub abs_xi11: R,
    pub abs_xi12: R,
    pub abs_xi22: R,
}

/// Flags the case `|ξ11| > |ξ12| > 0` and `|ξ22| > |ξ12| > 0`, the only one
/// the spectrum and inverse routines handle.
pub fn classify_regime<R: Real>(xi: &XiMatrix<R>) -> RegimeReport<R> {
    let (m11, m12, m22) = (xi.xi11.norm(), xi.xi12.norm(), xi.xi22.norm());
    RegimeReport {
        supported: m12 > R::zero() && m11 > m12 && m22 > m12,
        abs_xi11: m11,
        abs_xi12: m12,
        abs_xi22: m22,
    }
}

/// Which edge of the cut along `λ ≥ 0` a spectral point belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Edge {
    Upper,
    Lower,
}

/// A pair `(λ, ρ)` with `ρ² = λ` and `Im ρ ≥ 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralPoint<R> {
    pub lambda: Complex<R>,
    pub rho: Complex<R>,
    pub edge: Edge,
}

impl<R: Real> SpectralPoint<R> {
    /// Builds the point from `ρ` directly; `Im ρ` must be non-negative.
    pub fn from_rho(rho: Complex<R>) -> Self {
        debug_assert!(rho.im >= R::zero());
        let edge = if rho.re < R::zero() { Edge::Lower } else { Edge::Upper };
        SpectralPoint { lambda: rho * rho, rho, edge }
    }
}

/// Principal square root moved to `Im ρ ≥ 0`. On the positive real axis the
/// sign of the (possibly signed-zero) imaginary part selects the edge:
/// `+0` gives `ρ > 0`, `−0` gives `ρ < 0`.
pub fn lift_lambda<R: Real>(lambda: Complex<R>) -> SpectralPoint<R> {
    let lower = lambda.im.is_sign_negative();
    let mut rho = lambda.sqrt();
    if rho.im < R::zero() || (rho.im == R::zero() && lower && lambda.re > R::zero()) {
        rho = -rho;
    }
    if rho.im == R::zero() {
        rho.im = R::zero();
    }
    SpectralPoint { lambda, rho, edge: if lower { Edge::Lower } else { Edge::Upper } }
}

/// Potential `q(x)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Potential<R> {
    Zero,
    /// Smooth compactly supported bump `amplitude · exp(1 − 1/(1 − u²))`,
    /// `u = (x − center)/half_width`.
    Bump { center: R, half_width: R, amplitude: Complex<R> },
    /// Linear interpolation through samples, identically zero outside.
    Grid { x: Vec<R>, q: Vec<Complex<R>> },
    /// `amplitude · |x − center|^(−power)` on `(0, cutoff)`, zero beyond.
    /// Only meant for integrability experiments.
    InversePower { amplitude: Complex<R>, center: R, power: R, cutoff: R },
}

impl<R: Real> Potential<R> {
    pub fn bump(center: R, half_width: R, amplitude: Complex<R>) -> Self {
        Potential::Bump { center, half_width, amplitude }
    }

    pub fn grid(x: Vec<R>, q: Vec<Complex<R>>) -> Result<Self> {
        if x.len() != q.len() || x.len() < 2 {
            return Err(SlwError::Invalid("grid potential needs matching x and q arrays of length >= 2".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SlwError::Invalid("grid abscissae must be strictly increasing".into()));
        }
        if x.iter().any(|v| !v.is_finite()) || q.iter().any(|v| !is_finite(*v)) {
            return Err(SlwError::Invalid("grid potential has non-finite samples".into()));
        }
        Ok(Potential::Grid { x, q })
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Potential::Zero => true,
            Potential::Bump { amplitude, .. } => amplitude.norm() == R::zero(),
            Potential::Grid { q, .. } => q.iter().all(|v| v.norm() == R::zero()),
            Potential::InversePower { amplitude, .. } => amplitude.norm() == R::zero(),
        }
    }

    pub fn eval(&self, x: R) -> Complex<R> {
        match self {
            Potential::Zero => czero(),
            Potential::Bump { center, half_width, amplitude } => {
                let u = (x - *center) / *half_width;
                if u.abs() >= R::one() {
                    czero()
                } else {
                    *amplitude * (R::one() - R::one() / (R::one() - u * u)).exp()
                }
            }
            Potential::Grid { x: xs, q } => {
                let n = xs.len();
                if x < xs[0] || x > xs[n - 1] {
                    return czero();
                }
                let i = match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
                    Ok(i) => return q[i],
                    Err(i) => i,
                };
                let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
                q[i - 1] * (R::one() - t) + q[i] * t
            }
            Potential::InversePower { amplitude, center, power, cutoff } => {
                if x >= *cutoff || x == *center {
                    czero()
                } else {
                    *amplitude * (x - *center).abs().powf(-*power)
                }
            }
        }
    }

    /// Closed interval outside of which `q` vanishes identically.
    pub fn support(&self) -> Option<(R, R)> {
        if self.is_zero() {
            return None;
        }
        match self {
            Potential::Zero => None,
            Potential::Bump { center, half_width, .. } => Some((*center - *half_width, *center + *half_width)),
            Potential::Grid { x, q } => {
                let n = x.len();
                let first = q.iter().position(|v| v.norm() != R::zero())?;
                let last = q.iter().rposition(|v| v.norm() != R::zero())?;
                Some((x[first.saturating_sub(1)], x[(last + 1).min(n - 1)]))
            }
            Potential::InversePower { cutoff, .. } => Some((R::zero(), *cutoff)),
        }
    }

    /// True when `q ≡ 0` on the open interval `(lo, hi)`.
    pub fn vanishes_on(&self, lo: R, hi: R) -> bool {
        match self.support() {
            None => true,
            Some((s0, s1)) => hi <= s0 || lo >= s1,
        }
    }

    /// Upper bound for `|q|` (infinite for the singular test family).
    pub fn sup_abs(&self) -> R {
        match self {
            Potential::Zero => R::zero(),
            Potential::Bump { amplitude, .. } => amplitude.norm(),
            Potential::Grid { q, .. } => q.iter().fold(R::zero(), |m, v| m.max(v.norm())),
            Potential::InversePower { amplitude, .. } => {
                if amplitude.norm() == R::zero() {
                    R::zero()
                } else {
                    R::infinity()
                }
            }
        }
    }

    /// Points where `q` is not smooth.
    pub fn breakpoints(&self) -> Vec<R> {
        match self {
            Potential::Grid { x, .. } => x.clone(),
            Potential::InversePower { cutoff, .. } => vec![*cutoff],
            _ => Vec::new(),
        }
    }
}

/// The operator `−y″ + (ν₀/(x−a)² + q) y` on the half-line with `y(0) = 0`
/// and matching matrix `A` at `x = a`.
#[derive(Clone, Debug)]
pub struct SingularProblem<R: Real> {
    pub a: R,
    pub nu: Complex<R>,
    pub nu0: Complex<R>,
    pub amat: TransitionMatrix<R>,
    pub t_bound: R,
    pub q: Potential<R>,
    pub xi: XiMatrix<R>,
}

impl<R: Real> SingularProblem<R> {
    pub fn new(a: R, nu: Complex<R>, amat: TransitionMatrix<R>, t_bound: R, q: Potential<R>) -> Result<Self> {
        if !(a > R::zero()) || !a.is_finite() {
            return Err(SlwError::Invalid(format!("singular point a = {} must be positive", a.as_f64())));
        }
        if !is_finite(nu) || nu.re <= R::zero() {
            return Err(SlwError::Invalid(format!("Re nu must be positive, got {}", nu.re.as_f64())));
        }
        if !(t_bound > a) {
            return Err(SlwError::Invalid("T must exceed a".into()));
        }
        if amat.a12.norm() != R::zero() {
            return Err(SlwError::Unsupported("a12 != 0 matching matrices are not implemented".into()));
        }
        if amat.det().norm() == R::zero() || ![amat.a11, amat.a21, amat.a22].iter().all(|z| is_finite(*z)) {
            return Err(SlwError::Invalid("matching matrix must be finite and invertible".into()));
        }
        let xi = compute_xi(&amat, nu)?;
        let nu0 = nu * nu - Complex::new(R::lit(0.25), R::zero());
        Ok(SingularProblem { a, nu, nu0, amat, t_bound, q, xi })
    }

    /// Same singular data with a different potential.
    pub fn with_potential(&self, q: Potential<R>) -> Self {
        SingularProblem { q, ..self.clone() }
    }

    pub fn regime(&self) -> RegimeReport<R> {
        classify_regime(&self.xi)
    }

    pub fn det_a(&self) -> Complex<R> {
        self.amat.det()
    }

    /// `1` on `x < a`, `det A` on `x > a`.
    pub fn eta(&self, x: R) -> Result<Complex<R>> {
        if x == self.a {
            return Err(SlwError::AtSingularity(x.as_f64()));
        }
        Ok(if x < self.a { cone() } else { self.det_a() })
    }

    /// Full coefficient `ν₀/(x−a)² + q(x)`.
    pub fn p(&self, x: R) -> Complex<R> {
        let t = x - self.a;
        self.nu0 / (t * t) + self.q.eval(x)
    }

    /// True if `(self, other)` share `a`, `ν` and `A`.
    pub fn same_singular_data(&self, other: &Self) -> bool {
        let tol = R::lit(1e-12);
        (self.a - other.a).abs() <= tol * self.a
            && (self.nu - other.nu).norm() <= tol
            && [
                (self.amat.a11, other.amat.a11),
                (self.amat.a12, other.amat.a12),
                (self.amat.a21, other.amat.a21),
                (self.amat.a22, other.amat.a22),
            ]
            .iter()
            .all(|(u, v)| (*u - *v).norm() <= tol * (R::one() + u.norm()))
    }
}

/// Outcome of the integrability refinement study.
#[derive(Clone, Debug, PartialEq)]
pub struct WReport {
    /// Weighted integrals over `[0, T]` with the neighbourhood `|x − a| < δ`
    /// removed, for `δ/a = 1e-4, 1e-6, 1e-8`.
    pub near_values: Vec<f64>,
    pub tail: f64,
    pub pass: bool,
}

/// Estimates `∫₀ᵀ |q| |x−a|^min(0, 1−2 Re ν)` and `∫_T^∞ |q|` by shrinking
/// the excluded neighbourhood of `a`; errors if the values keep moving.
pub fn check_class_w<R: Real>(problem: &SingularProblem<R>) -> Result<WReport> {
    let a = problem.a;
    let t_end = problem.t_bound;
    let expo = (R::one() - R::lit(2.0) * problem.nu.re).min(R::zero());
    let weight = |x: R| problem.q.eval(x).norm() * (x - a).abs().powf(expo);
    let mut values = Vec::new();
    for &d in &[1e-4, 1e-6, 1e-8] {
        let delta = R::lit(d) * a;
        let mut total = R::zero();
        // Left side: offsets from a in (delta, a); right side: (delta, T - a).
        for (len, sign) in [(a, -R::one()), (t_end - a, R::one())] {
            let edges = graded_edges(delta, len, 48);
            let (ts, ws) = composite(&edges, 8);
            for (t, w) in ts.iter().zip(ws.iter()) {
                total += *w * weight(a + sign * *t);
            }
        }
        values.push(total.as_f64());
    }
    let tail = match problem.q.support() {
        Some((_, hi)) if hi > t_end => {
            let n = 400;
            let edges: Vec<R> = (0..=n).map(|i| t_end + (hi - t_end) * R::nat(i) / R::nat(n)).collect();
            let (xs, ws) = composite(&edges, 8);
            xs.iter().zip(ws.iter()).map(|(x, w)| *w * problem.q.eval(*x).norm()).fold(R::zero(), |a, b| a + b).as_f64()
        }
        _ => 0.0,
    };
    let (v2, v3) = (values[1], values[2]);
    let settled = values.iter().all(|v| v.is_finite()) && (v3 - v2).abs() <= 0.01 * v3.abs().max(f64::MIN_POSITIVE);
    let settled = settled || (v2 == 0.0 && v3 == 0.0);
    if !settled || !tail.is_finite() {
        return Err(SlwError::NonIntegrable { values });
    }
    Ok(WReport { near_values: values, tail, pass: true })
}
