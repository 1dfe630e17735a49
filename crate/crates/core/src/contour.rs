//! The parabola `λ(s) = (s + ih)²`, `|s| ≤ s_max`, with composite
//! Gauss–Legendre nodes, and Weyl-function samples on it.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Result, SlwError};
use crate::forward::ForwardSolver;
use crate::problem::SpectralPoint;
use crate::quadrature::gauss_legendre;
use crate::scalar::Real;

/// Quadrature nodes on the truncated parabola.
///
/// The weights carry `λ′(s)` and the orientation that makes
/// `(1/2πi) Σ f(μ_n) w_n / (λ − μ_n) = f(λ)` for `f` analytic and decaying
/// to the left of the parabola (`Im √λ > h`). That is the direction of
/// decreasing `s`.
#[derive(Clone, Debug)]
pub struct Contour<R> {
    pub h: R,
    pub s_max: R,
    pub s: Vec<R>,
    pub rho: Vec<Complex<R>>,
    pub lambda: Vec<Complex<R>>,
    pub weights: Vec<Complex<R>>,
}

impl<R: Real> Contour<R> {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn point(&self, n: usize) -> SpectralPoint<R> {
        SpectralPoint::from_rho(self.rho[n])
    }

    /// Whether `λ` lies strictly left of the parabola.
    pub fn contains_left(&self, lambda: Complex<R>) -> bool {
        crate::problem::lift_lambda(lambda).rho.im > self.h
    }

    /// `(1/2πi) Σ f_n w_n / (λ − μ_n)`.
    pub fn cauchy(&self, f: &[Complex<R>], lambda: Complex<R>) -> Complex<R> {
        let sum = f
            .iter()
            .zip(self.lambda.iter().zip(self.weights.iter()))
            .fold(Complex::new(R::zero(), R::zero()), |acc, (fv, (mu, w))| acc + *fv * *w / (lambda - *mu));
        sum / two_pi_i::<R>()
    }
}

pub(crate) fn two_pi_i<R: Real>() -> Complex<R> {
    Complex::new(R::zero(), R::PI() * R::lit(2.0))
}

/// Contour with `n` nodes (even). Panels hold 4 Gauss points when `4 | n`,
/// otherwise 2, and are uniform in `s`; node `k` and node `n−1−k` are exact
/// mirror images.
pub fn build_contour<R: Real>(h: R, s_max: R, n: usize) -> Result<Contour<R>> {
    if !(h > R::zero()) || !h.is_finite() {
        return Err(SlwError::Invalid(format!("contour height must be positive, got {h}")));
    }
    if n < 2 || !n.is_multiple_of(2) {
        return Err(SlwError::Invalid(format!("node count must be even and positive, got {n}")));
    }
    let four_h = h * R::lit(4.0);
    if !(s_max >= four_h) {
        return Err(SlwError::BadTruncation { s_max: s_max.as_f64(), four_h: four_h.as_f64() });
    }
    let per = if n.is_multiple_of(4) { 4 } else { 2 };
    let panels = n / per;
    let (gx, gw) = gauss_legendre::<R>(per);
    let width = s_max * R::lit(2.0) / R::nat(panels);
    let half = width * R::lit(0.5);
    let mut s = Vec::with_capacity(n);
    let mut gws = Vec::with_capacity(n);
    for p in 0..panels {
        let mid = -s_max + width * R::nat(p) + half;
        for (t, w) in gx.iter().zip(gw.iter()) {
            s.push(mid + half * *t);
            gws.push(half * *w);
        }
    }
    for k in 0..n / 2 {
        let m = n - 1 - k;
        let v = (s[m] - s[k]) * R::lit(0.5);
        s[k] = -v;
        s[m] = v;
        let w = (gws[k] + gws[m]) * R::lit(0.5);
        gws[k] = w;
        gws[m] = w;
    }
    let rho: Vec<Complex<R>> = s.iter().map(|&sv| Complex::new(sv, h)).collect();
    let lambda = rho.iter().map(|r| r * r).collect();
    let weights = rho.iter().zip(gws.iter()).map(|(r, w)| -(*r * R::lit(2.0)) * *w).collect();
    Ok(Contour { h, s_max, s, rho, lambda, weights })
}

/// Truncation fallback `1.5 · max(8h, 40π/a)`.
pub fn default_s_max<R: Real>(h: R, a: R) -> R {
    R::lit(1.5) * (h * R::lit(8.0)).max(R::lit(40.0) * R::PI() / a)
}

/// Weyl function at the contour nodes.
#[derive(Clone, Debug)]
pub struct WeylSamples<R> {
    pub contour: Contour<R>,
    pub m: Vec<Complex<R>>,
}

impl<R: Real> WeylSamples<R> {
    /// Samples `M` of `solver` at every node.
    pub fn from_forward(solver: &ForwardSolver<R>, contour: Contour<R>) -> Result<Self> {
        let m = weyl_at_nodes(solver, &contour)?;
        Ok(WeylSamples { contour, m })
    }

    /// Checks the samples are usable as inversion input.
    pub fn validate(&self) -> Result<()> {
        if self.m.len() != self.contour.len() {
            return Err(SlwError::Invalid(format!(
                "{} Weyl values for {} contour nodes",
                self.m.len(),
                self.contour.len()
            )));
        }
        if let Some(k) = self.m.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(SlwError::Invalid(format!("Weyl value at node {k} is not finite")));
        }
        Ok(())
    }
}

/// `M(λ_n)` at every node, in node order.
pub fn weyl_at_nodes<R: Real>(solver: &ForwardSolver<R>, contour: &Contour<R>) -> Result<Vec<Complex<R>>> {
    (0..contour.len()).into_par_iter().map(|n| solver.weyl(&contour.point(n)).map(|w| w.m)).collect()
}
