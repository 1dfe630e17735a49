//! Forward problem: `φ₁`, `φ`, the discontinuous Jost solution, `Δ(ρ)`,
//! `M(λ)` and `Φ(x, λ)`.
//!
//! Solutions are never integrated through `x = a`. On each side an anchor
//! point at `|ρ(x − a)| ≈ 3` carries the local basis `s_1, s_2` (series, or the
//! Volterra solution when `q` does not vanish near `a`); a solution arriving
//! at one anchor is expanded in that basis and continued on the other side
//! through the matching matrix.

use num_complex::Complex;

use crate::error::{Result, SlwError};
use crate::ode::{integrate, OdeOptions, Scaled};
use crate::problem::{SingularProblem, SpectralPoint};
use crate::scalar::{ci, cone, czero, mul_exp, Real};
use crate::series::{build_coefficients, SeriesCoefficients, DEFAULT_K_MAX, SERIES_TRUST_RADIUS};
use crate::volterra::{solve_volterra, BasisPoint, VolterraOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardOptions<R> {
    pub rtol: R,
    pub k_max: usize,
    /// Target `|ρ(x₊ − a)|` at the basis projection points.
    pub anchor_z: R,
    /// Minimal `|ρ(X_inf − a)|` where the Jost solution is started from its
    /// large-argument expansion.
    pub jost_z: R,
    pub near_zero_rho: R,
    pub volterra: VolterraOptions<R>,
}

impl<R: Real> Default for ForwardOptions<R> {
    fn default() -> Self {
        ForwardOptions {
            rtol: R::lit(1e-10),
            k_max: DEFAULT_K_MAX,
            anchor_z: R::lit(3.0),
            jost_z: R::lit(25.0),
            near_zero_rho: R::lit(1e-8),
            volterra: VolterraOptions::default(),
        }
    }
}

/// Basis data at the projection point on one side.
#[derive(Clone, Copy, Debug)]
struct Anchor<R> {
    x: R,
    basis: BasisPoint<R>,
    /// Near targets (between the anchor and `a`) may use the series directly.
    series_near: bool,
}

/// Jost solution data.
#[derive(Clone, Debug)]
pub struct JostSolution<R> {
    pub rho: Complex<R>,
    /// Coefficients `A_k(ρ)` with `e = Σ A_k σ_k`.
    pub a_coef: [Complex<R>; 2],
    pub delta: Complex<R>,
    pub de0: Complex<R>,
    /// `(e, e′)` at the requested points, in request order.
    pub values: Vec<[Complex<R>; 2]>,
    pub x_inf: R,
}

/// `M(λ)` together with the pieces it is built from.
#[derive(Clone, Copy, Debug)]
pub struct WeylEvaluation<R> {
    pub lambda: Complex<R>,
    pub rho: Complex<R>,
    pub m: Complex<R>,
    pub delta: Complex<R>,
    pub de0: Complex<R>,
}

/// Forward solver bound to one problem.
#[derive(Clone, Debug)]
pub struct ForwardSolver<R: Real> {
    pub problem: SingularProblem<R>,
    pub coeffs: SeriesCoefficients<R>,
    pub opts: ForwardOptions<R>,
    breaks: Vec<R>,
}

type Coef<R> = Scaled<R, 4>;

impl<R: Real> ForwardSolver<R> {
    pub fn new(problem: SingularProblem<R>) -> Result<Self> {
        Self::with_options(problem, ForwardOptions::default())
    }

    pub fn with_options(problem: SingularProblem<R>, opts: ForwardOptions<R>) -> Result<Self> {
        let coeffs = build_coefficients(problem.nu, opts.k_max)?;
        let breaks = problem.q.breakpoints();
        Ok(ForwardSolver { problem, coeffs, opts, breaks })
    }

    fn a(&self) -> R {
        self.problem.a
    }

    fn ode_opts(&self, rho: Complex<R>) -> OdeOptions<R> {
        let mut o = OdeOptions::for_rho(rho.norm());
        o.rtol = self.opts.rtol;
        o
    }

    /// Largest `r` such that `q ≡ 0` on the open interval between `a` and `a ± r`.
    fn free_radius(&self, side: Side) -> R {
        let a = self.a();
        match self.problem.q.support() {
            None => R::infinity(),
            Some((lo, hi)) => match side {
                Side::Left => {
                    if lo >= a {
                        R::infinity()
                    } else if hi <= a {
                        a - hi
                    } else {
                        R::zero()
                    }
                }
                Side::Right => {
                    if hi <= a {
                        R::infinity()
                    } else if lo >= a {
                        lo - a
                    } else {
                        R::zero()
                    }
                }
            },
        }
    }

    fn sign(side: Side) -> R {
        match side {
            Side::Left => -R::one(),
            Side::Right => R::one(),
        }
    }

    fn anchor(&self, lambda: Complex<R>, side: Side) -> Result<Anchor<R>> {
        let a = self.a();
        let rho_abs = lambda.norm().sqrt();
        let z_r = if rho_abs > R::zero() { self.opts.anchor_z / rho_abs } else { R::infinity() };
        let cap = R::lit(0.5) * a;
        let sg = Self::sign(side);
        let free = self.free_radius(side);
        if free > R::zero() {
            let r = z_r.min(cap).min(free);
            let basis = BasisPoint::from_series(&self.coeffs, sg * r, lambda)?;
            Ok(Anchor { x: a + sg * r, basis, series_near: true })
        } else {
            let r = z_r.min(R::lit(0.1) * a);
            let basis = solve_volterra(&self.coeffs, &self.problem.q, a, sg, r, lambda, &self.opts.volterra)?;
            Ok(Anchor { x: a + sg * r, basis, series_near: false })
        }
    }

    fn rhs<const N: usize>(&self, lambda: Complex<R>) -> impl Fn(R, &[Complex<R>; N]) -> [Complex<R>; N] + '_ {
        move |x: R, y: &[Complex<R>; N]| {
            let pl = self.problem.p(x) - lambda;
            let mut d = [czero::<R>(); N];
            d[0] = y[1];
            d[1] = pl * y[0];
            if N == 4 {
                d[2] = y[3];
                d[3] = pl * y[2] - y[0];
            }
            d
        }
    }

    fn propagate<const N: usize>(
        &self,
        lambda: Complex<R>,
        x0: R,
        start: Scaled<R, N>,
        stops: &[R],
    ) -> Result<Vec<Scaled<R, N>>> {
        let f = self.rhs::<N>(lambda);
        let opts = self.ode_opts(lambda.sqrt());
        integrate(&f, x0, start, stops, &self.breaks, &opts)
    }

    /// Coefficients `(α₁, α₂, ∂λα₁, ∂λα₂)` of a solution state in the basis.
    fn decompose<const N: usize>(state: &Scaled<R, N>, b: &BasisPoint<R>) -> Coef<R> {
        let y = &state.y;
        let (u, du) = (y[0], y[1]);
        let (lu, ldu) = if N == 4 { (y[2], y[3]) } else { (czero(), czero()) };
        let w = b.wronskian();
        let a1 = (u * b.ds(2) - du * b.s(2)) / w;
        let a2 = (b.s(1) * du - b.ds(1) * u) / w;
        let la1 = (lu * b.ds(2) + u * b.lds(2) - ldu * b.s(2) - du * b.ls(2)) / w;
        let la2 = (b.ls(1) * du + b.s(1) * ldu - b.lds(1) * u - b.ds(1) * lu) / w;
        Scaled { y: [a1, a2, la1, la2], log_scale: state.log_scale }
    }

    fn compose<const N: usize>(c: &Coef<R>, b: &BasisPoint<R>) -> Scaled<R, N> {
        let [a1, a2, la1, la2] = c.y;
        let mut y = [czero::<R>(); N];
        y[0] = a1 * b.s(1) + a2 * b.s(2);
        y[1] = a1 * b.ds(1) + a2 * b.ds(2);
        if N == 4 {
            y[2] = la1 * b.s(1) + a1 * b.ls(1) + la2 * b.s(2) + a2 * b.ls(2);
            y[3] = la1 * b.ds(1) + a1 * b.lds(1) + la2 * b.ds(2) + a2 * b.lds(2);
        }
        Scaled { y, log_scale: c.log_scale }
    }

    /// `σ`-coefficients on the left become `s`-coefficients on the right via `A`.
    fn transfer_right(&self, c: &Coef<R>) -> Coef<R> {
        let m = &self.problem.amat;
        let v = m.apply([c.y[0], c.y[1]]);
        let lv = m.apply([c.y[2], c.y[3]]);
        Scaled { y: [v[0], v[1], lv[0], lv[1]], log_scale: c.log_scale }
    }

    /// Values on the near segment between an anchor and `a`.
    fn near_values<const N: usize>(
        &self,
        lambda: Complex<R>,
        anchor: &Anchor<R>,
        coef: &Coef<R>,
        xs: &[R],
    ) -> Result<Vec<Scaled<R, N>>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let a = self.a();
        if anchor.series_near {
            let rho_abs = lambda.norm().sqrt();
            xs.iter()
                .map(|&x| {
                    if (x - a).abs() * rho_abs > R::lit(SERIES_TRUST_RADIUS) {
                        return Err(SlwError::SeriesNotConverged { tail: f64::NAN, z: ((x - a).abs() * rho_abs).as_f64() });
                    }
                    let b = BasisPoint::from_series(&self.coeffs, x - a, lambda)?;
                    Ok(Self::compose::<N>(coef, &b))
                })
                .collect()
        } else {
            // Travel from the anchor toward a: sort by distance from the anchor.
            let mut order: Vec<usize> = (0..xs.len()).collect();
            order.sort_by(|&i, &j| (xs[i] - anchor.x).abs().partial_cmp(&(xs[j] - anchor.x).abs()).unwrap());
            let stops: Vec<R> = order.iter().map(|&i| xs[i]).collect();
            let start = Self::compose::<N>(coef, &anchor.basis);
            let got = self.propagate::<N>(lambda, anchor.x, start, &stops)?;
            let mut out = vec![got[0]; xs.len()];
            for (k, &i) in order.iter().enumerate() {
                out[i] = got[k];
            }
            Ok(out)
        }
    }

    /// Solution with data `init` at `x = 0` (`[y, y′]` or `[y, y′, ∂λy, ∂λy′]`),
    /// evaluated at `xs` (any order, none equal to `a`).
    pub fn solve_from_origin<const N: usize>(
        &self,
        sp: &SpectralPoint<R>,
        init: [Complex<R>; N],
        xs: &[R],
    ) -> Result<Vec<[Complex<R>; N]>> {
        assert!(N == 2 || N == 4);
        let a = self.a();
        let lambda = sp.lambda;
        if let Some(x) = xs.iter().find(|&&x| x == a) {
            return Err(SlwError::AtSingularity(x.as_f64()));
        }
        let al = self.anchor(lambda, Side::Left)?;
        let ar = self.anchor(lambda, Side::Right)?;
        let mut out = vec![[czero::<R>(); N]; xs.len()];

        let mut far_l: Vec<usize> = (0..xs.len()).filter(|&i| xs[i] <= al.x).collect();
        far_l.sort_by(|&i, &j| xs[i].partial_cmp(&xs[j]).unwrap());
        let mut stops: Vec<R> = far_l.iter().map(|&i| xs[i]).collect();
        stops.push(al.x);
        let got = self.propagate::<N>(lambda, R::zero(), Scaled::plain(init), &stops)?;
        for (k, &i) in far_l.iter().enumerate() {
            out[i] = got[k].unscaled();
        }
        let coef_l = Self::decompose(&got[got.len() - 1], &al.basis);

        let near_l: Vec<usize> = (0..xs.len()).filter(|&i| xs[i] > al.x && xs[i] < a).collect();
        let pts: Vec<R> = near_l.iter().map(|&i| xs[i]).collect();
        for (k, v) in self.near_values::<N>(lambda, &al, &coef_l, &pts)?.into_iter().enumerate() {
            out[near_l[k]] = v.unscaled();
        }

        let coef_r = self.transfer_right(&coef_l);
        let near_r: Vec<usize> = (0..xs.len()).filter(|&i| xs[i] > a && xs[i] < ar.x).collect();
        let pts: Vec<R> = near_r.iter().map(|&i| xs[i]).collect();
        for (k, v) in self.near_values::<N>(lambda, &ar, &coef_r, &pts)?.into_iter().enumerate() {
            out[near_r[k]] = v.unscaled();
        }

        let mut far_r: Vec<usize> = (0..xs.len()).filter(|&i| xs[i] >= ar.x).collect();
        if !far_r.is_empty() {
            far_r.sort_by(|&i, &j| xs[i].partial_cmp(&xs[j]).unwrap());
            let stops: Vec<R> = far_r.iter().map(|&i| xs[i]).collect();
            let start = Self::compose::<N>(&coef_r, &ar.basis);
            let got = self.propagate::<N>(lambda, ar.x, start, &stops)?;
            for (k, &i) in far_r.iter().enumerate() {
                out[i] = got[k].unscaled();
            }
        }
        Ok(out)
    }

    /// `φ = φ₂` (Dirichlet solution, `φ(0) = 0`, `φ′(0) = 1`) with λ-derivatives:
    /// rows `[φ, φ′, ∂λφ, ∂λφ′]`.
    pub fn phi_with_dl(&self, sp: &SpectralPoint<R>, xs: &[R]) -> Result<Vec<[Complex<R>; 4]>> {
        self.solve_from_origin::<4>(sp, [czero(), cone(), czero(), czero()], xs)
    }

    /// `φ_j` and `φ_j′` for `j ∈ {1, 2}`.
    pub fn phi(&self, j: usize, sp: &SpectralPoint<R>, xs: &[R]) -> Result<Vec<[Complex<R>; 2]>> {
        let init = if j == 1 { [cone(), czero()] } else { [czero(), cone()] };
        self.solve_from_origin::<2>(sp, init, xs)
    }

    /// Fundamental system `s_1, s_2` (values and x-derivatives) at a point.
    pub fn basis_at(&self, sp: &SpectralPoint<R>, x: R) -> Result<BasisPoint<R>> {
        let a = self.a();
        if x == a {
            return Err(SlwError::AtSingularity(x.as_f64()));
        }
        let side = if x < a { Side::Left } else { Side::Right };
        let an = self.anchor(sp.lambda, side)?;
        let mut out = BasisPoint::default();
        for j in 1..=2usize {
            let mut c = [czero::<R>(); 4];
            c[j - 1] = cone();
            let coef = Scaled::plain(c);
            let v: Scaled<R, 2> = if (x - a).abs() < (an.x - a).abs() {
                self.near_values::<2>(sp.lambda, &an, &coef, &[x])?[0]
            } else {
                let start = Self::compose::<2>(&coef, &an.basis);
                self.propagate::<2>(sp.lambda, an.x, start, &[x])?[0]
            };
            out.v[4 * (j - 1)] = v.component(0);
            out.v[4 * (j - 1) + 1] = v.component(1);
        }
        Ok(out)
    }

    /// `σ_j(x)` and `σ_j′(x)`: `s_j` on the left, `Σ_k a_kj s_k` on the right.
    pub fn sigma_at(&self, sp: &SpectralPoint<R>, x: R) -> Result<[[Complex<R>; 2]; 2]> {
        let b = self.basis_at(sp, x)?;
        if x < self.a() {
            return Ok([[b.s(1), b.ds(1)], [b.s(2), b.ds(2)]]);
        }
        let m = &self.problem.amat;
        let col = |j: usize| -> [Complex<R>; 2] {
            let (c1, c2) = if j == 1 { (m.a11, m.a21) } else { (m.a12, m.a22) };
            [c1 * b.s(1) + c2 * b.s(2), c1 * b.ds(1) + c2 * b.ds(2)]
        };
        Ok([col(1), col(2)])
    }

    /// Large-argument form of the outgoing solution beyond the support of `q`:
    /// `e(x) = e^{iρx} S(z)`, `z = ρ(x − a)`; returns `(S, dS/dz)`.
    fn hankel_factor(&self, z: Complex<R>) -> (Complex<R>, Complex<R>) {
        let four_nu2 = self.problem.nu * self.problem.nu * R::lit(4.0);
        let i = ci::<R>();
        let mut s = cone::<R>();
        let mut ds = czero::<R>();
        let mut ak = cone::<R>(); // i^k a_k / z^k
        let mut prev = R::infinity();
        for k in 1..200usize {
            let kr = R::nat(k);
            let odd = R::nat(2 * k - 1);
            let next = ak * (four_nu2 - odd * odd) * i / (z * kr * R::lit(8.0));
            let mag = next.norm();
            if mag >= prev || mag == R::zero() {
                break;
            }
            ak = next;
            s += ak;
            ds -= ak * kr / z;
            prev = mag;
            if mag < R::epsilon() * R::lit(0.1) * s.norm() {
                break;
            }
        }
        (s, ds)
    }

    /// Discontinuous Jost solution with `e(x) e^{−iρx} → 1`, evaluated at `xs`.
    pub fn jost(&self, rho: Complex<R>, xs: &[R]) -> Result<JostSolution<R>> {
        let rho_abs = rho.norm();
        if rho_abs < self.opts.near_zero_rho {
            return Err(SlwError::NearZeroRho(rho_abs.as_f64()));
        }
        let a = self.a();
        if let Some(x) = xs.iter().find(|&&x| x == a) {
            return Err(SlwError::AtSingularity(x.as_f64()));
        }
        let lambda = rho * rho;
        let al = self.anchor(lambda, Side::Left)?;
        let ar = self.anchor(lambda, Side::Right)?;
        let sup_hi = self.problem.q.support().map(|(_, hi)| hi).unwrap_or(a).max(a);
        let x_inf = (sup_hi + R::lit(2.0) / rho_abs).max(a + self.opts.jost_z / rho_abs).max(ar.x);
        let i = ci::<R>();
        let mut out = vec![[czero::<R>(); 2]; xs.len()];

        let tail_at = |x: R| -> Scaled<R, 2> {
            let (s, ds) = self.hankel_factor(rho * (x - a));
            let phase = Complex::new(R::zero(), rho.re * x).exp();
            Scaled { y: [s * phase, (i * rho * s + rho * ds) * phase], log_scale: -rho.im * x }
        };
        // Points beyond X_inf come straight from the expansion.
        for (k, &x) in xs.iter().enumerate() {
            if x > x_inf {
                out[k] = tail_at(x).unscaled();
            }
        }
        let mut far_r: Vec<usize> = (0..xs.len()).filter(|&k| xs[k] >= ar.x && xs[k] <= x_inf).collect();
        far_r.sort_by(|&p, &q| xs[q].partial_cmp(&xs[p]).unwrap());
        let mut stops: Vec<R> = far_r.iter().map(|&k| xs[k]).collect();
        stops.push(ar.x);
        let got = self.propagate::<2>(lambda, x_inf, tail_at(x_inf), &stops)?;
        for (n, &k) in far_r.iter().enumerate() {
            out[k] = got[n].unscaled();
        }
        let gamma = Self::decompose(&got[got.len() - 1], &ar.basis);

        let near_r: Vec<usize> = (0..xs.len()).filter(|&k| xs[k] > a && xs[k] < ar.x).collect();
        let pts: Vec<R> = near_r.iter().map(|&k| xs[k]).collect();
        for (n, v) in self.near_values::<2>(lambda, &ar, &gamma, &pts)?.into_iter().enumerate() {
            out[near_r[n]] = v.unscaled();
        }

        // e = Σ A_k σ_k and σ = s·A on the right, so the left s-coefficients are A⁻¹γ.
        let ak = self.problem.amat.solve([gamma.y[0], gamma.y[1]]);
        let coef_l: Coef<R> = Scaled { y: [ak[0], ak[1], czero(), czero()], log_scale: gamma.log_scale };

        let near_l: Vec<usize> = (0..xs.len()).filter(|&k| xs[k] < a && xs[k] > al.x).collect();
        let pts: Vec<R> = near_l.iter().map(|&k| xs[k]).collect();
        for (n, v) in self.near_values::<2>(lambda, &al, &coef_l, &pts)?.into_iter().enumerate() {
            out[near_l[n]] = v.unscaled();
        }

        let mut far_l: Vec<usize> = (0..xs.len()).filter(|&k| xs[k] <= al.x && xs[k] > R::zero()).collect();
        far_l.sort_by(|&p, &q| xs[q].partial_cmp(&xs[p]).unwrap());
        let mut stops: Vec<R> = far_l.iter().map(|&k| xs[k]).collect();
        stops.push(R::zero());
        let start = Self::compose::<2>(&coef_l, &al.basis);
        let got = self.propagate::<2>(lambda, al.x, start, &stops)?;
        for (n, &k) in far_l.iter().enumerate() {
            out[k] = got[n].unscaled();
        }
        let e0 = got[got.len() - 1].unscaled();
        for (k, &x) in xs.iter().enumerate() {
            if x == R::zero() {
                out[k] = e0;
            }
        }
        let scale = Complex::new(gamma.log_scale, R::zero());
        Ok(JostSolution {
            rho,
            a_coef: [mul_exp(ak[0], scale), mul_exp(ak[1], scale)],
            delta: e0[0],
            de0: e0[1],
            values: out,
            x_inf,
        })
    }

    /// Characteristic function `Δ(ρ) = e(0, ρ)`.
    pub fn characteristic(&self, rho: Complex<R>) -> Result<Complex<R>> {
        Ok(self.jost(rho, &[])?.delta)
    }

    /// `M(λ) = e′(0, ρ)/Δ(ρ)`.
    pub fn weyl(&self, sp: &SpectralPoint<R>) -> Result<WeylEvaluation<R>> {
        let j = self.jost(sp.rho, &[])?;
        if j.delta.norm() < R::lit(1e-13) * (R::one() + j.de0.norm()) {
            return Err(SlwError::AtSpectrum {
                re: sp.lambda.re.as_f64(),
                im: sp.lambda.im.as_f64(),
                delta: j.delta.norm().as_f64(),
            });
        }
        Ok(WeylEvaluation { lambda: sp.lambda, rho: sp.rho, m: j.de0 / j.delta, delta: j.delta, de0: j.de0 })
    }

    /// Weyl solution `Φ = e/Δ` and `Φ′` at `xs`.
    pub fn weyl_solution(&self, sp: &SpectralPoint<R>, xs: &[R]) -> Result<Vec<[Complex<R>; 2]>> {
        let j = self.jost(sp.rho, xs)?;
        Ok(j.values.iter().map(|v| [v[0] / j.delta, v[1] / j.delta]).collect())
    }
}

/// `⟨y, z⟩ = y z′ − y′ z`.
pub fn wronskian<R: Real>(y: [Complex<R>; 2], z: [Complex<R>; 2]) -> Complex<R> {
    y[0] * z[1] - y[1] * z[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{lift_lambda, Potential, TransitionMatrix};

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn plain() -> ForwardSolver<f64> {
        let p = SingularProblem::new(1.0, c(0.5, 0.0), TransitionMatrix::identity(), 2.5, Potential::Zero).unwrap();
        ForwardSolver::new(p).unwrap()
    }

    #[test]
    fn unperturbed_phi_is_sine() {
        let f = plain();
        let sp = lift_lambda(c(9.0, 2.0));
        let xs = [0.0, 0.3, 0.9, 1.05, 1.7, 2.4];
        let got = f.phi_with_dl(&sp, &xs).unwrap();
        let rho = sp.rho;
        for (x, g) in xs.iter().zip(got.iter()) {
            let exact = (rho * *x).sin() / rho;
            let dexact = (rho * *x).cos();
            // ∂λ(sin(ρx)/ρ) = (x cos(ρx)/ρ − sin(ρx)/ρ²)/(2ρ).
            let lexact = (dexact * *x / rho - exact / rho) / (rho * 2.0);
            assert!((g[0] - exact).norm() < 1e-9 * exact.norm().max(0.1), "x={x}");
            assert!((g[1] - dexact).norm() < 1e-9 * dexact.norm().max(1.0));
            assert!((g[2] - lexact).norm() < 1e-8 * lexact.norm().max(0.1), "x={x} {} {}", g[2], lexact);
        }
    }

    #[test]
    fn unperturbed_jost_is_exponential() {
        let f = plain();
        for rho in [c(3.0, 0.5), c(-2.0, 0.1), c(0.7, 0.0), c(12.0, 4.0)] {
            let xs = [0.2, 0.95, 1.1, 2.0, 3.0];
            let j = f.jost(rho, &xs).unwrap();
            assert!((j.delta - c(1.0, 0.0)).norm() < 1e-9);
            for (x, v) in xs.iter().zip(j.values.iter()) {
                let e = (c(0.0, 1.0) * rho * *x).exp();
                assert!((v[0] - e).norm() < 1e-9 * e.norm());
            }
            let w = f.weyl(&SpectralPoint::from_rho(rho)).unwrap();
            assert!((w.m - c(0.0, 1.0) * rho).norm() < 1e-9 * rho.norm());
        }
    }

    fn supported(q: Potential<f64>) -> ForwardSolver<f64> {
        let w = 2.0 * std::f64::consts::PI / 3.0;
        let a = TransitionMatrix::new(c(1.0, 0.0), c(0.0, 0.0), c(0.3, 0.0), c(0.5 * w.cos(), 0.5 * w.sin()));
        let p = SingularProblem::new(1.0, c(1.0 / 3.0, 0.0), a, 2.5, q).unwrap();
        ForwardSolver::new(p).unwrap()
    }

    fn identities(f: &ForwardSolver<f64>) {
        let det = f.problem.det_a();
        let xs = [0.4, 0.93, 1.04, 1.6, 2.3];
        for rho in [c(2.5, 0.0), c(-4.0, 0.0), c(6.0, 0.0)] {
            let sp = SpectralPoint::from_rho(rho);
            let p1 = f.phi(1, &sp, &xs).unwrap();
            let p2 = f.phi(2, &sp, &xs).unwrap();
            let ep = f.jost(rho, &xs).unwrap();
            let em = f.jost(-rho, &xs).unwrap();
            let phi = f.weyl_solution(&sp, &xs).unwrap();
            for (k, &x) in xs.iter().enumerate() {
                let eta = f.problem.eta(x).unwrap();
                assert!((wronskian(p1[k], p2[k]) - eta).norm() < 1e-8, "det phi at x={x}");
                assert!((wronskian(phi[k], p2[k]) - eta).norm() < 1e-8 * (1.0 + phi[k][0].norm()), "<Phi,phi> at x={x}");
                let expect = if x > 1.0 { c(0.0, -2.0) * rho } else { c(0.0, -2.0) * rho / det };
                let got = wronskian(ep.values[k], em.values[k]);
                assert!((got - expect).norm() < 1e-8 * rho.norm(), "x={x} rho={rho} {got} {expect}");
            }
        }
    }

    #[test]
    fn wronskian_identities_without_potential() {
        identities(&supported(Potential::Zero));
    }

    #[test]
    fn wronskian_identities_with_potential_away_from_a() {
        identities(&supported(Potential::bump(1.8, 0.5, c(0.8, 0.6))));
    }

    #[test]
    fn wronskian_identities_with_potential_across_a() {
        identities(&supported(Potential::bump(1.0, 0.6, c(1.5, -0.4))));
    }

    #[test]
    fn phi_dl_matches_finite_difference() {
        let f = supported(Potential::bump(1.2, 0.5, c(0.8, 0.6)));
        let xs = [0.5, 0.97, 1.02, 2.1];
        let lam = c(7.0, 1.5);
        let h = 1e-5;
        let base = f.phi_with_dl(&lift_lambda(lam), &xs).unwrap();
        let up = f.phi(2, &lift_lambda(lam + h), &xs).unwrap();
        let dn = f.phi(2, &lift_lambda(lam - h), &xs).unwrap();
        for k in 0..xs.len() {
            let fd = (up[k][0] - dn[k][0]) / (2.0 * h);
            let fdd = (up[k][1] - dn[k][1]) / (2.0 * h);
            assert!((base[k][2] - fd).norm() < 1e-6 * (1.0 + fd.norm()), "x={} {} {}", xs[k], base[k][2], fd);
            assert!((base[k][3] - fdd).norm() < 1e-6 * (1.0 + fdd.norm()));
        }
    }
}
