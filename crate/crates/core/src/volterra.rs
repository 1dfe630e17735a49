//! Perturbed fundamental system `s_j` near `x = a` from the Volterra equation
//! `s_j = C_j + ∫ₐˣ (C₁(t)C₂(x) − C₁(x)C₂(t)) q(t) s_j(t) dt`.
//!
//! The integral runs over the offset `u = |t − a|`. Cells are geometric toward
//! `u = 0`; inside each cell the integrand is smooth and is handled with a
//! Gauss collocation integration matrix. The piece `(0, u_min)` is integrated
//! against the known power `u^(μ_k + μ_j)`.

use num_complex::Complex;

use crate::error::{Result, SlwError};
use crate::problem::Potential;
use crate::quadrature::{gauss_legendre, graded_edges};
use crate::scalar::{czero, Real};
use crate::series::SeriesCoefficients;

/// Values of `s_j`, `s_j′` and their λ-derivatives at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BasisPoint<R> {
    /// `[s_1, s_1′, ∂λ s_1, ∂λ s_1′, s_2, s_2′, ∂λ s_2, ∂λ s_2′]`.
    pub v: [Complex<R>; 8],
}

impl<R: Real> BasisPoint<R> {
    pub fn s(&self, j: usize) -> Complex<R> {
        self.v[4 * (j - 1)]
    }
    pub fn ds(&self, j: usize) -> Complex<R> {
        self.v[4 * (j - 1) + 1]
    }
    pub fn ls(&self, j: usize) -> Complex<R> {
        self.v[4 * (j - 1) + 2]
    }
    pub fn lds(&self, j: usize) -> Complex<R> {
        self.v[4 * (j - 1) + 3]
    }
    pub fn wronskian(&self) -> Complex<R> {
        self.s(1) * self.ds(2) - self.ds(1) * self.s(2)
    }

    /// Unperturbed values straight from the series.
    pub fn from_series(coeffs: &SeriesCoefficients<R>, t: R, lambda: Complex<R>) -> Result<Self> {
        let c1 = coeffs.eval(1, t, lambda)?;
        let c2 = coeffs.eval(2, t, lambda)?;
        Ok(BasisPoint {
            v: [
                c1.value,
                c1.deriv,
                c1.dl_value,
                c1.dl_deriv,
                c2.value,
                c2.deriv,
                c2.dl_value,
                c2.dl_deriv,
            ],
        })
    }
}

/// Settings for [`solve_volterra`].
#[derive(Clone, Copy, Debug)]
pub struct VolterraOptions<R> {
    /// Smallest offset resolved by the mesh, relative to `a`.
    pub min_offset: R,
    /// Cells per doubling of the offset.
    pub cells_per_octave: usize,
    pub gauss_points: usize,
    pub tol: R,
    pub max_iter: usize,
}

impl<R: Real> Default for VolterraOptions<R> {
    fn default() -> Self {
        VolterraOptions {
            min_offset: R::lit(1e-8),
            cells_per_octave: 4,
            gauss_points: 8,
            tol: R::lit(1e-14),
            max_iter: 80,
        }
    }
}

/// Solves for `s_1, s_2` (with λ-derivatives) on `0 < |x − a| ≤ radius` on the
/// side `sign = ±1` and returns the values at `x = a + sign·radius`.
pub fn solve_volterra<R: Real>(
    coeffs: &SeriesCoefficients<R>,
    q: &Potential<R>,
    a: R,
    sign: R,
    radius: R,
    lambda: Complex<R>,
    opts: &VolterraOptions<R>,
) -> Result<BasisPoint<R>> {
    let u_min = opts.min_offset * a;
    if radius <= u_min {
        return BasisPoint::from_series(coeffs, sign * radius, lambda);
    }
    let edges = graded_edges(u_min, radius, opts.cells_per_octave);
    let (gx, gw) = gauss_legendre::<R>(opts.gauss_points);
    let p = gx.len();
    let smat = integration_matrix(&gx);
    let ncell = edges.len() - 1;

    let mut u = Vec::with_capacity(ncell * p);
    let mut half = Vec::with_capacity(ncell);
    for c in 0..ncell {
        let (lo, hi) = (edges[c], edges[c + 1]);
        let hw = (hi - lo) * R::lit(0.5);
        half.push(hw);
        for t in gx.iter() {
            u.push(lo + hw + hw * *t);
        }
    }
    let n = u.len();
    let mut cs = Vec::with_capacity(n);
    let mut qs = Vec::with_capacity(n);
    for &ui in &u {
        cs.push(BasisPoint::from_series(coeffs, sign * ui, lambda)?);
        qs.push(q.eval(a + sign * ui));
    }
    let c_end = BasisPoint::from_series(coeffs, sign * radius, lambda)?;
    let mu = coeffs.mu;
    let mu_re_min = mu[0].re.min(mu[1].re);

    let mut result = BasisPoint::<R>::default();
    for j in 1..=2usize {
        // s[i] = (s, s', ∂s, ∂s') at node i; start from C_j.
        let pick = |b: &BasisPoint<R>| [b.s(j), b.ds(j), b.ls(j), b.lds(j)];
        let mut s: Vec<[Complex<R>; 4]> = cs.iter().map(pick).collect();
        let mut prev_diff = R::infinity();
        let mut converged = false;
        let mut end_state = pick(&c_end);
        for iter in 0..opts.max_iter {
            // Integrands f_k = C_k q s and their λ-derivatives, k = 1, 2.
            let integrand = |i: usize, s: &[Complex<R>; 4]| -> [[Complex<R>; 2]; 2] {
                let c = &cs[i];
                let qq = qs[i];
                [
                    [c.s(1) * qq * s[0], (c.ls(1) * s[0] + c.s(1) * s[2]) * qq],
                    [c.s(2) * qq * s[0], (c.ls(2) * s[0] + c.s(2) * s[2]) * qq],
                ]
            };
            // Piece (0, u_min) against the leading power of the first node.
            let lead = |beta: Complex<R>| {
                (beta + R::one()).inv() * (beta * Complex::new((u_min / u[0]).ln(), R::zero())).exp() * u_min
            };
            let f0 = integrand(0, &s[0]);
            let r1 = lead(mu[0] + mu[j - 1]);
            let r2 = lead(mu[1] + mu[j - 1]);
            let mut i1 = [f0[0][0] * r1, f0[0][1] * r1];
            let mut i2 = [f0[1][0] * r2, f0[1][1] * r2];
            let mut new_s = vec![[czero::<R>(); 4]; n];
            let mut max_diff = R::zero();
            for c in 0..ncell {
                let base = c * p;
                let fs: Vec<[[Complex<R>; 2]; 2]> = (0..p).map(|i| integrand(base + i, &s[base + i])).collect();
                for i in 0..p {
                    let mut p1 = i1;
                    let mut p2 = i2;
                    for k in 0..p {
                        let wgt = smat[i][k] * half[c];
                        p1[0] += fs[k][0][0] * wgt;
                        p1[1] += fs[k][0][1] * wgt;
                        p2[0] += fs[k][1][0] * wgt;
                        p2[1] += fs[k][1][1] * wgt;
                    }
                    let st = assemble(&cs[base + i], j, sign, p1, p2);
                    let scale = u[base + i].powf(-mu_re_min);
                    for m in [0usize, 2] {
                        max_diff = max_diff.max((st[m] - s[base + i][m]).norm() * scale);
                    }
                    new_s[base + i] = st;
                }
                for k in 0..p {
                    let wgt = gw[k] * half[c];
                    i1[0] += fs[k][0][0] * wgt;
                    i1[1] += fs[k][0][1] * wgt;
                    i2[0] += fs[k][1][0] * wgt;
                    i2[1] += fs[k][1][1] * wgt;
                }
            }
            end_state = assemble(&c_end, j, sign, i1, i2);
            s = new_s;
            let size = s.iter().zip(u.iter()).fold(R::zero(), |acc, (v, ui)| acc.max(v[0].norm() * ui.powf(-mu_re_min)));
            if max_diff <= opts.tol * size.max(R::min_positive_value()) {
                converged = true;
                break;
            }
            if iter >= 3 && max_diff > R::lit(0.9) * prev_diff {
                // A stalled iteration at round-off level is converged, anything else is not.
                if max_diff <= R::lit(1e-10) * size {
                    converged = true;
                    break;
                }
                return Err(SlwError::IterationDiverged { ratio: (max_diff / prev_diff).as_f64() });
            }
            prev_diff = max_diff;
        }
        if !converged {
            return Err(SlwError::IterationDiverged { ratio: 1.0 });
        }
        for m in 0..4 {
            result.v[4 * (j - 1) + m] = end_state[m];
        }
    }
    Ok(result)
}

/// `s = C_j + σ(C₂ I₁ − C₁ I₂)` with the λ-derivatives, where `I_k` are the
/// offset integrals (without the orientation sign `σ`).
fn assemble<R: Real>(
    c: &BasisPoint<R>,
    j: usize,
    sign: R,
    i1: [Complex<R>; 2],
    i2: [Complex<R>; 2],
) -> [Complex<R>; 4] {
    let s = c.s(j) + (c.s(2) * i1[0] - c.s(1) * i2[0]) * sign;
    let ds = c.ds(j) + (c.ds(2) * i1[0] - c.ds(1) * i2[0]) * sign;
    let ls = c.ls(j) + (c.ls(2) * i1[0] + c.s(2) * i1[1] - c.ls(1) * i2[0] - c.s(1) * i2[1]) * sign;
    let lds = c.lds(j) + (c.lds(2) * i1[0] + c.ds(2) * i1[1] - c.lds(1) * i2[0] - c.ds(1) * i2[1]) * sign;
    [s, ds, ls, lds]
}

/// `S[i][k] = ∫_{-1}^{x_i} ℓ_k(t) dt` for the Lagrange basis on the nodes `x`.
fn integration_matrix<R: Real>(x: &[R]) -> Vec<Vec<R>> {
    let p = x.len();
    let (gx, gw) = gauss_legendre::<R>(p);
    let mut out = vec![vec![R::zero(); p]; p];
    for i in 0..p {
        // Map the Gauss rule onto [-1, x_i].
        let hw = (x[i] + R::one()) * R::lit(0.5);
        for (t, w) in gx.iter().zip(gw.iter()) {
            let y = -R::one() + hw * (*t + R::one());
            for k in 0..p {
                let mut l = R::one();
                for m in 0..p {
                    if m != k {
                        l = l * (y - x[m]) / (x[k] - x[m]);
                    }
                }
                out[i][k] += *w * hw * l;
            }
        }
    }
    out
}
