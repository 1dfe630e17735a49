//! Frobenius-type series `C_j(x, λ) = (x−a)^μ_j Σ c_jk (ρ(x−a))^{2k}` solving
//! the unperturbed equation on either side of `x = a`.

use num_complex::Complex;

use crate::error::{Result, SlwError};
use crate::scalar::{cone, czero, real_pow, Real};

pub const DEFAULT_K_MAX: usize = 60;
/// Largest `|ρ(x−a)|` at which the series is evaluated.
pub const SERIES_TRUST_RADIUS: f64 = 6.0;

#[derive(Clone, Debug)]
pub struct SeriesCoefficients<R> {
    pub nu: Complex<R>,
    /// `μ_1 = 1/2 − ν`, `μ_2 = 1/2 + ν`.
    pub mu: [Complex<R>; 2],
    /// `c[j-1][k]`.
    pub c: [Vec<Complex<R>>; 2],
}

/// Value, x-derivative and their λ-derivatives of one series solution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CValue<R> {
    pub value: Complex<R>,
    pub deriv: Complex<R>,
    pub dl_value: Complex<R>,
    pub dl_deriv: Complex<R>,
}

/// Coefficient table with the split `c10 = c20 = (2ν)^(−1/2)`.
pub fn build_coefficients<R: Real>(nu: Complex<R>, k_max: usize) -> Result<SeriesCoefficients<R>> {
    let half = Complex::new(R::lit(0.5), R::zero());
    let mu = [half - nu, half + nu];
    let nu0 = nu * nu - Complex::new(R::lit(0.25), R::zero());
    let c0 = (nu * R::lit(2.0)).sqrt().inv();
    let mut c: [Vec<Complex<R>>; 2] = [Vec::with_capacity(k_max + 1), Vec::with_capacity(k_max + 1)];
    for j in 0..2 {
        c[j].push(c0);
        for k in 1..=k_max {
            let kk = R::nat(2 * k);
            let den = (mu[j] + kk) * (mu[j] + kk - R::one()) - nu0;
            if den.norm() < R::lit(1e-10) {
                return Err(SlwError::DegenerateRecursion { j: j + 1, k });
            }
            let prev = c[j][k - 1];
            c[j].push(-prev / den);
        }
    }
    Ok(SeriesCoefficients { nu, mu, c })
}

impl<R: Real> SeriesCoefficients<R> {
    pub fn k_max(&self) -> usize {
        self.c[0].len() - 1
    }

    /// Evaluates `C_j` (`j ∈ {1, 2}`) at offset `t = x − a ≠ 0`.
    pub fn eval(&self, j: usize, t: R, lambda: Complex<R>) -> Result<CValue<R>> {
        assert!(j == 1 || j == 2);
        if t == R::zero() {
            return Err(SlwError::AtSingularity(0.0));
        }
        let mu = self.mu[j - 1];
        let c = &self.c[j - 1];
        let t2 = t * t;
        let w = lambda * t2;
        let mut wk = cone::<R>(); // w^k
        let mut wkm1 = czero::<R>(); // w^{k-1}, zero for k = 0
        let (mut s0, mut s1, mut s2, mut s3) = (czero::<R>(), czero::<R>(), czero::<R>(), czero::<R>());
        let mut biggest = R::zero();
        let mut last = R::zero();
        let mut small_run = 0;
        let eps = R::epsilon();
        let mut converged = false;
        for (k, ck) in c.iter().enumerate() {
            let kr = R::nat(k);
            let term = *ck * wk;
            let m2k = mu + kr * R::lit(2.0);
            s0 += term;
            s1 += term * m2k;
            if k > 0 {
                let dterm = *ck * wkm1 * kr * t2;
                s2 += dterm;
                s3 += dterm * m2k;
            }
            let mag = term.norm() * (R::one() + m2k.norm());
            biggest = biggest.max(mag);
            last = mag;
            if mag <= eps * R::lit(0.25) * biggest && k > 2 {
                small_run += 1;
                if small_run >= 2 {
                    converged = true;
                    break;
                }
            } else {
                small_run = 0;
            }
            wkm1 = wk;
            wk *= w;
        }
        if !converged {
            let tail = R::lit(2.0) * last;
            if tail > R::lit(1e-14) * biggest.max(R::min_positive_value()) {
                return Err(SlwError::SeriesNotConverged {
                    tail: (tail / biggest).as_f64(),
                    z: (lambda.sqrt() * t).norm().as_f64(),
                });
            }
        }
        let tmu = real_pow(t, mu);
        let tmu1 = tmu / t;
        Ok(CValue { value: tmu * s0, deriv: tmu1 * s1, dl_value: tmu * s2, dl_deriv: tmu1 * s3 })
    }

    /// Rows `(k, c_1k, c_2k)` for diagnostic dumps.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,re_c1,im_c1,re_c2,im_c2\n");
        for k in 0..=self.k_max() {
            let (u, v) = (self.c[0][k], self.c[1][k]);
            out.push_str(&format!("{k},{:e},{:e},{:e},{:e}\n", u.re, u.im, v.re, v.im));
        }
        out
    }
}
