//! Complex linear solvers for the Nyström systems: dense LU with a 1-norm
//! condition estimate, and matrix-free GMRES.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::error::{Result, SlwError};
use crate::scalar::Real;

type C<R> = Complex<R>;

fn czero<R: Real>() -> C<R> {
    Complex::new(R::zero(), R::zero())
}

/// Row-major LU factors with partial pivoting.
#[derive(Clone, Debug)]
pub struct DenseLu<R> {
    n: usize,
    lu: Vec<C<R>>,
    piv: Vec<usize>,
    norm1: R,
}

impl<R: Real> DenseLu<R> {
    /// Factors the row-major `n × n` matrix `a`.
    pub fn factor(mut a: Vec<C<R>>, n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let mut norm1 = R::zero();
        for j in 0..n {
            let col = (0..n).fold(R::zero(), |s, i| s + a[i * n + j].norm());
            norm1 = norm1.max(col);
        }
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i * n + k].norm().partial_cmp(&a[j * n + k].norm()).unwrap_or(std::cmp::Ordering::Equal))
                .unwrap_or(k);
            let pv = a[p * n + k];
            if pv.norm() == R::zero() || !pv.norm().is_finite() {
                return Err(SlwError::Solver(format!("zero or non-finite pivot in column {k}")));
            }
            if p != k {
                piv.swap(p, k);
                for j in 0..n {
                    a.swap(p * n + j, k * n + j);
                }
            }
            let inv = C::<R>::new(R::one(), R::zero()) / pv;
            let (head, tail) = a.split_at_mut((k + 1) * n);
            let row_k = &head[k * n..(k + 1) * n];
            for row in tail.chunks_exact_mut(n) {
                let f = row[k] * inv;
                row[k] = f;
                if f == czero() {
                    continue;
                }
                for (x, y) in row[k + 1..].iter_mut().zip(row_k[k + 1..].iter()) {
                    *x -= f * *y;
                }
            }
        }
        Ok(DenseLu { n, lu: a, piv, norm1 })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [C<R>]) {
        let n = self.n;
        let mut y: Vec<C<R>> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s = row.iter().zip(y[..i].iter()).fold(czero::<R>(), |acc, (l, v)| acc + *l * *v);
            y[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n..(i + 1) * n];
            let s = row[i + 1..].iter().zip(y[i + 1..].iter()).fold(czero::<R>(), |acc, (u, v)| acc + *u * *v);
            y[i] = (y[i] - s) / row[i];
        }
        b.copy_from_slice(&y);
    }

    /// Solves `Aᴴ x = b` in place.
    pub fn solve_adjoint(&self, b: &mut [C<R>]) {
        let n = self.n;
        let mut y = b.to_vec();
        // Uᴴ z = b
        for i in 0..n {
            let d = self.lu[i * n + i].conj();
            y[i] /= d;
            let yi = y[i];
            for j in i + 1..n {
                y[j] -= self.lu[i * n + j].conj() * yi;
            }
        }
        // Lᴴ w = z
        for i in (0..n).rev() {
            let yi = y[i];
            for j in 0..i {
                y[j] -= self.lu[i * n + j].conj() * yi;
            }
        }
        for (k, &p) in self.piv.iter().enumerate() {
            b[p] = y[k];
        }
    }

    /// Reciprocal 1-norm condition number, `‖A⁻¹‖₁` from Hager's estimator
    /// with Higham's extra test vector.
    pub fn rcond(&self) -> R {
        let n = self.n;
        if n == 0 {
            return R::one();
        }
        let one = R::one();
        let nn = R::nat(n);
        let mut x = vec![C::<R>::new(one / nn, R::zero()); n];
        let mut est = R::zero();
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let mut y = x.clone();
            self.solve(&mut y);
            est = est.max(y.iter().fold(R::zero(), |s, v| s + v.norm()));
            let mut z: Vec<C<R>> =
                y.iter().map(|v| if v.norm() > R::zero() { *v / v.norm() } else { C::new(one, R::zero()) }).collect();
            self.solve_adjoint(&mut z);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(k, v)| (k, v.norm()))
                .fold((0, R::zero()), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
            let ztx = z.iter().zip(x.iter()).fold(czero::<R>(), |s, (a, b)| s + a.conj() * *b).re;
            if zmax <= ztx || j == last_j {
                break;
            }
            last_j = j;
            x = vec![czero(); n];
            x[j] = C::new(one, R::zero());
        }
        let mut alt: Vec<C<R>> = (0..n)
            .map(|i| {
                let sgn = if i % 2 == 0 { one } else { -one };
                let den = if n > 1 { R::nat(n - 1) } else { one };
                C::new(sgn * (one + R::nat(i) / den), R::zero())
            })
            .collect();
        self.solve(&mut alt);
        let alt_est = R::lit(2.0) * alt.iter().fold(R::zero(), |s, v| s + v.norm()) / (R::lit(3.0) * nn);
        est = est.max(alt_est);
        if est == R::zero() || self.norm1 == R::zero() {
            return R::zero();
        }
        one / (est * self.norm1)
    }
}

/// Result of a GMRES run.
#[derive(Clone, Debug)]
pub struct GmresOutcome<R> {
    pub x: Vec<C<R>>,
    pub iterations: usize,
    /// `‖b − Ax‖/‖b‖` as tracked by the Givens recursion.
    pub rel_residual: R,
    /// `σ_min/σ_max` of the Arnoldi Hessenberg matrix. The Ritz singular
    /// values sit inside `[σ_min(A), σ_max(A)]`, so this bounds the true
    /// reciprocal 2-norm condition number from above; for a compact
    /// perturbation of the identity the outlying singular values, the ones
    /// that govern conditioning, are the first the Krylov space resolves.
    pub rcond_estimate: f64,
}

/// Unrestarted GMRES for `A x = b` with `A` given by `apply(v, out)`.
/// Stops when the residual falls to `tol·‖b‖` or after `max_iter` steps.
pub fn gmres<R: Real, F>(mut apply: F, b: &[C<R>], x0: Option<&[C<R>]>, tol: R, max_iter: usize) -> Result<GmresOutcome<R>>
where
    F: FnMut(&[C<R>], &mut [C<R>]),
{
    let n = b.len();
    let bnorm = norm(b);
    let mut x: Vec<C<R>> = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![czero(); n]);
    if bnorm == R::zero() {
        return Ok(GmresOutcome { x: vec![czero(); n], iterations: 0, rel_residual: R::zero(), rcond_estimate: 1.0 });
    }
    let mut r = vec![czero::<R>(); n];
    apply(&x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b.iter()) {
        *ri = *bi - *ri;
    }
    let beta = norm(&r);
    if beta <= tol * bnorm {
        return Ok(GmresOutcome { x, iterations: 0, rel_residual: beta / bnorm, rcond_estimate: 1.0 });
    }
    let mut basis: Vec<Vec<C<R>>> = vec![r.iter().map(|v| *v / beta).collect()];
    // Columns of the (k+1) × k Hessenberg matrix, kept unrotated for the
    // condition estimate, and rotated copies for the least-squares solve.
    let mut hcols: Vec<Vec<C<R>>> = Vec::new();
    let mut rcols: Vec<Vec<C<R>>> = Vec::new();
    let mut rot: Vec<(R, C<R>)> = Vec::new();
    let mut g = vec![C::new(beta, R::zero())];
    let mut res = beta;
    let mut w = vec![czero::<R>(); n];
    let mut k = 0;
    while k < max_iter {
        apply(&basis[k], &mut w);
        let mut h = vec![czero::<R>(); k + 2];
        for _pass in 0..2 {
            for (j, v) in basis.iter().enumerate() {
                let c = dot(v, &w);
                h[j] += c;
                for (wi, vi) in w.iter_mut().zip(v.iter()) {
                    *wi -= c * *vi;
                }
            }
        }
        let hn = norm(&w);
        h[k + 1] = C::new(hn, R::zero());
        hcols.push(h.clone());
        for (j, &(cs, sn)) in rot.iter().enumerate() {
            let t = h[j] * cs + sn * h[j + 1];
            h[j + 1] = -sn.conj() * h[j] + h[j + 1] * cs;
            h[j] = t;
        }
        let (cs, sn, rr) = givens(h[k], h[k + 1]);
        h[k] = rr;
        h[k + 1] = czero();
        rot.push((cs, sn));
        let gk = g[k];
        g[k] = gk * cs;
        g.push(-sn.conj() * gk);
        res = g[k + 1].norm();
        rcols.push(h);
        k += 1;
        if res <= tol * bnorm || hn == R::zero() {
            break;
        }
        basis.push(w.iter().map(|v| *v / hn).collect());
    }
    // Back substitution on the rotated triangle.
    let mut y = vec![czero::<R>(); k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for j in i + 1..k {
            s -= rcols[j][i] * y[j];
        }
        y[i] = s / rcols[i][i];
    }
    for (j, yj) in y.iter().enumerate() {
        for (xi, vi) in x.iter_mut().zip(basis[j].iter()) {
            *xi += *yj * *vi;
        }
    }
    let rel = res / bnorm;
    if !(rel <= tol) {
        return Err(SlwError::Solver(format!("GMRES stalled at relative residual {:e} after {k} steps", rel.as_f64())));
    }
    let rcond_estimate = hessenberg_rcond(&hcols);
    Ok(GmresOutcome { x, iterations: k, rel_residual: rel, rcond_estimate })
}

fn givens<R: Real>(a: C<R>, b: C<R>) -> (R, C<R>, C<R>) {
    let an = a.norm();
    let bn = b.norm();
    if bn == R::zero() {
        return (R::one(), czero(), a);
    }
    if an == R::zero() {
        return (R::zero(), (b.conj() / bn), C::new(bn, R::zero()));
    }
    let r = an.hypot(bn);
    let phase = a / an;
    let cs = an / r;
    let sn = phase * b.conj() / r;
    (cs, sn, phase * r)
}

fn hessenberg_rcond<R: Real>(cols: &[Vec<C<R>>]) -> f64 {
    let k = cols.len();
    if k == 0 {
        return 1.0;
    }
    let m = DMatrix::<Complex<f64>>::from_fn(k + 1, k, |i, j| {
        cols[j].get(i).map(|v| Complex::new(v.re.as_f64(), v.im.as_f64())).unwrap_or_default()
    });
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        0.0
    } else {
        min / max
    }
}

fn dot<R: Real>(u: &[C<R>], v: &[C<R>]) -> C<R> {
    u.iter().zip(v.iter()).fold(czero::<R>(), |s, (a, b)| s + a.conj() * *b)
}

fn norm<R: Real>(v: &[C<R>]) -> R {
    v.iter().fold(R::zero(), |s, a| s + a.norm_sqr()).sqrt()
}
