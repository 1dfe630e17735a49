//! Zeros of `Δ(ρ)` in the upper half-plane: asymptotic seeds, Newton
//! refinement, argument-principle certification and the real-axis scan.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Result, SlwError};
use crate::forward::ForwardSolver;
use crate::scalar::{arg_0_2pi, ci, Real};

/// Shifts `θ₊` (sector `S₀`, `ξ22`) and `θ₋` (sector `S₁`, `ξ11`) of the
/// asymptotic zero lattice `ρ_k = (π/a)(k + θ)`.
pub fn thetas<R: Real>(f: &ForwardSolver<R>) -> Result<(Complex<R>, Complex<R>)> {
    let p = &f.problem;
    if !p.regime().supported {
        return Err(SlwError::Unsupported("spectrum asymptotics need |xi_jj| > |xi_12| > 0".into()));
    }
    let theta = |j: usize| {
        let r = p.xi.xi12 / p.xi.diag(j);
        let two_pi = R::TAU();
        -ci::<R>() * r.norm().ln() / two_pi + Complex::new(arg_0_2pi(r) / two_pi, R::zero())
    };
    Ok((theta(2), theta(1)))
}

#[derive(Clone, Copy, Debug)]
pub struct SpectrumOptions<R> {
    /// Boxes are built for `1 ≤ |k| ≤ k_max` on both sides.
    pub k_max: usize,
    pub newton_iter: usize,
    pub newton_tol: R,
    /// Lower edge of the boxes; zeros closer to the real axis are left to the scan.
    pub floor: R,
    pub real_scan_step: R,
    pub real_scan_kmax: usize,
}

impl<R: Real> Default for SpectrumOptions<R> {
    fn default() -> Self {
        SpectrumOptions {
            k_max: 40,
            newton_iter: 30,
            newton_tol: R::lit(1e-10),
            floor: R::lit(1e-2),
            real_scan_step: R::lit(0.05),
            real_scan_kmax: 10,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Eigenvalue<R> {
    pub k: i64,
    pub rho: Complex<R>,
    pub lambda: Complex<R>,
    /// `e(x, ρ_k) = β_k φ(x, λ_k)`; with `φ′(0) = 1` this is `e′(0, ρ_k)`.
    pub beta: Complex<R>,
    pub residual: R,
    /// Asymptotic seed, if the zero belongs to a lattice box.
    pub seed: Option<Complex<R>>,
}

#[derive(Clone, Copy, Debug)]
pub struct RealZero<R> {
    pub rho: R,
    pub residual: R,
    /// `|Δ(−ρ₀)|`.
    pub mirror: R,
}

#[derive(Clone, Debug)]
pub struct SpectrumEstimate<R> {
    pub theta_plus: Complex<R>,
    pub theta_minus: Complex<R>,
    /// Sorted by `k`, then by `Re ρ`.
    pub eigenvalues: Vec<Eigenvalue<R>>,
    pub real_zeros: Vec<RealZero<R>>,
    /// Upper edge of the search boxes.
    pub box_top: R,
    /// Real-axis extent of the boxes.
    pub box_span: (R, R),
    /// Winding numbers per box, in box order.
    pub counts: Vec<(String, i64)>,
}

#[derive(Clone, Copy, Debug)]
struct SearchBox<R> {
    lo: R,
    hi: R,
    bottom: R,
    top: R,
    k: i64,
    seed: Option<Complex<R>>,
}

impl<R: Real> SearchBox<R> {
    fn contains(&self, z: Complex<R>) -> bool {
        z.re >= self.lo && z.re < self.hi && z.im > self.bottom && z.im < self.top
    }

    fn label(&self) -> String {
        if self.seed.is_some() {
            format!("k={}", self.k)
        } else {
            format!("[{:.4}, {:.4}]", self.lo.as_f64(), self.hi.as_f64())
        }
    }
}

impl<R: Real> ForwardSolver<R> {
    fn delta_pair(&self, rho: Complex<R>) -> Result<(Complex<R>, Complex<R>)> {
        let j = self.jost(rho, &[])?;
        Ok((j.delta, j.de0))
    }

    /// Newton iteration on `Δ` with a central-difference derivative.
    /// Returns the zero, `|Δ|` there and `e′(0, ρ)`; `None` if it leaves `bx`.
    fn newton(&self, start: Complex<R>, bx: &SearchBox<R>, opts: &SpectrumOptions<R>) -> Result<Option<(Complex<R>, R, Complex<R>)>> {
        let mut rho = start;
        for _ in 0..opts.newton_iter {
            let (d, de0) = self.delta_pair(rho)?;
            let step = R::lit(1e-6) * (R::one() + rho.norm());
            let dp = self.delta_pair(rho + step)?.0;
            let dm = self.delta_pair(rho - step)?.0;
            let deriv = (dp - dm) / (step * R::lit(2.0));
            if d.norm() < opts.newton_tol * (R::one() + de0.norm()) {
                // One more step is nearly free at quadratic convergence.
                if deriv.norm() > R::zero() {
                    let polished = rho - d / deriv;
                    let (d2, de2) = self.delta_pair(polished)?;
                    if d2.norm() < d.norm() && bx.contains(polished) {
                        return Ok(Some((polished, d2.norm(), de2)));
                    }
                }
                return Ok(Some((rho, d.norm(), de0)));
            }
            if deriv.norm() == R::zero() {
                return Ok(None);
            }
            rho -= d / deriv;
            if !bx.contains(rho) {
                return Ok(None);
            }
        }
        let (d, de0) = self.delta_pair(rho)?;
        if d.norm() < opts.newton_tol * (R::one() + de0.norm()) {
            Ok(Some((rho, d.norm(), de0)))
        } else {
            Ok(None)
        }
    }

    /// Winding number of `Δ` around the box boundary, accumulated from
    /// argument increments with adaptive bisection.
    fn winding(&self, bx: &SearchBox<R>) -> Result<R> {
        let corners = [
            Complex::new(bx.lo, bx.bottom),
            Complex::new(bx.hi, bx.bottom),
            Complex::new(bx.hi, bx.top),
            Complex::new(bx.lo, bx.top),
        ];
        let spacing = R::lit(0.25) * R::PI() / self.problem.a;
        let mut total = R::zero();
        for e in 0..4 {
            let (z0, z1) = (corners[e], corners[(e + 1) % 4]);
            let pieces = ((z1 - z0).norm() / spacing).ceil().max(R::lit(4.0)).to_usize().unwrap_or(4);
            let mut prev_z = z0;
            let mut prev = self.characteristic(z0)?;
            for p in 1..=pieces {
                let z = z0 + (z1 - z0) * (R::nat(p) / R::nat(pieces));
                let d = self.characteristic(z)?;
                total += self.arg_increment(prev_z, prev, z, d, 0)?;
                prev_z = z;
                prev = d;
            }
        }
        Ok(total / R::TAU())
    }

    fn arg_increment(&self, z0: Complex<R>, d0: Complex<R>, z1: Complex<R>, d1: Complex<R>, depth: usize) -> Result<R> {
        let zm = (z0 + z1) * R::lit(0.5);
        let dm = self.characteristic(zm)?;
        let left = (dm / d0).arg();
        let right = (d1 / dm).arg();
        let limit = R::lit(0.5);
        if left.abs() < limit && right.abs() < limit && ((d1 / d0).arg() - left - right).abs() < R::lit(1e-6) {
            return Ok(left + right);
        }
        if depth > 40 {
            return Err(SlwError::Solver(format!(
                "argument of Delta not resolved near rho = {} + {}i",
                zm.re.as_f64(),
                zm.im.as_f64()
            )));
        }
        Ok(self.arg_increment(z0, d0, zm, dm, depth + 1)? + self.arg_increment(zm, dm, z1, d1, depth + 1)?)
    }

    /// Finds all zeros of one box; errors if the count cannot be matched.
    fn search_box(&self, bx: &SearchBox<R>, opts: &SpectrumOptions<R>) -> Result<(i64, Vec<Eigenvalue<R>>)> {
        let w = self.winding(bx)?;
        let n = w.round();
        if (w - n).abs() > R::lit(0.05) {
            return Err(SlwError::CountMismatch { label: bx.label(), counted: n.to_i64().unwrap_or(-1), found: 0 });
        }
        let count = n.to_i64().unwrap_or(-1);
        if count < 0 {
            return Err(SlwError::CountMismatch { label: bx.label(), counted: count, found: 0 });
        }
        let mut found: Vec<Eigenvalue<R>> = Vec::new();
        let push = |z: Complex<R>, res: R, de0: Complex<R>, found: &mut Vec<Eigenvalue<R>>| {
            let dup = found.iter().any(|e| (e.rho - z).norm() < R::lit(1e-7) * (R::one() + z.norm()));
            if !dup {
                found.push(Eigenvalue { k: bx.k, rho: z, lambda: z * z, beta: de0, residual: res, seed: bx.seed });
            }
        };
        if count == 0 {
            return Ok((0, found));
        }
        if let Some(seed) = bx.seed {
            if let Some((z, res, de0)) = self.newton(seed, bx, opts)? {
                push(z, res, de0, &mut found);
            } else if count == 1 {
                // Retry from the box centre line before declaring the seed lost.
                let mid = Complex::new(seed.re, (bx.bottom + bx.top) * R::lit(0.5));
                match self.newton(mid, bx, opts)? {
                    Some((z, res, de0)) => push(z, res, de0, &mut found),
                    None => return Err(SlwError::SeedDiverged { k: bx.k }),
                }
            }
        }
        let (nx, ny) = (6usize, 5usize);
        'grid: for iy in 0..ny {
            for ix in 0..nx {
                if found.len() as i64 >= count {
                    break 'grid;
                }
                let fx = (R::nat(ix) + R::lit(0.5)) / R::nat(nx);
                let fy = (R::nat(iy) + R::lit(0.5)) / R::nat(ny);
                let start = Complex::new(bx.lo + (bx.hi - bx.lo) * fx, bx.bottom + (bx.top - bx.bottom) * fy);
                if let Some((z, res, de0)) = self.newton(start, bx, opts)? {
                    push(z, res, de0, &mut found);
                }
            }
        }
        if found.len() as i64 != count {
            return Err(SlwError::CountMismatch { label: bx.label(), counted: count, found: found.len() });
        }
        Ok((count, found))
    }

    fn build_boxes(&self, theta_p: Complex<R>, theta_m: Complex<R>, top: R, opts: &SpectrumOptions<R>) -> Vec<SearchBox<R>> {
        let step = R::PI() / self.problem.a;
        let half = R::lit(0.5);
        let k_max = opts.k_max as i64;
        let mut boxes = Vec::new();
        let mut first_pos = None;
        for k in 0..=k_max {
            let c = step * (R::nat(k as usize) + theta_p.re);
            if c - step * half <= R::zero() {
                continue;
            }
            first_pos.get_or_insert(c - step * half);
            boxes.push(SearchBox {
                lo: c - step * half,
                hi: c + step * half,
                bottom: opts.floor,
                top,
                k,
                seed: Some(Complex::new(c, step * theta_p.im)),
            });
        }
        let mut last_neg = None;
        for k in (-k_max..=0).rev() {
            let c = step * (R::lit(k as f64) + theta_m.re);
            if c + step * half >= R::zero() {
                continue;
            }
            last_neg.get_or_insert(c + step * half);
            boxes.push(SearchBox {
                lo: c - step * half,
                hi: c + step * half,
                bottom: opts.floor,
                top,
                k,
                seed: Some(Complex::new(c, step * theta_m.im)),
            });
        }
        let lo = last_neg.unwrap_or(-step * half);
        let hi = first_pos.unwrap_or(step * half);
        boxes.push(SearchBox { lo, hi, bottom: opts.floor, top, k: 0, seed: None });
        boxes
    }

    /// Zeros of `Δ` on the real axis away from `ρ = 0`, located as local minima
    /// of `|Δ|` on a grid and refined by golden-section search.
    fn real_zeros(&self, extent: R, opts: &SpectrumOptions<R>) -> Result<Vec<RealZero<R>>> {
        let step = opts.real_scan_step;
        let n = (extent / step).ceil().to_usize().unwrap_or(1).max(2);
        let grid: Vec<R> = (1..=n).map(|i| step * R::nat(i)).collect();
        let mut out = Vec::new();
        for sign in [-R::one(), R::one()] {
            let vals: Vec<R> = grid
                .par_iter()
                .map(|&t| self.characteristic(Complex::new(sign * t, R::zero())).map(|d| d.norm()))
                .collect::<Result<Vec<R>>>()?;
            for i in 1..vals.len() - 1 {
                if !(vals[i] < vals[i - 1] && vals[i] <= vals[i + 1]) {
                    continue;
                }
                let (mut lo, mut hi) = (grid[i - 1], grid[i + 1]);
                let g = R::lit(0.618_033_988_749_894_8);
                let eval = |t: R| self.characteristic(Complex::new(sign * t, R::zero())).map(|d| d.norm());
                let mut c = hi - g * (hi - lo);
                let mut d = lo + g * (hi - lo);
                let (mut fc, mut fd) = (eval(c)?, eval(d)?);
                for _ in 0..80 {
                    if fc < fd {
                        hi = d;
                        d = c;
                        fd = fc;
                        c = hi - g * (hi - lo);
                        fc = eval(c)?;
                    } else {
                        lo = c;
                        c = d;
                        fc = fd;
                        d = lo + g * (hi - lo);
                        fd = eval(d)?;
                    }
                }
                let t = (lo + hi) * R::lit(0.5);
                let (dv, de0) = self.delta_pair(Complex::new(sign * t, R::zero()))?;
                if dv.norm() < R::lit(1e-8) * (R::one() + de0.norm()) {
                    let mirror = self.characteristic(Complex::new(-sign * t, R::zero()))?.norm();
                    out.push(RealZero { rho: sign * t, residual: dv.norm(), mirror });
                }
            }
        }
        out.sort_by(|p, q| p.rho.partial_cmp(&q.rho).unwrap());
        Ok(out)
    }

    fn run_search(&self, theta_p: Complex<R>, theta_m: Complex<R>, top: R, opts: &SpectrumOptions<R>) -> Result<SpectrumEstimate<R>> {
        let boxes = self.build_boxes(theta_p, theta_m, top, opts);
        let results: Vec<Result<(i64, Vec<Eigenvalue<R>>)>> = boxes.par_iter().map(|b| self.search_box(b, opts)).collect();
        let mut eigenvalues = Vec::new();
        let mut counts = Vec::new();
        for (b, r) in boxes.iter().zip(results) {
            let (n, mut ev) = r?;
            counts.push((b.label(), n));
            eigenvalues.append(&mut ev);
        }
        eigenvalues.sort_by(|p, q| p.k.cmp(&q.k).then(p.rho.re.partial_cmp(&q.rho.re).unwrap()));
        let extent = R::PI() / self.problem.a * R::nat(opts.k_max.min(opts.real_scan_kmax).max(1));
        let real_zeros = self.real_zeros(extent, opts)?;
        let lo = boxes.iter().fold(R::infinity(), |m, b| m.min(b.lo));
        let hi = boxes.iter().fold(-R::infinity(), |m, b| m.max(b.hi));
        Ok(SpectrumEstimate { theta_plus: theta_p, theta_minus: theta_m, eigenvalues, real_zeros, box_top: top, box_span: (lo, hi), counts })
    }

    fn box_top(&self, asymptotic_height: R) -> R {
        let q = self.problem.q.sup_abs();
        let bump = if q.is_finite() { R::lit(2.0) * q.sqrt() } else { R::lit(10.0) };
        asymptotic_height + R::lit(2.0) + bump
    }

    /// Full spectrum estimate in the supported regime.
    pub fn spectrum(&self, opts: &SpectrumOptions<R>) -> Result<SpectrumEstimate<R>> {
        let (tp, tm) = thetas(self)?;
        let height = R::PI() / self.problem.a * tp.im.max(tm.im);
        self.run_search(tp, tm, self.box_top(height), opts)
    }

    /// Zero search without the asymptotic lattice (used to pick `h` when the
    /// regime is outside the supported case).
    pub fn spectrum_generic(&self, opts: &SpectrumOptions<R>) -> Result<SpectrumEstimate<R>> {
        let z = Complex::new(R::zero(), R::zero());
        self.run_search(z, z, self.box_top(R::zero()), opts)
    }
}

/// Height of the contour line `Im ρ = h`: above every found zero and above the
/// asymptotic zero height, plus a margin of `π/(4a)`.
pub fn choose_h<R: Real>(a: R, spectra: &[&SpectrumEstimate<R>]) -> R {
    let step = R::PI() / a;
    let mut top = R::zero();
    for s in spectra {
        top = top.max(step * s.theta_plus.im.max(s.theta_minus.im));
        for e in &s.eigenvalues {
            top = top.max(e.rho.im);
        }
    }
    let mut h = top + R::lit(0.25) * step;
    // Keep the line clear of any zero that sits right at it.
    while spectra.iter().any(|s| s.eigenvalues.iter().any(|e| (e.rho.im - h).abs() < R::lit(1e-3))) {
        h += R::lit(0.05) * step;
    }
    h
}
