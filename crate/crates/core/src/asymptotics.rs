//! Large-`ρ` checks: deviation of computed solutions from their leading
//! asymptotic forms along rays, and the `P` matrix linking two problems.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::Result;
use crate::forward::ForwardSolver;
use crate::problem::SpectralPoint;
use crate::scalar::{ci, cone, Real};

/// Relative deviations of one quantity at a sequence of radii.
#[derive(Clone, Debug)]
pub struct DecayRow {
    pub name: String,
    pub radii: Vec<f64>,
    pub deviations: Vec<f64>,
}

impl DecayRow {
    /// `dev(R_i) / dev(R_{i+1})`.
    pub fn ratios(&self) -> Vec<f64> {
        self.deviations.windows(2).map(|w| w[0] / w[1]).collect()
    }
}

fn rel<R: Real>(got: Complex<R>, lead: Complex<R>) -> f64 {
    ((got - lead).norm() / lead.norm()).as_f64()
}

/// Leading terms of `φ_j^{(m)}` for `|ρ(x − a)| ≥ 1`.
pub fn phi_leading<R: Real>(f: &ForwardSolver<R>, j: usize, m: usize, x: R, rho: Complex<R>) -> Complex<R> {
    let i = ci::<R>();
    let pw = m as i32 - j as i32 + 1;
    let minus = (-i * rho).powi(pw);
    let plus = (i * rho).powi(pw);
    let half = R::lit(0.5);
    let a = f.problem.a;
    if x < a {
        return (minus * (-i * rho * x).exp() + plus * (i * rho * x).exp()) * half;
    }
    let xi = &f.problem.xi;
    let sg = if j == 1 { cone::<R>() } else { -cone::<R>() };
    let two_a = a * R::lit(2.0);
    // The printed placement of ξ22 and ξ11 holds on S̄₀; φ depends on ρ² only,
    // so on S₁ the two diagonal entries trade places.
    let (near, far) = if sector_j(rho) == 2 { (xi.xi22, xi.xi11) } else { (xi.xi11, xi.xi22) };
    (minus * (xi.xi12 * (-i * rho * x).exp() + sg * near * (-i * rho * (x - two_a)).exp())
        + plus * (xi.xi21 * (i * rho * x).exp() + sg * far * (i * rho * (x - two_a)).exp()))
        * half
}

/// Index `j` of the sector `S̄_{2−j}` containing `ρ` (`1` for `Re ρ < 0`).
fn sector_j<R: Real>(rho: Complex<R>) -> usize {
    if rho.re < R::zero() {
        1
    } else {
        2
    }
}

/// Leading terms of `e^{(m)}` for `|ρ(x − a)| ≥ 1`.
pub fn jost_leading<R: Real>(f: &ForwardSolver<R>, m: usize, x: R, rho: Complex<R>) -> Complex<R> {
    let i = ci::<R>();
    let pref = (i * rho).powi(m as i32);
    let a = f.problem.a;
    if x > a {
        return pref * (i * rho * x).exp();
    }
    let xi = &f.problem.xi;
    let sg = if m == 0 { -R::one() } else { R::one() };
    let xjj = xi.diag(sector_j(rho));
    pref / f.problem.det_a() * (xi.xi12 * (i * rho * x).exp() + xjj * sg * (i * rho * (a * R::lit(2.0) - x)).exp())
}

/// `Δ^±(ρ)/det A`.
pub fn delta_leading<R: Real>(f: &ForwardSolver<R>, rho: Complex<R>) -> Complex<R> {
    let xi = &f.problem.xi;
    let e = (ci::<R>() * rho * f.problem.a * R::lit(2.0)).exp();
    (xi.xi12 - xi.diag(sector_j(rho)) * e) / f.problem.det_a()
}

/// `iρ M₀^±(λ)`.
pub fn weyl_leading<R: Real>(f: &ForwardSolver<R>, rho: Complex<R>) -> Complex<R> {
    let xi = &f.problem.xi;
    let e = (ci::<R>() * rho * f.problem.a * R::lit(2.0)).exp();
    let xjj = xi.diag(sector_j(rho));
    ci::<R>() * rho * (xi.xi12 + xjj * e) / (xi.xi12 - xjj * e)
}

/// Deviations from the leading-order formulas along the ray `arg ρ = angle`
/// at the radii given, for one point `x_left < a` and one point `x_right > a`.
pub fn asymptotic_validators<R: Real>(
    f: &ForwardSolver<R>,
    angle: R,
    radii: &[R],
    x_left: R,
    x_right: R,
) -> Result<Vec<DecayRow>> {
    let rhos: Vec<Complex<R>> = radii.iter().map(|&r| Complex::from_polar(r, angle)).collect();
    validate_at(f, &rhos, x_left, x_right)
}

/// Points `ρ_n = t_n + i·height` with `|ρ_n| ≈ radii[n]` and all `t_n` congruent
/// modulo `π/a`, so `e^{2iρa}` is the same at every point. Along such a line
/// the exponential terms of the leading forms stay of order one, which is
/// where the `O(1/ρ)` remainders are sharp.
pub fn phase_locked_points<R: Real>(a: R, height: R, radii: &[R]) -> Vec<Complex<R>> {
    let period = R::PI() / a;
    let base = (radii[0] * radii[0] - height * height).max(R::zero()).sqrt();
    radii
        .iter()
        .map(|&r| {
            let t = (r * r - height * height).max(R::zero()).sqrt();
            let shift = ((t - base) / period).round();
            Complex::new(base + shift * period, height)
        })
        .collect()
}

/// Deviations from the leading-order formulas at the points `rhos`.
pub fn validate_at<R: Real>(f: &ForwardSolver<R>, rhos: &[Complex<R>], x_left: R, x_right: R) -> Result<Vec<DecayRow>> {
    let xs = [x_left, x_right];
    // Per point: 8 φ entries, 4 e entries, Δ, M.
    let per_radius: Vec<Result<Vec<(String, f64)>>> = rhos
        .par_iter()
        .map(|&rho| {
            let sp = SpectralPoint::from_rho(rho);
            let mut out = Vec::new();
            for j in 1..=2 {
                let vals = f.phi(j, &sp, &xs)?;
                for (side, (k, &x)) in ["J-", "J+"].iter().zip(xs.iter().enumerate()) {
                    for m in 0..2 {
                        out.push((format!("phi_{j}^({m}) {side}"), rel(vals[k][m], phi_leading(f, j, m, x, rho))));
                    }
                }
            }
            let jost = f.jost(rho, &xs)?;
            for (side, (k, &x)) in ["J-", "J+"].iter().zip(xs.iter().enumerate()) {
                for m in 0..2 {
                    out.push((format!("e^({m}) {side}"), rel(jost.values[k][m], jost_leading(f, m, x, rho))));
                }
            }
            out.push(("Delta".into(), rel(jost.delta, delta_leading(f, rho))));
            out.push(("M".into(), rel(jost.de0 / jost.delta, weyl_leading(f, rho))));
            Ok(out)
        })
        .collect();
    let mut rows: Vec<DecayRow> = Vec::new();
    for res in per_radius {
        for (k, (name, dev)) in res?.into_iter().enumerate() {
            if rows.len() <= k {
                rows.push(DecayRow { name, radii: Vec::new(), deviations: Vec::new() });
            }
            rows[k].deviations.push(dev);
        }
    }
    for row in rows.iter_mut() {
        row.radii = rhos.iter().map(|r| r.norm().as_f64()).collect();
    }
    Ok(rows)
}

/// `P(x, λ)` for the pair `(target, model)` together with the residual of the
/// reconstruction `φ = P11 φ̃ + P12 φ̃′`.
#[derive(Clone, Copy, Debug)]
pub struct PMatrix<R> {
    pub p: [[Complex<R>; 2]; 2],
    pub reconstruction_residual: R,
}

pub fn p_matrix<R: Real>(target: &ForwardSolver<R>, model: &ForwardSolver<R>, x: R, sp: &SpectralPoint<R>) -> Result<PMatrix<R>> {
    let eta = target.problem.eta(x)?;
    let phi = target.phi(2, sp, &[x])?[0];
    let big = target.weyl_solution(sp, &[x])?[0];
    let phit = model.phi(2, sp, &[x])?[0];
    let bigt = model.weyl_solution(sp, &[x])?[0];
    let mut p = [[Complex::new(R::zero(), R::zero()); 2]; 2];
    for k in 0..2 {
        p[k][0] = -(phi[k] * bigt[1] - big[k] * phit[1]) / eta;
        p[k][1] = -(big[k] * phit[0] - phi[k] * bigt[0]) / eta;
    }
    let recon = p[0][0] * phit[0] + p[0][1] * phit[1];
    let reconstruction_residual = (recon - phi[0]).norm() / phi[0].norm();
    Ok(PMatrix { p, reconstruction_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Potential, SingularProblem, TransitionMatrix};

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn leading_terms_exact_for_continuous_unperturbed_case() {
        let p = SingularProblem::new(1.0, c(0.5, 0.0), TransitionMatrix::identity(), 2.5, Potential::Zero).unwrap();
        let f = ForwardSolver::new(p).unwrap();
        let rho = c(7.0, 2.0);
        // sin(ρx)/ρ on both sides and e = e^{iρx}.
        for x in [0.4, 1.7] {
            let exact = (rho * x).sin() / rho;
            assert!((phi_leading(&f, 2, 0, x, rho) - exact).norm() < 1e-12 * exact.norm());
            let e = (c(0.0, 1.0) * rho * x).exp();
            assert!((jost_leading(&f, 0, x, rho) - e).norm() < 1e-12 * e.norm());
        }
        let rows = asymptotic_validators(&f, 1.0, &[20.0, 40.0], 0.5, 1.5).unwrap();
        for r in rows {
            assert!(r.deviations.iter().all(|d| *d < 1e-7), "{} {:?}", r.name, r.deviations);
        }
    }

    #[test]
    fn matched_pair_gives_identity() {
        let w = 2.0 * std::f64::consts::PI / 3.0;
        let a = TransitionMatrix::new(c(1.0, 0.0), c(0.0, 0.0), c(0.3, 0.0), c(0.5 * w.cos(), 0.5 * w.sin()));
        let p = SingularProblem::new(1.0, c(1.0 / 3.0, 0.0), a, 2.5, Potential::bump(1.8, 0.5, c(0.8, 0.6))).unwrap();
        let f = ForwardSolver::new(p).unwrap();
        let sp = SpectralPoint::from_rho(c(12.0, 1.5));
        for x in [0.3, 1.4, 2.0] {
            let pm = p_matrix(&f, &f, x, &sp).unwrap();
            assert!((pm.p[0][0] - c(1.0, 0.0)).norm() < 1e-8);
            assert!((pm.p[1][1] - c(1.0, 0.0)).norm() < 1e-8);
            assert_eq!(pm.p[0][1], c(0.0, 0.0));
            assert_eq!(pm.p[1][0], c(0.0, 0.0));
        }
    }
}
