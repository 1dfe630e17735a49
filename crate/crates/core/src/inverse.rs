//! Recovery of `q` from Weyl-function samples on the contour.
//!
//! At every `x` the main equation `φ̃(x,λ) = φ(x,λ) − (1/2πi)∫ r̃(x,λ,μ)φ(x,μ)dμ`
//! is discretized on the contour nodes (Nyström) and solved for `φ(x,λ_n)`.
//! The kernel is `r̃ = D̃·M̂` with `D̃ = ⟨φ̃(x,λ), φ̃(x,μ)⟩/(η(x)(λ−μ))`.

use num_complex::Complex;
use rayon::prelude::*;

use crate::contour::{two_pi_i, weyl_at_nodes, Contour, WeylSamples};
use crate::error::{Result, SlwError};
use crate::forward::ForwardSolver;
use crate::linalg::{gmres, DenseLu};
use crate::problem::{lift_lambda, Potential};
use crate::quadrature::gauss_legendre;
use crate::scalar::Real;

type C<R> = Complex<R>;

fn czero<R: Real>() -> C<R> {
    Complex::new(R::zero(), R::zero())
}

#[derive(Clone, Debug)]
pub struct InverseOptions<R> {
    /// S-condition threshold on the reciprocal condition estimate.
    pub rcond_min: f64,
    pub gmres_tol: R,
    pub gmres_max_iter: usize,
    /// Systems up to this size are factored densely; larger ones use GMRES.
    pub dense_max: usize,
    /// Largest step of the difference quotient in the cross-check route.
    pub fd_step: R,
    /// Allowed route discrepancy in units of the error estimate.
    pub route_factor: R,
    pub check_routes: bool,
}

impl<R: Real> Default for InverseOptions<R> {
    fn default() -> Self {
        InverseOptions {
            rcond_min: 1e-10,
            gmres_tol: R::lit(1e-13),
            gmres_max_iter: 600,
            dense_max: 384,
            fd_step: R::lit(2e-3),
            route_factor: R::lit(10.0),
            check_routes: true,
        }
    }
}

/// `[φ̃, φ̃′, ∂λφ̃, ∂λφ̃′]` at every node for each `x`, indexed `[x][node]`.
#[derive(Clone, Debug)]
pub struct ModelNodes<R> {
    pub xs: Vec<R>,
    pub vals: Vec<Vec<[C<R>; 4]>>,
}

impl<R: Real> ModelNodes<R> {
    pub fn at(&self, k: usize) -> &[[C<R>; 4]] {
        &self.vals[k]
    }
}

/// Dirichlet solutions (with λ-derivatives) of `solver` at all contour
/// nodes for the points `xs`.
pub fn node_values<R: Real>(solver: &ForwardSolver<R>, contour: &Contour<R>, xs: &[R]) -> Result<ModelNodes<R>> {
    let inner: Vec<R> = xs.iter().cloned().filter(|x| *x != R::zero()).collect();
    let per_node: Vec<Vec<[C<R>; 4]>> = (0..contour.len())
        .into_par_iter()
        .map(|n| solver.phi_with_dl(&contour.point(n), &inner))
        .collect::<Result<_>>()?;
    let at_zero = [czero(), C::new(R::one(), R::zero()), czero(), czero()];
    let mut vals = Vec::with_capacity(xs.len());
    let mut k = 0;
    for &x in xs {
        if x == R::zero() {
            vals.push(vec![at_zero; contour.len()]);
        } else {
            vals.push(per_node.iter().map(|v| v[k]).collect());
            k += 1;
        }
    }
    Ok(ModelNodes { xs: xs.to_vec(), vals })
}

/// `I − K` at one `x`, with `K[m,n] = (1/2πi) D(x,λ_m,λ_n) M̂(λ_n) w_n` built
/// from the solutions in `vals`. The diagonal uses the confluent limit
/// `D(x,λ,λ) = (φ′ ∂λφ − φ ∂λφ′)/η`.
pub struct KernelAt<'k, R: Real> {
    pub x: R,
    pub eta: C<R>,
    cauchy: &'k [C<R>],
    g: &'k [C<R>],
    phi: Vec<C<R>>,
    dphi: Vec<C<R>>,
    ag: Vec<C<R>>,
    bg: Vec<C<R>>,
    diag: Vec<C<R>>,
    c0: C<R>,
    zero: bool,
}

impl<'k, R: Real> KernelAt<'k, R> {
    pub fn dim(&self) -> usize {
        self.phi.len()
    }

    /// `K[m, n]`.
    pub fn entry(&self, m: usize, n: usize) -> C<R> {
        if m == n {
            return self.diag[m];
        }
        let nn = self.dim();
        self.c0 * (self.phi[m] * self.bg[n] - self.dphi[m] * self.ag[n]) * self.cauchy[m * nn + n]
    }

    /// `out = z + sign·K z`.
    pub fn apply(&self, z: &[C<R>], out: &mut [C<R>], sign: R) {
        let n = self.dim();
        if self.zero {
            out.copy_from_slice(z);
            return;
        }
        let u: Vec<C<R>> = self.bg.iter().zip(z.iter()).map(|(a, b)| *a * *b).collect();
        let v: Vec<C<R>> = self.ag.iter().zip(z.iter()).map(|(a, b)| *a * *b).collect();
        for m in 0..n {
            let row = &self.cauchy[m * n..(m + 1) * n];
            let mut s1 = czero::<R>();
            let mut s2 = czero::<R>();
            for ((c, uu), vv) in row.iter().zip(u.iter()).zip(v.iter()) {
                s1 += *c * *uu;
                s2 += *c * *vv;
            }
            let kz = self.c0 * (self.phi[m] * s1 - self.dphi[m] * s2) + self.diag[m] * z[m];
            out[m] = z[m] + kz * sign;
        }
    }

    /// Dense row-major `I − K`.
    pub fn dense(&self) -> Vec<C<R>> {
        let n = self.dim();
        let mut a = vec![czero::<R>(); n * n];
        for m in 0..n {
            for k in 0..n {
                a[m * n + k] = -self.entry(m, k);
            }
            a[m * n + m] += C::new(R::one(), R::zero());
        }
        a
    }

    /// `(1/2πi)(1/η) Σ f_n g_n`.
    fn integral(&self, f: impl Iterator<Item = C<R>>) -> C<R> {
        f.zip(self.g.iter()).fold(czero::<R>(), |s, (a, b)| s + a * *b) * self.c0
    }
}

enum Prepared<R> {
    Zero,
    Dense(DenseLu<R>, f64),
    Iterative,
}

/// Node values of `φ(x,·)` and `φ′(x,·)` from the main equation at one `x`.
#[derive(Clone, Debug)]
pub struct MainEquationSolve<R> {
    pub x: R,
    pub phi: Vec<C<R>>,
    pub phi_prime: Vec<C<R>>,
    pub epsilon0: C<R>,
    /// `ε₀′(x)` by the product rule.
    pub epsilon0_prime: C<R>,
    /// Reciprocal condition estimate of `I − K` (S-condition proxy).
    pub rcond: f64,
    pub iterations: usize,
}

/// Inversion data: contour, model, `M̂ = M − M̃` at the nodes.
pub struct Inversion<'a, R: Real> {
    pub contour: &'a Contour<R>,
    pub model: &'a ForwardSolver<R>,
    pub m: Vec<C<R>>,
    pub model_m: Vec<C<R>>,
    pub mhat: Vec<C<R>>,
    g: Vec<C<R>>,
    cauchy: Vec<C<R>>,
    pub opts: InverseOptions<R>,
}

impl<'a, R: Real> Inversion<'a, R> {
    pub fn new(samples: &'a WeylSamples<R>, model: &'a ForwardSolver<R>, opts: InverseOptions<R>) -> Result<Self> {
        samples.validate()?;
        let model_m = weyl_at_nodes(model, &samples.contour)?;
        let mhat = samples.m.iter().zip(model_m.iter()).map(|(a, b)| *a - *b).collect();
        Ok(Self::assemble(&samples.contour, model, samples.m.clone(), model_m, mhat, opts))
    }

    /// Inversion with `M̂` given directly (`M = M̃ + M̂`).
    pub fn with_mhat(contour: &'a Contour<R>, model: &'a ForwardSolver<R>, mhat: Vec<C<R>>, opts: InverseOptions<R>) -> Result<Self> {
        if mhat.len() != contour.len() {
            return Err(SlwError::Invalid("M-hat length differs from node count".into()));
        }
        let model_m = weyl_at_nodes(model, contour)?;
        let m = model_m.iter().zip(mhat.iter()).map(|(a, b)| *a + *b).collect();
        Ok(Self::assemble(contour, model, m, model_m, mhat, opts))
    }

    fn assemble(
        contour: &'a Contour<R>,
        model: &'a ForwardSolver<R>,
        m: Vec<C<R>>,
        model_m: Vec<C<R>>,
        mhat: Vec<C<R>>,
        opts: InverseOptions<R>,
    ) -> Self {
        let n = contour.len();
        let g: Vec<C<R>> = mhat.iter().zip(contour.weights.iter()).map(|(a, b)| *a * *b).collect();
        let zero = g.iter().all(|v| *v == czero());
        let cauchy = if zero {
            Vec::new()
        } else {
            let mut c = vec![czero::<R>(); n * n];
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        c[i * n + j] = C::new(R::one(), R::zero()) / (contour.lambda[i] - contour.lambda[j]);
                    }
                }
            }
            c
        };
        Inversion { contour, model, m, model_m, mhat, g, cauchy, opts }
    }

    fn zero_kernel(&self) -> bool {
        self.cauchy.is_empty()
    }

    /// Model solutions at the nodes for the points `xs`.
    pub fn model_nodes(&self, xs: &[R]) -> Result<ModelNodes<R>> {
        node_values(self.model, self.contour, xs)
    }

    /// The discretized operator at `x` built from node solutions `vals`
    /// (the model's for the main equation; the target's for the kernel `r`).
    pub fn kernel(&self, x: R, vals: &[[C<R>; 4]]) -> Result<KernelAt<'_, R>> {
        let eta = self.model.problem.eta(x)?;
        let c0 = C::new(R::one(), R::zero()) / (two_pi_i::<R>() * eta);
        let phi: Vec<C<R>> = vals.iter().map(|v| v[0]).collect();
        let dphi: Vec<C<R>> = vals.iter().map(|v| v[1]).collect();
        let ag = phi.iter().zip(self.g.iter()).map(|(a, b)| *a * *b).collect();
        let bg = dphi.iter().zip(self.g.iter()).map(|(a, b)| *a * *b).collect();
        let diag = vals.iter().zip(self.g.iter()).map(|(v, gn)| c0 * (v[1] * v[2] - v[0] * v[3]) * *gn).collect();
        Ok(KernelAt { x, eta, cauchy: &self.cauchy, g: &self.g, phi, dphi, ag, bg, diag, c0, zero: self.zero_kernel() })
    }

    fn prepare(&self, k: &KernelAt<'_, R>) -> Result<Prepared<R>> {
        if k.zero {
            return Ok(Prepared::Zero);
        }
        if k.dim() <= self.opts.dense_max {
            let lu = DenseLu::factor(k.dense(), k.dim())
                .map_err(|_| SlwError::SConditionFailed { x: k.x.as_f64(), rcond: 0.0 })?;
            let rc = lu.rcond().as_f64();
            return Ok(Prepared::Dense(lu, rc));
        }
        Ok(Prepared::Iterative)
    }

    /// Solves `(I − K) y = rhs`; returns `(y, iterations, rcond estimate)`.
    fn solve_prepared(
        &self,
        k: &KernelAt<'_, R>,
        prep: &Prepared<R>,
        rhs: &[C<R>],
        init: Option<&[C<R>]>,
    ) -> Result<(Vec<C<R>>, usize, f64)> {
        match prep {
            Prepared::Zero => Ok((rhs.to_vec(), 0, 1.0)),
            Prepared::Dense(lu, rc) => {
                let mut y = rhs.to_vec();
                lu.solve(&mut y);
                Ok((y, 0, *rc))
            }
            Prepared::Iterative => {
                let out = gmres(|v, o| k.apply(v, o, -R::one()), rhs, init, self.opts.gmres_tol, self.opts.gmres_max_iter)
                    .map_err(|e| match e {
                        SlwError::Solver(_) => SlwError::SConditionFailed { x: k.x.as_f64(), rcond: 0.0 },
                        other => other,
                    })?;
                Ok((out.x, out.iterations, out.rcond_estimate))
            }
        }
    }

    fn check_rcond(&self, x: R, rcond: f64) -> Result<()> {
        if !(rcond >= self.opts.rcond_min) {
            return Err(SlwError::SConditionFailed { x: x.as_f64(), rcond });
        }
        Ok(())
    }

    /// Solves the main equation at `x`, then the derivative equation
    /// `(I − K)φ′ = φ̃′ + ε₀ φ̃`.
    pub fn solve_main_equation(&self, x: R, vals: &[[C<R>; 4]]) -> Result<MainEquationSolve<R>> {
        let k = self.kernel(x, vals)?;
        let prep = self.prepare(&k)?;
        let (phi, it1, rc1) = self.solve_prepared(&k, &prep, &k.phi, None)?;
        self.check_rcond(x, rc1)?;
        let epsilon0 = k.integral(k.phi.iter().zip(phi.iter()).map(|(a, b)| *a * *b));
        let rhs: Vec<C<R>> = k.dphi.iter().zip(k.phi.iter()).map(|(d, p)| *d + epsilon0 * *p).collect();
        let (phi_prime, it2, rc2) = self.solve_prepared(&k, &prep, &rhs, Some(&k.dphi))?;
        let rcond = rc1.min(rc2);
        self.check_rcond(x, rcond)?;
        let epsilon0_prime = k.integral(
            k.dphi.iter().zip(phi.iter()).zip(k.phi.iter().zip(phi_prime.iter())).map(|((a, b), (c, d))| *a * *b + *c * *d),
        );
        Ok(MainEquationSolve { x, phi, phi_prime, epsilon0, epsilon0_prime, rcond, iterations: it1 + it2 })
    }

    /// `φ(x,·)` only, optionally warm-started.
    pub fn solve_phi(&self, x: R, vals: &[[C<R>; 4]], init: Option<&[C<R>]>) -> Result<(Vec<C<R>>, f64)> {
        let k = self.kernel(x, vals)?;
        let prep = self.prepare(&k)?;
        let (phi, _, rc) = self.solve_prepared(&k, &prep, &k.phi, init)?;
        self.check_rcond(x, rc)?;
        Ok((phi, rc))
    }

    /// `ε₀(x) = (1/2πi)(1/η) Σ φ̃ φ M̂ w`, summed in the node order given.
    pub fn epsilon0(&self, x: R, vals: &[[C<R>; 4]], phi: &[C<R>], order: &[usize]) -> Result<C<R>> {
        let eta = self.model.problem.eta(x)?;
        let s = order.iter().fold(czero::<R>(), |acc, &n| acc + vals[n][0] * phi[n] * self.g[n]);
        Ok(s / (two_pi_i::<R>() * eta))
    }

    /// Recovers `q̂` on `grid` (points with `|x − a| < exclusion` are dropped).
    pub fn recover_q(&self, grid: &[R], exclusion: R) -> Result<RecoveredPotential<R>> {
        let a = self.model.problem.a;
        let xs: Vec<R> = grid.iter().cloned().filter(|x| (*x - a).abs() >= exclusion && *x >= R::zero()).collect();
        if xs.is_empty() {
            return Err(SlwError::Invalid("recovery grid is empty after the exclusion".into()));
        }
        // Five-point stencil x + jδ, j = −2..2, with δ shrunk near a and near 0.
        let steps: Vec<Option<R>> = xs
            .iter()
            .map(|&x| {
                let d = self.opts.fd_step.min((x - a).abs() / R::lit(8.0)).min(x / R::lit(4.0));
                if d > R::lit(1e-5) {
                    Some(d)
                } else {
                    None
                }
            })
            .collect();
        let mut all = xs.clone();
        let mut fd_index = vec![None; xs.len()];
        for (i, &x) in xs.iter().enumerate() {
            if let Some(d) = steps[i] {
                fd_index[i] = Some(all.len());
                for j in [-2.0, -1.0, 1.0, 2.0] {
                    all.push(x + d * R::lit(j));
                }
            }
        }
        let nodes = self.model_nodes(&all)?;
        let nu0 = self.model.problem.nu * self.model.problem.nu - C::new(R::lit(0.25), R::zero());
        let central = self.central_nodes();
        let panels = self.panel_layout();
        let per_x: Vec<Result<PointRecovery<R>>> = (0..xs.len())
            .into_par_iter()
            .map(|i| {
                let x = xs[i];
                let vals = nodes.at(i);
                let sol = self.solve_main_equation(x, vals)?;
                let qt = self.model.problem.q.eval(x);
                let q1 = qt + sol.epsilon0_prime * R::lit(2.0);
                let quad = self.quadrature_indicator(vals, &sol, &panels) * R::lit(2.0);
                let mut out = PointRecovery { x, q1, q2: None, sol, error_estimate: quad, rcond_fd: 1.0 };
                if let (Some(first), Some(delta)) = (fd_index[i], steps[i]) {
                    let star = *central
                        .iter()
                        .max_by(|&&p, &&q| out.sol.phi[p].norm().partial_cmp(&out.sol.phi[q].norm()).unwrap())
                        .unwrap();
                    let mut phis = Vec::with_capacity(4);
                    for (k, j) in [-2.0, -1.0, 1.0, 2.0].iter().enumerate() {
                        let h = delta * R::lit(*j);
                        let guess: Vec<C<R>> =
                            out.sol.phi.iter().zip(out.sol.phi_prime.iter()).map(|(p, d)| *p + *d * h).collect();
                        let (v, rc) = self.solve_phi(x + h, nodes.at(first + k), Some(&guess))?;
                        out.rcond_fd = out.rcond_fd.min(rc);
                        phis.push(v[star]);
                    }
                    let lam = self.contour.lambda[star];
                    let sing = nu0 / ((x - a) * (x - a));
                    let d2 = |f: [C<R>; 5]| {
                        (-(f[0] + f[4]) + (f[1] + f[3]) * R::lit(16.0) - f[2] * R::lit(30.0))
                            / (f[2] * (delta * delta * R::lit(12.0)))
                    };
                    let q2 = lam + d2([phis[0], phis[1], out.sol.phi[star], phis[2], phis[3]]) - sing;
                    // Same stencil on the model, whose potential is known: the
                    // difference-quotient truncation error at this λ and x.
                    let m = |k: usize| nodes.at(first + k)[star][0];
                    let fd_model = lam + d2([m(0), m(1), vals[star][0], m(2), m(3)]) - sing - qt;
                    out.error_estimate += fd_model.norm();
                    out.q2 = Some(q2);
                }
                Ok(out)
            })
            .collect();
        let mut rec = RecoveredPotential {
            x: Vec::new(),
            q_hat: Vec::new(),
            q_hat_route2: Vec::new(),
            epsilon0: Vec::new(),
            epsilon: Vec::new(),
            route_discrepancy: Vec::new(),
            error_estimate: Vec::new(),
            rcond: Vec::new(),
            s_condition_min: f64::INFINITY,
            iterations: 0,
            class_w: None,
        };
        for r in per_x {
            let p = r?;
            rec.x.push(p.x);
            rec.q_hat.push(p.q1);
            rec.q_hat_route2.push(p.q2);
            rec.epsilon0.push(p.sol.epsilon0);
            rec.epsilon.push(-p.sol.epsilon0_prime * R::lit(2.0));
            rec.route_discrepancy.push(p.q2.map(|q2| (q2 - p.q1).norm()));
            rec.error_estimate.push(p.error_estimate);
            let rc = p.sol.rcond.min(p.rcond_fd);
            rec.rcond.push(rc);
            rec.s_condition_min = rec.s_condition_min.min(rc);
            rec.iterations += p.sol.iterations;
        }
        rec.class_w = self.epsilon_class_w(&rec);
        if self.opts.check_routes {
            let floor = self.opts.gmres_tol.max(R::epsilon()) * R::lit(1e3);
            for (k, d) in rec.route_discrepancy.iter().enumerate() {
                if let Some(d) = d {
                    let allowed = self.opts.route_factor * (rec.error_estimate[k] + floor * (R::one() + rec.q_hat[k].norm()));
                    if !(*d <= allowed) {
                        return Err(SlwError::RouteDisagreement { discrepancy: d.as_f64(), allowed: allowed.as_f64() });
                    }
                }
            }
        }
        Ok(rec)
    }

    /// Nodes with `|s| ≤ 2h` (at least the two nearest the vertex).
    fn central_nodes(&self) -> Vec<usize> {
        let h = self.contour.h;
        let mut idx: Vec<usize> = (0..self.contour.len()).filter(|&n| self.contour.s[n].abs() <= h * R::lit(2.0)).collect();
        if idx.len() < 2 {
            let mut all: Vec<usize> = (0..self.contour.len()).collect();
            all.sort_by(|&p, &q| self.contour.s[p].abs().partial_cmp(&self.contour.s[q].abs()).unwrap());
            idx = all.into_iter().take(2).collect();
        }
        idx
    }

    /// Panels as `(first node, count)`, recovered from the node spacing.
    fn panel_layout(&self) -> Vec<(usize, usize)> {
        let n = self.contour.len();
        let per = if n.is_multiple_of(4) { 4 } else { 2 };
        (0..n / per).map(|p| (p * per, per)).collect()
    }

    /// A-posteriori quadrature error indicator for `ε₀′`. Per panel the
    /// integrand is expanded in Legendre polynomials from its Gauss values;
    /// the decay ratio of the last two coefficients extrapolates the size of
    /// the first unresolved one. The two end panels are added in full as a
    /// truncation term.
    fn quadrature_indicator(&self, vals: &[[C<R>; 4]], sol: &MainEquationSolve<R>, panels: &[(usize, usize)]) -> R {
        let eta = self.model.problem.eta(sol.x).unwrap_or(C::new(R::one(), R::zero()));
        let scale = R::one() / (R::PI() * R::lit(2.0) * eta.norm());
        let f: Vec<C<R>> = (0..vals.len())
            .map(|n| {
                (vals[n][1] * sol.phi[n] + vals[n][0] * sol.phi_prime[n]) * self.mhat[n] * self.contour.rho[n] * R::lit(2.0)
            })
            .collect();
        let mut total = R::zero();
        for (pi, &(start, len)) in panels.iter().enumerate() {
            let (gx, gw) = gauss_legendre::<R>(len);
            let half = (self.contour.s[start + len - 1] - self.contour.s[start]) / (gx[len - 1] - gx[0]);
            let coef: Vec<R> = (0..len)
                .map(|k| {
                    let c = (0..len).fold(czero::<R>(), |s, j| s + f[start + j] * gw[j] * legendre(k, gx[j]));
                    (c * (R::nat(2 * k + 1) * R::lit(0.5))).norm()
                })
                .collect();
            let last = coef[len - 1];
            let prev = coef[len - 2].max(R::min_positive_value());
            let ratio = (last / prev).min(R::one());
            let mut est = last * ratio.powi(len as i32 + 1) * half * R::lit(2.0);
            if pi == 0 || pi + 1 == panels.len() {
                let full = (0..len).fold(R::zero(), |s, j| s + (f[start + j] * gw[j]).norm()) * half;
                est += full;
            }
            total += est;
        }
        total * scale
    }

    /// Class-W check on the recovered `ε` through the weighted integral of
    /// its piecewise-linear interpolant.
    fn epsilon_class_w(&self, rec: &RecoveredPotential<R>) -> Option<bool> {
        if rec.x.len() < 2 {
            return None;
        }
        let pot = Potential::grid(rec.x.clone(), rec.epsilon.clone()).ok()?;
        Some(crate::problem::check_class_w(&self.model.problem.with_potential(pot)).is_ok())
    }

    /// Builds `Φ(x,λ)` for `λ` left of the contour from the `Φ`-equation and
    /// compares `Φ′(0,λ)` with `reference` when given.
    pub fn reconstruct_phi_and_m(
        &self,
        probes: &[C<R>],
        xs: &[R],
        reference: Option<&[C<R>]>,
    ) -> Result<Vec<WeylReconstruction<R>>> {
        let mut pts = vec![R::zero()];
        pts.extend(xs.iter().cloned().filter(|x| *x > R::zero()));
        let nodes = self.model_nodes(&pts)?;
        let solves: Vec<MainEquationSolve<R>> =
            (0..pts.len()).into_par_iter().map(|i| self.solve_main_equation(pts[i], nodes.at(i))).collect::<Result<_>>()?;
        probes
            .par_iter()
            .enumerate()
            .map(|(pi, &lambda)| {
                if !self.contour.contains_left(lambda) {
                    return Err(SlwError::Invalid(format!("probe {lambda} is not left of the contour")));
                }
                let sp = lift_lambda(lambda);
                let big = self.model.weyl_solution(&sp, &pts)?;
                let mut growth = R::zero();
                let mut phi0 = czero::<R>();
                let mut dphi0 = czero::<R>();
                for (i, sol) in solves.iter().enumerate() {
                    let x = pts[i];
                    let eta = self.model.problem.eta(x)?;
                    let c0 = C::new(R::one(), R::zero()) / (two_pi_i::<R>() * eta);
                    let vals = nodes.at(i);
                    let (mut s0, mut s1) = (czero::<R>(), czero::<R>());
                    for n in 0..vals.len() {
                        let w = big[i][0] * vals[n][1] - big[i][1] * vals[n][0];
                        let e = w / (lambda - self.contour.lambda[n]);
                        s0 += e * self.g[n] * sol.phi[n];
                        s1 += (big[i][0] * vals[n][0] * sol.phi[n] + e * sol.phi_prime[n]) * self.g[n];
                    }
                    let val = big[i][0] + c0 * s0;
                    let der = big[i][1] + c0 * s1;
                    if i == 0 {
                        phi0 = val;
                        dphi0 = der;
                    }
                    let env = (C::new(R::zero(), R::one()) * sp.rho * x).exp().norm() * (self.contour.h * R::lit(2.0) * x).exp();
                    growth = growth.max(val.norm() / env);
                }
                let m_error = reference.map(|r| (dphi0 - r[pi]).norm() / r[pi].norm());
                Ok(WeylReconstruction {
                    lambda,
                    phi0_residual: (phi0 - C::new(R::one(), R::zero())).norm(),
                    m_reconstructed: dphi0,
                    m_cauchy: self.model.weyl(&sp)?.m + self.contour.cauchy(&self.mhat, lambda),
                    m_error,
                    growth,
                })
            })
            .collect()
    }

    /// `‖Ã A z − z‖/‖z‖` for each test vector, where `A = I + K_r` uses the
    /// target's solutions and `Ã = I − K̃` the model's.
    pub fn operator_inverse_defect(&self, target: &ForwardSolver<R>, x: R, tests: &[Vec<C<R>>]) -> Result<Vec<R>> {
        let model_vals = self.model_nodes(&[x])?;
        let target_vals = node_values(target, self.contour, &[x])?;
        let kt = self.kernel(x, model_vals.at(0))?;
        let kr = self.kernel(x, target_vals.at(0))?;
        let n = self.contour.len();
        Ok(tests
            .iter()
            .map(|z| {
                let mut az = vec![czero::<R>(); n];
                kr.apply(z, &mut az, R::one());
                let mut back = vec![czero::<R>(); n];
                kt.apply(&az, &mut back, -R::one());
                let num = back.iter().zip(z.iter()).fold(R::zero(), |s, (a, b)| s + (*a - *b).norm_sqr()).sqrt();
                let den = z.iter().fold(R::zero(), |s, a| s + a.norm_sqr()).sqrt();
                num / den
            })
            .collect())
    }

    /// `|r − r̃ − (1/2πi)∫ r̃ r|` at sampled node pairs, relative to `max |r|`
    /// over the same pairs. Entries are scaled by `w_n/2πi`, so the relation
    /// reads `K_r − K̃ − K̃ K_r = 0`.
    pub fn main_relation_residual(&self, target: &ForwardSolver<R>, x: R, pairs: &[(usize, usize)]) -> Result<R> {
        let model_vals = self.model_nodes(&[x])?;
        let target_vals = node_values(target, self.contour, &[x])?;
        let kt = self.kernel(x, model_vals.at(0))?;
        let kr = self.kernel(x, target_vals.at(0))?;
        let n = self.contour.len();
        let mut worst = R::zero();
        let mut scale = R::zero();
        for &(i, j) in pairs {
            let comp = (0..n).fold(czero::<R>(), |s, k| s + kt.entry(i, k) * kr.entry(k, j));
            let res = kr.entry(i, j) - kt.entry(i, j) - comp;
            worst = worst.max(res.norm());
            scale = scale.max(kr.entry(i, j).norm());
        }
        Ok(if scale > R::zero() { worst / scale } else { worst })
    }

    /// Residual of `−φ″ + (ν₀/(x−a)² + q̂)φ − λφ` at `x` over the central
    /// nodes, with `φ″` by a second difference of step `step` and the solved
    /// `φ` at `x`, `x ± step`. Relative to `max |λ φ|`.
    pub fn equation_residual(&self, x: R, q_hat: C<R>, step: R) -> Result<R> {
        let a = self.model.problem.a;
        let pts = [x - step, x, x + step];
        let nodes = self.model_nodes(&pts)?;
        let phis: Vec<Vec<C<R>>> = (0..3).map(|i| self.solve_phi(pts[i], nodes.at(i), None).map(|v| v.0)).collect::<Result<_>>()?;
        let nu0 = self.model.problem.nu * self.model.problem.nu - C::new(R::lit(0.25), R::zero());
        let pot = nu0 / ((x - a) * (x - a)) + q_hat;
        let mut worst = R::zero();
        let mut scale = R::zero();
        for n in self.central_nodes() {
            let lam = self.contour.lambda[n];
            let d2 = (phis[2][n] - phis[1][n] * R::lit(2.0) + phis[0][n]) / (step * step);
            let res = -d2 + (pot - lam) * phis[1][n];
            worst = worst.max(res.norm());
            scale = scale.max((lam * phis[1][n]).norm());
        }
        Ok(worst / scale)
    }
}

fn legendre<R: Real>(k: usize, t: R) -> R {
    let (mut p0, mut p1) = (R::one(), t);
    if k == 0 {
        return p0;
    }
    for j in 2..=k {
        let p2 = (R::nat(2 * j - 1) * t * p1 - R::nat(j - 1) * p0) / R::nat(j);
        p0 = p1;
        p1 = p2;
    }
    p1
}

struct PointRecovery<R: Real> {
    x: R,
    q1: C<R>,
    q2: Option<C<R>>,
    sol: MainEquationSolve<R>,
    error_estimate: R,
    rcond_fd: f64,
}

/// Output of [`Inversion::recover_q`].
#[derive(Clone, Debug)]
pub struct RecoveredPotential<R> {
    pub x: Vec<R>,
    /// `q̃ − ε` with `ε = −2ε₀′`.
    pub q_hat: Vec<C<R>>,
    /// `λ* + φ″/φ − ν₀/(x−a)²` with a five-point difference for `φ″`; `None`
    /// where the stencil would not fit.
    pub q_hat_route2: Vec<Option<C<R>>>,
    pub epsilon0: Vec<C<R>>,
    pub epsilon: Vec<C<R>>,
    pub route_discrepancy: Vec<Option<R>>,
    /// Quadrature/truncation indicator plus second-difference error.
    pub error_estimate: Vec<R>,
    pub rcond: Vec<f64>,
    pub s_condition_min: f64,
    pub iterations: usize,
    /// Whether the recovered `ε` passes the integrability check.
    pub class_w: Option<bool>,
}

/// One probe of [`Inversion::reconstruct_phi_and_m`].
#[derive(Clone, Debug)]
pub struct WeylReconstruction<R> {
    pub lambda: C<R>,
    /// `|Φ(0,λ) − 1|`.
    pub phi0_residual: R,
    /// `Φ′(0,λ)` from the `Φ`-equation.
    pub m_reconstructed: C<R>,
    /// `M̃(λ) + (1/2πi)∫ M̂(μ)/(λ−μ) dμ`.
    pub m_cauchy: C<R>,
    /// Relative deviation of `Φ′(0,λ)` from the reference `M(λ)`.
    pub m_error: Option<R>,
    /// `max_x |Φ(x,λ)| / |e^{iρx + 2hx}|`.
    pub growth: R,
}

/// Observed decay of `|M̂(λ(s))| ~ |s|^{−p}`.
#[derive(Clone, Debug, PartialEq)]
pub struct MhatDecay {
    /// Fitted `p`; infinite when `M̂` vanishes identically.
    pub order: f64,
    pub exact: bool,
    /// `p < 1`: the premise `M̂ = O(1)` of the main equation is marginal.
    pub marginal: bool,
    /// `p ≥ 2` (up to a fit tolerance of 0.1), the decay the recovery
    /// formula asks for.
    pub second_order: bool,
}

/// Least-squares fit of `log|M̂|` against `log|s|` over the outer third of the nodes.
pub fn check_mhat_decay<R: Real>(contour: &Contour<R>, mhat: &[C<R>]) -> MhatDecay {
    if mhat.iter().all(|v| *v == czero()) {
        return MhatDecay { order: f64::INFINITY, exact: true, marginal: false, second_order: true };
    }
    let cut = contour.s_max.as_f64() * 2.0 / 3.0;
    let pts: Vec<(f64, f64)> = contour
        .s
        .iter()
        .zip(mhat.iter())
        .filter(|(s, v)| s.as_f64().abs() >= cut && v.norm() > R::zero())
        .map(|(s, v)| (s.as_f64().abs().ln(), v.norm().as_f64().ln()))
        .collect();
    let order = if pts.len() < 2 {
        f64::NAN
    } else {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        -sxy / sxx
    };
    MhatDecay { order, exact: false, marginal: !(order >= 1.0), second_order: order >= 1.9 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::build_contour;
    use crate::problem::{SingularProblem, TransitionMatrix};

    type Cf = Complex<f64>;

    fn fixture(q: Potential<f64>) -> SingularProblem<f64> {
        let w = 2.0 * std::f64::consts::PI / 3.0;
        let a = TransitionMatrix::new(Cf::new(1.0, 0.0), Cf::new(0.0, 0.0), Cf::new(0.0, 0.0), Cf::new(0.5 * w.cos(), 0.5 * w.sin()));
        SingularProblem::new(1.0, Cf::new(1.0 / 3.0, 0.0), a, 2.5, q).unwrap()
    }

    #[test]
    fn recovered_solution_satisfies_equation_to_second_order() {
        let target = ForwardSolver::new(fixture(Potential::bump(1.8, 0.5, Cf::new(0.8, 0.6)))).unwrap();
        let model = ForwardSolver::new(fixture(Potential::Zero)).unwrap();
        let contour = build_contour(1.3, 40.0, 256).unwrap();
        let samples = WeylSamples::from_forward(&target, contour).unwrap();
        let inv = Inversion::new(&samples, &model, InverseOptions::default()).unwrap();
        let x = 1.6;
        let q = inv.recover_q(&[x], 0.05).unwrap().q_hat[0];
        let coarse = inv.equation_residual(x, q, 0.02).unwrap();
        let fine = inv.equation_residual(x, q, 0.01).unwrap();
        assert!(coarse / fine > 3.0, "{coarse:e} {fine:e}");
        // With the model potential the residual stays O(|q̂|).
        let wrong = inv.equation_residual(x, Cf::new(0.0, 0.0), 0.01).unwrap();
        assert!(wrong > 10.0 * fine);
    }

    #[test]
    fn zero_mhat_returns_model_bitwise() {
        let model = ForwardSolver::new(fixture(Potential::Zero)).unwrap();
        let contour = build_contour(1.3, 20.0, 64).unwrap();
        let inv = Inversion::with_mhat(&contour, &model, vec![Cf::new(0.0, 0.0); 64], InverseOptions::default()).unwrap();
        let nodes = inv.model_nodes(&[0.0, 0.4, 1.7]).unwrap();
        for i in 0..3 {
            let sol = inv.solve_main_equation(nodes.xs[i], nodes.at(i)).unwrap();
            for n in 0..64 {
                assert_eq!(sol.phi[n], nodes.at(i)[n][0]);
                assert_eq!(sol.phi_prime[n], nodes.at(i)[n][1]);
            }
            assert_eq!(sol.epsilon0, Cf::new(0.0, 0.0));
        }
        let rec = inv.recover_q(&[0.0, 0.5, 1.5, 2.0], 0.05).unwrap();
        assert!(rec.q_hat.iter().all(|q| *q == Cf::new(0.0, 0.0)));
    }

    #[test]
    fn boundary_rows_and_dense_iterative_agree() {
        let target = ForwardSolver::new(fixture(Potential::bump(1.8, 0.5, Cf::new(0.8, 0.6)))).unwrap();
        let model = ForwardSolver::new(fixture(Potential::Zero)).unwrap();
        let contour = build_contour(1.3, 12.0, 256).unwrap();
        let samples = WeylSamples::from_forward(&target, contour).unwrap();
        let dense = Inversion::new(&samples, &model, InverseOptions::default()).unwrap();
        let it = Inversion::new(&samples, &model, InverseOptions { dense_max: 0, ..InverseOptions::default() }).unwrap();
        let nodes = dense.model_nodes(&[0.0, 1.6]).unwrap();
        let s0 = dense.solve_main_equation(0.0, nodes.at(0)).unwrap();
        assert!(s0.phi.iter().all(|v| v.norm() < 1e-8));
        assert!(s0.phi_prime.iter().all(|v| (v - 1.0).norm() < 1e-8));
        let sd = dense.solve_main_equation(1.6, nodes.at(1)).unwrap();
        let si = it.solve_main_equation(1.6, nodes.at(1)).unwrap();
        let diff = sd.phi.iter().zip(si.phi.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        let size = sd.phi.iter().map(|a| a.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-10 * size, "{diff:e}");
        assert!((sd.epsilon0_prime - si.epsilon0_prime).norm() < 1e-10);
        assert!(sd.rcond > 1e-10 && si.rcond > 1e-10);
    }

    #[test]
    fn epsilon0_symmetric_under_reversal() {
        let target = ForwardSolver::new(fixture(Potential::bump(1.8, 0.5, Cf::new(0.8, 0.6)))).unwrap();
        let model = ForwardSolver::new(fixture(Potential::Zero)).unwrap();
        let contour = build_contour(1.3, 12.0, 128).unwrap();
        let samples = WeylSamples::from_forward(&target, contour).unwrap();
        let inv = Inversion::new(&samples, &model, InverseOptions::default()).unwrap();
        let nodes = inv.model_nodes(&[2.0]).unwrap();
        let sol = inv.solve_main_equation(2.0, nodes.at(0)).unwrap();
        let fwd: Vec<usize> = (0..128).collect();
        let rev: Vec<usize> = (0..128).rev().collect();
        let e1 = inv.epsilon0(2.0, nodes.at(0), &sol.phi, &fwd).unwrap();
        let e2 = inv.epsilon0(2.0, nodes.at(0), &sol.phi, &rev).unwrap();
        assert!((e1 - e2).norm() <= 1e-14 * e1.norm().max(1e-300));
        assert!((e1 - sol.epsilon0).norm() <= 1e-14 * e1.norm());
    }

    #[test]
    fn mhat_decay_flags() {
        let contour = build_contour(1.0, 30.0, 120).unwrap();
        let zero = check_mhat_decay(&contour, &vec![Cf::new(0.0, 0.0); 120]);
        assert!(zero.exact && zero.order.is_infinite());
        let quad: Vec<Cf> = contour.lambda.iter().map(|l| 1.0 / l).collect();
        let d = check_mhat_decay(&contour, &quad);
        assert!((d.order - 2.0).abs() < 0.05 && d.second_order && !d.marginal);
        let grow: Vec<Cf> = contour.rho.to_vec();
        let d = check_mhat_decay(&contour, &grow);
        assert!((d.order + 1.0).abs() < 0.05 && d.marginal);
    }
}
