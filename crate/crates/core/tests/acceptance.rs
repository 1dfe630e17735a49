//! Acceptance suite. Each criterion prints one PASS/FAIL line; the test fails
//! if any criterion does.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use num_complex::Complex;
use rand::{rngs::StdRng, Rng, SeedableRng};

use slw_core::asymptotics::{asymptotic_validators, p_matrix, phase_locked_points, validate_at, DecayRow};
use slw_core::contour::{build_contour, default_s_max, WeylSamples};
use slw_core::forward::{wronskian, ForwardSolver};
use slw_core::inverse::{check_mhat_decay, InverseOptions, Inversion, RecoveredPotential};
use slw_core::series::{build_coefficients, DEFAULT_K_MAX};
use slw_core::spectrum::{choose_h, SpectrumOptions};
use slw_core::{lift_lambda, Point, Potential, Problem, SingularProblem, TransitionMatrix, C64};

type Outcome = Result<String, String>;

fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

fn problem(a21: f64, q: Potential<f64>) -> Problem {
    let w = 2.0 * PI / 3.0;
    let a = TransitionMatrix::new(c(1.0, 0.0), c(0.0, 0.0), c(a21, 0.0), c(0.5 * w.cos(), 0.5 * w.sin()));
    SingularProblem::new(1.0, c(1.0 / 3.0, 0.0), a, 2.5, q).unwrap()
}

/// Amplitude of modulus one, support `[a + 0.3, a + 1.3]`.
fn bump() -> Potential<f64> {
    Potential::bump(1.8, 0.5, c(0.8, 0.6))
}

fn solver(p: Problem) -> ForwardSolver<f64> {
    ForwardSolver::new(p).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn free_continuous() -> ForwardSolver<f64> {
    solver(SingularProblem::new(1.0, c(0.5, 0.0), TransitionMatrix::identity(), 2.5, Potential::Zero).unwrap())
}

fn closed_form() -> Outcome {
    let t0 = Instant::now();
    let f = free_continuous();
    let contour = build_contour(1.0, 40.0, 200).map_err(|e| e.to_string())?;
    let mut worst_m: f64 = 0.0;
    let mut worst_d: f64 = 0.0;
    for n in 0..contour.len() {
        let w = f.weyl(&contour.point(n)).map_err(|e| e.to_string())?;
        let exact = c(0.0, 1.0) * contour.rho[n];
        worst_m = worst_m.max((w.m - exact).norm() / exact.norm());
        worst_d = worst_d.max((w.delta - 1.0).norm());
    }
    let secs = t0.elapsed().as_secs_f64();
    check(
        worst_m <= 1e-8 && worst_d <= 1e-8 && secs < 5.0,
        format!("max rel |M - i rho| = {worst_m:.2e}, max |Delta - 1| = {worst_d:.2e} (<= 1e-8) in {secs:.2} s (< 5 s)"),
    )
}

fn series_oracle() -> Outcome {
    let s = build_coefficients(c(0.5, 0.0), DEFAULT_K_MAX).map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..400 {
        let rho = Complex::from_polar(rng.gen_range(0.05..8.0), rng.gen_range(-PI..PI));
        let mut t: f64 = rng.gen_range(0.01..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        if (rho * t).norm() > 5.0 {
            t *= 5.0 / (rho * t).norm();
        }
        let z = rho * t;
        let c1 = s.eval(1, t, rho * rho).map_err(|e| e.to_string())?;
        let c2 = s.eval(2, t, rho * rho).map_err(|e| e.to_string())?;
        let errs = [
            (c1.value - z.cos()).norm() / z.cos().norm().max(1.0),
            (c1.deriv + rho * z.sin()).norm() / (rho * z.sin()).norm().max(1.0),
            (c2.value - z.sin() / rho).norm() / (z.sin() / rho).norm().max(1.0),
            (c2.deriv - z.cos()).norm() / z.cos().norm().max(1.0),
        ];
        worst = errs.iter().cloned().fold(worst, f64::max);
    }
    check(worst <= 1e-10, format!("400 samples with |rho (x-a)| <= 5, max error {worst:.2e} (<= 1e-10)"))
}

/// Largest deviation over the four identities at `probes` random points.
fn wronskian_suite(f: &ForwardSolver<f64>, seed: u64, probes: usize) -> Result<f64, String> {
    let e = |e: slw_core::SlwError| e.to_string();
    let mut rng = StdRng::seed_from_u64(seed);
    let det = f.problem.det_a();
    let a = f.problem.a;
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let x = loop {
            let x: f64 = rng.gen_range(0.05..2.5);
            if (x - a).abs() > 0.02 {
                break x;
            }
        };
        let eta = f.problem.eta(x).map_err(e)?;
        let sp = Point::from_rho(c(rng.gen_range(-12.0..12.0), rng.gen_range(0.1..2.0)));
        let b = f.basis_at(&sp, x).map_err(e)?;
        worst = worst.max((b.wronskian() - 1.0).norm());
        let p1 = f.phi(1, &sp, &[x]).map_err(e)?[0];
        let p2 = f.phi(2, &sp, &[x]).map_err(e)?[0];
        worst = worst.max((wronskian(p1, p2) - eta).norm() / eta.norm());
        let big = f.weyl_solution(&sp, &[x]).map_err(e)?[0];
        worst = worst.max((wronskian(big, p2) - eta).norm() / eta.norm());
        // e(x, ±ρ) are both defined on the real axis.
        let r: f64 = rng.gen_range(0.5..12.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let rho = c(r, 0.0);
        let ep = f.jost(rho, &[x]).map_err(e)?.values[0];
        let em = f.jost(-rho, &[x]).map_err(e)?.values[0];
        let expect = if x > a { c(0.0, -2.0) * rho } else { c(0.0, -2.0) * rho / det };
        worst = worst.max((wronskian(ep, em) - expect).norm() / expect.norm());
    }
    Ok(worst)
}

fn wronskians() -> Outcome {
    let free = wronskian_suite(&solver(problem(0.3, Potential::Zero)), 3, 50)?;
    let smooth = wronskian_suite(&solver(problem(0.3, bump())), 4, 50)?;
    check(
        free <= 1e-8 && smooth <= 1e-6,
        format!("50 probes each: q = 0 max {free:.2e} (<= 1e-8), bump max {smooth:.2e} (<= 1e-6)"),
    )
}

const RADII: [f64; 5] = [20.0, 40.0, 80.0, 160.0, 320.0];

fn decay_verdict(rows: &[DecayRow], lo: f64, hi: f64) -> (bool, String, f64, f64) {
    let mut ok = true;
    let (mut rmin, mut rmax) = (f64::INFINITY, 0.0f64);
    let mut worst = String::new();
    for row in rows {
        for r in row.ratios() {
            rmin = rmin.min(r);
            rmax = rmax.max(r);
            if !(lo..=hi).contains(&r) {
                ok = false;
                worst = format!("{} ratio {r:.3}", row.name);
            }
        }
    }
    (ok, worst, rmin, rmax)
}

fn asymptotics_decay() -> Outcome {
    let f = solver(problem(0.0, bump()));
    let radii = RADII;
    let (x_left, x_right) = (0.5, 2.0);
    // x-dependent leading forms on two rays, one per sector.
    let mut rows = Vec::new();
    for angle in [PI / 3.0, 2.0 * PI / 3.0] {
        let all = asymptotic_validators(&f, angle, &radii, x_left, x_right).map_err(|e| e.to_string())?;
        rows.extend(all.into_iter().filter(|r| r.name.starts_with("phi") || r.name.ends_with("J-")));
    }
    // Δ, M and e on J+ where e^{2iρa} stays of order one.
    let line = phase_locked_points(1.0, 1.27, &radii);
    let all = validate_at(&f, &line, x_left, x_right).map_err(|e| e.to_string())?;
    rows.extend(all.into_iter().filter(|r| r.name == "Delta" || r.name == "M" || r.name.ends_with("J+") && r.name.starts_with('e')));
    let (ok, worst, rmin, rmax) = decay_verdict(&rows, 1.5, 2.5);
    check(
        ok,
        format!("{} rows over |rho| in [20, 320]: ratios in [{rmin:.3}, {rmax:.3}] (target 2.0 +- 0.5){}", rows.len(), if ok { String::new() } else { format!("; {worst}") }),
    )
}

fn spectrum_localization() -> Outcome {
    let f = solver(problem(0.3, bump()));
    let opts = SpectrumOptions { k_max: 40, ..Default::default() };
    let s = f.spectrum(&opts).map_err(|e| e.to_string())?;
    let mut msgs = Vec::new();
    let mut ok = true;
    for sign in [1i64, -1] {
        let mut devs = Vec::new();
        for k in 5..=40i64 {
            let e = s.eigenvalues.iter().find(|e| e.k == sign * k && e.seed.is_some());
            match e {
                Some(e) => devs.push((e.rho - e.seed.unwrap()).norm()),
                None => {
                    ok = false;
                    msgs.push(format!("k = {} missing", sign * k));
                }
            }
        }
        if devs.len() == 36 {
            let jitter = devs.windows(2).map(|w| w[1] / w[0]).fold(0.0f64, f64::max);
            let last = devs[35];
            ok &= jitter <= 1.1 && last <= 0.5 / 40.0;
            msgs.push(format!("k = {}5..{}40: max step ratio {jitter:.3} (<= 1.1), |dev| at 40 = {last:.2e} (<= 1.25e-2)", if sign < 0 { "-" } else { "" }, if sign < 0 { "-" } else { "" }));
        }
    }
    let counted: i64 = s.counts.iter().map(|(_, n)| *n).sum();
    let lattice = s.eigenvalues.len() as i64;
    ok &= counted == lattice;
    msgs.push(format!("winding total {counted} = found {lattice}"));
    let mirror_ok = s.real_zeros.iter().all(|z| z.mirror >= 1e3 * z.residual);
    ok &= mirror_ok;
    msgs.push(format!("{} real zeros, mirror test {}", s.real_zeros.len(), if mirror_ok { "ok" } else { "violated" }));
    check(ok, msgs.join("; "))
}

fn colinearity() -> Outcome {
    let f = solver(problem(0.3, bump()));
    let opts = SpectrumOptions { k_max: 5, ..Default::default() };
    let s = f.spectrum(&opts).map_err(|e| e.to_string())?;
    let picks: Vec<_> = s.eigenvalues.iter().filter(|e| e.k >= 1).take(5).collect();
    if picks.len() < 5 {
        return Err(format!("only {} eigenvalues with k >= 1", picks.len()));
    }
    let xs: Vec<f64> = (1..=24).map(|i| 0.1 * i as f64).filter(|x| (x - 1.0f64).abs() > 0.02).collect();
    let mut worst: f64 = 0.0;
    for e in &picks {
        let sp = Point::from_rho(e.rho);
        let jost = f.jost(e.rho, &xs).map_err(|e| e.to_string())?;
        let phi = f.phi(2, &sp, &xs).map_err(|e| e.to_string())?;
        let ratios: Vec<C64> = (0..xs.len()).map(|i| jost.values[i][0] / phi[i][0]).collect();
        for r in &ratios {
            worst = worst.max((r - ratios[0]).norm() / ratios[0].norm());
        }
    }
    check(worst <= 1e-6, format!("k = 1..5 over {} grid points: max relative spread of e/phi {worst:.2e} (<= 1e-6)", xs.len()))
}

fn fixed_point() -> Outcome {
    let model = solver(problem(0.0, bump()));
    let contour = build_contour(1.3, 40.0, 256).map_err(|e| e.to_string())?;
    let zero = vec![c(0.0, 0.0); contour.len()];
    let inv = Inversion::with_mhat(&contour, &model, zero, InverseOptions::default()).map_err(|e| e.to_string())?;
    let xs: Vec<f64> = (0..=25).map(|i| 0.1 * i as f64).collect();
    let nodes = inv.model_nodes(&[0.4, 1.7]).map_err(|e| e.to_string())?;
    let mut exact = true;
    for (k, &x) in [0.4, 1.7].iter().enumerate() {
        let sol = inv.solve_main_equation(x, nodes.at(k)).map_err(|e| e.to_string())?;
        exact &= sol.phi.iter().zip(nodes.at(k).iter()).all(|(p, v)| *p == v[0]);
    }
    let rec = inv.recover_q(&xs, 0.05).map_err(|e| e.to_string())?;
    let err = (0..rec.x.len()).map(|i| (rec.q_hat[i] - model.problem.q.eval(rec.x[i])).norm()).fold(0.0, f64::max);
    check(exact && err <= 1e-8, format!("phi == phi_model bitwise: {exact}; max |q_hat - q_model| = {err:.2e} (<= 1e-8)"))
}

struct RoundTrip {
    h: f64,
    s_max: f64,
    target: ForwardSolver<f64>,
    model: ForwardSolver<f64>,
}

impl RoundTrip {
    fn new() -> Self {
        let target = solver(problem(0.0, bump()));
        let model = solver(problem(0.0, Potential::Zero));
        let opts = SpectrumOptions { k_max: 20, ..Default::default() };
        let st = target.spectrum(&opts).unwrap();
        let sm = model.spectrum(&opts).unwrap();
        let h = choose_h(1.0, &[&st, &sm]);
        let s_max = default_s_max(h, 1.0);
        RoundTrip { h, s_max, target, model }
    }

    fn samples(&self, n: usize) -> WeylSamples<f64> {
        WeylSamples::from_forward(&self.target, build_contour(self.h, self.s_max, n).unwrap()).unwrap()
    }
}

fn rel_l2(rec: &RecoveredPotential<f64>, q: &Potential<f64>) -> f64 {
    let num: f64 = (0..rec.x.len()).map(|i| (rec.q_hat[i] - q.eval(rec.x[i])).norm_sqr()).sum();
    let den: f64 = rec.x.iter().map(|x| q.eval(*x).norm_sqr()).sum();
    (num / den).sqrt()
}

fn operator_inverse(rt: &RoundTrip, samples: &WeylSamples<f64>) -> Outcome {
    let inv = Inversion::new(samples, &rt.model, InverseOptions::default()).map_err(|e| e.to_string())?;
    let n = samples.contour.len();
    let mut rng = StdRng::seed_from_u64(8);
    let tests: Vec<Vec<C64>> = (0..20).map(|_| (0..n).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()).collect();
    let mut worst: f64 = 0.0;
    let mut msgs = Vec::new();
    for x in [0.5, 1.6, 2.2] {
        let d = inv.operator_inverse_defect(&rt.target, x, &tests).map_err(|e| e.to_string())?;
        let m = d.into_iter().fold(0.0, f64::max);
        msgs.push(format!("x = {x}: {m:.2e}"));
        worst = worst.max(m);
    }
    check(worst <= 1e-6, format!("N = {n}, 20 random vectors, max |(A~A - I) z|/|z| {} (<= 1e-6)", msgs.join(", ")))
}

fn grid() -> Vec<f64> {
    (0..=100).map(|i| 0.025 * i as f64).collect()
}

fn round_trip(rt: &RoundTrip, rec1: &RecoveredPotential<f64>, secs1: f64) -> Outcome {
    let t0 = Instant::now();
    let s2 = rt.samples(2056);
    let inv = Inversion::new(&s2, &rt.model, InverseOptions::default()).map_err(|e| e.to_string())?;
    let rec2 = inv.recover_q(&grid(), 0.05).map_err(|e| e.to_string())?;
    let secs = secs1 + t0.elapsed().as_secs_f64();
    let e1 = rel_l2(rec1, &rt.target.problem.q);
    let e2 = rel_l2(&rec2, &rt.target.problem.q);
    check(
        e1 <= 1e-2 && e2 < e1 && secs <= 600.0,
        format!(
            "h = {:.4}, s_max = {:.1}, {} points: rel L2 {e1:.2e} at N = 1028 (<= 1e-2), {e2:.2e} at N = 2056 (smaller), {secs:.1} s (<= 600 s)",
            rt.h,
            rt.s_max,
            rec1.x.len()
        ),
    )
}

fn route_agreement(rec: &RecoveredPotential<f64>) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut max_disc: f64 = 0.0;
    for i in 0..rec.x.len() {
        if let Some(d) = rec.route_discrepancy[i] {
            count += 1;
            max_disc = max_disc.max(d);
            worst = worst.max(d / rec.error_estimate[i]);
        }
    }
    check(
        count > 0 && worst <= 10.0,
        format!("{count} points: max discrepancy {max_disc:.2e}, max discrepancy / estimate {worst:.3} (<= 10)"),
    )
}

fn weyl_reconstruction(rt: &RoundTrip, samples: &WeylSamples<f64>) -> Outcome {
    let inv = Inversion::new(samples, &rt.model, InverseOptions::default()).map_err(|e| e.to_string())?;
    let probes: Vec<C64> = (0..20)
        .map(|i| {
            let re = -8.0 + 16.0 * (i as f64) / 19.0;
            let im = rt.h + 0.5 + 2.1 * ((i * 7) % 20) as f64 / 19.0;
            c(re, im) * c(re, im)
        })
        .collect();
    let reference: Vec<C64> = probes.iter().map(|l| rt.target.weyl(&lift_lambda(*l)).unwrap().m).collect();
    let xs: Vec<f64> = (1..=10).map(|i| 0.25 * i as f64).filter(|x| (x - 1.0f64).abs() > 0.05).collect();
    let out = inv.reconstruct_phi_and_m(&probes, &xs, Some(&reference)).map_err(|e| e.to_string())?;
    let inside = probes.iter().all(|l| samples.contour.contains_left(*l));
    let worst = out.iter().map(|w| w.m_error.unwrap()).fold(0.0, f64::max);
    let phi0 = out.iter().map(|w| w.phi0_residual).fold(0.0, f64::max);
    let agree = out.iter().map(|w| (w.m_reconstructed - w.m_cauchy).norm() / w.m_cauchy.norm()).fold(0.0, f64::max);
    check(
        inside && worst <= 1e-5,
        format!("20 probes left of the contour: max rel |Phi'(0) - M| = {worst:.2e} (<= 1e-5); |Phi(0) - 1| <= {phi0:.1e}; Phi'(0) vs Cauchy form {agree:.1e}"),
    )
}

fn p_matrix_diagnostics() -> Outcome {
    let target = solver(problem(0.0, bump()));
    let model = solver(problem(0.0, Potential::Zero));
    let mut ok = true;
    let mut min_ratio = f64::INFINITY;
    // Left of the support of q − q̃ the pair coincides and P − I is rounding
    // noise, so the decay is measured where the potentials differ.
    for x in [1.5, 1.8, 2.0, 2.4] {
        let mut d11 = Vec::new();
        let mut d12 = Vec::new();
        for r in RADII {
            let sp = Point::from_rho(Complex::from_polar(r, PI / 3.0));
            let p = p_matrix(&target, &model, x, &sp).map_err(|e| e.to_string())?.p;
            d11.push((p[0][0] - 1.0).norm());
            d12.push(p[0][1].norm());
        }
        for d in [&d11, &d12] {
            for w in d.windows(2) {
                min_ratio = min_ratio.min(w[0] / w[1]);
            }
        }
    }
    ok &= min_ratio >= 2.0;
    let mut id_err: f64 = 0.0;
    let mut off_zero = true;
    for x in [0.3, 1.4, 2.0] {
        for rho in [c(12.0, 1.5), c(-30.0, 3.0)] {
            let p = p_matrix(&target, &target, x, &Point::from_rho(rho)).map_err(|e| e.to_string())?.p;
            off_zero &= p[0][1] == c(0.0, 0.0) && p[1][0] == c(0.0, 0.0);
            id_err = id_err.max((p[0][0] - 1.0).norm()).max((p[1][1] - 1.0).norm());
        }
    }
    ok &= off_zero && id_err <= 1e-8;
    check(
        ok,
        format!("min halving ratio of |P11 - 1|, |P12| over |rho| in [20, 320] = {min_ratio:.2} (>= 2); matched pair: off-diagonal exactly 0: {off_zero}, |P_jj - 1| <= {id_err:.1e}"),
    )
}

fn report(lines: &mut Vec<(usize, &'static str, Outcome)>, k: usize, name: &'static str, out: Outcome) {
    let (tag, detail) = match &out {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    // Written past the test harness capture so the lines always show.
    let mut so = std::io::stdout();
    let _ = writeln!(so, "{tag} criterion {k:>2} {name}: {detail}");
    let _ = so.flush();
    lines.push((k, name, out));
}

#[test]
fn acceptance_criteria() {
    let mut lines = Vec::new();
    report(&mut lines, 1, "closed-form sanity", closed_form());
    report(&mut lines, 2, "series oracle", series_oracle());
    report(&mut lines, 3, "wronskian suite", wronskians());
    report(&mut lines, 4, "asymptotics decay", asymptotics_decay());
    report(&mut lines, 5, "spectrum localization", spectrum_localization());
    report(&mut lines, 6, "colinearity at eigenvalues", colinearity());
    report(&mut lines, 7, "main-equation fixed point", fixed_point());

    let t0 = Instant::now();
    let rt = RoundTrip::new();
    let samples = rt.samples(1028);
    let inv = Inversion::new(&samples, &rt.model, InverseOptions::default()).unwrap();
    let decay = check_mhat_decay(&samples.contour, &inv.mhat);
    let rec = inv.recover_q(&grid(), 0.05);
    let secs1 = t0.elapsed().as_secs_f64();
    report(&mut lines, 8, "operator-inverse property", operator_inverse(&rt, &samples));
    match &rec {
        Ok(rec) => {
            report(&mut lines, 9, "round-trip inversion", round_trip(&rt, rec, secs1).map(|d| format!("{d}; M-hat decay order {:.2}", decay.order)));
            report(&mut lines, 10, "route agreement", route_agreement(rec));
        }
        Err(e) => {
            report(&mut lines, 9, "round-trip inversion", Err(format!("inversion failed: {e}")));
            report(&mut lines, 10, "route agreement", Err(format!("inversion failed: {e}")));
        }
    }
    report(&mut lines, 11, "weyl reconstruction identity", weyl_reconstruction(&rt, &samples));
    report(&mut lines, 12, "P-matrix diagnostics", p_matrix_diagnostics());

    let failed: Vec<String> = lines.iter().filter(|l| l.2.is_err()).map(|l| format!("{} ({})", l.0, l.1)).collect();
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
