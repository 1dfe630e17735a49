use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use slw_core::contour::{build_contour, default_s_max, WeylSamples};
use slw_core::forward::ForwardSolver;
use slw_core::inverse::{check_mhat_decay, InverseOptions, Inversion, MhatDecay, RecoveredPotential};
use slw_core::io::{self, Issue, ProblemFile, RecoveredFile, SpectrumFile, WeylFile};
use slw_core::spectrum::{choose_h, SpectrumEstimate, SpectrumOptions};
use slw_core::{Potential, Problem, SlwError, C64};

#[derive(Parser)]
#[command(name = "slw", version, about = "Forward and inverse spectral solver for Sturm-Liouville operators with an interior Bessel singularity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Print stage timings to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the Weyl function of a problem on the inversion contour.
    Forward {
        #[arg(long)]
        problem: PathBuf,
        /// Contour height: `auto` or a positive number.
        #[arg(long, default_value = "auto")]
        h: String,
        #[arg(long)]
        s_max: Option<f64>,
        #[arg(long, default_value_t = 1028)]
        nodes: usize,
        /// Model problem to embed in the output (also used by `--h auto`).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Eigenvalue index range searched when picking `h`.
        #[arg(long, default_value_t = 20)]
        kmax: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover the potential from Weyl samples and a model problem.
    Invert {
        #[arg(long)]
        weyl: PathBuf,
        /// Model problem; defaults to the one embedded in the Weyl file.
        #[arg(long)]
        model: Option<PathBuf>,
        /// `start:stop:n`
        #[arg(long)]
        grid: String,
        /// Radius of the excluded neighbourhood of `a`.
        #[arg(long, default_value_t = 0.05)]
        exclude: f64,
        #[arg(long)]
        out: PathBuf,
        /// Directory for CSV plot files.
        #[arg(long)]
        emit_csv: Option<PathBuf>,
    },
    /// Forward, invert and compare against the known potential.
    Roundtrip {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "auto")]
        h: String,
        #[arg(long)]
        s_max: Option<f64>,
        #[arg(long, default_value_t = 1028)]
        nodes: usize,
        #[arg(long, default_value_t = 20)]
        kmax: usize,
        /// Defaults to `0:T:101`.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 0.05)]
        exclude: f64,
        /// Skip the re-forward check on the recovered potential.
        #[arg(long)]
        no_resample: bool,
        #[arg(long)]
        emit_csv: Option<PathBuf>,
    },
    /// Eigenvalues and real zeros of the characteristic function.
    Spectrum {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, default_value_t = 40)]
        kmax: usize,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Debug, Serialize)]
struct Warning {
    code: &'static str,
    message: String,
}

/// A run that stops with a non-zero exit status.
#[derive(Debug)]
struct Failure {
    code: u8,
    stage: &'static str,
    message: String,
}

impl Failure {
    fn validation(file: &Path, issues: &[Issue]) -> Self {
        let unsupported = issues.iter().any(|i| i.pointer == "/A/1");
        let mut message = format!("{}:", file.display());
        for i in issues {
            message.push_str(&format!(" [{}] {};", if i.pointer.is_empty() { "/" } else { &i.pointer }, i.message));
        }
        Failure { code: if unsupported { 3 } else { 1 }, stage: "validate", message }
    }

    fn input(stage: &'static str, message: impl Into<String>) -> Self {
        Failure { code: 1, stage, message: message.into() }
    }

    fn numeric(stage: &'static str, e: SlwError) -> Self {
        let code = match e {
            SlwError::SConditionFailed { .. } => 2,
            SlwError::Unsupported(_) => 3,
            SlwError::Invalid(_) | SlwError::BadTruncation { .. } | SlwError::NearIntegerNu(_) => 1,
            _ => 4,
        };
        Failure { code, stage, message: e.to_string() }
    }
}

type Run<T> = Result<T, Failure>;

struct Ctx {
    verbose: bool,
    warnings: Vec<Warning>,
    timings: Vec<(&'static str, f64)>,
}

impl Ctx {
    fn warn(&mut self, code: &'static str, message: impl Into<String>) {
        let message = message.into();
        eprintln!("warning[{code}]: {message}");
        self.warnings.push(Warning { code, message });
    }

    fn timed<T>(&mut self, stage: &'static str, f: impl FnOnce(&mut Self) -> Run<T>) -> Run<T> {
        let t0 = Instant::now();
        let out = f(self);
        let dt = t0.elapsed().as_secs_f64();
        if self.verbose {
            eprintln!("{stage}: {dt:.3} s");
        }
        self.timings.push((stage, dt));
        out
    }
}

fn read_text(path: &Path) -> Run<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::input("read", format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Run<()> {
    std::fs::write(path, text).map_err(|e| Failure { code: 4, stage: "write", message: format!("{}: {e}", path.display()) })
}

fn load_problem(path: &Path) -> Run<(ProblemFile, Problem)> {
    let file: ProblemFile = io::from_json(&path.display().to_string(), &read_text(path)?)
        .map_err(|e| Failure::input("parse", e.to_string()))?;
    let problem = file.to_problem().map_err(|issues| Failure::validation(path, &issues))?;
    Ok((file, problem))
}

fn solver(problem: Problem, stage: &'static str) -> Run<ForwardSolver<f64>> {
    ForwardSolver::new(problem).map_err(|e| Failure::numeric(stage, e))
}

fn spectrum_of(ctx: &mut Ctx, f: &ForwardSolver<f64>, kmax: usize, what: &str) -> Run<SpectrumEstimate<f64>> {
    let opts = SpectrumOptions { k_max: kmax, ..Default::default() };
    if f.problem.regime().supported {
        f.spectrum(&opts).map_err(|e| Failure::numeric("spectrum", e))
    } else {
        ctx.warn("regime_generic_search", format!("{what} is outside the supported regime; picking h from a plain zero search"));
        f.spectrum_generic(&opts).map_err(|e| Failure::numeric("spectrum", e))
    }
}

/// Resolves `--h`, running the zero search on every problem given.
fn resolve_h(ctx: &mut Ctx, arg: &str, solvers: &[(&ForwardSolver<f64>, &str)], kmax: usize) -> Run<f64> {
    let a = solvers[0].0.problem.a;
    let explicit = if arg == "auto" {
        None
    } else {
        match arg.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Some(v),
            _ => return Err(Failure::input("validate", format!("--h must be `auto` or a positive number, got `{arg}`"))),
        }
    };
    let spectra = ctx.timed("spectrum", |ctx| {
        solvers.iter().map(|(f, what)| spectrum_of(ctx, f, kmax, what)).collect::<Run<Vec<_>>>()
    })?;
    let refs: Vec<&SpectrumEstimate<f64>> = spectra.iter().collect();
    let auto = choose_h(a, &refs);
    let Some(h) = explicit else { return Ok(auto) };
    let top = spectra.iter().flat_map(|s| s.eigenvalues.iter().map(|e| e.rho.im)).fold(f64::NEG_INFINITY, f64::max);
    if h <= top {
        ctx.warn("h_below_spectrum", format!("h = {h} is not above the highest eigenvalue Im rho = {top}; automatic choice would be {auto}"));
    }
    Ok(h)
}

fn sample_weyl(ctx: &mut Ctx, f: &ForwardSolver<f64>, h: f64, s_max: Option<f64>, nodes: usize) -> Run<WeylSamples<f64>> {
    let s_max = s_max.unwrap_or_else(|| default_s_max(h, f.problem.a));
    let contour = build_contour(h, s_max, nodes).map_err(|e| Failure::numeric("contour", e))?;
    ctx.timed("forward", |_| WeylSamples::from_forward(f, contour).map_err(|e| Failure::numeric("forward", e)))
}

fn parse_grid(text: &str, a: f64, exclude: f64) -> Run<Vec<f64>> {
    let bad = || Failure::input("validate", format!("--grid must be start:stop:n with 0 <= start <= stop and n >= 1, got `{text}`"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let stop: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !(start >= 0.0 && stop >= start && stop.is_finite() && n >= 1) {
        return Err(bad());
    }
    if !(exclude > 0.0 && exclude < a) {
        return Err(Failure::input("validate", format!("--exclude must lie in (0, a) = (0, {a}), got {exclude}")));
    }
    if n == 1 {
        return Ok(vec![start]);
    }
    Ok((0..n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect())
}

/// Decay check on `M̂` and the inverse solve.
fn recover(
    ctx: &mut Ctx,
    samples: &WeylSamples<f64>,
    model: &ForwardSolver<f64>,
    grid: &[f64],
    exclude: f64,
) -> Run<(RecoveredPotential<f64>, MhatDecay)> {
    let inv = ctx.timed("model_samples", |_| {
        Inversion::new(samples, model, InverseOptions::default()).map_err(|e| Failure::numeric("model_samples", e))
    })?;
    let decay = check_mhat_decay(inv.contour, &inv.mhat);
    if decay.marginal {
        ctx.warn(
            "mhat_decay_marginal",
            format!("|M - M_model| ~ |s|^-p on the contour with p = {:.2} < 1; the model does not match the singular part of the data", decay.order),
        );
        return Err(Failure { code: 4, stage: "check_mhat_decay", message: format!("fitted decay order {:.3} < 1", decay.order) });
    }
    if !decay.second_order {
        ctx.warn("mhat_decay_slow", format!("|M - M_model| ~ |s|^-p with p = {:.2}, below second order", decay.order));
    }
    let rec = ctx.timed("invert", |_| inv.recover_q(grid, exclude).map_err(|e| Failure::numeric("invert", e)))?;
    if rec.class_w == Some(false) {
        ctx.warn("class_w", "recovered epsilon fails the integrability check");
    }
    Ok((rec, decay))
}

fn emit_csv(dir: &Path, rec: &RecoveredPotential<f64>) -> Run<()> {
    std::fs::create_dir_all(dir).map_err(|e| Failure { code: 4, stage: "write", message: format!("{}: {e}", dir.display()) })?;
    write_text(&dir.join("recovered.csv"), &io::recovered_csv(rec))
}

#[allow(clippy::too_many_arguments)]
fn forward_cmd(ctx: &mut Ctx, problem: &Path, h: &str, s_max: Option<f64>, nodes: usize, model: Option<&Path>, kmax: usize, out: &Path) -> Run<()> {
    let (_, target) = load_problem(problem)?;
    let model = model.map(load_problem).transpose()?;
    if let Some((_, m)) = &model {
        let issues = io::cross_check(&target, m);
        if !issues.is_empty() {
            return Err(Failure::validation(problem, &issues));
        }
    }
    let f = solver(target, "forward")?;
    let mf = model.as_ref().map(|(_, m)| solver(m.clone(), "forward")).transpose()?;
    let mut list = vec![(&f, "target")];
    if let Some(m) = &mf {
        list.push((m, "model"));
    }
    let h = resolve_h(ctx, h, &list, kmax)?;
    let samples = sample_weyl(ctx, &f, h, s_max, nodes)?;
    write_text(out, &io::to_json(&WeylFile::from_samples(&samples, model.map(|(file, _)| file))))
}

fn invert_cmd(ctx: &mut Ctx, weyl: &Path, model: Option<&Path>, grid: &str, exclude: f64, out: &Path, csv: Option<&Path>) -> Run<()> {
    let file: WeylFile = io::from_json(&weyl.display().to_string(), &read_text(weyl)?).map_err(|e| Failure::input("parse", e.to_string()))?;
    let samples = file.to_samples().map_err(|issues| Failure::validation(weyl, &issues))?;
    let model = match (model, &file.model) {
        (Some(p), embedded) => {
            let (mfile, m) = load_problem(p)?;
            if let Some(e) = embedded {
                if *e != mfile {
                    ctx.warn("model_override", "--model differs from the model embedded in the Weyl file; using --model");
                }
            }
            m
        }
        (None, Some(e)) => e.to_problem().map_err(|issues| {
            let issues: Vec<Issue> = issues.into_iter().map(|i| Issue { pointer: format!("/model{}", i.pointer), ..i }).collect();
            Failure::validation(weyl, &issues)
        })?,
        (None, None) => return Err(Failure::input("validate", "no model: pass --model or embed one in the Weyl file")),
    };
    let grid = parse_grid(grid, model.a, exclude)?;
    let mf = solver(model, "model_samples")?;
    let (rec, decay) = recover(ctx, &samples, &mf, &grid, exclude)?;
    write_text(out, &io::to_json(&RecoveredFile::new(&rec, decay.order)))?;
    if let Some(dir) = csv {
        emit_csv(dir, &rec)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ErrorRow {
    x: f64,
    q_true: [f64; 2],
    q_hat: [f64; 2],
    abs_error: f64,
    error_estimate: f64,
    route_discrepancy: Option<f64>,
}

#[derive(Serialize)]
struct Metrics {
    h: f64,
    s_max: f64,
    nodes: usize,
    max_abs_error: f64,
    rel_l2_error: f64,
    s_condition_min: f64,
    mhat_decay_order: Option<f64>,
    max_route_discrepancy: Option<f64>,
    gmres_iterations: usize,
    /// Relative change of `M` at a subset of nodes when the forward solver is
    /// rerun on the recovered potential.
    resample_rel_error: Option<f64>,
}

#[derive(Serialize)]
struct Stage {
    stage: &'static str,
    seconds: f64,
}

#[derive(Serialize)]
struct RoundtripReport {
    metrics: Metrics,
    errors: Vec<ErrorRow>,
    timings: Vec<Stage>,
    warnings: Vec<Warning>,
}

/// Relative `L²` norm over the grid with the trapezoid rule.
fn rel_l2(x: &[f64], err: &[f64], refv: &[f64]) -> f64 {
    let trap = |v: &[f64]| -> f64 { x.windows(2).zip(v.windows(2)).map(|(xs, vs)| 0.5 * (xs[1] - xs[0]) * (vs[0] * vs[0] + vs[1] * vs[1])).sum() };
    let den = trap(refv);
    let num = trap(err);
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

fn resample(f: &ForwardSolver<f64>, samples: &WeylSamples<f64>, rec: &RecoveredPotential<f64>) -> Run<f64> {
    let q = Potential::grid(rec.x.clone(), rec.q_hat.clone()).map_err(|e| Failure::numeric("resample", e))?;
    let g = ForwardSolver::new(f.problem.with_potential(q)).map_err(|e| Failure::numeric("resample", e))?;
    let stride = (samples.m.len() / 64).max(1);
    let mut worst: f64 = 0.0;
    for n in (0..samples.m.len()).step_by(stride) {
        let m = g.weyl(&samples.contour.point(n)).map_err(|e| Failure::numeric("resample", e))?.m;
        worst = worst.max((m - samples.m[n]).norm() / samples.m[n].norm());
    }
    Ok(worst)
}

#[allow(clippy::too_many_arguments)]
fn roundtrip_cmd(
    ctx: &mut Ctx,
    problem: &Path,
    model: &Path,
    report: &Path,
    h: &str,
    s_max: Option<f64>,
    nodes: usize,
    kmax: usize,
    grid: Option<&str>,
    exclude: f64,
    no_resample: bool,
    csv: Option<&Path>,
) -> Run<()> {
    let (_, target) = load_problem(problem)?;
    let (_, mp) = load_problem(model)?;
    let issues = io::cross_check(&target, &mp);
    if !issues.is_empty() {
        return Err(Failure::validation(model, &issues));
    }
    let default_grid = format!("0:{}:101", target.t_bound);
    let grid = parse_grid(grid.unwrap_or(&default_grid), target.a, exclude)?;
    let f = solver(target, "forward")?;
    let mf = solver(mp, "model_samples")?;
    let h = resolve_h(ctx, h, &[(&f, "target"), (&mf, "model")], kmax)?;
    let samples = sample_weyl(ctx, &f, h, s_max, nodes)?;
    let (rec, decay) = recover(ctx, &samples, &mf, &grid, exclude)?;
    let truth: Vec<C64> = rec.x.iter().map(|&x| f.problem.q.eval(x)).collect();
    let errors: Vec<ErrorRow> = (0..rec.x.len())
        .map(|i| ErrorRow {
            x: rec.x[i],
            q_true: io::pair(truth[i]),
            q_hat: io::pair(rec.q_hat[i]),
            abs_error: (rec.q_hat[i] - truth[i]).norm(),
            error_estimate: rec.error_estimate[i],
            route_discrepancy: rec.route_discrepancy[i],
        })
        .collect();
    let abs: Vec<f64> = errors.iter().map(|r| r.abs_error).collect();
    let mags: Vec<f64> = truth.iter().map(|z| z.norm()).collect();
    let resample_rel_error = if no_resample || rec.x.len() < 2 {
        None
    } else {
        Some(ctx.timed("resample", |_| resample(&f, &samples, &rec))?)
    };
    let metrics = Metrics {
        h,
        s_max: samples.contour.s_max,
        nodes: samples.contour.len(),
        max_abs_error: abs.iter().cloned().fold(0.0, f64::max),
        rel_l2_error: rel_l2(&rec.x, &abs, &mags),
        s_condition_min: rec.s_condition_min,
        mhat_decay_order: decay.order.is_finite().then_some(decay.order),
        max_route_discrepancy: rec.route_discrepancy.iter().flatten().cloned().reduce(f64::max),
        gmres_iterations: rec.iterations,
        resample_rel_error,
    };
    if let Some(dir) = csv {
        emit_csv(dir, &rec)?;
    }
    let out = RoundtripReport {
        metrics,
        errors,
        timings: ctx.timings.iter().map(|(stage, seconds)| Stage { stage, seconds: *seconds }).collect(),
        warnings: ctx.warnings.clone(),
    };
    write_text(report, &io::to_json(&out))
}

fn spectrum_cmd(ctx: &mut Ctx, problem: &Path, kmax: usize, out: Option<&Path>) -> Run<()> {
    let (_, p) = load_problem(problem)?;
    let f = solver(p, "spectrum")?;
    let opts = SpectrumOptions { k_max: kmax, ..Default::default() };
    let est = ctx.timed("spectrum", |_| f.spectrum(&opts).map_err(|e| Failure::numeric("spectrum", e)))?;
    let text = io::to_json(&SpectrumFile::new(&est));
    match out {
        Some(path) => write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn configure_threads() -> Run<()> {
    let Ok(v) = std::env::var("SLW_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::input("validate", format!("SLW_THREADS must be a positive integer, got `{v}`")))?;
    // A second initialization only happens in tests that reuse the process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn run(cli: Cli) -> Run<()> {
    configure_threads()?;
    let mut ctx = Ctx { verbose: cli.verbose, warnings: Vec::new(), timings: Vec::new() };
    match cli.command {
        Command::Forward { problem, h, s_max, nodes, model, kmax, out } => {
            forward_cmd(&mut ctx, &problem, &h, s_max, nodes, model.as_deref(), kmax, &out)
        }
        Command::Invert { weyl, model, grid, exclude, out, emit_csv } => {
            invert_cmd(&mut ctx, &weyl, model.as_deref(), &grid, exclude, &out, emit_csv.as_deref())
        }
        Command::Roundtrip { problem, model, report, h, s_max, nodes, kmax, grid, exclude, no_resample, emit_csv } => roundtrip_cmd(
            &mut ctx,
            &problem,
            &model,
            &report,
            &h,
            s_max,
            nodes,
            kmax,
            grid.as_deref(),
            exclude,
            no_resample,
            emit_csv.as_deref(),
        ),
        Command::Spectrum { problem, kmax, out } => spectrum_cmd(&mut ctx, &problem, kmax, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error ({}): {}", f.stage, f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0:1:3", 1.0, 0.05).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("0.5:0.5:1", 1.0, 0.05).unwrap(), vec![0.5]);
        assert!(parse_grid("1:0:3", 1.0, 0.05).is_err());
        assert!(parse_grid("-1:0:3", 1.0, 0.05).is_err());
        assert!(parse_grid("0:1", 1.0, 0.05).is_err());
        assert!(parse_grid("0:1:3", 1.0, 1.0).is_err());
    }

    #[test]
    fn rel_l2_of_constant() {
        let x = [0.0, 1.0, 2.0];
        assert!((rel_l2(&x, &[0.1; 3], &[1.0; 3]) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn error_codes() {
        assert_eq!(Failure::numeric("x", SlwError::SConditionFailed { x: 1.0, rcond: 0.0 }).code, 2);
        assert_eq!(Failure::numeric("x", SlwError::Unsupported("u".into())).code, 3);
        assert_eq!(Failure::numeric("x", SlwError::Solver("s".into())).code, 4);
        let unsupported = [Issue { pointer: "/A/1".into(), message: "a12".into() }];
        assert_eq!(Failure::validation(Path::new("p"), &unsupported).code, 3);
    }
}
