//! JSON file formats. Complex numbers are `[re, im]`; floats are written
//! with 17 significant digits so files round-trip exactly and identical runs
//! give identical bytes.

use std::io::Write;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::contour::{build_contour, Contour, WeylSamples};
use crate::error::SlwError;
use crate::inverse::RecoveredPotential;
use crate::problem::{Potential, SingularProblem, TransitionMatrix};
use crate::spectrum::SpectrumEstimate;

type C64 = Complex<f64>;

pub fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

pub fn unpair(p: [f64; 2]) -> C64 {
    Complex::new(p[0], p[1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub a: f64,
    pub nu: [f64; 2],
    #[serde(rename = "A")]
    pub amat: [[f64; 2]; 4],
    #[serde(rename = "T")]
    pub t: f64,
    pub q: PotentialFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialFile {
    Zero,
    /// Compact bump `amplitude·exp(1 − 1/(1 − u²))`, `u = (x − center)/width`.
    GaussianBump { center: f64, width: f64, amplitude_re: f64, amplitude_im: f64 },
    Grid { x: Vec<f64>, re: Vec<f64>, im: Vec<f64> },
}

/// One validation failure, located by a JSON pointer into the input file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Issue {
    pub pointer: String,
    pub message: String,
}

impl Issue {
    fn new(pointer: &str, message: impl Into<String>) -> Self {
        Issue { pointer: pointer.into(), message: message.into() }
    }
}

/// Validation failures of one file.
#[derive(Clone, Debug, PartialEq)]
pub struct Invalid {
    pub file: String,
    pub issues: Vec<Issue>,
}

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:", self.file)?;
        for i in &self.issues {
            write!(f, " [{}] {};", if i.pointer.is_empty() { "/" } else { &i.pointer }, i.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for Invalid {}

fn finite(v: f64) -> bool {
    v.is_finite()
}

impl ProblemFile {
    pub fn from_problem(p: &SingularProblem<f64>) -> Result<Self, SlwError> {
        let q = match &p.q {
            Potential::Zero => PotentialFile::Zero,
            Potential::Bump { center, half_width, amplitude } => PotentialFile::GaussianBump {
                center: *center,
                width: *half_width,
                amplitude_re: amplitude.re,
                amplitude_im: amplitude.im,
            },
            Potential::Grid { x, q } => PotentialFile::Grid {
                x: x.clone(),
                re: q.iter().map(|v| v.re).collect(),
                im: q.iter().map(|v| v.im).collect(),
            },
            Potential::InversePower { .. } => {
                return Err(SlwError::Invalid("the inverse-power test potential has no file form".into()))
            }
        };
        let m = &p.amat;
        Ok(ProblemFile {
            a: p.a,
            nu: pair(p.nu),
            amat: [pair(m.a11), pair(m.a12), pair(m.a21), pair(m.a22)],
            t: p.t_bound,
            q,
        })
    }

    /// Builds the problem, collecting every violation.
    pub fn to_problem(&self) -> Result<SingularProblem<f64>, Vec<Issue>> {
        let mut issues = Vec::new();
        if !(finite(self.a) && self.a > 0.0) {
            issues.push(Issue::new("/a", "singular point a must be positive and finite"));
        }
        let nu = unpair(self.nu);
        if !(finite(nu.re) && finite(nu.im)) || nu.re <= 0.0 {
            issues.push(Issue::new("/nu", "Re nu must be positive and finite"));
        } else if nu.im == 0.0 && (nu.re - nu.re.round()).abs() < 1e-12 {
            issues.push(Issue::new("/nu", format!("integer order nu = {} is excluded", nu.re)));
        }
        for (k, z) in self.amat.iter().enumerate() {
            if !(finite(z[0]) && finite(z[1])) {
                issues.push(Issue::new(&format!("/A/{k}"), "matching matrix entry is not finite"));
            }
        }
        if self.amat[1] != [0.0, 0.0] {
            issues.push(Issue::new("/A/1", "a12 != 0 is an unsupported case; only a12 = 0 matching matrices are handled"));
        }
        let amat = TransitionMatrix::new(unpair(self.amat[0]), unpair(self.amat[1]), unpair(self.amat[2]), unpair(self.amat[3]));
        if amat.det().norm() == 0.0 {
            issues.push(Issue::new("/A", "matching matrix is singular"));
        }
        if !(finite(self.t) && self.t > self.a) {
            issues.push(Issue::new("/T", "T must be finite and exceed a"));
        }
        let q = match &self.q {
            PotentialFile::Zero => Potential::Zero,
            PotentialFile::GaussianBump { center, width, amplitude_re, amplitude_im } => {
                if !(finite(*width) && *width > 0.0) {
                    issues.push(Issue::new("/q/width", "bump width must be positive"));
                }
                if !finite(*center) {
                    issues.push(Issue::new("/q/center", "bump center must be finite"));
                }
                if !(finite(*amplitude_re) && finite(*amplitude_im)) {
                    issues.push(Issue::new("/q/amplitude_re", "bump amplitude must be finite"));
                }
                Potential::bump(*center, *width, Complex::new(*amplitude_re, *amplitude_im))
            }
            PotentialFile::Grid { x, re, im } => {
                if re.len() != x.len() {
                    issues.push(Issue::new("/q/re", format!("{} values for {} abscissae", re.len(), x.len())));
                }
                if im.len() != x.len() {
                    issues.push(Issue::new("/q/im", format!("{} values for {} abscissae", im.len(), x.len())));
                }
                let q: Vec<C64> = re.iter().zip(im.iter()).map(|(r, i)| Complex::new(*r, *i)).collect();
                match Potential::grid(x.clone(), q) {
                    Ok(p) => p,
                    Err(e) => {
                        if re.len() == x.len() && im.len() == x.len() {
                            issues.push(Issue::new("/q/x", e.to_string()));
                        }
                        Potential::Zero
                    }
                }
            }
        };
        if !issues.is_empty() {
            return Err(issues);
        }
        SingularProblem::new(self.a, nu, amat, self.t, q).map_err(|e| {
            let ptr = match e {
                SlwError::NearIntegerNu(_) => "/nu",
                _ => "",
            };
            vec![Issue::new(ptr, e.to_string())]
        })
    }
}

/// Checks the model shares `(a, ν, A)` with the target.
pub fn cross_check(target: &SingularProblem<f64>, model: &SingularProblem<f64>) -> Vec<Issue> {
    if target.same_singular_data(model) {
        Vec::new()
    } else {
        vec![Issue::new("/model", "model does not share (a, nu, A) with the target")]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContourFile {
    pub h: f64,
    pub s_max: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeylFile {
    pub contour: ContourFile,
    pub nodes_lambda: Vec<[f64; 2]>,
    pub weights: Vec<[f64; 2]>,
    #[serde(rename = "M")]
    pub m: Vec<[f64; 2]>,
    pub model: Option<ProblemFile>,
}

impl WeylFile {
    pub fn from_samples(s: &WeylSamples<f64>, model: Option<ProblemFile>) -> Self {
        let c = &s.contour;
        WeylFile {
            contour: ContourFile { h: c.h, s_max: c.s_max, n: c.len() },
            nodes_lambda: c.lambda.iter().map(|z| pair(*z)).collect(),
            weights: c.weights.iter().map(|z| pair(*z)).collect(),
            m: s.m.iter().map(|z| pair(*z)).collect(),
            model,
        }
    }

    /// Rebuilds the contour from its parameters and checks the stored nodes
    /// and weights against it.
    pub fn to_samples(&self) -> Result<WeylSamples<f64>, Vec<Issue>> {
        let mut issues = Vec::new();
        let n = self.contour.n;
        for (name, len) in [("/nodes_lambda", self.nodes_lambda.len()), ("/weights", self.weights.len()), ("/M", self.m.len())] {
            if len != n {
                issues.push(Issue::new(name, format!("{len} entries but N = {n}")));
            }
        }
        if !issues.is_empty() {
            return Err(issues);
        }
        let contour: Contour<f64> = match build_contour(self.contour.h, self.contour.s_max, n) {
            Ok(c) => c,
            Err(e) => return Err(vec![Issue::new("/contour", e.to_string())]),
        };
        let close = |a: C64, b: C64| (a - b).norm() <= 1e-12 * (1.0 + b.norm());
        if let Some(k) = (0..n).find(|&k| !close(unpair(self.nodes_lambda[k]), contour.lambda[k])) {
            issues.push(Issue::new(&format!("/nodes_lambda/{k}"), "node does not match the contour parameters"));
        }
        if let Some(k) = (0..n).find(|&k| !close(unpair(self.weights[k]), contour.weights[k])) {
            issues.push(Issue::new(&format!("/weights/{k}"), "weight does not match the contour parameters"));
        }
        if let Some(k) = self.m.iter().position(|z| !(z[0].is_finite() && z[1].is_finite())) {
            issues.push(Issue::new(&format!("/M/{k}"), "Weyl value is not finite"));
        }
        if !issues.is_empty() {
            return Err(issues);
        }
        Ok(WeylSamples { contour, m: self.m.iter().map(|p| unpair(*p)).collect() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveredFile {
    pub x: Vec<f64>,
    pub q_hat: Vec<[f64; 2]>,
    pub epsilon0: Vec<[f64; 2]>,
    /// `null` where the cross-check stencil did not fit.
    pub route_discrepancy: Vec<Option<f64>>,
    pub s_condition_min: f64,
    /// `null` when `M̂` vanishes identically.
    pub mhat_decay_order: Option<f64>,
}

impl RecoveredFile {
    pub fn new(rec: &RecoveredPotential<f64>, decay_order: f64) -> Self {
        RecoveredFile {
            x: rec.x.clone(),
            q_hat: rec.q_hat.iter().map(|z| pair(*z)).collect(),
            epsilon0: rec.epsilon0.iter().map(|z| pair(*z)).collect(),
            route_discrepancy: rec.route_discrepancy.clone(),
            s_condition_min: rec.s_condition_min,
            mhat_decay_order: if decay_order.is_finite() { Some(decay_order) } else { None },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueEntry {
    pub k: i64,
    pub rho: [f64; 2],
    pub lambda: [f64; 2],
    pub beta: [f64; 2],
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealZeroEntry {
    pub rho: f64,
    pub residual: f64,
    pub mirror: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFile {
    pub theta_plus: [f64; 2],
    pub theta_minus: [f64; 2],
    pub eigenvalues: Vec<EigenvalueEntry>,
    pub real_zeros: Vec<RealZeroEntry>,
}

impl SpectrumFile {
    pub fn new(s: &SpectrumEstimate<f64>) -> Self {
        SpectrumFile {
            theta_plus: pair(s.theta_plus),
            theta_minus: pair(s.theta_minus),
            eigenvalues: s
                .eigenvalues
                .iter()
                .map(|e| EigenvalueEntry {
                    k: e.k,
                    rho: pair(e.rho),
                    lambda: pair(e.lambda),
                    beta: pair(e.beta),
                    residual: e.residual,
                })
                .collect(),
            real_zeros: s.real_zeros.iter().map(|z| RealZeroEntry { rho: z.rho, residual: z.residual, mirror: z.mirror }).collect(),
        }
    }
}

/// Compact JSON with every float printed as `{:.16e}`; non-finite floats
/// become `null`.
struct Sig17;

impl serde_json::ser::Formatter for Sig17 {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        write!(writer, "{:.16e}", value as f64)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17);
    value.serialize(&mut ser).expect("in-memory serialization");
    buf.push(b'\n');
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// Parses `text`, reporting syntax and schema errors as an [`Invalid`].
pub fn from_json<T: for<'de> Deserialize<'de>>(file: &str, text: &str) -> Result<T, Invalid> {
    serde_json::from_str(text).map_err(|e| Invalid {
        file: file.into(),
        issues: vec![Issue::new("", format!("line {} column {}: {e}", e.line(), e.column()))],
    })
}

/// CSV rows `x, Re q̂, Im q̂, Re ε₀, Im ε₀`.
pub fn recovered_csv(rec: &RecoveredPotential<f64>) -> String {
    let mut out = String::from("x,re_q_hat,im_q_hat,re_epsilon0,im_epsilon0\n");
    for i in 0..rec.x.len() {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            rec.x[i], rec.q_hat[i].re, rec.q_hat[i].im, rec.epsilon0[i].re, rec.epsilon0[i].im
        ));
    }
    out
}
