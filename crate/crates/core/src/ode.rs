//! Explicit Dormand–Prince 8(5,3) integrator for small complex linear systems.
//!
//! States are fixed-size arrays laid out as `(value, derivative)` pairs. The
//! driver keeps a running real log-scale so that exponentially growing or
//! decaying solutions never leave the floating point range mid-integration.

use num_complex::Complex;

use crate::error::{Result, SlwError};
use crate::scalar::{czero, mul_exp, Real};

const A: [[f64; 12]; 12] = [
    [0.0; 12],
    [5.260_015_195_876_773E-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.972_505_698_453_79E-2, 5.917_517_095_361_37E-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [2.958_758_547_680_685E-2, 0.0, 8.876_275_643_042_054E-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [
        2.413_651_341_592_667E-1,
        0.0,
        -8.845_494_793_282_861E-1,
        9.248_340_032_617_92E-1,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        3.703_703_703_703_703_5E-2,
        0.0,
        0.0,
        1.708_286_087_294_738_6E-1,
        1.254_676_875_668_224_2E-1,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        3.7109375E-2,
        0.0,
        0.0,
        1.702_522_110_195_440_5E-1,
        6.021_653_898_045_596E-2,
        -1.7578125E-2,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        3.709_200_011_850_479E-2,
        0.0,
        0.0,
        1.703_839_257_122_399_8E-1,
        1.072_620_304_463_732_8E-1,
        -1.531_943_774_862_440_2E-2,
        8.273_789_163_814_023E-3,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        6.241_109_587_160_757E-1,
        0.0,
        0.0,
        -3.360_892_629_446_941_4,
        -8.682_193_468_417_26E-1,
        2.759_209_969_944_671E1,
        2.015_406_755_047_789_4E1,
        -4.348_988_418_106_996E1,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        4.776_625_364_382_643_4E-1,
        0.0,
        0.0,
        -2.488_114_619_971_667_7,
        -5.902_908_268_368_43E-1,
        2.123_005_144_818_119_3E1,
        1.527_923_363_288_242_3E1,
        -3.328_821_096_898_486E1,
        -2.033_120_170_850_862_7E-2,
        0.0,
        0.0,
        0.0,
    ],
    [
        -9.371_424_300_859_873E-1,
        0.0,
        0.0,
        5.186_372_428_844_064,
        1.091_437_348_996_729_5,
        -8.149_787_010_746_927,
        -1.852_006_565_999_696E1,
        2.273_948_709_935_050_5E1,
        2.493_605_552_679_652_3,
        -3.046_764_471_898_219_6,
        0.0,
        0.0,
    ],
    [
        2.273_310_147_516_538,
        0.0,
        0.0,
        -1.053_449_546_673_725E1,
        -2.000_872_058_224_862_5,
        -1.795_893_186_311_88E1,
        2.794_888_452_941_996E1,
        -2.858_998_277_135_023_5,
        -8.872_856_933_530_63,
        1.236_056_717_579_430_3E1,
        6.433_927_460_157_636E-1,
        0.0,
    ],
];

const C: [f64; 12] = [
    0.0,
    5.260_015_195_876_773E-2,
    7.890_022_793_815_16E-2,
    1.183_503_419_072_274E-1,
    2.816_496_580_927_726E-1,
    3.333_333_333_333_333E-1,
    0.25,
    3.076_923_076_923_077E-1,
    6.512_820_512_820_513E-1,
    0.6,
    8.571_428_571_428_571E-1,
    1.0,
];

const B: [f64; 12] = [
    5.429_373_411_656_876_5E-2,
    0.0,
    0.0,
    0.0,
    0.0,
    4.450_312_892_752_409,
    1.891_517_899_314_500_3,
    -5.801_203_960_010_585,
    3.111_643_669_578_199E-1,
    -1.521_609_496_625_161E-1,
    2.013_654_008_040_303_4E-1,
    4.471_061_572_777_259E-2,
];

const ER: [f64; 12] = [
    1.312_004_499_419_488E-2,
    0.0,
    0.0,
    0.0,
    0.0,
    -1.225_156_446_376_204_4,
    -4.957_589_496_572_502E-1,
    1.664_377_182_454_986_4,
    -3.503_288_487_499_736_6E-1,
    3.341_791_187_130_175E-1,
    8.192_320_648_511_571E-2,
    -2.235_530_786_388_629_4E-2,
];

const BHH: [f64; 3] = [2.440_944_881_889_764E-1, 7.338_466_882_816_118E-1, 2.205_882_352_941_176_6E-2];

/// Controls for [`integrate`].
#[derive(Clone, Copy, Debug)]
pub struct OdeOptions<R> {
    pub rtol: R,
    pub atol: R,
    /// Weight applied to odd (derivative) components in the error norm,
    /// typically `1/max(|ρ|, 1)`.
    pub deriv_weight: R,
    /// First trial step magnitude.
    pub h0: R,
    pub max_steps: usize,
}

impl<R: Real> OdeOptions<R> {
    pub fn for_rho(rho_abs: R) -> Self {
        let r = rho_abs.max(R::one());
        OdeOptions {
            rtol: R::lit(1e-10).max(R::epsilon() * R::lit(100.0)),
            atol: R::min_positive_value().sqrt(),
            deriv_weight: R::one() / r,
            h0: R::lit(0.1) / r,
            max_steps: 2_000_000,
        }
    }
}

/// Complex state together with a real log-scale: the represented vector is
/// `y · exp(log_scale)`.
#[derive(Clone, Copy, Debug)]
pub struct Scaled<R, const N: usize> {
    pub y: [Complex<R>; N],
    pub log_scale: R,
}

impl<R: Real, const N: usize> Scaled<R, N> {
    pub fn plain(y: [Complex<R>; N]) -> Self {
        Scaled { y, log_scale: R::zero() }
    }

    pub fn component(&self, i: usize) -> Complex<R> {
        mul_exp(self.y[i], Complex::new(self.log_scale, R::zero()))
    }

    pub fn unscaled(&self) -> [Complex<R>; N] {
        let mut out = [czero(); N];
        for (o, i) in out.iter_mut().zip(0..N) {
            *o = self.component(i);
        }
        out
    }

    fn renormalize(&mut self) {
        let m = self.y.iter().fold(R::zero(), |acc, z| acc.max(z.norm()));
        if m == R::zero() || !m.is_finite() {
            return;
        }
        let big = R::lit(1e64);
        if m > big || m < R::one() / big {
            let inv = R::one() / m;
            for z in self.y.iter_mut() {
                *z *= inv;
            }
            self.log_scale += m.ln();
        }
    }
}

#[inline]
fn axpy<R: Real, const N: usize>(y: &mut [Complex<R>; N], a: R, x: &[Complex<R>; N]) {
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += *xi * a;
    }
}

/// Integrates `y' = f(x, y)` from `x0` through the monotone list `stops`,
/// returning the state at every stop. `breaks` are additional points where
/// steps are clipped (kinks in the coefficients) but nothing is recorded.
pub fn integrate<R, F, const N: usize>(
    f: &F,
    x0: R,
    start: Scaled<R, N>,
    stops: &[R],
    breaks: &[R],
    opts: &OdeOptions<R>,
) -> Result<Vec<Scaled<R, N>>>
where
    R: Real,
    F: Fn(R, &[Complex<R>; N]) -> [Complex<R>; N],
{
    let mut out = Vec::with_capacity(stops.len());
    if stops.is_empty() {
        return Ok(out);
    }
    let dir = if stops[stops.len() - 1] >= x0 { R::one() } else { -R::one() };
    let mut x = x0;
    let mut state = start;
    let mut h = opts.h0.abs().max(R::epsilon());
    let mut k0 = f(x, &state.y);
    let mut steps = 0usize;

    // Interior breakpoints strictly between x0 and the final stop, in travel order.
    let last = stops[stops.len() - 1];
    let mut brk: Vec<R> = breaks
        .iter()
        .copied()
        .filter(|&b| (b - x0) * dir > R::zero() && (last - b) * dir > R::zero())
        .collect();
    brk.sort_by(|a, b| ((*a - *b) * dir).partial_cmp(&R::zero()).unwrap());
    let mut bi = 0usize;

    for &target in stops {
        if (target - x) * dir < R::zero() {
            return Err(SlwError::Ode("stops are not monotone along the integration direction".into()));
        }
        while (target - x) * dir > R::zero() {
            while bi < brk.len() && (brk[bi] - x) * dir <= R::zero() {
                bi += 1;
            }
            let mut goal = target;
            if bi < brk.len() && (brk[bi] - target) * dir < R::zero() {
                goal = brk[bi];
            }
            let remaining = (goal - x).abs();
            let clipped = h >= remaining;
            let hs = if clipped { remaining } else { h };
            let (y_new, k_last, err) = step(f, x, &state.y, &k0, hs * dir, opts);
            steps += 1;
            if steps > opts.max_steps {
                return Err(SlwError::Ode(format!("step budget exhausted near x = {}", x.as_f64())));
            }
            if !err.is_finite() {
                h = hs * R::lit(0.2);
                if h < R::epsilon() * (R::one() + x.abs()) {
                    return Err(SlwError::Ode(format!("non-finite error estimate near x = {}", x.as_f64())));
                }
                continue;
            }
            let fac11 = err.powf(R::lit(0.125));
            let fac = (fac11 / R::lit(0.9)).min(R::lit(3.0)).max(R::lit(1.0 / 6.0));
            let h_new = hs / fac;
            if err <= R::one() {
                x = if clipped { goal } else { x + hs * dir };
                state.y = y_new;
                k0 = k_last;
                let before = state.log_scale;
                state.renormalize();
                if state.log_scale != before {
                    k0 = f(x, &state.y);
                }
                if !clipped || h_new > h {
                    h = h_new;
                }
            } else {
                h = h_new.min(hs);
                if h < R::epsilon() * R::lit(16.0) * (R::one() + x.abs()) {
                    return Err(SlwError::Ode(format!("step size underflow near x = {}", x.as_f64())));
                }
            }
        }
        out.push(state);
    }
    Ok(out)
}

#[allow(clippy::needless_range_loop)]
fn step<R, F, const N: usize>(
    f: &F,
    x: R,
    y: &[Complex<R>; N],
    k0: &[Complex<R>; N],
    h: R,
    opts: &OdeOptions<R>,
) -> ([Complex<R>; N], [Complex<R>; N], R)
where
    R: Real,
    F: Fn(R, &[Complex<R>; N]) -> [Complex<R>; N],
{
    let mut k = [[czero::<R>(); N]; 12];
    k[0] = *k0;
    for s in 1..12 {
        let mut ys = *y;
        for j in 0..s {
            let a = A[s][j];
            if a != 0.0 {
                axpy(&mut ys, R::lit(a) * h, &k[j]);
            }
        }
        k[s] = f(x + R::lit(C[s]) * h, &ys);
    }
    let mut incr = [czero::<R>(); N];
    for s in 0..12 {
        if B[s] != 0.0 {
            axpy(&mut incr, R::lit(B[s]), &k[s]);
        }
    }
    let mut y_new = *y;
    axpy(&mut y_new, h, &incr);
    let k_last = f(x + h, &y_new);

    // Mixed error norm: each (value, derivative) pair is measured against its own size.
    let w = opts.deriv_weight;
    let mut e5 = R::zero();
    let mut e3 = R::zero();
    let pairs = N / 2;
    for p in 0..pairs {
        let (i0, i1) = (2 * p, 2 * p + 1);
        let size = (y[i0].norm().max(y_new[i0].norm())).max(w * y[i1].norm().max(y_new[i1].norm()));
        let sk = opts.atol + opts.rtol * size;
        for (i, wi) in [(i0, R::one()), (i1, w)] {
            let mut er5 = czero::<R>();
            for s in 0..12 {
                if ER[s] != 0.0 {
                    er5 += k[s][i] * R::lit(ER[s]);
                }
            }
            let er3 = incr[i] - k[0][i] * R::lit(BHH[0]) - k[8][i] * R::lit(BHH[1]) - k[11][i] * R::lit(BHH[2]);
            e5 = e5.max(wi * er5.norm() / sk);
            e3 = e3.max(wi * er3.norm() / sk);
        }
    }
    let mut deno = e5 * e5 + R::lit(0.01) * e3 * e3;
    if deno <= R::zero() {
        deno = R::one();
    }
    let err = h.abs() * e5 * e5 / deno.sqrt();
    (y_new, k_last, err)
}
