//! Gauss–Legendre rules on `[-1, 1]` and composite helpers.

use crate::scalar::Real;

/// Nodes and weights of the `n`-point Gauss–Legendre rule, nodes ascending.
pub fn gauss_legendre<R: Real>(n: usize) -> (Vec<R>, Vec<R>) {
    assert!(n >= 1);
    let mut x = vec![0.0f64; n];
    let mut w = vec![0.0f64; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        dp = if d != 0.0 { d } else { dp };
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x.into_iter().map(R::lit).collect(), w.into_iter().map(R::lit).collect())
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Composite rule over the breakpoints `edges` (ascending), `n` nodes per panel.
pub fn composite<R: Real>(edges: &[R], n: usize) -> (Vec<R>, Vec<R>) {
    let (gx, gw) = gauss_legendre::<R>(n);
    let mut xs = Vec::with_capacity(n * edges.len());
    let mut ws = Vec::with_capacity(n * edges.len());
    let half = R::lit(0.5);
    for pair in edges.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let mid = (lo + hi) * half;
        let rad = (hi - lo) * half;
        for (t, wt) in gx.iter().zip(gw.iter()) {
            xs.push(mid + rad * *t);
            ws.push(rad * *wt);
        }
    }
    (xs, ws)
}

/// Geometrically graded edges from `a + lo` to `a + hi` (offsets, `0 < lo < hi`),
/// each geometric cell split into `sub` uniform pieces.
pub fn graded_edges<R: Real>(lo: R, hi: R, sub: usize) -> Vec<R> {
    let mut cells = vec![lo];
    let mut t = lo;
    while t * R::lit(2.0) < hi {
        t *= R::lit(2.0);
        cells.push(t);
    }
    cells.push(hi);
    let mut out = vec![cells[0]];
    for pair in cells.windows(2) {
        for k in 1..=sub {
            out.push(pair[0] + (pair[1] - pair[0]) * R::nat(k) / R::nat(sub));
        }
    }
    out
}
