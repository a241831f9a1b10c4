//! Bracketing root finder: scan for sign changes, then polish each bracket
//! with a Newton step safeguarded by bisection.

/// One root located by [`find_sign_change_roots`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub residual: f64,
    /// Index of the probe interval that bracketed it.
    pub bracket: usize,
}

/// Outcome of a scan: the roots plus the residual extrema seen on the probes.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub roots: Vec<Root>,
    pub probes: usize,
    pub min_residual: f64,
    pub max_residual: f64,
}

/// `n` logarithmically spaced probes covering `[lo, hi]`, endpoints included.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Finds every root of `f` that shows up as a sign change between adjacent
/// probes (or an exact zero on a probe). `f` returns `(value, derivative)`.
pub fn find_sign_change_roots<F>(f: F, probes: &[f64], tol: f64) -> Scan
where
    F: Fn(f64) -> (f64, f64),
{
    let values: Vec<f64> = probes.iter().map(|&x| f(x).0).collect();
    let mut roots = Vec::new();
    for i in 0..probes.len() {
        if values[i] == 0.0 {
            roots.push(Root {
                x: probes[i],
                residual: 0.0,
                bracket: i,
            });
            continue;
        }
        if i + 1 < probes.len() && values[i + 1] != 0.0 && (values[i] < 0.0) != (values[i + 1] < 0.0) {
            let x = newton_bisect(&f, probes[i], probes[i + 1], values[i], tol);
            roots.push(Root {
                x,
                residual: f(x).0,
                bracket: i,
            });
        }
    }
    let finite = values.iter().copied().filter(|v| v.is_finite());
    Scan {
        roots,
        probes: probes.len(),
        min_residual: finite.clone().fold(f64::INFINITY, f64::min),
        max_residual: finite.fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Newton iteration kept inside the bracket `[a, b]`; falls back to
/// bisection whenever the Newton step leaves the bracket or stalls. Stops
/// when `|f| <= tol` or the bracket shrinks to a few ulps.
pub fn newton_bisect<F>(f: &F, a: f64, b: f64, fa: f64, tol: f64) -> f64
where
    F: Fn(f64) -> (f64, f64),
{
    let (mut lo, mut hi) = if fa < 0.0 { (a, b) } else { (b, a) };
    let mut x = 0.5 * (a + b);
    let mut dx_old = (b - a).abs();
    let mut dx = dx_old;
    let (mut fx, mut dfx) = f(x);
    for _ in 0..200 {
        if fx.abs() <= tol {
            return x;
        }
        let newton_ok = dfx != 0.0 && {
            let xn = x - fx / dfx;
            (xn - lo) * (xn - hi) < 0.0 && (2.0 * fx).abs() <= (dx_old * dfx).abs()
        };
        dx_old = dx;
        if newton_ok {
            dx = fx / dfx;
            x -= dx;
        } else {
            dx = 0.5 * (hi - lo);
            x = lo + dx;
        }
        if (hi - lo).abs() <= 4.0 * f64::EPSILON * x.abs() {
            return x;
        }
        (fx, dfx) = f(x);
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
    }
    x
}
