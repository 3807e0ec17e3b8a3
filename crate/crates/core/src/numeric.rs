//! Small numerical helpers shared across modules.

/// Sum in a fixed pairwise tree order.
///
/// The result depends only on the input order, never on scheduling, so
/// repeated runs are bit-identical.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise sum of `f(i)` for `i in 0..n` without allocating the terms up front.
pub fn pairwise_sum_by(n: usize, f: &mut impl FnMut(usize) -> f64) -> f64 {
    fn rec(lo: usize, hi: usize, f: &mut impl FnMut(usize) -> f64) -> f64 {
        if hi - lo <= 32 {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += f(i);
            }
            return acc;
        }
        let mid = lo + (hi - lo) / 2;
        rec(lo, mid, f) + rec(mid, hi, f)
    }
    rec(0, n, f)
}

/// `|t|^(p-2) t`, the scalar (p-1)-power with sign.
#[inline]
pub fn signed_pow(t: f64, p: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else if p == 2.0 {
        t
    } else if p == 3.0 {
        t.abs() * t
    } else {
        t.abs().powf(p - 2.0) * t
    }
}

/// `|t|^e`, with fast paths for the common integer exponents.
#[inline]
pub fn abs_pow(t: f64, e: f64) -> f64 {
    let a = t.abs();
    if e == 1.0 {
        a
    } else if e == 2.0 {
        a * a
    } else if e == 0.0 {
        1.0
    } else if a == 0.0 {
        0.0
    } else {
        a.powf(e)
    }
}

/// Euclidean norm of a 2-vector (1D data keeps the second slot at zero).
#[inline]
pub fn norm2(z: [f64; 2]) -> f64 {
    (z[0] * z[0] + z[1] * z[1]).sqrt()
}

#[inline]
pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    norm2([a[0] - b[0], a[1] - b[1]])
}

/// Surface measure of the unit sphere in dimension `n` (n = 1: two points).
pub fn unit_sphere_area(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        _ => unreachable!("dimension {n} not supported"),
    }
}

/// Lebesgue measure of the unit ball in dimension `n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => std::f64::consts::PI,
        _ => unreachable!("dimension {n} not supported"),
    }
}

/// Least-squares line fit of `log10(y)` against `log10(x)`.
///
/// Returns `(slope, intercept, rms_residual)` with the residual in log10 units.
/// Points with non-positive coordinates are skipped; `None` when fewer than two remain.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.log10(), y.log10()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    Some((slope, intercept, (rss / n).sqrt()))
}
