//! Adaptive quadrature and small 1D optimization helpers shared by the
//! rate-function and diffusion modules.

/// Adaptive Simpson quadrature on a finite interval.
///
/// Recursion splits until the Richardson error estimate meets
/// `abs_tol + rel_tol * |integral|`, with a hard depth cap of 48.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    adaptive(f, a, b, fa, fm, fb, whole, abs_tol, rel_tol, 48)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    abs_tol: f64,
    rel_tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let err = left + right - whole;
    let tol = abs_tol.max(rel_tol * (left + right).abs());
    if depth == 0 || err.abs() <= 15.0 * tol {
        return left + right + err / 15.0;
    }
    adaptive(f, a, m, fa, flm, fm, left, 0.5 * abs_tol, rel_tol, depth - 1)
        + adaptive(f, m, b, fm, frm, fb, right, 0.5 * abs_tol, rel_tol, depth - 1)
}

/// Cumulative integral of `f` at the supplied increasing abscissae.
///
/// Returns `F` with `F[0] = 0` and `F[k] = ∫_{xs[0]}^{xs[k]} f`; each cell is
/// integrated adaptively so the result is accurate on non-smooth integrands.
pub fn cumulative<F: Fn(f64) -> f64>(f: &F, xs: &[f64], abs_tol: f64, rel_tol: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in xs.windows(2) {
        acc += integrate(f, w[0], w[1], abs_tol, rel_tol);
        out.push(acc);
    }
    out
}

/// Golden-section maximization of a unimodal-ish function on `[a, b]`.
///
/// Not guaranteed to find the global maximum of a multimodal function; callers
/// seed it with a grid argmax and use it as a local polish.
pub fn golden_max<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, iters: usize) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    let xm = 0.5 * (lo + hi);
    let fm = f(xm);
    if fm >= f1 && fm >= f2 {
        (xm, fm)
    } else if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Golden-section minimization on `[a, b]`.
pub fn golden_min<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, iters: usize) -> (f64, f64) {
    let (x, v) = golden_max(&|t| -f(t), a, b, iters);
    (x, -v)
}

/// Bisection root of a monotone function with a sign change on `[lo, hi]`.
///
/// Returns the midpoint after `iters` halvings; callers bracket beforehand.
pub fn bisect_root<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let flo = f(lo);
    debug_assert!(flo * f(hi) <= 0.0, "bisect_root: no sign change");
    let rising = flo <= 0.0;
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm <= 0.0) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Geometric grid with `n` points spanning `[lo, hi]`, `lo > 0`.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let ratio = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|k| lo * (ratio * k as f64).exp()).collect()
}

/// Uniform grid with `n` points spanning `[lo, hi]` inclusive.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|k| lo + h * k as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial_exact() {
        // Simpson is exact for cubics.
        let v = integrate(&|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 1e-12, 1e-12);
        assert!((v - (4.0 - 4.0 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        // Gaussian over +-8 sigma integrates to sqrt(2 pi).
        let v = integrate(&|x: f64| (-0.5 * x * x).exp(), -8.0, 8.0, 1e-12, 1e-12);
        assert!((v - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn integrable_singularity() {
        // ∫_0^1 s^{-1/2} ds = 2, endpoint singularity.
        let v = integrate(&|x: f64| x.max(1e-300).powf(-0.5), 1e-14, 1.0, 1e-10, 1e-10);
        assert!((v - 2.0).abs() < 1e-5, "got {v}");
    }

    #[test]
    fn golden_finds_quadratic_max() {
        // argmax of a quadratic resolves to ~sqrt(eps); the value to ~eps
        let (x, fx) = golden_max(&|t: f64| -(t - 1.3) * (t - 1.3) + 2.0, -4.0, 4.0, 80);
        assert!((x - 1.3).abs() < 1e-6);
        assert!((fx - 2.0).abs() < 1e-14);
    }

    #[test]
    fn bisect_monotone() {
        let r = bisect_root(&|x| x * x * x - 2.0, 0.0, 2.0, 100);
        assert!((r - 2f64.powf(1.0 / 3.0)).abs() < 1e-12);
    }
}
