//! Convex rate functions and their transform calculus: semi-Legendre
//! conjugate, generalized inverse, the curve-length transform
//! `2 ∫ sqrt(alpha)`, and the composition that turns a log-Sobolev profile
//! beta into a transport rate alpha (and its curvature converse).
//!
//! Closed forms cover the power and Gaussian tags; everything else runs on
//! geometric grids with quadrature. Infinite values propagate through sup/inf
//! arithmetic as `f64::INFINITY` (absorbing in max, ignored in sup-additions
//! that cannot win).

use serde::{Deserialize, Serialize};

use crate::quad;
use crate::{Error, Result};

/// Functional form of a rate function on `[0, r_max]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum RateForm {
    /// `coeff * r^exponent`, `exponent >= 1`.
    Power { coeff: f64, exponent: f64 },
    /// `r^2 / (4 c^2)`, the Gaussian deviation rate with constant `c`.
    Gaussian { c: f64 },
    /// `(1 + r^2/kappa)^{p/2} - 1`, the Orlicz-route deviation rate.
    OrliczPower { p: f64, kappa: f64 },
    /// Left-continuous non-decreasing convex interpolant of grid samples.
    Grid { rs: Vec<f64>, vals: Vec<f64> },
    /// Piecewise power function: linear interpolation of (ln r, ln alpha)
    /// samples, extended below the first sample by the exact power head
    /// `head_coeff * r^head_exp`. Exact for power-law rates at any scale,
    /// which plain grids cannot deliver near zero.
    LogLogGrid {
        ln_rs: Vec<f64>,
        ln_vals: Vec<f64>,
        head_coeff: f64,
        head_exp: f64,
    },
}

/// A left-continuous, non-decreasing, convex function with `alpha(0) = 0`,
/// extended by `+infinity` beyond `r_max`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateFunction {
    pub form: RateForm,
    pub r_max: f64,
}

impl RateFunction {
    pub fn power(coeff: f64, exponent: f64) -> Result<Self> {
        if !(coeff >= 0.0) || !(exponent >= 1.0) {
            return Err(Error::InvalidRateFunction(format!(
                "power tag needs coeff >= 0 and exponent >= 1, got {coeff}, {exponent}"
            )));
        }
        Ok(Self {
            form: RateForm::Power { coeff, exponent },
            r_max: f64::INFINITY,
        })
    }

    /// Gaussian rate `r^2 / (4 c^2)`.
    pub fn gaussian(c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidRateFunction(format!("gaussian c = {c}")));
        }
        Ok(Self {
            form: RateForm::Gaussian { c },
            r_max: f64::INFINITY,
        })
    }

    /// `alpha_p(r) = (1 + r^2/kappa)^{p/2} - 1`.
    pub fn orlicz_power(p: f64, kappa: f64) -> Result<Self> {
        if !(p >= 1.0) || !(kappa > 0.0) {
            return Err(Error::InvalidRateFunction(format!(
                "orlicz power needs p >= 1, kappa > 0; got {p}, {kappa}"
            )));
        }
        Ok(Self {
            form: RateForm::OrliczPower { p, kappa },
            r_max: f64::INFINITY,
        })
    }

    /// The zero rate on `[0, r_max]` (and +infinity beyond).
    pub fn zero_on(r_max: f64) -> Self {
        Self {
            form: RateForm::Power {
                coeff: 0.0,
                exponent: 1.0,
            },
            r_max,
        }
    }

    /// Grid-backed rate; validates monotonicity, convexity (second
    /// differences), and `alpha(0) = 0`.
    pub fn from_grid(rs: Vec<f64>, vals: Vec<f64>) -> Result<Self> {
        if rs.len() != vals.len() || rs.len() < 2 {
            return Err(Error::InvalidRateFunction("grid needs >= 2 samples".into()));
        }
        if rs[0] != 0.0 || vals[0] != 0.0 {
            return Err(Error::InvalidRateFunction(
                "grid must start at (0, 0)".into(),
            ));
        }
        for w in rs.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidRateFunction("abscissae not increasing".into()));
            }
        }
        let mut prev_slope = f64::NEG_INFINITY;
        for k in 1..rs.len() {
            if vals[k] + 1e-12 < vals[k - 1] {
                return Err(Error::InvalidRateFunction(format!(
                    "not non-decreasing at sample {k}"
                )));
            }
            let slope = (vals[k] - vals[k - 1]) / (rs[k] - rs[k - 1]);
            if slope + 1e-9 < prev_slope {
                return Err(Error::InvalidRateFunction(format!(
                    "not convex at sample {k}"
                )));
            }
            prev_slope = slope.max(prev_slope);
        }
        let r_max = *rs.last().unwrap();
        Ok(Self {
            form: RateForm::Grid { rs, vals },
            r_max,
        })
    }

    /// Evaluate `alpha(r)`; `+infinity` outside the domain.
    pub fn eval(&self, r: f64) -> f64 {
        if r < 0.0 {
            return f64::INFINITY;
        }
        if r > self.r_max * (1.0 + 1e-12) {
            return f64::INFINITY;
        }
        match &self.form {
            RateForm::Power { coeff, exponent } => {
                if *coeff == 0.0 {
                    0.0
                } else {
                    coeff * r.powf(*exponent)
                }
            }
            RateForm::Gaussian { c } => r * r / (4.0 * c * c),
            RateForm::OrliczPower { p, kappa } => (1.0 + r * r / kappa).powf(p / 2.0) - 1.0,
            RateForm::Grid { rs, vals } => {
                // linear interpolation; clamp top to the last sample
                if r >= *rs.last().unwrap() {
                    return *vals.last().unwrap();
                }
                let k = rs.partition_point(|&x| x <= r).max(1);
                let (r0, r1) = (rs[k - 1], rs[k]);
                let (v0, v1) = (vals[k - 1], vals[k]);
                v0 + (v1 - v0) * (r - r0) / (r1 - r0)
            }
            RateForm::LogLogGrid {
                ln_rs,
                ln_vals,
                head_coeff,
                head_exp,
            } => {
                if r == 0.0 {
                    return 0.0;
                }
                let lr = r.ln();
                if lr <= ln_rs[0] {
                    return head_coeff * r.powf(*head_exp);
                }
                if lr >= *ln_rs.last().unwrap() {
                    return ln_vals.last().unwrap().exp();
                }
                let k = ln_rs.partition_point(|&x| x <= lr).max(1);
                let (a0, a1) = (ln_rs[k - 1], ln_rs[k]);
                let (v0, v1) = (ln_vals[k - 1], ln_vals[k]);
                (v0 + (v1 - v0) * (lr - a0) / (a1 - a0)).exp()
            }
        }
    }

    /// Largest finite abscissa worth scanning in sup/inf searches.
    fn scan_max(&self) -> f64 {
        if self.r_max.is_finite() {
            self.r_max
        } else {
            match &self.form {
                RateForm::Grid { rs, .. } => *rs.last().unwrap(),
                RateForm::LogLogGrid { ln_rs, .. } => ln_rs.last().unwrap().exp(),
                _ => 1e6,
            }
        }
    }

    /// Semi-Legendre conjugate `alpha*(lambda) = sup_{r >= 0} (lambda r - alpha(r))`.
    ///
    /// Closed forms for the power and Gaussian tags; grids take the sup over
    /// samples with one golden-section refinement.
    pub fn conjugate(&self, lambda: f64) -> f64 {
        if lambda < 0.0 {
            return 0.0;
        }
        match &self.form {
            RateForm::Gaussian { c } if self.r_max.is_infinite() => lambda * lambda * c * c,
            RateForm::Power { coeff, exponent } if self.r_max.is_infinite() => {
                let (k, e) = (*coeff, *exponent);
                if k == 0.0 {
                    // support function of [0, r_max]; r_max infinite here
                    return if lambda == 0.0 { 0.0 } else { f64::INFINITY };
                }
                if (e - 1.0).abs() < 1e-14 {
                    // linear alpha: conjugate is the indicator of [0, k]
                    return if lambda <= k { 0.0 } else { f64::INFINITY };
                }
                // maximizer r* = (lambda / (k e))^{1/(e-1)}
                let r_star = (lambda / (k * e)).powf(1.0 / (e - 1.0));
                (lambda * r_star - k * r_star.powf(e)).max(0.0)
            }
            _ => {
                let hi = self.scan_max();
                if hi == 0.0 {
                    return 0.0;
                }
                let f = |r: f64| {
                    let a = self.eval(r);
                    if a.is_infinite() {
                        f64::NEG_INFINITY
                    } else {
                        lambda * r - a
                    }
                };
                let n = 512;
                let mut best = (0.0f64, 0.0f64); // (r, value) — r = 0 gives 0
                for k in 0..=n {
                    let r = hi * k as f64 / n as f64;
                    let v = f(r);
                    if v > best.1 {
                        best = (r, v);
                    }
                }
                let lo = (best.0 - hi / n as f64).max(0.0);
                let up = (best.0 + hi / n as f64).min(hi);
                let (_, v) = quad::golden_max(&f, lo, up, 100);
                v.max(best.1).max(0.0)
            }
        }
    }

    /// Generalized inverse `alpha^{-1}(t) = inf { r >= 0 : alpha(r) > t }`,
    /// right-continuous and non-decreasing; `+infinity` when the superlevel
    /// set is empty (e.g. the zero rate).
    pub fn generalized_inverse(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match &self.form {
            RateForm::Power { coeff, exponent } => {
                if *coeff == 0.0 {
                    if self.r_max.is_finite() {
                        // alpha jumps to +inf at r_max, so the inf is r_max
                        self.r_max
                    } else {
                        f64::INFINITY
                    }
                } else {
                    let r = (t / coeff).powf(1.0 / exponent).min(self.r_max);
                    r
                }
            }
            RateForm::Gaussian { c } => 2.0 * c * t.sqrt(),
            RateForm::OrliczPower { p, kappa } => {
                ((1.0 + t).powf(2.0 / p) - 1.0).max(0.0).sqrt() * kappa.sqrt()
            }
            RateForm::Grid { rs, vals } => {
                if t >= *vals.last().unwrap() {
                    // alpha is +infinity beyond r_max, so the inf is r_max
                    return self.r_max;
                }
                // first grid segment where the interpolant exceeds t
                let k = vals.partition_point(|&v| v <= t);
                let (r0, r1) = (rs[k - 1], rs[k]);
                let (v0, v1) = (vals[k - 1], vals[k]);
                if v1 <= v0 {
                    r1
                } else {
                    r0 + (r1 - r0) * (t - v0) / (v1 - v0)
                }
            }
            RateForm::LogLogGrid {
                ln_rs,
                ln_vals,
                head_coeff,
                head_exp,
            } => {
                if t >= ln_vals.last().unwrap().exp() {
                    return self.r_max;
                }
                if t <= 0.0 {
                    return 0.0;
                }
                let lt = t.ln();
                if lt <= ln_vals[0] {
                    // exact head inversion: t = c r^e
                    return (t / head_coeff).powf(1.0 / head_exp);
                }
                let k = ln_vals.partition_point(|&v| v <= lt);
                let (a0, a1) = (ln_rs[k - 1], ln_rs[k]);
                let (v0, v1) = (ln_vals[k - 1], ln_vals[k]);
                if v1 <= v0 {
                    a1.exp()
                } else {
                    (a0 + (a1 - a0) * (lt - v0) / (v1 - v0)).exp()
                }
            }
        }
    }

    /// `alpha~(r) = 2 ∫_0^r sqrt(alpha(s)) ds`: the rate a transport-Fisher
    /// inequality passes down to the entropy side.
    pub fn tilde(&self) -> Result<RateFunction> {
        match &self.form {
            RateForm::Gaussian { c } => Ok(RateFunction {
                // 2 ∫ s/(2c) = r^2 / (2c)
                form: RateForm::Power {
                    coeff: 1.0 / (2.0 * c),
                    exponent: 2.0,
                },
                r_max: self.r_max,
            }),
            RateForm::Power { coeff, exponent } => {
                let e2 = exponent / 2.0 + 1.0;
                Ok(RateFunction {
                    form: RateForm::Power {
                        coeff: 2.0 * coeff.sqrt() / e2,
                        exponent: e2,
                    },
                    r_max: self.r_max,
                })
            }
            _ => {
                let hi = self.scan_max();
                let rs = grid_with_zero(hi);
                let f = |s: f64| self.eval(s).max(0.0).sqrt();
                let cum = quad::cumulative(&f, &rs, 1e-12, 1e-10);
                let vals: Vec<f64> = cum.iter().map(|x| 2.0 * x).collect();
                RateFunction::from_grid(rs, vals)
            }
        }
    }
}

/// A non-decreasing grid function with `f(0) = 0` (no convexity assumed);
/// the natural container for log-Sobolev profiles `beta` and the
/// intermediate `gamma` of the profile composition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotoneGrid {
    pub rs: Vec<f64>,
    pub vals: Vec<f64>,
}

impl MonotoneGrid {
    pub fn eval(&self, r: f64) -> f64 {
        let rs = &self.rs;
        let vals = &self.vals;
        if r <= rs[0] {
            return vals[0];
        }
        if r >= *rs.last().unwrap() {
            // extrapolate with the last slope
            let k = rs.len() - 1;
            let slope = (vals[k] - vals[k - 1]) / (rs[k] - rs[k - 1]);
            return vals[k] + slope * (r - rs[k]);
        }
        let k = rs.partition_point(|&x| x <= r).max(1);
        let (r0, r1) = (rs[k - 1], rs[k]);
        let (v0, v1) = (vals[k - 1], vals[k]);
        v0 + (v1 - v0) * (r - r0) / (r1 - r0)
    }

    /// Inverse at `t` by monotone bisection over the grid hull.
    pub fn inverse(&self, t: f64) -> f64 {
        if t <= self.vals[0] {
            return self.rs[0];
        }
        let mut hi = *self.rs.last().unwrap();
        while self.eval(hi) < t {
            hi *= 2.0;
            if hi > 1e300 {
                return f64::INFINITY;
            }
        }
        quad::bisect_root(&|r| self.eval(r) - t, self.rs[0], hi, 100)
    }
}

/// `gamma(r) = (1/2) ∫_0^r ds / sqrt(beta(s))` for an increasing profile
/// `beta` with `beta(0) = 0`.
///
/// The integrand is singular at 0; the leading power is fitted from two
/// small-argument samples and integrated in closed form, which is exact for
/// power profiles and errors out when the fit says the integral diverges.
pub fn gamma_from_beta<B: Fn(f64) -> f64>(beta: B, r_max: f64, n_grid: usize) -> Result<MonotoneGrid> {
    if !(r_max > 0.0) {
        return Err(Error::InvalidParameter(format!("r_max = {r_max}")));
    }
    let s0 = r_max * 1e-10;
    let (b_lo, b_hi) = (beta(s0 / 4.0), beta(s0));
    if !(b_lo > 0.0 && b_hi > 0.0) {
        return Err(Error::GammaDivergent(
            "beta not strictly positive near 0".into(),
        ));
    }
    // local exponent: beta(s) ~ C s^delta near 0
    let delta = ((b_hi / b_lo).ln() / 4f64.ln()).max(0.0);
    if delta >= 2.0 - 1e-9 {
        return Err(Error::GammaDivergent(format!(
            "local exponent {delta:.3} >= 2 makes 1/sqrt(beta) non-integrable"
        )));
    }
    // head: ∫_0^{s0} s^{-delta/2} sqrt(C) ... with beta(s0) pinned
    let head = {
        let c = b_hi / s0.powf(delta);
        0.5 * s0.powf(1.0 - delta / 2.0) / (c.sqrt() * (1.0 - delta / 2.0))
    };
    let mut rs = vec![0.0, s0];
    rs.extend(quad::geometric_grid(s0 * 4.0, r_max, n_grid.max(16)));
    let f = |s: f64| 0.5 / beta(s).sqrt();
    let mut vals = vec![0.0, head];
    let mut acc = head;
    for w in rs.windows(2).skip(1) {
        acc += quad::integrate(&f, w[0], w[1], 1e-14, 1e-10);
        vals.push(acc);
    }
    Ok(MonotoneGrid { rs, vals })
}

/// Compose a log-Sobolev profile into a transport rate:
/// `alpha(s) = beta(gamma^{-1}(s))` with `gamma(r) = (1/2)∫_0^r beta^{-1/2}`.
///
/// The result is a piecewise-power rate on `s ∈ [0, gamma(r_max)]`, sampled
/// at the gamma-images of a geometric r-grid and interpolated in log-log
/// coordinates with the exact small-argument power head. For a power profile
/// the composition is itself a power, and this representation reproduces it
/// to quadrature accuracy at every scale.
pub fn alpha_from_beta<B: Fn(f64) -> f64>(
    beta: B,
    r_max: f64,
    n_grid: usize,
) -> Result<RateFunction> {
    let gamma = gamma_from_beta(&beta, r_max, n_grid)?;
    let mut ln_rs = Vec::with_capacity(gamma.rs.len());
    let mut ln_vals = Vec::with_capacity(gamma.rs.len());
    for (r, g) in gamma.rs.iter().zip(&gamma.vals).skip(1) {
        let b = beta(*r);
        if *g > 0.0 && b > 0.0 {
            let lg = g.ln();
            if ln_rs.last().map_or(true, |&last| lg > last + 1e-14) {
                ln_rs.push(lg);
                ln_vals.push(b.ln());
            }
        }
    }
    if ln_rs.len() < 2 {
        return Err(Error::InvalidRateFunction(
            "profile composition produced no usable samples".into(),
        ));
    }
    // Exact head from the first segment's log-log slope: alpha ~ c s^e as
    // s -> 0, with e = 2 delta/(2 - delta) for a local power beta ~ s^delta.
    let head_exp = (ln_vals[1] - ln_vals[0]) / (ln_rs[1] - ln_rs[0]);
    if head_exp < 1.0 - 1e-9 {
        return Err(Error::InvalidRateFunction(format!(
            "composed rate has sublinear head exponent {head_exp:.4}; not convex"
        )));
    }
    let head_coeff = (ln_vals[0] - head_exp * ln_rs[0]).exp();
    let s_max = ln_rs.last().unwrap().exp();
    let out = RateFunction {
        form: RateForm::LogLogGrid {
            ln_rs,
            ln_vals,
            head_coeff,
            head_exp,
        },
        r_max: s_max,
    };
    // Convexity spot-check (the exact composition is convex for the profiles
    // this library accepts; quadrature can only dent it at rounding scale).
    let probe = quad::geometric_grid(s_max * 1e-6, s_max, 64);
    for w in probe.windows(3) {
        let (a, b, c) = (out.eval(w[0]), out.eval(w[1]), out.eval(w[2]));
        let left = (b - a) / (w[1] - w[0]);
        let right = (c - b) / (w[2] - w[1]);
        if right + 1e-7 * right.abs().max(1.0) < left {
            return Err(Error::InvalidRateFunction(
                "composed rate failed the convexity spot-check".into(),
            ));
        }
    }
    Ok(out)
}

/// Curvature converse: from a transport rate `alpha` back to a profile
/// `beta(r) = inf { s > 0 : 2 sqrt(2 s) alpha^{-1}(s) + K (alpha^{-1}(s))^2 >= r }`.
pub fn beta_from_alpha_curvature(
    alpha: &RateFunction,
    curvature_k: f64,
    rs: &[f64],
) -> Result<MonotoneGrid> {
    if curvature_k < 0.0 {
        return Err(Error::InvalidParameter(format!("K = {curvature_k} < 0")));
    }
    let reach = |s: f64| {
        let ai = alpha.generalized_inverse(s);
        if ai.is_infinite() {
            f64::INFINITY
        } else {
            2.0 * (2.0 * s).sqrt() * ai + curvature_k * ai * ai
        }
    };
    if reach(1.0).is_infinite() && alpha.generalized_inverse(1.0).is_infinite() {
        return Err(Error::InvalidRateFunction(
            "alpha^{-1} is identically infinite".into(),
        ));
    }
    let mut vals = Vec::with_capacity(rs.len());
    for &r in rs {
        if r <= 0.0 {
            vals.push(0.0);
            continue;
        }
        // bracket then monotone bisection in s
        let mut hi = 1.0;
        let mut iters = 0;
        while reach(hi) < r {
            hi *= 2.0;
            iters += 1;
            if iters > 400 {
                return Err(Error::InvalidRateFunction(
                    "reach never exceeds r; beta undefined".into(),
                ));
            }
        }
        let s = quad::bisect_root(&|s: f64| reach(s) - r, 0.0, hi, 120);
        vals.push(s);
    }
    Ok(MonotoneGrid {
        rs: rs.to_vec(),
        vals,
    })
}

fn grid_with_zero(hi: f64) -> Vec<f64> {
    let mut rs = vec![0.0];
    rs.extend(quad::geometric_grid(hi * 1e-6, hi, 511));
    rs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_conjugate_closed_form() {
        let a = RateFunction::gaussian(1.0).unwrap();
        for lam in [0.0, 0.3, 1.0, 4.0] {
            assert!((a.conjugate(lam) - lam * lam).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rate_conjugate_is_support_function() {
        let a = RateFunction::zero_on(3.0);
        for lam in [0.0, 0.5, 2.0] {
            // grid-free path: r_max finite forces the scan path
            let v = a.conjugate(lam);
            assert!((v - 3.0 * lam).abs() < 1e-6, "lam {lam}: {v}");
        }
    }

    #[test]
    fn conjugate_matches_brute_force_on_grid() {
        // random convex grid function; biconjugate returns it within 1e-6
        let rs: Vec<f64> = (0..=40).map(|k| k as f64 * 0.1).collect();
        let vals: Vec<f64> = rs.iter().map(|r| 0.7 * r * r + 0.3 * r.powi(3)).collect();
        let a = RateFunction::from_grid(rs.clone(), vals.clone()).unwrap();
        // conjugate by dense brute force
        for lam in [0.2, 1.0, 2.5] {
            let mut brute = 0.0f64;
            let n = 400_000;
            for k in 0..=n {
                let r = 4.0 * k as f64 / n as f64;
                brute = brute.max(lam * r - a.eval(r));
            }
            let v = a.conjugate(lam);
            assert!((v - brute).abs() < 1e-6, "lam {lam}: {v} vs {brute}");
        }
        // biconjugation at interior points
        let lams: Vec<f64> = (0..=200).map(|k| k as f64 * 0.1).collect();
        let conj: Vec<f64> = lams.iter().map(|&l| a.conjugate(l)).collect();
        let star = RateFunction::from_grid(lams.clone(), conj).unwrap();
        for r in [0.5, 1.5, 3.0] {
            let mut bi = 0.0f64;
            for (l, c) in lams.iter().zip(star.form_vals()) {
                bi = bi.max(l * r - c);
            }
            assert!((bi - a.eval(r)).abs() < 1e-5, "r {r}: {bi} vs {}", a.eval(r));
        }
    }

    impl RateFunction {
        fn form_vals(&self) -> Vec<f64> {
            match &self.form {
                RateForm::Grid { vals, .. } => vals.clone(),
                _ => panic!("grid only"),
            }
        }
    }

    #[test]
    fn generalized_inverse_basics() {
        let a = RateFunction::power(1.0, 2.0).unwrap(); // r^2
        for t in [0.0, 0.25, 4.0] {
            assert!((a.generalized_inverse(t) - t.sqrt()).abs() < 1e-12);
        }
        // zero rate on [0, inf): empty superlevel set
        let z = RateFunction::power(0.0, 1.0).unwrap();
        assert!(z.generalized_inverse(1.0).is_infinite());
        // grid: matches bisection oracle within grid step
        let rs: Vec<f64> = (0..=50).map(|k| k as f64 * 0.1).collect();
        let vals: Vec<f64> = rs.iter().map(|r| r * r).collect();
        let g = RateFunction::from_grid(rs, vals).unwrap();
        for t in [0.3, 1.7, 9.0] {
            let inv = g.generalized_inverse(t);
            let oracle = quad::bisect_root(&|r| g.eval(r) - t, 0.0, 5.0, 80);
            assert!((inv - oracle).abs() < 0.1 + 1e-9);
        }
    }

    #[test]
    fn tilde_closed_forms() {
        // gaussian: alpha~ = r^2 / (2c)
        let a = RateFunction::gaussian(2.0).unwrap();
        let t = a.tilde().unwrap();
        for r in [0.5, 1.0, 3.0] {
            assert!((t.eval(r) - r * r / 4.0).abs() < 1e-12);
        }
        // r^4 -> 2 r^3 / 3
        let a = RateFunction::power(1.0, 4.0).unwrap();
        let t = a.tilde().unwrap();
        for r in [0.5, 2.0] {
            assert!((t.eval(r) - 2.0 * r.powi(3) / 3.0).abs() < 1e-12);
        }
        // zero rate stays zero
        let z = RateFunction::power(0.0, 1.0).unwrap();
        assert_eq!(z.tilde().unwrap().eval(5.0), 0.0);
    }

    #[test]
    fn alpha_from_beta_power_closed_form() {
        // beta = r^delta / C composes to
        // (2-delta)^{2 delta/(2-delta)} / C^{2/(2-delta)} * s^{2 delta/(2-delta)}
        for (delta, c) in [(1.5, 2.0), (1.0, 1.0), (1.9, 0.5)] {
            let alpha = alpha_from_beta(|r: f64| r.powf(delta) / c, 50.0, 600).unwrap();
            let expo = 2.0 * delta / (2.0 - delta);
            let coeff = (2.0 - delta).powf(expo) / c.powf(2.0 / (2.0 - delta));
            for s in [0.01, 0.1, 1.0, 5.0] {
                let got = alpha.eval(s);
                let want = coeff * s.powf(expo);
                assert!(
                    ((got - want) / want).abs() < 1e-6,
                    "delta {delta} C {c} s {s}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn alpha_from_beta_lsi_case() {
        // beta(r) = r (delta = 1, C = 1): alpha(s) = s^2 with coefficient
        // (2-1)^2 / 1 = 1... times the closed form: alpha(s) = s^2.
        let alpha = alpha_from_beta(|r| r, 20.0, 400).unwrap();
        for s in [0.05, 0.5, 2.0] {
            assert!(((alpha.eval(s) - s * s) / (s * s)).abs() < 1e-6);
        }
    }

    #[test]
    fn alpha_from_beta_scaling() {
        // replacing beta by c.beta rescales alpha per the closed form
        let c = 3.0;
        let a1 = alpha_from_beta(|r: f64| r.powf(1.5), 20.0, 400).unwrap();
        let a2 = alpha_from_beta(|r: f64| c * r.powf(1.5), 20.0, 400).unwrap();
        // beta -> c beta is C -> C/c in beta = r^d / C: coeff scales by c^{2/(2-d)}
        let factor = c.powf(2.0 / (2.0 - 1.5));
        for s in [0.1, 1.0] {
            let r = a2.eval(s) / a1.eval(s);
            assert!(((r - factor) / factor).abs() < 1e-6, "{r} vs {factor}");
        }
    }

    #[test]
    fn gamma_divergent_profile_errors() {
        assert!(matches!(
            alpha_from_beta(|r: f64| r.powf(2.5), 10.0, 100),
            Err(Error::GammaDivergent(_))
        ));
    }

    #[test]
    fn beta_from_alpha_identity_case() {
        // K = 0, alpha = identity: 2 sqrt(2 s) s >= r -> beta(r) = (r^2/8)^{1/3}
        let alpha = RateFunction::power(1.0, 1.0).unwrap();
        let rs: Vec<f64> = (0..=20).map(|k| k as f64 * 0.25).collect();
        let beta = beta_from_alpha_curvature(&alpha, 0.0, &rs).unwrap();
        for (r, v) in rs.iter().zip(&beta.vals) {
            let want = (r * r / 8.0).powf(1.0 / 3.0);
            assert!((v - want).abs() < 1e-7 * (1.0 + want), "r {r}: {v} vs {want}");
        }
        assert_eq!(beta.vals[0], 0.0);
    }

    #[test]
    fn beta_from_alpha_monotone_in_curvature() {
        let alpha = RateFunction::gaussian(1.0).unwrap();
        let rs: Vec<f64> = (1..=10).map(|k| k as f64 * 0.5).collect();
        let b0 = beta_from_alpha_curvature(&alpha, 0.0, &rs).unwrap();
        let b2 = beta_from_alpha_curvature(&alpha, 2.0, &rs).unwrap();
        for (x, y) in b0.vals.iter().zip(&b2.vals) {
            assert!(y <= &(x + 1e-12), "larger K must not increase beta");
        }
    }

    #[test]
    fn alpha_p_values() {
        let a2 = RateFunction::orlicz_power(2.0, 3.0).unwrap();
        for r in [0.0, 0.7, 2.0] {
            assert!((a2.eval(r) - r * r / 3.0).abs() < 1e-14);
        }
        let a1 = RateFunction::orlicz_power(1.0, 1.0).unwrap();
        assert!((a1.eval(3f64.sqrt()) - 1.0).abs() < 1e-12);
        assert_eq!(a1.eval(0.0), 0.0);
    }

    #[test]
    fn fenchel_young_on_grids() {
        let a = RateFunction::gaussian(0.7).unwrap();
        for r in [0.2, 1.0, 2.5] {
            for lam in [0.1, 0.9, 3.0] {
                assert!(lam * r <= a.eval(r) + a.conjugate(lam) + 1e-8);
            }
        }
    }

    #[test]
    fn tilde_conjugate_matches_mgf_route() {
        // conjugate of h(lambda) = ∫_0^lambda alpha^{-1}(t^2/4) dt equals
        // alpha~ by convex duality, for Gaussian and power alpha.
        for alpha in [
            RateFunction::gaussian(1.0).unwrap(),
            RateFunction::power(1.0, 2.0).unwrap(),
        ] {
            let h = |lam: f64| {
                quad::integrate(
                    &|t: f64| alpha.generalized_inverse(t * t / 4.0),
                    0.0,
                    lam,
                    1e-12,
                    1e-10,
                )
            };
            let tilde = alpha.tilde().unwrap();
            for r in [0.3, 1.0, 2.0] {
                // h*(r) by dense sup over lambda
                let mut best = 0.0f64;
                for k in 0..=4000 {
                    let lam = 20.0 * k as f64 / 4000.0;
                    best = best.max(lam * r - h(lam));
                }
                let want = tilde.eval(r);
                assert!(
                    (best - want).abs() < 2e-4 * (1.0 + want),
                    "r {r}: {best} vs {want}"
                );
            }
        }
    }
}
