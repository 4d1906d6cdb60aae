//! Dense and tridiagonal symmetric eigenproblems plus linear solves.
//!
//! Dense paths delegate to nalgebra. Birth-death generators symmetrize to
//! tridiagonal matrices, where Sturm-sequence bisection gives single
//! eigenvalues in O(n) per bisection step and inverse iteration recovers the
//! eigenvector; that keeps fine discretizations (n in the thousands) cheap.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
///
/// Eigenvector sign convention: first component of absolute value above
/// `1e-12 * max` is positive, so results are deterministic across runs.
pub struct SymEigen {
    pub values: Vec<f64>,
    /// `vectors[k]` is the unit eigenvector for `values[k]`.
    pub vectors: Vec<Vec<f64>>,
}

pub fn sym_eigen(a: &DMatrix<f64>) -> Result<SymEigen> {
    let n = a.nrows();
    let sym = 0.5 * (a + a.transpose());
    let decomp = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| decomp.eigenvalues[i].total_cmp(&decomp.eigenvalues[j]));
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for &k in &order {
        values.push(decomp.eigenvalues[k]);
        let mut v: Vec<f64> = decomp.eigenvectors.column(k).iter().copied().collect();
        fix_sign(&mut v);
        vectors.push(v);
    }
    Ok(SymEigen { values, vectors })
}

fn fix_sign(v: &mut [f64]) {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return;
    }
    for x in v.iter() {
        if x.abs() > 1e-12 * scale {
            if *x < 0.0 {
                v.iter_mut().for_each(|y| *y = -*y);
            }
            return;
        }
    }
}

/// Symmetric tridiagonal matrix (diag length n, off length n-1).
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// Number of eigenvalues strictly below `x` (Sturm count via LDLt).
    fn count_below(&self, x: f64) -> usize {
        let n = self.n();
        let mut count = 0usize;
        let mut q = self.diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..n {
            let e = self.off[i - 1];
            let denom = if q.abs() < 1e-300 {
                1e-300_f64.copysign(if q == 0.0 { 1.0 } else { q })
            } else {
                q
            };
            q = self.diag[i] - x - e * e / denom;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.n();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// k-th smallest eigenvalue (k = 0 is the smallest), by bisection.
    pub fn eigenvalue_k(&self, k: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        // widen slightly so counts at the ends are exact
        let pad = 1e-12 * (hi - lo).abs().max(1.0);
        lo -= pad;
        hi += pad;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.count_below(mid) <= k {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.abs().max(lo.abs()).max(1.0) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn eigenvalue_max(&self) -> f64 {
        self.eigenvalue_k(self.n() - 1)
    }

    /// Eigenvector for an isolated eigenvalue, by inverse iteration with a
    /// partially pivoted tridiagonal solve. Unit norm, deterministic sign.
    pub fn eigenvector(&self, lambda: f64) -> Result<Vec<f64>> {
        let n = self.n();
        let scale = self
            .diag
            .iter()
            .chain(self.off.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
            .max(1.0);
        let shift = lambda + 1e-13 * scale;
        // Deterministic pseudo-random start; a structured start (e.g. the
        // all-ones vector) can be orthogonal to the target on symmetric
        // problems and stall the iteration.
        let mut v: Vec<f64> = (0..n).map(|i| splitmix(i as u64) - 0.5).collect();
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm0);
        let mut best_res = f64::INFINITY;
        let mut best = v.clone();
        for _ in 0..10 {
            let w = self
                .solve_shifted(&v, shift)
                .ok_or_else(|| Error::EigenFailure("inverse iteration solve failed".into()))?;
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !norm.is_finite() || norm == 0.0 {
                return Err(Error::EigenFailure("inverse iteration blow-up".into()));
            }
            v = w.iter().map(|x| x / norm).collect();
            let res = self.residual(&v, lambda);
            if res < best_res {
                best_res = res;
                best = v.clone();
            }
            if res < 1e-13 * scale {
                break;
            }
        }
        let mut v = best;
        fix_sign(&mut v);
        if best_res > 1e-8 * scale {
            return Err(Error::EigenFailure(format!(
                "inverse iteration residual {best_res:.2e}"
            )));
        }
        Ok(v)
    }

    fn residual(&self, v: &[f64], lambda: f64) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        for i in 0..n {
            let mut r = (self.diag[i] - lambda) * v[i];
            if i > 0 {
                r += self.off[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                r += self.off[i] * v[i + 1];
            }
            worst = worst.max(r.abs());
        }
        worst
    }

    /// Solve (T - shift I) x = b by banded LU with partial pivoting
    /// (tridiagonal plus one fill-in superdiagonal, as in LAPACK's gtsv).
    fn solve_shifted(&self, b: &[f64], shift: f64) -> Option<Vec<f64>> {
        let n = self.n();
        let tiny = 1e-300;
        if n == 1 {
            let d = self.diag[0] - shift;
            let d = if d == 0.0 { tiny } else { d };
            return Some(vec![b[0] / d]);
        }
        // Working bands of the eliminated matrix.
        let mut d: Vec<f64> = self.diag.iter().map(|x| x - shift).collect();
        let mut e: Vec<f64> = self.off.clone(); // superdiagonal, len n-1
        let mut f = vec![0.0f64; n.saturating_sub(2)]; // 2nd superdiagonal fill-in
        let mut x: Vec<f64> = b.to_vec();
        for i in 0..n - 1 {
            // Row i+1 currently reads [sub, d[i+1], e[i+1], 0], with sub = off[i].
            let mut sub = self.off[i];
            if sub.abs() > d[i].abs() {
                // Swap rows i and i+1 of the working matrix.
                std::mem::swap(&mut d[i], &mut sub);
                let t = e[i];
                e[i] = d[i + 1];
                d[i + 1] = t;
                if i + 1 < n - 1 {
                    let t = f[i];
                    f[i] = e[i + 1];
                    e[i + 1] = t;
                }
                x.swap(i, i + 1);
            }
            if d[i] == 0.0 {
                d[i] = tiny;
            }
            let m = sub / d[i];
            d[i + 1] -= m * e[i];
            if i < n - 2 {
                e[i + 1] -= m * f[i];
            }
            x[i + 1] -= m * x[i];
        }
        let mut out = vec![0.0f64; n];
        for i in (0..n).rev() {
            let mut s = x[i];
            if i + 1 < n {
                s -= e[i] * out[i + 1];
            }
            if i + 2 < n {
                s -= f[i] * out[i + 2];
            }
            let dii = if d[i] == 0.0 { tiny } else { d[i] };
            out[i] = s / dii;
        }
        Some(out)
    }
}

/// SplitMix64 mapped to (0, 1); used for deterministic start vectors.
fn splitmix(seed: u64) -> f64 {
    let mut z = seed.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z = z ^ (z >> 31);
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Dense LU solve; errors on (numerically) singular systems.
pub fn solve_dense(a: DMatrix<f64>, b: DVector<f64>) -> Result<Vec<f64>> {
    let lu = a.lu();
    match lu.solve(&b) {
        Some(x) => Ok(x.iter().copied().collect()),
        None => Err(Error::SingularSystem("dense LU solve".into())),
    }
}
