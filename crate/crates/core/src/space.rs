//! Finite metric spaces, probability measures and densities.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, TOL_CONSTRAINT, TOL_EXACT};

/// A finite metric space with labeled points and a distinguished base point.
///
/// Spaces built from points on the real line keep their coordinates around;
/// transport routines use them for the O(n log n) quantile path.
#[derive(Debug, Clone)]
pub struct FiniteMetricSpace {
    labels: Vec<String>,
    dist: Vec<f64>, // row-major n x n
    n: usize,
    base_index: usize,
    line: Option<Vec<f64>>,
}

impl FiniteMetricSpace {
    /// Build from an explicit distance matrix. Validates symmetry, zero
    /// diagonal, positivity off the diagonal and the triangle inequality
    /// (O(n^3), so keep explicit matrices modest).
    pub fn new(labels: Vec<String>, dist: Vec<Vec<f64>>, base_index: usize) -> Result<Self> {
        let n = labels.len();
        if dist.len() != n || dist.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: dist.len(),
            });
        }
        if base_index >= n {
            return Err(Error::InvalidMetric(format!(
                "base index {base_index} out of range"
            )));
        }
        let mut flat = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let d = dist[i][j];
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::InvalidMetric(format!("d({i},{j}) = {d}")));
                }
                if (d - dist[j][i]).abs() > TOL_EXACT * d.abs().max(1.0) {
                    return Err(Error::InvalidMetric(format!("asymmetric at ({i},{j})")));
                }
                if i == j && d != 0.0 {
                    return Err(Error::InvalidMetric(format!("nonzero diagonal at {i}")));
                }
                if i != j && d <= 0.0 {
                    return Err(Error::InvalidMetric(format!("d({i},{j}) = 0 for i != j")));
                }
                flat[i * n + j] = d;
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if flat[i * n + j] > flat[i * n + k] + flat[k * n + j] + 1e-12 {
                        return Err(Error::InvalidMetric(format!(
                            "triangle inequality fails at ({i},{j},{k})"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            labels,
            dist: flat,
            n,
            base_index,
            line: None,
        })
    }

    /// Metric induced by strictly increasing coordinates on the real line.
    /// The axioms hold by construction, so no O(n^3) check is run.
    pub fn from_line(points: &[f64], base_index: usize) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::InvalidMetric("empty point set".into()));
        }
        if base_index >= n {
            return Err(Error::InvalidMetric(format!(
                "base index {base_index} out of range"
            )));
        }
        for w in points.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidMetric("line coordinates not increasing".into()));
            }
        }
        let mut flat = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                flat[i * n + j] = (points[i] - points[j]).abs();
            }
        }
        Ok(Self {
            labels: (0..n).map(|i| format!("{i}")).collect(),
            dist: flat,
            n,
            base_index,
            line: Some(points.to_vec()),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn base_index(&self) -> usize {
        self.base_index
    }

    /// Coordinates of the line embedding, when the space was built from one.
    pub fn line(&self) -> Option<&[f64]> {
        self.line.as_deref()
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().fold(0.0f64, |m, &d| m.max(d))
    }

    /// Rescale every distance by `s > 0` (line coordinates scale with it).
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.dist.iter_mut().for_each(|d| *d *= s);
        if let Some(line) = &mut out.line {
            line.iter_mut().for_each(|x| *x *= s);
        }
        out
    }

    /// Lipschitz seminorm of `g` with respect to this metric.
    pub fn lip_norm(&self, g: &[f64]) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                m = m.max((g[i] - g[j]).abs() / self.dist(i, j));
            }
        }
        m
    }

    /// McShane regularization: largest 1-Lipschitz minorant built from `g`,
    /// `u_i = min_j (g_j + d(i,j))`. Output is always 1-Lipschitz.
    pub fn mcshane(&self, g: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (0..self.n)
                    .map(|j| g[j] + self.dist(i, j))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }
}

/// A probability measure on a finite space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Measure {
    weights: Vec<f64>,
    full_support: bool,
}

impl Measure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidMeasure("empty weight vector".into()));
        }
        let mut sum = 0.0;
        let mut full_support = true;
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidMeasure(format!("weight[{i}] = {w}")));
            }
            if w == 0.0 {
                full_support = false;
            }
            sum += w;
        }
        if (sum - 1.0).abs() > TOL_EXACT {
            return Err(Error::InvalidMeasure(format!("weights sum to {sum}")));
        }
        Ok(Self {
            weights,
            full_support,
        })
    }

    /// Normalize arbitrary non-negative masses into a probability measure.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidMeasure("total mass is not positive".into()));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        // guard against residual rounding
        let s: f64 = weights.iter().sum();
        let last = weights.len() - 1;
        weights[last] += 1.0 - s;
        Measure::new(weights)
    }

    pub fn uniform(n: usize) -> Self {
        Measure::normalized(vec![1.0; n]).expect("n > 0")
    }

    pub fn dirac(n: usize, at: usize) -> Self {
        let mut w = vec![0.0; n];
        w[at] = 1.0;
        Measure::new(w).expect("valid point mass")
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn w(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn full_support(&self) -> bool {
        self.full_support
    }

    /// Expectation of a function vector.
    pub fn mean(&self, g: &[f64]) -> f64 {
        self.weights.iter().zip(g).map(|(w, x)| w * x).sum()
    }

    pub fn variance(&self, g: &[f64]) -> f64 {
        let m = self.mean(g);
        self.weights
            .iter()
            .zip(g)
            .map(|(w, x)| w * (x - m) * (x - m))
            .sum()
    }

    /// L2(mu) norm.
    pub fn l2_norm(&self, g: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(g)
            .map(|(w, x)| w * x * x)
            .sum::<f64>()
            .sqrt()
    }
}

/// A probability density relative to a reference measure mu (so nu = f mu).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Density {
    f: Vec<f64>,
}

impl Density {
    pub fn new(f: Vec<f64>, mu: &Measure) -> Result<Self> {
        if f.len() != mu.n() {
            return Err(Error::DimensionMismatch {
                expected: mu.n(),
                got: f.len(),
            });
        }
        let mut mass = 0.0;
        for (i, &x) in f.iter().enumerate() {
            if !x.is_finite() || x < 0.0 {
                return Err(Error::InvalidDensity(format!("f[{i}] = {x}")));
            }
            mass += mu.w(i) * x;
        }
        if (mass - 1.0).abs() > TOL_CONSTRAINT {
            return Err(Error::InvalidDensity(format!("mu(f) = {mass}")));
        }
        Ok(Self { f })
    }

    /// The constant density 1 (nu = mu).
    pub fn one(n: usize) -> Self {
        Self { f: vec![1.0; n] }
    }

    /// Normalize non-negative values into a density against `mu`. Entries on
    /// zero-mass points are zeroed first so they cannot carry mass.
    pub fn normalized(mut f: Vec<f64>, mu: &Measure) -> Result<Self> {
        for (x, w) in f.iter_mut().zip(mu.weights()) {
            if *w == 0.0 {
                *x = 0.0;
            }
        }
        let mass: f64 = f.iter().zip(mu.weights()).map(|(x, w)| x * w).sum();
        if !(mass > 0.0) {
            return Err(Error::InvalidDensity("zero total mass".into()));
        }
        f.iter_mut().for_each(|x| *x /= mass);
        Density::new(f, mu)
    }

    pub fn values(&self) -> &[f64] {
        &self.f
    }

    /// The measure nu = f mu.
    pub fn measure(&self, mu: &Measure) -> Measure {
        let w: Vec<f64> = self.f.iter().zip(mu.weights()).map(|(f, m)| f * m).collect();
        Measure::normalized(w).expect("density normalizes")
    }

    /// ||f||_{L2(mu)}, the prefactor of the deviation bounds.
    pub fn l2_norm(&self, mu: &Measure) -> f64 {
        mu.l2_norm(&self.f)
    }
}

/// Relative entropy H(f mu | mu) = sum mu_i f_i log f_i, with 0 log 0 = 0.
///
/// Always finite for a valid density on a finite space; the +infinity branch
/// of the continuous definition cannot trigger here.
pub fn relative_entropy(f: &Density, mu: &Measure) -> Result<f64> {
    if f.values().len() != mu.n() {
        return Err(Error::DimensionMismatch {
            expected: mu.n(),
            got: f.values().len(),
        });
    }
    let mut h = 0.0;
    for (&fi, &wi) in f.values().iter().zip(mu.weights()) {
        if fi > 0.0 {
            h += wi * fi * fi.ln();
        }
    }
    // Jensen guarantees h >= 0; clamp away -1e-17 style dust.
    Ok(h.max(0.0))
}

/// Total variation distance ||f mu - mu||_TV = sum mu_i |f_i - 1|, in [0, 2].
pub fn total_variation(f: &Density, mu: &Measure) -> Result<f64> {
    if f.values().len() != mu.n() {
        return Err(Error::DimensionMismatch {
            expected: mu.n(),
            got: f.values().len(),
        });
    }
    Ok(f.values()
        .iter()
        .zip(mu.weights())
        .map(|(fi, wi)| wi * (fi - 1.0).abs())
        .sum())
}

/// Serialized form of a space + measure document.
///
/// `dist` is the row-major distance matrix; distances are re-validated on
/// load. `line` is optional and, when present, must reproduce `dist`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceDoc {
    pub labels: Vec<String>,
    pub dist: Vec<f64>,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub base_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<Vec<f64>>,
}

impl SpaceDoc {
    pub fn from_parts(space: &FiniteMetricSpace, mu: &Measure) -> Self {
        Self {
            labels: space.labels().to_vec(),
            dist: space.dist.clone(),
            weights: mu.weights().to_vec(),
            base_index: space.base_index(),
            line: space.line.clone(),
        }
    }

    pub fn into_parts(self) -> Result<(FiniteMetricSpace, Measure)> {
        let n = self.labels.len();
        if self.dist.len() != n * n {
            return Err(Error::Parse(format!(
                "dist has {} entries, expected {}",
                self.dist.len(),
                n * n
            )));
        }
        let space = match &self.line {
            Some(line) => {
                let mut sp = FiniteMetricSpace::from_line(line, self.base_index)?;
                for i in 0..n {
                    for j in 0..n {
                        if (sp.dist(i, j) - self.dist[i * n + j]).abs() > 1e-9 {
                            return Err(Error::Parse(
                                "line coordinates disagree with dist matrix".into(),
                            ));
                        }
                    }
                }
                sp.labels = self.labels;
                sp
            }
            None => {
                let rows: Vec<Vec<f64>> = (0..n)
                    .map(|i| self.dist[i * n..(i + 1) * n].to_vec())
                    .collect();
                FiniteMetricSpace::new(self.labels, rows, self.base_index)?
            }
        };
        let mu = Measure::new(self.weights)?;
        if mu.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: mu.n(),
            });
        }
        Ok((space, mu))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_half() -> Measure {
        Measure::new(vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn entropy_of_reference_is_zero() {
        let mu = half_half();
        let f = Density::one(2);
        assert_eq!(relative_entropy(&f, &mu).unwrap(), 0.0);
    }

    #[test]
    fn entropy_point_mass() {
        // mu = (1/2, 1/2), f = (2, 0): H = log 2.
        let mu = half_half();
        let f = Density::new(vec![2.0, 0.0], &mu).unwrap();
        let h = relative_entropy(&f, &mu).unwrap();
        assert!((h - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn entropy_three_points() {
        // mu = (1/2, 1/4, 1/4), f = (1, 2, 0): H = (1/2) log 2.
        let mu = Measure::new(vec![0.5, 0.25, 0.25]).unwrap();
        let f = Density::new(vec![1.0, 2.0, 0.0], &mu).unwrap();
        let h = relative_entropy(&f, &mu).unwrap();
        assert!((h - 0.5 * std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn tv_basics() {
        let mu = half_half();
        assert_eq!(total_variation(&Density::one(2), &mu).unwrap(), 0.0);
        let f = Density::new(vec![2.0, 0.0], &mu).unwrap();
        assert!((total_variation(&f, &mu).unwrap() - 1.0).abs() < 1e-15);
        let g = Density::new(vec![0.0, 2.0], &mu).unwrap();
        assert_eq!(
            total_variation(&f, &mu).unwrap(),
            total_variation(&g, &mu).unwrap()
        );
    }

    #[test]
    fn pinsker() {
        // TV^2 <= 2 H on a few handmade densities.
        let mu = Measure::new(vec![0.2, 0.3, 0.5]).unwrap();
        for f in [
            vec![2.0, 1.0, 0.6],
            vec![0.0, 1.0, 1.4],
            vec![5.0, 0.0, 0.0],
        ] {
            let f = Density::new(f, &mu).unwrap();
            let tv = total_variation(&f, &mu).unwrap();
            let h = relative_entropy(&f, &mu).unwrap();
            assert!(tv * tv <= 2.0 * h + 1e-12, "tv={tv} h={h}");
        }
    }

    #[test]
    fn metric_validation_rejects_triangle_violation() {
        let labels = vec!["a".into(), "b".into(), "c".into()];
        let bad = vec![
            vec![0.0, 1.0, 5.0],
            vec![1.0, 0.0, 1.0],
            vec![5.0, 1.0, 0.0],
        ];
        assert!(FiniteMetricSpace::new(labels, bad, 0).is_err());
    }

    #[test]
    fn line_space_matches_explicit() {
        let pts = [0.0, 1.0, 2.5];
        let sp = FiniteMetricSpace::from_line(&pts, 0).unwrap();
        assert_eq!(sp.dist(0, 2), 2.5);
        assert_eq!(sp.diameter(), 2.5);
    }

    #[test]
    fn mcshane_output_is_lipschitz() {
        let pts = [0.0, 0.3, 1.0, 2.0];
        let sp = FiniteMetricSpace::from_line(&pts, 0).unwrap();
        let raw = [3.0, -1.0, 4.0, 0.5];
        let u = sp.mcshane(&raw);
        assert!(sp.lip_norm(&u) <= 1.0 + 1e-12);
    }

    #[test]
    fn space_doc_roundtrip() {
        let sp = FiniteMetricSpace::from_line(&[0.0, 1.0, 3.0], 1).unwrap();
        let mu = Measure::new(vec![0.25, 0.5, 0.25]).unwrap();
        let doc = SpaceDoc::from_parts(&sp, &mu);
        let text = serde_json::to_string(&doc).unwrap();
        let back: SpaceDoc = serde_json::from_str(&text).unwrap();
        let (sp2, mu2) = back.into_parts().unwrap();
        assert_eq!(sp2.dist(0, 2), sp.dist(0, 2));
        assert_eq!(mu2.weights(), mu.weights());
    }
}
