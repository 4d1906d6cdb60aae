//! Exact optimal transport on finite spaces.
//!
//! The LP path solves the transportation problem with successive shortest
//! augmenting paths under node potentials, which certifies optimality through
//! the dual pair it returns (the duality gap is checked internally). Ordered
//! real grids get the O(n) quantile coupling instead. No entropic smoothing
//! anywhere: inequality margins downstream need deterministic exact values.

use crate::space::{Density, FiniteMetricSpace, Measure};
use crate::{Error, Result};

/// Exact solution of `min Σ π_ij c_ij` over couplings of (a, b).
#[derive(Debug, Clone)]
pub struct TransportSolution {
    pub cost: f64,
    /// Row-major n x m coupling.
    pub plan: Vec<f64>,
    /// Dual potential on the source side; `u_i - v_j <= c_ij` with equality
    /// on the support of the plan.
    pub u: Vec<f64>,
    /// Dual potential on the sink side.
    pub v: Vec<f64>,
}

/// Min-cost transport between non-negative mass vectors of equal total mass.
///
/// `cost(i, j)` must be non-negative and finite. Complexity is roughly
/// O((n+m) n m); intended for spaces up to a couple thousand points.
pub fn solve_transport<C: Fn(usize, usize) -> f64>(
    a: &[f64],
    b: &[f64],
    cost: C,
) -> Result<TransportSolution> {
    let n = a.len();
    let m = b.len();
    let total_a: f64 = a.iter().sum();
    let total_b: f64 = b.iter().sum();
    let scale = total_a.max(1e-300);
    if ((total_a - total_b) / scale).abs() > 1e-9 {
        return Err(Error::TransportInternal(format!(
            "mass mismatch: {total_a} vs {total_b}"
        )));
    }

    let mut rem_a = a.to_vec();
    let mut rem_b = b.to_vec();
    // Absorb the (tiny) mass mismatch so the loop can drain supplies exactly.
    let correction = (total_b - total_a) / m as f64;
    rem_b.iter_mut().for_each(|x| *x -= correction);

    let mut plan = vec![0.0f64; n * m];
    let mut pot_src = vec![0.0f64; n]; // pi on source nodes
    let mut pot_snk = vec![0.0f64; m]; // pi on sink nodes
    let eps = 1e-15 * scale.max(1.0);

    let mut guard = 0usize;
    let guard_cap = 8 * (n + m) + 2 * n * m + 64;

    for s in 0..n {
        while rem_a[s] > eps {
            guard += 1;
            if guard > guard_cap {
                return Err(Error::TransportInternal(
                    "augmentation count exceeded bound".into(),
                ));
            }
            // Dijkstra over sources (0..n) and sinks (n..n+m) with reduced
            // costs; dense O(V^2) scan, V is small here.
            let v_total = n + m;
            let mut dist = vec![f64::INFINITY; v_total];
            let mut done = vec![false; v_total];
            let mut parent = vec![usize::MAX; v_total];
            dist[s] = 0.0;
            let mut target = usize::MAX;
            loop {
                let mut best = usize::MAX;
                let mut best_d = f64::INFINITY;
                for v in 0..v_total {
                    if !done[v] && dist[v] < best_d {
                        best_d = dist[v];
                        best = v;
                    }
                }
                if best == usize::MAX {
                    break;
                }
                done[best] = true;
                if best >= n && rem_b[best - n] > eps {
                    target = best;
                    break;
                }
                if best < n {
                    let i = best;
                    for j in 0..m {
                        let rc = (cost(i, j) + pot_src[i] - pot_snk[j]).max(0.0);
                        let nd = dist[i] + rc;
                        if nd < dist[n + j] {
                            dist[n + j] = nd;
                            parent[n + j] = i;
                        }
                    }
                } else {
                    let j = best - n;
                    for i in 0..n {
                        if plan[i * m + j] > 0.0 {
                            let rc = (-cost(i, j) + pot_snk[j] - pot_src[i]).max(0.0);
                            let nd = dist[n + j] + rc;
                            if nd < dist[i] {
                                dist[i] = nd;
                                parent[i] = n + j;
                            }
                        }
                    }
                }
            }
            if target == usize::MAX {
                return Err(Error::TransportInternal(
                    "no augmenting path to unmet demand".into(),
                ));
            }
            let d_t = dist[target];
            // Potential update keeps all reduced costs non-negative.
            for i in 0..n {
                pot_src[i] += dist[i].min(d_t);
            }
            for j in 0..m {
                pot_snk[j] += dist[n + j].min(d_t);
            }
            // Bottleneck along the augmenting path.
            let mut bottleneck = rem_a[s].min(rem_b[target - n]);
            let mut node = target;
            while node != s {
                let p = parent[node];
                if p >= n {
                    // backward arc sink p -> source node; flow on (node, p-n)
                    bottleneck = bottleneck.min(plan[node * m + (p - n)]);
                }
                node = p;
            }
            // Apply flow.
            let mut node = target;
            while node != s {
                let p = parent[node];
                if node >= n {
                    // forward arc p (source) -> node (sink)
                    plan[p * m + (node - n)] += bottleneck;
                } else {
                    // backward arc p (sink) -> node (source)
                    plan[node * m + (p - n)] -= bottleneck;
                }
                node = p;
            }
            rem_a[s] -= bottleneck;
            rem_b[target - n] -= bottleneck;
        }
    }

    // Duals in the u(x) - v(y) <= c convention.
    let mut u: Vec<f64> = pot_src.iter().map(|p| -p).collect();
    let mut v: Vec<f64> = pot_snk.iter().map(|p| -p).collect();
    // Rows/columns that carried no mass keep potential 0 from init; tighten
    // them so the pair is feasible (and as large as the constraint allows).
    for i in 0..n {
        if a[i] <= eps {
            u[i] = (0..m)
                .map(|j| cost(i, j) + v[j])
                .fold(f64::INFINITY, f64::min);
        }
    }
    for j in 0..m {
        if b[j] <= eps {
            v[j] = (0..n)
                .map(|i| u[i] - cost(i, j))
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }

    let mut total_cost = 0.0;
    for i in 0..n {
        for j in 0..m {
            if plan[i * m + j] != 0.0 {
                total_cost += plan[i * m + j] * cost(i, j);
            }
        }
    }
    // Optimality certificate: primal value equals dual value.
    let dual: f64 = a.iter().zip(&u).map(|(x, y)| x * y).sum::<f64>()
        - b.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>();
    let gap = (total_cost - dual).abs();
    if gap > 1e-8 * (1.0 + total_cost.abs()) {
        return Err(Error::TransportInternal(format!(
            "duality gap {gap:.3e} exceeds certificate tolerance"
        )));
    }
    Ok(TransportSolution {
        cost: total_cost,
        plan,
        u,
        v,
    })
}

/// W_p distance by the exact LP, with the 1/p-th root taken.
pub fn wasserstein(
    space: &FiniteMetricSpace,
    mu: &Measure,
    nu: &Measure,
    p: f64,
) -> Result<f64> {
    Ok(wasserstein_with_duals(space, mu, nu, p)?.0)
}

/// W_p together with an optimal dual pair (u, v) for
/// `W_p^p = nu(u) - mu(v)`, `u(x) - v(y) <= d^p(x, y)`.
pub fn wasserstein_with_duals(
    space: &FiniteMetricSpace,
    mu: &Measure,
    nu: &Measure,
    p: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if p < 1.0 {
        return Err(Error::InvalidParameter(format!("p = {p} < 1")));
    }
    let n = space.n();
    if mu.n() != n || nu.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: mu.n().min(nu.n()),
        });
    }
    let sol = solve_transport(nu.weights(), mu.weights(), |i, j| {
        space.dist(i, j).powf(p)
    })?;
    Ok((sol.cost.max(0.0).powf(1.0 / p), sol.u, sol.v))
}

/// W_p on an ordered real grid via the quantile (inverse-CDF) coupling.
///
/// Exact for costs |x - y|^p with p >= 1; runs in O(n).
pub fn wasserstein_1d(grid: &[f64], mu: &Measure, nu: &Measure, p: f64) -> Result<f64> {
    if p < 1.0 {
        return Err(Error::InvalidParameter(format!("p = {p} < 1")));
    }
    let n = grid.len();
    if mu.n() != n || nu.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: mu.n().min(nu.n()),
        });
    }
    for w in grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidParameter("grid not strictly increasing".into()));
        }
    }
    let mut i = 0usize;
    let mut j = 0usize;
    let mut rem_i = mu.w(0);
    let mut rem_j = nu.w(0);
    let mut cost = 0.0f64;
    let eps = 1e-18;
    loop {
        while i < n && rem_i <= eps {
            i += 1;
            if i < n {
                rem_i = mu.w(i);
            }
        }
        while j < n && rem_j <= eps {
            j += 1;
            if j < n {
                rem_j = nu.w(j);
            }
        }
        if i >= n || j >= n {
            break;
        }
        let m = rem_i.min(rem_j);
        cost += m * (grid[i] - grid[j]).abs().powf(p);
        rem_i -= m;
        rem_j -= m;
    }
    Ok(cost.max(0.0).powf(1.0 / p))
}

/// Wasserstein distance dispatching to the quantile path on line spaces.
pub fn wasserstein_auto(
    space: &FiniteMetricSpace,
    mu: &Measure,
    nu: &Measure,
    p: f64,
) -> Result<f64> {
    match space.line() {
        Some(grid) => wasserstein_1d(grid, mu, nu, p),
        None => wasserstein(space, mu, nu, p),
    }
}

/// Gap of a feasible dual pair against the optimal transport cost:
/// `W_p^p(nu, mu) - (nu(u) - mu(v))`, which is >= 0 up to solver tolerance.
///
/// Errors if the pair violates `u(x) - v(y) <= d^p(x, y)` by more than 1e-9.
pub fn kantorovich_duality_gap(
    space: &FiniteMetricSpace,
    mu: &Measure,
    nu: &Measure,
    p: f64,
    potentials: (&[f64], &[f64]),
) -> Result<f64> {
    let (u, v) = potentials;
    let n = space.n();
    if u.len() != n || v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: u.len().min(v.len()),
        });
    }
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max(u[i] - v[j] - space.dist(i, j).powf(p));
        }
    }
    if worst > 1e-9 {
        return Err(Error::ConstraintViolation(format!(
            "u(x) - v(y) <= d^p violated by {worst:.3e}"
        )));
    }
    let w = wasserstein(space, mu, nu, p)?;
    let dual_val = nu.mean(u) - mu.mean(v);
    Ok(w.powf(p) - dual_val)
}

/// Family kind tag for generalized transport costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilyKind {
    /// Pairs satisfying `u(x) - v(y) <= d^p(x, y)`, generated from the metric.
    LipschitzP { p: f64 },
    Custom,
}

/// A finite family of admissible test-function pairs (u, v).
///
/// Admissibility (A1), `u <= v` pointwise, is enforced at construction; for
/// metric-generated families the stronger pair constraint
/// `u(x) - v(y) <= d^p(x, y)` is verified as well. Since every family built
/// here contains the constant pair (0, 0), (A2) holds automatically; custom
/// families can additionally be spot-checked with [`Self::a2_sample`].
#[derive(Debug, Clone)]
pub struct TestFunctionPairFamily {
    pairs: Vec<(Vec<f64>, Vec<f64>)>,
    kind: FamilyKind,
}

/// Options for Lipschitz family generation.
#[derive(Debug, Clone)]
pub struct FamilyOpts {
    /// Random Lipschitz-ball elements obtained by McShane projection.
    pub n_random: usize,
    /// Cap on the number of distance-to-point generators.
    pub max_point_generators: usize,
    pub seed: u64,
}

impl Default for FamilyOpts {
    fn default() -> Self {
        Self {
            n_random: 24,
            max_point_generators: 48,
            seed: 7,
        }
    }
}

impl TestFunctionPairFamily {
    /// Custom family; checks (A1) pointwise.
    pub fn custom(pairs: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidParameter("empty family".into()));
        }
        for (k, (u, v)) in pairs.iter().enumerate() {
            if u.len() != v.len() {
                return Err(Error::DimensionMismatch {
                    expected: u.len(),
                    got: v.len(),
                });
            }
            for i in 0..u.len() {
                if u[i] > v[i] + 1e-12 {
                    return Err(Error::ConstraintViolation(format!(
                        "(A1) fails in pair {k} at point {i}: u = {} > v = {}",
                        u[i], v[i]
                    )));
                }
            }
        }
        Ok(Self {
            pairs,
            kind: FamilyKind::Custom,
        })
    }

    /// Metric-generated family for exponent `p`.
    ///
    /// p = 1 uses (u, u) with u in the 1-Lipschitz ball: distances to points
    /// and to random subsets, their negatives, and McShane projections of
    /// random vectors. For p > 1 each generator is closed under the
    /// d^p-transform so the pair constraint is tight. The constant pair (0,0)
    /// is always included.
    pub fn lipschitz(space: &FiniteMetricSpace, p: f64, opts: &FamilyOpts) -> Result<Self> {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;

        if p < 1.0 {
            return Err(Error::InvalidParameter(format!("p = {p} < 1")));
        }
        let n = space.n();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut gens: Vec<Vec<f64>> = Vec::new();
        gens.push(vec![0.0; n]);

        let step = (n / opts.max_point_generators.max(1)).max(1);
        for k in (0..n).step_by(step) {
            gens.push((0..n).map(|i| space.dist(i, k)).collect());
        }
        // distances to random subsets
        for _ in 0..opts.n_random / 4 {
            let size = rng.random_range(1..=(n / 2).max(1));
            let mut subset: Vec<usize> = (0..n).collect();
            subset.shuffle(&mut rng);
            subset.truncate(size);
            gens.push(
                (0..n)
                    .map(|i| {
                        subset
                            .iter()
                            .map(|&k| space.dist(i, k))
                            .fold(f64::INFINITY, f64::min)
                    })
                    .collect(),
            );
        }
        // McShane projections of random vectors
        let diam = space.diameter();
        for _ in 0..opts.n_random {
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-diam..diam)).collect();
            let proj = space.mcshane(&raw);
            let lip = space.lip_norm(&proj);
            if lip > 1e-12 {
                gens.push(proj.iter().map(|x| x / lip).collect());
            }
        }
        let negs: Vec<Vec<f64>> = gens.iter().map(|u| u.iter().map(|x| -x).collect()).collect();
        gens.extend(negs);

        let mut pairs = Vec::with_capacity(gens.len());
        if (p - 1.0).abs() < 1e-14 {
            for u in gens {
                pairs.push((u.clone(), u));
            }
        } else {
            for g in gens {
                // v = g^{d^p}-transform, then tighten u under it.
                let v: Vec<f64> = (0..n)
                    .map(|y| {
                        (0..n)
                            .map(|x| g[x] - space.dist(x, y).powf(p))
                            .fold(f64::NEG_INFINITY, f64::max)
                    })
                    .collect();
                let u: Vec<f64> = (0..n)
                    .map(|x| {
                        (0..n)
                            .map(|y| v[y] + space.dist(x, y).powf(p))
                            .fold(f64::INFINITY, f64::min)
                    })
                    .collect();
                pairs.push((u, v));
            }
        }
        let fam = Self {
            pairs,
            kind: FamilyKind::LipschitzP { p },
        };
        let worst = fam.eq4_violation(space, p);
        debug_assert!(worst <= 1e-9, "generated family violates Eq-(4): {worst}");
        Ok(fam)
    }

    /// Push an externally computed admissible pair (e.g. LP duals).
    pub fn push_pair(&mut self, u: Vec<f64>, v: Vec<f64>) {
        self.pairs.push((u, v));
    }

    pub fn pairs(&self) -> &[(Vec<f64>, Vec<f64>)] {
        &self.pairs
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    /// Worst violation of `u(x) - v(y) <= d^p(x, y)` over the family.
    pub fn eq4_violation(&self, space: &FiniteMetricSpace, p: f64) -> f64 {
        let n = space.n();
        let mut worst = f64::NEG_INFINITY;
        for (u, v) in &self.pairs {
            for i in 0..n {
                for j in 0..n {
                    worst = worst.max(u[i] - v[j] - space.dist(i, j).powf(p));
                }
            }
        }
        worst
    }

    /// Sampled (A2) check: worst of `T(nu1, nu2)` over the given measure
    /// pairs; admissibility needs it >= 0 for all pairs of measures.
    pub fn a2_sample(&self, samples: &[(Measure, Measure)]) -> f64 {
        let mut worst = f64::INFINITY;
        for (nu1, nu2) in samples {
            let t = self
                .pairs
                .iter()
                .map(|(u, v)| nu1.mean(u) - nu2.mean(v))
                .fold(f64::NEG_INFINITY, f64::max);
            worst = worst.min(t);
        }
        worst
    }
}

/// Generalized transport cost `T(f mu, mu) = max over pairs of nu(u) - mu(v)`.
pub fn transport_cost(
    f: &Density,
    mu: &Measure,
    family: &TestFunctionPairFamily,
) -> Result<f64> {
    let n = mu.n();
    if f.values().len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: f.values().len(),
        });
    }
    let mut best = f64::NEG_INFINITY;
    for (u, v) in family.pairs() {
        if u.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: u.len(),
            });
        }
        let val: f64 = (0..n).map(|i| mu.w(i) * (f.values()[i] * u[i] - v[i])).sum();
        best = best.max(val);
    }
    Ok(best)
}
