//! Reversible Markov generators on finite metric spaces: Dirichlet form,
//! carré du champ, Fisher information, Poisson equation and the spectral
//! constants that drive the deviation bounds.
//!
//! Conventions. `Q` is a rate matrix (zero row sums, non-negative off the
//! diagonal), `mu` its reversing measure, and the symmetrized generator
//! `S = D^{1/2} Q D^{-1/2}` (D = diag mu) carries the spectra: the Poincaré
//! constant is 1 over the second-smallest eigenvalue of -S and tilted top
//! eigenvalues of S + lambda diag(u) drive Chernoff bounds. Birth-death
//! chains route through tridiagonal solvers so fine grids stay cheap.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{self, SymTridiag};
use crate::space::{Density, FiniteMetricSpace, Measure, SpaceDoc};
use crate::transport;
use crate::{Error, Result, TOL_CONSTRAINT, TOL_EXACT};

/// A mu-reversible rate matrix attached to a finite metric space.
#[derive(Debug, Clone)]
pub struct ReversibleChain {
    space: FiniteMetricSpace,
    q: Vec<f64>, // row-major
    mu: Measure,
    irreducible: bool,
    birth_death: bool,
}

/// Solution of the Poisson equation -Q G = g - mu(g) with mu(G) = 0.
#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub g_fun: Vec<f64>,
    pub lip_norm: f64,
    pub source: Vec<f64>,
}

/// Two-sided bracket for the Lipschitz-Poisson constant.
#[derive(Debug, Clone)]
pub struct LipschitzConstantBracket {
    pub lower: f64,
    pub upper: f64,
    /// Whether lower == upper up to solver precision.
    pub exact: bool,
    /// A Lipschitz source achieving (or approaching) the lower bound.
    pub witness: Vec<f64>,
}

/// Options for the Lipschitz-Poisson constant on general chains.
#[derive(Debug, Clone)]
pub struct LipschitzConstantOpts {
    /// Error out instead of bracketing when no exact path applies.
    pub exact_required: bool,
    /// Chains up to this size get the exact pairwise dual-norm path.
    pub exact_size_cap: usize,
    /// Random Lipschitz candidates for the sampled lower bound.
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for LipschitzConstantOpts {
    fn default() -> Self {
        Self {
            exact_required: false,
            exact_size_cap: 64,
            n_samples: 64,
            seed: 17,
        }
    }
}

impl ReversibleChain {
    /// Validate and build. `mu` is recomputed from `Q` when absent and
    /// cross-checked when provided. Requires irreducibility; use
    /// [`Self::new_allow_reducible`] for deliberately reducible fixtures.
    pub fn new(space: FiniteMetricSpace, q: Vec<Vec<f64>>, mu: Option<Measure>) -> Result<Self> {
        Self::build(space, q, mu, true)
    }

    /// Same validation, but permits reducible chains (needed by the
    /// disconnected counter-example fixture). Spectral operations that rely
    /// on ergodicity will refuse to run on such a chain.
    pub fn new_allow_reducible(
        space: FiniteMetricSpace,
        q: Vec<Vec<f64>>,
        mu: Measure,
    ) -> Result<Self> {
        Self::build(space, q, Some(mu), false)
    }

    fn build(
        space: FiniteMetricSpace,
        q_rows: Vec<Vec<f64>>,
        mu: Option<Measure>,
        require_irreducible: bool,
    ) -> Result<Self> {
        let n = space.n();
        if q_rows.len() != n || q_rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: q_rows.len(),
            });
        }
        let mut q = vec![0.0; n * n];
        for (i, row) in q_rows.iter().enumerate() {
            let mut sum = 0.0;
            let mut max_rate = 0.0f64;
            for (j, &x) in row.iter().enumerate() {
                if i != j {
                    if !x.is_finite() || x < 0.0 {
                        return Err(Error::InvalidChain(format!("Q[{i}][{j}] = {x}")));
                    }
                    max_rate = max_rate.max(x);
                }
                sum += x;
                q[i * n + j] = x;
            }
            if sum.abs() > TOL_EXACT * max_rate.max(1.0) {
                return Err(Error::InvalidChain(format!("row {i} sums to {sum:.3e}")));
            }
        }
        let irreducible = strongly_connected(&q, n);
        if require_irreducible && !irreducible {
            return Err(Error::Reducible(
                "positive-rate graph is not strongly connected".into(),
            ));
        }
        let mu = match mu {
            Some(m) => {
                if m.n() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: m.n(),
                    });
                }
                m
            }
            None => stationary_from_q(&q, n)?,
        };
        // detailed balance
        let rate_scale = q.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..n {
            for j in (i + 1)..n {
                let lhs = mu.w(i) * q[i * n + j];
                let rhs = mu.w(j) * q[j * n + i];
                if (lhs - rhs).abs() > TOL_CONSTRAINT * rate_scale.max(1.0) {
                    return Err(Error::InvalidChain(format!(
                        "detailed balance fails at ({i},{j}): {lhs:.3e} vs {rhs:.3e}"
                    )));
                }
            }
        }
        let birth_death = is_birth_death(&q, n) && space.line().is_some();
        Ok(Self {
            space,
            q,
            mu,
            irreducible,
            birth_death,
        })
    }

    pub fn n(&self) -> usize {
        self.space.n()
    }

    pub fn space(&self) -> &FiniteMetricSpace {
        &self.space
    }

    pub fn mu(&self) -> &Measure {
        &self.mu
    }

    #[inline]
    pub fn q(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.n() + j]
    }

    pub fn is_irreducible(&self) -> bool {
        self.irreducible
    }

    pub fn is_birth_death(&self) -> bool {
        self.birth_death
    }

    fn require_irreducible(&self, what: &str) -> Result<()> {
        if self.irreducible {
            Ok(())
        } else {
            Err(Error::Reducible(format!("{what} needs an ergodic chain")))
        }
    }

    /// Apply the generator: (Q g)_i.
    pub fn apply(&self, g: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        if g.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: g.len(),
            });
        }
        Ok((0..n)
            .map(|i| (0..n).map(|j| self.q(i, j) * g[j]).sum())
            .collect())
    }

    /// Dirichlet form E(g, h) = -<Q h, g>_mu
    ///                        = (1/2) Σ_{i≠j} mu_i Q_ij (g_j - g_i)(h_j - h_i).
    pub fn dirichlet_form(&self, g: &[f64], h: &[f64]) -> Result<f64> {
        let n = self.n();
        if g.len() != n || h.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: g.len().min(h.len()),
            });
        }
        let mut e = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let r = self.q(i, j);
                    if r != 0.0 {
                        e += 0.5 * self.mu.w(i) * r * (g[j] - g[i]) * (h[j] - h[i]);
                    }
                }
            }
        }
        Ok(e)
    }

    /// Carré du champ field Γ(g, h)_i = (1/2) Σ_j Q_ij (g_j - g_i)(h_j - h_i).
    pub fn carre_du_champ(&self, g: &[f64], h: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        if g.len() != n || h.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: g.len().min(h.len()),
            });
        }
        Ok((0..n)
            .map(|i| {
                0.5 * (0..n)
                    .map(|j| self.q(i, j) * (g[j] - g[i]) * (h[j] - h[i]))
                    .sum::<f64>()
            })
            .collect())
    }

    /// Fisher information I(f mu | mu) = E(sqrt f, sqrt f).
    ///
    /// Always finite on a finite chain (the +infinity branch of the
    /// continuous-state definition cannot trigger here).
    pub fn fisher_information(&self, f: &Density) -> Result<f64> {
        let sf: Vec<f64> = f.values().iter().map(|x| x.sqrt()).collect();
        self.dirichlet_form(&sf, &sf)
    }

    /// The symmetrized generator S = D^{1/2} Q D^{-1/2} as a dense matrix.
    pub fn symmetrized(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut s = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let denom = self.mu.w(j).sqrt();
                if denom > 0.0 {
                    s[(i, j)] = self.mu.w(i).sqrt() * self.q(i, j) / denom;
                }
            }
        }
        // exact symmetry under detailed balance; average out rounding
        0.5 * (&s + s.transpose())
    }

    /// Tridiagonal form of -S for birth-death chains. Detailed balance makes
    /// S_{i,i+1} = sqrt(mu_i/mu_{i+1}) Q_{i,i+1} = sqrt(Q_{i,i+1} Q_{i+1,i}).
    fn neg_s_tridiag(&self) -> SymTridiag {
        let n = self.n();
        let mut diag = Vec::with_capacity(n);
        let mut off = Vec::with_capacity(n - 1);
        for i in 0..n {
            diag.push(-self.q(i, i));
            if i + 1 < n {
                off.push(-(self.q(i, i + 1) * self.q(i + 1, i)).max(0.0).sqrt());
            }
        }
        SymTridiag { diag, off }
    }

    /// Poincaré constant c_P = 1/lambda_1 together with the achieving
    /// eigenfunction g (unit variance direction of the spectral gap).
    pub fn poincare_constant(&self) -> Result<(f64, Vec<f64>)> {
        self.require_irreducible("poincare_constant")?;
        let n = self.n();
        let (lambda1, psi) = if self.birth_death {
            let t = self.neg_s_tridiag();
            let lam = t.eigenvalue_k(1);
            let v = t.eigenvector(lam)?;
            (lam, v)
        } else {
            let eig = linalg::sym_eigen(&(-self.symmetrized()))?;
            (eig.values[1], eig.vectors[1].clone())
        };
        if !(lambda1 > 0.0) {
            return Err(Error::EigenFailure(format!(
                "spectral gap {lambda1:.3e} not positive"
            )));
        }
        let g: Vec<f64> = (0..n)
            .map(|i| {
                let w = self.mu.w(i);
                if w > 0.0 {
                    psi[i] / w.sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        let c_p = 1.0 / lambda1;
        debug_assert!({
            let var = self.mu.variance(&g);
            let e = self.dirichlet_form(&g, &g)?;
            let ok = (var / e - c_p).abs() <= 1e-8 * c_p;
            if !ok {
                eprintln!(
                    "poincare certification: c_p {c_p:.15e} var/E {:.15e} lambda1 {lambda1:.15e}",
                    var / e
                );
            }
            ok
        });
        Ok((c_p, g))
    }

    /// Unique G with -Q G = g - mu(g), mu(G) = 0.
    pub fn poisson_solve(&self, g: &[f64]) -> Result<PoissonSolution> {
        self.require_irreducible("poisson_solve")?;
        let n = self.n();
        if g.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: g.len(),
            });
        }
        let mean = self.mu.mean(g);
        let centered: Vec<f64> = g.iter().map(|x| x - mean).collect();
        let sol = if self.birth_death {
            self.poisson_birth_death(&centered)
        } else {
            // (-Q + 1 mu^T) is invertible and its solve has mu(G) = 0.
            let mut a = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    a[(i, j)] = -self.q(i, j) + self.mu.w(j);
                }
            }
            linalg::solve_dense(a, DVector::from_vec(centered.clone()))?
        };
        // residual check: ||-Q G - centered||_inf
        let qg = self.apply(&sol)?;
        let mut res = 0.0f64;
        for i in 0..n {
            res = res.max((-qg[i] - centered[i]).abs());
        }
        let scale = centered.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
        if res > 1e-9 * scale {
            return Err(Error::SingularSystem(format!(
                "Poisson residual {res:.3e}"
            )));
        }
        let lip = self.space.lip_norm(&sol);
        Ok(PoissonSolution {
            g_fun: sol,
            lip_norm: lip,
            source: g.to_vec(),
        })
    }

    /// O(n) birth-death Poisson solve via the flow identity
    /// mu_k Q_{k,k+1} (G_{k+1} - G_k) = Σ_{i>k} mu_i (g_i - mu(g)).
    fn poisson_birth_death(&self, centered: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut suffix = vec![0.0f64; n];
        let mut acc = 0.0;
        for k in (0..n).rev() {
            suffix[k] = acc; // Σ_{i>k} mu_i centered_i
            acc += self.mu.w(k) * centered[k];
        }
        let mut g_fun = vec![0.0f64; n];
        for k in 0..n - 1 {
            let flow = self.mu.w(k) * self.q(k, k + 1);
            let dg = if flow > 0.0 { suffix[k] / flow } else { 0.0 };
            g_fun[k + 1] = g_fun[k] + dg;
        }
        let mean = self.mu.mean(&g_fun);
        g_fun.iter_mut().for_each(|x| *x -= mean);
        g_fun
    }

    /// Lipschitz-Poisson constant `||(-Q)^{-1}||_Lip` on centered sources.
    ///
    /// Exact on birth-death chains (the extreme source is rho - mu(rho), the
    /// line coordinate centered) and on chains up to `exact_size_cap` (the
    /// sup over the Lipschitz ball of each row-difference functional is a
    /// Kantorovich-Rubinstein dual norm, computed by the transport LP).
    /// Larger general chains get a sampled lower bound and a majorization
    /// upper bound `max_{ij} Σ_k |c^{(ij)}_k| r_k / d_ij`,
    /// r_k = Σ_l mu_l d(k, l).
    pub fn lipschitz_poisson_constant(
        &self,
        opts: &LipschitzConstantOpts,
    ) -> Result<LipschitzConstantBracket> {
        self.require_irreducible("lipschitz_poisson_constant")?;
        let n = self.n();
        if self.birth_death {
            let rho = self.space.line().expect("birth-death implies line metric");
            let mean = self.mu.mean(rho);
            let witness: Vec<f64> = rho.iter().map(|x| x - mean).collect();
            let mut suffix = vec![0.0f64; n];
            let mut acc = 0.0;
            for k in (0..n).rev() {
                suffix[k] = acc;
                acc += self.mu.w(k) * witness[k];
            }
            let mut best = 0.0f64;
            for k in 0..n - 1 {
                let flow = self.mu.w(k) * self.q(k, k + 1);
                let drho = rho[k + 1] - rho[k];
                if flow > 0.0 {
                    best = best.max(suffix[k].abs() / (flow * drho));
                }
            }
            return Ok(LipschitzConstantBracket {
                lower: best,
                upper: best,
                exact: true,
                witness,
            });
        }
        // Row differences of the solution operator A: G = A y for centered y,
        // and A annihilates constants, so each functional has zero total mass.
        let a_op = self.poisson_operator()?;
        if n <= opts.exact_size_cap {
            let mut best = 0.0f64;
            let mut arg = (0, 1);
            for i in 0..n {
                for j in (i + 1)..n {
                    let c: Vec<f64> = (0..n).map(|k| a_op[(i, k)] - a_op[(j, k)]).collect();
                    let dual = self.kr_dual_norm(&c)?;
                    let ratio = dual / self.space.dist(i, j);
                    if ratio > best {
                        best = ratio;
                        arg = (i, j);
                    }
                }
            }
            // Recover a witness source achieving the pair (i, j) optimum.
            let witness = self.kr_witness(&a_op, arg)?;
            return Ok(LipschitzConstantBracket {
                lower: best,
                upper: best,
                exact: true,
                witness,
            });
        }
        if opts.exact_required {
            return Err(Error::UnsupportedExact(format!(
                "chain has {n} states, is not birth-death, and exceeds the exact cap {}",
                opts.exact_size_cap
            )));
        }
        // Sampled lower bound.
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let diam = self.space.diameter();
        let mut lower = 0.0f64;
        let mut witness = vec![0.0; n];
        let consider = |g: &[f64], lower: &mut f64, witness: &mut Vec<f64>| -> Result<()> {
            let lip = self.space.lip_norm(g);
            if lip < 1e-12 {
                return Ok(());
            }
            let sol = self.poisson_solve(g)?;
            let ratio = sol.lip_norm / lip;
            if ratio > *lower {
                *lower = ratio;
                *witness = g.to_vec();
            }
            Ok(())
        };
        for k in 0..n.min(opts.n_samples) {
            let g: Vec<f64> = (0..n).map(|i| self.space.dist(i, k)).collect();
            consider(&g, &mut lower, &mut witness)?;
        }
        for _ in 0..opts.n_samples {
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-diam..diam)).collect();
            let g = self.space.mcshane(&raw);
            consider(&g, &mut lower, &mut witness)?;
        }
        // Majorization upper bound.
        let r: Vec<f64> = (0..n)
            .map(|k| (0..n).map(|l| self.mu.w(l) * self.space.dist(k, l)).sum())
            .collect();
        let mut upper = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let num: f64 = (0..n)
                    .map(|k| (a_op[(i, k)] - a_op[(j, k)]).abs() * r[k])
                    .sum();
                upper = upper.max(num / self.space.dist(i, j));
            }
        }
        Ok(LipschitzConstantBracket {
            lower,
            upper: upper.max(lower),
            exact: false,
            witness,
        })
    }

    /// Dense solution operator A with G = A y, mu(G) = 0, A 1 = 0.
    fn poisson_operator(&self) -> Result<DMatrix<f64>> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = -self.q(i, j) + self.mu.w(j);
            }
        }
        let lu = m.lu();
        let inv = lu
            .try_inverse()
            .ok_or_else(|| Error::SingularSystem("Poisson operator".into()))?;
        // A = inv (I - 1 mu^T), i.e. A_ij = inv_ij - (inv 1)_i mu_j; then
        // A 1 = 0 exactly, so row-difference functionals have zero total mass.
        let mut a = inv.clone();
        for i in 0..n {
            let row_sum: f64 = (0..n).map(|k| inv[(i, k)]).sum();
            for j in 0..n {
                a[(i, j)] -= row_sum * self.mu.w(j);
            }
        }
        Ok(a)
    }

    /// Kantorovich-Rubinstein dual norm of a zero-sum signed vector:
    /// sup { Σ c_k g_k : ||g||_Lip <= 1 } = min-cost transport of c+ onto c-.
    fn kr_dual_norm(&self, c: &[f64]) -> Result<f64> {
        let pos: Vec<f64> = c.iter().map(|x| x.max(0.0)).collect();
        let neg: Vec<f64> = c.iter().map(|x| (-x).max(0.0)).collect();
        let mass: f64 = pos.iter().sum();
        if mass <= 1e-15 {
            return Ok(0.0);
        }
        let sol = transport::solve_transport(&pos, &neg, |i, j| self.space.dist(i, j))?;
        Ok(sol.cost)
    }

    /// 1-Lipschitz g maximizing Σ c_k g_k for the (i, j) row difference;
    /// read off the KR dual potential and McShane-tighten it.
    fn kr_witness(&self, a_op: &DMatrix<f64>, arg: (usize, usize)) -> Result<Vec<f64>> {
        let n = self.n();
        let c: Vec<f64> = (0..n).map(|k| a_op[(arg.0, k)] - a_op[(arg.1, k)]).collect();
        let pos: Vec<f64> = c.iter().map(|x| x.max(0.0)).collect();
        let neg: Vec<f64> = c.iter().map(|x| (-x).max(0.0)).collect();
        if pos.iter().sum::<f64>() <= 1e-15 {
            return Ok(vec![0.0; n]);
        }
        let sol = transport::solve_transport(&pos, &neg, |i, j| self.space.dist(i, j))?;
        // sol.u is 1-Lipschitz on the support; extend by McShane.
        let g = self.space.mcshane(&sol.u);
        let lip = self.space.lip_norm(&g).max(1e-12);
        Ok(g.iter().map(|x| x / lip).collect())
    }

    /// sigma with sqrt(Γ(g,g)) <= sigma ||g||_Lip for every g:
    /// max_i sqrt((1/2) Σ_j Q_ij d(i,j)^2).
    pub fn sigma_gamma_bound(&self) -> f64 {
        let n = self.n();
        (0..n)
            .map(|i| {
                0.5 * (0..n)
                    .filter(|&j| j != i)
                    .map(|j| self.q(i, j) * self.space.dist(i, j).powi(2))
                    .sum::<f64>()
            })
            .fold(0.0f64, |m, x| m.max(x))
            .sqrt()
    }

    /// Asymptotic variance V(g) = 2 <(-Q)^{-1} g~, g~>_mu of the time average.
    pub fn asymptotic_variance(&self, g: &[f64]) -> Result<f64> {
        let sol = self.poisson_solve(g)?;
        let mean = self.mu.mean(g);
        let v: f64 = (0..self.n())
            .map(|i| 2.0 * self.mu.w(i) * sol.g_fun[i] * (g[i] - mean))
            .sum();
        debug_assert!({
            let e = self.dirichlet_form(&sol.g_fun, &sol.g_fun)?;
            (v - 2.0 * e).abs() <= 1e-9 * v.abs().max(1.0)
        });
        Ok(v.max(0.0))
    }
}

fn strongly_connected(q: &[f64], n: usize) -> bool {
    if n == 0 {
        return false;
    }
    let reachable = |transpose: bool| -> usize {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let rate = if transpose { q[j * n + i] } else { q[i * n + j] };
                if i != j && rate > 0.0 && !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count
    };
    reachable(false) == n && reachable(true) == n
}

fn is_birth_death(q: &[f64], n: usize) -> bool {
    for i in 0..n {
        for j in 0..n {
            if i != j && q[i * n + j] > 0.0 && i.abs_diff(j) != 1 {
                return false;
            }
        }
    }
    true
}

fn stationary_from_q(q: &[f64], n: usize) -> Result<Measure> {
    // Solve pi^T Q = 0 with sum pi = 1: replace the last equation.
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = q[j * n + i]; // Q^T
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let pi = linalg::solve_dense(a, b)
        .map_err(|_| Error::InvalidChain("stationary solve is singular".into()))?;
    Measure::normalized(pi.iter().map(|x| x.max(0.0)).collect())
}

/// Serialized chain document: extends the space document with `q` (row-major)
/// and optional `mu` (recomputed and cross-checked when provided).
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainDoc {
    #[serde(flatten)]
    pub space: SpaceDoc,
    pub q: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
}

impl ChainDoc {
    pub fn from_chain(chain: &ReversibleChain) -> Self {
        Self {
            space: SpaceDoc::from_parts(chain.space(), chain.mu()),
            q: chain.q.clone(),
            mu: Some(chain.mu().weights().to_vec()),
        }
    }

    pub fn into_chain(self) -> Result<ReversibleChain> {
        let n = self.space.labels.len();
        if self.q.len() != n * n {
            return Err(Error::Parse(format!(
                "q has {} entries, expected {}",
                self.q.len(),
                n * n
            )));
        }
        let (space, mu_doc) = self.space.into_parts()?;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| self.q[i * n..(i + 1) * n].to_vec()).collect();
        let provided = match self.mu {
            Some(w) => Measure::new(w)?,
            None => mu_doc,
        };
        // Cross-check against the recomputed stationary law when possible.
        let chain = ReversibleChain::new(space, rows, Some(provided))?;
        if chain.is_irreducible() {
            let recomputed = stationary_from_q(&chain.q, n)?;
            for i in 0..n {
                if (recomputed.w(i) - chain.mu().w(i)).abs() > 1e-8 {
                    return Err(Error::InvalidChain(format!(
                        "provided mu disagrees with stationary law at {i}"
                    )));
                }
            }
        }
        Ok(chain)
    }
}

/// The canonical two-state chain used across tests: mu = (1/2, 1/2),
/// Q = ((-1, 1), (1, -1)), unit distance.
pub fn two_state_chain() -> ReversibleChain {
    let sp = FiniteMetricSpace::from_line(&[0.0, 1.0], 0).unwrap();
    ReversibleChain::new(
        sp,
        vec![vec![-1.0, 1.0], vec![1.0, -1.0]],
        Some(Measure::new(vec![0.5, 0.5]).unwrap()),
    )
    .unwrap()
}

/// Two-state chain with arbitrary stationary weight on the first state.
pub fn two_state_asymmetric(mu1: f64) -> Result<ReversibleChain> {
    if !(mu1 > 0.0 && mu1 < 1.0) {
        return Err(Error::InvalidParameter(format!("mu1 = {mu1}")));
    }
    let sp = FiniteMetricSpace::from_line(&[0.0, 1.0], 0)?;
    ReversibleChain::new(
        sp,
        vec![vec![-(1.0 - mu1), 1.0 - mu1], vec![mu1, -mu1]],
        Some(Measure::new(vec![mu1, 1.0 - mu1])?),
    )
}

/// Uniformly reversible chain on the complete graph: Q_ij = 1/n off-diagonal.
pub fn complete_graph_chain(n: usize) -> ReversibleChain {
    let pts: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let sp = FiniteMetricSpace::from_line(&pts, 0).unwrap();
    let mut q = vec![vec![0.0; n]; n];
    for (i, row) in q.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = if i == j {
                -((n - 1) as f64) / n as f64
            } else {
                1.0 / n as f64
            };
        }
    }
    ReversibleChain::new(sp, q, Some(Measure::uniform(n))).unwrap()
}

/// Random reversible chain on n states: random point metric, random
/// stationary weights, rates from a symmetric conductance matrix.
pub fn random_reversible(n: usize, seed: u64) -> ReversibleChain {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = vec![0.0f64];
    for _ in 1..n {
        let last = *pts.last().unwrap();
        pts.push(last + rng.random_range(0.3..1.5));
    }
    let sp = FiniteMetricSpace::from_line(&pts, 0).unwrap();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let mu = Measure::normalized(w).unwrap();
    // symmetric conductances c_ij = c_ji > 0, rates Q_ij = c_ij / mu_i
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let x = rng.random_range(0.05..1.0);
            c[i][j] = x;
            c[j][i] = x;
        }
    }
    let mut q = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut sum = 0.0;
        for j in 0..n {
            if i != j {
                q[i][j] = c[i][j] / mu.w(i);
                sum += q[i][j];
            }
        }
        q[i][i] = -sum;
    }
    ReversibleChain::new(sp, q, Some(mu)).unwrap()
}

/// Random irreducible birth-death chain on an n-point random grid.
pub fn random_birth_death(n: usize, seed: u64) -> ReversibleChain {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = vec![0.0f64];
    for _ in 1..n {
        let last = *pts.last().unwrap();
        pts.push(last + rng.random_range(0.2..1.0));
    }
    let sp = FiniteMetricSpace::from_line(&pts, 0).unwrap();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let mu = Measure::normalized(w).unwrap();
    let mut q = vec![vec![0.0; n]; n];
    for i in 0..n - 1 {
        let c = rng.random_range(0.1..1.0); // conductance of edge (i, i+1)
        q[i][i + 1] = c / mu.w(i);
        q[i + 1][i] = c / mu.w(i + 1);
    }
    for i in 0..n {
        let sum: f64 = (0..n).filter(|&j| j != i).map(|j| q[i][j]).sum();
        q[i][i] = -sum;
    }
    ReversibleChain::new(sp, q, Some(mu)).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirichlet_two_state() {
        let chain = two_state_chain();
        let g = [0.0, 1.0];
        let e = chain.dirichlet_form(&g, &g).unwrap();
        assert!((e - 0.5).abs() < 1e-15);
        // constants are in the kernel
        assert!(chain.dirichlet_form(&[3.0, 3.0], &g).unwrap().abs() < 1e-15);
    }

    #[test]
    fn dirichlet_symmetry_random() {
        let chain = random_reversible(6, 3);
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let g: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let egh = chain.dirichlet_form(&g, &h).unwrap();
            let ehg = chain.dirichlet_form(&h, &g).unwrap();
            assert!((egh - ehg).abs() < 1e-12);
            // matrix route: -<Qh, g>_mu agrees with the double sum
            let qh = chain.apply(&h).unwrap();
            let inner: f64 = (0..6).map(|i| chain.mu().w(i) * qh[i] * g[i]).sum();
            assert!((egh + inner).abs() < 1e-12);
        }
    }

    #[test]
    fn carre_du_champ_two_state() {
        let chain = two_state_chain();
        let g = [0.0, 1.0];
        let gamma = chain.carre_du_champ(&g, &g).unwrap();
        assert!((gamma[0] - 0.5).abs() < 1e-15 && (gamma[1] - 0.5).abs() < 1e-15);
        // mu-integral equals the Dirichlet form
        let int: f64 = (0..2).map(|i| chain.mu().w(i) * gamma[i]).sum();
        assert!((int - chain.dirichlet_form(&g, &g).unwrap()).abs() < 1e-15);
        // constants vanish
        let z = chain.carre_du_champ(&[2.0, 2.0], &[2.0, 2.0]).unwrap();
        assert!(z.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn fisher_two_state() {
        let chain = two_state_chain();
        let mu = chain.mu().clone();
        assert_eq!(chain.fisher_information(&Density::one(2)).unwrap(), 0.0);
        let f = Density::new(vec![1.5, 0.5], &mu).unwrap();
        let i = chain.fisher_information(&f).unwrap();
        let expect = 0.5 * (1.5f64.sqrt() - 0.5f64.sqrt()).powi(2);
        assert!((i - expect).abs() < 1e-12, "{i} vs {expect}");
    }

    #[test]
    fn poincare_two_state_and_complete_graph() {
        let chain = two_state_chain();
        let (c_p, g) = chain.poincare_constant().unwrap();
        assert!((c_p - 0.5).abs() < 1e-10);
        let var = chain.mu().variance(&g);
        let e = chain.dirichlet_form(&g, &g).unwrap();
        assert!((var / e - c_p).abs() < 1e-8 * c_p);

        let k = complete_graph_chain(7);
        let (c_p, _) = k.poincare_constant().unwrap();
        assert!((c_p - 1.0).abs() < 1e-9, "complete graph c_P = {c_p}");
    }

    #[test]
    fn poisson_two_state() {
        let chain = two_state_chain();
        // g constant -> G = 0
        let sol = chain.poisson_solve(&[4.0, 4.0]).unwrap();
        assert!(sol.g_fun.iter().all(|x| x.abs() < 1e-12));
        // g = (-1/2, 1/2) is an eigenfunction of -Q with eigenvalue 2, so
        // G = g / 2 = (-1/4, 1/4).
        let sol = chain.poisson_solve(&[-0.5, 0.5]).unwrap();
        assert!((sol.g_fun[0] + 0.25).abs() < 1e-12);
        assert!((sol.g_fun[1] - 0.25).abs() < 1e-12);
        assert!((sol.lip_norm - 0.5).abs() < 1e-12);
    }

    #[test]
    fn poisson_eigenfunction_identity() {
        // eigenfunction g of -Q with eigenvalue lambda -> G = g / lambda
        let chain = random_birth_death(9, 5);
        let (c_p, g) = chain.poincare_constant().unwrap();
        let lam = 1.0 / c_p;
        let sol = chain.poisson_solve(&g).unwrap();
        for i in 0..9 {
            assert!(
                (sol.g_fun[i] - g[i] / lam).abs() < 1e-7 * (1.0 + g[i].abs()),
                "state {i}"
            );
        }
    }

    #[test]
    fn birth_death_solver_matches_dense() {
        let chain = random_birth_death(12, 8);
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
        let fast = chain.poisson_solve(&g).unwrap();
        // dense route on the same chain
        let mut dense_chain = chain.clone();
        dense_chain.birth_death = false;
        let dense = dense_chain.poisson_solve(&g).unwrap();
        for i in 0..12 {
            assert!((fast.g_fun[i] - dense.g_fun[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn lipschitz_constant_two_state() {
        let chain = two_state_chain();
        let b = chain
            .lipschitz_poisson_constant(&LipschitzConstantOpts::default())
            .unwrap();
        assert!(b.exact);
        assert!((b.lower - 0.5).abs() < 1e-10, "bracket {:?}", b.lower);
    }

    #[test]
    fn lipschitz_constant_exact_paths_agree() {
        // birth-death fast path vs the pairwise KR path on the same chain
        let chain = random_birth_death(9, 21);
        let fast = chain
            .lipschitz_poisson_constant(&LipschitzConstantOpts::default())
            .unwrap();
        let mut general = chain.clone();
        general.birth_death = false;
        let slow = general
            .lipschitz_poisson_constant(&LipschitzConstantOpts::default())
            .unwrap();
        assert!(fast.exact && slow.exact);
        assert!(
            (fast.lower - slow.lower).abs() < 1e-8 * fast.lower,
            "{} vs {}",
            fast.lower,
            slow.lower
        );
    }

    #[test]
    fn sigma_two_state_and_scaling() {
        let chain = two_state_chain();
        assert!((chain.sigma_gamma_bound() - 0.5f64.sqrt()).abs() < 1e-15);
        // doubling all rates multiplies sigma by sqrt 2
        let sp = FiniteMetricSpace::from_line(&[0.0, 1.0], 0).unwrap();
        let doubled = ReversibleChain::new(
            sp,
            vec![vec![-2.0, 2.0], vec![2.0, -2.0]],
            Some(Measure::new(vec![0.5, 0.5]).unwrap()),
        )
        .unwrap();
        assert!(
            (doubled.sigma_gamma_bound() - 2f64.sqrt() * chain.sigma_gamma_bound()).abs() < 1e-12
        );
    }

    #[test]
    fn asymptotic_variance_two_state() {
        let chain = two_state_chain();
        assert!(chain.asymptotic_variance(&[2.0, 2.0]).unwrap().abs() < 1e-14);
        // g = (-1/2, 1/2): eigenfunction with lambda = 2, Var = 1/4,
        // so V = 2 Var / lambda = 1/4.
        let v = chain.asymptotic_variance(&[-0.5, 0.5]).unwrap();
        assert!((v - 0.25).abs() < 1e-12, "V = {v}");
        // eigenfunction identity V = 2 Var / lambda for the gap direction
        let (c_p, g) = chain.poincare_constant().unwrap();
        let v = chain.asymptotic_variance(&g).unwrap();
        let expect = 2.0 * chain.mu().variance(&g) * c_p;
        assert!((v - expect).abs() < 1e-10);
    }

    #[test]
    fn fisher_permutation_equivariance() {
        let chain = random_reversible(5, 77);
        let mu = chain.mu().clone();
        let f = Density::normalized(vec![0.4, 1.3, 2.0, 0.1, 0.9], &mu).unwrap();
        let i0 = chain.fisher_information(&f).unwrap();
        // permute states by reversal
        let n = 5;
        let perm: Vec<usize> = (0..n).rev().collect();
        let pts_rev: Vec<f64> = {
            let line = chain.space().line().unwrap();
            let max = line[n - 1];
            (0..n).map(|i| max - line[perm[i]]).collect()
        };
        let sp = FiniteMetricSpace::from_line(&pts_rev, 0).unwrap();
        let q: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| chain.q(perm[i], perm[j])).collect())
            .collect();
        let mu_p = Measure::new(perm.iter().map(|&k| mu.w(k)).collect()).unwrap();
        let chain_p = ReversibleChain::new(sp, q, Some(mu_p.clone())).unwrap();
        let f_p = Density::new(perm.iter().map(|&k| f.values()[k]).collect(), &mu_p).unwrap();
        let i1 = chain_p.fisher_information(&f_p).unwrap();
        assert!((i0 - i1).abs() < 1e-12);
    }

    #[test]
    fn stationary_recomputed_when_missing() {
        let sp = FiniteMetricSpace::from_line(&[0.0, 1.0], 0).unwrap();
        let chain = ReversibleChain::new(
            sp,
            vec![vec![-0.3, 0.3], vec![0.7, -0.7]],
            None,
        )
        .unwrap();
        assert!((chain.mu().w(0) - 0.7).abs() < 1e-12);
        assert!((chain.mu().w(1) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn chain_doc_roundtrip() {
        let chain = random_birth_death(6, 9);
        let doc = ChainDoc::from_chain(&chain);
        let text = serde_json::to_string(&doc).unwrap();
        let back: ChainDoc = serde_json::from_str(&text).unwrap();
        let chain2 = back.into_chain().unwrap();
        assert_eq!(chain2.n(), chain.n());
        assert!((chain2.q(2, 3) - chain.q(2, 3)).abs() < 1e-15);
    }

    #[test]
    fn reducible_rejected_unless_allowed() {
        let sp = FiniteMetricSpace::from_line(&[0.0, 1.0, 5.0, 6.0], 0).unwrap();
        let q = vec![
            vec![-1.0, 1.0, 0.0, 0.0],
            vec![1.0, -1.0, 0.0, 0.0],
            vec![0.0, 0.0, -1.0, 1.0],
            vec![0.0, 0.0, 1.0, -1.0],
        ];
        let mu = Measure::uniform(4);
        assert!(matches!(
            ReversibleChain::new(sp.clone(), q.clone(), Some(mu.clone())),
            Err(Error::Reducible(_))
        ));
        let chain = ReversibleChain::new_allow_reducible(sp, q, mu).unwrap();
        assert!(!chain.is_irreducible());
        assert!(matches!(
            chain.poincare_constant(),
            Err(Error::Reducible(_))
        ));
    }
}
