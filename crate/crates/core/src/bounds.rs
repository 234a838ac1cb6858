//! A priori bounds for the multi-space Chebyshev radius.
//!
//! For a nested hierarchy `V_0 ⊂ … ⊂ V_n` with tolerances `ε_0 ≥ … ≥ ε_n`,
//! the set `K_0` of elements of `W⊥` satisfying every approximability
//! constraint is an intersection of ellipsoids centered at the origin. Its
//! radius is bounded by
//!
//! `E² = ε_n² + δ θ_k² + Σ_{j>k} θ_j²`
//!
//! where `θ_i = Σ_j |λ_{i,j}| ε_{j−1}` are box bounds on the coordinates in
//! the favorable basis of `(V_n, W)`, `λ_{i,j} = ⟨φ_j, φ*_i⟩` is the change
//! of basis, `k` is the largest index whose tail `Σ_{j≥k} s_j² θ_j²` still
//! reaches the budget `ε_n²`, and `δ ∈ (0, 1]` splits the budget at `k`.
//! The same construction applied to a subsequence `Γ ⊆ {0..n}` yields bounds
//! `E_Γ`, whose minimum improves on any single choice. The classical
//! alternative `min_j μ(V_j, W) ε_j` is provided for comparison; the best
//! subsequence bound is never worse than `√2` times that minimum.

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::onespace::{favorable_bases, FavorableBasis, Measurements, BETA_FLOOR, TOL_ONE};
use crate::par;
use crate::space::{ensure_finite, Subspace, ORTHO_TOL};
use crate::Result;

/// Largest hierarchy depth for which exhaustive subset search is allowed
/// (`2^(n+1)` subsets).
pub const MAX_EXHAUSTIVE_DEPTH: usize = 12;

/// Relative slack when testing whether a budget tail reaches `ε²`, so that
/// exact-tie constructions select the intended index despite rounding.
const BUDGET_TIE_TOL: f64 = 1e-12;

/// A nested hierarchy of subspaces given by an orthonormal basis whose
/// prefixes span the levels, with one tolerance per level.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    phi: DMatrix<f64>,
    eps: Vec<f64>,
}

impl Hierarchy {
    /// Build from a `D × n` matrix with orthonormal columns (prefix `j`
    /// spans `V_j`) and tolerances `ε_0 ≥ … ≥ ε_n > 0`.
    pub fn new(phi: DMatrix<f64>, eps: Vec<f64>) -> Result<Self> {
        ensure_finite(&phi, "hierarchy basis")?;
        let n = phi.ncols();
        if eps.len() != n + 1 {
            return Err(Error::DimensionMismatch {
                context: "tolerance sequence",
                expected: n + 1,
                got: eps.len(),
            });
        }
        if eps.iter().any(|e| !e.is_finite() || *e <= 0.0) {
            return Err(Error::BadTolerances("tolerances must be positive"));
        }
        if eps.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::BadTolerances("tolerances must be non-increasing"));
        }
        let gram = phi.transpose() * &phi;
        let dev = (&gram - DMatrix::<f64>::identity(n, n))
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        if dev > ORTHO_TOL {
            return Err(Error::RankDeficient(
                "hierarchy basis columns are not orthonormal",
            ));
        }
        Ok(Hierarchy { phi, eps })
    }

    /// Depth `n` (the top level index; there are `n + 1` levels).
    pub fn depth(&self) -> usize {
        self.phi.ncols()
    }

    /// Ambient dimension.
    pub fn ambient_dim(&self) -> usize {
        self.phi.nrows()
    }

    /// Tolerances `ε_0 ..= ε_n`.
    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    /// The full basis matrix.
    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    /// The level space `V_j` spanned by the first `j` basis columns.
    pub fn level(&self, j: usize) -> Result<Subspace> {
        if j > self.depth() {
            return Err(Error::DimensionMismatch {
                context: "hierarchy level",
                expected: self.depth(),
                got: j,
            });
        }
        if j == 0 {
            return Ok(Subspace::zero(self.ambient_dim()));
        }
        Subspace::from_orthonormal(self.phi.columns(0, j).into_owned())
    }

    /// The top space `V_n`.
    pub fn top(&self) -> Subspace {
        self.level(self.depth()).expect("top level always exists")
    }

    /// Distance from `x` to level `j`.
    pub fn level_distance(&self, j: usize, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch {
                context: "level distance",
                expected: self.ambient_dim(),
                got: x.len(),
            });
        }
        if j > self.depth() {
            return Err(Error::DimensionMismatch {
                context: "hierarchy level",
                expected: self.depth(),
                got: j,
            });
        }
        if j == 0 {
            return Ok(x.norm());
        }
        let cols = self.phi.columns(0, j);
        let coeff = cols.transpose() * x;
        Ok((x - cols * coeff).norm())
    }

    /// Whether `x` satisfies every level constraint `dist(x, V_j) ≤ ε_j`,
    /// with an absolute-plus-relative slack of `tol`.
    pub fn in_model_set(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        for j in 0..=self.depth() {
            if self.level_distance(j, x)? > self.eps[j] + tol * (1.0 + self.eps[j]) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Copy with all tolerances scaled by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Hierarchy::new(self.phi.clone(), self.eps.iter().map(|e| c * e).collect())
    }
}

/// An evaluated a priori radius bound.
#[derive(Debug, Clone)]
pub struct AprioriBound {
    /// Box bounds `θ_1..θ_τ` on the favorable-basis coordinates
    /// (`τ = max Γ`); entries may be infinite for subsequences that leave
    /// low coordinates box-unconstrained.
    pub theta: Vec<f64>,
    /// Budget index: `0` when even the full tail misses the budget.
    pub k: usize,
    /// Budget fraction at index `k`; meaningful only when `k ≥ 1`.
    pub delta: f64,
    /// Top-level tolerance `ε_τ` of the (relabeled) hierarchy.
    pub eps_top: f64,
    /// The bound `E_Γ` on `rad(K_0)`.
    pub value: f64,
    /// The index subset the bound was computed over.
    pub gamma_set: Vec<usize>,
}

impl AprioriBound {
    /// Re-evaluate `E` from the stored fields; equals [`value`](Self::value)
    /// up to rounding.
    pub fn recompute(&self) -> f64 {
        let mut e2 = self.eps_top * self.eps_top;
        if self.k >= 1 {
            let th = self.theta[self.k - 1];
            e2 += self.delta * th * th;
        }
        for j in self.k..self.theta.len() {
            e2 += self.theta[j] * self.theta[j];
        }
        e2.sqrt()
    }
}

/// Subset search strategy for [`best_subset_e`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetStrategy {
    /// All `2^(n+1) − 1` non-empty subsets; allowed for `n ≤ 12`.
    Exhaustive,
    /// The prefixes `Γ = {0..j}` only.
    Prefixes,
}

/// The change-of-basis matrix `Λ_{i,j} = ⟨φ_j, φ*_i⟩` between the hierarchy
/// basis and the favorable basis of the top level.
pub fn lambda_matrix(hier: &Hierarchy, fav: &FavorableBasis) -> Result<DMatrix<f64>> {
    let n = hier.depth();
    if fav.phi_star().ncols() != n || fav.phi_star().nrows() != hier.ambient_dim() {
        return Err(Error::DimensionMismatch {
            context: "lambda matrix",
            expected: n,
            got: fav.phi_star().ncols(),
        });
    }
    Ok(fav.phi_star().transpose() * hier.phi())
}

/// Box bounds `θ_i = Σ_j |λ_{i,j}| b_j` on the favorable-basis coordinates,
/// given per-coordinate bounds `b_j` (for the full hierarchy,
/// `b_j = ε_{j−1}`). Entries of `b` may be `+∞`; zero weights never produce
/// NaN against them.
pub fn theta_bounds(lambda: &DMatrix<f64>, coordinate_bounds: &[f64]) -> Vec<f64> {
    let n = lambda.nrows();
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (j, &b) in coordinate_bounds.iter().enumerate() {
                let lam = lambda[(i, j)].abs();
                if lam > 0.0 {
                    acc += lam * b;
                }
            }
            acc
        })
        .collect()
}

/// Choose the budget index `k` (largest with `Σ_{j≥k} s_j² θ_j² ≥ ε²`) and
/// the fraction `δ` with `δ s_k² θ_k² + Σ_{j>k} s_j² θ_j² = ε²`.
///
/// Returns `k = 0` (with `δ` unused, set to one) when even the full sum
/// misses the budget. Near-exact ties resolve toward the larger `k`.
pub fn select_k_delta(s: &[f64], theta: &[f64], eps_top: f64) -> Result<(usize, f64)> {
    let n = s.len();
    if theta.len() != n {
        return Err(Error::DimensionMismatch {
            context: "budget selection",
            expected: n,
            got: theta.len(),
        });
    }
    if !(eps_top > 0.0) {
        return Err(Error::BadTolerances("budget must be positive"));
    }
    let budget = eps_top * eps_top;
    let mut tail = 0.0f64;
    let mut k = 0usize;
    for j in (1..=n).rev() {
        tail += term(s[j - 1], theta[j - 1]);
        if tail >= budget * (1.0 - BUDGET_TIE_TOL) {
            k = j;
            break;
        }
    }
    if k == 0 {
        return Ok((0, 1.0));
    }
    let tail_above: f64 = (k..n).map(|j| term(s[j], theta[j])).sum();
    let head = term(s[k - 1], theta[k - 1]);
    if head <= 0.0 {
        return Err(Error::DegenerateTheta(k));
    }
    let delta = if theta[k - 1].is_finite() {
        ((budget - tail_above) / head).min(1.0)
    } else {
        0.0
    };
    Ok((k, delta))
}

fn term(s: f64, theta: f64) -> f64 {
    if theta == 0.0 {
        0.0
    } else {
        s * s * theta * theta
    }
}

/// The a priori bound `E_Γ` on `rad(K_0)` for an index subset `Γ`
/// (default: the full set `{0..n}`). The subset is relabeled as a hierarchy
/// with top level `max Γ`; coordinate `i` of the top space is box-bounded by
/// the tightest tolerance `ε_γ` with `γ ∈ Γ`, `γ < i` (infinite when no such
/// `γ` exists — the budget constraint still keeps `E_Γ` finite).
pub fn apriori_e(
    hier: &Hierarchy,
    meas: &Measurements,
    gamma: Option<&[usize]>,
) -> Result<AprioriBound> {
    let n = hier.depth();
    let full: Vec<usize> = (0..=n).collect();
    let mut gamma_set: Vec<usize> = match gamma {
        None => full,
        Some(g) => {
            let mut g = g.to_vec();
            g.sort_unstable();
            g.dedup();
            if g.is_empty() {
                return Err(Error::BadTolerances("subset must contain an index"));
            }
            if *g.last().unwrap() > n {
                return Err(Error::DimensionMismatch {
                    context: "subset index",
                    expected: n,
                    got: *g.last().unwrap(),
                });
            }
            g
        }
    };
    gamma_set.shrink_to_fit();
    let top = *gamma_set.last().unwrap();
    let eps_top = hier.eps()[top];
    if top == 0 {
        return Ok(AprioriBound {
            theta: Vec::new(),
            k: 0,
            delta: 1.0,
            eps_top,
            value: eps_top,
            gamma_set,
        });
    }
    let v_top = hier.level(top)?;
    let fav = favorable_bases(meas, &v_top, TOL_ONE)?;
    let sub = Hierarchy::new(
        hier.phi().columns(0, top).into_owned(),
        hier.eps()[..=top].to_vec(),
    )?;
    let lambda = lambda_matrix(&sub, &fav)?;
    let b = coordinate_bounds(&gamma_set, hier.eps(), top);
    let theta = theta_bounds(&lambda, &b);
    let s = fav.singular_values();
    let (k, delta) = select_k_delta(s, &theta, eps_top)?;
    let value = assemble_e(eps_top, s, &theta, k, delta);
    Ok(AprioriBound {
        theta,
        k,
        delta,
        eps_top,
        value,
        gamma_set,
    })
}

/// Per-coordinate box bounds for a subset: `b_i = ε_{max{γ ∈ Γ : γ < i}}`,
/// infinite when the subset has no index below `i`.
fn coordinate_bounds(gamma: &[usize], eps: &[f64], top: usize) -> Vec<f64> {
    (1..=top)
        .map(|i| {
            gamma
                .iter()
                .copied()
                .filter(|&g| g < i)
                .next_back()
                .map(|g| eps[g])
                .unwrap_or(f64::INFINITY)
        })
        .collect()
}

fn assemble_e(eps_top: f64, s: &[f64], theta: &[f64], k: usize, delta: f64) -> f64 {
    let mut e2 = eps_top * eps_top;
    if k >= 1 {
        let th = theta[k - 1];
        e2 += if th.is_finite() {
            delta * th * th
        } else {
            // δ θ_k² in the limit δ → 0, θ_k → ∞: the leftover budget spent
            // at cost s_k².
            let tail_above: f64 = (k..theta.len()).map(|j| term(s[j], theta[j])).sum();
            (eps_top * eps_top - tail_above) / (s[k - 1] * s[k - 1])
        };
    }
    for j in k..theta.len() {
        e2 += theta[j] * theta[j];
    }
    e2.sqrt()
}

/// Stability constants per level: `μ_0 = 1` and `μ_j = 1/σ_min(G_j)` where
/// `G_j` is the cross-Gramian of `W` with the first `j` hierarchy columns.
/// Levels with `σ_min ≤ 1e-12` report `+∞`. Each level gets an independent
/// SVD: prefix singular values coincide across levels only in the aligned
/// case.
pub fn per_level_mu(hier: &Hierarchy, meas: &Measurements) -> Result<Vec<f64>> {
    let n = hier.depth();
    let m = meas.len();
    if hier.ambient_dim() != meas.ambient_dim() {
        return Err(Error::DimensionMismatch {
            context: "per-level stability",
            expected: hier.ambient_dim(),
            got: meas.ambient_dim(),
        });
    }
    let omega_t = meas.w_space().basis().transpose();
    let mus = par::map_range(n, |idx| {
        let j = idx + 1;
        if j > m {
            return f64::INFINITY;
        }
        let g = &omega_t * hier.phi().columns(0, j);
        let sv = g.singular_values();
        let smin = sv[sv.len() - 1];
        if smin <= BETA_FLOOR {
            f64::INFINITY
        } else {
            1.0 / smin
        }
    });
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    out.extend(mus);
    Ok(out)
}

/// The classical one-space bound `min_j μ(V_j, W) ε_j` with its argmin.
/// Near-ties (`1e-12` relative) resolve toward the smaller level; infinite
/// levels are skipped unless every level is infinite.
pub fn one_space_min_bound(hier: &Hierarchy, meas: &Measurements) -> Result<(f64, usize)> {
    let mus = per_level_mu(hier, meas)?;
    let products: Vec<f64> = mus
        .iter()
        .zip(hier.eps().iter())
        .map(|(&mu, &e)| mu * e)
        .collect();
    let vmin = products.iter().copied().fold(f64::INFINITY, f64::min);
    if vmin.is_infinite() {
        return Ok((f64::INFINITY, 0));
    }
    let argmin = products
        .iter()
        .position(|&v| v <= vmin * (1.0 + 1e-12))
        .unwrap_or(0);
    Ok((products[argmin], argmin))
}

/// Minimize `E_Γ` over subsets of `{0..n}`. Prefix search always evaluates
/// the `n + 1` prefixes; exhaustive search enumerates every non-empty subset
/// and requires `n ≤ 12`. Rank-deficient top levels are skipped (their
/// subsets bound nothing), so the result is never worse than `E_{{0}} = ε_0`.
pub fn best_subset_e(
    hier: &Hierarchy,
    meas: &Measurements,
    strategy: SubsetStrategy,
) -> Result<(Vec<usize>, f64)> {
    let n = hier.depth();
    let candidates: Vec<Vec<usize>> = match strategy {
        SubsetStrategy::Prefixes => (0..=n).map(|j| (0..=j).collect()).collect(),
        SubsetStrategy::Exhaustive => {
            if n > MAX_EXHAUSTIVE_DEPTH {
                return Err(Error::SubsetTooLarge {
                    n,
                    max: MAX_EXHAUSTIVE_DEPTH,
                });
            }
            (1u32..1 << (n + 1))
                .map(|mask| (0..=n).filter(|j| mask >> j & 1 == 1).collect())
                .collect()
        }
    };
    let values = par::map_slice(&candidates, |gamma| {
        match apriori_e(hier, meas, Some(gamma)) {
            Ok(bound) => bound.value,
            Err(_) => f64::INFINITY,
        }
    });
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    if values[best].is_infinite() {
        return Err(Error::RankDeficient("every candidate subset is degenerate"));
    }
    Ok((candidates[best].clone(), values[best]))
}
