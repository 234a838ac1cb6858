//! Multi-space recovery by projections onto convex sets.
//!
//! The data-consistent set is the intersection of the affine data plane
//! `H_w = {u : P_W u = w}` with the constraint sets
//! `K^j = {u : dist(u, V_j) ≤ ε_j}`. The search is reduced without loss to
//! the finite-dimensional frame `F = V_n + W`, inside which both kinds of
//! projection are a few dot products:
//!
//! * `P_{H_w} u = u − Σ ⟨u, ω_i⟩ ω_i + w`;
//! * `P_{K^j} u` keeps the first `j` frame coordinates and shrinks the tail
//!   to norm `ε_j`.
//!
//! Two iterations are provided. The cyclic solver applies
//! `P_{K^n} ⋯ P_{K^0} P_{H_w}` per cycle; nestedness keeps every iterate in
//! `K = ∩ K^j`, so the computable quantity `α_k = dist(u^k, H_w)` feeds the
//! a posteriori bound `dist(u^k, K_w)² ≤ α_k² + ρ(α_k)²` with
//! `ρ(α) = max_j μ_j (α + 4√(α ε_j))`. The averaged solver iterates
//! `P_{H_w} (Σ_j γ_j P_{K^j})`, a projected gradient step for
//! `Σ_j γ_j dist(u, K^j)²/2` over `H_w`; its iterates live in `H_w` and the
//! stopping quantity is the weighted residual `√(Σ_j γ_j dist(u, K^j)²)`.

use nalgebra::{DMatrix, DVector};

use crate::bounds::{per_level_mu, Hierarchy};
use crate::error::Error;
use crate::onespace::{favorable_bases, sum_space_basis, Measurements, TOL_ONE};
use crate::par;
use crate::space::from_columns;
use crate::Result;

/// Stopping-quantity values at or below `32 ε_machine (1 + ‖w‖)` are treated
/// as exact feasibility: below this floor the computed residual carries only
/// rounding noise, which the `√α` term of the a posteriori bound would
/// otherwise amplify into a permanently positive stopping quantity.
const FLOOR_ULPS: f64 = 32.0;

/// The reduced frame: an orthonormal basis of `F = V_n + W` whose first `n`
/// columns are the hierarchy basis, plus the data expressed in frame
/// coordinates.
#[derive(Debug, Clone)]
pub struct ReducedFrame {
    columns: DMatrix<f64>,
    n: usize,
    p: usize,
    omega_frame: DMatrix<f64>,
    w_frame: DVector<f64>,
    w_coef: DVector<f64>,
}

impl ReducedFrame {
    /// Frame dimension `d = m + n − p`.
    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    /// Hierarchy depth `n`: the first `n` frame coordinates are the model
    /// coordinates, in level order.
    pub fn depth(&self) -> usize {
        self.n
    }

    /// Ambient dimension.
    pub fn ambient_dim(&self) -> usize {
        self.columns.nrows()
    }

    /// `dim(V_n ∩ W)`.
    pub fn intersection_dim(&self) -> usize {
        self.p
    }

    /// The `D × d` orthonormal basis of `F`.
    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    /// Frame coordinates of the observed element.
    pub fn w_frame(&self) -> &DVector<f64> {
        &self.w_frame
    }

    /// Project an ambient vector into frame coordinates.
    pub fn to_frame(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch {
                context: "frame reduction",
                expected: self.ambient_dim(),
                got: x.len(),
            });
        }
        Ok(self.columns.transpose() * x)
    }

    /// Reconstruct the ambient vector of a frame-coordinate vector.
    pub fn from_frame(&self, c: &DVector<f64>) -> Result<DVector<f64>> {
        if c.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "frame reconstruction",
                expected: self.dim(),
                got: c.len(),
            });
        }
        Ok(&self.columns * c)
    }

    /// Projection onto the data plane `H_w` in frame coordinates:
    /// `u − Σ ⟨u, ω_i⟩ ω_i + w`.
    pub fn project_hw(&self, u: &DVector<f64>) -> DVector<f64> {
        let coef = self.omega_frame.transpose() * u;
        u - &self.omega_frame * coef + &self.w_frame
    }

    /// Euclidean projection onto `K^j` in frame coordinates: keep the first
    /// `j` coordinates, shrink the tail to norm at most `eps_j`. Returns the
    /// input unchanged (bit for bit) when already inside.
    pub fn project_level(&self, u: &DVector<f64>, j: usize, eps_j: f64) -> DVector<f64> {
        let d = self.dim();
        let tail = u.rows(j, d - j).norm();
        if tail <= eps_j {
            return u.clone();
        }
        let mut out = u.clone();
        let scale = eps_j / tail;
        for i in j..d {
            out[i] *= scale;
        }
        out
    }

    /// Distance from a frame point to the data plane, `‖P_W u − w‖`.
    pub fn alpha(&self, u: &DVector<f64>) -> f64 {
        (self.omega_frame.transpose() * u - &self.w_coef).norm()
    }

    /// Norm of the tail coordinates beyond level `j`.
    pub fn tail_norm(&self, u: &DVector<f64>, j: usize) -> f64 {
        u.rows(j, self.dim() - j).norm()
    }
}

/// Reduce the problem to `F = V_n + W`. The frame keeps every constraint
/// intact: projecting any ambient point onto `F` only removes its
/// `V_n⊥ ∩ W⊥` component, which affects neither the measurements nor any
/// level distance beyond shrinking it.
pub fn reduce_to_frame(hier: &Hierarchy, meas: &Measurements) -> Result<ReducedFrame> {
    let top = hier.top();
    let fav = favorable_bases(meas, &top, TOL_ONE)?;
    let cols = sum_space_basis(&top, &fav);
    let columns = from_columns(hier.ambient_dim(), &cols);
    let omega_frame = columns.transpose() * meas.w_space().basis();
    let w_frame = columns.transpose() * meas.w_vec();
    let w_coef = meas.w_coefficients();
    Ok(ReducedFrame {
        columns,
        n: hier.depth(),
        p: fav.intersection_dim(),
        omega_frame,
        w_frame,
        w_coef,
    })
}

/// The a posteriori lateral bound `ρ(α) = max_j μ_j (α + 4 √(α ε_j))`.
///
/// `ρ(0) = 0` and `ρ` is strictly increasing in `α`. Fails with
/// [`Error::InfiniteMu`] when any level constant is infinite.
pub fn rho_aposteriori(alpha: f64, mu_levels: &[f64], eps: &[f64]) -> Result<f64> {
    if mu_levels.len() != eps.len() {
        return Err(Error::DimensionMismatch {
            context: "a posteriori bound",
            expected: eps.len(),
            got: mu_levels.len(),
        });
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::NonFinite("alpha"));
    }
    if let Some(j) = mu_levels.iter().position(|m| !m.is_finite()) {
        return Err(Error::InfiniteMu(j));
    }
    if alpha == 0.0 {
        return Ok(0.0);
    }
    Ok(mu_levels
        .iter()
        .zip(eps.iter())
        .map(|(&mu, &e)| mu * (alpha + 4.0 * (alpha * e).sqrt()))
        .fold(0.0, f64::max))
}

/// Total error bound at a point `u` of the model set:
/// `√(α² + ρ(α)²) + 2 rad_bound` with `α = dist(u, H_w)` and `rad_bound` any
/// upper bound for the radius of the data-consistent set.
pub fn error_bound_at(
    u: &DVector<f64>,
    hier: &Hierarchy,
    meas: &Measurements,
    rad_bound: f64,
) -> Result<f64> {
    let alpha = (meas.w_space().basis().transpose() * u - meas.w_coefficients()).norm();
    let mus = per_level_mu(hier, meas)?;
    let rho = rho_aposteriori(alpha, &mus, hier.eps())?;
    Ok((alpha * alpha + rho * rho).sqrt() + 2.0 * rad_bound)
}

/// Feasibility report for one level.
#[derive(Debug, Clone)]
pub struct LevelFeasibility {
    pub level: usize,
    /// `min_{v ∈ V_j} ‖w − P_W v‖`, the part of the data no model element of
    /// this level can explain.
    pub defect: f64,
    pub eps: f64,
    pub pass: bool,
}

/// Necessary per-level feasibility conditions: level `j` can be consistent
/// with the data only if its recovery defect stays within `ε_j`. Joint
/// feasibility of the intersection is not certified.
pub fn feasibility_screen(hier: &Hierarchy, meas: &Measurements) -> Result<Vec<LevelFeasibility>> {
    if hier.ambient_dim() != meas.ambient_dim() {
        return Err(Error::DimensionMismatch {
            context: "feasibility screen",
            expected: hier.ambient_dim(),
            got: meas.ambient_dim(),
        });
    }
    let w_coef = meas.w_coefficients();
    let m = meas.len();
    // dist(w, P_W V_j) per level, via a rank-tolerant orthonormalization of
    // the projected basis (levels with β_j = 0 are handled gracefully).
    let projected = meas.w_space().basis().transpose() * hier.phi();
    let mut out = Vec::with_capacity(hier.depth() + 1);
    let mut span: Vec<DVector<f64>> = Vec::new();
    let mut residual = w_coef.clone();
    out.push(report(0, residual.norm(), hier.eps()[0]));
    for j in 1..=hier.depth() {
        let cand = projected.column(j - 1).into_owned();
        let added = crate::space::mgs_complete(&span, std::iter::once(cand), 1, 1e-12);
        for q in added {
            let c = q.dot(&residual);
            residual.axpy(-c, &q, 1.0);
            span.push(q);
        }
        let defect = if span.len() == m {
            0.0
        } else {
            residual.norm()
        };
        out.push(report(j, defect, hier.eps()[j]));
    }
    Ok(out)
}

fn report(level: usize, defect: f64, eps: f64) -> LevelFeasibility {
    LevelFeasibility {
        level,
        defect,
        eps,
        pass: defect <= eps * (1.0 + 1e-9),
    }
}

/// A ball guaranteed to lie inside the model set `K`: centered at the
/// midpoint of `u1, u2 ∈ K` with radius
/// `r = (1/8) min_j ε_j^{-1} ‖P_{V_j⊥}(u1 − u2)‖²`.
pub fn ecc_ball(
    u1: &DVector<f64>,
    u2: &DVector<f64>,
    hier: &Hierarchy,
) -> Result<(DVector<f64>, f64)> {
    for u in [u1, u2] {
        for j in 0..=hier.depth() {
            let dist = hier.level_distance(j, u)?;
            let eps = hier.eps()[j];
            if dist > eps + 1e-9 * (1.0 + eps) {
                return Err(Error::NotInK {
                    level: j,
                    dist,
                    eps,
                });
            }
        }
    }
    let diff = u1 - u2;
    let r = (0..=hier.depth())
        .map(|j| {
            let perp = hier.level_distance(j, &diff).expect("checked dims");
            perp * perp / hier.eps()[j]
        })
        .fold(f64::INFINITY, f64::min)
        / 8.0;
    Ok(((u1 + u2) / 2.0, r))
}

/// Which projection scheme to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Cyclic projections `P_{K^n} ⋯ P_{K^0} P_{H_w}`.
    Sequential,
    /// Averaged projections `P_{H_w} (Σ_j γ_j P_{K^j})`.
    Parallel,
}

/// Solver configuration. The defaults run the cyclic scheme from `u⁰ = w`
/// with uniform weights.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Averaging weights `γ_0..γ_n` (positive, summing to one); `None` means
    /// uniform `1/(n+1)`. Only the averaged scheme uses them.
    pub weights: Option<Vec<f64>>,
    pub max_iter: usize,
    /// Stop once the a posteriori stopping quantity falls to this value.
    pub tol_stop: f64,
    /// Cycles over which a relative decrease below `stall_eps` counts as a
    /// stall.
    pub stall_window: usize,
    pub stall_eps: f64,
    /// Record a trace row every this many cycles.
    pub trace_every: usize,
    /// Start point (in metric coordinates); `None` starts from `w`.
    pub start: Option<DVector<f64>>,
    /// Reference point for the `dist_ref` trace column (test instrumentation).
    pub reference: Option<DVector<f64>>,
    /// Assert per-cycle set membership (expensive; for debugging).
    pub debug_membership: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            algorithm: Algorithm::Sequential,
            weights: None,
            max_iter: 100_000,
            tol_stop: 1e-8,
            stall_window: 200,
            stall_eps: 1e-14,
            trace_every: 1,
            start: None,
            reference: None,
            debug_membership: false,
        }
    }
}

/// Terminal state of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// The stopping quantity reached the tolerance (or the rounding floor).
    Converged,
    /// The iteration budget ran out first.
    MaxIterations,
    /// The stopping quantity stalled at a level far above the tolerance,
    /// the signature of projections cycling across an empty intersection.
    StallSuspectedInfeasible,
}

/// One traced cycle. `post_bound² = alpha² + rho²` whenever both are
/// present. For the averaged scheme `alpha` is identically zero and `rho`
/// carries the weighted residual `√(Σ γ_j dist²)`; `rho`/`post_bound` are
/// absent when a level constant is infinite and only `alpha` is tracked.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    pub alpha: f64,
    pub rho: Option<f64>,
    pub post_bound: Option<f64>,
    pub dist_ref: Option<f64>,
}

/// Outcome of a solve.
#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Final iterate in metric coordinates.
    pub u_final: DVector<f64>,
    pub status: SolveStatus,
    /// Completed cycles.
    pub iterations: usize,
    pub trace: Vec<IterationRecord>,
    /// `√(α² + ρ(α)²)` at the final iterate; for the averaged scheme it is
    /// evaluated after one trailing composite projection onto `K` (the bound
    /// applies to points of the model set). Absent in α-only mode.
    pub final_bound: Option<f64>,
}

/// Run the cyclic-projection solver.
pub fn solve_sequential(
    hier: &Hierarchy,
    meas: &Measurements,
    config: &SolverConfig,
) -> Result<SolveResult> {
    let cfg = SolverConfig {
        algorithm: Algorithm::Sequential,
        ..config.clone()
    };
    solve(hier, meas, &cfg)
}

/// Run the averaged-projection solver.
pub fn solve_parallel(
    hier: &Hierarchy,
    meas: &Measurements,
    config: &SolverConfig,
) -> Result<SolveResult> {
    let cfg = SolverConfig {
        algorithm: Algorithm::Parallel,
        ..config.clone()
    };
    solve(hier, meas, &cfg)
}

/// Run the configured solver.
pub fn solve(hier: &Hierarchy, meas: &Measurements, config: &SolverConfig) -> Result<SolveResult> {
    for lvl in feasibility_screen(hier, meas)? {
        if !lvl.pass {
            log::warn!(
                "level {} fails the feasibility screen (defect {:.6e} > eps {:.6e}); \
                 the data-consistent set may be empty",
                lvl.level,
                lvl.defect,
                lvl.eps
            );
        }
    }
    let frame = reduce_to_frame(hier, meas)?;
    let eps = hier.eps().to_vec();
    let n = hier.depth();
    let mus = per_level_mu(hier, meas)?;
    let mus = if mus.iter().all(|m| m.is_finite()) {
        Some(mus)
    } else {
        None
    };
    let weights = match (&config.weights, config.algorithm) {
        (Some(g), Algorithm::Parallel) => {
            if g.len() != n + 1 {
                return Err(Error::DimensionMismatch {
                    context: "weights",
                    expected: n + 1,
                    got: g.len(),
                });
            }
            if g.iter().any(|x| !(x > &0.0)) {
                return Err(Error::BadTolerances("weights must be positive"));
            }
            let sum: f64 = g.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::BadTolerances("weights must sum to one"));
            }
            g.clone()
        }
        _ => vec![1.0 / (n + 1) as f64; n + 1],
    };
    let start = match &config.start {
        None => frame.w_frame().clone(),
        Some(s) => frame.to_frame(s)?,
    };
    let reference = match &config.reference {
        None => None,
        Some(r) => {
            let rf = frame.to_frame(r)?;
            let perp2 = (r - frame.from_frame(&rf)?).norm_squared();
            Some((rf, perp2))
        }
    };
    let floor = FLOOR_ULPS * f64::EPSILON * (1.0 + meas.w_vec().norm());

    let mut state = Driver {
        frame: &frame,
        eps: &eps,
        mus: mus.as_deref(),
        weights: &weights,
        config,
        reference,
        floor,
        trace: Vec::new(),
        best_val: f64::INFINITY,
        best_iter: 0,
    };
    match config.algorithm {
        Algorithm::Sequential => state.run_sequential(start),
        Algorithm::Parallel => state.run_parallel(start),
    }
}

struct Driver<'a> {
    frame: &'a ReducedFrame,
    eps: &'a [f64],
    mus: Option<&'a [f64]>,
    weights: &'a [f64],
    config: &'a SolverConfig,
    reference: Option<(DVector<f64>, f64)>,
    floor: f64,
    trace: Vec<IterationRecord>,
    best_val: f64,
    best_iter: usize,
}

enum Verdict {
    Continue,
    Stop(SolveStatus),
}

impl Driver<'_> {
    fn run_sequential(&mut self, start: DVector<f64>) -> Result<SolveResult> {
        let mut u = start;
        let mut iterations = 0;
        let mut status = SolveStatus::MaxIterations;
        for k in 1..=self.config.max_iter {
            u = self.frame.project_hw(&u);
            for j in 0..=self.hier_depth() {
                u = self.frame.project_level(&u, j, self.eps[j]);
            }
            if self.config.debug_membership {
                self.assert_in_model_set(&u, k);
            }
            iterations = k;
            let alpha = self.frame.alpha(&u);
            let (rho, post) = self.posterior(alpha)?;
            let stopping = post.unwrap_or(alpha);
            let verdict = self.step(k, alpha, rho, post, stopping, alpha, &u);
            if let Verdict::Stop(s) = verdict {
                status = s;
                break;
            }
        }
        let alpha = self.frame.alpha(&u);
        let final_bound = match self.posterior(alpha)? {
            (_, Some(post)) => Some(post),
            _ => None,
        };
        self.finish(u, status, iterations, final_bound)
    }

    fn run_parallel(&mut self, start: DVector<f64>) -> Result<SolveResult> {
        let mut u = self.frame.project_hw(&start);
        let mut iterations = 0;
        let mut status = SolveStatus::MaxIterations;
        for k in 1..=self.config.max_iter {
            iterations = k;
            let depth = self.hier_depth();
            let frame = self.frame;
            let eps = self.eps;
            let u_snapshot = &u;
            let projections =
                par::map_range(depth + 1, move |j| frame.project_level(u_snapshot, j, eps[j]));
            // Weighted residual and average, accumulated in increasing level
            // order so results do not depend on the execution schedule.
            let mut g = 0.0;
            let mut avg = DVector::zeros(frame.dim());
            for (j, pj) in projections.iter().enumerate() {
                g += self.weights[j] * (u_snapshot - pj).norm_squared();
                avg.axpy(self.weights[j], pj, 1.0);
            }
            let residual = g.sqrt();
            if self.config.debug_membership {
                let off = self.frame.alpha(&u);
                assert!(
                    off <= 1e-9 * (1.0 + self.frame.w_frame().norm()),
                    "cycle {k}: iterate left the data plane by {off:.3e}"
                );
            }
            let verdict = self.step(k, 0.0, Some(residual), Some(residual), residual, residual, &u);
            if let Verdict::Stop(s) = verdict {
                status = s;
                break;
            }
            u = self.frame.project_hw(&avg);
        }
        // The a posteriori bound applies to points of K: evaluate it after a
        // trailing composite projection of the final iterate.
        let mut uk = u.clone();
        for j in 0..=self.hier_depth() {
            uk = self.frame.project_level(&uk, j, self.eps[j]);
        }
        let alpha = self.frame.alpha(&uk);
        let final_bound = match self.posterior(alpha)? {
            (_, Some(post)) => Some(post),
            _ => None,
        };
        self.finish(u, status, iterations, final_bound)
    }

    fn hier_depth(&self) -> usize {
        self.eps.len() - 1
    }

    fn posterior(&self, alpha: f64) -> Result<(Option<f64>, Option<f64>)> {
        match self.mus {
            Some(m) => {
                let rho = rho_aposteriori(alpha, m, self.eps)?;
                Ok((Some(rho), Some((alpha * alpha + rho * rho).sqrt())))
            }
            None => Ok((None, None)),
        }
    }

    /// Record the cycle and decide whether to stop. `stopping` is compared
    /// against the tolerance (the a posteriori bound for the cyclic scheme,
    /// the weighted residual for the averaged one); `feasibility` is the raw
    /// constraint residual compared against the rounding floor, below which
    /// the iterate is feasible to machine precision.
    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        k: usize,
        alpha: f64,
        rho: Option<f64>,
        post: Option<f64>,
        stopping: f64,
        feasibility: f64,
        u: &DVector<f64>,
    ) -> Verdict {
        if stopping < self.best_val * (1.0 - self.config.stall_eps) {
            self.best_val = stopping;
            self.best_iter = k;
        }
        let converged = stopping <= self.config.tol_stop || feasibility <= self.floor;
        let stalled = !converged && k - self.best_iter >= self.config.stall_window;
        let done = converged || stalled || k == self.config.max_iter;
        if k % self.config.trace_every == 0 || done {
            let dist_ref = self.reference.as_ref().map(|(rf, perp2)| {
                ((u - rf).norm_squared() + perp2).sqrt()
            });
            self.trace.push(IterationRecord {
                iter: k,
                alpha,
                rho,
                post_bound: post,
                dist_ref,
            });
        }
        if converged {
            return Verdict::Stop(SolveStatus::Converged);
        }
        if stalled {
            // A stall with the constraint residual already at noise level is
            // numerical convergence; a stall far above it suggests an empty
            // intersection.
            return Verdict::Stop(if feasibility <= self.config.tol_stop * 10.0 {
                SolveStatus::Converged
            } else {
                SolveStatus::StallSuspectedInfeasible
            });
        }
        Verdict::Continue
    }

    fn assert_in_model_set(&self, u: &DVector<f64>, k: usize) {
        for j in 0..=self.hier_depth() {
            let tail = self.frame.tail_norm(u, j);
            assert!(
                tail <= self.eps[j] + 1e-9 * (1.0 + self.eps[j]),
                "cycle {k}: iterate violates level {j} (tail {tail:.6e} > eps {:.6e})",
                self.eps[j]
            );
        }
    }

    fn finish(
        &mut self,
        u: DVector<f64>,
        status: SolveStatus,
        iterations: usize,
        final_bound: Option<f64>,
    ) -> Result<SolveResult> {
        Ok(SolveResult {
            u_final: self.frame.from_frame(&u)?,
            status,
            iterations,
            trace: std::mem::take(&mut self.trace),
            final_bound,
        })
    }
}
