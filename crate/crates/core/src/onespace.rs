//! The one-space optimal recovery algorithm.
//!
//! Given a subspace `V` of dimension `n` and measurements spanning `W` of
//! dimension `m ≥ n`, the data-consistent set
//! `K_w = {u : dist(u, V) ≤ ε, P_W u = w}` is an ellipsoid. Its Chebyshev
//! center is the minimizer `u* = argmin_{P_W u = w} ‖u − P_V u‖`, computable
//! by a small least-squares solve, and its radius is
//! `μ(V, W) √(ε² − ‖u* − v*‖²)` where `v* = P_V u*`.
//!
//! Everything here is organized around the *favorable bases* of the pair
//! `(V, W)`: rotating both orthonormal bases by the SVD factors of the
//! cross-Gramian `G = (⟨ω_i, φ_j⟩)` makes the cross-Gramian diagonal,
//! `⟨ω*_i, φ*_j⟩ = s_j δ_{ij}`, after which the stability constants are read
//! off the singular values (`β = s_n`, `μ = 1/s_n`) and the ellipsoid has an
//! explicit coordinate form.

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::space::{
    canonicalize_column_signs, ensure_finite, from_columns, identity_columns, mgs_complete,
    qr_least_squares, Subspace,
};
use crate::Result;

/// Default tolerance for snapping singular values to exactly one when
/// counting `p = dim(V ∩ W)`.
pub const TOL_ONE: f64 = 1e-10;

/// Singular values at or below this threshold signal `β(V, W) = 0`: no
/// guaranteed recovery is possible.
pub const BETA_FLOOR: f64 = 1e-12;

/// Completion tolerance when extending an orthonormal set to a full basis.
const COMPLETION_TOL: f64 = 1e-8;

/// The observed data: an orthonormalized measurement space `W` together with
/// the observed element `w = P_W u`.
#[derive(Debug, Clone)]
pub struct Measurements {
    w_space: Subspace,
    w_vec: DVector<f64>,
    raw: Option<RawFunctionals>,
}

/// Riesz representers of the measurement functionals before
/// orthonormalization, kept so that raw functional values can be reproduced.
#[derive(Debug, Clone)]
struct RawFunctionals {
    basis: DMatrix<f64>,
    values: Vec<f64>,
}

impl Measurements {
    /// Build from an orthonormal measurement space and an observed element
    /// that must already lie in `W` (up to `1e-10` relative).
    pub fn new(w_space: Subspace, w_vec: DVector<f64>) -> Result<Self> {
        if w_vec.len() != w_space.ambient_dim() {
            return Err(Error::DimensionMismatch {
                context: "observed element",
                expected: w_space.ambient_dim(),
                got: w_vec.len(),
            });
        }
        if w_vec.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observed element"));
        }
        let off = w_space.complement_project(&w_vec)?.norm();
        if off > 1e-10 * (1.0 + w_vec.norm()) {
            return Err(Error::Parse(format!(
                "observed element is not in the measurement space (off by {off:.3e})"
            )));
        }
        Ok(Measurements {
            w_space,
            w_vec,
            raw: None,
        })
    }

    /// Build from raw functional values `ℓ_i(u) = ⟨u, ω_i^raw⟩` against a
    /// (possibly non-orthonormal) representer basis. The observed element is
    /// the Riesz representer of the data, found by solving the `m × m` Gram
    /// system of the raw basis.
    pub fn from_raw_values(
        ambient_dim: usize,
        raw_vectors: &[DVector<f64>],
        values: &[f64],
    ) -> Result<Self> {
        if raw_vectors.len() != values.len() {
            return Err(Error::DimensionMismatch {
                context: "measurement values",
                expected: raw_vectors.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("measurement values"));
        }
        let w_space = Subspace::orthonormalize(ambient_dim, raw_vectors, crate::space::RANK_TOL)?;
        let raw = from_columns(ambient_dim, raw_vectors);
        let gram = raw.transpose() * &raw;
        let rhs = DVector::from_row_slice(values);
        let coef = gram
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or(Error::RankDeficient("singular Gram system"))?;
        let w_vec = &raw * coef;
        let meas = Measurements {
            w_space,
            w_vec,
            raw: Some(RawFunctionals {
                basis: raw,
                values: values.to_vec(),
            }),
        };
        meas.check_raw_reproduction()?;
        Ok(meas)
    }

    fn check_raw_reproduction(&self) -> Result<()> {
        if let Some(raw) = &self.raw {
            let reproduced = raw.basis.transpose() * &self.w_vec;
            for (i, (&got, &want)) in reproduced.iter().zip(raw.values.iter()).enumerate() {
                if (got - want).abs() > 1e-9 * (1.0 + want.abs()) {
                    return Err(Error::Parse(format!(
                        "representer does not reproduce functional {i}: {got} vs {want}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The orthonormalized measurement space `W`.
    pub fn w_space(&self) -> &Subspace {
        &self.w_space
    }

    /// The observed element `w ∈ W`.
    pub fn w_vec(&self) -> &DVector<f64> {
        &self.w_vec
    }

    /// Number of measurements `m`.
    pub fn len(&self) -> usize {
        self.w_space.dim()
    }

    /// Whether there are no measurements.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Ambient dimension.
    pub fn ambient_dim(&self) -> usize {
        self.w_space.ambient_dim()
    }

    /// Coordinates of the observed element in the orthonormal basis of `W`.
    pub fn w_coefficients(&self) -> DVector<f64> {
        self.w_space.basis().transpose() * &self.w_vec
    }

    /// Replace the observed element, keeping the measurement space.
    pub fn with_observed(&self, w_vec: DVector<f64>) -> Result<Self> {
        Measurements::new(self.w_space.clone(), w_vec)
    }
}

/// SVD-rotated orthonormal bases of `V` and `W` with diagonal cross-Gramian.
#[derive(Debug, Clone)]
pub struct FavorableBasis {
    s: Vec<f64>,
    phi_star: DMatrix<f64>,
    omega_star: DMatrix<f64>,
    p: usize,
    rot_v: DMatrix<f64>,
    rot_w: DMatrix<f64>,
}

impl FavorableBasis {
    /// Singular values `s_1 ≥ … ≥ s_n`, each in `(0, 1]`.
    pub fn singular_values(&self) -> &[f64] {
        &self.s
    }

    /// `dim(V ∩ W)`: the number of singular values equal to one.
    pub fn intersection_dim(&self) -> usize {
        self.p
    }

    /// Rotated basis of `V` (columns `φ*_j`).
    pub fn phi_star(&self) -> &DMatrix<f64> {
        &self.phi_star
    }

    /// Rotated basis of `W` (columns `ω*_j`).
    pub fn omega_star(&self) -> &DMatrix<f64> {
        &self.omega_star
    }

    /// The `n × n` rotation applied to the basis of `V`.
    pub fn rot_v(&self) -> &DMatrix<f64> {
        &self.rot_v
    }

    /// The `m × m` rotation applied to the basis of `W`.
    pub fn rot_w(&self) -> &DMatrix<f64> {
        &self.rot_w
    }

    fn n(&self) -> usize {
        self.phi_star.ncols()
    }

    fn m(&self) -> usize {
        self.omega_star.ncols()
    }

    fn ambient_dim(&self) -> usize {
        self.phi_star.nrows()
    }
}

/// The optimal recovery and its quality indicators.
#[derive(Debug, Clone)]
pub struct OneSpaceResult {
    /// Chebyshev center `u*` of the data-consistent set.
    pub u_star: DVector<f64>,
    /// `v* = P_V u*`, the model-space part of the recovery.
    pub v_star: DVector<f64>,
    /// Inf-sup constant `β(V, W)`.
    pub beta: f64,
    /// Stability constant `μ(V, W) = 1/β`.
    pub mu: f64,
    /// `‖u* − v*‖`, the residual the tolerance must cover for feasibility.
    pub defect: f64,
}

/// The cross-Gramian `G` with `G_{i,j} = ⟨ω_i, φ_j⟩`.
pub fn cross_gramian(meas: &Measurements, v: &Subspace) -> Result<DMatrix<f64>> {
    if meas.ambient_dim() != v.ambient_dim() {
        return Err(Error::DimensionMismatch {
            context: "cross-Gramian",
            expected: meas.ambient_dim(),
            got: v.ambient_dim(),
        });
    }
    Ok(meas.w_space.basis().transpose() * v.basis())
}

/// Compute favorable bases for the pair `(V, W)` from the SVD of the
/// cross-Gramian. Singular values within `tol_one` of one are snapped to
/// exactly one; their count is `p = dim(V ∩ W)`.
///
/// Fails with [`Error::RankDeficient`] when the smallest singular value
/// vanishes (`β(V, W) = 0`), which is always the case for `n > m`.
pub fn favorable_bases(meas: &Measurements, v: &Subspace, tol_one: f64) -> Result<FavorableBasis> {
    let n = v.dim();
    let m = meas.len();
    if n == 0 {
        return Ok(FavorableBasis {
            s: Vec::new(),
            phi_star: DMatrix::zeros(meas.ambient_dim(), 0),
            omega_star: meas.w_space.basis().clone(),
            p: 0,
            rot_v: DMatrix::zeros(0, 0),
            rot_w: DMatrix::identity(m, m),
        });
    }
    if n > m {
        return Err(Error::RankDeficient(
            "model dimension exceeds measurement count (β = 0)",
        ));
    }
    let g = cross_gramian(meas, v)?;
    let (sv, u_thin, rot_v) = match row_orthogonal_factors(&g) {
        Some(factors) => factors,
        None => {
            let svd = g.svd(true, true);
            (
                svd.singular_values.iter().copied().collect(),
                svd.u.expect("requested U"),
                svd.v_t.expect("requested V").transpose(),
            )
        }
    };
    if sv[n - 1] <= BETA_FLOOR {
        return Err(Error::RankDeficient(
            "vanishing smallest singular value (β = 0)",
        ));
    }
    let mut rot_v = rot_v;
    let mut u_thin = u_thin;
    canonicalize_column_signs(&mut rot_v, Some(&mut u_thin));

    // Complete the rotated W basis to all of W: the remaining m − n columns
    // span V⊥ ∩ W.
    let u_cols: Vec<DVector<f64>> = (0..n).map(|j| u_thin.column(j).into_owned()).collect();
    let extra = mgs_complete(&u_cols, identity_columns(m), m - n, COMPLETION_TOL);
    debug_assert_eq!(extra.len(), m - n);
    let mut rot_w = DMatrix::zeros(m, m);
    for (j, c) in u_cols.iter().chain(extra.iter()).enumerate() {
        rot_w.set_column(j, c);
    }
    let mut tail = rot_w.columns_mut(n, m - n).into_owned();
    canonicalize_column_signs(&mut tail, None);
    rot_w.columns_mut(n, m - n).copy_from(&tail);

    let mut s = sv;
    let p = s.iter().take_while(|&&x| x >= 1.0 - tol_one).count();
    for x in s.iter_mut().take(p) {
        *x = 1.0;
    }
    let phi_star = v.basis() * &rot_v;
    let omega_star = meas.w_space.basis() * &rot_w;
    ensure_finite(&phi_star, "favorable basis of V")?;
    ensure_finite(&omega_star, "favorable basis of W")?;
    Ok(FavorableBasis {
        s,
        phi_star,
        omega_star,
        p,
        rot_v,
        rot_w,
    })
}

/// Exact SVD factors for a cross-Gramian with pairwise orthogonal rows
/// (`G Gᵀ` diagonal): `U` picks the rows by decreasing norm, the singular
/// values are the row norms and `V`'s columns are the normalized rows.
///
/// Structured constructions (diagonal spectra, incoherent rotations of them)
/// hit this case with *repeated* singular values; a general-purpose SVD is
/// free to return an arbitrarily rotated basis inside such a degenerate
/// block, which would make the favorable basis depend on solver internals.
/// This path keeps it pinned to the rows themselves. Ties in the row norms
/// keep their original order (stable sort).
#[allow(clippy::type_complexity)]
fn row_orthogonal_factors(g: &DMatrix<f64>) -> Option<(Vec<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let m = g.nrows();
    let n = g.ncols();
    let norms: Vec<f64> = (0..m).map(|i| g.row(i).norm()).collect();
    let scale = norms.iter().fold(0.0f64, |a, &b| a.max(b));
    if scale <= 0.0 {
        return None;
    }
    let gram = g * g.transpose();
    for i in 0..m {
        for j in 0..m {
            if i != j && gram[(i, j)].abs() > 1e-14 * scale * scale {
                return None;
            }
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).expect("finite norms"));
    // Orthogonal rows cannot exceed the column dimension: everything past
    // the first n must be numerically zero.
    if order[n..].iter().any(|&i| norms[i] > 1e-12 * scale) {
        return None;
    }
    let s: Vec<f64> = order[..n].iter().map(|&i| norms[i]).collect();
    if s[n - 1] <= BETA_FLOOR {
        // Let the caller report rank deficiency through the common path.
        return Some((s, DMatrix::zeros(m, n), DMatrix::identity(n, n)));
    }
    let mut u_thin = DMatrix::zeros(m, n);
    let mut rot_v = DMatrix::zeros(n, n);
    for (k, &i) in order[..n].iter().enumerate() {
        u_thin[(i, k)] = 1.0;
        for j in 0..n {
            rot_v[(j, k)] = g[(i, j)] / s[k];
        }
    }
    Some((s, u_thin, rot_v))
}

/// The stability constants: `β(V, W) = s_n` and `μ(V, W) = 1/s_n`.
/// For the trivial space `V = {0}` both are one.
pub fn beta_mu(fav: &FavorableBasis) -> (f64, f64) {
    match fav.s.last() {
        None => (1.0, 1.0),
        Some(&sn) => (sn, 1.0 / sn),
    }
}

/// Run the optimal recovery: `v*` minimizes `‖w − P_W v‖` over `V` (solved by
/// QR on the cross-Gramian) and `u* = w + P_{W⊥} v*`. The result does not
/// depend on the tolerance `ε`.
pub fn recover_one(meas: &Measurements, v: &Subspace) -> Result<OneSpaceResult> {
    let fav = favorable_bases(meas, v, TOL_ONE)?;
    let (beta, mu) = beta_mu(&fav);
    let (u_star, v_star) = if v.dim() == 0 {
        (meas.w_vec.clone(), DVector::zeros(meas.ambient_dim()))
    } else {
        let g = cross_gramian(meas, v)?;
        let coef = qr_least_squares(&g, &meas.w_coefficients())?;
        let v_star = v.basis() * coef;
        let u_star = &meas.w_vec + meas.w_space.complement_project(&v_star)?;
        (u_star, v_star)
    };
    let defect = (&u_star - &v_star).norm();
    Ok(OneSpaceResult {
        u_star,
        v_star,
        beta,
        mu,
        defect,
    })
}

/// Chebyshev radius of the data-consistent set at tolerance `eps`:
/// `μ √(ε² − defect²)`.
///
/// Fails with [`Error::Infeasible`] when the defect exceeds `ε` beyond a
/// `1e-9` relative slack: the set is empty at this tolerance.
pub fn chebyshev_radius_one(result: &OneSpaceResult, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::BadTolerances("tolerance must be positive"));
    }
    if result.defect > eps * (1.0 + 1e-9) {
        return Err(Error::Infeasible {
            defect: result.defect,
            eps,
        });
    }
    let rad2 = (eps * eps - result.defect * result.defect).max(0.0);
    Ok(result.mu * rad2.sqrt())
}

/// Explicit coordinate description of the data-consistent ellipsoid.
///
/// A point `u` with `P_W u = w` belongs to the set iff
/// `Σ_j s_j² (x_j − a_j)² + Σ_k y_k² ≤ C`, where `x` are the coordinates of
/// `u − w` along the normalized directions `(φ*_j − s_j ω*_j)` for
/// `j = p+1..n` and `y` its coordinates in `V⊥ ∩ W⊥`.
#[derive(Debug, Clone)]
pub struct EllipsoidForm {
    c: f64,
    a: Vec<f64>,
    s_active: Vec<f64>,
    base: DVector<f64>,
    x_dirs: DMatrix<f64>,
    y_basis: DMatrix<f64>,
}

impl EllipsoidForm {
    /// The right-hand side `C = ε² − Σ_{j>n} w_j²` (clamped at zero).
    pub fn c(&self) -> f64 {
        self.c
    }

    /// Ellipsoid center offsets `a_{p+1..n}`.
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// `C − (Σ s_j²(x_j − a_j)² + Σ y_k²)` for a point of the data plane:
    /// non-negative exactly when `u` belongs to the set.
    pub fn membership_margin(&self, u: &DVector<f64>) -> Result<f64> {
        if u.len() != self.base.len() {
            return Err(Error::DimensionMismatch {
                context: "ellipsoid membership",
                expected: self.base.len(),
                got: u.len(),
            });
        }
        let diff = u - &self.base;
        let x = self.x_dirs.transpose() * &diff;
        let y = self.y_basis.transpose() * &diff;
        let mut lhs = 0.0;
        for (j, &sj) in self.s_active.iter().enumerate() {
            let dx = x[j] - self.a[j];
            lhs += sj * sj * dx * dx;
        }
        lhs += y.norm_squared();
        Ok(self.c - lhs)
    }

    /// Membership test (non-strict boundary).
    pub fn contains(&self, u: &DVector<f64>) -> Result<bool> {
        Ok(self.membership_margin(u)? >= 0.0)
    }

    /// The Chebyshev radius read off the coordinate form, `s_n^{-1} √C`.
    pub fn radius(&self) -> f64 {
        match self.s_active.last() {
            Some(&sn) => self.c.sqrt() / sn,
            None => self.c.sqrt(),
        }
    }
}

/// Assemble the coordinate form of the data-consistent ellipsoid at
/// tolerance `eps`. Fails with [`Error::Infeasible`] when `C < -1e-12`.
pub fn ellipsoid_form(
    meas: &Measurements,
    v: &Subspace,
    fav: &FavorableBasis,
    eps: f64,
) -> Result<EllipsoidForm> {
    if !(eps > 0.0) {
        return Err(Error::BadTolerances("tolerance must be positive"));
    }
    let n = fav.n();
    let m = fav.m();
    let p = fav.p;
    let wc = fav.omega_star.transpose() * &meas.w_vec;
    let tail2: f64 = (n..m).map(|j| wc[j] * wc[j]).sum();
    let c = eps * eps - tail2;
    if c < -1e-12 {
        return Err(Error::Infeasible {
            defect: tail2.sqrt(),
            eps,
        });
    }
    let mut a = Vec::with_capacity(n - p);
    let mut s_active = Vec::with_capacity(n - p);
    let mut x_cols = Vec::with_capacity(n - p);
    for j in p..n {
        let sj = fav.s[j];
        let scale = (1.0 - sj * sj).sqrt();
        a.push(scale / sj * wc[j]);
        s_active.push(sj);
        let dir = (fav.phi_star.column(j) - sj * fav.omega_star.column(j)) / scale;
        x_cols.push(dir);
    }
    let frame = sum_space_basis(v, fav);
    let dim = fav.ambient_dim();
    let y_cols = mgs_complete(
        &frame,
        identity_columns(dim),
        dim - frame.len(),
        COMPLETION_TOL,
    );
    Ok(EllipsoidForm {
        c: c.max(0.0),
        a,
        s_active,
        base: meas.w_vec.clone(),
        x_dirs: from_columns(dim, &x_cols),
        y_basis: from_columns(dim, &y_cols),
    })
}

/// Orthonormal basis of the sum `V + W`, starting with the given basis of
/// `V` and followed by the normalized directions `(ω*_j − s_j φ*_j)` for
/// `j = p+1..n` and `ω*_j` for `j > n`. Length is `d = m + n − p`.
pub(crate) fn sum_space_basis(v: &Subspace, fav: &FavorableBasis) -> Vec<DVector<f64>> {
    let n = fav.n();
    let m = fav.m();
    let mut cols: Vec<DVector<f64>> =
        (0..n).map(|j| v.basis().column(j).into_owned()).collect();
    for j in fav.p..n {
        let sj = fav.s[j];
        let scale = (1.0 - sj * sj).sqrt();
        cols.push((fav.omega_star.column(j) - sj * fav.phi_star.column(j)) / scale);
    }
    for j in n..m {
        cols.push(fav.omega_star.column(j).into_owned());
    }
    cols
}

/// The enlarged space `V ⊕ (W ∩ V⊥) = span{φ*_1..φ*_n, ω*_{n+1}..ω*_m}`
/// against which the recovery is instance optimal.
pub fn recovery_space(v: &Subspace, fav: &FavorableBasis) -> Result<Subspace> {
    let n = fav.n();
    let m = fav.m();
    let mut cols: Vec<DVector<f64>> = (0..n)
        .map(|j| fav.phi_star.column(j).into_owned())
        .collect();
    for j in n..m {
        cols.push(fav.omega_star.column(j).into_owned());
    }
    Subspace::from_orthonormal(from_columns(v.ambient_dim(), &cols))
}

/// A unit direction `η ∈ W⊥` attaining the worst-case amplification
/// `‖η‖ / ‖P_{V⊥} η‖ = μ(V, W)`: `η = (φ*_n − s_n ω*_n)/√(1 − s_n²)`.
///
/// When `s_n = 1` (or `V = {0}`) every direction of `V⊥ ∩ W⊥` attains the
/// ratio one; the first vector of a deterministic orthonormal basis of that
/// complement is returned, or the zero vector if the complement is trivial.
pub fn worst_case_direction(v: &Subspace, fav: &FavorableBasis) -> DVector<f64> {
    let n = fav.n();
    if n > 0 && fav.s[n - 1] < 1.0 {
        let sn = fav.s[n - 1];
        let dir = fav.phi_star.column(n - 1) - sn * fav.omega_star.column(n - 1);
        return dir / (1.0 - sn * sn).sqrt();
    }
    let frame = sum_space_basis(v, fav);
    let dim = fav.ambient_dim();
    let free = mgs_complete(&frame, identity_columns(dim), 1, COMPLETION_TOL);
    free.into_iter()
        .next()
        .unwrap_or_else(|| DVector::zeros(dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::RANK_TOL;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn vecn(vals: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(vals)
    }

    fn span(dim: usize, vs: &[&[f64]]) -> Subspace {
        let cols: Vec<_> = vs.iter().map(|v| vecn(v)).collect();
        Subspace::orthonormalize(dim, &cols, RANK_TOL).unwrap()
    }

    /// V = span e1, W = span (e1+e2)/sqrt(2), w on the diagonal: the running
    /// two-dimensional example.
    fn diagonal_instance() -> (Measurements, Subspace) {
        let w_space = span(2, &[&[1.0, 1.0]]);
        let b = (3.0f64.sqrt() + 1.0) / 4.0;
        let meas = Measurements::new(w_space, vecn(&[b, b])).unwrap();
        let v = span(2, &[&[1.0, 0.0]]);
        (meas, v)
    }

    fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
        DVector::from_fn(dim, |_, _| rng.sample(StandardNormal))
    }

    fn random_subspace(rng: &mut ChaCha8Rng, dim: usize, k: usize) -> Subspace {
        let cols: Vec<_> = (0..k).map(|_| random_vector(rng, dim)).collect();
        Subspace::orthonormalize(dim, &cols, RANK_TOL).unwrap()
    }

    #[test]
    fn cross_gramian_examples() {
        let (meas, v) = diagonal_instance();
        let g = cross_gramian(&meas, &v).unwrap();
        assert_eq!(g.shape(), (1, 1));
        assert_relative_eq!(g[(0, 0)].abs(), SQRT_HALF, max_relative = 1e-12);

        let w_space = span(2, &[&[1.0, 0.0]]);
        let meas2 = Measurements::new(w_space, vecn(&[0.0, 0.0])).unwrap();
        let g2 = cross_gramian(&meas2, &span(2, &[&[1.0, 0.0]])).unwrap();
        assert_relative_eq!(g2[(0, 0)].abs(), 1.0, max_relative = 1e-12);

        let g3 = cross_gramian(&meas2, &span(2, &[&[0.0, 1.0]])).unwrap();
        assert_relative_eq!(g3[(0, 0)], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn favorable_bases_on_diagonal_instance() {
        let (meas, v) = diagonal_instance();
        let fav = favorable_bases(&meas, &v, TOL_ONE).unwrap();
        assert_eq!(fav.singular_values().len(), 1);
        assert_relative_eq!(fav.singular_values()[0], SQRT_HALF, max_relative = 1e-12);
        assert_eq!(fav.intersection_dim(), 0);
        // Sign canonicalization pins both rotated bases.
        assert_relative_eq!(fav.phi_star()[(0, 0)], 1.0, max_relative = 1e-12);
        assert_relative_eq!(fav.omega_star()[(0, 0)], SQRT_HALF, max_relative = 1e-12);
        // Diagonal cross-Gramian property.
        let cross = fav.omega_star().transpose() * fav.phi_star();
        assert_relative_eq!(cross[(0, 0)], SQRT_HALF, max_relative = 1e-9);
    }

    #[test]
    fn favorable_bases_aligned_pair_snaps_to_one() {
        let w_space = span(2, &[&[1.0, 0.0]]);
        let meas = Measurements::new(w_space, vecn(&[0.0, 0.0])).unwrap();
        let v = span(2, &[&[1.0, 0.0]]);
        let fav = favorable_bases(&meas, &v, TOL_ONE).unwrap();
        assert_eq!(fav.singular_values(), &[1.0]);
        assert_eq!(fav.intersection_dim(), 1);
        let diff = fav.phi_star().column(0) - fav.omega_star().column(0);
        assert!(diff.norm() <= 1e-8);
    }

    #[test]
    fn favorable_bases_rejects_rank_deficiency() {
        // n > m is always rank deficient.
        let w_space = span(3, &[&[1.0, 0.0, 0.0]]);
        let meas = Measurements::new(w_space, vecn(&[0.0, 0.0, 0.0])).unwrap();
        let v = span(3, &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        assert!(matches!(
            favorable_bases(&meas, &v, TOL_ONE),
            Err(Error::RankDeficient(_))
        ));
        // V orthogonal to W has a vanishing singular value.
        let v_perp = span(3, &[&[0.0, 0.0, 1.0]]);
        assert!(matches!(
            favorable_bases(&meas, &v_perp, TOL_ONE),
            Err(Error::RankDeficient(_))
        ));
    }

    /// Singular values must match the closed-form eigenvalues of the 2x2
    /// normal matrix GᵀG: an oracle independent of the SVD routine.
    #[test]
    fn favorable_bases_match_characteristic_polynomial_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..25 {
            let v = random_subspace(&mut rng, 6, 2);
            let w_space = random_subspace(&mut rng, 6, 4);
            let meas = Measurements::new(w_space, DVector::zeros(6)).unwrap();
            let g = cross_gramian(&meas, &v).unwrap();
            let normal = g.transpose() * &g;
            let tr = normal[(0, 0)] + normal[(1, 1)];
            let det = normal[(0, 0)] * normal[(1, 1)] - normal[(0, 1)] * normal[(1, 0)];
            let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
            let expect_hi = ((tr + disc) / 2.0).sqrt();
            let expect_lo = ((tr - disc) / 2.0).max(0.0).sqrt();
            let fav = favorable_bases(&meas, &v, TOL_ONE).unwrap();
            assert_relative_eq!(fav.singular_values()[0], expect_hi, epsilon = 1e-10);
            assert_relative_eq!(fav.singular_values()[1], expect_lo, epsilon = 1e-10);
        }
    }

    #[test]
    fn beta_mu_values() {
        let (meas, v) = diagonal_instance();
        let fav = favorable_bases(&meas, &v, TOL_ONE).unwrap();
        let (beta, mu) = beta_mu(&fav);
        assert_relative_eq!(beta, SQRT_HALF, max_relative = 1e-12);
        assert_relative_eq!(mu, 2.0f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(mu * beta, 1.0, max_relative = 1e-12);

        let trivial = favorable_bases(&meas, &Subspace::zero(2), TOL_ONE).unwrap();
        assert_eq!(beta_mu(&trivial), (1.0, 1.0));
    }

    #[test]
    fn recover_one_diagonal_instance() {
        let (meas, v) = diagonal_instance();
        let res = recover_one(&meas, &v).unwrap();
        let expect = (3.0f64.sqrt() + 1.0) / 2.0;
        assert_relative_eq!(res.u_star[0], expect, max_relative = 1e-12);
        assert_relative_eq!(res.u_star[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!((&res.u_star - &res.v_star).norm(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(res.defect, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn recover_one_zero_data_gives_zero() {
        let (meas, v) = diagonal_instance();
        let meas0 = meas.with_observed(DVector::zeros(2)).unwrap();
        let res = recover_one(&meas0, &v).unwrap();
        assert!(res.u_star.norm() < 1e-14);
        assert!(res.v_star.norm() < 1e-14);
    }

    #[test]
    fn recover_one_is_exact_on_model_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let v = random_subspace(&mut rng, 7, 3);
            let w_space = random_subspace(&mut rng, 7, 5);
            let coeff = random_vector(&mut rng, 3);
            let u_true = v.basis() * coeff;
            let w_vec = w_space.project(&u_true).unwrap();
            let meas = Measurements::new(w_space, w_vec).unwrap();
            let res = recover_one(&meas, &v).unwrap();
            assert!(
                (&res.u_star - &u_true).norm() <= 1e-9 * (1.0 + u_true.norm()),
                "recovery must be exact for elements of V"
            );
            assert!(res.defect <= 1e-9);
        }
    }

    #[test]
    fn recovery_double_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let v = random_subspace(&mut rng, 8, 3);
            let w_space = random_subspace(&mut rng, 8, 5);
            let u = random_vector(&mut rng, 8);
            let w_vec = w_space.project(&u).unwrap();
            let meas = Measurements::new(w_space.clone(), w_vec).unwrap();
            let res = recover_one(&meas, &v).unwrap();
            let r = &res.u_star - &res.v_star;
            let scale = 1e-9 * (1.0 + r.norm());
            // Orthogonal to V.
            assert!(v.project(&r).unwrap().norm() <= scale);
            // Orthogonal to W⊥, i.e. r lies in W.
            assert!(w_space.complement_project(&r).unwrap().norm() <= scale);
            // v* is the V-projection of u*.
            let pv = v.project(&res.u_star).unwrap();
            assert!((&pv - &res.v_star).norm() <= 1e-10 * (1.0 + pv.norm()));
        }
    }

    #[test]
    fn chebyshev_radius_values() {
        let (meas, v) = diagonal_instance();
        let res = recover_one(&meas, &v).unwrap();
        let r = chebyshev_radius_one(&res, 0.5).unwrap();
        assert_relative_eq!(r, SQRT_HALF, max_relative = 1e-10);

        let boundary = OneSpaceResult {
            defect: 0.5,
            ..res.clone()
        };
        assert_relative_eq!(chebyshev_radius_one(&boundary, 0.5).unwrap(), 0.0);

        let empty = OneSpaceResult {
            defect: 1.0,
            ..res
        };
        assert!(matches!(
            chebyshev_radius_one(&empty, 0.5),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn ellipsoid_form_diagonal_instance() {
        let (meas, v) = diagonal_instance();
        let fav = favorable_bases(&meas, &v, TOL_ONE).unwrap();
        let form = ellipsoid_form(&meas, &v, &fav, 0.5).unwrap();
        assert_relative_eq!(form.c(), 0.25, max_relative = 1e-12);
        let w1 = 2.0f64.sqrt() * (3.0f64.sqrt() + 1.0) / 4.0;
        assert_relative_eq!(form.a()[0], w1, max_relative = 1e-10);
        // Radius identity: s_n^{-1} sqrt(C) equals the Chebyshev radius.
        let res = recover_one(&meas, &v).unwrap();
        let direct = chebyshev_radius_one(&res, 0.5).unwrap();
        assert_relative_eq!(form.radius(), direct, max_relative = 1e-10);
    }

    #[test]
    fn ellipsoid_form_zero_data_is_centered() {
        let (meas, v) = diagonal_instance();
        let meas0 = meas.with_observed(DVector::zeros(2)).unwrap();
        let fav = favorable_bases(&meas0, &v, TOL_ONE).unwrap();
        let form = ellipsoid_form(&meas0, &v, &fav, 0.5).unwrap();
        assert_relative_eq!(form.c(), 0.25, max_relative = 1e-12);
        assert_relative_eq!(form.a()[0], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn recovery_space_examples() {
        let (meas, v) = diagonal_instance();
        let fav = favorable_bases(&meas, &v, TOL_ONE).unwrap();
        let enlarged = recovery_space(&v, &fav).unwrap();
        assert_eq!(enlarged.dim(), 1);

        // V = {0}: the enlarged space is W itself.
        let trivial = favorable_bases(&meas, &Subspace::zero(2), TOL_ONE).unwrap();
        let w_again = recovery_space(&Subspace::zero(2), &trivial).unwrap();
        assert_eq!(w_again.dim(), 1);
        let diff = w_again.basis() - meas.w_space().basis();
        assert!(diff.norm() < 1e-12);

        // R^3, V = span e1, W = span{e1, e2} -> span{e1, e2}.
        let v3 = span(3, &[&[1.0, 0.0, 0.0]]);
        let w3 = span(3, &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let meas3 = Measurements::new(w3, DVector::zeros(3)).unwrap();
        let fav3 = favorable_bases(&meas3, &v3, TOL_ONE).unwrap();
        let rec3 = recovery_space(&v3, &fav3).unwrap();
        assert_eq!(rec3.dim(), 2);
        assert!(rec3.distance(&vecn(&[0.0, 1.0, 0.0])).unwrap() < 1e-10);
        assert!(rec3.distance(&vecn(&[0.0, 0.0, 1.0])).unwrap() > 0.999);
    }

    #[test]
    fn worst_case_direction_diagonal_instance() {
        let (meas, v) = diagonal_instance();
        let fav = favorable_bases(&meas, &v, TOL_ONE).unwrap();
        let eta = worst_case_direction(&v, &fav);
        assert_relative_eq!(eta[0], SQRT_HALF, max_relative = 1e-10);
        assert_relative_eq!(eta[1], -SQRT_HALF, max_relative = 1e-10);
        // In W⊥, unit norm, amplification ratio = mu.
        assert!(meas.w_space().project(&eta).unwrap().norm() < 1e-10);
        assert_relative_eq!(eta.norm(), 1.0, max_relative = 1e-12);
        let ratio = eta.norm() / v.complement_project(&eta).unwrap().norm();
        assert_relative_eq!(ratio, 2.0f64.sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn worst_case_direction_aligned_pair() {
        let w_space = span(2, &[&[1.0, 0.0]]);
        let meas = Measurements::new(w_space, vecn(&[0.0, 0.0])).unwrap();
        let v = span(2, &[&[1.0, 0.0]]);
        let fav = favorable_bases(&meas, &v, TOL_ONE).unwrap();
        let eta = worst_case_direction(&v, &fav);
        // Any direction of V⊥ ∩ W⊥ = span e2, ratio one.
        assert_relative_eq!(eta[1].abs(), 1.0, max_relative = 1e-12);
        let ratio = eta.norm() / v.complement_project(&eta).unwrap().norm();
        assert_relative_eq!(ratio, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn worst_case_ratio_matches_mu_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let v = random_subspace(&mut rng, 9, 3);
            let w_space = random_subspace(&mut rng, 9, 5);
            let meas = Measurements::new(w_space, DVector::zeros(9)).unwrap();
            let fav = favorable_bases(&meas, &v, TOL_ONE).unwrap();
            let (_, mu) = beta_mu(&fav);
            let eta = worst_case_direction(&v, &fav);
            let ratio = eta.norm() / v.complement_project(&eta).unwrap().norm();
            assert_relative_eq!(ratio, mu, max_relative = 1e-10);
        }
    }

    #[test]
    fn measurements_from_raw_values() {
        // Full measurement of R^2: the representer reproduces u itself.
        let raws = vec![vecn(&[1.0, 1.0]), vecn(&[1.0, 0.0])];
        let u = vecn(&[2.0, 3.0]);
        let values: Vec<f64> = raws.iter().map(|r| r.dot(&u)).collect();
        let meas = Measurements::from_raw_values(2, &raws, &values).unwrap();
        assert!((meas.w_vec() - &u).norm() < 1e-10);
    }

    #[test]
    fn measurements_reject_out_of_space_data() {
        let w_space = span(2, &[&[1.0, 1.0]]);
        let err = Measurements::new(w_space, vecn(&[1.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }
}
