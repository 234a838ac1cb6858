//! Finite-dimensional inner-product space primitives: metric handling,
//! orthonormalization and subspace projections.
//!
//! A non-Euclidean inner product `⟨x, y⟩ = xᵀ M y` (M symmetric positive
//! definite) is handled by a one-time change of coordinates `x ↦ Lᵀ x`, where
//! `M = L Lᵀ` is the Cholesky factorization. In the transformed coordinates
//! the inner product is the plain dot product, so every formula in the crate
//! applies verbatim. The transform is applied exactly once, when raw data is
//! [ingested](AmbientSpace::ingest); all other operations assume transformed
//! coordinates.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::Error;
use crate::Result;

/// Max-norm tolerance for accepting a basis as orthonormal.
pub const ORTHO_TOL: f64 = 1e-10;
/// Default relative tolerance below which a Gram-Schmidt residual is treated
/// as linearly dependent.
pub const RANK_TOL: f64 = 1e-12;
/// Relative symmetry tolerance for metric validation.
const METRIC_SYM_TOL: f64 = 1e-12;

/// The ambient space: a dimension plus an optional SPD metric.
#[derive(Debug, Clone)]
pub struct AmbientSpace {
    dim: usize,
    /// Upper-triangular `Lᵀ` of the Cholesky factorization `M = L Lᵀ`;
    /// `None` means the metric is Euclidean and ingestion is the identity.
    chol_lt: Option<DMatrix<f64>>,
}

impl AmbientSpace {
    /// Euclidean space of the given dimension.
    pub fn euclidean(dim: usize) -> Self {
        AmbientSpace { dim, chol_lt: None }
    }

    /// Space with inner product `⟨x, y⟩ = xᵀ M y`.
    ///
    /// `metric` must be square of size `dim`, finite, symmetric to `1e-12`
    /// relative and admit a Cholesky factorization.
    pub fn with_metric(dim: usize, metric: DMatrix<f64>) -> Result<Self> {
        if metric.nrows() != dim || metric.ncols() != dim {
            return Err(Error::DimensionMismatch {
                context: "metric",
                expected: dim,
                got: metric.nrows().max(metric.ncols()),
            });
        }
        if metric.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("metric"));
        }
        let scale = metric.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        let asym = (&metric - metric.transpose())
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        if asym > METRIC_SYM_TOL * scale {
            return Err(Error::BadMetric("matrix is not symmetric"));
        }
        let chol = Cholesky::new(metric)
            .ok_or(Error::BadMetric("matrix is not positive definite"))?;
        Ok(AmbientSpace {
            dim,
            chol_lt: Some(chol.l().transpose()),
        })
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Whether the inner product is the plain dot product.
    pub fn is_euclidean(&self) -> bool {
        self.chol_lt.is_none()
    }

    /// Transform a raw ambient vector into metric coordinates (`x ↦ Lᵀ x`).
    ///
    /// Rejects wrong lengths and non-finite entries; this is the single
    /// validation boundary for vector data entering the library.
    pub fn ingest(&self, raw: &DVector<f64>) -> Result<DVector<f64>> {
        if raw.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "vector",
                expected: self.dim,
                got: raw.len(),
            });
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector"));
        }
        Ok(match &self.chol_lt {
            None => raw.clone(),
            Some(lt) => lt * raw,
        })
    }

    /// Invert [`ingest`](Self::ingest): map metric coordinates back to the
    /// raw ambient representation.
    pub fn emit(&self, coords: &DVector<f64>) -> Result<DVector<f64>> {
        if coords.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "vector",
                expected: self.dim,
                got: coords.len(),
            });
        }
        Ok(match &self.chol_lt {
            None => coords.clone(),
            Some(lt) => lt
                .solve_upper_triangular(coords)
                .expect("Cholesky factor is invertible"),
        })
    }
}

/// Inner product in metric coordinates.
#[inline]
pub fn inner(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    x.dot(y)
}

/// Norm in metric coordinates.
#[inline]
pub fn norm(x: &DVector<f64>) -> f64 {
    x.norm()
}

/// A subspace represented by an orthonormal basis (in metric coordinates).
#[derive(Debug, Clone)]
pub struct Subspace {
    ambient_dim: usize,
    /// `ambient_dim × k` matrix with orthonormal columns.
    basis: DMatrix<f64>,
}

impl Subspace {
    /// The zero subspace `{0}`.
    pub fn zero(ambient_dim: usize) -> Self {
        Subspace {
            ambient_dim,
            basis: DMatrix::zeros(ambient_dim, 0),
        }
    }

    /// Wrap a matrix whose columns are already orthonormal
    /// (`‖QᵀQ − I‖_max ≤ 1e-10`).
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Result<Self> {
        if basis.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("subspace basis"));
        }
        if basis.ncols() > basis.nrows() {
            return Err(Error::RankDeficient(
                "subspace dimension exceeds ambient dimension",
            ));
        }
        let gram = basis.transpose() * &basis;
        let k = basis.ncols();
        let dev = (&gram - DMatrix::<f64>::identity(k, k))
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        if dev > ORTHO_TOL {
            return Err(Error::RankDeficient("basis columns are not orthonormal"));
        }
        Ok(Subspace {
            ambient_dim: basis.nrows(),
            basis,
        })
    }

    /// Orthonormalize the given vectors by modified Gram-Schmidt with one
    /// reorthogonalization pass. Column `j` of the result is the normalized
    /// residual of input `j` against inputs `1..j-1`, so input order is
    /// preserved.
    ///
    /// Fails with [`Error::RankDeficient`] when a residual norm falls below
    /// `tol_rank` times the largest input norm.
    pub fn orthonormalize(
        ambient_dim: usize,
        vectors: &[DVector<f64>],
        tol_rank: f64,
    ) -> Result<Self> {
        if tol_rank <= 0.0 || !tol_rank.is_finite() {
            return Err(Error::NonFinite("tol_rank"));
        }
        for v in vectors {
            if v.len() != ambient_dim {
                return Err(Error::DimensionMismatch {
                    context: "orthonormalize input",
                    expected: ambient_dim,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("orthonormalize input"));
            }
        }
        let max_norm = vectors.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
        let mut cols: Vec<DVector<f64>> = Vec::with_capacity(vectors.len());
        for v in vectors {
            let mut r = v.clone();
            for _ in 0..2 {
                for q in &cols {
                    let c = q.dot(&r);
                    r.axpy(-c, q, 1.0);
                }
            }
            let nr = r.norm();
            if nr <= tol_rank * max_norm {
                return Err(Error::RankDeficient("linearly dependent input vectors"));
            }
            cols.push(r / nr);
        }
        Ok(Subspace {
            ambient_dim,
            basis: from_columns(ambient_dim, &cols),
        })
    }

    /// Ambient dimension.
    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Subspace dimension `k`.
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// The orthonormal basis matrix.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Orthogonal projection `P_V x = Q (Qᵀ x)`.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        if self.dim() == 0 {
            return Ok(DVector::zeros(self.ambient_dim));
        }
        let coeffs = self.basis.transpose() * x;
        Ok(&self.basis * coeffs)
    }

    /// Projection onto the orthogonal complement, `x − P_V x`.
    pub fn complement_project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(x - self.project(x)?)
    }

    /// Distance from `x` to the subspace, `‖x − P_V x‖`.
    pub fn distance(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.complement_project(x)?.norm())
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.ambient_dim {
            return Err(Error::DimensionMismatch {
                context: "projection input",
                expected: self.ambient_dim,
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Assemble a `dim × k` matrix from column vectors.
pub(crate) fn from_columns(dim: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

/// Extend an orthonormal set with candidates, dropping candidates that are
/// (numerically) in the current span. Returns only the accepted, normalized
/// residuals. Used for completing bases deterministically.
pub(crate) fn mgs_complete(
    existing: &[DVector<f64>],
    candidates: impl Iterator<Item = DVector<f64>>,
    want: usize,
    tol: f64,
) -> Vec<DVector<f64>> {
    let mut base: Vec<DVector<f64>> = existing.to_vec();
    let mut added = Vec::with_capacity(want);
    for cand in candidates {
        if added.len() == want {
            break;
        }
        let mut r = cand;
        for _ in 0..2 {
            for q in &base {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        let nr = r.norm();
        if nr > tol {
            let q = r / nr;
            base.push(q.clone());
            added.push(q);
        }
    }
    added
}

/// Columns of the identity matrix, the canonical candidate stream for basis
/// completion.
pub(crate) fn identity_columns(dim: usize) -> impl Iterator<Item = DVector<f64>> {
    (0..dim).map(move |i| {
        let mut e = DVector::zeros(dim);
        e[i] = 1.0;
        e
    })
}

/// Column-wise sign canonicalization: flips each column of `mat` (and the
/// matching column of `mate`, when given) so that its first entry of
/// magnitude above `1e-12` is positive. Makes SVD-derived bases reproducible.
pub(crate) fn canonicalize_column_signs(
    mat: &mut DMatrix<f64>,
    mut mate: Option<&mut DMatrix<f64>>,
) {
    for j in 0..mat.ncols() {
        let lead = (0..mat.nrows())
            .map(|i| mat[(i, j)])
            .find(|v| v.abs() > 1e-12)
            .unwrap_or(0.0);
        if lead < 0.0 {
            let mut col = mat.column_mut(j);
            col.neg_mut();
            if let Some(other) = mate.as_deref_mut() {
                other.column_mut(j).neg_mut();
            }
        }
    }
}

/// Validate that every entry of a matrix is finite.
pub(crate) fn ensure_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

/// Solve the least-squares problem `min_c ‖A c − b‖` for a tall full-rank
/// matrix via its QR factorization.
pub(crate) fn qr_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let qr = a.clone().qr();
    let rhs = qr.q().transpose() * b;
    qr.r()
        .solve_upper_triangular(&rhs)
        .ok_or(Error::RankDeficient("least-squares system is singular"))
}
