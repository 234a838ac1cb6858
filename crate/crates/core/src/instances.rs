//! Deterministic problem generators and sampling oracles.
//!
//! Reproducibility contract: every randomized generator draws from a ChaCha8
//! stream (`rand_chacha::ChaCha8Rng::seed_from_u64`) with normals from the
//! `rand_distr` ziggurat sampler, so a seed pins the instance bit for bit.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::bounds::Hierarchy;
use crate::error::Error;
use crate::onespace::Measurements;
use crate::par;
use crate::solve::{reduce_to_frame, solve_sequential, SolverConfig};
use crate::space::{AmbientSpace, Subspace, RANK_TOL};
use crate::Result;

/// A complete recovery problem: ambient space, hierarchy, measurements, and
/// (for generated test problems) the element the data came from.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub space: AmbientSpace,
    pub hier: Hierarchy,
    pub meas: Measurements,
    /// A known member of the data-consistent set, when the generator has one.
    pub u_true: Option<DVector<f64>>,
    pub seed: Option<u64>,
}

impl ProblemInstance {
    /// Check the internal consistency of the instance: dimensions agree and
    /// `u_true` (when present) reproduces the data and satisfies every level
    /// constraint.
    pub fn validate(&self) -> Result<()> {
        if self.hier.ambient_dim() != self.space.dim()
            || self.meas.ambient_dim() != self.space.dim()
        {
            return Err(Error::DimensionMismatch {
                context: "problem instance",
                expected: self.space.dim(),
                got: self.hier.ambient_dim(),
            });
        }
        if let Some(u) = &self.u_true {
            let w = self.meas.w_space().project(u)?;
            let off = (&w - self.meas.w_vec()).norm();
            if off > 1e-10 * (1.0 + self.meas.w_vec().norm()) {
                return Err(Error::Parse(format!(
                    "u_true does not reproduce the data (off by {off:.3e})"
                )));
            }
            for j in 0..=self.hier.depth() {
                let dist = self.hier.level_distance(j, u)?;
                let eps = self.hier.eps()[j];
                if dist > eps * (1.0 + 1e-12) + 1e-15 {
                    return Err(Error::NotInK {
                        level: j,
                        dist,
                        eps,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Realize a prescribed cross-Gramian spectrum: `φ_j = e_j` and
/// `ω_j = s_j e_j + √(1 − s_j²) e_{n+j}` for `j ≤ n`, `ω_j = e_{n+j}`
/// beyond. The favorable bases of the result reproduce `s` exactly with
/// `φ* = φ`. The observed element is zero.
pub fn gen_from_spectrum(
    n: usize,
    m: usize,
    dim: usize,
    s: &[f64],
    eps: &[f64],
) -> Result<ProblemInstance> {
    if s.len() != n {
        return Err(Error::BadSpectrum("need one singular value per level"));
    }
    if eps.len() != n + 1 {
        return Err(Error::BadSpectrum("need n + 1 tolerances"));
    }
    if m < n {
        return Err(Error::BadSpectrum("need at least as many measurements as levels"));
    }
    if dim < n + m {
        return Err(Error::BadSpectrum("ambient dimension must be at least n + m"));
    }
    if s.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
        return Err(Error::BadSpectrum("singular values must lie in (0, 1]"));
    }
    if s.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::BadSpectrum("singular values must be non-increasing"));
    }
    let mut phi = DMatrix::zeros(dim, n);
    for j in 0..n {
        phi[(j, j)] = 1.0;
    }
    let mut omega = DMatrix::zeros(dim, m);
    for j in 0..m {
        if j < n {
            omega[(j, j)] = s[j];
            omega[(n + j, j)] = (1.0 - s[j] * s[j]).sqrt();
        } else {
            omega[(n + j, j)] = 1.0;
        }
    }
    let space = AmbientSpace::euclidean(dim);
    let hier = Hierarchy::new(phi, eps.to_vec())?;
    let w_space = Subspace::from_orthonormal(omega)?;
    let meas = Measurements::new(w_space, DVector::zeros(dim))?;
    Ok(ProblemInstance {
        space,
        hier,
        meas,
        u_true: None,
        seed: None,
    })
}

/// Aligned-bases instance: the hierarchy basis coincides with the favorable
/// basis. The spectrum and tolerances decay together, `ε_n = s_n = ε` and
/// `ε_{n−1} = ε_{n−2} = s_{n−1} = s_{n−2} = √ε` with everything above at
/// one, so the multi-space bound beats the best single-space bound by an
/// arbitrarily large factor as `ε → 0`.
pub fn gen_example1(n: usize, eps_small: f64) -> Result<ProblemInstance> {
    if n < 3 {
        return Err(Error::BadSpectrum("aligned example needs n >= 3"));
    }
    if !(eps_small > 0.0 && eps_small < 1.0) {
        return Err(Error::BadSpectrum("eps must lie in (0, 1)"));
    }
    let root = eps_small.sqrt();
    let mut s = vec![1.0; n];
    s[n - 3] = root;
    s[n - 2] = root;
    s[n - 1] = eps_small;
    let mut eps = vec![1.0; n + 1];
    eps[n - 2] = root;
    eps[n - 1] = root;
    eps[n] = eps_small;
    gen_from_spectrum(n, n, 2 * n, &s, &eps)
}

/// Incoherent-bases instance: the hierarchy basis is the favorable basis
/// rotated by the normalized Sylvester-Hadamard matrix, so every change of
/// basis entry has magnitude `1/√n`. Tolerances are `ε_0 = 1/2`,
/// `ε_j = 1/(2(n−1))`, and the spectrum is flat at
/// `s = √(n ε_n² − ε_n⁴)` except for `s_n = ε_n²`, which makes the budget
/// split land exactly at `k = n−1, δ = 1`.
pub fn gen_example2(n: usize, eps_n: f64) -> Result<ProblemInstance> {
    if !n.is_power_of_two() || n < 4 {
        return Err(Error::NotPowerOfTwo(n));
    }
    let nf = n as f64;
    if !(eps_n > 0.0 && eps_n <= nf.powf(-1.5)) {
        return Err(Error::BadSpectrum("need 0 < eps_n <= n^(-3/2)"));
    }
    let s_flat = (nf * eps_n * eps_n - eps_n.powi(4)).sqrt();
    let s_last = eps_n * eps_n;
    let mut s = vec![s_flat; n];
    s[n - 1] = s_last;
    let mut eps = vec![1.0 / (2.0 * (nf - 1.0)); n + 1];
    eps[0] = 0.5;
    eps[n] = eps_n;
    let inst = gen_from_spectrum(n, n, 2 * n, &s, &eps)?;
    // Rotate the hierarchy basis by the Hadamard matrix; the measurement
    // geometry (built on the favorable basis e_1..e_n) stays put.
    let h = sylvester_hadamard(n);
    let rot = h.map(|v| v / nf.sqrt());
    let phi = inst.hier.phi() * rot.transpose();
    let hier = Hierarchy::new(phi, eps)?;
    Ok(ProblemInstance { hier, ..inst })
}

/// The two-dimensional instance whose data-consistent set is the single
/// point `(√3/2, 1/2)`: `V_0 = {0}`, `V_1 = span e_1`,
/// `W = span (e_1 + e_2)`, `ε = (1, 1/2)` and `w` on the diagonal.
pub fn gen_2d_singleton() -> ProblemInstance {
    let space = AmbientSpace::euclidean(2);
    let phi = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
    let hier = Hierarchy::new(phi, vec![1.0, 0.5]).expect("static instance");
    let w_space = Subspace::orthonormalize(
        2,
        &[DVector::from_row_slice(&[1.0, 1.0])],
        RANK_TOL,
    )
    .expect("static instance");
    let b = (3.0f64.sqrt() + 1.0) / 4.0;
    let meas = Measurements::new(w_space, DVector::from_row_slice(&[b, b]))
        .expect("static instance");
    ProblemInstance {
        space,
        hier,
        meas,
        u_true: Some(DVector::from_row_slice(&[3.0f64.sqrt() / 2.0, 0.5])),
        seed: None,
    }
}

/// Seeded random instance with a known feasible element: Gaussian
/// orthonormal `φ` and `W`, `u_true` a random model combination plus noise,
/// tolerances set to the true level distances inflated by `slack` (floored
/// at `1e-12` and kept non-increasing), and `w = P_W u_true`. The set
/// `K_w` contains `u_true` by construction. A fixed seed reproduces the
/// instance bit for bit.
pub fn gen_random(n: usize, m: usize, dim: usize, seed: u64, slack: f64) -> Result<ProblemInstance> {
    if !(n <= m && m <= dim) {
        return Err(Error::BadSpectrum("need n <= m <= dim"));
    }
    if !(slack > 0.0) {
        return Err(Error::BadTolerances("slack must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_err = None;
    for _ in 0..10 {
        match try_random(n, m, dim, slack, &mut rng) {
            Ok(mut inst) => {
                inst.seed = Some(seed);
                return Ok(inst);
            }
            Err(e @ Error::RankDeficient(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or(Error::RankDeficient("random instance generation failed")))
}

fn try_random(
    n: usize,
    m: usize,
    dim: usize,
    slack: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ProblemInstance> {
    let gauss = |rng: &mut ChaCha8Rng| DVector::from_fn(dim, |_, _| rng.sample(StandardNormal));
    let phi_raw: Vec<DVector<f64>> = (0..n).map(|_| gauss(rng)).collect();
    let v = Subspace::orthonormalize(dim, &phi_raw, RANK_TOL)?;
    let omega_raw: Vec<DVector<f64>> = (0..m).map(|_| gauss(rng)).collect();
    let w_space = Subspace::orthonormalize(dim, &omega_raw, RANK_TOL)?;

    let coeff = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
    let noise = 0.1 * gauss(rng);
    let u_true = v.basis() * coeff + noise;

    let mut eps = Vec::with_capacity(n + 1);
    let mut running = f64::INFINITY;
    for j in 0..=n {
        let cols = v.basis().columns(0, j);
        let dist = (&u_true - cols * (cols.transpose() * &u_true)).norm();
        let e = (dist * (1.0 + slack)).max(1e-12);
        running = running.min(e);
        eps.push(running);
    }
    let hier = Hierarchy::new(v.basis().clone(), eps)?;
    let w_vec = w_space.project(&u_true)?;
    let meas = Measurements::new(w_space, w_vec)?;
    let inst = ProblemInstance {
        space: AmbientSpace::euclidean(dim),
        hier,
        meas,
        u_true: Some(u_true),
        seed: None,
    };
    inst.validate()?;
    Ok(inst)
}

/// Monte-Carlo *lower* bound on the radius of the data-consistent set: run
/// the cyclic solver from `n_starts` seeded random points of the reduced
/// frame, collect the limit points, and return half the maximum pairwise
/// distance. The true Chebyshev radius can only be larger.
pub fn oracle_radius_sample(inst: &ProblemInstance, n_starts: usize, seed: u64) -> Result<f64> {
    let frame = reduce_to_frame(&inst.hier, &inst.meas)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = inst.hier.eps()[0];
    let starts: Vec<DVector<f64>> = (0..n_starts)
        .map(|_| {
            let g = DVector::from_fn(frame.dim(), |_, _| rng.sample(StandardNormal));
            frame
                .from_frame(&(frame.w_frame() + spread * g))
                .expect("frame dimensions are consistent")
        })
        .collect();
    let limits = par::map_slice(&starts, |start| {
        let config = SolverConfig {
            start: Some(start.clone()),
            tol_stop: 1e-10,
            max_iter: 50_000,
            trace_every: 50_001,
            ..Default::default()
        };
        solve_sequential(&inst.hier, &inst.meas, &config).map(|r| r.u_final)
    });
    let mut points = Vec::with_capacity(limits.len());
    for r in limits {
        points.push(r?);
    }
    let mut diameter = 0.0f64;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            diameter = diameter.max((&points[i] - &points[j]).norm());
        }
    }
    Ok(diameter / 2.0)
}

/// Sylvester-Hadamard matrix of power-of-two size: entries `±1`, orthogonal
/// after division by `√n`.
pub fn sylvester_hadamard(n: usize) -> DMatrix<f64> {
    assert!(n.is_power_of_two(), "size must be a power of two");
    let mut h = DMatrix::from_element(1, 1, 1.0);
    let mut size = 1;
    while size < n {
        let mut next = DMatrix::zeros(size * 2, size * 2);
        next.view_mut((0, 0), (size, size)).copy_from(&h);
        next.view_mut((0, size), (size, size)).copy_from(&h);
        next.view_mut((size, 0), (size, size)).copy_from(&h);
        next.view_mut((size, size), (size, size)).copy_from(&(-&h));
        h = next;
        size *= 2;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::onespace::{beta_mu, favorable_bases, TOL_ONE};
    use approx::assert_relative_eq;

    #[test]
    fn spectrum_round_trip_reproduces_singular_values() {
        let s = [1.0, 0.7, 0.7, 0.2];
        let eps = [1.0, 0.9, 0.5, 0.4, 0.1];
        let inst = gen_from_spectrum(4, 6, 12, &s, &eps).unwrap();
        let fav = favorable_bases(&inst.meas, &inst.hier.top(), TOL_ONE).unwrap();
        for (got, want) in fav.singular_values().iter().zip(s.iter()) {
            assert_relative_eq!(got, want, epsilon = 1e-12);
        }
        assert_eq!(fav.intersection_dim(), 1);
        // phi* coincides with the hierarchy basis.
        let diff = fav.phi_star() - inst.hier.phi();
        assert!(diff.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn spectrum_construction_matches_diagonal_geometry() {
        let inst = gen_from_spectrum(
            1,
            1,
            2,
            &[std::f64::consts::FRAC_1_SQRT_2],
            &[1.0, 0.5],
        )
        .unwrap();
        let g = crate::onespace::cross_gramian(&inst.meas, &inst.hier.top()).unwrap();
        assert_relative_eq!(g[(0, 0)], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);

        let all_ones = gen_from_spectrum(2, 2, 4, &[1.0, 1.0], &[1.0, 0.5, 0.2]).unwrap();
        let fav = favorable_bases(&all_ones.meas, &all_ones.hier.top(), TOL_ONE).unwrap();
        assert_eq!(fav.intersection_dim(), 2);
        assert_eq!(beta_mu(&fav), (1.0, 1.0));
    }

    #[test]
    fn spectrum_rejects_bad_parameters() {
        assert!(matches!(
            gen_from_spectrum(2, 2, 3, &[0.5, 0.4], &[1.0, 0.5, 0.2]),
            Err(Error::BadSpectrum(_))
        ));
        assert!(matches!(
            gen_from_spectrum(2, 2, 4, &[0.4, 0.5], &[1.0, 0.5, 0.2]),
            Err(Error::BadSpectrum(_))
        ));
        assert!(matches!(
            gen_from_spectrum(2, 2, 4, &[0.5, 1.2], &[1.0, 0.5, 0.2]),
            Err(Error::BadSpectrum(_))
        ));
    }

    #[test]
    fn example1_shape() {
        let inst = gen_example1(3, 0.01).unwrap();
        assert_eq!(inst.hier.eps(), &[1.0, 0.1, 0.1, 0.01]);
        assert_eq!(inst.hier.depth(), 3);
        assert_eq!(inst.meas.len(), 3);
        inst.validate().unwrap();
        assert!(matches!(gen_example1(2, 0.01), Err(Error::BadSpectrum(_))));
    }

    #[test]
    fn example2_shape_and_guards() {
        let inst = gen_example2(4, 0.05).unwrap();
        assert_eq!(inst.hier.depth(), 4);
        assert_relative_eq!(inst.hier.eps()[0], 0.5);
        assert_relative_eq!(inst.hier.eps()[1], 1.0 / 6.0);
        assert_relative_eq!(inst.hier.eps()[4], 0.05);
        inst.validate().unwrap();
        assert!(matches!(gen_example2(6, 0.01), Err(Error::NotPowerOfTwo(6))));
        assert!(matches!(
            gen_example2(4, 0.2),
            Err(Error::BadSpectrum(_))
        ));
    }

    #[test]
    fn singleton_instance_geometry() {
        let inst = gen_2d_singleton();
        inst.validate().unwrap();
        let u = inst.u_true.as_ref().unwrap();
        // The target saturates the norm constraint exactly.
        assert_relative_eq!(u.norm(), 1.0, epsilon = 1e-12);
        assert!(inst.hier.in_model_set(u, 1e-12).unwrap());
        // A data-plane perturbation leaves the model set.
        let t = 1e-3 / 2.0f64.sqrt();
        let moved = u + DVector::from_row_slice(&[t, -t]);
        let off = (inst.meas.w_space().project(&moved).unwrap() - inst.meas.w_vec()).norm();
        assert!(off < 1e-12, "perturbation stays in the data plane");
        assert!(!inst.hier.in_model_set(&moved, 1e-12).unwrap());
    }

    #[test]
    fn random_instances_are_feasible_and_deterministic() {
        let a = gen_random(3, 5, 9, 1234, 0.1).unwrap();
        a.validate().unwrap();
        let b = gen_random(3, 5, 9, 1234, 0.1).unwrap();
        assert_eq!(a.hier.phi(), b.hier.phi());
        assert_eq!(a.hier.eps(), b.hier.eps());
        assert_eq!(a.meas.w_vec(), b.meas.w_vec());
        assert_eq!(a.u_true, b.u_true);
        let c = gen_random(3, 5, 9, 1235, 0.1).unwrap();
        assert_ne!(a.meas.w_vec(), c.meas.w_vec());
    }

    #[test]
    fn oracle_on_singleton_is_zero() {
        let inst = gen_2d_singleton();
        let r = oracle_radius_sample(&inst, 8, 7).unwrap();
        assert!(r <= 1e-6, "singleton radius estimate {r:.3e}");
    }

    #[test]
    fn hadamard_is_orthogonal() {
        for n in [1usize, 2, 4, 8, 16] {
            let h = sylvester_hadamard(n);
            let q = h.map(|v| v / (n as f64).sqrt());
            let dev = (q.transpose() * &q - DMatrix::<f64>::identity(n, n))
                .iter()
                .fold(0.0f64, |a, v| a.max(v.abs()));
            assert!(dev < 1e-12);
        }
    }
}
