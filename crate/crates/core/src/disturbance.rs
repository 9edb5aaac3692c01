//! Elliptically contoured disturbance models with ellipsoidal support.
//!
//! The disturbance trajectory is lifted as `ξ = (1, ζ)` with
//! `ζ = (ξ(0), .., ξ(T-1))` of dimension `d`. The support is the ellipsoid
//! `{c + L v : ||v|| <= 1}`, written in conic form as `W ξ ∈ K₂` on the
//! hyperplane `ξ₁ = 1`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, soc_margin};

pub const DEFAULT_MC_SAMPLES: usize = 200_000;

#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    /// Uniform distribution on the support ellipsoid.
    UniformEllipsoid,
    /// Gaussian centred at `c` with covariance `covariance`, truncated to the
    /// support ellipsoid.
    TruncatedGaussian { covariance: DMatrix<f64> },
    /// Second moments supplied directly (lifted, `N_ξ × N_ξ`).
    UserMoments { moments: DMatrix<f64> },
}

impl Family {
    pub fn tag(&self) -> &'static str {
        match self {
            Family::UniformEllipsoid => "uniform_ellipsoid",
            Family::TruncatedGaussian { .. } => "truncated_gaussian",
            Family::UserMoments { .. } => "user_moments",
        }
    }
}

#[derive(Clone, Debug)]
pub struct DisturbanceModel {
    pub family: Family,
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
    /// Seed and sample count used when moments must be estimated.
    pub mc_seed: u64,
    pub mc_samples: usize,
}

/// Second-moment matrix together with the sample count and seed behind any estimate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentEstimate {
    #[serde(skip)]
    pub matrix: DMatrix<f64>,
    pub min_eigenvalue: f64,
    /// Largest per-entry Monte Carlo standard error, when estimated.
    pub std_error: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub warnings: Vec<String>,
}

impl DisturbanceModel {
    pub fn new(family: Family, center: DVector<f64>, shape: DMatrix<f64>) -> Result<Self> {
        let d = center.len();
        if d == 0 {
            return Err(Error::InvalidDisturbance("empty disturbance trajectory".into()));
        }
        if shape.nrows() != d || shape.ncols() != d {
            return Err(Error::InvalidDisturbance(format!(
                "shape matrix is {}x{}, expected {d}x{d}",
                shape.nrows(),
                shape.ncols()
            )));
        }
        match &family {
            Family::TruncatedGaussian { covariance } if covariance.shape() != (d, d) => {
                return Err(Error::InvalidDisturbance(format!(
                    "covariance is {}x{}, expected {d}x{d}",
                    covariance.nrows(),
                    covariance.ncols()
                )))
            }
            Family::UserMoments { moments } if moments.shape() != (d + 1, d + 1) => {
                return Err(Error::InvalidDisturbance(format!(
                    "moment matrix is {}x{}, expected {}x{}",
                    moments.nrows(),
                    moments.ncols(),
                    d + 1,
                    d + 1
                )))
            }
            _ => {}
        }
        Ok(DisturbanceModel {
            family,
            center,
            shape,
            mc_seed: 0,
            mc_samples: DEFAULT_MC_SAMPLES,
        })
    }

    pub fn uniform(center: DVector<f64>, shape: DMatrix<f64>) -> Result<Self> {
        Self::new(Family::UniformEllipsoid, center, shape)
    }

    /// Uniform on the ball `{||ζ|| <= radius}` in dimension `d`.
    pub fn uniform_ball(d: usize, radius: f64) -> Result<Self> {
        Self::uniform(DVector::zeros(d), DMatrix::identity(d, d) * radius)
    }

    /// Dimension `d` of `ζ`.
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `N_ξ = 1 + d`.
    pub fn lifted_dim(&self) -> usize {
        self.dim() + 1
    }

    fn shape_inverse(&self) -> Result<DMatrix<f64>> {
        let sv = self.shape.clone().svd(false, false).singular_values;
        let smax = sv.max();
        let smin = sv.min();
        if smax == 0.0 || smin <= 1e-14 * smax {
            return Err(Error::SingularShape);
        }
        self.shape.clone().try_inverse().ok_or(Error::SingularShape)
    }

    /// `W = [[1, 0], [-L⁻¹c, L⁻¹]]`.
    pub fn support_matrix(&self) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let linv = self.shape_inverse()?;
        let mut w = DMatrix::zeros(d + 1, d + 1);
        w[(0, 0)] = 1.0;
        w.view_mut((1, 0), (d, 1)).copy_from(&(-&linv * &self.center));
        w.view_mut((1, 1), (d, d)).copy_from(&linv);
        Ok(w)
    }

    /// Cone margin of `W ξ`; nonnegative iff a lifted `ξ` lies in the support.
    pub fn support_margin(&self, w: &DMatrix<f64>, xi: &DVector<f64>) -> f64 {
        soc_margin((w * xi).as_slice())
    }

    /// `max { aᵀξ : ξ ∈ Ξ } = a₁ + a_ζᵀc + ||Lᵀa_ζ||`.
    pub fn support_max(&self, a: &DVector<f64>) -> f64 {
        let tail = a.rows(1, self.dim()).into_owned();
        a[0] + tail.dot(&self.center) + (self.shape.transpose() * tail).norm()
    }

    pub fn moment_matrix(&self) -> Result<MomentEstimate> {
        let d = self.dim();
        let mut warnings = Vec::new();
        let (matrix, std_error, samples, seed) = match &self.family {
            Family::UniformEllipsoid => {
                let second = &self.center * self.center.transpose()
                    + &self.shape * self.shape.transpose() / (d as f64 + 2.0);
                (lift(&self.center, &second), None, None, None)
            }
            Family::TruncatedGaussian { .. } => {
                let (m, se) = self.estimate_moments(self.mc_samples, self.mc_seed)?;
                let norm = m.norm();
                if se > 1e-3 * norm {
                    warnings.push(format!(
                        "Monte Carlo standard error {se:.3e} exceeds 1e-3 * ||M|| = {:.3e}; \
                         increase mc_samples",
                        1e-3 * norm
                    ));
                }
                (m, Some(se), Some(self.mc_samples), Some(self.mc_seed))
            }
            Family::UserMoments { moments } => {
                let scale = 1.0 + moments.amax();
                if (moments - moments.transpose()).amax() > 1e-12 * scale {
                    return Err(Error::InvalidDisturbance("moment matrix is not symmetric".into()));
                }
                if (moments[(0, 0)] - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidDisturbance(format!(
                        "moment matrix must have M[1,1] = 1 (got {})",
                        moments[(0, 0)]
                    )));
                }
                ((moments + moments.transpose()) * 0.5, None, None, None)
            }
        };
        let threshold = 1e-10 * matrix.trace() / matrix.nrows() as f64;
        let min_eig = min_eigenvalue(&matrix);
        if !(min_eig > threshold) {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: min_eig,
                threshold,
            });
        }
        Ok(MomentEstimate {
            matrix,
            min_eigenvalue: min_eig,
            std_error,
            samples,
            seed,
            warnings,
        })
    }

    fn estimate_moments(&self, n: usize, seed: u64) -> Result<(DMatrix<f64>, f64)> {
        let dim = self.lifted_dim();
        let mut sampler = self.sampler(seed)?;
        let mut sum = DMatrix::<f64>::zeros(dim, dim);
        let mut sum_sq = DMatrix::<f64>::zeros(dim, dim);
        for _ in 0..n {
            let xi = sampler.draw()?;
            let outer = &xi * xi.transpose();
            sum_sq += outer.component_mul(&outer);
            sum += outer;
        }
        let nf = n as f64;
        let mean = sum / nf;
        let var = sum_sq / nf - mean.component_mul(&mean);
        let se = var.iter().fold(0.0_f64, |a, &v| a.max(v.max(0.0).sqrt())) / nf.sqrt();
        Ok(((&mean + mean.transpose()) * 0.5, se))
    }

    pub fn sampler(&self, seed: u64) -> Result<Sampler<'_>> {
        let kind = match &self.family {
            Family::UniformEllipsoid => SamplerKind::Uniform,
            Family::TruncatedGaussian { covariance } => {
                let chol = covariance.clone().cholesky().ok_or_else(|| {
                    Error::InvalidDisturbance("truncated-gaussian covariance is not positive definite".into())
                })?;
                SamplerKind::Truncated {
                    factor: chol.l(),
                    shape_inv: self.shape_inverse()?,
                    attempts: 0,
                    accepted: 0,
                }
            }
            Family::UserMoments { .. } => return Err(Error::SamplingUnsupported("user_moments")),
        };
        Ok(Sampler {
            model: self,
            rng: ChaCha8Rng::seed_from_u64(seed),
            kind,
        })
    }

    /// `n` i.i.d. lifted draws as rows of an `n × N_ξ` matrix.
    pub fn sample(&self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        if n == 0 {
            return Err(Error::InvalidDisturbance("sample count must be >= 1".into()));
        }
        let mut sampler = self.sampler(seed)?;
        let mut out = DMatrix::zeros(n, self.lifted_dim());
        for r in 0..n {
            let xi = sampler.draw()?;
            out.row_mut(r).copy_from(&xi.transpose());
        }
        Ok(out)
    }
}

fn lift(mean: &DVector<f64>, second: &DMatrix<f64>) -> DMatrix<f64> {
    let d = mean.len();
    let mut m = DMatrix::zeros(d + 1, d + 1);
    m[(0, 0)] = 1.0;
    m.view_mut((1, 0), (d, 1)).copy_from(mean);
    m.view_mut((0, 1), (1, d)).copy_from(&mean.transpose());
    m.view_mut((1, 1), (d, d)).copy_from(second);
    m
}

enum SamplerKind {
    Uniform,
    Truncated {
        factor: DMatrix<f64>,
        shape_inv: DMatrix<f64>,
        attempts: u64,
        accepted: u64,
    },
}

/// Seeded stream of lifted disturbance draws.
pub struct Sampler<'a> {
    model: &'a DisturbanceModel,
    rng: ChaCha8Rng,
    kind: SamplerKind,
}

impl Sampler<'_> {
    fn gaussian(&mut self, d: usize) -> DVector<f64> {
        DVector::from_fn(d, |_, _| self.rng.sample(StandardNormal))
    }

    /// One lifted draw `(1, ζ)`.
    pub fn draw(&mut self) -> Result<DVector<f64>> {
        let d = self.model.dim();
        let zeta = match self.kind {
            SamplerKind::Uniform => {
                let dir = loop {
                    let g = self.gaussian(d);
                    let n = g.norm();
                    if n > 0.0 {
                        break g / n;
                    }
                };
                let radius = self.rng.random::<f64>().powf(1.0 / d as f64);
                &self.model.center + &self.model.shape * (dir * radius)
            }
            SamplerKind::Truncated { .. } => loop {
                let g = self.gaussian(d);
                let SamplerKind::Truncated {
                    factor,
                    shape_inv,
                    attempts,
                    accepted,
                } = &mut self.kind
                else {
                    unreachable!()
                };
                let offset = &*factor * g;
                *attempts += 1;
                if (&*shape_inv * &offset).norm() <= 1.0 {
                    *accepted += 1;
                    break &self.model.center + offset;
                }
                if *attempts >= 10_000 {
                    let rate = *accepted as f64 / *attempts as f64;
                    if rate < 1e-4 {
                        return Err(Error::RejectionRate { rate });
                    }
                }
            },
        };
        let mut xi = DVector::zeros(d + 1);
        xi[0] = 1.0;
        xi.rows_mut(1, d).copy_from(&zeta);
        Ok(xi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_ball_support_is_identity() {
        let m = DisturbanceModel::uniform_ball(3, 1.0).unwrap();
        assert_eq!(m.support_matrix().unwrap(), DMatrix::identity(4, 4));
    }

    #[test]
    fn scalar_support_matrix_and_boundary() {
        let m = DisturbanceModel::uniform(DVector::from_element(1, 1.0), DMatrix::from_element(1, 1, 2.0)).unwrap();
        let w = m.support_matrix().unwrap();
        assert_eq!(w, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -0.5, 0.5]));
        let xi = DVector::from_row_slice(&[1.0, 3.0]);
        assert_eq!(&w * &xi, DVector::from_row_slice(&[1.0, 1.0]));
        assert_eq!(m.support_margin(&w, &xi), 0.0);
    }

    #[test]
    fn interval_moments() {
        let m = DisturbanceModel::uniform_ball(1, 1.0).unwrap();
        let est = m.moment_matrix().unwrap();
        assert!((est.matrix[(1, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(est.matrix[(0, 1)], 0.0);
        assert_eq!(est.matrix[(0, 0)], 1.0);
    }

    #[test]
    fn disc_moments() {
        let m = DisturbanceModel::uniform_ball(2, 1.0).unwrap();
        let est = m.moment_matrix().unwrap();
        assert!((est.matrix.view((1, 1), (2, 2)) - DMatrix::identity(2, 2) / 4.0).amax() < 1e-15);
    }

    #[test]
    fn degenerate_shape_rejected() {
        let m = DisturbanceModel::uniform(DVector::zeros(1), DMatrix::zeros(1, 1)).unwrap();
        assert!(matches!(m.moment_matrix(), Err(Error::NotPositiveDefinite { .. })));
        assert!(matches!(m.support_matrix(), Err(Error::SingularShape)));
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = DisturbanceModel::uniform_ball(2, 1.5).unwrap();
        let a = m.sample(3, 42).unwrap();
        let b = m.sample(3, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, m.sample(3, 43).unwrap());
        assert!(a.column(0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn improbable_truncation_is_reported() {
        let d = 4;
        let m = DisturbanceModel::new(
            Family::TruncatedGaussian {
                covariance: DMatrix::identity(d, d) * 1e6,
            },
            DVector::zeros(d),
            DMatrix::identity(d, d) * 1e-3,
        )
        .unwrap();
        assert!(matches!(m.sample(1, 0), Err(Error::RejectionRate { .. })));
    }

    #[test]
    fn user_moments_validated() {
        let bad = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let m = DisturbanceModel::new(
            Family::UserMoments { moments: bad },
            DVector::zeros(1),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        assert!(m.moment_matrix().is_err());
        assert!(matches!(m.sample(1, 0), Err(Error::SamplingUnsupported(_))));
    }

    #[test]
    fn support_max_matches_boundary_point() {
        let m = DisturbanceModel::uniform(DVector::from_element(1, 1.0), DMatrix::from_element(1, 1, 2.0)).unwrap();
        // max of 2 - ζ over ζ ∈ [-1, 3] is 3
        let a = DVector::from_row_slice(&[2.0, -1.0]);
        assert!((m.support_max(&a) - 3.0).abs() < 1e-15);
    }
}
