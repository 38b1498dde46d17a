//! Clean data generators.

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::stability::RateFamily;
use crate::types::PointSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "snake_case")]
pub enum Generator {
    /// N(mean, I_d).
    GaussianIsotropic {
        d: usize,
        #[serde(default)]
        mean: Option<Vec<f64>>,
    },
    /// N(mean, Sigma) with Sigma <= I.
    BoundedCov {
        sigma: Vec<Vec<f64>>,
        #[serde(default)]
        mean: Option<Vec<f64>>,
    },
    /// Multivariate Student t with `dof` > 2, scaled to identity covariance.
    HeavyTailT {
        d: usize,
        dof: f64,
        #[serde(default)]
        mean: Option<Vec<f64>>,
    },
}

/// A generated sample with its population parameters.
#[derive(Debug, Clone)]
pub struct Sample {
    pub points: PointSet,
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
}

impl Generator {
    pub fn dim(&self) -> usize {
        match self {
            Generator::GaussianIsotropic { d, .. } | Generator::HeavyTailT { d, .. } => *d,
            Generator::BoundedCov { sigma, .. } => sigma.len(),
        }
    }

    pub fn rate_family(&self) -> RateFamily {
        match self {
            Generator::GaussianIsotropic { .. } => RateFamily::Subgaussian,
            Generator::BoundedCov { .. } => RateFamily::BoundedCovariance,
            Generator::HeavyTailT { dof, .. } => {
                // Moments of order below dof exist; use the largest integer order.
                let order = ((dof.ceil() - 1.0).max(2.0)) as u32;
                RateFamily::BoundedKthMoment { order, sigma: 1.0 }
            }
        }
    }

    fn mean_or_zero(mean: &Option<Vec<f64>>, d: usize) -> Result<Vec<f64>> {
        match mean {
            None => Ok(vec![0.0; d]),
            Some(m) if m.len() == d => Ok(m.clone()),
            Some(m) => Err(Error::DimensionMismatch(format!(
                "mean has length {}, expected {d}",
                m.len()
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::invalid("generator dimension must be positive"));
        }
        match self {
            Generator::GaussianIsotropic { mean, .. } => Self::mean_or_zero(mean, d).map(|_| ()),
            Generator::BoundedCov { sigma, mean } => {
                Self::mean_or_zero(mean, d)?;
                let s = crate::matrix_serde::from_rows(sigma).map_err(Error::invalid)?;
                if s.ncols() != d {
                    return Err(Error::DimensionMismatch("sigma is not square".into()));
                }
                linalg::psd_sqrt(&s, 1e-8)?;
                Ok(())
            }
            Generator::HeavyTailT { dof, mean, .. } => {
                Self::mean_or_zero(mean, d)?;
                if !(*dof > 2.0) {
                    return Err(Error::invalid("heavy_tail_t needs dof > 2"));
                }
                Ok(())
            }
        }
    }

    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Sample> {
        self.validate()?;
        let d = self.dim();
        let normal = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..d).map(|_| StandardNormal.sample(rng)).collect() };
        let (mean, covariance, rows): (Vec<f64>, DMatrix<f64>, Vec<Vec<f64>>) = match self {
            Generator::GaussianIsotropic { mean, .. } => {
                let mu = Self::mean_or_zero(mean, d)?;
                let rows = (0..n)
                    .map(|_| normal(rng).iter().zip(&mu).map(|(z, m)| z + m).collect())
                    .collect();
                (mu, DMatrix::identity(d, d), rows)
            }
            Generator::BoundedCov { sigma, mean } => {
                let mu = Self::mean_or_zero(mean, d)?;
                let s = crate::matrix_serde::from_rows(sigma).map_err(Error::invalid)?;
                let root = linalg::psd_sqrt(&s, 1e-8)?;
                let rows = (0..n)
                    .map(|_| {
                        let z = normal(rng);
                        linalg::mat_vec(&root, &z).iter().zip(&mu).map(|(x, m)| x + m).collect()
                    })
                    .collect();
                (mu, s, rows)
            }
            Generator::HeavyTailT { dof, mean, .. } => {
                let mu = Self::mean_or_zero(mean, d)?;
                let chi = ChiSquared::new(*dof).map_err(|e| Error::invalid(e.to_string()))?;
                let scale = ((dof - 2.0) / dof).sqrt();
                let rows = (0..n)
                    .map(|_| {
                        let z = normal(rng);
                        let w: f64 = chi.sample(rng);
                        let f = scale / (w / dof).sqrt();
                        z.iter().zip(&mu).map(|(zi, m)| m + f * zi).collect()
                    })
                    .collect();
                (mu, DMatrix::identity(d, d), rows)
            }
        };
        Ok(Sample {
            points: PointSet::new(d, rows.concat())?,
            mean,
            covariance,
        })
    }
}
