//! Brute-force reference moments of tilted priors, by Gauss–Hermite
//! quadrature (Gaussian priors) or direct summation (atomic priors).
//! Slow and simple on purpose: tests compare the closed forms against it.

use crate::denoise::{JointMoments, ScalarMoments};
use crate::error::{Error, Result};
use crate::model::{JointLatentPrior, WPrior};
use crate::quadrature::GaussHermite;

/// Node count per dimension. 64 nodes leave ~3·10⁻⁸ error when the tilt
/// pushes the mass five standard deviations out (K = 0, |J| = 5).
pub const ORACLE_NODES: usize = 128;

#[derive(Debug, Clone)]
pub enum OraclePrior {
    Gaussian {
        var: f64,
    },
    /// `(value, probability)` atoms.
    Atomic(Vec<(f64, f64)>),
    JointGaussian(JointLatentPrior),
}

impl From<WPrior> for OraclePrior {
    fn from(p: WPrior) -> Self {
        match p {
            WPrior::Gaussian { var } => OraclePrior::Gaussian { var },
            WPrior::RademacherBernoulli { rho } => {
                OraclePrior::Atomic(vec![(1.0, 0.5 * rho), (-1.0, 0.5 * rho), (0.0, 1.0 - rho)])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleMoments {
    Scalar(ScalarMoments),
    Joint(JointMoments),
}

/// Moments of `P(x)·exp(J·x − ½·xᵀ diag(K) x)`. Scalar priors take `k[0]`,
/// `j[0]`; the joint prior takes both entries.
pub fn tilted_moments_oracle(prior: &OraclePrior, k: &[f64], j: &[f64]) -> Result<OracleMoments> {
    match prior {
        OraclePrior::Gaussian { var } => {
            let gh = GaussHermite::new(ORACLE_NODES);
            let sd = var.sqrt();
            let pts: Vec<(f64, f64)> = gh
                .nodes()
                .iter()
                .zip(gh.weights())
                .map(|(&x, &w)| (sd * x, w))
                .collect();
            Ok(OracleMoments::Scalar(scalar_sum(&pts, k[0], j[0])?))
        }
        OraclePrior::Atomic(atoms) => Ok(OracleMoments::Scalar(scalar_sum(atoms, k[0], j[0])?)),
        OraclePrior::JointGaussian(latent) => {
            if k.len() < 2 || j.len() < 2 {
                return Err(Error::Unsupported("joint prior needs 2-vector sources".into()));
            }
            let gh = GaussHermite::new(ORACLE_NODES);
            // Cholesky factor of Σ; a rank-one Σ gives l11 = 0
            let l00 = latent.var_x.sqrt();
            let l10 = latent.cov / l00;
            let l11 = (latent.var_y - l10 * l10).max(0.0).sqrt();
            let mut pts = Vec::with_capacity(gh.len() * gh.len());
            for (&a, &wa) in gh.nodes().iter().zip(gh.weights()) {
                for (&b, &wb) in gh.nodes().iter().zip(gh.weights()) {
                    let x = l00 * a;
                    let y = l10 * a + l11 * b;
                    let g = wa * wb * (j[0] * x + j[1] * y - 0.5 * (k[0] * x * x + k[1] * y * y)).exp();
                    pts.push((x, y, g));
                }
            }
            let z: f64 = pts.iter().map(|p| p.2).sum();
            let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / z;
            let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / z;
            let vx = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum::<f64>() / z;
            let vy = pts.iter().map(|p| p.2 * (p.1 - my).powi(2)).sum::<f64>() / z;
            Ok(OracleMoments::Joint(JointMoments {
                mean_x: mx,
                mean_y: my,
                var_x: vx,
                var_y: vy,
            }))
        }
    }
}

fn scalar_sum(pts: &[(f64, f64)], k: f64, j: f64) -> Result<ScalarMoments> {
    let (mut z, mut s1) = (0.0, 0.0);
    for &(x, w) in pts {
        let g = w * (j * x - 0.5 * k * x * x).exp();
        z += g;
        s1 += g * x;
    }
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Unsupported(format!(
            "oracle normaliser {z} out of range; keep |J|, K moderate"
        )));
    }
    let mean = s1 / z;
    // centred second pass: no cancellation when the variance is small
    let s2: f64 = pts
        .iter()
        .map(|&(x, w)| w * (j * x - 0.5 * k * x * x).exp() * (x - mean) * (x - mean))
        .sum();
    Ok(ScalarMoments { mean, var: s2 / z })
}
