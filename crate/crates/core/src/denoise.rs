//! Posterior mean/variance ("denoising") functions of the tilted priors
//! `P(x)·exp(J·x − ½·xᵀKx)`.

use crate::error::{Error, Result};
use crate::model::JointLatentPrior;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMoments {
    pub mean: f64,
    pub var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointMoments {
    pub mean_x: f64,
    pub mean_y: f64,
    pub var_x: f64,
    pub var_y: f64,
}

pub fn gauss_w_denoise(k: f64, j: f64, var_w: f64) -> Result<ScalarMoments> {
    let prec = k + 1.0 / var_w;
    if !(prec > 0.0) || !prec.is_finite() {
        return Err(Error::ImproperPosterior(prec));
    }
    Ok(ScalarMoments {
        mean: j / prec,
        var: 1.0 / prec,
    })
}

/// `log E[e^{Jw − Kw²/2}]` under `w ~ N(0, σ²)`.
pub fn gauss_log_partition(k: f64, j: f64, var_w: f64) -> Result<f64> {
    let prec = k + 1.0 / var_w;
    if !(prec > 0.0) {
        return Err(Error::ImproperPosterior(prec));
    }
    Ok(-0.5 * (k * var_w).ln_1p() + 0.5 * j * j / prec)
}

/// Covariance `(Σ⁻¹ + diag(K))⁻¹` of the tilted latent prior, written so it
/// stays finite for a singular `Σ` (perfectly correlated views).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltedCovariance {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl TiltedCovariance {
    pub fn new(latent: &JointLatentPrior, k_x: f64, k_y: f64) -> Result<Self> {
        let det = latent.det();
        let den = 1.0 + latent.var_x * k_x + latent.var_y * k_y + det * k_x * k_y;
        let nx = latent.var_x + det * k_y;
        let ny = latent.var_y + det * k_x;
        if !(den > 0.0) || !den.is_finite() || nx < 0.0 || ny < 0.0 {
            return Err(Error::SingularTiltedCovariance(den));
        }
        Ok(Self {
            xx: nx / den,
            xy: latent.cov / den,
            yy: ny / den,
        })
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }
}

pub fn joint_gauss_v_denoise(
    k_x: f64,
    k_y: f64,
    j_x: f64,
    j_y: f64,
    latent: &JointLatentPrior,
) -> Result<JointMoments> {
    let t = TiltedCovariance::new(latent, k_x, k_y)?;
    Ok(JointMoments {
        mean_x: t.xx * j_x + t.xy * j_y,
        mean_y: t.xy * j_x + t.yy * j_y,
        var_x: t.xx,
        var_y: t.yy,
    })
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "rho",
            value: rho,
            reason: "sparsity must lie in (0, 1]",
        })
    }
}

/// Sparse Rademacher prior. With `r = ½e^{J−K/2} + ½e^{−J−K/2}` the
/// probability of the non-zero atoms is `p = ρ/(ρ + (1−ρ)/r)`, the mean is
/// `p·tanh J`, and the variance splits into two non-negative pieces,
/// `p(1−p) + p²·sech²J`, so nothing cancels and ±∞ in `r` saturate cleanly.
pub fn rb_w_denoise(k: f64, j: f64, rho: f64) -> Result<ScalarMoments> {
    check_rho(rho)?;
    if k.is_nan() || j.is_nan() {
        return Err(Error::InvalidParameter {
            name: "source",
            value: f64::NAN,
            reason: "NaN source term",
        });
    }
    let half_k = 0.5 * k;
    let r = 0.5 * (j - half_k).exp() + 0.5 * (-j - half_k).exp();
    let (p, q) = if rho == 1.0 {
        (1.0, 0.0)
    } else {
        let p = rho / (rho + (1.0 - rho) / r);
        let q = (1.0 - rho) / (rho * r + (1.0 - rho));
        (p, q)
    };
    let t = j.tanh();
    let sech = 1.0 / j.cosh();
    Ok(ScalarMoments {
        mean: p * t,
        var: p * q + p * p * sech * sech,
    })
}

/// `log E[e^{Jw − Kw²/2}]` under the sparse Rademacher prior, by log-sum-exp
/// over the three atoms.
pub fn rb_log_partition(k: f64, j: f64, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    let lh = (0.5 * rho).ln() - 0.5 * k;
    let mut terms = vec![lh + j, lh - j];
    if rho < 1.0 {
        terms.push((1.0 - rho).ln());
    }
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln())
}

/// `½·log det Σ̃ + ½·JᵀΣ̃J`, the Gaussian latent log-partition with the
/// `−½·log det Σ` normalisation left out; it is finite for singular `Σ`
/// only through the free-energy combination that uses it.
pub fn joint_log_partition_unnormalised(
    k_x: f64,
    k_y: f64,
    j_x: f64,
    j_y: f64,
    latent: &JointLatentPrior,
) -> Result<f64> {
    let t = TiltedCovariance::new(latent, k_x, k_y)?;
    let quad = t.xx * j_x * j_x + 2.0 * t.xy * j_x * j_y + t.yy * j_y * j_y;
    Ok(0.5 * t.det().ln() + 0.5 * quad)
}
