//! Overlaps and squared cosine similarity.

use crate::error::{check_len, Error, Result};
use crate::model::{JointLatentPrior, View, WPrior};
use crate::se::OverlapState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    /// `(1/n) Σ x̂ᵢ x⁰ᵢ`
    pub m: f64,
    /// `(1/n) Σ x̂ᵢ²`
    pub q: f64,
    /// `(1/n) Σ (x⁰ᵢ)²`
    pub q0: f64,
    pub cs2: f64,
}

pub fn score(estimate: &[f64], truth: &[f64]) -> Result<Score> {
    check_len(truth.len(), estimate.len())?;
    let n = truth.len() as f64;
    let (mut m, mut q, mut q0) = (0.0, 0.0, 0.0);
    for (&e, &t) in estimate.iter().zip(truth) {
        m += e * t;
        q += e * e;
        q0 += t * t;
    }
    if !(q0 > 0.0) {
        return Err(Error::Degenerate("ground-truth vector is zero".into()));
    }
    let (m, q, q0) = (m / n, q / n, q0 / n);
    let cs2 = if q > 0.0 {
        let c = m / (q.sqrt() * q0.sqrt());
        c * c
    } else {
        0.0
    };
    Ok(Score { m, q, q0, cs2 })
}

pub fn cs2(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    Ok(score(estimate, truth)?.cs2)
}

/// SE-side CS² per sector, on the Nishimori line (`q = |m|`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeCs2 {
    pub w_x: f64,
    pub w_y: f64,
    pub v_x: f64,
    pub v_y: f64,
}

impl SeCs2 {
    pub fn w(&self, z: View) -> f64 {
        match z {
            View::X => self.w_x,
            View::Y => self.w_y,
        }
    }

    pub fn v(&self, z: View) -> f64 {
        match z {
            View::X => self.v_x,
            View::Y => self.v_y,
        }
    }

    /// `CS_w·CS_v` of one view.
    pub fn product(&self, z: View) -> f64 {
        (self.w(z) * self.v(z)).sqrt()
    }
}

pub fn se_cs2(state: &OverlapState, w_priors: [WPrior; 2], latent: &JointLatentPrior) -> SeCs2 {
    SeCs2 {
        w_x: state.m_w[0].abs() / w_priors[0].second_moment(),
        w_y: state.m_w[1].abs() / w_priors[1].second_moment(),
        v_x: state.m_v[0].abs() / latent.var_x,
        v_y: state.m_v[1].abs() / latent.var_y,
    }
}
