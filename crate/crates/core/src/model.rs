//! Model parameters, priors, channels and synthetic data generation.

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::denoise::{self, ScalarMoments};
use crate::error::{Error, Result};
use crate::scores::ScorePair;

/// One of the two data views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum View {
    X,
    Y,
}

impl View {
    pub const BOTH: [View; 2] = [View::X, View::Y];

    pub fn other(self) -> View {
        match self {
            View::X => View::Y,
            View::Y => View::X,
        }
    }

    pub fn index(self) -> usize {
        match self {
            View::X => 0,
            View::Y => 1,
        }
    }
}

/// Prior over the feature factor `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WPrior {
    Gaussian {
        var: f64,
    },
    /// Atoms at ±1 with mass ρ/2 each and at 0 with mass 1−ρ.
    RademacherBernoulli {
        rho: f64,
    },
}

impl WPrior {
    pub fn validate(&self) -> Result<()> {
        match *self {
            WPrior::Gaussian { var } if !(var > 0.0 && var.is_finite()) => Err(Error::InvalidParameter {
                name: "w_prior.var",
                value: var,
                reason: "Gaussian variance must be positive",
            }),
            WPrior::RademacherBernoulli { rho } if !(rho > 0.0 && rho <= 1.0) => Err(Error::InvalidParameter {
                name: "w_prior.rho",
                value: rho,
                reason: "sparsity must lie in (0, 1]",
            }),
            _ => Ok(()),
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            WPrior::Gaussian { var } => var,
            WPrior::RademacherBernoulli { rho } => rho,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            WPrior::Gaussian { var } => var.sqrt() * rng.sample::<f64, _>(StandardNormal),
            WPrior::RademacherBernoulli { rho } => {
                let u: f64 = rng.random();
                if u < 0.5 * rho {
                    1.0
                } else if u < rho {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Posterior mean and variance under the tilted prior `P(w)·e^{Jw − Kw²/2}`.
    pub fn denoise(&self, k: f64, j: f64) -> Result<ScalarMoments> {
        match *self {
            WPrior::Gaussian { var } => denoise::gauss_w_denoise(k, j, var),
            WPrior::RademacherBernoulli { rho } => denoise::rb_w_denoise(k, j, rho),
        }
    }

    /// `log E_P[e^{Jw − Kw²/2}]`.
    pub fn log_partition(&self, k: f64, j: f64) -> Result<f64> {
        match *self {
            WPrior::Gaussian { var } => denoise::gauss_log_partition(k, j, var),
            WPrior::RademacherBernoulli { rho } => denoise::rb_log_partition(k, j, rho),
        }
    }
}

/// Bivariate Gaussian prior of the latent pair `(v_X[j], v_Y[j])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLatentPrior {
    pub var_x: f64,
    pub var_y: f64,
    pub cov: f64,
}

impl JointLatentPrior {
    pub fn new(var_x: f64, var_y: f64, cov: f64) -> Result<Self> {
        let p = Self { var_x, var_y, cov };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("latent.var_x", self.var_x), ("latent.var_y", self.var_y)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "latent variance must be positive",
                });
            }
        }
        let cov_sq = self.cov * self.cov;
        let var_prod = self.var_x * self.var_y;
        // a few ulps of slack so that cov = sqrt(var_x var_y) is accepted
        if !cov_sq.is_finite() || cov_sq > var_prod * (1.0 + 1e-12) {
            return Err(Error::NotPsd { cov_sq, var_prod });
        }
        Ok(())
    }

    /// Normalised correlation `c_v / (σ_X σ_Y)`, clamped to [−1, 1].
    pub fn c_hat(&self) -> f64 {
        (self.cov / (self.var_x * self.var_y).sqrt()).clamp(-1.0, 1.0)
    }

    pub fn det(&self) -> f64 {
        (self.var_x * self.var_y - self.cov * self.cov).max(0.0)
    }

    pub fn var(&self, z: View) -> f64 {
        match z {
            View::X => self.var_x,
            View::Y => self.var_y,
        }
    }

    pub fn max_eigenvalue(&self) -> f64 {
        let h = 0.5 * (self.var_x + self.var_y);
        let g = 0.5 * (self.var_x - self.var_y);
        h + (g * g + self.cov * self.cov).sqrt()
    }

    pub fn is_rank_one(&self) -> bool {
        self.cov * self.cov >= self.var_x * self.var_y
    }

    /// Draws one latent pair from two independent standard normals.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let sx = self.var_x.sqrt();
        let g1: f64 = rng.sample(StandardNormal);
        let vx = sx * g1;
        if self.is_rank_one() {
            return (vx, self.cov / sx * g1);
        }
        let g2: f64 = rng.sample(StandardNormal);
        let resid = (self.var_y - self.cov * self.cov / self.var_x).max(0.0).sqrt();
        (vx, self.cov / sx * g1 + resid * g2)
    }
}

/// Produces the score pair of a custom channel from an observed matrix.
pub trait ScoreGenerator: Send + Sync {
    fn scores(&self, data: &Array2<f64>) -> Result<ScorePair>;
}

/// Channel expansion constants `(Δ̂, Δ̃, R̄)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConstants {
    pub delta_hat: f64,
    pub delta_tilde: f64,
    pub r_bar: f64,
}

#[derive(Clone)]
pub enum Channel {
    GaussianAdditive {
        noise_var: f64,
    },
    Custom {
        constants: ChannelConstants,
        generator: Option<Arc<dyn ScoreGenerator>>,
    },
}

impl fmt::Debug for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::GaussianAdditive { noise_var } => f
                .debug_struct("GaussianAdditive")
                .field("noise_var", noise_var)
                .finish(),
            Channel::Custom { constants, generator } => f
                .debug_struct("Custom")
                .field("constants", constants)
                .field("generator", &generator.is_some())
                .finish(),
        }
    }
}

impl Channel {
    pub fn gaussian(sigma_xi: f64) -> Self {
        Channel::GaussianAdditive {
            noise_var: sigma_xi * sigma_xi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.constants();
        if !(c.delta_hat > 0.0 && c.delta_hat.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "channel.delta_hat",
                value: c.delta_hat,
                reason: "must be positive",
            });
        }
        if !(c.delta_tilde > 0.0 && c.delta_tilde.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "channel.delta_tilde",
                value: c.delta_tilde,
                reason: "must be positive",
            });
        }
        Ok(())
    }

    pub fn constants(&self) -> ChannelConstants {
        channel_constants(self)
    }

    pub fn noise_var(&self) -> Option<f64> {
        match *self {
            Channel::GaussianAdditive { noise_var } => Some(noise_var),
            Channel::Custom { .. } => None,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, Channel::GaussianAdditive { .. })
    }
}

pub fn channel_constants(channel: &Channel) -> ChannelConstants {
    match *channel {
        Channel::GaussianAdditive { noise_var } => ChannelConstants {
            delta_hat: noise_var,
            delta_tilde: noise_var,
            r_bar: 0.0,
        },
        Channel::Custom { constants, .. } => constants,
    }
}

/// Entrywise score matrices `S`, `R` of an observed matrix.
pub fn score_matrices(data: &Array2<f64>, channel: &Channel) -> Result<ScorePair> {
    match channel {
        Channel::GaussianAdditive { noise_var } => {
            let nv = *noise_var;
            let s = data.mapv(|z| z / nv);
            let r = s.mapv(|s| s * s - 1.0 / nv);
            ScorePair::new(s, r)
        }
        Channel::Custom { generator: Some(g), .. } => g.scores(data),
        Channel::Custom { generator: None, .. } => {
            Err(Error::Unsupported("custom channel without a score generator".into()))
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModalityParams {
    pub snr: f64,
    pub n: usize,
    pub channel: Channel,
    pub w_prior: WPrior,
}

impl ModalityParams {
    pub fn gaussian(snr: f64, n: usize, sigma_xi: f64, w_prior: WPrior) -> Self {
        Self {
            snr,
            n,
            channel: Channel::gaussian(sigma_xi),
            w_prior,
        }
    }

    pub fn alpha(&self, d: usize) -> f64 {
        d as f64 / self.n as f64
    }
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub d: usize,
    pub x: ModalityParams,
    pub y: ModalityParams,
    pub latent: JointLatentPrior,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Dimension("sample count d must be at least 1".into()));
        }
        for (name, m) in [("x", &self.x), ("y", &self.y)] {
            if m.n == 0 {
                return Err(Error::Dimension(format!(
                    "feature count n of view {name} must be at least 1"
                )));
            }
            if !(m.snr >= 0.0 && m.snr.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "lambda",
                    value: m.snr,
                    reason: "snr must be finite and non-negative",
                });
            }
            m.channel.validate()?;
            m.w_prior.validate()?;
        }
        self.latent.validate()
    }

    pub fn modality(&self, z: View) -> &ModalityParams {
        match z {
            View::X => &self.x,
            View::Y => &self.y,
        }
    }

    pub fn modality_mut(&mut self, z: View) -> &mut ModalityParams {
        match z {
            View::X => &mut self.x,
            View::Y => &mut self.y,
        }
    }

    pub fn alpha(&self, z: View) -> f64 {
        self.modality(z).alpha(self.d)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: ConfigJson = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        raw.try_into()
    }

    pub fn from_json_value(v: serde_json::Value) -> Result<Self> {
        let raw: ConfigJson = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        raw.try_into()
    }

    pub fn to_json_value(&self) -> Result<serde_json::Value> {
        let raw = ConfigJson::try_from(self)?;
        serde_json::to_value(raw).map_err(|e| Error::Config(e.to_string()))
    }
}

// Random stream tags. Each (seed, tag) pair is an independent ChaCha stream.
pub(crate) const STREAM_LATENT: u64 = 1;
pub(crate) const STREAM_W_X: u64 = 2;
pub(crate) const STREAM_W_Y: u64 = 3;
pub(crate) const STREAM_NOISE_X: u64 = 4;
pub(crate) const STREAM_NOISE_Y: u64 = 5;
pub(crate) const STREAM_AMP_INIT: u64 = 6;
pub(crate) const STREAM_LINAMP_INIT: u64 = 7;

pub(crate) fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

/// Observed matrices (features × samples, row-major) and ground truth.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x_data: Array2<f64>,
    pub y_data: Array2<f64>,
    pub w0_x: Vec<f64>,
    pub w0_y: Vec<f64>,
    pub v0_x: Vec<f64>,
    pub v0_y: Vec<f64>,
}

impl Dataset {
    pub fn data(&self, z: View) -> &Array2<f64> {
        match z {
            View::X => &self.x_data,
            View::Y => &self.y_data,
        }
    }

    pub fn w0(&self, z: View) -> &[f64] {
        match z {
            View::X => &self.w0_x,
            View::Y => &self.w0_y,
        }
    }

    pub fn v0(&self, z: View) -> &[f64] {
        match z {
            View::X => &self.v0_x,
            View::Y => &self.v0_y,
        }
    }

    pub fn d(&self) -> usize {
        self.v0_x.len()
    }
}

pub fn generate_dataset(config: &ModelConfig) -> Result<Dataset> {
    config.validate()?;
    let d = config.d;

    let mut rng = stream(config.seed, STREAM_LATENT);
    let mut v0_x = Vec::with_capacity(d);
    let mut v0_y = Vec::with_capacity(d);
    for _ in 0..d {
        let (a, b) = config.latent.sample(&mut rng);
        v0_x.push(a);
        v0_y.push(b);
    }

    let w0_x = sample_w(&config.x, stream(config.seed, STREAM_W_X));
    let w0_y = sample_w(&config.y, stream(config.seed, STREAM_W_Y));
    let x_data = spiked_matrix(&config.x, &w0_x, &v0_x, stream(config.seed, STREAM_NOISE_X))?;
    let y_data = spiked_matrix(&config.y, &w0_y, &v0_y, stream(config.seed, STREAM_NOISE_Y))?;

    Ok(Dataset {
        x_data,
        y_data,
        w0_x,
        w0_y,
        v0_x,
        v0_y,
    })
}

fn sample_w(m: &ModalityParams, mut rng: ChaCha8Rng) -> Vec<f64> {
    (0..m.n).map(|_| m.w_prior.sample(&mut rng)).collect()
}

fn spiked_matrix(m: &ModalityParams, w: &[f64], v: &[f64], mut rng: ChaCha8Rng) -> Result<Array2<f64>> {
    let sigma = match m.channel {
        Channel::GaussianAdditive { noise_var } => noise_var.sqrt(),
        Channel::Custom { .. } => {
            return Err(Error::Unsupported(
                "synthetic data generation is defined for the Gaussian additive channel".into(),
            ))
        }
    };
    let d = v.len();
    let scale = m.snr / (m.n as f64).sqrt();
    let mut buf = Vec::with_capacity(m.n * d);
    for &wi in w {
        let a = scale * wi;
        for &vj in v {
            let xi: f64 = rng.sample(StandardNormal);
            buf.push(a * vj + sigma * xi);
        }
    }
    Array2::from_shape_vec((m.n, d), buf).map_err(|e| Error::Dimension(e.to_string()))
}

// ---------------------------------------------------------------------------
// JSON representation

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigJson {
    d: usize,
    #[serde(default)]
    seed: u64,
    x: ModalityJson,
    y: ModalityJson,
    latent: LatentJson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModalityJson {
    lambda: f64,
    n: usize,
    sigma_xi: f64,
    w_prior: PriorJson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorJson {
    #[serde(rename = "type")]
    kind: String,
    param: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LatentJson {
    var_x: f64,
    var_y: f64,
    cov: f64,
}

impl TryFrom<ConfigJson> for ModelConfig {
    type Error = Error;

    fn try_from(raw: ConfigJson) -> Result<Self> {
        let cfg = ModelConfig {
            d: raw.d,
            x: raw.x.try_into()?,
            y: raw.y.try_into()?,
            latent: JointLatentPrior {
                var_x: raw.latent.var_x,
                var_y: raw.latent.var_y,
                cov: raw.latent.cov,
            },
            seed: raw.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl TryFrom<ModalityJson> for ModalityParams {
    type Error = Error;

    fn try_from(m: ModalityJson) -> Result<Self> {
        if !(m.sigma_xi > 0.0 && m.sigma_xi.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "sigma_xi",
                value: m.sigma_xi,
                reason: "noise level must be positive",
            });
        }
        let w_prior = match m.w_prior.kind.as_str() {
            "gaussian" => WPrior::Gaussian { var: m.w_prior.param },
            "rademacher_bernoulli" => WPrior::RademacherBernoulli { rho: m.w_prior.param },
            other => {
                return Err(Error::Config(format!(
                    "unknown w_prior type `{other}` (expected `gaussian` or `rademacher_bernoulli`)"
                )))
            }
        };
        Ok(ModalityParams::gaussian(m.lambda, m.n, m.sigma_xi, w_prior))
    }
}

impl TryFrom<&ModelConfig> for ConfigJson {
    type Error = Error;

    fn try_from(c: &ModelConfig) -> Result<Self> {
        let modality = |m: &ModalityParams| -> Result<ModalityJson> {
            let sigma_xi = m
                .channel
                .noise_var()
                .map(f64::sqrt)
                .ok_or_else(|| Error::Unsupported("custom channels have no JSON representation".into()))?;
            let (kind, param) = match m.w_prior {
                WPrior::Gaussian { var } => ("gaussian", var),
                WPrior::RademacherBernoulli { rho } => ("rademacher_bernoulli", rho),
            };
            Ok(ModalityJson {
                lambda: m.snr,
                n: m.n,
                sigma_xi,
                w_prior: PriorJson {
                    kind: kind.into(),
                    param,
                },
            })
        };
        Ok(ConfigJson {
            d: c.d,
            seed: c.seed,
            x: modality(&c.x)?,
            y: modality(&c.y)?,
            latent: LatentJson {
                var_x: c.latent.var_x,
                var_y: c.latent.var_y,
                cov: c.latent.cov,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(d: usize, n: usize, lambda: f64, sigma: f64, cov: f64) -> ModelConfig {
        let m = ModalityParams::gaussian(lambda, n, sigma, WPrior::Gaussian { var: 1.0 });
        ModelConfig {
            d,
            x: m.clone(),
            y: m,
            latent: JointLatentPrior::new(1.0, 1.0, cov).unwrap(),
            seed: 7,
        }
    }

    #[test]
    fn zero_dimensions_rejected() {
        let mut c = unit(0, 5, 1.0, 1.0, 0.5);
        assert!(matches!(generate_dataset(&c), Err(Error::Dimension(_))));
        c.d = 5;
        c.y.n = 0;
        assert!(matches!(generate_dataset(&c), Err(Error::Dimension(_))));
    }

    #[test]
    fn non_psd_latent_rejected() {
        assert!(matches!(
            JointLatentPrior::new(1.0, 1.0, 1.01),
            Err(Error::NotPsd { .. })
        ));
        assert!(JointLatentPrior::new(2.0, 0.5, 1.0).is_ok());
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let c = unit(40, 30, 1.0, 0.8, 0.5);
        let a = generate_dataset(&c).unwrap();
        let b = generate_dataset(&c).unwrap();
        assert_eq!(a.x_data, b.x_data);
        assert_eq!(a.y_data, b.y_data);
        assert_eq!(a.v0_y, b.v0_y);
        let mut c2 = c.clone();
        c2.seed += 1;
        let e = generate_dataset(&c2).unwrap();
        assert_ne!(a.x_data, e.x_data);
    }

    #[test]
    fn pure_noise_variance() {
        let c = unit(300, 200, 0.0, 1.5, 0.3);
        let ds = generate_dataset(&c).unwrap();
        let n = ds.x_data.len() as f64;
        let mean_sq = ds.x_data.iter().map(|v| v * v).sum::<f64>() / n;
        // var of z² for N(0,s²) is 2s⁴
        let se = (2.0_f64).sqrt() * 1.5f64.powi(2) / n.sqrt();
        assert!((mean_sq - 2.25).abs() < 3.0 * se, "{mean_sq}");
    }

    #[test]
    fn rank_one_latent_gives_identical_factors() {
        let c = unit(50, 10, 1.0, 1.0, 1.0);
        let ds = generate_dataset(&c).unwrap();
        for (a, b) in ds.v0_x.iter().zip(&ds.v0_y) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn channel_constants_gaussian_and_custom() {
        let c = channel_constants(&Channel::GaussianAdditive { noise_var: 0.64 });
        assert_eq!((c.delta_hat, c.delta_tilde, c.r_bar), (0.64, 0.64, 0.0));
        let k = ChannelConstants {
            delta_hat: 2.0,
            delta_tilde: 3.0,
            r_bar: 0.1,
        };
        let ch = Channel::Custom {
            constants: k,
            generator: None,
        };
        assert_eq!(channel_constants(&ch), k);
        assert!(score_matrices(&Array2::zeros((2, 2)), &ch).is_err());
    }

    #[test]
    fn score_matrices_gaussian() {
        let z = Array2::zeros((3, 4));
        let p = score_matrices(&z, &Channel::gaussian(1.0)).unwrap();
        assert!(p.s.iter().all(|&v| v == 0.0));
        assert!(p.r.iter().all(|&v| v == -1.0));

        let z = Array2::from_elem((2, 3), 4.0);
        let p = score_matrices(&z, &Channel::gaussian(2.0)).unwrap();
        assert!(p.s.iter().all(|&v| v == 1.0));
        assert!(p.r.iter().all(|&v| (v - 0.75).abs() < 1e-15));
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"d": 100, "seed": 3,
            "x": {"lambda": 4.0, "n": 100, "sigma_xi": 0.7, "w_prior": {"type": "rademacher_bernoulli", "param": 0.02}},
            "y": {"lambda": 1.0, "n": 50, "sigma_xi": 0.7, "w_prior": {"type": "gaussian", "param": 1.0}},
            "latent": {"var_x": 1.0, "var_y": 1.0, "cov": 0.5625}}"#;
        let c = ModelConfig::from_json_str(text).unwrap();
        assert_eq!(c.x.w_prior, WPrior::RademacherBernoulli { rho: 0.02 });
        assert_eq!(c.alpha(View::Y), 2.0);
        let v = c.to_json_value().unwrap();
        let c2 = ModelConfig::from_json_value(v).unwrap();
        assert_eq!(c2.y.channel.noise_var(), c.y.channel.noise_var());
        assert_eq!(c2.latent, c.latent);
    }

    #[test]
    fn json_rejects_bad_prior() {
        let text = r#"{"d": 10, "x": {"lambda": 1, "n": 5, "sigma_xi": 1, "w_prior": {"type": "laplace", "param": 1}},
            "y": {"lambda": 1, "n": 5, "sigma_xi": 1, "w_prior": {"type": "gaussian", "param": 1}},
            "latent": {"var_x": 1, "var_y": 1, "cov": 0}}"#;
        assert!(matches!(ModelConfig::from_json_str(text), Err(Error::Config(_))));
    }
}
