//! State evolution: the scalar order-parameter dynamics that AMP follows in
//! the high-dimensional limit.
//!
//! Two forms are provided. The Bayes-optimal Gaussian-channel recursion stores
//! only the signed overlaps `m` and derives `q = |m|` structurally. The general
//! recursion carries `(m, q, Σ)` for every sector, accepts arbitrary channel
//! constants and a possibly mismatched ground truth, and is used to check the
//! reduction.

use crate::denoise::{gauss_w_denoise, TiltedCovariance};
use crate::error::{Error, Result};
use crate::model::{Channel, ChannelConstants, JointLatentPrior, ModelConfig, View, WPrior};
use crate::quadrature::gh101;

/// Per-view parameters as seen by state evolution. `alpha` is real-valued so
/// that sweeps over the aspect ratio need not round to an integer `n`.
#[derive(Debug, Clone)]
pub struct SectorParams {
    pub alpha: f64,
    pub snr: f64,
    pub channel: Channel,
    pub w_prior: WPrior,
}

impl SectorParams {
    pub fn gaussian(alpha: f64, snr: f64, sigma_xi: f64, w_prior: WPrior) -> Self {
        Self {
            alpha,
            snr,
            channel: Channel::gaussian(sigma_xi),
            w_prior,
        }
    }

    pub fn constants(&self) -> ChannelConstants {
        self.channel.constants()
    }

    /// `λ²/σ²` for the Gaussian channel.
    pub fn gain(&self) -> Result<f64> {
        let nv = self.channel.noise_var().ok_or_else(|| {
            Error::Unsupported("the Bayes-optimal recursion is defined for the Gaussian additive channel".into())
        })?;
        Ok(self.snr * self.snr / nv)
    }
}

#[derive(Debug, Clone)]
pub struct SeParams {
    pub x: SectorParams,
    pub y: SectorParams,
    pub latent: JointLatentPrior,
}

impl SeParams {
    pub fn from_config(cfg: &ModelConfig) -> Self {
        let sector = |z: View| {
            let m = cfg.modality(z);
            SectorParams {
                alpha: cfg.alpha(z),
                snr: m.snr,
                channel: m.channel.clone(),
                w_prior: m.w_prior,
            }
        };
        Self {
            x: sector(View::X),
            y: sector(View::Y),
            latent: cfg.latent,
        }
    }

    /// Both views share every parameter.
    pub fn symmetric(alpha: f64, snr: f64, sigma_xi: f64, w_prior: WPrior, latent: JointLatentPrior) -> Self {
        let s = SectorParams::gaussian(alpha, snr, sigma_xi, w_prior);
        Self {
            x: s.clone(),
            y: s,
            latent,
        }
    }

    pub fn sector(&self, z: View) -> &SectorParams {
        match z {
            View::X => &self.x,
            View::Y => &self.y,
        }
    }

    pub fn sector_mut(&mut self, z: View) -> &mut SectorParams {
        match z {
            View::X => &mut self.x,
            View::Y => &mut self.y,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for z in View::BOTH {
            let s = self.sector(z);
            if !(s.alpha > 0.0 && s.alpha.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "alpha",
                    value: s.alpha,
                    reason: "aspect ratio must be positive",
                });
            }
            s.channel.validate()?;
            s.w_prior.validate()?;
        }
        self.latent.validate()
    }
}

// ---------------------------------------------------------------------------
// Bayes-optimal recursion

/// Signed overlaps of the Bayes-optimal recursion; self-overlaps are `|m|`
/// and mean variances are `prior second moment − |m|`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OverlapState {
    pub m_w: [f64; 2],
    pub m_v: [f64; 2],
}

impl OverlapState {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn q_w(&self, z: View) -> f64 {
        self.m_w[z.index()].abs()
    }

    pub fn q_v(&self, z: View) -> f64 {
        self.m_v[z.index()].abs()
    }

    pub fn negated(&self) -> Self {
        Self {
            m_w: [-self.m_w[0], -self.m_w[1]],
            m_v: [-self.m_v[0], -self.m_v[1]],
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.m_w[0], self.m_w[1], self.m_v[0], self.m_v[1]]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            m_w: [a[0], a[1]],
            m_v: [a[2], a[3]],
        }
    }

    fn max_abs_diff(&self, other: &Self) -> f64 {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Full six-parameter view of this state on the Nishimori line.
    pub fn to_full(&self, p: &SeParams) -> FullOverlapState {
        let mk = |m: f64, second: f64| SectorOverlap {
            m,
            q: m.abs(),
            sig: second - m.abs(),
        };
        FullOverlapState {
            w: [
                mk(self.m_w[0], p.x.w_prior.second_moment()),
                mk(self.m_w[1], p.y.w_prior.second_moment()),
            ],
            v: [mk(self.m_v[0], p.latent.var_x), mk(self.m_v[1], p.latent.var_y)],
        }
    }
}

/// `M_v` from the rescaled `w`-overlaps `M̃_w = λ²/σ²·M_w` (closed form: the
/// latent prior is Gaussian).
pub fn v_overlap(mt_w: [f64; 2], latent: &JointLatentPrior) -> Result<[f64; 2]> {
    let t = TiltedCovariance::new(latent, mt_w[0].abs(), mt_w[1].abs())?;
    Ok([
        latent.var_x * mt_w[0] * t.xx + latent.cov * mt_w[1] * t.xy,
        latent.var_y * mt_w[1] * t.yy + latent.cov * mt_w[0] * t.xy,
    ])
}

/// `M_w` of one view given `a = α·M̃_v`.
pub fn w_overlap(prior: &WPrior, a: f64) -> Result<f64> {
    if a == 0.0 {
        return Ok(0.0);
    }
    match *prior {
        WPrior::Gaussian { var } => Ok(a * var / (a.abs() + 1.0 / var)),
        WPrior::RademacherBernoulli { rho } => {
            // odd denoiser: the two ±1 atoms contribute equally, the 0 atom not at all
            let k = a.abs();
            let sd = k.sqrt();
            let e = gh101().try_expect(|xi| Ok::<_, Error>(prior.denoise(k, k + sd * xi)?.mean))?;
            Ok(a.signum() * rho * e)
        }
    }
}

/// One v-then-w sweep of the Bayes-optimal Gaussian-channel recursion.
pub fn se_step_bayes_gauss(state: &OverlapState, p: &SeParams) -> Result<OverlapState> {
    let g = [p.x.gain()?, p.y.gain()?];
    let m_v = v_overlap([g[0] * state.m_w[0], g[1] * state.m_w[1]], &p.latent)?;
    let m_w = [
        w_overlap(&p.x.w_prior, p.x.alpha * g[0] * m_v[0])?,
        w_overlap(&p.y.w_prior, p.y.alpha * g[1] * m_v[1])?,
    ];
    Ok(OverlapState { m_w, m_v })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeInit {
    /// `m = ε` in every sector: zero is a fixed point, so symmetry is broken by hand.
    UninformativePerturbed,
    /// Overlaps at the prior second moments (perfect-overlap proxy).
    Informative,
    Custom(OverlapState),
}

impl SeInit {
    pub fn state(&self, p: &SeParams, perturbation: f64) -> OverlapState {
        match *self {
            SeInit::UninformativePerturbed => OverlapState {
                m_w: [perturbation; 2],
                m_v: [perturbation; 2],
            },
            SeInit::Informative => OverlapState {
                m_w: [p.x.w_prior.second_moment(), p.y.w_prior.second_moment()],
                m_v: [p.latent.var_x, p.latent.var_y],
            },
            SeInit::Custom(s) => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub perturbation: f64,
}

impl Default for SeOptions {
    fn default() -> Self {
        Self {
            damping: 0.0,
            tol: 1e-12,
            max_iters: 100_000,
            perturbation: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeResult {
    pub fixed_point: OverlapState,
    /// Starts with the initial state; one entry per step after that.
    pub trajectory: Vec<OverlapState>,
    pub converged: bool,
    pub iterations: usize,
}

pub fn se_solve(p: &SeParams, init: SeInit, opts: &SeOptions) -> Result<SeResult> {
    p.validate()?;
    if !(0.0..1.0).contains(&opts.damping) {
        return Err(Error::InvalidParameter {
            name: "damping",
            value: opts.damping,
            reason: "must lie in [0, 1)",
        });
    }
    let mut state = init.state(p, opts.perturbation);
    let mut trajectory = vec![state];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        let raw = se_step_bayes_gauss(&state, p)?;
        let next = if opts.damping > 0.0 {
            let g = opts.damping;
            let (a, b) = (raw.as_array(), state.as_array());
            OverlapState::from_array(std::array::from_fn(|k| (1.0 - g) * a[k] + g * b[k]))
        } else {
            raw
        };
        iterations += 1;
        let delta = next.max_abs_diff(&state);
        state = next;
        trajectory.push(state);
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(SeResult {
        fixed_point: state,
        trajectory,
        converged,
        iterations,
    })
}

// ---------------------------------------------------------------------------
// General recursion

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SectorOverlap {
    pub m: f64,
    pub q: f64,
    pub sig: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FullOverlapState {
    pub w: [SectorOverlap; 2],
    pub v: [SectorOverlap; 2],
}

/// Parameters of the data-generating model when they differ from the ones
/// assumed by the inference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthParams {
    pub snr: [f64; 2],
    pub w_prior: [WPrior; 2],
    pub latent: JointLatentPrior,
}

impl TruthParams {
    pub fn matched(p: &SeParams) -> Self {
        Self {
            snr: [p.x.snr, p.y.snr],
            w_prior: [p.x.w_prior, p.y.w_prior],
            latent: p.latent,
        }
    }
}

/// Gaussian source statistics `J ~ N(mu·x⁰, var)` plus the quadratic term `K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceStats {
    pub k: f64,
    pub mu: f64,
    pub var: f64,
}

/// Source statistics of the `v` sector of view `z` from the `w` overlaps.
pub fn v_sources(state: &FullOverlapState, p: &SeParams, truth: &TruthParams, z: View) -> SourceStats {
    let s = p.sector(z);
    let c = s.constants();
    let w = state.w[z.index()];
    let l = s.snr;
    SourceStats {
        k: l * l / c.delta_tilde * w.q - l * l * c.r_bar * (w.q + w.sig),
        mu: l * truth.snr[z.index()] / c.delta_hat * w.m,
        var: l * l / c.delta_tilde * w.q,
    }
}

/// Source statistics of the `w` sector of view `z` from the `v` overlaps.
pub fn w_sources(state: &FullOverlapState, p: &SeParams, truth: &TruthParams, z: View) -> SourceStats {
    let s = p.sector(z);
    let c = s.constants();
    let v = state.v[z.index()];
    let (a, l) = (s.alpha, s.snr);
    SourceStats {
        k: a * l * l / c.delta_tilde * v.q - a * l * l * c.r_bar * (v.q + v.sig),
        mu: a * l * truth.snr[z.index()] / c.delta_hat * v.m,
        var: a * l * l / c.delta_tilde * v.q,
    }
}

/// `(E[x⁰f], E[f²], E[∂f/∂J])` for the `w` denoiser of `assumed` with
/// `J = mu·w⁰ + √var·ξ`, `w⁰ ~ truth`.
pub fn w_sector_moments(assumed: &WPrior, truth: &WPrior, src: SourceStats) -> Result<SectorOverlap> {
    let sd = src.var.max(0.0).sqrt();
    match (*assumed, *truth) {
        (WPrior::Gaussian { var }, _) => {
            // linear denoiser: only the truth's second moment enters
            let post = gauss_w_denoise(src.k, 0.0, var)?;
            let s0 = truth.second_moment();
            Ok(SectorOverlap {
                m: post.var * src.mu * s0,
                q: post.var * post.var * (src.mu * src.mu * s0 + src.var),
                sig: post.var,
            })
        }
        (_, WPrior::RademacherBernoulli { rho }) => {
            let mut acc = SectorOverlap::default();
            for (x0, p0) in [(1.0, 0.5 * rho), (-1.0, 0.5 * rho), (0.0, 1.0 - rho)] {
                if p0 == 0.0 {
                    continue;
                }
                for (&xi, &w) in gh101().nodes().iter().zip(gh101().weights()) {
                    let f = assumed.denoise(src.k, src.mu * x0 + sd * xi)?;
                    acc.m += p0 * w * x0 * f.mean;
                    acc.q += p0 * w * f.mean * f.mean;
                    acc.sig += p0 * w * f.var;
                }
            }
            Ok(acc)
        }
        (_, WPrior::Gaussian { var: v0 }) => {
            let gh = gh101();
            let s0 = v0.sqrt();
            let mut acc = SectorOverlap::default();
            for (&u, &wu) in gh.nodes().iter().zip(gh.weights()) {
                let x0 = s0 * u;
                for (&xi, &wx) in gh.nodes().iter().zip(gh.weights()) {
                    let f = assumed.denoise(src.k, src.mu * x0 + sd * xi)?;
                    let w = wu * wx;
                    acc.m += w * x0 * f.mean;
                    acc.q += w * f.mean * f.mean;
                    acc.sig += w * f.var;
                }
            }
            Ok(acc)
        }
    }
}

/// `(M, Q, Σ)` for both `v` sectors. The assumed latent prior is Gaussian, so
/// the denoiser is linear in `J` and every average is a closed form in the
/// true second moments.
pub fn v_sector_moments(
    assumed: &JointLatentPrior,
    truth: &JointLatentPrior,
    src: [SourceStats; 2],
) -> Result<[SectorOverlap; 2]> {
    let t = TiltedCovariance::new(assumed, src[0].k, src[1].k)?;
    let second = [[truth.var_x, truth.cov], [truth.cov, truth.var_y]];
    let coef = [[t.xx, t.xy], [t.xy, t.yy]];
    let mut out = [SectorOverlap::default(); 2];
    for z in 0..2 {
        let zb = 1 - z;
        let (cz, czb) = (coef[z][z], coef[z][zb]);
        // f_z = cz·J_z + czb·J_zb with J_k = mu_k·v⁰_k + noise_k
        let m = cz * src[z].mu * second[z][z] + czb * src[zb].mu * second[zb][z];
        let mean_sq = cz * cz * src[z].mu * src[z].mu * second[z][z]
            + 2.0 * cz * czb * src[z].mu * src[zb].mu * second[z][zb]
            + czb * czb * src[zb].mu * src[zb].mu * second[zb][zb];
        let noise = cz * cz * src[z].var + czb * czb * src[zb].var;
        out[z] = SectorOverlap {
            m,
            q: mean_sq + noise,
            sig: cz,
        };
    }
    Ok(out)
}

/// One v-then-w sweep of the general recursion.
pub fn se_step_general(
    state: &FullOverlapState,
    p: &SeParams,
    truth: Option<&TruthParams>,
) -> Result<FullOverlapState> {
    let matched = TruthParams::matched(p);
    let truth = truth.unwrap_or(&matched);
    let vs = [v_sources(state, p, truth, View::X), v_sources(state, p, truth, View::Y)];
    let v = v_sector_moments(&p.latent, &truth.latent, vs)?;
    let mid = FullOverlapState { w: state.w, v };
    let mut w = [SectorOverlap::default(); 2];
    for z in View::BOTH {
        let src = w_sources(&mid, p, truth, z);
        w[z.index()] = w_sector_moments(&p.sector(z).w_prior, &truth.w_prior[z.index()], src)?;
    }
    Ok(FullOverlapState { w, v })
}
