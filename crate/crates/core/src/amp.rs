//! Approximate message passing with sequential v-then-w updates.

use serde::{Deserialize, Serialize};

use crate::denoise::joint_gauss_v_denoise;
use crate::error::{check_len, Error, Result};
use crate::linamp::{linamp_run, LinampOptions};
use crate::metrics::score;
use crate::model::{stream, Dataset, JointLatentPrior, ModelConfig, View, WPrior, STREAM_AMP_INIT};
#[cfg(test)]
use crate::scores::GaussianScores;
use crate::scores::{with_dataset_scores, ScoreOperator};

/// Offset keeping the clipped `K` strictly inside the proper region.
pub const K_CLIP_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Prior sample scaled to entry variance `σ²_prior/n`.
    ApproxNishimori,
    /// Start at the ground truth.
    Informed,
    /// Start at the linearised-AMP estimate.
    Spectral,
}

impl InitStrategy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "approx_nishimori" => Ok(Self::ApproxNishimori),
            "informed" => Ok(Self::Informed),
            "spectral" => Ok(Self::Spectral),
            other => Err(Error::Config(format!(
                "unknown init strategy `{other}` (expected approx_nishimori, informed or spectral)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::ApproxNishimori => "approx_nishimori",
            Self::Informed => "informed",
            Self::Spectral => "spectral",
        }
    }
}

/// Per-view estimates. The `*_prev` vectors hold the iterate before the most
/// recent update of the same sector.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewState {
    pub w_hat: Vec<f64>,
    pub sigma_w_hat: Vec<f64>,
    pub v_hat: Vec<f64>,
    pub sigma_v_hat: Vec<f64>,
    pub w_hat_prev: Vec<f64>,
    pub v_hat_prev: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmpState {
    pub views: [ViewState; 2],
    pub iter: usize,
}

impl AmpState {
    pub fn view(&self, z: View) -> &ViewState {
        &self.views[z.index()]
    }

    /// State with the given `ŵ` and the usual variance/`v̂` initialisation.
    pub fn from_w_hat(params: &AmpParams, w_x: Vec<f64>, w_y: Vec<f64>, d: usize) -> Result<Self> {
        let mk = |z: View, w: Vec<f64>| -> Result<ViewState> {
            let s = params.sector(z);
            check_len(s.n, w.len())?;
            Ok(ViewState {
                sigma_w_hat: vec![s.w_prior.second_moment(); s.n],
                w_hat_prev: w.clone(),
                w_hat: w,
                v_hat: vec![0.0; d],
                sigma_v_hat: vec![params.latent.var(z); d],
                v_hat_prev: vec![0.0; d],
            })
        };
        Ok(Self {
            views: [mk(View::X, w_x)?, mk(View::Y, w_y)?],
            iter: 0,
        })
    }

    pub fn negated(&self) -> Self {
        let mut s = self.clone();
        for v in &mut s.views {
            for x in v
                .w_hat
                .iter_mut()
                .chain(v.v_hat.iter_mut())
                .chain(v.w_hat_prev.iter_mut())
                .chain(v.v_hat_prev.iter_mut())
            {
                *x = -*x;
            }
        }
        s
    }
}

/// Model parameters AMP needs, per view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmpSector {
    pub snr: f64,
    pub n: usize,
    pub w_prior: WPrior,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmpParams {
    pub x: AmpSector,
    pub y: AmpSector,
    pub latent: JointLatentPrior,
}

impl AmpParams {
    pub fn from_config(cfg: &ModelConfig) -> Self {
        let s = |z: View| {
            let m = cfg.modality(z);
            AmpSector {
                snr: m.snr,
                n: m.n,
                w_prior: m.w_prior,
            }
        };
        Self {
            x: s(View::X),
            y: s(View::Y),
            latent: cfg.latent,
        }
    }

    pub fn sector(&self, z: View) -> &AmpSector {
        match z {
            View::X => &self.x,
            View::Y => &self.y,
        }
    }
}

pub fn amp_init(dataset: &Dataset, config: &ModelConfig, strategy: InitStrategy) -> Result<AmpState> {
    let params = AmpParams::from_config(config);
    let d = config.d;
    check_len(d, dataset.d())?;
    let (w_x, w_y) = match strategy {
        InitStrategy::ApproxNishimori => {
            let mut rng = stream(config.seed, STREAM_AMP_INIT);
            let mut draw = |s: &AmpSector| -> Vec<f64> {
                let scale = 1.0 / (s.n as f64).sqrt();
                (0..s.n).map(|_| scale * s.w_prior.sample(&mut rng)).collect()
            };
            (draw(&params.x), draw(&params.y))
        }
        InitStrategy::Informed => (dataset.w0_x.clone(), dataset.w0_y.clone()),
        InitStrategy::Spectral => {
            let est = linamp_run(dataset, config, &LinampOptions::default())?;
            // unit-norm blocks rescaled to the prior's expected norm
            let rescale = |w: Vec<f64>, s: &AmpSector| -> Vec<f64> {
                let target = (s.n as f64 * s.w_prior.second_moment()).sqrt();
                let nrm = crate::linalg::norm(&w);
                if nrm > 0.0 {
                    w.iter().map(|v| v * target / nrm).collect()
                } else {
                    w
                }
            };
            (rescale(est.w_x, &params.x), rescale(est.w_y, &params.y))
        }
    };
    AmpState::from_w_hat(&params, w_x, w_y, d)
}

fn clip(k: f64, floor: f64) -> f64 {
    if k < floor {
        floor
    } else {
        k
    }
}

fn w_k_floor(prior: &WPrior) -> f64 {
    match *prior {
        WPrior::Gaussian { var } => -1.0 / var + K_CLIP_MARGIN,
        // finite atoms: every K gives a proper posterior
        WPrior::RademacherBernoulli { .. } => f64::NEG_INFINITY,
    }
}

/// One v-sector then w-sector update. `damping` mixes each new mean with the
/// previous one (`0` disables it).
pub fn amp_step(state: &mut AmpState, scores: [&dyn ScoreOperator; 2], params: &AmpParams, damping: f64) -> Result<()> {
    let d = state.views[0].v_hat.len();
    for z in View::BOTH {
        let op = scores[z.index()];
        if op.n_cols() != d || op.n_rows() != params.sector(z).n {
            return Err(Error::Dimension(format!(
                "score operator of view {z:?} is {}x{}, expected {}x{d}",
                op.n_rows(),
                op.n_cols(),
                params.sector(z).n
            )));
        }
    }

    // v sector: sources from ŵ^{t-1}, σ̂_w^{t-1}; Onsager term uses v̂^{t-1}
    let mut kv = [vec![0.0; d], vec![0.0; d]];
    let mut jv = [vec![0.0; d], vec![0.0; d]];
    for z in View::BOTH {
        let i = z.index();
        let s = params.sector(z);
        let v = &state.views[i];
        let c: Vec<f64> = v.w_hat.iter().zip(&v.sigma_w_hat).map(|(w, sg)| w * w + sg).collect();
        let p = scores[i].col_pass(&v.w_hat, &v.sigma_w_hat, &c)?;
        let n = s.n as f64;
        let (l1, l2) = (s.snr / n.sqrt(), s.snr * s.snr / n);
        for j in 0..d {
            kv[i][j] = l2 * (p.gap[j] - p.ss[j]);
            jv[i][j] = l1 * p.s[j] - l2 * v.v_hat[j] * p.ss[j];
        }
    }
    let kv_floor = -1.0 / params.latent.max_eigenvalue() + K_CLIP_MARGIN;
    let mut v_new = [vec![0.0; d], vec![0.0; d]];
    let mut sv_new = [vec![0.0; d], vec![0.0; d]];
    for j in 0..d {
        let m = joint_gauss_v_denoise(
            clip(kv[0][j], kv_floor),
            clip(kv[1][j], kv_floor),
            jv[0][j],
            jv[1][j],
            &params.latent,
        )?;
        v_new[0][j] = m.mean_x;
        v_new[1][j] = m.mean_y;
        sv_new[0][j] = m.var_x;
        sv_new[1][j] = m.var_y;
    }
    for (i, (vn, svn)) in v_new.into_iter().zip(sv_new).enumerate() {
        let v = &mut state.views[i];
        let vn = mix(vn, &v.v_hat, damping);
        v.v_hat_prev = std::mem::replace(&mut v.v_hat, vn);
        v.sigma_v_hat = svn;
    }

    // w sector: sources from the fresh v̂^t, σ̂_v^t; Onsager term uses ŵ^{t-1}
    for z in View::BOTH {
        let i = z.index();
        let s = params.sector(z);
        let v = &state.views[i];
        let c: Vec<f64> = v.v_hat.iter().zip(&v.sigma_v_hat).map(|(x, sg)| x * x + sg).collect();
        let p = scores[i].row_pass(&v.v_hat, &v.sigma_v_hat, &c)?;
        let n = s.n as f64;
        let (l1, l2) = (s.snr / n.sqrt(), s.snr * s.snr / n);
        let floor = w_k_floor(&s.w_prior);
        let mut w_new = Vec::with_capacity(s.n);
        let mut sw_new = Vec::with_capacity(s.n);
        for k in 0..s.n {
            let kw = clip(l2 * (p.gap[k] - p.ss[k]), floor);
            let jw = l1 * p.s[k] - l2 * v.w_hat[k] * p.ss[k];
            let m = s.w_prior.denoise(kw, jw)?;
            w_new.push(m.mean);
            sw_new.push(m.var);
        }
        let v = &mut state.views[i];
        let w_new = mix(w_new, &v.w_hat, damping);
        v.w_hat_prev = std::mem::replace(&mut v.w_hat, w_new);
        v.sigma_w_hat = sw_new;
    }
    state.iter += 1;
    Ok(())
}

fn mix(mut new: Vec<f64>, old: &[f64], damping: f64) -> Vec<f64> {
    if damping > 0.0 {
        for (a, &b) in new.iter_mut().zip(old) {
            *a = (1.0 - damping) * *a + damping * b;
        }
    }
    new
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmpOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub damping: f64,
}

impl Default for AmpOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-7,
            damping: 0.0,
        }
    }
}

/// Overlaps of one iterate with the ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub m_w: [f64; 2],
    pub q_w: [f64; 2],
    pub m_v: [f64; 2],
    pub q_v: [f64; 2],
    pub cs2_w: [f64; 2],
    pub cs2_v: [f64; 2],
}

impl TrajectoryPoint {
    pub fn of(state: &AmpState, dataset: &Dataset) -> Result<Self> {
        let mut t = TrajectoryPoint {
            m_w: [0.0; 2],
            q_w: [0.0; 2],
            m_v: [0.0; 2],
            q_v: [0.0; 2],
            cs2_w: [0.0; 2],
            cs2_v: [0.0; 2],
        };
        for z in View::BOTH {
            let i = z.index();
            let sw = score(&state.views[i].w_hat, dataset.w0(z))?;
            let sv = score(&state.views[i].v_hat, dataset.v0(z))?;
            t.m_w[i] = sw.m;
            t.q_w[i] = sw.q;
            t.cs2_w[i] = sw.cs2;
            t.m_v[i] = sv.m;
            t.q_v[i] = sv.q;
            t.cs2_v[i] = sv.cs2;
        }
        Ok(t)
    }
}

#[derive(Debug, Clone)]
pub struct AmpResult {
    pub state: AmpState,
    pub converged: bool,
    pub iters: usize,
    /// Initial point plus one entry per iteration.
    pub trajectory: Vec<TrajectoryPoint>,
}

impl AmpResult {
    pub fn final_point(&self) -> &TrajectoryPoint {
        self.trajectory.last().expect("trajectory holds the initial point")
    }
}

fn max_change(state: &AmpState) -> f64 {
    state
        .views
        .iter()
        .flat_map(|v| {
            v.w_hat
                .iter()
                .zip(&v.w_hat_prev)
                .chain(v.v_hat.iter().zip(&v.v_hat_prev))
        })
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Runs AMP from an explicit initial state.
pub fn amp_run_from(
    mut state: AmpState,
    dataset: &Dataset,
    config: &ModelConfig,
    opts: &AmpOptions,
) -> Result<AmpResult> {
    if opts.max_iters == 0 || !(opts.tol > 0.0) || !(0.0..1.0).contains(&opts.damping) {
        return Err(Error::Precondition(
            "AMP needs max_iters >= 1, tol > 0 and damping in [0, 1)".into(),
        ));
    }
    let params = AmpParams::from_config(config);
    with_dataset_scores(dataset, config, |ops| {
        let mut trajectory = vec![TrajectoryPoint::of(&state, dataset)?];
        let mut converged = false;
        let mut iters = 0;
        while iters < opts.max_iters {
            amp_step(&mut state, ops, &params, opts.damping)?;
            iters += 1;
            trajectory.push(TrajectoryPoint::of(&state, dataset)?);
            if max_change(&state) < opts.tol {
                converged = true;
                break;
            }
        }
        Ok(AmpResult {
            state,
            converged,
            iters,
            trajectory,
        })
    })
}

pub fn amp_run(
    dataset: &Dataset,
    config: &ModelConfig,
    strategy: InitStrategy,
    opts: &AmpOptions,
) -> Result<AmpResult> {
    let state = amp_init(dataset, config, strategy)?;
    amp_run_from(state, dataset, config, opts)
}
