//! Bethe (replica-symmetric) free energy, and the information-theoretic and
//! spinodal thresholds derived from comparing its two SE branches.
//!
//! Convention: the dominating branch has the lower Φ.

use crate::denoise::{gauss_log_partition, TiltedCovariance};
use crate::error::{Error, Result};
use crate::model::{JointLatentPrior, View, WPrior};
use crate::quadrature::gh101;
use crate::se::{
    se_solve, v_sources, w_sources, FullOverlapState, OverlapState, SeInit, SeOptions, SeParams, SourceStats,
    TruthParams,
};
use crate::thresholds::{algorithmic_threshold, Axis};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeEnergyPoint {
    pub state: OverlapState,
    pub phi: f64,
}

/// `E log Z_w` on the Nishimori line, as a function of `a = α·M̃_v`.
/// Normalised so that it vanishes at `a = 0`.
pub fn psi_w(prior: &WPrior, a: f64) -> Result<f64> {
    let k = a.abs();
    if k == 0.0 {
        return Ok(0.0);
    }
    match *prior {
        WPrior::Gaussian { var } => {
            let x = k * var;
            Ok(0.5 * (x - x.ln_1p()))
        }
        WPrior::RademacherBernoulli { rho } => {
            let sd = k.sqrt();
            let gh = gh101();
            let on = gh.try_expect(|xi| prior.log_partition(k, k + sd * xi))?;
            let off = if rho < 1.0 {
                gh.try_expect(|xi| prior.log_partition(k, sd * xi))?
            } else {
                0.0
            };
            Ok(rho * on + (1.0 - rho) * off)
        }
    }
}

/// `E log Z_v` on the Nishimori line from the rescaled overlaps `M̃_w`, in
/// the `½·log det Σ̃ + ½·E[JᵀΣ̃J]` form (the `−½·log det Σ` normaliser is not
/// included, so the zero state gives `½·log det Σ`).
pub fn psi_v(mt_w: [f64; 2], latent: &JointLatentPrior) -> Result<f64> {
    let [mx, my] = mt_w;
    let t = TiltedCovariance::new(latent, mx.abs(), my.abs())?;
    let det = t.det();
    if !(det > 0.0) {
        return Err(Error::Precondition(
            "the free energy needs a non-singular latent covariance (|c_hat| < 1)".into(),
        ));
    }
    let quad = 0.5 * (mx * mx * latent.var_x + mx.abs()) * t.xx
        + 0.5 * (my * my * latent.var_y + my.abs()) * t.yy
        + mx * my * latent.cov * t.xy;
    Ok(0.5 * det.ln() + quad)
}

/// Φ of a Bayes-optimal Gaussian-channel state.
pub fn bethe_free_energy(state: &OverlapState, p: &SeParams) -> Result<f64> {
    let mut phi = 0.0;
    let mut mt_w = [0.0; 2];
    for z in View::BOTH {
        let s = p.sector(z);
        let g = s.gain()?;
        let i = z.index();
        let (mw, mv) = (state.m_w[i], state.m_v[i]);
        phi += g * (mw * mv - 0.5 * mw.abs() * mv.abs());
        phi -= psi_w(&s.w_prior, s.alpha * g * mv)? / s.alpha;
        mt_w[i] = g * mw;
    }
    Ok(phi - psi_v(mt_w, &p.latent)?)
}

pub fn free_energy_point(state: OverlapState, p: &SeParams) -> Result<FreeEnergyPoint> {
    Ok(FreeEnergyPoint {
        state,
        phi: bethe_free_energy(&state, p)?,
    })
}

fn e_log_z_w(assumed: &WPrior, truth: &WPrior, src: SourceStats) -> Result<f64> {
    let sd = src.var.max(0.0).sqrt();
    match (*assumed, *truth) {
        (WPrior::Gaussian { var }, _) => {
            let base = gauss_log_partition(src.k, 0.0, var)?;
            let ej2 = src.mu * src.mu * truth.second_moment() + src.var;
            Ok(base + 0.5 * ej2 / (src.k + 1.0 / var))
        }
        (_, WPrior::RademacherBernoulli { rho }) => {
            let mut acc = 0.0;
            for (x0, p0) in [(1.0, 0.5 * rho), (-1.0, 0.5 * rho), (0.0, 1.0 - rho)] {
                if p0 > 0.0 {
                    acc += p0 * gh101().try_expect(|xi| assumed.log_partition(src.k, src.mu * x0 + sd * xi))?;
                }
            }
            Ok(acc)
        }
        (_, WPrior::Gaussian { var: v0 }) => {
            let s0 = v0.sqrt();
            gh101().try_expect(|u| gh101().try_expect(|xi| assumed.log_partition(src.k, src.mu * s0 * u + sd * xi)))
        }
    }
}

/// Φ of a general six-parameter state with arbitrary channel constants.
/// The `v` log-partition uses the same normalisation as [`psi_v`].
pub fn bethe_free_energy_general(state: &FullOverlapState, p: &SeParams, truth: Option<&TruthParams>) -> Result<f64> {
    let matched = TruthParams::matched(p);
    let truth = truth.unwrap_or(&matched);
    let mut phi = 0.0;
    for z in View::BOTH {
        let s = p.sector(z);
        let c = s.constants();
        let i = z.index();
        let (w, v) = (state.w[i], state.v[i]);
        let l = s.snr;
        phi += l * truth.snr[i] / c.delta_hat * w.m * v.m - 0.5 * l * l / c.delta_tilde * w.q * v.q;
        phi += l * l * c.r_bar * (w.q + w.sig) * (v.q + v.sig);
        let src = w_sources(state, p, truth, z);
        phi -= e_log_z_w(&s.w_prior, &truth.w_prior[i], src)? / s.alpha;
    }
    let vs = [v_sources(state, p, truth, View::X), v_sources(state, p, truth, View::Y)];
    let t = TiltedCovariance::new(&p.latent, vs[0].k, vs[1].k)?;
    let det = t.det();
    if !(det > 0.0) {
        return Err(Error::Precondition(
            "the free energy needs a non-singular latent covariance (|c_hat| < 1)".into(),
        ));
    }
    let tl = &truth.latent;
    let ejj = [
        [vs[0].mu * vs[0].mu * tl.var_x + vs[0].var, vs[0].mu * vs[1].mu * tl.cov],
        [vs[0].mu * vs[1].mu * tl.cov, vs[1].mu * vs[1].mu * tl.var_y + vs[1].var],
    ];
    let quad = 0.5 * (t.xx * ejj[0][0] + 2.0 * t.xy * ejj[0][1] + t.yy * ejj[1][1]);
    Ok(phi - 0.5 * det.ln() - quad)
}

/// Both SE branches at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPair {
    pub informative: FreeEnergyPoint,
    pub uninformative: FreeEnergyPoint,
    pub informative_converged: bool,
    pub uninformative_converged: bool,
}

impl BranchPair {
    pub fn cs2_informative(&self, p: &SeParams) -> f64 {
        mean_cs2_w(&self.informative.state, p)
    }

    pub fn cs2_uninformative(&self, p: &SeParams) -> f64 {
        mean_cs2_w(&self.uninformative.state, p)
    }
}

fn mean_cs2_w(s: &OverlapState, p: &SeParams) -> f64 {
    0.5 * (s.m_w[0].abs() / p.x.w_prior.second_moment() + s.m_w[1].abs() / p.y.w_prior.second_moment())
}

pub fn branches(p: &SeParams, opts: &SeOptions) -> Result<BranchPair> {
    let inf = se_solve(p, SeInit::Informative, opts)?;
    let uninf = se_solve(p, SeInit::UninformativePerturbed, opts)?;
    Ok(BranchPair {
        informative: free_energy_point(inf.fixed_point, p)?,
        uninformative: free_energy_point(uninf.fixed_point, p)?,
        informative_converged: inf.converged,
        uninformative_converged: uninf.converged,
    })
}

/// Options of the branch-comparison thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchThresholdOptions {
    pub se: SeOptions,
    /// Bisection tolerance on the axis variable.
    pub tol: f64,
    /// Minimal mean-CS² gap for the informative branch to count as distinct.
    pub gap: f64,
    /// Number of scan points used to detect first-order structure.
    pub scan_points: usize,
}

impl Default for BranchThresholdOptions {
    fn default() -> Self {
        Self {
            se: SeOptions::default(),
            tol: 1e-3,
            gap: 1e-3,
            scan_points: 21,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchThreshold {
    pub theta: f64,
    /// `true` when the two branches coincide everywhere on the scan.
    pub continuous: bool,
    pub bisection_steps: usize,
    pub scan: Vec<(f64, f64, f64)>,
}

fn distinct(bp: &BranchPair, p: &SeParams, gap: f64) -> bool {
    (bp.cs2_informative(p) - bp.cs2_uninformative(p)).abs() > gap
}

/// The posterior is informative: the informative branch carries overlap and
/// either coincides with the other branch or has the lower Φ.
fn informative_dominates(bp: &BranchPair, p: &SeParams, gap: f64) -> bool {
    bp.cs2_informative(p) > gap && (!distinct(bp, p, gap) || bp.informative.phi < bp.uninformative.phi)
}

fn scan(
    template: &SeParams,
    axis: Axis,
    lo: f64,
    hi: f64,
    o: &BranchThresholdOptions,
) -> Result<Vec<(f64, BranchPair, SeParams)>> {
    let n = o.scan_points.max(2);
    (0..n)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let p = axis.apply(template, x)?;
            Ok((x, branches(&p, &o.se)?, p))
        })
        .collect()
}

/// Bisection for the boundary of `pred`, which holds on the "easy" side of
/// the axis (low noise, high α or λ) and fails on the other.
fn bisect_predicate<F>(
    template: &SeParams,
    axis: Axis,
    mut easy: f64,
    mut hard: f64,
    tol: f64,
    mut pred: F,
) -> Result<(f64, usize)>
where
    F: FnMut(&SeParams) -> Result<bool>,
{
    let mut steps = 0;
    while (hard - easy).abs() > tol {
        let mid = 0.5 * (easy + hard);
        if pred(&axis.apply(template, mid)?)? {
            easy = mid;
        } else {
            hard = mid;
        }
        steps += 1;
    }
    Ok((0.5 * (easy + hard), steps))
}

fn oriented(axis: Axis, lo: f64, hi: f64) -> (f64, f64) {
    if axis.easy_is_low() {
        (lo, hi)
    } else {
        (hi, lo)
    }
}

/// Information-theoretic threshold: where the informative branch starts to
/// dominate. For a continuous transition it equals the algorithmic threshold.
pub fn it_threshold(
    template: &SeParams,
    axis: Axis,
    range: (f64, f64),
    o: &BranchThresholdOptions,
) -> Result<BranchThreshold> {
    let (lo, hi) = (range.0.min(range.1), range.0.max(range.1));
    let grid = scan(template, axis, lo, hi, o)?;
    let summary: Vec<(f64, f64, f64)> = grid
        .iter()
        .map(|(x, bp, p)| (*x, bp.cs2_informative(p), bp.cs2_uninformative(p)))
        .collect();
    let first_order = grid.iter().any(|(_, bp, p)| distinct(bp, p, o.gap));
    if !first_order {
        let theta = algorithmic_threshold(template, axis, (lo, hi))?;
        return Ok(BranchThreshold {
            theta,
            continuous: true,
            bisection_steps: 0,
            scan: summary,
        });
    }
    let (easy, hard) = oriented(axis, lo, hi);
    let gap = o.gap;
    let check = |p: &SeParams| -> Result<bool> { Ok(informative_dominates(&branches(p, &o.se)?, p, gap)) };
    if !check(&axis.apply(template, easy)?)? {
        return Err(Error::NoBracket {
            lo,
            hi,
            reason: "the informative branch does not dominate anywhere in the range".into(),
        });
    }
    if check(&axis.apply(template, hard)?)? {
        return Err(Error::NoBracket {
            lo,
            hi,
            reason: "the informative branch dominates over the whole range".into(),
        });
    }
    let (theta, steps) = bisect_predicate(template, axis, easy, hard, o.tol, check)?;
    Ok(BranchThreshold {
        theta,
        continuous: false,
        bisection_steps: steps,
        scan: summary,
    })
}

/// Spinodal: the end of the range where a distinct informative SE fixed point
/// exists.
pub fn spinodal(
    template: &SeParams,
    axis: Axis,
    range: (f64, f64),
    o: &BranchThresholdOptions,
) -> Result<BranchThreshold> {
    let (lo, hi) = (range.0.min(range.1), range.0.max(range.1));
    let grid = scan(template, axis, lo, hi, o)?;
    let summary: Vec<(f64, f64, f64)> = grid
        .iter()
        .map(|(x, bp, p)| (*x, bp.cs2_informative(p), bp.cs2_uninformative(p)))
        .collect();
    let exists: Vec<bool> = grid.iter().map(|(_, bp, p)| distinct(bp, p, o.gap)).collect();
    if !exists.iter().any(|&e| e) {
        return Err(Error::NoSpinodal { lo, hi });
    }
    // last distinct scan point walking from the easy side towards the hard one
    let order: Vec<usize> = if axis.easy_is_low() {
        (0..grid.len()).collect()
    } else {
        (0..grid.len()).rev().collect()
    };
    let last = order.iter().rposition(|&i| exists[i]).unwrap();
    if last + 1 == order.len() {
        return Err(Error::NoBracket {
            lo,
            hi,
            reason: "a distinct informative branch persists to the end of the range".into(),
        });
    }
    let easy = grid[order[last]].0;
    let hard = grid[order[last + 1]].0;
    let gap = o.gap;
    let (theta, steps) = bisect_predicate(template, axis, easy, hard, o.tol, |p| {
        Ok(distinct(&branches(p, &o.se)?, p, gap))
    })?;
    Ok(BranchThreshold {
        theta,
        continuous: false,
        bisection_steps: steps,
        scan: summary,
    })
}
