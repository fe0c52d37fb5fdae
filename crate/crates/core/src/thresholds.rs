//! Algorithmic weak-recovery threshold (instability of the zero SE fixed
//! point) and phase diagrams built from it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Channel, JointLatentPrior, ModalityParams, View, WPrior};
use crate::se::{se_solve, SeInit, SeOptions, SeParams, SectorParams};

/// `λ̃ = α·λ⁴·σ_v⁴·σ_w⁴/Δ̂²`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EffectiveSnr(pub f64);

impl EffectiveSnr {
    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn effective_snr_sector(s: &SectorParams, var_v: f64) -> EffectiveSnr {
    let dh = s.constants().delta_hat;
    let sw = s.w_prior.second_moment();
    EffectiveSnr(s.alpha * s.snr.powi(4) * var_v * var_v * sw * sw / (dh * dh))
}

/// Effective snr of a modality with `d` samples and latent variance `var_v`.
pub fn effective_snr(m: &ModalityParams, d: usize, var_v: f64) -> EffectiveSnr {
    effective_snr_sector(
        &SectorParams {
            alpha: m.alpha(d),
            snr: m.snr,
            channel: m.channel.clone(),
            w_prior: m.w_prior,
        },
        var_v,
    )
}

pub fn effective_snrs(p: &SeParams) -> [f64; 2] {
    [
        effective_snr_sector(&p.x, p.latent.var_x).0,
        effective_snr_sector(&p.y, p.latent.var_y).0,
    ]
}

/// Largest eigenvalue of the linearised SE map at the zero fixed point.
pub fn eta_plus(l_x: f64, l_y: f64, c_hat: f64) -> f64 {
    let c4 = c_hat.powi(4);
    let disc = l_x * l_x - 2.0 * (1.0 - 2.0 * c4) * l_x * l_y + l_y * l_y;
    debug_assert!(disc >= -1e-12 * (l_x + l_y).powi(2), "negative discriminant {disc}");
    0.5 * (l_x + l_y + disc.max(0.0).sqrt())
}

pub fn eta_plus_of(p: &SeParams) -> f64 {
    let [lx, ly] = effective_snrs(p);
    eta_plus(lx, ly, p.latent.c_hat())
}

/// A one-dimensional parameter axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Noise level σ_ξ shared by both views.
    SigmaXi,
    /// Noise level of view X only.
    SigmaXiX,
    /// Aspect ratio α shared by both views.
    Alpha,
    /// Signal strength λ shared by both views.
    Lambda,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::SigmaXi => "sigma_xi",
            Axis::SigmaXiX => "sigma_xi_x",
            Axis::Alpha => "alpha",
            Axis::Lambda => "lambda",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sigma_xi" => Ok(Axis::SigmaXi),
            "sigma_xi_x" => Ok(Axis::SigmaXiX),
            "alpha" => Ok(Axis::Alpha),
            "lambda" => Ok(Axis::Lambda),
            other => Err(Error::Config(format!(
                "unknown axis `{other}` (expected sigma_xi, sigma_xi_x, alpha or lambda)"
            ))),
        }
    }

    /// Recovery gets easier towards low values (noise axes) or high values.
    pub fn easy_is_low(self) -> bool {
        matches!(self, Axis::SigmaXi | Axis::SigmaXiX)
    }

    pub fn apply(self, template: &SeParams, x: f64) -> Result<SeParams> {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "axis value",
                value: x,
                reason: "must be positive and finite",
            });
        }
        let mut p = template.clone();
        let set_sigma = |s: &mut SectorParams| -> Result<()> {
            if !s.channel.is_gaussian() {
                return Err(Error::Unsupported(
                    "noise-level axes need the Gaussian additive channel".into(),
                ));
            }
            s.channel = Channel::gaussian(x);
            Ok(())
        };
        match self {
            Axis::SigmaXi => {
                set_sigma(&mut p.x)?;
                set_sigma(&mut p.y)?;
            }
            Axis::SigmaXiX => set_sigma(&mut p.x)?,
            Axis::Alpha => {
                p.x.alpha = x;
                p.y.alpha = x;
            }
            Axis::Lambda => {
                p.x.snr = x;
                p.y.snr = x;
            }
        }
        Ok(p)
    }
}

/// When both views share σ_ξ, λ̃ ∝ σ_ξ⁻⁴ in both and η_+ is homogeneous of
/// degree one, so the threshold is `η_+(σ_ξ = 1)^{1/4}`.
pub fn shared_sigma_closed_form(template: &SeParams) -> Result<f64> {
    let unit = Axis::SigmaXi.apply(template, 1.0)?;
    Ok(eta_plus_of(&unit).powf(0.25))
}

/// Root of `η_+ − 1` along `axis` inside `range`, to 10⁻⁶.
pub fn algorithmic_threshold(template: &SeParams, axis: Axis, range: (f64, f64)) -> Result<f64> {
    let (lo, hi) = (range.0.min(range.1), range.0.max(range.1));
    if axis == Axis::SigmaXi {
        let theta = shared_sigma_closed_form(template)?;
        if theta < lo || theta > hi {
            return Err(Error::NoBracket {
                lo,
                hi,
                reason: format!("eta_plus crosses 1 at {theta}, outside the range"),
            });
        }
        return Ok(theta);
    }
    algorithmic_threshold_bisect(template, axis, (lo, hi))
}

/// Plain bisection on `η_+ − 1`, without the closed-form fast path.
pub fn algorithmic_threshold_bisect(template: &SeParams, axis: Axis, range: (f64, f64)) -> Result<f64> {
    let (mut lo, mut hi) = (range.0.min(range.1), range.0.max(range.1));
    let f = |x: f64| -> Result<f64> { Ok(eta_plus_of(&axis.apply(template, x)?) - 1.0) };
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if flo.signum() == fhi.signum() {
        return Err(Error::NoBracket {
            lo,
            hi,
            reason: format!("eta_plus - 1 has the same sign at both ends ({flo}, {fhi})"),
        });
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if f(mid)?.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

// ---------------------------------------------------------------------------
// Phase diagrams

#[derive(Debug, Clone, PartialEq)]
pub enum PhaseGrid {
    /// Equal effective snr in both views, swept against the correlation.
    CorrelationVsSnr { c_hat: Vec<f64>, snr: Vec<f64> },
    /// Independent effective snrs at a fixed correlation.
    SnrPair {
        c_hat: f64,
        snr_x: Vec<f64>,
        snr_y: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    Boundary,
    Cs2Surface,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseDiagramRow {
    pub c_hat: f64,
    pub snr_x: f64,
    pub snr_y: f64,
    pub eta_plus: f64,
    pub recoverable: bool,
    /// SE fixed-point CS² of (w_X, w_Y, v_X, v_Y).
    pub cs2: Option<[f64; 4]>,
}

/// SE parameters realising the given effective snrs: unit variances, α = 1,
/// σ_ξ = 1, Gaussian `w` priors and `λ_z = λ̃_z^{1/4}`.
pub fn unit_params_for(snr_x: f64, snr_y: f64, c_hat: f64) -> Result<SeParams> {
    let latent = JointLatentPrior::new(1.0, 1.0, c_hat)?;
    let prior = WPrior::Gaussian { var: 1.0 };
    Ok(SeParams {
        x: SectorParams::gaussian(1.0, snr_x.powf(0.25), 1.0, prior),
        y: SectorParams::gaussian(1.0, snr_y.powf(0.25), 1.0, prior),
        latent,
    })
}

pub fn phase_diagram(grid: &PhaseGrid, mode: PhaseMode, se: &SeOptions) -> Result<Vec<PhaseDiagramRow>> {
    let points: Vec<(f64, f64, f64)> = match grid {
        PhaseGrid::CorrelationVsSnr { c_hat, snr } => c_hat
            .iter()
            .flat_map(|&c| snr.iter().map(move |&l| (c, l, l)))
            .collect(),
        PhaseGrid::SnrPair { c_hat, snr_x, snr_y } => snr_x
            .iter()
            .flat_map(|&lx| snr_y.iter().map(move |&ly| (*c_hat, lx, ly)))
            .collect(),
    };
    points
        .into_iter()
        .map(|(c, lx, ly)| {
            if !(lx >= 0.0 && ly >= 0.0 && c.abs() <= 1.0) {
                return Err(Error::Config(format!(
                    "invalid phase-diagram point (c_hat={c}, snr_x={lx}, snr_y={ly})"
                )));
            }
            let eta = eta_plus(lx, ly, c);
            let cs2 = match mode {
                PhaseMode::Boundary => None,
                PhaseMode::Cs2Surface => {
                    let p = unit_params_for(lx, ly, c)?;
                    let fp = se_solve(&p, SeInit::UninformativePerturbed, se)?.fixed_point;
                    Some([fp.q_w(View::X), fp.q_w(View::Y), fp.q_v(View::X), fp.q_v(View::Y)])
                }
            };
            Ok(PhaseDiagramRow {
                c_hat: c,
                snr_x: lx,
                snr_y: ly,
                eta_plus: eta,
                recoverable: eta > 1.0,
                cs2,
            })
        })
        .collect()
}
