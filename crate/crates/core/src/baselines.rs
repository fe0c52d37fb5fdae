//! Spectral baselines on the raw data: PLS (SVD and canonical variants), CCA
//! and single-view PCA.

use ndarray::{Array2, ArrayView1};
use ndarray_linalg::SVD;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lanczos_top, normalize, sym_inv_sqrt};

/// Above this many entries of `X Yᵀ` PLS switches to the implicit solver.
pub const DENSE_SVD_MAX_ENTRIES: usize = 250_000;

const LANCZOS_MAX_ITERS: usize = 400;
const LANCZOS_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PlsSvd,
    PlsCanonical,
    Cca,
    Pca,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::PlsSvd => "pls_svd",
            Self::PlsCanonical => "pls_canonical",
            Self::Cca => "cca",
            Self::Pca => "pca",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineEstimate {
    pub method: Method,
    pub w_hat_x: Vec<f64>,
    pub w_hat_y: Vec<f64>,
    pub v_hat_x: Vec<f64>,
    pub v_hat_y: Vec<f64>,
}

impl BaselineEstimate {
    pub fn w(&self, z: crate::model::View) -> &[f64] {
        match z {
            crate::model::View::X => &self.w_hat_x,
            crate::model::View::Y => &self.w_hat_y,
        }
    }

    pub fn v(&self, z: crate::model::View) -> &[f64] {
        match z {
            crate::model::View::X => &self.v_hat_x,
            crate::model::View::Y => &self.v_hat_y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvdBackend {
    /// Dense SVD up to [`DENSE_SVD_MAX_ENTRIES`], implicit beyond.
    Auto,
    Dense,
    Implicit,
}

fn check_shared_d(x: &Array2<f64>, y: &Array2<f64>) -> Result<()> {
    if x.ncols() != y.ncols() {
        return Err(Error::Dimension(format!(
            "views disagree on d: {} vs {}",
            x.ncols(),
            y.ncols()
        )));
    }
    if x.is_empty() || y.is_empty() {
        return Err(Error::Dimension("empty data matrix".into()));
    }
    Ok(())
}

fn deterministic_start(n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Sign convention: largest-magnitude entry of the left vector positive.
fn orient(left: &mut [f64], right: &mut [f64]) {
    let lead = left
        .iter()
        .copied()
        .fold(0.0_f64, |m, x| if x.abs() > m.abs() { x } else { m });
    if lead < 0.0 {
        left.iter_mut().chain(right.iter_mut()).for_each(|v| *v = -*v);
    }
}

/// Top singular pair `(u, v)` of a dense matrix.
fn top_pair_dense(m: &Array2<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let (u, s, vt) = m.svd(true, true).map_err(|e| Error::Linalg(e.to_string()))?;
    let (u, vt) = (u.expect("requested U"), vt.expect("requested Vt"));
    if !(s[0] > 0.0) {
        return Err(Error::Degenerate("matrix has no non-zero singular value".into()));
    }
    let mut l = u.column(0).to_vec();
    let mut r = vt.row(0).to_vec();
    orient(&mut l, &mut r);
    Ok((l, r))
}

/// Top singular pair of an implicit `n_left × n_right` operator, by Lanczos on
/// `A Aᵀ`.
fn top_pair_implicit<F, G>(apply: F, apply_t: G, n_left: usize) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&[f64]) -> Vec<f64>,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let e = lanczos_top(
        |x| Ok(apply(&apply_t(x))),
        &deterministic_start(n_left),
        LANCZOS_MAX_ITERS,
        LANCZOS_TOL,
    )?;
    if !(e.value > 0.0) {
        return Err(Error::Degenerate("matrix has no non-zero singular value".into()));
    }
    let mut l = e.vector;
    normalize(&mut l);
    let mut r = apply_t(&l);
    normalize(&mut r);
    orient(&mut l, &mut r);
    Ok((l, r))
}

fn matvec(a: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    a.dot(&ArrayView1::from(x)).to_vec()
}

fn matvec_t(a: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    a.t().dot(&ArrayView1::from(x)).to_vec()
}

/// Top singular vectors `(s_X, s_Y)` of `X Yᵀ`.
pub fn pls_top_pair(x: &Array2<f64>, y: &Array2<f64>, backend: SvdBackend) -> Result<(Vec<f64>, Vec<f64>)> {
    check_shared_d(x, y)?;
    let dense = match backend {
        SvdBackend::Auto => x.nrows() * y.nrows() <= DENSE_SVD_MAX_ENTRIES,
        SvdBackend::Dense => true,
        SvdBackend::Implicit => false,
    };
    if dense {
        top_pair_dense(&x.dot(&y.t()))
    } else {
        top_pair_implicit(
            |r| matvec(x, &matvec_t(y, r)),
            |l| matvec(y, &matvec_t(x, l)),
            x.nrows(),
        )
    }
}

fn project(z: &Array2<f64>, s: &[f64]) -> Vec<f64> {
    matvec_t(z, s)
}

pub fn pls_svd(x: &Array2<f64>, y: &Array2<f64>) -> Result<BaselineEstimate> {
    pls_svd_with(x, y, SvdBackend::Auto)
}

pub fn pls_svd_with(x: &Array2<f64>, y: &Array2<f64>, backend: SvdBackend) -> Result<BaselineEstimate> {
    let (sx, sy) = pls_top_pair(x, y, backend)?;
    Ok(BaselineEstimate {
        method: Method::PlsSvd,
        v_hat_x: project(x, &sx),
        v_hat_y: project(y, &sy),
        w_hat_x: sx,
        w_hat_y: sy,
    })
}

pub fn pls_canonical(x: &Array2<f64>, y: &Array2<f64>) -> Result<BaselineEstimate> {
    pls_canonical_with(x, y, SvdBackend::Auto)
}

pub fn pls_canonical_with(x: &Array2<f64>, y: &Array2<f64>, backend: SvdBackend) -> Result<BaselineEstimate> {
    let (sx, sy) = pls_top_pair(x, y, backend)?;
    let regress = |z: &Array2<f64>, s: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        let v = project(z, s);
        let vv = crate::scores::dot(&v, &v);
        if !(vv > 0.0) {
            return Err(Error::Degenerate("PLS score vector has zero norm".into()));
        }
        let w = matvec(z, &v).into_iter().map(|e| e / vv).collect();
        Ok((w, v))
    };
    let (w_hat_x, v_hat_x) = regress(x, &sx)?;
    let (w_hat_y, v_hat_y) = regress(y, &sy)?;
    Ok(BaselineEstimate {
        method: Method::PlsCanonical,
        w_hat_x,
        w_hat_y,
        v_hat_x,
        v_hat_y,
    })
}

/// CCA without regularisation; needs `d > n_z` in both views.
pub fn cca(x: &Array2<f64>, y: &Array2<f64>) -> Result<BaselineEstimate> {
    check_shared_d(x, y)?;
    let d = x.ncols();
    for (name, z) in [("X", x), ("Y", y)] {
        if d <= z.nrows() {
            return Err(Error::Precondition(format!(
                "CCA needs alpha = d/n > 1 in every view; view {name} has alpha = {}",
                d as f64 / z.nrows() as f64
            )));
        }
    }
    let ax = sym_inv_sqrt(&x.dot(&x.t()))?;
    let ay = sym_inv_sqrt(&y.dot(&y.t()))?;
    let m = ax.dot(x).dot(&y.t()).dot(&ay);
    let (ux, uy) = top_pair_implicit(|r| matvec(&m, r), |l| matvec_t(&m, l), m.nrows())?;
    let w_hat_x = matvec(&ax, &ux);
    let w_hat_y = matvec(&ay, &uy);
    Ok(BaselineEstimate {
        method: Method::Cca,
        v_hat_x: project(x, &w_hat_x),
        v_hat_y: project(y, &w_hat_y),
        w_hat_x,
        w_hat_y,
    })
}

/// Top singular pair of a single data matrix: `(ŵ, v̂)`, both unit norm.
pub fn pca_single(z: &Array2<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    if z.is_empty() {
        return Err(Error::Dimension("empty data matrix".into()));
    }
    top_pair_implicit(|r| matvec(z, r), |l| matvec_t(z, l), z.nrows())
}

/// PCA on each view separately.
pub fn pca(x: &Array2<f64>, y: &Array2<f64>) -> Result<BaselineEstimate> {
    let (w_hat_x, v_hat_x) = pca_single(x)?;
    let (w_hat_y, v_hat_y) = pca_single(y)?;
    Ok(BaselineEstimate {
        method: Method::Pca,
        w_hat_x,
        w_hat_y,
        v_hat_x,
        v_hat_y,
    })
}

pub fn run_baseline(method: Method, x: &Array2<f64>, y: &Array2<f64>) -> Result<BaselineEstimate> {
    match method {
        Method::PlsSvd => pls_svd(x, y),
        Method::PlsCanonical => pls_canonical(x, y),
        Method::Cca => cca(x, y),
        Method::Pca => pca(x, y),
    }
}

/// How a transition location is read off a noisy recovery curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionEstimator {
    /// Walking from the hard end, the first (interpolated) point where the
    /// curve exceeds twice its hard-end floor. Sensitive to the finite-size
    /// tail, so it drifts with the choice of the floor point.
    FirstExceedance,
    /// The steepest secant of the curve, extended towards the hard end until
    /// it meets twice the floor.
    SteepestTangent,
}

/// Threshold read off a noisy recovery curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalTransition {
    pub theta: f64,
    /// Spread of the per-seed estimates.
    pub std: f64,
    /// Seed-averaged level at the hard end of the grid.
    pub floor: f64,
    /// `(axis value, seed-averaged CS²)` in grid order.
    pub curve: Vec<(f64, f64)>,
}

/// Grid indices ordered from the hard end to the easy end.
fn hard_to_easy(xs: &[f64], easy_is_low: bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    if easy_is_low {
        idx.reverse();
    }
    idx
}

fn first_exceedance(xs: &[f64], ys: &[f64], level: f64, easy_is_low: bool) -> Option<f64> {
    let idx = hard_to_easy(xs, easy_is_low);
    for w in idx.windows(2) {
        let (h, e) = (w[0], w[1]);
        if ys[h] <= level && ys[e] > level {
            let t = (level - ys[h]) / (ys[e] - ys[h]);
            return Some(xs[h] + t * (xs[e] - xs[h]));
        }
    }
    None
}

fn steepest_tangent(xs: &[f64], ys: &[f64], level: f64, easy_is_low: bool) -> Option<f64> {
    let idx = hard_to_easy(xs, easy_is_low);
    // rise per unit step towards the easy end
    let (h, e, slope) = idx
        .windows(2)
        .map(|w| (w[0], w[1], (ys[w[1]] - ys[w[0]]) / (xs[w[1]] - xs[w[0]]).abs()))
        .filter(|t| t.2.is_finite())
        .max_by(|a, b| a.2.total_cmp(&b.2))?;
    if !(slope > 0.0) {
        return None;
    }
    let towards_hard = (xs[h] - xs[e]).signum();
    Some(xs[e] + towards_hard * (ys[e] - level) / slope)
}

/// Locates the transition of a recovery curve relative to twice its value at
/// the hard end of the grid. `cs2[i][s]` is seed `s` at grid point `xs[i]`.
pub fn empirical_transition(
    xs: &[f64],
    cs2: &[Vec<f64>],
    easy_is_low: bool,
    estimator: TransitionEstimator,
) -> Result<EmpiricalTransition> {
    if xs.len() < 2 || xs.len() != cs2.len() {
        return Err(Error::Precondition(
            "empirical transition needs at least two grid points with one CS² row each".into(),
        ));
    }
    let seeds = cs2[0].len();
    if seeds == 0 || cs2.iter().any(|r| r.len() != seeds) {
        return Err(Error::Precondition(
            "every grid point needs the same non-zero number of seeds".into(),
        ));
    }
    let mean: Vec<f64> = cs2.iter().map(|r| r.iter().sum::<f64>() / seeds as f64).collect();
    let hard = hard_to_easy(xs, easy_is_low)[0];
    let floor = mean[hard];
    let level = 2.0 * floor;
    let locate = |ys: &[f64]| match estimator {
        TransitionEstimator::FirstExceedance => first_exceedance(xs, ys, level, easy_is_low),
        TransitionEstimator::SteepestTangent => steepest_tangent(xs, ys, level, easy_is_low),
    };
    let theta = locate(&mean)
        .ok_or_else(|| Error::Degenerate(format!("seed-averaged CS² never rises above 2x its floor {floor:e}")))?;
    let per_seed: Vec<f64> = (0..seeds)
        .filter_map(|s| {
            let ys: Vec<f64> = cs2.iter().map(|r| r[s]).collect();
            locate(&ys)
        })
        .collect();
    let std = if per_seed.len() > 1 {
        let m = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
        (per_seed.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (per_seed.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(EmpiricalTransition {
        theta,
        std,
        floor,
        curve: xs.iter().copied().zip(mean).collect(),
    })
}
