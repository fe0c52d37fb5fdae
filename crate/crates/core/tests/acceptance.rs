//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. `ACCEPTANCE_ONLY=1,13` restricts the run to a subset.

use std::error::Error as StdError;
use std::time::Instant;

use dualview::amp::{amp_run, amp_run_from, AmpOptions, AmpParams, AmpState, InitStrategy};
use dualview::baselines::{cca, empirical_transition, pls_canonical, EmpiricalTransition, TransitionEstimator};
use dualview::denoise::{gauss_w_denoise, joint_gauss_v_denoise, rb_w_denoise};
use dualview::energy::{bethe_free_energy, it_threshold, spinodal, BranchThresholdOptions};
use dualview::linalg::set_blas_threads;
use dualview::linamp::{build_gamma_v, build_gamma_w, linamp_run, LinampOptions, Sector};
use dualview::metrics::{cs2, se_cs2};
use dualview::model::{
    generate_dataset, score_matrices, Dataset, JointLatentPrior, ModalityParams, ModelConfig, WPrior,
};
use dualview::oracle::{tilted_moments_oracle, OracleMoments, OraclePrior};
use dualview::scores::{ScoreOperator, ScorePair};
use dualview::se::{
    se_solve, se_step_bayes_gauss, se_step_general, OverlapState, SeInit, SeOptions, SeParams, SectorParams,
};
use dualview::thresholds::{algorithmic_threshold, eta_plus_of, Axis};
use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Res<T> = Result<T, Box<dyn StdError>>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Res<Outcome> {
    Ok(Outcome { pass, detail })
}

const GAUSS: WPrior = WPrior::Gaussian { var: 1.0 };
const SPARSE: WPrior = WPrior::RademacherBernoulli { rho: 0.02 };
/// Latent covariance of the strongly correlated setting (√c_v = 0.75).
const COV_HIGH: f64 = 0.5625;
/// Weakly correlated setting (√c_v = 0.2).
const COV_LOW: f64 = 0.04;
const RANGE: (f64, f64) = (0.2, 3.0);

fn latent(cov: f64) -> JointLatentPrior {
    JointLatentPrior::new(1.0, 1.0, cov).expect("valid latent prior")
}

fn se_params(alpha: f64, snr: f64, sigma: f64, prior: WPrior, cov: f64) -> SeParams {
    SeParams::symmetric(alpha, snr, sigma, prior, latent(cov))
}

fn model(d: usize, n: usize, snr: f64, sigma: f64, prior: WPrior, cov: f64, seed: u64) -> ModelConfig {
    let m = ModalityParams::gaussian(snr, n, sigma, prior);
    ModelConfig {
        d,
        x: m.clone(),
        y: m,
        latent: latent(cov),
        seed,
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn cs2_w_mean(ds: &Dataset, wx: &[f64], wy: &[f64]) -> Res<f64> {
    Ok(0.5 * (cs2(wx, &ds.w0_x)? + cs2(wy, &ds.w0_y)?))
}

fn se_fixed_cs2_w(p: &SeParams, init: SeInit) -> Res<f64> {
    let r = se_solve(p, init, &SeOptions::default())?;
    let c = se_cs2(&r.fixed_point, [p.x.w_prior, p.y.w_prior], &p.latent);
    Ok(0.5 * (c.w_x + c.w_y))
}

fn fmt_curve(t: &EmpiricalTransition) -> String {
    t.curve
        .iter()
        .map(|(x, y)| format!("{x:.2}:{y:.4}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Seed-by-grid table of a per-run score, `rows[i][s]`.
fn sweep<F>(xs: &[f64], seeds: u64, mut run: F) -> Res<Vec<Vec<f64>>>
where
    F: FnMut(f64, u64) -> Res<f64>,
{
    xs.iter()
        .map(|&x| (1..=seeds).map(|s| run(x, s)).collect::<Res<Vec<f64>>>())
        .collect()
}

/// Both transition estimates along a noise axis; the steepest-tangent one
/// decides the criterion.
fn transition_report(xs: &[f64], rows: &[Vec<f64>]) -> Res<(EmpiricalTransition, String)> {
    let tangent = empirical_transition(xs, rows, true, TransitionEstimator::SteepestTangent)?;
    let literal = empirical_transition(xs, rows, true, TransitionEstimator::FirstExceedance)
        .map(|t| format!("{:.3}", t.theta))
        .unwrap_or_else(|e| format!("n/a ({e})"));
    let text = format!(
        "theta {:.4} ± {:.4} (first-exceedance {literal}; floor {:.4}) curve [{}]",
        tangent.theta,
        tangent.std,
        tangent.floor,
        fmt_curve(&tangent)
    );
    Ok((tangent, text))
}

// ---------------------------------------------------------------------------
// closed-form thresholds

fn alg(p: &SeParams) -> Res<f64> {
    Ok(algorithmic_threshold(p, Axis::SigmaXi, RANGE)?)
}

fn c1() -> Res<Outcome> {
    let t = alg(&se_params(1.0, 1.0, 1.0, GAUSS, COV_HIGH))?;
    outcome(
        (t - 1.0711).abs() <= 1e-3,
        format!("theta_alg {t:.6} (expected 1.0711 ± 1e-3)"),
    )
}

fn c2() -> Res<Outcome> {
    let t = alg(&se_params(1.0, 1.0, 1.0, GAUSS, 0.8))?;
    outcome(
        (t - 1.1317).abs() <= 1e-3,
        format!("theta_alg {t:.6} (expected 1.1317 ± 1e-3)"),
    )
}

fn c3() -> Res<Outcome> {
    let t = alg(&se_params(1.0, 1.0, 1.0, GAUSS, 1.0))?;
    let want = 2f64.powf(0.25);
    outcome(
        (t - want).abs() <= 1e-6,
        format!("theta_alg {t:.9} (expected 2^(1/4) = {want:.9})"),
    )
}

fn c4() -> Res<Outcome> {
    let joint = alg(&se_params(1.0, 4.0, 1.0, SPARSE, COV_HIGH))?;
    let single = alg(&se_params(1.0, 4.0, 1.0, SPARSE, 0.0))?;
    outcome(
        (joint - 0.606).abs() <= 1e-3 && (single - 0.566).abs() <= 1e-3,
        format!("theta_alg {joint:.6} (expected 0.606), single-view {single:.6} (expected 0.566)"),
    )
}

fn c5() -> Res<Outcome> {
    let t = alg(&se_params(1.0, 1.0, 1.0, GAUSS, COV_LOW))?;
    outcome(
        (t - 1.0004).abs() <= 1e-3,
        format!("theta_alg {t:.6} (expected 1.0004 ± 1e-3)"),
    )
}

// ---------------------------------------------------------------------------
// free-energy thresholds

fn c6() -> Res<Outcome> {
    let p = se_params(1.0, 4.0, 1.0, SPARSE, COV_HIGH);
    let o = BranchThresholdOptions {
        tol: 1e-4,
        ..BranchThresholdOptions::default()
    };
    let range = (0.62, 0.8);
    let it = it_threshold(&p, Axis::SigmaXi, range, &o)?;
    let sp = spinodal(&p, Axis::SigmaXi, range, &o)?;
    let a = alg(&p)?;
    let ok = (it.theta - 0.71).abs() <= 0.01
        && (sp.theta - 0.72).abs() <= 0.01
        && !it.continuous
        && a < it.theta
        && it.theta <= sp.theta;
    outcome(
        ok,
        format!(
            "theta_alg {a:.4} < theta_IT {:.4} (expected 0.71) <= theta_sp {:.4} (expected 0.72)",
            it.theta, sp.theta
        ),
    )
}

fn gradient(s: &OverlapState, p: &SeParams) -> Res<f64> {
    // steps relative to each overlap's natural scale (sparse priors have tiny m_w)
    let scale = [
        p.x.w_prior.second_moment(),
        p.y.w_prior.second_moment(),
        p.latent.var_x,
        p.latent.var_y,
    ];
    let base = s.as_array();
    let mut worst: f64 = 0.0;
    for k in 0..4 {
        let h = 1e-5 * scale[k];
        let (mut up, mut dn) = (base, base);
        up[k] += h;
        dn[k] -= h;
        let g = (bethe_free_energy(&OverlapState::from_array(up), p)?
            - bethe_free_energy(&OverlapState::from_array(dn), p)?)
            / (2.0 * h);
        worst = worst.max(g.abs());
    }
    Ok(worst)
}

fn c7() -> Res<Outcome> {
    let mut worst: f64 = 0.0;
    let mut points = 0;
    let settings = [
        (linspace(0.55, 1.0, 10), 1.0, GAUSS),
        (linspace(0.55, 0.8, 10), 4.0, SPARSE),
    ];
    for (grid, snr, prior) in settings {
        for &sigma in &grid {
            let p = se_params(1.0, snr, sigma, prior, COV_HIGH);
            for init in [SeInit::UninformativePerturbed, SeInit::Informative] {
                let r = se_solve(&p, init, &SeOptions::default())?;
                worst = worst.max(gradient(&r.fixed_point, &p)?);
                points += 1;
            }
        }
    }
    outcome(
        worst < 1e-6,
        format!("max |dPhi| {worst:.2e} over {points} fixed points (both branches, two settings)"),
    )
}

// ---------------------------------------------------------------------------
// oracle equivalences

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs() + 1e-14
}

fn c8() -> Res<Outcome> {
    let ks = linspace(0.0, 5.0, 20);
    let js = linspace(-5.0, 5.0, 20);
    let mut worst: f64 = 0.0;
    let mut fails = 0;
    let mut record = |a: f64, b: f64| {
        worst = worst.max((a - b).abs() / b.abs().max(1e-300));
        if !close(a, b, 1e-8) {
            fails += 1;
        }
    };
    for prior in [GAUSS, SPARSE, WPrior::RademacherBernoulli { rho: 0.5 }] {
        for &k in &ks {
            for &j in &js {
                let m = match prior {
                    WPrior::Gaussian { var } => gauss_w_denoise(k, j, var)?,
                    WPrior::RademacherBernoulli { rho } => rb_w_denoise(k, j, rho)?,
                };
                let OracleMoments::Scalar(o) = tilted_moments_oracle(&OraclePrior::from(prior), &[k], &[j])? else {
                    return Err("scalar prior gave joint moments".into());
                };
                record(m.mean, o.mean);
                record(m.var, o.var);
            }
        }
    }
    let l = latent(COV_HIGH);
    for &k in &ks {
        for &j in &js {
            let (kx, ky, jx, jy) = (k, 0.5 * k + 0.5, j, 0.3 - 0.5 * j);
            let m = joint_gauss_v_denoise(kx, ky, jx, jy, &l)?;
            let OracleMoments::Joint(o) = tilted_moments_oracle(&OraclePrior::JointGaussian(l), &[kx, ky], &[jx, jy])?
            else {
                return Err("joint prior gave scalar moments".into());
            };
            record(m.mean_x, o.mean_x);
            record(m.mean_y, o.mean_y);
            record(m.var_x, o.var_x);
            record(m.var_y, o.var_y);
        }
    }
    let mut finite = true;
    for k in [0.0, 1.0, 10.0, 1e3] {
        for j in [-1e3, 1e3] {
            let m = rb_w_denoise(k, j, 0.02)?;
            finite &= m.mean.is_finite() && m.var.is_finite();
        }
    }
    outcome(
        fails == 0 && finite,
        format!("3 scalar priors + joint prior on 20x20 grids: max rel err {worst:.2e}, {fails} over 1e-8; RB finite at |J|=1e3: {finite}"),
    )
}

fn c9() -> Res<Outcome> {
    let asym = SeParams {
        x: SectorParams::gaussian(1.4, 1.2, 0.9, WPrior::RademacherBernoulli { rho: 0.3 }),
        y: SectorParams::gaussian(0.8, 1.0, 0.7, WPrior::Gaussian { var: 1.3 }),
        latent: JointLatentPrior::new(1.1, 0.9, 0.6).expect("valid"),
    };
    let cases = [
        se_params(1.0, 1.0, 0.8, GAUSS, COV_HIGH),
        se_params(1.0, 4.0, 0.66, SPARSE, COV_HIGH),
        asym,
    ];
    let (mut nishimori, mut reduced): (f64, f64) = (0.0, 0.0);
    for p in &cases {
        for init in [
            SeInit::Informative,
            SeInit::Custom(OverlapState {
                m_w: [0.05, 0.02],
                m_v: [0.0; 2],
            }),
        ] {
            let mut red = init.state(p, 1e-8);
            let mut full = red.to_full(p);
            for _ in 0..60 {
                full = se_step_general(&full, p, None)?;
                red = se_step_bayes_gauss(&red, p)?;
                for (sec, m) in full.w.iter().chain(&full.v).zip(red.as_array()) {
                    nishimori = nishimori.max((sec.q - sec.m.abs()).abs());
                    reduced = reduced.max((sec.m - m).abs());
                }
            }
        }
    }
    outcome(
        nishimori <= 1e-6 && reduced <= 1e-6,
        format!("max |q - |m|| {nishimori:.2e}, max |m_general - m_reduced| {reduced:.2e} (3 settings x 2 inits x 60 steps)"),
    )
}

/// Largest eigenvalue of the finite-difference Jacobian of the `m_w` map at 0.
fn fd_eta(p: &SeParams) -> Res<f64> {
    let eps = 1e-7;
    let mut jac = [[0.0; 2]; 2];
    for j in 0..2 {
        let mut up = OverlapState::zero();
        up.m_w[j] = eps;
        let f_up = se_step_bayes_gauss(&up, p)?;
        let f_dn = se_step_bayes_gauss(&up.negated(), p)?;
        for i in 0..2 {
            jac[i][j] = (f_up.m_w[i] - f_dn.m_w[i]) / (2.0 * eps);
        }
    }
    let tr = jac[0][0] + jac[1][1];
    let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
    Ok(0.5 * (tr + (tr * tr - 4.0 * det).max(0.0).sqrt()))
}

fn c10() -> Res<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for i in 0..5 {
        // noise levels around the transition, where η_+ is of order one
        let (sx, sy, c) = (
            rng.random_range(0.7..1.5),
            rng.random_range(0.7..1.5),
            rng.random_range(0.0..1.0),
        );
        let prior = if i % 2 == 0 {
            GAUSS
        } else {
            WPrior::RademacherBernoulli { rho: 0.3 }
        };
        let mut p = se_params(1.0, 1.0, sx, prior, c);
        p.y = SectorParams::gaussian(0.7, 1.3, sy, GAUSS);
        let (closed, fd) = (eta_plus_of(&p), fd_eta(&p)?);
        worst = worst.max((closed - fd).abs());
        lines.push(format!("({sx:.2},{sy:.2},{c:.2}) {closed:.5}"));
    }
    outcome(
        worst <= 1e-4,
        format!("max |eta_closed - eta_fd| {worst:.2e} at [{}]", lines.join(", ")),
    )
}

fn c11() -> Res<Outcome> {
    let mut worst: f64 = 0.0;
    let opts = SeOptions {
        tol: 1e-15,
        max_iters: 1_000_000,
        ..SeOptions::default()
    };
    for sigma in [0.6, 0.8, 1.0, 1.1, 1.3] {
        let (alpha, snr) = (1.0, 1.0);
        let p = se_params(alpha, snr, sigma, GAUSS, 1.0);
        let r = se_solve(&p, SeInit::Informative, &opts)?;
        let two = se_cs2(&r.fixed_point, [GAUSS, GAUSS], &p.latent);
        // one view of 2n features: λ/√n = λ_s/√(2n), α_s = α/2
        let g_s = 2.0 * snr * snr / (sigma * sigma);
        let a_s = alpha / 2.0;
        let (mut m_w, mut m_v) = (1.0_f64, 1.0_f64);
        for _ in 0..1_000_000 {
            let nv = g_s * m_w / (1.0 + g_s * m_w);
            let nw = a_s * g_s * nv / (1.0 + a_s * g_s * nv);
            let delta = (nw - m_w).abs().max((nv - m_v).abs());
            (m_w, m_v) = (nw, nv);
            if delta < 1e-15 {
                break;
            }
        }
        // CS² of a unit-variance Bayes estimate is its overlap
        for (a, b) in [(two.w_x, m_w), (two.w_y, m_w), (two.v_x, m_v), (two.v_y, m_v)] {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(
        worst <= 1e-8,
        format!("max CS² difference to the stacked single-view SE {worst:.2e} over 5 noise levels"),
    )
}

fn dense_gamma(c: &ModelConfig, p: [&ScorePair; 2], sector: Sector) -> Array2<f64> {
    let (lx, ly) = (c.x.snr, c.y.snr);
    let (nx, ny) = (c.x.n as f64, c.y.n as f64);
    let (swx, swy) = (c.x.w_prior.second_moment(), c.y.w_prior.second_moment());
    let (svx, svy, cv) = (c.latent.var_x, c.latent.var_y, c.latent.cov);
    let (sx, sy) = (&p[0].s, &p[1].s);
    let mut m = match sector {
        Sector::V => {
            let d = c.d;
            let mut m = Array2::zeros((2 * d, 2 * d));
            let gx = sx.t().dot(sx);
            let gy = sy.t().dot(sy);
            m.slice_mut(s![..d, ..d]).assign(&(&gx * (lx * lx / nx * svx * swx)));
            m.slice_mut(s![..d, d..]).assign(&(&gy * (ly * ly / ny * cv * swy)));
            m.slice_mut(s![d.., ..d]).assign(&(&gx * (lx * lx / nx * cv * swx)));
            m.slice_mut(s![d.., d..]).assign(&(&gy * (ly * ly / ny * svy * swy)));
            m
        }
        Sector::W => {
            let (a, b) = (c.x.n, c.y.n);
            let mut m = Array2::zeros((a + b, a + b));
            let r = lx * ly / (nx * ny).sqrt() * cv;
            m.slice_mut(s![..a, ..a])
                .assign(&(sx.dot(&sx.t()) * (lx * lx / nx * svx * swx)));
            m.slice_mut(s![..a, a..]).assign(&(sx.dot(&sy.t()) * (r * swx)));
            m.slice_mut(s![a.., ..a]).assign(&(sy.dot(&sx.t()) * (r * swy)));
            m.slice_mut(s![a.., a..])
                .assign(&(sy.dot(&sy.t()) * (ly * ly / ny * svy * swy)));
            m
        }
    };
    for i in 0..m.nrows() {
        m[[i, i]] = 0.0;
    }
    m
}

fn c12() -> Res<Outcome> {
    let c = ModelConfig {
        d: 3,
        x: ModalityParams::gaussian(1.3, 3, 0.9, WPrior::Gaussian { var: 1.5 }),
        y: ModalityParams::gaussian(0.7, 3, 1.1, SPARSE),
        latent: JointLatentPrior::new(1.2, 0.8, 0.6)?,
        seed: 12,
    };
    let ds = generate_dataset(&c)?;
    let px = score_matrices(&ds.x_data, &c.x.channel)?;
    let py = score_matrices(&ds.y_data, &c.y.channel)?;
    let ops: [&dyn ScoreOperator; 2] = [&px, &py];
    let mut worst: f64 = 0.0;
    for sector in [Sector::V, Sector::W] {
        let op = match sector {
            Sector::V => build_gamma_v(ops, &c)?,
            Sector::W => build_gamma_w(ops, &c)?,
        };
        let dense = dense_gamma(&c, [&px, &py], sector);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..8 {
            let x: Vec<f64> = (0..op.dim()).map(|_| rng.sample(StandardNormal)).collect();
            let lazy = op.apply(&x)?;
            let want = dense.dot(&ndarray::Array1::from(x));
            for (a, b) in lazy.iter().zip(want.iter()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    outcome(
        worst <= 1e-12,
        format!("max |lazy - dense| {worst:.2e} for both block operators at d = n = 3"),
    )
}

// ---------------------------------------------------------------------------
// finite-size algorithm vs theory

fn c13() -> Res<Outcome> {
    const D: usize = 5000;
    const SEEDS: u64 = 5;
    let mut ok = true;
    let mut parts = Vec::new();
    for sigma in [0.7, 0.8, 0.9, 1.0, 1.3] {
        let se = se_fixed_cs2_w(
            &se_params(1.0, 1.0, sigma, GAUSS, COV_HIGH),
            SeInit::UninformativePerturbed,
        )?;
        let mut runs = Vec::new();
        for seed in 1..=SEEDS {
            let c = model(D, D, 1.0, sigma, GAUSS, COV_HIGH, seed);
            let ds = generate_dataset(&c)?;
            let r = amp_run(&ds, &c, InitStrategy::ApproxNishimori, &AmpOptions::default())?;
            let f = r.final_point();
            runs.push(0.5 * (f.cs2_w[0] + f.cs2_w[1]));
        }
        let m = mean(&runs);
        let pass = if sigma > 1.2 { m < 0.02 } else { (m - se).abs() <= 0.03 };
        ok &= pass;
        parts.push(format!(
            "σ={sigma}: AMP {m:.4} SE {se:.4}{}",
            if pass { "" } else { " (!)" }
        ));
    }
    outcome(ok, format!("d={D}, {SEEDS} seeds: {}", parts.join("; ")))
}

fn c14() -> Res<Outcome> {
    const D: usize = 15000;
    let c = model(D, D, 4.0, 0.66, SPARSE, COV_HIGH, 1);
    let ds = generate_dataset(&c)?;
    let opts = AmpOptions {
        max_iters: 200,
        ..AmpOptions::default()
    };
    let informed = amp_run(&ds, &c, InitStrategy::Informed, &opts)?;
    let fi = informed.final_point();
    let inf_cs2 = 0.5 * (fi.cs2_w[0] + fi.cs2_w[1]);
    let uninf = amp_run(&ds, &c, InitStrategy::ApproxNishimori, &opts)?;
    // the largest CS² reached anywhere along the run, not just at the end
    let peak = uninf
        .trajectory
        .iter()
        .skip(1)
        .map(|t| t.cs2_w[0].max(t.cs2_w[1]))
        .fold(0.0, f64::max);
    let fu = uninf.final_point();
    outcome(
        inf_cs2 > 0.5 && peak < 0.05,
        format!(
            "d={D}: informed CS²_w {inf_cs2:.4} ({} iters); approx-Nishimori final {:.4}, peak {peak:.4} ({} iters)",
            informed.iters,
            0.5 * (fu.cs2_w[0] + fu.cs2_w[1]),
            uninf.iters
        ),
    )
}

fn c15() -> Res<Outcome> {
    const D: usize = 2500;
    const SEEDS: u64 = 3;
    let xs = linspace(0.8, 1.35, 12);
    let opts = LinampOptions {
        max_iters: 2000,
        tol: 1e-6,
    };
    let rows = sweep(&xs, SEEDS, |sigma, seed| {
        let c = model(D, D, 1.0, sigma, GAUSS, COV_HIGH, seed);
        let ds = generate_dataset(&c)?;
        let e = linamp_run(&ds, &c, &opts)?;
        cs2_w_mean(&ds, &e.w_x, &e.w_y)
    })?;
    let (t, text) = transition_report(&xs, &rows)?;
    outcome(
        (t.theta - 1.0711).abs() <= 0.05,
        format!("d={D}, {SEEDS} seeds: {text} (expected 1.0711 ± 0.05)"),
    )
}

fn c16() -> Res<Outcome> {
    const D: usize = 5000;
    const SEEDS: u64 = 4;
    let xs = linspace(0.5, 1.0, 11);
    let rows = sweep(&xs, SEEDS, |sigma, seed| {
        let c = model(D, D, 1.0, sigma, GAUSS, COV_LOW, seed);
        let ds = generate_dataset(&c)?;
        let e = pls_canonical(&ds.x_data, &ds.y_data)?;
        cs2_w_mean(&ds, &e.w_hat_x, &e.w_hat_y)
    })?;
    let (t, text) = transition_report(&xs, &rows)?;
    let threshold_ok = (t.theta - 0.74).abs() <= 0.05;

    // method ordering in the strongly correlated setting at low noise
    let sigma = 0.6;
    let se = se_solve(
        &se_params(1.0, 1.0, sigma, GAUSS, COV_HIGH),
        SeInit::UninformativePerturbed,
        &SeOptions::default(),
    )?;
    let se_c = se_cs2(&se.fixed_point, [GAUSS, GAUSS], &latent(COV_HIGH));
    let (se_w, se_v) = (0.5 * (se_c.w_x + se_c.w_y), 0.5 * (se_c.v_x + se_c.v_y));
    let (mut amp, mut pls, mut lin) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 1..=2 {
        let c = model(D, D, 1.0, sigma, GAUSS, COV_HIGH, seed);
        let ds = generate_dataset(&c)?;
        let a = amp_run(&ds, &c, InitStrategy::ApproxNishimori, &AmpOptions::default())?;
        let f = a.final_point();
        amp.push([0.5 * (f.cs2_w[0] + f.cs2_w[1]), 0.5 * (f.cs2_v[0] + f.cs2_v[1])]);
        let p = pls_canonical(&ds.x_data, &ds.y_data)?;
        pls.push([
            cs2_w_mean(&ds, &p.w_hat_x, &p.w_hat_y)?,
            cs2_v_mean(&ds, &p.v_hat_x, &p.v_hat_y)?,
        ]);
        let l = linamp_run(
            &ds,
            &c,
            &LinampOptions {
                max_iters: 2000,
                tol: 1e-6,
            },
        )?;
        lin.push([cs2_w_mean(&ds, &l.w_x, &l.w_y)?, cs2_v_mean(&ds, &l.v_x, &l.v_y)?]);
    }
    let avg = |v: &[[f64; 2]], k: usize| mean(&v.iter().map(|r| r[k]).collect::<Vec<_>>());
    let (amp_w, pls_w, lin_w) = (avg(&amp, 0), avg(&pls, 0), avg(&lin, 0));
    let (amp_v, lin_v) = (avg(&amp, 1), avg(&lin, 1));
    // AMP on top up to seed noise, PLS close to optimal, linearised AMP's v̂ behind AMP's
    let slack = 0.01;
    let ordering_ok = amp_w >= pls_w - slack && amp_w >= lin_w - slack && (pls_w - se_w).abs() <= 0.05 && lin_v < amp_v;
    outcome(
        threshold_ok && ordering_ok,
        format!(
            "PLS-Canonical d={D}, {SEEDS} seeds: {text} (expected 0.74 ± 0.05); σ=0.6 CS²_w SE {se_w:.4} AMP {amp_w:.4} PLS {pls_w:.4} linAMP {lin_w:.4}, CS²_v SE {se_v:.4} AMP {amp_v:.4} linAMP {lin_v:.4}"
        ),
    )
}

fn cs2_v_mean(ds: &Dataset, vx: &[f64], vy: &[f64]) -> Res<f64> {
    Ok(0.5 * (cs2(vx, &ds.v0_x)? + cs2(vy, &ds.v0_y)?))
}

fn c17() -> Res<Outcome> {
    const D: usize = 5000;
    const SEEDS: usize = 4;
    let n = D / 4;
    let xs = linspace(0.3, 0.8, 11);
    // per grid point and seed: (CS_w·CS_v, CS²_w, CS²_v), view-averaged
    let mut table = vec![vec![[0.0; 3]; SEEDS]; xs.len()];
    for (i, &sigma) in xs.iter().enumerate() {
        for (k, cell) in table[i].iter_mut().enumerate() {
            let c = model(D, n, 1.0, sigma, GAUSS, 0.75, k as u64 + 1);
            let ds = generate_dataset(&c)?;
            let e = cca(&ds.x_data, &ds.y_data)?;
            let w = [cs2(&e.w_hat_x, &ds.w0_x)?, cs2(&e.w_hat_y, &ds.w0_y)?];
            let v = [cs2(&e.v_hat_x, &ds.v0_x)?, cs2(&e.v_hat_y, &ds.v0_y)?];
            *cell = [
                0.5 * ((w[0] * v[0]).sqrt() + (w[1] * v[1]).sqrt()),
                0.5 * (w[0] + w[1]),
                0.5 * (v[0] + v[1]),
            ];
        }
    }
    let rows = |q: usize| -> Vec<Vec<f64>> { table.iter().map(|r| r.iter().map(|c| c[q]).collect()).collect() };
    let (t, text) = transition_report(&xs, &rows(0))?;
    let side = |q: usize| -> String {
        empirical_transition(&xs, &rows(q), true, TransitionEstimator::SteepestTangent)
            .map(|t| format!("{:.4}", t.theta))
            .unwrap_or_else(|e| format!("n/a ({e})"))
    };
    let mut refuses = true;
    for n_sq in [400, 500] {
        let c = model(400, n_sq, 1.0, 0.5, GAUSS, 0.75, 1);
        let ds = generate_dataset(&c)?;
        refuses &= matches!(cca(&ds.x_data, &ds.y_data), Err(e) if e.to_string().contains("alpha"));
    }
    outcome(
        (t.theta - 0.55).abs() <= 0.07 && refuses,
        format!(
            "d={D}, α=4, {SEEDS} seeds, CS_w·CS_v: {text} (expected 0.55 ± 0.07); from CS²_w alone {}, CS²_v alone {}; α ≤ 1 refused: {refuses}",
            side(1),
            side(2)
        ),
    )
}

/// State evolution with `q = m` instead of `q = |m|` in every sector.
fn se_step_signed(s: &OverlapState, p: &SeParams) -> Res<OverlapState> {
    let mut full = s.to_full(p);
    for sec in full.w.iter_mut().chain(full.v.iter_mut()) {
        sec.q = sec.m;
    }
    let next = se_step_general(&full, p, None)?;
    Ok(OverlapState {
        m_w: [next.w[0].m, next.w[1].m],
        m_v: [next.v[0].m, next.v[1].m],
    })
}

fn c18() -> Res<Outcome> {
    const D: usize = 10000;
    const STEPS: usize = 15;
    let sigma = 0.8;
    let c = model(D, D, 1.0, sigma, GAUSS, COV_HIGH, 1);
    let p = SeParams::from_config(&c);
    let ds = generate_dataset(&c)?;
    // Nishimori-consistent start at overlap −a/(1+a): a Bayes estimate from a
    // weak side channel, with its sign flipped
    let a = 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let mut start = |w0: &[f64]| -> Vec<f64> {
        w0.iter()
            .map(|&w| -(a * w + a.sqrt() * rng.sample::<f64, _>(StandardNormal)) / (1.0 + a))
            .collect()
    };
    let (wx, wy) = (start(&ds.w0_x), start(&ds.w0_y));
    let mut state = AmpState::from_w_hat(&AmpParams::from_config(&c), wx, wy, D)?;
    for v in &mut state.views {
        v.sigma_w_hat.iter_mut().for_each(|s| *s = 1.0 / (1.0 + a));
    }
    let opts = AmpOptions {
        max_iters: STEPS,
        ..AmpOptions::default()
    };
    let amp = amp_run_from(state, &ds, &c, &opts)?;
    let t0 = &amp.trajectory[0];
    let se = se_solve(
        &p,
        SeInit::Custom(OverlapState {
            m_w: t0.m_w,
            m_v: [0.0; 2],
        }),
        &SeOptions {
            max_iters: STEPS,
            tol: 0.0,
            ..SeOptions::default()
        },
    )?;
    let mut worst: f64 = 0.0;
    for (t, s) in amp.trajectory.iter().zip(&se.trajectory).skip(1) {
        for z in 0..2 {
            worst = worst.max((t.m_w[z] - s.m_w[z]).abs()).max((t.m_v[z] - s.m_v[z]).abs());
        }
    }
    let steps = amp.trajectory.len().min(se.trajectory.len()) - 1;
    let amp_end = amp.trajectory[steps].m_w[0];
    let se_end = se.trajectory[steps].m_w[0];
    let tracks = steps == STEPS && worst <= 0.05;

    // the q = m variant keeps the positive branch but has no mirror image
    let fixed = se_solve(&p, SeInit::Informative, &SeOptions::default())?.fixed_point;
    let mut pos = fixed;
    let mut neg = fixed.negated();
    let mut neg_ok = true;
    for _ in 0..200 {
        pos = se_step_signed(&pos, &p)?;
        match se_step_signed(&neg, &p) {
            Ok(s) if s.as_array().iter().all(|x| x.is_finite()) => neg = s,
            _ => {
                neg_ok = false;
                break;
            }
        }
    }
    let pos_dev = (pos.m_w[0] - fixed.m_w[0]).abs();
    let neg_dev = (neg.m_w[0] + fixed.m_w[0]).abs();
    let pathology = pos_dev < 1e-9 && (!neg_ok || neg_dev > 0.05);
    outcome(
        tracks && pathology,
        format!(
            "d={D}, σ={sigma}: max |AMP - SE| overlap {worst:.4} over {steps} iterations (m_w {amp_end:.4} vs {se_end:.4}); \
             q=m variant: positive branch drift {pos_dev:.1e}, mirror branch {}",
            if neg_ok { format!("drifts by {neg_dev:.3}") } else { "breaks down".to_string() }
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Res<Outcome>);

const CRITERIA: [Criterion; 18] = [
    (1, "theta_alg, strongly correlated Gaussian setting", c1),
    (2, "theta_alg at c_hat = 0.8", c2),
    (3, "theta_alg at perfect correlation", c3),
    (4, "theta_alg, sparse setting and single view", c4),
    (5, "theta_alg, weakly correlated setting", c5),
    (6, "theta_IT and spinodal, sparse setting", c6),
    (7, "free energy stationary at SE fixed points", c7),
    (8, "denoisers match the quadrature oracle", c8),
    (9, "general SE reduces to the Bayes-optimal SE", c9),
    (10, "eta_plus matches the SE Jacobian", c10),
    (11, "perfect correlation equals the stacked single view", c11),
    (12, "linearised AMP operators match dense matrices", c12),
    (13, "AMP tracks the SE fixed point", c13),
    (14, "hard phase: informed vs uninformed AMP", c14),
    (15, "linearised AMP transition", c15),
    (16, "PLS-Canonical transition and method ordering", c16),
    (17, "CCA transition and alpha <= 1 refusal", c17),
    (18, "AMP trajectory vs SE; q = m pathology", c18),
];

fn main() {
    set_blas_threads(1);
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    let start = Instant::now();
    for (id, name, check) in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        println!(
            "criterion {id:>2} {} — {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
        if !pass {
            failed.push(id);
        }
    }
    println!(
        "acceptance: {} failed {:?} in {:.0}s",
        failed.len(),
        failed,
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
