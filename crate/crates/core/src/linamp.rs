//! Linearised AMP: the block operators `Γ_v`, `Γ_w` and their power iteration.

use crate::error::{Error, Result};
use crate::linalg::{norm, normalize};
use crate::model::{stream, Dataset, JointLatentPrior, ModelConfig, View, STREAM_LINAMP_INIT};
use crate::scores::{with_dataset_scores, ScoreOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sector {
    /// Acts on stacked `(v_X, v_Y) ∈ ℝ^{2d}`.
    V,
    /// Acts on stacked `(w_X, w_Y) ∈ ℝ^{n_X+n_Y}`.
    W,
}

/// Lazy block operator with its matrix diagonal removed.
pub struct BlockOperator<'a> {
    sector: Sector,
    ops: [&'a dyn ScoreOperator; 2],
    /// `coef[z][z']` multiplies the product feeding block `z` from block `z'`.
    coef: [[f64; 2]; 2],
    diag: Vec<f64>,
    split: usize,
}

struct Coefficients {
    /// `λ_z²/n_z · σ²_{v^z} σ²_{w^z}`
    own: [f64; 2],
    /// Γ_v: `λ_z²/n_z · c_v · σ²_{w^z}` (the source view's weight)
    v_cross: [f64; 2],
    /// Γ_w: `λ_Xλ_Y/√(n_X n_Y) · c_v · σ²_{w^z}` (the target view's weight)
    w_cross: [f64; 2],
}

fn coefficients(config: &ModelConfig) -> Coefficients {
    let lat: &JointLatentPrior = &config.latent;
    let mut c = Coefficients {
        own: [0.0; 2],
        v_cross: [0.0; 2],
        w_cross: [0.0; 2],
    };
    let root = (config.x.snr * config.y.snr) / ((config.x.n as f64) * (config.y.n as f64)).sqrt();
    for z in View::BOTH {
        let m = config.modality(z);
        let sw = m.w_prior.second_moment();
        let l2 = m.snr * m.snr / m.n as f64;
        c.own[z.index()] = l2 * lat.var(z) * sw;
        c.v_cross[z.index()] = l2 * lat.cov * sw;
        c.w_cross[z.index()] = root * lat.cov * sw;
    }
    c
}

fn check_ops(ops: [&dyn ScoreOperator; 2], config: &ModelConfig) -> Result<()> {
    for z in View::BOTH {
        let op = ops[z.index()];
        let n = config.modality(z).n;
        if op.n_rows() != n || op.n_cols() != config.d {
            return Err(Error::Dimension(format!(
                "score operator of view {z:?} is {}x{}, expected {n}x{}",
                op.n_rows(),
                op.n_cols(),
                config.d
            )));
        }
    }
    Ok(())
}

pub fn build_gamma_v<'a>(ops: [&'a dyn ScoreOperator; 2], config: &ModelConfig) -> Result<BlockOperator<'a>> {
    check_ops(ops, config)?;
    let c = coefficients(config);
    let mut diag = Vec::with_capacity(2 * config.d);
    for z in 0..2 {
        diag.extend(ops[z].col_sq_norms().into_iter().map(|s| c.own[z] * s));
    }
    Ok(BlockOperator {
        sector: Sector::V,
        ops,
        // the off-diagonal block feeding X is built from S_Y and vice versa
        coef: [[c.own[0], c.v_cross[1]], [c.v_cross[0], c.own[1]]],
        diag,
        split: config.d,
    })
}

pub fn build_gamma_w<'a>(ops: [&'a dyn ScoreOperator; 2], config: &ModelConfig) -> Result<BlockOperator<'a>> {
    check_ops(ops, config)?;
    let c = coefficients(config);
    let mut diag = Vec::with_capacity(config.x.n + config.y.n);
    for z in 0..2 {
        diag.extend(ops[z].row_sq_norms().into_iter().map(|s| c.own[z] * s));
    }
    Ok(BlockOperator {
        sector: Sector::W,
        ops,
        coef: [[c.own[0], c.w_cross[0]], [c.w_cross[1], c.own[1]]],
        diag,
        split: config.x.n,
    })
}

impl BlockOperator<'_> {
    pub fn sector(&self) -> Sector {
        self.sector
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Length of the X block.
    pub fn split(&self) -> usize {
        self.split
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_len(self.dim(), x.len())?;
        let (xx, xy) = x.split_at(self.split);
        let blocks = [xx, xy];
        let mut out = match self.sector {
            Sector::V => {
                // S_zᵀ S_z v_z, then mix
                let mut t = [Vec::new(), Vec::new()];
                for z in 0..2 {
                    t[z] = self.ops[z].apply_t(&self.ops[z].apply(blocks[z])?)?;
                }
                let mut out = Vec::with_capacity(self.dim());
                for z in 0..2 {
                    let (a, b) = (self.coef[z][z], self.coef[z][1 - z]);
                    out.extend(t[z].iter().zip(&t[1 - z]).map(|(p, q)| a * p + b * q));
                }
                out
            }
            Sector::W => {
                let u = [self.ops[0].apply_t(blocks[0])?, self.ops[1].apply_t(blocks[1])?];
                let mut out = Vec::with_capacity(self.dim());
                for z in 0..2 {
                    let (a, b) = (self.coef[z][z], self.coef[z][1 - z]);
                    let mixed: Vec<f64> = u[z].iter().zip(&u[1 - z]).map(|(p, q)| a * p + b * q).collect();
                    out.extend(self.ops[z].apply(&mixed)?);
                }
                out
            }
        };
        for ((o, &dg), &xi) in out.iter_mut().zip(&self.diag).zip(x) {
            *o -= dg * xi;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinampOptions {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for LinampOptions {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerResult {
    /// Unit-norm stacked vector.
    pub vector: Vec<f64>,
    /// Rayleigh quotient `xᵀΓx` at the last iterate.
    pub eigenvalue: f64,
    /// One Rayleigh quotient per iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Plain normalised power iteration; stops when the direction moves by less
/// than `tol`.
pub fn power_iterate(op: &BlockOperator<'_>, start: Vec<f64>, opts: &LinampOptions) -> Result<PowerResult> {
    let mut x = start;
    if normalize(&mut x) == 0.0 {
        return Err(Error::Degenerate("power iteration started from the zero vector".into()));
    }
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut eigenvalue = 0.0;
    while iterations < opts.max_iters {
        let mut y = op.apply(&x)?;
        eigenvalue = crate::scores::dot(&x, &y);
        history.push(eigenvalue);
        iterations += 1;
        if normalize(&mut y) == 0.0 {
            // x lies in the kernel; nothing further to learn
            break;
        }
        let change = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        x = y;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(PowerResult {
        vector: x,
        eigenvalue,
        history,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinampEstimate {
    pub w_x: Vec<f64>,
    pub w_y: Vec<f64>,
    pub v_x: Vec<f64>,
    pub v_y: Vec<f64>,
    /// Leading Rayleigh quotient of `Γ_w`.
    pub eigenvalue_w: f64,
    /// Leading Rayleigh quotient of `Γ_v`.
    pub eigenvalue_v: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LinampEstimate {
    pub fn w(&self, z: View) -> &[f64] {
        match z {
            View::X => &self.w_x,
            View::Y => &self.w_y,
        }
    }

    pub fn v(&self, z: View) -> &[f64] {
        match z {
            View::X => &self.v_x,
            View::Y => &self.v_y,
        }
    }
}

/// Flip the sign so the X block's largest-magnitude entry is positive.
fn fix_sign(v: &mut [f64], split: usize) {
    let lead = v[..split]
        .iter()
        .copied()
        .fold(0.0_f64, |m, x| if x.abs() > m.abs() { x } else { m });
    if lead < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub fn linamp_run(dataset: &Dataset, config: &ModelConfig, opts: &LinampOptions) -> Result<LinampEstimate> {
    config.validate()?;
    let mut rng = stream(config.seed, STREAM_LINAMP_INIT);
    let mut w0: Vec<f64> = (0..config.x.n).map(|_| config.x.w_prior.sample(&mut rng)).collect();
    w0.extend((0..config.y.n).map(|_| config.y.w_prior.sample(&mut rng)));
    let mut v_pairs: Vec<(f64, f64)> = (0..config.d).map(|_| config.latent.sample(&mut rng)).collect();
    let mut v0: Vec<f64> = v_pairs.iter().map(|p| p.0).collect();
    v0.extend(v_pairs.drain(..).map(|p| p.1));
    // an all-zero prior draw (sparse prior, tiny n) would stall the iteration
    for x in [&mut w0, &mut v0] {
        if norm(x) == 0.0 {
            x.iter_mut().for_each(|e| *e = 1.0);
        }
    }

    with_dataset_scores(dataset, config, |ops| {
        let gw = build_gamma_w(ops, config)?;
        let gv = build_gamma_v(ops, config)?;
        let mut rw = power_iterate(&gw, w0, opts)?;
        let mut rv = power_iterate(&gv, v0, opts)?;
        fix_sign(&mut rw.vector, gw.split());
        fix_sign(&mut rv.vector, gv.split());
        let w_y = rw.vector.split_off(gw.split());
        let v_y = rv.vector.split_off(gv.split());
        Ok(LinampEstimate {
            w_x: rw.vector,
            w_y,
            v_x: rv.vector,
            v_y,
            eigenvalue_w: rw.eigenvalue,
            eigenvalue_v: rv.eigenvalue,
            iterations: rw.iterations.max(rv.iterations),
            converged: rw.converged && rv.converged,
        })
    })
}
