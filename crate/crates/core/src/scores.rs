//! Fisher score matrices `S`, `R` and the fused products AMP needs.
//!
//! AMP only ever touches the scores through three products per sweep
//! direction: `Sᵀa`, `(S∘S)ᵀb` and `(S∘S − R)ᵀc` (and their row
//! counterparts). For the Gaussian channel `S∘S − R = 1/σ²` is constant, so
//! [`GaussianScores`] evaluates the first two on the fly from the data and the
//! third in closed form — no n×d score matrix is ever materialised.

use ndarray::{Array2, ArrayView2};

use crate::error::{check_len, Error, Result};
use crate::model::{score_matrices, Dataset, ModelConfig};

/// Results of one fused pass.
#[derive(Debug, Clone, Default)]
pub struct FusedProducts {
    /// `S a` or `Sᵀ a`.
    pub s: Vec<f64>,
    /// `(S∘S) b` or its transpose.
    pub ss: Vec<f64>,
    /// `(S∘S − R) c` or its transpose.
    pub gap: Vec<f64>,
}

pub trait ScoreOperator: Sync {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;

    /// Column-direction products (length `n_cols`).
    fn col_pass(&self, a: &[f64], b: &[f64], c: &[f64]) -> Result<FusedProducts>;

    /// Row-direction products (length `n_rows`).
    fn row_pass(&self, a: &[f64], b: &[f64], c: &[f64]) -> Result<FusedProducts>;

    /// `S x`.
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// `Sᵀ y`.
    fn apply_t(&self, y: &[f64]) -> Result<Vec<f64>>;

    /// `Σ_i S_ij²` for each column `j`.
    fn col_sq_norms(&self) -> Vec<f64>;

    /// `Σ_j S_ij²` for each row `i`.
    fn row_sq_norms(&self) -> Vec<f64>;
}

/// Hands `f` the score operators of both views: lazy for the Gaussian channel,
/// materialised otherwise.
pub fn with_dataset_scores<T>(
    dataset: &Dataset,
    config: &ModelConfig,
    f: impl FnOnce([&dyn ScoreOperator; 2]) -> Result<T>,
) -> Result<T> {
    match (config.x.channel.noise_var(), config.y.channel.noise_var()) {
        (Some(a), Some(b)) => {
            let gx = GaussianScores::new(dataset.x_data.view(), a)?;
            let gy = GaussianScores::new(dataset.y_data.view(), b)?;
            f([&gx, &gy])
        }
        _ => {
            let px = score_matrices(&dataset.x_data, &config.x.channel)?;
            let py = score_matrices(&dataset.y_data, &config.y.channel)?;
            f([&px, &py])
        }
    }
}

/// Explicit score pair, for custom channels and small problems.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePair {
    pub s: Array2<f64>,
    pub r: Array2<f64>,
}

impl ScorePair {
    pub fn new(s: Array2<f64>, r: Array2<f64>) -> Result<Self> {
        if s.dim() != r.dim() {
            return Err(Error::Dimension(format!(
                "score shapes differ: S is {:?}, R is {:?}",
                s.dim(),
                r.dim()
            )));
        }
        let s = s.as_standard_layout().into_owned();
        let r = r.as_standard_layout().into_owned();
        Ok(Self { s, r })
    }
}

fn rows_of(m: &Array2<f64>) -> impl Iterator<Item = &[f64]> {
    let cols = m.ncols().max(1);
    m.as_slice().expect("standard layout").chunks_exact(cols)
}

impl ScoreOperator for ScorePair {
    fn n_rows(&self) -> usize {
        self.s.nrows()
    }

    fn n_cols(&self) -> usize {
        self.s.ncols()
    }

    fn col_pass(&self, a: &[f64], b: &[f64], c: &[f64]) -> Result<FusedProducts> {
        let (n, d) = self.s.dim();
        for v in [a, b, c] {
            check_len(n, v.len())?;
        }
        let mut out = FusedProducts {
            s: vec![0.0; d],
            ss: vec![0.0; d],
            gap: vec![0.0; d],
        };
        for (i, (srow, rrow)) in rows_of(&self.s).zip(rows_of(&self.r)).enumerate() {
            let (ai, bi, ci) = (a[i], b[i], c[i]);
            for j in 0..d {
                let s = srow[j];
                let s2 = s * s;
                out.s[j] += s * ai;
                out.ss[j] += s2 * bi;
                out.gap[j] += (s2 - rrow[j]) * ci;
            }
        }
        Ok(out)
    }

    fn row_pass(&self, a: &[f64], b: &[f64], c: &[f64]) -> Result<FusedProducts> {
        let (n, d) = self.s.dim();
        for v in [a, b, c] {
            check_len(d, v.len())?;
        }
        let mut out = FusedProducts {
            s: Vec::with_capacity(n),
            ss: Vec::with_capacity(n),
            gap: Vec::with_capacity(n),
        };
        for (srow, rrow) in rows_of(&self.s).zip(rows_of(&self.r)) {
            let (mut p, mut q, mut g) = (0.0, 0.0, 0.0);
            for j in 0..d {
                let s = srow[j];
                let s2 = s * s;
                p += s * a[j];
                q += s2 * b[j];
                g += (s2 - rrow[j]) * c[j];
            }
            out.s.push(p);
            out.ss.push(q);
            out.gap.push(g);
        }
        Ok(out)
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.s.ncols(), x.len())?;
        Ok(rows_of(&self.s).map(|row| dot(row, x)).collect())
    }

    fn apply_t(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.s.nrows(), y.len())?;
        let mut out = vec![0.0; self.s.ncols()];
        for (row, &yi) in rows_of(&self.s).zip(y) {
            axpy(yi, row, &mut out);
        }
        Ok(out)
    }

    fn col_sq_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.s.ncols()];
        for row in rows_of(&self.s) {
            for (o, &s) in out.iter_mut().zip(row) {
                *o += s * s;
            }
        }
        out
    }

    fn row_sq_norms(&self) -> Vec<f64> {
        rows_of(&self.s).map(|row| dot(row, row)).collect()
    }
}

/// Scores of the Gaussian additive channel, computed from the data on demand:
/// `S = Z/σ²`, `R = S² − 1/σ²`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianScores<'a> {
    z: &'a [f64],
    rows: usize,
    cols: usize,
    inv_var: f64,
}

impl<'a> GaussianScores<'a> {
    pub fn new(data: ArrayView2<'a, f64>, noise_var: f64) -> Result<Self> {
        let (rows, cols) = data.dim();
        let z = data
            .to_slice()
            .ok_or_else(|| Error::Dimension("data matrix must be in standard (row-major) layout".into()))?;
        if !(noise_var > 0.0) {
            return Err(Error::InvalidParameter {
                name: "noise_var",
                value: noise_var,
                reason: "must be positive",
            });
        }
        Ok(Self {
            z,
            rows,
            cols,
            inv_var: 1.0 / noise_var,
        })
    }

    fn rows_iter(&self) -> impl Iterator<Item = &'a [f64]> {
        self.z.chunks_exact(self.cols.max(1)).take(self.rows)
    }
}

impl ScoreOperator for GaussianScores<'_> {
    fn n_rows(&self) -> usize {
        self.rows
    }

    fn n_cols(&self) -> usize {
        self.cols
    }

    fn col_pass(&self, a: &[f64], b: &[f64], c: &[f64]) -> Result<FusedProducts> {
        for v in [a, b, c] {
            check_len(self.rows, v.len())?;
        }
        let d = self.cols;
        let inv = self.inv_var;
        let mut s_out = vec![0.0; d];
        let mut ss_out = vec![0.0; d];
        for (i, row) in self.rows_iter().enumerate() {
            // fold the 1/σ² scalings into the per-row coefficients
            let ai = a[i] * inv;
            let bi = b[i] * inv * inv;
            for ((so, sso), &z) in s_out.iter_mut().zip(ss_out.iter_mut()).zip(row) {
                *so += z * ai;
                *sso += z * z * bi;
            }
        }
        let g = c.iter().sum::<f64>() * inv;
        Ok(FusedProducts {
            s: s_out,
            ss: ss_out,
            gap: vec![g; d],
        })
    }

    fn row_pass(&self, a: &[f64], b: &[f64], c: &[f64]) -> Result<FusedProducts> {
        for v in [a, b, c] {
            check_len(self.cols, v.len())?;
        }
        let inv = self.inv_var;
        let mut s_out = Vec::with_capacity(self.rows);
        let mut ss_out = Vec::with_capacity(self.rows);
        for row in self.rows_iter() {
            let (mut p, mut q) = (0.0, 0.0);
            for ((&z, &aj), &bj) in row.iter().zip(a).zip(b) {
                p += z * aj;
                q += z * z * bj;
            }
            s_out.push(p * inv);
            ss_out.push(q * inv * inv);
        }
        let g = c.iter().sum::<f64>() * inv;
        Ok(FusedProducts {
            s: s_out,
            ss: ss_out,
            gap: vec![g; self.rows],
        })
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.cols, x.len())?;
        Ok(self.rows_iter().map(|row| dot(row, x) * self.inv_var).collect())
    }

    fn apply_t(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.rows, y.len())?;
        let mut out = vec![0.0; self.cols];
        for (row, &yi) in self.rows_iter().zip(y) {
            axpy(yi * self.inv_var, row, &mut out);
        }
        Ok(out)
    }

    fn col_sq_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for row in self.rows_iter() {
            for (o, &z) in out.iter_mut().zip(row) {
                *o += z * z;
            }
        }
        let s2 = self.inv_var * self.inv_var;
        out.iter_mut().for_each(|o| *o *= s2);
        out
    }

    fn row_sq_norms(&self) -> Vec<f64> {
        let s2 = self.inv_var * self.inv_var;
        self.rows_iter().map(|row| dot(row, row) * s2).collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four independent accumulators let the compiler vectorise the reduction
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
