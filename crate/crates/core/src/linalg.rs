//! Small dense-vector helpers and the symmetric eigen-solvers used by the
//! spectral baselines.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};

use crate::error::{Error, Result};
use crate::scores::{axpy, dot};

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Scales `x` to unit norm and returns the previous norm.
pub fn normalize(x: &mut [f64]) -> f64 {
    let n = norm(x);
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
    n
}

/// Restricts the BLAS backend to `n` threads. Sweeps already parallelise
/// across runs, and oversubscription slows the dense kernels down.
pub fn set_blas_threads(n: usize) {
    extern "C" {
        fn openblas_set_num_threads(n: std::os::raw::c_int);
    }
    // SAFETY: plain setter exported by the linked OpenBLAS.
    unsafe { openblas_set_num_threads(n.max(1) as std::os::raw::c_int) }
}

#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest algebraic eigenpair of a symmetric operator by Lanczos with full
/// reorthogonalisation. `start` must be non-zero.
pub fn lanczos_top<F>(apply: F, start: &[f64], max_iters: usize, tol: f64) -> Result<Eigenpair>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = start.len();
    let mut q = start.to_vec();
    if normalize(&mut q) == 0.0 {
        return Err(Error::Degenerate("zero start vector".into()));
    }
    let m_max = max_iters.min(n).max(1);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m_max);
    let mut alpha = Vec::with_capacity(m_max);
    let mut beta: Vec<f64> = Vec::with_capacity(m_max);
    let mut best: Option<(f64, Array1<f64>)> = None;
    let mut converged = false;

    for it in 0..m_max {
        let mut w = apply(&q)?;
        let a = dot(&w, &q);
        axpy(-a, &q, &mut w);
        if let Some(prev) = basis.last() {
            axpy(-beta[it - 1], prev, &mut w);
        }
        basis.push(q);
        alpha.push(a);
        // twice is enough
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                axpy(-c, b, &mut w);
            }
        }
        let bnorm = norm(&w);

        // the Ritz problem is cheap early on; later only check every 10 steps
        let last = it + 1 == m_max;
        if it < 20 || it % 10 == 9 || last || bnorm == 0.0 {
            let (theta, s) = tridiag_top(&alpha, &beta)?;
            let resid = (bnorm * s[s.len() - 1]).abs();
            best = Some((theta, s));
            let scale = theta.abs().max(f64::MIN_POSITIVE);
            if resid <= tol * scale || bnorm <= 1e-14 * scale {
                converged = true;
                break;
            }
        }
        if last {
            break;
        }
        beta.push(bnorm);
        q = w.iter().map(|v| v / bnorm).collect();
    }

    let (value, s) = best.expect("at least one iteration");
    let mut vector = vec![0.0; n];
    for (b, &c) in basis.iter().zip(s.iter()) {
        axpy(c, b, &mut vector);
    }
    normalize(&mut vector);
    Ok(Eigenpair {
        value,
        vector,
        iterations: basis.len(),
        converged,
    })
}

fn tridiag_top(alpha: &[f64], beta: &[f64]) -> Result<(f64, Array1<f64>)> {
    let m = alpha.len();
    let mut t = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        t[[i, i]] = alpha[i];
        if i + 1 < m {
            t[[i, i + 1]] = beta[i];
            t[[i + 1, i]] = beta[i];
        }
    }
    let (vals, vecs) = t.eigh(UPLO::Upper).map_err(|e| Error::Linalg(e.to_string()))?;
    let k = m - 1; // ascending order
    Ok((vals[k], vecs.column(k).to_owned()))
}

/// `A^{-1/2}` of a symmetric positive-definite matrix. Eigenvalues below
/// `1e-10·λ_max` are an error, never truncated.
pub fn sym_inv_sqrt(a: &Array2<f64>) -> Result<Array2<f64>> {
    let (vals, vecs) = a.eigh(UPLO::Upper).map_err(|e| Error::Linalg(e.to_string()))?;
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min < 1e-10 * max {
        return Err(Error::Precondition(format!(
            "covariance matrix is not invertible (eigenvalues in [{min:e}, {max:e}])"
        )));
    }
    let scaled = &vecs * &vals.mapv(|l| 1.0 / l.sqrt());
    Ok(scaled.dot(&vecs.t()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn lanczos_on_diagonal() {
        let d = [3.0, -5.0, 1.0, 2.5, 0.1];
        let apply = |x: &[f64]| Ok(x.iter().zip(&d).map(|(a, b)| a * b).collect());
        let e = lanczos_top(apply, &[1.0; 5], 50, 1e-12).unwrap();
        assert!((e.value - 3.0).abs() < 1e-12);
        assert!((e.vector[0].abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn inverse_square_root() {
        let a = array![[4.0, 1.0], [1.0, 3.0]];
        let r = sym_inv_sqrt(&a).unwrap();
        let back = r.dot(&a).dot(&r);
        for ((i, j), v) in back.indexed_iter() {
            let e = if i == j { 1.0 } else { 0.0 };
            assert!((v - e).abs() < 1e-12);
        }
        assert!(sym_inv_sqrt(&array![[1.0, 1.0], [1.0, 1.0]]).is_err());
    }
}
