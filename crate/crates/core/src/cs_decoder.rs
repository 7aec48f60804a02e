//! Per-slot sparse recovery over the shifted dictionary.
//!
//! The LASSO `min_x ½‖y − S̃x‖² + λ‖x‖₁` over complex `x` is solved with a
//! monotone accelerated proximal-gradient method: FISTA steps with complex
//! soft-thresholding, an objective test that rejects non-descending steps,
//! and a momentum restart whenever a step is rejected.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::codebook::ShiftedDictionary;
use crate::error::{CcsError, Result};
use crate::tree_code::{Candidate, SlotCandidateList};

/// Solver and regularization settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    /// Multiplier on the noise-calibrated universal threshold.
    pub lambda_scale: f64,
    pub max_iters: usize,
    /// Relative-change stopping threshold.
    pub tol: f64,
    /// Re-fit the selected support by least squares.
    pub debias: bool,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            lambda_scale: 1.0,
            max_iters: 2000,
            tol: 1e-4,
            debias: true,
        }
    }
}

impl LassoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_scale > 0.0 && self.lambda_scale.is_finite()) {
            return Err(CcsError::config("lasso.lambda_scale", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(CcsError::config("lasso.max_iters", "must be positive"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(CcsError::config("lasso.tol", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseEstimate {
    pub coefficients: Vec<Complex64>,
    /// `½‖y − S̃x‖² + λ‖x‖₁` at `coefficients`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[inline]
fn soft_threshold(z: Complex64, threshold: f64) -> Complex64 {
    // Most entries fall below the threshold; decide on the squared norm and
    // only take a square root for survivors.
    let sq = z.norm_sqr();
    if sq <= threshold * threshold {
        Complex64::new(0.0, 0.0)
    } else {
        let mag = sq.sqrt();
        z * ((mag - threshold) / mag)
    }
}

fn l1(x: &[Complex64]) -> f64 {
    x.iter()
        .filter(|z| z.re != 0.0 || z.im != 0.0)
        .map(|z| z.norm_sqr().sqrt())
        .sum()
}

fn residual_sq(y: &[Complex64], ax: &[Complex64]) -> f64 {
    y.iter().zip(ax).map(|(a, b)| (a - b).norm_sqr()).sum()
}

fn check_finite(v: &[Complex64], what: &'static str) -> Result<()> {
    if v.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(CcsError::NonFinite(what))
    }
}

/// LASSO objective at `x`.
pub fn objective(dict: &ShiftedDictionary, y: &[Complex64], x: &[Complex64], lambda: f64) -> f64 {
    let mut ax = vec![Complex64::new(0.0, 0.0); dict.num_rows()];
    dict.apply(x, &mut ax, &mut dict.workspace());
    0.5 * residual_sq(y, &ax) + lambda * l1(x)
}

/// Largest violation of the LASSO optimality conditions: with
/// `g = S̃ᴴ(y − S̃x)`, `|g_c − λ·x_c/|x_c||` on the support and
/// `max(|g_c| − λ, 0)` off it.
pub fn kkt_residual(dict: &ShiftedDictionary, y: &[Complex64], x: &[Complex64], lambda: f64) -> f64 {
    let mut ws = dict.workspace();
    let mut r = vec![Complex64::new(0.0, 0.0); dict.num_rows()];
    dict.apply(x, &mut r, &mut ws);
    r.iter_mut().zip(y).for_each(|(ri, yi)| *ri = yi - *ri);
    let mut g = vec![Complex64::new(0.0, 0.0); dict.width()];
    dict.adjoint(&r, &mut g, &mut ws);
    kkt_from_gradient(&g, x, lambda)
}

fn kkt_from_gradient(g: &[Complex64], x: &[Complex64], lambda: f64) -> f64 {
    g.iter()
        .zip(x)
        .map(|(gc, xc)| {
            let mag = xc.norm();
            if mag > 0.0 {
                (gc - xc * (lambda / mag)).norm()
            } else {
                (gc.norm() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

pub fn lasso_solve(
    dict: &ShiftedDictionary,
    y: &[Complex64],
    lambda: f64,
    config: &LassoConfig,
) -> Result<SparseEstimate> {
    config.validate()?;
    if y.len() != dict.num_rows() {
        return Err(CcsError::InvalidInput(format!(
            "observation has {} symbols, dictionary has {} rows",
            y.len(),
            dict.num_rows()
        )));
    }
    check_finite(y, "observation")?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(CcsError::InvalidInput(format!(
            "lambda must be positive, got {lambda}"
        )));
    }

    let width = dict.width();
    let rows = dict.num_rows();
    let zero = Complex64::new(0.0, 0.0);
    let step = 1.0 / dict.lipschitz();
    let threshold = lambda * step;
    let kkt_target = 10.0 * config.tol * lambda;
    let mut ws = dict.workspace();

    let mut x = vec![zero; width];
    let mut ax = vec![zero; rows];
    let mut v = vec![zero; width];
    let mut av = vec![zero; rows];
    let mut z = vec![zero; width];
    let mut az = vec![zero; rows];
    let mut grad = vec![zero; width];
    let mut resid = vec![zero; rows];

    let mut f_x = 0.5 * residual_sq(y, &ax);
    let mut t = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;
    let mut last_kkt_check = 0usize;

    for it in 1..=config.max_iters {
        iterations = it;
        // z = prox(v + step·S̃ᴴ(y − S̃v))
        resid
            .iter_mut()
            .zip(y.iter().zip(&av))
            .for_each(|(r, (yi, avi))| *r = yi - avi);
        dict.adjoint(&resid, &mut grad, &mut ws);
        for ((zc, vc), gc) in z.iter_mut().zip(&v).zip(&grad) {
            *zc = soft_threshold(vc + gc * step, threshold);
        }
        dict.apply(&z, &mut az, &mut ws);
        let f_z = 0.5 * residual_sq(y, &az) + lambda * l1(&z);

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let change;
        if f_z <= f_x {
            let beta = (t - 1.0) / t_next;
            let mut diff_sq = 0.0;
            let mut norm_sq = 0.0;
            for i in 0..width {
                let d = z[i] - x[i];
                diff_sq += d.norm_sqr();
                norm_sq += z[i].norm_sqr();
                v[i] = z[i] + d * beta;
                x[i] = z[i];
            }
            for i in 0..rows {
                av[i] = az[i] + (az[i] - ax[i]) * beta;
                ax[i] = az[i];
            }
            f_x = f_z;
            t = t_next;
            change = if norm_sq > 0.0 {
                (diff_sq / norm_sq).sqrt()
            } else {
                diff_sq.sqrt()
            };
        } else {
            // Rejected step: keep x, drop momentum.
            v.copy_from_slice(&x);
            av.copy_from_slice(&ax);
            t = 1.0;
            change = 0.0;
        }

        if change <= config.tol && (last_kkt_check == 0 || it - last_kkt_check >= 10) {
            last_kkt_check = it;
            resid
                .iter_mut()
                .zip(y.iter().zip(&ax))
                .for_each(|(r, (yi, axi))| *r = yi - axi);
            dict.adjoint(&resid, &mut grad, &mut ws);
            if kkt_from_gradient(&grad, &x, lambda) <= kkt_target {
                converged = true;
                break;
            }
        }
    }

    Ok(SparseEstimate {
        coefficients: x,
        objective: f_x,
        iterations,
        converged,
    })
}

/// Keeps the `k` largest-magnitude entries (ties to the lower index) and
/// zeroes the rest.
pub fn best_k_term(x: &[Complex64], k: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
    for i in best_k_support(x, k) {
        out[i] = x[i];
    }
    out
}

/// Indices kept by [`best_k_term`], by descending magnitude. Zero entries
/// are never selected.
pub fn best_k_support(x: &[Complex64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).filter(|&i| x[i].norm_sqr() > 0.0).collect();
    idx.sort_by(|&a, &b| x[b].norm_sqr().total_cmp(&x[a].norm_sqr()).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Universal threshold `λ = scale·σ·‖s̃‖·√(2 ln W)` for a dictionary of width
/// `W` whose columns all have norm `‖s̃‖ = √Ñ`.
pub fn universal_lambda(dict: &ShiftedDictionary, noise_std: f64, lambda_scale: f64) -> f64 {
    let column_norm = (dict.num_rows() as f64).sqrt();
    lambda_scale * noise_std * column_norm * (2.0 * (dict.width() as f64).ln()).sqrt()
}

/// Least-squares coefficients on a fixed support; `None` when the Gram
/// matrix is singular.
pub fn least_squares_on_support(
    dict: &ShiftedDictionary,
    y: &[Complex64],
    support: &[usize],
) -> Option<Vec<Complex64>> {
    if support.is_empty() {
        return Some(Vec::new());
    }
    let rows = dict.num_rows();
    let cols: Vec<Vec<Complex64>> = support
        .iter()
        .map(|&flat| {
            let (j, tau) = dict.split_index(flat);
            dict.column(j, tau).expect("support index in range")
        })
        .collect();
    let a = DMatrix::from_fn(rows, support.len(), |r, c| cols[c][r]);
    let b = DMatrix::from_fn(rows, 1, |r, _| y[r]);
    let gram = a.adjoint() * &a;
    let rhs = a.adjoint() * b;
    let chol = gram.cholesky()?;
    let sol = chol.solve(&rhs);
    let out: Vec<Complex64> = sol.iter().copied().collect();
    out.iter()
        .all(|z| z.re.is_finite() && z.im.is_finite())
        .then_some(out)
}

/// Output of [`decode_slot`].
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDecode {
    pub candidates: SlotCandidateList,
    pub converged: bool,
    pub iterations: usize,
}

/// LASSO, best-`K`-term selection and optional least-squares re-fit for one
/// slot. Candidates come out sorted by descending coefficient magnitude.
pub fn decode_slot(
    slot: usize,
    y_slot: &[Complex64],
    dict: &ShiftedDictionary,
    k: usize,
    noise_std: f64,
    config: &LassoConfig,
) -> Result<SlotDecode> {
    if k == 0 {
        check_finite(y_slot, "observation")?;
        return Ok(SlotDecode {
            candidates: SlotCandidateList::new(slot, Vec::new()),
            converged: true,
            iterations: 0,
        });
    }
    let lambda = universal_lambda(dict, noise_std, config.lambda_scale);
    let est = lasso_solve(dict, y_slot, lambda, config)?;
    let support = best_k_support(&est.coefficients, k);
    let mut coeffs: Vec<Complex64> = support.iter().map(|&i| est.coefficients[i]).collect();
    if config.debias {
        if let Some(refit) = least_squares_on_support(dict, y_slot, &support) {
            coeffs = refit;
        }
    }
    let mut entries: Vec<(usize, Candidate)> = support
        .iter()
        .zip(coeffs)
        .map(|(&flat, coeff)| {
            let (value, delay) = dict.split_index(flat);
            (
                flat,
                Candidate {
                    value: value as u32,
                    delay,
                    coeff,
                },
            )
        })
        .collect();
    entries.sort_by(|(fa, a), (fb, b)| b.coeff.norm().total_cmp(&a.coeff.norm()).then(fa.cmp(fb)));
    Ok(SlotDecode {
        candidates: SlotCandidateList::new(slot, entries.into_iter().map(|(_, c)| c).collect()),
        converged: est.converged,
        iterations: est.iterations,
    })
}
