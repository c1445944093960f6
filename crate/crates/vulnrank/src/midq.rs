//! Mid-quantile machinery: unconditional mid-CDF/mid-quantile, mixed-kernel
//! conditional CDF estimation, conditional mid-quantile regression fit by
//! the quadratic loss ψ_n, prediction, and standard errors.

use crate::datamodel::{Dataset, DesignMatrix};
use crate::error::{Error, Result};
use crate::optim::{nelder_mead_multistart, NmOptions};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Discrete distribution summary: support, mass, and mid-CDF
/// G(y_h) = F(y_h) − p_h/2.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MidDistribution {
    pub support: Vec<f64>,
    pub mass: Vec<f64>,
    pub mid_cdf: Vec<f64>,
}

/// Empirical mid-CDF of a sample.
pub fn mid_cdf(sample: &[f64]) -> Result<MidDistribution> {
    if sample.is_empty() {
        return Err(Error::InsufficientData);
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let n = sorted.len() as f64;
    let mut support = Vec::new();
    let mut mass = Vec::new();
    for &v in &sorted {
        if support.last() == Some(&v) {
            *mass.last_mut().unwrap() += 1.0 / n;
        } else {
            support.push(v);
            mass.push(1.0 / n);
        }
    }
    let mut cum = 0.0;
    let mid_cdf = mass
        .iter()
        .map(|&p| {
            let g = cum + p / 2.0;
            cum += p;
            g
        })
        .collect();
    Ok(MidDistribution { support, mass, mid_cdf })
}

/// Mid-quantile H(prob): piecewise-linear interpolation of (π_h, y_h),
/// clamped to the extreme atoms outside [π_1, π_k]. Returns the value and
/// whether the clamp (censoring) applied.
pub fn mid_quantile(dist: &MidDistribution, prob: f64) -> Result<(f64, bool)> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::Invalid(format!("prob {prob} outside (0,1)")));
    }
    let pi = &dist.mid_cdf;
    let y = &dist.support;
    let k = y.len();
    if prob <= pi[0] {
        return Ok((y[0], prob < pi[0]));
    }
    if prob >= pi[k - 1] {
        return Ok((y[k - 1], prob > pi[k - 1]));
    }
    let h = pi.partition_point(|&v| v < prob) - 1;
    let gamma = (prob - pi[h]) / (pi[h + 1] - pi[h]);
    Ok(((1.0 - gamma) * y[h] + gamma * y[h + 1], false))
}

/// Per-column smoothing kernel for the mixed product kernel.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKernel {
    /// Continuous column: Gaussian with the given bandwidth (> 0).
    Gaussian { bandwidth: f64 },
    /// Discrete (ordered) column: geometric kernel λ^|distance|, λ in [0,1).
    Geometric { lambda: f64 },
}

/// Product kernel over the dataset's covariate columns, in column order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelConfig {
    pub columns: Vec<ColumnKernel>,
}

/// Silverman's rule-of-thumb bandwidth 1.06·σ̂·n^{−1/5}.
pub fn silverman_bandwidth(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    1.06 * sd * n.powf(-0.2)
}

pub const DEFAULT_LAMBDA: f64 = 0.3;

impl KernelConfig {
    /// Default config for a dataset: Silverman Gaussian bandwidths on
    /// continuous columns, geometric kernel with the given λ on discrete
    /// ones.
    pub fn for_dataset(data: &Dataset, lambda: f64) -> Result<Self> {
        let (coords, discrete) = data.kernel_coordinates();
        let columns = discrete
            .iter()
            .enumerate()
            .map(|(j, &d)| {
                if d {
                    Ok(ColumnKernel::Geometric { lambda })
                } else {
                    let col: Vec<f64> = coords.iter().map(|row| row[j]).collect();
                    let bandwidth = silverman_bandwidth(&col);
                    if bandwidth <= 0.0 {
                        return Err(Error::Invalid(format!(
                            "constant continuous column {j}: zero bandwidth"
                        )));
                    }
                    Ok(ColumnKernel::Gaussian { bandwidth })
                }
            })
            .collect::<Result<_>>()?;
        let cfg = Self { columns };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.columns {
            match *c {
                ColumnKernel::Gaussian { bandwidth } if bandwidth <= 0.0 => {
                    return Err(Error::Invalid(format!("bandwidth {bandwidth} must be > 0")))
                }
                ColumnKernel::Geometric { lambda } if !(0.0..1.0).contains(&lambda) => {
                    return Err(Error::Invalid(format!("lambda {lambda} outside [0,1)")))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Unnormalized product-kernel weight between two covariate points.
    pub fn weight(&self, a: &[f64], b: &[f64]) -> f64 {
        self.columns
            .iter()
            .zip(a.iter().zip(b))
            .map(|(k, (&u, &v))| match *k {
                ColumnKernel::Gaussian { bandwidth } => {
                    (-0.5 * ((u - v) / bandwidth).powi(2)).exp()
                }
                ColumnKernel::Geometric { lambda } => {
                    let d = (u - v).abs();
                    if d == 0.0 {
                        1.0
                    } else {
                        lambda.powf(d)
                    }
                }
            })
            .product()
    }
}

/// Link h mapping the response scale to the linear-predictor scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Log,
}

impl Link {
    pub fn apply(self, y: f64) -> f64 {
        match self {
            Link::Identity => y,
            Link::Log => y.ln(),
        }
    }

    pub fn inverse(self, u: f64) -> f64 {
        match self {
            Link::Identity => u,
            Link::Log => u.exp(),
        }
    }

    /// d h⁻¹(u) / du.
    pub fn inverse_deriv(self, u: f64) -> f64 {
        match self {
            Link::Identity => 1.0,
            Link::Log => u.exp(),
        }
    }
}

/// Fitted conditional mid-quantile regression at level `p`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MidQuantileFit {
    pub p: f64,
    /// Coefficients, intercept first.
    pub betas: Vec<f64>,
    pub link: Link,
    pub kernel: KernelConfig,
    pub objective_value: f64,
    pub converged: bool,
}

/// Kernel-weighted conditional ECDF F̂(y | x) at covariate point `x`
/// (kernel coordinates, one entry per dataset column).
pub fn conditional_cdf(train: &Dataset, x: &[f64], y: f64, kernel: &KernelConfig) -> Result<f64> {
    let (coords, _) = train.kernel_coordinates();
    if x.len() != train.columns.len() {
        return Err(Error::Dimension(format!(
            "point has {} coordinates, dataset has {} columns",
            x.len(),
            train.columns.len()
        )));
    }
    kernel.validate()?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (row, resp) in coords.iter().zip(&train.responses) {
        let w = kernel.weight(row, x);
        den += w;
        if (resp.value as f64) <= y {
            num += w;
        }
    }
    if den <= 0.0 {
        return Err(Error::EmptyNeighborhood);
    }
    Ok(num / den)
}

/// Conditional mid-CDF values at every response support point for one
/// covariate point, plus the support itself.
fn conditional_mid_cdf_profile(
    train: &Dataset,
    x: &[f64],
    kernel: &KernelConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dist = mid_cdf(&train.responses.iter().map(|l| l.value as f64).collect::<Vec<_>>())?;
    let mut g = Vec::with_capacity(dist.support.len());
    let mut prev_f = 0.0;
    for &z in &dist.support {
        let f = conditional_cdf(train, x, z, kernel)?;
        g.push(f - (f - prev_f) / 2.0);
        prev_f = f;
    }
    Ok((dist.support, g))
}

/// Conditional mid-CDF Ĝ(y | x) = F̂ − m̂/2, with monotone linear
/// interpolation between support points and constant clamping outside.
pub fn conditional_mid_cdf(
    train: &Dataset,
    x: &[f64],
    y: f64,
    kernel: &KernelConfig,
) -> Result<f64> {
    let (support, g) = conditional_mid_cdf_profile(train, x, kernel)?;
    Ok(interpolate_clamped(&support, &g, y))
}

/// Linear interpolation over (zs, g) knots, constant outside the range.
fn interpolate_clamped(zs: &[f64], g: &[f64], v: f64) -> f64 {
    let m = zs.len();
    if v <= zs[0] {
        return g[0];
    }
    if v >= zs[m - 1] {
        return g[m - 1];
    }
    let j = zs.partition_point(|&z| z < v) - 1;
    let t = (v - zs[j]) / (zs[j + 1] - zs[j]);
    g[j] * (1.0 - t) + g[j + 1] * t
}

/// Linear interpolation over (zs, g) knots, extrapolating the boundary
/// segments outside the range. Used inside the fitting objective so the
/// loss keeps a gradient when the linear predictor leaves the support.
fn interpolate_extrapolated(zs: &[f64], g: &[f64], v: f64) -> f64 {
    let m = zs.len();
    if m == 1 {
        return g[0];
    }
    let j = (zs.partition_point(|&z| z <= v).max(1) - 1).min(m - 2);
    let t = (v - zs[j]) / (zs[j + 1] - zs[j]);
    g[j] * (1.0 - t) + g[j + 1] * t
}

/// Segment slope dĜ/dy of the extrapolated interpolation at v.
fn interpolation_slope(zs: &[f64], g: &[f64], v: f64) -> f64 {
    let m = zs.len();
    if m == 1 {
        return 0.0;
    }
    let j = (zs.partition_point(|&z| z <= v).max(1) - 1).min(m - 2);
    (g[j + 1] - g[j]) / (zs[j + 1] - zs[j])
}

/// Per-row conditional mid-CDF profiles: response support and an n × k
/// matrix of Ĝ values, each row evaluated at that row's own covariates.
fn midcdf_matrix(train: &Dataset, kernel: &KernelConfig) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    kernel.validate()?;
    let (coords, _) = train.kernel_coordinates();
    let n = train.n();
    let y: Vec<f64> = train.responses.iter().map(|l| l.value as f64).collect();
    let dist = mid_cdf(&y)?;
    let zs = dist.support;
    let mut g_rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut wsum = 0.0;
        let weights: Vec<f64> = coords
            .iter()
            .map(|row| {
                let w = kernel.weight(row, &coords[i]);
                wsum += w;
                w
            })
            .collect();
        if wsum <= 0.0 {
            return Err(Error::EmptyNeighborhood);
        }
        let mut g = Vec::with_capacity(zs.len());
        let mut prev_f = 0.0;
        for &z in &zs {
            let f: f64 = weights
                .iter()
                .zip(&y)
                .filter(|(_, &yi)| yi <= z)
                .map(|(w, _)| w)
                .sum::<f64>()
                / wsum;
            g.push(f - (f - prev_f) / 2.0);
            prev_f = f;
        }
        g_rows.push(g);
    }
    Ok((zs, g_rows))
}

const MIDQR_RESTARTS: usize = 6; // initial start + 5 jittered
const MIDQR_JITTER_SD: f64 = 0.3;
const MIDQR_JITTER_SEED: u64 = 12345;

fn midqr_objective<'a>(
    x: &'a DMatrix<f64>,
    zs: &'a [f64],
    g_rows: &'a [Vec<f64>],
    p: f64,
    link: Link,
) -> impl Fn(&[f64]) -> f64 + 'a {
    let n = x.nrows();
    move |beta: &[f64]| {
        let mut total = 0.0;
        for i in 0..n {
            let eta: f64 = beta.iter().enumerate().map(|(j, b)| b * x[(i, j)]).sum();
            let pred = link.inverse(eta);
            if !pred.is_finite() {
                return 1e12;
            }
            let gv = interpolate_extrapolated(zs, &g_rows[i], pred);
            total += (p - gv).powi(2);
        }
        total / n as f64
    }
}

/// Fit conditional mid-quantile regression at level `p` by minimizing
/// ψ_n(β; p) = n⁻¹ Σ (p − Ĝ_i(h⁻¹(x_iᵀβ)))² with a multi-start simplex.
/// `x` must include an intercept column; the kernel runs on `train`'s raw
/// covariate columns.
pub fn fit_midqr(
    train: &Dataset,
    x: &DesignMatrix,
    p: f64,
    kernel: &KernelConfig,
    link: Link,
) -> Result<MidQuantileFit> {
    if !x.includes_intercept {
        return Err(Error::Invalid("design must include an intercept column".into()));
    }
    if x.n() != train.n() {
        return Err(Error::Dimension(format!("design rows {} != n = {}", x.n(), train.n())));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Invalid(format!("quantile level {p} outside (0,1)")));
    }
    if train.n() <= x.p() {
        return Err(Error::InsufficientData);
    }
    let (zs, g_rows) = midcdf_matrix(train, kernel)?;
    let y: Vec<f64> = train.responses.iter().map(|l| l.value as f64).collect();
    let pooled = mid_cdf(&y)?;
    let (target, _) = mid_quantile(&pooled, p)?;
    let mut beta0 = vec![0.0; x.p()];
    beta0[0] = link.apply(target.max(1e-6));

    let obj = midqr_objective(&x.matrix, &zs, &g_rows, p, link);
    let mut rng = ChaCha12Rng::seed_from_u64(MIDQR_JITTER_SEED);
    let res = nelder_mead_multistart(
        &obj,
        &beta0,
        NmOptions::default(),
        MIDQR_RESTARTS,
        MIDQR_JITTER_SD,
        &mut rng,
    );
    Ok(MidQuantileFit {
        p,
        betas: res.x,
        link,
        kernel: kernel.clone(),
        objective_value: res.fval,
        converged: res.converged,
    })
}

/// Rowwise predictions h⁻¹(xᵀβ).
pub fn predict_midqr(fit: &MidQuantileFit, x: &DesignMatrix) -> Result<Vec<f64>> {
    if x.p() != fit.betas.len() {
        return Err(Error::Dimension(format!(
            "design has {} columns, fit expects {}",
            x.p(),
            fit.betas.len()
        )));
    }
    Ok((0..x.n())
        .map(|i| {
            let eta: f64 =
                fit.betas.iter().enumerate().map(|(j, b)| b * x.matrix[(i, j)]).sum();
            fit.link.inverse(eta)
        })
        .collect())
}

/// Standard-error method for [`midqr_se`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeMethod {
    Kernel,
    Bootstrap,
}

/// Default bootstrap replicate count.
pub const DEFAULT_BOOTSTRAP_B: usize = 200;

/// Standard errors with per-coordinate censoring flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeEstimate {
    pub se: Vec<f64>,
    pub censored: Vec<bool>,
    pub method: SeMethod,
    /// Rows whose quantile level fell outside the row's mid-CDF range
    /// (kernel method only).
    pub censored_rows: usize,
}

/// Standard errors for a mid-quantile fit: sandwich covariance from the
/// curvature of ψ_n (kernel method) or resampling SD (bootstrap).
pub fn midqr_se(
    fit: &MidQuantileFit,
    train: &Dataset,
    x: &DesignMatrix,
    method: SeMethod,
    b: usize,
    seed: u64,
) -> Result<SeEstimate> {
    match method {
        SeMethod::Kernel => kernel_se(fit, train, x),
        SeMethod::Bootstrap => {
            if b < 50 {
                return Err(Error::Invalid(format!("bootstrap B = {b} must be >= 50")));
            }
            bootstrap_se(fit, train, x, b, seed)
        }
    }
}

fn kernel_se(fit: &MidQuantileFit, train: &Dataset, x: &DesignMatrix) -> Result<SeEstimate> {
    let (zs, g_rows) = midcdf_matrix(train, &fit.kernel)?;
    let q = fit.betas.len();
    let n = train.n();
    let obj = midqr_objective(&x.matrix, &zs, &g_rows, fit.p, fit.link);

    // A: finite-difference Hessian of ψ_n at the optimum.
    let mut a = DMatrix::zeros(q, q);
    let f0 = obj(&fit.betas);
    let steps: Vec<f64> = fit.betas.iter().map(|v| 1e-4 * v.abs().max(1.0)).collect();
    let mut t = fit.betas.clone();
    for i in 0..q {
        for j in i..q {
            let (hi, hj) = (steps[i], steps[j]);
            let val = if i == j {
                t[i] = fit.betas[i] + hi;
                let fp = obj(&t);
                t[i] = fit.betas[i] - hi;
                let fm = obj(&t);
                t[i] = fit.betas[i];
                (fp - 2.0 * f0 + fm) / (hi * hi)
            } else {
                t[i] += hi;
                t[j] += hj;
                let fpp = obj(&t);
                t[j] = fit.betas[j] - hj;
                let fpm = obj(&t);
                t[i] = fit.betas[i] - hi;
                t[j] = fit.betas[j] + hj;
                let fmp = obj(&t);
                t[j] = fit.betas[j] - hj;
                let fmm = obj(&t);
                t[i] = fit.betas[i];
                t[j] = fit.betas[j];
                (fpp - fpm - fmp + fmm) / (4.0 * hi * hj)
            };
            a[(i, j)] = val;
            a[(j, i)] = val;
        }
    }

    // B: mean outer product of per-row objective gradients; rows whose p
    // lies outside the row's mid-CDF range are censored (zero slope).
    let mut bm = DMatrix::zeros(q, q);
    let mut censored_rows = 0;
    let mut row_censored = vec![false; n];
    for i in 0..n {
        let eta: f64 = fit.betas.iter().enumerate().map(|(j, c)| c * x.matrix[(i, j)]).sum();
        let pred = fit.link.inverse(eta);
        let g = &g_rows[i];
        let censored = fit.p < g[0] || fit.p > g[g.len() - 1];
        if censored {
            censored_rows += 1;
            row_censored[i] = true;
        }
        let gv = interpolate_clamped(&zs, g, pred);
        let slope = if censored { 0.0 } else { interpolation_slope(&zs, g, pred) };
        let scale = -2.0 * (fit.p - gv) * slope * fit.link.inverse_deriv(eta);
        let s = DVector::from_fn(q, |j, _| scale * x.matrix[(i, j)]);
        bm += &s * s.transpose();
    }
    bm /= n as f64;

    let (se, mut censored) = match a.clone().lu().try_inverse() {
        Some(ainv) => {
            let v = (&ainv * &bm * &ainv) / n as f64;
            let se: Vec<f64> = (0..q).map(|j| v[(j, j)].max(0.0).sqrt()).collect();
            (se, vec![false; q])
        }
        None => (vec![f64::NAN; q], vec![true; q]),
    };
    // Flag coordinates whose rows contributed censored observations.
    for j in 0..q {
        if (0..n).any(|i| row_censored[i] && x.matrix[(i, j)] != 0.0) {
            censored[j] = true;
        }
    }
    Ok(SeEstimate { se, censored, method: SeMethod::Kernel, censored_rows })
}

fn bootstrap_se(
    fit: &MidQuantileFit,
    train: &Dataset,
    x: &DesignMatrix,
    b: usize,
    seed: u64,
) -> Result<SeEstimate> {
    let n = train.n();
    let q = fit.betas.len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut draws: Vec<Vec<f64>> = Vec::with_capacity(b);
    for _ in 0..b {
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let sub_train = train.subset(&idx)?;
        let sub_x = x.subset(&idx)?;
        if let Ok(refit) = fit_midqr(&sub_train, &sub_x, fit.p, &fit.kernel, fit.link) {
            draws.push(refit.betas);
        }
    }
    if draws.len() < 2 {
        return Err(Error::InsufficientData);
    }
    let m = draws.len() as f64;
    let se = (0..q)
        .map(|j| {
            let mean = draws.iter().map(|d| d[j]).sum::<f64>() / m;
            (draws.iter().map(|d| (d[j] - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
        })
        .collect();
    Ok(SeEstimate { se, censored: vec![false; q], method: SeMethod::Bootstrap, censored_rows: 0 })
}

/// Quantile check loss ϱ_τ(u) = u·(τ − I(u < 0)).
pub fn check_loss(u: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Invalid(format!("tau {tau} outside (0,1)")));
    }
    Ok(u * (tau - if u < 0.0 { 1.0 } else { 0.0 }))
}

/// Empirical τ-quantile as the minimizer of Σ ϱ_τ(y_i − q) over q: the
/// smallest order statistic whose ECDF reaches τ.
pub fn check_loss_quantile(sample: &[f64], tau: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InsufficientData);
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Invalid(format!("tau {tau} outside (0,1)")));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let n = sorted.len() as f64;
    let idx = (tau * n).ceil() as usize;
    Ok(sorted[idx.max(1) - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{encode_design, Column, OrdinalLevel};
    use approx::assert_abs_diff_eq;

    fn levels(vals: &[usize], k: usize) -> Vec<OrdinalLevel> {
        vals.iter().map(|&v| OrdinalLevel::new(v, k).unwrap()).collect()
    }

    #[test]
    fn mid_cdf_single_atom() {
        let d = mid_cdf(&[5.0]).unwrap();
        assert_eq!(d.support, vec![5.0]);
        assert_eq!(d.mass, vec![1.0]);
        assert_eq!(d.mid_cdf, vec![0.5]);
    }

    #[test]
    fn mid_cdf_two_atoms() {
        let d = mid_cdf(&[1.0, 1.0, 2.0, 2.0]).unwrap();
        assert_eq!(d.mid_cdf, vec![0.25, 0.75]);
    }

    #[test]
    fn mid_cdf_three_atoms() {
        let d = mid_cdf(&[1.0, 2.0, 2.0, 3.0]).unwrap();
        let expect = [0.125, 0.5, 0.875];
        for (g, e) in d.mid_cdf.iter().zip(expect) {
            assert_abs_diff_eq!(g, &e, epsilon = 1e-12);
        }
    }

    #[test]
    fn mid_cdf_matches_ecdf_minus_half_mass() {
        let sample = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0];
        let d = mid_cdf(&sample).unwrap();
        let n = sample.len() as f64;
        for (h, &y) in d.support.iter().enumerate() {
            let f = sample.iter().filter(|&&v| v <= y).count() as f64 / n;
            assert_abs_diff_eq!(d.mid_cdf[h], f - d.mass[h] / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn mid_quantile_interpolates() {
        let d = mid_cdf(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(d.mid_cdf, vec![0.125, 0.375, 0.625, 0.875]);
        let (v, censored) = mid_quantile(&d, 0.5).unwrap();
        assert_abs_diff_eq!(v, 2.5, epsilon = 1e-12);
        assert!(!censored);
    }

    #[test]
    fn mid_quantile_hits_knots() {
        let d = mid_cdf(&[1.0, 2.0, 2.0, 3.0, 7.0]).unwrap();
        for (h, &pi) in d.mid_cdf.iter().enumerate() {
            let (v, _) = mid_quantile(&d, pi).unwrap();
            assert_abs_diff_eq!(v, d.support[h], epsilon = 1e-12);
        }
    }

    #[test]
    fn mid_quantile_clamps_and_flags() {
        let d = mid_cdf(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let (lo, c_lo) = mid_quantile(&d, 0.01).unwrap();
        assert_eq!((lo, c_lo), (1.0, true));
        let (hi, c_hi) = mid_quantile(&d, 0.99).unwrap();
        assert_eq!((hi, c_hi), (4.0, true));
        assert!(mid_quantile(&d, 0.0).is_err());
        assert!(mid_quantile(&d, 1.0).is_err());
    }

    fn grouped_dataset(y: &[usize], groups: &[u8], k: usize) -> Dataset {
        Dataset::new(
            levels(y, k),
            vec![("g".into(), Column::Binary(groups.to_vec()))],
        )
        .unwrap()
    }

    #[test]
    fn conditional_cdf_degenerate_kernel_is_group_ecdf() {
        let ds = grouped_dataset(&[1, 1, 2, 2, 3, 3, 3, 3], &[0, 0, 0, 0, 1, 1, 1, 1], 3);
        let kernel = KernelConfig { columns: vec![ColumnKernel::Geometric { lambda: 0.0 }] };
        assert_abs_diff_eq!(
            conditional_cdf(&ds, &[0.0], 1.0, &kernel).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            conditional_cdf(&ds, &[0.0], 2.0, &kernel).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            conditional_cdf(&ds, &[1.0], 2.0, &kernel).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn conditional_cdf_lambda_near_one_pools() {
        let ds = grouped_dataset(&[1, 1, 2, 3, 3, 3], &[0, 0, 0, 1, 1, 1], 3);
        let kernel = KernelConfig { columns: vec![ColumnKernel::Geometric { lambda: 0.999 }] };
        let pooled = 2.0 / 6.0;
        let v = conditional_cdf(&ds, &[0.0], 1.0, &kernel).unwrap();
        assert!((v - pooled).abs() < 1e-2, "v = {v}");
    }

    #[test]
    fn conditional_cdf_bounds() {
        let ds = grouped_dataset(&[1, 2, 3], &[0, 1, 0], 3);
        let kernel = KernelConfig { columns: vec![ColumnKernel::Geometric { lambda: 0.5 }] };
        assert_eq!(conditional_cdf(&ds, &[0.0], 0.5, &kernel).unwrap(), 0.0);
        assert_eq!(conditional_cdf(&ds, &[0.0], 3.0, &kernel).unwrap(), 1.0);
    }

    #[test]
    fn conditional_mid_cdf_group_oracle() {
        let ds = grouped_dataset(&[1, 1, 2, 2, 3, 3], &[0, 0, 0, 0, 1, 1], 3);
        let kernel = KernelConfig { columns: vec![ColumnKernel::Geometric { lambda: 0.0 }] };
        assert_abs_diff_eq!(
            conditional_mid_cdf(&ds, &[0.0], 1.0, &kernel).unwrap(),
            0.25,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            conditional_mid_cdf(&ds, &[0.0], 2.0, &kernel).unwrap(),
            0.75,
            epsilon = 1e-12
        );
    }

    #[test]
    fn conditional_mid_cdf_below_cdf_with_mass() {
        let ds = grouped_dataset(&[1, 2, 2, 3, 1, 3], &[0, 0, 0, 1, 1, 1], 3);
        let kernel = KernelConfig { columns: vec![ColumnKernel::Geometric { lambda: 0.4 }] };
        for y in [1.0, 2.0, 3.0] {
            let f = conditional_cdf(&ds, &[0.0], y, &kernel).unwrap();
            let g = conditional_mid_cdf(&ds, &[0.0], y, &kernel).unwrap();
            assert!(g < f);
        }
    }

    #[test]
    fn conditional_mid_cdf_matches_independent_reweighting() {
        // Independent oracle: recompute weights, ECDF, and point masses by
        // direct summation for a mixed continuous + discrete design.
        let ds = Dataset::new(
            levels(&[1, 2, 3, 2, 1, 3, 2], 3),
            vec![
                ("x".into(), Column::Continuous(vec![0.1, -0.4, 1.2, 0.3, -0.9, 0.8, 0.0])),
                ("g".into(), Column::Binary(vec![0, 1, 0, 1, 0, 1, 0])),
            ],
        )
        .unwrap();
        let kernel = KernelConfig {
            columns: vec![
                ColumnKernel::Gaussian { bandwidth: 0.7 },
                ColumnKernel::Geometric { lambda: 0.3 },
            ],
        };
        let point = [0.2, 1.0];
        let xs = [0.1, -0.4, 1.2, 0.3, -0.9, 0.8, 0.0];
        let gs = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let ys = [1.0, 2.0, 3.0, 2.0, 1.0, 3.0, 2.0];
        let w: Vec<f64> = (0..7)
            .map(|i| {
                (-0.5 * ((xs[i] - point[0]) / 0.7f64).powi(2)).exp()
                    * 0.3f64.powf((gs[i] - point[1]).abs())
            })
            .collect();
        let wsum: f64 = w.iter().sum();
        for z in [1.0, 2.0, 3.0] {
            let f: f64 =
                w.iter().zip(ys).filter(|(_, y)| *y <= z).map(|(w, _)| w).sum::<f64>() / wsum;
            let f_prev: f64 = w
                .iter()
                .zip(ys)
                .filter(|(_, y)| *y <= z - 1.0)
                .map(|(w, _)| w)
                .sum::<f64>()
                / wsum;
            let expect = f - (f - f_prev) / 2.0;
            assert_abs_diff_eq!(
                conditional_mid_cdf(&ds, &point, z, &kernel).unwrap(),
                expect,
                epsilon = 1e-12
            );
        }
    }

    fn intercept_only_design(n: usize) -> DesignMatrix {
        let ds = Dataset::new(levels(&vec![1; n], 2), vec![]).unwrap();
        encode_design(&ds, true).unwrap()
    }

    #[test]
    fn intercept_only_fit_recovers_pooled_mid_quantile() {
        let y = [1, 1, 2, 3, 3, 4, 4, 4, 5, 5, 6, 7, 7, 8, 9, 10];
        let ds = Dataset::new(levels(&y, 10), vec![]).unwrap();
        let x = intercept_only_design(y.len());
        let kernel = KernelConfig { columns: vec![] };
        let pooled =
            mid_cdf(&y.iter().map(|&v| v as f64).collect::<Vec<_>>()).unwrap();
        for p in [0.2, 0.4, 0.5, 0.7] {
            let fit = fit_midqr(&ds, &x, p, &kernel, Link::Identity).unwrap();
            let (target, _) = mid_quantile(&pooled, p).unwrap();
            assert_abs_diff_eq!(fit.betas[0], target, epsilon = 1e-6);
        }
    }

    #[test]
    fn constant_response_predicts_constant() {
        let ds = grouped_dataset(&[2; 8], &[0, 1, 0, 1, 0, 1, 0, 1], 3);
        let x = encode_design(&ds, true).unwrap();
        let kernel = KernelConfig { columns: vec![ColumnKernel::Geometric { lambda: 0.3 }] };
        for p in [0.1, 0.5, 0.9] {
            let fit = fit_midqr(&ds, &x, p, &kernel, Link::Identity).unwrap();
            for v in predict_midqr(&fit, &x).unwrap() {
                assert_abs_diff_eq!(v, 2.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn saturated_groupwise_fit_matches_group_mid_quantiles() {
        // Each group's support is wide enough that p = 0.5 sits strictly
        // inside both group mid-CDF ranges.
        let ya = [1usize, 2, 3, 4, 5, 6, 7, 8, 9, 10];
        let yb = [2usize, 3, 3, 4, 5, 5, 6, 7, 8, 9];
        let y: Vec<usize> = ya.iter().chain(&yb).copied().collect();
        let groups: Vec<u8> = std::iter::repeat(0u8)
            .take(10)
            .chain(std::iter::repeat(1u8).take(10))
            .collect();
        let ds = grouped_dataset(&y, &groups, 10);
        let x = encode_design(&ds, true).unwrap();
        let kernel = KernelConfig { columns: vec![ColumnKernel::Geometric { lambda: 0.0 }] };
        let fit = fit_midqr(&ds, &x, 0.5, &kernel, Link::Identity).unwrap();
        let preds = predict_midqr(&fit, &x).unwrap();
        let da = mid_cdf(&ya.iter().map(|&v| v as f64).collect::<Vec<_>>()).unwrap();
        let db = mid_cdf(&yb.iter().map(|&v| v as f64).collect::<Vec<_>>()).unwrap();
        let (qa, _) = mid_quantile(&da, 0.5).unwrap();
        let (qb, _) = mid_quantile(&db, 0.5).unwrap();
        assert_abs_diff_eq!(preds[0], qa, epsilon = 1e-6);
        assert_abs_diff_eq!(preds[10], qb, epsilon = 1e-6);
    }

    #[test]
    fn fit_objective_not_worse_than_initialization() {
        let y = [1, 2, 3, 1, 2, 3, 2, 2, 1, 3, 3, 2];
        let ds = Dataset::new(
            levels(&y, 3),
            vec![(
                "x".into(),
                Column::Continuous(vec![
                    0.3, -0.2, 1.4, 0.0, 0.5, 1.1, 0.2, -0.6, -1.0, 0.9, 1.6, 0.4,
                ]),
            )],
        )
        .unwrap();
        let x = encode_design(&ds, true).unwrap();
        let kernel = KernelConfig::for_dataset(&ds, DEFAULT_LAMBDA).unwrap();
        let fit = fit_midqr(&ds, &x, 0.5, &kernel, Link::Identity).unwrap();
        let (zs, g_rows) = midcdf_matrix(&ds, &kernel).unwrap();
        let obj = midqr_objective(&x.matrix, &zs, &g_rows, 0.5, Link::Identity);
        let pooled = mid_cdf(&y.iter().map(|&v| v as f64).collect::<Vec<_>>()).unwrap();
        let (t, _) = mid_quantile(&pooled, 0.5).unwrap();
        let mut beta0 = vec![0.0; x.p()];
        beta0[0] = t;
        assert!(fit.objective_value <= obj(&beta0) + 1e-15);
    }

    #[test]
    fn predict_trivial_cases() {
        let kernel = KernelConfig { columns: vec![] };
        let base = MidQuantileFit {
            p: 0.5,
            betas: vec![2.5],
            link: Link::Identity,
            kernel: kernel.clone(),
            objective_value: 0.0,
            converged: true,
        };
        let x = intercept_only_design(3);
        assert_eq!(predict_midqr(&base, &x).unwrap(), vec![2.5, 2.5, 2.5]);
        let logfit = MidQuantileFit { betas: vec![0.0], link: Link::Log, ..base };
        assert_eq!(predict_midqr(&logfit, &x).unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn check_loss_definition() {
        assert_eq!(check_loss(0.0, 0.3).unwrap(), 0.0);
        assert_abs_diff_eq!(check_loss(1.0, 0.3).unwrap(), 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(check_loss(-1.0, 0.3).unwrap(), 0.7, epsilon = 1e-12);
        assert!(check_loss(1.0, 0.0).is_err());
    }

    #[test]
    fn check_loss_quantile_is_median() {
        let q = check_loss_quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5).unwrap();
        assert_eq!(q, 3.0);
        // Brute-force argmin over sample values agrees.
        let sample = [1.0, 2.0, 3.0, 4.0, 5.0];
        let mut best = (f64::INFINITY, 0.0);
        for &c in &sample {
            let loss: f64 = sample.iter().map(|&y| check_loss(y - c, 0.5).unwrap()).sum();
            if loss < best.0 {
                best = (loss, c);
            }
        }
        assert_eq!(best.1, q);
    }

    #[test]
    fn bootstrap_se_zero_for_constant_response() {
        let ds = grouped_dataset(&[2; 12], &[0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1], 3);
        let x = encode_design(&ds, true).unwrap();
        let kernel = KernelConfig { columns: vec![ColumnKernel::Geometric { lambda: 0.3 }] };
        let fit = fit_midqr(&ds, &x, 0.5, &kernel, Link::Identity).unwrap();
        let se = midqr_se(&fit, &ds, &x, SeMethod::Bootstrap, 50, 1).unwrap();
        assert!(se.se[0] < 1e-8, "intercept SE = {}", se.se[0]);
    }

    #[test]
    fn kernel_se_flags_censored_quantile() {
        // Heavy mass at the boundary atoms pushes the mid-CDF range well
        // inside (0,1), so extreme p falls outside it for every row.
        let ds = grouped_dataset(&[1, 1, 1, 2, 2, 3, 3, 3], &[0, 0, 1, 1, 0, 0, 1, 1], 3);
        let x = encode_design(&ds, true).unwrap();
        let kernel = KernelConfig { columns: vec![ColumnKernel::Geometric { lambda: 0.3 }] };
        let fit = fit_midqr(&ds, &x, 0.05, &kernel, Link::Identity).unwrap();
        let se = midqr_se(&fit, &ds, &x, SeMethod::Kernel, 0, 0).unwrap();
        assert!(se.censored_rows > 0);
        assert!(se.censored[0]);
    }

    #[test]
    fn bootstrap_requires_minimum_b() {
        let ds = grouped_dataset(&[1, 2, 3, 1, 2, 3], &[0, 1, 0, 1, 0, 1], 3);
        let x = encode_design(&ds, true).unwrap();
        let kernel = KernelConfig { columns: vec![ColumnKernel::Geometric { lambda: 0.3 }] };
        let fit = fit_midqr(&ds, &x, 0.5, &kernel, Link::Identity).unwrap();
        assert!(midqr_se(&fit, &ds, &x, SeMethod::Bootstrap, 10, 0).is_err());
    }
}
