//! Rank transform of ordinal responses and ordinary least squares of
//! ranks on covariates, with residual diagnostics data.

use crate::datamodel::{DesignMatrix, OrdinalLevel};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Tie convention of the rank transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankConvention {
    /// r_1 = 1, r_{h+1} = r_h + n_h.
    Min,
    /// rank of level h = (count below) + (n_h + 1)/2.
    Mid,
}

/// Rank-transformed response.
#[derive(Debug, Clone, PartialEq)]
pub struct RankVector {
    pub ranks: Vec<f64>,
    pub convention: RankConvention,
}

/// OLS fit of ranks on covariates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankLinearFit {
    pub beta0: f64,
    pub betas: Vec<f64>,
    pub sigma2: f64,
    /// Standard errors, intercept first.
    pub coef_se: Vec<f64>,
    /// Two-sided p-values, intercept first.
    pub coef_p: Vec<f64>,
}

/// Rank transform of an ordinal sample under the given tie convention.
pub fn rank_transform(y: &[OrdinalLevel], convention: RankConvention) -> Result<RankVector> {
    if y.is_empty() {
        return Err(Error::Invalid("empty response".into()));
    }
    let k = y.iter().map(|l| l.value).max().unwrap();
    let mut counts = vec![0usize; k + 1];
    for l in y {
        counts[l.value] += 1;
    }
    let mut rank_of_level = vec![0.0; k + 1];
    let mut below = 0usize;
    for h in 1..=k {
        if counts[h] == 0 {
            continue;
        }
        rank_of_level[h] = match convention {
            RankConvention::Min => (below + 1) as f64,
            RankConvention::Mid => below as f64 + (counts[h] as f64 + 1.0) / 2.0,
        };
        below += counts[h];
    }
    Ok(RankVector {
        ranks: y.iter().map(|l| rank_of_level[l.value]).collect(),
        convention,
    })
}

/// OLS via QR; returns coefficients, residual variance, SEs and t-test
/// p-values (df = n − P − 1). `x` must not contain an intercept column.
pub fn fit_rank_linear(y: &[OrdinalLevel], x: &DesignMatrix) -> Result<RankLinearFit> {
    let ranks = rank_transform(y, RankConvention::Min)?;
    fit_ols(&ranks.ranks, x)
}

/// OLS of an arbitrary continuous response on `x` (intercept prepended).
pub fn fit_ols(response: &[f64], x: &DesignMatrix) -> Result<RankLinearFit> {
    if x.includes_intercept {
        return Err(Error::Invalid("design must not include an intercept column".into()));
    }
    let n = x.n();
    let p = x.p();
    if response.len() != n {
        return Err(Error::Dimension(format!("response length {} != n = {n}", response.len())));
    }
    if n <= p + 1 {
        return Err(Error::InsufficientData);
    }
    let mut xm = DMatrix::zeros(n, p + 1);
    for i in 0..n {
        xm[(i, 0)] = 1.0;
        for j in 0..p {
            xm[(i, j + 1)] = x.matrix[(i, j)];
        }
    }
    let r = DVector::from_column_slice(response);
    let qr = xm.clone().qr();
    let rmat = qr.r();
    let scale = rmat.diagonal().iter().fold(0.0f64, |a, d| a.max(d.abs()));
    for j in 0..=p {
        if rmat[(j, j)].abs() < 1e-10 * scale.max(1.0) {
            return Err(Error::SingularDesign);
        }
    }
    let mut qtr = r.clone();
    qr.q_tr_mul(&mut qtr);
    let coef = rmat
        .rows(0, p + 1)
        .solve_upper_triangular(&qtr.rows(0, p + 1).clone_owned())
        .ok_or(Error::SingularDesign)?;
    let fitted = &xm * &coef;
    let resid = &r - &fitted;
    let df = (n - p - 1) as f64;
    let sigma2 = resid.dot(&resid) / df;
    // (XᵀX)⁻¹ = R⁻¹ R⁻ᵀ from the QR factor.
    let rinv = rmat
        .rows(0, p + 1)
        .clone_owned()
        .try_inverse()
        .ok_or(Error::SingularDesign)?;
    let xtx_inv = &rinv * rinv.transpose();
    let tdist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut coef_se = Vec::with_capacity(p + 1);
    let mut coef_p = Vec::with_capacity(p + 1);
    for j in 0..=p {
        let se = (sigma2 * xtx_inv[(j, j)]).max(0.0).sqrt();
        coef_se.push(se);
        let t = if se > 0.0 { coef[j] / se } else { f64::INFINITY };
        let pval = if t.is_finite() { 2.0 * (1.0 - tdist.cdf(t.abs())) } else { 0.0 };
        coef_p.push(pval);
    }
    Ok(RankLinearFit {
        beta0: coef[0],
        betas: coef.iter().skip(1).copied().collect(),
        sigma2,
        coef_se,
        coef_p,
    })
}

/// Fitted values β₀ + Xβ.
pub fn predict_rank_linear(fit: &RankLinearFit, x: &DesignMatrix) -> Result<Vec<f64>> {
    if x.p() != fit.betas.len() {
        return Err(Error::Dimension(format!(
            "design has {} columns, fit expects {}",
            x.p(),
            fit.betas.len()
        )));
    }
    Ok((0..x.n())
        .map(|i| {
            fit.beta0
                + fit.betas.iter().enumerate().map(|(j, b)| b * x.matrix[(i, j)]).sum::<f64>()
        })
        .collect())
}

/// One row of QQ-plot data for OLS residuals.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsRow {
    pub index: usize,
    pub residual: f64,
    pub empirical_q: f64,
    pub theoretical_q: f64,
}

/// OLS residual QQ data: empirical residual quantiles against normal
/// quantiles at plotting positions (i − 0.5)/n, scaled by the residual SD.
pub fn residual_diagnostics(y_cont: &[f64], x: &DesignMatrix) -> Result<Vec<DiagnosticsRow>> {
    use statrs::distribution::Normal;
    let fit = fit_ols(y_cont, x)?;
    let fitted = predict_rank_linear(&fit, x)?;
    let residuals: Vec<f64> = y_cont.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    let n = residuals.len();
    let sd = {
        let mean = residuals.iter().sum::<f64>() / n as f64;
        (residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
    };
    let mut sorted: Vec<(usize, f64)> = residuals.iter().copied().enumerate().collect();
    sorted.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let normal = Normal::new(0.0, 1.0).unwrap();
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(pos, (index, residual))| DiagnosticsRow {
            index,
            residual,
            empirical_q: residual,
            theoretical_q: sd * normal.inverse_cdf((pos as f64 + 0.5) / n as f64),
        })
        .collect())
}
