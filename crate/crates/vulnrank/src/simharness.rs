//! Monte Carlo simulation harness: covariate generation, ordered-logit
//! response generation, per-iteration fitting of all models at all
//! quantile levels, and aggregation into table/boxplot statistics.

use crate::accuracy::{rescale_to_levels, rga, self_reference};
use crate::datamodel::{encode_design, Column, Dataset, DesignMatrix, OrdinalLevel};
use crate::error::{Error, Result};
use crate::midq::{fit_midqr, midqr_se, predict_midqr, KernelConfig, Link, SeMethod, DEFAULT_LAMBDA};
use crate::ordlogit::{fit_ordered_logit, predict_level, sample_responses_with};
use crate::ranklinear::{fit_rank_linear, predict_rank_linear};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::fmt::Write as _;

/// Threshold specification for the response generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaSpec {
    /// Thresholds calibrated so the marginal level distribution is uniform.
    Uniform,
    /// Uniform-calibrated thresholds shifted upward, yielding a decreasing
    /// (non-uniform) marginal.
    Generic,
    /// Explicit strictly increasing thresholds of length k − 1.
    Explicit(Vec<f64>),
}

/// Shift applied to the calibrated thresholds under [`AlphaSpec::Generic`].
pub const GENERIC_ALPHA_SHIFT: f64 = 2.0;

/// Default generator slopes (continuous x1, x2, then two dummies per
/// categorical factor).
pub const DEFAULT_BETA: [f64; 6] = [-3.1, 2.1, 1.0, 4.1, -2.1, 4.1];

/// Simulation-study configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub n_tr: usize,
    pub n_test: usize,
    pub k: usize,
    pub n_iter: usize,
    pub beta_true: Vec<f64>,
    pub alpha: AlphaSpec,
    pub quantile_levels: Vec<f64>,
    pub seed: u64,
    pub significance_level: f64,
    pub n_probe: usize,
    pub lambda: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_tr: 320,
            n_test: 80,
            k: 4,
            n_iter: 100,
            beta_true: DEFAULT_BETA.to_vec(),
            alpha: AlphaSpec::Generic,
            quantile_levels: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            seed: 20220418,
            significance_level: 0.05,
            n_probe: 1_000_000,
            lambda: DEFAULT_LAMBDA,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_tr < 1 || self.n_test < 1 || self.n_iter < 1 {
            return Err(Error::Invalid("n_tr, n_test, n_iter must be >= 1".into()));
        }
        if self.k < 2 {
            return Err(Error::Invalid(format!("k must be >= 2, got {}", self.k)));
        }
        if self.beta_true.len() != 6 {
            return Err(Error::Invalid(format!(
                "beta_true must have length 6, got {}",
                self.beta_true.len()
            )));
        }
        if self.quantile_levels.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return Err(Error::Invalid("quantile levels must lie strictly in (0,1)".into()));
        }
        if !(self.significance_level > 0.0 && self.significance_level < 1.0) {
            return Err(Error::Invalid("significance level must lie in (0,1)".into()));
        }
        if let AlphaSpec::Explicit(a) = &self.alpha {
            if a.len() != self.k - 1 {
                return Err(Error::Invalid(format!(
                    "explicit alphas must have length k − 1 = {}",
                    self.k - 1
                )));
            }
            if a.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Invalid("explicit alphas must be strictly increasing".into()));
            }
        }
        Ok(())
    }
}

/// Simulated covariate columns: two standard-normal continuous columns and
/// two balanced three-level categorical columns, in that order.
pub fn generate_covariates<R: Rng>(n: usize, rng: &mut R) -> Vec<(String, Column)> {
    let draw_normal = |rng: &mut R| -> Vec<f64> {
        (0..n).map(|_| rand_distr::StandardNormal.sample(rng)).collect()
    };
    let x1 = draw_normal(rng);
    let x2 = draw_normal(rng);
    let levels: Vec<String> = vec!["0".into(), "1".into(), "2".into()];
    let draw_cat = |rng: &mut R| -> Column {
        Column::Categorical {
            levels: levels.clone(),
            codes: (0..n).map(|_| rng.gen_range(0..3usize)).collect(),
        }
    };
    let g1 = draw_cat(rng);
    let g2 = draw_cat(rng);
    vec![
        ("x1".into(), Column::Continuous(x1)),
        ("x2".into(), Column::Continuous(x2)),
        ("g1".into(), g1),
        ("g2".into(), g2),
    ]
}

use rand_distr::Distribution as _;

fn covariate_design(columns: Vec<(String, Column)>, k: usize, intercept: bool) -> Result<(Dataset, DesignMatrix)> {
    let n = columns[0].1.len();
    let placeholder = vec![OrdinalLevel::new(1, k)?; n];
    let ds = Dataset::new(placeholder, columns)?;
    let design = encode_design(&ds, intercept)?;
    Ok((ds, design))
}

fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len() as f64;
    let idx = (q * n).ceil() as usize;
    sorted[idx.clamp(1, sorted.len()) - 1]
}

/// Thresholds making the simulated marginal of Y uniform over 1..k:
/// α_h = empirical h/k-quantile of βᵀX over a probe covariate sample.
pub fn calibrate_uniform_alphas(
    beta_true: &[f64],
    k: usize,
    n_probe: usize,
    rng_seed: u64,
) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::Invalid(format!("k must be >= 2, got {k}")));
    }
    if beta_true.iter().all(|&b| b == 0.0) {
        // Degenerate βᵀX ≡ 0: closed form logistic(α_h) = h/k.
        return Ok((1..k)
            .map(|h| {
                let p = h as f64 / k as f64;
                (p / (1.0 - p)).ln()
            })
            .collect());
    }
    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    let columns = generate_covariates(n_probe, &mut rng);
    let (_, design) = covariate_design(columns, 2, false)?;
    if design.p() != beta_true.len() {
        return Err(Error::Dimension(format!(
            "beta_true has length {}, design has {} columns",
            beta_true.len(),
            design.p()
        )));
    }
    let mut eta: Vec<f64> = (0..design.n())
        .map(|i| beta_true.iter().enumerate().map(|(j, b)| b * design.matrix[(i, j)]).sum())
        .collect();
    eta.sort_by(|a, b| a.partial_cmp(b).expect("finite linear predictor"));
    // The h/k-quantile of η seeds a bisection solving the exact marginal
    // condition mean σ(α − η) = h/k over the probe sample.
    Ok((1..k)
        .map(|h| {
            let target = h as f64 / k as f64;
            let seed = empirical_quantile(&eta, target);
            let marginal = |a: f64| {
                eta.iter().map(|&e| 1.0 / (1.0 + (e - a).exp())).sum::<f64>() / eta.len() as f64
            };
            let (mut lo, mut hi) = (seed - 20.0, seed + 20.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if marginal(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect())
}

/// Seed for the probe sample used by threshold calibration.
pub const CALIBRATION_SEED: u64 = 1;

/// Resolve an [`AlphaSpec`] into explicit thresholds.
pub fn resolve_alphas(config: &SimulationConfig) -> Result<Vec<f64>> {
    match &config.alpha {
        AlphaSpec::Explicit(a) => Ok(a.clone()),
        AlphaSpec::Uniform => {
            calibrate_uniform_alphas(&config.beta_true, config.k, config.n_probe, CALIBRATION_SEED)
        }
        AlphaSpec::Generic => Ok(calibrate_uniform_alphas(
            &config.beta_true,
            config.k,
            config.n_probe,
            CALIBRATION_SEED,
        )?
        .iter()
        .map(|a| a + GENERIC_ALPHA_SHIFT)
        .collect()),
    }
}

/// Aggregated per-coefficient statistics across iterations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientStat {
    pub model: String,
    pub coef: String,
    /// Mean estimate across successful iterations.
    pub est_mean: f64,
    /// Mean estimated SE.
    pub se_mean: f64,
    /// Mean SE over iterations where the coefficient was significant;
    /// `None` (emitted as N.D.) when never significant.
    pub reg_se: Option<f64>,
    /// SD of the estimates across iterations.
    pub mcse: f64,
    /// Share of iterations where the coefficient was significant.
    pub pct_significant: f64,
}

/// Per-model mean/SD of the predictive indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexStat {
    pub model: String,
    pub rga_mean: f64,
    pub rga_sd: f64,
    pub agr_mean: f64,
    pub agr_sd: f64,
    /// Iterations contributing to this model's aggregates.
    pub iterations: usize,
}

/// One raw per-iteration index value (boxplot emission).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawIndexValue {
    pub model: String,
    pub index: String,
    pub iteration: usize,
    pub value: f64,
}

/// Full simulation output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub config: SimulationConfig,
    pub alphas: Vec<f64>,
    pub coefficients: Vec<CoefficientStat>,
    pub indices: Vec<IndexStat>,
    pub self_mean: f64,
    pub self_sd: f64,
    pub raw: Vec<RawIndexValue>,
    /// Iterations skipped entirely (e.g. a response level unobserved).
    pub skipped_iterations: usize,
    /// Per-model fit-failure counts.
    pub failures: Vec<(String, usize)>,
}

struct CoefDraw {
    name: String,
    est: f64,
    se: f64,
    significant: bool,
}

struct ModelResult {
    model: String,
    rga: f64,
    agr: f64,
    coefs: Vec<CoefDraw>,
}

struct IterResult {
    iteration: usize,
    models: Vec<ModelResult>,
    self_value: f64,
}

fn coef_names(design: &DesignMatrix) -> Vec<String> {
    let mut names = Vec::new();
    for entry in &design.coding_map {
        if entry.dummy_levels.is_empty() {
            names.push(entry.column.clone());
        } else {
            for level in &entry.dummy_levels {
                names.push(format!("{}_{}", entry.column, level));
            }
        }
    }
    names
}

fn wald_significant(est: f64, se: f64, z: f64) -> bool {
    se.is_finite() && se > 0.0 && (est / se).abs() > z
}

fn midqr_model_name(tau: f64) -> String {
    format!("MidQR({tau})")
}

fn run_iteration(
    config: &SimulationConfig,
    alphas: &[f64],
    iteration: usize,
    z: f64,
) -> Result<Option<IterResult>> {
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    rng.set_stream(1 + iteration as u64);
    let k = config.k;

    let (tr_ds0, xtr) = covariate_design(generate_covariates(config.n_tr, &mut rng), k, false)?;
    let ytr = sample_responses_with(alphas, &config.beta_true, &xtr, &mut rng)?;
    let (te_ds0, xte) = covariate_design(generate_covariates(config.n_test, &mut rng), k, false)?;
    let yte = sample_responses_with(alphas, &config.beta_true, &xte, &mut rng)?;

    // Every level must appear in training for the ordinal fits.
    let mut seen = vec![false; k + 1];
    for l in &ytr {
        seen[l.value] = true;
    }
    if seen.iter().skip(1).any(|s| !s) {
        return Ok(None);
    }

    let tr_ds = Dataset { responses: ytr.clone(), columns: tr_ds0.columns };
    let xtri = encode_design(&tr_ds, true)?;
    let xtei = encode_design(&te_ds0, true)?;
    let yte_f: Vec<f64> = yte.iter().map(|l| l.value as f64).collect();
    let names = coef_names(&xtr);

    let mut models = Vec::new();
    let mut push_model = |model: String, scores: Vec<f64>, coefs: Vec<CoefDraw>| -> Result<()> {
        let scaled = rescale_to_levels(&scores, k);
        models.push(ModelResult {
            model,
            rga: rga(&scaled, &yte_f)?,
            agr: rga(&yte_f, &scaled)?,
            coefs,
        });
        Ok(())
    };

    if let Ok(fit) = fit_ordered_logit(&ytr, &xtr) {
        let scores: Vec<f64> =
            predict_level(&fit, &xte)?.iter().map(|l| l.value as f64).collect();
        let mut coefs = Vec::new();
        for (h, (&est, &se)) in fit.alphas.iter().zip(&fit.coef_se).enumerate() {
            coefs.push(CoefDraw {
                name: format!("alpha_{}", h + 1),
                est,
                se,
                significant: wald_significant(est, se, z),
            });
        }
        for (j, name) in names.iter().enumerate() {
            let se = fit.coef_se[fit.alphas.len() + j];
            coefs.push(CoefDraw {
                name: name.clone(),
                est: fit.betas[j],
                se,
                significant: wald_significant(fit.betas[j], se, z),
            });
        }
        push_model("OrdLog".into(), scores, coefs)?;
    }

    if let Ok(fit) = fit_rank_linear(&ytr, &xtr) {
        let scores = predict_rank_linear(&fit, &xte)?;
        let mut coefs = vec![CoefDraw {
            name: "intercept".into(),
            est: fit.beta0,
            se: fit.coef_se[0],
            significant: fit.coef_p[0] < config.significance_level,
        }];
        for (j, name) in names.iter().enumerate() {
            coefs.push(CoefDraw {
                name: name.clone(),
                est: fit.betas[j],
                se: fit.coef_se[j + 1],
                significant: fit.coef_p[j + 1] < config.significance_level,
            });
        }
        push_model("LinReg".into(), scores, coefs)?;
    }

    if let Ok(kernel) = KernelConfig::for_dataset(&tr_ds, config.lambda) {
        for &tau in &config.quantile_levels {
            let Ok(fit) = fit_midqr(&tr_ds, &xtri, tau, &kernel, Link::Log) else {
                continue;
            };
            let scores = predict_midqr(&fit, &xtei)?;
            let se = midqr_se(&fit, &tr_ds, &xtri, SeMethod::Kernel, 0, 0)?;
            let mut coefs = Vec::new();
            let coef_labels: Vec<String> =
                std::iter::once("intercept".to_string()).chain(names.iter().cloned()).collect();
            for (j, label) in coef_labels.iter().enumerate() {
                coefs.push(CoefDraw {
                    name: label.clone(),
                    est: fit.betas[j],
                    se: se.se[j],
                    significant: !se.censored[j] && wald_significant(fit.betas[j], se.se[j], z),
                });
            }
            push_model(midqr_model_name(tau), scores, coefs)?;
        }
    }

    let self_value = self_reference(&yte_f)?;
    Ok(Some(IterResult { iteration, models, self_value }))
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Run the full Monte Carlo study. Iterations execute in parallel with
/// per-iteration RNG streams, so results are independent of scheduling.
pub fn run_simulation(config: &SimulationConfig) -> Result<SimulationSummary> {
    config.validate()?;
    let alphas = resolve_alphas(config)?;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let z = normal.inverse_cdf(1.0 - config.significance_level / 2.0);

    let iter_results: Vec<Result<Option<IterResult>>> = (0..config.n_iter)
        .into_par_iter()
        .map(|it| run_iteration(config, &alphas, it, z))
        .collect();

    let model_order: Vec<String> = ["OrdLog".to_string(), "LinReg".to_string()]
        .into_iter()
        .chain(config.quantile_levels.iter().map(|&t| midqr_model_name(t)))
        .collect();

    let mut skipped = 0usize;
    let mut per_model: Vec<(Vec<f64>, Vec<f64>)> =
        vec![(Vec::new(), Vec::new()); model_order.len()];
    let mut coef_draws: Vec<Vec<Vec<CoefDraw>>> =
        (0..model_order.len()).map(|_| Vec::new()).collect();
    let mut self_values = Vec::new();
    let mut raw = Vec::new();
    let mut successes = vec![0usize; model_order.len()];
    let mut usable_iterations = 0usize;

    for res in iter_results {
        let Some(iter) = res? else {
            skipped += 1;
            continue;
        };
        usable_iterations += 1;
        for m in iter.models {
            let slot = model_order
                .iter()
                .position(|name| *name == m.model)
                .ok_or_else(|| Error::Invalid(format!("unknown model {}", m.model)))?;
            per_model[slot].0.push(m.rga);
            per_model[slot].1.push(m.agr);
            raw.push(RawIndexValue {
                model: m.model.clone(),
                index: "RGA".into(),
                iteration: iter.iteration,
                value: m.rga,
            });
            raw.push(RawIndexValue {
                model: m.model.clone(),
                index: "AGR".into(),
                iteration: iter.iteration,
                value: m.agr,
            });
            coef_draws[slot].push(m.coefs);
            successes[slot] += 1;
        }
        self_values.push(iter.self_value);
        raw.push(RawIndexValue {
            model: "Self".into(),
            index: "RGA".into(),
            iteration: iter.iteration,
            value: iter.self_value,
        });
        raw.push(RawIndexValue {
            model: "Self".into(),
            index: "AGR".into(),
            iteration: iter.iteration,
            value: iter.self_value,
        });
    }

    let mut indices = Vec::new();
    let mut coefficients = Vec::new();
    let mut failures = Vec::new();
    for (slot, model) in model_order.iter().enumerate() {
        let (rga_mean, rga_sd) = mean_sd(&per_model[slot].0);
        let (agr_mean, agr_sd) = mean_sd(&per_model[slot].1);
        indices.push(IndexStat {
            model: model.clone(),
            rga_mean,
            rga_sd,
            agr_mean,
            agr_sd,
            iterations: successes[slot],
        });
        failures.push((model.clone(), usable_iterations - successes[slot]));

        let draws = &coef_draws[slot];
        if draws.is_empty() {
            continue;
        }
        let n_coef = draws[0].len();
        for c in 0..n_coef {
            let ests: Vec<f64> = draws.iter().map(|d| d[c].est).collect();
            let ses: Vec<f64> = draws.iter().map(|d| d[c].se).collect();
            let sig: Vec<bool> = draws.iter().map(|d| d[c].significant).collect();
            let (est_mean, mcse) = mean_sd(&ests);
            let (se_mean, _) = mean_sd(&ses);
            let sig_ses: Vec<f64> = ses
                .iter()
                .zip(&sig)
                .filter(|(_, &s)| s)
                .map(|(&se, _)| se)
                .collect();
            let reg_se = if sig_ses.is_empty() { None } else { Some(mean_sd(&sig_ses).0) };
            coefficients.push(CoefficientStat {
                model: model.clone(),
                coef: draws[0][c].name.clone(),
                est_mean,
                se_mean,
                reg_se,
                mcse,
                pct_significant: sig.iter().filter(|&&s| s).count() as f64 / sig.len() as f64,
            });
        }
    }
    let (self_mean, self_sd) = mean_sd(&self_values);

    Ok(SimulationSummary {
        config: config.clone(),
        alphas,
        coefficients,
        indices,
        self_mean,
        self_sd,
        raw,
        skipped_iterations: skipped,
        failures,
    })
}

fn fmt_f(v: f64) -> String {
    format!("{v:.6}")
}

/// Coefficient summary CSV: `model,coef,est,se,reg_se,mcse,pct_sign`.
pub fn emit_coefficient_table(summary: &SimulationSummary) -> String {
    let mut out = String::from("model,coef,est,se,reg_se,mcse,pct_sign\n");
    for c in &summary.coefficients {
        let reg_se = c.reg_se.map_or_else(|| "N.D.".to_string(), fmt_f);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.model,
            c.coef,
            fmt_f(c.est_mean),
            fmt_f(c.se_mean),
            reg_se,
            fmt_f(c.mcse),
            fmt_f(c.pct_significant)
        );
    }
    out
}

/// Long-format boxplot CSV: `model,index,iteration,value` over all models
/// (including Self) for both RGA and AGR.
pub fn emit_boxplot_data(summary: &SimulationSummary) -> String {
    let mut out = String::from("model,index,iteration,value\n");
    for r in &summary.raw {
        let _ = writeln!(out, "{},{},{},{}", r.model, r.index, r.iteration, fmt_f(r.value));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariates_deterministic_and_calibrated_moments() {
        let n = 20_000;
        let mut r1 = ChaCha12Rng::seed_from_u64(5);
        let mut r2 = ChaCha12Rng::seed_from_u64(5);
        let a = generate_covariates(n, &mut r1);
        let b = generate_covariates(n, &mut r2);
        assert_eq!(a, b);
        let bound = 4.0 / (n as f64).sqrt();
        for (name, col) in &a {
            match col {
                Column::Continuous(v) => {
                    let mean = v.iter().sum::<f64>() / n as f64;
                    assert!(mean.abs() < bound, "{name} mean = {mean}");
                }
                Column::Categorical { codes, .. } => {
                    let cat_bound = 4.0 * (2.0 / (9.0 * n as f64)).sqrt();
                    for lv in 0..3 {
                        let share =
                            codes.iter().filter(|&&c| c == lv).count() as f64 / n as f64;
                        assert!(
                            (share - 1.0 / 3.0).abs() < cat_bound,
                            "{name} level {lv} share = {share}"
                        );
                    }
                }
                Column::Binary(_) => unreachable!(),
            }
        }
    }

    #[test]
    fn calibration_zero_beta_closed_form() {
        let a = calibrate_uniform_alphas(&[0.0; 6], 4, 1000, 1).unwrap();
        let expect = [-(3.0f64).ln(), 0.0, (3.0f64).ln()];
        for (v, e) in a.iter().zip(expect) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn calibration_yields_uniform_marginal() {
        let alphas = calibrate_uniform_alphas(&DEFAULT_BETA, 4, 200_000, 1).unwrap();
        // Check the resulting marginal on a fresh probe sample.
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let cols = generate_covariates(50_000, &mut rng);
        let (_, design) = covariate_design(cols, 4, false).unwrap();
        let y = sample_responses_with(&alphas, &DEFAULT_BETA, &design, &mut rng).unwrap();
        for h in 1..=4 {
            let share = y.iter().filter(|l| l.value == h).count() as f64 / 50_000.0;
            assert!((share - 0.25).abs() < 0.01, "level {h} share = {share}");
        }
    }

    #[test]
    fn calibration_k2_is_median() {
        let alphas = calibrate_uniform_alphas(&DEFAULT_BETA, 2, 200_000, 1).unwrap();
        assert_eq!(alphas.len(), 1);
        // βᵀX is symmetric-ish around its mean; the median of a large probe
        // should land near the 0.5-quantile recomputed independently.
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let cols = generate_covariates(200_000, &mut rng);
        let (_, design) = covariate_design(cols, 2, false).unwrap();
        let mut eta: Vec<f64> = (0..design.n())
            .map(|i| {
                DEFAULT_BETA.iter().enumerate().map(|(j, b)| b * design.matrix[(i, j)]).sum()
            })
            .collect();
        eta.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = eta[eta.len() / 2];
        assert!((alphas[0] - median).abs() < 0.1, "alpha = {}, median = {median}", alphas[0]);
    }

    fn small_config() -> SimulationConfig {
        SimulationConfig {
            n_tr: 120,
            n_test: 40,
            k: 3,
            n_iter: 2,
            quantile_levels: vec![0.5],
            n_probe: 50_000,
            ..SimulationConfig::default()
        }
    }

    #[test]
    fn simulation_deterministic() {
        let config = small_config();
        let a = run_simulation(&config).unwrap();
        let b = run_simulation(&config).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(emit_boxplot_data(&a), emit_boxplot_data(&b));
        assert_eq!(emit_coefficient_table(&a), emit_coefficient_table(&b));
    }

    #[test]
    fn boxplot_row_count_matches_contract() {
        let config = small_config();
        let summary = run_simulation(&config).unwrap();
        let successes: usize =
            summary.indices.iter().map(|s| s.iterations).sum::<usize>();
        let self_count = config.n_iter - summary.skipped_iterations;
        assert_eq!(summary.raw.len(), (successes + self_count) * 2);
        let csv = emit_boxplot_data(&summary);
        assert_eq!(csv.lines().count(), 1 + summary.raw.len());
    }

    #[test]
    fn invalid_config_rejected() {
        let mut config = small_config();
        config.quantile_levels = vec![1.2];
        assert!(run_simulation(&config).is_err());
        let mut config = small_config();
        config.beta_true = vec![1.0];
        assert!(config.validate().is_err());
        let mut config = small_config();
        config.alpha = AlphaSpec::Explicit(vec![1.0, 0.5]);
        assert!(config.validate().is_err());
    }

    #[test]
    fn coefficient_table_has_nd_or_values() {
        let summary = run_simulation(&small_config()).unwrap();
        let table = emit_coefficient_table(&summary);
        assert!(table.starts_with("model,coef,est,se,reg_se,mcse,pct_sign\n"));
        // Every model contributes one intercept-or-threshold row at least.
        assert!(table.contains("OrdLog,alpha_1"));
        assert!(table.contains("LinReg,intercept"));
        assert!(table.contains("MidQR(0.5),intercept"));
    }
}
