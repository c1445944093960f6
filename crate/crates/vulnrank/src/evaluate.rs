//! Real-data evaluation protocol: repeated random train/test splits, model
//! fits on full and technical regressor sets, RGA/AGR aggregation, and the
//! quantile-trend and ratio diagnostics tables.

use crate::accuracy::{rescale_to_levels, rga, self_reference};
use crate::datamodel::{
    encode_design, records_to_dataset, Column, Dataset, RegressorSet, VulnRecord,
};
use crate::error::{Error, Result};
use crate::midq::{fit_midqr, predict_midqr, KernelConfig, Link, DEFAULT_LAMBDA};
use crate::ordlogit::{fit_ordered_logit, predict_level};
use crate::ranklinear::{fit_rank_linear, predict_rank_linear};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// 16 quantile levels equally spaced on [0.1, 0.9].
pub fn default_quantile_grid() -> Vec<f64> {
    (0..16).map(|i| 0.1 + 0.8 * i as f64 / 15.0).collect()
}

/// Split-evaluation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateConfig {
    pub n_splits: usize,
    pub n_test: usize,
    pub seed: u64,
    pub quantile_levels: Vec<f64>,
    pub lambda: f64,
    /// Apply log(1 + x) to the exposure column.
    pub log_exposure: bool,
    /// Z-score continuous regressors before fitting.
    pub standardize: bool,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            n_splits: 10,
            n_test: 50,
            seed: 20220418,
            quantile_levels: default_quantile_grid(),
            lambda: DEFAULT_LAMBDA,
            log_exposure: false,
            standardize: false,
        }
    }
}

/// Aggregated index statistics for one (regressor set, model) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelPerformance {
    pub model_set: String,
    pub model: String,
    pub rga_mean: f64,
    pub rga_sd: f64,
    pub agr_mean: f64,
    pub agr_sd: f64,
    /// Splits contributing to the aggregates.
    pub splits: usize,
}

/// One quantile-trend row (MidQR index means per τ and regressor set).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendRow {
    pub tau: f64,
    pub model_set: String,
    pub rga_mean: f64,
    pub agr_mean: f64,
}

/// Technical-to-full index ratios per τ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioRow {
    pub tau: f64,
    pub rho_rga: f64,
    pub rho_agr: f64,
}

/// Full evaluation output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config: EvaluateConfig,
    pub n_records: usize,
    pub models: Vec<ModelPerformance>,
    pub trend: Vec<TrendRow>,
    pub ratios: Vec<RatioRow>,
    pub self_mean: f64,
    pub self_sd: f64,
    /// Per (model_set, model) fit-failure counts.
    pub failures: Vec<(String, usize)>,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn standardize_continuous(ds: &mut Dataset) {
    for (_, col) in &mut ds.columns {
        if let Column::Continuous(v) = col {
            let (mean, sd) = mean_sd(v);
            if sd > 0.0 {
                for x in v.iter_mut() {
                    *x = (*x - mean) / sd;
                }
            }
        }
    }
}

fn set_name(set: RegressorSet) -> &'static str {
    match set {
        RegressorSet::Full => "full",
        RegressorSet::Technical => "technical",
    }
}

struct SplitScores {
    // (model name, rga, agr) per fitted model.
    models: Vec<(String, f64, f64)>,
    self_value: f64,
}

fn evaluate_split(
    ds: &Dataset,
    train_idx: &[usize],
    test_idx: &[usize],
    config: &EvaluateConfig,
) -> Result<Option<SplitScores>> {
    let train = ds.subset(train_idx)?;
    let test = ds.subset(test_idx)?;
    let k = train.responses[0].k;
    let mut seen = vec![false; k + 1];
    for l in &train.responses {
        seen[l.value] = true;
    }
    if seen.iter().skip(1).any(|s| !s) {
        return Ok(None);
    }
    let xtr = encode_design(&train, false)?;
    let xtri = encode_design(&train, true)?;
    let xte = encode_design(&test, false)?;
    let xtei = encode_design(&test, true)?;
    let yte: Vec<f64> = test.responses.iter().map(|l| l.value as f64).collect();

    let mut models = Vec::new();
    let mut push = |name: String, scores: Vec<f64>| -> Result<()> {
        let scaled = rescale_to_levels(&scores, k);
        models.push((name, rga(&scaled, &yte)?, rga(&yte, &scaled)?));
        Ok(())
    };

    if let Ok(fit) = fit_ordered_logit(&train.responses, &xtr) {
        let scores: Vec<f64> =
            predict_level(&fit, &xte)?.iter().map(|l| l.value as f64).collect();
        push("OrdLog".into(), scores)?;
    }
    if let Ok(fit) = fit_rank_linear(&train.responses, &xtr) {
        push("LinReg".into(), predict_rank_linear(&fit, &xte)?)?;
    }
    if let Ok(kernel) = KernelConfig::for_dataset(&train, config.lambda) {
        for &tau in &config.quantile_levels {
            if let Ok(fit) = fit_midqr(&train, &xtri, tau, &kernel, Link::Log) {
                push(format!("MidQR({tau})"), predict_midqr(&fit, &xtei)?)?;
            }
        }
    }
    Ok(Some(SplitScores { models, self_value: self_reference(&yte)? }))
}

/// Run the split-evaluation protocol on assembled records: `n_splits`
/// seeded random test extractions, both regressor sets, all configured
/// quantile levels.
pub fn run_evaluation(records: &[VulnRecord], config: &EvaluateConfig) -> Result<EvaluationReport> {
    if config.n_splits < 1 {
        return Err(Error::Invalid("n_splits must be >= 1".into()));
    }
    if config.n_test >= records.len() {
        return Err(Error::Invalid(format!(
            "n_test = {} must be smaller than the dataset ({} rows)",
            config.n_test,
            records.len()
        )));
    }
    if config.quantile_levels.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::Invalid("quantile levels must lie strictly in (0,1)".into()));
    }

    let n = records.len();
    // One permutation per split, shared by both regressor sets.
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..config.n_splits)
        .map(|s| {
            let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
            rng.set_stream(1 + s as u64);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let (test, train) = idx.split_at(config.n_test);
            (train.to_vec(), test.to_vec())
        })
        .collect();

    let mut model_scores: Vec<(String, String, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut self_values = Vec::new();
    let mut failures: Vec<(String, usize)> = Vec::new();

    for set in [RegressorSet::Full, RegressorSet::Technical] {
        let mut ds = records_to_dataset(records, set, config.log_exposure)?;
        if config.standardize {
            standardize_continuous(&mut ds);
        }
        let mut attempted = 0usize;
        for (train_idx, test_idx) in &splits {
            let Some(scores) = evaluate_split(&ds, train_idx, test_idx, config)? else {
                continue;
            };
            attempted += 1;
            for (model, rga_v, agr_v) in scores.models {
                match model_scores
                    .iter_mut()
                    .find(|(s, m, _, _)| *s == set_name(set) && *m == model)
                {
                    Some((_, _, rgas, agrs)) => {
                        rgas.push(rga_v);
                        agrs.push(agr_v);
                    }
                    None => model_scores.push((
                        set_name(set).to_string(),
                        model,
                        vec![rga_v],
                        vec![agr_v],
                    )),
                }
            }
            if set == RegressorSet::Full {
                self_values.push(scores.self_value);
            }
        }
        for (s, m, rgas, _) in &model_scores {
            if s == set_name(set) {
                failures.push((format!("{s}/{m}"), attempted - rgas.len()));
            }
        }
    }

    let models: Vec<ModelPerformance> = model_scores
        .iter()
        .map(|(set, model, rgas, agrs)| {
            let (rga_mean, rga_sd) = mean_sd(rgas);
            let (agr_mean, agr_sd) = mean_sd(agrs);
            ModelPerformance {
                model_set: set.clone(),
                model: model.clone(),
                rga_mean,
                rga_sd,
                agr_mean,
                agr_sd,
                splits: rgas.len(),
            }
        })
        .collect();

    let mut trend = Vec::new();
    for &tau in &config.quantile_levels {
        for set in ["full", "technical"] {
            if let Some(m) = models
                .iter()
                .find(|m| m.model_set == set && m.model == format!("MidQR({tau})"))
            {
                trend.push(TrendRow {
                    tau,
                    model_set: set.to_string(),
                    rga_mean: m.rga_mean,
                    agr_mean: m.agr_mean,
                });
            }
        }
    }
    let ratios = config
        .quantile_levels
        .iter()
        .filter_map(|&tau| {
            let find = |set: &str| {
                models
                    .iter()
                    .find(|m| m.model_set == set && m.model == format!("MidQR({tau})"))
            };
            let (full, tech) = (find("full")?, find("technical")?);
            Some(RatioRow {
                tau,
                rho_rga: tech.rga_mean / full.rga_mean,
                rho_agr: tech.agr_mean / full.agr_mean,
            })
        })
        .collect();

    let (self_mean, self_sd) = mean_sd(&self_values);
    Ok(EvaluationReport {
        config: config.clone(),
        n_records: n,
        models,
        trend,
        ratios,
        self_mean,
        self_sd,
        failures,
    })
}

fn fmt_f(v: f64) -> String {
    format!("{v:.6}")
}

/// Per-model performance CSV:
/// `model_set,model,rga_mean,rga_sd,agr_mean,agr_sd,splits`.
pub fn performance_csv(report: &EvaluationReport) -> String {
    let mut out = String::from("model_set,model,rga_mean,rga_sd,agr_mean,agr_sd,splits\n");
    for m in &report.models {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            m.model_set,
            m.model,
            fmt_f(m.rga_mean),
            fmt_f(m.rga_sd),
            fmt_f(m.agr_mean),
            fmt_f(m.agr_sd),
            m.splits
        );
    }
    out
}

/// Quantile-trend CSV `tau,model_set,rga_mean,agr_mean`.
pub fn trend_csv(report: &EvaluationReport) -> String {
    let mut out = String::from("tau,model_set,rga_mean,agr_mean\n");
    for t in &report.trend {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_f(t.tau),
            t.model_set,
            fmt_f(t.rga_mean),
            fmt_f(t.agr_mean)
        );
    }
    out
}

/// Ratio CSV `tau,rho_rga,rho_agr`.
pub fn ratio_csv(report: &EvaluationReport) -> String {
    let mut out = String::from("tau,rho_rga,rho_agr\n");
    for r in &report.ratios {
        let _ = writeln!(out, "{},{},{}", fmt_f(r.tau), fmt_f(r.rho_rga), fmt_f(r.rho_agr));
    }
    out
}
