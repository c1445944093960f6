//! Command-line front end: ingest → fit → predict/rank → evaluate →
//! simulate → diagnostics, with config files and machine-readable outputs.

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use vulnrank::datamodel::{
    encode_design, read_dataset_csv, records_to_dataset, write_dataset_csv, Column, Dataset,
    RegressorSet, VulnRecord,
};
use vulnrank::error::{Error, Result};
use vulnrank::evaluate::{
    performance_csv, ratio_csv, run_evaluation, trend_csv, EvaluateConfig,
};
use vulnrank::ingest::{join_sources, load_fixture, rejection_csv, Source};
use vulnrank::midq::{
    fit_midqr, midqr_se, predict_midqr, KernelConfig, Link, MidQuantileFit, SeMethod,
    DEFAULT_BOOTSTRAP_B, DEFAULT_LAMBDA,
};
use vulnrank::ordlogit::{fit_ordered_logit, predict_level, OrderedLogitFit};
use vulnrank::ranklinear::{
    fit_rank_linear, predict_rank_linear, residual_diagnostics, rank_transform, RankConvention,
    RankLinearFit,
};
use vulnrank::simharness::{
    emit_boxplot_data, emit_coefficient_table, run_simulation, SimulationConfig,
};

/// Default seed when `--seed` is omitted: reproducible by default.
const DEFAULT_SEED: u64 = 20220418;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Ordlogit,
    Ranklinear,
    Midqr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SetArg {
    Full,
    Technical,
}

impl From<SetArg> for RegressorSet {
    fn from(s: SetArg) -> Self {
        match s {
            SetArg::Full => RegressorSet::Full,
            SetArg::Technical => RegressorSet::Technical,
        }
    }
}

#[derive(Parser)]
#[command(name = "vulnrank", version, about = "Ordinal vulnerability ranking toolkit")]
struct Cli {
    /// RNG seed; omitted means a fixed default (reproducible by default).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML or JSON config file for simulate/evaluate.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for generated files.
    #[arg(long, global = true, default_value = ".")]
    output: PathBuf,
    /// Output format for tabular results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Join the four source exports into the dataset CSV.
    Ingest {
        #[arg(long)]
        nvd: PathBuf,
        #[arg(long)]
        shodan: PathBuf,
        #[arg(long)]
        exploitdb: PathBuf,
        #[arg(long)]
        tenable: PathBuf,
    },
    /// Fit one model on a dataset and write the fit JSON.
    Fit {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        model: ModelKind,
        /// Quantile level (midqr only).
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long, value_enum, default_value_t = SetArg::Full)]
        set: SetArg,
        /// Apply log(1 + x) to the exposure column.
        #[arg(long)]
        log_exposure: bool,
        /// Z-score continuous regressors before fitting.
        #[arg(long)]
        standardize: bool,
        /// Discrete-kernel smoothing parameter (midqr only).
        #[arg(long, default_value_t = DEFAULT_LAMBDA)]
        lambda: f64,
        /// Standard-error method for midqr.
        #[arg(long, value_enum, default_value_t = SeArg::Bootstrap)]
        se_method: SeArg,
        /// Bootstrap replicates for midqr SEs.
        #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_B)]
        bootstrap_b: usize,
    },
    /// Score a dataset with a saved fit.
    Predict {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model_file: PathBuf,
    },
    /// Rank CVEs by descending predicted score.
    Rank {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model_file: PathBuf,
    },
    /// Repeated random train/test split evaluation.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        splits: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
        #[arg(long)]
        log_exposure: bool,
        #[arg(long)]
        standardize: bool,
    },
    /// Monte Carlo simulation study.
    Simulate {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        n_iter: Option<usize>,
        #[arg(long)]
        n_tr: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
    },
    /// OLS residual QQ data for the rank-linear model.
    Diagnostics {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = SetArg::Full)]
        set: SetArg,
        #[arg(long)]
        log_exposure: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SeArg {
    Kernel,
    Bootstrap,
}

/// Continuous-column scaling recorded at fit time and re-applied at
/// prediction time.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Scaling {
    column: String,
    mean: f64,
    sd: f64,
}

/// Saved fit with the preprocessing needed to score new data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
enum FitFile {
    Ordlogit {
        set: RegressorSet,
        log_exposure: bool,
        scaling: Vec<Scaling>,
        fit: OrderedLogitFit,
    },
    Ranklinear {
        set: RegressorSet,
        log_exposure: bool,
        scaling: Vec<Scaling>,
        fit: RankLinearFit,
    },
    Midqr {
        set: RegressorSet,
        log_exposure: bool,
        scaling: Vec<Scaling>,
        se: Option<vulnrank::midq::SeEstimate>,
        fit: MidQuantileFit,
    },
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn compute_scaling(ds: &Dataset, standardize: bool) -> Vec<Scaling> {
    if !standardize {
        return Vec::new();
    }
    ds.columns
        .iter()
        .filter_map(|(name, col)| match col {
            Column::Continuous(v) => {
                let (mean, sd) = mean_sd(v);
                (sd > 0.0).then(|| Scaling { column: name.clone(), mean, sd })
            }
            _ => None,
        })
        .collect()
}

fn apply_scaling(ds: &mut Dataset, scaling: &[Scaling]) {
    for s in scaling {
        if let Some((_, Column::Continuous(v))) =
            ds.columns.iter_mut().find(|(name, _)| *name == s.column)
        {
            for x in v.iter_mut() {
                *x = (*x - s.mean) / s.sd;
            }
        }
    }
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, content)?;
    Ok(path)
}

fn load_config_str(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

fn parse_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = load_config_str(path)?;
    if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    } else {
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

fn dataset_for(
    records: &[VulnRecord],
    set: RegressorSet,
    log_exposure: bool,
    scaling: &[Scaling],
) -> Result<Dataset> {
    let mut ds = records_to_dataset(records, set, log_exposure)?;
    apply_scaling(&mut ds, scaling);
    Ok(ds)
}

fn cmd_ingest(cli: &Cli, nvd: &Path, shodan: &Path, exploitdb: &Path, tenable: &Path) -> Result<()> {
    let mut records = Vec::new();
    for (path, source) in [
        (nvd, Source::Nvd),
        (shodan, Source::Shodan),
        (exploitdb, Source::Exploitdb),
        (tenable, Source::Tenable),
    ] {
        let loaded = load_fixture(path, source)?;
        for d in &loaded.diagnostics {
            eprintln!("warning: {}: {d}", path.display());
        }
        records.extend(loaded.records);
    }
    let joined = join_sources(&records);
    for w in &joined.warnings {
        eprintln!("warning: {w}");
    }
    let mut csv = Vec::new();
    write_dataset_csv(&mut csv, &joined.records)?;
    let dataset_path = write_file(&cli.output, "dataset.csv", &String::from_utf8_lossy(&csv))?;
    let rejections_path =
        write_file(&cli.output, "rejections.csv", &rejection_csv(&joined.rejections))?;
    println!(
        "wrote {} rows to {} ({} rejections in {})",
        joined.records.len(),
        dataset_path.display(),
        joined.rejections.len(),
        rejections_path.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    cli: &Cli,
    dataset: &Path,
    model: ModelKind,
    tau: f64,
    set: SetArg,
    log_exposure: bool,
    standardize: bool,
    lambda: f64,
    se_method: SeArg,
    bootstrap_b: usize,
) -> Result<()> {
    let records = read_dataset_csv(dataset)?;
    let set: RegressorSet = set.into();
    let mut ds = records_to_dataset(&records, set, log_exposure)?;
    let scaling = compute_scaling(&ds, standardize);
    apply_scaling(&mut ds, &scaling);
    let fit_file = match model {
        ModelKind::Ordlogit => {
            let x = encode_design(&ds, false)?;
            let fit = fit_ordered_logit(&ds.responses, &x)?;
            FitFile::Ordlogit { set, log_exposure, scaling, fit }
        }
        ModelKind::Ranklinear => {
            let x = encode_design(&ds, false)?;
            let fit = fit_rank_linear(&ds.responses, &x)?;
            FitFile::Ranklinear { set, log_exposure, scaling, fit }
        }
        ModelKind::Midqr => {
            let x = encode_design(&ds, true)?;
            let kernel = KernelConfig::for_dataset(&ds, lambda)?;
            let fit = fit_midqr(&ds, &x, tau, &kernel, Link::Log)?;
            let method = match se_method {
                SeArg::Kernel => SeMethod::Kernel,
                SeArg::Bootstrap => SeMethod::Bootstrap,
            };
            let seed = cli.seed.unwrap_or(DEFAULT_SEED);
            let se = midqr_se(&fit, &ds, &x, method, bootstrap_b, seed)?;
            FitFile::Midqr { set, log_exposure, scaling, se: Some(se), fit }
        }
    };
    let name = match model {
        ModelKind::Ordlogit => "fit_ordlogit.json",
        ModelKind::Ranklinear => "fit_ranklinear.json",
        ModelKind::Midqr => "fit_midqr.json",
    };
    let path = write_file(&cli.output, name, &serde_json::to_string_pretty(&fit_file)?)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Scores plus (for ordlogit) predicted levels.
fn score_records(
    records: &[VulnRecord],
    fit_file: &FitFile,
) -> Result<(Vec<f64>, Option<Vec<usize>>)> {
    match fit_file {
        FitFile::Ordlogit { set, log_exposure, scaling, fit } => {
            let ds = dataset_for(records, *set, *log_exposure, scaling)?;
            let x = encode_design(&ds, false)?;
            // Continuous ranking score: the linear predictor βᵀx.
            let scores = (0..x.n())
                .map(|i| {
                    fit.betas.iter().enumerate().map(|(j, b)| b * x.matrix[(i, j)]).sum()
                })
                .collect();
            let levels = predict_level(fit, &x)?.iter().map(|l| l.value).collect();
            Ok((scores, Some(levels)))
        }
        FitFile::Ranklinear { set, log_exposure, scaling, fit } => {
            let ds = dataset_for(records, *set, *log_exposure, scaling)?;
            let x = encode_design(&ds, false)?;
            Ok((predict_rank_linear(fit, &x)?, None))
        }
        FitFile::Midqr { set, log_exposure, scaling, fit, .. } => {
            let ds = dataset_for(records, *set, *log_exposure, scaling)?;
            let x = encode_design(&ds, true)?;
            Ok((predict_midqr(fit, &x)?, None))
        }
    }
}

fn cmd_predict(cli: &Cli, dataset: &Path, model_file: &Path) -> Result<()> {
    let records = read_dataset_csv(dataset)?;
    let fit_file: FitFile = serde_json::from_str(&fs::read_to_string(model_file)?)?;
    let (scores, _) = score_records(&records, &fit_file)?;
    match cli.format {
        Format::Csv => {
            println!("cve,score");
            for (r, s) in records.iter().zip(&scores) {
                println!("{},{s:.6}", r.cve_id);
            }
        }
        Format::Json => {
            let rows: Vec<serde_json::Value> = records
                .iter()
                .zip(&scores)
                .map(|(r, s)| serde_json::json!({"cve": r.cve_id, "score": s}))
                .collect();
            println!("{}", serde_json::to_string_pretty(&rows)?);
        }
    }
    Ok(())
}

fn cmd_rank(cli: &Cli, dataset: &Path, model_file: &Path) -> Result<()> {
    let records = read_dataset_csv(dataset)?;
    let fit_file: FitFile = serde_json::from_str(&fs::read_to_string(model_file)?)?;
    let (scores, levels) = score_records(&records, &fit_file)?;
    let mut order: Vec<usize> = (0..records.len()).collect();
    // Descending score; stable tie order by cve_id.
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| records[a].cve_id.cmp(&records[b].cve_id))
    });
    match cli.format {
        Format::Csv => {
            println!("rank,cve,score,predicted_level");
            for (rank, &i) in order.iter().enumerate() {
                let level = levels
                    .as_ref()
                    .map_or(String::new(), |ls| ls[i].to_string());
                println!("{},{},{:.6},{}", rank + 1, records[i].cve_id, scores[i], level);
            }
        }
        Format::Json => {
            let rows: Vec<serde_json::Value> = order
                .iter()
                .enumerate()
                .map(|(rank, &i)| {
                    serde_json::json!({
                        "rank": rank + 1,
                        "cve": records[i].cve_id,
                        "score": scores[i],
                        "predicted_level": levels.as_ref().map(|ls| ls[i]),
                    })
                })
                .collect();
            println!("{}", serde_json::to_string_pretty(&rows)?);
        }
    }
    Ok(())
}

fn cmd_evaluate(
    cli: &Cli,
    dataset: &Path,
    splits: Option<usize>,
    n_test: Option<usize>,
    log_exposure: bool,
    standardize: bool,
) -> Result<()> {
    let records = read_dataset_csv(dataset)?;
    let mut config: EvaluateConfig = match &cli.config {
        Some(path) => parse_config(path)?,
        None => EvaluateConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(s) = splits {
        config.n_splits = s;
    }
    if let Some(t) = n_test {
        config.n_test = t;
    }
    config.log_exposure |= log_exposure;
    config.standardize |= standardize;
    let report = run_evaluation(&records, &config)?;
    write_file(&cli.output, "evaluation.json", &serde_json::to_string_pretty(&report)?)?;
    write_file(&cli.output, "performance.csv", &performance_csv(&report))?;
    write_file(&cli.output, "trend.csv", &trend_csv(&report))?;
    write_file(&cli.output, "ratios.csv", &ratio_csv(&report))?;
    println!(
        "evaluated {} models over {} splits; outputs in {}",
        report.models.len(),
        config.n_splits,
        cli.output.display()
    );
    Ok(())
}

fn cmd_simulate(
    cli: &Cli,
    k: Option<usize>,
    n_iter: Option<usize>,
    n_tr: Option<usize>,
    n_test: Option<usize>,
) -> Result<()> {
    let mut config: SimulationConfig = match &cli.config {
        Some(path) => parse_config(path)?,
        None => SimulationConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(k) = k {
        config.k = k;
    }
    if let Some(n) = n_iter {
        config.n_iter = n;
    }
    if let Some(n) = n_tr {
        config.n_tr = n;
    }
    if let Some(n) = n_test {
        config.n_test = n;
    }
    let summary = run_simulation(&config)?;
    write_file(&cli.output, "summary.json", &serde_json::to_string_pretty(&summary)?)?;
    write_file(&cli.output, "coefficients.csv", &emit_coefficient_table(&summary))?;
    write_file(&cli.output, "boxplot.csv", &emit_boxplot_data(&summary))?;
    println!(
        "simulated {} iterations (k = {}, {} skipped); outputs in {}",
        config.n_iter,
        config.k,
        summary.skipped_iterations,
        cli.output.display()
    );
    Ok(())
}

fn cmd_diagnostics(cli: &Cli, dataset: &Path, set: SetArg, log_exposure: bool) -> Result<()> {
    let records = read_dataset_csv(dataset)?;
    let ds = records_to_dataset(&records, set.into(), log_exposure)?;
    let x = encode_design(&ds, false)?;
    let ranks = rank_transform(&ds.responses, RankConvention::Min)?;
    let rows = residual_diagnostics(&ranks.ranks, &x)?;
    match cli.format {
        Format::Csv => {
            println!("index,residual,empirical_q,theoretical_q");
            for r in rows {
                println!(
                    "{},{:.6},{:.6},{:.6}",
                    r.index, r.residual, r.empirical_q, r.theoretical_q
                );
            }
        }
        Format::Json => println!("{}", serde_json::to_string_pretty(&rows)?),
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest { nvd, shodan, exploitdb, tenable } => {
            cmd_ingest(cli, nvd, shodan, exploitdb, tenable)
        }
        Command::Fit {
            dataset,
            model,
            tau,
            set,
            log_exposure,
            standardize,
            lambda,
            se_method,
            bootstrap_b,
        } => cmd_fit(
            cli,
            dataset,
            *model,
            *tau,
            *set,
            *log_exposure,
            *standardize,
            *lambda,
            *se_method,
            *bootstrap_b,
        ),
        Command::Predict { dataset, model_file } => cmd_predict(cli, dataset, model_file),
        Command::Rank { dataset, model_file } => cmd_rank(cli, dataset, model_file),
        Command::Evaluate { dataset, splits, n_test, log_exposure, standardize } => {
            cmd_evaluate(cli, dataset, *splits, *n_test, *log_exposure, *standardize)
        }
        Command::Simulate { k, n_iter, n_tr, n_test } => {
            cmd_simulate(cli, *k, *n_iter, *n_tr, *n_test)
        }
        Command::Diagnostics { dataset, set, log_exposure } => {
            cmd_diagnostics(cli, dataset, *set, *log_exposure)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
