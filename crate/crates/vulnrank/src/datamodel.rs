//! Core immutable data types: ordinal levels, CVE records, datasets, and
//! the categorical-to-dummy design-matrix coding shared by all models.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Ordinal response category: `value` in `1..=k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OrdinalLevel {
    pub value: usize,
    pub k: usize,
}

impl OrdinalLevel {
    pub fn new(value: usize, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::Invalid(format!("k must be >= 2, got {k}")));
        }
        if value < 1 || value > k {
            return Err(Error::Invalid(format!("level {value} outside 1..={k}")));
        }
        Ok(Self { value, k })
    }
}

/// One CVE's encoded features plus its ordinal risk factor (k = 4).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnRecord {
    pub cve_id: String,
    pub xc: f64,
    pub xi: f64,
    pub xa: f64,
    pub xav: f64,
    pub xac: f64,
    pub exposure: u64,
    pub exploit: bool,
    pub risk_factor: OrdinalLevel,
}

/// A covariate column with its coding tag.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Continuous(Vec<f64>),
    /// Stored as level indices into `levels`.
    Categorical { levels: Vec<String>, codes: Vec<usize> },
    Binary(Vec<u8>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Continuous(v) => v.len(),
            Column::Categorical { codes, .. } => codes.len(),
            Column::Binary(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Immutable response vector + named covariate columns.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub responses: Vec<OrdinalLevel>,
    pub columns: Vec<(String, Column)>,
}

impl Dataset {
    pub fn new(responses: Vec<OrdinalLevel>, columns: Vec<(String, Column)>) -> Result<Self> {
        let n = responses.len();
        if n == 0 {
            return Err(Error::Invalid("empty dataset".into()));
        }
        for (name, c) in &columns {
            if c.len() != n {
                return Err(Error::Dimension(format!(
                    "column {name} has length {} != n = {n}",
                    c.len()
                )));
            }
        }
        Ok(Self { responses, columns })
    }

    pub fn n(&self) -> usize {
        self.responses.len()
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.columns.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Row subset (indices may repeat, enabling bootstrap resamples).
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        if idx.iter().any(|&i| i >= self.n()) {
            return Err(Error::Invalid("subset index out of range".into()));
        }
        let responses = idx.iter().map(|&i| self.responses[i]).collect();
        let columns = self
            .columns
            .iter()
            .map(|(name, c)| {
                let col = match c {
                    Column::Continuous(v) => {
                        Column::Continuous(idx.iter().map(|&i| v[i]).collect())
                    }
                    Column::Categorical { levels, codes } => Column::Categorical {
                        levels: levels.clone(),
                        codes: idx.iter().map(|&i| codes[i]).collect(),
                    },
                    Column::Binary(v) => Column::Binary(idx.iter().map(|&i| v[i]).collect()),
                };
                (name.clone(), col)
            })
            .collect();
        Dataset::new(responses, columns)
    }

    /// Kernel coordinates: one f64 per column per row (categorical columns
    /// contribute their level code), plus a per-column discreteness flag.
    pub fn kernel_coordinates(&self) -> (Vec<Vec<f64>>, Vec<bool>) {
        let n = self.n();
        let mut coords = vec![Vec::with_capacity(self.columns.len()); n];
        let mut discrete = Vec::with_capacity(self.columns.len());
        for (_, c) in &self.columns {
            match c {
                Column::Continuous(v) => {
                    discrete.push(false);
                    for (i, row) in coords.iter_mut().enumerate() {
                        row.push(v[i]);
                    }
                }
                Column::Categorical { codes, .. } => {
                    discrete.push(true);
                    for (i, row) in coords.iter_mut().enumerate() {
                        row.push(codes[i] as f64);
                    }
                }
                Column::Binary(v) => {
                    discrete.push(true);
                    for (i, row) in coords.iter_mut().enumerate() {
                        row.push(f64::from(v[i]));
                    }
                }
            }
        }
        (coords, discrete)
    }
}

/// Mapping from one original column to its emitted design columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CodingEntry {
    pub column: String,
    /// Emitted design-column indices.
    pub design_columns: Vec<usize>,
    /// Reference (dropped) level for categorical columns.
    pub reference_level: Option<String>,
    /// Dummy level names aligned with `design_columns` (categorical only).
    pub dummy_levels: Vec<String>,
}

/// Dense n × P design matrix plus its coding metadata.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub matrix: DMatrix<f64>,
    pub coding_map: Vec<CodingEntry>,
    pub includes_intercept: bool,
}

impl DesignMatrix {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn p(&self) -> usize {
        self.matrix.ncols()
    }

    /// Row subset (indices may repeat, enabling bootstrap resamples).
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        if idx.iter().any(|&i| i >= self.n()) {
            return Err(Error::Invalid("subset index out of range".into()));
        }
        let matrix = DMatrix::from_fn(idx.len(), self.p(), |i, j| self.matrix[(idx[i], j)]);
        Ok(Self {
            matrix,
            coding_map: self.coding_map.clone(),
            includes_intercept: self.includes_intercept,
        })
    }
}

/// Dummy-code a dataset into a design matrix. Continuous columns keep input
/// order, then each categorical column emits c−1 dummies in level order with
/// the first declared level as reference. Binary columns emit one 0/1 column.
pub fn encode_design(dataset: &Dataset, intercept: bool) -> Result<DesignMatrix> {
    let n = dataset.n();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut coding_map = Vec::new();
    if intercept {
        cols.push(vec![1.0; n]);
        coding_map.push(CodingEntry {
            column: "(intercept)".into(),
            design_columns: vec![0],
            reference_level: None,
            dummy_levels: vec![],
        });
    }
    for (name, column) in &dataset.columns {
        match column {
            Column::Continuous(v) => {
                coding_map.push(CodingEntry {
                    column: name.clone(),
                    design_columns: vec![cols.len()],
                    reference_level: None,
                    dummy_levels: vec![],
                });
                cols.push(v.clone());
            }
            Column::Binary(v) => {
                coding_map.push(CodingEntry {
                    column: name.clone(),
                    design_columns: vec![cols.len()],
                    reference_level: None,
                    dummy_levels: vec![],
                });
                cols.push(v.iter().map(|&b| f64::from(b)).collect());
            }
            Column::Categorical { levels, codes } => {
                if levels.len() < 2 {
                    return Err(Error::DegenerateFactor(name.clone()));
                }
                for &c in codes {
                    if c >= levels.len() {
                        return Err(Error::UnknownLevel(format!("{name}: code {c}")));
                    }
                }
                let mut design_columns = Vec::new();
                let mut dummy_levels = Vec::new();
                for (li, level) in levels.iter().enumerate().skip(1) {
                    design_columns.push(cols.len());
                    dummy_levels.push(level.clone());
                    cols.push(codes.iter().map(|&c| f64::from(u8::from(c == li))).collect());
                }
                coding_map.push(CodingEntry {
                    column: name.clone(),
                    design_columns,
                    reference_level: Some(levels[0].clone()),
                    dummy_levels,
                });
            }
        }
    }
    let p = cols.len();
    let matrix = DMatrix::from_fn(n, p, |i, j| cols[j][i]);
    Ok(DesignMatrix { matrix, coding_map, includes_intercept: intercept })
}

/// log(1 + n_exp) transform for the exposure count.
pub fn log_exposure(n_exp: u64) -> f64 {
    (1.0 + n_exp as f64).ln()
}

/// Map a Tenable-style risk-factor label to an ordinal level with k = 4.
pub fn risk_factor_from_label(label: &str) -> Result<OrdinalLevel> {
    let value = match label.trim().to_ascii_lowercase().as_str() {
        "low" => 1,
        "medium" => 2,
        "high" => 3,
        "critical" => 4,
        other => return Err(Error::UnknownRiskFactor(other.to_string())),
    };
    OrdinalLevel::new(value, 4)
}

/// Inverse of [`risk_factor_from_label`].
pub fn risk_factor_label(level: OrdinalLevel) -> &'static str {
    match level.value {
        1 => "Low",
        2 => "Medium",
        3 => "High",
        _ => "Critical",
    }
}

/// Which regressors enter the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressorSet {
    /// C, I, A, AV, AC, exposure, exploit.
    Full,
    /// AV, AC, exposure, exploit.
    Technical,
}

impl RegressorSet {
    pub fn names(self) -> &'static [&'static str] {
        match self {
            RegressorSet::Full => &["xc", "xi", "xa", "xav", "xac", "exposure", "exploit"],
            RegressorSet::Technical => &["xav", "xac", "exposure", "exploit"],
        }
    }
}

/// Build a Dataset from vulnerability records with the requested regressor
/// set. Exposure enters raw by default; `log_exp` applies log(1+x).
pub fn records_to_dataset(
    records: &[VulnRecord],
    set: RegressorSet,
    log_exp: bool,
) -> Result<Dataset> {
    let responses: Vec<OrdinalLevel> = records.iter().map(|r| r.risk_factor).collect();
    let expo = |r: &VulnRecord| if log_exp { log_exposure(r.exposure) } else { r.exposure as f64 };
    let mut columns: Vec<(String, Column)> = Vec::new();
    for &name in set.names() {
        let col = match name {
            "xc" => Column::Continuous(records.iter().map(|r| r.xc).collect()),
            "xi" => Column::Continuous(records.iter().map(|r| r.xi).collect()),
            "xa" => Column::Continuous(records.iter().map(|r| r.xa).collect()),
            "xav" => Column::Continuous(records.iter().map(|r| r.xav).collect()),
            "xac" => Column::Continuous(records.iter().map(|r| r.xac).collect()),
            "exposure" => Column::Continuous(records.iter().map(expo).collect()),
            "exploit" => Column::Binary(records.iter().map(|r| u8::from(r.exploit)).collect()),
            _ => unreachable!(),
        };
        columns.push((name.to_string(), col));
    }
    Dataset::new(responses, columns)
}

pub const DATASET_HEADER: &str = "cve,xc,xi,xa,xav,xac,exposure,exploit,risk_factor";

/// Read the canonical dataset CSV (`cve,xc,xi,xa,xav,xac,exposure,exploit,risk_factor`).
/// `risk_factor` accepts a label or an integer 1–4.
pub fn read_dataset_csv(path: &Path) -> Result<Vec<VulnRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let expected: Vec<&str> = DATASET_HEADER.split(',').collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse(format!("unexpected dataset header: {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut out = Vec::new();
    for (lineno, row) in rdr.records().enumerate() {
        let row = row?;
        let field = |i: usize| -> Result<&str> {
            row.get(i).ok_or_else(|| Error::Parse(format!("line {}: missing field {i}", lineno + 2)))
        };
        let num = |i: usize| -> Result<f64> {
            field(i)?.trim().parse().map_err(|_| Error::Parse(format!("line {}: bad number in field {i}", lineno + 2)))
        };
        let rf_raw = field(8)?.trim();
        let risk_factor = match rf_raw.parse::<usize>() {
            Ok(v) => OrdinalLevel::new(v, 4)?,
            Err(_) => risk_factor_from_label(rf_raw)?,
        };
        let exploit = match field(7)?.trim() {
            "0" => false,
            "1" => true,
            other => return Err(Error::Parse(format!("line {}: exploit must be 0/1, got {other}", lineno + 2))),
        };
        out.push(VulnRecord {
            cve_id: field(0)?.trim().to_string(),
            xc: num(1)?,
            xi: num(2)?,
            xa: num(3)?,
            xav: num(4)?,
            xac: num(5)?,
            exposure: field(6)?.trim().parse().map_err(|_| Error::Parse(format!("line {}: bad exposure", lineno + 2)))?,
            exploit,
            risk_factor,
        });
    }
    Ok(out)
}

/// Write records as the canonical dataset CSV. Deterministic formatting so
/// that a read → write round trip is byte-identical.
pub fn write_dataset_csv<W: Write>(mut w: W, records: &[VulnRecord]) -> Result<()> {
    writeln!(w, "{DATASET_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.cve_id,
            r.xc,
            r.xi,
            r.xa,
            r.xav,
            r.xac,
            r.exposure,
            u8::from(r.exploit),
            r.risk_factor.value
        )?;
    }
    Ok(())
}
