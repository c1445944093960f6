//! Parsers and assembly pipeline turning exported records from the four
//! CVE data sources (NVD, Shodan, ExploitDB, Tenable) into the dataset CSV
//! schema. Offline-first: files in, files out.
//!
//! Fetch contract for a live fetcher (not implemented here): NVD REST
//! `…/rest/json/cve/1.0/{CVE}` for the CVSS-v2 vector; Shodan query
//! `vuln:{CVE} country:IT` for the exposure count; ExploitDB and Tenable
//! exports keyed by CVE id.

use crate::datamodel::{risk_factor_from_label, OrdinalLevel, VulnRecord};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Originating database of a parsed record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Nvd,
    Shodan,
    Exploitdb,
    Tenable,
}

/// Source-specific parsed payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Nvd { xc: f64, xi: f64, xa: f64, xav: f64, xac: f64, au: f64 },
    Shodan { country: String, count: u64 },
    Exploitdb { edb_id: u64 },
    Tenable { risk_factor: OrdinalLevel },
}

/// One parsed record from one source file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub source: Source,
    pub cve_id: String,
    pub payload: Payload,
}

/// Validate a `CVE-\d{4}-\d{4,}` identifier.
pub fn valid_cve_id(id: &str) -> bool {
    let mut parts = id.split('-');
    let (Some(prefix), Some(year), Some(number), None) =
        (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return false;
    };
    prefix == "CVE"
        && year.len() == 4
        && year.bytes().all(|b| b.is_ascii_digit())
        && number.len() >= 4
        && number.bytes().all(|b| b.is_ascii_digit())
}

fn impact_value(field: &str, label: &str) -> Result<f64> {
    match label.trim().to_ascii_lowercase().as_str() {
        "none" => Ok(0.0),
        "partial" => Ok(0.275),
        "complete" => Ok(0.660),
        _ => Err(Error::UnknownLabel(format!("{field}: {label}"))),
    }
}

/// Map the six CVSS-v2 ordinal labels to their numeric quantifications
/// (C, I, A, AV, AC, Au). Au is retained in the raw output but is not part
/// of the model dataset.
pub fn parse_nvd_vector(labels: [&str; 6]) -> Result<(f64, f64, f64, f64, f64, f64)> {
    let xc = impact_value("confidentiality", labels[0])?;
    let xi = impact_value("integrity", labels[1])?;
    let xa = impact_value("availability", labels[2])?;
    let xav = match labels[3].trim().to_ascii_lowercase().as_str() {
        "local" => 0.395,
        "adjacent" | "adjacent network" | "local network" => 0.646,
        "network" => 1.0,
        other => return Err(Error::UnknownLabel(format!("access_vector: {other}"))),
    };
    let xac = match labels[4].trim().to_ascii_lowercase().as_str() {
        "high" => 0.35,
        "medium" => 0.61,
        "low" => 0.71,
        other => return Err(Error::UnknownLabel(format!("access_complexity: {other}"))),
    };
    let au = match labels[5].trim().to_ascii_lowercase().as_str() {
        "none" => 0.704,
        "single" => 0.56,
        "multiple" => 0.45,
        other => return Err(Error::UnknownLabel(format!("authentication: {other}"))),
    };
    Ok((xc, xi, xa, xav, xac, au))
}

/// Records plus per-line diagnostics for the malformed remainder.
#[derive(Debug, Clone)]
pub struct LoadResult {
    pub records: Vec<SourceRecord>,
    pub diagnostics: Vec<String>,
}

#[derive(Deserialize)]
struct NvdEntry {
    cve: String,
    cvss_v2: Option<NvdCvss>,
}

#[derive(Deserialize)]
struct NvdCvss {
    confidentiality: String,
    integrity: String,
    availability: String,
    access_vector: String,
    access_complexity: String,
    authentication: String,
}

fn load_nvd(path: &Path) -> Result<LoadResult> {
    let text = std::fs::read_to_string(path)?;
    let entries: Vec<serde_json::Value> = serde_json::from_str(&text)?;
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, value) in entries.into_iter().enumerate() {
        let entry: NvdEntry = match serde_json::from_value(value) {
            Ok(e) => e,
            Err(e) => {
                diagnostics.push(format!("nvd entry {i}: {e}"));
                continue;
            }
        };
        if !valid_cve_id(&entry.cve) {
            diagnostics.push(format!("nvd entry {i}: invalid cve id {}", entry.cve));
            continue;
        }
        let Some(c) = entry.cvss_v2 else {
            diagnostics.push(format!("nvd entry {i} ({}): missing cvss_v2 block", entry.cve));
            continue;
        };
        match parse_nvd_vector([
            &c.confidentiality,
            &c.integrity,
            &c.availability,
            &c.access_vector,
            &c.access_complexity,
            &c.authentication,
        ]) {
            Ok((xc, xi, xa, xav, xac, au)) => records.push(SourceRecord {
                source: Source::Nvd,
                cve_id: entry.cve,
                payload: Payload::Nvd { xc, xi, xa, xav, xac, au },
            }),
            Err(e) => diagnostics.push(format!("nvd entry {i} ({}): {e}", entry.cve)),
        }
    }
    Ok(LoadResult { records, diagnostics })
}

fn load_csv_source<F>(path: &Path, expected: &[&str], mut parse: F) -> Result<LoadResult>
where
    F: FnMut(&csv::StringRecord) -> Result<SourceRecord>,
{
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse(format!(
            "unexpected header {:?}, expected {:?}",
            headers.iter().collect::<Vec<_>>(),
            expected
        )));
    }
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        match row {
            Ok(row) => match parse(&row) {
                Ok(rec) if valid_cve_id(&rec.cve_id) => records.push(rec),
                Ok(rec) => diagnostics.push(format!("line {line}: invalid cve id {}", rec.cve_id)),
                Err(e) => diagnostics.push(format!("line {line}: {e}")),
            },
            Err(e) => diagnostics.push(format!("line {line}: {e}")),
        }
    }
    Ok(LoadResult { records, diagnostics })
}

/// Parse one source file (NVD: JSON array; Shodan `cve,country,count`;
/// ExploitDB `cve,edb_id`; Tenable `cve,risk_factor`). Malformed entries go
/// to the diagnostics list; a file with zero valid records is an error.
pub fn load_fixture(path: &Path, source: Source) -> Result<LoadResult> {
    let field = |row: &csv::StringRecord, i: usize| -> Result<String> {
        row.get(i)
            .map(|s| s.trim().to_string())
            .ok_or_else(|| Error::Parse(format!("missing field {i}")))
    };
    let result = match source {
        Source::Nvd => load_nvd(path)?,
        Source::Shodan => load_csv_source(path, &["cve", "country", "count"], |row| {
            let raw = field(row, 2)?;
            let count = raw.parse().map_err(|_| Error::Parse(format!("bad count {raw}")))?;
            Ok(SourceRecord {
                source: Source::Shodan,
                cve_id: field(row, 0)?,
                payload: Payload::Shodan { country: field(row, 1)?, count },
            })
        })?,
        Source::Exploitdb => load_csv_source(path, &["cve", "edb_id"], |row| {
            let raw = field(row, 1)?;
            let edb_id = raw.parse().map_err(|_| Error::Parse(format!("bad edb_id {raw}")))?;
            Ok(SourceRecord {
                source: Source::Exploitdb,
                cve_id: field(row, 0)?,
                payload: Payload::Exploitdb { edb_id },
            })
        })?,
        Source::Tenable => load_csv_source(path, &["cve", "risk_factor"], |row| {
            let risk_factor = risk_factor_from_label(&field(row, 1)?)?;
            Ok(SourceRecord {
                source: Source::Tenable,
                cve_id: field(row, 0)?,
                payload: Payload::Tenable { risk_factor },
            })
        })?,
    };
    if result.records.is_empty() {
        return Err(Error::Parse(format!(
            "{}: no valid records ({} malformed)",
            path.display(),
            result.diagnostics.len()
        )));
    }
    Ok(result)
}

/// One rejected CVE and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub cve: String,
    pub reason: String,
}

/// Join output: assembled rows, rejection report, and dedup warnings.
#[derive(Debug, Clone)]
pub struct JoinResult {
    pub records: Vec<VulnRecord>,
    pub rejections: Vec<Rejection>,
    pub warnings: Vec<String>,
}

/// Join parsed records on cve_id. A row is emitted when NVD, Shodan, and
/// Tenable all cover the CVE; the exploit flag is 1 iff at least one
/// ExploitDB id exists (absence is not a rejection). Duplicates within one
/// source keep the last occurrence (Tenable: the first risk factor) with a
/// warning. Output is sorted by cve_id.
pub fn join_sources(records: &[SourceRecord]) -> JoinResult {
    let mut nvd: BTreeMap<String, (f64, f64, f64, f64, f64)> = BTreeMap::new();
    let mut shodan: BTreeMap<String, u64> = BTreeMap::new();
    let mut exploit: BTreeMap<String, u64> = BTreeMap::new();
    let mut tenable: BTreeMap<String, OrdinalLevel> = BTreeMap::new();
    let mut warnings = Vec::new();

    for rec in records {
        let id = rec.cve_id.clone();
        match &rec.payload {
            Payload::Nvd { xc, xi, xa, xav, xac, .. } => {
                if nvd.insert(id.clone(), (*xc, *xi, *xa, *xav, *xac)).is_some() {
                    warnings.push(format!("duplicate nvd record for {id}: keeping last"));
                }
            }
            Payload::Shodan { count, .. } => {
                if shodan.insert(id.clone(), *count).is_some() {
                    warnings.push(format!("duplicate shodan record for {id}: keeping last"));
                }
            }
            Payload::Exploitdb { edb_id } => {
                exploit.insert(id, *edb_id);
            }
            Payload::Tenable { risk_factor } => {
                if let Some(first) = tenable.get(&id) {
                    if *first != *risk_factor {
                        warnings.push(format!(
                            "conflicting tenable risk factors for {id}: keeping first"
                        ));
                    }
                } else {
                    tenable.insert(id, *risk_factor);
                }
            }
        }
    }

    // Base set: every CVE seen in any source, deterministically ordered.
    let mut all_ids: Vec<&String> = nvd
        .keys()
        .chain(shodan.keys())
        .chain(exploit.keys())
        .chain(tenable.keys())
        .collect();
    all_ids.sort();
    all_ids.dedup();

    let mut out = Vec::new();
    let mut rejections = Vec::new();
    for id in all_ids {
        let mut missing = Vec::new();
        if !nvd.contains_key(id) {
            missing.push("no cvss");
        }
        if !shodan.contains_key(id) {
            missing.push("no exposure");
        }
        if !tenable.contains_key(id) {
            missing.push("no risk_factor");
        }
        if !missing.is_empty() {
            rejections.push(Rejection { cve: id.clone(), reason: missing.join(";") });
            continue;
        }
        let (xc, xi, xa, xav, xac) = nvd[id];
        out.push(VulnRecord {
            cve_id: id.clone(),
            xc,
            xi,
            xa,
            xav,
            xac,
            exposure: shodan[id],
            exploit: exploit.contains_key(id),
            risk_factor: tenable[id],
        });
    }
    JoinResult { records: out, rejections, warnings }
}

/// Rejection report CSV `cve,reason`.
pub fn rejection_csv(rejections: &[Rejection]) -> String {
    let mut out = String::from("cve,reason\n");
    for r in rejections {
        let _ = writeln!(out, "{},{}", r.cve, r.reason);
    }
    out
}
