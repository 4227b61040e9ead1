use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::table::{CohortTable, CohortTableBuilder, Covariate, Factor};

/// Column-role mapping for CSV ingestion. Every header column must be
/// accounted for: a role column, a typed covariate, or explicitly ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schema {
    /// Optional unit-id column; row index is used when absent.
    #[serde(default)]
    pub unit_id: Option<String>,
    pub group: String,
    pub stratum: String,
    pub decision: String,
    pub assessed: String,
    pub passed: String,
    pub cohort: String,
    #[serde(default)]
    pub numeric: Vec<String>,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub ignore: Vec<String>,
    /// Reference group level; defaults to a level named "White" when present,
    /// otherwise the first observed level.
    #[serde(default)]
    pub reference_group: Option<String>,
}

impl Schema {
    /// Reject schemas that give one column two roles. In particular a schema
    /// that lists the group column as a covariate must fail: the group is
    /// never a model feature.
    pub fn validate(&self) -> Result<()> {
        let mut seen: HashSet<&str> = HashSet::new();
        let mut roles: Vec<&str> = vec![
            &self.group,
            &self.stratum,
            &self.decision,
            &self.assessed,
            &self.passed,
            &self.cohort,
        ];
        if let Some(id) = &self.unit_id {
            roles.push(id);
        }
        for col in roles
            .into_iter()
            .chain(self.numeric.iter().map(|s| s.as_str()))
            .chain(self.categorical.iter().map(|s| s.as_str()))
            .chain(self.ignore.iter().map(|s| s.as_str()))
        {
            if !seen.insert(col) {
                return Err(Error::Schema(format!(
                    "column '{col}' is assigned more than one role"
                )));
            }
        }
        Ok(())
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

fn parse_binary(cell: &str, column: &str, row: usize) -> Result<u8> {
    match cell {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(Error::Invariant {
            row,
            message: format!("column '{column}': expected 0 or 1, got '{cell}'"),
        }),
    }
}

/// Load and validate a cohort table from a headered CSV file.
///
/// Missing cells are encoded as the empty string or `NA`. Lines starting
/// with `#` before the header are treated as provenance comments.
pub fn load_csv<P: AsRef<Path>>(path: P, schema: &Schema) -> Result<CohortTable> {
    schema.validate()?;
    let file = std::fs::File::open(path.as_ref())?;
    let mut reader = BufReader::new(file);
    // skip provenance comment lines
    let mut content = String::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        if line.starts_with('#') {
            continue;
        }
        content.push_str(&line);
        reader.read_to_string(&mut content)?;
        break;
    }
    load_csv_str(&content, schema)
}

/// Like [`load_csv`] but over an in-memory CSV document.
pub fn load_csv_str(content: &str, schema: &Schema) -> Result<CohortTable> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(content.as_bytes());
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing required column '{name}'")))
    };

    let group_idx = col(&schema.group)?;
    let stratum_idx = col(&schema.stratum)?;
    let decision_idx = col(&schema.decision)?;
    let assessed_idx = col(&schema.assessed)?;
    let passed_idx = col(&schema.passed)?;
    let cohort_idx = col(&schema.cohort)?;
    let unit_idx = match &schema.unit_id {
        Some(name) => Some(col(name)?),
        None => None,
    };
    let numeric_idx: Vec<(usize, &String)> = schema
        .numeric
        .iter()
        .map(|n| col(n).map(|i| (i, n)))
        .collect::<Result<_>>()?;
    let categorical_idx: Vec<(usize, &String)> = schema
        .categorical
        .iter()
        .map(|n| col(n).map(|i| (i, n)))
        .collect::<Result<_>>()?;

    // every header column must have a role
    let mut known: HashSet<usize> = HashSet::new();
    known.extend([group_idx, stratum_idx, decision_idx, assessed_idx, passed_idx, cohort_idx]);
    if let Some(i) = unit_idx {
        known.insert(i);
    }
    known.extend(numeric_idx.iter().map(|(i, _)| *i));
    known.extend(categorical_idx.iter().map(|(i, _)| *i));
    for ignored in &schema.ignore {
        if let Ok(i) = col(ignored) {
            known.insert(i);
        }
    }
    for (i, h) in headers.iter().enumerate() {
        if !known.contains(&i) {
            return Err(Error::Schema(format!(
                "column '{h}' has no declared type (numeric, categorical, or ignore)"
            )));
        }
    }

    let mut unit_id = Vec::new();
    let mut group_labels: Vec<String> = Vec::new();
    let mut stratum_labels: Vec<String> = Vec::new();
    let mut cohort_labels: Vec<String> = Vec::new();
    let mut decision = Vec::new();
    let mut assessed = Vec::new();
    let mut passed = Vec::new();
    let mut numeric_vals: Vec<(Vec<f64>, Vec<bool>)> =
        numeric_idx.iter().map(|_| (Vec::new(), Vec::new())).collect();
    let mut cat_labels: Vec<Vec<Option<String>>> =
        categorical_idx.iter().map(|_| Vec::new()).collect();

    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Invariant {
                row,
                message: format!(
                    "expected {} fields, found {}",
                    headers.len(),
                    record.len()
                ),
            });
        }
        let get = |i: usize| record.get(i).unwrap_or("").trim();

        for (name, idx) in [
            (&schema.group, group_idx),
            (&schema.stratum, stratum_idx),
            (&schema.cohort, cohort_idx),
        ] {
            if is_missing(get(idx)) {
                return Err(Error::Invariant {
                    row,
                    message: format!("column '{name}' must not be missing"),
                });
            }
        }
        if is_missing(get(decision_idx)) || is_missing(get(assessed_idx)) {
            return Err(Error::Invariant {
                row,
                message: "decision and assessed flags must not be missing".to_string(),
            });
        }

        unit_id.push(match unit_idx {
            Some(i) => get(i).to_string(),
            None => row.to_string(),
        });
        group_labels.push(get(group_idx).to_string());
        stratum_labels.push(get(stratum_idx).to_string());
        cohort_labels.push(get(cohort_idx).to_string());
        let a = parse_binary(get(decision_idx), &schema.decision, row)?;
        let t = parse_binary(get(assessed_idx), &schema.assessed, row)?;
        let r_cell = get(passed_idx);
        let r = if is_missing(r_cell) {
            if t == 1 {
                return Err(Error::Invariant {
                    row,
                    message: format!(
                        "column '{}' missing for an assessed unit",
                        schema.passed
                    ),
                });
            }
            0
        } else {
            parse_binary(r_cell, &schema.passed, row)?
        };
        if r == 1 && t == 0 {
            return Err(Error::Invariant {
                row,
                message: "passed without assessed".to_string(),
            });
        }
        decision.push(a);
        assessed.push(t);
        passed.push(r);

        for (k, (i, name)) in numeric_idx.iter().enumerate() {
            let cell = get(*i);
            if is_missing(cell) {
                numeric_vals[k].0.push(f64::NAN);
                numeric_vals[k].1.push(true);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Invariant {
                    row,
                    message: format!("column '{name}': unparseable numeric cell '{cell}'"),
                })?;
                numeric_vals[k].0.push(v);
                numeric_vals[k].1.push(false);
            }
        }
        for (k, (i, _)) in categorical_idx.iter().enumerate() {
            let cell = get(*i);
            cat_labels[k].push(if is_missing(cell) {
                None
            } else {
                Some(cell.to_string())
            });
        }
    }

    let covariates = numeric_idx
        .iter()
        .zip(numeric_vals)
        .map(|((_, name), (values, missing))| Covariate::Numeric {
            name: (*name).clone(),
            values,
            missing,
        })
        .chain(categorical_idx.iter().zip(cat_labels).map(|((_, name), cells)| {
            let mut levels: Vec<String> = Vec::new();
            let mut codes = Vec::with_capacity(cells.len());
            let mut missing = Vec::with_capacity(cells.len());
            for cell in cells {
                match cell {
                    Some(label) => {
                        let code = match levels.iter().position(|l| *l == label) {
                            Some(i) => i as u32,
                            None => {
                                levels.push(label);
                                levels.len() as u32 - 1
                            }
                        };
                        codes.push(code);
                        missing.push(false);
                    }
                    None => {
                        codes.push(0);
                        missing.push(true);
                    }
                }
            }
            Covariate::Categorical {
                name: (*name).clone(),
                levels,
                codes,
                missing,
            }
        }))
        .collect();

    CohortTableBuilder {
        unit_id,
        group: Factor::from_labels(&group_labels),
        stratum: Factor::from_labels(&stratum_labels),
        cohort: Factor::from_labels(&cohort_labels),
        decision,
        assessed,
        passed,
        covariates,
        reference_group: schema.reference_group.clone(),
    }
    .build()
}

/// Write a cohort table as CSV; the optional provenance line is emitted as
/// a leading `#` comment that [`load_csv`] skips.
pub fn write_csv<W: Write>(table: &CohortTable, mut out: W, provenance: Option<&str>) -> Result<()> {
    if let Some(p) = provenance {
        writeln!(out, "# {p}")?;
    }
    let mut header = vec![
        "unit_id".to_string(),
        "group".to_string(),
        "stratum".to_string(),
        "cohort".to_string(),
        "decision".to_string(),
        "assessed".to_string(),
        "passed".to_string(),
    ];
    header.extend(table.covariates().iter().map(|c| c.name().to_string()));
    writeln!(out, "{}", header.join(","))?;
    for row in 0..table.n_units() {
        let mut fields = vec![
            table.unit_ids()[row].clone(),
            table.group().level_of(row).to_string(),
            table.stratum().level_of(row).to_string(),
            table.cohort().level_of(row).to_string(),
            table.decision()[row].to_string(),
            table.assessed()[row].to_string(),
            table.passed()[row].to_string(),
        ];
        for cov in table.covariates() {
            match cov {
                Covariate::Numeric { values, missing, .. } => {
                    fields.push(if missing[row] {
                        String::new()
                    } else {
                        format!("{}", values[row])
                    });
                }
                Covariate::Categorical { levels, codes, missing, .. } => {
                    fields.push(if missing[row] {
                        String::new()
                    } else {
                        levels[codes[row] as usize].clone()
                    });
                }
            }
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Schema matching [`write_csv`] output, for round-tripping generated data.
pub fn self_schema(table: &CohortTable) -> Schema {
    let mut numeric = Vec::new();
    let mut categorical = Vec::new();
    for cov in table.covariates() {
        match cov {
            Covariate::Numeric { name, .. } => numeric.push(name.clone()),
            Covariate::Categorical { name, .. } => categorical.push(name.clone()),
        }
    }
    Schema {
        unit_id: Some("unit_id".to_string()),
        group: "group".to_string(),
        stratum: "stratum".to_string(),
        decision: "decision".to_string(),
        assessed: "assessed".to_string(),
        passed: "passed".to_string(),
        cohort: "cohort".to_string(),
        numeric,
        categorical,
        ignore: vec![],
        reference_group: Some(table.reference_group_level().to_string()),
    }
}
