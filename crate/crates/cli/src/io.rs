//! Dataset, target-probability, and configuration file formats.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use carbounds::Dataset;

/// Errors surfaced by the command-line layer. Library errors pass
/// through untouched so their exit-code classification stays intact.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("missing required column {column:?} in {path} (expected header with y, d, a, s)")]
    MissingColumn { column: &'static str, path: String },
    #[error("bad value at data line {line}, column {column:?}: {detail}")]
    BadValue {
        line: usize,
        column: &'static str,
        detail: String,
    },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Input(String),
    #[error("CSV format error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] carbounds::Error),
}

impl CliError {
    /// Exit status classification: 2 for input problems, 3 for numerical
    /// failures, 4 for degenerate designs.
    pub fn exit_code(&self) -> i32 {
        use carbounds::Error as E;
        match self {
            CliError::Core(err) => match err {
                E::NonConvergence(_) | E::ReplicationFailures { .. } => 3,
                E::DegenerateSupport
                | E::DegenerateStratum(_)
                | E::DegenerateVariance { .. }
                | E::NoTakers(_)
                | E::NoUntreated(_) => 4,
                _ => 2,
            },
            _ => 2,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// How the outcome support is determined for a parsed dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupportMode {
    /// Support endpoints supplied explicitly.
    Explicit(f64, f64),
    /// Use the sample minimum and maximum of the outcome column.
    SampleMinMax,
}

impl SupportMode {
    /// Parses `"sample"` or `"LOW,HIGH"`.
    pub fn parse(text: &str) -> Result<SupportMode, CliError> {
        let t = text.trim();
        if t.eq_ignore_ascii_case("sample") {
            return Ok(SupportMode::SampleMinMax);
        }
        let parts: Vec<&str> = t.split(',').collect();
        if parts.len() == 2 {
            let lo = parts[0].trim().parse::<f64>();
            let hi = parts[1].trim().parse::<f64>();
            if let (Ok(lo), Ok(hi)) = (lo, hi) {
                if lo.is_finite() && hi.is_finite() {
                    return Ok(SupportMode::Explicit(lo, hi));
                }
            }
        }
        Err(CliError::Input(format!(
            "--support must be \"sample\" or \"LOW,HIGH\" with finite numbers, got {text:?}"
        )))
    }
}

/// Raw parsed dataset columns, before support resolution.
struct RawColumns {
    y: Vec<f64>,
    d: Vec<u8>,
    a: Vec<u8>,
    labels: Vec<String>,
}

fn parse_indicator(
    raw: Option<&str>,
    line: usize,
    column: &'static str,
) -> Result<u8, CliError> {
    let text = raw.map(str::trim).unwrap_or("");
    match text {
        "0" => Ok(0),
        "1" => Ok(1),
        "" => Err(CliError::BadValue {
            line,
            column,
            detail: "missing field".into(),
        }),
        other => Err(CliError::BadValue {
            line,
            column,
            detail: format!("expected 0 or 1, got {other:?}"),
        }),
    }
}

fn parse_columns<R: std::io::Read>(reader: R, path: &str) -> Result<RawColumns, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    let index_of = |name: &'static str| -> Result<usize, CliError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or(CliError::MissingColumn {
                column: name,
                path: path.to_string(),
            })
    };
    let (iy, id, ia, is) = (index_of("y")?, index_of("d")?, index_of("a")?, index_of("s")?);

    let extra: Vec<&str> = headers
        .iter()
        .filter(|h| !matches!(*h, "y" | "d" | "a" | "s"))
        .collect();
    if !extra.is_empty() {
        eprintln!(
            "warning: ignoring extra column(s) in {path}: {}",
            extra.join(", ")
        );
    }

    let mut cols = RawColumns {
        y: Vec::new(),
        d: Vec::new(),
        a: Vec::new(),
        labels: Vec::new(),
    };
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 1; // 1-based data line, header excluded
        let record = record?;
        let y_text = record.get(iy).map(str::trim).unwrap_or("");
        let y: f64 = y_text.parse().map_err(|_| CliError::BadValue {
            line,
            column: "y",
            detail: if y_text.is_empty() {
                "missing field".into()
            } else {
                format!("expected a number, got {y_text:?}")
            },
        })?;
        if !y.is_finite() {
            return Err(CliError::BadValue {
                line,
                column: "y",
                detail: format!("outcome must be finite, got {y}"),
            });
        }
        cols.y.push(y);
        cols.d.push(parse_indicator(record.get(id), line, "d")?);
        cols.a.push(parse_indicator(record.get(ia), line, "a")?);
        let label = record.get(is).map(str::trim).unwrap_or("");
        if label.is_empty() {
            return Err(CliError::BadValue {
                line,
                column: "s",
                detail: "missing field".into(),
            });
        }
        cols.labels.push(label.to_string());
    }
    Ok(cols)
}

/// Reads a dataset CSV with header columns y (real outcome), d (0/1
/// treatment received), a (0/1 treatment assigned), s (stratum label).
/// Extra columns are ignored with a warning on stderr.
pub fn parse_dataset_csv(path: &Path, support: SupportMode) -> Result<Dataset, CliError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let cols = parse_columns(file, &path.display().to_string())?;
    let (y_low, y_high) = match support {
        SupportMode::Explicit(lo, hi) => (lo, hi),
        SupportMode::SampleMinMax => {
            let lo = cols.y.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = cols.y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        }
    };
    Ok(Dataset::from_labels(
        cols.y, cols.d, cols.a, cols.labels, y_low, y_high,
    )?)
}

/// Writes a dataset in the same CSV schema `parse_dataset_csv` reads.
/// Outcomes use the shortest representation that parses back to the
/// identical value, so a write/parse round trip is lossless.
pub fn write_dataset_csv<W: Write>(writer: W, dataset: &Dataset) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["y", "d", "a", "s"])?;
    for i in 0..dataset.n() {
        wtr.write_record([
            format!("{}", dataset.y[i]),
            dataset.d[i].to_string(),
            dataset.a[i].to_string(),
            dataset.stratum_labels[dataset.s[i]].clone(),
        ])?;
    }
    wtr.flush().map_err(|e| CliError::Io {
        path: "<writer>".into(),
        source: e,
    })?;
    Ok(())
}

/// Reads a target-assignment-probability file: CSV with header columns
/// s (stratum label) and pi (probability of assignment to treatment).
pub fn parse_target_probs(path: &Path) -> Result<HashMap<String, f64>, CliError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = rdr.headers()?.clone();
    let path_text = path.display().to_string();
    let is = headers
        .iter()
        .position(|h| h == "s")
        .ok_or(CliError::MissingColumn {
            column: "s",
            path: path_text.clone(),
        })?;
    let ip = headers
        .iter()
        .position(|h| h == "pi")
        .ok_or(CliError::MissingColumn {
            column: "pi",
            path: path_text.clone(),
        })?;

    let mut map = HashMap::new();
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 1;
        let record = record?;
        let label = record.get(is).map(str::trim).unwrap_or("");
        if label.is_empty() {
            return Err(CliError::BadValue {
                line,
                column: "s",
                detail: "missing field".into(),
            });
        }
        let p_text = record.get(ip).map(str::trim).unwrap_or("");
        let p: f64 = p_text.parse().map_err(|_| CliError::BadValue {
            line,
            column: "pi",
            detail: format!("expected a number, got {p_text:?}"),
        })?;
        if map.insert(label.to_string(), p).is_some() {
            return Err(CliError::BadValue {
                line,
                column: "s",
                detail: format!("duplicate stratum label {label:?}"),
            });
        }
    }
    Ok(map)
}

/// Parsed mc-table configuration.
#[derive(Debug, Clone)]
pub struct TableConfig {
    pub table: carbounds::mcsim::TableKind,
    pub n: usize,
    pub reps: usize,
    pub alpha: f64,
    pub seed: u64,
    pub out: String,
}

/// Parses a plain-text key = value configuration. Recognized keys:
/// table (ate|att|1|2), n, reps, alpha, seed, out. `#` starts a comment.
pub fn parse_table_config(path: &Path) -> Result<TableConfig, CliError> {
    use carbounds::mcsim::TableKind;

    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut seen: HashMap<String, String> = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Input(format!(
                "config line {}: expected `key = value`, got {:?}",
                lineno + 1,
                raw.trim()
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !matches!(key.as_str(), "table" | "n" | "reps" | "alpha" | "seed" | "out") {
            return Err(CliError::Input(format!(
                "config line {}: unknown key {key:?}",
                lineno + 1
            )));
        }
        if seen.insert(key.clone(), value).is_some() {
            return Err(CliError::Input(format!(
                "config line {}: duplicate key {key:?}",
                lineno + 1
            )));
        }
    }

    let required = |key: &str| -> Result<&String, CliError> {
        seen.get(key)
            .ok_or_else(|| CliError::Input(format!("config is missing required key {key:?}")))
    };
    let parse_num = |key: &str, value: &str| -> Result<f64, CliError> {
        value
            .parse::<f64>()
            .map_err(|_| CliError::Input(format!("config key {key:?}: bad number {value:?}")))
    };

    let table = match required("table")?.to_ascii_lowercase().as_str() {
        "ate" | "1" => TableKind::AteTable,
        "att" | "2" => TableKind::AttTable,
        other => {
            return Err(CliError::Input(format!(
                "config key \"table\": expected ate, att, 1, or 2, got {other:?}"
            )))
        }
    };
    let n = parse_num("n", required("n")?)? as usize;
    let reps = parse_num("reps", required("reps")?)? as usize;
    let seed = parse_num("seed", required("seed")?)? as u64;
    let alpha = match seen.get("alpha") {
        Some(v) => parse_num("alpha", v)?,
        None => 0.05,
    };
    let out = match seen.get("out") {
        Some(v) => v.clone(),
        None => {
            let mut name = String::new();
            let _ = write!(
                name,
                "table-{}",
                match table {
                    TableKind::AteTable => "ate",
                    TableKind::AttTable => "att",
                }
            );
            name
        }
    };
    if n == 0 || reps == 0 {
        return Err(CliError::Input(
            "config keys \"n\" and \"reps\" must be positive".into(),
        ));
    }
    Ok(TableConfig {
        table,
        n,
        reps,
        alpha,
        seed,
        out,
    })
}
