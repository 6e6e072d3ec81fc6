//! Benchmark-table output: CSV with the canonical column layout and a
//! JSON twin carrying the same numbers at full precision.

use std::io::Write;
use std::path::Path;

use carbounds::mcsim::McTable;

use crate::io::CliError;

/// Shortest representation that parses back to the identical value, so
/// the CSV and JSON outputs carry byte-identical numbers.
fn fmt_f64(value: f64) -> String {
    format!("{value}")
}

/// Writes the benchmark table as CSV: identification columns, the four
/// rejection-rate columns (both identified-set endpoints, then the
/// outside points 0.9×lower and 1.1×upper), the average CI length, and
/// the Monte Carlo standard errors of the rejection rates.
pub fn write_table_csv<W: Write>(writer: W, table: &McTable) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "design",
        "mechanism",
        "variant",
        "set_lower",
        "set_upper",
        "rej_at_set_lower_pct",
        "rej_at_set_upper_pct",
        "rej_below_set_pct",
        "rej_above_set_pct",
        "avg_ci_length",
        "mc_se_at_set_lower_pct",
        "mc_se_at_set_upper_pct",
        "mc_se_below_set_pct",
        "mc_se_above_set_pct",
    ])?;
    for row in &table.rows {
        let result = &row.result;
        let mut record = vec![
            row.design.clone(),
            row.mechanism.clone(),
            row.variant.clone(),
            fmt_f64(row.set_lower),
            fmt_f64(row.set_upper),
        ];
        record.extend(result.rejection_pct.iter().map(|&v| fmt_f64(v)));
        record.push(fmt_f64(result.avg_ci_length));
        record.extend(result.rejection_se_pct.iter().map(|&v| fmt_f64(v)));
        wtr.write_record(&record)?;
    }
    wtr.flush().map_err(|e| CliError::Io {
        path: "<writer>".into(),
        source: e,
    })?;
    Ok(())
}

/// Writes the CSV and JSON outputs next to each other: `{out}.csv` and
/// `{out}.json`.
pub fn write_table_files(out_base: &str, table: &McTable) -> Result<(), CliError> {
    let csv_path = format!("{out_base}.csv");
    let json_path = format!("{out_base}.json");
    if let Some(parent) = Path::new(&csv_path).parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::Io {
                path: parent.display().to_string(),
                source: e,
            })?;
        }
    }

    let csv_file = std::fs::File::create(&csv_path).map_err(|e| CliError::Io {
        path: csv_path.clone(),
        source: e,
    })?;
    write_table_csv(csv_file, table)?;

    let mut json_file = std::fs::File::create(&json_path).map_err(|e| CliError::Io {
        path: json_path.clone(),
        source: e,
    })?;
    serde_json::to_writer_pretty(&mut json_file, table)
        .map_err(|e| CliError::Input(format!("JSON serialization failed: {e}")))?;
    writeln!(json_file).map_err(|e| CliError::Io {
        path: json_path.clone(),
        source: e,
    })?;
    Ok(())
}
