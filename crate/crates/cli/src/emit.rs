use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use kato_core::series::Series;

use crate::runner::RunReport;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Plotdata,
}

pub fn to_json(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serialises");
    s.push('\n');
    s
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect::<String>()
        .trim_matches('_')
        .to_string()
}

/// Every series in the report as `(file stem, series)`, in report order.
pub fn named_series(report: &RunReport) -> Vec<(String, &Series)> {
    let mut out = Vec::new();
    for c in &report.cells {
        let stem = format!("lambda{}_N{}", c.lambda, c.truncation);
        if let Some(d) = &c.diagnostics {
            out.push((format!("{stem}_norm_decay"), &d.norm_decay));
            out.push((format!("{stem}_cesaro"), &d.cesaro));
            for p in &d.dual_power {
                out.push((format!("{stem}_dual_power_{}", sanitize(&p.probe.label())), &p.series));
            }
        }
        if let Some(q) = &c.conservativity {
            out.push((format!("{stem}_conservativity_min_eigenvalue"), &q.min_eigenvalue));
            out.push((format!("{stem}_conservativity_trace"), &q.trace));
            out.push((format!("{stem}_conservativity_origin"), &q.origin));
        }
    }
    out
}

fn render(series: &Series, format: Format) -> String {
    let mut s = String::new();
    match format {
        Format::Csv => s.push_str("n,value\n"),
        Format::Plotdata => s.push_str("# n value\n"),
        Format::Json => unreachable!(),
    }
    let sep = if format == Format::Csv { ',' } else { ' ' };
    for (i, v) in series.values.iter().enumerate() {
        let _ = writeln!(s, "{}{sep}{v:e}", series.start + i);
    }
    s
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.display().to_string(),
        source,
    })
}

/// Writes the report into the directory `out`: `report.json` always, plus one
/// file per series for the tabular formats. Without `out`, JSON is returned
/// for stdout.
pub fn emit(report: &RunReport, format: Format, out: Option<&Path>) -> Result<Option<String>, CliError> {
    let json = to_json(report);
    match format {
        Format::Json => match out {
            Some(dir) => {
                create_dir(dir)?;
                write(&dir.join("report.json"), &json).map(|_| None)
            }
            None => Ok(Some(json)),
        },
        Format::Csv | Format::Plotdata => {
            let dir = out.ok_or_else(|| CliError::Usage("--out <DIR> is required for csv and plotdata output".into()))?;
            create_dir(dir)?;
            let ext = if format == Format::Csv { "csv" } else { "dat" };
            for (name, series) in named_series(report) {
                let path: PathBuf = dir.join(format!("{name}.{ext}"));
                write(&path, &render(series, format))?;
            }
            write(&dir.join("report.json"), &json)?;
            Ok(None)
        }
    }
}
