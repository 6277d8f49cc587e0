//! File writers. CSVs open with `# `-prefixed lines holding the resolved
//! config; JSON documents carry it under `"config"`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use edm_raim::montecarlo::OverlayRow;
use edm_raim::TrialRecord;
use serde::Serialize;

use crate::CliError;

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn write_header<W: Write>(w: &mut W, provenance: &str) -> std::io::Result<()> {
    for line in provenance.lines() {
        if line.is_empty() {
            writeln!(w, "#")?;
        } else {
            writeln!(w, "# {line}")?;
        }
    }
    Ok(())
}

fn write_csv<F>(path: &Path, provenance: &str, header: &[&str], rows: F) -> Result<(), CliError>
where
    F: FnOnce(&mut csv::Writer<&mut BufWriter<File>>) -> csv::Result<()>,
{
    let mut file = create(path)?;
    write_header(&mut file, provenance).map_err(|e| io_error(path, e))?;
    {
        let mut w = csv::Writer::from_writer(&mut file);
        w.write_record(header).map_err(|e| io_error(path, e))?;
        rows(&mut w).map_err(|e| io_error(path, e))?;
        w.flush().map_err(|e| io_error(path, e))?;
    }
    file.flush().map_err(|e| io_error(path, e))
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:e}")
    } else {
        String::new()
    }
}

pub fn write_trials(path: &Path, provenance: &str, records: &[TrialRecord]) -> Result<(), CliError> {
    let header = ["trial", "q", "lambda1", "lambda2", "lambda3", "lambda4", "lambda5", "exceeded"];
    write_csv(path, provenance, &header, |w| {
        for r in records {
            let mut row = vec![r.trial_index.to_string(), num(r.q)];
            row.extend(r.lambda.iter().map(|&l| num(l)));
            row.push(r.exceeded_threshold.map_or(String::new(), |b| b.to_string()));
            w.write_record(&row)?;
        }
        Ok(())
    })
}

pub fn write_histogram(path: &Path, provenance: &str, rows: &[OverlayRow]) -> Result<(), CliError> {
    let header = ["bin_left", "bin_right", "count", "predicted_density"];
    write_csv(path, provenance, &header, |w| {
        for r in rows {
            w.write_record([num(r.bin_left), num(r.bin_right), r.count.to_string(), num(r.predicted_density)])?;
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct WithConfig<'a, T: Serialize> {
    config: toml::Value,
    #[serde(flatten)]
    body: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, provenance: &str, body: &T) -> Result<(), CliError> {
    let config: toml::Value = toml::from_str(provenance).expect("provenance is valid TOML");
    let mut file = create(path)?;
    serde_json::to_writer_pretty(&mut file, &WithConfig { config, body }).map_err(|e| io_error(path, e))?;
    writeln!(file).and_then(|_| file.flush()).map_err(|e| io_error(path, e))
}
