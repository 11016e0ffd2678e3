//! Result files. CSV numbers carry 12 significant digits; files are written
//! to a temporary sibling and renamed into place.

use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

use heralded::runner::{Engine, RunSummary, SweepRow};

use crate::scenario::Format;
use crate::CliError;

pub const RUN_HEADER: [&str; 6] = [
    "protocol",
    "engine",
    "shots",
    "success_probability",
    "success_fidelity",
    "stderr",
];

pub const SWEEP_HEADER: [&str; 5] = [
    "parameter",
    "value",
    "success_probability",
    "success_fidelity",
    "stderr",
];

/// `%g`-style rendering with 12 significant digits.
pub fn format_number(x: f64) -> String {
    const DIGITS: i32 = 12;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn optional(x: Option<f64>) -> String {
    x.map(format_number).unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(runtime)?;
    for row in rows {
        w.write_record(&row).map_err(runtime)?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(runtime)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn run_bytes(summary: &RunSummary, format: Format) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Json => json_bytes(summary),
        Format::Csv => {
            let (engine, shots) = match summary.engine {
                Engine::Exact => ("exact", String::new()),
                Engine::Sample { shots, .. } => ("sample", shots.to_string()),
            };
            csv_bytes(
                &RUN_HEADER,
                [vec![
                    summary.protocol.name().to_string(),
                    engine.to_string(),
                    shots,
                    format_number(summary.success_probability),
                    optional(summary.success_fidelity),
                    optional(summary.stderr),
                ]],
            )
        }
    }
}

pub fn sweep_bytes(rows: &[SweepRow], format: Format) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Json => json_bytes(&rows),
        Format::Csv => csv_bytes(
            &SWEEP_HEADER,
            rows.iter().map(|r| {
                vec![
                    r.parameter.name().to_string(),
                    format_number(r.value),
                    format_number(r.success_probability),
                    optional(r.success_fidelity),
                    optional(r.stderr),
                ]
            }),
        ),
    }
}

/// Writes `bytes` to `dir/name.ext` via a temporary file and rename.
pub fn write_atomic(dir: &Path, name: &str, format: Format, bytes: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(format!("{name}.{}", format.extension()));
    let tmp = dir.join(format!(".{name}.{}.tmp", format.extension()));
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, &path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        CliError::Runtime(format!("cannot write {}: {e}", path.display()))
    })?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(format_number(0.5), "0.5");
        assert_eq!(format_number(0.03125), "0.03125");
        assert_eq!(format_number(2.0 / 3.0), "0.666666666667");
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(1e-7), "1e-7");
        assert_eq!(format_number(-1.0 / 3.0), "-0.333333333333");
        assert_eq!(format_number(123456789012345.0), "1.23456789012e14");
        assert_eq!(format_number(0.99970251375197), "0.999702513752");
    }
}
