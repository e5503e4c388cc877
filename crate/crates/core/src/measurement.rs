//! Measurement files: comma-separated text, one row per probe setting.
//!
//! ```text
//! # optional comment lines
//! setting_id,probe_mean,pulses,no_clicks,signal_only_pulses,signal_only_no_clicks
//! 0,0,10000000,8777914,10000000,8778523
//! ```
//!
//! Required columns are `setting_id`, `pulses` and `no_clicks`, plus exactly one
//! of `probe_mean` and `blocked_no_clicks`. `signal_only_pulses` and
//! `signal_only_no_clicks` are optional but must appear together. Column order
//! is free; unknown columns are rejected.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::calibration::ClickRecord;
use crate::error::{Error, Result};

const COLUMNS: [&str; 7] = [
    "setting_id",
    "probe_mean",
    "blocked_no_clicks",
    "pulses",
    "no_clicks",
    "signal_only_pulses",
    "signal_only_no_clicks",
];

/// Which of the two probe calibration routes a file carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeColumn {
    ProbeMean,
    BlockedNoClicks,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub records: Vec<ClickRecord>,
    pub probe_column: ProbeColumn,
    pub has_signal_only: bool,
}

pub fn read_measurements_file(path: impl AsRef<Path>) -> Result<Measurements> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| {
        Error::Data(format!("cannot open {}: {e}", path.as_ref().display()))
    })?;
    read_measurements(file)
}

pub fn read_measurements<R: Read>(input: R) -> Result<Measurements> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| Error::Data(format!("unreadable header: {e}")))?
        .clone();
    if header.is_empty() || header.iter().all(str::is_empty) {
        return Err(Error::Data("no settings: file has no header".into()));
    }

    let mut index = [None; COLUMNS.len()];
    for (pos, name) in header.iter().enumerate() {
        let Some(slot) = COLUMNS.iter().position(|c| *c == name) else {
            return Err(Error::Data(format!("unknown column '{name}'")));
        };
        if index[slot].is_some() {
            return Err(Error::Data(format!("duplicate column '{name}'")));
        }
        index[slot] = Some(pos);
    }
    let [id_col, mean_col, blocked_col, pulses_col, clicks_col, so_pulses_col, so_clicks_col] =
        index;
    for (name, col) in [("setting_id", id_col), ("pulses", pulses_col), ("no_clicks", clicks_col)] {
        if col.is_none() {
            return Err(Error::Data(format!("missing required column '{name}'")));
        }
    }
    let probe_column = match (mean_col, blocked_col) {
        (Some(_), None) => ProbeColumn::ProbeMean,
        (None, Some(_)) => ProbeColumn::BlockedNoClicks,
        _ => {
            return Err(Error::Data(
                "exactly one of 'probe_mean' and 'blocked_no_clicks' must be present".into(),
            ))
        }
    };
    if so_pulses_col.is_some() != so_clicks_col.is_some() {
        return Err(Error::Data(
            "'signal_only_pulses' and 'signal_only_no_clicks' must appear together".into(),
        ));
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Data(format!("line {line}: {e}"))
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |col: Option<usize>| col.map(|c| row.get(c).unwrap_or(""));
        let int = |name: &str, col: Option<usize>| -> Result<Option<u64>> {
            field(col)
                .map(|s| {
                    s.parse::<u64>().map_err(|_| {
                        Error::Data(format!("line {line}: column '{name}': invalid count '{s}'"))
                    })
                })
                .transpose()
        };
        let setting_id = int("setting_id", id_col)?.expect("required column");
        let probe_mean = field(mean_col)
            .map(|s| {
                s.parse::<f64>().map_err(|_| {
                    Error::Data(format!("line {line}: column 'probe_mean': invalid number '{s}'"))
                })
            })
            .transpose()?;
        let record = ClickRecord {
            setting_id,
            probe_mean,
            pulses: int("pulses", pulses_col)?.expect("required column"),
            no_clicks: int("no_clicks", clicks_col)?.expect("required column"),
            blocked_no_clicks: int("blocked_no_clicks", blocked_col)?,
            signal_only_pulses: int("signal_only_pulses", so_pulses_col)?,
            signal_only_no_clicks: int("signal_only_no_clicks", so_clicks_col)?,
        };
        record
            .validate()
            .map_err(|e| match e {
                Error::Data(msg) => Error::Data(format!("line {line}: {msg}")),
                other => Error::Data(format!("line {line}: {other}")),
            })?;
        if !seen.insert(setting_id) {
            return Err(Error::Data(format!(
                "line {line}: duplicate setting_id {setting_id}"
            )));
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::Data("no settings".into()));
    }
    Ok(Measurements {
        records,
        probe_column,
        has_signal_only: so_pulses_col.is_some(),
    })
}

/// Writes records in the measurement format.
///
/// Probe means are written with the shortest representation that parses back
/// to the same `f64`, so reading the output reproduces the records exactly.
pub fn write_measurements<W: Write>(
    output: W,
    records: &[ClickRecord],
    probe_column: ProbeColumn,
) -> Result<()> {
    let with_signal_only = records
        .iter()
        .all(|r| r.signal_only_pulses.is_some() && r.signal_only_no_clicks.is_some());
    let mut writer = csv::Writer::from_writer(output);
    let mut header = vec![
        "setting_id",
        match probe_column {
            ProbeColumn::ProbeMean => "probe_mean",
            ProbeColumn::BlockedNoClicks => "blocked_no_clicks",
        },
        "pulses",
        "no_clicks",
    ];
    if with_signal_only {
        header.extend(["signal_only_pulses", "signal_only_no_clicks"]);
    }
    writer.write_record(&header).map_err(csv_error)?;
    for r in records {
        let probe = match probe_column {
            ProbeColumn::ProbeMean => r.probe_mean.map(|m| format!("{m:?}")),
            ProbeColumn::BlockedNoClicks => r.blocked_no_clicks.map(|b| b.to_string()),
        }
        .ok_or_else(|| {
            Error::Data(format!(
                "setting {}: no value for the requested probe column",
                r.setting_id
            ))
        })?;
        let mut row = vec![
            r.setting_id.to_string(),
            probe,
            r.pulses.to_string(),
            r.no_clicks.to_string(),
        ];
        if with_signal_only {
            row.push(r.signal_only_pulses.unwrap_or_default().to_string());
            row.push(r.signal_only_no_clicks.unwrap_or_default().to_string());
        }
        writer.write_record(&row).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_measurements_file(
    path: impl AsRef<Path>,
    records: &[ClickRecord],
    probe_column: ProbeColumn,
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_measurements(std::io::BufWriter::new(file), records, probe_column)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Data(format!("csv: {e}"))
}
