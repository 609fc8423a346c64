//! CSV ingestion and export of datasets.

use std::io::{Read, Write};

use ppvrule::{Dataset, LabeledSample, SamplingDesign};

use crate::error::CliError;

/// Column selection for [`read_dataset`].
pub struct Columns<'a> {
    pub label: &'a str,
    /// `None` takes every column other than the label and external columns.
    pub features: Option<&'a [String]>,
    pub external: Option<&'a str>,
}

pub fn read_dataset<R: Read>(input: R, cols: &Columns, design: SamplingDesign) -> Result<Dataset, CliError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Input(format!("column '{name}' not found")))
    };
    let label = find(cols.label)?;
    let external = cols.external.map(find).transpose()?;
    let names: Vec<String> = match cols.features {
        Some(f) => f.to_vec(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != label && Some(*i) != external)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    if names.is_empty() {
        return Err(CliError::Input("no feature columns".into()));
    }
    let feature_idx = names.iter().map(|n| find(n)).collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |i: usize| -> Result<f64, CliError> {
            let raw = record.get(i).unwrap_or("");
            raw.trim().parse::<f64>().map_err(|_| {
                CliError::Input(format!(
                    "row {}: column '{}' is not numeric: '{raw}'",
                    line + 2,
                    headers[i]
                ))
            })
        };
        let features = feature_idx.iter().map(|&i| cell(i)).collect::<Result<Vec<_>, _>>()?;
        let d = cell(label)?;
        if d != 0.0 && d != 1.0 {
            return Err(CliError::Input(format!(
                "row {}: label must be 0 or 1, got {d}",
                line + 2
            )));
        }
        let mut row = LabeledSample::new(features, d == 1.0);
        if let Some(e) = external {
            row = row.with_external(cell(e)?);
        }
        rows.push(row);
    }
    Ok(Dataset::new(rows, names, design)?)
}

/// Writes feature columns, the label column `D`, and an `external` column
/// when every row carries a signal. Values use the shortest exact decimal.
pub fn write_dataset<W: Write>(out: W, data: &Dataset) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let with_external = data.samples().iter().all(|s| s.external_signal.is_some());
    let mut header: Vec<String> = data.feature_names().to_vec();
    header.push("D".into());
    if with_external {
        header.push("external".into());
    }
    w.write_record(&header)?;
    for s in data.samples() {
        let mut rec: Vec<String> = s.features.iter().map(f64::to_string).collect();
        rec.push(if s.label { "1" } else { "0" }.into());
        if let Some(e) = s.external_signal.filter(|_| with_external) {
            rec.push(e.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
