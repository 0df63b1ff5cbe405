//! Delimited-text input and output.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use bvs_core::{Dataset, Likelihood};
use nalgebra::DMatrix;

use crate::error::CliError;

/// Columns read from a delimited file, before any model is attached.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub covariate_names: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub total_counts: Option<Vec<f64>>,
}

impl Table {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.covariate_names.len()
    }

    /// Center and scale every covariate to mean zero and unit (population)
    /// standard deviation.
    pub fn standardize(&mut self) -> Result<(), CliError> {
        let n = self.n() as f64;
        for (j, name) in self.covariate_names.iter().enumerate() {
            let mut col = self.x.column_mut(j);
            let mean = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            if !(sd > 0.0) {
                return Err(CliError::Data(format!("covariate '{name}' is constant and cannot be standardized")));
            }
            col.iter_mut().for_each(|v| *v = (*v - mean) / sd);
        }
        Ok(())
    }

    pub fn center_response(&mut self) {
        let mean = self.y.iter().sum::<f64>() / self.n() as f64;
        self.y.iter_mut().for_each(|v| *v -= mean);
    }

    pub fn into_dataset(self, likelihood: Likelihood, psi0: Option<f64>) -> Result<Dataset, CliError> {
        let data = match likelihood {
            Likelihood::Linear => Dataset::linear(self.x, self.y),
            Likelihood::Binomial => {
                let c = self
                    .total_counts
                    .ok_or_else(|| CliError::Config("the binomial likelihood needs --total-count".into()))?;
                Dataset::binomial(self.x, self.y, c)
            }
            Likelihood::NegativeBinomial => Dataset::negative_binomial(self.x, self.y, psi0),
        }?;
        Ok(data)
    }
}

fn sniff_delimiter(path: &Path) -> Result<u8, CliError> {
    let mut first = String::new();
    BufReader::new(File::open(path)?).read_line(&mut first)?;
    Ok(if first.contains('\t') { b'\t' } else { b',' })
}

/// Read a comma- or tab-separated file with a header row. The response and
/// optional total-count columns are chosen by name; every other column is a
/// covariate, in header order.
pub fn ingest_csv(path: &Path, response: &str, total_count: Option<&str>) -> Result<Table, CliError> {
    let delimiter = sniff_delimiter(path)?;
    let mut reader = csv::ReaderBuilder::new().delimiter(delimiter).flexible(true).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| CliError::MissingColumn(name.to_string()))
    };
    let y_col = find(response)?;
    let c_col = total_count.map(find).transpose()?;
    let covariates: Vec<usize> = (0..header.len()).filter(|&j| j != y_col && Some(j) != c_col).collect();

    let mut rows: Vec<f64> = Vec::new();
    let mut y = Vec::new();
    let mut c = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let line = r + 2;
        if record.len() != header.len() {
            return Err(CliError::Parse {
                line,
                column: None,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let cell = |j: usize| -> Result<f64, CliError> {
            let raw = record[j].trim();
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CliError::Parse {
                    line,
                    column: Some(header[j].clone()),
                    message: format!("'{raw}' is not a finite number"),
                }),
            }
        };
        for &j in &covariates {
            rows.push(cell(j)?);
        }
        y.push(cell(y_col)?);
        if let Some(j) = c_col {
            c.push(cell(j)?);
        }
    }
    if y.is_empty() {
        return Err(CliError::Data("the input has no data rows".into()));
    }
    Ok(Table {
        covariate_names: covariates.iter().map(|&j| header[j].clone()).collect(),
        x: DMatrix::from_row_slice(y.len(), covariates.len(), &rows),
        y,
        total_counts: c_col.map(|_| c),
    })
}

/// Write a table as comma-separated text with covariates first, then the
/// response and total counts. Values use the shortest exact representation.
pub fn write_csv(path: &Path, table: &Table, response: &str, total_count: Option<&str>) -> Result<(), CliError> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    let mut header: Vec<&str> = table.covariate_names.iter().map(String::as_str).collect();
    header.push(response);
    if table.total_counts.is_some() {
        header.push(total_count.unwrap_or("total"));
    }
    writeln!(out, "{}", header.join(","))?;
    for i in 0..table.n() {
        let mut cells: Vec<String> = (0..table.p()).map(|j| table.x[(i, j)].to_string()).collect();
        cells.push(table.y[i].to_string());
        if let Some(c) = &table.total_counts {
            cells.push(c[i].to_string());
        }
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Covariates named `x1..xP` for a dataset built in memory.
pub fn table_from_dataset(data: &Dataset) -> Table {
    Table {
        covariate_names: (1..=data.p()).map(|j| format!("x{j}")).collect(),
        x: data.x.clone(),
        y: data.y.clone(),
        total_counts: data.total_counts.clone(),
    }
}
