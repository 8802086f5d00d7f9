//! Dataset files: a `choice` column holding the chosen alternative's name,
//! then one `<alternative>:<variable>` column per explanatory variable.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Dataset, Observation, Provenance};
use crate::error::{Error, Result};
use crate::utility::AlternativeSet;

const CHOICE: &str = "choice";

/// Parse the header into a schema (alternatives in order of first appearance).
fn schema_from_header(header: &csv::StringRecord) -> Result<(AlternativeSet, Vec<(usize, usize)>)> {
    if header.get(0) != Some(CHOICE) {
        return Err(Error::Schema {
            path: "header".into(),
            message: format!("first column must be {CHOICE:?}"),
        });
    }
    let mut names: Vec<String> = Vec::new();
    let mut variables: Vec<Vec<String>> = Vec::new();
    let mut positions = Vec::new();
    for field in header.iter().skip(1) {
        let (alt, var) = field.split_once(':').ok_or_else(|| Error::Schema {
            path: "header".into(),
            message: format!("column {field:?} is not of the form <alternative>:<variable>"),
        })?;
        let a = match names.iter().position(|n| n == alt) {
            Some(a) => a,
            None => {
                names.push(alt.to_string());
                variables.push(Vec::new());
                names.len() - 1
            }
        };
        variables[a].push(var.to_string());
        positions.push((a, variables[a].len() - 1));
    }
    let alts = AlternativeSet::new(names, variables).map_err(|e| Error::Schema {
        path: "header".into(),
        message: e.to_string(),
    })?;
    Ok((alts, positions))
}

/// Read a dataset. When `schema` is given, the header must describe exactly
/// that schema (column order may differ). Row numbers in errors count data
/// rows from 1.
pub fn read_csv<R: Read>(reader: R, schema: Option<&AlternativeSet>, provenance: Provenance) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let (found, positions) = schema_from_header(&header)?;

    // map each file column onto the target schema
    let (alts, targets) = match schema {
        None => (found, positions),
        Some(schema) => {
            let mut targets = Vec::with_capacity(positions.len());
            for field in header.iter().skip(1) {
                let (alt, var) = field.split_once(':').unwrap();
                let t = schema.resolve(alt, var).map_err(|_| Error::Schema {
                    path: "header".into(),
                    message: format!("column {field:?} is not part of the schema"),
                })?;
                targets.push(t);
            }
            for (a, v) in schema.columns() {
                if !targets.contains(&(a, v)) {
                    return Err(Error::Schema {
                        path: "header".into(),
                        message: format!("missing column {:?}", schema.column_label(a, v)),
                    });
                }
            }
            (schema.clone(), targets)
        }
    };

    let mut observations = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::CsvCell {
                row,
                column: header.get(record.len().min(header.len() - 1)).unwrap_or(CHOICE).to_string(),
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let label = record.get(0).unwrap().trim();
        let chosen = alts.index_of(label).ok_or_else(|| Error::CsvCell {
            row,
            column: CHOICE.into(),
            message: format!("unknown alternative {label:?}"),
        })?;
        let mut values: Vec<Vec<f64>> = (0..alts.len()).map(|a| vec![f64::NAN; alts.variable_count(a)]).collect();
        for (col, &(a, v)) in targets.iter().enumerate() {
            let raw = record.get(col + 1).unwrap().trim();
            let column = header.get(col + 1).unwrap().to_string();
            if raw.is_empty() {
                return Err(Error::CsvCell {
                    row,
                    column,
                    message: "missing value".into(),
                });
            }
            let x: f64 = raw.parse().map_err(|_| Error::CsvCell {
                row,
                column: column.clone(),
                message: format!("cannot parse {raw:?} as a number"),
            })?;
            if !x.is_finite() {
                return Err(Error::CsvCell {
                    row,
                    column,
                    message: format!("non-finite value {raw:?}"),
                });
            }
            values[a][v] = x;
        }
        observations.push(Observation { chosen, values });
    }
    Dataset::new(alts, observations, provenance)
}

pub fn load_csv(path: impl AsRef<Path>, schema: Option<&AlternativeSet>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(
        file,
        schema,
        Provenance::File {
            path: path.display().to_string(),
        },
    )
}

/// Values are written in shortest round-trip decimal form, so reading the
/// file back reproduces every value bit for bit.
pub fn write_csv_to<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let alts = data.alternatives();
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![CHOICE.to_string()];
    header.extend(alts.columns().map(|(a, v)| alts.column_label(a, v)));
    wtr.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for obs in data.observations() {
        record.clear();
        record.push(alts.name(obs.chosen).to_string());
        for (a, v) in alts.columns() {
            record.push(format!("{}", obs.values[a][v]));
        }
        wtr.write_record(&record)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(data, std::io::BufWriter::new(file))
}
