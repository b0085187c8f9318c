//! Long-format CSV: one row per subject, columns
//! `cluster_id,treat,y,z1..zq,x1..xm`. An empty `y` marks a missing outcome.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ClusterData, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Column {
    Cluster,
    Treat,
    Y,
    Z(usize),
    X(usize),
}

fn parse_header(header: &csv::StringRecord) -> Result<(Vec<Column>, usize, usize)> {
    let mut columns = Vec::with_capacity(header.len());
    for name in header.iter() {
        let name = name.trim();
        let col = match name {
            "cluster_id" => Column::Cluster,
            "treat" => Column::Treat,
            "y" => Column::Y,
            _ => {
                let index = |rest: &str| rest.parse::<usize>().ok().filter(|&k| k >= 1);
                match (name.split_at_checked(1), name.len() > 1) {
                    (Some(("z", rest)), true) if index(rest).is_some() => {
                        Column::Z(index(rest).unwrap() - 1)
                    }
                    (Some(("x", rest)), true) if index(rest).is_some() => {
                        Column::X(index(rest).unwrap() - 1)
                    }
                    _ => {
                        return Err(Error::Parse {
                            row: 1,
                            message: format!("unknown column '{name}'"),
                        })
                    }
                }
            }
        };
        if columns.contains(&col) {
            return Err(Error::Parse {
                row: 1,
                message: format!("duplicate column '{name}'"),
            });
        }
        columns.push(col);
    }
    for required in [Column::Cluster, Column::Treat, Column::Y] {
        if !columns.contains(&required) {
            return Err(Error::Parse {
                row: 1,
                message: format!("missing column {required:?}"),
            });
        }
    }
    let count = |f: fn(&Column) -> Option<usize>| {
        let idx: Vec<usize> = columns.iter().filter_map(f).collect();
        (idx.len(), idx.into_iter().max().map_or(0, |k| k + 1))
    };
    let (nz, maxz) = count(|c| match c {
        Column::Z(k) => Some(*k),
        _ => None,
    });
    let (nx, maxx) = count(|c| match c {
        Column::X(k) => Some(*k),
        _ => None,
    });
    if nz != maxz || nx != maxx {
        return Err(Error::Parse {
            row: 1,
            message: "covariate columns must be numbered consecutively from 1".into(),
        });
    }
    Ok((columns, nz, nx))
}

fn parse_binary(field: &str, what: &str, row: usize) -> Result<bool> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Parse {
            row,
            message: format!("{what} must be 0 or 1, got '{other}'"),
        }),
    }
}

fn parse_number(field: &str, what: &str, row: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            row,
            message: format!("{what}: '{field}' is not a finite number"),
        })
}

struct Partial {
    treat: bool,
    z: Vec<f64>,
    x: Vec<f64>,
    y: Vec<Option<bool>>,
}

/// Parse a dataset from CSV text. Row numbers in errors count the header as
/// row 1. Clusters keep the order of their first appearance.
pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let (columns, nz, nx) = parse_header(&header)?;
    let mut order: Vec<String> = Vec::new();
    let mut clusters: HashMap<String, Partial> = HashMap::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let mut id = String::new();
        let mut treat = false;
        let mut y = None;
        let mut z = vec![0.0; nz];
        let mut x = vec![0.0; nx];
        for (col, field) in columns.iter().zip(record.iter()) {
            match col {
                Column::Cluster => id = field.trim().to_string(),
                Column::Treat => treat = parse_binary(field, "treat", row)?,
                Column::Y => {
                    if !field.trim().is_empty() {
                        y = Some(parse_binary(field, "y", row)?);
                    }
                }
                Column::Z(k) => z[*k] = parse_number(field, &format!("z{}", k + 1), row)?,
                Column::X(k) => x[*k] = parse_number(field, &format!("x{}", k + 1), row)?,
            }
        }
        if id.is_empty() {
            return Err(Error::Parse {
                row,
                message: "empty cluster_id".into(),
            });
        }
        match clusters.get_mut(&id) {
            Some(c) => {
                if c.treat != treat {
                    return Err(Error::Parse {
                        row,
                        message: format!("treat varies within cluster {id}"),
                    });
                }
                if let Some(k) = (0..nz).find(|&k| c.z[k] != z[k]) {
                    return Err(Error::Parse {
                        row,
                        message: format!("z{} varies within cluster {id}", k + 1),
                    });
                }
                c.x.extend_from_slice(&x);
                c.y.push(y);
            }
            None => {
                order.push(id.clone());
                clusters.insert(
                    id,
                    Partial {
                        treat,
                        z,
                        x,
                        y: vec![y],
                    },
                );
            }
        }
    }
    if order.is_empty() {
        return Err(Error::Parse {
            row: 2,
            message: "no data rows".into(),
        });
    }
    let clusters = order
        .into_iter()
        .map(|id| {
            let c = clusters.remove(&id).expect("cluster recorded");
            ClusterData::new(id, c.treat, c.z, c.x, nx, c.y)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(clusters)
}

pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    read_csv(std::fs::File::open(path)?)
}

/// Write a dataset in the same layout `read_csv` accepts. Numbers use the
/// shortest representation that parses back to the same value.
pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Io(std::sync::Arc::new(std::io::Error::other(e)));
    let mut header = vec!["cluster_id".to_string(), "treat".into(), "y".into()];
    header.extend((1..=data.n_z()).map(|k| format!("z{k}")));
    header.extend((1..=data.n_x()).map(|k| format!("x{k}")));
    wtr.write_record(&header).map_err(csv_err)?;
    for c in data.clusters() {
        for j in 0..c.size() {
            let mut row = vec![
                c.id().to_string(),
                u8::from(c.treatment()).to_string(),
                c.y()[j].map_or(String::new(), |v| u8::from(v).to_string()),
            ];
            row.extend(c.z().iter().map(|v| v.to_string()));
            row.extend(c.x_row(j).iter().map(|v| v.to_string()));
            wtr.write_record(&row).map_err(csv_err)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn export_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_csv(data, std::fs::File::create(path)?)
}
