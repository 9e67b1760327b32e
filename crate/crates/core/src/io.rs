//! Schema files, CSV ingestion and the binary dataset format.
//!
//! The binary format is a 4-byte magic, a little-endian `u32` version, a
//! little-endian `u64` header length, a JSON header holding the schema and
//! row count, then every cell as a little-endian `u32` domain index in
//! row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttributeSpec, Dataset, ViewSpec};

const MAGIC: &[u8; 4] = b"DPDS";
const VERSION: u32 = 1;

/// Domain declaration of one attribute in a schema file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DomainDecl {
    Values { values: Vec<String> },
    Range { range: [i64; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeDecl {
    pub name: String,
    #[serde(flatten)]
    pub domain: DomainDecl,
}

/// Schema file: attribute domains plus optional explicit view declarations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SchemaFile {
    pub attributes: Vec<AttributeDecl>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub views: Vec<ViewSpec>,
}

impl SchemaFile {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn attributes(&self) -> Result<Vec<AttributeSpec>> {
        self.attributes
            .iter()
            .map(|a| match &a.domain {
                DomainDecl::Values { values } => {
                    AttributeSpec::categorical(a.name.clone(), values.clone())
                }
                DomainDecl::Range { range } => {
                    AttributeSpec::integer_range(a.name.clone(), range[0], range[1])
                }
            })
            .collect()
    }

    pub fn from_attributes(attrs: &[AttributeSpec]) -> Self {
        Self {
            attributes: attrs
                .iter()
                .map(|a| AttributeDecl {
                    name: a.name().to_owned(),
                    domain: DomainDecl::Values {
                        values: a.domain().to_vec(),
                    },
                })
                .collect(),
            views: Vec::new(),
        }
    }

    /// Declared views, or one single-attribute view per attribute.
    pub fn view_specs(&self) -> Vec<ViewSpec> {
        if self.views.is_empty() {
            default_views(self.attributes.iter().map(|a| a.name.as_str()))
        } else {
            self.views.clone()
        }
    }
}

pub fn default_views<'a>(names: impl IntoIterator<Item = &'a str>) -> Vec<ViewSpec> {
    names.into_iter().map(|n| ViewSpec::over(&[n])).collect()
}

/// Reads a headed CSV, taking the schema's attributes by column name.
/// Columns not in the schema are ignored.
pub fn read_csv<R: Read>(reader: R, schema: Vec<AttributeSpec>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let positions = schema
        .iter()
        .map(|a| {
            headers
                .iter()
                .position(|h| h == a.name())
                .ok_or_else(|| Error::UnknownAttribute(a.name().to_owned()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        for (attr, &p) in schema.iter().zip(&positions) {
            let raw = record.get(p).ok_or(Error::RowArity {
                row,
                got: record.len(),
                expected: headers.len(),
            })?;
            let idx = attr.index_of(raw).ok_or_else(|| Error::ValueOutOfDomain {
                attribute: attr.name().to_owned(),
                value: raw.to_owned(),
            })?;
            cells.push(idx);
        }
    }
    Dataset::from_indices(schema, cells)
}

pub fn read_csv_path(path: &Path, schema: Vec<AttributeSpec>) -> Result<Dataset> {
    read_csv(BufReader::new(File::open(path)?), schema)
}

/// Writes a dataset back out as CSV with a header row.
pub fn write_csv<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(data.schema().iter().map(|a| a.name()))?;
    for row in data.rows() {
        w.write_record(
            row.iter()
                .zip(data.schema())
                .map(|(&i, a)| a.domain()[i as usize].as_str()),
        )?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: Vec<AttributeSpec>,
    rows: usize,
}

pub fn write_dataset<W: Write>(mut w: W, data: &Dataset) -> Result<()> {
    let header = serde_json::to_vec(&Header {
        schema: data.schema().to_vec(),
        rows: data.len(),
    })?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    for c in data.cells() {
        w.write_all(&c.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<Dataset> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a dataset file (bad magic)".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset version {version}"
        )));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = usize::try_from(u64::from_le_bytes(len))
        .map_err(|_| Error::Format("header length overflows".into()))?;
    let mut header = vec![0u8; len];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header)?;
    let n = header
        .rows
        .checked_mul(header.schema.len())
        .ok_or_else(|| Error::Format("cell count overflows".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != n * 4 {
        return Err(Error::Format(format!(
            "expected {} cell bytes, found {}",
            n * 4,
            bytes.len()
        )));
    }
    let cells = bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Dataset::from_indices(header.schema, cells)
}

pub fn save_dataset(path: &Path, data: &Dataset) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), data)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?))
}
