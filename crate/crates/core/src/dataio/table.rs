use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::numeric::Matrix;

/// Encoding of a missing metadata value.
pub const MISSING_VALUE: f64 = -1.0;

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),

    #[error("line {line}: unknown label value {value:?}")]
    UnknownLabel { line: usize, value: String },

    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("column {0:?} not found in CSV header")]
    MissingColumn(String),

    #[error("line {line}: column {column:?} holds non-numeric value {value:?}")]
    BadNumber {
        line: usize,
        column: String,
        value: String,
    },

    #[error("line {line}: column {column:?} holds invalid image index {value:?}")]
    BadImageIndex {
        line: usize,
        column: String,
        value: String,
    },

    #[error("texts line {line}: {message}")]
    BadJsonl { line: usize, message: String },

    #[error("texts line {line}: sample id {id:?} is not in the table")]
    UnknownTextId { line: usize, id: String },

    #[error("csv: {0}")]
    Csv(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataColumn {
    pub name: String,
    pub kind: ColumnKind,
}

impl MetadataColumn {
    pub fn numeric(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: ColumnKind::Numeric,
        }
    }

    pub fn categorical(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: ColumnKind::Categorical,
        }
    }
}

/// Which CSV columns play which role. Persisted as `schema.json` next to a
/// dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSchema {
    pub id_column: String,
    pub label_column: String,
    /// Defaults to the sample id (every sample its own group).
    #[serde(default)]
    pub group_column: Option<String>,
    #[serde(default)]
    pub image_index_column: Option<String>,
    /// Ordered metadata vector layout.
    #[serde(default)]
    pub metadata: Vec<MetadataColumn>,
    /// Extra subgroup tag columns. Categorical metadata columns are tags too.
    #[serde(default)]
    pub tags: Vec<String>,
    /// When set, label cells are class names mapped to their index here;
    /// otherwise label cells are non-negative integers.
    #[serde(default)]
    pub class_names: Option<Vec<String>>,
}

impl TableSchema {
    pub fn tag_columns(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .metadata
            .iter()
            .filter(|c| c.kind == ColumnKind::Categorical)
            .map(|c| c.name.as_str())
            .collect();
        for t in &self.tags {
            if !out.contains(&t.as_str()) {
                out.push(t);
            }
        }
        out
    }

    pub fn label_string(&self, label: usize) -> String {
        match &self.class_names {
            Some(names) => names[label].clone(),
            None => label.to_string(),
        }
    }
}

/// Per-column category → integer code, in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryDictionary(BTreeMap<String, Vec<String>>);

impl CategoryDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Seeds a column with an explicit category order.
    pub fn with_column(mut self, column: &str, categories: &[&str]) -> Self {
        self.0
            .insert(column.to_string(), categories.iter().map(|c| c.to_string()).collect());
        self
    }

    pub fn encode(&mut self, column: &str, value: &str) -> usize {
        let cats = self.0.entry(column.to_string()).or_default();
        match cats.iter().position(|c| c == value) {
            Some(i) => i,
            None => {
                cats.push(value.to_string());
                cats.len() - 1
            }
        }
    }

    pub fn code(&self, column: &str, value: &str) -> Option<usize> {
        self.0.get(column)?.iter().position(|c| c == value)
    }

    pub fn decode(&self, column: &str, code: usize) -> Option<&str> {
        self.0.get(column)?.get(code).map(String::as_str)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dictionary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub sample_id: String,
    pub image_index: Option<usize>,
    pub text: Option<String>,
    pub metadata: Vec<f64>,
    pub label: usize,
    pub group_id: String,
    pub tags: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct DatasetTable {
    schema: TableSchema,
    records: Vec<Record>,
    dictionary: CategoryDictionary,
    num_classes: usize,
}

#[derive(Deserialize)]
struct TextLine {
    id: String,
    text: Option<String>,
}

#[derive(Serialize)]
struct TextLineOut<'a> {
    id: &'a str,
    text: &'a str,
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize, TableError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| TableError::MissingColumn(name.to_string()))
}

fn map_csv_error(e: csv::Error) -> TableError {
    match e.kind() {
        csv::ErrorKind::UnequalLengths {
            pos,
            expected_len,
            len,
        } => TableError::Ragged {
            line: pos.as_ref().map_or(0, |p| p.line() as usize),
            expected: *expected_len as usize,
            found: *len as usize,
        },
        _ => TableError::Csv(e.to_string()),
    }
}

impl DatasetTable {
    /// Assembles a table from already-built records, checking the invariants.
    pub fn from_records(
        schema: TableSchema,
        records: Vec<Record>,
        dictionary: CategoryDictionary,
    ) -> Result<Self, TableError> {
        let mut seen = BTreeSet::new();
        for r in &records {
            if !seen.insert(r.sample_id.as_str()) {
                return Err(TableError::DuplicateId(r.sample_id.clone()));
            }
        }
        let num_classes = match &schema.class_names {
            Some(names) => {
                if let Some(r) = records.iter().find(|r| r.label >= names.len()) {
                    return Err(TableError::UnknownLabel {
                        line: 0,
                        value: r.label.to_string(),
                    });
                }
                names.len()
            }
            None => records.iter().map(|r| r.label + 1).max().unwrap_or(0),
        };
        Ok(Self {
            schema,
            records,
            dictionary,
            num_classes,
        })
    }

    /// Parses a CSV table. Numeric metadata cells that are empty become
    /// [`MISSING_VALUE`]; categorical cells are dictionary-encoded, appending
    /// unseen categories to `dictionary`.
    pub fn from_csv_reader<R: Read>(
        reader: R,
        schema: TableSchema,
        mut dictionary: CategoryDictionary,
    ) -> Result<Self, TableError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .comment(Some(b'#'))
            .from_reader(reader);
        let headers = rdr.headers().map_err(map_csv_error)?.clone();
        let id_col = column_index(&headers, &schema.id_column)?;
        let label_col = column_index(&headers, &schema.label_column)?;
        let group_col = schema
            .group_column
            .as_deref()
            .map(|c| column_index(&headers, c))
            .transpose()?;
        let image_col = schema
            .image_index_column
            .as_deref()
            .map(|c| column_index(&headers, c))
            .transpose()?;
        let meta_cols: Vec<usize> = schema
            .metadata
            .iter()
            .map(|c| column_index(&headers, &c.name))
            .collect::<Result<_, _>>()?;
        let tag_names: Vec<String> = schema.tag_columns().into_iter().map(String::from).collect();
        let tag_cols: Vec<usize> = tag_names
            .iter()
            .map(|c| column_index(&headers, c))
            .collect::<Result<_, _>>()?;

        let mut records = Vec::new();
        for (row_no, row) in rdr.records().enumerate() {
            let row = row.map_err(map_csv_error)?;
            let line = row.position().map_or(row_no + 2, |p| p.line() as usize);
            let cell = |i: usize| row.get(i).unwrap_or("").trim();

            let label_raw = cell(label_col);
            let label = match &schema.class_names {
                Some(names) => names.iter().position(|n| n == label_raw),
                None => label_raw.parse::<usize>().ok(),
            }
            .ok_or_else(|| TableError::UnknownLabel {
                line,
                value: label_raw.to_string(),
            })?;

            let mut metadata = Vec::with_capacity(meta_cols.len());
            for (col, &idx) in schema.metadata.iter().zip(&meta_cols) {
                let raw = cell(idx);
                let v = if raw.is_empty() {
                    MISSING_VALUE
                } else {
                    match col.kind {
                        ColumnKind::Numeric => {
                            raw.parse::<f64>()
                                .ok()
                                .filter(|v| v.is_finite())
                                .ok_or_else(|| TableError::BadNumber {
                                    line,
                                    column: col.name.clone(),
                                    value: raw.to_string(),
                                })?
                        }
                        ColumnKind::Categorical => dictionary.encode(&col.name, raw) as f64,
                    }
                };
                metadata.push(v);
            }

            let image_index = match image_col {
                Some(i) if !cell(i).is_empty() => {
                    Some(cell(i).parse::<usize>().map_err(|_| TableError::BadImageIndex {
                        line,
                        column: schema.image_index_column.clone().unwrap_or_default(),
                        value: cell(i).to_string(),
                    })?)
                }
                _ => None,
            };

            let sample_id = cell(id_col).to_string();
            let group_id = group_col.map_or_else(|| sample_id.clone(), |g| cell(g).to_string());
            let tags = tag_names
                .iter()
                .zip(&tag_cols)
                .map(|(name, &i)| (name.clone(), cell(i).to_string()))
                .collect();
            records.push(Record {
                sample_id,
                image_index,
                text: None,
                metadata,
                label,
                group_id,
                tags,
            });
        }
        Self::from_records(schema, records, dictionary)
    }

    /// Attaches texts from JSONL lines `{"id": ..., "text": ...}`.
    /// Blank or missing texts leave the sample without text.
    pub fn attach_texts<R: BufRead>(&mut self, reader: R) -> Result<(), TableError> {
        let index: HashMap<String, usize> = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.sample_id.clone(), i))
            .collect();
        for (n, line) in reader.lines().enumerate() {
            let line_no = n + 1;
            let line = line.map_err(|e| TableError::BadJsonl {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TextLine = serde_json::from_str(&line).map_err(|e| TableError::BadJsonl {
                line: line_no,
                message: e.to_string(),
            })?;
            let &i = index.get(&parsed.id).ok_or_else(|| TableError::UnknownTextId {
                line: line_no,
                id: parsed.id.clone(),
            })?;
            self.records[i].text = parsed.text.filter(|t| !t.trim().is_empty());
        }
        Ok(())
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn dictionary(&self) -> &CategoryDictionary {
        &self.dictionary
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn metadata_dim(&self) -> usize {
        self.schema.metadata.len()
    }

    /// Metadata vectors of the given rows.
    pub fn metadata_matrix(&self, indices: &[usize]) -> Matrix {
        let d = self.metadata_dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(&self.records[i].metadata);
        }
        Matrix::new(indices.len(), d, data).expect("metadata rows share the schema length")
    }

    /// Tag names usable in scenario predicates (`label` included).
    pub fn tag_names(&self) -> BTreeSet<String> {
        let mut names: BTreeSet<String> = self
            .schema
            .tag_columns()
            .into_iter()
            .map(String::from)
            .collect();
        names.insert("label".to_string());
        names
    }

    /// Tag lookup with the `label` pseudo-tag.
    pub fn tag_value(&self, row: usize, tag: &str) -> Option<String> {
        let r = &self.records[row];
        if tag == "label" {
            return Some(self.schema.label_string(r.label));
        }
        r.tags.get(tag).cloned()
    }

    pub fn position_of(&self, sample_id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.sample_id == sample_id)
    }

    /// Writes the table back as CSV with the schema's column names.
    /// Missing values become empty cells.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TableError> {
        let s = &self.schema;
        let mut header: Vec<&str> = vec![&s.id_column];
        if let Some(c) = &s.image_index_column {
            header.push(c);
        }
        header.push(&s.label_column);
        if let Some(c) = &s.group_column {
            header.push(c);
        }
        header.extend(s.metadata.iter().map(|c| c.name.as_str()));
        let extra_tags: Vec<&str> = s
            .tags
            .iter()
            .map(String::as_str)
            .filter(|t| !s.metadata.iter().any(|c| c.name == *t))
            .collect();
        header.extend(extra_tags.iter().copied());

        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&header).map_err(|e| TableError::Csv(e.to_string()))?;
        for r in &self.records {
            let mut row: Vec<String> = vec![r.sample_id.clone()];
            if s.image_index_column.is_some() {
                row.push(r.image_index.map(|i| i.to_string()).unwrap_or_default());
            }
            row.push(s.label_string(r.label));
            if s.group_column.is_some() {
                row.push(r.group_id.clone());
            }
            for (col, &v) in s.metadata.iter().zip(&r.metadata) {
                let cell = if v == MISSING_VALUE {
                    String::new()
                } else {
                    match col.kind {
                        ColumnKind::Numeric => format_number(v),
                        ColumnKind::Categorical => self
                            .dictionary
                            .decode(&col.name, v as usize)
                            .unwrap_or_default()
                            .to_string(),
                    }
                };
                row.push(cell);
            }
            for t in &extra_tags {
                row.push(r.tags.get(*t).cloned().unwrap_or_default());
            }
            w.write_record(&row).map_err(|e| TableError::Csv(e.to_string()))?;
        }
        w.flush().map_err(|e| TableError::Csv(e.to_string()))?;
        Ok(())
    }

    /// Writes `{"id","text"}` lines for every sample that carries text.
    pub fn write_texts_jsonl<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        for r in &self.records {
            if let Some(t) = &r.text {
                let line = serde_json::to_string(&TextLineOut {
                    id: &r.sample_id,
                    text: t,
                })
                .expect("text line serializes");
                writeln!(writer, "{line}")?;
            }
        }
        Ok(())
    }
}

/// Shortest decimal form that parses back to the same `f64`.
fn format_number(v: f64) -> String {
    format!("{v}")
}

/// Loads a CSV table and, optionally, its JSONL texts.
pub fn load_table(
    csv_path: &Path,
    jsonl_path: Option<&Path>,
    schema: TableSchema,
    dictionary: CategoryDictionary,
) -> Result<DatasetTable, TableError> {
    let open = |p: &Path| {
        std::fs::File::open(p).map_err(|source| TableError::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    let mut table = DatasetTable::from_csv_reader(open(csv_path)?, schema, dictionary)?;
    if let Some(p) = jsonl_path {
        table.attach_texts(BufReader::new(open(p)?))?;
    }
    Ok(table)
}
