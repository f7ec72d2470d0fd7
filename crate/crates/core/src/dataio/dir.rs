//! Dataset directory layout shared by the generator and the CLI.
//!
//! ```text
//! dir/
//!   schema.json          TableSchema (required)
//!   samples.csv          the table (required)
//!   dictionary.json      category codes
//!   texts.jsonl          {"id","text"} lines
//!   images.idx3-ubyte    IDX image stack
//!   labels.idx1-ubyte    IDX labels, aligned with the image stack
//!   scenarios.ini        scenario config
//! ```

use std::path::Path;

use super::{
    decode_images, decode_labels, encode_images, encode_labels, load_table, read_file, write_file,
    CategoryDictionary, DatasetTable, ImageStack, ScenarioConfig, TableSchema,
};
use crate::{Error, Result};

pub const SCHEMA_FILE: &str = "schema.json";
pub const TABLE_FILE: &str = "samples.csv";
pub const DICTIONARY_FILE: &str = "dictionary.json";
pub const TEXTS_FILE: &str = "texts.jsonl";
pub const IMAGES_FILE: &str = "images.idx3-ubyte";
pub const LABELS_FILE: &str = "labels.idx1-ubyte";
pub const SCENARIOS_FILE: &str = "scenarios.ini";

#[derive(Debug)]
pub struct Dataset {
    pub table: DatasetTable,
    pub images: Option<ImageStack>,
    pub scenarios: Option<ScenarioConfig>,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let schema_path = dir.join(SCHEMA_FILE);
        let schema: TableSchema = serde_json::from_str(&read_text(&schema_path)?)
            .map_err(|e| Error::invalid(format!("{}: {e}", schema_path.display())))?;
        let dict_path = dir.join(DICTIONARY_FILE);
        let dictionary = if dict_path.exists() {
            CategoryDictionary::from_json(&read_text(&dict_path)?)
                .map_err(|e| Error::invalid(format!("{}: {e}", dict_path.display())))?
        } else {
            CategoryDictionary::new()
        };
        let texts = dir.join(TEXTS_FILE);
        let table = load_table(
            &dir.join(TABLE_FILE),
            texts.exists().then_some(texts.as_path()),
            schema,
            dictionary,
        )?;

        let images_path = dir.join(IMAGES_FILE);
        let images = if images_path.exists() {
            Some(decode_images(&read_file(&images_path)?)?)
        } else {
            None
        };
        if let Some(stack) = &images {
            for r in table.records() {
                if let Some(i) = r.image_index.filter(|&i| i >= stack.count()) {
                    return Err(Error::invalid(format!(
                        "sample {:?} points at image {i} but the stack holds {}",
                        r.sample_id,
                        stack.count()
                    )));
                }
            }
            let labels_path = dir.join(LABELS_FILE);
            if labels_path.exists() {
                let labels = decode_labels(&read_file(&labels_path)?)?;
                if labels.len() != stack.count() {
                    return Err(Error::invalid(format!(
                        "{} labels for {} images",
                        labels.len(),
                        stack.count()
                    )));
                }
                for r in table.records() {
                    if let Some(i) = r.image_index {
                        if labels[i] as usize != r.label {
                            return Err(Error::invalid(format!(
                                "sample {:?}: table label {} disagrees with IDX label {}",
                                r.sample_id, r.label, labels[i]
                            )));
                        }
                    }
                }
            }
        }

        let sc_path = dir.join(SCENARIOS_FILE);
        let scenarios = if sc_path.exists() {
            Some(ScenarioConfig::parse(&read_text(&sc_path)?)?)
        } else {
            None
        };
        Ok(Self {
            table,
            images,
            scenarios,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let schema = serde_json::to_string_pretty(self.table.schema()).expect("schema serializes");
        write_file(&dir.join(SCHEMA_FILE), format!("{schema}\n").as_bytes())?;
        write_file(
            &dir.join(DICTIONARY_FILE),
            format!("{}\n", self.table.dictionary().to_json()).as_bytes(),
        )?;
        let mut csv = Vec::new();
        self.table.write_csv(&mut csv)?;
        write_file(&dir.join(TABLE_FILE), &csv)?;
        if self.table.records().iter().any(|r| r.text.is_some()) {
            let mut jsonl = Vec::new();
            self.table
                .write_texts_jsonl(&mut jsonl)
                .map_err(|e| Error::io(dir.join(TEXTS_FILE), e))?;
            write_file(&dir.join(TEXTS_FILE), &jsonl)?;
        }
        if let Some(stack) = &self.images {
            write_file(&dir.join(IMAGES_FILE), &encode_images(stack))?;
            let mut labels = vec![0u8; stack.count()];
            let mut covered = vec![false; stack.count()];
            for r in self.table.records() {
                if let Some(i) = r.image_index {
                    labels[i] = u8::try_from(r.label)
                        .map_err(|_| Error::invalid("IDX labels hold at most 256 classes"))?;
                    covered[i] = true;
                }
            }
            if covered.iter().all(|&c| c) {
                write_file(&dir.join(LABELS_FILE), &encode_labels(&labels))?;
            }
        }
        if let Some(sc) = &self.scenarios {
            write_file(&dir.join(SCENARIOS_FILE), sc.to_text().as_bytes())?;
        }
        Ok(())
    }

    /// The images of every table row, in row order.
    pub fn row_images(&self) -> Result<ImageStack> {
        let stack = self
            .images
            .as_ref()
            .ok_or_else(|| Error::invalid("dataset has no image stack"))?;
        let idx: Vec<usize> = self
            .table
            .records()
            .iter()
            .map(|r| {
                r.image_index
                    .ok_or_else(|| Error::invalid(format!("sample {:?} has no image index", r.sample_id)))
            })
            .collect::<Result<_>>()?;
        Ok(stack.select(&idx))
    }
}
