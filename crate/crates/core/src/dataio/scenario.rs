//! Scenario configs.
//!
//! ```text
//! # optional reference scenario for FID
//! reference = test
//!
//! [plain_thin]
//! filter = split=train & perturbation in {plain, thin}
//! ```
//!
//! A filter is a conjunction (`&`) of `tag=value` and `tag in {a, b}` terms
//! (`∈` is accepted for `in`). A missing filter, or `*`, selects every row.

use std::fmt;
use std::path::Path;

use super::DatasetTable;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub tag: String,
    pub values: Vec<String>,
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.values.len() == 1 {
            write!(f, "{}={}", self.tag, self.values[0])
        } else {
            write!(f, "{} in {{{}}}", self.tag, self.values.join(", "))
        }
    }
}

/// Conjunction of terms; empty matches everything.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Predicate(pub Vec<Term>);

impl Predicate {
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() || text == "*" {
            return Ok(Self::default());
        }
        text.split('&').map(parse_term).collect::<Result<_>>().map(Predicate)
    }

    pub fn matches(&self, table: &DatasetTable, row: usize) -> bool {
        self.0.iter().all(|t| {
            table
                .tag_value(row, &t.tag)
                .is_some_and(|v| t.values.contains(&v))
        })
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "*");
        }
        let parts: Vec<String> = self.0.iter().map(Term::to_string).collect();
        write!(f, "{}", parts.join(" & "))
    }
}

fn parse_term(raw: &str) -> Result<Term> {
    let raw = raw.trim();
    let bad = || Error::invalid(format!("cannot parse filter term {raw:?}"));
    let set_split = raw
        .split_once('∈')
        .or_else(|| {
            // `tag in {..}` with whitespace around `in`
            let pos = raw.find(" in ")?;
            Some((&raw[..pos], &raw[pos + 4..]))
        });
    if let Some((tag, set)) = set_split {
        let set = set.trim();
        let inner = set
            .strip_prefix('{')
            .and_then(|s| s.strip_suffix('}'))
            .ok_or_else(bad)?;
        let values: Vec<String> = inner
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        let tag = tag.trim();
        if tag.is_empty() || values.is_empty() {
            return Err(bad());
        }
        return Ok(Term {
            tag: tag.to_string(),
            values,
        });
    }
    let (tag, value) = raw.split_once('=').ok_or_else(bad)?;
    let (tag, value) = (tag.trim(), value.trim());
    if tag.is_empty() || value.is_empty() {
        return Err(bad());
    }
    Ok(Term {
        tag: tag.to_string(),
        values: vec![value.to_string()],
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioDef {
    pub name: String,
    pub filter: Predicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScenarioConfig {
    pub scenarios: Vec<ScenarioDef>,
    pub reference: Option<String>,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ScenarioConfig::default();
        let mut current: Option<usize> = None;
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if name.is_empty() {
                    return Err(Error::invalid(format!("line {line_no}: empty scenario name")));
                }
                if cfg.scenarios.iter().any(|s| s.name == name) {
                    return Err(Error::invalid(format!(
                        "line {line_no}: duplicate scenario {name:?}"
                    )));
                }
                cfg.scenarios.push(ScenarioDef {
                    name: name.to_string(),
                    filter: Predicate::default(),
                });
                current = Some(cfg.scenarios.len() - 1);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("line {line_no}: expected key = value")))?;
            let (key, value) = (key.trim(), value.trim());
            match (current, key) {
                (None, "reference") => cfg.reference = Some(value.to_string()),
                (Some(i), "filter") => {
                    cfg.scenarios[i].filter = Predicate::parse(value)
                        .map_err(|e| Error::invalid(format!("line {line_no}: {e}")))?
                }
                _ => {
                    return Err(Error::invalid(format!(
                        "line {line_no}: unexpected key {key:?}"
                    )))
                }
            }
        }
        if let Some(r) = &cfg.reference {
            if !cfg.scenarios.iter().any(|s| &s.name == r) {
                return Err(Error::invalid(format!(
                    "reference scenario {r:?} is not declared"
                )));
            }
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(r) = &self.reference {
            out.push_str(&format!("reference = {r}\n\n"));
        }
        for s in &self.scenarios {
            out.push_str(&format!("[{}]\nfilter = {}\n\n", s.name, s.filter));
        }
        out
    }
}

/// A scenario resolved against a table: row indices sorted by sample id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub name: String,
    pub indices: Vec<usize>,
}

/// Resolves every scenario of `config` against `table`.
pub fn parse_scenarios(config: &ScenarioConfig, table: &DatasetTable) -> Result<Vec<Scenario>> {
    let known = table.tag_names();
    config
        .scenarios
        .iter()
        .map(|def| {
            if let Some(t) = def.filter.0.iter().find(|t| !known.contains(&t.tag)) {
                return Err(Error::invalid(format!(
                    "scenario {:?}: filter references unknown tag {:?}",
                    def.name, t.tag
                )));
            }
            let mut indices: Vec<usize> = (0..table.len())
                .filter(|&i| def.filter.matches(table, i))
                .collect();
            if indices.len() < 2 {
                return Err(Error::invalid(format!(
                    "scenario {:?} selects {} samples; at least 2 are required",
                    def.name,
                    indices.len()
                )));
            }
            let records = table.records();
            indices.sort_by(|&a, &b| records[a].sample_id.cmp(&records[b].sample_id));
            Ok(Scenario {
                name: def.name.clone(),
                indices,
            })
        })
        .collect()
}

/// Reads a scenario config file and resolves it against `table`.
pub fn load_scenarios(path: &Path, table: &DatasetTable) -> Result<(ScenarioConfig, Vec<Scenario>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg = ScenarioConfig::parse(&text)?;
    let resolved = parse_scenarios(&cfg, table)?;
    Ok((cfg, resolved))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{CategoryDictionary, MetadataColumn, TableSchema};

    fn table() -> DatasetTable {
        let schema = TableSchema {
            id_column: "id".into(),
            label_column: "label".into(),
            group_column: None,
            image_index_column: None,
            metadata: vec![MetadataColumn::categorical("sex")],
            tags: vec!["perturbation".into()],
            class_names: None,
        };
        let csv = "id,label,sex,perturbation\ns1,0,F,plain\ns2,1,M,thin\ns3,0,F,thick\ns4,1,M,plain\n";
        DatasetTable::from_csv_reader(csv.as_bytes(), schema, CategoryDictionary::new()).unwrap()
    }

    fn resolve(text: &str) -> Result<Vec<Scenario>> {
        parse_scenarios(&ScenarioConfig::parse(text)?, &table())
    }

    #[test]
    fn direct_filter() {
        let s = resolve("[female]\nfilter = sex=F\n").unwrap();
        assert_eq!(s[0].indices, vec![0, 2]);
    }

    #[test]
    fn set_union() {
        let s = resolve("[pt]\nfilter = perturbation in {plain, thin}\n").unwrap();
        assert_eq!(s[0].indices, vec![0, 1, 3]);
        let s = resolve("[pt]\nfilter = perturbation∈{plain,thin}\n").unwrap();
        assert_eq!(s[0].indices, vec![0, 1, 3]);
    }

    #[test]
    fn unknown_tag() {
        let err = resolve("[ge]\nfilter = scanner=GE\n").unwrap_err();
        assert!(err.to_string().contains("unknown tag"));
    }

    #[test]
    fn too_small() {
        assert!(resolve("[one]\nfilter = perturbation=thick\n").is_err());
    }

    #[test]
    fn conjunction_and_label() {
        let s = resolve("[x]\nfilter = label=1 & sex=M\n[all]\n").unwrap();
        assert_eq!(s[0].indices, vec![1, 3]);
        assert_eq!(s[1].indices, vec![0, 1, 2, 3]);
    }

    #[test]
    fn text_round_trip() {
        let text = "reference = all\n\n[all]\nfilter = *\n\n[pt]\nfilter = perturbation in {plain, thin} & sex=F\n\n";
        let cfg = ScenarioConfig::parse(text).unwrap();
        assert_eq!(cfg.to_text(), text);
    }

    #[test]
    fn duplicate_and_unknown_reference() {
        assert!(ScenarioConfig::parse("[a]\n[a]\n").is_err());
        assert!(ScenarioConfig::parse("reference = b\n[a]\n").is_err());
    }
}
