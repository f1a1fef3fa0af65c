//! O*NET-SOC 2019 taxonomy, historical crosswalks and title matching.
//!
//! Taxonomy files are delimited text with a header row. Recognised columns are
//! `code`, `title`, and optionally `description` and `sample_titles`
//! (semicolon-separated). Crosswalk files carry `from_code` and `to_code`
//! columns, one row per mapping, so a one-to-many mapping spans several rows.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const TAXONOMY_VERSION: &str = "2019";

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("empty taxonomy")]
    Empty,
    #[error("row {row}: malformed SOC code {code:?}")]
    MalformedCode { row: usize, code: String },
    #[error("row {row}: duplicate SOC code {code}")]
    DuplicateCode { row: usize, code: String },
    #[error("row {row}: empty title for {code}")]
    EmptyTitle { row: usize, code: String },
    #[error("row {row}: crosswalk entry for {code} has no target")]
    EmptyMapping { row: usize, code: String },
    #[error("missing column {0:?}")]
    MissingColumn(&'static str),
    #[error("crosswalk file name {0:?} does not look like <from>_to_<to>.csv")]
    CrosswalkName(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed SOC code {0:?} (expected DD-DDDD.DD)")]
pub struct SocCodeError(pub String);

/// An 8-digit O*NET-SOC code of the shape `DD-DDDD.DD`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SocCode(String);

impl SocCode {
    pub fn parse(s: &str) -> Result<Self, SocCodeError> {
        let t = s.trim();
        let b = t.as_bytes();
        let ok = b.len() == 10
            && b.iter().enumerate().all(|(i, &c)| match i {
                2 => c == b'-',
                7 => c == b'.',
                _ => c.is_ascii_digit(),
            });
        if ok {
            Ok(Self(t.to_string()))
        } else {
            Err(SocCodeError(s.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The 6-digit SOC prefix `DD-DDDD`.
    pub fn six_digit(&self) -> &str {
        &self.0[..7]
    }

    /// The 2-digit major group.
    pub fn major_group(&self) -> &str {
        &self.0[..2]
    }
}

impl fmt::Display for SocCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for SocCode {
    type Err = SocCodeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for SocCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for SocCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        SocCode::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocEntry {
    pub code: SocCode,
    pub title: String,
    pub description: Option<String>,
    pub sample_titles: Vec<String>,
}

/// Builder options for delimited files.
#[derive(Debug, Clone, Copy)]
pub struct Delimited {
    pub delimiter: u8,
}

impl Default for Delimited {
    fn default() -> Self {
        Self { delimiter: b',' }
    }
}

impl Delimited {
    fn reader<R: Read>(self, r: R) -> csv::Reader<R> {
        csv::ReaderBuilder::new()
            .delimiter(self.delimiter)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(r)
    }
}

fn column(headers: &csv::StringRecord, name: &'static str) -> Option<usize> {
    headers.iter().position(|h| h.eq_ignore_ascii_case(name))
}

#[derive(Debug, Clone, Default)]
pub struct Taxonomy {
    entries: BTreeMap<SocCode, SocEntry>,
    version: String,
}

impl Taxonomy {
    pub fn from_entries(
        entries: impl IntoIterator<Item = SocEntry>,
    ) -> Result<Self, TaxonomyError> {
        let mut map = BTreeMap::new();
        for (i, e) in entries.into_iter().enumerate() {
            if e.title.trim().is_empty() {
                return Err(TaxonomyError::EmptyTitle {
                    row: i + 1,
                    code: e.code.to_string(),
                });
            }
            if map.contains_key(&e.code) {
                return Err(TaxonomyError::DuplicateCode {
                    row: i + 1,
                    code: e.code.to_string(),
                });
            }
            map.insert(e.code.clone(), e);
        }
        Ok(Self {
            entries: map,
            version: TAXONOMY_VERSION.to_string(),
        })
    }

    /// Loads a taxonomy file. Row numbers in errors are 1-based data rows.
    pub fn load<R: Read>(source: R, opts: Delimited) -> Result<Self, TaxonomyError> {
        let mut rdr = opts.reader(source);
        let headers = rdr.headers()?.clone();
        let code_col = column(&headers, "code").ok_or(TaxonomyError::MissingColumn("code"))?;
        let title_col = column(&headers, "title").ok_or(TaxonomyError::MissingColumn("title"))?;
        let desc_col = column(&headers, "description");
        let samples_col = column(&headers, "sample_titles");

        let mut entries = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec?;
            let raw = rec.get(code_col).unwrap_or("");
            let code = SocCode::parse(raw).map_err(|_| TaxonomyError::MalformedCode {
                row,
                code: raw.to_string(),
            })?;
            let title = rec.get(title_col).unwrap_or("").to_string();
            if title.is_empty() {
                return Err(TaxonomyError::EmptyTitle {
                    row,
                    code: code.to_string(),
                });
            }
            let description = desc_col
                .and_then(|c| rec.get(c))
                .filter(|s| !s.is_empty())
                .map(str::to_string);
            let sample_titles = samples_col
                .and_then(|c| rec.get(c))
                .map(|s| {
                    s.split(';')
                        .map(str::trim)
                        .filter(|t| !t.is_empty())
                        .map(str::to_string)
                        .collect()
                })
                .unwrap_or_default();
            if entries.contains_key(&code) {
                return Err(TaxonomyError::DuplicateCode {
                    row,
                    code: code.to_string(),
                });
            }
            entries.insert(
                code.clone(),
                SocEntry {
                    code,
                    title,
                    description,
                    sample_titles,
                },
            );
        }
        if entries.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        Ok(Self {
            entries,
            version: TAXONOMY_VERSION.to_string(),
        })
    }

    pub fn load_path(path: &Path, opts: Delimited) -> Result<Self, TaxonomyError> {
        Self::load(std::fs::File::open(path)?, opts)
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, code: &SocCode) -> Option<&SocEntry> {
        self.entries.get(code)
    }

    /// Entries in ascending code order.
    pub fn entries(&self) -> impl Iterator<Item = &SocEntry> {
        self.entries.values()
    }

    pub fn is_valid(&self, code: &SocCode) -> bool {
        self.entries.contains_key(code)
    }

    /// Distinct 6-digit prefixes present in the taxonomy.
    pub fn six_digit_codes(&self) -> std::collections::BTreeSet<String> {
        self.entries
            .keys()
            .map(|c| c.six_digit().to_string())
            .collect()
    }
}

/// Membership test against the 2019 taxonomy.
pub fn is_valid(code: &SocCode, tax: &Taxonomy) -> bool {
    tax.is_valid(code)
}

/// Mapping from codes of one taxonomy version to the next.
#[derive(Debug, Clone, Default)]
pub struct CrosswalkTable {
    pub from_version: String,
    pub to_version: String,
    mapping: BTreeMap<SocCode, Vec<SocCode>>,
}

impl CrosswalkTable {
    pub fn new(from_version: impl Into<String>, to_version: impl Into<String>) -> Self {
        Self {
            from_version: from_version.into(),
            to_version: to_version.into(),
            mapping: BTreeMap::new(),
        }
    }

    /// Adds one mapping row; target order is preserved and duplicates ignored.
    pub fn insert(&mut self, from: SocCode, to: SocCode) {
        let targets = self.mapping.entry(from).or_default();
        if !targets.contains(&to) {
            targets.push(to);
        }
    }

    pub fn targets(&self, code: &SocCode) -> Option<&[SocCode]> {
        self.mapping.get(code).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SocCode, &[SocCode])> {
        self.mapping.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn load<R: Read>(
        source: R,
        from_version: &str,
        to_version: &str,
        opts: Delimited,
    ) -> Result<Self, TaxonomyError> {
        let mut rdr = opts.reader(source);
        let headers = rdr.headers()?.clone();
        let from_col =
            column(&headers, "from_code").ok_or(TaxonomyError::MissingColumn("from_code"))?;
        let to_col = column(&headers, "to_code").ok_or(TaxonomyError::MissingColumn("to_code"))?;
        let mut table = Self::new(from_version, to_version);
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec?;
            let raw_from = rec.get(from_col).unwrap_or("");
            let from = SocCode::parse(raw_from).map_err(|_| TaxonomyError::MalformedCode {
                row,
                code: raw_from.to_string(),
            })?;
            let raw_to = rec.get(to_col).unwrap_or("");
            if raw_to.is_empty() {
                return Err(TaxonomyError::EmptyMapping {
                    row,
                    code: from.to_string(),
                });
            }
            let to = SocCode::parse(raw_to).map_err(|_| TaxonomyError::MalformedCode {
                row,
                code: raw_to.to_string(),
            })?;
            table.insert(from, to);
        }
        Ok(table)
    }

    /// Loads `<from>_to_<to>.csv`, taking the version labels from the file name.
    pub fn load_path(path: &Path, opts: Delimited) -> Result<Self, TaxonomyError> {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| TaxonomyError::CrosswalkName(path.display().to_string()))?;
        let (from, to) = stem
            .split_once("_to_")
            .ok_or_else(|| TaxonomyError::CrosswalkName(path.display().to_string()))?;
        Self::load(std::fs::File::open(path)?, from, to, opts)
    }
}

/// Chains `code` forward through `tables` (oldest first, each consulted once)
/// and returns the reachable codes that are valid in `tax`, in first-seen order.
///
/// Codes absent from a table carry forward unchanged to the next table.
pub fn crosswalk_resolve(
    code: &SocCode,
    tables: &[CrosswalkTable],
    tax: &Taxonomy,
) -> Vec<SocCode> {
    if tax.is_valid(code) {
        return vec![code.clone()];
    }
    let mut frontier = vec![code.clone()];
    for table in tables {
        let mut next: Vec<SocCode> = Vec::new();
        for c in &frontier {
            match table.targets(c) {
                Some(targets) => {
                    for t in targets {
                        if !next.contains(t) {
                            next.push(t.clone());
                        }
                    }
                }
                None => {
                    if !next.contains(c) {
                        next.push(c.clone());
                    }
                }
            }
        }
        frontier = next;
    }
    frontier.retain(|c| tax.is_valid(c));
    frontier
}

fn words(s: &str) -> impl Iterator<Item = String> + '_ {
    s.split_whitespace().map(str::to_lowercase)
}

/// Proportion of words in `query_title` (counted with multiplicity) that occur
/// anywhere in `target_title`, after lowercasing and whitespace splitting.
/// An empty query scores 0.
pub fn word_overlap_sim(query_title: &str, target_title: &str) -> f64 {
    let target: HashSet<String> = words(target_title).collect();
    let mut total = 0usize;
    let mut overlap = 0usize;
    for w in words(query_title) {
        total += 1;
        if target.contains(&w) {
            overlap += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        overlap as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TitleMatch {
    pub code: SocCode,
    pub score: f64,
    /// Set when no taxonomy title shares a word with the query.
    pub low_confidence: bool,
}

/// Best word-overlap match over the whole taxonomy. Ties go to the
/// lexicographically smallest code. `None` only for an empty taxonomy.
pub fn closest_match(query_title: &str, tax: &Taxonomy) -> Option<TitleMatch> {
    let mut best: Option<(&SocCode, f64)> = None;
    for e in tax.entries() {
        let s = word_overlap_sim(query_title, &e.title);
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((&e.code, s)),
        }
    }
    best.map(|(code, score)| TitleMatch {
        code: code.clone(),
        score,
        low_confidence: score == 0.0,
    })
}
