//! Line-delimited stage artifacts.
//!
//! Every file starts with `# stage=<stage> config=<hash>`; readers skip `#`
//! lines. Each stage also leaves a `<stage>.manifest` of tab-separated
//! key/value pairs.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Failure, ResultExt, StageResult};

pub fn header(stage: &str, hash: &str) -> String {
    format!("# stage={stage} config={hash}\n")
}

/// Parses a header line into (stage, config hash).
pub fn parse_header(line: &str) -> Option<(String, String)> {
    let rest = line.trim_end().strip_prefix("# ")?;
    let mut stage = None;
    let mut config = None;
    for part in rest.split_whitespace() {
        if let Some(v) = part.strip_prefix("stage=") {
            stage = Some(v.to_string());
        } else if let Some(v) = part.strip_prefix("config=") {
            config = Some(v.to_string());
        }
    }
    Some((stage?, config?))
}

pub fn read_header(path: &Path) -> StageResult<Option<(String, String)>> {
    let f = fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .data()?;
    let mut line = String::new();
    BufReader::new(f)
        .read_line(&mut line)
        .with_context(|| format!("reading {}", path.display()))
        .data()?;
    Ok(parse_header(&line))
}

#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub hash: String,
}

impl Artifacts {
    pub fn new(dir: PathBuf, hash: String) -> StageResult<Self> {
        fs::create_dir_all(&dir)
            .with_context(|| format!("creating {}", dir.display()))
            .data()?;
        Ok(Self { dir, hash })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_text(&self, stage: &str, name: &str, body: &str) -> StageResult<PathBuf> {
        let path = self.path(name);
        let mut text = header(stage, &self.hash);
        text.push_str(body);
        fs::write(&path, text)
            .with_context(|| format!("writing {}", path.display()))
            .data()?;
        Ok(path)
    }

    pub fn write_jsonl<T: Serialize>(
        &self,
        stage: &str,
        name: &str,
        items: &[T],
    ) -> StageResult<PathBuf> {
        let mut body = String::new();
        for item in items {
            body.push_str(
                &serde_json::to_string(item)
                    .context("serializing record")
                    .data()?,
            );
            body.push('\n');
        }
        self.write_text(stage, name, &body)
    }

    pub fn write_csv<T: Serialize>(
        &self,
        stage: &str,
        name: &str,
        rows: &[T],
    ) -> StageResult<PathBuf> {
        let body = csv_string(rows).data()?;
        self.write_text(stage, name, &body)
    }

    /// Opens an upstream artifact; a missing file is a data error that names
    /// the stage to run first.
    pub fn require(&self, name: &str, producer: &str) -> StageResult<PathBuf> {
        let path = self.path(name);
        if !path.is_file() {
            return Err(Failure::Data(anyhow!(
                "missing upstream artifact {}; run the `{producer}` stage first",
                path.display()
            )));
        }
        Ok(path)
    }

    pub fn read_jsonl<T: DeserializeOwned>(
        &self,
        name: &str,
        producer: &str,
    ) -> StageResult<Vec<T>> {
        let path = self.require(name, producer)?;
        read_jsonl(&path)
    }

    pub fn read_csv<T: DeserializeOwned>(&self, name: &str, producer: &str) -> StageResult<Vec<T>> {
        let path = self.require(name, producer)?;
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(&path)
            .with_context(|| format!("opening {}", path.display()))
            .data()?;
        rdr.deserialize()
            .enumerate()
            .map(|(i, r)| {
                r.with_context(|| format!("{} row {}", path.display(), i + 1))
                    .data()
            })
            .collect()
    }

    pub fn write_manifest(
        &self,
        stage: &str,
        entries: &[(String, String)],
    ) -> StageResult<PathBuf> {
        let mut body = String::new();
        for (k, v) in entries {
            body.push_str(k);
            body.push('\t');
            body.push_str(v);
            body.push('\n');
        }
        self.write_text(stage, &format!("{stage}.manifest"), &body)
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> StageResult<Vec<T>> {
    let f = fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .data()?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line
            .with_context(|| format!("reading {}", path.display()))
            .data()?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let item = serde_json::from_str(&line)
            .with_context(|| format!("{} line {}", path.display(), i + 1))
            .data()?;
        out.push(item);
    }
    Ok(out)
}

pub fn csv_string<T: Serialize>(rows: &[T]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(
        w.into_inner().map_err(|e| anyhow!("{e}"))?,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trips() {
        let h = header("classify", "abc123");
        assert_eq!(parse_header(&h), Some(("classify".into(), "abc123".into())));
        assert_eq!(parse_header("title,company"), None);
    }

    #[test]
    fn jsonl_skips_header_and_blank_lines() {
        let dir = tempfile::tempdir().unwrap();
        let a = Artifacts::new(dir.path().to_path_buf(), "h".into()).unwrap();
        a.write_jsonl("s", "x.jsonl", &[1, 2, 3]).unwrap();
        let back: Vec<i32> = a.read_jsonl("x.jsonl", "s").unwrap();
        assert_eq!(back, vec![1, 2, 3]);
        assert!(matches!(
            a.read_jsonl::<i32>("nope.jsonl", "s"),
            Err(Failure::Data(_))
        ));
    }
}
