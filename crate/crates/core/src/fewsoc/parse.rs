//! Response grammars.
//!
//! Generation answers are one line per task: `Tid; Title:code; Y|N; Y|N`,
//! with `Student` allowed in place of `Title:code`. Selection answers are
//! `Tid:k` with `k` a 1-based option number.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::SocCode;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneratedCode {
    Soc(SocCode),
    Student,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationRecord {
    pub task_id: String,
    pub soc_title: String,
    pub soc_code: GeneratedCode,
    pub non_occupational: bool,
    pub multi_role: bool,
}

impl GenerationRecord {
    /// Formats the record the way the model is asked to answer.
    pub fn to_line(&self) -> String {
        let label = match &self.soc_code {
            GeneratedCode::Student => "Student".to_string(),
            GeneratedCode::Soc(c) => format!("{}:{}", self.soc_title, c),
        };
        let yn = |b: bool| if b { "Y" } else { "N" };
        format!(
            "{}; {}; {}; {}",
            self.task_id,
            label,
            yn(self.non_occupational),
            yn(self.multi_role)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}{}: {reason}", task_id.as_ref().map(|t| format!(" ({t})")).unwrap_or_default())]
pub struct ResponseError {
    /// 1-based line of the response; 0 for batch-level problems such as missing ids.
    pub line: usize,
    pub task_id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct GenerationParse {
    pub records: Vec<GenerationRecord>,
    pub errors: Vec<ResponseError>,
}

impl GenerationParse {
    /// Ids that did not yield a usable record.
    pub fn failed_ids<'a>(&self, expected: &'a [String]) -> Vec<&'a String> {
        let ok: BTreeSet<&str> = self.records.iter().map(|r| r.task_id.as_str()).collect();
        expected
            .iter()
            .filter(|id| !ok.contains(id.as_str()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no parseable answer lines ({} errors)", .0.errors.len())]
pub struct EmptyGeneration(pub GenerationParse);

fn strict_yn(s: &str) -> Result<bool, String> {
    match s.trim() {
        "Y" => Ok(true),
        "N" => Ok(false),
        other => Err(format!("expected Y or N, got {other:?}")),
    }
}

fn split_task_id(line: &str) -> Option<(&str, &str)> {
    let rest = line.strip_prefix('T')?;
    let n = rest.bytes().take_while(u8::is_ascii_digit).count();
    if n == 0 {
        return None;
    }
    Some((&line[..=n], &rest[n..]))
}

/// Parses one `Tid; Label 1; Label 2; Label 3` line.
pub fn parse_answer_line(line: &str) -> Result<GenerationRecord, (Option<String>, String)> {
    let line = line.trim();
    let Some((id, rest)) = split_task_id(line) else {
        return Err((None, "line does not start with a task id".into()));
    };
    let id = id.to_string();
    let fail = |reason: String| (Some(id.clone()), reason);
    let rest = rest.trim_start();
    let Some(rest) = rest.strip_prefix(';') else {
        return Err(fail("missing ';' after task id".into()));
    };
    let fields: Vec<&str> = rest.split(';').map(str::trim).collect();
    if fields.len() != 3 {
        return Err(fail(format!("expected 3 labels, found {}", fields.len())));
    }
    let label = fields[0].trim_matches(|c| c == '\'' || c == '"' || c == '`');
    let non_occupational = strict_yn(fields[1]).map_err(&fail)?;
    let multi_role = strict_yn(fields[2]).map_err(&fail)?;
    if label.eq_ignore_ascii_case("student") {
        return Ok(GenerationRecord {
            task_id: id,
            soc_title: String::new(),
            soc_code: GeneratedCode::Student,
            non_occupational: true,
            multi_role,
        });
    }
    let Some((title, code)) = label.rsplit_once(':') else {
        return Err(fail(format!("label {label:?} lacks 'title:code'")));
    };
    let soc = SocCode::parse(code).map_err(|e| fail(e.to_string()))?;
    Ok(GenerationRecord {
        task_id: id,
        soc_title: title.trim().to_string(),
        soc_code: GeneratedCode::Soc(soc),
        non_occupational,
        multi_role,
    })
}

/// Parses a generation response against the ids issued in the batch. Never
/// panics; returns `Err` only when not a single line could be used.
pub fn parse_generation_response(
    text: &str,
    expected_ids: &[String],
) -> Result<GenerationParse, EmptyGeneration> {
    let expected: BTreeSet<&str> = expected_ids.iter().map(String::as_str).collect();
    let mut out = GenerationParse::default();
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.eq_ignore_ascii_case("answers:") {
            continue;
        }
        match parse_answer_line(line) {
            Ok(rec) => {
                if !expected.contains(rec.task_id.as_str()) {
                    out.errors.push(ResponseError {
                        line: i + 1,
                        task_id: Some(rec.task_id),
                        reason: "unknown task id".into(),
                    });
                } else if !seen.insert(rec.task_id.clone()) {
                    out.errors.push(ResponseError {
                        line: i + 1,
                        task_id: Some(rec.task_id),
                        reason: "duplicate task id".into(),
                    });
                } else {
                    out.records.push(rec);
                }
            }
            Err((task_id, reason)) => out.errors.push(ResponseError {
                line: i + 1,
                task_id,
                reason,
            }),
        }
    }
    for id in expected_ids {
        let errored = out
            .errors
            .iter()
            .any(|e| e.task_id.as_deref() == Some(id.as_str()));
        if !seen.contains(id) && !errored {
            out.errors.push(ResponseError {
                line: 0,
                task_id: Some(id.clone()),
                reason: "missing answer".into(),
            });
        }
    }
    if out.records.is_empty() {
        return Err(EmptyGeneration(out));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectionError {
    #[error("no answer")]
    Missing,
    #[error("option {chosen} outside 1..={count}")]
    OutOfRange { chosen: usize, count: usize },
    #[error("conflicting answers")]
    Conflicting,
}

/// Per-item outcome of a selection response, keyed by task id.
pub type SelectionParse = BTreeMap<String, Result<usize, SelectionError>>;

/// `candidate_counts[i]` is the option count of task `T{i+1}`. Returns the
/// chosen 1-based option for every task id, or the reason it is unusable.
pub fn parse_selection_response(text: &str, candidate_counts: &[usize]) -> SelectionParse {
    let mut answers: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for raw in text.lines() {
        let line = raw.trim();
        let Some((id, rest)) = split_task_id(line) else {
            continue;
        };
        let Some(num) = rest.trim_start().strip_prefix(':') else {
            continue;
        };
        let digits: String = num
            .trim()
            .chars()
            .take_while(char::is_ascii_digit)
            .collect();
        if let Ok(k) = digits.parse::<usize>() {
            answers.entry(id.to_string()).or_default().push(k);
        }
    }
    candidate_counts
        .iter()
        .enumerate()
        .map(|(i, &count)| {
            let id = format!("T{}", i + 1);
            let outcome = match answers.get(&id).map(Vec::as_slice) {
                None | Some([]) => Err(SelectionError::Missing),
                Some([k]) => {
                    if (1..=count).contains(k) {
                        Ok(*k)
                    } else {
                        Err(SelectionError::OutOfRange { chosen: *k, count })
                    }
                }
                Some(ks) => {
                    if ks.iter().all(|k| *k == ks[0]) && (1..=count).contains(&ks[0]) {
                        Ok(ks[0])
                    } else {
                        Err(SelectionError::Conflicting)
                    }
                }
            };
            (id, outcome)
        })
        .collect()
}
