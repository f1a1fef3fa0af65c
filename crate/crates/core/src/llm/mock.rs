use std::io::Read;
use std::path::Path;

use thiserror::Error;

use super::{BackendError, CompletionBackend, CompletionRequest};
use crate::profiles::DEFAULT_BLOCKLIST;
use crate::taxonomy::word_overlap_sim;

#[derive(Debug, Error)]
pub enum MockTableError {
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockMatch {
    /// The whole `title, company` text of a task line.
    Exact(String),
    /// A word sequence inside the job title.
    Keyword(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockRule {
    pub matcher: MockMatch,
    /// `Title:code` or `Student`.
    pub label: String,
    pub non_occupational: Option<bool>,
    pub multi_role: Option<bool>,
}

/// Deterministic stand-in for a completion model.
///
/// Generation prompts are answered line by line from the task lines after the
/// last `---` separator: exact `title, company` rules first, then keyword
/// rules in table order, then an echo of the title with the code `99-9999.99`
/// (which no taxonomy contains). Selection prompts pick the option whose title
/// best overlaps the job title, lowest option number on ties.
#[derive(Debug, Clone)]
pub struct MockBackend {
    name: String,
    rules: Vec<MockRule>,
}

const BUILTIN_EXACT: [(&str, &str, bool, bool); 4] = [
    (
        "Aircraft cabin cleaner, Avionic Services",
        "Aircraft Service Attendants:53-6032.00",
        false,
        false,
    ),
    (
        "Barista, Starbucks Coffee",
        "Baristas:35-3023.01",
        false,
        false,
    ),
    (
        "Stage manager, director, and owner, Old Vic theatre",
        "Producers and Directors:27-2012.00",
        true,
        true,
    ),
    (
        "Summer research intern, Columbia University",
        "Social Science Research Assistants:19-4061.00",
        true,
        false,
    ),
];

fn norm_words(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn contains_phrase(hay: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

fn parse_yn(s: &str) -> Result<Option<bool>, String> {
    match s.trim() {
        "" => Ok(None),
        "Y" | "y" => Ok(Some(true)),
        "N" | "n" => Ok(Some(false)),
        other => Err(format!("expected Y, N or empty, got {other:?}")),
    }
}

/// Splits `title, company` on the last comma.
fn split_task(text: &str) -> (&str, &str) {
    match text.rsplit_once(',') {
        Some((t, c)) => (t.trim(), c.trim()),
        None => (text.trim(), ""),
    }
}

impl MockBackend {
    pub fn new(name: impl Into<String>, rules: Vec<MockRule>) -> Self {
        Self {
            name: name.into(),
            rules,
        }
    }

    /// Rules covering the worked examples of the generation prompt.
    pub fn builtin() -> Self {
        let rules = BUILTIN_EXACT
            .iter()
            .map(|(text, label, n, m)| MockRule {
                matcher: MockMatch::Exact(text.to_string()),
                label: label.to_string(),
                non_occupational: Some(*n),
                multi_role: Some(*m),
            })
            .collect();
        Self::new("mock", rules)
    }

    /// Reads a rule table with header `match,pattern,label,non_occupational,multi_role`.
    /// `match` is `exact` or `keyword`; the flag columns take `Y`, `N` or empty.
    pub fn load<R: Read>(source: R, name: &str) -> Result<Self, MockTableError> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(source);
        let mut rules = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec?;
            let err = |message: String| MockTableError::Row { row, message };
            let kind = rec.get(0).unwrap_or("");
            let pattern = rec.get(1).unwrap_or("");
            let label = rec.get(2).unwrap_or("").to_string();
            if pattern.is_empty() || label.is_empty() {
                return Err(err("pattern and label are required".into()));
            }
            let matcher = match kind {
                "exact" => MockMatch::Exact(pattern.to_string()),
                "keyword" => MockMatch::Keyword(norm_words(pattern)),
                other => return Err(err(format!("unknown match kind {other:?}"))),
            };
            let non_occupational = parse_yn(rec.get(3).unwrap_or("")).map_err(err)?;
            let multi_role = parse_yn(rec.get(4).unwrap_or("")).map_err(err)?;
            rules.push(MockRule {
                matcher,
                label,
                non_occupational,
                multi_role,
            });
        }
        Ok(Self::new(name, rules))
    }

    pub fn from_path(path: &Path, name: &str) -> Result<Self, MockTableError> {
        Self::load(std::fs::File::open(path)?, name)
    }

    fn rule_for(&self, text: &str, title_words: &[String]) -> Option<&MockRule> {
        self.rules
            .iter()
            .find(|r| matches!(&r.matcher, MockMatch::Exact(t) if t == text))
            .or_else(|| {
                self.rules
                    .iter()
                    .find(|r| matches!(&r.matcher, MockMatch::Keyword(k) if contains_phrase(title_words, k)))
            })
    }

    fn answer_generation(&self, id: &str, text: &str) -> String {
        let (title, _) = split_task(text);
        let words = norm_words(title);
        let rule = self.rule_for(text, &words);
        let label = match rule {
            Some(r) => r.label.clone(),
            None => format!("{title}:99-9999.99"),
        };
        let non_occ = rule.and_then(|r| r.non_occupational).unwrap_or_else(|| {
            words
                .iter()
                .any(|w| DEFAULT_BLOCKLIST.contains(&w.as_str()))
        });
        let multi = rule.and_then(|r| r.multi_role).unwrap_or_else(|| {
            words.iter().any(|w| w == "and")
                || title.contains('&')
                || title.contains('/')
                || title.contains(',')
        });
        let yn = |b: bool| if b { "Y" } else { "N" };
        format!("{id}; {label}; {}; {}", yn(non_occ), yn(multi))
    }

    fn answer_selection(id: &str, body: &str) -> Option<String> {
        let (text, options) = body.split_once("// options:")?;
        let (title, _) = split_task(text.trim());
        let mut best: Option<(usize, f64)> = None;
        for opt in options.split(';') {
            let opt = opt.trim();
            let (num, rest) = opt.split_once(". ")?;
            let num: usize = num.trim().parse().ok()?;
            let opt_title = rest.rsplit_once(" (").map_or(rest, |(t, _)| t);
            let score = word_overlap_sim(title, opt_title);
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((num, score));
            }
        }
        best.map(|(n, _)| format!("{id}:{n}"))
    }
}

impl CompletionBackend for MockBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        let tail_start = req.prompt.rfind("\n---\n").map_or(0, |i| i + 5);
        let tail = &req.prompt[tail_start..];
        let mut answers = Vec::new();
        for line in tail.lines() {
            let line = line.trim();
            let Some(rest) = line.strip_prefix('T') else {
                continue;
            };
            let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
            if digits.is_empty() {
                continue;
            }
            let id = format!("T{digits}");
            let after = &rest[digits.len()..];
            if let Some(text) = after.strip_prefix(';') {
                answers.push(self.answer_generation(&id, text.trim()));
            } else if let Some(body) = after.strip_prefix('.') {
                if let Some(a) = Self::answer_selection(&id, body) {
                    answers.push(a);
                }
            }
        }
        Ok(answers.join("\n"))
    }

    fn model_name(&self) -> &str {
        &self.name
    }
}
