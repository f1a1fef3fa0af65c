//! Few-shot example sets.
//!
//! A shot file is the examples block exactly as it appears in the prompt:
//!
//! ```text
//! Input texts:
//! T1; Aircraft cabin cleaner, Avionic Services
//! T2; Barista, Starbucks Coffee
//! Answers:
//! T1; Aircraft Service Attendants:53-6032.00; N; N
//! T2; Baristas:35-3023.01; N; N
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use super::parse::parse_answer_line;

#[derive(Debug, Error)]
pub enum ShotError {
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
    #[error("task {0} has an input line but no answer, or the reverse")]
    Unpaired(String),
    #[error("task ids must run T1..T{0} in order")]
    Numbering(usize),
    #[error("expected {expected} examples, found {found}")]
    Count { expected: usize, found: usize },
    #[error("empty shot set")]
    Empty,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FewShotExample {
    /// `title, company`
    pub task_line: String,
    /// `Title:code; Y|N; Y|N`
    pub answer_line: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FewShotExampleSet {
    examples: Vec<FewShotExample>,
}

impl FewShotExampleSet {
    pub fn new(examples: Vec<FewShotExample>) -> Result<Self, ShotError> {
        if examples.is_empty() {
            return Err(ShotError::Empty);
        }
        for (i, ex) in examples.iter().enumerate() {
            let line = format!("T{}; {}", i + 1, ex.answer_line);
            parse_answer_line(&line).map_err(|(_, reason)| ShotError::Line {
                line: i + 1,
                reason,
            })?;
        }
        Ok(Self { examples })
    }

    pub fn k(&self) -> usize {
        self.examples.len()
    }

    pub fn examples(&self) -> &[FewShotExample] {
        &self.examples
    }

    pub fn parse(text: &str) -> Result<Self, ShotError> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Inputs,
            Answers,
        }
        let mut section = Section::None;
        let mut inputs: BTreeMap<usize, String> = BTreeMap::new();
        let mut answers: BTreeMap<usize, String> = BTreeMap::new();
        let mut order = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |reason: &str| ShotError::Line {
                line: i + 1,
                reason: reason.to_string(),
            };
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "Input texts:" {
                section = Section::Inputs;
                continue;
            }
            if line == "Answers:" {
                section = Section::Answers;
                continue;
            }
            let rest = line
                .strip_prefix('T')
                .ok_or_else(|| err("expected a task line"))?;
            let (num, body) = rest
                .split_once(';')
                .ok_or_else(|| err("expected 'Tn; ...'"))?;
            let n: usize = num.trim().parse().map_err(|_| err("bad task number"))?;
            let body = body.trim().to_string();
            let target = match section {
                Section::Inputs => {
                    order.push(n);
                    &mut inputs
                }
                Section::Answers => &mut answers,
                Section::None => return Err(err("task line before 'Input texts:'")),
            };
            if target.insert(n, body).is_some() {
                return Err(err("duplicate task number"));
            }
        }
        if order.iter().enumerate().any(|(i, &n)| n != i + 1) {
            return Err(ShotError::Numbering(order.len()));
        }
        let mut examples = Vec::with_capacity(order.len());
        for n in order {
            let answer = answers
                .remove(&n)
                .ok_or_else(|| ShotError::Unpaired(format!("T{n}")))?;
            examples.push(FewShotExample {
                task_line: inputs.remove(&n).unwrap_or_default(),
                answer_line: answer,
            });
        }
        if let Some(n) = answers.keys().next() {
            return Err(ShotError::Unpaired(format!("T{n}")));
        }
        Self::new(examples)
    }

    /// Loads a shot file and checks it holds exactly `expected_k` examples when given.
    pub fn load_path(path: &Path, expected_k: Option<usize>) -> Result<Self, ShotError> {
        let set = Self::parse(&std::fs::read_to_string(path)?)?;
        if let Some(k) = expected_k {
            if set.k() != k {
                return Err(ShotError::Count {
                    expected: k,
                    found: set.k(),
                });
            }
        }
        Ok(set)
    }

    /// The text substituted for `{{examples}}`.
    pub fn render(&self) -> String {
        let mut out = String::from("Input texts:\n");
        for (i, ex) in self.examples.iter().enumerate() {
            out.push_str(&format!("T{}; {}\n", i + 1, ex.task_line));
        }
        out.push_str("Answers:");
        for (i, ex) in self.examples.iter().enumerate() {
            out.push_str(&format!("\nT{}; {}", i + 1, ex.answer_line));
        }
        out
    }

    #[cfg(test)]
    pub(crate) fn appendix_sample() -> Self {
        Self::parse(
            "Input texts:\nT1; Aircraft cabin cleaner, Avionic Services\nT2; Barista, Starbucks Coffee\n\
T3; Stage manager, director, and owner, Old Vic theatre\nT4; Summer research intern, Columbia University\n\
Answers:\nT1; Aircraft Service Attendants:53-6032.00; N; N\nT2; Baristas:35-3023.01; N; N\n\
T3; Producers and Directors:27-2012.00; Y; Y\nT4; Social Science Research Assistants:19-4061.00; Y; N\n",
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_round_trips() {
        let set = FewShotExampleSet::appendix_sample();
        assert_eq!(set.k(), 4);
        assert_eq!(
            set.examples()[2].task_line,
            "Stage manager, director, and owner, Old Vic theatre"
        );
        let again = FewShotExampleSet::parse(&set.render()).unwrap();
        assert_eq!(again, set);
    }

    #[test]
    fn rejects_bad_sets() {
        assert!(matches!(
            FewShotExampleSet::parse(""),
            Err(ShotError::Empty)
        ));
        let unpaired =
            "Input texts:\nT1; A, B\nT2; C, D\nAnswers:\nT1; Chief Executives:11-1011.00; N; N\n";
        assert!(
            matches!(FewShotExampleSet::parse(unpaired), Err(ShotError::Unpaired(id)) if id == "T2")
        );
        let bad_code = "Input texts:\nT1; A, B\nAnswers:\nT1; Chief Executives:11-1011; N; N\n";
        assert!(matches!(
            FewShotExampleSet::parse(bad_code),
            Err(ShotError::Line { .. })
        ));
        let gap = "Input texts:\nT1; A, B\nT3; C, D\nAnswers:\nT1; X:11-1011.00; N; N\nT3; X:11-1011.00; N; N\n";
        assert!(matches!(
            FewShotExampleSet::parse(gap),
            Err(ShotError::Numbering(_))
        ));
    }
}
