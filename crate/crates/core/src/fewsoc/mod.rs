//! Two-stage occupation classifier.
//!
//! Stage one asks the model for a title, an 8-digit code and two auxiliary
//! flags for a batch of (title, company) pairs. Stage two repairs codes that
//! are not in the 2019 taxonomy: crosswalk chaining, a model selection round
//! for one-to-many crosswalk images, and word-overlap matching on the
//! generated title as the last resort.

pub mod parse;
pub mod prompt;
pub mod shots;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{BackendError, CompletionBackend, CompletionRequest};
use crate::profiles::{JobFlags, JobKey};
use crate::taxonomy::{closest_match, crosswalk_resolve, CrosswalkTable, SocCode, Taxonomy};

pub use parse::{
    parse_generation_response, parse_selection_response, GeneratedCode, GenerationParse,
    GenerationRecord, ResponseError, SelectionError,
};
pub use prompt::{
    render_generation_prompt, render_selection_prompt, SelectionItem, DEFAULT_MAX_BATCH,
};
pub use shots::{FewShotExample, FewShotExampleSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionPath {
    DirectValid,
    CrosswalkUnique,
    CrosswalkLlmSelected,
    WordOverlapFallback,
}

impl ResolutionPath {
    pub const ALL: [ResolutionPath; 4] = [
        ResolutionPath::DirectValid,
        ResolutionPath::CrosswalkUnique,
        ResolutionPath::CrosswalkLlmSelected,
        ResolutionPath::WordOverlapFallback,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ResolutionPath::DirectValid => "direct_valid",
            ResolutionPath::CrosswalkUnique => "crosswalk_unique",
            ResolutionPath::CrosswalkLlmSelected => "crosswalk_llm_selected",
            ResolutionPath::WordOverlapFallback => "word_overlap_fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub title: String,
    pub company: String,
    pub final_code: SocCode,
    pub final_title: String,
    pub generated_title: String,
    pub generated_code: SocCode,
    pub resolution_path: ResolutionPath,
    pub non_occupational: bool,
    pub multi_role: bool,
    pub low_confidence: bool,
}

/// Outcome for one (title, company) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum JobOutcome {
    Classified(ClassificationResult),
    Student {
        title: String,
        company: String,
        multi_role: bool,
    },
    Unclassified {
        title: String,
        company: String,
        reason: String,
    },
}

impl JobOutcome {
    pub fn key(&self) -> JobKey {
        match self {
            JobOutcome::Classified(r) => JobKey::new(&r.title, &r.company),
            JobOutcome::Student { title, company, .. }
            | JobOutcome::Unclassified { title, company, .. } => JobKey::new(title, company),
        }
    }

    pub fn flags(&self) -> Option<JobFlags> {
        match self {
            JobOutcome::Classified(r) => Some(JobFlags {
                non_occupational: r.non_occupational,
                multi_role: r.multi_role,
            }),
            JobOutcome::Student { multi_role, .. } => Some(JobFlags {
                non_occupational: true,
                multi_role: *multi_role,
            }),
            JobOutcome::Unclassified { .. } => None,
        }
    }

    pub fn final_code(&self) -> Option<&SocCode> {
        match self {
            JobOutcome::Classified(r) => Some(&r.final_code),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("prompt: {0}")]
    Prompt(#[from] prompt::PromptError),
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub batch_size: usize,
    pub max_batch: usize,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Re-ask a job alone once when its answer line was unusable.
    pub reask_malformed: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            batch_size: DEFAULT_MAX_BATCH,
            max_batch: DEFAULT_MAX_BATCH,
            temperature: 0.0,
            max_output_tokens: 512,
            reask_malformed: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Generation,
    Reask,
    Selection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageEntry {
    pub kind: PromptKind,
    pub prompt_chars: usize,
    pub response_chars: usize,
}

/// Append-only record of backend calls.
#[derive(Debug, Default)]
pub struct UsageLog {
    entries: Mutex<Vec<UsageEntry>>,
}

impl UsageLog {
    fn push(&self, e: UsageEntry) {
        self.entries
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .push(e);
    }

    pub fn snapshot(&self) -> Vec<UsageEntry> {
        self.entries
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .clone()
    }

    pub fn calls(&self) -> usize {
        self.entries.lock().unwrap_or_else(|p| p.into_inner()).len()
    }
}

pub struct Classifier<'a> {
    pub backend: &'a dyn CompletionBackend,
    pub shots: &'a FewShotExampleSet,
    pub taxonomy: &'a Taxonomy,
    pub crosswalks: &'a [CrosswalkTable],
    pub config: ClassifierConfig,
    pub usage: UsageLog,
}

enum Pending {
    Done(JobOutcome),
    Select {
        record: GenerationRecord,
        candidates: Vec<SocCode>,
    },
    Fallback {
        record: GenerationRecord,
    },
}

fn normalize_title(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl<'a> Classifier<'a> {
    pub fn new(
        backend: &'a dyn CompletionBackend,
        shots: &'a FewShotExampleSet,
        taxonomy: &'a Taxonomy,
        crosswalks: &'a [CrosswalkTable],
        config: ClassifierConfig,
    ) -> Self {
        Self {
            backend,
            shots,
            taxonomy,
            crosswalks,
            config,
            usage: UsageLog::default(),
        }
    }

    fn ask(&self, kind: PromptKind, prompt: String) -> Result<String, BackendError> {
        let req = CompletionRequest::with_params(
            prompt,
            self.config.temperature,
            self.config.max_output_tokens,
        )?;
        let text = self.backend.complete(&req)?;
        self.usage.push(UsageEntry {
            kind,
            prompt_chars: req.prompt.len(),
            response_chars: text.len(),
        });
        Ok(text)
    }

    fn generate(
        &self,
        jobs: &[JobKey],
    ) -> Result<Vec<Result<GenerationRecord, String>>, ClassifyError> {
        let ids: Vec<String> = (0..jobs.len()).map(prompt::task_id).collect();
        let text = self.ask(
            PromptKind::Generation,
            render_generation_prompt(jobs, self.shots, self.config.max_batch)?,
        )?;
        let parsed = match parse_generation_response(&text, &ids) {
            Ok(p) => p,
            Err(e) => e.0,
        };
        let mut by_id: BTreeMap<String, GenerationRecord> = parsed
            .records
            .iter()
            .cloned()
            .map(|r| (r.task_id.clone(), r))
            .collect();
        let mut out = Vec::with_capacity(jobs.len());
        for (i, job) in jobs.iter().enumerate() {
            if let Some(r) = by_id.remove(&ids[i]) {
                out.push(Ok(r));
                continue;
            }
            let reason = parsed
                .errors
                .iter()
                .find(|e| e.task_id.as_deref() == Some(ids[i].as_str()))
                .map_or_else(|| "no answer".to_string(), |e| e.reason.clone());
            if self.config.reask_malformed {
                out.push(
                    self.reask(job)
                        .map_err(|r| format!("{reason}; re-ask: {r}")),
                );
            } else {
                out.push(Err(reason));
            }
        }
        Ok(out)
    }

    fn reask(&self, job: &JobKey) -> Result<GenerationRecord, String> {
        let prompt =
            render_generation_prompt(std::slice::from_ref(job), self.shots, self.config.max_batch)
                .map_err(|e| e.to_string())?;
        let text = self
            .ask(PromptKind::Reask, prompt)
            .map_err(|e| e.to_string())?;
        let ids = [prompt::task_id(0)];
        match parse_generation_response(&text, &ids) {
            Ok(mut p) => Ok(p.records.remove(0)),
            Err(e) => Err(e
                .0
                .errors
                .first()
                .map_or_else(|| "no answer".into(), |e| e.reason.clone())),
        }
    }

    fn fallback(&self, job: &JobKey, record: &GenerationRecord) -> JobOutcome {
        let generated = normalize_title(&record.soc_title);
        let (query, mut low) = if generated.is_empty() {
            (normalize_title(&job.title), true)
        } else {
            (generated, false)
        };
        let m = closest_match(&query, self.taxonomy).expect("taxonomy is non-empty");
        low |= m.low_confidence;
        self.classified(
            job,
            record,
            m.code,
            ResolutionPath::WordOverlapFallback,
            low,
        )
    }

    fn classified(
        &self,
        job: &JobKey,
        record: &GenerationRecord,
        code: SocCode,
        path: ResolutionPath,
        low_confidence: bool,
    ) -> JobOutcome {
        let generated_code = match &record.soc_code {
            GeneratedCode::Soc(c) => c.clone(),
            GeneratedCode::Student => unreachable!("students never reach the resolver"),
        };
        let final_title = self
            .taxonomy
            .get(&code)
            .map(|e| e.title.clone())
            .unwrap_or_default();
        JobOutcome::Classified(ClassificationResult {
            title: job.title.clone(),
            company: job.company.clone(),
            final_code: code,
            final_title,
            generated_title: record.soc_title.clone(),
            generated_code,
            resolution_path: path,
            non_occupational: record.non_occupational,
            multi_role: record.multi_role,
            low_confidence,
        })
    }

    /// Classifies one batch of at most `max_batch` jobs. A backend failure
    /// aborts the whole batch so it can be retried as a unit.
    pub fn classify_batch(&self, jobs: &[JobKey]) -> Result<Vec<JobOutcome>, ClassifyError> {
        let generated = self.generate(jobs)?;
        let mut pending = Vec::with_capacity(jobs.len());
        for (job, g) in jobs.iter().zip(generated) {
            let record = match g {
                Ok(r) => r,
                Err(reason) => {
                    pending.push(Pending::Done(JobOutcome::Unclassified {
                        title: job.title.clone(),
                        company: job.company.clone(),
                        reason,
                    }));
                    continue;
                }
            };
            let code = match &record.soc_code {
                GeneratedCode::Student => {
                    pending.push(Pending::Done(JobOutcome::Student {
                        title: job.title.clone(),
                        company: job.company.clone(),
                        multi_role: record.multi_role,
                    }));
                    continue;
                }
                GeneratedCode::Soc(c) => c.clone(),
            };
            if self.taxonomy.is_valid(&code) {
                pending.push(Pending::Done(self.classified(
                    job,
                    &record,
                    code,
                    ResolutionPath::DirectValid,
                    false,
                )));
                continue;
            }
            let candidates = crosswalk_resolve(&code, self.crosswalks, self.taxonomy);
            match candidates.len() {
                0 => pending.push(Pending::Fallback { record }),
                1 => {
                    let c = candidates.into_iter().next().expect("one candidate");
                    pending.push(Pending::Done(self.classified(
                        job,
                        &record,
                        c,
                        ResolutionPath::CrosswalkUnique,
                        false,
                    )));
                }
                _ => pending.push(Pending::Select { record, candidates }),
            }
        }

        let select_idx: Vec<usize> = pending
            .iter()
            .enumerate()
            .filter(|(_, p)| matches!(p, Pending::Select { .. }))
            .map(|(i, _)| i)
            .collect();
        let mut choices: BTreeMap<usize, usize> = BTreeMap::new();
        if !select_idx.is_empty() {
            let items: Vec<SelectionItem> = select_idx
                .iter()
                .map(|&i| {
                    let Pending::Select { candidates, .. } = &pending[i] else {
                        unreachable!()
                    };
                    SelectionItem {
                        job: jobs[i].clone(),
                        candidates: candidates
                            .iter()
                            .filter_map(|c| self.taxonomy.get(c).cloned())
                            .collect(),
                    }
                })
                .collect();
            let text = self.ask(PromptKind::Selection, render_selection_prompt(&items)?)?;
            let counts: Vec<usize> = items.iter().map(|it| it.candidates.len()).collect();
            let parsed = parse_selection_response(&text, &counts);
            for (n, &i) in select_idx.iter().enumerate() {
                match &parsed[&prompt::task_id(n)] {
                    Ok(k) => {
                        choices.insert(i, *k);
                    }
                    Err(e) => {
                        tracing::debug!(job = ?jobs[i], error = %e, "selection failed, using word overlap")
                    }
                }
            }
        }

        Ok(pending
            .into_iter()
            .enumerate()
            .map(|(i, p)| match p {
                Pending::Done(o) => o,
                Pending::Fallback { record } => self.fallback(&jobs[i], &record),
                Pending::Select { record, candidates } => match choices.get(&i) {
                    Some(&k) => self.classified(
                        &jobs[i],
                        &record,
                        candidates[k - 1].clone(),
                        ResolutionPath::CrosswalkLlmSelected,
                        false,
                    ),
                    None => self.fallback(&jobs[i], &record),
                },
            })
            .collect())
    }

    /// Splits `jobs` into batches and classifies them on up to `workers`
    /// threads. `on_batch` sees every finished batch (for checkpointing);
    /// results come back in batch order.
    pub fn classify_jobs<F>(
        &self,
        jobs: &[JobKey],
        workers: usize,
        on_batch: F,
    ) -> Vec<(usize, Result<Vec<JobOutcome>, ClassifyError>)>
    where
        F: Fn(usize, &[JobKey], &Result<Vec<JobOutcome>, ClassifyError>) + Sync,
    {
        let size = self
            .config
            .batch_size
            .clamp(1, self.config.max_batch.max(1));
        let batches: Vec<&[JobKey]> = jobs.chunks(size).collect();
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<(usize, Result<Vec<JobOutcome>, ClassifyError>)>> =
            Mutex::new(Vec::new());
        std::thread::scope(|s| {
            for _ in 0..workers.clamp(1, batches.len().max(1)) {
                s.spawn(|| loop {
                    let b = next.fetch_add(1, Ordering::SeqCst);
                    if b >= batches.len() {
                        break;
                    }
                    let r = self.classify_batch(batches[b]);
                    on_batch(b, batches[b], &r);
                    results
                        .lock()
                        .unwrap_or_else(|p| p.into_inner())
                        .push((b, r));
                });
            }
        });
        let mut out = results.into_inner().unwrap_or_else(|p| p.into_inner());
        out.sort_by_key(|(b, _)| *b);
        out
    }
}

/// Counts of each resolution path among classified outcomes.
pub fn resolution_counts(outcomes: &[JobOutcome]) -> BTreeMap<ResolutionPath, usize> {
    let mut m: BTreeMap<ResolutionPath, usize> =
        ResolutionPath::ALL.iter().map(|p| (*p, 0)).collect();
    for o in outcomes {
        if let JobOutcome::Classified(r) = o {
            *m.get_mut(&r.resolution_path).expect("all paths present") += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::MockBackend;
    use crate::taxonomy::SocEntry;

    fn code(s: &str) -> SocCode {
        SocCode::parse(s).unwrap()
    }

    fn toy_taxonomy() -> Taxonomy {
        let rows = [
            ("11-1011.00", "Chief Executives"),
            ("11-2032.00", "Public Relations Managers"),
            ("11-2033.00", "Fundraising Managers"),
            ("15-1252.00", "Software Developers"),
            ("15-2051.00", "Data Scientists"),
            ("27-2012.00", "Producers and Directors"),
            ("35-3023.01", "Baristas"),
            ("43-4051.00", "Customer Service Representatives"),
            ("51-4121.00", "Welders, Cutters, Solderers, and Brazers"),
            ("53-6032.00", "Aircraft Service Attendants"),
        ];
        Taxonomy::from_entries(rows.iter().map(|(c, t)| SocEntry {
            code: code(c),
            title: t.to_string(),
            description: None,
            sample_titles: vec![],
        }))
        .unwrap()
    }

    fn crosswalks() -> Vec<CrosswalkTable> {
        let mut t = CrosswalkTable::new("2010", "2019");
        t.insert(code("15-1132.00"), code("15-1252.00"));
        t.insert(code("11-2031.00"), code("11-2032.00"));
        t.insert(code("11-2031.00"), code("11-2033.00"));
        vec![t]
    }

    fn mock() -> MockBackend {
        let table = "match,pattern,label,non_occupational,multi_role
keyword,barista,Baristas:35-3023.01,,
keyword,software engineer,Software Developers Applications:15-1132.00,,
keyword,fundraising,Public Relations and Fundraising Managers:11-2031.00,,
keyword,data wizard,Data Scientists:12-3456.78,,
keyword,mystery,:12-3456.78,,
keyword,student,Student,,
";
        MockBackend::load(table.as_bytes(), "mock").unwrap()
    }

    #[test]
    fn every_resolution_path() {
        let tax = toy_taxonomy();
        let cw = crosswalks();
        let shots = FewShotExampleSet::appendix_sample();
        let backend = mock();
        let clf = Classifier::new(&backend, &shots, &tax, &cw, ClassifierConfig::default());
        let jobs = vec![
            JobKey::new("Barista", "Starbucks Coffee"),
            JobKey::new("Software Engineer", "Initech"),
            JobKey::new("Fundraising lead", "Red Cross"),
            JobKey::new("Data Wizard", "Acme"),
            JobKey::new("Graduate Student", "MIT"),
        ];
        let out = clf.classify_batch(&jobs).unwrap();
        let paths: Vec<Option<ResolutionPath>> = out
            .iter()
            .map(|o| match o {
                JobOutcome::Classified(r) => Some(r.resolution_path),
                _ => None,
            })
            .collect();
        assert_eq!(
            paths,
            vec![
                Some(ResolutionPath::DirectValid),
                Some(ResolutionPath::CrosswalkUnique),
                Some(ResolutionPath::CrosswalkLlmSelected),
                Some(ResolutionPath::WordOverlapFallback),
                None,
            ]
        );
        assert_eq!(out[1].final_code(), Some(&code("15-1252.00")));
        // mock picks the option overlapping "fundraising"
        assert_eq!(out[2].final_code(), Some(&code("11-2033.00")));
        // "data scientists" overlaps "Data Scientists" fully
        assert_eq!(out[3].final_code(), Some(&code("15-2051.00")));
        assert!(matches!(out[4], JobOutcome::Student { .. }));
        assert!(out[4].flags().unwrap().non_occupational);
        // one generation call plus one selection call
        assert_eq!(clf.usage.calls(), 2);
        for o in &out {
            if let Some(c) = o.final_code() {
                assert!(tax.is_valid(c));
            }
        }
        let counts = resolution_counts(&out);
        assert_eq!(counts.values().sum::<usize>(), 4);
    }

    #[test]
    fn empty_generated_title_uses_job_title() {
        let tax = toy_taxonomy();
        let shots = FewShotExampleSet::appendix_sample();
        let backend = mock();
        let clf = Classifier::new(&backend, &shots, &tax, &[], ClassifierConfig::default());
        let out = clf
            .classify_batch(&[JobKey::new("Mystery Customer Service", "Acme")])
            .unwrap();
        let JobOutcome::Classified(r) = &out[0] else {
            panic!("{out:?}")
        };
        assert_eq!(r.resolution_path, ResolutionPath::WordOverlapFallback);
        assert_eq!(r.final_code, code("43-4051.00"));
        assert!(r.low_confidence);
    }

    struct Scripted {
        replies: Mutex<Vec<String>>,
    }

    impl CompletionBackend for Scripted {
        fn complete(&self, _req: &CompletionRequest) -> Result<String, BackendError> {
            let mut r = self.replies.lock().unwrap();
            if r.is_empty() {
                Err(BackendError::Timeout)
            } else {
                Ok(r.remove(0))
            }
        }
        fn model_name(&self) -> &str {
            "scripted"
        }
    }

    #[test]
    fn malformed_line_is_reasked_once() {
        let tax = toy_taxonomy();
        let shots = FewShotExampleSet::appendix_sample();
        let backend = Scripted {
            replies: Mutex::new(vec![
                "T1; Baristas:35-3023.01; N; N\nT2; garbage".into(),
                "T1; Software Developers:15-1252.00; N; N".into(),
                "T1; Baristas:35-3023.01; N; N\nT2; still garbage".into(),
                "nope".into(),
            ]),
        };
        let clf = Classifier::new(&backend, &shots, &tax, &[], ClassifierConfig::default());
        let jobs = [
            JobKey::new("Barista", "Cafe"),
            JobKey::new("Dev", "Initech"),
        ];
        let out = clf.classify_batch(&jobs).unwrap();
        assert_eq!(out[1].final_code(), Some(&code("15-1252.00")));
        let usage = clf.usage.snapshot();
        assert_eq!(usage[1].kind, PromptKind::Reask);

        let out = clf.classify_batch(&jobs).unwrap();
        assert!(
            matches!(&out[1], JobOutcome::Unclassified { reason, .. } if reason.contains("re-ask"))
        );

        // the script is exhausted: backend failure surfaces as an error
        assert!(matches!(
            clf.classify_batch(&jobs),
            Err(ClassifyError::Backend(_))
        ));
    }

    #[test]
    fn threaded_runner_keeps_batch_order() {
        let tax = toy_taxonomy();
        let cw = crosswalks();
        let shots = FewShotExampleSet::appendix_sample();
        let backend = mock();
        let jobs: Vec<JobKey> = (0..23)
            .map(|i| {
                JobKey::new(
                    if i % 2 == 0 {
                        "Barista"
                    } else {
                        "Software Engineer"
                    },
                    &format!("Shop {i}"),
                )
            })
            .collect();
        let mut cfg = ClassifierConfig::default();
        cfg.batch_size = 5;
        let clf = Classifier::new(&backend, &shots, &tax, &cw, cfg);
        let seen = AtomicUsize::new(0);
        let res = clf.classify_jobs(&jobs, 4, |_, _, _| {
            seen.fetch_add(1, Ordering::SeqCst);
        });
        assert_eq!(seen.load(Ordering::SeqCst), 5);
        let flat: Vec<JobOutcome> = res.into_iter().flat_map(|(_, r)| r.unwrap()).collect();
        assert_eq!(flat.len(), 23);
        for (j, o) in jobs.iter().zip(&flat) {
            assert_eq!(&o.key(), j);
        }
    }
}
