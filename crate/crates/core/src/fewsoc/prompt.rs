//! Prompt templates for code generation and candidate selection.

use thiserror::Error;

use super::shots::FewShotExampleSet;
use crate::profiles::JobKey;
use crate::taxonomy::SocEntry;

pub const GENERATION_TEMPLATE: &str = "You are an expert O*NET-SOC 2019 coder. Given a list of job title-company name pairs in input texts, assign the following labels for each input text:
1. Occupational title and code from the O*NET-SOC 2019. Separate the title and code with colon. If no suitable answer is available, a best or random guess is fine. If the input text mentions a student, answer 'Student'.
2. Yes (Y) or no (N) to whether the input text mentions a non-occupational role or not. Non-occupational roles typically include keywords such as intern, student, volunteer, founder, owner, member, etc.
3. Yes (Y) or no (N) to whether the input text mentions multiple roles or not.
Separated each label with semi-colon. Do not explain.
---
Answer format:
Task ID; Label 1; Label 2; Label 3
---
Examples:
{{examples}}
---
Input texts:
{{data}}
Answers:";

pub const SELECTION_TEMPLATE: &str = "Select the O*NET-SOC that best describes each job title-company name pair below. Choose only one number from the options provided. Do not explain.
---
Examples:
T1. social media manager, mcs - midwest conference service // options: 1. Public Relations Managers (11-2032.00); 2. Fundraising Managers (11-2033.00)
T2. medical scribe, proscribe // options: 1. Medical Records Specialists (29-2072.00); 2. Health Information Technologists and Medical Registrars (29-9021.00)
Answers:
T1:1
T2:1
---
{{data}}
Answers:";

pub const DEFAULT_MAX_BATCH: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch of {size} exceeds the maximum of {max}")]
    BatchTooLarge { size: usize, max: usize },
    #[error("item {index} has {count} candidate(s); selection needs at least 2")]
    TooFewCandidates { index: usize, count: usize },
}

pub fn task_id(index: usize) -> String {
    format!("T{}", index + 1)
}

/// `title, company`, or just the title when the company is blank.
pub fn task_text(job: &JobKey) -> String {
    if job.company.is_empty() {
        job.title.clone()
    } else {
        format!("{}, {}", job.title, job.company)
    }
}

pub fn render_generation_prompt(
    batch: &[JobKey],
    shots: &FewShotExampleSet,
    max_batch: usize,
) -> Result<String, PromptError> {
    if batch.is_empty() {
        return Err(PromptError::EmptyBatch);
    }
    if batch.len() > max_batch {
        return Err(PromptError::BatchTooLarge {
            size: batch.len(),
            max: max_batch,
        });
    }
    let data: Vec<String> = batch
        .iter()
        .enumerate()
        .map(|(i, j)| format!("{}; {}", task_id(i), task_text(j)))
        .collect();
    Ok(GENERATION_TEMPLATE
        .replace("{{examples}}", &shots.render())
        .replace("{{data}}", &data.join("\n")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionItem {
    pub job: JobKey,
    pub candidates: Vec<SocEntry>,
}

pub fn render_selection_prompt(items: &[SelectionItem]) -> Result<String, PromptError> {
    if items.is_empty() {
        return Err(PromptError::EmptyBatch);
    }
    let mut data = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        if item.candidates.len() < 2 {
            return Err(PromptError::TooFewCandidates {
                index: i,
                count: item.candidates.len(),
            });
        }
        let options: Vec<String> = item
            .candidates
            .iter()
            .enumerate()
            .map(|(k, e)| format!("{}. {} ({})", k + 1, e.title, e.code))
            .collect();
        data.push(format!(
            "{}. {} // options: {}",
            task_id(i),
            task_text(&item.job),
            options.join("; ")
        ));
    }
    Ok(SELECTION_TEMPLATE.replace("{{data}}", &data.join("\n")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::SocCode;

    fn entry(code: &str, title: &str) -> SocEntry {
        SocEntry {
            code: SocCode::parse(code).unwrap(),
            title: title.into(),
            description: None,
            sample_titles: vec![],
        }
    }

    #[test]
    fn generation_batch_limits() {
        let shots = FewShotExampleSet::appendix_sample();
        assert_eq!(
            render_generation_prompt(&[], &shots, 5),
            Err(PromptError::EmptyBatch)
        );
        let six: Vec<JobKey> = (0..6)
            .map(|i| JobKey::new(&format!("Job {i}"), "Acme"))
            .collect();
        assert_eq!(
            render_generation_prompt(&six, &shots, 5),
            Err(PromptError::BatchTooLarge { size: 6, max: 5 })
        );
    }

    #[test]
    fn generation_prompt_shape() {
        let shots = FewShotExampleSet::appendix_sample();
        let batch = [
            JobKey::new("Barista", "Starbucks Coffee"),
            JobKey::new("Welder", ""),
        ];
        let p = render_generation_prompt(&batch, &shots, 5).unwrap();
        assert!(p.starts_with("You are an expert O*NET-SOC 2019 coder."));
        assert!(
            p.ends_with("---\nInput texts:\nT1; Barista, Starbucks Coffee\nT2; Welder\nAnswers:")
        );
        assert_eq!(p, render_generation_prompt(&batch, &shots, 5).unwrap());
    }

    #[test]
    fn selection_numbering_restarts_per_item() {
        let items = vec![
            SelectionItem {
                job: JobKey::new("social media manager", "mcs"),
                candidates: vec![
                    entry("11-2032.00", "Public Relations Managers"),
                    entry("11-2033.00", "Fundraising Managers"),
                ],
            },
            SelectionItem {
                job: JobKey::new("web dev", "Initech"),
                candidates: vec![
                    entry("15-1254.00", "Web Developers"),
                    entry("15-1255.00", "Web and Digital Interface Designers"),
                    entry("15-1252.00", "Software Developers"),
                ],
            },
            SelectionItem {
                job: JobKey::new("medical scribe", "proscribe"),
                candidates: vec![
                    entry("29-2072.00", "Medical Records Specialists"),
                    entry(
                        "29-9021.00",
                        "Health Information Technologists and Medical Registrars",
                    ),
                ],
            },
        ];
        let p = render_selection_prompt(&items).unwrap();
        let tail = p.rsplit("\n---\n").next().unwrap();
        assert_eq!(
            tail,
            "T1. social media manager, mcs // options: 1. Public Relations Managers (11-2032.00); 2. Fundraising Managers (11-2033.00)\n\
T2. web dev, Initech // options: 1. Web Developers (15-1254.00); 2. Web and Digital Interface Designers (15-1255.00); 3. Software Developers (15-1252.00)\n\
T3. medical scribe, proscribe // options: 1. Medical Records Specialists (29-2072.00); 2. Health Information Technologists and Medical Registrars (29-9021.00)\n\
Answers:"
        );
        assert_eq!(p, render_selection_prompt(&items).unwrap());
    }

    #[test]
    fn selection_rejects_singletons() {
        let items = vec![SelectionItem {
            job: JobKey::new("a", "b"),
            candidates: vec![entry("11-2032.00", "X")],
        }];
        assert_eq!(
            render_selection_prompt(&items),
            Err(PromptError::TooFewCandidates { index: 0, count: 1 })
        );
    }
}
