//! Resume profile ingestion, cleaning criteria and hash partitioning.
//!
//! Profiles arrive as JSON lines, one profile per line:
//!
//! ```json
//! {"id":"p1","gender":"female","race":"asian",
//!  "jobs":[{"title":"Barista","company":"Starbucks Coffee","city":"Austin","state":"TX",
//!           "country":"US","start_date":"2010-07","end_date":"2012-01","is_current":false,
//!           "soc":"35-3023.01","naics":"722515"}],
//!  "education":[{"degree_level":"bachelor","degree_name":"Economics","start_date":"2006-09",
//!                "end_date":"2010-06","school":"UT Austin","city":"Austin","state":"TX"}]}
//! ```
//!
//! Text fields may be empty or absent; the cleaning criteria decide what survives.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::date::YearMonth;
use crate::taxonomy::SocCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegreeLevel {
    Other,
    Bachelor,
    Master,
    Doctorate,
}

impl DegreeLevel {
    pub fn label(self) -> &'static str {
        match self {
            DegreeLevel::Other => "other",
            DegreeLevel::Bachelor => "bachelor",
            DegreeLevel::Master => "master",
            DegreeLevel::Doctorate => "doctorate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Race {
    White,
    Black,
    Asian,
    Hispanic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub company: String,
    #[serde(default)]
    pub city: String,
    #[serde(default)]
    pub state: String,
    #[serde(default)]
    pub country: String,
    pub start_date: Option<YearMonth>,
    #[serde(default)]
    pub end_date: Option<YearMonth>,
    #[serde(default)]
    pub is_current: bool,
    /// Occupation code supplied with the source data.
    #[serde(default)]
    pub soc: Option<SocCode>,
    #[serde(default)]
    pub naics: Option<String>,
    /// Occupation code assigned by the classifier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_soc: Option<SocCode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wage: Option<f64>,
}

impl JobRecord {
    pub fn key(&self) -> JobKey {
        JobKey::new(&self.title, &self.company)
    }

    /// End date, or `snapshot` for the current job.
    pub fn effective_end(&self, snapshot: YearMonth) -> Option<YearMonth> {
        match (self.end_date, self.is_current) {
            (Some(e), _) => Some(e),
            (None, true) => Some(snapshot),
            (None, false) => None,
        }
    }
}

/// A (title, company) pair; the unit the classifier works on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JobKey {
    pub title: String,
    pub company: String,
}

impl JobKey {
    pub fn new(title: &str, company: &str) -> Self {
        Self {
            title: title.trim().to_string(),
            company: company.trim().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EducationRecord {
    pub degree_level: DegreeLevel,
    #[serde(default)]
    pub degree_name: String,
    #[serde(default)]
    pub start_date: Option<YearMonth>,
    #[serde(default)]
    pub end_date: Option<YearMonth>,
    #[serde(default)]
    pub school: String,
    #[serde(default)]
    pub city: String,
    #[serde(default)]
    pub state: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub id: String,
    #[serde(default)]
    pub jobs: Vec<JobRecord>,
    #[serde(default)]
    pub education: Vec<EducationRecord>,
    #[serde(default)]
    pub gender: Option<Gender>,
    #[serde(default)]
    pub race: Option<Race>,
}

impl Profile {
    /// End date of the earliest-completed bachelor's degree.
    pub fn bachelor_end(&self) -> Option<YearMonth> {
        self.education
            .iter()
            .filter(|e| e.degree_level == DegreeLevel::Bachelor)
            .filter_map(|e| e.end_date)
            .min()
    }

    pub fn first_job_start(&self) -> Option<YearMonth> {
        self.jobs.iter().filter_map(|j| j.start_date).min()
    }

    pub fn highest_degree(&self) -> Option<DegreeLevel> {
        self.education
            .iter()
            .map(|e| e.degree_level)
            .filter(|d| *d != DegreeLevel::Other)
            .max()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineErrorKind {
    Schema,
    Date,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct LineError {
    pub line: usize,
    pub kind: LineErrorKind,
    pub message: String,
}

/// A record inside an otherwise well-formed profile that breaks a record invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordViolation {
    pub line: usize,
    pub profile_id: String,
    pub job_index: usize,
    pub detail: String,
}

#[derive(Debug, Default)]
pub struct ParseReport {
    pub profiles: Vec<Profile>,
    pub errors: Vec<LineError>,
    pub violations: Vec<RecordViolation>,
}

/// Parses one profile per line. Blank lines and `#` header lines are skipped.
/// Malformed lines are reported with their 1-based line number and do not stop the stream.
pub fn parse_profiles<R: BufRead>(stream: R) -> Result<ParseReport, std::io::Error> {
    let mut report = ParseReport::default();
    for (i, line) in stream.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        match parse_profile_line(t) {
            Ok(p) => {
                for (j, job) in p.jobs.iter().enumerate() {
                    if let (Some(s), Some(e)) = (job.start_date, job.end_date) {
                        if e < s {
                            report.violations.push(RecordViolation {
                                line: line_no,
                                profile_id: p.id.clone(),
                                job_index: j,
                                detail: format!("end date {e} precedes start date {s}"),
                            });
                        }
                    }
                }
                report.profiles.push(p);
            }
            Err((kind, message)) => report.errors.push(LineError {
                line: line_no,
                kind,
                message,
            }),
        }
    }
    Ok(report)
}

fn parse_profile_line(line: &str) -> Result<Profile, (LineErrorKind, String)> {
    let p: Profile = serde_json::from_str(line).map_err(|e| {
        let msg = e.to_string();
        let kind = if msg.contains("unparseable date") {
            LineErrorKind::Date
        } else {
            LineErrorKind::Schema
        };
        (kind, msg)
    })?;
    if p.id.trim().is_empty() {
        return Err((LineErrorKind::Schema, "empty profile id".to_string()));
    }
    Ok(p)
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("partition count must be at least 1")]
pub struct ZeroPartitions;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Stable partition index for a profile id: FNV-1a 64 of the id's UTF-8 bytes modulo `n_partitions`.
pub fn hash_partition(profile_id: &str, n_partitions: usize) -> Result<usize, ZeroPartitions> {
    if n_partitions == 0 {
        return Err(ZeroPartitions);
    }
    Ok((fnv1a64(profile_id.as_bytes()) % n_partitions as u64) as usize)
}

/// Years between the bachelor's end date and the earliest job start. Negative
/// when a job predates graduation.
pub fn post_graduation_gap(p: &Profile) -> Option<f64> {
    let ba = p.bachelor_end()?;
    let first = p.first_job_start()?;
    Some(first.years_since(ba))
}

/// Auxiliary per-job flags from the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct JobFlags {
    pub non_occupational: bool,
    pub multi_role: bool,
}

pub const DEFAULT_BLOCKLIST: [&str; 6] = [
    "student",
    "intern",
    "volunteer",
    "founder",
    "owner",
    "member",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterCriteria {
    /// Titles with more words than this fail the title criterion. `None` disables the check.
    pub max_title_words: Option<usize>,
    pub timeframe: (i32, i32),
    pub gap_thresholds_years: BTreeMap<DegreeLevel, f64>,
    pub min_degree: DegreeLevel,
    /// Keyword fallback used when classifier flags are unavailable.
    pub blocklist: Vec<String>,
}

impl Default for FilterCriteria {
    fn default() -> Self {
        Self {
            max_title_words: Some(7),
            timeframe: (1999, 2022),
            gap_thresholds_years: BTreeMap::from([
                (DegreeLevel::Bachelor, 3.75),
                (DegreeLevel::Master, 5.59),
                (DegreeLevel::Doctorate, 8.25),
            ]),
            min_degree: DegreeLevel::Bachelor,
            blocklist: DEFAULT_BLOCKLIST.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CriteriaError {
    #[error("gap threshold for {0:?} must be positive")]
    NonPositiveThreshold(DegreeLevel),
    #[error("timeframe start {0} is after end {1}")]
    Timeframe(i32, i32),
}

impl FilterCriteria {
    pub fn validate(&self) -> Result<(), CriteriaError> {
        for (d, t) in &self.gap_thresholds_years {
            if !(*t > 0.0) {
                return Err(CriteriaError::NonPositiveThreshold(*d));
            }
        }
        if self.timeframe.0 > self.timeframe.1 {
            return Err(CriteriaError::Timeframe(self.timeframe.0, self.timeframe.1));
        }
        Ok(())
    }

    fn threshold(&self, degree: DegreeLevel) -> Option<f64> {
        // fall back to the closest lower degree with a configured threshold
        self.gap_thresholds_years
            .range(..=degree)
            .next_back()
            .map(|(_, t)| *t)
    }

    fn blocklisted(&self, title: &str) -> bool {
        title
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .any(|w| self.blocklist.iter().any(|b| b.eq_ignore_ascii_case(w)))
    }
}

/// Where criterion-2 flags come from.
#[derive(Debug, Clone, Copy)]
pub enum TitleFlags<'a> {
    KeywordOnly,
    Classifier(&'a BTreeMap<JobKey, JobFlags>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionScope {
    Profile,
    JobRecord,
    EducationRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub profile_id: String,
    pub scope: RejectionScope,
    /// Index of the record within the profile as ingested; `None` for profile rejections.
    pub record_index: Option<usize>,
    pub criterion: u8,
    pub detail: String,
}

#[derive(Debug, Default)]
pub struct FilterOutcome {
    pub retained: Vec<Profile>,
    pub ledger: Vec<Rejection>,
}

impl FilterOutcome {
    /// Profile rejections per criterion.
    pub fn rejected_profiles_by_criterion(&self) -> BTreeMap<u8, usize> {
        let mut m = BTreeMap::new();
        for r in self
            .ledger
            .iter()
            .filter(|r| r.scope == RejectionScope::Profile)
        {
            *m.entry(r.criterion).or_insert(0) += 1;
        }
        m
    }

    pub fn rejected_profile_count(&self) -> usize {
        self.ledger
            .iter()
            .filter(|r| r.scope == RejectionScope::Profile)
            .count()
    }
}

fn job_failure(job: &JobRecord, c: &FilterCriteria, flags: TitleFlags<'_>) -> Option<(u8, String)> {
    // criterion 1: required fields and date sanity
    let missing: Vec<&str> = [
        ("title", job.title.trim().is_empty()),
        ("company", job.company.trim().is_empty()),
        ("city", job.city.trim().is_empty()),
        ("state", job.state.trim().is_empty()),
        ("country", job.country.trim().is_empty()),
        ("start_date", job.start_date.is_none()),
        ("end_date", !job.is_current && job.end_date.is_none()),
    ]
    .into_iter()
    .filter_map(|(name, miss)| miss.then_some(name))
    .collect();
    if !missing.is_empty() {
        return Some((1, format!("missing {}", missing.join(", "))));
    }
    if let (Some(s), Some(e)) = (job.start_date, job.end_date) {
        if e < s {
            return Some((1, format!("end date {e} precedes start date {s}")));
        }
    }

    // criterion 2: standard employment titles
    if let Some(max) = c.max_title_words {
        let n = job.title.split_whitespace().count();
        if n > max {
            return Some((2, format!("title has {n} words (max {max})")));
        }
    }
    let classifier = match flags {
        TitleFlags::Classifier(map) => map.get(&job.key()),
        TitleFlags::KeywordOnly => None,
    };
    match classifier {
        Some(f) if f.non_occupational => return Some((2, "non-occupational title".to_string())),
        Some(f) if f.multi_role => return Some((2, "multiple roles in title".to_string())),
        Some(_) => {}
        None => {
            if c.blocklisted(&job.title) {
                return Some((2, format!("non-occupational keyword in {:?}", job.title)));
            }
        }
    }

    // criterion 5: timeframe
    let (lo, hi) = c.timeframe;
    let start = job.start_date.expect("checked above");
    if start.year() < lo || start.year() > hi {
        return Some((5, format!("start {start} outside {lo}-{hi}")));
    }
    if let Some(e) = job.end_date {
        if e.year() > hi {
            return Some((5, format!("end {e} outside {lo}-{hi}")));
        }
    }
    None
}

fn education_failure(e: &EducationRecord) -> Option<String> {
    let missing: Vec<&str> = [
        ("degree_name", e.degree_name.trim().is_empty()),
        ("start_date", e.start_date.is_none()),
        ("end_date", e.end_date.is_none()),
        ("school", e.school.trim().is_empty()),
    ]
    .into_iter()
    .filter_map(|(name, miss)| miss.then_some(name))
    .collect();
    (!missing.is_empty()).then(|| format!("missing {}", missing.join(", ")))
}

/// Applies the five cleaning criteria.
///
/// Record-level checks run first on every job (criteria 1, 2, 5, first failure
/// wins) and education record (criterion 3). Profile-level rejection then
/// follows criterion order 1, 2, 3, 5, 4: no job survives criterion 1, none
/// survives criterion 2, no complete degree at `min_degree` or above, none
/// survives the timeframe, post-graduation gap above the threshold of the
/// highest degree completed by the first job's start. The gap is measured on
/// the surviving jobs, which makes the filter idempotent.
pub fn filter_profiles(ps: &[Profile], c: &FilterCriteria, flags: TitleFlags<'_>) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for p in ps {
        let (kept, mut entries) = filter_one(p, c, flags);
        out.ledger.append(&mut entries);
        if let Some(k) = kept {
            out.retained.push(k);
        }
    }
    out
}

fn filter_one(
    p: &Profile,
    c: &FilterCriteria,
    flags: TitleFlags<'_>,
) -> (Option<Profile>, Vec<Rejection>) {
    let mut ledger = Vec::new();
    let mut jobs = Vec::new();
    let mut job_failures = [false; 6];
    for (i, job) in p.jobs.iter().enumerate() {
        match job_failure(job, c, flags) {
            Some((criterion, detail)) => {
                job_failures[criterion as usize] = true;
                ledger.push(Rejection {
                    profile_id: p.id.clone(),
                    scope: RejectionScope::JobRecord,
                    record_index: Some(i),
                    criterion,
                    detail,
                });
            }
            None => jobs.push(job.clone()),
        }
    }
    let mut education = Vec::new();
    for (i, e) in p.education.iter().enumerate() {
        match education_failure(e) {
            Some(detail) => ledger.push(Rejection {
                profile_id: p.id.clone(),
                scope: RejectionScope::EducationRecord,
                record_index: Some(i),
                criterion: 3,
                detail,
            }),
            None => education.push(e.clone()),
        }
    }

    let reject = |criterion: u8, detail: String, mut ledger: Vec<Rejection>| {
        ledger.push(Rejection {
            profile_id: p.id.clone(),
            scope: RejectionScope::Profile,
            record_index: None,
            criterion,
            detail,
        });
        (None, ledger)
    };

    if jobs.is_empty() {
        // attribute to the earliest criterion that emptied the job list
        let criterion = if p.jobs.is_empty() {
            1
        } else {
            [1u8, 2, 5]
                .into_iter()
                .find(|&k| job_failures[k as usize])
                .unwrap_or(1)
        };
        if criterion != 5 {
            return reject(criterion, "no job records left".to_string(), ledger);
        }
    }
    let cleaned = Profile {
        jobs,
        education,
        ..p.clone()
    };
    let has_degree = cleaned
        .education
        .iter()
        .any(|e| e.degree_level >= c.min_degree);
    if !has_degree {
        return reject(
            3,
            format!("no complete {} degree or above", c.min_degree.label()),
            ledger,
        );
    }
    if cleaned.jobs.is_empty() {
        return reject(5, "no job records within timeframe".to_string(), ledger);
    }
    let Some(gap) = post_graduation_gap(&cleaned) else {
        return reject(4, "no bachelor's end date".to_string(), ledger);
    };
    let first_start = cleaned.first_job_start().expect("jobs non-empty");
    let degree = cleaned
        .education
        .iter()
        .filter(|e| e.end_date.is_some_and(|d| d <= first_start))
        .map(|e| e.degree_level)
        .max()
        .unwrap_or(DegreeLevel::Bachelor)
        .max(DegreeLevel::Bachelor);
    if let Some(threshold) = c.threshold(degree) {
        let gap = gap.max(0.0);
        if gap > threshold {
            return reject(
                4,
                format!(
                    "post-graduation gap {gap:.2}y exceeds {threshold}y for {}",
                    degree.label()
                ),
                ledger,
            );
        }
    }
    (Some(cleaned), ledger)
}
