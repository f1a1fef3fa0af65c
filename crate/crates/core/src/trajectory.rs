//! Linear career trajectories, the observation window, job-change types and
//! job mobility.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::date::YearMonth;
use crate::profiles::JobRecord;
use crate::taxonomy::SocCode;

pub const DEFAULT_WINDOW_YEARS: f64 = 5.0;
pub const DEFAULT_MOBILITY_CAP: u32 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrajectoryError {
    #[error("job {index} has no start date")]
    MissingStart { index: usize },
    #[error("job {index} has no end date and is not current")]
    MissingEnd { index: usize },
    #[error("job {index} has no final occupation code")]
    MissingSoc { index: usize },
}

/// Non-overlapping jobs of one profile, in selection order. Every job carries
/// a start and an end; a current job ends at the snapshot date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CareerTrajectory {
    pub profile_id: String,
    pub jobs: Vec<JobRecord>,
    pub window_years: Option<f64>,
}

impl CareerTrajectory {
    pub fn first_start(&self) -> Option<YearMonth> {
        self.jobs.first().and_then(|j| j.start_date)
    }

    /// Latest end minus first start, in years.
    pub fn span_years(&self) -> f64 {
        let Some(first) = self.first_start() else {
            return 0.0;
        };
        self.jobs
            .iter()
            .filter_map(|j| j.end_date)
            .max()
            .map_or(0.0, |e| e.years_since(first))
    }
}

fn start_end(j: &JobRecord) -> (YearMonth, YearMonth) {
    (
        j.start_date.expect("dated job"),
        j.end_date.expect("dated job"),
    )
}

/// Greedy selection: sort by (start, -end), keep the first job, then keep
/// each job whose start is not before the end of the last kept job. Ties in
/// (start, end) keep input order.
pub fn construct_trajectory(
    profile_id: &str,
    history: &[JobRecord],
    snapshot: YearMonth,
) -> Result<CareerTrajectory, TrajectoryError> {
    let mut dated = Vec::with_capacity(history.len());
    for (index, j) in history.iter().enumerate() {
        if j.start_date.is_none() {
            return Err(TrajectoryError::MissingStart { index });
        }
        let end = j
            .effective_end(snapshot)
            .ok_or(TrajectoryError::MissingEnd { index })?;
        let mut j = j.clone();
        j.end_date = Some(end);
        dated.push(j);
    }
    dated.sort_by(|a, b| {
        let (sa, ea) = start_end(a);
        let (sb, eb) = start_end(b);
        sa.cmp(&sb).then(eb.cmp(&ea))
    });
    let mut jobs: Vec<JobRecord> = Vec::new();
    for j in dated {
        let keep = match jobs.last() {
            None => true,
            Some(last) => start_end(&j).0 >= start_end(last).1,
        };
        if keep {
            jobs.push(j);
        }
    }
    Ok(CareerTrajectory {
        profile_id: profile_id.to_string(),
        jobs,
        window_years: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "window", rename_all = "snake_case")]
pub enum WindowOutcome {
    Retained(CareerTrajectory),
    /// Observed career shorter than the window.
    Rejected {
        profile_id: String,
        span_years: f64,
    },
}

/// Keeps jobs starting at most `years` after the first start (inclusive).
/// Trajectories whose observed span is shorter than `years` are rejected.
pub fn window_truncate(t: &CareerTrajectory, years: f64) -> WindowOutcome {
    let span = t.span_years();
    let Some(first) = t.first_start() else {
        return WindowOutcome::Rejected {
            profile_id: t.profile_id.clone(),
            span_years: 0.0,
        };
    };
    if span < years {
        return WindowOutcome::Rejected {
            profile_id: t.profile_id.clone(),
            span_years: span,
        };
    }
    let jobs = t
        .jobs
        .iter()
        .filter(|j| j.start_date.is_some_and(|s| s.years_since(first) <= years))
        .cloned()
        .collect();
    WindowOutcome::Retained(CareerTrajectory {
        profile_id: t.profile_id.clone(),
        jobs,
        window_years: Some(years),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobChangeFlags {
    pub type1: bool,
    pub type2: bool,
    pub type3: bool,
    pub type4: bool,
}

impl JobChangeFlags {
    pub fn as_array(self) -> [bool; 4] {
        [self.type1, self.type2, self.type3, self.type4]
    }
}

/// Case-folded, whitespace-collapsed company name.
pub fn normalize_company(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Change type (1 to 4) between two consecutive jobs.
pub fn change_type(a_company: &str, a_soc: &SocCode, b_company: &str, b_soc: &SocCode) -> u8 {
    let same_company = normalize_company(a_company) == normalize_company(b_company);
    let same_soc = a_soc == b_soc;
    match (same_company, same_soc) {
        (false, false) => 1,
        (true, false) => 2,
        (false, true) => 3,
        (true, true) => 4,
    }
}

pub fn job_change_flags(t: &CareerTrajectory) -> Result<JobChangeFlags, TrajectoryError> {
    let socs: Vec<&SocCode> = t
        .jobs
        .iter()
        .enumerate()
        .map(|(index, j)| {
            j.final_soc
                .as_ref()
                .ok_or(TrajectoryError::MissingSoc { index })
        })
        .collect::<Result<_, _>>()?;
    let mut f = JobChangeFlags::default();
    for i in 1..t.jobs.len() {
        match change_type(
            &t.jobs[i - 1].company,
            socs[i - 1],
            &t.jobs[i].company,
            socs[i],
        ) {
            1 => f.type1 = true,
            2 => f.type2 = true,
            3 => f.type3 = true,
            _ => f.type4 = true,
        }
    }
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MobilityCount {
    pub raw_changes: u32,
    pub capped: u32,
}

pub fn job_mobility(t: &CareerTrajectory, cap: u32) -> MobilityCount {
    let raw_changes = t.jobs.len().saturating_sub(1) as u32;
    MobilityCount {
        raw_changes,
        capped: raw_changes.min(cap),
    }
}

/// One line of trajectory output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub profile_id: String,
    pub jobs: Vec<JobRecord>,
    pub flags: JobChangeFlags,
    pub mobility: MobilityCount,
    /// Jobs kept by the selection pass over jobs in the history.
    pub retention: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub snapshot: YearMonth,
    pub window_years: f64,
    pub mobility_cap: u32,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            snapshot: YearMonth::new(2022, 10).expect("valid month"),
            window_years: DEFAULT_WINDOW_YEARS,
            mobility_cap: DEFAULT_MOBILITY_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum TrajectoryOutcome {
    Built(TrajectoryRecord),
    ShortCareer { profile_id: String, span_years: f64 },
    Invalid { profile_id: String, reason: String },
}

/// Selection, windowing, flags and mobility for one history.
pub fn build_record(
    profile_id: &str,
    history: &[JobRecord],
    cfg: &TrajectoryConfig,
) -> TrajectoryOutcome {
    let invalid = |e: TrajectoryError| TrajectoryOutcome::Invalid {
        profile_id: profile_id.to_string(),
        reason: e.to_string(),
    };
    let t = match construct_trajectory(profile_id, history, cfg.snapshot) {
        Ok(t) => t,
        Err(e) => return invalid(e),
    };
    let retention = if history.is_empty() {
        0.0
    } else {
        t.jobs.len() as f64 / history.len() as f64
    };
    let t = match window_truncate(&t, cfg.window_years) {
        WindowOutcome::Retained(t) => t,
        WindowOutcome::Rejected {
            profile_id,
            span_years,
        } => {
            return TrajectoryOutcome::ShortCareer {
                profile_id,
                span_years,
            }
        }
    };
    let flags = match job_change_flags(&t) {
        Ok(f) => f,
        Err(e) => return invalid(e),
    };
    let mobility = job_mobility(&t, cfg.mobility_cap);
    TrajectoryOutcome::Built(TrajectoryRecord {
        profile_id: t.profile_id,
        jobs: t.jobs,
        flags,
        mobility,
        retention,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ym(s: &str) -> YearMonth {
        s.parse().unwrap()
    }

    fn job(title: &str, company: &str, start: &str, end: &str, soc: &str) -> JobRecord {
        JobRecord {
            title: title.into(),
            company: company.into(),
            city: String::new(),
            state: String::new(),
            country: String::new(),
            start_date: Some(ym(start)),
            end_date: if end.is_empty() { None } else { Some(ym(end)) },
            is_current: end.is_empty(),
            soc: None,
            naics: None,
            final_soc: if soc.is_empty() {
                None
            } else {
                Some(SocCode::parse(soc).unwrap())
            },
            wage: None,
        }
    }

    fn titles(t: &CareerTrajectory) -> Vec<&str> {
        t.jobs.iter().map(|j| j.title.as_str()).collect()
    }

    const SNAP: &str = "2022-10";

    #[test]
    fn overlap_skipped_and_boundary_admitted() {
        let h = vec![
            job("J1", "a", "2010-01", "2012-01", ""),
            job("J2", "b", "2011-06", "2013-01", ""),
            job("J3", "c", "2012-01", "2014-01", ""),
        ];
        let t = construct_trajectory("p", &h, ym(SNAP)).unwrap();
        assert_eq!(titles(&t), ["J1", "J3"]);

        let one = construct_trajectory("p", &h[..1], ym(SNAP)).unwrap();
        assert_eq!(titles(&one), ["J1"]);
        assert!(construct_trajectory("p", &[], ym(SNAP))
            .unwrap()
            .jobs
            .is_empty());

        let again = construct_trajectory("p", &t.jobs, ym(SNAP)).unwrap();
        assert_eq!(again, t);
    }

    #[test]
    fn current_job_ends_at_snapshot() {
        let h = vec![
            job("A", "a", "2018-01", "", ""),
            job("B", "b", "2020-01", "2021-01", ""),
        ];
        let t = construct_trajectory("p", &h, ym(SNAP)).unwrap();
        assert_eq!(titles(&t), ["A"]);
        assert_eq!(t.jobs[0].end_date, Some(ym(SNAP)));
        let mut bad = job("C", "c", "2018-01", "", "");
        bad.is_current = false;
        assert_eq!(
            construct_trajectory("p", &[bad], ym(SNAP)),
            Err(TrajectoryError::MissingEnd { index: 0 })
        );
    }

    #[test]
    fn window_rules() {
        let h = vec![
            job("A", "a", "2010-01", "2012-01", ""),
            job("B", "b", "2012-01", "2015-01", ""),
            job("C", "c", "2015-01", "2015-06", ""),
            job("D", "d", "2015-06", "2018-01", ""),
        ];
        let t = construct_trajectory("p", &h, ym(SNAP)).unwrap();
        let WindowOutcome::Retained(w) = window_truncate(&t, 5.0) else {
            panic!()
        };
        // C starts exactly five years in and is kept; D is past the window
        assert_eq!(titles(&w), ["A", "B", "C"]);

        let short: Vec<JobRecord> = (0..6)
            .map(|i| {
                let s = ym("2010-01").plus_months(i * 8);
                let e = s.plus_months(8);
                job(&format!("S{i}"), "x", &s.to_string(), &e.to_string(), "")
            })
            .collect();
        let t = construct_trajectory("p", &short, ym(SNAP)).unwrap();
        assert_eq!(t.jobs.len(), 6);
        assert!(
            matches!(window_truncate(&t, 5.0), WindowOutcome::Rejected { span_years, .. } if span_years == 4.0)
        );
    }

    #[test]
    fn change_flags() {
        let t = CareerTrajectory {
            profile_id: "p".into(),
            jobs: vec![
                job("A", "Acme", "2010-01", "2011-01", "11-1011.00"),
                job("B", "Initech", "2011-01", "2012-01", "15-1252.00"),
                job("C", " INITECH ", "2012-01", "2013-01", "15-2051.00"),
            ],
            window_years: None,
        };
        let f = job_change_flags(&t).unwrap();
        assert_eq!(f.as_array(), [true, true, false, false]);

        let single = CareerTrajectory {
            jobs: t.jobs[..1].to_vec(),
            ..t.clone()
        };
        assert_eq!(
            job_change_flags(&single).unwrap(),
            JobChangeFlags::default()
        );

        let same = CareerTrajectory {
            jobs: vec![
                job("A", "Acme  Corp", "2010-01", "2011-01", "11-1011.00"),
                job("B", "acme corp", "2011-01", "2012-01", "11-1011.00"),
            ],
            ..t.clone()
        };
        assert_eq!(
            job_change_flags(&same).unwrap().as_array(),
            [false, false, false, true]
        );

        let missing = CareerTrajectory {
            jobs: vec![job("A", "x", "2010-01", "2011-01", "")],
            ..t
        };
        assert_eq!(
            job_change_flags(&missing),
            Err(TrajectoryError::MissingSoc { index: 0 })
        );
    }

    #[test]
    fn mobility_cap() {
        let mk = |n: usize| CareerTrajectory {
            profile_id: "p".into(),
            jobs: (0..n)
                .map(|i| job(&i.to_string(), "x", "2010-01", "2011-01", ""))
                .collect(),
            window_years: None,
        };
        assert_eq!(
            job_mobility(&mk(7), 4),
            MobilityCount {
                raw_changes: 6,
                capped: 4
            }
        );
        assert_eq!(
            job_mobility(&mk(1), 4),
            MobilityCount {
                raw_changes: 0,
                capped: 0
            }
        );
        assert_eq!(
            job_mobility(&mk(3), 4),
            MobilityCount {
                raw_changes: 2,
                capped: 2
            }
        );
        assert_eq!(job_mobility(&mk(0), 4).raw_changes, 0);
    }

    /// Independent reading of the selection pass: repeatedly pick the
    /// earliest-starting, longest remaining job (first in input order on ties)
    /// and keep it when it starts at or after the last kept end.
    fn oracle(h: &[(i64, i64)]) -> Vec<usize> {
        let mut remaining: Vec<usize> = (0..h.len()).collect();
        let mut out: Vec<usize> = Vec::new();
        while !remaining.is_empty() {
            let mut best = 0;
            for k in 1..remaining.len() {
                let (s, e) = h[remaining[k]];
                let (bs, be) = h[remaining[best]];
                if s < bs || (s == bs && e > be) {
                    best = k;
                }
            }
            let i = remaining.remove(best);
            if out.last().is_none_or(|&l| h[i].0 >= h[l].1) {
                out.push(i);
            }
        }
        out
    }

    fn history_strategy() -> impl Strategy<Value = Vec<(i64, i64)>> {
        prop::collection::vec((0i64..120, 0i64..48), 0..=10)
            .prop_map(|v| v.into_iter().map(|(s, d)| (s, s + d)).collect())
    }

    fn to_jobs(h: &[(i64, i64)]) -> Vec<JobRecord> {
        let base = ym("2005-01");
        h.iter()
            .enumerate()
            .map(|(i, (s, e))| {
                job(
                    &i.to_string(),
                    "x",
                    &base.plus_months(*s).to_string(),
                    &base.plus_months(*e).to_string(),
                    "",
                )
            })
            .collect()
    }

    proptest! {
        #[test]
        fn selection_matches_oracle(h in history_strategy()) {
            let t = construct_trajectory("p", &to_jobs(&h), ym(SNAP)).unwrap();
            let got: Vec<usize> = t.jobs.iter().map(|j| j.title.parse().unwrap()).collect();
            prop_assert_eq!(got, oracle(&h));
        }

        #[test]
        fn selection_never_overlaps(h in history_strategy()) {
            let t = construct_trajectory("p", &to_jobs(&h), ym(SNAP)).unwrap();
            for w in t.jobs.windows(2) {
                prop_assert!(w[1].start_date.unwrap() >= w[0].end_date.unwrap());
            }
            if !h.is_empty() {
                prop_assert!(!t.jobs.is_empty());
            }
            // kept jobs appear in sorted (start, -end) order
            for w in t.jobs.windows(2) {
                let (a, b) = (start_end(&w[0]), start_end(&w[1]));
                prop_assert!(a.0 < b.0 || (a.0 == b.0 && a.1 >= b.1));
            }
        }

        #[test]
        fn window_keeps_only_early_jobs(h in history_strategy(), years in 1.0f64..8.0) {
            let t = construct_trajectory("p", &to_jobs(&h), ym(SNAP)).unwrap();
            match window_truncate(&t, years) {
                WindowOutcome::Retained(w) => {
                    let first = w.first_start().unwrap();
                    prop_assert!(t.span_years() >= years);
                    for j in &w.jobs {
                        prop_assert!(j.start_date.unwrap().years_since(first) <= years);
                    }
                    prop_assert!(t.jobs.starts_with(&w.jobs));
                }
                WindowOutcome::Rejected { span_years, .. } => prop_assert!(span_years < years),
            }
        }

        #[test]
        fn exactly_one_change_type_per_pair(
            ca in "[a-c]{1,2}", cb in "[a-c]{1,2}", sa in 0usize..3, sb in 0usize..3, upper in any::<bool>()
        ) {
            let codes = ["11-1011.00", "15-1252.00", "15-1252.01"];
            let (a, b) = (SocCode::parse(codes[sa]).unwrap(), SocCode::parse(codes[sb]).unwrap());
            let cb = if upper { format!(" {} ", cb.to_uppercase()) } else { cb };
            let ty = change_type(&ca, &a, &cb, &b);
            let conds = [
                ca != cb.trim().to_lowercase() && a != b,
                ca == cb.trim().to_lowercase() && a != b,
                ca != cb.trim().to_lowercase() && a == b,
                ca == cb.trim().to_lowercase() && a == b,
            ];
            prop_assert_eq!(conds.iter().filter(|c| **c).count(), 1);
            prop_assert!(conds[ty as usize - 1]);
        }
    }
}
