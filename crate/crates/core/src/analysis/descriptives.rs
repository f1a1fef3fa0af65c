//! Distribution tables, occupation growth and the year-1 to year-5
//! transition matrix.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{level_display, level_of, Factor};
use crate::enrichment::{fifth_year_index, EnrichedRecord};
use crate::trajectory::TrajectoryRecord;

pub const MAJOR_GROUPS: [(&str, &str); 23] = [
    ("11", "Management"),
    ("13", "Business and Financial Operations"),
    ("15", "Computer and Mathematical"),
    ("17", "Architecture and Engineering"),
    ("19", "Life, Physical, and Social Science"),
    ("21", "Community and Social Service"),
    ("23", "Legal"),
    ("25", "Educational Instruction and Library"),
    ("27", "Arts, Design, Entertainment, Sports, and Media"),
    ("29", "Healthcare Practitioners and Technical"),
    ("31", "Healthcare Support"),
    ("33", "Protective Service"),
    ("35", "Food Preparation and Serving Related"),
    ("37", "Building and Grounds Cleaning and Maintenance"),
    ("39", "Personal Care and Service"),
    ("41", "Sales and Related"),
    ("43", "Office and Administrative Support"),
    ("45", "Farming, Fishing, and Forestry"),
    ("47", "Construction and Extraction"),
    ("49", "Installation, Maintenance, and Repair"),
    ("51", "Production"),
    ("53", "Transportation and Material Moving"),
    ("55", "Military Specific"),
];

pub fn major_group_title(code: &str) -> &'static str {
    MAJOR_GROUPS
        .iter()
        .find(|(c, _)| *c == code)
        .map_or("Unknown", |(_, t)| t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub variable: String,
    pub category: String,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationRow {
    pub occ2: String,
    pub title: String,
    pub count1: usize,
    pub percent1: f64,
    pub count5: usize,
    pub percent5: f64,
    /// `(count5 - count1) / count1`; undefined when nobody started there.
    pub growth: Option<f64>,
}

/// Counts of moves between different major groups; the diagonal is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl TransitionMatrix {
    pub fn get(&self, from: &str, to: &str) -> usize {
        let i = self.labels.iter().position(|l| l == from);
        let j = self.labels.iter().position(|l| l == to);
        match (i, j) {
            (Some(i), Some(j)) => self.counts[i][j],
            _ => 0,
        }
    }

    pub fn off_diagonal_total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Square table with row and column headers.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = std::iter::once("from\\to")
            .chain(self.labels.iter().map(String::as_str))
            .collect();
        w.write_record(&header).expect("in-memory write");
        for (l, row) in self.labels.iter().zip(&self.counts) {
            let cells: Vec<String> = std::iter::once(l.clone())
                .chain(row.iter().map(usize::to_string))
                .collect();
            w.write_record(&cells).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveReport {
    pub n: usize,
    pub upward_percent: f64,
    pub demographics: Vec<CategoryCount>,
    pub job_change_types: Vec<CategoryCount>,
    pub occupations: Vec<OccupationRow>,
    pub transitions: TransitionMatrix,
}

fn percent(count: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * count as f64 / n as f64
    }
}

fn factor_title(f: Factor) -> &'static str {
    match f {
        Factor::Gender => "Gender",
        Factor::Race => "Race",
        Factor::Education => "Educational Attainment",
        Factor::Generation => "Social Generation",
        Factor::Occ2 => "Occupation",
        Factor::Ind2 => "Industry",
    }
}

fn category_order(f: Factor, level: &str) -> (usize, String) {
    let order: &[&str] = match f {
        Factor::Gender => &["male", "female"],
        Factor::Race => &["white", "black", "asian", "hispanic"],
        Factor::Education => &["bachelor", "master", "doctorate"],
        Factor::Generation => &["millennial", "gen_x"],
        _ => &[],
    };
    (
        order
            .iter()
            .position(|l| *l == level)
            .unwrap_or(order.len()),
        level.to_string(),
    )
}

/// Distribution tables for `records`. Year-5 occupations come from the
/// matching trajectory; records without one are left out of the
/// occupation and transition tables.
pub fn descriptives(
    records: &[EnrichedRecord],
    trajectories: &[TrajectoryRecord],
    window_years: f64,
) -> DescriptiveReport {
    let n = records.len();
    let mut demographics = Vec::new();
    for f in Factor::MAIN {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for r in records {
            *counts.entry(level_of(r, f)).or_default() += 1;
        }
        let mut levels: Vec<(String, usize)> = counts.into_iter().collect();
        levels.sort_by_key(|(l, _)| category_order(f, l));
        for (l, c) in levels {
            demographics.push(CategoryCount {
                variable: factor_title(f).into(),
                category: level_display(f, &l),
                count: c,
                percent: percent(c, n),
            });
        }
    }

    let type_names = [
        "Inter-firm Occupation Change (Type 1)",
        "Intra-firm Occupation Change (Type 2)",
        "Inter-firm Lateral Move (Type 3)",
        "Intra-firm Lateral Move (Type 4)",
    ];
    let job_change_types = type_names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let c = records.iter().filter(|r| r.flags().as_array()[k]).count();
            CategoryCount {
                variable: "Job Change Type".into(),
                category: (*name).into(),
                count: c,
                percent: percent(c, n),
            }
        })
        .collect();

    let by_id: BTreeMap<&str, &TrajectoryRecord> = trajectories
        .iter()
        .map(|t| (t.profile_id.as_str(), t))
        .collect();
    let mut pairs: Vec<(String, String)> = Vec::new();
    for r in records {
        let Some(t) = by_id.get(r.profile_id.as_str()) else {
            continue;
        };
        let Some(i5) = fifth_year_index(&t.jobs, window_years) else {
            continue;
        };
        let Some(soc5) = t.jobs[i5].final_soc.as_ref() else {
            continue;
        };
        pairs.push((r.occ2.clone(), soc5.major_group().to_string()));
    }
    let m = pairs.len();
    let mut c1: BTreeMap<String, usize> = BTreeMap::new();
    let mut c5: BTreeMap<String, usize> = BTreeMap::new();
    for (a, b) in &pairs {
        *c1.entry(a.clone()).or_default() += 1;
        *c5.entry(b.clone()).or_default() += 1;
    }
    let labels: Vec<String> = c1
        .keys()
        .chain(c5.keys())
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut occupations: Vec<OccupationRow> = labels
        .iter()
        .map(|l| {
            let a = c1.get(l).copied().unwrap_or(0);
            let b = c5.get(l).copied().unwrap_or(0);
            OccupationRow {
                occ2: l.clone(),
                title: major_group_title(l).into(),
                count1: a,
                percent1: percent(a, m),
                count5: b,
                percent5: percent(b, m),
                growth: (a > 0).then(|| (b as f64 - a as f64) / a as f64),
            }
        })
        .collect();
    occupations.sort_by(|x, y| match (x.growth, y.growth) {
        (Some(a), Some(b)) => b.total_cmp(&a).then_with(|| x.occ2.cmp(&y.occ2)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => x.occ2.cmp(&y.occ2),
    });

    let mut counts = vec![vec![0usize; labels.len()]; labels.len()];
    for (a, b) in &pairs {
        if a != b {
            let i = labels.binary_search(a).expect("label present");
            let j = labels.binary_search(b).expect("label present");
            counts[i][j] += 1;
        }
    }

    DescriptiveReport {
        n,
        upward_percent: percent(records.iter().filter(|r| r.upward == 1).count(), n),
        demographics,
        job_change_types,
        occupations,
        transitions: TransitionMatrix { labels, counts },
    }
}

impl DescriptiveReport {
    /// Plain-text rendering of every table.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Trajectories: {}", self.n);
        let _ = writeln!(out, "Upward mobility: {:.2}%", self.upward_percent);
        for (title, rows) in [
            ("Demographics", &self.demographics),
            ("Job change types", &self.job_change_types),
        ] {
            let _ = writeln!(out, "\n{title}");
            for r in rows {
                let _ = writeln!(
                    out,
                    "  {:<24} {:<40} {:>7} {:>7.2}%",
                    r.variable, r.category, r.count, r.percent
                );
            }
        }
        let _ = writeln!(out, "\nOccupations (year 1 -> year 5)");
        let _ = writeln!(
            out,
            "  {:<4} {:<48} {:>7} {:>7} {:>9}",
            "SOC", "Major group", "Year 1", "Year 5", "Growth"
        );
        for r in &self.occupations {
            let growth = r
                .growth
                .map_or_else(|| "-".to_string(), |g| format!("{:.1}%", 100.0 * g));
            let _ = writeln!(
                out,
                "  {:<4} {:<48} {:>7} {:>7} {:>9}",
                r.occ2, r.title, r.count1, r.count5, growth
            );
        }
        let _ = writeln!(
            out,
            "\nTransitions between major groups (rows: year 1, columns: year 5)"
        );
        let _ = write!(out, "  {:>4}", "");
        for l in &self.transitions.labels {
            let _ = write!(out, " {l:>4}");
        }
        out.push('\n');
        for (l, row) in self.transitions.labels.iter().zip(&self.transitions.counts) {
            let _ = write!(out, "  {l:>4}");
            for c in row {
                let _ = write!(out, " {c:>4}");
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "  off-diagonal moves: {}",
            self.transitions.off_diagonal_total()
        );
        out
    }

    pub fn demographics_csv(&self) -> String {
        counts_csv(&self.demographics)
    }

    pub fn job_change_csv(&self) -> String {
        counts_csv(&self.job_change_types)
    }

    pub fn occupations_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.occupations {
            w.serialize(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

fn counts_csv(rows: &[CategoryCount]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

#[cfg(test)]
mod tests {
    use super::super::test_support::random_records;
    use super::*;
    use crate::date::YearMonth;
    use crate::profiles::JobRecord;
    use crate::taxonomy::SocCode;
    use crate::trajectory::{JobChangeFlags, MobilityCount};
    use proptest::prelude::*;

    fn traj(id: &str, occ1: &str, occ5: &str) -> TrajectoryRecord {
        let job = |start: &str, occ: &str| JobRecord {
            title: "t".into(),
            company: "c".into(),
            city: String::new(),
            state: "TX".into(),
            country: "US".into(),
            start_date: Some(start.parse::<YearMonth>().unwrap()),
            end_date: None,
            is_current: false,
            soc: None,
            naics: None,
            final_soc: Some(SocCode::parse(&format!("{occ}-1011.00")).unwrap()),
            wage: None,
        };
        TrajectoryRecord {
            profile_id: id.into(),
            jobs: vec![job("2010-01", occ1), job("2014-06", occ5)],
            flags: JobChangeFlags::default(),
            mobility: MobilityCount {
                raw_changes: 1,
                capped: 1,
            },
            retention: 1.0,
        }
    }

    fn sample(
        n: usize,
        moves: &[(usize, &str, &str)],
    ) -> (Vec<EnrichedRecord>, Vec<TrajectoryRecord>) {
        let mut recs = random_records(n, 1);
        let mut trajs = Vec::new();
        let mut i = 0;
        for (count, a, b) in moves {
            for _ in 0..*count {
                recs[i].occ2 = a.to_string();
                trajs.push(traj(&recs[i].profile_id, a, b));
                i += 1;
            }
        }
        (recs, trajs)
    }

    #[test]
    fn stationary_population() {
        let (recs, trajs) = sample(50, &[(50, "15", "15")]);
        let d = descriptives(&recs, &trajs, 5.0);
        assert_eq!(d.occupations.len(), 1);
        assert_eq!(d.occupations[0].growth, Some(0.0));
        assert_eq!(d.transitions.off_diagonal_total(), 0);
    }

    #[test]
    fn growth_and_transitions() {
        let (recs, trajs) = sample(
            250,
            &[(50, "13", "11"), (100, "11", "11"), (100, "41", "41")],
        );
        let d = descriptives(&recs, &trajs, 5.0);
        let mgmt = d.occupations.iter().find(|o| o.occ2 == "11").unwrap();
        assert_eq!((mgmt.count1, mgmt.count5), (100, 150));
        assert_eq!(mgmt.growth, Some(0.5));
        assert_eq!(d.occupations[0].occ2, "11");
        assert_eq!(d.occupations.last().unwrap().occ2, "13");
        assert_eq!(d.transitions.get("13", "11"), 50);
        assert_eq!(d.transitions.get("11", "11"), 0);
        assert!(d.transitions.to_csv().starts_with("from\\to,11,13,41\n"));
    }

    #[test]
    fn percentages_sum_to_100() {
        let recs = random_records(333, 2);
        let d = descriptives(&recs, &[], 5.0);
        let mut by_var: BTreeMap<&str, f64> = BTreeMap::new();
        for c in &d.demographics {
            *by_var.entry(c.variable.as_str()).or_default() += c.percent;
        }
        for (v, total) in by_var {
            assert!((total - 100.0).abs() < 1e-9, "{v}: {total}");
        }
        assert_eq!(d.demographics[0].category, "Male");
        assert!(d.occupations.is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn order_invariant(seed in any::<u64>()) {
            let (recs, trajs) = sample(120, &[(40, "13", "11"), (40, "11", "15"), (40, "15", "15")]);
            let base = descriptives(&recs, &trajs, 5.0);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            use rand::{seq::SliceRandom, SeedableRng};
            let mut r2 = recs.clone();
            let mut t2 = trajs.clone();
            r2.shuffle(&mut rng);
            t2.shuffle(&mut rng);
            let shuffled = descriptives(&r2, &t2, 5.0);
            prop_assert_eq!(base.occupations, shuffled.occupations);
            prop_assert_eq!(base.transitions, shuffled.transitions);
        }
    }
}
