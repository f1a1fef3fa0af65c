//! Regenerates the shipped fixture under `data/fixture/`.
//!
//! ```text
//! cargo run -p socpath-core --example gen_fixture -- data
//! ```
//!
//! Output is a pure function of the seed and the crosswalk/taxonomy files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use socpath_core::date::YearMonth;
use socpath_core::profiles::{DegreeLevel, EducationRecord, Gender, JobRecord, Profile, Race};
use socpath_core::taxonomy::{CrosswalkTable, Delimited, SocCode, Taxonomy};

const SEED: u64 = 42;
const N_PROFILES: usize = 200;

/// (title, source-data code)
const TITLES: &[(&str, &str)] = &[
    ("Software Engineer", "15-1252.00"),
    ("Senior Software Engineer", "15-1252.00"),
    ("Software Developer", "15-1252.00"),
    ("Web Developer", "15-1254.00"),
    ("Database Administrator", "15-1242.00"),
    ("Systems Analyst", "15-1211.00"),
    ("IT Support Specialist", "15-1232.00"),
    ("Help Desk Technician", "15-1232.00"),
    ("QA Engineer", "15-1253.00"),
    ("Data Scientist", "15-2051.00"),
    ("Data Analyst", "15-2041.00"),
    ("IT Manager", "11-3021.00"),
    ("Registered Nurse", "29-1141.00"),
    ("Nurse Practitioner", "29-1171.00"),
    ("Medical Coder", "29-2072.00"),
    ("Medical Assistant", "31-9092.00"),
    ("Pharmacist", "29-1051.00"),
    ("Staff Accountant", "13-2011.00"),
    ("Senior Auditor", "13-2011.00"),
    ("Financial Analyst", "13-2051.00"),
    ("Loan Officer", "13-2072.00"),
    ("Bank Teller", "43-3071.00"),
    ("Elementary School Teacher", "25-2021.00"),
    ("High School Math Teacher", "25-2031.00"),
    ("Store Manager", "41-1011.00"),
    ("Sales Associate", "41-2031.00"),
    ("Account Executive", "41-3091.00"),
    ("Customer Service Representative", "43-4051.00"),
    ("Marketing Manager", "11-2021.00"),
    ("Marketing Coordinator", "13-1161.00"),
    ("Project Manager", "13-1082.00"),
    ("Business Analyst", "13-1111.00"),
    ("Management Consultant", "13-1111.00"),
    ("Operations Manager", "11-1021.00"),
    ("Recruiter", "13-1071.00"),
    ("Executive Assistant", "43-6011.00"),
    ("Administrative Assistant", "43-6014.00"),
    ("Mechanical Engineer", "17-2141.00"),
    ("Civil Engineer", "17-2051.00"),
    ("Paralegal", "23-2011.00"),
    ("Associate Attorney", "23-1011.00"),
    ("Graphic Designer", "27-1024.00"),
    ("Social Worker", "21-1021.00"),
    ("Research Assistant", "19-4061.00"),
    ("Reporter", "27-3023.00"),
    ("Program Coordinator", "13-1199.00"),
    ("Operations Specialist", "13-1199.00"),
    ("Electrician", "47-2111.00"),
    ("Chemist", "19-2031.00"),
    ("Economist", "19-3011.00"),
];

/// Titles that break the cleaning criteria when they appear.
const PROBLEM_TITLES: &[(&str, &str)] = &[
    ("Student", ""),
    ("Graduate Student", ""),
    ("Marketing Intern", "13-1161.00"),
    ("Owner", "11-1011.00"),
    ("Sales and Marketing Manager", "11-2021.00"),
    ("Volunteer Coordinator", "21-1093.00"),
    (
        "Senior Vice President of Global Strategic Partnerships and Alliances",
        "11-1011.00",
    ),
];

const STATES: &[(&str, &[&str])] = &[
    ("CA", &["San Francisco", "Los Angeles", "San Diego"]),
    ("TX", &["Austin", "Houston", "Dallas"]),
    ("NY", &["New York", "Buffalo"]),
    ("FL", &["Miami", "Orlando", "Tampa"]),
    ("IL", &["Chicago", "Springfield"]),
    ("PA", &["Philadelphia", "Pittsburgh"]),
    ("OH", &["Columbus", "Cleveland"]),
    ("GA", &["Atlanta", "Savannah"]),
    ("WA", &["Seattle", "Spokane"]),
    ("MA", &["Boston", "Worcester"]),
];

/// (state, 2019 real GDP in billions, annual growth)
const GDP: &[(&str, f64, f64)] = &[
    ("CA", 2800.0, 0.031),
    ("TX", 1700.0, 0.036),
    ("NY", 1550.0, 0.019),
    ("FL", 980.0, 0.028),
    ("IL", 780.0, 0.012),
    ("PA", 710.0, 0.014),
    ("OH", 610.0, 0.011),
    ("GA", 560.0, 0.024),
    ("WA", 540.0, 0.035),
    ("MA", 530.0, 0.022),
    ("NC", 520.0, 0.025),
    ("NJ", 560.0, 0.015),
    ("VA", 480.0, 0.018),
    ("MI", 470.0, 0.009),
    ("CO", 350.0, 0.030),
    ("AZ", 330.0, 0.029),
    ("OR", 220.0, 0.027),
    ("UT", 170.0, 0.034),
    ("KS", 160.0, 0.013),
    ("NM", 95.0, 0.010),
];

const COMPANIES: &[(&str, &str)] = &[
    ("Google", "519130"),
    ("Microsoft", "511210"),
    ("Amazon", "454110"),
    ("Target", "452210"),
    ("Walmart", "452311"),
    ("Kaiser Permanente", "622110"),
    ("Mayo Clinic", "622110"),
    ("CVS Health", "446110"),
    ("Deloitte", "541211"),
    ("Ernst & Young", "541211"),
    ("Bank of America", "522110"),
    ("Wells Fargo", "522110"),
    ("JPMorgan Chase", "522110"),
    ("Austin ISD", "611110"),
    ("Chicago Public Schools", "611110"),
    ("Comcast", "517311"),
    ("Verizon", "517312"),
    ("Boeing", "336411"),
    ("General Electric", "335999"),
    ("Bechtel", "237990"),
    ("Baker McKenzie", "541110"),
    ("Accenture", "541611"),
    ("McKinsey & Company", "541611"),
    ("Pfizer", "325412"),
    ("Dow Chemical", "325199"),
    ("The New York Times", "511110"),
    ("Ogilvy", "541810"),
    ("Acme Staffing", "561320"),
    ("City of Columbus", "921110"),
    ("Cargill", "111998"),
    ("Starbucks Coffee", "722515"),
    ("Sunrise Electric", "238210"),
];

const DEGREES: &[&str] = &[
    "Economics",
    "Computer Science",
    "Nursing",
    "Accounting",
    "English",
    "Biology",
    "Mechanical Engineering",
    "Psychology",
    "Marketing",
    "Chemistry",
];
const SCHOOLS: &[&str] = &[
    "University of Texas at Austin",
    "Ohio State University",
    "University of Michigan",
    "Georgia Tech",
    "Penn State",
    "University of Washington",
    "Boston University",
    "UCLA",
];

fn ym(y: i32, m: u8) -> YearMonth {
    YearMonth::new(y, m).expect("valid month")
}

fn soc(code: &str) -> Option<SocCode> {
    (!code.is_empty()).then(|| SocCode::parse(code).expect("valid code"))
}

struct Gen {
    rng: ChaCha8Rng,
}

impl Gen {
    fn pick<'a, T>(&mut self, xs: &'a [T]) -> &'a T {
        xs.choose(&mut self.rng).expect("non-empty")
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    fn job(
        &mut self,
        title: &str,
        code: &str,
        company: usize,
        state: &str,
        start: YearMonth,
        end: Option<YearMonth>,
    ) -> JobRecord {
        let (cname, naics) = COMPANIES[company];
        let cities = STATES
            .iter()
            .find(|(s, _)| *s == state)
            .expect("known state")
            .1;
        JobRecord {
            title: title.to_string(),
            company: cname.to_string(),
            city: self.pick(cities).to_string(),
            state: state.to_string(),
            country: "US".into(),
            start_date: Some(start),
            end_date: end,
            is_current: end.is_none(),
            soc: soc(code),
            naics: Some(naics.to_string()),
            final_soc: None,
            wage: None,
        }
    }

    fn profile(&mut self, i: usize) -> Profile {
        let id = format!("lc-{:012x}", self.rng.gen::<u64>() & 0xffff_ffff_ffff);
        let gender = [Gender::Male, Gender::Female][i % 2];
        let race = [Race::White, Race::Black, Race::Asian, Race::Hispanic][(i / 2) % 4];
        let ba_year = self.rng.gen_range(1996..=2014);
        let ba_end = ym(ba_year, *self.pick(&[5u8, 6, 12]));
        let mut education = vec![EducationRecord {
            degree_level: DegreeLevel::Bachelor,
            degree_name: self.pick(DEGREES).to_string(),
            start_date: Some(ba_end.plus_months(-46)),
            end_date: Some(ba_end),
            school: self.pick(SCHOOLS).to_string(),
            city: String::new(),
            state: String::new(),
        }];
        let roll: f64 = self.rng.gen();
        let mut career_start = ba_end.plus_months(self.rng.gen_range(0..=30));
        if roll < 0.25 {
            let level = if roll < 0.05 {
                DegreeLevel::Doctorate
            } else {
                DegreeLevel::Master
            };
            let years = if level == DegreeLevel::Doctorate {
                5
            } else {
                2
            };
            let end = ba_end.plus_months(12 * years);
            education.push(EducationRecord {
                degree_level: level,
                degree_name: self.pick(DEGREES).to_string(),
                start_date: Some(ba_end.plus_months(3)),
                end_date: Some(end),
                school: self.pick(SCHOOLS).to_string(),
                city: String::new(),
                state: String::new(),
            });
            career_start = end.plus_months(self.rng.gen_range(0..=12));
        }
        if self.chance(0.05) {
            // gap well past every threshold
            career_start = ba_end.plus_months(self.rng.gen_range(110..=130));
        }

        let home = self.pick(STATES).0;
        let snapshot_limit = ym(2022, 6);
        let mut jobs = Vec::new();
        let mut start = career_start;
        let mut company = self.rng.gen_range(0..COMPANIES.len());
        let mut title = *self.pick(TITLES);
        let n_jobs = self.rng.gen_range(2..=6);
        for k in 0..n_jobs {
            if start > snapshot_limit {
                break;
            }
            let months = self.rng.gen_range(10..=44);
            let mut end = start.plus_months(months);
            let last = k + 1 == n_jobs || end > snapshot_limit;
            let current = last && self.chance(0.4);
            if end > ym(2022, 9) {
                end = ym(2022, 9);
            }
            let state = if self.chance(0.85) {
                home
            } else {
                self.pick(STATES).0
            };
            jobs.push(self.job(
                title.0,
                title.1,
                company,
                state,
                start,
                if current { None } else { Some(end) },
            ));
            if self.chance(0.12) {
                // side job overlapping the main one
                let side = *self.pick(TITLES);
                let s = start.plus_months(self.rng.gen_range(1..=6));
                let c = self.rng.gen_range(0..COMPANIES.len());
                let e = s.plus_months(self.rng.gen_range(2..=8));
                jobs.push(self.job(side.0, side.1, c, state, s, Some(e)));
            }
            if current {
                break;
            }
            start = end.plus_months(self.rng.gen_range(0..=3));
            if !self.chance(0.35) {
                company = self.rng.gen_range(0..COMPANIES.len());
            }
            if self.chance(0.6) {
                title = *self.pick(TITLES);
            }
        }

        // occasional record-level defects
        if self.chance(0.06) {
            let t = *self.pick(PROBLEM_TITLES);
            let j = self.rng.gen_range(0..jobs.len());
            jobs[j].title = t.0.to_string();
            jobs[j].soc = soc(t.1);
        }
        if self.chance(0.03) {
            let j = self.rng.gen_range(0..jobs.len());
            jobs[j].city.clear();
        }
        if self.chance(0.03) {
            let first = jobs[0].start_date.expect("set above");
            let mut early = self.job(
                "Cashier",
                "41-2011.00",
                4,
                home,
                ym(1995, 6),
                Some(ym(1996, 8)),
            );
            early.end_date = Some(ym(1996, 8).min(first));
            jobs.insert(0, early);
        }
        if self.chance(0.02) {
            let j = self.rng.gen_range(0..jobs.len());
            if let Some(s) = jobs[j].start_date {
                jobs[j].end_date = Some(s.plus_months(-14));
                jobs[j].is_current = false;
            }
        }
        if self.chance(0.02) {
            education[0].school.clear();
        }
        jobs.shuffle(&mut self.rng);
        Profile {
            id,
            jobs,
            education,
            gender: (!self.chance(0.03)).then_some(gender),
            race: (!self.chance(0.03)).then_some(race),
        }
    }
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    println!("wrote {}", path.display());
}

fn wages(rng: &mut ChaCha8Rng, tax: &Taxonomy, legacy: &CrosswalkTable) -> String {
    let soc6: Vec<String> = tax.six_digit_codes().into_iter().collect();
    let mut base: BTreeMap<&str, f64> = BTreeMap::new();
    for c in &soc6 {
        let group: f64 = c[..2].parse().expect("numeric group");
        // professional groups pay more than service and production groups
        let level = if group <= 29.0 {
            78_000.0 - 800.0 * group
        } else {
            52_000.0 - 400.0 * (group - 29.0)
        };
        base.insert(c, level * rng.gen_range(0.7..1.35));
    }
    let state_factor: BTreeMap<&str, f64> = STATES
        .iter()
        .map(|(s, _)| (*s, rng.gen_range(0.85..1.2)))
        .collect();
    // 2019 code -> legacy 2010 codes that map onto it
    let mut legacy_of: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (from, tos) in legacy.iter() {
        for to in tos {
            if to.six_digit() != from.six_digit() {
                legacy_of
                    .entry(to.six_digit().to_string())
                    .or_default()
                    .push(from.six_digit().to_string());
            }
        }
    }
    let skipped = [2003, 2009, 2017];
    let mut out = String::from("year,state,soc6,mean_annual_wage,soc_version\n");
    let mut emitted = BTreeSet::new();
    for year in 1999..=2022 {
        if skipped.contains(&year) {
            continue;
        }
        for (state, f) in &state_factor {
            for c in &soc6 {
                let w =
                    base[c.as_str()] * f * 1.028f64.powi(year - 1999) * rng.gen_range(0.96..1.04);
                match legacy_of.get(c) {
                    Some(olds) if year <= 2011 => {
                        for old in olds {
                            if emitted.insert((year, *state, old.clone())) {
                                let _ = writeln!(
                                    out,
                                    "{year},{state},{old},{:.0},2010",
                                    w * rng.gen_range(0.97..1.03)
                                );
                            }
                        }
                    }
                    _ => {
                        let _ = writeln!(out, "{year},{state},{c},{w:.0},2019");
                    }
                }
            }
        }
    }
    out
}

fn gdp(rng: &mut ChaCha8Rng) -> String {
    let mut out = String::from("year,state,real_gdp\n");
    for year in 1999..=2022 {
        for (state, g2019, growth) in GDP {
            let v = g2019 * (1.0 + growth).powi(year - 2019) * rng.gen_range(0.99..1.01);
            let _ = writeln!(out, "{year},{state},{v:.1}");
        }
    }
    out
}

fn ratings(rng: &mut ChaCha8Rng) -> (String, String) {
    let workers: Vec<(String, f64)> = (1..=30)
        .map(|i| (format!("w{i:02}"), rng.gen_range(0.5..1.0)))
        .collect();
    let mut acc = String::from("worker_id,accuracy\n");
    for (w, a) in &workers {
        let _ = writeln!(acc, "{w},{a:.3}");
    }
    let mut out = String::from("hit_id,worker_id,value,source\n");
    for (prefix, source, n, p_correct) in [
        ('C', "concordant", 60, 0.9),
        ('L', "lc_soc", 40, 0.65),
        ('F', "fewsoc", 40, 0.72),
    ] {
        for h in 1..=n {
            let correct = rng.gen_bool(p_correct);
            let k = if rng.gen_bool(0.1) { 1 } else { 3 };
            let raters: Vec<&(String, f64)> = workers.choose_multiple(rng, k).collect();
            for (w, a) in raters {
                let value: u8 = if rng.gen_bool(*a) {
                    if correct {
                        rng.gen_range(3..=4)
                    } else {
                        rng.gen_range(1..=2)
                    }
                } else {
                    rng.gen_range(1..=4)
                };
                let _ = writeln!(out, "{prefix}{h:06},{w},{value},{source}");
            }
        }
    }
    (out, acc)
}

fn main() {
    let data: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "data".into())
        .into();
    let tax = Taxonomy::load_path(&data.join("taxonomy_2019.csv"), Delimited::default())
        .expect("taxonomy");
    let legacy = CrosswalkTable::load_path(&data.join("2010_to_2019.csv"), Delimited::default())
        .expect("crosswalk");
    let out = data.join("fixture");
    std::fs::create_dir_all(&out).expect("fixture dir");

    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(SEED),
    };
    let mut profiles = String::new();
    for i in 0..N_PROFILES {
        let p = g.profile(i);
        profiles.push_str(&serde_json::to_string(&p).expect("serializable"));
        profiles.push('\n');
    }
    // two malformed lines for the parser
    profiles.push_str("{\"id\": \"broken-1\", \"jobs\": [{\"title\": \"Welder\", \"start_date\": \"March 2010\"}]}\n");
    profiles.push_str("{\"jobs\": []}\n");
    write(&out.join("profiles.jsonl"), &profiles);

    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    write(&out.join("wages.csv"), &wages(&mut rng, &tax, &legacy));
    write(&out.join("gdp.csv"), &gdp(&mut rng));
    let (r, a) = ratings(&mut rng);
    write(&out.join("ratings.csv"), &r);
    write(&out.join("accuracies.csv"), &a);
}
