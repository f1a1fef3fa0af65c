//! Occupational wages, regional GDP deciles, generational cohort and the
//! upward-mobility outcome.
//!
//! Wage files have the header `year,state,soc6,mean_annual_wage[,soc_version]`
//! where `soc_version` names the occupation taxonomy the row is keyed by
//! (default `2019`). GDP files have the header `year,state,real_gdp`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profiles::{DegreeLevel, Gender, Profile, Race};
use crate::taxonomy::{CrosswalkTable, SocCode, Taxonomy};
use crate::trajectory::{JobChangeFlags, TrajectoryRecord};

/// Wages below this are taken to be hourly figures.
pub const MIN_ANNUAL_WAGE: f64 = 1000.0;
pub const TAXONOMY_2019: &str = "2019";

#[derive(Debug, Error)]
pub enum TableError {
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("row {row}: wage {wage} is not an annual USD figure")]
    Units { row: usize, wage: f64 },
    #[error("missing column {0:?}")]
    MissingColumn(&'static str),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source)
}

fn column(headers: &csv::StringRecord, name: &'static str) -> Result<usize, TableError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or(TableError::MissingColumn(name))
}

fn six_digit_ok(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 7
        && b[2] == b'-'
        && b.iter()
            .enumerate()
            .all(|(i, c)| i == 2 || c.is_ascii_digit())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawWageRow {
    pub year: i32,
    pub state: String,
    pub soc6: String,
    pub mean_annual_wage: f64,
    pub soc_version: String,
}

pub fn load_wage_rows<R: Read>(source: R) -> Result<Vec<RawWageRow>, TableError> {
    let mut rdr = reader(source);
    let h = rdr.headers()?.clone();
    let (cy, cs, cc, cw) = (
        column(&h, "year")?,
        column(&h, "state")?,
        column(&h, "soc6")?,
        column(&h, "mean_annual_wage")?,
    );
    let cv = h.iter().position(|x| x == "soc_version");
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let bad = |message: String| TableError::Row { row, message };
        let year: i32 = rec[cy]
            .parse()
            .map_err(|_| bad(format!("bad year {:?}", &rec[cy])))?;
        let wage: f64 = rec[cw]
            .parse()
            .map_err(|_| bad(format!("bad wage {:?}", &rec[cw])))?;
        if !wage.is_finite() || wage < MIN_ANNUAL_WAGE {
            return Err(TableError::Units { row, wage });
        }
        let soc6 = rec[cc].to_string();
        if !six_digit_ok(&soc6) {
            return Err(bad(format!("bad 6-digit code {soc6:?}")));
        }
        let soc_version = cv
            .and_then(|c| rec.get(c))
            .filter(|v| !v.is_empty())
            .unwrap_or(TAXONOMY_2019)
            .to_string();
        rows.push(RawWageRow {
            year,
            state: rec[cs].to_uppercase(),
            soc6,
            mean_annual_wage: wage,
            soc_version,
        });
    }
    Ok(rows)
}

pub fn load_wage_rows_path(path: &Path) -> Result<Vec<RawWageRow>, TableError> {
    load_wage_rows(std::fs::File::open(path)?)
}

type WageKey = (i32, String, String);

/// Mean annual wage by (year, state, 2019 6-digit code).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WageTable {
    entries: BTreeMap<WageKey, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StandardizeReport {
    pub kept_direct: usize,
    pub remapped: usize,
    pub dropped_out_of_range: usize,
    pub dropped_unmapped: usize,
    pub dropped_unknown_version: usize,
}

/// Legacy-to-2019 mapping at the 6-digit level, derived from 8-digit crosswalks.
fn six_digit_tables(tables: &[CrosswalkTable]) -> Vec<(String, BTreeMap<String, Vec<String>>)> {
    tables
        .iter()
        .map(|t| {
            let mut m: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for (from, targets) in t.iter() {
                let e = m.entry(from.six_digit().to_string()).or_default();
                for to in targets {
                    let to6 = to.six_digit().to_string();
                    if !e.contains(&to6) {
                        e.push(to6);
                    }
                }
            }
            (t.from_version.clone(), m)
        })
        .collect()
}

fn chain6(
    code: &str,
    start: usize,
    tables: &[(String, BTreeMap<String, Vec<String>>)],
) -> Vec<String> {
    let mut frontier = vec![code.to_string()];
    for (_, m) in &tables[start..] {
        let mut next: Vec<String> = Vec::new();
        for c in &frontier {
            let targets = m.get(c).cloned().unwrap_or_else(|| vec![c.clone()]);
            for t in targets {
                if !next.contains(&t) {
                    next.push(t);
                }
            }
        }
        frontier = next;
    }
    frontier
}

/// Re-keys wage rows to 2019 6-digit codes. Rows already keyed by the 2019
/// taxonomy stay as they are; legacy rows pass through the crosswalk chain
/// from their version onward and give their wage to every 2019 image. Legacy
/// rows landing on a key held by a 2019 row are ignored; several legacy rows
/// landing on the same key are averaged. Codes absent from `tax` afterwards
/// are dropped.
pub fn standardize_wage_socs(
    rows: &[RawWageRow],
    crosswalks: &[CrosswalkTable],
    tax: &Taxonomy,
    years: RangeInclusive<i32>,
) -> (WageTable, StandardizeReport) {
    let valid6 = tax.six_digit_codes();
    let tables6 = six_digit_tables(crosswalks);
    let mut report = StandardizeReport::default();
    let mut direct: BTreeMap<WageKey, f64> = BTreeMap::new();
    let mut mapped: BTreeMap<WageKey, (f64, usize)> = BTreeMap::new();
    for r in rows {
        if !years.contains(&r.year) {
            report.dropped_out_of_range += 1;
            continue;
        }
        if r.soc_version == TAXONOMY_2019 {
            if valid6.contains(&r.soc6) {
                direct.insert(
                    (r.year, r.state.clone(), r.soc6.clone()),
                    r.mean_annual_wage,
                );
                report.kept_direct += 1;
            } else {
                tracing::debug!(code = %r.soc6, "wage code not in 2019 taxonomy, dropped");
                report.dropped_unmapped += 1;
            }
            continue;
        }
        let Some(start) = tables6.iter().position(|(v, _)| *v == r.soc_version) else {
            tracing::warn!(version = %r.soc_version, "no crosswalk from this version, row dropped");
            report.dropped_unknown_version += 1;
            continue;
        };
        let images: Vec<String> = chain6(&r.soc6, start, &tables6)
            .into_iter()
            .filter(|c| valid6.contains(c))
            .collect();
        if images.is_empty() {
            tracing::debug!(code = %r.soc6, version = %r.soc_version, "legacy wage code has no 2019 image, dropped");
            report.dropped_unmapped += 1;
            continue;
        }
        report.remapped += 1;
        for c in images {
            let e = mapped
                .entry((r.year, r.state.clone(), c))
                .or_insert((0.0, 0));
            e.0 += r.mean_annual_wage;
            e.1 += 1;
        }
    }
    for (k, (sum, n)) in mapped {
        direct.entry(k).or_insert(sum / n as f64);
    }
    (WageTable { entries: direct }, report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("empty wage series")]
pub struct EmptySeries;

/// Fills interior gaps linearly and extends the end points flat over `years`.
/// Observed points are returned unchanged.
pub fn interpolate_missing(
    series: &BTreeMap<i32, f64>,
    years: RangeInclusive<i32>,
) -> Result<BTreeMap<i32, f64>, EmptySeries> {
    let (&first, &first_v) = series.iter().next().ok_or(EmptySeries)?;
    let (&last, &last_v) = series.iter().next_back().ok_or(EmptySeries)?;
    let lo = *years.start().min(&first);
    let hi = *years.end().max(&last);
    let mut out = BTreeMap::new();
    for y in lo..=hi {
        let v = if let Some(v) = series.get(&y) {
            *v
        } else if y < first {
            first_v
        } else if y > last {
            last_v
        } else {
            let (&y0, &v0) = series
                .range(..y)
                .next_back()
                .expect("interior year has a left neighbour");
            let (&y1, &v1) = series
                .range(y..)
                .next()
                .expect("interior year has a right neighbour");
            v0 + (v1 - v0) * f64::from(y - y0) / f64::from(y1 - y0)
        };
        out.insert(y, v);
    }
    Ok(out)
}

impl WageTable {
    pub fn insert(&mut self, year: i32, state: &str, soc6: &str, wage: f64) {
        self.entries
            .insert((year, state.to_uppercase(), soc6.to_string()), wage);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, year: i32, state: &str, soc6: &str) -> Option<f64> {
        self.entries
            .get(&(year, state.to_uppercase(), soc6.to_string()))
            .copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, &str, &str, f64)> {
        self.entries
            .iter()
            .map(|((y, s, c), w)| (*y, s.as_str(), c.as_str(), *w))
    }

    /// Interpolates every (state, code) series over `years`.
    pub fn interpolated(&self, years: RangeInclusive<i32>) -> WageTable {
        let mut series: BTreeMap<(String, String), BTreeMap<i32, f64>> = BTreeMap::new();
        for ((y, s, c), w) in &self.entries {
            series
                .entry((s.clone(), c.clone()))
                .or_default()
                .insert(*y, *w);
        }
        let mut out = WageTable::default();
        for ((s, c), ser) in series {
            let full = interpolate_missing(&ser, years.clone())
                .expect("series built from entries is non-empty");
            for (y, w) in full {
                if years.contains(&y) {
                    out.entries.insert((y, s.clone(), c.clone()), w);
                }
            }
        }
        out
    }

    pub fn states(&self) -> BTreeSet<&str> {
        self.entries.keys().map(|(_, s, _)| s.as_str()).collect()
    }
}

/// Wage for an 8-digit code at its 6-digit level.
pub fn lookup_wage(year: i32, state: &str, soc: &SocCode, table: &WageTable) -> Option<f64> {
    table.get(year, state, soc.six_digit())
}

/// Mean wage over all applicable codes that have an entry.
pub fn lookup_wage_mean(
    year: i32,
    state: &str,
    socs: &[SocCode],
    table: &WageTable,
) -> Option<f64> {
    let six: BTreeSet<&str> = socs.iter().map(SocCode::six_digit).collect();
    let found: Vec<f64> = six
        .iter()
        .filter_map(|c| table.get(year, state, c))
        .collect();
    if found.is_empty() {
        None
    } else {
        Some(found.iter().sum::<f64>() / found.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GdpError {
    #[error("unknown state {0:?}")]
    UnknownState(String),
}

/// GDP decile (1 = lowest) of each state within each year.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GdpDecileTable {
    by_state: BTreeMap<String, BTreeMap<i32, u8>>,
}

impl GdpDecileTable {
    /// Ranks states by real GDP within each year (ties by state code) and
    /// assigns decile `floor(rank * 10 / n) + 1` with rank counted from 0.
    pub fn from_gdp(rows: &[(i32, String, f64)]) -> Self {
        let mut by_year: BTreeMap<i32, Vec<(f64, String)>> = BTreeMap::new();
        for (y, s, g) in rows {
            by_year.entry(*y).or_default().push((*g, s.to_uppercase()));
        }
        let mut by_state: BTreeMap<String, BTreeMap<i32, u8>> = BTreeMap::new();
        for (y, mut v) in by_year {
            v.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
            let n = v.len();
            for (rank, (_, s)) in v.into_iter().enumerate() {
                let d = (rank * 10 / n) as u8 + 1;
                by_state.entry(s).or_default().insert(y, d);
            }
        }
        Self { by_state }
    }

    pub fn load<R: Read>(source: R) -> Result<Self, TableError> {
        let mut rdr = reader(source);
        let h = rdr.headers()?.clone();
        let (cy, cs, cg) = (
            column(&h, "year")?,
            column(&h, "state")?,
            column(&h, "real_gdp")?,
        );
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec?;
            let bad = |message: String| TableError::Row { row, message };
            let year: i32 = rec[cy]
                .parse()
                .map_err(|_| bad(format!("bad year {:?}", &rec[cy])))?;
            let gdp: f64 = rec[cg]
                .parse()
                .map_err(|_| bad(format!("bad gdp {:?}", &rec[cg])))?;
            if !gdp.is_finite() || gdp <= 0.0 {
                return Err(bad(format!("gdp must be positive, got {gdp}")));
            }
            rows.push((year, rec[cs].to_string(), gdp));
        }
        Ok(Self::from_gdp(&rows))
    }

    pub fn load_path(path: &Path) -> Result<Self, TableError> {
        Self::load(std::fs::File::open(path)?)
    }

    /// Inserts a decile directly.
    pub fn insert(&mut self, year: i32, state: &str, decile: u8) {
        assert!((1..=10).contains(&decile), "decile out of range");
        self.by_state
            .entry(state.to_uppercase())
            .or_default()
            .insert(year, decile);
    }
}

/// Decile for (state, year); a missing year falls back to the nearest year
/// on record, the later one on ties.
pub fn regional_rank(state: &str, year: i32, gdp: &GdpDecileTable) -> Result<u8, GdpError> {
    let years = gdp
        .by_state
        .get(&state.to_uppercase())
        .ok_or_else(|| GdpError::UnknownState(state.to_string()))?;
    if let Some(d) = years.get(&year) {
        return Ok(*d);
    }
    let before = years.range(..year).next_back();
    let after = years.range(year..).next();
    let pick = match (before, after) {
        (Some(b), Some(a)) => {
            if year - b.0 < a.0 - year {
                b
            } else {
                a
            }
        }
        (Some(b), None) => b,
        (None, Some(a)) => a,
        (None, None) => return Err(GdpError::UnknownState(state.to_string())),
    };
    Ok(*pick.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generation {
    Silent,
    Boomer,
    GenX,
    Millennial,
    GenZ,
    Other,
}

impl Generation {
    pub fn label(self) -> &'static str {
        match self {
            Generation::Silent => "silent",
            Generation::Boomer => "boomer",
            Generation::GenX => "gen_x",
            Generation::Millennial => "millennial",
            Generation::GenZ => "gen_z",
            Generation::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationBand {
    pub generation: Generation,
    pub first_birth_year: i32,
    pub last_birth_year: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub graduation_age: i32,
    pub bands: Vec<GenerationBand>,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            graduation_age: 23,
            bands: vec![
                GenerationBand {
                    generation: Generation::GenX,
                    first_birth_year: 1965,
                    last_birth_year: 1980,
                },
                GenerationBand {
                    generation: Generation::Millennial,
                    first_birth_year: 1981,
                    last_birth_year: 1996,
                },
            ],
        }
    }
}

pub fn generation_for_ba_year(ba_year: i32, cfg: &CohortConfig) -> Generation {
    let birth = ba_year - cfg.graduation_age;
    cfg.bands
        .iter()
        .find(|b| (b.first_birth_year..=b.last_birth_year).contains(&birth))
        .map_or(Generation::Other, |b| b.generation)
}

/// Generation from the bachelor's completion year; `None` when it is unknown.
pub fn cohort(p: &Profile, cfg: &CohortConfig) -> Option<Generation> {
    p.bachelor_end()
        .map(|e| generation_for_ba_year(e.year(), cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Upward {
    pub w1: f64,
    pub w5: f64,
    pub upward: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnrichError {
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("job {index} has no final occupation code")]
    MissingSoc { index: usize },
    #[error("job {index} has no state")]
    MissingState { index: usize },
    #[error("no wage for {which} ({year}, {state}, {soc6})")]
    MissingWage {
        which: &'static str,
        year: i32,
        state: String,
        soc6: String,
    },
    #[error("bachelor's completion date unknown")]
    MissingBachelor,
    #[error("missing {0}")]
    MissingDemographic(&'static str),
    #[error("gdp: {0}")]
    Gdp(#[from] GdpError),
}

/// Index of the job held `years` after the first start: the last job
/// starting no later than that.
pub fn fifth_year_index(jobs: &[crate::profiles::JobRecord], years: f64) -> Option<usize> {
    let first = jobs.first()?.start_date?;
    jobs.iter()
        .rposition(|j| j.start_date.is_some_and(|s| s.years_since(first) <= years))
}

/// Compares the first job's occupational wage with that of the job held five
/// years in: the last job starting at most `years` after the first start,
/// priced in the year `years` after the first start year and in that job's
/// own state.
pub fn upward_mobility(
    t: &TrajectoryRecord,
    wages: &WageTable,
    years: f64,
) -> Result<Upward, EnrichError> {
    let first = t.jobs.first().ok_or(EnrichError::EmptyTrajectory)?;
    let first_start = first.start_date.ok_or(EnrichError::EmptyTrajectory)?;
    let idx5 = fifth_year_index(&t.jobs, years).ok_or(EnrichError::EmptyTrajectory)?;
    let fifth = &t.jobs[idx5];
    let price = |which: &'static str, index: usize, j: &crate::profiles::JobRecord, year: i32| {
        let soc = j
            .final_soc
            .as_ref()
            .ok_or(EnrichError::MissingSoc { index })?;
        if j.state.trim().is_empty() {
            return Err(EnrichError::MissingState { index });
        }
        lookup_wage(year, &j.state, soc, wages).ok_or_else(|| EnrichError::MissingWage {
            which,
            year,
            state: j.state.clone(),
            soc6: soc.six_digit().to_string(),
        })
    };
    let w1 = price("w1", 0, first, first_start.year())?;
    let w5 = price("w5", idx5, fifth, first_start.plus_years(years).year())?;
    Ok(Upward {
        w1,
        w5,
        upward: w5 - w1 > 0.0,
    })
}

/// One analysis row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedRecord {
    pub profile_id: String,
    pub gender: Gender,
    pub race: Race,
    pub education: DegreeLevel,
    pub generation: Generation,
    pub regional_rank: u8,
    pub w1: f64,
    pub w5: f64,
    pub log_w1: f64,
    pub upward: u8,
    pub mobility: u32,
    pub type1: bool,
    pub type2: bool,
    pub type3: bool,
    pub type4: bool,
    pub occ2: String,
    pub ind2: String,
}

impl EnrichedRecord {
    pub fn flags(&self) -> JobChangeFlags {
        JobChangeFlags {
            type1: self.type1,
            type2: self.type2,
            type3: self.type3,
            type4: self.type4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnrichConfig {
    pub years: (i32, i32),
    pub window_years: f64,
    pub cohort: CohortConfig,
}

impl Default for EnrichConfig {
    fn default() -> Self {
        Self {
            years: (1999, 2022),
            window_years: 5.0,
            cohort: CohortConfig::default(),
        }
    }
}

pub struct EnrichmentTables<'a> {
    /// Interpolated wage table.
    pub wages: &'a WageTable,
    pub gdp: &'a GdpDecileTable,
}

pub fn enrich(
    p: &Profile,
    t: &TrajectoryRecord,
    tables: &EnrichmentTables<'_>,
    cfg: &EnrichConfig,
) -> Result<EnrichedRecord, EnrichError> {
    let gender = p.gender.ok_or(EnrichError::MissingDemographic("gender"))?;
    let race = p.race.ok_or(EnrichError::MissingDemographic("race"))?;
    let generation = cohort(p, &cfg.cohort).ok_or(EnrichError::MissingBachelor)?;
    let first = t.jobs.first().ok_or(EnrichError::EmptyTrajectory)?;
    let soc = first
        .final_soc
        .as_ref()
        .ok_or(EnrichError::MissingSoc { index: 0 })?;
    let start = first.start_date.ok_or(EnrichError::EmptyTrajectory)?;
    let regional = regional_rank(&first.state, start.year(), tables.gdp)?;
    let up = upward_mobility(t, tables.wages, cfg.window_years)?;
    let ind2 = first
        .naics
        .as_deref()
        .map(str::trim)
        .filter(|n| n.len() >= 2 && n.as_bytes()[..2].iter().all(u8::is_ascii_digit))
        .map_or_else(|| "unknown".to_string(), |n| n[..2].to_string());
    Ok(EnrichedRecord {
        profile_id: p.id.clone(),
        gender,
        race,
        education: p.highest_degree().unwrap_or(DegreeLevel::Bachelor),
        generation,
        regional_rank: regional,
        w1: up.w1,
        w5: up.w5,
        log_w1: up.w1.ln(),
        upward: u8::from(up.upward),
        mobility: t.mobility.capped,
        type1: t.flags.type1,
        type2: t.flags.type2,
        type3: t.flags.type3,
        type4: t.flags.type4,
        occ2: soc.major_group().to_string(),
        ind2,
    })
}
