//! Design matrices for the four upward-mobility models, their logistic fits
//! and the descriptive tables.

pub mod descriptives;
pub mod logit;
pub mod models;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enrichment::{EnrichedRecord, Generation};
use crate::profiles::{DegreeLevel, Gender, Race};

pub use descriptives::{descriptives, DescriptiveReport};
pub use logit::{fit_logistic_matrix, Coefficient, FitError, FitResult};
pub use models::{run_models, run_selected, ModelTable};

pub const OTHER_LEVEL: &str = "other";
pub const DEFAULT_RARE_MIN: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Gender,
    Race,
    Education,
    Generation,
    Occ2,
    Ind2,
}

impl Factor {
    pub const MAIN: [Factor; 4] = [
        Factor::Gender,
        Factor::Race,
        Factor::Education,
        Factor::Generation,
    ];
    pub const CONTROLS: [Factor; 2] = [Factor::Occ2, Factor::Ind2];

    pub fn label(self) -> &'static str {
        match self {
            Factor::Gender => "gender",
            Factor::Race => "race",
            Factor::Education => "education",
            Factor::Generation => "generation",
            Factor::Occ2 => "occ2",
            Factor::Ind2 => "ind2",
        }
    }

    fn default_reference(self) -> &'static str {
        match self {
            Factor::Gender => "male",
            Factor::Race => "white",
            Factor::Education => "bachelor",
            Factor::Generation => "gen_x",
            Factor::Occ2 => "11",
            Factor::Ind2 => "11",
        }
    }

    /// Preferred display order of non-reference levels; unlisted levels sort after.
    fn level_rank(self, level: &str) -> usize {
        let order: &[&str] = match self {
            Factor::Gender => &["female"],
            Factor::Race => &["black", "asian", "hispanic"],
            Factor::Education => &["doctorate", "master"],
            Factor::Generation => &["millennial", "gen_z", "boomer", "silent"],
            Factor::Occ2 | Factor::Ind2 => &[],
        };
        order
            .iter()
            .position(|l| *l == level)
            .unwrap_or(order.len())
    }

    fn rare_merging(self) -> bool {
        matches!(self, Factor::Occ2 | Factor::Ind2)
    }
}

pub fn gender_label(g: Gender) -> &'static str {
    match g {
        Gender::Male => "male",
        Gender::Female => "female",
    }
}

pub fn race_label(r: Race) -> &'static str {
    match r {
        Race::White => "white",
        Race::Black => "black",
        Race::Asian => "asian",
        Race::Hispanic => "hispanic",
    }
}

/// Raw level of a record for a factor.
pub fn level_of(r: &EnrichedRecord, f: Factor) -> String {
    match f {
        Factor::Gender => gender_label(r.gender).into(),
        Factor::Race => race_label(r.race).into(),
        Factor::Education => r.education.label().into(),
        Factor::Generation => r.generation.label().into(),
        Factor::Occ2 => r.occ2.clone(),
        Factor::Ind2 => r.ind2.clone(),
    }
}

/// Column label for a dummy.
pub fn level_display(f: Factor, level: &str) -> String {
    match (f, level) {
        (Factor::Gender, "female") => "Female".into(),
        (Factor::Gender, "male") => "Male".into(),
        (Factor::Race, l) => {
            let mut c = l.chars();
            c.next()
                .map_or_else(String::new, |h| h.to_uppercase().chain(c).collect())
        }
        (Factor::Education, "doctorate") => "Doctorate".into(),
        (Factor::Education, "master") => "Master's Degree".into(),
        (Factor::Education, "bachelor") => "Bachelor's Degree".into(),
        (Factor::Generation, "millennial") => "Millennials".into(),
        (Factor::Generation, "gen_x") => "Generation X".into(),
        (Factor::Generation, "gen_z") => "Generation Z".into(),
        (Factor::Generation, "boomer") => "Boomers".into(),
        (Factor::Generation, "silent") => "Silent Generation".into(),
        (Factor::Occ2, l) => format!("Occupation {l}"),
        (Factor::Ind2, l) => format!("Industry {l}"),
        (_, l) => l.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeFlag {
    Type1,
    Type2,
    Type3,
}

impl ChangeFlag {
    pub const ALL: [ChangeFlag; 3] = [ChangeFlag::Type1, ChangeFlag::Type2, ChangeFlag::Type3];

    pub fn display(self) -> &'static str {
        match self {
            ChangeFlag::Type1 => "Type-1 Change",
            ChangeFlag::Type2 => "Type-2 Change",
            ChangeFlag::Type3 => "Type-3 Change",
        }
    }

    fn value(self, r: &EnrichedRecord) -> f64 {
        let b = match self {
            ChangeFlag::Type1 => r.type1,
            ChangeFlag::Type2 => r.type2,
            ChangeFlag::Type3 => r.type3,
        };
        f64::from(u8::from(b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    RegionalRank,
    LogWage,
    Mobility,
}

impl Covariate {
    pub const ALL: [Covariate; 3] = [
        Covariate::RegionalRank,
        Covariate::LogWage,
        Covariate::Mobility,
    ];

    pub fn display(self) -> &'static str {
        match self {
            Covariate::RegionalRank => "Regional Economic Ranking",
            Covariate::LogWage => "Log(Wage)",
            Covariate::Mobility => "Job Mobility",
        }
    }

    fn value(self, r: &EnrichedRecord) -> f64 {
        match self {
            Covariate::RegionalRank => f64::from(r.regional_rank),
            Covariate::LogWage => r.log_w1,
            Covariate::Mobility => f64::from(r.mobility),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelId {
    M1Main,
    M2GenderXType,
    M3RaceXType,
    M4Stratified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: ModelId,
    pub reference_categories: BTreeMap<Factor, String>,
    pub interaction_terms: Vec<(Factor, ChangeFlag)>,
    pub strata: Option<Factor>,
    pub controls: Vec<Factor>,
}

impl ModelSpec {
    fn base(id: ModelId) -> Self {
        let reference_categories = Factor::MAIN
            .iter()
            .chain(Factor::CONTROLS.iter())
            .map(|f| (*f, f.default_reference().to_string()))
            .collect();
        Self {
            id,
            reference_categories,
            interaction_terms: vec![],
            strata: None,
            controls: Factor::CONTROLS.to_vec(),
        }
    }

    pub fn m1() -> Self {
        Self::base(ModelId::M1Main)
    }

    pub fn m2() -> Self {
        let mut s = Self::base(ModelId::M2GenderXType);
        s.interaction_terms = ChangeFlag::ALL
            .iter()
            .map(|f| (Factor::Gender, *f))
            .collect();
        s
    }

    pub fn m3() -> Self {
        let mut s = Self::base(ModelId::M3RaceXType);
        s.interaction_terms = ChangeFlag::ALL.iter().map(|f| (Factor::Race, *f)).collect();
        s
    }

    pub fn m4() -> Self {
        let mut s = Self::base(ModelId::M4Stratified);
        s.interaction_terms = ChangeFlag::ALL.iter().map(|f| (Factor::Race, *f)).collect();
        s.strata = Some(Factor::Gender);
        s
    }

    pub fn all() -> [ModelSpec; 4] {
        [Self::m1(), Self::m2(), Self::m3(), Self::m4()]
    }

    fn factors(&self) -> Vec<Factor> {
        Factor::MAIN
            .iter()
            .chain(self.controls.iter())
            .copied()
            .filter(|f| Some(*f) != self.strata)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Intercept,
    Dummy {
        factor: Factor,
        level: String,
    },
    Covariate {
        covariate: Covariate,
    },
    Flag {
        flag: ChangeFlag,
    },
    Interaction {
        factor: Factor,
        level: String,
        flag: ChangeFlag,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

/// Levels of one factor: the reference, the non-reference levels that get a
/// column, and raw levels folded into `other`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorLevels {
    pub factor: Factor,
    pub reference: String,
    pub levels: Vec<String>,
    pub merged: BTreeSet<String>,
}

impl FactorLevels {
    pub fn coded(&self, raw: &str) -> String {
        if self.merged.contains(raw) {
            OTHER_LEVEL.to_string()
        } else {
            raw.to_string()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodeError {
    #[error("no records to encode")]
    Empty,
    #[error("level {level:?} of {} not among the model's levels", .factor.label())]
    UnseenLevel { factor: Factor, level: String },
    #[error("column {0:?} has zero variance")]
    ZeroVariance(String),
    #[error("non-finite value in column {column:?} at row {row}")]
    NonFinite { row: usize, column: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub columns: Vec<Column>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub row_ids: Vec<String>,
    pub levels: Vec<FactorLevels>,
    /// Stratum label, e.g. `male`, for stratified models.
    pub stratum: Option<String>,
}

impl DesignMatrix {
    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Recovers each factor's coded level from a design row.
    pub fn decode_row(&self, i: usize) -> BTreeMap<Factor, String> {
        let mut out: BTreeMap<Factor, String> = self
            .levels
            .iter()
            .map(|l| (l.factor, l.reference.clone()))
            .collect();
        for (j, c) in self.columns.iter().enumerate() {
            if let ColumnKind::Dummy { factor, level } = &c.kind {
                if self.x[(i, j)] == 1.0 {
                    out.insert(*factor, level.clone());
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodeOptions {
    /// Control levels with fewer rows are merged into `other`.
    pub rare_min: usize,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        Self {
            rare_min: DEFAULT_RARE_MIN,
        }
    }
}

/// Records usable for model fitting, and the ids of those left out.
pub fn model_sample(records: &[EnrichedRecord]) -> (Vec<EnrichedRecord>, Vec<String>) {
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for r in records {
        if r.generation == Generation::Other
            || r.education == DegreeLevel::Other
            || !r.log_w1.is_finite()
        {
            excluded.push(r.profile_id.clone());
        } else {
            kept.push(r.clone());
        }
    }
    (kept, excluded)
}

/// Derives factor levels from the data. The configured reference is kept when
/// observed; otherwise the smallest observed level takes its place.
pub fn derive_levels(
    records: &[EnrichedRecord],
    spec: &ModelSpec,
    opts: &EncodeOptions,
) -> Vec<FactorLevels> {
    spec.factors()
        .into_iter()
        .map(|f| {
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for r in records {
                *counts.entry(level_of(r, f)).or_default() += 1;
            }
            let wanted = spec.reference_categories.get(&f).cloned().unwrap_or_else(|| f.default_reference().into());
            let reference = if counts.contains_key(&wanted) {
                wanted
            } else {
                let fallback = counts.keys().next().cloned().unwrap_or(wanted.clone());
                tracing::warn!(factor = f.label(), wanted = %wanted, used = %fallback, "reference level not observed");
                fallback
            };
            let mut merged = BTreeSet::new();
            if f.rare_merging() {
                for (l, c) in &counts {
                    if *l != reference && *c < opts.rare_min {
                        merged.insert(l.clone());
                    }
                }
            }
            let mut levels: BTreeSet<String> = BTreeSet::new();
            for l in counts.keys() {
                let coded = if merged.contains(l) { OTHER_LEVEL.to_string() } else { l.clone() };
                if coded != reference {
                    levels.insert(coded);
                }
            }
            let mut levels: Vec<String> = levels.into_iter().collect();
            levels.sort_by(|a, b| {
                let key = |l: &String| (l == OTHER_LEVEL, f.level_rank(l), l.clone());
                key(a).cmp(&key(b))
            });
            FactorLevels { factor: f, reference, levels, merged }
        })
        .collect()
}

/// Builds the design for one stratum with fixed levels.
pub fn encode_with_levels(
    records: &[EnrichedRecord],
    spec: &ModelSpec,
    levels: &[FactorLevels],
    stratum: Option<String>,
) -> Result<DesignMatrix, EncodeError> {
    if records.is_empty() {
        return Err(EncodeError::Empty);
    }
    let main: Vec<&FactorLevels> = levels
        .iter()
        .filter(|l| !spec.controls.contains(&l.factor))
        .collect();
    let controls: Vec<&FactorLevels> = levels
        .iter()
        .filter(|l| spec.controls.contains(&l.factor))
        .collect();
    let mut columns = vec![Column {
        name: "Intercept".into(),
        kind: ColumnKind::Intercept,
    }];
    for fl in &main {
        for l in &fl.levels {
            columns.push(Column {
                name: level_display(fl.factor, l),
                kind: ColumnKind::Dummy {
                    factor: fl.factor,
                    level: l.clone(),
                },
            });
        }
    }
    for c in Covariate::ALL {
        columns.push(Column {
            name: c.display().into(),
            kind: ColumnKind::Covariate { covariate: c },
        });
    }
    for f in ChangeFlag::ALL {
        columns.push(Column {
            name: f.display().into(),
            kind: ColumnKind::Flag { flag: f },
        });
    }
    for flag in ChangeFlag::ALL {
        for fl in &main {
            if !spec.interaction_terms.contains(&(fl.factor, flag)) {
                continue;
            }
            for l in &fl.levels {
                columns.push(Column {
                    name: format!("{} x {}", level_display(fl.factor, l), flag.display()),
                    kind: ColumnKind::Interaction {
                        factor: fl.factor,
                        level: l.clone(),
                        flag,
                    },
                });
            }
        }
    }
    for fl in &controls {
        for l in &fl.levels {
            columns.push(Column {
                name: level_display(fl.factor, l),
                kind: ColumnKind::Dummy {
                    factor: fl.factor,
                    level: l.clone(),
                },
            });
        }
    }

    let n = records.len();
    let mut x = DMatrix::zeros(n, columns.len());
    let mut y = DVector::zeros(n);
    for (i, r) in records.iter().enumerate() {
        let mut coded: BTreeMap<Factor, String> = BTreeMap::new();
        for fl in levels {
            let c = fl.coded(&level_of(r, fl.factor));
            if c != fl.reference && !fl.levels.contains(&c) {
                return Err(EncodeError::UnseenLevel {
                    factor: fl.factor,
                    level: c,
                });
            }
            coded.insert(fl.factor, c);
        }
        for (j, col) in columns.iter().enumerate() {
            let v = match &col.kind {
                ColumnKind::Intercept => 1.0,
                ColumnKind::Dummy { factor, level } => f64::from(u8::from(coded[factor] == *level)),
                ColumnKind::Covariate { covariate } => covariate.value(r),
                ColumnKind::Flag { flag } => flag.value(r),
                ColumnKind::Interaction {
                    factor,
                    level,
                    flag,
                } => f64::from(u8::from(coded[factor] == *level)) * flag.value(r),
            };
            if !v.is_finite() {
                return Err(EncodeError::NonFinite {
                    row: i,
                    column: col.name.clone(),
                });
            }
            x[(i, j)] = v;
        }
        y[i] = f64::from(r.upward);
    }
    for (j, col) in columns.iter().enumerate().skip(1) {
        let c = x.column(j);
        let first = c[0];
        if c.iter().all(|v| *v == first) {
            return Err(EncodeError::ZeroVariance(col.name.clone()));
        }
    }
    Ok(DesignMatrix {
        columns,
        x,
        y,
        row_ids: records.iter().map(|r| r.profile_id.clone()).collect(),
        levels: levels.to_vec(),
        stratum,
    })
}

/// One design per stratum (a single unstratified design unless the spec
/// names a stratum factor). Levels are derived within each stratum.
pub fn encode_design(
    records: &[EnrichedRecord],
    spec: &ModelSpec,
    opts: &EncodeOptions,
) -> Result<Vec<DesignMatrix>, EncodeError> {
    if records.is_empty() {
        return Err(EncodeError::Empty);
    }
    match spec.strata {
        None => {
            let levels = derive_levels(records, spec, opts);
            Ok(vec![encode_with_levels(records, spec, &levels, None)?])
        }
        Some(f) => {
            let mut groups: BTreeMap<String, Vec<EnrichedRecord>> = BTreeMap::new();
            for r in records {
                groups.entry(level_of(r, f)).or_default().push(r.clone());
            }
            let mut order: Vec<String> = groups.keys().cloned().collect();
            let reference = spec
                .reference_categories
                .get(&f)
                .cloned()
                .unwrap_or_else(|| f.default_reference().into());
            order.sort_by_key(|l| (*l != reference, l.clone()));
            order
                .into_iter()
                .map(|g| {
                    let rows = &groups[&g];
                    let levels = derive_levels(rows, spec, opts);
                    encode_with_levels(rows, spec, &levels, Some(g))
                })
                .collect()
        }
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_record_is_all_zero_dummies() {
        let recs = random_records(600, 3);
        let d = &encode_design(&recs, &ModelSpec::m1(), &EncodeOptions::default()).unwrap()[0];
        let (i, _) = recs
            .iter()
            .enumerate()
            .find(|(_, r)| {
                r.gender == Gender::Male
                    && r.race == Race::White
                    && r.education == DegreeLevel::Bachelor
                    && r.generation == Generation::GenX
            })
            .unwrap();
        for (j, c) in d.columns.iter().enumerate() {
            if let ColumnKind::Dummy { factor, .. } = &c.kind {
                if Factor::MAIN.contains(factor) {
                    assert_eq!(d.x[(i, j)], 0.0, "{}", c.name);
                }
            }
        }
        let names = d.names();
        assert!(!names.contains(&"Male".to_string()));
        assert!(!names.contains(&"White".to_string()));
        assert!(!names.contains(&"Type-4 Change".to_string()));
        let unique: BTreeSet<&String> = names.iter().collect();
        assert_eq!(unique.len(), names.len());
        assert_eq!(
            &names[..5],
            ["Intercept", "Female", "Black", "Asian", "Hispanic"]
        );
    }

    #[test]
    fn interaction_is_product() {
        let recs = random_records(600, 4);
        let d = &encode_design(&recs, &ModelSpec::m2(), &EncodeOptions::default()).unwrap()[0];
        let j = d.column("Female x Type-2 Change").unwrap();
        for (i, r) in recs.iter().enumerate() {
            let expect = f64::from(u8::from(r.gender == Gender::Female && r.type2));
            assert_eq!(d.x[(i, j)], expect);
        }
        assert!(d.column("Black x Type-1 Change").is_none());
        let d3 = &encode_design(&recs, &ModelSpec::m3(), &EncodeOptions::default()).unwrap()[0];
        assert!(d3.column("Asian x Type-3 Change").is_some());
    }

    #[test]
    fn stratified_partition() {
        let recs = random_records(800, 5);
        let ds = encode_design(&recs, &ModelSpec::m4(), &EncodeOptions::default()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds[0].stratum.as_deref(), Some("male"));
        assert_eq!(ds[0].nrows() + ds[1].nrows(), recs.len());
        for d in &ds {
            assert!(d.column("Female").is_none());
        }
    }

    #[test]
    fn rare_levels_merge_and_unseen_levels_fail() {
        let mut recs = random_records(600, 6);
        for r in recs.iter_mut().take(5) {
            r.occ2 = "45".into();
        }
        let spec = ModelSpec::m1();
        let levels = derive_levels(&recs, &spec, &EncodeOptions::default());
        let occ = levels.iter().find(|l| l.factor == Factor::Occ2).unwrap();
        assert!(occ.merged.contains("45"));
        assert!(occ.levels.contains(&OTHER_LEVEL.to_string()));
        assert_eq!(occ.levels.last().unwrap(), OTHER_LEVEL);

        let mut odd = recs.clone();
        odd[10].generation = Generation::Boomer;
        let err = encode_with_levels(&odd, &spec, &levels, None).unwrap_err();
        assert_eq!(
            err,
            EncodeError::UnseenLevel {
                factor: Factor::Generation,
                level: "boomer".into()
            }
        );
    }

    #[test]
    fn zero_variance_column_fails() {
        let mut recs = random_records(300, 7);
        for r in &mut recs {
            r.type3 = false;
        }
        let err = encode_design(&recs, &ModelSpec::m1(), &EncodeOptions::default()).unwrap_err();
        assert_eq!(err, EncodeError::ZeroVariance("Type-3 Change".into()));
    }

    #[test]
    fn missing_reference_falls_back() {
        let mut recs = random_records(300, 8);
        for r in &mut recs {
            if r.occ2 == "11" {
                r.occ2 = "15".into();
            }
        }
        let levels = derive_levels(&recs, &ModelSpec::m1(), &EncodeOptions::default());
        let occ = levels.iter().find(|l| l.factor == Factor::Occ2).unwrap();
        assert_eq!(occ.reference, "13");
    }

    #[test]
    fn sample_excludes_other_generation() {
        let recs = vec![
            record(
                0,
                Gender::Male,
                Race::White,
                DegreeLevel::Bachelor,
                Generation::GenX,
            ),
            record(
                1,
                Gender::Male,
                Race::White,
                DegreeLevel::Bachelor,
                Generation::Other,
            ),
        ];
        let (kept, excluded) = model_sample(&recs);
        assert_eq!(kept.len(), 1);
        assert_eq!(excluded, vec!["p1".to_string()]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn decoding_recovers_levels(seed in any::<u64>()) {
            let recs = random_records(400, seed);
            let spec = ModelSpec::m3();
            let ds = encode_design(&recs, &spec, &EncodeOptions::default()).unwrap();
            let d = &ds[0];
            for (i, r) in recs.iter().enumerate() {
                let decoded = d.decode_row(i);
                for fl in &d.levels {
                    prop_assert_eq!(&decoded[&fl.factor], &fl.coded(&level_of(r, fl.factor)));
                }
            }
            prop_assert!(d.x.iter().all(|v| v.is_finite()));
        }
    }
}
