//! Crowd validation statistics: accuracy-weighted ratings, precision, the
//! two-proportion z-test and Krippendorff's alpha.
//!
//! Ratings files have the header `hit_id,worker_id,value,source` with
//! `source` one of `lc_soc`, `fewsoc`, `concordant`; accuracy files have
//! `worker_id,accuracy`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::logit::normal_p_value;
use crate::taxonomy::{SocCode, Taxonomy};

pub const DEFAULT_THRESHOLD: f64 = 3.0;
pub const DEFAULT_HIGH_ACCURACY: f64 = 0.8;
/// Published precision comparison on the full corpus, shown in the summary.
pub const PUBLISHED_COMPARISON: (f64, f64, f64) = (0.72, 0.65, 10.85);

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no ratings")]
    NoRatings,
    #[error("no accuracy for worker {0:?}")]
    MissingAccuracy(String),
    #[error("empty item set")]
    EmptySet,
    #[error("no pairable values")]
    NoPairableValues,
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    LcSoc,
    Fewsoc,
    Concordant,
}

impl LabelSource {
    pub fn label(self) -> &'static str {
        match self {
            LabelSource::LcSoc => "lc_soc",
            LabelSource::Fewsoc => "fewsoc",
            LabelSource::Concordant => "concordant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub hit_id: String,
    pub worker_id: String,
    pub value: u8,
    #[serde(rename = "source")]
    pub label_source: LabelSource,
}

pub fn load_ratings<R: Read>(source: R) -> Result<Vec<Rating>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<Rating>().enumerate() {
        let r = rec.map_err(|e| EvalError::Row {
            row: i + 1,
            message: e.to_string(),
        })?;
        if !(1..=4).contains(&r.value) {
            return Err(EvalError::Row {
                row: i + 1,
                message: format!("rating {} outside 1-4", r.value),
            });
        }
        out.push(r);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerAccuracy {
    pub worker_id: String,
    pub accuracy: f64,
}

pub fn load_accuracies<R: Read>(source: R) -> Result<BTreeMap<String, f64>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.deserialize::<WorkerAccuracy>().enumerate() {
        let w = rec.map_err(|e| EvalError::Row {
            row: i + 1,
            message: e.to_string(),
        })?;
        if !(0.0..=1.0).contains(&w.accuracy) {
            return Err(EvalError::Row {
                row: i + 1,
                message: format!("accuracy {} outside [0, 1]", w.accuracy),
            });
        }
        out.insert(w.worker_id, w.accuracy);
    }
    Ok(out)
}

/// Accuracy-weighted mean of `(value, accuracy)` pairs; the plain mean when
/// every accuracy is zero.
pub fn weighted_rating(pairs: &[(f64, f64)]) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::NoRatings);
    }
    let total: f64 = pairs.iter().map(|(_, a)| a).sum();
    if total == 0.0 {
        return Ok(pairs.iter().map(|(v, _)| v).sum::<f64>() / pairs.len() as f64);
    }
    Ok(pairs.iter().map(|(v, a)| v * a).sum::<f64>() / total)
}

pub fn aggregate_rating(
    ratings: &[&Rating],
    accuracies: &BTreeMap<String, f64>,
) -> Result<f64, EvalError> {
    let pairs = ratings
        .iter()
        .map(|r| {
            accuracies
                .get(&r.worker_id)
                .map(|a| (f64::from(r.value), *a))
                .ok_or_else(|| EvalError::MissingAccuracy(r.worker_id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    weighted_rating(&pairs)
}

/// Correct when the aggregate reaches the threshold.
pub fn binarize(agg: f64, threshold: f64) -> bool {
    agg >= threshold
}

pub fn precision(items: &[bool]) -> Result<f64, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptySet);
    }
    Ok(items.iter().filter(|c| **c).count() as f64 / items.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ZTest {
    Ok {
        z: f64,
        p_value: f64,
    },
    /// Pooled proportion of 0 or 1; the statistic is undefined.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("proportions must lie in [0, 1] with sample sizes of at least 1")]
pub struct ZTestInputError;

pub fn two_proportion_ztest(
    p1: f64,
    n1: usize,
    p2: f64,
    n2: usize,
) -> Result<ZTest, ZTestInputError> {
    if n1 == 0 || n2 == 0 || !(0.0..=1.0).contains(&p1) || !(0.0..=1.0).contains(&p2) {
        return Err(ZTestInputError);
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (p1 * n1f + p2 * n2f) / (n1f + n2f);
    if pooled <= 0.0 || pooled >= 1.0 {
        return Ok(ZTest::Degenerate);
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    let z = (p1 - p2) / se;
    Ok(ZTest::Ok {
        z,
        p_value: normal_p_value(z),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMetric {
    Nominal,
    #[default]
    Interval,
    Ordinal,
}

/// Krippendorff's alpha over units of values (one value per rater). Units
/// with fewer than two values do not contribute. When every pairable value
/// is the same, expected disagreement vanishes and alpha is reported as 1.
pub fn krippendorff_alpha(units: &[Vec<f64>], metric: AlphaMetric) -> Result<f64, EvalError> {
    let pairable: Vec<&Vec<f64>> = units.iter().filter(|u| u.len() >= 2).collect();
    if pairable.is_empty() {
        return Err(EvalError::NoPairableValues);
    }
    let mut values: Vec<f64> = pairable.iter().flat_map(|u| u.iter().copied()).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let idx = |v: f64| {
        values
            .binary_search_by(|x| x.total_cmp(&v))
            .expect("value present")
    };
    let k = values.len();
    let mut o = vec![vec![0.0f64; k]; k];
    for u in &pairable {
        let m = u.len() as f64;
        for (a, va) in u.iter().enumerate() {
            for (b, vb) in u.iter().enumerate() {
                if a != b {
                    o[idx(*va)][idx(*vb)] += 1.0 / (m - 1.0);
                }
            }
        }
    }
    let nc: Vec<f64> = o.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = nc.iter().sum();
    let delta = |c: usize, d: usize| -> f64 {
        match metric {
            AlphaMetric::Nominal => f64::from(u8::from(c != d)),
            AlphaMetric::Interval => (values[c] - values[d]).powi(2),
            AlphaMetric::Ordinal => {
                let (lo, hi) = if c <= d { (c, d) } else { (d, c) };
                let s: f64 = nc[lo..=hi].iter().sum::<f64>() - (nc[c] + nc[d]) / 2.0;
                s * s
            }
        }
    };
    let mut d_o = 0.0;
    let mut d_e = 0.0;
    for c in 0..k {
        for d in 0..k {
            let dl = delta(c, d);
            d_o += o[c][d] * dl;
            d_e += nc[c] * nc[d] * dl;
        }
    }
    d_o /= n;
    d_e /= n * (n - 1.0);
    if d_e == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - d_o / d_e)
}

fn units_of<'a>(ratings: impl Iterator<Item = &'a Rating>) -> Vec<Vec<f64>> {
    let mut by_hit: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in ratings {
        by_hit
            .entry(r.hit_id.as_str())
            .or_default()
            .push(f64::from(r.value));
    }
    by_hit.into_values().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub hit_id: String,
    pub source: LabelSource,
    pub n_ratings: usize,
    pub aggregate: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionComparison {
    pub scope: String,
    pub fewsoc_precision: f64,
    pub fewsoc_n: usize,
    pub lc_precision: f64,
    pub lc_n: usize,
    pub test: ZTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub items: Vec<ItemScore>,
    pub comparisons: Vec<PrecisionComparison>,
    pub metric: AlphaMetric,
    /// Alpha overall and per subgroup; `None` when a group has no pairable values.
    pub alpha: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub threshold: f64,
    pub metric: AlphaMetric,
    pub high_accuracy: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            metric: AlphaMetric::Interval,
            high_accuracy: DEFAULT_HIGH_ACCURACY,
        }
    }
}

fn compare(scope: &str, few: &[bool], lc: &[bool]) -> Option<PrecisionComparison> {
    let pf = precision(few).ok()?;
    let pl = precision(lc).ok()?;
    let test = two_proportion_ztest(pf, few.len(), pl, lc.len()).expect("valid proportions");
    Some(PrecisionComparison {
        scope: scope.into(),
        fewsoc_precision: pf,
        fewsoc_n: few.len(),
        lc_precision: pl,
        lc_n: lc.len(),
        test,
    })
}

/// Scores every HIT, compares FewSOC and LC-SOC precision on the discordant
/// sets and on all items (concordant items count for both), and computes
/// alpha overall, per label source and among high-accuracy workers.
pub fn evaluate(
    ratings: &[Rating],
    accuracies: &BTreeMap<String, f64>,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    if ratings.is_empty() {
        return Err(EvalError::NoRatings);
    }
    let mut by_hit: BTreeMap<&str, Vec<&Rating>> = BTreeMap::new();
    for r in ratings {
        by_hit.entry(r.hit_id.as_str()).or_default().push(r);
    }
    let mut items = Vec::new();
    for (hit, rs) in &by_hit {
        let sources: BTreeSet<LabelSource> = rs.iter().map(|r| r.label_source).collect();
        if sources.len() > 1 {
            return Err(EvalError::Row {
                row: 0,
                message: format!("hit {hit} has ratings from several sources"),
            });
        }
        let agg = aggregate_rating(rs, accuracies)?;
        items.push(ItemScore {
            hit_id: hit.to_string(),
            source: rs[0].label_source,
            n_ratings: rs.len(),
            aggregate: agg,
            correct: binarize(agg, cfg.threshold),
        });
    }
    let pick = |s: LabelSource| -> Vec<bool> {
        items
            .iter()
            .filter(|i| i.source == s)
            .map(|i| i.correct)
            .collect()
    };
    let (few, lc, conc) = (
        pick(LabelSource::Fewsoc),
        pick(LabelSource::LcSoc),
        pick(LabelSource::Concordant),
    );
    let few_all: Vec<bool> = few.iter().chain(&conc).copied().collect();
    let lc_all: Vec<bool> = lc.iter().chain(&conc).copied().collect();
    let comparisons: Vec<PrecisionComparison> = [
        compare("discordant", &few, &lc),
        compare("all", &few_all, &lc_all),
    ]
    .into_iter()
    .flatten()
    .collect();

    let mut alpha = BTreeMap::new();
    let mut put = |name: String, units: Vec<Vec<f64>>| {
        alpha.insert(name, krippendorff_alpha(&units, cfg.metric).ok());
    };
    put("overall".into(), units_of(ratings.iter()));
    for s in [
        LabelSource::Concordant,
        LabelSource::LcSoc,
        LabelSource::Fewsoc,
    ] {
        put(
            format!("source={}", s.label()),
            units_of(ratings.iter().filter(|r| r.label_source == s)),
        );
    }
    put(
        format!("accuracy>={}", cfg.high_accuracy),
        units_of(ratings.iter().filter(|r| {
            accuracies
                .get(&r.worker_id)
                .is_some_and(|a| *a >= cfg.high_accuracy)
        })),
    );
    Ok(EvalReport {
        items,
        comparisons,
        metric: cfg.metric,
        alpha,
    })
}

impl EvalReport {
    pub fn items_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for i in &self.items {
            w.serialize(i).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Rated items: {}", self.items.len());
        for c in &self.comparisons {
            let _ = write!(
                s,
                "Precision ({}): FewSOC {:.4} (n={}) vs LC-SOC {:.4} (n={}); ",
                c.scope, c.fewsoc_precision, c.fewsoc_n, c.lc_precision, c.lc_n
            );
            match c.test {
                ZTest::Ok { z, p_value } => {
                    let _ = writeln!(s, "z = {z:.3}, p = {p_value:.3e}");
                }
                ZTest::Degenerate => {
                    let _ = writeln!(s, "z undefined (pooled proportion at 0 or 1)");
                }
            }
        }
        let metric = match self.metric {
            AlphaMetric::Nominal => "nominal",
            AlphaMetric::Interval => "interval",
            AlphaMetric::Ordinal => "ordinal",
        };
        for (k, v) in &self.alpha {
            match v {
                Some(a) => {
                    let _ = writeln!(s, "Krippendorff alpha ({metric}, {k}): {a:.4}");
                }
                None => {
                    let _ = writeln!(s, "Krippendorff alpha ({metric}, {k}): no pairable values");
                }
            }
        }
        let (pf, pl, z) = PUBLISHED_COMPARISON;
        let _ = writeln!(
            s,
            "Published comparison: FewSOC {pf} vs LC-SOC {pl}, z = {z}"
        );
        s
    }
}

/// A job shown to crowd workers with one candidate code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitInput {
    pub hit_id: String,
    pub source: LabelSource,
    pub title: String,
    pub company: String,
    pub soc_code: SocCode,
    pub soc_title: String,
    pub description: String,
    pub sample_titles: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelledJob {
    pub title: String,
    pub company: String,
    pub lc_code: SocCode,
    pub fewsoc_code: SocCode,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HitSets {
    pub concordant: Vec<HitInput>,
    pub discordant_lc: Vec<HitInput>,
    pub discordant_fewsoc: Vec<HitInput>,
}

/// Splits jobs by whether the two labels agree at the 8-digit level. Each
/// discordant job yields one HIT per label.
pub fn build_hit_sets(jobs: &[LabelledJob], tax: &Taxonomy) -> HitSets {
    let hit = |prefix: char, n: usize, source: LabelSource, j: &LabelledJob, code: &SocCode| {
        let entry = tax.get(code);
        HitInput {
            hit_id: format!("{prefix}{n:06}"),
            source,
            title: j.title.clone(),
            company: j.company.clone(),
            soc_code: code.clone(),
            soc_title: entry.map(|e| e.title.clone()).unwrap_or_default(),
            description: entry
                .and_then(|e| e.description.clone())
                .unwrap_or_default(),
            sample_titles: entry
                .map(|e| e.sample_titles.join("; "))
                .unwrap_or_default(),
        }
    };
    let mut sets = HitSets::default();
    for j in jobs {
        if j.lc_code == j.fewsoc_code {
            let n = sets.concordant.len() + 1;
            sets.concordant
                .push(hit('C', n, LabelSource::Concordant, j, &j.fewsoc_code));
        } else {
            let n = sets.discordant_lc.len() + 1;
            sets.discordant_lc
                .push(hit('L', n, LabelSource::LcSoc, j, &j.lc_code));
            sets.discordant_fewsoc
                .push(hit('F', n, LabelSource::Fewsoc, j, &j.fewsoc_code));
        }
    }
    sets
}
