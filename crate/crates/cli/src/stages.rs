//! Pipeline stages. Each reads the artifacts of the stage before it from the
//! output directory and writes its own, plus a manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::{BufReader, Write};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};
use socpath_core::analysis::{descriptives, run_selected, EncodeOptions, ModelSpec};
use socpath_core::crowdeval::{self, build_hit_sets, LabelledJob};
use socpath_core::enrichment::{
    enrich, load_wage_rows_path, standardize_wage_socs, EnrichConfig, EnrichedRecord,
    EnrichmentTables, GdpDecileTable,
};
use socpath_core::fewsoc::{
    resolution_counts, Classifier, ClassifierConfig, FewShotExampleSet, JobOutcome,
};
use socpath_core::llm::build_backend;
use socpath_core::profiles::{
    filter_profiles, hash_partition, parse_profiles, JobKey, Profile, TitleFlags,
};
use socpath_core::taxonomy::{CrosswalkTable, Delimited, Taxonomy};
use socpath_core::trajectory::{
    build_record, TrajectoryConfig, TrajectoryOutcome, TrajectoryRecord,
};

use crate::artifact::{read_jsonl, Artifacts};
use crate::config::PipelineConfig;
use crate::error::{Failure, ResultExt, StageResult};

pub const STAGES: [&str; 7] = [
    "partition",
    "filter",
    "classify",
    "trajectories",
    "enrich",
    "analyze",
    "eval",
];

pub const PARTITIONS: &str = "partitions.csv";
pub const PARSE_ERRORS: &str = "parse_errors.csv";
pub const FILTERED: &str = "filtered.jsonl";
pub const FILTER_LEDGER: &str = "filter_ledger.csv";
pub const CHECKPOINT: &str = "classify.checkpoint";
pub const CLASSIFICATIONS: &str = "classifications.jsonl";
pub const TRAJECTORIES: &str = "trajectories.jsonl";
pub const TRAJECTORY_LEDGER: &str = "trajectory_ledger.csv";
pub const ENRICHED: &str = "enriched.csv";
pub const ENRICH_LEDGER: &str = "enrich_ledger.csv";
pub const MODEL_TABLE: &str = "model_table.txt";
pub const REPORT: &str = "report.txt";

pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub out: Artifacts,
    pub resume: bool,
}

struct Manifest {
    stage: &'static str,
    started: Instant,
    entries: Vec<(String, String)>,
}

impl Manifest {
    fn new(stage: &'static str) -> Self {
        tracing::info!(stage, "starting");
        Self {
            stage,
            started: Instant::now(),
            entries: Vec::new(),
        }
    }

    fn put(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    fn finish(mut self, p: &Pipeline) -> StageResult<()> {
        self.put("seed", p.cfg.seed);
        self.put("elapsed_ms", self.started.elapsed().as_millis());
        p.out.write_manifest(self.stage, &self.entries)?;
        tracing::info!(
            stage = self.stage,
            elapsed_ms = self.started.elapsed().as_millis() as u64,
            "done"
        );
        Ok(())
    }
}

#[derive(Serialize)]
struct PartitionRow<'a> {
    profile_id: &'a str,
    partition: usize,
}

#[derive(Serialize)]
struct ParseErrorRow {
    line: usize,
    kind: &'static str,
    profile_id: String,
    detail: String,
}

#[derive(Serialize, Deserialize)]
struct Checkpointed {
    index: usize,
    outcome: JobOutcome,
}

#[derive(Serialize)]
struct TrajectoryLedgerRow {
    profile_id: String,
    source: &'static str,
    record_index: Option<usize>,
    criterion: Option<u8>,
    detail: String,
}

#[derive(Serialize)]
struct EnrichLedgerRow {
    profile_id: String,
    reason: String,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, resume: bool) -> StageResult<Self> {
        let out = Artifacts::new(cfg.paths.output_dir.clone(), cfg.hash())?;
        Ok(Self { cfg, out, resume })
    }

    pub fn run(&self, stage: &str) -> StageResult<()> {
        match stage {
            "partition" => self.partition(),
            "filter" => self.filter(),
            "classify" => self.classify(),
            "trajectories" => self.trajectories(),
            "enrich" => self.enrich(),
            "analyze" => self.analyze(),
            "eval" => self.eval(),
            "all" => STAGES.iter().try_for_each(|s| self.run(s)),
            other => Err(Failure::Config(anyhow!("unknown stage {other:?}"))),
        }
    }

    fn read_profiles(&self) -> StageResult<socpath_core::profiles::ParseReport> {
        let path = &self.cfg.paths.profiles;
        let f = fs::File::open(path)
            .with_context(|| format!("opening {}", path.display()))
            .data()?;
        parse_profiles(BufReader::new(f))
            .with_context(|| format!("reading {}", path.display()))
            .data()
    }

    fn taxonomy(&self) -> StageResult<Taxonomy> {
        let path = &self.cfg.paths.taxonomy;
        Taxonomy::load_path(path, Delimited::default())
            .with_context(|| format!("loading {}", path.display()))
            .data()
    }

    fn crosswalks(&self) -> StageResult<Vec<CrosswalkTable>> {
        self.cfg
            .paths
            .crosswalks
            .iter()
            .map(|p| {
                CrosswalkTable::load_path(p, Delimited::default())
                    .with_context(|| format!("loading {}", p.display()))
                    .data()
            })
            .collect()
    }

    pub fn partition(&self) -> StageResult<()> {
        let mut m = Manifest::new("partition");
        let report = self.read_profiles()?;
        let n = self.cfg.partition.n_partitions;
        let rows: Vec<PartitionRow> = report
            .profiles
            .iter()
            .map(|p| {
                Ok(PartitionRow {
                    profile_id: &p.id,
                    partition: hash_partition(&p.id, n)
                        .map_err(|_| anyhow!("zero partitions"))
                        .config()?,
                })
            })
            .collect::<StageResult<_>>()?;
        let mut sizes = vec![0usize; n];
        for r in &rows {
            sizes[r.partition] += 1;
        }
        self.out.write_csv("partition", PARTITIONS, &rows)?;
        m.put("profiles", rows.len());
        m.put("parse_errors", report.errors.len());
        m.put("n_partitions", n);
        m.put(
            "nonempty_partitions",
            sizes.iter().filter(|s| **s > 0).count(),
        );
        m.put(
            "largest_partition",
            sizes.iter().max().copied().unwrap_or(0),
        );
        m.finish(self)
    }

    pub fn filter(&self) -> StageResult<()> {
        let mut m = Manifest::new("filter");
        let report = self.read_profiles()?;
        let mut errors: Vec<ParseErrorRow> = report
            .errors
            .iter()
            .map(|e| ParseErrorRow {
                line: e.line,
                kind: match e.kind {
                    socpath_core::profiles::LineErrorKind::Schema => "schema",
                    socpath_core::profiles::LineErrorKind::Date => "date",
                },
                profile_id: String::new(),
                detail: e.message.clone(),
            })
            .collect();
        errors.extend(report.violations.iter().map(|v| ParseErrorRow {
            line: v.line,
            kind: "record",
            profile_id: v.profile_id.clone(),
            detail: format!("job {}: {}", v.job_index, v.detail),
        }));
        for e in &report.errors {
            tracing::warn!(line = e.line, "skipping malformed profile: {}", e.message);
        }
        let outcome = filter_profiles(&report.profiles, &self.cfg.filter, TitleFlags::KeywordOnly);
        self.out.write_csv("filter", PARSE_ERRORS, &errors)?;
        self.out
            .write_jsonl("filter", FILTERED, &outcome.retained)?;
        self.out
            .write_csv("filter", FILTER_LEDGER, &outcome.ledger)?;
        m.put("input_profiles", report.profiles.len());
        m.put("parse_errors", report.errors.len());
        m.put("record_violations", report.violations.len());
        m.put("retained_profiles", outcome.retained.len());
        m.put(
            "retained_jobs",
            outcome.retained.iter().map(|p| p.jobs.len()).sum::<usize>(),
        );
        m.put("rejected_profiles", outcome.rejected_profile_count());
        m.put("ledger_entries", outcome.ledger.len());
        for (c, n) in outcome.rejected_profiles_by_criterion() {
            m.put(format!("rejected_profiles.criterion{c}"), n);
        }
        let mut by_criterion: BTreeMap<u8, usize> = BTreeMap::new();
        for r in &outcome.ledger {
            *by_criterion.entry(r.criterion).or_default() += 1;
        }
        for (c, n) in by_criterion {
            m.put(format!("ledger.criterion{c}"), n);
        }
        m.finish(self)
    }

    fn filtered(&self) -> StageResult<Vec<Profile>> {
        self.out.read_jsonl(FILTERED, "filter")
    }

    pub fn classify(&self) -> StageResult<()> {
        let mut m = Manifest::new("classify");
        let profiles = self.filtered()?;
        let jobs = unique_jobs(&profiles);
        let tax = self.taxonomy()?;
        let crosswalks = self.crosswalks()?;
        let shots = FewShotExampleSet::load_path(&self.cfg.paths.shots, self.cfg.classify.shots_k)
            .with_context(|| format!("loading {}", self.cfg.paths.shots.display()))
            .data()?;
        let backend = build_backend(&self.cfg.backend).backend()?;

        let mut done: Vec<Option<JobOutcome>> = vec![None; jobs.len()];
        let ckpt_path = self.out.path(CHECKPOINT);
        let mut resumed = 0usize;
        if self.resume && ckpt_path.is_file() {
            match crate::artifact::read_header(&ckpt_path)? {
                Some((_, hash)) if hash == self.out.hash => {}
                _ => {
                    return Err(Failure::Config(anyhow!(
                        "checkpoint {} was written under a different configuration",
                        ckpt_path.display()
                    )))
                }
            }
            for c in read_jsonl::<Checkpointed>(&ckpt_path)? {
                let slot = done
                    .get_mut(c.index)
                    .ok_or_else(|| anyhow!("checkpoint index {} out of range", c.index))
                    .data()?;
                if jobs[c.index] != c.outcome.key() {
                    return Err(Failure::Data(anyhow!(
                        "checkpoint entry {} does not match the job list",
                        c.index
                    )));
                }
                if slot.replace(c.outcome).is_none() {
                    resumed += 1;
                }
            }
            tracing::info!(resumed, "resuming from checkpoint");
        } else {
            fs::write(
                &ckpt_path,
                crate::artifact::header("classify", &self.out.hash),
            )
            .with_context(|| format!("writing {}", ckpt_path.display()))
            .data()?;
        }

        let remaining: Vec<usize> = (0..jobs.len()).filter(|i| done[*i].is_none()).collect();
        let todo: Vec<JobKey> = remaining.iter().map(|i| jobs[*i].clone()).collect();
        let config = ClassifierConfig {
            batch_size: self.cfg.classify.batch_size,
            reask_malformed: self.cfg.classify.reask_malformed,
            ..ClassifierConfig::default()
        };
        let size = config.batch_size.clamp(1, config.max_batch.max(1));
        let classifier = Classifier::new(&backend, &shots, &tax, &crosswalks, config);
        let ckpt = Mutex::new(
            OpenOptions::new()
                .append(true)
                .open(&ckpt_path)
                .with_context(|| format!("opening {}", ckpt_path.display()))
                .data()?,
        );
        let write_errors = Mutex::new(Vec::<String>::new());
        let results = classifier.classify_jobs(&todo, self.cfg.classify.workers, |b, _, r| {
            let Ok(outcomes) = r else { return };
            let mut text = String::new();
            for (k, o) in outcomes.iter().enumerate() {
                let line = Checkpointed {
                    index: remaining[b * size + k],
                    outcome: o.clone(),
                };
                text.push_str(&serde_json::to_string(&line).expect("outcome serializes"));
                text.push('\n');
            }
            let mut f = ckpt.lock().unwrap_or_else(|e| e.into_inner());
            if let Err(e) = f.write_all(text.as_bytes()).and_then(|_| f.flush()) {
                write_errors
                    .lock()
                    .unwrap_or_else(|e| e.into_inner())
                    .push(e.to_string());
            }
        });
        if let Some(e) = write_errors
            .into_inner()
            .unwrap_or_else(|e| e.into_inner())
            .first()
        {
            return Err(Failure::Data(anyhow!("writing checkpoint: {e}")));
        }

        let mut failures: Vec<String> = Vec::new();
        for (b, r) in results {
            let idx = &remaining[b * size..((b + 1) * size).min(remaining.len())];
            match r {
                Ok(outcomes) => {
                    for (i, o) in idx.iter().zip(outcomes) {
                        done[*i] = Some(o);
                    }
                }
                Err(e) => {
                    tracing::error!(batch = b, "batch failed: {e}");
                    failures.push(e.to_string());
                    for i in idx {
                        let JobKey { title, company } = jobs[*i].clone();
                        done[*i] = Some(JobOutcome::Unclassified {
                            title,
                            company,
                            reason: e.to_string(),
                        });
                    }
                }
            }
        }
        let outcomes: Vec<JobOutcome> = done
            .into_iter()
            .map(|o| o.expect("every job has an outcome"))
            .collect();
        self.out
            .write_jsonl("classify", CLASSIFICATIONS, &outcomes)?;

        let usage = classifier.usage.snapshot();
        m.put("jobs", jobs.len());
        m.put("resumed_from_checkpoint", resumed);
        m.put("batch_size", size);
        for (path, n) in resolution_counts(&outcomes) {
            m.put(format!("resolution.{}", path.label()), n);
        }
        m.put(
            "students",
            outcomes
                .iter()
                .filter(|o| matches!(o, JobOutcome::Student { .. }))
                .count(),
        );
        m.put(
            "unclassified",
            outcomes
                .iter()
                .filter(|o| matches!(o, JobOutcome::Unclassified { .. }))
                .count(),
        );
        m.put("failed_batches", failures.len());
        m.put("backend_calls", usage.len());
        m.put(
            "prompt_chars",
            usage.iter().map(|u| u.prompt_chars).sum::<usize>(),
        );
        m.put(
            "response_chars",
            usage.iter().map(|u| u.response_chars).sum::<usize>(),
        );
        m.finish(self)?;
        if !failures.is_empty() {
            return Err(Failure::Backend(anyhow!(
                "{} batch(es) failed; rerun `classify --resume` to retry them. First error: {}",
                failures.len(),
                failures[0]
            )));
        }
        fs::remove_file(&ckpt_path)
            .with_context(|| format!("removing {}", ckpt_path.display()))
            .data()?;
        Ok(())
    }

    fn classifications(&self) -> StageResult<Vec<JobOutcome>> {
        self.out.read_jsonl(CLASSIFICATIONS, "classify")
    }

    pub fn trajectories(&self) -> StageResult<()> {
        let mut m = Manifest::new("trajectories");
        let profiles = self.filtered()?;
        let outcomes = self.classifications()?;
        let flags: BTreeMap<JobKey, _> = outcomes
            .iter()
            .filter_map(|o| Some((o.key(), o.flags()?)))
            .collect();
        let codes: BTreeMap<JobKey, _> = outcomes
            .iter()
            .filter_map(|o| Some((o.key(), o.final_code()?.clone())))
            .collect();
        let filtered = filter_profiles(&profiles, &self.cfg.filter, TitleFlags::Classifier(&flags));
        let mut ledger: Vec<TrajectoryLedgerRow> = filtered
            .ledger
            .iter()
            .map(|r| TrajectoryLedgerRow {
                profile_id: r.profile_id.clone(),
                source: "filter",
                record_index: r.record_index,
                criterion: Some(r.criterion),
                detail: r.detail.clone(),
            })
            .collect();
        let t = &self.cfg.trajectory;
        let tcfg = TrajectoryConfig {
            snapshot: t.snapshot,
            window_years: t.window_years,
            mobility_cap: t.mobility_cap,
        };
        let mut records: Vec<TrajectoryRecord> = Vec::new();
        let (mut short, mut invalid) = (0usize, 0usize);
        for p in &filtered.retained {
            let mut jobs = p.jobs.clone();
            for j in &mut jobs {
                j.final_soc = codes.get(&j.key()).cloned();
            }
            match build_record(&p.id, &jobs, &tcfg) {
                TrajectoryOutcome::Built(r) => records.push(r),
                TrajectoryOutcome::ShortCareer {
                    profile_id,
                    span_years,
                } => {
                    short += 1;
                    ledger.push(TrajectoryLedgerRow {
                        profile_id,
                        source: "short_career",
                        record_index: None,
                        criterion: None,
                        detail: format!("span {span_years:.2} years"),
                    });
                }
                TrajectoryOutcome::Invalid { profile_id, reason } => {
                    invalid += 1;
                    ledger.push(TrajectoryLedgerRow {
                        profile_id,
                        source: "invalid",
                        record_index: None,
                        criterion: None,
                        detail: reason,
                    });
                }
            }
        }
        self.out
            .write_jsonl("trajectories", TRAJECTORIES, &records)?;
        self.out
            .write_csv("trajectories", TRAJECTORY_LEDGER, &ledger)?;
        m.put("input_profiles", profiles.len());
        m.put(
            "rejected_by_classifier_flags",
            filtered.rejected_profile_count(),
        );
        m.put("trajectories", records.len());
        m.put("short_career", short);
        m.put("invalid", invalid);
        m.put(
            "mean_retention",
            format!("{:.4}", mean(records.iter().map(|r| r.retention))),
        );
        m.finish(self)
    }

    pub fn enrich(&self) -> StageResult<()> {
        let mut m = Manifest::new("enrich");
        let trajectories: Vec<TrajectoryRecord> =
            self.out.read_jsonl(TRAJECTORIES, "trajectories")?;
        let profiles: BTreeMap<String, Profile> = self
            .filtered()?
            .into_iter()
            .map(|p| (p.id.clone(), p))
            .collect();
        let tax = self.taxonomy()?;
        let crosswalks = self.crosswalks()?;
        let mut rows = Vec::new();
        for p in &self.cfg.paths.wages {
            rows.extend(
                load_wage_rows_path(p)
                    .with_context(|| format!("loading {}", p.display()))
                    .data()?,
            );
        }
        let (y0, y1) = self.cfg.enrich.years;
        let (wages, report) = standardize_wage_socs(&rows, &crosswalks, &tax, y0..=y1);
        let wages = wages.interpolated(y0..=y1);
        let gdp_path = &self.cfg.paths.gdp;
        let gdp = GdpDecileTable::load_path(gdp_path)
            .with_context(|| format!("loading {}", gdp_path.display()))
            .data()?;
        let tables = EnrichmentTables {
            wages: &wages,
            gdp: &gdp,
        };
        let ecfg = EnrichConfig {
            years: self.cfg.enrich.years,
            window_years: self.cfg.trajectory.window_years,
            cohort: self.cfg.enrich.cohort.clone(),
        };
        let mut enriched: Vec<EnrichedRecord> = Vec::new();
        let mut ledger: Vec<EnrichLedgerRow> = Vec::new();
        for t in &trajectories {
            let p = profiles
                .get(&t.profile_id)
                .ok_or_else(|| anyhow!("trajectory {} has no filtered profile", t.profile_id))
                .data()?;
            match enrich(p, t, &tables, &ecfg) {
                Ok(r) => enriched.push(r),
                Err(e) => ledger.push(EnrichLedgerRow {
                    profile_id: t.profile_id.clone(),
                    reason: e.to_string(),
                }),
            }
        }
        self.out.write_csv("enrich", ENRICHED, &enriched)?;
        self.out.write_csv("enrich", ENRICH_LEDGER, &ledger)?;
        m.put("trajectories", trajectories.len());
        m.put("enriched", enriched.len());
        m.put("dropped", ledger.len());
        m.put("wage_rows", rows.len());
        m.put("wage.kept_direct", report.kept_direct);
        m.put("wage.remapped", report.remapped);
        m.put("wage.dropped_out_of_range", report.dropped_out_of_range);
        m.put("wage.dropped_unmapped", report.dropped_unmapped);
        m.put(
            "wage.dropped_unknown_version",
            report.dropped_unknown_version,
        );
        m.put("wage.cells_after_interpolation", wages.len());
        m.put("upward", enriched.iter().filter(|r| r.upward == 1).count());
        m.finish(self)
    }

    pub fn analyze(&self) -> StageResult<()> {
        let mut m = Manifest::new("analyze");
        let records: Vec<EnrichedRecord> = self.out.read_csv(ENRICHED, "enrich")?;
        let trajectories: Vec<TrajectoryRecord> =
            self.out.read_jsonl(TRAJECTORIES, "trajectories")?;
        if records.is_empty() {
            return Err(Failure::Data(anyhow!("no enriched records to analyze")));
        }
        let desc = descriptives(&records, &trajectories, self.cfg.trajectory.window_years);
        let specs: Vec<ModelSpec> = self
            .cfg
            .analysis
            .models
            .iter()
            .map(|s| match s.as_str() {
                "m1" => Ok(ModelSpec::m1()),
                "m2" => Ok(ModelSpec::m2()),
                "m3" => Ok(ModelSpec::m3()),
                "m4" => Ok(ModelSpec::m4()),
                other => Err(Failure::Config(anyhow!("unknown model {other:?}"))),
            })
            .collect::<StageResult<_>>()?;
        let opts = EncodeOptions {
            rare_min: self.cfg.analysis.rare_min,
            ..EncodeOptions::default()
        };
        let table = run_selected(&records, &opts, &specs)
            .context("fitting models")
            .data()?;

        self.out
            .write_text("analyze", "demographics.csv", &desc.demographics_csv())?;
        self.out
            .write_text("analyze", "job_changes.csv", &desc.job_change_csv())?;
        self.out
            .write_text("analyze", "occupations.csv", &desc.occupations_csv())?;
        self.out.write_text(
            "analyze",
            "transition_matrix.csv",
            &desc.transitions.to_csv(),
        )?;
        let rendered = table.render();
        self.out.write_text("analyze", MODEL_TABLE, &rendered)?;
        self.out
            .write_text("analyze", "coefficients.csv", &table.to_csv())?;
        let mut report = desc.render();
        report.push_str("\nUpward mobility models (logit coefficients)\n");
        report.push_str(&rendered);
        self.out.write_text("analyze", REPORT, &report)?;

        m.put("records", records.len());
        m.put("upward_percent", format!("{:.2}", desc.upward_percent));
        m.put(
            "transition_off_diagonal",
            desc.transitions.off_diagonal_total(),
        );
        m.put("models", table.columns.len());
        m.put("excluded_from_models", table.excluded.len());
        for c in &table.columns {
            m.put(format!("n.{}", c.label), c.fit.n);
        }
        m.finish(self)
    }

    pub fn eval(&self) -> StageResult<()> {
        let mut m = Manifest::new("eval");
        let profiles = self.filtered()?;
        let outcomes = self.classifications()?;
        let tax = self.taxonomy()?;
        let codes: BTreeMap<JobKey, _> = outcomes
            .iter()
            .filter_map(|o| Some((o.key(), o.final_code()?.clone())))
            .collect();
        let mut seen = BTreeSet::new();
        let mut labelled = Vec::new();
        let mut no_lc = 0usize;
        for j in profiles.iter().flat_map(|p| &p.jobs) {
            let key = j.key();
            if !seen.insert(key.clone()) {
                continue;
            }
            let Some(fewsoc_code) = codes.get(&key) else {
                continue;
            };
            match &j.soc {
                Some(lc) if tax.is_valid(lc) => labelled.push(LabelledJob {
                    title: key.title,
                    company: key.company,
                    lc_code: lc.clone(),
                    fewsoc_code: fewsoc_code.clone(),
                }),
                _ => no_lc += 1,
            }
        }
        let sets = build_hit_sets(&labelled, &tax);
        self.out
            .write_csv("eval", "hits_concordant.csv", &sets.concordant)?;
        self.out
            .write_csv("eval", "hits_discordant_lc.csv", &sets.discordant_lc)?;
        self.out.write_csv(
            "eval",
            "hits_discordant_fewsoc.csv",
            &sets.discordant_fewsoc,
        )?;
        m.put("labelled_jobs", labelled.len());
        m.put("jobs_without_valid_lc_code", no_lc);
        m.put("hits.concordant", sets.concordant.len());
        m.put("hits.discordant", sets.discordant_lc.len());

        if let (Some(rp), Some(ap)) = (&self.cfg.paths.ratings, &self.cfg.paths.accuracies) {
            let open = |p: &std::path::Path| {
                fs::File::open(p)
                    .with_context(|| format!("opening {}", p.display()))
                    .data()
            };
            let ratings = crowdeval::load_ratings(open(rp)?)
                .with_context(|| format!("loading {}", rp.display()))
                .data()?;
            let acc = crowdeval::load_accuracies(open(ap)?)
                .with_context(|| format!("loading {}", ap.display()))
                .data()?;
            let report = crowdeval::evaluate(&ratings, &acc, &self.cfg.eval)
                .context("evaluating ratings")
                .data()?;
            self.out
                .write_text("eval", "eval_items.csv", &report.items_csv())?;
            self.out
                .write_text("eval", "eval_summary.txt", &report.summary())?;
            m.put("ratings", ratings.len());
            m.put("rated_items", report.items.len());
            for c in &report.comparisons {
                m.put(
                    format!("precision.{}.fewsoc", c.scope),
                    format!("{:.4}", c.fewsoc_precision),
                );
                m.put(
                    format!("precision.{}.lc", c.scope),
                    format!("{:.4}", c.lc_precision),
                );
            }
            for (k, a) in &report.alpha {
                m.put(
                    format!("alpha.{k}"),
                    a.map_or_else(|| "NA".to_string(), |a| format!("{a:.4}")),
                );
            }
        }
        m.finish(self)
    }
}

/// Distinct (title, company) pairs in order of first appearance.
pub fn unique_jobs(profiles: &[Profile]) -> Vec<JobKey> {
    let mut seen = BTreeSet::new();
    profiles
        .iter()
        .flat_map(|p| &p.jobs)
        .map(|j| j.key())
        .filter(|k| seen.insert(k.clone()))
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}
