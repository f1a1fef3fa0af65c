//! Fits the four models and lays the coefficients out side by side.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::logit::{fit_logistic_matrix, significance_marker, FitError, FitResult};
use super::{
    encode_design, model_sample, ColumnKind, DesignMatrix, EncodeError, EncodeOptions, ModelId,
    ModelSpec,
};
use crate::enrichment::EnrichedRecord;

/// Published Model 1 estimates on the full resume corpus, printed beside the
/// fitted table for orientation.
pub const PUBLISHED_MODEL1: [(&str, f64); 2] = [("Female", -0.153), ("Type-2 Change", 0.9506)];

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("{model}: {source}")]
    Encode { model: String, source: EncodeError },
    #[error("{model}: {source}")]
    Fit { model: String, source: FitError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelColumn {
    pub label: String,
    pub model: ModelId,
    pub stratum: Option<String>,
    pub fit: FitResult,
    /// Names of occupation and industry control columns.
    pub controls: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTable {
    pub columns: Vec<ModelColumn>,
    /// Records left out of every model.
    pub excluded: Vec<String>,
}

fn model_label(id: ModelId, stratum: Option<&str>) -> String {
    let n = match id {
        ModelId::M1Main => 1,
        ModelId::M2GenderXType => 2,
        ModelId::M3RaceXType => 3,
        ModelId::M4Stratified => 4,
    };
    match stratum {
        Some(s) => {
            let mut c = s.chars();
            let s: String = c
                .next()
                .map_or_else(String::new, |h| h.to_uppercase().chain(c).collect());
            format!("Model {n} {s}")
        }
        None => format!("Model {n}"),
    }
}

fn fit_design(d: &DesignMatrix, spec: &ModelSpec) -> Result<ModelColumn, AnalysisError> {
    let label = model_label(spec.id, d.stratum.as_deref());
    let fit = fit_logistic_matrix(&d.x, &d.y, &d.names()).map_err(|source| AnalysisError::Fit {
        model: label.clone(),
        source,
    })?;
    let controls = d
        .columns
        .iter()
        .filter(|c| matches!(&c.kind, ColumnKind::Dummy { factor, .. } if spec.controls.contains(factor)))
        .map(|c| c.name.clone())
        .collect();
    Ok(ModelColumn {
        label,
        model: spec.id,
        stratum: d.stratum.clone(),
        fit,
        controls,
    })
}

/// Fits Models 1 to 4 (Model 4 once per gender). Records with an unmodelled
/// generation or education level are left out of all models.
pub fn run_models(
    records: &[EnrichedRecord],
    opts: &EncodeOptions,
) -> Result<ModelTable, AnalysisError> {
    run_selected(records, opts, &ModelSpec::all())
}

/// Fits only the given specs, in the given order.
pub fn run_selected(
    records: &[EnrichedRecord],
    opts: &EncodeOptions,
    specs: &[ModelSpec],
) -> Result<ModelTable, AnalysisError> {
    let (sample, excluded) = model_sample(records);
    if !excluded.is_empty() {
        tracing::info!(
            excluded = excluded.len(),
            "records outside the modelled cohorts"
        );
    }
    let results: Vec<Result<Vec<ModelColumn>, AnalysisError>> = std::thread::scope(|s| {
        let handles: Vec<_> = specs
            .iter()
            .map(|spec| {
                let sample = &sample;
                s.spawn(move || {
                    let label = model_label(spec.id, None);
                    let designs = encode_design(sample, spec, opts).map_err(|source| {
                        AnalysisError::Encode {
                            model: label,
                            source,
                        }
                    })?;
                    designs.iter().map(|d| fit_design(d, spec)).collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("model thread panicked"))
            .collect()
    });
    let mut columns = Vec::new();
    for r in results {
        columns.extend(r?);
    }
    Ok(ModelTable { columns, excluded })
}

impl ModelTable {
    /// Main-effect and interaction rows in first-appearance order.
    pub fn key_rows(&self) -> Vec<String> {
        let mut rows: Vec<String> = Vec::new();
        for c in &self.columns {
            for coef in &c.fit.coefficients {
                if !c.controls.contains(&coef.name) && !rows.contains(&coef.name) {
                    rows.push(coef.name.clone());
                }
            }
        }
        // interactions after all main effects
        let (main, inter): (Vec<String>, Vec<String>) =
            rows.into_iter().partition(|r| !r.contains(" x "));
        main.into_iter().chain(inter).collect()
    }

    pub fn control_rows(&self) -> Vec<String> {
        let mut rows: Vec<String> = Vec::new();
        for c in &self.columns {
            for name in &c.controls {
                if !rows.contains(name) {
                    rows.push(name.clone());
                }
            }
        }
        rows.sort();
        rows
    }

    pub fn column(&self, label: &str) -> Option<&ModelColumn> {
        self.columns.iter().find(|c| c.label == label)
    }

    fn cell(&self, col: &ModelColumn, row: &str) -> String {
        col.fit.get(row).map_or_else(
            || "-".to_string(),
            |c| format!("{:.4}{}", c.estimate, significance_marker(c.p_value)),
        )
    }

    /// Fixed-width table with significance markers.
    pub fn render(&self) -> String {
        let rows = self.key_rows();
        let controls = self.control_rows();
        let width = rows
            .iter()
            .chain(&controls)
            .map(String::len)
            .max()
            .unwrap_or(8)
            .max(8)
            + 2;
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "Variable");
        for c in &self.columns {
            let _ = write!(out, "{:>16}", c.label);
        }
        out.push('\n');
        let emit = |out: &mut String, r: &str| {
            let _ = write!(out, "{:<width$}", r);
            for c in &self.columns {
                let _ = write!(out, "{:>16}", self.cell(c, r));
            }
            out.push('\n');
        };
        for r in &rows {
            emit(&mut out, r);
        }
        if !controls.is_empty() {
            out.push_str("Controls\n");
            for r in &controls {
                emit(&mut out, r);
            }
        }
        let _ = write!(out, "{:<width$}", "N");
        for c in &self.columns {
            let _ = write!(out, "{:>16}", c.fit.n);
        }
        out.push('\n');
        out.push_str(
            "Reference categories: Male (Gender), White (Race), Bachelor's degree (Educational Attainment), \
Generation X (Social Generation), Management (Occupation), and Agriculture, Forestry, Fishing, and Hunting (Industry).\n",
        );
        out.push_str("† p<0.05, ‡ p<0.01, * p<0.001.\n");
        for c in self.columns.iter().filter(|c| !c.fit.separation.is_empty()) {
            let _ = writeln!(
                out,
                "Separation in {}: {}.",
                c.label,
                c.fit.separation.join(", ")
            );
        }
        out.push_str("Published Model 1 estimates:");
        for (name, v) in PUBLISHED_MODEL1 {
            let _ = write!(out, " {name} {v};");
        }
        out.push('\n');
        out
    }

    /// Long-format delimited table.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "model",
            "variable",
            "estimate",
            "std_error",
            "z",
            "p_value",
            "marker",
            "converged",
            "n",
        ])
        .expect("in-memory write");
        for c in &self.columns {
            for coef in &c.fit.coefficients {
                w.write_record([
                    c.label.as_str(),
                    coef.name.as_str(),
                    &coef.estimate.to_string(),
                    &coef.std_error.to_string(),
                    &coef.z.to_string(),
                    &coef.p_value.to_string(),
                    coef.marker(),
                    &c.fit.converged.to_string(),
                    &c.fit.n.to_string(),
                ])
                .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_support::random_records;
    use super::*;

    #[test]
    fn five_columns_with_strata_summing_to_n() {
        let recs = random_records(1500, 11);
        let t = run_models(&recs, &EncodeOptions::default()).unwrap();
        let labels: Vec<&str> = t.columns.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(
            labels,
            [
                "Model 1",
                "Model 2",
                "Model 3",
                "Model 4 Male",
                "Model 4 Female"
            ]
        );
        let m4: usize = t.columns[3..].iter().map(|c| c.fit.n).sum();
        assert_eq!(m4, recs.len());
        for c in &t.columns {
            assert!(c.fit.converged);
            assert!(c.fit.gradient_max_norm < 1e-6, "{}", c.label);
        }
        let rows = t.key_rows();
        assert_eq!(rows[0], "Intercept");
        assert!(rows.contains(&"Female x Type-1 Change".to_string()));
        assert!(!rows.iter().any(|r| r.starts_with("Occupation")));
        let text = t.render();
        assert!(text.contains("Model 4 Female"));
        let female_line = text.lines().find(|l| l.starts_with("Female ")).unwrap();
        assert!(female_line.trim_end().ends_with('-'));
        assert!(t.to_csv().starts_with("model,variable,estimate"));
    }
}
