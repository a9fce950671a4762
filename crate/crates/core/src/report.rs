//! Plain-text renderings of engine results for terminals and files.

use std::fmt::Write;

use crate::api::views::FactorReport;
use crate::effectiveness::{EffectivenessModel, FactorEntry, FitDiagnostics, FitWarning};
use crate::factors::{FactorId, Technique};
use crate::recommend::RecommendationResult;

fn num(x: Option<f64>, digits: usize) -> String {
    match x {
        Some(v) => format!("{v:.digits$}"),
        None => "n/a".to_string(),
    }
}

/// Factor report as Markdown, one table per technique.
pub fn factor_report_markdown(r: &FactorReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Factor report: {}", r.speech_id);
    let _ = writeln!(out);
    let _ = writeln!(out, "- Span: {:.3} s to {:.3} s", r.start_s, r.end_s);
    let _ = writeln!(out, "- Model: {}", r.model_source);
    for t in Technique::ALL {
        let _ = writeln!(out);
        let _ = writeln!(out, "## {}", t.label());
        let _ = writeln!(out);
        let _ = writeln!(out, "| Feature | Statistic | Value | Coverage | Expected level | Effectiveness |");
        let _ = writeln!(out, "|---|---|---:|---:|---:|---|");
        for row in r.effectiveness.iter().filter(|row| row.technique == t) {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {:.3} | {} | {} |",
                row.factor.feature(),
                row.statistic.label(),
                num(row.value, 6),
                row.coverage,
                num(row.score.map(|s| s.expected_class), 3),
                row.label,
            );
        }
    }
    out
}

/// Per-factor slope, p-value and significance grouped by technique.
/// Significant factors carry a `*`.
pub fn model_table(model: &EffectivenessModel, diagnostics: &[(FactorId, Option<FitDiagnostics>)]) -> String {
    let n_of = |f: FactorId| diagnostics.iter().find(|(g, _)| *g == f).and_then(|(_, d)| d.map(|d| d.n));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<18} {:<21} {:<11} {:>5} {:>13} {:>10}  Sig",
        "Technique", "Feature", "Statistic", "n", "w", "p"
    );
    for t in Technique::ALL {
        for (i, f) in t.factors().enumerate() {
            let tech = if i == 0 { t.label() } else { "" };
            let head = format!("{:<18} {:<21} {:<11}", tech, f.feature(), f.statistic().label());
            match model.entry(f) {
                FactorEntry::Fitted(fc) => {
                    let c = fc.coefficients;
                    let n = n_of(f).or(fc.n).map_or("-".to_string(), |n| n.to_string());
                    let sig = if c.significant { "*" } else { "" };
                    let line = format!("{head} {n:>5} {:>13.6} {:>10.4}  {sig}", c.w, c.p_value);
                    let _ = writeln!(out, "{}", line.trim_end());
                }
                FactorEntry::Unfitted { reason } => {
                    let _ = writeln!(out, "{head} {:>5} {:>13} {:>10}  unfitted: {reason}", "-", "-", "-");
                }
            }
        }
    }
    out
}

/// Machine code and message of a fit warning.
pub fn fit_warning(w: &FitWarning) -> (&'static str, String) {
    match w {
        FitWarning::SmallCorpus { speeches, recommended } => (
            "SmallCorpus",
            format!("{speeches} speeches; at least {recommended} are recommended"),
        ),
        FitWarning::FewLevels { levels, recommended } => (
            "FewLevels",
            format!("{levels} distinct levels; at least {recommended} are recommended"),
        ),
        FitWarning::Unfitted { factor, reason } => ("Unfitted", format!("{factor}: {reason}")),
        FitWarning::NotConverged { factor } => ("NotConverged", format!("{factor}: iteration limit reached")),
    }
}

/// Ranked candidates with their distances.
pub fn recommendation_table(r: &RecommendationResult) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>4}  {:<24} {:>8} {:>10} {:>10} {:>12}",
        "Rank", "Speech", "Sentence", "Start (s)", "End (s)", "Distance"
    );
    for (i, c) in r.candidates.iter().enumerate() {
        let sentence = c.sentence_index.map_or("-".to_string(), |s| s.to_string());
        let _ = writeln!(
            out,
            "{:>4}  {:<24} {:>8} {:>10.3} {:>10.3} {:>12.6}",
            i + 1,
            c.speech_id,
            sentence,
            c.start_s,
            c.end_s,
            c.distance
        );
    }
    let _ = writeln!(
        out,
        "{} of {} candidates shown; {} skipped for undefined factors",
        r.candidates.len(),
        r.evaluated_candidates,
        r.skipped_candidates
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_table_stars_the_significant_rows() {
        let model = EffectivenessModel::reference();
        let table = model_table(&model, &[]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 1 + FactorId::ALL.len());
        let starred: Vec<FactorId> = FactorId::ALL
            .into_iter()
            .zip(&lines[1..])
            .filter(|(_, l)| l.ends_with('*'))
            .map(|(f, _)| f)
            .collect();
        assert_eq!(starred, model.significant_factors());
        for t in Technique::ALL {
            assert_eq!(lines.iter().filter(|l| l.starts_with(t.label())).count(), 1);
        }
    }
}
