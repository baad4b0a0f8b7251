//! Evaluation report files with a fixed flat shape, plus cross-mode
//! comparison: aggregate deltas, paired significance tests on per-story
//! metrics, and plain-text rendering.

use crate::eval::analysis::{PositionReport, TopNgrams, TransitionReport, TRANSITION_CLASSES};
use crate::eval::{EvalSummary, PerStoryEval};
use crate::generator::GenMode;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const REPORT_FORMAT: &str = "relist-report-v1";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot {action} {path}: {source}")]
    Io { action: &'static str, path: PathBuf, source: std::io::Error },
    #[error("bad report file {path}: {reason}")]
    BadFile { path: PathBuf, reason: String },
    #[error("reports cover different story sets: {a} vs {b} stories")]
    Misaligned { a: usize, b: usize },
}

/// One evaluation run, flattened for storage. Field names are the file
/// contract; they stay fixed across versions of the same format tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: String,
    pub mode: GenMode,
    pub stories: usize,

    pub ri_defined: bool,
    pub pct_exact: f64,
    pub pct_unspec: f64,
    pub pct_incorrect: f64,
    pub avg_rel: f64,

    pub p_cls_defined: bool,
    pub p_cls: f64,
    pub p_cls_majority: f64,
    pub p_cls_mix_squared: f64,
    pub p_cls_sentences: usize,

    pub bleu: f64,
    pub rouge1_f: f64,
    #[serde(rename = "rougeL_f")]
    pub rouge_l_f: f64,

    pub distinct1: Option<f64>,
    pub distinct2: Option<f64>,
    pub distinct3: Option<f64>,
    pub pooled_distinct1: Option<f64>,
    pub pooled_distinct2: Option<f64>,
    pub pooled_distinct3: Option<f64>,

    pub transitions: TransitionReport,
    pub positions: PositionReport,
    pub top_ngrams: TopNgrams,
    pub per_story: Vec<PerStoryEval>,
}

impl From<&EvalSummary> for EvalReport {
    fn from(summary: &EvalSummary) -> Self {
        EvalReport {
            format: REPORT_FORMAT.to_string(),
            mode: summary.mode,
            stories: summary.stories,
            ri_defined: summary.ri.defined,
            pct_exact: summary.ri.pct_exact,
            pct_unspec: summary.ri.pct_unspec,
            pct_incorrect: summary.ri.pct_incorrect,
            avg_rel: summary.ri.avg_rel,
            p_cls_defined: summary.pcls.defined,
            p_cls: summary.pcls.accuracy,
            p_cls_majority: summary.pcls.majority,
            p_cls_mix_squared: summary.pcls.mix_squared,
            p_cls_sentences: summary.pcls.sentences,
            bleu: summary.bleu,
            rouge1_f: summary.rouge1_f,
            rouge_l_f: summary.rouge_l_f,
            distinct1: summary.distinct[0].mean,
            distinct2: summary.distinct[1].mean,
            distinct3: summary.distinct[2].mean,
            pooled_distinct1: summary.distinct[0].pooled,
            pooled_distinct2: summary.distinct[1].pooled,
            pooled_distinct3: summary.distinct[2].pooled,
            transitions: summary.transitions.clone(),
            positions: summary.positions.clone(),
            top_ngrams: summary.top_ngrams.clone(),
            per_story: summary.per_story.clone(),
        }
    }
}

pub fn save_report(path: &Path, report: &EvalReport) -> Result<(), ReportError> {
    let mut json = serde_json::to_string_pretty(report)
        .map_err(|e| ReportError::BadFile { path: path.to_path_buf(), reason: e.to_string() })?;
    json.push('\n');
    std::fs::write(path, json)
        .map_err(|e| ReportError::Io { action: "write", path: path.to_path_buf(), source: e })
}

pub fn load_report(path: &Path) -> Result<EvalReport, ReportError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ReportError::Io { action: "read", path: path.to_path_buf(), source: e })?;
    let report: EvalReport = serde_json::from_str(&text)
        .map_err(|e| ReportError::BadFile { path: path.to_path_buf(), reason: e.to_string() })?;
    if report.format != REPORT_FORMAT {
        return Err(ReportError::BadFile {
            path: path.to_path_buf(),
            reason: format!("expected format {REPORT_FORMAT:?}, got {:?}", report.format),
        });
    }
    Ok(report)
}

/// Two-sided paired t-test result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    pub mean_diff: f64,
    pub t: f64,
    pub p_value: f64,
}

/// Two-sided paired t-test over aligned samples. `None` when fewer than two
/// pairs exist. A zero-variance difference short-circuits: p is 1 when the
/// constant difference is zero and 0 otherwise.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Option<PairedTTest> {
    assert_eq!(a.len(), b.len(), "paired samples must align");
    let n = a.len();
    if n < 2 {
        return None;
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if sd == 0.0 {
        let p = if mean.abs() < 1e-12 { 1.0 } else { 0.0 };
        return Some(PairedTTest { mean_diff: mean, t: 0.0, p_value: p });
    }
    let t = mean / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid t distribution");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Some(PairedTTest { mean_diff: mean, t, p_value: p })
}

/// One metric row of a comparison: the two aggregate values, their
/// difference, and a paired test where per-story values exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: String,
    pub a: f64,
    pub b: f64,
    pub diff: f64,
    pub test: Option<PairedTTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeComparison {
    pub mode_a: GenMode,
    pub mode_b: GenMode,
    pub stories: usize,
    pub metrics: Vec<MetricComparison>,
}

/// Compares two reports produced over the same reference set.
pub fn compare_reports(a: &EvalReport, b: &EvalReport) -> Result<ModeComparison, ReportError> {
    if a.stories != b.stories || a.per_story.len() != b.per_story.len() {
        return Err(ReportError::Misaligned { a: a.stories, b: b.stories });
    }
    fn aggregate(name: &str, x: f64, y: f64) -> MetricComparison {
        MetricComparison { metric: name.to_string(), a: x, b: y, diff: x - y, test: None }
    }
    let mut metrics = vec![
        aggregate("pct_exact", a.pct_exact, b.pct_exact),
        aggregate("pct_unspec", a.pct_unspec, b.pct_unspec),
        aggregate("pct_incorrect", a.pct_incorrect, b.pct_incorrect),
        aggregate("avg_rel", a.avg_rel, b.avg_rel),
        aggregate("p_cls", a.p_cls, b.p_cls),
    ];
    for (name, get) in [
        ("bleu", (|s: &PerStoryEval| s.bleu) as fn(&PerStoryEval) -> f64),
        ("rouge1_f", |s| s.rouge1_f),
        ("rougeL_f", |s| s.rouge_l_f),
    ] {
        let xs: Vec<f64> = a.per_story.iter().map(get).collect();
        let ys: Vec<f64> = b.per_story.iter().map(get).collect();
        let mean_a = xs.iter().sum::<f64>() / xs.len().max(1) as f64;
        let mean_b = ys.iter().sum::<f64>() / ys.len().max(1) as f64;
        metrics.push(MetricComparison {
            metric: name.to_string(),
            a: mean_a,
            b: mean_b,
            diff: mean_a - mean_b,
            test: paired_t_test(&xs, &ys),
        });
    }
    for (name, x, y) in [
        ("distinct1", a.distinct1, b.distinct1),
        ("distinct2", a.distinct2, b.distinct2),
        ("distinct3", a.distinct3, b.distinct3),
    ] {
        if let (Some(x), Some(y)) = (x, y) {
            metrics.push(aggregate(name, x, y));
        }
    }
    Ok(ModeComparison { mode_a: a.mode, mode_b: b.mode, stories: a.stories, metrics })
}

/// Plain-text comparison table.
pub fn render_comparison(cmp: &ModeComparison) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "comparison over {} stories: {} (a) vs {} (b)",
        cmp.stories, cmp.mode_a, cmp.mode_b
    );
    let _ = writeln!(
        out,
        "{:<14} {:>10} {:>10} {:>10} {:>10}",
        "metric", "a", "b", "diff", "p"
    );
    for m in &cmp.metrics {
        let p = m
            .test
            .map(|t| format!("{:.4}", t.p_value))
            .unwrap_or_else(|| "-".to_string());
        let _ = writeln!(
            out,
            "{:<14} {:>10.4} {:>10.4} {:>+10.4} {:>10}",
            m.metric, m.a, m.b, m.diff, p
        );
    }
    out
}

/// Transition matrix as CSV with labeled rows and columns.
pub fn transitions_csv(report: &TransitionReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "from,{}", TRANSITION_CLASSES.join(","));
    for (r, label) in TRANSITION_CLASSES.iter().enumerate() {
        let cells: Vec<String> =
            report.matrix[r].iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(out, "{label},{}", cells.join(","));
    }
    out
}

/// Plain-text single-report rendering for terminal output.
pub fn render_report(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "mode                 {}", report.mode);
    let _ = writeln!(out, "stories              {}", report.stories);
    if report.ri_defined {
        let _ = writeln!(out, "pct_exact            {:.2}", report.pct_exact);
        let _ = writeln!(out, "pct_unspec           {:.2}", report.pct_unspec);
        let _ = writeln!(out, "pct_incorrect        {:.2}", report.pct_incorrect);
        let _ = writeln!(out, "avg_rel              {:.4}", report.avg_rel);
    } else {
        let _ = writeln!(out, "identification       undefined (no stories)");
    }
    if report.p_cls_defined {
        let _ = writeln!(out, "p_cls                {:.2}", report.p_cls);
        let _ = writeln!(out, "p_cls_majority       {:.2}", report.p_cls_majority);
        let _ = writeln!(out, "p_cls_mix_squared    {:.2}", report.p_cls_mix_squared);
        let _ = writeln!(out, "p_cls_sentences      {}", report.p_cls_sentences);
    } else {
        let _ = writeln!(out, "p_cls                undefined (no relationship sentences)");
    }
    let _ = writeln!(out, "bleu                 {:.4}", report.bleu);
    let _ = writeln!(out, "rouge1_f             {:.4}", report.rouge1_f);
    let _ = writeln!(out, "rougeL_f             {:.4}", report.rouge_l_f);
    for (name, v) in [
        ("distinct1", report.distinct1),
        ("distinct2", report.distinct2),
        ("distinct3", report.distinct3),
    ] {
        match v {
            Some(v) => {
                let _ = writeln!(out, "{name}            {v:.4}");
            }
            None => {
                let _ = writeln!(out, "{name}            undefined");
            }
        }
    }
    let _ = writeln!(out, "transitions ({} changes):", {
        report.transitions.counts.iter().flatten().sum::<usize>()
    });
    out.push_str(&transitions_csv(&report.transitions));
    if report.positions.defined {
        let _ = writeln!(
            out,
            "rel positions        early {:.1}% / middle {:.1}% / late {:.1}%",
            report.positions.early_pct, report.positions.middle_pct, report.positions.late_pct
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::analysis::PositionReport;
    use crate::eval::ri::RiOutcome;

    fn stub_report(mode: GenMode, bleus: &[f64]) -> EvalReport {
        EvalReport {
            format: REPORT_FORMAT.to_string(),
            mode,
            stories: bleus.len(),
            ri_defined: true,
            pct_exact: 50.0,
            pct_unspec: 25.0,
            pct_incorrect: 25.0,
            avg_rel: 1.5,
            p_cls_defined: true,
            p_cls: 90.0,
            p_cls_majority: 45.0,
            p_cls_mix_squared: 35.0,
            p_cls_sentences: 40,
            bleu: bleus.iter().sum::<f64>() / bleus.len() as f64,
            rouge1_f: 0.5,
            rouge_l_f: 0.4,
            distinct1: Some(0.6),
            distinct2: Some(0.8),
            distinct3: Some(0.9),
            pooled_distinct1: Some(0.2),
            pooled_distinct2: Some(0.4),
            pooled_distinct3: Some(0.6),
            transitions: TransitionReport {
                matrix: [[0.0; 4]; 4],
                counts: [[0; 4]; 4],
                row_defined: [false; 4],
            },
            positions: PositionReport {
                rel_sentences: 4,
                defined: true,
                early_pct: 50.0,
                middle_pct: 25.0,
                late_pct: 25.0,
            },
            top_ngrams: TopNgrams::new(),
            per_story: bleus
                .iter()
                .map(|&b| PerStoryEval {
                    bleu: b,
                    rouge1_f: 0.5,
                    rouge_l_f: 0.4,
                    ri: RiOutcome::Exact,
                    identified: 1,
                })
                .collect(),
        }
    }

    #[test]
    fn report_file_round_trips_and_checks_format() {
        let report = stub_report(GenMode::ReList, &[0.2, 0.4, 0.6]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        save_report(&path, &report).unwrap();
        let loaded = load_report(&path).unwrap();
        assert_eq!(report, loaded);

        let mut wrong = report;
        wrong.format = "relist-report-v0".to_string();
        save_report(&path, &wrong).unwrap();
        let err = load_report(&path).unwrap_err();
        assert!(matches!(err, ReportError::BadFile { .. }), "{err}");
    }

    #[test]
    fn flat_keys_appear_in_the_file() {
        let report = stub_report(GenMode::Flat, &[0.5]);
        let json = serde_json::to_string(&report).unwrap();
        for key in [
            "\"pct_exact\"",
            "\"pct_unspec\"",
            "\"pct_incorrect\"",
            "\"avg_rel\"",
            "\"p_cls\"",
            "\"bleu\"",
            "\"rouge1_f\"",
            "\"rougeL_f\"",
            "\"distinct1\"",
            "\"transitions\"",
            "\"positions\"",
            "\"top_ngrams\"",
            "\"per_story\"",
        ] {
            assert!(json.contains(key), "missing {key}");
        }
    }

    #[test]
    fn constant_differences_short_circuit_the_test() {
        let same = paired_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(same.p_value, 1.0);
        assert_eq!(same.mean_diff, 0.0);

        let shifted = paired_t_test(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(shifted.p_value, 0.0);
        assert_eq!(shifted.mean_diff, 1.0);

        assert!(paired_t_test(&[1.0], &[2.0]).is_none());
    }

    #[test]
    fn noisy_differences_behave_like_a_t_test() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.1, 1.8, 3.2, 3.9, 5.1, 5.8];
        let both = paired_t_test(&a, &b).unwrap();
        assert!(both.p_value > 0.0 && both.p_value < 1.0);
        let swapped = paired_t_test(&b, &a).unwrap();
        assert!((both.p_value - swapped.p_value).abs() < 1e-12);
        assert!((both.mean_diff + swapped.mean_diff).abs() < 1e-12);

        // A consistent unit shift with small noise is highly significant.
        let base: Vec<f64> = (0..20).map(|i| i as f64 / 10.0).collect();
        let lifted: Vec<f64> =
            base.iter().enumerate().map(|(i, v)| v + 1.0 + 0.01 * (i % 3) as f64).collect();
        let strong = paired_t_test(&lifted, &base).unwrap();
        assert!(strong.p_value < 1e-6, "p {}", strong.p_value);
    }

    #[test]
    fn comparison_pairs_metrics_and_rejects_misalignment() {
        let a = stub_report(GenMode::ReList, &[0.5, 0.6, 0.7]);
        let b = stub_report(GenMode::Flat, &[0.3, 0.4, 0.5]);
        let cmp = compare_reports(&a, &b).unwrap();
        assert_eq!(cmp.stories, 3);
        let bleu_row = cmp.metrics.iter().find(|m| m.metric == "bleu").unwrap();
        assert!((bleu_row.diff - 0.2).abs() < 1e-12);
        let test = bleu_row.test.unwrap();
        assert_eq!(test.p_value, 0.0, "constant shift");
        let ri_row = cmp.metrics.iter().find(|m| m.metric == "pct_exact").unwrap();
        assert!(ri_row.test.is_none());

        let short = stub_report(GenMode::Flat, &[0.3]);
        let err = compare_reports(&a, &short).unwrap_err();
        assert!(matches!(err, ReportError::Misaligned { .. }));

        let table = render_comparison(&cmp);
        assert!(table.contains("bleu"));
        assert!(table.contains("pct_exact"));
    }

    #[test]
    fn rendering_includes_the_headline_numbers() {
        let report = stub_report(GenMode::ReList, &[0.25, 0.75]);
        let text = render_report(&report);
        assert!(text.contains("pct_exact"));
        assert!(text.contains("50.00"));
        assert!(text.contains("relist"));
        let csv = transitions_csv(&report.transitions);
        assert!(csv.starts_with("from,positive,neutral,negative,null"));
        assert_eq!(csv.lines().count(), 5);
    }
}
