//! Evaluation runs, leaderboard assembly, and curve exports (CSV and SVG).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{load_ground_truth, load_manifest, load_predictions, DatasetManifest, FormatError};
use crate::metrics::{
    evaluate_full, rank_metric, EvalOptions, EvalReport, Evaluation, FrocCurve, MetricsError,
    RocCurve,
};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("no reports to rank")]
    EmptyLeaderboard,
}

/// One ranked submission. Ties share a rank number (competition ranking)
/// and are ordered by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub rank: usize,
    pub name: String,
    pub report: EvalReport,
}

/// Ranks submissions by rank metric, descending; equal metrics share the
/// rank number and sort alphabetically.
pub fn build_leaderboard(reports: Vec<(String, EvalReport)>) -> Result<Vec<LeaderboardRow>, ReportError> {
    if reports.is_empty() {
        return Err(ReportError::EmptyLeaderboard);
    }
    let mut rows: Vec<(String, EvalReport)> = reports;
    rows.sort_by(|a, b| {
        b.1.rank_metric
            .partial_cmp(&a.1.rank_metric)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    let mut out: Vec<LeaderboardRow> = Vec::with_capacity(rows.len());
    for (i, (name, report)) in rows.into_iter().enumerate() {
        let rank = match out.last() {
            Some(prev) if prev.report.rank_metric == report.rank_metric => prev.rank,
            _ => i + 1,
        };
        out.push(LeaderboardRow { rank, name, report });
    }
    Ok(out)
}

/// Builds an [`EvalReport`] from externally supplied metric values (for
/// replaying published results through the ranking arithmetic). Counts are
/// zero and unknown sensitivities default to zero.
pub fn report_from_metrics(auc: f64, sens_at_0125: f64, sens_at_025: f64, sens_at_05: f64) -> EvalReport {
    EvalReport {
        auc,
        sens_at_0125,
        sens_at_025,
        sens_at_05,
        rank_metric: rank_metric(auc, sens_at_025),
        n_images: 0,
        n_nodule_images: 0,
        n_nodules: 0,
    }
}

/// Files written by an evaluation run.
pub const REPORT_FILE: &str = "report.json";
pub const ROC_CSV_FILE: &str = "roc.csv";
pub const FROC_CSV_FILE: &str = "froc.csv";
pub const CURVES_SVG_FILE: &str = "curves.svg";

/// Scores a prediction file against a ground-truth file and writes the
/// report, both curve tables, and the SVG rendering into `out_dir`.
pub fn run_evaluate(
    predictions_path: &Path,
    ground_truth_path: &Path,
    out_dir: &Path,
    options: EvalOptions,
) -> Result<Evaluation, ReportError> {
    let preds = load_predictions(predictions_path)?;
    let gts = load_ground_truth(ground_truth_path)?;
    let evaluation = evaluate_full(&preds, &gts, options)?;
    write_outputs(out_dir, &evaluation)?;
    Ok(evaluation)
}

/// Generation-track scoring: verifies that the generated images listed in
/// the manifest exist, then scores the externally trained detector's
/// predictions through the identical path as [`run_evaluate`].
///
/// Training the detector on the generated images happens outside this tool;
/// a missing predictions file is reported as exactly that.
pub fn run_generation_eval(
    generated_manifest_path: &Path,
    ground_truth_path: &Path,
    predictions_path: &Path,
    out_dir: &Path,
    options: EvalOptions,
) -> Result<Evaluation, ReportError> {
    let _manifest: DatasetManifest = load_manifest(generated_manifest_path)?;
    if !predictions_path.exists() {
        return Err(ReportError::Format(FormatError::MissingFile {
            path: predictions_path.to_path_buf(),
            hint: "generation-track scoring needs detector predictions produced by training \
                   an external detection model on the generated images"
                .to_string(),
        }));
    }
    run_evaluate(predictions_path, ground_truth_path, out_dir, options)
}

fn write_outputs(out_dir: &Path, evaluation: &Evaluation) -> Result<(), ReportError> {
    fs::create_dir_all(out_dir).map_err(|e| FormatError::io(out_dir, e))?;
    let report_path = out_dir.join(REPORT_FILE);
    let mut text = serde_json::to_string_pretty(&evaluation.report).expect("serializable");
    text.push('\n');
    fs::write(&report_path, text).map_err(|e| FormatError::io(&report_path, e))?;

    let roc_path = out_dir.join(ROC_CSV_FILE);
    fs::write(&roc_path, roc_csv(&evaluation.roc)).map_err(|e| FormatError::io(&roc_path, e))?;
    let froc_path = out_dir.join(FROC_CSV_FILE);
    fs::write(&froc_path, froc_csv(&evaluation.froc))
        .map_err(|e| FormatError::io(&froc_path, e))?;
    let svg_path = out_dir.join(CURVES_SVG_FILE);
    fs::write(&svg_path, curves_svg(&evaluation.roc, &evaluation.froc))
        .map_err(|e| FormatError::io(&svg_path, e))?;
    Ok(())
}

/// One row per curve point (the +inf anchor included), after a header row.
pub fn roc_csv(roc: &RocCurve) -> String {
    let mut out = String::from("threshold,false_positive_rate,true_positive_rate\n");
    for p in &roc.points {
        out.push_str(&format!(
            "{},{},{}\n",
            p.threshold, p.false_positive_rate, p.true_positive_rate
        ));
    }
    out
}

pub fn froc_csv(froc: &FrocCurve) -> String {
    let mut out = String::from("threshold,fp_per_image,sensitivity\n");
    for p in &froc.points {
        out.push_str(&format!(
            "{},{},{}\n",
            p.threshold, p.fp_per_image, p.sensitivity
        ));
    }
    out
}

// SVG layout: fixed 800x600 canvas, two panels. Each panel's plot area is
// 300x420 with the origin at the lower left; x and y are mapped linearly
// from the data domain printed on the axis.
const SVG_W: f64 = 800.0;
const SVG_H: f64 = 600.0;
const PLOT_W: f64 = 300.0;
const PLOT_H: f64 = 420.0;
const MARGIN_TOP: f64 = 60.0;

struct Panel {
    left: f64,
    x_max: f64,
}

impl Panel {
    fn x(&self, v: f64) -> f64 {
        self.left + v / self.x_max * PLOT_W
    }

    fn y(&self, v: f64) -> f64 {
        MARGIN_TOP + PLOT_H - v * PLOT_H
    }
}

fn panel_frame(svg: &mut String, p: &Panel, title: &str, x_label: &str) {
    svg.push_str(&format!(
        "<rect x='{}' y='{MARGIN_TOP}' width='{PLOT_W}' height='{PLOT_H}' fill='none' stroke='black'/>\n",
        p.left
    ));
    svg.push_str(&format!(
        "<text x='{}' y='{}' text-anchor='middle' font-size='16'>{title}</text>\n",
        p.left + PLOT_W / 2.0,
        MARGIN_TOP - 20.0
    ));
    svg.push_str(&format!(
        "<text x='{}' y='{}' text-anchor='middle' font-size='12'>{x_label}</text>\n",
        p.left + PLOT_W / 2.0,
        MARGIN_TOP + PLOT_H + 35.0
    ));
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let xv = frac * p.x_max;
        svg.push_str(&format!(
            "<text x='{}' y='{}' text-anchor='middle' font-size='10'>{xv:.3}</text>\n",
            p.x(xv),
            MARGIN_TOP + PLOT_H + 15.0
        ));
        svg.push_str(&format!(
            "<text x='{}' y='{}' text-anchor='end' font-size='10'>{frac:.2}</text>\n",
            p.left - 5.0,
            p.y(frac) + 3.0
        ));
    }
}

fn polyline(svg: &mut String, p: &Panel, pts: &[(f64, f64)], color: &str) {
    let coords: Vec<String> = pts
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", p.x(x), p.y(y)))
        .collect();
    svg.push_str(&format!(
        "<polyline points='{}' fill='none' stroke='{color}' stroke-width='1.5'/>\n",
        coords.join(" ")
    ));
}

/// Renders both operating curves side by side with markers at the three
/// reported false-positive rates.
pub fn curves_svg(roc: &RocCurve, froc: &FrocCurve) -> String {
    let mut svg = format!(
        "<svg xmlns='http://www.w3.org/2000/svg' width='{SVG_W}' height='{SVG_H}' \
         viewBox='0 0 {SVG_W} {SVG_H}'>\n<rect width='{SVG_W}' height='{SVG_H}' fill='white'/>\n"
    );

    let roc_panel = Panel {
        left: 70.0,
        x_max: 1.0,
    };
    panel_frame(
        &mut svg,
        &roc_panel,
        &format!("ROC (AUC {:.4})", roc.auc),
        "false positive rate",
    );
    let roc_pts: Vec<(f64, f64)> = roc
        .points
        .iter()
        .map(|p| (p.false_positive_rate, p.true_positive_rate))
        .collect();
    polyline(&mut svg, &roc_panel, &roc_pts, "steelblue");

    let froc_max = froc
        .points
        .iter()
        .map(|p| p.fp_per_image)
        .fold(0.0f64, f64::max)
        .max(1.0);
    let froc_panel = Panel {
        left: 450.0,
        x_max: froc_max,
    };
    panel_frame(&mut svg, &froc_panel, "FROC", "false positives per image");
    let froc_pts: Vec<(f64, f64)> = froc
        .points
        .iter()
        .map(|p| (p.fp_per_image, p.sensitivity))
        .collect();
    polyline(&mut svg, &froc_panel, &froc_pts, "firebrick");
    for marker in [0.125, 0.25, 0.5] {
        if marker <= froc_max {
            let x = froc_panel.x(marker);
            svg.push_str(&format!(
                "<line x1='{x:.2}' y1='{MARGIN_TOP}' x2='{x:.2}' y2='{}' \
                 stroke='gray' stroke-dasharray='4 3'/>\n",
                MARGIN_TOP + PLOT_H
            ));
            svg.push_str(&format!(
                "<text x='{x:.2}' y='{}' text-anchor='middle' font-size='10'>{marker}</text>\n",
                MARGIN_TOP - 5.0
            ));
        }
    }

    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundingBox, Detection};
    use crate::io::{save_ground_truth, save_predictions};
    use crate::metrics::{ImageAnnotations, ImagePredictions};

    fn report(rank_metric_value: f64) -> EvalReport {
        EvalReport {
            auc: rank_metric_value,
            sens_at_0125: 0.0,
            sens_at_025: rank_metric_value,
            sens_at_05: 0.0,
            rank_metric: rank_metric_value,
            n_images: 0,
            n_nodule_images: 0,
            n_nodules: 0,
        }
    }

    #[test]
    fn single_report_is_rank_one() {
        let rows = build_leaderboard(vec![("only".into(), report(0.5))]).unwrap();
        assert_eq!(rows[0].rank, 1);
    }

    #[test]
    fn ties_share_rank_alphabetically() {
        let rows = build_leaderboard(vec![
            ("zeta".into(), report(0.8)),
            ("alpha".into(), report(0.8)),
            ("mid".into(), report(0.9)),
        ])
        .unwrap();
        assert_eq!(rows[0].name, "mid");
        assert_eq!(rows[0].rank, 1);
        assert_eq!(rows[1].name, "alpha");
        assert_eq!(rows[1].rank, 2);
        assert_eq!(rows[2].name, "zeta");
        assert_eq!(rows[2].rank, 2);
    }

    #[test]
    fn published_metric_replay_orders_submissions() {
        let entries = vec![
            ("D3".to_string(), report_from_metrics(0.833, 0.590, 0.704, 0.761)),
            ("DB".to_string(), report_from_metrics(0.816, 0.504, 0.635, 0.714)),
            ("D1".to_string(), report_from_metrics(0.868, 0.603, 0.750, 0.800)),
            ("D2".to_string(), report_from_metrics(0.862, 0.600, 0.723, 0.771)),
        ];
        let rows = build_leaderboard(entries).unwrap();
        let names: Vec<&str> = rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, vec!["D1", "D2", "D3", "DB"]);
        let expected = [0.8385, 0.82725, 0.80075, 0.77075];
        for (row, want) in rows.iter().zip(expected) {
            assert!((row.report.rank_metric - want).abs() < 1e-12);
        }
    }

    #[test]
    fn evaluate_run_writes_all_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let preds_path = dir.path().join("preds.json");
        let gt_path = dir.path().join("gt.json");
        let out_dir = dir.path().join("out");

        let gts = vec![
            ImageAnnotations {
                image_id: "pos".into(),
                nodules: vec![BoundingBox::new(10.0, 10.0, 20.0, 20.0)],
            },
            ImageAnnotations {
                image_id: "neg".into(),
                nodules: vec![],
            },
        ];
        let preds = vec![ImagePredictions {
            image_id: "pos".into(),
            detections: vec![Detection::new(BoundingBox::new(10.0, 10.0, 20.0, 20.0), 0.9)],
        }];
        save_predictions(&preds_path, &preds).unwrap();
        save_ground_truth(&gt_path, &gts).unwrap();

        let evaluation =
            run_evaluate(&preds_path, &gt_path, &out_dir, EvalOptions::default()).unwrap();
        assert_eq!(evaluation.report.rank_metric, 1.0);
        for file in [REPORT_FILE, ROC_CSV_FILE, FROC_CSV_FILE, CURVES_SVG_FILE] {
            assert!(out_dir.join(file).exists(), "{file} missing");
        }
        // CSV row counts: header + one row per curve point.
        let roc_rows = fs::read_to_string(out_dir.join(ROC_CSV_FILE)).unwrap();
        assert_eq!(roc_rows.lines().count(), evaluation.roc.points.len() + 1);
        let froc_rows = fs::read_to_string(out_dir.join(FROC_CSV_FILE)).unwrap();
        assert_eq!(froc_rows.lines().count(), evaluation.froc.points.len() + 1);
        // Round-trip of the report file.
        let loaded: EvalReport =
            serde_json::from_str(&fs::read_to_string(out_dir.join(REPORT_FILE)).unwrap()).unwrap();
        assert_eq!(loaded, evaluation.report);
    }

    #[test]
    fn generation_eval_requires_predictions_file() {
        let dir = tempfile::tempdir().unwrap();
        let manifest_path = dir.path().join("generated.json");
        fs::write(&manifest_path, r#"{"entries": []}"#).unwrap();
        let gt_path = dir.path().join("gt.json");
        save_ground_truth(
            &gt_path,
            &[ImageAnnotations {
                image_id: "a".into(),
                nodules: vec![BoundingBox::new(0.0, 0.0, 5.0, 5.0)],
            }],
        )
        .unwrap();
        let missing = dir.path().join("preds.json");
        match run_generation_eval(
            &manifest_path,
            &gt_path,
            &missing,
            &dir.path().join("out"),
            EvalOptions::default(),
        ) {
            Err(ReportError::Format(FormatError::MissingFile { hint, .. })) => {
                assert!(hint.contains("external"));
            }
            other => panic!("expected missing-file error, got {other:?}"),
        }
    }

    #[test]
    fn svg_contains_markers_and_curves() {
        let roc = RocCurve {
            points: vec![
                crate::metrics::RocPoint {
                    false_positive_rate: 0.0,
                    true_positive_rate: 0.0,
                    threshold: f64::INFINITY,
                },
                crate::metrics::RocPoint {
                    false_positive_rate: 1.0,
                    true_positive_rate: 1.0,
                    threshold: 0.0,
                },
            ],
            auc: 0.5,
        };
        let froc = FrocCurve {
            points: vec![crate::metrics::FrocPoint {
                fp_per_image: 0.0,
                sensitivity: 0.0,
                threshold: f64::INFINITY,
            }],
        };
        let svg = curves_svg(&roc, &froc);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("0.125"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("AUC 0.5000"));
    }
}
