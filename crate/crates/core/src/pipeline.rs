//! End-to-end anomaly detection: ingest a labeled series, predict each step
//! from its history window, score by prediction error, pick the threshold on
//! the validation segment, and report pointwise precision/recall/F1 on the
//! test segment.

use crate::error::{Error, Result};
use crate::features::{build_feature_matrix, FeatureRecipe};
use crate::modelio::Model;
use crate::scheduler::{execute, Arena, ExecMode};
use crate::tensor::{Shape, Tensor};
use serde::Serialize;
use std::io::BufRead;
use std::path::Path;

/// A labeled univariate series split 60/10/30 in time order.
#[derive(Debug, Clone)]
pub struct SeriesDataset {
    pub timestamps: Vec<f64>,
    pub values: Vec<f64>,
    pub labels: Vec<u8>,
    /// Train rows are `[0, train_end)`.
    pub train_end: usize,
    /// Validation rows are `[train_end, val_end)`; test is the rest.
    pub val_end: usize,
}

impl SeriesDataset {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn from_rows(timestamps: Vec<f64>, values: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::Ingest { row: 1, message: "no data rows".into() });
        }
        let train_end = n * 6 / 10;
        let val_end = train_end + n / 10;
        Ok(SeriesDataset { timestamps, values, labels, train_end, val_end })
    }
}

/// Parse `timestamp,value,label` rows. Row numbers in errors count the
/// header as row 1.
pub fn load_csv_reader<R: BufRead>(reader: R) -> Result<SeriesDataset> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(Error::Ingest { row: 1, message: "empty file".into() }),
    };
    let normalized: Vec<&str> = header.split(',').map(str::trim).collect();
    if normalized != ["timestamp", "value", "label"] {
        return Err(Error::Ingest {
            row: 1,
            message: format!("expected header 'timestamp,value,label', got '{header}'"),
        });
    }
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Ingest {
                row,
                message: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        let ts: f64 = fields[0]
            .parse()
            .map_err(|_| Error::Ingest { row, message: format!("bad timestamp '{}'", fields[0]) })?;
        if let Some(&prev) = timestamps.last() {
            if ts <= prev {
                return Err(Error::Ingest {
                    row,
                    message: format!("timestamp {ts} is not strictly increasing (previous {prev})"),
                });
            }
        }
        let value: f64 = fields[1]
            .parse()
            .map_err(|_| Error::Ingest { row, message: format!("bad value '{}'", fields[1]) })?;
        if !value.is_finite() {
            return Err(Error::Ingest { row, message: "value is not finite".into() });
        }
        let label: u8 = match fields[2] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Ingest { row, message: format!("label '{other}' is not 0 or 1") })
            }
        };
        timestamps.push(ts);
        values.push(value);
        labels.push(label);
    }
    SeriesDataset::from_rows(timestamps, values, labels)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<SeriesDataset> {
    let file = std::fs::File::open(path)?;
    load_csv_reader(std::io::BufReader::new(file))
}

/// How a history window becomes a model input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputRecipe {
    /// The raw window as a 1-channel 1-D tensor of length `window`.
    Raw { window: usize },
    /// A 2-D feature matrix of the window.
    Features(FeatureRecipe),
}

impl InputRecipe {
    pub fn window(&self) -> usize {
        match self {
            InputRecipe::Raw { window } => *window,
            InputRecipe::Features(r) => r.window,
        }
    }

    pub fn input_shape(&self) -> Shape {
        match self {
            InputRecipe::Raw { window } => Shape::new_1d(1, *window),
            InputRecipe::Features(r) => r.matrix_shape(),
        }
    }

    fn tensor_for(&self, window: &[f64]) -> Result<Tensor> {
        match self {
            InputRecipe::Raw { .. } => Tensor::new(
                Shape::new_1d(1, window.len()),
                window.iter().map(|&v| v as f32).collect(),
            ),
            InputRecipe::Features(r) => Ok(build_feature_matrix(window, r)?.tensor),
        }
    }
}

/// Anomaly scores for `t in window..values.len()`; `scores[i]` belongs to
/// timestep `window + i`.
#[derive(Debug, Clone)]
pub struct ScoreSeries {
    pub window: usize,
    pub scores: Vec<f64>,
}

impl ScoreSeries {
    /// Scores whose timestep falls in `[start, end)`, with labels attached.
    pub fn segment<'a>(&'a self, labels: &'a [u8], start: usize, end: usize) -> (Vec<f64>, Vec<u8>) {
        let lo = start.max(self.window);
        if lo >= end {
            return (Vec::new(), Vec::new());
        }
        let s = self.scores[lo - self.window..end - self.window].to_vec();
        let l = labels[lo..end].to_vec();
        (s, l)
    }
}

fn check_model(model: &Model, recipe: &InputRecipe) -> Result<()> {
    let expect = recipe.input_shape();
    if model.input_shape() != &expect {
        return Err(Error::Shape(format!(
            "model input {} does not match recipe input {}",
            model.input_shape(),
            expect
        )));
    }
    if model.output_shape().element_count() != 1 {
        return Err(Error::Shape(format!(
            "prediction needs a scalar model output, got {}",
            model.output_shape()
        )));
    }
    Ok(())
}

fn score_one(
    model: &Model,
    values: &[f64],
    recipe: &InputRecipe,
    mode: ExecMode,
    squared: bool,
    t: usize,
) -> Result<f64> {
    let window = recipe.window();
    let input = recipe.tensor_for(&values[t - window..t])?;
    let report = execute(model, &input, mode, &mut Arena::new())?;
    let predicted = f64::from(report.output.data()[0]);
    let err = (predicted - values[t]).abs();
    Ok(if squared { err * err } else { err })
}

/// One-step-ahead prediction error over the whole series.
///
/// `threads` > 1 fans timesteps out across worker threads; results are
/// ordered by timestep and byte-identical to the sequential run.
pub fn predict_series(
    model: &Model,
    values: &[f64],
    recipe: &InputRecipe,
    mode: ExecMode,
    squared: bool,
    threads: usize,
) -> Result<ScoreSeries> {
    check_model(model, recipe)?;
    let window = recipe.window();
    if values.len() <= window {
        return Err(Error::Window(format!(
            "series of {} samples is not longer than the window {window}",
            values.len()
        )));
    }
    let steps: Vec<usize> = (window..values.len()).collect();
    let scores = if threads <= 1 {
        let mut scores = Vec::with_capacity(steps.len());
        for &t in &steps {
            scores.push(score_one(model, values, recipe, mode, squared, t)?);
        }
        scores
    } else {
        let chunk = steps.len().div_ceil(threads);
        let mut results: Vec<Result<Vec<f64>>> = Vec::new();
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for part in steps.chunks(chunk) {
                handles.push(scope.spawn(move || {
                    part.iter()
                        .map(|&t| score_one(model, values, recipe, mode, squared, t))
                        .collect::<Result<Vec<f64>>>()
                }));
            }
            for h in handles {
                results.push(h.join().expect("scoring worker panicked"));
            }
        });
        let mut scores = Vec::with_capacity(steps.len());
        for r in results {
            scores.extend(r?);
        }
        scores
    };
    Ok(ScoreSeries { window, scores })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    /// Pointwise F1 the threshold achieves on the validation scores.
    pub validation_f1: f64,
    /// Set when validation had no anomalies and the alarm-free default was
    /// used.
    pub degenerate: bool,
}

/// Candidate thresholds: midpoints of sorted unique scores plus infinite
/// sentinels; the F1-maximizing candidate wins, ties broken toward the
/// larger threshold (fewer alarms).
pub fn select_threshold(scores: &[f64], labels: &[u8]) -> Result<ThresholdChoice> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::Window("threshold selection needs scored labels".into()));
    }
    let max_score = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !labels.contains(&1) {
        return Ok(ThresholdChoice { threshold: max_score, validation_f1: 0.0, degenerate: true });
    }
    let mut unique: Vec<f64> = scores.to_vec();
    unique.sort_by(f64::total_cmp);
    unique.dedup();
    let mut candidates = vec![f64::NEG_INFINITY, f64::INFINITY];
    for pair in unique.windows(2) {
        candidates.push((pair[0] + pair[1]) / 2.0);
    }
    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY); // (f1, tau)
    for &tau in &candidates {
        let f1 = evaluate(scores, labels, tau).f1;
        if f1 > best.0 || (f1 == best.0 && tau > best.1) {
            best = (f1, tau);
        }
    }
    Ok(ThresholdChoice { threshold: best.1, validation_f1: best.0, degenerate: false })
}

/// Pointwise detection quality at a fixed threshold, no point adjustment.
#[derive(Debug, Clone, Serialize)]
pub struct DetectionResult {
    pub threshold: f64,
    pub predicted: Vec<u8>,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn evaluate(scores: &[f64], labels: &[u8], threshold: f64) -> DetectionResult {
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    let mut tn = 0u64;
    let mut predicted = Vec::with_capacity(scores.len());
    for (&s, &l) in scores.iter().zip(labels) {
        let p = u8::from(s > threshold);
        predicted.push(p);
        match (p, l) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            _ => tn += 1,
        }
    }
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    DetectionResult {
        threshold,
        predicted,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        precision,
        recall,
        f1,
    }
}

/// Full detection report: scores, validation threshold, test metrics.
#[derive(Debug, Clone, Serialize)]
pub struct DetectReport {
    pub mode: ExecMode,
    pub window: usize,
    pub choice: ThresholdChoice,
    pub test: DetectionResult,
    /// First scored timestep (equals the window length).
    pub score_offset: usize,
    #[serde(skip)]
    pub scores: ScoreSeries,
}

/// Score the series, pick the threshold on validation, evaluate on test.
pub fn detect(
    model: &Model,
    dataset: &SeriesDataset,
    recipe: &InputRecipe,
    mode: ExecMode,
    squared: bool,
    threads: usize,
) -> Result<DetectReport> {
    let scores = predict_series(model, &dataset.values, recipe, mode, squared, threads)?;
    let (val_scores, val_labels) =
        scores.segment(&dataset.labels, dataset.train_end, dataset.val_end);
    if val_scores.is_empty() {
        return Err(Error::Window(
            "validation segment has no scored timesteps (window too long)".into(),
        ));
    }
    let choice = select_threshold(&val_scores, &val_labels)?;
    let (test_scores, test_labels) =
        scores.segment(&dataset.labels, dataset.val_end, dataset.len());
    let test = evaluate(&test_scores, &test_labels, choice.threshold);
    Ok(DetectReport {
        mode,
        window: scores.window,
        choice,
        test,
        score_offset: scores.window,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelio::{validate, LayerSpec, ModelSpec};

    fn csv(rows: &[(f64, f64, u8)]) -> String {
        let mut s = String::from("timestamp,value,label\n");
        for (t, v, l) in rows {
            s.push_str(&format!("{t},{v},{l}\n"));
        }
        s
    }

    fn dense_model(window: usize, weights: Vec<f32>) -> Model {
        validate(ModelSpec {
            format_version: 1,
            input_shape: vec![1, window],
            layers: vec![LayerSpec::Dense { units: 1, weights, bias: vec![0.0] }],
        })
        .unwrap()
    }

    #[test]
    fn ten_rows_split_6_1_3() {
        let rows: Vec<(f64, f64, u8)> = (0..10).map(|i| (i as f64, i as f64, 0)).collect();
        let ds = load_csv_reader(csv(&rows).as_bytes()).unwrap();
        assert_eq!((ds.train_end, ds.val_end - ds.train_end, ds.len() - ds.val_end), (6, 1, 3));
    }

    #[test]
    fn large_split_sizes() {
        let n = 450_000;
        let ds = SeriesDataset::from_rows(
            (0..n).map(|i| i as f64).collect(),
            vec![0.0; n],
            vec![0; n],
        )
        .unwrap();
        assert_eq!(ds.train_end, 270_000);
        assert_eq!(ds.val_end - ds.train_end, 45_000);
        assert_eq!(ds.len() - ds.val_end, 135_000);
    }

    #[test]
    fn duplicate_timestamp_names_row() {
        let text = "timestamp,value,label\n1,0.5,0\n2,0.5,0\n2,0.7,0\n";
        match load_csv_reader(text.as_bytes()) {
            Err(Error::Ingest { row: 4, .. }) => {}
            other => panic!("expected ingest error at row 4, got {other:?}"),
        }
    }

    #[test]
    fn bad_label_and_empty_file() {
        let text = "timestamp,value,label\n1,0.5,2\n";
        assert!(matches!(load_csv_reader(text.as_bytes()), Err(Error::Ingest { row: 2, .. })));
        assert!(matches!(load_csv_reader("".as_bytes()), Err(Error::Ingest { row: 1, .. })));
    }

    #[test]
    fn constant_zero_predictor_scores_zero() {
        let model = dense_model(4, vec![0.0; 4]);
        let values = vec![0.0; 12];
        let s = predict_series(
            &model,
            &values,
            &InputRecipe::Raw { window: 4 },
            ExecMode::Naive,
            false,
            1,
        )
        .unwrap();
        assert_eq!(s.scores.len(), 8);
        assert!(s.scores.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn copy_last_sample_model() {
        // weights select the newest sample of the window: yhat_t = y_{t-1}
        let mut w = vec![0.0f32; 6];
        w[5] = 1.0;
        let model = dense_model(6, w);
        let values: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin() * 2.0).collect();
        let s = predict_series(
            &model,
            &values,
            &InputRecipe::Raw { window: 6 },
            ExecMode::Naive,
            false,
            1,
        )
        .unwrap();
        for (i, &score) in s.scores.iter().enumerate() {
            let t = 6 + i;
            let expect = (values[t] - values[t - 1]).abs();
            assert!((score - expect).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn threaded_scoring_is_identical() {
        let mut w = vec![0.0f32; 6];
        w[0] = -0.4;
        w[5] = 1.1;
        let model = dense_model(6, w);
        let values: Vec<f64> = (0..50).map(|i| (i as f64 * 0.31).cos()).collect();
        let recipe = InputRecipe::Raw { window: 6 };
        let seq = predict_series(&model, &values, &recipe, ExecMode::Naive, false, 1).unwrap();
        let par = predict_series(&model, &values, &recipe, ExecMode::Naive, false, 4).unwrap();
        assert_eq!(seq.scores, par.scores);
    }

    #[test]
    fn geometry_mismatch_is_shape_error() {
        let model = dense_model(4, vec![0.0; 4]);
        let err = predict_series(
            &model,
            &vec![0.0; 20],
            &InputRecipe::Raw { window: 8 },
            ExecMode::Naive,
            false,
            1,
        );
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn threshold_midpoint_example() {
        let choice = select_threshold(&[0.1, 0.9, 0.2], &[0, 1, 0]).unwrap();
        assert!((choice.threshold - 0.55).abs() < 1e-12);
        assert_eq!(choice.validation_f1, 1.0);
        assert!(!choice.degenerate);
    }

    #[test]
    fn threshold_degenerate_labels() {
        let choice = select_threshold(&[0.3, 0.9, 0.1], &[0, 0, 0]).unwrap();
        assert_eq!(choice.threshold, 0.9);
        assert!(choice.degenerate);
        let alarms = evaluate(&[0.3, 0.9, 0.1], &[0, 0, 0], choice.threshold);
        assert_eq!(alarms.predicted, vec![0, 0, 0]);
    }

    #[test]
    fn threshold_beats_exhaustive_sweep() {
        let mut seed = 0x5eed_u64;
        let mut rnd = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..50 {
            let n = 40;
            let scores: Vec<f64> = (0..n).map(|_| rnd()).collect();
            let labels: Vec<u8> = (0..n).map(|_| u8::from(rnd() > 0.7)).collect();
            if !labels.contains(&1) {
                continue;
            }
            let choice = select_threshold(&scores, &labels).unwrap();
            // exhaustive oracle over a fine grid plus all observed scores
            let mut best = 0.0f64;
            let mut cands: Vec<f64> = scores.clone();
            cands.extend((0..=1000).map(|i| i as f64 / 1000.0));
            cands.push(f64::NEG_INFINITY);
            for tau in cands {
                best = best.max(evaluate(&scores, &labels, tau).f1);
            }
            assert!(
                choice.validation_f1 >= best - 1e-12,
                "selected {} < sweep {best}",
                choice.validation_f1
            );
        }
    }

    #[test]
    fn evaluate_matches_confusion_oracle() {
        let scores = [0.1, 0.8, 0.4, 0.9, 0.2, 0.6];
        let labels = [0, 1, 1, 1, 0, 0];
        let tau = 0.5;
        let r = evaluate(&scores, &labels, tau);
        assert_eq!(
            (r.true_positives, r.false_positives, r.false_negatives, r.true_negatives),
            (2, 1, 1, 2)
        );
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-12);

        // perfect separation
        let r = evaluate(&[0.1, 0.9], &[0, 1], 0.5);
        assert_eq!(r.f1, 1.0);
        // all-negative predictions with positives present
        let r = evaluate(&[0.1, 0.2], &[1, 1], 0.5);
        assert_eq!(r.recall, 0.0);
        assert_eq!(r.f1, 0.0);
    }

    #[test]
    fn detect_end_to_end_on_spiky_series() {
        // the model predicts the previous sample, so isolated spikes score high
        let mut w = vec![0.0f32; 4];
        w[3] = 1.0;
        let model = dense_model(4, w);
        let mut values = vec![0.0f64; 40];
        let mut labels = vec![0u8; 40];
        for t in [10usize, 27, 33, 38] {
            values[t] = 5.0;
            labels[t] = 1;
        }
        let ds =
            SeriesDataset::from_rows((0..40).map(|i| i as f64).collect(), values, labels).unwrap();
        // validation is [24, 28): it contains the labeled spike at 27
        let report =
            detect(&model, &ds, &InputRecipe::Raw { window: 4 }, ExecMode::Naive, false, 1)
                .unwrap();
        assert!(!report.choice.degenerate);
        assert!(report.test.f1 > 0.0);
        assert_eq!(report.score_offset, 4);
    }
}
