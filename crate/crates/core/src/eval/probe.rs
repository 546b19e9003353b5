use std::io::BufRead;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{EvalError, EvalReport, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskType {
    Classification,
    Detection,
}

/// Training targets: one class per example, or a multi-hot row per example.
#[derive(Debug, Clone, PartialEq)]
pub enum ProbeTargets {
    Classes { labels: Vec<usize>, num_classes: usize },
    MultiLabel(Array2<bool>),
}

impl ProbeTargets {
    pub fn task(&self) -> TaskType {
        match self {
            ProbeTargets::Classes { .. } => TaskType::Classification,
            ProbeTargets::MultiLabel(_) => TaskType::Detection,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ProbeTargets::Classes { labels, .. } => labels.len(),
            ProbeTargets::MultiLabel(m) => m.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_classes(&self) -> usize {
        match self {
            ProbeTargets::Classes { num_classes, .. } => *num_classes,
            ProbeTargets::MultiLabel(m) => m.ncols(),
        }
    }

    fn validate(&self, rows: usize) -> Result<()> {
        if self.len() != rows {
            return Err(EvalError::InvalidLabels(format!("{} targets for {rows} embeddings", self.len())));
        }
        if self.num_classes() == 0 {
            return Err(EvalError::InvalidLabels("no classes".into()));
        }
        if let ProbeTargets::Classes { labels, num_classes } = self {
            if let Some(bad) = labels.iter().find(|&&l| l >= *num_classes) {
                return Err(EvalError::InvalidLabels(format!("label {bad} >= {num_classes} classes")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ProbeConfig {
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { learning_rate: 0.5, epochs: 500 }
    }
}

/// Linear head on frozen embeddings: `logits = x W + b`, `W` is `D × C`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeHead<F = f32> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
    pub task: TaskType,
}

impl<F: Scalar> ProbeHead<F> {
    pub fn logits(&self, x: ArrayView2<'_, F>) -> Array2<F> {
        x.dot(&self.weight) + self.bias.view().insert_axis(Axis(0))
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean loss and `dL/dlogits` for the current logits.
fn loss_and_grad<F: Scalar>(logits: &Array2<F>, targets: &ProbeTargets) -> (f64, Array2<F>) {
    let (m, c) = logits.dim();
    let mut grad = Array2::<F>::zeros((m, c));
    let mut loss = 0.0;
    match targets {
        ProbeTargets::Classes { labels, .. } => {
            for (i, row) in logits.rows().into_iter().enumerate() {
                let max = row.fold(f64::NEG_INFINITY, |a, v| a.max(v.as_f64()));
                let sum: f64 = row.iter().map(|v| (v.as_f64() - max).exp()).sum();
                loss += max + sum.ln() - row[labels[i]].as_f64();
                for j in 0..c {
                    let p = (row[j].as_f64() - max).exp() / sum;
                    let y = if j == labels[i] { 1.0 } else { 0.0 };
                    grad[[i, j]] = F::of((p - y) / m as f64);
                }
            }
            (loss / m as f64, grad)
        }
        ProbeTargets::MultiLabel(y) => {
            let scale = (m * c) as f64;
            for ((i, j), z) in logits.indexed_iter() {
                let z = z.as_f64();
                let t = if y[[i, j]] { 1.0 } else { 0.0 };
                // log(1 + e^z) - t z, written stably.
                loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - t * z;
                grad[[i, j]] = F::of((sigmoid(z) - t) / scale);
            }
            (loss / scale, grad)
        }
    }
}

/// Full-batch gradient descent from zero weights. Returns the head and the
/// training loss before each update plus the final loss.
pub fn train_probe<F: Scalar>(
    embeddings: ArrayView2<'_, F>,
    targets: &ProbeTargets,
    config: &ProbeConfig,
) -> Result<(ProbeHead<F>, Vec<f64>)> {
    if embeddings.nrows() == 0 {
        return Err(EvalError::EmptyInput);
    }
    targets.validate(embeddings.nrows())?;
    let c = targets.num_classes();
    let mut head = ProbeHead {
        weight: Array2::zeros((embeddings.ncols(), c)),
        bias: Array1::zeros(c),
        task: targets.task(),
    };
    let lr = F::of(config.learning_rate);
    let mut history = Vec::with_capacity(config.epochs + 1);
    for _ in 0..config.epochs {
        let (loss, g) = loss_and_grad(&head.logits(embeddings), targets);
        history.push(loss);
        head.weight.scaled_add(-lr, &embeddings.t().dot(&g));
        head.bias.scaled_add(-lr, &g.sum_axis(Axis(0)));
    }
    history.push(loss_and_grad(&head.logits(embeddings), targets).0);
    Ok((head, history))
}

/// Average precision over a full ranking by descending score (ties by index).
/// `None` when there are no positives.
pub fn average_precision(scores: &[f64], positives: &[bool]) -> Option<f64> {
    let total = positives.iter().filter(|&&p| p).count();
    if total == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0;
    let mut sum = 0.0;
    for (k, &i) in order.iter().enumerate() {
        if positives[i] {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Some(sum / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeMetric {
    Accuracy(f64),
    /// Mean of per-class AP over classes that have positives.
    MeanAveragePrecision { value: f64, skipped_classes: usize },
}

impl ProbeMetric {
    pub fn value(&self) -> f64 {
        match *self {
            ProbeMetric::Accuracy(v) => v,
            ProbeMetric::MeanAveragePrecision { value, .. } => value,
        }
    }

    pub fn report(&self, query_count: usize) -> EvalReport {
        match *self {
            ProbeMetric::Accuracy(value) => EvalReport {
                metric_name: "accuracy".into(),
                value,
                n: None,
                query_count,
                skipped_classes: 0,
            },
            ProbeMetric::MeanAveragePrecision { value, skipped_classes } => EvalReport {
                metric_name: "mAP".into(),
                value,
                n: None,
                query_count,
                skipped_classes,
            },
        }
    }
}

pub fn eval_probe<F: Scalar>(
    head: &ProbeHead<F>,
    embeddings: ArrayView2<'_, F>,
    targets: &ProbeTargets,
) -> Result<ProbeMetric> {
    if embeddings.nrows() == 0 {
        return Err(EvalError::EmptyInput);
    }
    targets.validate(embeddings.nrows())?;
    if targets.num_classes() != head.bias.len() {
        return Err(EvalError::DimensionMismatch { expected: head.bias.len(), actual: targets.num_classes() });
    }
    let logits = head.logits(embeddings);
    match targets {
        ProbeTargets::Classes { labels, .. } => {
            let correct = logits
                .rows()
                .into_iter()
                .zip(labels)
                .filter(|(row, &l)| {
                    let mut best = 0;
                    for j in 1..row.len() {
                        if row[j] > row[best] {
                            best = j;
                        }
                    }
                    best == l
                })
                .count();
            Ok(ProbeMetric::Accuracy(correct as f64 / labels.len() as f64))
        }
        ProbeTargets::MultiLabel(y) => {
            let mut aps = Vec::new();
            let mut skipped = 0;
            for j in 0..y.ncols() {
                let scores: Vec<f64> = logits.column(j).iter().map(|v| v.as_f64()).collect();
                let pos: Vec<bool> = y.column(j).to_vec();
                match average_precision(&scores, &pos) {
                    Some(ap) => aps.push(ap),
                    None => skipped += 1,
                }
            }
            if aps.is_empty() {
                return Err(EvalError::InvalidLabels("no class has positives".into()));
            }
            Ok(ProbeMetric::MeanAveragePrecision {
                value: aps.iter().sum::<f64>() / aps.len() as f64,
                skipped_classes: skipped,
            })
        }
    }
}

/// One line of a downstream task manifest: `{"clipPath": ..., "label": ...}`
/// or `{"clipPath": ..., "labels": [...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskItem {
    pub clip_path: String,
    pub labels: Vec<String>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawTaskItem {
    clip_path: String,
    label: Option<String>,
    labels: Option<Vec<String>>,
}

pub fn read_task_manifest(path: &Path) -> Result<Vec<TaskItem>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut items = Vec::new();
    for (n, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| EvalError::MalformedTask { line: n + 1, reason };
        let raw: RawTaskItem = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let labels = match (raw.label, raw.labels) {
            (Some(l), None) => vec![l],
            (None, Some(ls)) => ls,
            (None, None) => return Err(bad("no label or labels".into())),
            (Some(_), Some(_)) => return Err(bad("both label and labels".into())),
        };
        items.push(TaskItem { clip_path: raw.clip_path, labels });
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn separable() -> (Array2<f64>, ProbeTargets) {
        let x = array![[1.0, 0.2], [0.9, -0.1], [1.2, 0.3], [-1.0, 0.1], [-0.8, -0.2], [-1.1, 0.0]];
        (x, ProbeTargets::Classes { labels: vec![0, 0, 0, 1, 1, 1], num_classes: 2 })
    }

    #[test]
    fn separable_reaches_full_accuracy() {
        let (x, y) = separable();
        let (head, _) = train_probe(x.view(), &y, &ProbeConfig::default()).unwrap();
        assert_eq!(eval_probe(&head, x.view(), &y).unwrap(), ProbeMetric::Accuracy(1.0));
    }

    #[test]
    fn loss_non_increasing_at_small_lr() {
        let (x, y) = separable();
        let (_, hist) = train_probe(x.view(), &y, &ProbeConfig { learning_rate: 1e-3, epochs: 300 }).unwrap();
        assert!(hist.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        assert!((hist[0] - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_embeddings_predict_majority() {
        let x = Array2::<f64>::zeros((5, 3));
        let y = ProbeTargets::Classes { labels: vec![2, 2, 2, 0, 1], num_classes: 3 };
        let (head, _) = train_probe(x.view(), &y, &ProbeConfig::default()).unwrap();
        assert_eq!(eval_probe(&head, x.view(), &y).unwrap(), ProbeMetric::Accuracy(0.6));
    }

    #[test]
    fn detection_skips_absent_class() {
        let x = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0]];
        let y = array![[true, false, false], [false, true, false], [true, true, false], [false, false, false]];
        let targets = ProbeTargets::MultiLabel(y);
        let (head, hist) = train_probe(x.view(), &targets, &ProbeConfig::default()).unwrap();
        assert!(hist.last().unwrap() < &hist[0]);
        match eval_probe(&head, x.view(), &targets).unwrap() {
            ProbeMetric::MeanAveragePrecision { value, skipped_classes } => {
                assert_eq!(skipped_classes, 1);
                assert!((value - 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn average_precision_hand_case() {
        // ranking: idx 2 (pos), 0 (neg), 1 (pos) -> (1 + 2/3) / 2
        let ap = average_precision(&[0.5, 0.1, 0.9], &[false, true, true]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(average_precision(&[0.3], &[false]), None);
    }

    #[test]
    fn validation() {
        let x = Array2::<f64>::zeros((2, 2));
        let y = ProbeTargets::Classes { labels: vec![0, 3], num_classes: 2 };
        assert!(train_probe(x.view(), &y, &ProbeConfig::default()).is_err());
        let y = ProbeTargets::Classes { labels: vec![0], num_classes: 2 };
        assert!(train_probe(x.view(), &y, &ProbeConfig::default()).is_err());
    }

    #[test]
    fn task_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        std::fs::write(
            &p,
            "{\"clipPath\":\"a.wav\",\"label\":\"dog\"}\n\n{\"clipPath\":\"b.wav\",\"labels\":[\"x\",\"y\"]}\n",
        )
        .unwrap();
        let items = read_task_manifest(&p).unwrap();
        assert_eq!(items[0].labels, vec!["dog"]);
        assert_eq!(items[1].labels, vec!["x", "y"]);
        std::fs::write(&p, "{\"clipPath\":\"a.wav\"}\n").unwrap();
        assert!(matches!(read_task_manifest(&p), Err(EvalError::MalformedTask { line: 1, .. })));
    }
}
