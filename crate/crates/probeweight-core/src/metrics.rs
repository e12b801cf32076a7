//! Classifier evaluation: accuracy, per-class accuracy, confusion counts.

use alloc::vec;
use alloc::vec::Vec;

use crate::biasgen::TrainingView;
use crate::nn::{self, Batch, Mlp};
use crate::Result;

/// Evaluation summary over a labeled view.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub correct: usize,
    pub total: usize,
    /// Row-major `K x K`: `confusion[true][predicted]` counts. On a clean
    /// test set the observed labels are the true ones.
    pub confusion: Vec<usize>,
    pub num_classes: usize,
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }

    /// Per-class accuracy (recall): diagonal over row sums, NaN when a class
    /// has no samples.
    pub fn per_class_accuracy(&self) -> Vec<f64> {
        let k = self.num_classes;
        (0..k)
            .map(|c| {
                let row_sum: usize = self.confusion[c * k..(c + 1) * k].iter().sum();
                self.confusion[c * k + c] as f64 / row_sum as f64
            })
            .collect()
    }

    pub fn class_row(&self, class: usize) -> &[usize] {
        &self.confusion[class * self.num_classes..(class + 1) * self.num_classes]
    }
}

/// Argmax predictions for a batch of logits.
pub fn predict(logits: &[f64], num_classes: usize) -> Vec<usize> {
    logits
        .chunks(num_classes)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Evaluates a classifier against a view's labels.
pub fn evaluate(classifier: &Mlp, view: &TrainingView) -> Result<Evaluation> {
    let k = view.num_classes;
    let batch = Batch::new(&view.inputs, &view.labels, view.input_dim)?;
    let logits = nn::forward_logits(classifier, &batch)?;
    let predictions = predict(&logits, k);
    let mut confusion = vec![0usize; k * k];
    let mut correct = 0;
    for (&label, &pred) in view.labels.iter().zip(&predictions) {
        confusion[label * k + pred] += 1;
        if label == pred {
            correct += 1;
        }
    }
    Ok(Evaluation {
        correct,
        total: view.labels.len(),
        confusion,
        num_classes: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predictions_take_the_argmax() {
        let logits = [0.1, 0.9, -0.5, 2.0, 1.0, 1.5];
        assert_eq!(predict(&logits, 3), vec![1, 0]);
    }

    #[test]
    fn confusion_rows_sum_to_class_counts() {
        let view = TrainingView {
            inputs: vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0],
            labels: vec![0, 1, 0, 1],
            sample_ids: vec![0, 1, 2, 3],
            input_dim: 2,
            num_classes: 2,
        };
        let mut rng = crate::rng::seeded(1, crate::rng::Stream::ClassifierInit);
        let net = Mlp::init(&[2, 4, 2], &mut rng).unwrap();
        let eval = evaluate(&net, &view).unwrap();
        assert_eq!(eval.total, 4);
        assert_eq!(eval.class_row(0).iter().sum::<usize>(), 2);
        assert_eq!(eval.class_row(1).iter().sum::<usize>(), 2);
        assert_eq!(eval.correct, eval.confusion[0] + eval.confusion[3]);
    }
}
