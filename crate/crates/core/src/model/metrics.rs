use serde::{Deserialize, Serialize};

/// Binary confusion counts with tumor as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_pos: usize,
    pub true_neg: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionMatrix {
    /// Count predictions against 0/1 labels; `p >= threshold` predicts tumor.
    pub fn from_predictions(probs: &[f64], labels: &[f64], threshold: f64) -> Self {
        assert_eq!(probs.len(), labels.len(), "one prediction per label");
        let mut m = Self::default();
        for (&p, &y) in probs.iter().zip(labels) {
            m.record(p >= threshold, y >= 0.5);
        }
        m
    }

    pub fn record(&mut self, predicted_tumor: bool, actual_tumor: bool) {
        match (predicted_tumor, actual_tumor) {
            (true, true) => self.true_pos += 1,
            (false, false) => self.true_neg += 1,
            (true, false) => self.false_pos += 1,
            (false, true) => self.false_neg += 1,
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.true_pos += other.true_pos;
        self.true_neg += other.true_neg;
        self.false_pos += other.false_pos;
        self.false_neg += other.false_neg;
    }

    pub fn total(&self) -> usize {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }

    pub fn positives(&self) -> usize {
        self.true_pos + self.false_neg
    }

    pub fn negatives(&self) -> usize {
        self.true_neg + self.false_pos
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.true_pos + self.true_neg, self.total())
    }

    /// Sensitivity: TP / (TP + FN).
    pub fn recall(&self) -> Option<f64> {
        ratio(self.true_pos, self.positives())
    }

    /// TN / (TN + FP).
    pub fn specificity(&self) -> Option<f64> {
        ratio(self.true_neg, self.negatives())
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.true_pos, self.true_pos + self.false_pos)
    }

    /// Harmonic mean of precision and recall; undefined when both are zero.
    pub fn f1(&self) -> Option<f64> {
        let p = self.precision()?;
        let r = self.recall()?;
        (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            accuracy: self.accuracy(),
            recall: self.recall(),
            specificity: self.specificity(),
            precision: self.precision(),
            f1: self.f1(),
        }
    }
}

impl std::fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "              pred_normal  pred_tumor")?;
        writeln!(f, "actual_normal {:>11}  {:>10}", self.true_neg, self.false_pos)?;
        write!(f, "actual_tumor  {:>11}  {:>10}", self.false_neg, self.true_pos)
    }
}

/// Summary rates; `None` (JSON `null`) where a denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub recall: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}
