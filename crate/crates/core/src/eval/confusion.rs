use serde::{Deserialize, Serialize};

use crate::error::{HarError, Result};
use crate::label::ActivityLabel;

const K: usize = ActivityLabel::COUNT;

/// Counts indexed `[true][predicted]` in the fixed label order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; K]; K],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: &[(ActivityLabel, ActivityLabel)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(HarError::data("confusion matrix needs at least one prediction"));
        }
        let mut m = Self::default();
        for &(t, p) in pairs {
            m.counts[t.index()][p.index()] += 1;
        }
        Ok(m)
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for r in 0..K {
            for c in 0..K {
                self.counts[r][c] += other.counts[r][c];
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..K).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.correct() as f64 / t as f64,
        }
    }

    pub fn row_total(&self, class: ActivityLabel) -> u64 {
        self.counts[class.index()].iter().sum()
    }

    /// `None` when the class never occurs.
    pub fn recall(&self, class: ActivityLabel) -> Option<f64> {
        let i = class.index();
        match self.row_total(class) {
            0 => None,
            t => Some(self.counts[i][i] as f64 / t as f64),
        }
    }

    /// `None` when the class is never predicted.
    pub fn precision(&self, class: ActivityLabel) -> Option<f64> {
        let i = class.index();
        let col: u64 = (0..K).map(|r| self.counts[r][i]).sum();
        match col {
            0 => None,
            t => Some(self.counts[i][i] as f64 / t as f64),
        }
    }

    /// Each row divided by its total; empty rows stay zero.
    pub fn row_normalized(&self) -> [[f64; K]; K] {
        let mut out = [[0.0; K]; K];
        for (r, row) in self.counts.iter().enumerate() {
            let total: u64 = row.iter().sum();
            if total > 0 {
                for c in 0..K {
                    out[r][c] = row[c] as f64 / total as f64;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ActivityLabel::*;

    #[test]
    fn all_correct_is_diagonal() {
        let pairs: Vec<_> = ActivityLabel::ALL.iter().map(|&l| (l, l)).collect();
        let m = ConfusionMatrix::from_pairs(&pairs).unwrap();
        assert_eq!(m.accuracy(), 1.0);
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(m.counts[r][c], u64::from(r == c));
            }
        }
    }

    #[test]
    fn empty_is_error() {
        assert!(ConfusionMatrix::from_pairs(&[]).is_err());
    }

    #[test]
    fn hand_tallied_six_pairs() {
        let pairs = [
            (Walk, Walk),
            (Walk, Run),
            (Run, Run),
            (BikeLow, BikeHigh),
            (BikeLow, BikeLow),
            (BikeHigh, BikeHigh),
        ];
        let m = ConfusionMatrix::from_pairs(&pairs).unwrap();
        let expected = [[1, 1, 0, 0], [0, 1, 0, 0], [0, 0, 1, 1], [0, 0, 0, 1]];
        assert_eq!(m.counts, expected);
        assert!((m.accuracy() - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(m.recall(Walk), Some(0.5));
        assert_eq!(m.precision(BikeHigh), Some(0.5));
        assert_eq!(m.precision(Run), Some(0.5));
    }

    #[test]
    fn row_normalisation() {
        let mut m = ConfusionMatrix::default();
        m.counts[1] = [0, 97, 3, 0];
        let n = m.row_normalized();
        assert_eq!(n[1], [0.0, 0.97, 0.03, 0.0]);
        assert_eq!(n[0], [0.0; 4]);
        assert_eq!(m.recall(Walk), None);
    }
}
