//! Encoded corpora and mini-batches.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::LearnError;

/// Encoded samples with class labels and optional domain labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub domains: Vec<Option<usize>>,
    pub ids: Vec<String>,
}

/// One mini-batch; same layout as a [`Dataset`].
pub type Batch = Dataset;

impl Dataset {
    pub fn new(x: Array2<f64>, y: Vec<usize>, domains: Vec<Option<usize>>, ids: Vec<String>) -> Result<Self, LearnError> {
        let n = x.nrows();
        if y.len() != n || domains.len() != n || ids.len() != n {
            return Err(LearnError::Shape(format!(
                "dataset with {n} rows but {} labels, {} domains, {} ids",
                y.len(),
                domains.len(),
                ids.len()
            )));
        }
        if let Some(bad) = y.iter().find(|c| **c > 1) {
            return Err(LearnError::Shape(format!("class label {bad} is not 0 or 1")));
        }
        Ok(Dataset { x, y, domains, ids })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), idx),
            y: idx.iter().map(|i| self.y[*i]).collect(),
            domains: idx.iter().map(|i| self.domains[*i]).collect(),
            ids: idx.iter().map(|i| self.ids[*i].clone()).collect(),
        }
    }

    pub fn concat(parts: &[&Dataset]) -> Result<Dataset, LearnError> {
        let views: Vec<_> = parts.iter().map(|d| d.x.view()).collect();
        let x = ndarray::concatenate(Axis(0), &views).map_err(|e| LearnError::Shape(e.to_string()))?;
        Ok(Dataset {
            x,
            y: parts.iter().flat_map(|d| d.y.iter().copied()).collect(),
            domains: parts.iter().flat_map(|d| d.domains.iter().copied()).collect(),
            ids: parts.iter().flat_map(|d| d.ids.iter().cloned()).collect(),
        })
    }

    /// Seeded split stratified by (class, domain); returns (train, held-out).
    pub fn split(&self, held_out: f64, seed: u64) -> Result<(Dataset, Dataset), LearnError> {
        if !(held_out > 0.0 && held_out < 1.0) {
            return Err(LearnError::Config(format!("validation split must be in (0, 1), got {held_out}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cells: std::collections::BTreeMap<(usize, Option<usize>), Vec<usize>> = Default::default();
        for i in 0..self.len() {
            cells.entry((self.y[i], self.domains[i])).or_default().push(i);
        }
        let (mut train, mut val) = (Vec::new(), Vec::new());
        for (_, mut idx) in cells {
            idx.shuffle(&mut rng);
            let k = (idx.len() as f64 * held_out).round() as usize;
            val.extend_from_slice(&idx[..k]);
            train.extend_from_slice(&idx[k..]);
        }
        train.sort_unstable();
        val.sort_unstable();
        Ok((self.select(&train), self.select(&val)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_stratified_and_seeded() {
        let n = 100;
        let d = Dataset::new(
            Array2::zeros((n, 2)),
            (0..n).map(|i| i % 2).collect(),
            (0..n).map(|i| Some(i % 5 / 2)).collect(),
            (0..n).map(|i| i.to_string()).collect(),
        )
        .unwrap();
        let (a, b) = d.split(0.2, 7).unwrap();
        assert_eq!(a.len() + b.len(), n);
        assert_eq!(b.y.iter().filter(|y| **y == 1).count(), 10);
        assert_eq!(d.split(0.2, 7).unwrap().1, b);
        assert!(d.split(1.0, 7).is_err());
    }
}
