use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, Result, SampleSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Stacked samples: `x` is `B×N×T`, `y` is `B×N×K`, `tf` is `B×N×3T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Indices into the originating [`SampleSet`].
    pub indices: Vec<usize>,
    pub sensors: usize,
    pub input_steps: usize,
    pub horizon: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub tf: Vec<f64>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.indices.len()
    }

    pub fn x_tensor<S: Scalar>(&self) -> Tensor<S> {
        Tensor::from_f64(&[self.size(), self.sensors, self.input_steps], &self.x)
            .expect("batch layout")
    }

    pub fn y_tensor<S: Scalar>(&self) -> Tensor<S> {
        Tensor::from_f64(&[self.size(), self.sensors, self.horizon], &self.y).expect("batch layout")
    }

    pub fn tf_tensor<S: Scalar>(&self) -> Tensor<S> {
        Tensor::from_f64(&[self.size(), self.sensors, 3 * self.input_steps], &self.tf)
            .expect("batch layout")
    }
}

/// Batches in a permutation fixed at construction.
#[derive(Debug)]
pub struct BatchIter<'a> {
    set: &'a SampleSet,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl BatchIter<'_> {
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

/// Chronological batches, or a seeded shuffle when `shuffle` is set. The last
/// partial batch is kept.
pub fn iterate_batches(
    set: &SampleSet,
    batch_size: usize,
    shuffle: bool,
    seed: u64,
) -> Result<BatchIter<'_>> {
    if batch_size == 0 {
        return Err(DataError::Config("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..set.len()).collect();
    if shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(BatchIter {
        set,
        order,
        batch_size,
        pos: 0,
    })
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        let mut batch = Batch {
            indices: Vec::new(),
            sensors: self.set.sensors(),
            input_steps: self.set.input_steps(),
            horizon: self.set.horizon(),
            x: Vec::new(),
            y: Vec::new(),
            tf: Vec::new(),
        };
        for &i in &indices {
            let s = self.set.get(i);
            batch.x.extend(s.x);
            batch.y.extend(s.y);
            batch.tf.extend(s.tf);
        }
        batch.indices = indices;
        Some(batch)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::data::series::test_meta;
    use crate::data::{make_windows, RawSeries};

    fn set(samples: usize) -> SampleSet {
        let steps = samples + 3;
        let raw = RawSeries::new((0..steps * 2).map(|v| v as f64).collect(), steps, 2, test_meta()).unwrap();
        make_windows(Arc::new(raw), None, 2, 2).unwrap()
    }

    #[test]
    fn sizes_with_partial_tail() {
        let s = set(10);
        let sizes: Vec<_> = iterate_batches(&s, 4, false, 0).unwrap().map(|b| b.size()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        assert!(iterate_batches(&s, 0, false, 0).is_err());
    }

    #[test]
    fn unshuffled_is_chronological_and_shuffle_is_seeded() {
        let s = set(10);
        let it = iterate_batches(&s, 3, false, 9).unwrap();
        assert_eq!(it.order(), &(0..10).collect::<Vec<_>>()[..]);
        let a = iterate_batches(&s, 3, true, 7).unwrap().order().to_vec();
        let b = iterate_batches(&s, 3, true, 7).unwrap().order().to_vec();
        let c = iterate_batches(&s, 3, true, 8).unwrap().order().to_vec();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn batch_tensors_have_sample_layout() {
        let s = set(5);
        let b = iterate_batches(&s, 2, false, 0).unwrap().next().unwrap();
        let x = b.x_tensor::<f64>();
        assert_eq!(x.shape(), &[2, 2, 2]);
        assert_eq!(x.at(&[1, 0, 0]), s.get(1).x[0]);
        assert_eq!(b.tf_tensor::<f64>().shape(), &[2, 2, 6]);
    }
}
