//! Accuracy, confusion matrices, timing and per-epoch history.

use std::ops::AddAssign;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mnist::CLASSES;
use crate::nn::Sequential;
use crate::svm::LinearModel;
use crate::tensor::{Scalar, Tensor};

/// Rows are true labels, columns are predictions.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionMatrix {
    pub counts: [[u64; CLASSES]; CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..CLASSES).map(|k| self.counts[k][k]).sum()
    }

    /// `trace / total`.
    pub fn accuracy(&self) -> Result<f64> {
        match self.total() {
            0 => Err(Error::Domain("accuracy of an empty confusion matrix".into())),
            total => Ok(self.trace() as f64 / total as f64),
        }
    }

    pub fn merge(mut self, other: &ConfusionMatrix) -> ConfusionMatrix {
        self += other;
        self
    }
}

impl AddAssign<&ConfusionMatrix> for ConfusionMatrix {
    fn add_assign(&mut self, other: &ConfusionMatrix) {
        for (row, other_row) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in row.iter_mut().zip(other_row) {
                *a += b;
            }
        }
    }
}

/// Tallies `(truth, prediction)` pairs.
pub fn confusion<A, B>(truth: &[A], predicted: &[B]) -> Result<ConfusionMatrix>
where
    A: Copy + Into<usize>,
    B: Copy + Into<usize>,
{
    if truth.len() != predicted.len() {
        return Err(Error::Domain(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in truth.iter().zip(predicted) {
        let (t, p) = (t.into(), p.into());
        if t >= CLASSES || p >= CLASSES {
            return Err(Error::Domain(format!("label pair ({t}, {p}) outside 0..{CLASSES}")));
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    cm.accuracy()
}

/// Wall-clock measurement of one labelled region.
#[derive(Clone, Debug, PartialEq)]
pub struct Timing {
    pub label: String,
    pub seconds: f64,
}

/// Runs `thunk` and measures it on the monotonic clock.
pub fn timed<T>(label: &str, thunk: impl FnOnce() -> T) -> (T, Timing) {
    let start = Instant::now();
    let value = thunk();
    let timing = Timing {
        label: label.to_owned(),
        seconds: start.elapsed().as_secs_f64(),
    };
    (value, timing)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub seconds: f64,
}

/// Checks that epochs run 1, 2, 3, … with no gaps.
pub fn check_history(history: &[EpochRecord]) -> Result<()> {
    for (i, rec) in history.iter().enumerate() {
        if rec.epoch != i + 1 {
            return Err(Error::Domain(format!("epoch {} recorded at position {i}", rec.epoch)));
        }
        if !(0.0..=1.0).contains(&rec.accuracy) || rec.seconds < 0.0 || !rec.loss.is_finite() {
            return Err(Error::Domain(format!("malformed epoch record {rec:?}")));
        }
    }
    Ok(())
}

/// Splits `0..n` into at most `shards` contiguous, non-empty ranges.
fn shard_ranges(n: usize, shards: usize) -> Vec<(usize, usize)> {
    let shards = shards.clamp(1, n.max(1));
    let base = n / shards;
    let extra = n % shards;
    let mut start = 0;
    (0..shards)
        .map(|s| {
            let len = base + usize::from(s < extra);
            let range = (start, start + len);
            start += len;
            range
        })
        .filter(|(a, b)| a < b)
        .collect()
}

fn eval_sharded(
    n: usize,
    labels: &[u8],
    shards: usize,
    predict: impl Fn(usize, usize) -> Result<Vec<usize>> + Sync,
) -> Result<ConfusionMatrix> {
    if labels.len() != n {
        return Err(Error::Domain(format!("{n} inputs but {} labels", labels.len())));
    }
    let ranges = shard_ranges(n, shards);
    let tally = |(start, end): (usize, usize)| -> Result<ConfusionMatrix> {
        let pred = predict(start, end)?;
        confusion(&labels[start..end], &pred)
    };
    let parts: Vec<Result<ConfusionMatrix>> = if ranges.len() <= 1 {
        ranges.into_iter().map(tally).collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = ranges
                .into_iter()
                .map(|r| scope.spawn(move || tally(r)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("evaluation worker panicked"))
                .collect()
        })
    };
    parts
        .into_iter()
        .try_fold(ConfusionMatrix::default(), |acc, part| Ok(acc.merge(&part?)))
}

/// Evaluation-mode confusion matrix of a layer stack, sharded over `shards` threads.
pub fn evaluate_stack<T: Scalar>(
    stack: &Sequential<T>,
    inputs: &Tensor<T>,
    labels: &[u8],
    batch_size: usize,
    shards: usize,
) -> Result<ConfusionMatrix> {
    let batch_size = batch_size.max(1);
    eval_sharded(inputs.outer_len(), labels, shards, |start, end| {
        let mut pred = Vec::with_capacity(end - start);
        let mut s = start;
        while s < end {
            let e = (s + batch_size).min(end);
            pred.extend(stack.predict(&inputs.slice_outer(s, e)?)?);
            s = e;
        }
        Ok(pred)
    })
}

pub fn evaluate_linear<T: Scalar>(
    model: &LinearModel<T>,
    inputs: &Tensor<T>,
    labels: &[u8],
    shards: usize,
) -> Result<ConfusionMatrix> {
    eval_sharded(inputs.outer_len(), labels, shards, |start, end| {
        model.predict(&inputs.slice_outer(start, end)?)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions_are_diagonal() {
        let labels: Vec<u8> = (0..30).map(|i| (i % 10) as u8).collect();
        let cm = confusion(&labels, &labels).unwrap();
        for t in 0..CLASSES {
            for p in 0..CLASSES {
                assert_eq!(cm.counts[t][p], if t == p { 3 } else { 0 });
            }
        }
        assert_eq!(cm.accuracy().unwrap(), 1.0);
    }

    #[test]
    fn single_off_diagonal_sample() {
        let cm = confusion(&[3u8], &[5usize]).unwrap();
        assert_eq!(cm.counts[3][5], 1);
        assert_eq!(cm.total(), 1);
        assert_eq!(cm.accuracy().unwrap(), 0.0);
    }

    #[test]
    fn error_paths() {
        assert!(matches!(confusion(&[1u8, 2], &[1usize]), Err(Error::Domain(_))));
        assert!(matches!(ConfusionMatrix::default().accuracy(), Err(Error::Domain(_))));
        assert!(confusion(&[11u8], &[0usize]).is_err());
    }

    #[test]
    fn noop_timer_is_fast_and_nested_timers_dominate() {
        let ((), t) = timed("noop", || ());
        assert!(t.seconds < 0.01);
        let ((_, inner), outer) = timed("outer", || timed("inner", || (0..10_000u64).sum::<u64>()));
        assert!(outer.seconds >= inner.seconds);
        assert_eq!(outer.label, "outer");
    }

    #[test]
    fn history_checks() {
        let rec = |epoch| EpochRecord { epoch, loss: 1.0, accuracy: 0.5, seconds: 0.1 };
        assert!(check_history(&[rec(1), rec(2), rec(3)]).is_ok());
        assert!(check_history(&[rec(1), rec(3)]).is_err());
        assert!(check_history(&[rec(2)]).is_err());
    }

    #[test]
    fn shard_ranges_cover_everything() {
        assert_eq!(shard_ranges(10, 3), vec![(0, 4), (4, 7), (7, 10)]);
        assert_eq!(shard_ranges(2, 8), vec![(0, 1), (1, 2)]);
        assert_eq!(shard_ranges(5, 0), vec![(0, 5)]);
    }

    proptest! {
        #[test]
        fn matrix_accuracy_equals_direct_count(
            pairs in proptest::collection::vec((0u8..10, 0usize..10), 1..200)
        ) {
            let (truth, pred): (Vec<u8>, Vec<usize>) = pairs.into_iter().unzip();
            let cm = confusion(&truth, &pred).unwrap();
            let direct = truth.iter().zip(&pred).filter(|(&t, &p)| t as usize == p).count() as f64
                / truth.len() as f64;
            prop_assert_eq!(cm.total(), truth.len() as u64);
            prop_assert_eq!(cm.accuracy().unwrap(), direct);
        }

        #[test]
        fn merge_is_commutative_and_associative(
            a in proptest::collection::vec((0u8..10, 0usize..10), 0..50),
            b in proptest::collection::vec((0u8..10, 0usize..10), 0..50),
            c in proptest::collection::vec((0u8..10, 0usize..10), 0..50),
        ) {
            let cm = |v: &[(u8, usize)]| {
                let (t, p): (Vec<u8>, Vec<usize>) = v.iter().copied().unzip();
                confusion(&t, &p).unwrap()
            };
            let (a, b, c) = (cm(&a), cm(&b), cm(&c));
            prop_assert_eq!(a.clone().merge(&b), b.clone().merge(&a));
            prop_assert_eq!(a.clone().merge(&b).merge(&c), a.merge(&b.merge(&c)));
        }
    }
}
