//! Chronological mini-batches with one resampled-destination negative per positive.

use std::ops::Range;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{EventRecord, TemporalGraph};
use crate::rng::Rng;

/// Resampling attempts before a colliding negative is accepted.
pub const MAX_NEGATIVE_TRIES: usize = 100;

/// Where negative destinations are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NegativeSampling {
    /// The destination-id block of a bipartite graph, or every node otherwise.
    #[default]
    Destinations,
    AllNodes,
}

impl NegativeSampling {
    pub fn range(self, graph: &TemporalGraph) -> Range<usize> {
        match self {
            NegativeSampling::Destinations => graph.destination_range(),
            NegativeSampling::AllNodes => 0..graph.num_nodes(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSample {
    pub src: usize,
    pub dst: usize,
    pub t0: f64,
}

/// `negatives[i]` shares `src` and `t0` with `positives[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub positives: Vec<PairSample>,
    pub negatives: Vec<PairSample>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty()
    }

    /// `(sample, label)` pairs: all positives, then all negatives.
    pub fn labeled(&self) -> impl Iterator<Item = (PairSample, bool)> + '_ {
        self.positives
            .iter()
            .map(|p| (*p, true))
            .chain(self.negatives.iter().map(|n| (*n, false)))
    }
}

/// Uniform draw from `range`, redrawn while it equals `avoid`.
pub fn sample_negative(rng: &mut Rng, range: &Range<usize>, avoid: usize) -> usize {
    let mut d = rng.random_range(range.clone());
    for _ in 1..MAX_NEGATIVE_TRIES {
        if d != avoid {
            break;
        }
        d = rng.random_range(range.clone());
    }
    d
}

/// Positives are `events[range]` in order, `batch_size` at a time.
pub fn make_batches(
    events: &[EventRecord],
    range: Range<usize>,
    batch_size: usize,
    negative_range: Range<usize>,
    rng: &mut Rng,
) -> Result<Vec<Batch>> {
    if range.is_empty() || range.end > events.len() {
        return Err(Error::EmptyRange(format!(
            "{range:?} over {} events",
            events.len()
        )));
    }
    if batch_size == 0 {
        return Err(Error::InvalidParameter("batch_size must be ≥ 1".into()));
    }
    if negative_range.is_empty() {
        return Err(Error::EmptyRange("negative destination range".into()));
    }
    Ok(events[range]
        .chunks(batch_size)
        .map(|chunk| {
            let positives: Vec<PairSample> = chunk
                .iter()
                .map(|e| PairSample {
                    src: e.src,
                    dst: e.dst,
                    t0: e.timestamp,
                })
                .collect();
            let negatives = positives
                .iter()
                .map(|p| PairSample {
                    dst: sample_negative(rng, &negative_range, p.dst),
                    ..*p
                })
                .collect();
            Batch { positives, negatives }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn events(n: usize) -> Vec<EventRecord> {
        (0..n)
            .map(|i| EventRecord {
                event_id: i,
                src: i % 7,
                dst: 7 + i % 5,
                timestamp: i as f64,
                link_features: vec![],
            })
            .collect()
    }

    #[test]
    fn sizes_and_mirroring() {
        let ev = events(1200);
        let b = make_batches(&ev, 0..1200, 600, 7..12, &mut seeded(1)).unwrap();
        assert_eq!(b.len(), 2);
        for batch in &b {
            assert_eq!(batch.positives.len(), 600);
            assert_eq!(batch.negatives.len(), 600);
            for (p, n) in batch.positives.iter().zip(&batch.negatives) {
                assert_eq!((p.src, p.t0), (n.src, n.t0));
                assert!((7..12).contains(&n.dst) && n.dst != p.dst);
            }
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let ev = events(50);
        let a = make_batches(&ev, 3..50, 16, 7..12, &mut seeded(4)).unwrap();
        let b = make_batches(&ev, 3..50, 16, 7..12, &mut seeded(4)).unwrap();
        let c = make_batches(&ev, 3..50, 16, 7..12, &mut seeded(5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.last().unwrap().positives.len(), 47 % 16);
    }

    #[test]
    fn errors() {
        let ev = events(5);
        assert!(matches!(
            make_batches(&ev, 2..2, 4, 0..5, &mut seeded(0)),
            Err(Error::EmptyRange(_))
        ));
        assert!(make_batches(&ev, 0..9, 4, 0..5, &mut seeded(0)).is_err());
        assert!(make_batches(&ev, 0..5, 0, 0..5, &mut seeded(0)).is_err());
    }

    #[test]
    fn single_destination_accepts_collision() {
        assert_eq!(sample_negative(&mut seeded(0), &(3..4), 3), 3);
    }
}
