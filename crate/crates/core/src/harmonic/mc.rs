//! Reversed-walk estimator of the point measure.

use rand::rngs::SmallRng;
use rand::SeedableRng;
use rayon::prelude::*;

use super::{AggregateSet, HarmonicError};
use crate::lattice::{run_walk, BoxRegion, HitTime, Site, StepSource, WalkEnd, WalkSpec};
use crate::seeds::mix;

#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub kept: u64,
    pub discarded: u64,
    /// Discard rate above 1%.
    pub flagged: bool,
}

/// Dense membership mask over the bounding box of the raised sites.
struct Mask {
    bbox: Option<BoxRegion>,
    bits: Vec<bool>,
}

impl Mask {
    fn new(b: &AggregateSet) -> Self {
        let bbox = BoxRegion::bounding(b.raised());
        let mut bits = Vec::new();
        if let Some(bb) = bbox {
            bits = vec![false; (bb.width() * bb.height()) as usize];
            for s in b.raised() {
                bits[Self::offset(&bb, *s)] = true;
            }
        }
        Mask { bbox, bits }
    }

    #[inline]
    fn offset(bb: &BoxRegion, s: Site) -> usize {
        ((s.x2 - bb.y_min) as i64 * bb.width() + (s.x1 - bb.x_min) as i64) as usize
    }

    #[inline]
    fn contains(&self, s: Site) -> bool {
        if s.x2 == 0 {
            return true;
        }
        match &self.bbox {
            Some(bb) if bb.contains(s) => self.bits[Self::offset(bb, s)],
            _ => false,
        }
    }
}

/// Estimates `H_{B,N}(x)` as the mean number of visits to `L_N \ B` made by a
/// walk that leaves `x` by a uniform first step, before it re-enters
/// `B ∪ L_0`. Walks that spend `step_budget` are discarded and counted.
///
/// Replica `i` uses the stream `mix(seed, i)`; counts are summed as integers
/// so the result does not depend on the thread schedule.
pub fn mc_hm_estimate(
    b: &AggregateSet,
    x: Site,
    n: i32,
    replicas: u64,
    seed: u64,
    step_budget: u64,
) -> Result<McEstimate, HarmonicError> {
    if replicas == 0 {
        return Err(HarmonicError::Precondition("replicas must be positive".into()));
    }
    if !b.contains(x) {
        return Err(HarmonicError::Precondition(format!("{x} is not in the aggregate")));
    }
    if n <= x.x2 {
        return Err(HarmonicError::Precondition(format!("N = {n} must exceed the height of {x}")));
    }
    let mask = Mask::new(b);
    let spec = WalkSpec {
        hit_time: HitTime::Inclusive,
        step_budget,
    };
    let domain = BoxRegion::unbounded();

    let one = |i: u64| -> Option<u64> {
        let mut rng = SmallRng::seed_from_u64(mix(seed, i));
        let (dx, dy) = StepSource::new(&mut rng).next_offset();
        if x.x2 + dy < 0 {
            return Some(0);
        }
        let y = Site::new(x.x1 + dx, x.x2 + dy);
        if mask.contains(y) {
            return Some(0);
        }
        let end = run_walk(
            y,
            |s| mask.contains(s),
            &domain,
            Some(|s: Site| s.x2 == n),
            spec,
            &mut rng,
        );
        match end {
            WalkEnd::Absorbed(o) => Some(o.visits_counted),
            WalkEnd::BudgetExhausted { .. } => None,
            WalkEnd::Lost { .. } => unreachable!("unbounded domain"),
        }
    };

    let (sum, sumsq, kept) = (0..replicas)
        .into_par_iter()
        .map(|i| match one(i) {
            Some(v) => (u128::from(v), u128::from(v) * u128::from(v), 1u64),
            None => (0, 0, 0),
        })
        .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));

    let discarded = replicas - kept;
    if kept == 0 {
        return Err(HarmonicError::Numerical("every walk exhausted its step budget".into()));
    }
    let k = kept as f64;
    let mean = sum as f64 / k;
    let var = if kept > 1 {
        ((sumsq as f64) - k * mean * mean).max(0.0) / (k - 1.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        std_error: (var / k).sqrt(),
        kept,
        discarded,
        flagged: discarded as f64 > 0.01 * replicas as f64,
    })
}
