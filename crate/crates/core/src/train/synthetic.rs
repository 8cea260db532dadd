//! Periodic bipartite interaction generator.
//!
//! Every user re-contacts one preferred item at a personal period with small timing
//! jitter. The remaining events are noise: a uniform user contacts an item drawn from a
//! Zipf popularity law, at a uniform time. Link features are uniform on `[0, 1)`.

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::{sort_events, EventRecord, LoadedEvents};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub num_events: usize,
    /// Fraction of events that are noise.
    pub noise_fraction: f64,
    pub d_link: usize,
    /// Events fall in `[0, span)`.
    pub span: f64,
    /// User periods are `base · (1 ± period_spread)`, uniform.
    pub period_spread: f64,
    /// Timing jitter std as a fraction of the user's period.
    pub jitter: f64,
    /// Zipf exponent of noise-item popularity.
    pub noise_zipf: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_users: 1000,
            num_items: 1000,
            num_events: 50_000,
            noise_fraction: 0.2,
            d_link: 4,
            span: 1000.0,
            period_spread: 0.2,
            jitter: 0.01,
            noise_zipf: 1.0,
            seed: 0,
        }
    }
}

/// Users are nodes `0..num_users`, items follow.
pub fn generate(config: &SyntheticConfig) -> Result<LoadedEvents> {
    let SyntheticConfig {
        num_users,
        num_items,
        num_events,
        noise_fraction,
        d_link,
        span,
        period_spread,
        jitter,
        noise_zipf,
        seed,
    } = *config;
    if num_users == 0 || num_items == 0 || num_events == 0 {
        return Err(Error::InvalidParameter(
            "synthetic graph needs users, items and events".into(),
        ));
    }
    if !(0.0..1.0).contains(&noise_fraction) || !(0.0..1.0).contains(&period_spread) {
        return Err(Error::InvalidParameter(
            "noise_fraction and period_spread must lie in [0, 1)".into(),
        ));
    }
    if !(span > 0.0 && jitter >= 0.0 && noise_zipf >= 0.0) {
        return Err(Error::InvalidParameter(
            "span must be > 0, jitter and zipf ≥ 0".into(),
        ));
    }
    let mut r = rng::seeded(rng::derive(seed, rng::offset::SYNTHETIC));
    let features = |r: &mut rng::Rng| (0..d_link).map(|_| r.random::<f64>()).collect::<Vec<_>>();

    let mut preferred: Vec<usize> = (0..num_items).collect();
    preferred.shuffle(&mut r);
    let periodic_target = ((1.0 - noise_fraction) * num_events as f64).round() as usize;
    let base = span * num_users as f64 / periodic_target.max(1) as f64;

    let mut events = Vec::with_capacity(num_events);
    'users: for u in 0..num_users {
        let period = base * (1.0 + period_spread * r.random_range(-1.0..=1.0));
        let noise = Normal::new(0.0, jitter * period).expect("finite std");
        let item = num_users + preferred[u % num_items];
        let mut t = r.random_range(0.0..period);
        while t < span {
            if events.len() == periodic_target {
                break 'users;
            }
            let ts = (t + noise.sample(&mut r)).clamp(0.0, span);
            events.push(EventRecord {
                event_id: 0,
                src: u,
                dst: item,
                timestamp: ts,
                link_features: features(&mut r),
            });
            t += period;
        }
    }

    let mut by_popularity: Vec<usize> = (0..num_items).collect();
    by_popularity.shuffle(&mut r);
    let weights = (0..num_items).map(|k| 1.0 / ((k + 1) as f64).powf(noise_zipf));
    let popularity = WeightedIndex::new(weights).expect("positive weights");
    while events.len() < num_events {
        let item = num_users + by_popularity[popularity.sample(&mut r)];
        events.push(EventRecord {
            event_id: 0,
            src: r.random_range(0..num_users),
            dst: item,
            timestamp: r.random_range(0.0..span),
            link_features: features(&mut r),
        });
    }
    sort_events(&mut events);
    Ok(LoadedEvents {
        events,
        num_nodes: num_users + num_items,
        d_link,
        num_sources: num_users,
    })
}
