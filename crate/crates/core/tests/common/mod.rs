#![allow(dead_code)]

use bleprox::contacts::{AggregationParams, Sighting};
use bleprox::engine::{ProximityInterval, Scenario};
use bleprox::types::DEFAULT_APP_SERVICE;
use bleprox::{
    canonical_pair, AppState, ContactInterval, DeviceConfig, MacPolicy, PlatformKind, SimTime, StableId,
    StateSchedule,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn id(v: u128) -> StableId {
    StableId::from_u128(v)
}

pub fn secs(v: u64) -> SimTime {
    SimTime::from_secs(v)
}

/// Random valid scenario with 2..=5 devices, mixed platforms, schedules, MAC
/// policies and timing, drawn from a seeded stream.
pub fn random_scenario(rng: &mut ChaCha8Rng) -> Scenario {
    let n = rng.gen_range(2..=5usize);
    let duration = SimTime::from_millis(rng.gen_range(10_000..=240_000));
    let ids: Vec<StableId> = (0..n).map(|_| StableId::from_u128(rng.gen())).collect();
    let devices = ids
        .iter()
        .map(|&dev_id| {
            let platform = if rng.gen_bool(0.5) { PlatformKind::AndroidLike } else { PlatformKind::IosLike };
            let mut segments = vec![(SimTime::ZERO, AppState::ALL[rng.gen_range(0..3)])];
            for _ in 0..rng.gen_range(0..3) {
                let start = SimTime::from_millis(rng.gen_range(1..duration.as_micros() / 1000));
                segments.push((start, AppState::ALL[rng.gen_range(0..3)]));
            }
            segments.sort_by_key(|s| s.0);
            segments.dedup_by_key(|s| s.0);
            let scan_interval = SimTime::from_millis(rng.gen_range(500..=10_000));
            let scan_window = SimTime::from_millis(rng.gen_range(1..=scan_interval.as_micros() / 1000));
            let adv_interval = SimTime::from_millis(rng.gen_range(20..=2_000));
            let mac_policy = if rng.gen_bool(0.5) {
                MacPolicy::Fixed
            } else {
                MacPolicy::rotating(SimTime::from_millis(rng.gen_range(500..=60_000))).unwrap()
            };
            DeviceConfig {
                device_id: dev_id,
                platform,
                mac_policy,
                schedule: StateSchedule::new(segments).unwrap(),
                adv_interval,
                scan_interval,
                scan_window,
            }
        })
        .collect();
    let mut proximity = Vec::new();
    for _ in 0..rng.gen_range(0..=4) {
        let a = rng.gen_range(0..duration.as_micros());
        let b = rng.gen_range(0..duration.as_micros());
        if a == b {
            continue;
        }
        let (start, end) = (SimTime::from_micros(a.min(b)), SimTime::from_micros(a.max(b)));
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(0.6) {
                    pairs.push((ids[i], ids[j]));
                }
            }
        }
        proximity.push(ProximityInterval::new(start, end, pairs).unwrap());
    }
    let mut sc = Scenario::new(duration, devices, proximity, rng.gen());
    if rng.gen_bool(0.2) {
        sc.resolution.loss_probability = rng.gen_range(0.0..0.5);
    }
    sc.app_service = if rng.gen_bool(0.5) { DEFAULT_APP_SERVICE } else { bleprox::ServiceId::from_u128(rng.gen()) };
    sc
}

pub fn arb_scenario() -> impl Strategy<Value = Scenario> {
    any::<u64>().prop_map(|seed| random_scenario(&mut ChaCha8Rng::seed_from_u64(seed)))
}

/// Five Android handsets with default timing, random pairwise meetings.
pub fn random_android_scenario(rng: &mut ChaCha8Rng, policy: MacPolicy) -> Scenario {
    let ids: Vec<StableId> = (1..=5).map(|i| id(0x1000 + i)).collect();
    let devices = ids
        .iter()
        .map(|&d| {
            let state = AppState::ALL[rng.gen_range(0..3)];
            DeviceConfig::new(d, PlatformKind::AndroidLike).with_state(state).with_mac_policy(policy)
        })
        .collect();
    let duration = secs(600);
    let mut proximity = Vec::new();
    for i in 0..5 {
        for j in i + 1..5 {
            if rng.gen_bool(0.5) {
                let start = rng.gen_range(0..500);
                let len = rng.gen_range(30..=600 - start);
                proximity.push(ProximityInterval::new(secs(start), secs(start + len), [(ids[i], ids[j])]).unwrap());
            }
        }
    }
    Scenario::new(duration, devices, proximity, rng.gen())
}

/// Brute-force contact aggregation: exhaustive pairwise connectivity of
/// sightings within the gap tolerance, then fixed-point pairwise union of the
/// resulting spans.
pub fn oracle_aggregate(sightings: &[Sighting], p: &AggregationParams) -> Vec<ContactInterval> {
    let mut pairs: Vec<(StableId, StableId)> =
        sightings.iter().filter_map(|s| canonical_pair(s.scanner, s.peer).ok()).collect();
    pairs.sort();
    pairs.dedup();
    let mut out = Vec::new();
    for pair in pairs {
        let times: Vec<u64> = sightings
            .iter()
            .filter(|s| canonical_pair(s.scanner, s.peer).ok() == Some(pair))
            .map(|s| s.timestamp.as_micros())
            .collect();
        let n = times.len();
        let mut comp: Vec<usize> = (0..n).collect();
        loop {
            let mut changed = false;
            for i in 0..n {
                for j in 0..n {
                    if times[i].abs_diff(times[j]) <= p.gap_tolerance.as_micros() && comp[i] != comp[j] {
                        let m = comp[i].min(comp[j]);
                        comp[i] = m;
                        comp[j] = m;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut roots = comp.clone();
        roots.sort();
        roots.dedup();
        let mut spans: Vec<(u64, u64)> = roots
            .into_iter()
            .map(|r| {
                let members: Vec<u64> = (0..n).filter(|&i| comp[i] == r).map(|i| times[i]).collect();
                let lo = *members.iter().min().unwrap();
                let hi = *members.iter().max().unwrap();
                if lo == hi {
                    (lo, lo + p.atom_length.as_micros())
                } else {
                    (lo, hi)
                }
            })
            .collect();
        'merge: loop {
            for i in 0..spans.len() {
                for j in 0..spans.len() {
                    if i != j && spans[i].0 <= spans[j].1 && spans[j].0 <= spans[i].1 {
                        let union = (spans[i].0.min(spans[j].0), spans[i].1.max(spans[j].1));
                        spans.remove(i.max(j));
                        spans[i.min(j)] = union;
                        continue 'merge;
                    }
                }
            }
            break;
        }
        spans.sort();
        for (lo, hi) in spans {
            if lo < hi && hi - lo >= p.min_duration.as_micros() {
                out.push(
                    ContactInterval::new(pair.0, pair.1, SimTime::from_micros(lo), SimTime::from_micros(hi)).unwrap(),
                );
            }
        }
    }
    out
}

/// Up to 20 sightings among four devices within two minutes.
pub fn random_sightings(rng: &mut ChaCha8Rng) -> Vec<Sighting> {
    let n = rng.gen_range(0..=20);
    (0..n)
        .filter_map(|_| {
            let a = rng.gen_range(1..=4u128);
            let b = rng.gen_range(1..=4u128);
            (a != b).then(|| Sighting {
                timestamp: SimTime::from_micros(rng.gen_range(0..120_000_000)),
                scanner: id(a),
                peer: id(b),
            })
        })
        .collect()
}

pub fn random_params(rng: &mut ChaCha8Rng) -> AggregationParams {
    AggregationParams {
        gap_tolerance: SimTime::from_micros(rng.gen_range(0..20_000_000)),
        min_duration: SimTime::from_micros(rng.gen_range(0..10_000_000)),
        atom_length: SimTime::from_micros(rng.gen_range(0..15_000_000)),
    }
}
