//! From detection logs to contact intervals and a weighted social graph.

use std::collections::{BTreeMap, BTreeSet};

use crate::engine::DetectionLog;
use crate::error::{Error, Result};
use crate::time::SimTime;
use crate::types::{canonical_pair, ContactInterval, SocialGraph, StableId, DEFAULT_SCAN_INTERVAL};

/// A detection whose advertiser identity was resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sighting {
    pub timestamp: SimTime,
    pub scanner: StableId,
    pub peer: StableId,
}

/// Keeps resolved detections only, keyed by stable id rather than MAC, sorted
/// by timestamp. Self-sightings are dropped.
pub fn resolved_sightings(log: &DetectionLog) -> Vec<Sighting> {
    let mut out: Vec<Sighting> = log
        .detections
        .iter()
        .filter_map(|d| {
            let peer = d.resolved_id()?;
            (peer != d.scanner).then_some(Sighting {
                timestamp: d.timestamp,
                scanner: d.scanner,
                peer,
            })
        })
        .collect();
    out.sort_by_key(|s| s.timestamp);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AggregationParams {
    /// Consecutive sightings at most this far apart extend one interval.
    pub gap_tolerance: SimTime,
    /// Intervals shorter than this are discarded.
    pub min_duration: SimTime,
    /// Length given to an interval built from a single sighting.
    pub atom_length: SimTime,
}

impl AggregationParams {
    /// Defaults derived from a scan interval: the gap tolerates one missed
    /// window, and a lone sighting stands for one scan period.
    pub fn for_scan_interval(scan_interval: SimTime) -> Self {
        AggregationParams {
            gap_tolerance: scan_interval.checked_mul(2).unwrap_or(SimTime::MAX),
            min_duration: SimTime::ZERO,
            atom_length: scan_interval,
        }
    }
}

impl Default for AggregationParams {
    fn default() -> Self {
        AggregationParams::for_scan_interval(DEFAULT_SCAN_INTERVAL)
    }
}

/// Merges sightings into per-pair contact intervals.
///
/// Sightings in either direction count for the unordered pair. Chains of
/// sightings with gaps of at most `gap_tolerance` become `[first, last]`; a
/// chain of one sighting becomes `[t, t + atom_length]`. Overlapping or
/// touching results are unioned so each pair's intervals are disjoint, then
/// intervals shorter than `min_duration` (or of zero length) are dropped.
/// Output is sorted by pair, then start.
pub fn aggregate_contacts(sightings: &[Sighting], params: &AggregationParams) -> Vec<ContactInterval> {
    let mut by_pair: BTreeMap<(StableId, StableId), Vec<SimTime>> = BTreeMap::new();
    for s in sightings {
        if let Ok(pair) = canonical_pair(s.scanner, s.peer) {
            by_pair.entry(pair).or_default().push(s.timestamp);
        }
    }

    let mut out = Vec::new();
    for ((a, b), mut times) in by_pair {
        times.sort_unstable();
        times.dedup();

        let mut chains: Vec<(SimTime, SimTime)> = Vec::new();
        for t in times {
            match chains.last_mut() {
                Some(last) if t - last.1 <= params.gap_tolerance => last.1 = t,
                _ => chains.push((t, t)),
            }
        }

        let mut merged: Vec<(SimTime, SimTime)> = Vec::with_capacity(chains.len());
        for (start, mut end) in chains {
            if start == end {
                end = end.checked_add(params.atom_length).unwrap_or(SimTime::MAX);
            }
            match merged.last_mut() {
                Some(last) if start <= last.1 => last.1 = last.1.max(end),
                _ => merged.push((start, end)),
            }
        }

        out.extend(
            merged
                .into_iter()
                .filter(|&(s, e)| s < e && e - s >= params.min_duration)
                .map(|(s, e)| ContactInterval::new(a, b, s, e).expect("canonical pair with start < end")),
        );
    }
    out
}

/// Sums interval durations into undirected edge weights.
pub fn build_graph(intervals: &[ContactInterval]) -> SocialGraph {
    let mut nodes = BTreeSet::new();
    let mut edges: BTreeMap<(StableId, StableId), SimTime> = BTreeMap::new();
    for iv in intervals {
        nodes.insert(iv.a());
        nodes.insert(iv.b());
        let weight = edges.entry(iv.pair()).or_default();
        *weight = *weight + iv.duration();
    }
    SocialGraph::new(nodes, edges).expect("intervals are canonical with positive duration")
}

/// Resolved sightings to graph in one step.
pub fn graph_from_log(log: &DetectionLog, params: &AggregationParams) -> SocialGraph {
    build_graph(&aggregate_contacts(&resolved_sightings(log), params))
}

/// Validates aggregation inputs coming from user configuration.
pub fn check_params(params: &AggregationParams) -> Result<()> {
    if params.atom_length.is_zero() {
        return Err(Error::Domain(
            "atom_length must be > 0 or lone sightings produce no contact".to_string(),
        ));
    }
    Ok(())
}
