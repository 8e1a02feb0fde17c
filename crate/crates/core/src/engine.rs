//! Discrete-event simulation of advertising and scanning.
//!
//! Each device advertises at `k * adv_interval + jitter(k)` and scans during
//! `[k * scan_interval, k * scan_interval + scan_window)`. An advertisement
//! becomes a [`Detection`] for every other device whose scan window is open at
//! that instant, that is in radio range, and whose current scan capability can
//! decode the packet.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::platform::{self, BehaviorTable, ResolutionModel};
use crate::time::SimTime;
use crate::types::{
    canonical_pair, AppState, DeviceConfig, Detection, MacAddress, MacPolicy, PlatformKind, ServiceId, StableId,
    DEFAULT_APP_SERVICE,
};

/// Upper bound of the per-advertisement random delay.
pub const DEFAULT_JITTER_MAX: SimTime = SimTime::from_millis(10);

/// Per-cell duration used by the detection matrix harness.
pub const DEFAULT_MATRIX_DURATION: SimTime = SimTime::from_secs(60);

/// Minimum expected detections per direction the matrix harness accepts.
pub const MIN_EXPECTED_HITS: u64 = 10;

/// A span during which a set of device pairs is in radio range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProximityInterval {
    pub start: SimTime,
    pub end: SimTime,
    pub pairs: BTreeSet<(StableId, StableId)>,
}

impl ProximityInterval {
    /// Pairs are stored canonically; self-pairs are rejected.
    pub fn new(start: SimTime, end: SimTime, pairs: impl IntoIterator<Item = (StableId, StableId)>) -> Result<Self> {
        let pairs = pairs
            .into_iter()
            .map(|(x, y)| canonical_pair(x, y))
            .collect::<Result<BTreeSet<_>>>()?;
        Ok(ProximityInterval { start, end, pairs })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub duration: SimTime,
    pub devices: Vec<DeviceConfig>,
    pub proximity: Vec<ProximityInterval>,
    pub app_service: ServiceId,
    pub seed: u64,
    pub resolution: ResolutionModel,
    pub jitter_max: SimTime,
}

impl Scenario {
    pub fn new(duration: SimTime, devices: Vec<DeviceConfig>, proximity: Vec<ProximityInterval>, seed: u64) -> Self {
        Scenario {
            duration,
            devices,
            proximity,
            app_service: DEFAULT_APP_SERVICE,
            seed,
            resolution: ResolutionModel::default(),
            jitter_max: DEFAULT_JITTER_MAX,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if self.duration.is_zero() {
            return bad("duration must be > 0".to_string());
        }
        let mut ids = BTreeSet::new();
        for dev in &self.devices {
            dev.validate()?;
            if !ids.insert(dev.device_id) {
                return bad(format!("duplicate device id {}", dev.device_id));
            }
            if dev.adv_interval <= self.jitter_max {
                return bad(format!(
                    "device {}: adv_interval {} must exceed jitter_max {}",
                    dev.device_id, dev.adv_interval, self.jitter_max
                ));
            }
        }
        for (i, p) in self.proximity.iter().enumerate() {
            if p.start >= p.end {
                return bad(format!("proximity interval {i}: start {} is not before end {}", p.start, p.end));
            }
            if p.end > self.duration {
                return bad(format!(
                    "proximity interval {i}: end {} exceeds scenario duration {}",
                    p.end, self.duration
                ));
            }
            for &(a, b) in &p.pairs {
                if a == b {
                    return Err(Error::SelfPair(a));
                }
                for id in [a, b] {
                    if !ids.contains(&id) {
                        return bad(format!("proximity interval {i} references unknown device {id}"));
                    }
                }
            }
        }
        self.resolution.validate()
    }

    pub fn device(&self, id: StableId) -> Option<&DeviceConfig> {
        self.devices.iter().find(|d| d.device_id == id)
    }
}

/// Per-pair union of proximity intervals as sorted, disjoint half-open spans.
#[derive(Debug, Clone, Default)]
pub struct RangeIndex {
    spans: HashMap<(StableId, StableId), Vec<(SimTime, SimTime)>>,
}

impl RangeIndex {
    pub fn new(proximity: &[ProximityInterval]) -> Self {
        let mut raw: HashMap<(StableId, StableId), Vec<(SimTime, SimTime)>> = HashMap::new();
        for p in proximity {
            for &pair in &p.pairs {
                raw.entry(pair).or_default().push((p.start, p.end));
            }
        }
        for spans in raw.values_mut() {
            spans.sort();
            let mut merged: Vec<(SimTime, SimTime)> = Vec::with_capacity(spans.len());
            for &(s, e) in spans.iter() {
                match merged.last_mut() {
                    Some(last) if s <= last.1 => last.1 = last.1.max(e),
                    _ => merged.push((s, e)),
                }
            }
            *spans = merged;
        }
        RangeIndex { spans: raw }
    }

    /// The co-presence span containing `t`, if the pair is in range at `t`.
    pub fn span_at(&self, x: StableId, y: StableId, t: SimTime) -> Option<(SimTime, SimTime)> {
        let pair = canonical_pair(x, y).ok()?;
        let spans = self.spans.get(&pair)?;
        let idx = spans.partition_point(|&(s, _)| s <= t);
        let (s, e) = *spans.get(idx.checked_sub(1)?)?;
        (t < e).then_some((s, e))
    }

    pub fn in_range(&self, x: StableId, y: StableId, t: SimTime) -> bool {
        self.span_at(x, y, t).is_some()
    }

    /// Total co-presence time of a pair.
    pub fn copresence(&self, x: StableId, y: StableId) -> SimTime {
        canonical_pair(x, y)
            .ok()
            .and_then(|p| self.spans.get(&p))
            .map(|spans| spans.iter().fold(SimTime::ZERO, |acc, &(s, e)| acc + (e - s)))
            .unwrap_or(SimTime::ZERO)
    }
}

/// Detections from one run, ordered by `(timestamp, scanner, observed_mac)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionLog {
    pub seed: u64,
    pub duration: SimTime,
    pub detections: Vec<Detection>,
}

impl DetectionLog {
    pub fn new(seed: u64, duration: SimTime, mut detections: Vec<Detection>) -> Self {
        detections.sort_by_key(|d| d.sort_key());
        DetectionLog {
            seed,
            duration,
            detections,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }
}

/// Kind rank doubles as the tie-break at equal timestamps: a window that closes
/// at `t` is shut before one opening at `t`, and both before advertisements at
/// `t` are delivered, matching half-open scan windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    ScanClose,
    ScanOpen { k: u64 },
    Advertise { k: u64 },
}

impl EventKind {
    fn rank(self) -> u8 {
        match self {
            EventKind::ScanClose => 0,
            EventKind::ScanOpen { .. } => 1,
            EventKind::Advertise { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    time: SimTime,
    rank: u8,
    device: StableId,
    device_idx: usize,
    kind: EventKind,
}

impl Event {
    fn new(time: SimTime, device: StableId, device_idx: usize, kind: EventKind) -> Self {
        Event {
            time,
            rank: kind.rank(),
            device,
            device_idx,
            kind,
        }
    }
}

/// Independent deterministic stream for one device and purpose, keyed by the
/// device id so results do not depend on device ordering.
fn derived_rng(seed: u64, device: StableId, purpose: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(device.as_u128().to_le_bytes());
    h.update(purpose.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

struct DeviceState {
    scanning: bool,
    mac: MacAddress,
    last_rotation: SimTime,
    jitter_rng: ChaCha8Rng,
    mac_rng: ChaCha8Rng,
    loss_rng: ChaCha8Rng,
}

fn adv_time(dev: &DeviceConfig, k: u64, rng: &mut ChaCha8Rng, jitter_max: SimTime) -> Option<SimTime> {
    let jitter = rng.gen_range(0..=jitter_max.as_micros());
    dev.adv_interval
        .checked_mul(k)
        .and_then(|base| base.checked_add(SimTime::from_micros(jitter)))
}

/// Runs the scenario to completion. Output depends only on the arguments.
pub fn run(scenario: &Scenario, table: &BehaviorTable) -> Result<DetectionLog> {
    scenario.validate()?;
    let devices = &scenario.devices;
    let range = RangeIndex::new(&scenario.proximity);
    let duration = scenario.duration;

    let mut states: Vec<DeviceState> = devices
        .iter()
        .map(|d| {
            let mut mac_rng = derived_rng(scenario.seed, d.device_id, "mac");
            let mac = match d.mac_policy {
                MacPolicy::Fixed => MacAddress::public_for(d.device_id),
                MacPolicy::RotatingRandom { .. } => platform::random_mac(&mut mac_rng),
            };
            DeviceState {
                scanning: false,
                mac,
                last_rotation: SimTime::ZERO,
                jitter_rng: derived_rng(scenario.seed, d.device_id, "jitter"),
                mac_rng,
                loss_rng: derived_rng(scenario.seed, d.device_id, "loss"),
            }
        })
        .collect();

    // scanners in id order so per-advertisement delivery is ordered too
    let mut scan_order: Vec<usize> = (0..devices.len()).collect();
    scan_order.sort_by_key(|&i| devices[i].device_id);

    let mut queue = BinaryHeap::new();
    for (idx, dev) in devices.iter().enumerate() {
        queue.push(Reverse(Event::new(SimTime::ZERO, dev.device_id, idx, EventKind::ScanOpen { k: 0 })));
        if let Some(t) = adv_time(dev, 0, &mut states[idx].jitter_rng, scenario.jitter_max) {
            if t < duration {
                queue.push(Reverse(Event::new(t, dev.device_id, idx, EventKind::Advertise { k: 0 })));
            }
        }
    }

    let mut detections = Vec::new();
    while let Some(Reverse(ev)) = queue.pop() {
        let idx = ev.device_idx;
        let dev = &devices[idx];
        match ev.kind {
            EventKind::ScanClose => states[idx].scanning = false,
            EventKind::ScanOpen { k } => {
                states[idx].scanning = true;
                queue.push(Reverse(Event::new(ev.time + dev.scan_window, dev.device_id, idx, EventKind::ScanClose)));
                if let Some(next) = dev.scan_interval.checked_mul(k + 1).filter(|&t| t < duration) {
                    queue.push(Reverse(Event::new(next, dev.device_id, idx, EventKind::ScanOpen { k: k + 1 })));
                }
            }
            EventKind::Advertise { k } => {
                let t = ev.time;
                let st = &mut states[idx];
                if let MacPolicy::RotatingRandom { rotation_period } = dev.mac_policy {
                    let elapsed = t.saturating_sub(st.last_rotation);
                    st.mac = platform::next_mac(&dev.mac_policy, st.mac, elapsed, &mut st.mac_rng);
                    if elapsed >= rotation_period {
                        st.last_rotation = t;
                    }
                }
                let state = dev.schedule.state_at(t);
                let packet = platform::compose_advertisement(table, dev, state, st.mac, t, scenario.app_service);

                for &scanner_idx in &scan_order {
                    if scanner_idx == idx || !states[scanner_idx].scanning {
                        continue;
                    }
                    let scanner = &devices[scanner_idx];
                    let Some((_, span_end)) = range.span_at(dev.device_id, scanner.device_id, t) else {
                        continue;
                    };
                    let cap = table.scan_rule(scanner.platform, scanner.schedule.state_at(t));
                    if !platform::can_decode(&cap, &packet, scenario.app_service) {
                        continue;
                    }
                    let window = span_end - t;
                    let mut resolved =
                        platform::resolve_identifier(&cap, dev, window, scenario.resolution.connect_latency);
                    if resolved.is_some() && scenario.resolution.loss_probability > 0.0 {
                        let lost = states[scanner_idx]
                            .loss_rng
                            .gen_bool(scenario.resolution.loss_probability);
                        if lost {
                            resolved = None;
                        }
                    }
                    detections.push(
                        Detection::new(t, scanner.device_id, packet.sender_mac, true, resolved)
                            .expect("resolved detections are always service-confirmed"),
                    );
                }

                let st = &mut states[idx];
                if let Some(next) = adv_time(dev, k + 1, &mut st.jitter_rng, scenario.jitter_max) {
                    if next < duration {
                        queue.push(Reverse(Event::new(next, dev.device_id, idx, EventKind::Advertise { k: k + 1 })));
                    }
                }
            }
        }
    }

    Ok(DetectionLog::new(scenario.seed, duration, detections))
}

/// Counts advertisement events per device without recording detections.
pub fn advertisement_counts(scenario: &Scenario) -> Result<BTreeMap<StableId, u64>> {
    scenario.validate()?;
    let mut out = BTreeMap::new();
    for dev in &scenario.devices {
        let mut rng = derived_rng(scenario.seed, dev.device_id, "jitter");
        let mut k = 0;
        while let Some(t) = adv_time(dev, k, &mut rng, scenario.jitter_max) {
            if t >= scenario.duration {
                break;
            }
            k += 1;
        }
        out.insert(dev.device_id, k);
    }
    Ok(out)
}

/// A detection that could not have been produced by the scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayViolation {
    pub index: usize,
    pub reason: String,
}

/// Checks every detection against the scenario's rules: the scanner had a scan
/// window open, some advertiser was in range and advertising at that instant,
/// and the scanner's capability decodes that advertiser's packet. For resolved
/// detections the advertiser must be the resolved device, and the remaining
/// co-presence must cover the connect latency.
pub fn replay_violations(scenario: &Scenario, table: &BehaviorTable, log: &DetectionLog) -> Vec<ReplayViolation> {
    let range = RangeIndex::new(&scenario.proximity);
    let mut out = Vec::new();
    let mut fail = |index: usize, reason: String| out.push(ReplayViolation { index, reason });

    for (i, det) in log.detections.iter().enumerate() {
        let t = det.timestamp;
        if t >= scenario.duration {
            fail(i, "timestamp beyond scenario duration".to_string());
            continue;
        }
        let Some(scanner) = scenario.device(det.scanner) else {
            fail(i, format!("unknown scanner {}", det.scanner));
            continue;
        };
        let phase = t.as_micros() % scanner.scan_interval.as_micros();
        if phase >= scanner.scan_window.as_micros() {
            fail(i, "outside the scanner's scan window".to_string());
            continue;
        }
        if !det.service_confirmed() {
            fail(i, "unconfirmed detection".to_string());
            continue;
        }
        let cap = table.scan_rule(scanner.platform, scanner.schedule.state_at(t));
        let advertising_now = |adv: &DeviceConfig| {
            let k = t.as_micros() / adv.adv_interval.as_micros();
            (k.saturating_sub(1)..=k).any(|k| {
                let base = k * adv.adv_interval.as_micros();
                t.as_micros() >= base && t.as_micros() - base <= scenario.jitter_max.as_micros()
            })
        };
        let explains = |adv: &DeviceConfig| {
            if adv.device_id == scanner.device_id || !advertising_now(adv) {
                return false;
            }
            if !range.in_range(adv.device_id, scanner.device_id, t) {
                return false;
            }
            let packet = platform::compose_advertisement(
                table,
                adv,
                adv.schedule.state_at(t),
                det.observed_mac,
                t,
                scenario.app_service,
            );
            platform::can_decode(&cap, &packet, scenario.app_service)
        };
        match det.resolved_id() {
            Some(peer) => match scenario.device(peer) {
                None => fail(i, format!("resolved to unknown device {peer}")),
                Some(adv) if !explains(adv) => fail(i, format!("resolved peer {peer} cannot explain the sighting")),
                Some(adv) => {
                    let (_, end) = range
                        .span_at(adv.device_id, scanner.device_id, t)
                        .expect("explains() checked range");
                    if !cap.can_connect() || end - t < scenario.resolution.connect_latency {
                        fail(i, "identifier resolution not possible at this instant".to_string());
                    }
                }
            },
            None => {
                if !scenario.devices.iter().any(explains) {
                    fail(i, "no advertiser can explain the sighting".to_string());
                }
            }
        }
    }
    out
}

/// Row/column order of the detection matrix.
pub const MATRIX_CONFIGS: [(PlatformKind, AppState); 6] = [
    (PlatformKind::AndroidLike, AppState::Foreground),
    (PlatformKind::AndroidLike, AppState::Background),
    (PlatformKind::AndroidLike, AppState::Locked),
    (PlatformKind::IosLike, AppState::Foreground),
    (PlatformKind::IosLike, AppState::Background),
    (PlatformKind::IosLike, AppState::Locked),
];

/// Observed handset results: every pairing detected except two locked iOS devices.
pub const REFERENCE_MATRIX: [[bool; 6]; 6] = [
    [true, true, true, true, true, true],
    [true, true, true, true, true, true],
    [true, true, true, true, true, true],
    [true, true, true, true, true, true],
    [true, true, true, true, true, true],
    [true, true, true, true, true, false],
];

pub fn matrix_label(i: usize) -> String {
    let (p, s) = MATRIX_CONFIGS[i];
    format!("{}-{}", p.label(), s.short_label())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CellResult {
    /// Resolved detections where the row device scanned the column device.
    pub row_saw_col: usize,
    /// Resolved detections where the column device scanned the row device.
    pub col_saw_row: usize,
}

impl CellResult {
    /// One resolved detection in either direction counts as detecting each other.
    pub fn pass(&self) -> bool {
        self.row_saw_col > 0 || self.col_saw_row > 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionMatrix {
    pub cells: [[CellResult; 6]; 6],
}

impl DetectionMatrix {
    pub fn passes(&self) -> [[bool; 6]; 6] {
        let mut out = [[false; 6]; 6];
        for (r, row) in self.cells.iter().enumerate() {
            for (c, cell) in row.iter().enumerate() {
                out[r][c] = cell.pass();
            }
        }
        out
    }

    pub fn pass_count(&self) -> usize {
        self.passes().iter().flatten().filter(|&&p| p).count()
    }

    /// Cells that disagree with [`REFERENCE_MATRIX`].
    pub fn mismatches(&self) -> Vec<(usize, usize)> {
        let passes = self.passes();
        let mut out = Vec::new();
        for r in 0..6 {
            for c in 0..6 {
                if passes[r][c] != REFERENCE_MATRIX[r][c] {
                    out.push((r, c));
                }
            }
        }
        out
    }

    pub fn matches_reference(&self) -> bool {
        self.mismatches().is_empty()
    }
}

/// Inputs for the two-device detection matrix. The templates supply timing and
/// MAC policy; platform and state are overridden per cell.
#[derive(Debug, Clone)]
pub struct MatrixHarness {
    pub template_a: DeviceConfig,
    pub template_b: DeviceConfig,
    pub duration: SimTime,
    pub seed: u64,
    pub app_service: ServiceId,
    pub resolution: ResolutionModel,
    pub jitter_max: SimTime,
}

impl Default for MatrixHarness {
    fn default() -> Self {
        MatrixHarness {
            template_a: DeviceConfig::new(StableId::from_u128(0xa), PlatformKind::AndroidLike),
            template_b: DeviceConfig::new(StableId::from_u128(0xb), PlatformKind::AndroidLike),
            duration: DEFAULT_MATRIX_DURATION,
            seed: 0,
            app_service: DEFAULT_APP_SERVICE,
            resolution: ResolutionModel::default(),
            jitter_max: DEFAULT_JITTER_MAX,
        }
    }
}

impl MatrixHarness {
    fn expected_hits(&self, scanner: &DeviceConfig, advertiser: &DeviceConfig) -> u64 {
        let adverts = self.duration.as_micros() / advertiser.adv_interval.as_micros();
        (adverts as u128 * scanner.scan_window.as_micros() as u128 / scanner.scan_interval.as_micros() as u128) as u64
    }

    pub fn validate(&self) -> Result<()> {
        if self.template_a.device_id == self.template_b.device_id {
            return Err(Error::SelfPair(self.template_a.device_id));
        }
        let hits = self
            .expected_hits(&self.template_a, &self.template_b)
            .min(self.expected_hits(&self.template_b, &self.template_a));
        if hits < MIN_EXPECTED_HITS {
            return Err(Error::InvalidScenario(format!(
                "matrix duration {} gives only {hits} expected detections per direction (need {MIN_EXPECTED_HITS})",
                self.duration
            )));
        }
        Ok(())
    }

    /// The two-device scenario for one cell.
    pub fn cell_scenario(&self, row: usize, col: usize) -> Result<Scenario> {
        let (pa, sa) = MATRIX_CONFIGS[row];
        let (pb, sb) = MATRIX_CONFIGS[col];
        let mut a = self.template_a.clone().with_state(sa);
        a.platform = pa;
        let mut b = self.template_b.clone().with_state(sb);
        b.platform = pb;
        let prox = ProximityInterval::new(SimTime::ZERO, self.duration, [(a.device_id, b.device_id)])?;
        Ok(Scenario {
            duration: self.duration,
            devices: vec![a, b],
            proximity: vec![prox],
            app_service: self.app_service,
            seed: self.seed,
            resolution: self.resolution,
            jitter_max: self.jitter_max,
        })
    }

    pub fn run(&self, table: &BehaviorTable) -> Result<DetectionMatrix> {
        self.validate()?;
        let a = self.template_a.device_id;
        let mut cells = [[CellResult::default(); 6]; 6];
        for (r, row) in cells.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                let log = run(&self.cell_scenario(r, c)?, table)?;
                for det in log.detections.iter().filter(|d| d.resolved_id().is_some()) {
                    if det.scanner == a {
                        cell.row_saw_col += 1;
                    } else {
                        cell.col_saw_row += 1;
                    }
                }
            }
        }
        Ok(DetectionMatrix { cells })
    }
}

/// Runs the detection matrix for two device templates.
pub fn pairwise_matrix(
    template_a: &DeviceConfig,
    template_b: &DeviceConfig,
    table: &BehaviorTable,
    test_duration: SimTime,
    seed: u64,
) -> Result<DetectionMatrix> {
    MatrixHarness {
        template_a: template_a.clone(),
        template_b: template_b.clone(),
        duration: test_duration,
        seed,
        ..MatrixHarness::default()
    }
    .run(table)
}

/// State of a schedule at `t`.
pub fn state_at(schedule: &crate::types::StateSchedule, t: SimTime) -> AppState {
    schedule.state_at(t)
}
