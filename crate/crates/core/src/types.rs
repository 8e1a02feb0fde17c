//! Domain types shared by the simulator, the platform model and the contact
//! pipeline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PlatformKind {
    #[serde(rename = "android", alias = "android_like")]
    AndroidLike,
    #[serde(rename = "ios", alias = "ios_like")]
    IosLike,
}

impl PlatformKind {
    pub const ALL: [PlatformKind; 2] = [PlatformKind::AndroidLike, PlatformKind::IosLike];

    pub fn label(self) -> &'static str {
        match self {
            PlatformKind::AndroidLike => "Android",
            PlatformKind::IosLike => "iOS",
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

/// The three app conditions handsets were tested in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AppState {
    /// App visible, screen on.
    #[serde(alias = "fg")]
    Foreground,
    /// App backgrounded, home screen visible, screen on.
    #[serde(alias = "bg")]
    Background,
    /// App backgrounded, screen off.
    #[serde(alias = "l")]
    Locked,
}

impl AppState {
    pub const ALL: [AppState; 3] = [AppState::Foreground, AppState::Background, AppState::Locked];

    pub fn short_label(self) -> &'static str {
        match self {
            AppState::Foreground => "FG",
            AppState::Background => "BG",
            AppState::Locked => "L",
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

macro_rules! uuid_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(u128);

        impl $name {
            pub const fn from_u128(v: u128) -> Self {
                $name(v)
            }

            pub const fn as_u128(self) -> u128 {
                self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt::Display::fmt(&uuid::Uuid::from_u128(self.0).hyphenated(), f)
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                uuid::Uuid::try_parse(s.trim())
                    .map(|u| $name(u.as_u128()))
                    .map_err(|e| Error::InvalidId {
                        text: s.to_string(),
                        reason: e.to_string(),
                    })
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

uuid_newtype!(
    /// App-generated 128-bit identifier that survives MAC rotation.
    StableId
);

uuid_newtype!(
    /// 128-bit BLE service UUID.
    ServiceId
);

/// Service UUID advertised by the app when no scenario overrides it.
pub const DEFAULT_APP_SERVICE: ServiceId =
    ServiceId::from_u128(0x5e1f_0b1e_b1e5_4a0c_9c7e_00c0_ffee_0001);

/// Returns the pair ordered as `(min, max)`.
pub fn canonical_pair(x: StableId, y: StableId) -> Result<(StableId, StableId)> {
    match x.cmp(&y) {
        std::cmp::Ordering::Less => Ok((x, y)),
        std::cmp::Ordering::Greater => Ok((y, x)),
        std::cmp::Ordering::Equal => Err(Error::SelfPair(x)),
    }
}

/// 48-bit link-layer address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MacAddress([u8; 6]);

impl MacAddress {
    pub const fn new(octets: [u8; 6]) -> Self {
        MacAddress(octets)
    }

    pub fn octets(self) -> [u8; 6] {
        self.0
    }

    /// Builds an address from the low 48 bits of `v`.
    pub fn from_u64(v: u64) -> Self {
        let b = v.to_be_bytes();
        MacAddress([b[2], b[3], b[4], b[5], b[6], b[7]])
    }

    pub fn to_u64(self) -> u64 {
        self.0.iter().fold(0u64, |acc, &b| (acc << 8) | b as u64)
    }

    pub fn is_locally_administered(self) -> bool {
        self.0[0] & 0x02 != 0
    }

    pub fn is_multicast(self) -> bool {
        self.0[0] & 0x01 != 0
    }

    /// A stable, globally administered unicast address derived from a device id.
    pub fn public_for(id: StableId) -> Self {
        let mut mac = MacAddress::from_u64(id.as_u128() as u64);
        mac.0[0] &= !0x03;
        mac
    }
}

impl fmt::Display for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

impl FromStr for MacAddress {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        if parts.len() != 6 {
            return Err(Error::InvalidMac(s.to_string()));
        }
        let mut octets = [0u8; 6];
        for (slot, part) in octets.iter_mut().zip(&parts) {
            if part.len() != 2 {
                return Err(Error::InvalidMac(s.to_string()));
            }
            *slot = u8::from_str_radix(part, 16).map_err(|_| Error::InvalidMac(s.to_string()))?;
        }
        Ok(MacAddress(octets))
    }
}

impl Serialize for MacAddress {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddress {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Default rotation period for randomized addresses.
pub const DEFAULT_ROTATION_PERIOD: SimTime = SimTime::from_secs(900);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MacPolicy {
    Fixed,
    RotatingRandom { rotation_period: SimTime },
}

impl MacPolicy {
    pub fn rotating(rotation_period: SimTime) -> Result<Self> {
        let policy = MacPolicy::RotatingRandom { rotation_period };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MacPolicy::RotatingRandom { rotation_period } if rotation_period.is_zero() => Err(
                Error::InvalidMacPolicy("rotation_period must be > 0".to_string()),
            ),
            _ => Ok(()),
        }
    }
}

/// Piecewise-constant app state over time.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateSchedule {
    segments: Vec<(SimTime, AppState)>,
}

impl StateSchedule {
    pub fn new(segments: Vec<(SimTime, AppState)>) -> Result<Self> {
        match segments.first() {
            None => return Err(Error::InvalidSchedule("no segments".to_string())),
            Some((start, _)) if !start.is_zero() => {
                return Err(Error::InvalidSchedule(format!(
                    "first segment starts at {start}, not 0"
                )))
            }
            _ => {}
        }
        if let Some(w) = segments.windows(2).find(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidSchedule(format!(
                "segment starts not strictly increasing ({} then {})",
                w[0].0, w[1].0
            )));
        }
        Ok(StateSchedule { segments })
    }

    /// A schedule that stays in one state forever.
    pub fn constant(state: AppState) -> Self {
        StateSchedule {
            segments: vec![(SimTime::ZERO, state)],
        }
    }

    pub fn segments(&self) -> &[(SimTime, AppState)] {
        &self.segments
    }

    /// State of the last segment starting at or before `t`.
    pub fn state_at(&self, t: SimTime) -> AppState {
        let idx = self.segments.partition_point(|(start, _)| *start <= t);
        // segments[0] starts at 0, so idx >= 1 for every t
        self.segments[idx - 1].1
    }
}

pub const DEFAULT_ADV_INTERVAL: SimTime = SimTime::from_secs(1);
pub const DEFAULT_SCAN_INTERVAL: SimTime = SimTime::from_secs(5);
pub const DEFAULT_SCAN_WINDOW: SimTime = SimTime::from_secs(2);

/// A simulated handset.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DeviceConfig {
    pub device_id: StableId,
    pub platform: PlatformKind,
    pub mac_policy: MacPolicy,
    pub schedule: StateSchedule,
    pub adv_interval: SimTime,
    pub scan_interval: SimTime,
    pub scan_window: SimTime,
}

impl DeviceConfig {
    /// Device with a fixed MAC, always in the foreground, and default timing.
    pub fn new(device_id: StableId, platform: PlatformKind) -> Self {
        DeviceConfig {
            device_id,
            platform,
            mac_policy: MacPolicy::Fixed,
            schedule: StateSchedule::constant(AppState::Foreground),
            adv_interval: DEFAULT_ADV_INTERVAL,
            scan_interval: DEFAULT_SCAN_INTERVAL,
            scan_window: DEFAULT_SCAN_WINDOW,
        }
    }

    pub fn with_state(mut self, state: AppState) -> Self {
        self.schedule = StateSchedule::constant(state);
        self
    }

    pub fn with_schedule(mut self, schedule: StateSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_mac_policy(mut self, policy: MacPolicy) -> Self {
        self.mac_policy = policy;
        self
    }

    pub fn with_timing(mut self, adv_interval: SimTime, scan_interval: SimTime, scan_window: SimTime) -> Self {
        self.adv_interval = adv_interval;
        self.scan_interval = scan_interval;
        self.scan_window = scan_window;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidDevice {
            id: self.device_id,
            reason: reason.to_string(),
        };
        if self.adv_interval.is_zero() {
            return Err(bad("adv_interval must be > 0"));
        }
        if self.scan_window.is_zero() {
            return Err(bad("scan_window must be > 0"));
        }
        if self.scan_window > self.scan_interval {
            return Err(bad("scan_window must not exceed scan_interval"));
        }
        self.mac_policy.validate().map_err(|e| bad(&e.to_string()))
    }
}

/// One advertising transmission.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AdvPacket {
    pub timestamp: SimTime,
    sender_device: StableId,
    pub sender_mac: MacAddress,
    primary_services: BTreeSet<ServiceId>,
    overflow_services: BTreeSet<ServiceId>,
    degraded: bool,
}

impl AdvPacket {
    pub fn new(
        timestamp: SimTime,
        sender_device: StableId,
        sender_mac: MacAddress,
        primary_services: BTreeSet<ServiceId>,
        overflow_services: BTreeSet<ServiceId>,
        degraded: bool,
    ) -> Result<Self> {
        if let Some(dup) = primary_services.intersection(&overflow_services).next() {
            return Err(Error::InvalidBehavior(format!(
                "service {dup} is in both primary and overflow payloads"
            )));
        }
        Ok(AdvPacket {
            timestamp,
            sender_device,
            sender_mac,
            primary_services,
            overflow_services,
            degraded,
        })
    }

    /// Checks the degraded-packet invariant against the app service.
    pub fn validate_for(&self, app_service: ServiceId) -> Result<()> {
        if self.degraded && self.primary_services.contains(&app_service) {
            return Err(Error::InvalidBehavior(
                "degraded packet carries the app service in its primary payload".to_string(),
            ));
        }
        Ok(())
    }

    /// Simulator bookkeeping only. Scanner-side logic must never consult it.
    pub fn sender_device(&self) -> StableId {
        self.sender_device
    }

    pub fn with_sender_device(mut self, id: StableId) -> Self {
        self.sender_device = id;
        self
    }

    pub fn primary_services(&self) -> &BTreeSet<ServiceId> {
        &self.primary_services
    }

    pub fn overflow_services(&self) -> &BTreeSet<ServiceId> {
        &self.overflow_services
    }

    pub fn degraded(&self) -> bool {
        self.degraded
    }
}

/// One successful sighting recorded by a scanner.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Detection {
    pub timestamp: SimTime,
    pub scanner: StableId,
    pub observed_mac: MacAddress,
    service_confirmed: bool,
    resolved_id: Option<StableId>,
}

impl Detection {
    pub fn new(
        timestamp: SimTime,
        scanner: StableId,
        observed_mac: MacAddress,
        service_confirmed: bool,
        resolved_id: Option<StableId>,
    ) -> Result<Self> {
        if resolved_id.is_some() && !service_confirmed {
            return Err(Error::InvalidScenario(
                "detection has a resolved id without a confirmed service".to_string(),
            ));
        }
        Ok(Detection {
            timestamp,
            scanner,
            observed_mac,
            service_confirmed,
            resolved_id,
        })
    }

    pub fn service_confirmed(&self) -> bool {
        self.service_confirmed
    }

    pub fn resolved_id(&self) -> Option<StableId> {
        self.resolved_id
    }

    pub(crate) fn sort_key(&self) -> (SimTime, StableId, MacAddress) {
        (self.timestamp, self.scanner, self.observed_mac)
    }
}

/// Merged co-presence span for one unordered pair, stored canonically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContactInterval {
    a: StableId,
    b: StableId,
    start: SimTime,
    end: SimTime,
}

impl ContactInterval {
    /// Builds the interval, reordering `x`/`y` into canonical order.
    pub fn new(x: StableId, y: StableId, start: SimTime, end: SimTime) -> Result<Self> {
        let (a, b) = canonical_pair(x, y)?;
        if start >= end {
            return Err(Error::InvalidInterval(format!(
                "start {} is not before end {}",
                start.secs_string(),
                end.secs_string()
            )));
        }
        Ok(ContactInterval { a, b, start, end })
    }

    pub fn a(&self) -> StableId {
        self.a
    }

    pub fn b(&self) -> StableId {
        self.b
    }

    pub fn pair(&self) -> (StableId, StableId) {
        (self.a, self.b)
    }

    pub fn start(&self) -> SimTime {
        self.start
    }

    pub fn end(&self) -> SimTime {
        self.end
    }

    pub fn duration(&self) -> SimTime {
        self.end - self.start
    }
}

/// Undirected graph keyed by stable id, edges weighted by contact time.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SocialGraph {
    nodes: BTreeSet<StableId>,
    edges: BTreeMap<(StableId, StableId), SimTime>,
}

impl SocialGraph {
    pub fn new(
        nodes: BTreeSet<StableId>,
        edges: BTreeMap<(StableId, StableId), SimTime>,
    ) -> Result<Self> {
        for (&(a, b), weight) in &edges {
            if canonical_pair(a, b)? != (a, b) {
                return Err(Error::InvalidInterval(format!("edge ({a}, {b}) is not canonical")));
            }
            if !nodes.contains(&a) || !nodes.contains(&b) {
                return Err(Error::InvalidInterval(format!(
                    "edge ({a}, {b}) references a missing node"
                )));
            }
            if weight.is_zero() {
                return Err(Error::InvalidInterval(format!("edge ({a}, {b}) has zero weight")));
            }
        }
        Ok(SocialGraph { nodes, edges })
    }

    pub fn nodes(&self) -> &BTreeSet<StableId> {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeMap<(StableId, StableId), SimTime> {
        &self.edges
    }

    pub fn weight(&self, x: StableId, y: StableId) -> Option<SimTime> {
        canonical_pair(x, y).ok().and_then(|p| self.edges.get(&p).copied())
    }

    pub fn degree(&self, id: StableId) -> usize {
        self.edges.keys().filter(|(a, b)| *a == id || *b == id).count()
    }

    pub fn total_weight(&self) -> SimTime {
        self.edges.values().fold(SimTime::ZERO, |acc, &w| acc + w)
    }
}
