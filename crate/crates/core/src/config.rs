//! Scenario configuration file (TOML).
//!
//! ```toml
//! [scenario]
//! duration = "10m"
//! seed = 7
//!
//! [[device]]
//! id = "00000000-0000-0000-0000-00000000000a"
//! platform = "ios"
//! mac_policy = "rotating"
//! rotation_period = "15m"
//! schedule = [{ start = "0s", state = "foreground" }, { start = "5m", state = "locked" }]
//!
//! [[proximity]]
//! start = "0s"
//! end = "10m"
//! pairs = [["00000000-0000-0000-0000-00000000000a", "00000000-0000-0000-0000-00000000000b"]]
//!
//! [behavior.ios.locked]
//! decodes_overflow = true
//! ```
//!
//! Durations take `us`, `ms`, `s`, `m` or `h` suffixes; a bare number means
//! seconds. Omitted `[behavior]` cells keep the default calibration.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::engine::{MatrixHarness, ProximityInterval, Scenario, DEFAULT_JITTER_MAX, DEFAULT_MATRIX_DURATION};
use crate::error::{Error, Result};
use crate::platform::{
    default_behavior_table, AdvertiseRule, BehaviorTable, ResolutionModel, ScanCapability, ServicePlacement,
    DEFAULT_CONNECT_LATENCY,
};
use crate::time::SimTime;
use crate::types::{
    AppState, DeviceConfig, MacPolicy, PlatformKind, ServiceId, StableId, StateSchedule, DEFAULT_ADV_INTERVAL,
    DEFAULT_APP_SERVICE, DEFAULT_ROTATION_PERIOD, DEFAULT_SCAN_INTERVAL, DEFAULT_SCAN_WINDOW,
};

/// Failure to turn config text into validated inputs.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    /// Malformed text, wrong types or unknown keys.
    #[error("config parse error: {0}")]
    Parse(String),
    /// Well-formed but semantically invalid.
    #[error("config validation error: {0}")]
    Invalid(#[from] Error),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSection>,
    #[serde(default, rename = "device", skip_serializing_if = "Vec::is_empty")]
    pub devices: Vec<DeviceSection>,
    #[serde(default, rename = "proximity", skip_serializing_if = "Vec::is_empty")]
    pub proximity: Vec<ProximitySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behavior: Option<BehaviorSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub duration: SimTime,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_seed")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub app_service: Option<ServiceId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connect_latency: Option<SimTime>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter_max: Option<SimTime>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacPolicyKind {
    #[default]
    Fixed,
    #[serde(alias = "rotating_random")]
    Rotating,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSection {
    pub start: SimTime,
    pub state: AppState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSection {
    pub id: StableId,
    pub platform: PlatformKind,
    #[serde(default)]
    pub mac_policy: MacPolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation_period: Option<SimTime>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adv_interval: Option<SimTime>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_interval: Option<SimTime>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_window: Option<SimTime>,
    /// Shorthand for a single-segment schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<AppState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<SegmentSection>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProximitySection {
    pub start: SimTime,
    pub end: SimTime,
    pub pairs: Vec<[StableId; 2]>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<SimTime>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_seed")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub android: Option<PlatformBehavior>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ios: Option<PlatformBehavior>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformBehavior {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub foreground: Option<CellOverride>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<CellOverride>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locked: Option<CellOverride>,
}

/// Partial override of one (platform, state) rule; unset fields keep the base.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advertise: Option<ServicePlacement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degraded: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub can_scan: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decodes_primary: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decodes_overflow: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub can_connect: Option<bool>,
}

impl BehaviorSection {
    /// Applies the overrides on top of `base`.
    pub fn apply(&self, base: &BehaviorTable) -> Result<BehaviorTable> {
        let mut table = *base;
        for (platform, section) in [(PlatformKind::AndroidLike, &self.android), (PlatformKind::IosLike, &self.ios)] {
            let Some(section) = section else { continue };
            for (state, cell) in [
                (AppState::Foreground, &section.foreground),
                (AppState::Background, &section.background),
                (AppState::Locked, &section.locked),
            ] {
                let Some(cell) = cell else { continue };
                let ctx = |e: Error| {
                    Error::InvalidBehavior(format!("behavior.{}.{}: {e}", platform_key(platform), state_key(state)))
                };
                let adv = table.advertise_rule(platform, state);
                let adv = AdvertiseRule::new(
                    cell.advertise.unwrap_or(adv.placement()),
                    cell.degraded.unwrap_or(adv.degraded()),
                )
                .map_err(ctx)?;
                let cap = table.scan_rule(platform, state);
                let cap = ScanCapability::new(
                    cell.can_scan.unwrap_or(cap.can_scan()),
                    cell.decodes_primary.unwrap_or(cap.decodes_primary()),
                    cell.decodes_overflow.unwrap_or(cap.decodes_overflow()),
                    cell.can_connect.unwrap_or(cap.can_connect()),
                )
                .map_err(ctx)?;
                table.set_advertise_rule(platform, state, adv);
                table.set_scan_rule(platform, state, cap);
            }
        }
        Ok(table)
    }

    /// Fully explicit section describing `table`.
    pub fn from_table(table: &BehaviorTable) -> Self {
        let cell = |p, s| {
            let adv = table.advertise_rule(p, s);
            let cap = table.scan_rule(p, s);
            Some(CellOverride {
                advertise: Some(adv.placement()),
                degraded: Some(adv.degraded()),
                can_scan: Some(cap.can_scan()),
                decodes_primary: Some(cap.decodes_primary()),
                decodes_overflow: Some(cap.decodes_overflow()),
                can_connect: Some(cap.can_connect()),
            })
        };
        let platform = |p| {
            Some(PlatformBehavior {
                foreground: cell(p, AppState::Foreground),
                background: cell(p, AppState::Background),
                locked: cell(p, AppState::Locked),
            })
        };
        BehaviorSection {
            android: platform(PlatformKind::AndroidLike),
            ios: platform(PlatformKind::IosLike),
        }
    }
}

fn platform_key(p: PlatformKind) -> &'static str {
    match p {
        PlatformKind::AndroidLike => "android",
        PlatformKind::IosLike => "ios",
    }
}

fn state_key(s: AppState) -> &'static str {
    match s {
        AppState::Foreground => "foreground",
        AppState::Background => "background",
        AppState::Locked => "locked",
    }
}

impl DeviceSection {
    pub fn to_device(&self) -> Result<DeviceConfig> {
        let bad = |reason: String| Error::InvalidDevice { id: self.id, reason };
        let mac_policy = match (self.mac_policy, self.rotation_period) {
            (MacPolicyKind::Fixed, None) => MacPolicy::Fixed,
            (MacPolicyKind::Fixed, Some(_)) => {
                return Err(bad("rotation_period is only valid with mac_policy = \"rotating\"".to_string()))
            }
            (MacPolicyKind::Rotating, period) => {
                MacPolicy::rotating(period.unwrap_or(DEFAULT_ROTATION_PERIOD)).map_err(|e| bad(e.to_string()))?
            }
        };
        let schedule = match (&self.state, &self.schedule) {
            (Some(_), Some(_)) => return Err(bad("give either state or schedule, not both".to_string())),
            (Some(state), None) => StateSchedule::constant(*state),
            (None, None) => StateSchedule::constant(AppState::Foreground),
            (None, Some(segments)) => StateSchedule::new(segments.iter().map(|s| (s.start, s.state)).collect())
                .map_err(|e| bad(e.to_string()))?,
        };
        let dev = DeviceConfig {
            device_id: self.id,
            platform: self.platform,
            mac_policy,
            schedule,
            adv_interval: self.adv_interval.unwrap_or(DEFAULT_ADV_INTERVAL),
            scan_interval: self.scan_interval.unwrap_or(DEFAULT_SCAN_INTERVAL),
            scan_window: self.scan_window.unwrap_or(DEFAULT_SCAN_WINDOW),
        };
        dev.validate()?;
        Ok(dev)
    }

    /// Fully explicit section describing `dev`.
    pub fn from_device(dev: &DeviceConfig) -> Self {
        let (mac_policy, rotation_period) = match dev.mac_policy {
            MacPolicy::Fixed => (MacPolicyKind::Fixed, None),
            MacPolicy::RotatingRandom { rotation_period } => (MacPolicyKind::Rotating, Some(rotation_period)),
        };
        DeviceSection {
            id: dev.device_id,
            platform: dev.platform,
            mac_policy,
            rotation_period,
            adv_interval: Some(dev.adv_interval),
            scan_interval: Some(dev.scan_interval),
            scan_window: Some(dev.scan_window),
            state: None,
            schedule: Some(
                dev.schedule
                    .segments()
                    .iter()
                    .map(|&(start, state)| SegmentSection { start, state })
                    .collect(),
            ),
        }
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> std::result::Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string().trim_end().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config sections always serialize")
    }

    pub fn behavior_table(&self) -> Result<BehaviorTable> {
        let base = default_behavior_table();
        match &self.behavior {
            Some(section) => section.apply(&base),
            None => Ok(base),
        }
    }

    /// Builds and validates the scenario. `default_seed` is used when the file
    /// does not set one.
    pub fn scenario(&self, default_seed: u64) -> Result<Scenario> {
        let section = self
            .scenario
            .as_ref()
            .ok_or_else(|| Error::InvalidScenario("missing [scenario] section".to_string()))?;
        let devices = self
            .devices
            .iter()
            .map(DeviceSection::to_device)
            .collect::<Result<Vec<_>>>()?;
        let proximity = self
            .proximity
            .iter()
            .map(|p| ProximityInterval::new(p.start, p.end, p.pairs.iter().map(|[a, b]| (*a, *b))))
            .collect::<Result<Vec<_>>>()?;
        let scenario = Scenario {
            duration: section.duration,
            devices,
            proximity,
            app_service: section.app_service.unwrap_or(DEFAULT_APP_SERVICE),
            seed: section.seed.unwrap_or(default_seed),
            resolution: ResolutionModel {
                connect_latency: section.connect_latency.unwrap_or(DEFAULT_CONNECT_LATENCY),
                loss_probability: section.resolution_loss.unwrap_or(0.0),
            },
            jitter_max: section.jitter_max.unwrap_or(DEFAULT_JITTER_MAX),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Matrix harness settings. The first two `[[device]]` entries, when
    /// present, supply timing and MAC policy for the two test handsets.
    pub fn matrix_harness(&self, default_seed: u64) -> Result<MatrixHarness> {
        let mut harness = MatrixHarness {
            seed: default_seed,
            ..MatrixHarness::default()
        };
        if let Some(m) = &self.matrix {
            harness.duration = m.duration.unwrap_or(DEFAULT_MATRIX_DURATION);
            if let Some(seed) = m.seed {
                harness.seed = seed;
            }
        }
        if let Some(s) = &self.scenario {
            if let Some(app) = s.app_service {
                harness.app_service = app;
            }
            if let Some(lat) = s.connect_latency {
                harness.resolution.connect_latency = lat;
            }
            if let Some(loss) = s.resolution_loss {
                harness.resolution.loss_probability = loss;
            }
            if let Some(j) = s.jitter_max {
                harness.jitter_max = j;
            }
        }
        match self.devices.as_slice() {
            [] => {}
            [a, b, ..] => {
                harness.template_a = a.to_device()?;
                harness.template_b = b.to_device()?;
            }
            [_] => {
                return Err(Error::InvalidScenario(
                    "matrix templates need two [[device]] entries".to_string(),
                ))
            }
        }
        harness.resolution.validate()?;
        harness.validate()?;
        Ok(harness)
    }

    /// Fully explicit config describing `scenario` (and `table`, if given).
    pub fn from_scenario(scenario: &Scenario, table: Option<&BehaviorTable>) -> Self {
        ConfigFile {
            scenario: Some(ScenarioSection {
                duration: scenario.duration,
                seed: Some(scenario.seed),
                app_service: Some(scenario.app_service),
                connect_latency: Some(scenario.resolution.connect_latency),
                resolution_loss: Some(scenario.resolution.loss_probability),
                jitter_max: Some(scenario.jitter_max),
            }),
            devices: scenario.devices.iter().map(DeviceSection::from_device).collect(),
            proximity: scenario
                .proximity
                .iter()
                .map(|p| ProximitySection {
                    start: p.start,
                    end: p.end,
                    pairs: p.pairs.iter().map(|&(a, b)| [a, b]).collect(),
                })
                .collect(),
            matrix: None,
            behavior: table.map(BehaviorSection::from_table),
        }
    }
}

/// TOML integers are signed 64-bit, so seeds above `i64::MAX` are written as
/// strings. Either form is accepted on input.
mod opt_seed {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<u64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match v {
            Some(v) if *v <= i64::MAX as u64 => s.serialize_some(&(*v as i64)),
            Some(v) => s.serialize_some(&v.to_string()),
            None => s.serialize_none(),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(i64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<u64>, D::Error> {
        use serde::de::Error as _;
        match Option::<Raw>::deserialize(d)? {
            None => Ok(None),
            Some(Raw::Int(v)) if v >= 0 => Ok(Some(v as u64)),
            Some(Raw::Int(v)) => Err(D::Error::custom(format!("seed must be non-negative, got {v}"))),
            Some(Raw::Text(t)) => t
                .parse()
                .map(Some)
                .map_err(|_| D::Error::custom(format!("seed {t:?} is not a 64-bit unsigned integer"))),
        }
    }
}
