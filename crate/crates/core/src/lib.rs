//! Deterministic simulation of BLE proximity detection between smartphones.
//!
//! Handsets advertise a shared app service and periodically scan for each
//! other. What gets advertised and what can be decoded depends on the platform
//! and on whether the app is in the foreground, in the background, or the
//! screen is locked ([`platform`]). The [`engine`] runs scenarios into
//! detection logs, [`contacts`] turns those into contact intervals and a
//! weighted social graph, and [`analysis`] covers how much of a day two locked
//! phones are invisible to each other.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod contacts;
pub mod engine;
pub mod error;
pub mod format;
pub mod platform;
pub mod scalar;
pub mod time;
pub mod types;

pub use engine::{pairwise_matrix, run, DetectionLog, DetectionMatrix, MatrixHarness, ProximityInterval, Scenario};
pub use error::{Error, Result};
pub use platform::{default_behavior_table, BehaviorTable, ScanCapability};
pub use scalar::Real;
pub use time::SimTime;
pub use types::{
    canonical_pair, AdvPacket, AppState, ContactInterval, Detection, DeviceConfig, MacAddress, MacPolicy,
    PlatformKind, ServiceId, SocialGraph, StableId, StateSchedule,
};

pub type UsageModel64 = analysis::UsageModel<f64>;
pub type UsageModel32 = analysis::UsageModel<f32>;
pub type Estimate64 = analysis::Estimate<f64>;
pub type Estimate32 = analysis::Estimate<f32>;
pub type AvailabilityReport64 = analysis::AvailabilityReport<f64>;
pub type AvailabilityReport32 = analysis::AvailabilityReport<f32>;
