use thiserror::Error;

use crate::types::StableId;

/// Errors raised while constructing or validating simulator inputs.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("self-pair: {0} cannot be paired with itself")]
    SelfPair(StableId),

    #[error("invalid identifier {text:?}: {reason}")]
    InvalidId { text: String, reason: String },

    #[error("invalid MAC address {0:?}")]
    InvalidMac(String),

    #[error("invalid duration {text:?}: {reason}")]
    InvalidDuration { text: String, reason: String },

    #[error("invalid MAC policy: {0}")]
    InvalidMacPolicy(String),

    #[error("invalid state schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid device {id}: {reason}")]
    InvalidDevice { id: StableId, reason: String },

    #[error("invalid scan capability: {0}")]
    InvalidCapability(String),

    #[error("invalid behavior rule: {0}")]
    InvalidBehavior(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid contact interval: {0}")]
    InvalidInterval(String),

    #[error("value out of domain: {0}")]
    Domain(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
