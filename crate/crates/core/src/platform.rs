//! Platform- and state-dependent BLE behavior.
//!
//! What a handset puts in its advertisements and what its scanner can decode
//! depends on the OS and on whether the app is foregrounded, backgrounded or
//! the screen is locked. The rules live in a [`BehaviorTable`] so that
//! counterfactual calibrations can be loaded from config instead of code.
//!
//! The default calibration is the smallest rule set that reproduces the
//! observed handset detection matrix: backgrounded and locked iOS advertisers
//! move the app service out of the primary payload into the overflow area, and
//! a locked iOS scanner cannot read overflow entries. Two locked iOS devices
//! therefore miss each other in both directions; every other pairing decodes
//! in at least one direction.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::time::SimTime;
use crate::types::{AdvPacket, AppState, DeviceConfig, MacAddress, MacPolicy, PlatformKind, ServiceId, StableId};

/// Where the app service UUID is placed in an advertisement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServicePlacement {
    Primary,
    Overflow,
    /// The app service is not advertised at all.
    Absent,
}

/// Packet-composition descriptor for one (platform, state).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AdvertiseRule {
    placement: ServicePlacement,
    degraded: bool,
}

impl AdvertiseRule {
    pub fn new(placement: ServicePlacement, degraded: bool) -> Result<Self> {
        if degraded && placement == ServicePlacement::Primary {
            return Err(Error::InvalidBehavior(
                "a degraded advertisement cannot carry the app service in its primary payload".to_string(),
            ));
        }
        Ok(AdvertiseRule { placement, degraded })
    }

    pub const PRIMARY: AdvertiseRule = AdvertiseRule {
        placement: ServicePlacement::Primary,
        degraded: false,
    };

    pub fn placement(&self) -> ServicePlacement {
        self.placement
    }

    pub fn degraded(&self) -> bool {
        self.degraded
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScanCapability {
    can_scan: bool,
    decodes_primary: bool,
    decodes_overflow: bool,
    can_connect: bool,
}

impl ScanCapability {
    pub const FULL: ScanCapability = ScanCapability {
        can_scan: true,
        decodes_primary: true,
        decodes_overflow: true,
        can_connect: true,
    };

    pub const NONE: ScanCapability = ScanCapability {
        can_scan: false,
        decodes_primary: false,
        decodes_overflow: false,
        can_connect: false,
    };

    pub fn new(can_scan: bool, decodes_primary: bool, decodes_overflow: bool, can_connect: bool) -> Result<Self> {
        if !can_scan && (decodes_primary || decodes_overflow || can_connect) {
            return Err(Error::InvalidCapability(
                "a device that cannot scan cannot decode or connect".to_string(),
            ));
        }
        Ok(ScanCapability {
            can_scan,
            decodes_primary,
            decodes_overflow,
            can_connect,
        })
    }

    pub fn can_scan(&self) -> bool {
        self.can_scan
    }

    pub fn decodes_primary(&self) -> bool {
        self.decodes_primary
    }

    pub fn decodes_overflow(&self) -> bool {
        self.decodes_overflow
    }

    pub fn can_connect(&self) -> bool {
        self.can_connect
    }
}

/// Advertise and scan rules for every (platform, state) combination.
///
/// Storage is a dense array, so the table is total by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BehaviorTable {
    advertise: [[AdvertiseRule; 3]; 2],
    scan: [[ScanCapability; 3]; 2],
}

impl BehaviorTable {
    /// Every platform advertises in the primary payload and scans fully.
    pub fn uniform() -> Self {
        BehaviorTable {
            advertise: [[AdvertiseRule::PRIMARY; 3]; 2],
            scan: [[ScanCapability::FULL; 3]; 2],
        }
    }

    pub fn advertise_rule(&self, platform: PlatformKind, state: AppState) -> AdvertiseRule {
        self.advertise[platform.index()][state.index()]
    }

    pub fn scan_rule(&self, platform: PlatformKind, state: AppState) -> ScanCapability {
        self.scan[platform.index()][state.index()]
    }

    pub fn set_advertise_rule(&mut self, platform: PlatformKind, state: AppState, rule: AdvertiseRule) {
        self.advertise[platform.index()][state.index()] = rule;
    }

    pub fn set_scan_rule(&mut self, platform: PlatformKind, state: AppState, cap: ScanCapability) {
        self.scan[platform.index()][state.index()] = cap;
    }

    /// Short hex digest of the table contents, printed by `--version` so runs
    /// can be tied to the calibration that produced them.
    pub fn calibration_hash(&self) -> String {
        let mut canonical = String::new();
        for platform in PlatformKind::ALL {
            for state in AppState::ALL {
                let adv = self.advertise_rule(platform, state);
                let cap = self.scan_rule(platform, state);
                let _ = writeln!(
                    canonical,
                    "{:?}/{:?}: adv={:?},{} scan={},{},{},{}",
                    platform,
                    state,
                    adv.placement,
                    adv.degraded,
                    cap.can_scan,
                    cap.decodes_primary,
                    cap.decodes_overflow,
                    cap.can_connect
                );
            }
        }
        let digest = Sha256::digest(canonical.as_bytes());
        digest[..8].iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

impl Default for BehaviorTable {
    fn default() -> Self {
        default_behavior_table()
    }
}

/// The calibrated table reproducing the observed handset detection matrix.
pub fn default_behavior_table() -> BehaviorTable {
    use AppState::*;
    use PlatformKind::*;

    let mut table = BehaviorTable::uniform();
    table.set_advertise_rule(
        IosLike,
        Background,
        AdvertiseRule {
            placement: ServicePlacement::Overflow,
            degraded: false,
        },
    );
    table.set_advertise_rule(
        IosLike,
        Locked,
        AdvertiseRule {
            placement: ServicePlacement::Overflow,
            degraded: true,
        },
    );
    table.set_scan_rule(
        IosLike,
        Locked,
        ScanCapability {
            can_scan: true,
            decodes_primary: true,
            decodes_overflow: false,
            can_connect: true,
        },
    );
    table
}

/// Builds the packet `dev` transmits at `t` while in `state`.
pub fn compose_advertisement(
    table: &BehaviorTable,
    dev: &DeviceConfig,
    state: AppState,
    mac: MacAddress,
    t: SimTime,
    app_service: ServiceId,
) -> AdvPacket {
    let rule = table.advertise_rule(dev.platform, state);
    let mut primary = BTreeSet::new();
    let mut overflow = BTreeSet::new();
    match rule.placement {
        ServicePlacement::Primary => {
            primary.insert(app_service);
        }
        ServicePlacement::Overflow => {
            overflow.insert(app_service);
        }
        ServicePlacement::Absent => {}
    }
    AdvPacket::new(t, dev.device_id, mac, primary, overflow, rule.degraded)
        .expect("a single service is never in both payloads")
}

/// Whether a scanner with `cap` can see the app service in `packet`.
///
/// Reads only the payload fields; the sender's stable id is not visible here.
pub fn can_decode(cap: &ScanCapability, packet: &AdvPacket, app_service: ServiceId) -> bool {
    cap.can_scan
        && ((cap.decodes_primary && packet.primary_services().contains(&app_service))
            || (cap.decodes_overflow && packet.overflow_services().contains(&app_service)))
}

/// Draws a fresh random address with the locally administered bit set and the
/// multicast bit clear, leaving 46 random bits.
pub fn random_mac<R: Rng + ?Sized>(rng: &mut R) -> MacAddress {
    let mut octets = [0u8; 6];
    rng.fill(&mut octets[..]);
    octets[0] = (octets[0] & 0xfc) | 0x02;
    MacAddress::new(octets)
}

/// The address to use given how long the current one has been in service.
pub fn next_mac<R: Rng + ?Sized>(
    policy: &MacPolicy,
    current: MacAddress,
    elapsed_since_rotation: SimTime,
    rng: &mut R,
) -> MacAddress {
    match *policy {
        MacPolicy::Fixed => current,
        MacPolicy::RotatingRandom { rotation_period } if elapsed_since_rotation < rotation_period => current,
        MacPolicy::RotatingRandom { .. } => random_mac(rng),
    }
}

pub const DEFAULT_CONNECT_LATENCY: SimTime = SimTime::from_secs(2);

/// Parameters of the connect-and-read step that turns a sighting into a stable id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolutionModel {
    pub connect_latency: SimTime,
    /// Probability that an otherwise successful read is lost. Off by default.
    pub loss_probability: f64,
}

impl Default for ResolutionModel {
    fn default() -> Self {
        ResolutionModel {
            connect_latency: DEFAULT_CONNECT_LATENCY,
            loss_probability: 0.0,
        }
    }
}

impl ResolutionModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.loss_probability) {
            return Err(Error::InvalidScenario(format!(
                "resolution loss probability {} is outside [0, 1]",
                self.loss_probability
            )));
        }
        Ok(())
    }
}

/// Reads the advertiser's identifier characteristic if the scanner can connect
/// and the pair stays together long enough for the connection to complete.
///
/// The caller must already have decoded the advertiser's app service.
pub fn resolve_identifier(
    scanner_cap: &ScanCapability,
    advertiser: &DeviceConfig,
    contact_window: SimTime,
    connect_latency: SimTime,
) -> Option<StableId> {
    (scanner_cap.can_connect && contact_window >= connect_latency).then_some(advertiser.device_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use AppState::*;
    use PlatformKind::*;

    const SVC: ServiceId = ServiceId::from_u128(0xfeed);

    fn dev(platform: PlatformKind) -> DeviceConfig {
        DeviceConfig::new(StableId::from_u128(1), platform)
    }

    fn packet(platform: PlatformKind, state: AppState) -> AdvPacket {
        compose_advertisement(
            &default_behavior_table(),
            &dev(platform),
            state,
            MacAddress::from_u64(0x0200_0000_0001),
            SimTime::from_secs(3),
            SVC,
        )
    }

    #[test]
    fn default_table_lookups() {
        let t = default_behavior_table();
        assert_eq!(t.advertise_rule(AndroidLike, Locked).placement(), ServicePlacement::Primary);
        assert!(!t.scan_rule(IosLike, Locked).decodes_overflow());
        assert!(t.scan_rule(IosLike, Foreground).can_scan());
        for state in AppState::ALL {
            assert_eq!(t.advertise_rule(AndroidLike, state), AdvertiseRule::PRIMARY);
            assert_eq!(t.scan_rule(AndroidLike, state), ScanCapability::FULL);
        }
        assert_eq!(t.advertise_rule(IosLike, Foreground), AdvertiseRule::PRIMARY);
        assert_eq!(t.scan_rule(IosLike, Background), ScanCapability::FULL);
        let bg = t.advertise_rule(IosLike, Background);
        assert_eq!((bg.placement(), bg.degraded()), (ServicePlacement::Overflow, false));
        let locked = t.advertise_rule(IosLike, Locked);
        assert_eq!((locked.placement(), locked.degraded()), (ServicePlacement::Overflow, true));
        let cap = t.scan_rule(IosLike, Locked);
        assert!(cap.can_scan() && cap.decodes_primary() && cap.can_connect());
    }

    #[test]
    fn composition_follows_table() {
        let p = packet(AndroidLike, Foreground);
        assert!(p.primary_services().contains(&SVC));
        assert!(!p.degraded());

        let p = packet(IosLike, Locked);
        assert!(p.primary_services().is_empty());
        assert!(p.overflow_services().contains(&SVC));
        assert!(p.degraded());
        assert!(p.validate_for(SVC).is_ok());

        let p = packet(IosLike, Background);
        assert!(p.overflow_services().contains(&SVC));
        assert!(p.primary_services().is_empty());
        assert!(!p.degraded());
        assert_eq!(p.timestamp, SimTime::from_secs(3));
    }

    #[test]
    fn decode_cases() {
        let t = default_behavior_table();
        assert!(!can_decode(&t.scan_rule(IosLike, Locked), &packet(IosLike, Locked), SVC));
        assert!(can_decode(&t.scan_rule(AndroidLike, Locked), &packet(IosLike, Locked), SVC));
        let other = ServiceId::from_u128(0xbeef);
        for platform in PlatformKind::ALL {
            for state in AppState::ALL {
                assert!(!can_decode(&ScanCapability::FULL, &packet(platform, state), other));
            }
        }
        assert!(!can_decode(&ScanCapability::NONE, &packet(AndroidLike, Foreground), SVC));
    }

    fn decodes(t: &BehaviorTable, scanner: (PlatformKind, AppState), advertiser: (PlatformKind, AppState)) -> bool {
        can_decode(&t.scan_rule(scanner.0, scanner.1), &packet(advertiser.0, advertiser.1), SVC)
    }

    #[test]
    fn directional_decode_failures() {
        // a locked iOS scanner misses every overflow-only advertiser
        let t = default_behavior_table();
        let mut fails = Vec::new();
        for sp in PlatformKind::ALL {
            for ss in AppState::ALL {
                for ap in PlatformKind::ALL {
                    for a_state in AppState::ALL {
                        if !decodes(&t, (sp, ss), (ap, a_state)) {
                            fails.push((sp, ss, ap, a_state));
                        }
                    }
                }
            }
        }
        assert_eq!(
            fails,
            vec![(IosLike, Locked, IosLike, Background), (IosLike, Locked, IosLike, Locked)]
        );
    }

    #[test]
    fn mutual_decode_matrix_has_single_fail() {
        let t = default_behavior_table();
        let configs: Vec<_> = PlatformKind::ALL
            .into_iter()
            .flat_map(|p| AppState::ALL.into_iter().map(move |s| (p, s)))
            .collect();
        let mut fails = Vec::new();
        for &x in &configs {
            for &y in &configs {
                if !(decodes(&t, x, y) || decodes(&t, y, x)) {
                    fails.push((x, y));
                }
            }
        }
        assert_eq!(fails, vec![((IosLike, Locked), (IosLike, Locked))]);
        // neither direction of the failing cell decodes
        assert!(!decodes(&t, (IosLike, Locked), (IosLike, Locked)));
    }

    #[test]
    fn rule_constructors_enforce_invariants() {
        assert!(AdvertiseRule::new(ServicePlacement::Primary, true).is_err());
        assert!(AdvertiseRule::new(ServicePlacement::Overflow, true).is_ok());
        assert!(ScanCapability::new(false, true, false, false).is_err());
        assert!(ScanCapability::new(false, false, false, true).is_err());
        assert_eq!(ScanCapability::new(false, false, false, false).unwrap(), ScanCapability::NONE);
    }

    #[test]
    fn absent_placement_is_never_decoded() {
        let mut t = BehaviorTable::uniform();
        t.set_advertise_rule(AndroidLike, Locked, AdvertiseRule::new(ServicePlacement::Absent, false).unwrap());
        let p = compose_advertisement(&t, &dev(AndroidLike), Locked, MacAddress::from_u64(1), SimTime::ZERO, SVC);
        assert!(!can_decode(&ScanCapability::FULL, &p, SVC));
    }

    #[test]
    fn mac_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = MacAddress::from_u64(0x0a0b_0c0d_0e0f);
        assert_eq!(next_mac(&MacPolicy::Fixed, m, SimTime::from_hours(100), &mut rng), m);

        let policy = MacPolicy::rotating(SimTime::from_secs(900)).unwrap();
        assert_eq!(next_mac(&policy, m, SimTime::from_secs(100), &mut rng), m);
        let fresh = next_mac(&policy, m, SimTime::from_secs(900), &mut rng);
        assert_ne!(fresh, m);
        assert!(fresh.is_locally_administered());
        assert!(!fresh.is_multicast());
    }

    #[test]
    fn resolution_gates() {
        let adv = dev(AndroidLike);
        let s = SimTime::from_secs;
        assert_eq!(resolve_identifier(&ScanCapability::FULL, &adv, s(10), s(2)), Some(adv.device_id));
        assert_eq!(resolve_identifier(&ScanCapability::FULL, &adv, s(2), s(2)), Some(adv.device_id));
        let no_connect = ScanCapability::new(true, true, true, false).unwrap();
        assert_eq!(resolve_identifier(&no_connect, &adv, s(10), s(2)), None);
        assert_eq!(resolve_identifier(&ScanCapability::FULL, &adv, s(1), s(2)), None);
    }

    #[test]
    fn calibration_hash_tracks_table() {
        let a = default_behavior_table();
        let mut b = a;
        assert_eq!(a.calibration_hash(), b.calibration_hash());
        b.set_scan_rule(IosLike, Locked, ScanCapability::FULL);
        assert_ne!(a.calibration_hash(), b.calibration_hash());
        assert_eq!(a.calibration_hash().len(), 16);
    }

    proptest::proptest! {
        #[test]
        fn decode_ignores_sender_device(other in proptest::num::u128::ANY, pi in 0usize..2, si in 0usize..3, sp in 0usize..2, ss in 0usize..3) {
            let t = default_behavior_table();
            let p = packet(PlatformKind::ALL[pi], AppState::ALL[si]);
            let cap = t.scan_rule(PlatformKind::ALL[sp], AppState::ALL[ss]);
            let before = can_decode(&cap, &p, SVC);
            let p2 = p.with_sender_device(StableId::from_u128(other));
            proptest::prop_assert_eq!(before, can_decode(&cap, &p2, SVC));
        }

        #[test]
        fn mac_only_changes_sender_mac(m1 in 0u64..(1 << 48), m2 in 0u64..(1 << 48), pi in 0usize..2, si in 0usize..3) {
            let t = default_behavior_table();
            let d = dev(PlatformKind::ALL[pi]);
            let state = AppState::ALL[si];
            let a = compose_advertisement(&t, &d, state, MacAddress::from_u64(m1), SimTime::ZERO, SVC);
            let mut b = compose_advertisement(&t, &d, state, MacAddress::from_u64(m2), SimTime::ZERO, SVC);
            b.sender_mac = a.sender_mac;
            proptest::prop_assert_eq!(a, b);
        }
    }
}
