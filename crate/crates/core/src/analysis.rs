//! Availability arithmetic for locked handsets.
//!
//! Given average monthly screen-on usage and nightly sleep, how much of the
//! waking day is a phone locked, and how much of it are two phones locked at
//! the same time? The closed form assumes the two phones lock independently;
//! [`monte_carlo_simultaneous_locked`] checks that assumption against explicit
//! daily session schedules.
//!
//! The pairwise figure is a fraction of waking *time* during which two locked
//! iOS devices are mutually invisible, not a probability that an encounter is
//! never detected.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DEFAULT_USAGE_HOURS_PER_MONTH: f64 = 37.0;
pub const DEFAULT_DAYS_PER_MONTH: f64 = 30.0;
pub const DEFAULT_SLEEP_HOURS: f64 = 8.0;
pub const DEFAULT_SESSIONS_PER_DAY: usize = 40;
pub const HOURS_PER_DAY: f64 = 24.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UsageModel<T> {
    pub usage_hours_per_month: T,
    pub days_per_month: T,
    pub sleep_hours_per_day: T,
}

impl<T: Real> UsageModel<T> {
    pub fn new(usage_hours_per_month: T, days_per_month: T, sleep_hours_per_day: T) -> Result<Self> {
        let m = UsageModel {
            usage_hours_per_month,
            days_per_month,
            sleep_hours_per_day,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("usage_hours_per_month", self.usage_hours_per_month),
            ("days_per_month", self.days_per_month),
            ("sleep_hours_per_day", self.sleep_hours_per_day),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > T::zero()) {
                return Err(Error::Domain(format!("{name} must be a positive number, got {v}")));
            }
        }
        if self.waking_hours() <= T::zero() {
            return Err(Error::Domain(format!(
                "sleep of {} h leaves no waking window",
                self.sleep_hours_per_day
            )));
        }
        let per_day = self.usage_hours_per_month / self.days_per_month;
        if per_day >= self.waking_hours() {
            return Err(Error::Domain(format!(
                "daily usage {per_day} h does not fit in {} waking hours",
                self.waking_hours()
            )));
        }
        Ok(())
    }

    pub fn waking_hours(&self) -> T {
        T::lit(HOURS_PER_DAY) - self.sleep_hours_per_day
    }
}

impl Default for UsageModel<f64> {
    fn default() -> Self {
        UsageModel {
            usage_hours_per_month: DEFAULT_USAGE_HOURS_PER_MONTH,
            days_per_month: DEFAULT_DAYS_PER_MONTH,
            sleep_hours_per_day: DEFAULT_SLEEP_HOURS,
        }
    }
}

impl Default for UsageModel<f32> {
    fn default() -> Self {
        UsageModel {
            usage_hours_per_month: DEFAULT_USAGE_HOURS_PER_MONTH as f32,
            days_per_month: DEFAULT_DAYS_PER_MONTH as f32,
            sleep_hours_per_day: DEFAULT_SLEEP_HOURS as f32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rounding {
    #[default]
    Exact,
    /// Nearest five minutes. Presentational: it is how 37 h over a 30-day
    /// month is quoted as "1 h 15 m".
    NearestFiveMinutes,
}

/// Rounds an hour value to the nearest multiple of `minutes`.
pub fn round_to_minutes<T: Real>(hours: T, minutes: T) -> T {
    let sixty = T::lit(60.0);
    (hours * sixty / minutes).round() * minutes / sixty
}

pub fn unlocked_hours_per_day<T: Real>(m: &UsageModel<T>, rounding: Rounding) -> Result<T> {
    m.validate()?;
    let exact = m.usage_hours_per_month / m.days_per_month;
    Ok(match rounding {
        Rounding::Exact => exact,
        Rounding::NearestFiveMinutes => round_to_minutes(exact, T::lit(5.0)),
    })
}

/// Share of the waking day the phone spends locked.
pub fn locked_waking_fraction<T: Real>(unlocked_per_day: T, sleep_hours: T) -> Result<T> {
    let waking = T::lit(HOURS_PER_DAY) - sleep_hours;
    if !(sleep_hours >= T::zero() && waking > T::zero()) {
        return Err(Error::Domain(format!("sleep of {sleep_hours} h leaves no waking window")));
    }
    if !(unlocked_per_day >= T::zero() && unlocked_per_day <= waking) {
        return Err(Error::Domain(format!(
            "unlocked time {unlocked_per_day} h is outside [0, {waking}] waking hours"
        )));
    }
    Ok((waking - unlocked_per_day) / waking)
}

/// Expected share of waking time both devices are locked, assuming they lock
/// independently.
pub fn pairwise_miss_fraction<T: Real>(locked_fraction: T) -> Result<T> {
    if !(locked_fraction >= T::zero() && locked_fraction <= T::one()) {
        return Err(Error::Domain(format!("locked fraction {locked_fraction} is outside [0, 1]")));
    }
    Ok(locked_fraction * locked_fraction)
}

/// Whole-percent rendering of a fraction.
pub fn percent<T: Real>(fraction: T) -> i64 {
    (fraction * T::lit(100.0)).round().to_i64().unwrap_or(i64::MAX)
}

/// "1 h 15 m" rendering, rounded to the minute.
pub fn hours_minutes<T: Real>(hours: T) -> String {
    let total = (hours * T::lit(60.0)).round().to_i64().unwrap_or(0);
    format!("{} h {} m", total / 60, total % 60)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub mean: T,
    pub stderr: T,
    pub trials: usize,
}

impl<T: Real> Estimate<T> {
    /// Distance from `target` in standard errors. Infinite when the estimate has
    /// zero spread and misses the target.
    pub fn z_score(&self, target: T) -> T {
        let diff = (self.mean - target).abs();
        if diff == T::zero() {
            T::zero()
        } else {
            diff / self.stderr
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarloConfig {
    pub trials: usize,
    /// Unlocked time per day is split into this many equal sessions.
    pub sessions: usize,
    /// Give both devices the same schedule instead of independent ones.
    pub correlated: bool,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig {
            trials: 100_000,
            sessions: DEFAULT_SESSIONS_PER_DAY,
            correlated: false,
        }
    }
}

/// Places `sessions` equal, non-overlapping unlock sessions totalling
/// `unlocked` hours uniformly at random on a circular day of `waking` hours,
/// returned as disjoint `[start, end)` spans within `[0, waking)`.
///
/// Gaps between sessions are a uniform random composition of the locked time,
/// and the whole layout is rotated by a uniform offset, so every instant of the
/// waking window is unlocked with probability exactly `unlocked / waking`.
pub fn sample_unlock_sessions<T: Real, R: Rng + ?Sized>(
    waking: T,
    unlocked: T,
    sessions: usize,
    rng: &mut R,
    out: &mut Vec<(T, T)>,
) {
    out.clear();
    if sessions == 0 || unlocked <= T::zero() {
        return;
    }
    let len = unlocked / T::from_usize(sessions).expect("session count fits the scalar");
    let locked = waking - unlocked;
    let mut cuts: Vec<T> = (0..sessions)
        .map(|_| if locked > T::zero() { rng.gen_range(T::zero()..locked) } else { T::zero() })
        .collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let offset = rng.gen_range(T::zero()..waking);
    for (i, cut) in cuts.into_iter().enumerate() {
        let mut start = cut + T::from_usize(i).expect("index fits the scalar") * len + offset;
        if start >= waking {
            start = start - waking;
        }
        let end = start + len;
        if end <= waking {
            out.push((start, end));
        } else {
            out.push((start, waking));
            out.push((T::zero(), end - waking));
        }
    }
}

/// Total length of the union of half-open spans. Sorts `spans` in place.
fn union_length<T: Real>(spans: &mut [(T, T)]) -> T {
    spans.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite spans"));
    let mut total = T::zero();
    let mut current: Option<(T, T)> = None;
    for &(s, e) in spans.iter() {
        current = match current {
            Some((cs, ce)) if s <= ce => Some((cs, ce.max(e))),
            Some((cs, ce)) => {
                total = total + (ce - cs);
                Some((s, e))
            }
            None => Some((s, e)),
        };
    }
    if let Some((cs, ce)) = current {
        total = total + (ce - cs);
    }
    total
}

/// Monte Carlo estimate of the share of the waking window during which two
/// devices are locked at once, given `unlocked` hours of use per day each.
pub fn monte_carlo_locked_overlap<T: Real, R: Rng + ?Sized>(
    waking: T,
    unlocked: T,
    cfg: &MonteCarloConfig,
    rng: &mut R,
) -> Result<Estimate<T>> {
    if cfg.trials == 0 {
        return Err(Error::Domain("trials must be >= 1".to_string()));
    }
    if cfg.sessions == 0 {
        return Err(Error::Domain("sessions must be >= 1".to_string()));
    }
    if !(waking > T::zero() && unlocked >= T::zero() && unlocked <= waking) {
        return Err(Error::Domain(format!(
            "unlocked time {unlocked} h is outside [0, {waking}] waking hours"
        )));
    }

    let mut a = Vec::with_capacity(2 * cfg.sessions);
    let mut b = Vec::with_capacity(2 * cfg.sessions);
    let mut both = Vec::with_capacity(4 * cfg.sessions);
    // Welford
    let mut mean = T::zero();
    let mut m2 = T::zero();
    for n in 1..=cfg.trials {
        sample_unlock_sessions(waking, unlocked, cfg.sessions, rng, &mut a);
        if cfg.correlated {
            b.clone_from(&a);
        } else {
            sample_unlock_sessions(waking, unlocked, cfg.sessions, rng, &mut b);
        }
        both.clear();
        both.extend_from_slice(&a);
        both.extend_from_slice(&b);
        let x = (waking - union_length(&mut both)) / waking;
        let delta = x - mean;
        mean = mean + delta / T::from_usize(n).expect("trial count fits the scalar");
        m2 = m2 + delta * (x - mean);
    }
    let n = T::from_usize(cfg.trials).expect("trial count fits the scalar");
    let stderr = if cfg.trials > 1 {
        (m2 / (n - T::one()) / n).sqrt()
    } else {
        T::zero()
    };
    Ok(Estimate {
        mean,
        stderr,
        trials: cfg.trials,
    })
}

/// [`monte_carlo_locked_overlap`] driven by a usage model.
pub fn monte_carlo_simultaneous_locked<T: Real, R: Rng + ?Sized>(
    m: &UsageModel<T>,
    rounding: Rounding,
    cfg: &MonteCarloConfig,
    rng: &mut R,
) -> Result<Estimate<T>> {
    let unlocked = unlocked_hours_per_day(m, rounding)?;
    monte_carlo_locked_overlap(m.waking_hours(), unlocked, cfg, rng)
}

/// Every quantity of the availability argument, computed from one usage model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvailabilityReport<T> {
    pub model: UsageModel<T>,
    pub unlocked_exact: T,
    pub unlocked_rounded: T,
    /// Computed from the rounded unlocked time, as the quoted figures are.
    pub locked_fraction: T,
    pub pairwise_miss: T,
    pub monte_carlo: Option<Estimate<T>>,
}

impl<T: Real> AvailabilityReport<T> {
    pub fn compute(m: UsageModel<T>) -> Result<Self> {
        let unlocked_exact = unlocked_hours_per_day(&m, Rounding::Exact)?;
        let unlocked_rounded = unlocked_hours_per_day(&m, Rounding::NearestFiveMinutes)?;
        let locked_fraction = locked_waking_fraction(unlocked_rounded, m.sleep_hours_per_day)?;
        let pairwise_miss = pairwise_miss_fraction(locked_fraction)?;
        Ok(AvailabilityReport {
            model: m,
            unlocked_exact,
            unlocked_rounded,
            locked_fraction,
            pairwise_miss,
            monte_carlo: None,
        })
    }

    pub fn with_monte_carlo<R: Rng + ?Sized>(mut self, cfg: &MonteCarloConfig, rng: &mut R) -> Result<Self> {
        self.monte_carlo = Some(monte_carlo_locked_overlap(
            self.model.waking_hours(),
            self.unlocked_rounded,
            cfg,
            rng,
        )?);
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() < tol
    }

    #[test]
    fn unlocked_examples() {
        let m = UsageModel::new(37.0, 30.0, 8.0).unwrap();
        let exact = unlocked_hours_per_day(&m, Rounding::Exact).unwrap();
        assert!(close(exact, 37.0 / 30.0, 1e-12));
        assert!(close(exact, 1.2333, 1e-4));
        assert_eq!(unlocked_hours_per_day(&m, Rounding::NearestFiveMinutes).unwrap(), 1.25);
        assert_eq!(hours_minutes(1.25), "1 h 15 m");

        let m = UsageModel::new(30.0, 30.0, 8.0).unwrap();
        assert_eq!(unlocked_hours_per_day(&m, Rounding::Exact).unwrap(), 1.0);

        assert!(UsageModel::new(0.0, 30.0, 8.0).is_err());
        assert!(UsageModel::new(37.0, 30.0, 24.0).is_err());
        assert!(UsageModel::new(16.0 * 30.0, 30.0, 8.0).is_err());
        assert!(UsageModel::new(f64::NAN, 30.0, 8.0).is_err());
    }

    #[test]
    fn locked_fraction_examples() {
        assert_eq!(locked_waking_fraction(1.25, 8.0).unwrap(), 0.921875);
        assert_eq!(locked_waking_fraction(0.0, 8.0).unwrap(), 1.0);
        assert_eq!(locked_waking_fraction(16.0, 8.0).unwrap(), 0.0);
        assert!(locked_waking_fraction(16.5, 8.0).is_err());
        assert!(locked_waking_fraction(-0.5, 8.0).is_err());
        assert!(locked_waking_fraction(0.0, 24.0).is_err());
    }

    #[test]
    fn pairwise_examples() {
        assert!(close(pairwise_miss_fraction(0.921875).unwrap(), 0.849854, 5e-7));
        assert_eq!(pairwise_miss_fraction(0.0).unwrap(), 0.0);
        assert_eq!(pairwise_miss_fraction(1.0).unwrap(), 1.0);
        assert!(pairwise_miss_fraction(1.01).is_err());
        assert_eq!(percent(0.921875), 92);
        assert_eq!(percent(0.849853515625), 85);
    }

    #[test]
    fn works_in_f32() {
        let m = UsageModel::<f32>::default();
        let r = AvailabilityReport::compute(m).unwrap();
        assert_eq!(r.unlocked_rounded, 1.25f32);
        assert_eq!(r.locked_fraction, 0.921875f32);
        assert!((r.pairwise_miss - 0.849854f32).abs() < 1e-6);
    }

    #[test]
    fn sessions_cover_exact_unlocked_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut spans = Vec::new();
        for _ in 0..200 {
            sample_unlock_sessions(16.0, 1.25, 40, &mut rng, &mut spans);
            let total = union_length(&mut spans);
            assert!(close(total, 1.25, 1e-9), "{total}");
            assert!(spans.iter().all(|&(s, e)| 0.0 <= s && s < e && e <= 16.0));
        }
    }

    #[test]
    fn union_length_handles_overlap() {
        let mut v = vec![(3.0, 5.0), (0.0, 1.0), (0.5, 2.0), (4.0, 4.5)];
        assert_eq!(union_length(&mut v), 4.0);
        let mut empty: Vec<(f64, f64)> = vec![];
        assert_eq!(union_length(&mut empty), 0.0);
    }

    #[test]
    fn degenerate_schedules() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = MonteCarloConfig {
            trials: 1000,
            ..MonteCarloConfig::default()
        };
        let e = monte_carlo_locked_overlap(16.0, 0.0, &cfg, &mut rng).unwrap();
        assert_eq!((e.mean, e.stderr), (1.0, 0.0));

        let cfg = MonteCarloConfig {
            trials: 1000,
            correlated: true,
            ..MonteCarloConfig::default()
        };
        let e = monte_carlo_locked_overlap(16.0, 1.25, &cfg, &mut rng).unwrap();
        assert!(close(e.mean, 0.921875, 1e-9), "{}", e.mean);

        let bad = MonteCarloConfig {
            trials: 0,
            ..MonteCarloConfig::default()
        };
        assert!(monte_carlo_locked_overlap(16.0, 1.25, &bad, &mut rng).is_err());
    }

    #[test]
    fn independent_schedules_converge_to_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = MonteCarloConfig {
            trials: 20_000,
            ..MonteCarloConfig::default()
        };
        let m = UsageModel::default();
        let e = monte_carlo_simultaneous_locked(&m, Rounding::NearestFiveMinutes, &cfg, &mut rng).unwrap();
        assert!(e.z_score(0.921875f64 * 0.921875) < 4.0, "{e:?}");
    }

    proptest::proptest! {
        #[test]
        fn pairwise_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            proptest::prop_assert!(pairwise_miss_fraction(lo).unwrap() <= pairwise_miss_fraction(hi).unwrap());
        }
    }
}
