//! Per-user contact history, the positive-status registry and retention.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use hashbrown::{HashMap, HashSet};

use crate::geo::GeoPoint;
use crate::tracing::ContactEvent;
use crate::UserId;

/// Sampling intervals in a day at the given cadence.
pub fn intervals_per_day(interval_min: f64) -> u64 {
    libm::round(1440.0 / interval_min) as u64
}

/// Maps interval indices to Unix timestamps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalClock {
    pub epoch_unix_s: i64,
    pub interval_s: f64,
}

impl IntervalClock {
    pub fn timestamp(&self, interval: u64) -> i64 {
        self.epoch_unix_s + libm::floor(interval as f64 * self.interval_s) as i64
    }

    pub fn interval_at(&self, unix_s: i64) -> u64 {
        let dt = (unix_s - self.epoch_unix_s).max(0) as f64;
        libm::floor(dt / self.interval_s) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetentionPolicy {
    pub window_days: u32,
}

impl Default for RetentionPolicy {
    fn default() -> Self {
        Self { window_days: 14 }
    }
}

impl RetentionPolicy {
    pub fn new(window_days: u32) -> Option<Self> {
        (window_days > 0).then_some(Self { window_days })
    }

    pub fn window_intervals(&self, interval_min: f64) -> u64 {
        u64::from(self.window_days) * intervals_per_day(interval_min)
    }

    /// The retained intervals as of `now`.
    pub fn window_ending(&self, now: u64, interval_min: f64) -> IntervalWindow {
        IntervalWindow { start: now.saturating_sub(self.window_intervals(interval_min)), end: now }
    }
}

/// Inclusive interval range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntervalWindow {
    pub start: u64,
    pub end: u64,
}

impl IntervalWindow {
    pub const ALL: IntervalWindow = IntervalWindow { start: 0, end: u64::MAX };

    pub fn contains(&self, interval: u64) -> bool {
        (self.start..=self.end).contains(&interval)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactRecord {
    pub contact: UserId,
    pub interval: u64,
    pub location: GeoPoint,
}

/// Contact vectors: for every user, the contacts in the order they happened.
#[derive(Debug, Clone, Default)]
pub struct ContactLog {
    vectors: HashMap<UserId, VecDeque<ContactRecord>>,
    /// Latest interval recorded.
    clock: u64,
}

impl ContactLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    /// Records both directions of each event. Replaying a batch is a no-op.
    pub fn record_events(&mut self, events: &[ContactEvent]) {
        for e in events {
            let (a, b) = (e.pair.user_a(), e.pair.user_b());
            self.push(a, ContactRecord { contact: b, interval: e.snapshot_from, location: e.location });
            self.push(b, ContactRecord { contact: a, interval: e.snapshot_from, location: e.location });
            self.clock = self.clock.max(e.snapshot_from);
        }
    }

    /// Inserts one direction, keeping the vector sorted by interval.
    pub fn push(&mut self, user: UserId, rec: ContactRecord) {
        let v = self.vectors.entry(user).or_default();
        let pos = v.partition_point(|r| r.interval <= rec.interval);
        let dup = v.range(..pos).rev().take_while(|r| r.interval == rec.interval).any(|r| r.contact == rec.contact);
        if !dup {
            v.insert(pos, rec);
        }
        self.clock = self.clock.max(rec.interval);
    }

    /// Drops records older than the policy window before `now`.
    pub fn prune(&mut self, now: u64, policy: &RetentionPolicy, interval_min: f64) {
        let start = policy.window_ending(now, interval_min).start;
        self.vectors.retain(|_, v| {
            while v.front().is_some_and(|r| r.interval < start) {
                v.pop_front();
            }
            !v.is_empty()
        });
    }

    pub fn contacts_of(&self, user: UserId) -> impl Iterator<Item = &ContactRecord> + '_ {
        self.vectors.get(&user).into_iter().flatten()
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.vectors.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.vectors.values().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Every stored direction, sorted by user then interval.
    pub fn entries(&self) -> Vec<(UserId, ContactRecord)> {
        let mut users: Vec<UserId> = self.users().collect();
        users.sort_unstable();
        users.into_iter().flat_map(|u| self.contacts_of(u).map(move |r| (u, *r))).collect()
    }
}

/// Positive flags as a bit vector indexed by user id, plus diagnosis intervals.
#[derive(Debug, Clone, Default)]
pub struct InfectionRegistry {
    bits: Vec<u64>,
    diagnosed: HashMap<UserId, u64>,
}

impl InfectionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn mark_positive(&mut self, user: UserId, diagnosed_interval: u64) {
        let (word, bit) = ((user.0 / 64) as usize, user.0 % 64);
        if self.bits.len() <= word {
            self.bits.resize(word + 1, 0);
        }
        self.bits[word] |= 1 << bit;
        self.diagnosed.entry(user).or_insert(diagnosed_interval);
    }

    pub fn is_positive(&self, user: UserId) -> bool {
        let (word, bit) = ((user.0 / 64) as usize, user.0 % 64);
        self.bits.get(word).is_some_and(|w| w & (1 << bit) != 0)
    }

    pub fn diagnosed_at(&self, user: UserId) -> Option<u64> {
        self.diagnosed.get(&user).copied()
    }

    /// Positive users in ascending id order.
    pub fn positives(&self) -> Vec<UserId> {
        let mut v: Vec<UserId> = self.diagnosed.keys().copied().collect();
        v.sort_unstable();
        v
    }

    pub fn count(&self) -> usize {
        self.diagnosed.len()
    }
}

/// Non-positive users within `hops` contacts of a positive inside `window`.
/// `hops = 1` is direct contact only.
pub fn susceptible_of(log: &ContactLog, reg: &InfectionRegistry, window: IntervalWindow, hops: u32) -> HashSet<UserId> {
    susceptible_from(log, reg, &reg.positives(), window, hops)
}

/// As [`susceptible_of`], but seeded from a subset of the positives.
pub fn susceptible_from(
    log: &ContactLog,
    reg: &InfectionRegistry,
    sources: &[UserId],
    window: IntervalWindow,
    hops: u32,
) -> HashSet<UserId> {
    let mut found = HashSet::new();
    let mut frontier: Vec<UserId> = sources.to_vec();
    for _ in 0..hops {
        let mut next = Vec::new();
        for u in &frontier {
            for r in log.contacts_of(*u).filter(|r| window.contains(r.interval)) {
                if !reg.is_positive(r.contact) && found.insert(r.contact) {
                    next.push(r.contact);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    found
}
