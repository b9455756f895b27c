//! Working memory: a small keyed cache with salience-based eviction and expiry.
//!
//! Everything that leaves the cache through capacity eviction or expiry is kept in
//! a pending list until reflection drains it, so no entry disappears unseen.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::Tick;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Producer {
    Perception,
    Recall,
    Unit(String),
}

impl fmt::Display for Producer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Producer::Perception => f.write_str("perception"),
            Producer::Recall => f.write_str("recall"),
            Producer::Unit(id) => write!(f, "unit:{id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkingMemoryEntry {
    pub key: String,
    pub value: String,
    pub producer: Producer,
    pub created_at: Tick,
    pub salience: f64,
}

impl WorkingMemoryEntry {
    /// Salience is clamped into `[0, 1]`; NaN becomes 0.
    pub fn new(
        key: impl Into<String>,
        value: impl Into<String>,
        producer: Producer,
        created_at: Tick,
        salience: f64,
    ) -> Self {
        let salience = if salience.is_nan() {
            0.0
        } else {
            salience.clamp(0.0, 1.0)
        };
        Self {
            key: key.into(),
            value: value.into(),
            producer,
            created_at,
            salience,
        }
    }
}

impl fmt::Display for WorkingMemoryEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({}, s={:.2}, t={}): {}",
            self.key, self.producer, self.salience, self.created_at, self.value
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkingMemoryConfig {
    pub capacity: usize,
    pub ttl: Tick,
    pub reflection_threshold: usize,
}

impl Default for WorkingMemoryConfig {
    fn default() -> Self {
        Self {
            capacity: 7,
            ttl: 30,
            reflection_threshold: 7,
        }
    }
}

impl WorkingMemoryConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.capacity == 0 {
            return Err("working-memory capacity must be >= 1".into());
        }
        if self.reflection_threshold == 0 {
            return Err("reflection threshold must be >= 1".into());
        }
        Ok(())
    }
}

/// Why an entry left the cache without being processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Departure {
    Evicted,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkingMemory {
    config: WorkingMemoryConfig,
    entries: BTreeMap<String, WorkingMemoryEntry>,
    departed: Vec<(Departure, WorkingMemoryEntry)>,
}

impl Default for WorkingMemory {
    fn default() -> Self {
        Self::new(WorkingMemoryConfig::default())
    }
}

impl WorkingMemory {
    pub fn new(config: WorkingMemoryConfig) -> Self {
        assert!(config.capacity >= 1, "working-memory capacity must be >= 1");
        Self {
            config,
            entries: BTreeMap::new(),
            departed: Vec::new(),
        }
    }

    pub fn config(&self) -> &WorkingMemoryConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&WorkingMemoryEntry> {
        self.entries.get(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Inserts or overwrites `entry`, returning whatever capacity eviction removed.
    pub fn put(&mut self, entry: WorkingMemoryEntry) -> Vec<WorkingMemoryEntry> {
        self.entries.insert(entry.key.clone(), entry);
        let mut evicted = Vec::new();
        while self.entries.len() > self.config.capacity {
            let victim = self
                .entries
                .values()
                .min_by(|a, b| {
                    a.salience
                        .total_cmp(&b.salience)
                        .then_with(|| a.created_at.cmp(&b.created_at))
                        .then_with(|| a.key.cmp(&b.key))
                })
                .map(|e| e.key.clone())
                .expect("cache is non-empty");
            let gone = self.entries.remove(&victim).expect("victim present");
            self.departed.push((Departure::Evicted, gone.clone()));
            evicted.push(gone);
        }
        evicted
    }

    /// Removes every entry older than the ttl at `now`.
    pub fn expire(&mut self, now: Tick) -> Vec<WorkingMemoryEntry> {
        let ttl = self.config.ttl;
        let stale: Vec<String> = self
            .entries
            .values()
            .filter(|e| now.saturating_sub(e.created_at) > ttl)
            .map(|e| e.key.clone())
            .collect();
        let expired: Vec<_> = stale
            .iter()
            .filter_map(|k| self.entries.remove(k))
            .collect();
        self.departed
            .extend(expired.iter().cloned().map(|e| (Departure::Expired, e)));
        expired
    }

    /// Entries by salience desc, then newer first, then key.
    pub fn snapshot(&self) -> Vec<WorkingMemoryEntry> {
        let mut entries: Vec<_> = self.entries.values().cloned().collect();
        entries.sort_by(|a, b| {
            b.salience
                .total_cmp(&a.salience)
                .then_with(|| b.created_at.cmp(&a.created_at))
                .then_with(|| a.key.cmp(&b.key))
        });
        entries
    }

    pub fn should_reflect(&self) -> bool {
        self.entries.len() >= self.config.reflection_threshold
    }

    /// Entries evicted or expired since the last drain.
    pub fn departed(&self) -> &[(Departure, WorkingMemoryEntry)] {
        &self.departed
    }

    pub fn drain_departed(&mut self) -> Vec<(Departure, WorkingMemoryEntry)> {
        std::mem::take(&mut self.departed)
    }

    pub fn remove(&mut self, key: &str) -> Option<WorkingMemoryEntry> {
        self.entries.remove(key)
    }

    /// Empties the cache, returning the entries in snapshot order.
    pub fn take_all(&mut self) -> Vec<WorkingMemoryEntry> {
        let entries = self.snapshot();
        self.entries.clear();
        entries
    }

    /// Human-readable dump in snapshot order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, entry) in self.snapshot().iter().enumerate() {
            out.push_str(&format!("{:>2}. {entry}\n", i + 1));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn entry(key: &str, salience: f64, t: Tick) -> WorkingMemoryEntry {
        WorkingMemoryEntry::new(
            key,
            format!("value of {key}"),
            Producer::Perception,
            t,
            salience,
        )
    }

    #[test]
    fn evicts_least_salient() {
        let mut wm = WorkingMemory::default();
        let mut evicted = Vec::new();
        for i in 1..=8 {
            evicted.extend(wm.put(entry(&format!("e{i}"), f64::from(i) / 10.0, i as Tick)));
        }
        assert_eq!(wm.len(), 7);
        assert_eq!(evicted.len(), 1);
        assert_eq!(evicted[0].key, "e1");
        assert!(!wm.contains("e1"));
    }

    #[test]
    fn overwrite_keeps_size() {
        let mut wm = WorkingMemory::default();
        wm.put(entry("a", 0.5, 0));
        wm.put(entry("b", 0.5, 0));
        let mut replacement = entry("a", 0.9, 4);
        replacement.value = "new".into();
        assert!(wm.put(replacement).is_empty());
        assert_eq!(wm.len(), 2);
        assert_eq!(wm.get("a").unwrap().value, "new");
        assert_eq!(wm.get("a").unwrap().created_at, 4);
    }

    #[test]
    fn capacity_one_keeps_second() {
        let mut wm = WorkingMemory::new(WorkingMemoryConfig {
            capacity: 1,
            ..Default::default()
        });
        wm.put(entry("first", 0.5, 0));
        let evicted = wm.put(entry("second", 0.5, 1));
        assert_eq!(evicted[0].key, "first");
        assert_eq!(wm.snapshot()[0].key, "second");
    }

    #[test]
    fn eviction_tie_breaks() {
        let mut wm = WorkingMemory::new(WorkingMemoryConfig {
            capacity: 2,
            ..Default::default()
        });
        wm.put(entry("b", 0.3, 5));
        wm.put(entry("a", 0.3, 5));
        assert_eq!(wm.put(entry("c", 0.3, 6))[0].key, "a");
    }

    #[test]
    fn expiry_is_strict() {
        let mut wm = WorkingMemory::default();
        assert!(wm.expire(100).is_empty());
        wm.put(entry("obs", 0.5, 0));
        assert!(wm.expire(30).is_empty());
        assert_eq!(wm.expire(31)[0].key, "obs");
        assert!(wm.is_empty());
        assert_eq!(wm.departed()[0].0, Departure::Expired);
    }

    #[test]
    fn snapshot_order() {
        let mut wm = WorkingMemory::default();
        assert!(wm.snapshot().is_empty());
        wm.put(entry("low", 0.5, 0));
        wm.put(entry("high", 0.9, 0));
        wm.put(entry("newer", 0.5, 3));
        let keys: Vec<_> = wm.snapshot().into_iter().map(|e| e.key).collect();
        assert_eq!(keys, ["high", "newer", "low"]);
    }

    #[test]
    fn reflection_threshold() {
        let mut wm = WorkingMemory::default();
        for i in 0..6 {
            wm.put(entry(&format!("k{i}"), 0.5, 0));
        }
        assert!(!wm.should_reflect());
        wm.put(entry("k6", 0.5, 0));
        assert!(wm.should_reflect());
        wm.take_all();
        assert!(!wm.should_reflect());
    }

    #[test]
    fn salience_is_clamped() {
        assert_eq!(entry("x", 3.0, 0).salience, 1.0);
        assert_eq!(entry("x", f64::NAN, 0).salience, 0.0);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Put(u8, u8),
        Expire(u8),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            4 => (0u8..20, 0u8..=10).prop_map(|(k, s)| Op::Put(k, s)),
            1 => (0u8..50).prop_map(Op::Expire),
        ]
    }

    proptest! {
        #[test]
        fn bounded_and_lossless(capacity in 1usize..10, ops in prop::collection::vec(op(), 0..200)) {
            let mut wm = WorkingMemory::new(WorkingMemoryConfig { capacity, ttl: 10, reflection_threshold: capacity });
            let mut inserted = BTreeSet::new();
            let mut clock = 0u64;
            for op in ops {
                clock += 1;
                match op {
                    Op::Put(k, s) => {
                        inserted.insert(format!("k{k}"));
                        wm.put(entry(&format!("k{k}"), f64::from(s) / 10.0, clock));
                    }
                    Op::Expire(dt) => { wm.expire(clock + u64::from(dt)); }
                }
                prop_assert!(wm.len() <= capacity);
            }
            // every key ever inserted is either still present or was reported leaving
            let accounted: BTreeSet<String> = wm
                .snapshot()
                .into_iter()
                .map(|e| e.key)
                .chain(wm.departed().iter().map(|(_, e)| e.key.clone()))
                .collect();
            prop_assert_eq!(accounted, inserted);
        }
    }
}
