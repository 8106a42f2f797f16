//! Neighbour discovery state: when each nearby device was last heard.

use std::collections::BTreeMap;

use crate::context::DeviceId;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighborTable {
    last_seen: BTreeMap<DeviceId, f64>,
}

impl NeighborTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stamp(&mut self, id: &DeviceId, at: f64) {
        self.last_seen.insert(id.clone(), at);
    }

    pub fn last_seen(&self, id: &DeviceId) -> Option<f64> {
        self.last_seen.get(id).copied()
    }

    /// A neighbour is visible while its last beacon is younger than `ttl`.
    pub fn is_visible(&self, id: &DeviceId, now: f64, ttl: f64) -> bool {
        self.last_seen.get(id).is_some_and(|&t| now - t < ttl)
    }

    /// Visible neighbours in id order.
    pub fn visible(&self, now: f64, ttl: f64) -> Vec<DeviceId> {
        self.last_seen
            .iter()
            .filter(|(_, &t)| now - t < ttl)
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn clear(&mut self) {
        self.last_seen.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_expire_after_ttl() {
        let mut n = NeighborTable::new();
        let d = DeviceId::new("d");
        n.stamp(&d, 100.0);
        assert!(n.is_visible(&d, 150.0, 100.0));
        assert!(!n.is_visible(&d, 200.0, 100.0));
        assert!(n.visible(200.0, 100.0).is_empty());
    }
}
