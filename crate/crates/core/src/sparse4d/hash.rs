//! Open-addressing map from packed voxel keys to row ids.
//!
//! Rulebook construction does tens of millions of lookups; a linear-probing
//! table over u64 keys with a multiplicative hash is both deterministic and
//! several times faster than the std HashMap here.

const EMPTY: u64 = u64::MAX;

pub struct KeyMap {
    keys: Vec<u64>,
    vals: Vec<u32>,
    mask: usize,
    len: usize,
}

impl KeyMap {
    pub fn with_capacity(n: usize) -> Self {
        let cap = (n.max(8) * 2).next_power_of_two();
        Self {
            keys: vec![EMPTY; cap],
            vals: vec![0; cap],
            mask: cap - 1,
            len: 0,
        }
    }

    #[inline]
    fn slot(&self, key: u64) -> usize {
        // splitmix64 finalizer; keys are packed indices, never u64::MAX.
        let mut h = key.wrapping_mul(0x9e3779b97f4a7c15);
        h ^= h >> 32;
        (h as usize) & self.mask
    }

    #[allow(dead_code)]
    pub fn len(&self) -> usize {
        self.len
    }

    fn grow(&mut self) {
        let new_cap = (self.mask + 1) * 2;
        let old_keys = std::mem::replace(&mut self.keys, vec![EMPTY; new_cap]);
        let old_vals = std::mem::replace(&mut self.vals, vec![0; new_cap]);
        self.mask = new_cap - 1;
        self.len = 0;
        for (k, v) in old_keys.into_iter().zip(old_vals) {
            if k != EMPTY {
                self.insert(k, v);
            }
        }
    }

    /// Insert a key. Returns false if the key was already present.
    pub fn insert(&mut self, key: u64, val: u32) -> bool {
        debug_assert_ne!(key, EMPTY);
        if self.len * 2 >= self.mask + 1 {
            self.grow();
        }
        let mut i = self.slot(key);
        loop {
            if self.keys[i] == EMPTY {
                self.keys[i] = key;
                self.vals[i] = val;
                self.len += 1;
                return true;
            }
            if self.keys[i] == key {
                return false;
            }
            i = (i + 1) & self.mask;
        }
    }

    #[inline]
    pub fn get(&self, key: u64) -> Option<u32> {
        let mut i = self.slot(key);
        loop {
            let k = self.keys[i];
            if k == key {
                return Some(self.vals[i]);
            }
            if k == EMPTY {
                return None;
            }
            i = (i + 1) & self.mask;
        }
    }

    pub fn from_sorted_keys(keys: impl ExactSizeIterator<Item = u64>) -> Self {
        let mut map = Self::with_capacity(keys.len());
        for (row, key) in keys.enumerate() {
            map.insert(key, row as u32);
        }
        map
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_get_and_grow() {
        let mut m = KeyMap::with_capacity(4);
        for k in 0..1000u64 {
            assert!(m.insert(k * 7919, k as u32));
        }
        for k in 0..1000u64 {
            assert_eq!(m.get(k * 7919), Some(k as u32));
        }
        assert_eq!(m.len(), 1000);
        assert_eq!(m.get(13), None);
        assert!(!m.insert(0, 5));
        assert_eq!(m.len(), 1000);
    }
}
