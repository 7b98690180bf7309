use std::fmt;

/// Set of acquired angle indices, at most 192 entries.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct AngleMask {
    bits: [u64; 3],
}

impl AngleMask {
    pub const CAPACITY: usize = 192;

    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_angles(angles: impl IntoIterator<Item = usize>) -> Self {
        let mut mask = Self::new();
        for a in angles {
            mask.insert(a);
        }
        mask
    }

    #[inline]
    pub fn contains(&self, angle: usize) -> bool {
        angle < Self::CAPACITY && self.bits[angle / 64] & (1 << (angle % 64)) != 0
    }

    /// Returns `false` if the angle was already present.
    pub fn insert(&mut self, angle: usize) -> bool {
        assert!(angle < Self::CAPACITY, "angle index {angle} out of range");
        let had = self.contains(angle);
        self.bits[angle / 64] |= 1 << (angle % 64);
        !had
    }

    pub fn len(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    /// Ascending iteration, independent of insertion order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..Self::CAPACITY).filter(move |&a| self.contains(a))
    }

    pub fn is_subset(&self, other: &AngleMask) -> bool {
        self.bits
            .iter()
            .zip(&other.bits)
            .all(|(a, b)| a & !b == 0)
    }
}

impl fmt::Debug for AngleMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_and_iterate_sorted() {
        let mut m = AngleMask::new();
        assert!(m.insert(179));
        assert!(m.insert(3));
        assert!(!m.insert(3));
        assert_eq!(m.iter().collect::<Vec<_>>(), vec![3, 179]);
        assert_eq!(m.len(), 2);
        assert!(AngleMask::from_angles([3]).is_subset(&m));
        assert!(!m.is_subset(&AngleMask::from_angles([3])));
    }
}
