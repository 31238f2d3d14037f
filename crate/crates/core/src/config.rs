use std::fmt;

/// An edge configuration `ω ∈ {0,1}^E`, indexed by the graph's edge order.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct EdgeConfig(Vec<bool>);

impl EdgeConfig {
    pub fn closed(len: usize) -> Self {
        Self(vec![false; len])
    }

    pub fn open(len: usize) -> Self {
        Self(vec![true; len])
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    /// Bit `i` of `mask` is the state of edge `i`.
    pub fn from_mask(mask: u64, len: usize) -> Self {
        debug_assert!(len <= 64);
        Self((0..len).map(|i| mask >> i & 1 == 1).collect())
    }

    /// Inverse of [`EdgeConfig::from_mask`]; only for configurations of at most 64 edges.
    pub fn to_mask(&self) -> u64 {
        assert!(self.0.len() <= 64, "mask needs at most 64 edges");
        self.0.iter().enumerate().fold(0, |m, (i, &b)| m | (b as u64) << i)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn is_open(&self, e: usize) -> bool {
        self.0[e]
    }

    #[inline]
    pub fn set(&mut self, e: usize, open: bool) {
        self.0[e] = open;
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn open_count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// Pointwise `self ≤ other`.
    pub fn le(&self, other: &Self) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(&a, &b)| !a || b)
    }
}

impl fmt::Display for EdgeConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn mask_round_trip(mask in any::<u64>(), len in 0usize..=64) {
            let trimmed = if len == 64 { mask } else { mask & ((1u64 << len) - 1) };
            prop_assert_eq!(EdgeConfig::from_mask(trimmed, len).to_mask(), trimmed);
        }
    }

    #[test]
    fn order_and_display() {
        let a = EdgeConfig::from_mask(0b001, 3);
        let b = EdgeConfig::from_mask(0b101, 3);
        assert!(a.le(&b));
        assert!(!b.le(&a));
        assert_eq!(b.to_string(), "101");
        assert_eq!(b.open_count(), 2);
    }
}
