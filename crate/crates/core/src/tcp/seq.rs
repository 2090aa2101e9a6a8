//! Modular 32-bit sequence-number comparisons.

#[inline]
pub fn seq_lt(a: u32, b: u32) -> bool {
    (a.wrapping_sub(b) as i32) < 0
}

#[inline]
pub fn seq_le(a: u32, b: u32) -> bool {
    (a.wrapping_sub(b) as i32) <= 0
}

#[inline]
pub fn seq_gt(a: u32, b: u32) -> bool {
    seq_lt(b, a)
}

#[inline]
pub fn seq_ge(a: u32, b: u32) -> bool {
    seq_le(b, a)
}

/// Bytes from `from` forward to `to`.
#[inline]
pub fn seq_diff(to: u32, from: u32) -> u32 {
    to.wrapping_sub(from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wraps_around() {
        assert!(seq_lt(u32::MAX - 5, 3));
        assert!(seq_gt(3, u32::MAX - 5));
        assert_eq!(seq_diff(3, u32::MAX - 5), 9);
    }

    proptest! {
        #[test]
        fn forward_offsets_compare(a in any::<u32>(), d in 1u32..(1 << 30)) {
            let b = a.wrapping_add(d);
            prop_assert!(seq_lt(a, b));
            prop_assert!(seq_gt(b, a));
            prop_assert!(seq_le(a, a) && seq_ge(a, a));
            prop_assert_eq!(seq_diff(b, a), d);
        }
    }
}
