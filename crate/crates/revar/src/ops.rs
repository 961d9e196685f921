//! Thread-local tally of floating-point multiplies in the synthesis hot path.
//!
//! The prediction-subspace cost argument is checked by counting arithmetic
//! operations rather than timing them, so the dense kernels in [`crate::linalg`]
//! report how many scalar multiplies they perform. Counting is always on;
//! the overhead is one counter add per kernel call.

use std::cell::Cell;

thread_local! {
    static MULTIPLIES: Cell<u64> = const { Cell::new(0) };
}

/// Record `n` scalar multiplies on the current thread.
#[inline]
pub fn record_multiplies(n: u64) {
    MULTIPLIES.with(|c| c.set(c.get().wrapping_add(n)));
}

/// Current multiply tally for this thread.
pub fn multiplies() -> u64 {
    MULTIPLIES.with(|c| c.get())
}

/// Reset the tally and return the previous value.
pub fn take_multiplies() -> u64 {
    MULTIPLIES.with(|c| c.replace(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tally_accumulates_and_resets() {
        take_multiplies();
        record_multiplies(3);
        record_multiplies(4);
        assert_eq!(multiplies(), 7);
        assert_eq!(take_multiplies(), 7);
        assert_eq!(multiplies(), 0);
    }
}
