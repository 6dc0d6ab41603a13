//! Per-thread floating-point operation counter.
//!
//! Counts are analytic (from operand shapes), not measured, so they are
//! identical across runs and threads.

use std::cell::Cell;

thread_local! {
    static FLOPS: Cell<u64> = const { Cell::new(0) };
}

#[inline]
pub(crate) fn add(n: u64) {
    FLOPS.with(|c| c.set(c.get().wrapping_add(n)));
}

/// Current count on this thread.
pub fn read() -> u64 {
    FLOPS.with(Cell::get)
}

/// Returns the count and resets it to zero.
pub fn take() -> u64 {
    FLOPS.with(|c| c.replace(0))
}
