//! Entry budget for assembled matrices and lifted vectors.
//!
//! Kronecker lifts grow as `n^N`, so one careless call can try to allocate
//! terabytes. Every assembly path projects its entry count first and checks
//! it against a process-wide ceiling before touching memory.

use crate::error::{CarlemanError, Result};

/// Default ceiling on the number of stored entries in any single assembled
/// matrix or dense lifted vector.
pub const DEFAULT_MAX_ENTRIES: usize = 50_000_000;

/// Current ceiling. Reads `CARLEMAN_MAX_ENTRIES` from the environment on
/// every call, so a value set by the launcher applies without a rebuild.
pub fn max_entries() -> usize {
    std::env::var("CARLEMAN_MAX_ENTRIES")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_MAX_ENTRIES)
}

/// Fails with [`CarlemanError::CapacityExceeded`] when `needed` is over the ceiling.
pub fn check_entries(needed: usize) -> Result<()> {
    let limit = max_entries();
    if needed > limit {
        return Err(CarlemanError::CapacityExceeded { needed, limit });
    }
    Ok(())
}

/// `n^i` with overflow reported as a capacity error instead of a panic.
/// Anything that overflows `usize` is far past any realistic budget anyway.
pub fn checked_dim_pow(n: usize, i: u32) -> Result<usize> {
    n.checked_pow(i).ok_or(CarlemanError::CapacityExceeded {
        needed: usize::MAX,
        limit: max_entries(),
    })
}

/// `a * b` with the same overflow-as-capacity-error convention.
pub fn checked_mul(a: usize, b: usize) -> Result<usize> {
    a.checked_mul(b).ok_or(CarlemanError::CapacityExceeded {
        needed: usize::MAX,
        limit: max_entries(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_counts_pass() {
        check_entries(0).unwrap();
        check_entries(1024).unwrap();
    }

    #[test]
    fn counts_over_the_default_fail() {
        // only meaningful when the override is not set, which is the normal
        // test environment
        if std::env::var("CARLEMAN_MAX_ENTRIES").is_err() {
            let err = check_entries(DEFAULT_MAX_ENTRIES + 1).unwrap_err();
            assert!(matches!(
                err,
                CarlemanError::CapacityExceeded { needed, .. } if needed == DEFAULT_MAX_ENTRIES + 1
            ));
        }
    }

    #[test]
    fn dim_pow_overflow_is_an_error() {
        assert_eq!(checked_dim_pow(10, 3).unwrap(), 1000);
        assert!(checked_dim_pow(usize::MAX, 2).is_err());
    }
}
