use crate::error::Error;
use serde::{Deserialize, Serialize};

/// Cell cap for exponential constructions (iid extension, induced sequence
/// distributions, exact protocol joints, oracle grids).
///
/// Every operation that allocates or walks a number of cells exponential in
/// the block length checks this cap first and returns
/// [`Error::Capacity`] instead of attempting the allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub max_cells: u64,
}

impl Default for Budget {
    /// 1e8 cells: comfortably in-memory, far below allocation failure.
    fn default() -> Self {
        Budget { max_cells: 100_000_000 }
    }
}

impl Budget {
    pub fn new(max_cells: u64) -> Self {
        Budget { max_cells }
    }

    /// Errors if `cells` exceeds the cap. `cells` is u128 so callers can
    /// pass unchecked products of sizes.
    pub fn check(&self, cells: u128) -> Result<(), Error> {
        if cells > self.max_cells as u128 {
            Err(Error::Capacity { needed: cells, limit: self.max_cells })
        } else {
            Ok(())
        }
    }

    /// Product of sizes as u128, saturating; convenience for callers
    /// multiplying many axis sizes.
    pub fn cells(sizes: &[usize]) -> u128 {
        sizes.iter().fold(1u128, |acc, &s| acc.saturating_mul(s as u128))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_allows_small_exceeds_large() {
        let b = Budget::default();
        assert!(b.check(1).is_ok());
        assert!(b.check(100_000_000).is_ok());
        let err = b.check(100_000_001).unwrap_err();
        match err {
            Error::Capacity { needed, limit } => {
                assert_eq!(needed, 100_000_001);
                assert_eq!(limit, 100_000_000);
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn cells_saturates() {
        let huge = vec![usize::MAX; 10];
        assert_eq!(Budget::cells(&huge), u128::MAX);
    }
}
