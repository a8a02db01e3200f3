//! Sequential or data-parallel execution of independent work items.
//!
//! Every item receives its own index, and callers derive per-item randomness
//! from that index, so both modes produce identical results.

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is on, otherwise
    /// behaves exactly like `Sequential`.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Maps `f` over `0..n`, preserving order.
    pub fn map_indexed<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Maps a fallible `f` over `0..n` and returns the first error by index.
    pub fn try_map_indexed<T, E, F>(self, n: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        self.map_indexed(n, f).into_iter().collect()
    }
}

/// Splits `total` items into `chunks` nearly equal contiguous ranges.
pub fn chunk_ranges(total: usize, chunks: usize) -> Vec<std::ops::Range<usize>> {
    let chunks = chunks.max(1).min(total.max(1));
    let base = total / chunks;
    let extra = total % chunks;
    let mut start = 0;
    (0..chunks)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let f = |i: usize| (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        assert_eq!(
            Execution::Sequential.map_indexed(1000, f),
            Execution::Parallel.map_indexed(1000, f)
        );
    }

    #[test]
    fn chunks_cover_range() {
        for (total, n) in [(10, 3), (0, 4), (5, 8), (100, 1)] {
            let rs = chunk_ranges(total, n);
            assert_eq!(rs.iter().map(|r| r.len()).sum::<usize>(), total);
            for w in rs.windows(2) {
                assert_eq!(w[0].end, w[1].start);
            }
        }
    }

    #[test]
    fn first_error_wins() {
        let r: Result<Vec<usize>, usize> =
            Execution::Parallel.try_map_indexed(50, |i| if i % 7 == 6 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(6));
    }
}
