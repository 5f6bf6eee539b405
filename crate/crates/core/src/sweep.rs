//! Index-ordered parallel evaluation of independent cells.

use rayon::prelude::*;

/// Evaluates `f(0..n)` in parallel; the output is ordered by index, never by
/// completion time, so results do not depend on the thread count.
pub fn par_map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}
