//! Data-parallel map over independent work items.
//!
//! Every Monte-Carlo routine in this crate is written as "compute one value
//! per path index, then reduce". Per-path work is a pure function of
//! `(seed, index)`, and reductions run over the collected vector in index
//! order, so `Parallel` and `Sequential` produce bit-identical results.
//! Without the `parallel` feature both variants run sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::numeric::{pairwise_sum, MeanSe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// Evaluate `f(i)` for `i in 0..count`, returning results in index order.
    pub fn map<T, F>(self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => (0..count).into_par_iter().map(f).collect(),
            _ => (0..count).map(f).collect(),
        }
    }

    /// Mean and standard error of each coordinate of `f(i)`, `i in 0..count`.
    ///
    /// Items are summed sequentially inside fixed blocks of `BLOCK` indices and
    /// the block sums are combined pairwise, so memory stays at one vector per
    /// block and the result does not depend on the thread count.
    pub fn moments<F>(self, count: usize, dims: usize, f: F) -> Vec<MeanSe>
    where
        F: Fn(usize) -> Vec<f64> + Sync + Send,
    {
        const BLOCK: usize = 256;
        // shifting by the first item keeps the second moment well conditioned
        let shift = if count > 0 { f(0) } else { vec![0.0; dims] };
        let blocks = count.div_ceil(BLOCK);
        let partial = self.map(blocks, |b| {
            let mut s = vec![0.0; dims];
            let mut s2 = vec![0.0; dims];
            for i in b * BLOCK..((b + 1) * BLOCK).min(count) {
                for (d, v) in f(i).into_iter().enumerate().take(dims) {
                    let v = v - shift[d];
                    s[d] += v;
                    s2[d] += v * v;
                }
            }
            (s, s2)
        });
        (0..dims)
            .map(|d| {
                let s: Vec<f64> = partial.iter().map(|p| p.0[d]).collect();
                let s2: Vec<f64> = partial.iter().map(|p| p.1[d]).collect();
                let n = count as f64;
                let m = pairwise_sum(&s) / n;
                let se = if count > 1 {
                    let var = ((pairwise_sum(&s2) - n * m * m) / (n - 1.0)).max(0.0);
                    (var / n).sqrt()
                } else {
                    f64::NAN
                };
                MeanSe { mean: m + shift[d], se, n: count }
            })
            .collect()
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let f = |i: usize| ((i as f64) * 0.37).sin();
        assert_eq!(Execution::Parallel.map(1000, f), Execution::Sequential.map(1000, f));
    }

    #[test]
    fn moments_match_mean_se_and_are_mode_independent() {
        let f = |i: usize| vec![((i as f64) * 0.37).sin(), i as f64];
        let a = Execution::Parallel.moments(1000, 2, f);
        let b = Execution::Sequential.moments(1000, 2, f);
        assert_eq!(a, b);
        let v: Vec<f64> = (0..1000).map(|i| ((i as f64) * 0.37).sin()).collect();
        let r = crate::numeric::mean_se(&v);
        assert!((a[0].mean - r.mean).abs() < 1e-14);
        assert!((a[0].se - r.se).abs() < 1e-12);
        assert_eq!(a[1].mean, 499.5);
    }
}
