use rayon::prelude::*;

use crate::error::{contract, invalid, Result};
use crate::scene::Vec3;

/// Fixed k-nearest-neighbor graph over a cloud's Gaussians.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NNIndex {
    k: usize,
    /// Row-major `N × k`.
    neighbors: Vec<u32>,
}

impl NNIndex {
    pub const DEFAULT_K: usize = 40;

    /// Brute-force neighbors by Euclidean distance, ties broken by index.
    /// `k` is reduced to `N - 1` for small clouds.
    pub fn build(positions: &[Vec3], k: usize) -> Result<Self> {
        let n = positions.len();
        if n < 2 {
            return Err(invalid("nearest-neighbor index needs at least two points"));
        }
        if k == 0 {
            return Err(invalid("k must be positive"));
        }
        let k = k.min(n - 1);
        let neighbors = positions
            .par_iter()
            .enumerate()
            .flat_map_iter(|(i, p)| {
                let mut cand: Vec<(f64, u32)> = positions
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(j, q)| ((p - q).norm_squared(), j as u32))
                    .collect();
                let cmp = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
                cand.select_nth_unstable_by(k - 1, cmp);
                cand.truncate(k);
                cand.sort_unstable_by(cmp);
                cand.into_iter().map(|(_, j)| j)
            })
            .collect();
        Ok(Self { k, neighbors })
    }

    /// Index from explicit neighbor lists (`N × k`, row-major).
    pub fn from_lists(k: usize, neighbors: Vec<u32>) -> Result<Self> {
        if k == 0 || neighbors.len() % k != 0 {
            return Err(invalid("neighbor list length must be a multiple of k"));
        }
        let n = neighbors.len() / k;
        for (row, chunk) in neighbors.chunks(k).enumerate() {
            for &j in chunk {
                if j as usize >= n || j as usize == row {
                    return Err(contract(format!("bad neighbor {j} for Gaussian {row}")));
                }
            }
        }
        Ok(Self { k, neighbors })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.neighbors.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors_of(&self, i: usize) -> &[u32] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }
}
