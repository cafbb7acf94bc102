//! Fenwick (binary indexed) tree over nonnegative weights with prefix-sum
//! descent, the O(log n) half of weighted particle selection.

#[derive(Clone, Debug)]
pub struct FenwickTree {
    /// 1-based partial sums; index 0 unused.
    tree: Vec<f64>,
    /// Current leaf values, kept for O(1) old-value lookup on update.
    leaves: Vec<f64>,
    /// Largest power of two <= n, the descent start.
    top_bit: usize,
}

impl FenwickTree {
    pub fn new(values: &[f64]) -> Self {
        let n = values.len();
        let mut tree = vec![0.0; n + 1];
        for (i, &v) in values.iter().enumerate() {
            let mut idx = i + 1;
            // build by cascading, O(n log n); fine at rebuild frequency
            while idx <= n {
                tree[idx] += v;
                idx += idx & idx.wrapping_neg();
            }
        }
        let mut top_bit = 1usize;
        while top_bit * 2 <= n {
            top_bit *= 2;
        }
        Self {
            tree,
            leaves: values.to_vec(),
            top_bit,
        }
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn leaf(&self, i: usize) -> f64 {
        self.leaves[i]
    }

    /// Replace leaf `i` with `value`.
    pub fn set(&mut self, i: usize, value: f64) {
        let delta = value - self.leaves[i];
        self.leaves[i] = value;
        let n = self.leaves.len();
        let mut idx = i + 1;
        while idx <= n {
            self.tree[idx] += delta;
            idx += idx & idx.wrapping_neg();
        }
    }

    /// Smallest 0-based index whose cumulative weight exceeds `target`,
    /// clamped into the index range for targets at or beyond the total.
    pub fn select(&self, target: f64) -> usize {
        let n = self.leaves.len();
        let mut idx = 0usize; // 1-based position of the last prefix <= target
        let mut rem = target;
        let mut bit = self.top_bit;
        while bit > 0 {
            let next = idx + bit;
            if next <= n && self.tree[next] <= rem {
                rem -= self.tree[next];
                idx = next;
            }
            bit >>= 1;
        }
        if idx >= n {
            // target sat at/above the running total (rounding); take the
            // last positive-weight leaf.
            idx = n - 1;
            while idx > 0 && self.leaves[idx] <= 0.0 {
                idx -= 1;
            }
            return idx;
        }
        idx
    }
}
