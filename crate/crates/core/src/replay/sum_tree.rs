/// Binary sum tree over `capacity` non-negative leaves, with a parallel max
/// tree. The leaf level is padded to a power of two so that prefix-sum
/// descent visits leaves in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct SumTree {
    capacity: usize,
    leaves: usize,
    sums: Vec<f64>,
    maxes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self {
            capacity,
            leaves,
            sums: vec![0.0; 2 * leaves - 1],
            maxes: vec![0.0; 2 * leaves - 1],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total(&self) -> f64 {
        self.sums[0]
    }

    /// Largest leaf value.
    pub fn max(&self) -> f64 {
        self.maxes[0]
    }

    pub fn get(&self, index: usize) -> f64 {
        self.sums[index + self.leaves - 1]
    }

    /// Sets leaf `index` to `value` (which must be finite and non-negative)
    /// and recomputes its ancestors from their children.
    pub fn set(&mut self, index: usize, value: f64) {
        assert!(index < self.capacity, "sum tree index {index} out of range");
        debug_assert!(value >= 0.0 && value.is_finite());
        let mut node = index + self.leaves - 1;
        self.sums[node] = value;
        self.maxes[node] = value;
        while node > 0 {
            node = (node - 1) / 2;
            let (l, r) = (2 * node + 1, 2 * node + 2);
            self.sums[node] = self.sums[l] + self.sums[r];
            self.maxes[node] = self.maxes[l].max(self.maxes[r]);
        }
    }

    /// Leaf whose cumulative range contains `mass` (`0 <= mass < total`).
    /// Zero-valued subtrees are never selected while any positive leaf exists.
    pub fn find_prefix(&self, mut mass: f64) -> usize {
        let mut node = 0;
        while node < self.leaves - 1 {
            let (l, r) = (2 * node + 1, 2 * node + 2);
            if (mass < self.sums[l] && self.sums[l] > 0.0) || self.sums[r] <= 0.0 {
                node = l;
            } else {
                mass -= self.sums[l];
                node = r;
            }
        }
        (node + 1 - self.leaves).min(self.capacity.saturating_sub(1))
    }

    /// Largest deviation between an internal node and the sum of its children.
    pub fn audit(&self) -> f64 {
        (0..self.leaves - 1)
            .map(|n| (self.sums[n] - (self.sums[2 * n + 1] + self.sums[2 * n + 2])).abs())
            .fold(0.0, f64::max)
    }

    pub fn leaf_sum(&self) -> f64 {
        self.sums[self.leaves - 1..].iter().sum()
    }
}
