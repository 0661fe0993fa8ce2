/// Rank fractions `u_i = rank(X_i)/N`, ranks `1..=N`, ties broken by
/// ascending particle index.
pub fn rank_fractions(positions: &[f64]) -> Vec<f64> {
    let mut ranker = Ranker::new(positions.len());
    ranker.update(positions);
    let n = positions.len() as f64;
    ranker.rank_of.iter().map(|&r| (r + 1) as f64 / n).collect()
}

/// Reusable rank workspace. Keeps the previous order so the stable merge
/// sort sees nearly sorted input from one time step to the next.
#[derive(Debug, Clone)]
pub struct Ranker {
    order: Vec<u32>,
    /// Zero-based rank of particle `i`.
    rank_of: Vec<u32>,
}

impl Ranker {
    pub fn new(n: usize) -> Self {
        assert!(n <= u32::MAX as usize, "particle count exceeds u32 range");
        Self {
            order: (0..n as u32).collect(),
            rank_of: vec![0; n],
        }
    }

    /// Recomputes ranks for `positions`. The key `(x, index)` is a total
    /// order, so the result does not depend on the previous order.
    pub fn update(&mut self, positions: &[f64]) {
        debug_assert_eq!(positions.len(), self.order.len());
        self.order.sort_by(|&a, &b| {
            positions[a as usize]
                .total_cmp(&positions[b as usize])
                .then(a.cmp(&b))
        });
        for (r, &i) in self.order.iter().enumerate() {
            self.rank_of[i as usize] = r as u32;
        }
    }

    pub fn rank_of(&self) -> &[u32] {
        &self.rank_of
    }

    /// Particle indices in ascending position order.
    pub fn order(&self) -> &[u32] {
        &self.order
    }
}
