use serde::{Deserialize, Serialize};

use super::ScoreMode;

/// Proportional compute estimate for one scoring call.
///
/// Naive prefill of every `prefix ++ item` costs `N·(T_q + T_i)²` attention
/// and `N·(T_q + T_i)` linear units. Sharing the prefix brings that down to
/// `T_q² + N·(2·T_i·T_q + T_i²)` and `T_q + N·T_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct FlopReport {
    pub attention_units: u64,
    pub linear_units: u64,
    pub prefix_len: usize,
    pub mean_item_len: f64,
    pub n_items: usize,
}

impl FlopReport {
    /// Exact totals for items of (possibly) different lengths.
    pub fn for_lengths(mode: ScoreMode, prefix_len: usize, item_lens: &[usize]) -> Self {
        let tq = prefix_len as u64;
        let (attention_units, linear_units) = if mode.is_amortized() {
            item_lens.iter().fold((tq * tq, tq), |(a, l), &ti| {
                let ti = ti as u64;
                (a + 2 * ti * tq + ti * ti, l + ti)
            })
        } else {
            item_lens.iter().fold((0, 0), |(a, l), &ti| {
                let t = tq + ti as u64;
                (a + t * t, l + t)
            })
        };
        let n_items = item_lens.len();
        let mean_item_len = if n_items == 0 { 0.0 } else { item_lens.iter().sum::<usize>() as f64 / n_items as f64 };
        Self { attention_units, linear_units, prefix_len, mean_item_len, n_items }
    }

    pub fn total_units(&self) -> u64 {
        self.attention_units + self.linear_units
    }

    /// Adds another report's units; the length statistics are re-weighted by item count.
    pub fn accumulate(&mut self, other: &FlopReport) {
        let n = self.n_items + other.n_items;
        if n > 0 {
            self.mean_item_len =
                (self.mean_item_len * self.n_items as f64 + other.mean_item_len * other.n_items as f64) / n as f64;
        }
        self.attention_units += other.attention_units;
        self.linear_units += other.linear_units;
        self.prefix_len = self.prefix_len.max(other.prefix_len);
        self.n_items = n;
    }
}

/// Closed-form units for `n_items` uniform items.
pub fn flops(mode: ScoreMode, prefix_len: usize, item_len: usize, n_items: usize) -> FlopReport {
    FlopReport::for_lengths(mode, prefix_len, &vec![item_len; n_items])
}
