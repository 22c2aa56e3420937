use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::types::{Action, Observation};
use crate::error::{Error, Result};

/// One stored control step: the reward that arrived with `observation`,
/// and the action taken in response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub reward: f64,
    pub observation: Observation,
    pub action: Action,
}

/// FIFO ring buffer of transitions that remembers episode boundaries so
/// sampled slices never straddle two episodes or the eviction point.
#[derive(Debug, Clone)]
pub struct HistoryMemory {
    capacity: usize,
    entries: Vec<Transition>,
    /// Global index of the first entry of every episode still (partly) held.
    episode_starts: VecDeque<u64>,
    /// Entries ever appended.
    total: u64,
    pending_episode: bool,
}

/// Where the memory stands, enough to resume appending after a restart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryCursor {
    pub total: u64,
    pub episodes: u64,
}

impl HistoryMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "memory capacity must be positive");
        Self {
            capacity,
            entries: Vec::with_capacity(capacity.min(1 << 16)),
            episode_starts: VecDeque::new(),
            total: 0,
            pending_episode: true,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    fn oldest(&self) -> u64 {
        self.total - self.entries.len() as u64
    }

    /// The next push opens a new episode.
    pub fn begin_episode(&mut self) {
        self.pending_episode = true;
    }

    pub fn push(&mut self, t: Transition) {
        if self.pending_episode {
            self.episode_starts.push_back(self.total);
            self.pending_episode = false;
        }
        if self.entries.len() < self.capacity {
            self.entries.push(t);
        } else {
            let slot = (self.total % self.capacity as u64) as usize;
            self.entries[slot] = t;
        }
        self.total += 1;
        let oldest = self.oldest();
        while self.episode_starts.len() > 1 && self.episode_starts[1] <= oldest {
            self.episode_starts.pop_front();
        }
    }

    /// Entry by global index, if still held.
    pub fn get(&self, global: u64) -> Option<&Transition> {
        if global < self.oldest() || global >= self.total {
            return None;
        }
        Some(&self.entries[(global % self.capacity as u64) as usize])
    }

    /// Ranges `[lo, hi)` of valid slice end indices, one per episode.
    fn end_ranges(&self, window: usize) -> impl Iterator<Item = (u64, u64)> + '_ {
        let oldest = self.oldest();
        let span = window as u64 + 1;
        (0..self.episode_starts.len()).filter_map(move |e| {
            let start = self.episode_starts[e].max(oldest);
            let end = self.episode_starts.get(e + 1).copied().unwrap_or(self.total);
            let lo = start + span;
            (end > lo).then_some((lo, end))
        })
    }

    /// Number of distinct slices of length `window + 2`.
    pub fn valid_end_count(&self, window: usize) -> u64 {
        self.end_ranges(window).map(|(lo, hi)| hi - lo).sum()
    }

    pub fn is_ready(&self, window: usize) -> bool {
        self.valid_end_count(window) > 0
    }

    /// Global end index for the `k`-th valid slice.
    fn end_index(&self, window: usize, mut k: u64) -> u64 {
        for (lo, hi) in self.end_ranges(window) {
            if k < hi - lo {
                return lo + k;
            }
            k -= hi - lo;
        }
        unreachable!("slice index out of range")
    }

    /// Contiguous slice of `window + 2` transitions ending at `end`.
    pub fn slice_ending_at(&self, end: u64, window: usize) -> Result<Vec<Transition>> {
        let first = end
            .checked_sub(window as u64 + 1)
            .ok_or_else(|| Error::Domain(format!("slice end {end} precedes window")))?;
        (first..=end)
            .map(|g| {
                self.get(g)
                    .copied()
                    .ok_or_else(|| Error::Domain(format!("index {g} not held in memory")))
            })
            .collect()
    }

    /// `n` slices with uniformly drawn end indices, or `None` while no valid
    /// slice exists.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize, window: usize) -> Option<Vec<Vec<Transition>>> {
        self.sample_ends(rng, n, window).map(|ends| {
            ends.into_iter()
                .map(|e| self.slice_ending_at(e, window).expect("valid end"))
                .collect()
        })
    }

    pub fn sample_ends<R: Rng + ?Sized>(&self, rng: &mut R, n: usize, window: usize) -> Option<Vec<u64>> {
        let count = self.valid_end_count(window);
        if count == 0 {
            return None;
        }
        Some((0..n).map(|_| self.end_index(window, rng.random_range(0..count))).collect())
    }

    pub fn cursor(&self) -> MemoryCursor {
        MemoryCursor {
            total: self.total,
            episodes: self.episode_starts.len() as u64,
        }
    }
}

/// Free-function form of [`HistoryMemory::sample`].
pub fn sample_minibatch<R: Rng + ?Sized>(
    memory: &HistoryMemory,
    rng: &mut R,
    n: usize,
    window: usize,
) -> Option<Vec<Vec<Transition>>> {
    memory.sample(rng, n, window)
}

/// The last `L` (previous action, observation) pairs seen by the controller.
#[derive(Debug, Clone, PartialEq)]
pub struct RecentHistoryBuffer {
    window: usize,
    pairs: VecDeque<(Action, Observation)>,
}

impl RecentHistoryBuffer {
    pub fn new(window: usize) -> Self {
        Self {
            window,
            pairs: VecDeque::with_capacity(window),
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn is_warm(&self) -> bool {
        self.pairs.len() == self.window
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Fills the whole window with one pair, used at episode start.
    pub fn prime(&mut self, action: Action, observation: Observation) {
        self.pairs.clear();
        self.pairs.extend(std::iter::repeat_n((action, observation), self.window));
    }

    pub fn push(&mut self, previous_action: Action, observation: Observation) {
        if self.pairs.len() == self.window {
            self.pairs.pop_front();
        }
        self.pairs.push_back((previous_action, observation));
    }

    /// Oldest first.
    pub fn pairs(&self) -> impl ExactSizeIterator<Item = &(Action, Observation)> {
        self.pairs.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(i: u64) -> Transition {
        Transition {
            reward: i as f64,
            observation: Observation {
                omega: 1.0,
                diameter: i as f64,
                fed_length_sum: 0.0,
                refs: [0.0; 6],
            },
            action: Action::new(i as f64, -(i as f64)),
        }
    }

    #[test]
    fn not_ready_below_slice_length() {
        let mut m = HistoryMemory::new(100);
        let l = 5;
        for i in 0..(l as u64 + 1) {
            m.push(tr(i));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(m.sample(&mut rng, 4, l).is_none());
        m.push(tr(99));
        let s = m.sample(&mut rng, 4, l).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.iter().all(|x| x == &s[0] && x.len() == l + 2));
    }

    #[test]
    fn slices_respect_episodes_and_eviction() {
        let mut m = HistoryMemory::new(30);
        let l = 3;
        let mut g = 0;
        for ep in 0..6 {
            m.begin_episode();
            for _ in 0..(4 + ep) {
                m.push(tr(g));
                g += 1;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ends = m.sample_ends(&mut rng, 2000, l).unwrap();
        // episodes: [0,4) [4,9) [9,15) [15,22) [22,30) [30,39); memory holds [9,39)
        let starts = [0u64, 4, 9, 15, 22, 30, 39];
        for e in ends {
            let first = e - (l as u64 + 1);
            assert!(first >= 9);
            let ep = starts.windows(2).position(|w| w[0] <= e && e < w[1]).unwrap();
            assert!(first >= starts[ep], "slice {first}..={e} crosses episode start {}", starts[ep]);
        }
        assert_eq!(m.valid_end_count(l), 2 + 3 + 4 + 5);
    }

    #[test]
    fn slices_are_bit_exact() {
        let mut m = HistoryMemory::new(17);
        for i in 0..40 {
            m.push(tr(i));
        }
        let s = m.slice_ending_at(35, 4).unwrap();
        let expect: Vec<Transition> = (30..=35).map(tr).collect();
        assert_eq!(s, expect);
        assert!(m.slice_ending_at(26, 4).is_err());
    }

    #[test]
    fn recent_buffer_is_fifo() {
        let mut b = RecentHistoryBuffer::new(3);
        assert!(!b.is_warm());
        let o = tr(0).observation;
        b.prime(Action::new(50.0, 50.0), o);
        assert!(b.is_warm());
        b.push(Action::new(1.0, 1.0), o);
        let firsts: Vec<f64> = b.pairs().map(|(a, _)| a.spool_input).collect();
        assert_eq!(firsts, vec![50.0, 50.0, 1.0]);
    }
}
