use std::collections::VecDeque;

use rand::Rng;

use crate::codec::{StateVector, Transition};
use crate::error::{Error, Result};

/// Up to `n` consecutive transitions of one episode, starting at `offset`.
/// Shorter than `n` only when the episode ends inside the window.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub episode_id: u64,
    pub offset: usize,
    pub steps: Vec<Transition>,
}

impl Window {
    pub fn first(&self) -> &Transition {
        &self.steps[0]
    }

    pub fn state(&self) -> &StateVector {
        &self.steps[0].state
    }

    pub fn action(&self) -> f64 {
        self.steps[0].action
    }

    /// True when the window reaches the end of the episode, so no bootstrap.
    pub fn terminal(&self) -> bool {
        self.steps.last().expect("window is non-empty").terminal
    }

    pub fn bootstrap_state(&self) -> &StateVector {
        &self.steps.last().expect("window is non-empty").next_state
    }
}

/// Ring of whole episodes.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    n_step: usize,
    episodes: VecDeque<(u64, Vec<Transition>)>,
    len: usize,
    next_id: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, n_step: usize) -> Self {
        assert!(capacity > 0 && n_step > 0);
        Self {
            capacity,
            n_step,
            episodes: VecDeque::new(),
            len: 0,
            next_id: 0,
        }
    }

    /// Stored transitions.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn episode_count(&self) -> usize {
        self.episodes.len()
    }

    /// Every transition starts exactly one window.
    pub fn eligible_windows(&self) -> usize {
        self.len
    }

    pub fn push_episode(&mut self, transitions: Vec<Transition>) -> Result<u64> {
        if transitions.is_empty() {
            return Err(Error::EmptyEpisode);
        }
        let last = transitions.len() - 1;
        if let Some(i) = transitions.iter().position(|t| t.terminal) {
            if i != last {
                return Err(Error::InvalidEpisode(format!(
                    "terminal transition at {i} before the end ({last})"
                )));
            }
        } else {
            return Err(Error::InvalidEpisode("last transition is not terminal".into()));
        }
        if transitions.len() > self.capacity {
            return Err(Error::InvalidEpisode(format!(
                "episode of {} transitions exceeds capacity {}",
                transitions.len(),
                self.capacity
            )));
        }
        let id = self.next_id;
        self.next_id += 1;
        self.len += transitions.len();
        self.episodes.push_back((id, transitions));
        while self.len > self.capacity {
            let (_, old) = self.episodes.pop_front().expect("len > 0");
            self.len -= old.len();
        }
        Ok(id)
    }

    /// Window starting at global position `index` (oldest episode first).
    pub fn window_at(&self, mut index: usize) -> Window {
        for (id, ep) in &self.episodes {
            if index < ep.len() {
                let end = (index + self.n_step).min(ep.len());
                return Window {
                    episode_id: *id,
                    offset: index,
                    steps: ep[index..end].to_vec(),
                };
            }
            index -= ep.len();
        }
        panic!("window index out of range");
    }

    /// `batch_size` windows drawn uniformly with replacement.
    pub fn sample_batch<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<Window>> {
        if batch_size > self.eligible_windows() {
            return Err(Error::InsufficientData {
                needed: batch_size,
                available: self.eligible_windows(),
            });
        }
        let mut picks: Vec<(usize, usize)> = (0..batch_size)
            .map(|slot| (rng.gen_range(0..self.len), slot))
            .collect();
        // Resolve all positions in one pass over the episodes.
        picks.sort_unstable();
        let mut out: Vec<Option<Window>> = vec![None; batch_size];
        let mut base = 0;
        let mut eps = self.episodes.iter();
        let mut current = eps.next();
        for (pos, slot) in picks {
            while let Some((_, ep)) = current {
                if pos < base + ep.len() {
                    break;
                }
                base += ep.len();
                current = eps.next();
            }
            let (id, ep) = current.expect("position within buffer");
            let offset = pos - base;
            let end = (offset + self.n_step).min(ep.len());
            out[slot] = Some(Window {
                episode_id: *id,
                offset,
                steps: ep[offset..end].to_vec(),
            });
        }
        Ok(out.into_iter().map(|w| w.expect("every slot filled")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(tag: f64) -> StateVector {
        StateVector::from_array([tag; 9])
    }

    /// Episode whose transitions carry `(episode, step)` in their fields.
    pub(crate) fn episode(tag: usize, n: usize) -> Vec<Transition> {
        (0..n)
            .map(|i| Transition {
                state: state((tag * 100 + i) as f64),
                action: tag as f64,
                r_d: i as f64,
                r_r: if i + 1 == n { -0.1 } else { 0.0 },
                next_state: state((tag * 100 + i + 1) as f64),
                terminal: i + 1 == n,
            })
            .collect()
    }

    #[test]
    fn push_grows_by_episode_length() {
        let mut b = ReplayBuffer::new(100, 3);
        b.push_episode(episode(0, 16)).unwrap();
        assert_eq!(b.len(), 16);
        b.push_episode(episode(1, 16)).unwrap();
        assert_eq!(b.len(), 32);
    }

    #[test]
    fn full_buffer_evicts_oldest_whole_episode() {
        let mut b = ReplayBuffer::new(40, 3);
        for tag in 0..3 {
            b.push_episode(episode(tag, 16)).unwrap();
        }
        assert_eq!(b.len(), 32);
        assert_eq!(b.episode_count(), 2);
        let w = b.window_at(0);
        assert_eq!(w.episode_id, 1);
        assert_eq!(w.offset, 0);
    }

    #[test]
    fn malformed_episodes_rejected() {
        let mut b = ReplayBuffer::new(40, 3);
        assert!(matches!(b.push_episode(vec![]), Err(Error::EmptyEpisode)));
        let mut ep = episode(0, 4);
        ep[3].terminal = false;
        assert!(b.push_episode(ep).is_err());
        assert!(b.push_episode(episode(0, 41)).is_err());
    }

    #[test]
    fn no_window_crosses_an_episode_boundary() {
        let mut b = ReplayBuffer::new(100, 3);
        b.push_episode(episode(0, 5)).unwrap();
        b.push_episode(episode(1, 4)).unwrap();
        for idx in 0..b.eligible_windows() {
            let w = b.window_at(idx);
            let tag = w.steps[0].action;
            assert!(w.steps.iter().all(|t| t.action == tag));
            // consecutive steps within the episode
            for pair in w.steps.windows(2) {
                assert_eq!(pair[0].next_state, pair[1].state);
            }
            let ep_len = if tag == 0.0 { 5 } else { 4 };
            assert_eq!(w.steps.len(), 3.min(ep_len - w.offset));
            assert!(w.steps[..w.steps.len() - 1].iter().all(|t| !t.terminal));
        }
    }

    #[test]
    fn sampling_contract() {
        let mut b = ReplayBuffer::new(100, 3);
        b.push_episode(episode(0, 5)).unwrap();
        assert!(matches!(
            b.sample_batch(6, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::InsufficientData { needed: 6, available: 5 })
        ));
        b.push_episode(episode(1, 7)).unwrap();
        let a = b.sample_batch(8, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let c = b.sample_batch(8, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, c);
        for w in &a {
            assert_eq!(*w, b.window_at(position_of(&b, w)));
        }
    }

    fn position_of(b: &ReplayBuffer, w: &Window) -> usize {
        (0..b.len())
            .find(|&i| {
                let x = b.window_at(i);
                x.episode_id == w.episode_id && x.offset == w.offset
            })
            .unwrap()
    }

    #[test]
    fn sampling_is_uniform_over_windows() {
        let mut b = ReplayBuffer::new(100, 3);
        b.push_episode(episode(0, 5)).unwrap();
        b.push_episode(episode(1, 3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = vec![0usize; b.len()];
        let draws = 100_000;
        let mut done = 0;
        while done < draws {
            for w in b.sample_batch(8, &mut rng).unwrap() {
                let base = if w.episode_id == 0 { 0 } else { 5 };
                counts[base + w.offset] += 1;
                done += 1;
            }
        }
        let k = counts.len() as f64;
        let expected = draws as f64 / k;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // chi-square with 7 degrees of freedom: mean 7, sd sqrt(14); 3 sigma.
        assert!(chi2 < 7.0 + 3.0 * 14f64.sqrt(), "chi2 = {chi2}");
        for &c in &counts {
            let sd = (draws as f64 * (1.0 / k) * (1.0 - 1.0 / k)).sqrt();
            assert!((c as f64 - expected).abs() < 3.0 * sd);
        }
    }
}
