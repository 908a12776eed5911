use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::state::{Action, RlState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    #[serde(with = "serde_arrays")]
    pub state: RlState,
    pub action: Action,
    pub reward: f64,
    #[serde(with = "serde_arrays")]
    pub next_state: RlState,
    pub done: bool,
}

mod serde_arrays {
    use super::RlState;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(a: &RlState, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(a.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RlState, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        v.try_into()
            .map_err(|v: Vec<f64>| serde::de::Error::invalid_length(v.len(), &"33 state entries"))
    }
}

/// Fixed-capacity FIFO replay memory.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity: capacity.max(1),
            items: VecDeque::with_capacity(capacity.max(1)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn extend(&mut self, ts: impl IntoIterator<Item = Transition>) {
        for t in ts {
            self.push(t);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<Transition>> {
        if self.items.is_empty() {
            return Err(Error::Precondition("replay buffer is empty".into()));
        }
        if self.items.len() < batch {
            return Err(Error::Precondition(format!(
                "replay buffer holds {} transitions, batch needs {batch}",
                self.items.len()
            )));
        }
        Ok((0..batch)
            .map(|_| self.items[rng.random_range(0..self.items.len())])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;

    fn t(r: f64) -> Transition {
        Transition {
            state: [0.0; 33],
            action: [0.0; 6],
            reward: r,
            next_state: [0.0; 33],
            done: false,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(t(i as f64));
        }
        assert_eq!(b.len(), 3);
        let r: Vec<f64> = b.iter().map(|x| x.reward).collect();
        assert_eq!(r, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn sampling_preconditions() {
        let mut b = ReplayBuffer::new(10);
        let mut rng = seeding::rng(0);
        assert!(b.sample(1, &mut rng).is_err());
        b.push(t(1.0));
        assert!(b.sample(2, &mut rng).is_err());
        assert_eq!(b.sample(1, &mut rng).unwrap()[0].reward, 1.0);
    }

    #[test]
    fn transition_json_round_trip() {
        let mut x = t(2.5);
        x.state[32] = 1.25;
        let s = serde_json::to_string(&x).unwrap();
        assert_eq!(serde_json::from_str::<Transition>(&s).unwrap(), x);
    }
}
