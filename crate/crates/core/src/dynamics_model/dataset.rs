use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::estimation::Episode;
use crate::{Error, Result};

/// Real transitions `(s, a, s')` gathered for model fitting, stored flat.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitionDataset {
    state_dim: usize,
    action_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    next_states: Vec<f64>,
}

impl TransitionDataset {
    pub fn new(state_dim: usize, action_dim: usize) -> Self {
        TransitionDataset {
            state_dim,
            action_dim,
            ..Default::default()
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.state_dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn push(&mut self, state: &[f64], action: &[f64], next: &[f64]) -> Result<()> {
        if state.len() != self.state_dim || next.len() != self.state_dim || action.len() != self.action_dim {
            return Err(Error::Shape {
                context: "dataset transition",
                expected: 2 * self.state_dim + self.action_dim,
                actual: state.len() + action.len() + next.len(),
            });
        }
        self.states.extend_from_slice(state);
        self.actions.extend_from_slice(action);
        self.next_states.extend_from_slice(next);
        Ok(())
    }

    pub fn extend_from_episodes(&mut self, episodes: &[Episode]) -> Result<()> {
        for ep in episodes {
            for t in &ep.transitions {
                self.push(&t.state, &t.action, &t.next_state)?;
            }
        }
        Ok(())
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.action_dim..(i + 1) * self.action_dim]
    }

    pub fn next_state(&self, i: usize) -> &[f64] {
        &self.next_states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    /// Rows `[s, a]` for the given indices.
    pub fn inputs(&self, idx: &[usize]) -> Array2<f64> {
        let w = self.state_dim + self.action_dim;
        Array2::from_shape_fn((idx.len(), w), |(r, c)| {
            let i = idx[r];
            if c < self.state_dim {
                self.states[i * self.state_dim + c]
            } else {
                self.actions[i * self.action_dim + c - self.state_dim]
            }
        })
    }

    /// Rows `s' - s` for the given indices.
    pub fn deltas(&self, idx: &[usize]) -> Array2<f64> {
        let d = self.state_dim;
        Array2::from_shape_fn((idx.len(), d), |(r, c)| {
            let i = idx[r];
            self.next_states[i * d + c] - self.states[i * d + c]
        })
    }
}
