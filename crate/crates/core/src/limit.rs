//! Limits of the reinforced chain, computed on the starting matrix.
//!
//! The limit from a start state is the directed cycle reached by
//! repeatedly following each row's unique maximum-probability column
//! until a state repeats. The transition network is loopless (zero
//! diagonal), so the walk must close a cycle of length at least 2
//! within `n` steps.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{ChainModel, StateId, TieError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CycleError {
    #[error("a cycle needs at least 2 states")]
    TooShort,
    #[error("cycle states must be distinct")]
    Repeated,
    #[error("path must consist of distinct states followed by one repeat")]
    OpenPath,
}

#[derive(Debug, Error)]
pub enum LimitError {
    #[error(transparent)]
    Tie(#[from] TieError),
    #[error("models have different state-name lists")]
    StateSetMismatch,
}

/// A directed cycle of distinct states, stored rotation-normalized so
/// that it begins at its smallest state index. Equality is therefore
/// rotation-invariant but direction-sensitive.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cycle {
    states: Vec<StateId>,
}

impl Cycle {
    pub fn new(mut states: Vec<StateId>) -> Result<Self, CycleError> {
        if states.len() < 2 {
            return Err(CycleError::TooShort);
        }
        let mut sorted: Vec<StateId> = states.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(CycleError::Repeated);
        }
        let min_at = states
            .iter()
            .enumerate()
            .min_by_key(|(_, s)| **s)
            .map(|(i, _)| i)
            .expect("cycle is non-empty");
        states.rotate_left(min_at);
        Ok(Cycle { states })
    }

    pub fn states(&self) -> &[StateId] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, s: StateId) -> bool {
        self.states.contains(&s)
    }

    /// Consecutive `(from, to)` pairs around the cycle, including the
    /// closing edge back to the first state.
    pub fn successor_pairs(&self) -> impl Iterator<Item = (StateId, StateId)> + '_ {
        let len = self.states.len();
        (0..len).map(move |i| (self.states[i], self.states[(i + 1) % len]))
    }

    pub fn names<'m>(&self, model: &'m ChainModel) -> Vec<&'m str> {
        self.states.iter().map(|&s| model.state_name(s)).collect()
    }
}

/// The trace of a maximum-probability walk: distinct states followed by
/// the first repeated one. `nodes[cycle_start]` equals the final node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreedyPath {
    nodes: Vec<StateId>,
    cycle_start: usize,
}

impl GreedyPath {
    pub fn new(nodes: Vec<StateId>) -> Result<Self, CycleError> {
        if nodes.len() < 3 {
            return Err(CycleError::TooShort);
        }
        let last = *nodes.last().expect("non-empty");
        let prefix = &nodes[..nodes.len() - 1];
        let mut sorted: Vec<StateId> = prefix.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(CycleError::OpenPath);
        }
        let cycle_start = prefix
            .iter()
            .position(|&s| s == last)
            .ok_or(CycleError::OpenPath)?;
        Ok(GreedyPath { nodes, cycle_start })
    }

    pub fn nodes(&self) -> &[StateId] {
        &self.nodes
    }

    /// Index of the first occurrence of the repeated node.
    pub fn cycle_start(&self) -> usize {
        self.cycle_start
    }

    /// The cycle portion in walk order, ending with the repeated node:
    /// for the path `5,1,2,3,4,6,2` this is `2,3,4,6,2`.
    pub fn cycle_from_entry(&self) -> &[StateId] {
        &self.nodes[self.cycle_start..]
    }
}

/// Follows each row's unique maximum from `start` until a node repeats.
/// Performs at most `n` successor lookups.
pub fn greedy_walk(model: &ChainModel, start: StateId) -> Result<GreedyPath, TieError> {
    assert!(start.index() < model.n(), "start state out of range");
    let mut nodes = vec![start];
    let mut visited = vec![false; model.n()];
    visited[start.index()] = true;
    loop {
        let next = model.row_max_successor(*nodes.last().expect("non-empty"))?;
        nodes.push(next);
        if visited[next.index()] {
            let cycle_start = nodes
                .iter()
                .position(|&s| s == next)
                .expect("repeated node was visited");
            return Ok(GreedyPath { nodes, cycle_start });
        }
        visited[next.index()] = true;
    }
}

/// The cycle closed by a greedy path, rotation-normalized.
pub fn extract_cycle(path: &GreedyPath) -> Cycle {
    let nodes = path.nodes();
    Cycle::new(nodes[path.cycle_start()..nodes.len() - 1].to_vec())
        .expect("greedy path closes a valid cycle")
}

/// The limit of the chain started at `start`: the cycle its greedy walk
/// closes. Unique per start when every row maximum is unique.
pub fn limit_of(model: &ChainModel, start: StateId) -> Result<Cycle, TieError> {
    Ok(extract_cycle(&greedy_walk(model, start)?))
}

/// The limit for every start state. Fails with a tie error if any row
/// of the model has a tied maximum, even one no walk visits.
pub fn all_limits(model: &ChainModel) -> Result<BTreeMap<StateId, Cycle>, TieError> {
    let successors: Vec<StateId> = model
        .states()
        .map(|s| model.row_max_successor(s))
        .collect::<Result<_, _>>()?;
    let mut limits = BTreeMap::new();
    for start in model.states() {
        let mut nodes = vec![start];
        let mut visited = vec![false; model.n()];
        visited[start.index()] = true;
        let cycle = loop {
            let next = successors[nodes.last().expect("non-empty").index()];
            nodes.push(next);
            if visited[next.index()] {
                let cycle_start = nodes
                    .iter()
                    .position(|&s| s == next)
                    .expect("repeated node was visited");
                break Cycle::new(nodes[cycle_start..nodes.len() - 1].to_vec())
                    .expect("greedy walk closes a valid cycle");
            }
            visited[next.index()] = true;
        };
        limits.insert(start, cycle);
    }
    Ok(limits)
}

/// Whether two models over the same ordered state-name list share the
/// limit of every start state.
pub fn same_limit(a: &ChainModel, b: &ChainModel) -> Result<bool, LimitError> {
    if a.state_names() != b.state_names() {
        return Err(LimitError::StateSetMismatch);
    }
    Ok(all_limits(a)? == all_limits(b)?)
}
