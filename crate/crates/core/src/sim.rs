//! Seeded discrete-event simulation with trajectory reinforcement.
//!
//! Each event draws a uniform number, points into the current state's
//! row to pick the next state, multiplies the traversed cell by
//! `1 + epsilon`, and renormalizes the row. The renormalization uses
//! the closed form (divide the row by `1 + epsilon * p`), which equals
//! dividing by the literal row sum because rows always sum to 1; the
//! equivalence is covered by the tests.
//!
//! Randomness comes from a ChaCha12 stream cipher seeded by expanding
//! the 64-bit seed (SplitMix64). Uniform draws map the top 53 bits of
//! each output word onto `[0, 1)`, so `r = 0` is possible and is read
//! as pointing to the first positive column. Equal seeds reproduce
//! bit-identical runs; distinct seeds give independent streams.

use std::collections::VecDeque;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::limit::Cycle;
use crate::model::{ChainModel, StateId};

/// Returns the smallest column whose cumulative probability reaches
/// `r`. Zero cells never match: the cumulative sum does not move across
/// them, and for `r = 0` the first positive column is returned. The
/// diagonal is zero in every model row, so a state never points to
/// itself.
pub fn point_to(row: &[f64], r: f64) -> usize {
    debug_assert!((0.0..=1.0).contains(&r), "r must lie in [0, 1], got {r}");
    debug_assert!(
        (row.iter().sum::<f64>() - 1.0).abs() <= 1e-12,
        "row must sum to 1"
    );
    let mut cum = 0.0;
    let mut last_positive = None;
    for (j, &p) in row.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last_positive = Some(j);
            if cum >= r {
                return j;
            }
        }
    }
    // The row sums to 1 but rounding can leave the cumulative total a
    // few ulps short of r = 1; the last positive column is the match.
    last_positive.expect("row must contain a positive entry")
}

/// One reinforcement: cell `target` is multiplied by `1 + epsilon` and
/// the row renormalized, so `row[target]` becomes
/// `(1+eps)*p / (1+eps*p)` and every other cell is divided by
/// `1 + eps*p`. Zero cells stay exactly zero.
///
/// # Panics
///
/// Panics if `row[target]` is zero: pointing can never select a zero
/// cell, so reinforcing one is a caller bug.
pub fn reinforce(row: &[f64], target: usize, epsilon: f64) -> Vec<f64> {
    let mut out = row.to_vec();
    reinforce_in_place(&mut out, target, epsilon);
    out
}

pub(crate) fn reinforce_in_place(row: &mut [f64], target: usize, epsilon: f64) {
    let p = row[target];
    assert!(
        p > 0.0,
        "reinforce target must hold positive probability, got {p}"
    );
    let norm = 1.0 + epsilon * p;
    for q in row.iter_mut() {
        *q /= norm;
    }
    row[target] = (1.0 + epsilon) * p / norm;
}

/// Final probabilities of two cells of one row after each is reinforced
/// once, in either order:
/// `p̂_k = (1+eps) * p_k / (1 + eps*p1 + eps*p2)`.
pub fn two_step_closed_form(p1: f64, p2: f64, epsilon: f64) -> (f64, f64) {
    let denom = 1.0 + epsilon * p1 + epsilon * p2;
    ((1.0 + epsilon) * p1 / denom, (1.0 + epsilon) * p2 / denom)
}

/// Applies `x -> (1+eps)*x / (1+eps*x)` the given number of times.
/// 0 and 1 are fixed points; every other start in `[0, 1]` climbs
/// monotonically toward 1.
pub fn fixed_point_iterate(x0: f64, epsilon: f64, iterations: u32) -> f64 {
    let mut x = x0;
    for _ in 0..iterations {
        x = (1.0 + epsilon) * x / (1.0 + epsilon * x);
    }
    x
}

pub(crate) fn next_uniform(rng: &mut ChaCha12Rng) -> f64 {
    // top 53 bits onto [0, 1)
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ConfigError {
    #[error("epsilon must lie in (0, 1), got {0}")]
    Epsilon(f64),
    #[error("delta must lie in (0, 0.5), got {0}")]
    Delta(f64),
    #[error("max_events must be at least 1")]
    MaxEvents,
}

/// Parameters of one simulation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    epsilon: f64,
    seed: u64,
    max_events: u64,
    delta: f64,
    start: StateId,
}

impl SimConfig {
    pub fn new(
        epsilon: f64,
        seed: u64,
        max_events: u64,
        delta: f64,
        start: StateId,
    ) -> Result<Self, ConfigError> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(ConfigError::Epsilon(epsilon));
        }
        if !(delta > 0.0 && delta < 0.5) {
            return Err(ConfigError::Delta(delta));
        }
        if max_events == 0 {
            return Err(ConfigError::MaxEvents);
        }
        Ok(SimConfig {
            epsilon,
            seed,
            max_events,
            delta,
            start,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn max_events(&self) -> u64 {
        self.max_events
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn start(&self) -> StateId {
        self.start
    }
}

/// Evolving state of a run: the reinforced matrix, the current state,
/// the event count, the generator, and a ring of the most recent
/// visited states (capacity `10 * n`, enough to recognize any cycle
/// repeated ten times).
#[derive(Debug, Clone)]
pub struct SimState {
    n: usize,
    trans: Vec<f64>,
    current: StateId,
    events: u64,
    rng: ChaCha12Rng,
    history: VecDeque<StateId>,
    history_cap: usize,
    /// Latest position of each state in the visit sequence; the start
    /// state occupies position 0 and event `i` writes position `i`.
    last_pos: Vec<Option<u64>>,
    /// Position the current state was last seen at before this visit.
    prev_pos_of_current: Option<u64>,
    state_visits: Vec<u64>,
    cell_visits: Vec<u64>,
    stamp: u64,
    stamps: Vec<u64>,
}

impl SimState {
    pub fn new(model: &ChainModel, start: StateId, seed: u64) -> Self {
        let n = model.n();
        assert!(start.index() < n, "start state out of range");
        let mut state_visits = vec![0u64; n];
        state_visits[start.index()] = 1;
        let mut last_pos = vec![None; n];
        last_pos[start.index()] = Some(0);
        let mut history = VecDeque::with_capacity(10 * n);
        history.push_back(start);
        SimState {
            n,
            trans: model.trans().to_vec(),
            current: start,
            events: 0,
            rng: ChaCha12Rng::seed_from_u64(seed),
            history,
            history_cap: 10 * n,
            last_pos,
            prev_pos_of_current: None,
            state_visits,
            cell_visits: vec![0u64; n * n],
            stamp: 0,
            stamps: vec![0u64; n],
        }
    }

    pub fn current(&self) -> StateId {
        self.current
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Row-major `n*n` entries of the evolving matrix.
    pub fn trans(&self) -> &[f64] {
        &self.trans
    }

    pub fn row(&self, s: StateId) -> &[f64] {
        &self.trans[s.index() * self.n..(s.index() + 1) * self.n]
    }

    pub fn history(&self) -> impl ExactSizeIterator<Item = StateId> + '_ {
        self.history.iter().copied()
    }

    pub fn state_visits(&self) -> &[u64] {
        &self.state_visits
    }

    pub fn cell_visits(&self) -> &[u64] {
        &self.cell_visits
    }

    /// Executes one event: draw `r`, point into the current row, pick
    /// the next state, reinforce the traversed cell. Returns the new
    /// current state.
    pub fn step(&mut self, epsilon: f64) -> StateId {
        let r = next_uniform(&mut self.rng);
        let i = self.current.index();
        let row = &self.trans[i * self.n..(i + 1) * self.n];
        let j = point_to(row, r);
        reinforce_in_place(&mut self.trans[i * self.n..(i + 1) * self.n], j, epsilon);

        self.cell_visits[i * self.n + j] += 1;
        self.state_visits[j] += 1;
        self.events += 1;
        self.current = StateId::new(j);
        if self.history.len() == self.history_cap {
            self.history.pop_front();
        }
        self.history.push_back(self.current);
        self.prev_pos_of_current = self.last_pos[j];
        self.last_pos[j] = Some(self.events);
        self.current
    }

    /// Checks whether the trajectory has settled on a cycle: some cycle
    /// `C` of length `L >= 2` such that the last `10 * L` visited
    /// states are exact repetitions of `C` and every on-cycle row holds
    /// at least `1 - delta` on its cycle successor. Returns the cycle
    /// in trajectory order.
    ///
    /// Only the gap back to the previous visit of the current state can
    /// qualify as `L`: a longer repeated cycle would contain the
    /// current state twice, contradicting distinctness.
    pub fn detect_cycle(&mut self, delta: f64) -> Option<Vec<StateId>> {
        let pos = self.events;
        let prev = self.prev_pos_of_current?;
        let gap = pos - prev;
        if gap < 2 || gap > self.n as u64 {
            return None;
        }
        let l = gap as usize;
        let window = 10 * l;
        if self.history.len() < window {
            return None;
        }
        let base = pos + 1 - self.history.len() as u64;
        let at = |p: u64| self.history[(p - base) as usize];

        // candidate cycle: the last `gap` positions
        let cycle: Vec<StateId> = ((prev + 1)..=pos).map(at).collect();
        self.stamp += 1;
        for k in 0..l {
            let a = cycle[k];
            if self.stamps[a.index()] == self.stamp {
                return None; // repeated state: not a simple cycle
            }
            self.stamps[a.index()] = self.stamp;
            let b = cycle[(k + 1) % l];
            if self.trans[a.index() * self.n + b.index()] < 1.0 - delta {
                return None;
            }
        }
        // exact periodicity across the whole window
        for p in (pos + 1 - window as u64)..=(pos - gap) {
            if at(p) != at(p + gap) {
                return None;
            }
        }
        Some(cycle)
    }
}

/// Outcome of a run. `converged` implies `realized` is present and
/// every on-cycle row held at least `1 - delta` on its cycle successor
/// when detection fired.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Row-major `n*n` entries of the final matrix.
    pub final_trans: Vec<f64>,
    /// Visits per state, counting the start state once.
    pub state_visits: Vec<u64>,
    /// Row-major `n*n` counts of traversed cells.
    pub cell_visits: Vec<u64>,
    pub converged: bool,
    pub realized: Option<Cycle>,
    pub events_used: u64,
    pub seed: u64,
}

/// Runs the simulation until the cycle detector fires or `max_events`
/// is reached. Non-convergence is a result, not an error.
pub fn run(model: &ChainModel, config: &SimConfig) -> SimResult {
    let mut state = SimState::new(model, config.start(), config.seed());
    let mut realized = None;
    while state.events() < config.max_events() {
        state.step(config.epsilon());
        if let Some(states) = state.detect_cycle(config.delta()) {
            realized = Some(Cycle::new(states).expect("detected cycle is simple"));
            break;
        }
    }
    SimResult {
        final_trans: state.trans,
        state_visits: state.state_visits,
        cell_visits: state.cell_visits,
        converged: realized.is_some(),
        realized,
        events_used: state.events,
        seed: config.seed(),
    }
}
