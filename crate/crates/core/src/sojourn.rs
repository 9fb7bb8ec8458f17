//! Mean sojourn times for a partition of the state space.
//!
//! For a subset `G` and its complement, `s(G)` is the mean time the
//! chain spends inside `G` per entry into `G`, and the sojourn time
//! cycle is `STC = s(G) + s(Gc)`. Three routes are provided:
//!
//! - stationary: from the embedded chain's stationary distribution,
//!   `s(G)` is the pi-weighted sojourn mass in `G` divided by the
//!   stationary per-transition entry rate into `G`;
//! - limit-based: sum the sojourn times around a computed limit cycle;
//! - Monte Carlo: simulate the fixed-matrix jump chain and average the
//!   sojourn accumulated per maximal run, as an independent check on
//!   the stationary route.

use std::fmt;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::limit::Cycle;
use crate::model::{ChainModel, StateId};
use crate::sim::{next_uniform, point_to};

/// Maximum acceptable `max |pi P - pi|` after the direct solve.
const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SojournError {
    #[error("chain is reducible: no path from {from} to {to}")]
    Reducible { from: String, to: String },
    #[error("stationary solve failed on an irreducible chain (internal fault)")]
    Singular,
    #[error("partition does not alternate: the stationary entry rate into the subset is zero")]
    NonAlternating,
    #[error("unknown state '{0}'")]
    UnknownState(String),
    #[error("subset must be a non-empty proper subset of the states")]
    ImproperPartition,
    #[error("cycle state index {0} does not belong to this model")]
    ForeignCycle(usize),
    #[error("need at least {min} entry epochs, got {got}")]
    TooFewEntries { min: usize, got: usize },
}

/// A non-empty proper subset `G` of a model's states; the complement is
/// implied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    mask: Vec<bool>,
    good_count: usize,
}

impl Partition {
    pub fn new(model: &ChainModel, good: &[StateId]) -> Result<Self, SojournError> {
        let n = model.n();
        let mut mask = vec![false; n];
        for &s in good {
            if s.index() >= n {
                return Err(SojournError::ForeignCycle(s.index()));
            }
            mask[s.index()] = true;
        }
        let good_count = mask.iter().filter(|&&g| g).count();
        if good_count == 0 || good_count == n {
            return Err(SojournError::ImproperPartition);
        }
        Ok(Partition { mask, good_count })
    }

    pub fn from_names<S: AsRef<str>>(
        model: &ChainModel,
        names: &[S],
    ) -> Result<Self, SojournError> {
        let ids: Vec<StateId> = names
            .iter()
            .map(|name| {
                model
                    .state_by_name(name.as_ref())
                    .ok_or_else(|| SojournError::UnknownState(name.as_ref().to_string()))
            })
            .collect::<Result<_, _>>()?;
        Partition::new(model, &ids)
    }

    pub fn contains(&self, s: StateId) -> bool {
        self.mask[s.index()]
    }

    pub fn good_count(&self) -> usize {
        self.good_count
    }

    pub fn n(&self) -> usize {
        self.mask.len()
    }
}

/// Stationary distribution of the embedded chain: the unique solution
/// of `pi P = pi`, `sum pi = 1` when the chain is irreducible.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDist {
    pi: Vec<f64>,
}

impl StationaryDist {
    pub fn probabilities(&self) -> &[f64] {
        &self.pi
    }

    /// `max |pi P - pi|` over states.
    pub fn residual(&self, model: &ChainModel) -> f64 {
        let n = model.n();
        let mut worst = 0.0f64;
        for j in 0..n {
            let mut flow = 0.0;
            for i in 0..n {
                flow += self.pi[i] * model.trans()[i * n + j];
            }
            worst = worst.max((flow - self.pi[j]).abs());
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SojournMethod {
    Stationary,
    LimitCycle,
    MonteCarlo,
}

impl fmt::Display for SojournMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SojournMethod::Stationary => write!(f, "stationary"),
            SojournMethod::LimitCycle => write!(f, "limit-cycle"),
            SojournMethod::MonteCarlo => write!(f, "monte-carlo"),
        }
    }
}

/// Method-specific diagnostics attached to a report.
#[derive(Debug, Clone, PartialEq)]
pub enum SojournDetail {
    Stationary {
        pi_residual: f64,
    },
    LimitCycle {
        cycle: Cycle,
        good_runs: usize,
        bad_runs: usize,
        /// Present when the cycle never crosses the partition boundary.
        note: Option<String>,
    },
    MonteCarlo {
        entries: usize,
        burn_in: usize,
        used_good: usize,
        used_bad: usize,
        se_good: f64,
        se_bad: f64,
    },
}

/// `s(G)`, `s(Gc)`, and their sum, with the producing method.
#[derive(Debug, Clone, PartialEq)]
pub struct SojournReport {
    pub s_good: f64,
    pub s_bad: f64,
    /// Always computed as `s_good + s_bad`.
    pub stc: f64,
    pub method: SojournMethod,
    pub detail: SojournDetail,
}

/// Checks strong connectivity of the positive-entry digraph, naming an
/// unreachable pair on failure.
fn check_irreducible(model: &ChainModel) -> Result<(), SojournError> {
    let n = model.n();
    let reach = |forward: bool| -> Vec<bool> {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for (j, visited) in seen.iter_mut().enumerate() {
                let p = if forward {
                    model.trans()[i * n + j]
                } else {
                    model.trans()[j * n + i]
                };
                if p > 0.0 && !*visited {
                    *visited = true;
                    stack.push(j);
                }
            }
        }
        seen
    };
    if let Some(v) = reach(true).iter().position(|&s| !s) {
        return Err(SojournError::Reducible {
            from: model.state_name(StateId::new(0)).to_string(),
            to: model.state_name(StateId::new(v)).to_string(),
        });
    }
    if let Some(v) = reach(false).iter().position(|&s| !s) {
        return Err(SojournError::Reducible {
            from: model.state_name(StateId::new(v)).to_string(),
            to: model.state_name(StateId::new(0)).to_string(),
        });
    }
    Ok(())
}

/// Gaussian elimination with partial pivoting on a dense row-major
/// system. Returns `None` when a pivot vanishes.
fn solve_linear(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| {
            a[r * n + col]
                .abs()
                .partial_cmp(&a[s * n + col].abs())
                .expect("entries are finite")
        })?;
        if a[pivot * n + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let factor = a[row * n + col] / a[col * n + col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    Some(x)
}

/// Solves `pi P = pi`, `sum pi = 1` directly: the last balance equation
/// is replaced by the normalization row and the system is eliminated
/// with partial pivoting. Requires irreducibility.
pub fn embedded_stationary(model: &ChainModel) -> Result<StationaryDist, SojournError> {
    check_irreducible(model)?;
    let n = model.n();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            // balance equation i: sum_j pi_j P[j][i] - pi_i = 0
            a[i * n + j] = model.trans()[j * n + i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1) * n + j] = 1.0;
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;

    let mut pi = solve_linear(a, b, n).ok_or(SojournError::Singular)?;
    for p in pi.iter_mut() {
        if *p < 0.0 {
            if *p < -1e-9 {
                return Err(SojournError::Singular);
            }
            *p = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    for p in pi.iter_mut() {
        *p /= total;
    }
    let dist = StationaryDist { pi };
    if dist.residual(model) > RESIDUAL_TOL {
        return Err(SojournError::Singular);
    }
    Ok(dist)
}

/// Stationary-based sojourn analysis: with `pi` the embedded stationary
/// distribution,
/// `s(G) = sum_{i in G} pi_i T_i / sum_{i in Gc, j in G} pi_i P[i][j]`
/// and symmetrically for the complement.
pub fn stationary_sojourn(
    model: &ChainModel,
    part: &Partition,
) -> Result<SojournReport, SojournError> {
    assert_eq!(part.n(), model.n(), "partition belongs to another model");
    let dist = embedded_stationary(model)?;
    let pi = dist.probabilities();
    let n = model.n();

    let mut mass_good = 0.0;
    let mut mass_bad = 0.0;
    let mut entry_good = 0.0;
    let mut entry_bad = 0.0;
    for (i, &pi_i) in pi.iter().enumerate() {
        let s = StateId::new(i);
        let weighted = pi_i * model.sojourn_times()[i];
        if part.contains(s) {
            mass_good += weighted;
        } else {
            mass_bad += weighted;
        }
        for j in 0..n {
            let flow = pi_i * model.trans()[i * n + j];
            match (part.contains(s), part.contains(StateId::new(j))) {
                (false, true) => entry_good += flow,
                (true, false) => entry_bad += flow,
                _ => {}
            }
        }
    }
    if entry_good <= 0.0 || entry_bad <= 0.0 {
        return Err(SojournError::NonAlternating);
    }
    let s_good = mass_good / entry_good;
    let s_bad = mass_bad / entry_bad;
    Ok(SojournReport {
        s_good,
        s_bad,
        stc: s_good + s_bad,
        method: SojournMethod::Stationary,
        detail: SojournDetail::Stationary {
            pi_residual: dist.residual(model),
        },
    })
}

/// Limit-based sojourn analysis: decomposes the cyclic state sequence
/// into maximal runs on each side of the partition. `s(G)` is the total
/// sojourn over all `G` states per traversal, and a cycle that never
/// crosses the boundary yields 0 for the missing side plus a note.
pub fn cycle_sojourn(
    model: &ChainModel,
    cycle: &Cycle,
    part: &Partition,
) -> Result<SojournReport, SojournError> {
    assert_eq!(part.n(), model.n(), "partition belongs to another model");
    for &s in cycle.states() {
        if s.index() >= model.n() {
            return Err(SojournError::ForeignCycle(s.index()));
        }
    }
    let mut s_good = 0.0;
    let mut s_bad = 0.0;
    for &s in cycle.states() {
        if part.contains(s) {
            s_good += model.sojourn_time(s);
        } else {
            s_bad += model.sojourn_time(s);
        }
    }
    // maximal runs = boundary crossings around the circle
    let mut good_runs = 0usize;
    let mut bad_runs = 0usize;
    for (a, b) in cycle.successor_pairs() {
        match (part.contains(a), part.contains(b)) {
            (false, true) => good_runs += 1,
            (true, false) => bad_runs += 1,
            _ => {}
        }
    }
    let note = if good_runs == 0 {
        let side = if part.contains(cycle.states()[0]) {
            good_runs = 1;
            "the chosen subset; its complement contributes no sojourn"
        } else {
            bad_runs = 1;
            "the complement; the chosen subset contributes no sojourn"
        };
        Some(format!(
            "degenerate partition: the cycle stays inside {side}"
        ))
    } else {
        None
    };
    Ok(SojournReport {
        s_good,
        s_bad,
        stc: s_good + s_bad,
        method: SojournMethod::LimitCycle,
        detail: SojournDetail::LimitCycle {
            cycle: cycle.clone(),
            good_runs,
            bad_runs,
            note,
        },
    })
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let count = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / count;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (count - 1.0);
    (mean, (var / count).sqrt())
}

/// Monte Carlo oracle for the stationary route: simulates the
/// fixed-matrix jump chain, waits for a clean entry into `G`, collects
/// `entries` maximal-run sojourn samples on each side, discards the
/// first 10% as burn-in, and reports means with standard errors.
pub fn monte_carlo_sojourn(
    model: &ChainModel,
    part: &Partition,
    seed: u64,
    entries: usize,
) -> Result<SojournReport, SojournError> {
    assert_eq!(part.n(), model.n(), "partition belongs to another model");
    if entries < 100 {
        return Err(SojournError::TooFewEntries {
            min: 100,
            got: entries,
        });
    }
    check_irreducible(model)?;
    let n = model.n();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut jump = |from: usize| -> usize {
        point_to(
            &model.trans()[from * n..(from + 1) * n],
            next_uniform(&mut rng),
        )
    };

    // advance to a clean complement-to-subset crossing
    let mut current = 0usize;
    loop {
        let next = jump(current);
        let crossing = !part.contains(StateId::new(current)) && part.contains(StateId::new(next));
        current = next;
        if crossing {
            break;
        }
    }

    let mut good_samples = Vec::with_capacity(entries);
    let mut bad_samples = Vec::with_capacity(entries);
    let mut inside = true;
    let mut acc = model.sojourn_times()[current];
    while good_samples.len() < entries {
        let next = jump(current);
        let next_inside = part.contains(StateId::new(next));
        if next_inside == inside {
            acc += model.sojourn_times()[next];
        } else {
            if inside {
                good_samples.push(acc);
            } else {
                bad_samples.push(acc);
            }
            inside = next_inside;
            acc = model.sojourn_times()[next];
        }
        current = next;
    }

    // entries >= 100 guarantees burn < entries - 1 = bad_samples.len()
    let burn = entries / 10;
    let good = &good_samples[burn..];
    let bad = &bad_samples[burn..];
    let (s_good, se_good) = mean_and_se(good);
    let (s_bad, se_bad) = mean_and_se(bad);
    Ok(SojournReport {
        s_good,
        s_bad,
        stc: s_good + s_bad,
        method: SojournMethod::MonteCarlo,
        detail: SojournDetail::MonteCarlo {
            entries,
            burn_in: burn,
            used_good: good.len(),
            used_bad: bad.len(),
            se_good,
            se_bad,
        },
    })
}
