//! Finite MDPs with nonnegative rewards and exact dynamic programming.

mod eval;
mod four_room;
mod random;
mod value_iteration;

pub use eval::{evaluate_policy, PolicyEval, PolicyTable};
pub use four_room::{build_four_room, four_room, FourRoom, GridAction, FOUR_ROOM_GAMMA};
pub use random::{build_random_mdp, RANDOM_MDP_GAMMA};
pub use value_iteration::{greedy_actions, value_iteration, OptimalSolution};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance on row sums of transition rows and of the start distribution.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// A finite discounted MDP.
///
/// Transitions are stored densely as `P[s][a][s']`, rewards as `r[s][a]`.
/// Termination is modelled by absorbing states that loop on themselves with
/// zero reward, so every infinite-horizon formula applies unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument", into = "MdpDocument")]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    start: Vec<f64>,
    terminal: Vec<bool>,
    transition: Vec<f64>,
    reward: Vec<f64>,
}

/// On-disk JSON layout.
#[derive(Serialize, Deserialize)]
struct MdpDocument {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    d0: Vec<f64>,
    terminal: Vec<bool>,
    #[serde(rename = "P")]
    transition: Vec<Vec<Vec<f64>>>,
    r: Vec<Vec<f64>>,
}

impl TryFrom<MdpDocument> for TabularMdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        if doc.transition.len() != doc.n_states || doc.r.len() != doc.n_states {
            return Err(Error::InvalidMdp(format!(
                "expected {} rows in P and r, found {} and {}",
                doc.n_states,
                doc.transition.len(),
                doc.r.len()
            )));
        }
        let mut transition = Vec::with_capacity(doc.n_states * doc.n_actions * doc.n_states);
        for (s, rows) in doc.transition.iter().enumerate() {
            if rows.len() != doc.n_actions {
                return Err(Error::InvalidMdp(format!(
                    "P[{s}] has {} actions, expected {}",
                    rows.len(),
                    doc.n_actions
                )));
            }
            for (a, row) in rows.iter().enumerate() {
                if row.len() != doc.n_states {
                    return Err(Error::InvalidMdp(format!(
                        "P[{s}][{a}] has length {}, expected {}",
                        row.len(),
                        doc.n_states
                    )));
                }
                transition.extend_from_slice(row);
            }
        }
        let mut reward = Vec::with_capacity(doc.n_states * doc.n_actions);
        for (s, row) in doc.r.iter().enumerate() {
            if row.len() != doc.n_actions {
                return Err(Error::InvalidMdp(format!(
                    "r[{s}] has length {}, expected {}",
                    row.len(),
                    doc.n_actions
                )));
            }
            reward.extend_from_slice(row);
        }
        TabularMdp::from_flat(
            doc.n_states,
            doc.n_actions,
            doc.gamma,
            doc.d0,
            doc.terminal,
            transition,
            reward,
        )
    }
}

impl From<TabularMdp> for MdpDocument {
    fn from(mdp: TabularMdp) -> Self {
        let (ns, na) = (mdp.n_states, mdp.n_actions);
        let transition = (0..ns)
            .map(|s| (0..na).map(|a| mdp.transition(s, a).to_vec()).collect())
            .collect();
        let r = (0..ns)
            .map(|s| mdp.reward[s * na..(s + 1) * na].to_vec())
            .collect();
        MdpDocument {
            n_states: ns,
            n_actions: na,
            gamma: mdp.gamma,
            d0: mdp.start,
            terminal: mdp.terminal,
            transition,
            r,
        }
    }
}

impl TabularMdp {
    /// Builds an MDP from flat row-major buffers, validating every invariant.
    pub fn from_flat(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        start: Vec<f64>,
        terminal: Vec<bool>,
        transition: Vec<f64>,
        reward: Vec<f64>,
    ) -> Result<Self> {
        let mdp = TabularMdp {
            n_states,
            n_actions,
            gamma,
            start,
            terminal,
            transition,
            reward,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    fn validate(&self) -> Result<()> {
        let (ns, na) = (self.n_states, self.n_actions);
        let bad = |msg: String| Err(Error::InvalidMdp(msg));
        if ns == 0 || na == 0 {
            return bad("need at least one state and one action".into());
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("discount {} outside [0, 1)", self.gamma));
        }
        if self.start.len() != ns || self.terminal.len() != ns {
            return bad("d0 and terminal must have one entry per state".into());
        }
        if self.transition.len() != ns * na * ns || self.reward.len() != ns * na {
            return bad("transition or reward buffer has the wrong size".into());
        }
        if self.start.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return bad("d0 has a negative or non-finite entry".into());
        }
        let total: f64 = self.start.iter().sum();
        if (total - 1.0).abs() > STOCHASTIC_TOL {
            return bad(format!("d0 sums to {total}"));
        }
        for s in 0..ns {
            for a in 0..na {
                let row = self.transition(s, a);
                if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return bad(format!("P[{s}][{a}] has a negative or non-finite entry"));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return bad(format!("P[{s}][{a}] sums to {sum}"));
                }
                let r = self.reward(s, a);
                if !r.is_finite() || r < 0.0 {
                    return bad(format!("r[{s}][{a}] = {r} is not a nonnegative number"));
                }
                if self.terminal[s] && (row[s] != 1.0 || r != 0.0) {
                    return bad(format!(
                        "terminal state {s} must self-loop with probability 1 and reward 0"
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Start distribution `d0`.
    pub fn start(&self) -> &[f64] {
        &self.start
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminal_mask(&self) -> &[bool] {
        &self.terminal
    }

    /// Next-state distribution `P[s][a][.]`.
    pub fn transition(&self, s: usize, a: usize) -> &[f64] {
        let ns = self.n_states;
        let base = (s * self.n_actions + a) * ns;
        &self.transition[base..base + ns]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    /// Largest reward, `R_max`.
    pub fn max_reward(&self) -> f64 {
        self.reward.iter().copied().fold(0.0, f64::max)
    }

    /// Same dynamics with another discount.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let mut out = self.clone();
        out.gamma = gamma;
        out.validate()?;
        Ok(out)
    }

    /// Adds `shift` to the reward of every non-terminal state-action pair.
    ///
    /// Shifting makes returns of different lengths incomparable in the
    /// absorbing formulation and is equivalent to an extra KL term on the
    /// REINFORCE objective, so it changes the optimization problem; it exists
    /// to move slightly negative reward tables into the nonnegative range.
    pub fn with_shifted_rewards(&self, shift: f64) -> Result<Self> {
        let mut out = self.clone();
        for s in 0..self.n_states {
            if self.terminal[s] {
                continue;
            }
            for a in 0..self.n_actions {
                out.reward[s * self.n_actions + a] += shift;
            }
        }
        out.validate()?;
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
