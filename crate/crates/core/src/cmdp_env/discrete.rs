use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{CmdpEnv, CmdpSpec};
use crate::{rng::Rng, Error, Result};

/// Stochastic stationary policy as `probs[s][a]`.
pub type DiscretePolicy = Vec<Vec<f64>>;

/// Small tabular CMDP with a fixed initial state.
///
/// As a [`CmdpEnv`] the state is one-hot encoded, and the single continuous
/// action in `[-1, 1]` is split into `n_actions` equal-width bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteCmdp {
    n_states: usize,
    n_actions: usize,
    /// `P(s'|s,a)` at index `(s * n_actions + a) * n_states + s'`.
    transitions: Vec<f64>,
    /// `R(s,a,s')`, same layout as `transitions`.
    rewards: Vec<f64>,
    /// `C(s,a,s')`, same layout as `transitions`.
    costs: Vec<f64>,
    gamma: f64,
    initial_state: usize,
    terminal: Vec<bool>,
    #[serde(skip)]
    spec: Option<CmdpSpec>,
}

/// Exact discounted returns of a policy from the initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyValue {
    pub reward: f64,
    pub cost: f64,
}

/// Result of [`DiscreteCmdp::oracle_solve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    /// Best feasible discounted reward return over stationary policies.
    pub reward_return: f64,
    /// Cost return of the witness policy.
    pub cost_return: f64,
    pub policy: DiscretePolicy,
    /// Best feasible deterministic policy (action per state) and its value.
    pub deterministic_actions: Vec<usize>,
    pub deterministic_value: PolicyValue,
    /// Whether randomisation from the occupancy-measure LP beat every
    /// deterministic policy.
    pub randomized: bool,
}

const MAX_ENUMERATION: usize = 1_000_000;

impl DiscreteCmdp {
    /// `transitions`, `rewards` and `costs` are indexed `[s][a][s']`.
    pub fn new(
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<Vec<f64>>>,
        costs: Vec<Vec<Vec<f64>>>,
        gamma: f64,
        initial_state: usize,
        terminal: Vec<bool>,
        horizon: usize,
    ) -> Result<Self> {
        let n_states = transitions.len();
        let n_actions = transitions.first().map_or(0, Vec::len);
        if n_states == 0 || n_actions == 0 || n_states > 20 || n_actions > 4 {
            return Err(Error::InvalidInput(format!(
                "discrete CMDP needs 1..=20 states and 1..=4 actions, got {n_states}x{n_actions}"
            )));
        }
        if initial_state >= n_states || terminal.len() != n_states {
            return Err(Error::InvalidInput("bad initial state or terminal mask".into()));
        }
        let flat = |t: &Vec<Vec<Vec<f64>>>, what: &str| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(n_states * n_actions * n_states);
            if t.len() != n_states {
                return Err(Error::InvalidInput(format!("{what}: wrong state count")));
            }
            for per_s in t {
                if per_s.len() != n_actions || per_s.iter().any(|row| row.len() != n_states) {
                    return Err(Error::InvalidInput(format!("{what}: ragged table")));
                }
                per_s.iter().for_each(|row| out.extend_from_slice(row));
            }
            Ok(out)
        };
        let transitions = flat(&transitions, "transitions")?;
        let rewards = flat(&rewards, "rewards")?;
        let costs = flat(&costs, "costs")?;
        for row in transitions.chunks(n_states) {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 || row.iter().any(|&p| p < 0.0) {
                return Err(Error::InvalidInput(format!(
                    "transition row is not a distribution (sums to {sum})"
                )));
            }
        }
        if costs.iter().any(|&c| c < 0.0) {
            return Err(Error::InvalidInput("costs must be non-negative".into()));
        }
        let spec = CmdpSpec {
            state_dim: n_states,
            obs_dim: n_states,
            action_dim: 1,
            action_low: -1.0,
            action_high: 1.0,
            horizon,
            gamma,
        };
        spec.validate()?;
        Ok(DiscreteCmdp {
            n_states,
            n_actions,
            transitions,
            rewards,
            costs,
            gamma,
            initial_state,
            terminal,
            spec: Some(spec),
        })
    }

    /// Three-state chain: from the start, a shortcut reaches the goal at once
    /// (reward 1, cost 1), while the safe route goes through a middle state
    /// (reward 0 then 0.7, cost 0). In the middle state a risky action pays
    /// 0.8 with cost 1. The goal is absorbing. `gamma = 0.9`.
    pub fn chain3() -> Self {
        let go = |to: usize| {
            let mut row = vec![0.0; 3];
            row[to] = 1.0;
            row
        };
        let at = |to: usize, v: f64| {
            let mut row = vec![0.0; 3];
            row[to] = v;
            row
        };
        let transitions = vec![
            vec![go(1), go(2)],
            vec![go(2), go(2)],
            vec![go(2), go(2)],
        ];
        let rewards = vec![
            vec![at(1, 0.0), at(2, 1.0)],
            vec![at(2, 0.7), at(2, 0.8)],
            vec![at(2, 0.0), at(2, 0.0)],
        ];
        let costs = vec![
            vec![at(1, 0.0), at(2, 1.0)],
            vec![at(2, 0.0), at(2, 1.0)],
            vec![at(2, 0.0), at(2, 0.0)],
        ];
        DiscreteCmdp::new(transitions, rewards, costs, 0.9, 0, vec![false, false, true], 10)
            .expect("chain3 is well formed")
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

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    #[inline]
    fn idx(&self, s: usize, a: usize, s2: usize) -> usize {
        (s * self.n_actions + a) * self.n_states + s2
    }

    pub fn prob(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.transitions[self.idx(s, a, s2)]
    }

    /// Expected one-step signal `sum_s' P(s'|s,a) X(s,a,s')`.
    fn expected(&self, table: &[f64], s: usize, a: usize) -> f64 {
        (0..self.n_states)
            .map(|s2| self.prob(s, a, s2) * table[self.idx(s, a, s2)])
            .sum()
    }

    /// Bin index of a continuous action in `[-1, 1]`.
    pub fn action_index(&self, action: f64) -> usize {
        let u = (action.clamp(-1.0, 1.0) + 1.0) / 2.0;
        ((u * self.n_actions as f64) as usize).min(self.n_actions - 1)
    }

    /// Centre of the bin for action `a`.
    pub fn action_value(&self, a: usize) -> f64 {
        -1.0 + (2.0 * a as f64 + 1.0) / self.n_actions as f64
    }

    pub fn state_index(&self, state: &[f64]) -> usize {
        state
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0
    }

    pub fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states];
        v[s] = 1.0;
        v
    }

    fn check_policy(&self, policy: &DiscretePolicy) -> Result<()> {
        if policy.len() != self.n_states || policy.iter().any(|p| p.len() != self.n_actions) {
            return Err(Error::Shape {
                context: "discrete policy",
                expected: self.n_states * self.n_actions,
                actual: policy.iter().map(Vec::len).sum(),
            });
        }
        Ok(())
    }

    /// Exact `J^R` and `J^C` of a stationary policy by solving
    /// `(I - gamma P_pi) V = x_pi` for both channels.
    pub fn evaluate(&self, policy: &DiscretePolicy) -> Result<PolicyValue> {
        self.check_policy(policy)?;
        let n = self.n_states;
        let mut a = vec![vec![0.0; n]; n];
        let mut r = vec![0.0; n];
        let mut c = vec![0.0; n];
        for s in 0..n {
            a[s][s] += 1.0;
            for (act, &p) in policy[s].iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                r[s] += p * self.expected(&self.rewards, s, act);
                c[s] += p * self.expected(&self.costs, s, act);
                for (s2, row) in a[s].iter_mut().enumerate() {
                    *row -= self.gamma * p * self.prob(s, act, s2);
                }
            }
        }
        let vr = solve_linear(a.clone(), r)?;
        let vc = solve_linear(a, c)?;
        Ok(PolicyValue {
            reward: vr[self.initial_state],
            cost: vc[self.initial_state],
        })
    }

    pub fn deterministic_policy(&self, actions: &[usize]) -> DiscretePolicy {
        actions
            .iter()
            .map(|&a| {
                let mut p = vec![0.0; self.n_actions];
                p[a] = 1.0;
                p
            })
            .collect()
    }

    /// Every deterministic policy with its exact value.
    pub fn enumerate_deterministic(&self) -> Result<Vec<(Vec<usize>, PolicyValue)>> {
        let count = (self.n_actions as f64).powi(self.n_states as i32);
        if count > MAX_ENUMERATION as f64 {
            return Err(Error::InvalidInput(format!(
                "{count} deterministic policies exceed the enumeration limit"
            )));
        }
        let mut actions = vec![0usize; self.n_states];
        let mut out = Vec::with_capacity(count as usize);
        loop {
            let value = self.evaluate(&self.deterministic_policy(&actions))?;
            out.push((actions.clone(), value));
            // odometer increment
            let mut i = 0;
            loop {
                if i == self.n_states {
                    return Ok(out);
                }
                actions[i] += 1;
                if actions[i] < self.n_actions {
                    break;
                }
                actions[i] = 0;
                i += 1;
            }
        }
    }

    /// Optimal unconstrained value from the initial state.
    pub fn value_iteration(&self, tol: f64) -> f64 {
        let mut v = vec![0.0; self.n_states];
        loop {
            let mut delta: f64 = 0.0;
            let next: Vec<f64> = (0..self.n_states)
                .map(|s| {
                    (0..self.n_actions)
                        .map(|a| {
                            self.expected(&self.rewards, s, a)
                                + self.gamma
                                    * (0..self.n_states)
                                        .map(|s2| self.prob(s, a, s2) * v[s2])
                                        .sum::<f64>()
                        })
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            for (a, b) in next.iter().zip(&v) {
                delta = delta.max((a - b).abs());
            }
            v = next;
            if delta < tol * (1.0 - self.gamma) {
                return v[self.initial_state];
            }
        }
    }

    /// Maximise `J^R` subject to `J^C <= limit` over stationary policies.
    ///
    /// All deterministic policies are enumerated and evaluated exactly. The
    /// occupancy-measure linear program is then solved; when its randomised
    /// witness is strictly better than the best feasible deterministic policy
    /// it is returned instead. `limit = f64::INFINITY` drops the constraint.
    pub fn oracle_solve(&self, limit: f64) -> Result<OracleSolution> {
        let all = self.enumerate_deterministic()?;
        let min_cost = all.iter().map(|(_, v)| v.cost).fold(f64::INFINITY, f64::min);
        let best = all
            .iter()
            .filter(|(_, v)| v.cost <= limit)
            .max_by(|a, b| a.1.reward.total_cmp(&b.1.reward))
            .cloned();
        let Some((det_actions, det_value)) = best else {
            return Err(Error::Infeasible { limit, min_cost });
        };

        let lp_policy = self.solve_occupancy_lp(limit)?;
        let lp_value = self.evaluate(&lp_policy)?;
        let randomized = lp_value.cost <= limit + 1e-9 && lp_value.reward > det_value.reward + 1e-9;
        let (policy, value) = if randomized {
            (lp_policy, lp_value)
        } else {
            (self.deterministic_policy(&det_actions), det_value)
        };
        Ok(OracleSolution {
            reward_return: value.reward,
            cost_return: value.cost,
            policy,
            deterministic_actions: det_actions,
            deterministic_value: det_value,
            randomized,
        })
    }

    fn solve_occupancy_lp(&self, limit: f64) -> Result<DiscretePolicy> {
        let (ns, na) = (self.n_states, self.n_actions);
        let mut problem = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<Vec<_>> = (0..ns)
            .map(|s| {
                (0..na)
                    .map(|a| problem.add_var(self.expected(&self.rewards, s, a), (0.0, f64::INFINITY)))
                    .collect()
            })
            .collect();
        // flow conservation: sum_a rho(s',a) - gamma sum_{s,a} P(s'|s,a) rho(s,a) = mu(s')
        for s2 in 0..ns {
            let mut row = Vec::with_capacity(ns * na);
            for s in 0..ns {
                for a in 0..na {
                    let mut coef = -self.gamma * self.prob(s, a, s2);
                    if s == s2 {
                        coef += 1.0;
                    }
                    if coef != 0.0 {
                        row.push((vars[s][a], coef));
                    }
                }
            }
            let mu = if s2 == self.initial_state { 1.0 } else { 0.0 };
            problem.add_constraint(row.as_slice(), ComparisonOp::Eq, mu);
        }
        if limit.is_finite() {
            let row: Vec<_> = (0..ns)
                .flat_map(|s| (0..na).map(move |a| (s, a)))
                .map(|(s, a)| (vars[s][a], self.expected(&self.costs, s, a)))
                .collect();
            problem.add_constraint(row.as_slice(), ComparisonOp::Le, limit);
        }
        let solution = problem.solve().map_err(|e| Error::Lp(e.to_string()))?;
        Ok((0..ns)
            .map(|s| {
                let occ: Vec<f64> = (0..na).map(|a| solution[vars[s][a]].max(0.0)).collect();
                let total: f64 = occ.iter().sum();
                if total > 1e-12 {
                    occ.iter().map(|o| o / total).collect()
                } else {
                    vec![1.0 / na as f64; na]
                }
            })
            .collect())
    }
}

/// Probabilities that a `N(mean, std^2)` sample falls in each of `n` equal
/// bins of `[-1, 1]`, the outer bins absorbing the clipped tails.
pub fn gaussian_bin_probabilities(mean: f64, std: f64, n: usize) -> Vec<f64> {
    let cdf = |x: f64| 0.5 * (1.0 + libm::erf((x - mean) / (std * std::f64::consts::SQRT_2)));
    let mut edges = vec![0.0];
    edges.extend((1..n).map(|k| cdf(-1.0 + 2.0 * k as f64 / n as f64)));
    edges.push(1.0);
    edges.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Gaussian elimination with partial pivoting.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty");
        if a[pivot][col].abs() < 1e-14 {
            return Err(Error::InvalidInput("singular policy-evaluation system".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Ok(x)
}

impl CmdpEnv for DiscreteCmdp {
    fn name(&self) -> &str {
        "chain3"
    }

    fn spec(&self) -> &CmdpSpec {
        self.spec.as_ref().expect("constructed through DiscreteCmdp::new")
    }

    fn sample_initial(&self, _rng: &mut Rng) -> Vec<f64> {
        self.one_hot(self.initial_state)
    }

    fn transition(&self, state: &[f64], action: &[f64], rng: &mut Rng) -> Vec<f64> {
        let s = self.state_index(state);
        let a = self.action_index(action[0]);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut next = self.n_states - 1;
        for s2 in 0..self.n_states {
            acc += self.prob(s, a, s2);
            if u < acc {
                next = s2;
                break;
            }
        }
        self.one_hot(next)
    }

    fn reward(&self, state: &[f64], action: &[f64], next: &[f64]) -> f64 {
        let (s, a, s2) = (self.state_index(state), self.action_index(action[0]), self.state_index(next));
        self.rewards[self.idx(s, a, s2)]
    }

    fn cost(&self, state: &[f64], action: &[f64], next: &[f64]) -> f64 {
        let (s, a, s2) = (self.state_index(state), self.action_index(action[0]), self.state_index(next));
        self.costs[self.idx(s, a, s2)]
    }

    fn is_terminal(&self, state: &[f64]) -> bool {
        self.terminal[self.state_index(state)]
    }

    fn observe(&self, state: &[f64]) -> Vec<f64> {
        state.to_vec()
    }
}
