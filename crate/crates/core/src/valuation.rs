//! Exact value-function evaluation for finite-horizon and discounted games,
//! plus a Monte-Carlo rollout oracle used for testing.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{HorizonSpec, MarkovGame, StateId};
use crate::policy::{sample_index, Policy};
use crate::solver::effective_horizon;

/// Per-player, per-timestep, per-state values: `values[player][h][state]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueTable {
    pub values: Vec<Vec<Vec<f64>>>,
}

impl ValueTable {
    pub fn zeros(players: usize, layers: usize, states: usize) -> Self {
        Self {
            values: vec![vec![vec![0.0; states]; layers]; players],
        }
    }

    pub fn players(&self) -> usize {
        self.values.len()
    }

    pub fn layers(&self) -> usize {
        self.values[0].len()
    }

    pub fn states(&self) -> usize {
        self.values[0][0].len()
    }

    pub fn at(&self, k: usize, h: usize, s: StateId) -> f64 {
        self.values[k][h][s]
    }

    /// First-timestep values weighted by the initial distribution.
    pub fn at_initial(&self, rho: &[f64]) -> Vec<f64> {
        self.values
            .iter()
            .map(|per_h| per_h[0].iter().zip(rho).map(|(v, p)| v * p).sum())
            .collect()
    }
}

/// Effective policy layer for timestep `h`: stationary policies use their
/// single layer, nonstationary ones repeat the last layer past the end.
pub(crate) fn eff_layer(policy: &Policy, h: usize) -> usize {
    h.min(policy.layer_count() - 1)
}

/// Expected state-to-state transition row and per-player expected rewards at
/// `(h, s)` under a joint policy. The transition expectation reduces the
/// policy to the controlling players' marginal, which is exact because the
/// row depends on their actions only.
pub(crate) fn expected_step(
    game: &MarkovGame,
    policy: &Policy,
    h: usize,
    s: StateId,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let si = game.interaction(h, s)?;
    let ph = eff_layer(policy, h);

    let weights = policy.control_marginal(ph, s, &si.control);
    let mut row = vec![0.0; game.states()];
    for (w, trow) in weights.iter().zip(&si.transition) {
        if *w != 0.0 {
            for (r, t) in row.iter_mut().zip(trow) {
                *r += w * t;
            }
        }
    }

    let mut rewards = vec![0.0; game.players()];
    for e in &si.edges {
        let pair = policy.pair_marginal(ph, s, e.from, e.to);
        let cols = e.payoff[0].len();
        let mut acc = 0.0;
        for (a, prow) in e.payoff.iter().enumerate() {
            for (b, &v) in prow.iter().enumerate() {
                acc += pair[a * cols + b] * v;
            }
        }
        rewards[e.from] += acc;
    }
    Ok((row, rewards))
}

/// Exact backward recursion for finite-horizon games:
/// `V_{k,h}(s) = E[r_{k,h}(s,a)] + sum_{s'} P_h(s'|s,a) V_{k,h+1}(s')` with
/// zero continuation after the last reward-bearing step.
pub fn evaluate_finite(game: &MarkovGame, policy: &Policy) -> Result<ValueTable> {
    if !game.horizon().is_finite() {
        return Err(Error::Domain(
            "evaluate_finite needs a finite horizon".into(),
        ));
    }
    policy.check_shape(game)?;
    let (n, hn, sn) = (game.players(), game.layer_count(), game.states());
    let mut table = ValueTable::zeros(n, hn, sn);
    let mut next = vec![vec![0.0; sn]; n];
    for h in (0..hn).rev() {
        let mut cur = vec![vec![0.0; sn]; n];
        for s in 0..sn {
            let (row, rewards) = expected_step(game, policy, h, s)?;
            for k in 0..n {
                let cont: f64 = row.iter().zip(&next[k]).map(|(p, v)| p * v).sum();
                cur[k][s] = rewards[k] + cont;
            }
        }
        for k in 0..n {
            table.values[k][h].clone_from(&cur[k]);
        }
        next = cur;
    }
    Ok(table)
}

/// Expected dynamics of a stationary policy on a discounted game: the
/// state-to-state matrix `P(pi)` and per-player reward vectors `r_k(pi)`.
pub(crate) fn stationary_dynamics(
    game: &MarkovGame,
    policy: &Policy,
) -> Result<(DMatrix<f64>, Vec<DVector<f64>>)> {
    let sn = game.states();
    let mut p = DMatrix::zeros(sn, sn);
    let mut r = vec![DVector::zeros(sn); game.players()];
    for s in 0..sn {
        let (row, rewards) = expected_step(game, policy, 0, s)?;
        for (sp, &v) in row.iter().enumerate() {
            p[(s, sp)] = v;
        }
        for (k, &v) in rewards.iter().enumerate() {
            r[k][s] = v;
        }
    }
    Ok((p, r))
}

/// Solves the dense linear system `(I - gamma P(pi)) v_k = r_k(pi)` per
/// player. Requires a stationary policy; returns a single-layer table.
pub fn evaluate_discounted(game: &MarkovGame, policy: &Policy) -> Result<ValueTable> {
    let HorizonSpec::Discounted(gamma) = game.horizon() else {
        return Err(Error::Domain(
            "evaluate_discounted needs a discounted horizon".into(),
        ));
    };
    if !policy.stationary() {
        return Err(Error::Domain(
            "evaluate_discounted needs a stationary policy".into(),
        ));
    }
    policy.check_shape(game)?;
    let sn = game.states();
    let (p, r) = stationary_dynamics(game, policy)?;
    let system = DMatrix::identity(sn, sn) - gamma * p;
    let lu = system.lu();
    let mut table = ValueTable::zeros(game.players(), 1, sn);
    for (k, rk) in r.iter().enumerate() {
        let v = lu
            .solve(rk)
            .ok_or_else(|| Error::Structural("singular discounted system".into()))?;
        for s in 0..sn {
            table.values[k][0][s] = v[s];
        }
    }
    Ok(table)
}

/// The resolvent `(I - gamma P(policy))^{-1}` of a stationary policy on a
/// discounted game, row by row.
pub fn resolvent(game: &MarkovGame, policy: &Policy) -> Result<Vec<Vec<f64>>> {
    let HorizonSpec::Discounted(gamma) = game.horizon() else {
        return Err(Error::Domain("resolvent needs a discounted horizon".into()));
    };
    if !policy.stationary() {
        return Err(Error::Domain("resolvent needs a stationary policy".into()));
    }
    policy.check_shape(game)?;
    let sn = game.states();
    let (p, _) = stationary_dynamics(game, policy)?;
    let system = DMatrix::identity(sn, sn) - gamma * p;
    let lu = system.lu();
    let mut rows = vec![vec![0.0; sn]; sn];
    for col in 0..sn {
        let mut e = DVector::zeros(sn);
        e[col] = 1.0;
        let x = lu
            .solve(&e)
            .ok_or_else(|| Error::Structural("singular discounted system".into()))?;
        for s in 0..sn {
            rows[s][col] = x[s];
        }
    }
    Ok(rows)
}

/// Stationary policy obtained by freezing the last layer of `policy`;
/// identity on stationary policies.
pub(crate) fn tail_policy(policy: &Policy) -> Policy {
    if policy.stationary() {
        return policy.clone();
    }
    let last = policy.layer_count() - 1;
    match policy {
        Policy::Product(p) => {
            let factors = p
                .factors()
                .iter()
                .map(|f| crate::policy::PolicyFactor {
                    probs: vec![f.probs[last].clone()],
                    stationary: true,
                })
                .collect::<Vec<_>>();
            Policy::Product(crate::policy::ProductPolicy::new(factors).expect("valid factors"))
        }
        Policy::Correlated(c) => {
            let table = vec![(0..c.states()).map(|s| c.dist(last, s).to_vec()).collect()];
            Policy::Correlated(
                crate::policy::CorrelatedPolicy::new(table, c.action_counts().to_vec(), true)
                    .expect("valid table"),
            )
        }
    }
}

/// Value of a nonstationary policy on a discounted game, under the
/// convention that the policy repeats its last layer forever: an exact tail
/// solve followed by an exact backward pass over the stored layers.
pub fn evaluate_discounted_nonstationary(game: &MarkovGame, policy: &Policy) -> Result<ValueTable> {
    let HorizonSpec::Discounted(gamma) = game.horizon() else {
        return Err(Error::Domain("needs a discounted horizon".into()));
    };
    if policy.stationary() {
        return evaluate_discounted(game, policy);
    }
    policy.check_shape(game)?;
    let tail = tail_policy(policy);
    let tail_values = evaluate_discounted(game, &tail)?;
    let (n, sn) = (game.players(), game.states());
    let hn = policy.layer_count();
    let mut table = ValueTable::zeros(n, hn, sn);
    let mut next: Vec<Vec<f64>> = (0..n).map(|k| tail_values.values[k][0].clone()).collect();
    for h in (0..hn).rev() {
        let mut cur = vec![vec![0.0; sn]; n];
        for s in 0..sn {
            let (row, rewards) = expected_step(game, policy, h, s)?;
            for k in 0..n {
                let cont: f64 = row.iter().zip(&next[k]).map(|(p, v)| p * v).sum();
                cur[k][s] = rewards[k] + gamma * cont;
            }
        }
        for k in 0..n {
            table.values[k][h].clone_from(&cur[k]);
        }
        next = cur;
    }
    Ok(table)
}

/// Evaluates a policy on either horizon, dispatching on the game and the
/// policy's stationarity.
pub fn evaluate(game: &MarkovGame, policy: &Policy) -> Result<ValueTable> {
    match game.horizon() {
        HorizonSpec::Finite(_) => evaluate_finite(game, policy),
        HorizonSpec::Discounted(_) => {
            if policy.stationary() {
                evaluate_discounted(game, policy)
            } else {
                evaluate_discounted_nonstationary(game, policy)
            }
        }
    }
}

/// Dot product of first-timestep values with an initial distribution.
pub fn evaluate_at_initial(values: &ValueTable, rho: &[f64]) -> Vec<f64> {
    values.at_initial(rho)
}

/// Monte-Carlo estimate of per-player values at the initial distribution.
#[derive(Debug, Clone, Serialize)]
pub struct McEstimate {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub episodes: usize,
    /// Worst-case truncation bias of a single rollout: zero on finite
    /// games, `(n-1) gamma^H / (1-gamma)` for discounted ones truncated at
    /// the effective horizon for 1e-6.
    pub truncation_bias: f64,
}

/// Rollout estimate of the per-player values at rho: unbiased on finite
/// games; discounted rollouts truncate at the effective horizon for 1e-6
/// and report the resulting bias bound in the estimate.
pub fn monte_carlo_value(
    game: &MarkovGame,
    policy: &Policy,
    episodes: usize,
    seed: u64,
) -> Result<McEstimate> {
    if episodes == 0 {
        return Err(Error::Domain("episodes must be at least 1".into()));
    }
    policy.check_shape(game)?;
    let (steps, truncation_bias) = match game.horizon() {
        HorizonSpec::Finite(h) => (h, 0.0),
        HorizonSpec::Discounted(g) => {
            let steps = effective_horizon(g, 1e-6)?;
            let bias = (game.players() - 1) as f64 * g.powi(steps as i32) / (1.0 - g);
            (steps, bias)
        }
    };
    let gamma = game.horizon().gamma();
    let n = game.players();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sums = vec![0.0; n];
    let mut sq_sums = vec![0.0; n];
    let mut returns = vec![0.0; n];
    for _ in 0..episodes {
        returns.iter_mut().for_each(|r| *r = 0.0);
        let mut s = sample_index(game.initial_distribution(), &mut rng);
        let mut weight = 1.0;
        for h in 0..steps {
            let ph = eff_layer(policy, h);
            let joint = policy.sample_joint(ph, s, &mut rng);
            let si = game.interaction(h, s)?;
            for e in &si.edges {
                returns[e.from] += weight * e.payoff[joint[e.from]][joint[e.to]];
            }
            let row = si.control.row_index(&joint, game.action_counts());
            s = sample_index(&si.transition[row], &mut rng);
            weight *= gamma;
        }
        for k in 0..n {
            sums[k] += returns[k];
            sq_sums[k] += returns[k] * returns[k];
        }
    }
    let nn = episodes as f64;
    let mean: Vec<f64> = sums.iter().map(|s| s / nn).collect();
    let std_error = sq_sums
        .iter()
        .zip(&mean)
        .map(|(sq, m)| {
            if episodes == 1 {
                0.0
            } else {
                let var = ((sq - nn * m * m) / (nn - 1.0)).max(0.0);
                (var / nn).sqrt()
            }
        })
        .collect();
    Ok(McEstimate {
        mean,
        std_error,
        episodes,
        truncation_bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{EdgeGame, StateInteraction, TransitionControl};
    use crate::policy::ProductPolicy;

    fn zero_reward_chain() -> MarkovGame {
        let zeros = vec![vec![0.0; 2]; 2];
        let si = |target: usize| {
            StateInteraction::new(
                TransitionControl::Single(0),
                vec![
                    EdgeGame::new(0, 1, zeros.clone()),
                    EdgeGame::new(1, 0, zeros.clone()),
                ],
                vec![
                    {
                        let mut r = vec![0.0; 2];
                        r[target] = 1.0;
                        r
                    };
                    2
                ],
                &[2, 2],
                2,
            )
            .unwrap()
        };
        MarkovGame::new(
            vec![2, 2],
            HorizonSpec::Finite(3),
            vec![vec![si(1), si(0)], vec![si(1), si(0)], vec![si(1), si(0)]],
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn zero_rewards_give_zero_values() {
        let game = zero_reward_chain();
        let p = Policy::from(ProductPolicy::uniform(&game));
        let v = evaluate_finite(&game, &p).unwrap();
        for k in 0..2 {
            for h in 0..3 {
                for s in 0..2 {
                    assert_eq!(v.at(k, h, s), 0.0);
                }
            }
        }
        assert_eq!(
            evaluate_at_initial(&v, game.initial_distribution()),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn discounted_identity_chain_zero() {
        let zeros = vec![vec![0.0; 2]; 2];
        let si = StateInteraction::new(
            TransitionControl::Single(0),
            vec![
                EdgeGame::new(0, 1, zeros.clone()),
                EdgeGame::new(1, 0, zeros),
            ],
            vec![vec![1.0, 0.0]; 2],
            &[2, 2],
            2,
        )
        .unwrap();
        let game = MarkovGame::new(
            vec![2, 2],
            HorizonSpec::Discounted(0.5),
            vec![vec![si.clone(), si]],
            vec![1.0, 0.0],
        )
        .unwrap();
        let p = Policy::from(ProductPolicy::uniform(&game));
        let v = evaluate_discounted(&game, &p).unwrap();
        assert_eq!(v.at(0, 0, 0), 0.0);
        assert_eq!(v.at(1, 0, 1), 0.0);
    }

    #[test]
    fn deterministic_single_path_has_zero_standard_error() {
        let game = zero_reward_chain();
        let p = Policy::from(ProductPolicy::uniform(&game));
        let est = monte_carlo_value(&game, &p, 50, 7).unwrap();
        assert_eq!(est.mean, vec![0.0, 0.0]);
        assert_eq!(est.std_error, vec![0.0, 0.0]);
        assert!(monte_carlo_value(&game, &p, 0, 7).is_err());
    }
}
