//! Single-agent best responses: the induced MDP a player faces when all
//! other players are frozen, exact dynamic programming for finite horizons,
//! value iteration plus exact policy evaluation for discounted games, and
//! equilibrium gap reports.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{HorizonSpec, MarkovGame, PlayerId, TransitionControl};
use crate::policy::{Policy, PolicyFactor};
use crate::valuation::{self, eff_layer};

/// Value-iteration iteration cap (safety net; never reached at sane
/// tolerances and discounts).
const VI_MAX_SWEEPS: usize = 10_000_000;

/// The MDP player `k` faces when everyone else follows a frozen joint
/// policy: expected own-action rewards and next-state distributions.
#[derive(Debug, Clone)]
pub struct InducedMdp {
    /// `rewards[h][s][a]`
    pub rewards: Vec<Vec<Vec<f64>>>,
    /// `transitions[h][s][a][s']`
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
}

impl InducedMdp {
    pub fn layers(&self) -> usize {
        self.rewards.len()
    }
}

/// Per-state own-action rewards and next-state rows of one induced layer.
type InducedLayer = (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>);

fn induced_layer(
    game: &MarkovGame,
    policy: &Policy,
    k: PlayerId,
    h: usize,
) -> Result<InducedLayer> {
    let sn = game.states();
    let own_actions = game.action_counts()[k];
    let ph = eff_layer(policy, h);
    let mut rewards = vec![vec![0.0; own_actions]; sn];
    let mut transitions = vec![vec![vec![0.0; sn]; own_actions]; sn];
    for s in 0..sn {
        let si = game.interaction(h, s)?;

        for &idx in si.edges_of(k) {
            let e = &si.edges[idx];
            let opp = policy.marginal(ph, s, e.to);
            for (a, row) in e.payoff.iter().enumerate() {
                let mean: f64 = row.iter().zip(&opp).map(|(v, p)| v * p).sum();
                rewards[s][a] += mean;
            }
        }

        let counts = game.action_counts();
        match si.control {
            TransitionControl::Single(c) if c == k => {
                for a in 0..own_actions {
                    transitions[s][a].clone_from(&si.transition[a]);
                }
            }
            TransitionControl::Single(c) => {
                let mix = policy.marginal(ph, s, c);
                let mut row = vec![0.0; sn];
                for (w, trow) in mix.iter().zip(&si.transition) {
                    for (r, t) in row.iter_mut().zip(trow) {
                        *r += w * t;
                    }
                }
                for a in 0..own_actions {
                    transitions[s][a].clone_from(&row);
                }
            }
            TransitionControl::Dual(i, j) if i == k || j == k => {
                let other = if i == k { j } else { i };
                let mix = policy.marginal(ph, s, other);
                for a in 0..own_actions {
                    for (b, w) in mix.iter().enumerate() {
                        let row_idx = if i == k {
                            a * counts[j] + b
                        } else {
                            b * counts[j] + a
                        };
                        for (r, t) in transitions[s][a].iter_mut().zip(&si.transition[row_idx]) {
                            *r += w * t;
                        }
                    }
                }
            }
            TransitionControl::Dual(i, j) => {
                let pair = policy.pair_marginal(ph, s, i, j);
                let mut row = vec![0.0; sn];
                for (w, trow) in pair.iter().zip(&si.transition) {
                    for (r, t) in row.iter_mut().zip(trow) {
                        *r += w * t;
                    }
                }
                for a in 0..own_actions {
                    transitions[s][a].clone_from(&row);
                }
            }
        }
    }
    Ok((rewards, transitions))
}

/// Builds the induced MDP of player `k` against `policy`. Finite games get
/// one layer per timestep; discounted games get one layer per policy layer
/// (a single one when the policy is stationary).
pub fn induce_mdp(game: &MarkovGame, policy: &Policy, k: PlayerId) -> Result<InducedMdp> {
    if k >= game.players() {
        return Err(Error::IndexOutOfRange(format!(
            "player {k} of {}",
            game.players()
        )));
    }
    policy.check_shape(game)?;
    let layers = if game.horizon().is_finite() {
        game.layer_count()
    } else {
        policy.layer_count()
    };
    let mut rewards = Vec::with_capacity(layers);
    let mut transitions = Vec::with_capacity(layers);
    for h in 0..layers {
        let (r, t) = induced_layer(game, policy, k, h)?;
        rewards.push(r);
        transitions.push(t);
    }
    Ok(InducedMdp {
        rewards,
        transitions,
    })
}

/// A best response: the optimal deterministic factor and its value table
/// (`values[h][s]`; a single layer for stationary responses).
#[derive(Debug, Clone)]
pub struct BestResponse {
    pub factor: PolicyFactor,
    pub values: Vec<Vec<f64>>,
}

fn greedy_max(q: &[f64]) -> (usize, f64) {
    let mut best = 0;
    let mut best_v = q[0];
    for (a, &v) in q.iter().enumerate().skip(1) {
        if v > best_v {
            best = a;
            best_v = v;
        }
    }
    (best, best_v)
}

/// Exact backward induction on the induced MDP; ties break toward the
/// lowest action index.
pub fn best_response_finite(
    game: &MarkovGame,
    policy: &Policy,
    k: PlayerId,
) -> Result<BestResponse> {
    if !game.horizon().is_finite() {
        return Err(Error::Domain(
            "best_response_finite needs a finite horizon".into(),
        ));
    }
    let mdp = induce_mdp(game, policy, k)?;
    let (hn, sn) = (mdp.layers(), game.states());
    let own_actions = game.action_counts()[k];
    let mut values = vec![vec![0.0; sn]; hn];
    let mut actions = vec![vec![0usize; sn]; hn];
    let mut next = vec![0.0; sn];
    for h in (0..hn).rev() {
        for s in 0..sn {
            let q: Vec<f64> = (0..own_actions)
                .map(|a| {
                    mdp.rewards[h][s][a]
                        + mdp.transitions[h][s][a]
                            .iter()
                            .zip(&next)
                            .map(|(p, v)| p * v)
                            .sum::<f64>()
                })
                .collect();
            let (a, v) = greedy_max(&q);
            actions[h][s] = a;
            values[h][s] = v;
        }
        next.clone_from(&values[h]);
    }
    Ok(BestResponse {
        factor: PolicyFactor::deterministic(&actions, own_actions, false),
        values,
    })
}

/// Exact values of a fixed deterministic action choice on a one-layer
/// induced MDP, via a dense linear solve.
fn evaluate_greedy_discounted(
    rewards: &[Vec<f64>],
    transitions: &[Vec<Vec<f64>>],
    actions: &[usize],
    gamma: f64,
) -> Result<Vec<f64>> {
    let sn = actions.len();
    let mut p = DMatrix::zeros(sn, sn);
    let mut r = DVector::zeros(sn);
    for s in 0..sn {
        let a = actions[s];
        r[s] = rewards[s][a];
        for sp in 0..sn {
            p[(s, sp)] = transitions[s][a][sp];
        }
    }
    let system = DMatrix::identity(sn, sn) - gamma * p;
    let v = system
        .lu()
        .solve(&r)
        .ok_or_else(|| Error::Structural("singular discounted system".into()))?;
    Ok(v.iter().copied().collect())
}

/// Value iteration to sup-norm residual `tol * (1 - gamma) / (2 gamma)`,
/// greedy extraction, then exact evaluation of the greedy policy. The
/// returned values are the greedy policy's exact values, within `tol` of
/// the optimum.
pub fn best_response_discounted(
    game: &MarkovGame,
    policy: &Policy,
    k: PlayerId,
    tol: f64,
) -> Result<BestResponse> {
    let HorizonSpec::Discounted(gamma) = game.horizon() else {
        return Err(Error::Domain(
            "best_response_discounted needs a discounted horizon".into(),
        ));
    };
    if tol <= 0.0 {
        return Err(Error::Domain("tol must be positive".into()));
    }
    if !policy.stationary() {
        return Err(Error::Domain(
            "best_response_discounted needs a stationary policy".into(),
        ));
    }
    let mdp = induce_mdp(game, policy, k)?;
    let (actions, _) = value_iterate_layer(&mdp.rewards[0], &mdp.transitions[0], gamma, tol)?;
    let values = evaluate_greedy_discounted(&mdp.rewards[0], &mdp.transitions[0], &actions, gamma)?;
    let factor = PolicyFactor::deterministic(&[actions], game.action_counts()[k], true);
    Ok(BestResponse {
        factor,
        values: vec![values],
    })
}

fn value_iterate_layer(
    rewards: &[Vec<f64>],
    transitions: &[Vec<Vec<f64>>],
    gamma: f64,
    tol: f64,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let sn = rewards.len();
    let own_actions = rewards[0].len();
    let threshold = tol * (1.0 - gamma) / (2.0 * gamma);
    let mut v = vec![0.0; sn];
    let mut actions = vec![0usize; sn];
    for sweep in 0..VI_MAX_SWEEPS {
        let mut next = vec![0.0; sn];
        let mut residual = 0.0f64;
        for s in 0..sn {
            let q: Vec<f64> = (0..own_actions)
                .map(|a| {
                    rewards[s][a]
                        + gamma
                            * transitions[s][a]
                                .iter()
                                .zip(&v)
                                .map(|(p, val)| p * val)
                                .sum::<f64>()
                })
                .collect();
            let (a, val) = greedy_max(&q);
            actions[s] = a;
            next[s] = val;
            residual = residual.max((val - v[s]).abs());
        }
        v = next;
        if residual <= threshold {
            return Ok((actions, v));
        }
        if sweep + 1 == VI_MAX_SWEEPS {
            break;
        }
    }
    Err(Error::Structural(
        "value iteration failed to converge".into(),
    ))
}

/// Best-response values against a nonstationary policy on a discounted
/// game, under the repeated-last-layer tail convention: a stationary tail
/// response via value iteration, then an exact backward pass.
pub(crate) fn br_values_discounted_nonstationary(
    game: &MarkovGame,
    policy: &Policy,
    k: PlayerId,
    tol: f64,
) -> Result<Vec<Vec<f64>>> {
    let HorizonSpec::Discounted(gamma) = game.horizon() else {
        return Err(Error::Domain("needs a discounted horizon".into()));
    };
    let tail = valuation::tail_policy(policy);
    let tail_br = best_response_discounted(game, &tail, k, tol)?;
    let mdp = induce_mdp(game, policy, k)?;
    let (hn, sn) = (mdp.layers(), game.states());
    let own_actions = game.action_counts()[k];
    let mut values = vec![vec![0.0; sn]; hn];
    let mut next = tail_br.values[0].clone();
    for h in (0..hn).rev() {
        for s in 0..sn {
            let q = (0..own_actions).map(|a| {
                mdp.rewards[h][s][a]
                    + gamma
                        * mdp.transitions[h][s][a]
                            .iter()
                            .zip(&next)
                            .map(|(p, v)| p * v)
                            .sum::<f64>()
            });
            values[h][s] = q.fold(f64::NEG_INFINITY, f64::max);
        }
        next.clone_from(&values[h]);
    }
    Ok(values)
}

/// Best-response value tables of every player against `policy`, assembled
/// into one [`crate::valuation::ValueTable`]. This is the canonical feasible
/// point of the equilibrium program (finite: exact DP; discounted:
/// tol-certified value iteration).
pub fn best_response_table(
    game: &MarkovGame,
    policy: &Policy,
    tol: f64,
) -> Result<crate::valuation::ValueTable> {
    let n = game.players();
    let mut table = match game.horizon() {
        HorizonSpec::Finite(h) => crate::valuation::ValueTable::zeros(n, h, game.states()),
        HorizonSpec::Discounted(_) => crate::valuation::ValueTable::zeros(n, 1, game.states()),
    };
    for k in 0..n {
        let br = match game.horizon() {
            HorizonSpec::Finite(_) => best_response_finite(game, policy, k)?,
            HorizonSpec::Discounted(_) => best_response_discounted(game, policy, k, tol)?,
        };
        table.values[k].clone_from(&br.values);
    }
    Ok(table)
}

// ---------------------------------------------------------------------------
// Gap reports
// ---------------------------------------------------------------------------

/// One player's row of a gap report.
#[derive(Debug, Clone, Serialize)]
pub struct PlayerGap {
    pub player: PlayerId,
    pub best_response: f64,
    pub current: f64,
    pub gap: f64,
}

/// Per-player best-response values, current values and equilibrium gaps at
/// the initial distribution, with the certification tolerance used.
#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub per_player: Vec<PlayerGap>,
    pub max_gap: f64,
    pub sum_gap: f64,
    pub tol: f64,
}

/// Certifies the CCE/NE gap of a joint policy: for every player, the exact
/// best-response value minus the current value, at the initial
/// distribution. `tol` bounds the value-iteration error on discounted
/// games; finite games are exact.
pub fn gap_report(game: &MarkovGame, policy: &Policy, tol: f64) -> Result<GapReport> {
    policy.check_shape(game)?;
    let rho = game.initial_distribution();
    let current = valuation::evaluate(game, policy)?.at_initial(rho);
    let mut per_player = Vec::with_capacity(game.players());
    for k in 0..game.players() {
        let br_value = match game.horizon() {
            HorizonSpec::Finite(_) => {
                let br = best_response_finite(game, policy, k)?;
                br.values[0].iter().zip(rho).map(|(v, p)| v * p).sum()
            }
            HorizonSpec::Discounted(_) => {
                if policy.stationary() {
                    let br = best_response_discounted(game, policy, k, tol)?;
                    br.values[0].iter().zip(rho).map(|(v, p)| v * p).sum()
                } else {
                    let values = br_values_discounted_nonstationary(game, policy, k, tol)?;
                    values[0].iter().zip(rho).map(|(v, p)| v * p).sum()
                }
            }
        };
        per_player.push(PlayerGap {
            player: k,
            best_response: br_value,
            current: current[k],
            gap: (br_value - current[k]).max(0.0),
        });
    }
    let max_gap = per_player.iter().map(|g| g.gap).fold(0.0, f64::max);
    let sum_gap = per_player.iter().map(|g| g.gap).sum();
    Ok(GapReport {
        per_player,
        max_gap,
        sum_gap,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{EdgeGame, StateInteraction};
    use crate::policy::{CorrelatedPolicy, ProductPolicy};

    fn pennies() -> MarkovGame {
        let m = vec![vec![1.0, -1.0], vec![-1.0, 1.0]];
        let mt_neg = vec![vec![-1.0, 1.0], vec![1.0, -1.0]];
        let si = StateInteraction::new(
            TransitionControl::Single(0),
            vec![EdgeGame::new(0, 1, m), EdgeGame::new(1, 0, mt_neg)],
            vec![vec![1.0], vec![1.0]],
            &[2, 2],
            1,
        )
        .unwrap();
        MarkovGame::new(
            vec![2, 2],
            HorizonSpec::Finite(1),
            vec![vec![si]],
            vec![1.0],
        )
        .unwrap()
    }

    #[test]
    fn best_response_to_uniform_pennies_is_zero() {
        let game = pennies();
        let p = Policy::from(ProductPolicy::uniform(&game));
        let br = best_response_finite(&game, &p, 0).unwrap();
        assert!((br.values[0][0] - 0.0).abs() < 1e-15);
        let report = gap_report(&game, &p, 1e-9).unwrap();
        assert!(report.max_gap < 1e-15);
        assert_eq!(report.per_player.len(), 2);
    }

    #[test]
    fn best_response_exploits_pure_opponent() {
        let game = pennies();
        let pure = ProductPolicy::uniform(&game)
            .with_factor(1, PolicyFactor::deterministic(&[vec![0]], 2, false))
            .unwrap();
        let br = best_response_finite(&game, &Policy::from(pure.clone()), 0).unwrap();
        assert!((br.values[0][0] - 1.0).abs() < 1e-15);
        assert_eq!(br.factor.dist(0, 0), &[1.0, 0.0]);
        let report = gap_report(&game, &Policy::from(pure), 1e-9).unwrap();
        assert!((report.per_player[0].gap - 1.0).abs() < 1e-15);
    }

    #[test]
    fn controller_transitions_ignore_opponents() {
        // Player 0 controls everywhere: its induced transitions must not
        // depend on the frozen policy.
        let zeros = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let si = |rows: Vec<Vec<f64>>| {
            StateInteraction::new(
                TransitionControl::Single(0),
                vec![
                    EdgeGame::new(0, 1, zeros.clone()),
                    EdgeGame::new(1, 0, zeros.clone()),
                ],
                rows,
                &[2, 2],
                2,
            )
            .unwrap()
        };
        let game = MarkovGame::new(
            vec![2, 2],
            HorizonSpec::Finite(1),
            vec![vec![
                si(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
                si(vec![vec![0.5, 0.5], vec![1.0, 0.0]]),
            ]],
            vec![1.0, 0.0],
        )
        .unwrap();
        let a = Policy::from(
            CorrelatedPolicy::new(
                vec![vec![vec![0.5, 0.0, 0.0, 0.5], vec![0.25; 4]]],
                vec![2, 2],
                false,
            )
            .unwrap(),
        );
        let b = Policy::from(ProductPolicy::uniform(&game));
        let ma = induce_mdp(&game, &a, 0).unwrap();
        let mb = induce_mdp(&game, &b, 0).unwrap();
        assert_eq!(ma.transitions, mb.transitions);
    }

    #[test]
    fn discounted_best_response_rejects_bad_tolerance() {
        let m = vec![vec![1.0, -1.0], vec![-1.0, 1.0]];
        let m_neg = vec![vec![-1.0, 1.0], vec![1.0, -1.0]];
        let si = StateInteraction::new(
            TransitionControl::Single(0),
            vec![EdgeGame::new(0, 1, m), EdgeGame::new(1, 0, m_neg)],
            vec![vec![1.0], vec![1.0]],
            &[2, 2],
            1,
        )
        .unwrap();
        let game = MarkovGame::new(
            vec![2, 2],
            HorizonSpec::Discounted(0.5),
            vec![vec![si]],
            vec![1.0],
        )
        .unwrap();
        let p = Policy::from(ProductPolicy::uniform(&game));
        assert!(best_response_discounted(&game, &p, 0, 0.0).is_err());
        assert!(best_response_discounted(&game, &p, 0, 1e-9).is_ok());
    }

    #[test]
    fn single_action_player_gap_is_zero() {
        let zeros21 = vec![vec![0.5], vec![-0.5]];
        let zeros12 = vec![vec![-0.5, 0.5]];
        let si = StateInteraction::new(
            TransitionControl::Single(0),
            vec![EdgeGame::new(0, 1, zeros21), EdgeGame::new(1, 0, zeros12)],
            vec![vec![1.0], vec![1.0]],
            &[2, 1],
            1,
        )
        .unwrap();
        let game = MarkovGame::new(
            vec![2, 1],
            HorizonSpec::Finite(1),
            vec![vec![si]],
            vec![1.0],
        )
        .unwrap();
        let p = Policy::from(ProductPolicy::uniform(&game));
        let report = gap_report(&game, &p, 1e-9).unwrap();
        assert!(report.per_player[1].gap.abs() < 1e-15);
    }
}
