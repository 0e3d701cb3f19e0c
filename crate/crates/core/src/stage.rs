//! One-shot zero-sum polymatrix stage games with per-player continuation
//! terms, assembled during backward induction and solved to an approximate
//! NE by simultaneous no-regret dynamics plus equilibrium collapse.
//!
//! The certified gap is always computed by exact maximization over own pure
//! actions against the candidate marginals, never from the learner's
//! internal regret estimates.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{EdgeGame, MarkovGame, PlayerId, StateId, TransitionControl};

/// Structural tolerance on continuation values summing to zero per state.
pub const CONTINUATION_SUM_TOL: f64 = 1e-6;

/// No-regret learner family for [`solve_stage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Learner {
    /// Optimistic multiplicative weights (default): constant step with a
    /// one-step gradient prediction, O(1/T) regret sum in these games.
    OptimisticMwu,
    /// Plain multiplicative weights with the horizon-tuned step
    /// `sqrt(8 ln max|A_k| / T)` on payoffs normalized to [-1, 1].
    Mwu,
}

/// One-shot zero-sum polymatrix game: edge payoffs plus per-player unary
/// continuation vectors indexed by the controller's actions. Total payoff
/// is identically zero by construction.
#[derive(Debug, Clone)]
pub struct StageGame {
    action_counts: Vec<usize>,
    controller: PlayerId,
    edges: Vec<EdgeGame>,
    out_edges: Vec<Vec<usize>>,
    /// `unary[k][a_ctrl]`
    unary: Vec<Vec<f64>>,
}

impl StageGame {
    pub fn new(
        action_counts: Vec<usize>,
        controller: PlayerId,
        edges: Vec<EdgeGame>,
        unary: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = action_counts.len();
        if controller >= n {
            return Err(Error::IndexOutOfRange(format!(
                "controller {controller} of {n}"
            )));
        }
        if unary.len() != n || unary.iter().any(|g| g.len() != action_counts[controller]) {
            return Err(Error::ShapeMismatch(
                "unary terms must be indexed [player][controller action]".into(),
            ));
        }
        for a in 0..action_counts[controller] {
            let total: f64 = unary.iter().map(|g| g[a]).sum();
            if total.abs() > 1e-9 {
                return Err(Error::Structural(format!(
                    "unary terms sum to {total:+e} at controller action {a}"
                )));
            }
        }
        let mut out_edges = vec![Vec::new(); n];
        for (idx, e) in edges.iter().enumerate() {
            if e.from >= n || e.to >= n || e.from == e.to {
                return Err(Error::IndexOutOfRange(format!(
                    "edge ({}, {})",
                    e.from, e.to
                )));
            }
            if e.payoff.len() != action_counts[e.from]
                || e.payoff.iter().any(|r| r.len() != action_counts[e.to])
            {
                return Err(Error::ShapeMismatch(format!(
                    "edge ({}, {}) payoff shape",
                    e.from, e.to
                )));
            }
            out_edges[e.from].push(idx);
        }
        Ok(Self {
            action_counts,
            controller,
            edges,
            out_edges,
            unary,
        })
    }

    pub fn players(&self) -> usize {
        self.action_counts.len()
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn controller(&self) -> PlayerId {
        self.controller
    }

    /// Payoff of player `k` at a pure joint action.
    pub fn payoff(&self, k: PlayerId, joint: &[usize]) -> f64 {
        let mut total = self.unary[k][joint[self.controller]];
        for &idx in &self.out_edges[k] {
            let e = &self.edges[idx];
            total += e.payoff[joint[e.from]][joint[e.to]];
        }
        total
    }

    /// Expected payoff of every own action of player `k` against a product
    /// profile: the exact best-response gradient.
    pub fn utilities(&self, k: PlayerId, profile: &[Vec<f64>]) -> Vec<f64> {
        let mut u = vec![0.0; self.action_counts[k]];
        self.utilities_into(k, profile, &mut u);
        u
    }

    fn utilities_into(&self, k: PlayerId, profile: &[Vec<f64>], u: &mut [f64]) {
        if k == self.controller {
            u.copy_from_slice(&self.unary[k]);
        } else {
            let mean: f64 = self.unary[k]
                .iter()
                .zip(&profile[self.controller])
                .map(|(g, p)| g * p)
                .sum();
            u.iter_mut().for_each(|v| *v = mean);
        }
        for &idx in &self.out_edges[k] {
            let e = &self.edges[idx];
            let opp = &profile[e.to];
            for (a, row) in e.payoff.iter().enumerate() {
                u[a] += row.iter().zip(opp).map(|(v, p)| v * p).sum::<f64>();
            }
        }
    }

    /// Exact expected payoff per player under a product profile.
    pub fn stage_values(&self, profile: &[Vec<f64>]) -> Vec<f64> {
        (0..self.players())
            .map(|k| {
                self.utilities(k, profile)
                    .iter()
                    .zip(&profile[k])
                    .map(|(u, p)| u * p)
                    .sum()
            })
            .collect()
    }

    /// Exact best-response gap of a product profile, with per-player
    /// best-response and current values.
    pub fn profile_gap(&self, profile: &[Vec<f64>]) -> (f64, Vec<f64>, Vec<f64>) {
        let mut gap = 0.0f64;
        let mut brs = Vec::with_capacity(self.players());
        let mut vals = Vec::with_capacity(self.players());
        for k in 0..self.players() {
            let u = self.utilities(k, profile);
            let br = u.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let val: f64 = u.iter().zip(&profile[k]).map(|(u, p)| u * p).sum();
            gap = gap.max(br - val);
            brs.push(br);
            vals.push(val);
        }
        (gap.max(0.0), brs, vals)
    }

    /// Largest payoff magnitude any player can see (used to normalize
    /// learner steps).
    fn payoff_scale(&self) -> f64 {
        let mut scale = 0.0f64;
        for k in 0..self.players() {
            let mut b = self.unary[k].iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            for &idx in &self.out_edges[k] {
                let e = &self.edges[idx];
                b += e
                    .payoff
                    .iter()
                    .flatten()
                    .fold(0.0f64, |m, &v| m.max(v.abs()));
            }
            scale = scale.max(b);
        }
        scale
    }
}

/// Assembles the stage game at `(h, s)`: edge payoffs from the layer plus
/// continuation terms `g_k(a_c) = sum_{s'} P(s'|s, a_c) w_k(s')`, re-centered
/// per action so the totals are exactly zero. Two-controller states are
/// supported for two-player games by folding rewards and continuations into
/// the single bilinear edge.
pub fn build_stage(
    game: &MarkovGame,
    h: usize,
    s: StateId,
    continuation: &[Vec<f64>],
) -> Result<StageGame> {
    let n = game.players();
    if continuation.len() != n || continuation.iter().any(|w| w.len() != game.states()) {
        return Err(Error::ShapeMismatch(
            "continuation must be [player][state]".into(),
        ));
    }
    for sp in 0..game.states() {
        let total: f64 = continuation.iter().map(|w| w[sp]).sum();
        if total.abs() > CONTINUATION_SUM_TOL {
            return Err(Error::Structural(format!(
                "continuation values sum to {total:+e} at state {sp}"
            )));
        }
    }
    let si = game.interaction(h, s)?;
    match si.control {
        TransitionControl::Single(c) => {
            let actions = game.action_counts()[c];
            let mut unary = vec![vec![0.0; actions]; n];
            for a in 0..actions {
                for (k, w) in continuation.iter().enumerate() {
                    unary[k][a] = si.transition[a].iter().zip(w).map(|(p, v)| p * v).sum();
                }
                let residual: f64 = unary.iter().map(|g| g[a]).sum();
                let shift = residual / n as f64;
                for g in unary.iter_mut() {
                    g[a] -= shift;
                }
            }
            StageGame::new(game.action_counts().to_vec(), c, si.edges.clone(), unary)
        }
        TransitionControl::Dual(..) if n == 2 => {
            let (c0, c1) = (game.action_counts()[0], game.action_counts()[1]);
            let mut fold0 = vec![vec![0.0; c1]; c0];
            let mut fold1 = vec![vec![0.0; c0]; c1];
            for a0 in 0..c0 {
                for a1 in 0..c1 {
                    let joint = [a0, a1];
                    let row = si.control.row_index(&joint, game.action_counts());
                    let cont = |w: &[f64]| -> f64 {
                        si.transition[row].iter().zip(w).map(|(p, v)| p * v).sum()
                    };
                    let u0 = game.reward(h, s, 0, &joint)? + cont(&continuation[0]);
                    let u1 = game.reward(h, s, 1, &joint)? + cont(&continuation[1]);
                    let shift = (u0 + u1) / 2.0;
                    fold0[a0][a1] = u0 - shift;
                    fold1[a1][a0] = u1 - shift;
                }
            }
            StageGame::new(
                game.action_counts().to_vec(),
                0,
                vec![EdgeGame::new(0, 1, fold0), EdgeGame::new(1, 0, fold1)],
                vec![vec![0.0; c0]; 2],
            )
        }
        TransitionControl::Dual(..) => Err(Error::Structural(format!(
            "state {s} has two controllers; stage construction needs switching control (or exactly two players)"
        ))),
    }
}

/// Configuration for [`solve_stage`].
#[derive(Debug, Clone)]
pub struct StageSolveConfig {
    pub eps: f64,
    pub max_iters: u64,
    /// Reserved for randomized learners; the shipped updates are
    /// deterministic and ignore it.
    pub seed: u64,
    pub learner: Learner,
    /// Accumulate the time-averaged joint distribution (the stage CCE).
    /// When on, the returned marginals are always the averaged ones so that
    /// they coincide with the joint average's marginals.
    pub track_joint: bool,
    /// Record (iteration, certified gap) pairs at every checkpoint.
    pub record_curve: bool,
}

impl StageSolveConfig {
    pub fn new(eps: f64, max_iters: u64, seed: u64) -> Self {
        Self {
            eps,
            max_iters,
            seed,
            learner: Learner::OptimisticMwu,
            track_joint: false,
            record_curve: false,
        }
    }
}

/// Output of a stage solve.
#[derive(Debug, Clone)]
pub struct StageSolution {
    /// Product profile (per-player mixed strategies).
    pub marginals: Vec<Vec<f64>>,
    /// Exact per-player expected payoff under `marginals`.
    pub values: Vec<f64>,
    /// Exactly certified best-response gap of `marginals`.
    pub gap: f64,
    pub iterations: u64,
    pub converged: bool,
    /// Time-averaged joint distribution at the returned checkpoint
    /// (present when `track_joint` was set).
    pub joint_average: Option<Vec<f64>>,
    /// Sum over players of average external regret at the last checkpoint.
    pub regret_bound: f64,
    /// Gap of the running average at the last checkpoint (the quantity the
    /// regret bound controls).
    pub average_gap: f64,
    /// (iteration, best certified gap so far) per checkpoint, when recorded.
    pub curve: Vec<(u64, f64)>,
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter().map(|x| x / total).collect()
}

struct Snapshot {
    gap: f64,
    marginals: Vec<Vec<f64>>,
    joint: Option<Vec<f64>>,
}

/// Runs simultaneous no-regret dynamics and returns the best exactly
/// certified product profile seen, terminating once the gap is at most
/// `eps` (otherwise after `max_iters`, reporting the achieved gap).
pub fn solve_stage(stage: &StageGame, cfg: &StageSolveConfig) -> Result<StageSolution> {
    if cfg.eps <= 0.0 {
        return Err(Error::Domain("eps must be positive".into()));
    }
    let n = stage.players();
    let counts = stage.action_counts().to_vec();
    let joint_total: usize = counts.iter().product();

    let scale = stage.payoff_scale();
    let uniform: Vec<Vec<f64>> = counts.iter().map(|&c| vec![1.0 / c as f64; c]).collect();
    if scale == 0.0 || counts.iter().all(|&c| c == 1) {
        let values = stage.stage_values(&uniform);
        let (gap, _, _) = stage.profile_gap(&uniform);
        return Ok(StageSolution {
            joint_average: cfg.track_joint.then(|| joint_of_product(&uniform, &counts)),
            marginals: uniform,
            values,
            gap,
            iterations: 0,
            converged: true,
            regret_bound: 0.0,
            average_gap: gap,
            curve: Vec::new(),
        });
    }

    let max_actions = counts.iter().copied().max().unwrap_or(1).max(2) as f64;
    let eta = match cfg.learner {
        // Horizon-tuned Hedge step on [-1, 1]-normalized payoffs.
        Learner::Mwu => (8.0 * max_actions.ln() / cfg.max_iters.max(1) as f64).sqrt(),
        // Constant step; keeps the optimistic dynamics in their fast regime.
        Learner::OptimisticMwu => 0.5 / (n.saturating_sub(1).max(1) as f64),
    } / scale;

    let mut x = uniform.clone();
    let mut cum_u: Vec<Vec<f64>> = counts.iter().map(|&c| vec![0.0; c]).collect();
    let mut sum_x: Vec<Vec<f64>> = counts.iter().map(|&c| vec![0.0; c]).collect();
    let mut joint_sum = cfg.track_joint.then(|| vec![0.0; joint_total]);
    let mut realized = vec![0.0; n];
    let mut utils: Vec<Vec<f64>> = counts.iter().map(|&c| vec![0.0; c]).collect();

    let mut best: Option<Snapshot> = None;
    let mut regret_bound = f64::INFINITY;
    let mut average_gap = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut curve = Vec::new();

    for t in 1..=cfg.max_iters {
        iterations = t;
        for k in 0..n {
            stage.utilities_into(k, &x, &mut utils[k]);
            realized[k] += utils[k].iter().zip(&x[k]).map(|(u, p)| u * p).sum::<f64>();
            for (c, u) in cum_u[k].iter_mut().zip(&utils[k]) {
                *c += u;
            }
            for (sx, p) in sum_x[k].iter_mut().zip(&x[k]) {
                *sx += p;
            }
        }
        if let Some(js) = joint_sum.as_mut() {
            accumulate_joint(js, &x, &counts);
        }

        let checkpoint = t.is_power_of_two() || t % 256 == 0 || t == cfg.max_iters;
        if checkpoint {
            let avg: Vec<Vec<f64>> = sum_x.iter().map(|sx| normalized(sx)).collect();
            let (gap, _, _) = stage.profile_gap(&avg);
            average_gap = gap;
            regret_bound = (0..n)
                .map(|k| {
                    let best_cum = cum_u[k].iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    best_cum - realized[k]
                })
                .sum::<f64>()
                / t as f64;
            let mut candidates: Vec<(f64, Vec<Vec<f64>>)> = vec![(gap, avg)];
            if !cfg.track_joint {
                // The last iterate often converges faster than the average;
                // it is just as certifiable.
                let (last_gap, _, _) = stage.profile_gap(&x);
                candidates.push((last_gap, x.clone()));
            }
            for (g, profile) in candidates {
                if best.as_ref().is_none_or(|b| g < b.gap) {
                    best = Some(Snapshot {
                        gap: g,
                        marginals: profile,
                        joint: joint_sum.as_ref().map(|js| normalized(js)),
                    });
                }
            }
            if cfg.record_curve {
                curve.push((t, best.as_ref().map_or(gap, |b| b.gap)));
            }
            if best.as_ref().is_some_and(|b| b.gap <= cfg.eps) {
                converged = true;
                break;
            }
        }

        let optimistic = matches!(cfg.learner, Learner::OptimisticMwu);
        for k in 0..n {
            let mut best_score = f64::NEG_INFINITY;
            for ((xa, c), u) in x[k].iter_mut().zip(&cum_u[k]).zip(&utils[k]) {
                let s = eta * (c + if optimistic { *u } else { 0.0 });
                best_score = best_score.max(s);
                *xa = s;
            }
            let mut total = 0.0;
            for xa in x[k].iter_mut() {
                *xa = (*xa - best_score).exp();
                total += *xa;
            }
            x[k].iter_mut().for_each(|p| *p /= total);
        }
    }

    let Snapshot {
        gap,
        marginals,
        joint,
    } = best.expect("at least one checkpoint runs");
    let values = stage.stage_values(&marginals);
    Ok(StageSolution {
        marginals,
        values,
        gap,
        iterations,
        converged,
        joint_average: joint,
        regret_bound,
        average_gap,
        curve,
    })
}

fn joint_of_product(profile: &[Vec<f64>], counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().product();
    let mut out = vec![0.0; total];
    fill_joint(&mut out, profile, counts, 1.0);
    out
}

fn accumulate_joint(acc: &mut [f64], profile: &[Vec<f64>], counts: &[usize]) {
    fill_joint(acc, profile, counts, 1.0);
}

fn fill_joint(acc: &mut [f64], profile: &[Vec<f64>], counts: &[usize], weight: f64) {
    // Last player fastest, matching JointIndexer.
    let n = counts.len();
    let mut idx = vec![0usize; n];
    for slot in acc.iter_mut() {
        let mut p = weight;
        for (k, &a) in idx.iter().enumerate() {
            p *= profile[k][a];
        }
        *slot += p;
        for k in (0..n).rev() {
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}
