//! End-to-end equilibrium computation: backward-induction NE for finite
//! horizons, effective-horizon truncation for discounted games, and the
//! CCE-to-NE collapse pipeline. Certified gaps are always recomputed with
//! exact best responses, independently of the per-stage certificates.

use serde::Serialize;

use crate::best_response::{gap_report, GapReport};
use crate::error::{Error, Result};
use crate::game::{EdgeGame, HorizonSpec, MarkovGame, StateInteraction};
use crate::policy::{CorrelatedPolicy, Policy, PolicyFactor, ProductPolicy};
use crate::stage::{build_stage, solve_stage, Learner, StageSolveConfig};
use crate::valuation::{self, ValueTable};

/// Options for the stage solves inside a full solve.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub learner: Learner,
    pub stage_max_iters: u64,
    /// Also assemble the per-stage time-averaged joint distributions into a
    /// correlated policy (the no-regret CCE).
    pub track_cce: bool,
    /// Value-iteration tolerance for discounted gap certification.
    pub certification_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            learner: Learner::OptimisticMwu,
            stage_max_iters: 200_000,
            track_cce: false,
            certification_tol: 1e-9,
        }
    }
}

/// Output of a full solve: the product policy, its exact values, per-stage
/// diagnostics, and an independently certified NE gap.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub policy: ProductPolicy,
    pub values: ValueTable,
    /// `stage_gaps[h][s]`: certified gap of each stage solve.
    pub stage_gaps: Vec<Vec<f64>>,
    /// `stage_iterations[h][s]`
    pub stage_iterations: Vec<Vec<u64>>,
    /// Exact best-response certification of `policy` on the input game.
    pub certified: GapReport,
    /// Per-stage no-regret CCE (present when tracked).
    pub cce: Option<CorrelatedPolicy>,
    pub eps: f64,
    pub seed: u64,
    pub stage_tolerance: f64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-stage seed, independent of solve order.
pub fn stage_seed(seed: u64, h: usize, s: usize) -> u64 {
    splitmix64(splitmix64(seed ^ (h as u64).wrapping_mul(0xA24B_AED4_963E_E407)) ^ (s as u64))
}

fn renormalize(v: &[f64]) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter().map(|x| x / total).collect()
}

fn require_valid(game: &MarkovGame) -> Result<()> {
    let violations = game.validate();
    if let Some(v) = violations.first() {
        return Err(Error::Structural(format!(
            "game fails validation ({} violations), first: {v}",
            violations.len()
        )));
    }
    Ok(())
}

/// Backward-induction solve of a finite-horizon game to an eps-approximate
/// NE: every stage at `(h, s)` is solved to tolerance `eps / (2H)` against
/// the continuation values of the already-solved suffix game.
pub fn solve_finite(game: &MarkovGame, eps: f64, seed: u64) -> Result<SolveReport> {
    solve_finite_opts(game, eps, seed, &SolveOptions::default())
}

pub fn solve_finite_opts(
    game: &MarkovGame,
    eps: f64,
    seed: u64,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    if !game.horizon().is_finite() {
        return Err(Error::Domain("solve_finite needs a finite horizon".into()));
    }
    if eps <= 0.0 {
        return Err(Error::Domain("eps must be positive".into()));
    }
    require_valid(game)?;
    let (n, hn, sn) = (game.players(), game.layer_count(), game.states());
    let stage_tolerance = eps / (2.0 * hn as f64);

    let mut factor_probs: Vec<Vec<Vec<Vec<f64>>>> = vec![vec![vec![Vec::new(); sn]; hn]; n];
    let mut cce_table: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); sn]; hn];
    let mut stage_gaps = vec![vec![0.0; sn]; hn];
    let mut stage_iterations = vec![vec![0u64; sn]; hn];
    let mut values = ValueTable::zeros(n, hn, sn);

    let mut continuation = vec![vec![0.0; sn]; n];
    for h in (0..hn).rev() {
        let mut current = vec![vec![0.0; sn]; n];
        for s in 0..sn {
            let stage = build_stage(game, h, s, &continuation)?;
            let cfg = StageSolveConfig {
                eps: stage_tolerance,
                max_iters: opts.stage_max_iters,
                seed: stage_seed(seed, h, s),
                learner: opts.learner,
                track_joint: opts.track_cce,
                record_curve: false,
            };
            let sol = solve_stage(&stage, &cfg)?;
            for k in 0..n {
                factor_probs[k][h][s] = renormalize(&sol.marginals[k]);
                current[k][s] = sol.values[k];
            }
            if let Some(joint) = &sol.joint_average {
                cce_table[h][s] = renormalize(joint);
            }
            stage_gaps[h][s] = sol.gap;
            stage_iterations[h][s] = sol.iterations;
        }
        for k in 0..n {
            values.values[k][h].clone_from(&current[k]);
        }
        continuation = current;
    }

    let factors = factor_probs
        .into_iter()
        .map(|probs| PolicyFactor::new(probs, false))
        .collect::<Result<Vec<_>>>()?;
    let policy = ProductPolicy::new(factors)?;
    let cce = if opts.track_cce {
        Some(CorrelatedPolicy::new(
            cce_table,
            game.action_counts().to_vec(),
            false,
        )?)
    } else {
        None
    };
    let certified = gap_report(
        game,
        &Policy::Product(policy.clone()),
        opts.certification_tol,
    )?;
    Ok(SolveReport {
        policy,
        values,
        stage_gaps,
        stage_iterations,
        certified,
        cce,
        eps,
        seed,
        stage_tolerance,
    })
}

/// Truncation length making the discounted tail contribution O(eps):
/// `ceil(log(1/eps) / (1 - gamma))`, at least 1.
pub fn effective_horizon(gamma: f64, eps: f64) -> Result<usize> {
    if !(0.0 < gamma && gamma < 1.0) {
        return Err(Error::Domain(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let raw = (1.0 / eps).ln() / (1.0 - gamma);
    Ok((raw.ceil() as usize).max(1))
}

/// The finite-horizon truncation of a discounted game: `H` copies of the
/// shared layer with edge payoffs scaled by `gamma^(h-1)`.
pub fn truncate_discounted(game: &MarkovGame, horizon: usize) -> Result<MarkovGame> {
    let HorizonSpec::Discounted(gamma) = game.horizon() else {
        return Err(Error::Domain("truncation needs a discounted game".into()));
    };
    let base = &game.layers()[0];
    let mut layers = Vec::with_capacity(horizon);
    let mut scale = 1.0;
    for _ in 0..horizon {
        let layer = base
            .iter()
            .map(|si| {
                let edges = si
                    .edges
                    .iter()
                    .map(|e| {
                        EdgeGame::new(
                            e.from,
                            e.to,
                            e.payoff
                                .iter()
                                .map(|row| row.iter().map(|v| v * scale).collect())
                                .collect(),
                        )
                    })
                    .collect();
                StateInteraction::new(
                    si.control,
                    edges,
                    si.transition.clone(),
                    game.action_counts(),
                    game.states(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        layers.push(layer);
        scale *= gamma;
    }
    MarkovGame::new(
        game.action_counts().to_vec(),
        HorizonSpec::Finite(horizon),
        layers,
        game.initial_distribution().to_vec(),
    )
}

/// Solves a discounted game by truncating at the effective horizon for
/// `eps (1-gamma) / (4n)` (so the tail costs at most eps/2), solving the
/// truncation with budget eps/2, and certifying the resulting nonstationary
/// Markov policy against the original discounted game.
pub fn solve_discounted(game: &MarkovGame, eps: f64, seed: u64) -> Result<SolveReport> {
    solve_discounted_opts(game, eps, seed, &SolveOptions::default())
}

pub fn solve_discounted_opts(
    game: &MarkovGame,
    eps: f64,
    seed: u64,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let HorizonSpec::Discounted(gamma) = game.horizon() else {
        return Err(Error::Domain(
            "solve_discounted needs a discounted horizon".into(),
        ));
    };
    if eps <= 0.0 {
        return Err(Error::Domain("eps must be positive".into()));
    }
    require_valid(game)?;
    let n = game.players() as f64;
    let horizon = effective_horizon(gamma, eps * (1.0 - gamma) / (4.0 * n))?;
    let truncated = truncate_discounted(game, horizon)?;
    let inner = solve_finite_opts(&truncated, eps / 2.0, seed, opts)?;
    let policy = inner.policy;
    let values =
        valuation::evaluate_discounted_nonstationary(game, &Policy::Product(policy.clone()))?;
    let certified = gap_report(
        game,
        &Policy::Product(policy.clone()),
        opts.certification_tol,
    )?;
    Ok(SolveReport {
        policy,
        values,
        stage_gaps: inner.stage_gaps,
        stage_iterations: inner.stage_iterations,
        certified,
        cce: inner.cce,
        eps,
        seed,
        stage_tolerance: inner.stage_tolerance,
    })
}

// ---------------------------------------------------------------------------
// Equilibrium collapse
// ---------------------------------------------------------------------------

/// Collapse bound asserted by the collapse operations.
#[derive(Debug, Clone, Serialize)]
pub struct CollapseBound {
    pub limit: f64,
    pub holds: bool,
}

/// Result of collapsing a correlated policy to its marginals, with gap
/// reports before (CCE gap of sigma) and after (NE gap of the marginals).
#[derive(Debug, Clone, Serialize)]
pub struct CollapseOutcome {
    pub marginal: ProductPolicy,
    pub before: GapReport,
    pub after: GapReport,
    /// `n * cce_gap + tol` on games where the collapse theorem applies;
    /// `None` when the game violates switching control.
    pub bound: Option<CollapseBound>,
}

/// Marginalizes a correlated policy and certifies both gaps. On zero-sum
/// polymatrix switching-control games the marginal NE gap is asserted
/// against `n * cce_gap + tol`; on two-controller games the bound is not
/// asserted.
pub fn collapse_cce(
    game: &MarkovGame,
    sigma: &CorrelatedPolicy,
    tol: f64,
) -> Result<CollapseOutcome> {
    let before = gap_report(game, &Policy::Correlated(sigma.clone()), tol)?;
    let marginal = sigma.marginalize();
    let after = gap_report(game, &Policy::Product(marginal.clone()), tol)?;
    let bound = game.is_switching_control().then(|| {
        let limit = game.players() as f64 * before.max_gap + tol;
        CollapseBound {
            limit,
            holds: after.max_gap <= limit,
        }
    });
    Ok(CollapseOutcome {
        marginal,
        before,
        after,
        bound,
    })
}

/// Two-player warm-up collapse: for any two-player zero-sum Markov game
/// (no switching-control requirement), the marginals of an eps-CCE form a
/// 2 eps-approximate NE.
pub fn collapse_two_player(
    game: &MarkovGame,
    sigma: &CorrelatedPolicy,
    tol: f64,
) -> Result<CollapseOutcome> {
    if game.players() != 2 {
        return Err(Error::Domain(format!(
            "two-player collapse needs exactly 2 players, got {}",
            game.players()
        )));
    }
    let before = gap_report(game, &Policy::Correlated(sigma.clone()), tol)?;
    let marginal = sigma.marginalize();
    let after = gap_report(game, &Policy::Product(marginal.clone()), tol)?;
    let limit = 2.0 * before.max_gap + tol;
    Ok(CollapseOutcome {
        marginal,
        before,
        bound: Some(CollapseBound {
            limit,
            holds: after.max_gap <= limit,
        }),
        after,
    })
}
