//! The two no-collapse counterexamples: 3-player games where two players
//! jointly control the transitions, built exactly and verified against
//! their known reference values.
//!
//! Geometry (both horizons): states s1, s2, s3; players 0 and 1 have two
//! actions, player 2 has one. Playing the first action in s1 or s2 pays
//! 1/20 through the (0,1) edge; s3 pays -1/2 to both, player 2 absorbing
//! the negations. From s1 the pair action (a1, b1) leads to s3 and
//! everything else to s2; from s2 it leads to s3 and everything else to s1;
//! s3 moves to s1 or s2 uniformly. Getting the s1 branches the other way
//! round does not reproduce the reference values.

use serde::Serialize;

use crate::best_response::gap_report;
use crate::error::{Error, Result};
use crate::game::{EdgeGame, HorizonSpec, MarkovGame, StateInteraction, TransitionControl};
use crate::policy::{marginal_excluding, CorrelatedPolicy, Policy, PolicyFactor};
use crate::valuation::evaluate;

/// Discount factor of the infinite-horizon example, pinned by its
/// resolvent row (9/5, 6/5, 0): 1/(1-g^2) = 9/5.
pub const INFINITE_EXAMPLE_GAMMA: f64 = 2.0 / 3.0;

/// A counterexample instance: the game plus its CCE joint policy.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub game: MarkovGame,
    pub sigma: CorrelatedPolicy,
}

const REWARD_STEP: f64 = 1.0 / 20.0;
const PIT_REWARD: f64 = -0.5;

fn reward_state(transition: Vec<Vec<f64>>) -> StateInteraction {
    // Players 0 and 1 earn 1/20 for their first action via the (0,1) edge;
    // player 2 absorbs both through the (2,0) and (2,1) edges.
    let e01 = vec![vec![REWARD_STEP, REWARD_STEP], vec![0.0, 0.0]];
    let e10 = vec![vec![REWARD_STEP, REWARD_STEP], vec![0.0, 0.0]];
    let absorb = vec![vec![-REWARD_STEP, 0.0]];
    StateInteraction::new(
        TransitionControl::Dual(0, 1),
        vec![
            EdgeGame::new(0, 1, e01),
            EdgeGame::new(1, 0, e10),
            EdgeGame::new(0, 2, vec![vec![0.0], vec![0.0]]),
            EdgeGame::new(2, 0, absorb.clone()),
            EdgeGame::new(1, 2, vec![vec![0.0], vec![0.0]]),
            EdgeGame::new(2, 1, absorb),
        ],
        transition,
        &[2, 2, 1],
        3,
    )
    .expect("valid counterexample state")
}

fn pit_state() -> StateInteraction {
    let pay = vec![vec![PIT_REWARD], vec![PIT_REWARD]];
    let negate = vec![vec![-PIT_REWARD, -PIT_REWARD]];
    StateInteraction::new(
        TransitionControl::Dual(0, 1),
        vec![
            EdgeGame::new(0, 2, pay.clone()),
            EdgeGame::new(2, 0, negate.clone()),
            EdgeGame::new(1, 2, pay),
            EdgeGame::new(2, 1, negate),
        ],
        vec![vec![0.5, 0.5, 0.0]; 4],
        &[2, 2, 1],
        3,
    )
    .expect("valid pit state")
}

fn example_layer() -> Vec<StateInteraction> {
    // Transition rows are indexed (a0, a1) with player 1 fastest.
    let s1 = reward_state(vec![
        vec![0.0, 0.0, 1.0], // (a1, b1) -> s3
        vec![0.0, 1.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.0, 1.0, 0.0],
    ]);
    let s2 = reward_state(vec![
        vec![0.0, 0.0, 1.0], // (a1, b1) -> s3
        vec![1.0, 0.0, 0.0],
        vec![1.0, 0.0, 0.0],
        vec![1.0, 0.0, 0.0],
    ]);
    vec![s1, s2, pit_state()]
}

fn example_sigma() -> CorrelatedPolicy {
    // Half mass on (a1, b2) and (a2, b1) in s1 and s2; joint index 2*a0+a1.
    let coord = vec![0.0, 0.5, 0.5, 0.0];
    let table = vec![vec![coord.clone(), coord, vec![0.25; 4]]];
    CorrelatedPolicy::new(table, vec![2, 2, 1], true).expect("valid sigma")
}

/// The finite-horizon example: two reward-bearing steps (a three-step
/// horizon whose terminal step carries no value), started at s1.
pub fn build_finite_example() -> Counterexample {
    let layer = example_layer();
    let game = MarkovGame::new(
        vec![2, 2, 1],
        HorizonSpec::Finite(2),
        vec![layer.clone(), layer],
        vec![1.0, 0.0, 0.0],
    )
    .expect("valid finite example");
    Counterexample {
        game,
        sigma: example_sigma(),
    }
}

/// The infinite-horizon example: same layer, uniform initial distribution,
/// discount factor 2/3.
pub fn build_infinite_example() -> Counterexample {
    let game = MarkovGame::new(
        vec![2, 2, 1],
        HorizonSpec::Discounted(INFINITE_EXAMPLE_GAMMA),
        vec![example_layer()],
        vec![1.0 / 3.0; 3],
    )
    .expect("valid infinite example");
    Counterexample {
        game,
        sigma: example_sigma(),
    }
}

fn switching_layer() -> Vec<StateInteraction> {
    // Single-control variant: player 0 controls everywhere, rows are the
    // expectation of the two-controller rows over a uniform player 1.
    let dual = example_layer();
    dual.into_iter()
        .map(|si| {
            let rows = vec![
                si.transition[0]
                    .iter()
                    .zip(&si.transition[1])
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect(),
                si.transition[2]
                    .iter()
                    .zip(&si.transition[3])
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect(),
            ];
            StateInteraction::new(TransitionControl::Single(0), si.edges, rows, &[2, 2, 1], 3)
                .expect("valid switching state")
        })
        .collect()
}

/// The finite example with transitions reduced to single control
/// (controller: player 0; rows averaged over a uniform player 1). The
/// collapse theorem applies to this variant.
pub fn finite_switching_variant() -> MarkovGame {
    let layer = switching_layer();
    MarkovGame::new(
        vec![2, 2, 1],
        HorizonSpec::Finite(2),
        vec![layer.clone(), layer],
        vec![1.0, 0.0, 0.0],
    )
    .expect("valid switching variant")
}

/// Single-control variant of the infinite example.
pub fn infinite_switching_variant() -> MarkovGame {
    MarkovGame::new(
        vec![2, 2, 1],
        HorizonSpec::Discounted(INFINITE_EXAMPLE_GAMMA),
        vec![switching_layer()],
        vec![1.0 / 3.0; 3],
    )
    .expect("valid switching variant")
}

/// The four stationary deterministic policies of player 0, as
/// (p, q) = (first-action at s1, first-action at s2) in the order
/// (1,1), (0,0), (1,0), (0,1). The s3 action is irrelevant; together they
/// witness both the CCE property and the no-collapse gap.
pub fn witness_deviations() -> [PolicyFactor; 4] {
    let policy = |s1: usize, s2: usize| PolicyFactor::deterministic(&[vec![s1, s2, 0]], 2, true);
    [policy(0, 0), policy(1, 1), policy(0, 1), policy(1, 0)]
}

/// Verification report for a counterexample: the reference quantities, the
/// witnessed no-collapse gap, and the full exploitability of the marginal.
#[derive(Debug, Clone, Serialize)]
pub struct NoCollapseReport {
    /// Per-player values of sigma at the initial distribution.
    pub sigma_values: Vec<f64>,
    /// Per-player values of the marginal product policy.
    pub marginal_values: Vec<f64>,
    /// Values of the four deterministic deviations of player 0 against
    /// sigma, in the order of [`witness_deviations`].
    pub deviation_values: Vec<f64>,
    /// Certified CCE gap of sigma (exactly zero up to float round-off).
    pub cce_gap: f64,
    /// Improvement of the witness deviation (all second actions)
    /// over the marginal policy: 13/160 finite, 2/15 discounted.
    pub witness_gap: f64,
    /// Full best-response NE gap of the marginal policy; at least
    /// `witness_gap`.
    pub exploitability: f64,
}

fn check(name: &str, actual: f64, expected: f64, tol: f64) -> Result<()> {
    if (actual - expected).abs() > tol {
        return Err(Error::Verification(format!(
            "{name}: got {actual}, expected {expected} (tol {tol})"
        )));
    }
    Ok(())
}

/// Verifies the no-collapse phenomenon on a counterexample: sigma is an
/// exact CCE, yet its marginal product policy is exploitable by at least
/// the witness gap. Every reference value is asserted to 1e-9.
pub fn verify_no_collapse(example: &Counterexample) -> Result<NoCollapseReport> {
    let game = &example.game;
    let finite = game.horizon().is_finite();
    let rho = game.initial_distribution();
    let tol = 1e-9;

    let sigma_policy = Policy::Correlated(example.sigma.clone());
    let sigma_values = evaluate(game, &sigma_policy)?.at_initial(rho);
    let expected_sigma = if finite { 1.0 / 20.0 } else { -0.1 };
    check("V_1(sigma)", sigma_values[0], expected_sigma, tol)?;
    check("V_2(sigma)", sigma_values[1], expected_sigma, tol)?;

    // Deviation values of player 0 against sigma_{-0}.
    let excluded = marginal_excluding(&example.sigma, 0)?;
    let mut deviation_values = Vec::with_capacity(4);
    for factor in witness_deviations() {
        let joint = excluded.compose(&factor)?;
        let v = evaluate(game, &Policy::Correlated(joint))?.at_initial(rho);
        deviation_values.push(v[0]);
    }
    let expected_devs: [f64; 4] = if finite {
        [-7.0 / 40.0, 0.0, -0.2, 1.0 / 20.0]
    } else {
        [-0.4, -1.0 / 6.0, -5.0 / 16.0, -5.0 / 16.0]
    };
    for (i, (&got, &want)) in deviation_values.iter().zip(&expected_devs).enumerate() {
        check(&format!("deviation[{i}]"), got, want, tol)?;
    }

    let sigma_report = gap_report(game, &sigma_policy, tol)?;
    let cce_gap = sigma_report.max_gap;
    if cce_gap > tol {
        return Err(Error::Verification(format!(
            "CCE gap of sigma is {cce_gap}, expected 0"
        )));
    }

    let marginal = example.sigma.marginalize();
    let marginal_policy = Policy::Product(marginal.clone());
    let marginal_values = evaluate(game, &marginal_policy)?.at_initial(rho);
    let expected_marginal = if finite { -13.0 / 160.0 } else { -0.3 };
    check("V_1(marginal)", marginal_values[0], expected_marginal, tol)?;

    // The witness deviation: the second action everywhere.
    let witness = PolicyFactor::deterministic(&[vec![1, 1, 0]], 2, true);
    let witness_policy = Policy::Product(marginal.with_factor(0, witness)?);
    let witness_value = evaluate(game, &witness_policy)?.at_initial(rho)[0];
    let witness_gap = witness_value - marginal_values[0];
    let expected_witness = if finite { 13.0 / 160.0 } else { 2.0 / 15.0 };
    check("witness gap", witness_gap, expected_witness, tol)?;

    let marginal_report = gap_report(game, &marginal_policy, tol)?;
    let exploitability = marginal_report.max_gap;
    if exploitability < witness_gap - tol {
        return Err(Error::Verification(format!(
            "exploitability {exploitability} below witness gap {witness_gap}"
        )));
    }

    Ok(NoCollapseReport {
        sigma_values,
        marginal_values,
        deviation_values,
        cce_gap,
        witness_gap,
        exploitability,
    })
}
