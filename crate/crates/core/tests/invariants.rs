//! Cross-module invariants on randomized instances: marginal-equivalence of
//! best responses, representation independence of gap reports, truncation
//! error bounds, refinement monotonicity, and dual-route objectives.

#![allow(clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pmg_core::best_response::{best_response_discounted, best_response_table, gap_report};
use pmg_core::certificate::pne_check_discounted;
use pmg_core::game::{HorizonSpec, MarkovGame};
use pmg_core::generator::{generate, GeneratorConfig};
use pmg_core::policy::{
    enumerate_deterministic, marginal_excluding, CorrelatedPolicy, Policy, ProductPolicy,
};
use pmg_core::solver::{effective_horizon, solve_finite, truncate_discounted};
use pmg_core::stage::{build_stage, solve_stage, StageSolveConfig};
use pmg_core::valuation::{evaluate, evaluate_discounted, evaluate_finite};

fn random_correlated(
    game: &MarkovGame,
    rng: &mut ChaCha8Rng,
    stationary: bool,
) -> CorrelatedPolicy {
    let total: usize = game.action_counts().iter().product();
    let layers = if stationary { 1 } else { game.layer_count() };
    let table = (0..layers)
        .map(|_| {
            (0..game.states())
                .map(|_| {
                    let raw: Vec<f64> = (0..total).map(|_| rng.gen_range(0.02..1.0)).collect();
                    let sum: f64 = raw.iter().sum();
                    raw.into_iter().map(|x| x / sum).collect()
                })
                .collect()
        })
        .collect();
    CorrelatedPolicy::new(table, game.action_counts().to_vec(), stationary).unwrap()
}

fn random_game(seed: u64, horizon: HorizonSpec) -> MarkovGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let players = rng.gen_range(2..=3usize);
    let mut cfg = GeneratorConfig::new(
        (0..players).map(|_| rng.gen_range(1..=3)).collect(),
        rng.gen_range(1..=4),
        horizon,
    );
    cfg.density = 0.8;
    cfg.seed = rng.gen();
    generate(&cfg).unwrap()
}

/// Under zero-sum polymatrix switching control, deviating against a
/// correlated policy and against its marginals yields identical values:
/// rewards see only pairwise marginals, transitions only the controller's.
#[test]
fn deviation_values_match_against_correlated_and_marginal() {
    for seed in 0..8u64 {
        let game = random_game(seed, HorizonSpec::Finite(3));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC1A1);
        let sigma = random_correlated(&game, &mut rng, false);
        let marginal = sigma.marginalize();
        for k in 0..game.players() {
            for factor in enumerate_deterministic(&game, k)
                .unwrap()
                .into_iter()
                .take(6)
            {
                let vs_sigma = marginal_excluding(&sigma, k)
                    .unwrap()
                    .compose(&factor)
                    .unwrap();
                let a = evaluate_finite(&game, &Policy::Correlated(vs_sigma))
                    .unwrap()
                    .at_initial(game.initial_distribution())[k];
                let vs_marginal = marginal.with_factor(k, factor).unwrap();
                let b = evaluate_finite(&game, &Policy::Product(vs_marginal))
                    .unwrap()
                    .at_initial(game.initial_distribution())[k];
                assert!((a - b).abs() < 1e-9, "seed {seed} player {k}: {a} vs {b}");
            }
        }
    }
}

/// Gap reports are representation-independent: a product policy and its
/// dense correlated lift certify identical gaps.
#[test]
fn gap_report_is_representation_independent() {
    for seed in 0..6u64 {
        let game = random_game(seed, HorizonSpec::Finite(2));
        let report = solve_finite(&game, 5e-2, seed).unwrap();
        let product = Policy::Product(report.policy.clone());
        let lifted = Policy::Correlated(report.policy.lift().unwrap());
        let a = gap_report(&game, &product, 1e-9).unwrap();
        let b = gap_report(&game, &lifted, 1e-9).unwrap();
        for (x, y) in a.per_player.iter().zip(&b.per_player) {
            assert!((x.gap - y.gap).abs() < 1e-12);
            assert!((x.best_response - y.best_response).abs() < 1e-12);
        }
    }
}

/// Truncating a discounted game at the effective horizon with scaled
/// rewards reproduces the discounted value within 2n gamma^H / (1-gamma).
#[test]
fn truncation_agrees_with_discounted_evaluation() {
    for seed in 0..6u64 {
        let gamma = 0.6 + 0.05 * seed as f64;
        let game = random_game(seed, HorizonSpec::Discounted(gamma));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7A11);
        let sigma = random_correlated(&game, &mut rng, true);
        let horizon = effective_horizon(gamma, 1e-6).unwrap();
        let truncated = truncate_discounted(&game, horizon).unwrap();
        let exact = evaluate_discounted(&game, &Policy::Correlated(sigma.clone()))
            .unwrap()
            .at_initial(game.initial_distribution());
        let approx = evaluate_finite(&truncated, &Policy::Correlated(sigma))
            .unwrap()
            .at_initial(game.initial_distribution());
        let slack = 2.0 * game.players() as f64 * gamma.powi(horizon as i32) / (1.0 - gamma);
        for k in 0..game.players() {
            assert!(
                (exact[k] - approx[k]).abs() <= slack,
                "seed {seed} player {k}: {} vs {} (slack {slack:.2e})",
                exact[k],
                approx[k]
            );
        }
    }
}

/// Halving eps never increases the certified gap (same seed; a 1e-12
/// float guard absorbs round-off at already-exact solutions).
#[test]
fn refinement_is_monotone() {
    for seed in 0..8u64 {
        let game = random_game(seed, HorizonSpec::Finite(3));
        let coarse = solve_finite(&game, 2e-2, seed).unwrap().certified.max_gap;
        let fine = solve_finite(&game, 1e-2, seed).unwrap().certified.max_gap;
        assert!(
            fine <= coarse + 1e-12,
            "seed {seed}: gap grew from {coarse:.3e} to {fine:.3e}"
        );
    }
}

/// The averaged profile's certified gap is bounded by the sum of the
/// players' average external regrets, per run.
#[test]
fn stage_gap_bounded_by_regret_sum() {
    for seed in 0..10u64 {
        let game = random_game(seed, HorizonSpec::Finite(1));
        let zeros = vec![vec![0.0; game.states()]; game.players()];
        for s in 0..game.states() {
            let stage = build_stage(&game, 0, s, &zeros).unwrap();
            let sol = solve_stage(&stage, &StageSolveConfig::new(1e-4, 30_000, seed)).unwrap();
            assert!(
                sol.average_gap <= sol.regret_bound + 1e-9,
                "seed {seed} state {s}: gap {:.3e} > regret bound {:.3e}",
                sol.average_gap,
                sol.regret_bound
            );
        }
    }
}

/// Discounted best responses match exhaustive enumeration over stationary
/// deterministic policies.
#[test]
fn discounted_best_response_matches_enumeration() {
    for seed in 0..5u64 {
        let game = random_game(seed, HorizonSpec::Discounted(0.7));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD15C);
        let sigma = random_correlated(&game, &mut rng, true);
        let tol = 1e-10;
        for k in 0..game.players() {
            let br = best_response_discounted(&game, &Policy::Correlated(sigma.clone()), k, tol)
                .unwrap();
            let br_at_rho: f64 = br.values[0]
                .iter()
                .zip(game.initial_distribution())
                .map(|(v, p)| v * p)
                .sum();
            let excluded = marginal_excluding(&sigma, k).unwrap();
            let mut best = f64::NEG_INFINITY;
            for factor in enumerate_deterministic(&game, k).unwrap() {
                let joint = excluded.compose(&factor).unwrap();
                let v = evaluate_discounted(&game, &Policy::Correlated(joint))
                    .unwrap()
                    .at_initial(game.initial_distribution())[k];
                best = best.max(v);
            }
            assert!(
                (br_at_rho - best).abs() <= tol.max(1e-9),
                "seed {seed} player {k}: {br_at_rho} vs {best}"
            );
        }
    }
}

/// The discounted certificate objective (resolvent route) agrees with a
/// long Bellman recursion to 1e-9.
#[test]
fn certificate_objective_agrees_across_routes() {
    for seed in 0..4u64 {
        let gamma = 0.65;
        let game = random_game(seed, HorizonSpec::Discounted(gamma));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0B7);
        let pi = {
            let factors = (0..game.players())
                .map(|k| {
                    let c = game.action_counts()[k];
                    let probs = vec![(0..game.states())
                        .map(|_| {
                            let raw: Vec<f64> = (0..c).map(|_| rng.gen_range(0.05..1.0)).collect();
                            let sum: f64 = raw.iter().sum();
                            raw.into_iter().map(|x| x / sum).collect()
                        })
                        .collect()];
                    pmg_core::policy::PolicyFactor::new(probs, true).unwrap()
                })
                .collect();
            ProductPolicy::new(factors).unwrap()
        };
        let w = best_response_table(&game, &Policy::Product(pi.clone()), 1e-10).unwrap();
        let cert = pne_check_discounted(&game, &pi, &w, f64::INFINITY).unwrap();

        // Independent route: iterate the Bellman operator of pi to 1e-13.
        let horizon = effective_horizon(gamma, 1e-13).unwrap();
        let truncated = truncate_discounted(&game, horizon).unwrap();
        let direct = evaluate_finite(&truncated, &Policy::Product(pi.clone()))
            .unwrap()
            .at_initial(game.initial_distribution());
        let rho = game.initial_distribution();
        let objective_direct: f64 = (0..game.players())
            .map(|k| {
                let w_at_rho: f64 = w.values[k][0].iter().zip(rho).map(|(v, p)| v * p).sum();
                w_at_rho - direct[k]
            })
            .sum();
        assert!(
            (cert.objective - objective_direct).abs() < 1e-9,
            "seed {seed}: {} vs {objective_direct}",
            cert.objective
        );
    }
}

/// Both switching-control counterexample variants solve to certified gaps.
#[test]
fn switching_variants_solve_within_eps() {
    use pmg_core::counterexamples::{finite_switching_variant, infinite_switching_variant};
    use pmg_core::solver::solve_discounted;
    let report = solve_finite(&finite_switching_variant(), 1e-2, 0).unwrap();
    assert!(
        report.certified.max_gap <= 1e-2,
        "{}",
        report.certified.max_gap
    );
    let report = solve_discounted(&infinite_switching_variant(), 1e-2, 0).unwrap();
    assert!(
        report.certified.max_gap <= 1e-2,
        "{}",
        report.certified.max_gap
    );
}

/// On a two-player zero-sum finite game, the solved value is sandwiched by
/// the exhaustive deterministic-policy minimax bounds within eps.
#[test]
fn two_player_value_within_deterministic_minimax_bounds() {
    for seed in 0..4u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cfg = GeneratorConfig::new(vec![2, 2], 2, HorizonSpec::Finite(2));
        cfg.density = 1.0;
        cfg.seed = rng.gen();
        let game = generate(&cfg).unwrap();
        let eps = 1e-3;
        let report = solve_finite(&game, eps, seed).unwrap();
        let solved = report.certified.per_player[0].current;

        let dets0 = enumerate_deterministic(&game, 0).unwrap();
        let dets1 = enumerate_deterministic(&game, 1).unwrap();
        let value = |f0: &pmg_core::policy::PolicyFactor, f1: &pmg_core::policy::PolicyFactor| {
            let p = ProductPolicy::new(vec![f0.clone(), f1.clone()]).unwrap();
            evaluate_finite(&game, &Policy::Product(p))
                .unwrap()
                .at_initial(game.initial_distribution())[0]
        };
        let lower = dets0
            .iter()
            .map(|f0| {
                dets1
                    .iter()
                    .map(|f1| value(f0, f1))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let upper = dets1
            .iter()
            .map(|f1| {
                dets0
                    .iter()
                    .map(|f0| value(f0, f1))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(
            solved >= lower - eps && solved <= upper + eps,
            "seed {seed}: value {solved} outside [{lower}, {upper}] +- {eps}"
        );
    }
}

/// Rewards stay within the polymatrix bound (n-1 edges, each in [-1, 1])
/// and sum to zero, exhaustively on small generated games.
#[test]
fn reward_bounds_and_zero_sum_exhaustive() {
    for seed in 0..6u64 {
        let game = random_game(seed, HorizonSpec::Finite(2));
        let bound = (game.players() - 1) as f64 + 1e-12;
        let total: usize = game.action_counts().iter().product();
        for h in 0..game.layer_count() {
            for s in 0..game.states() {
                for idx in 0..total {
                    let joint = game.joint().decode(idx);
                    let mut sum = 0.0;
                    for k in 0..game.players() {
                        let r = game.reward(h, s, k, &joint).unwrap();
                        assert!(r.abs() <= bound);
                        sum += r;
                    }
                    assert!(sum.abs() < 1e-9);
                }
            }
        }
    }
}

/// Values of any joint policy sum to zero across players at every node.
#[test]
fn values_sum_to_zero_under_any_policy() {
    for seed in 0..6u64 {
        let game = random_game(seed, HorizonSpec::Finite(3));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
        let sigma = random_correlated(&game, &mut rng, false);
        let table = evaluate(&game, &Policy::Correlated(sigma)).unwrap();
        for h in 0..game.layer_count() {
            for s in 0..game.states() {
                let total: f64 = (0..game.players()).map(|k| table.at(k, h, s)).sum();
                assert!(total.abs() < 1e-9, "seed {seed} h={h} s={s}: {total:.2e}");
            }
        }
    }
}

/// Stage games rebuilt from a policy's own continuation values reproduce
/// that policy's value recursion: stage_values at (h, s) equal V_{k,h}(s).
#[test]
fn stage_values_reproduce_the_value_recursion() {
    use pmg_core::counterexamples::finite_switching_variant;
    let game = finite_switching_variant();
    let mut rng = ChaCha8Rng::seed_from_u64(0xBEE);
    let raw: Vec<Vec<f64>> = (0..3)
        .map(|k| {
            let c = game.action_counts()[k];
            let v: Vec<f64> = (0..c).map(|_| rng.gen_range(0.1..1.0)).collect();
            let t: f64 = v.iter().sum();
            v.into_iter().map(|x| x / t).collect()
        })
        .collect();
    let factors = raw
        .iter()
        .map(|dist| {
            pmg_core::policy::PolicyFactor::new(
                vec![vec![dist.clone(); game.states()]; game.layer_count()],
                false,
            )
            .unwrap()
        })
        .collect::<Vec<_>>();
    let pi = ProductPolicy::new(factors).unwrap();
    let table = evaluate_finite(&game, &Policy::Product(pi.clone())).unwrap();

    let continuation: Vec<Vec<f64>> = (0..game.players())
        .map(|k| table.values[k][1].clone())
        .collect();
    for s in 0..game.states() {
        let stage = build_stage(&game, 0, s, &continuation).unwrap();
        let profile: Vec<Vec<f64>> = (0..game.players())
            .map(|k| pi.factor(k).dist(0, s).to_vec())
            .collect();
        let values = stage.stage_values(&profile);
        for k in 0..game.players() {
            assert!(
                (values[k] - table.at(k, 0, s)).abs() < 1e-12,
                "state {s} player {k}: {} vs {}",
                values[k],
                table.at(k, 0, s)
            );
        }
    }
}

/// A discounted game with no edges has zero rewards and a zero gap under
/// any policy the solver returns.
#[test]
fn zero_reward_discounted_game_solves_to_zero_gap() {
    let mut cfg = GeneratorConfig::new(vec![2, 2], 3, HorizonSpec::Discounted(0.5));
    cfg.density = 0.0;
    cfg.seed = 1;
    let game = generate(&cfg).unwrap();
    let report = pmg_core::solver::solve_discounted(&game, 1e-3, 0).unwrap();
    assert!(report.certified.max_gap <= 1e-12);
}

/// Monte-Carlo estimates land within 3 standard errors of the exact values
/// in at least 99% of seeded trials. One trial is one seeded game (player
/// returns inside one game are correlated through the zero-sum coupling).
#[test]
fn monte_carlo_three_sigma_coverage() {
    use pmg_core::valuation::monte_carlo_value;
    let trials = 100u64;
    let mut hits = 0usize;
    for seed in 0..trials {
        let discounted = seed % 2 == 1;
        let horizon = if discounted {
            HorizonSpec::Discounted(0.5 + 0.004 * seed as f64)
        } else {
            HorizonSpec::Finite(1 + (seed as usize % 4))
        };
        let game = random_game(seed ^ 0x3516, horizon);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xCAFE);
        let sigma = random_correlated(&game, &mut rng, !game.horizon().is_finite());
        let policy = Policy::Correlated(sigma);
        let exact = evaluate(&game, &policy)
            .unwrap()
            .at_initial(game.initial_distribution());
        let mc = monte_carlo_value(&game, &policy, 10_000, seed).unwrap();
        let all_within = (0..game.players()).all(|k| {
            (mc.mean[k] - exact[k]).abs() <= 3.0 * mc.std_error[k] + mc.truncation_bias + 1e-9
        });
        if all_within {
            hits += 1;
        }
    }
    assert!(
        hits as u64 * 100 >= trials * 99,
        "{hits}/{trials} games within 3 standard errors"
    );
}

/// Near-nonnegativity: any point's objective is bounded below by
/// -(max violation) * H * n.
#[test]
fn objective_bounded_by_infeasibility_slack() {
    use pmg_core::certificate::{pne_check_finite, BoundaryConvention};
    for seed in 0..6u64 {
        let game = random_game(seed, HorizonSpec::Finite(3));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0BB);
        let factors = (0..game.players())
            .map(|k| {
                let c = game.action_counts()[k];
                let probs = (0..game.layer_count())
                    .map(|_| {
                        (0..game.states())
                            .map(|_| {
                                let raw: Vec<f64> =
                                    (0..c).map(|_| rng.gen_range(0.05..1.0)).collect();
                                let t: f64 = raw.iter().sum();
                                raw.into_iter().map(|x| x / t).collect()
                            })
                            .collect()
                    })
                    .collect();
                pmg_core::policy::PolicyFactor::new(probs, false).unwrap()
            })
            .collect::<Vec<_>>();
        let pi = ProductPolicy::new(factors).unwrap();
        let mut w = best_response_table(&game, &Policy::Product(pi.clone()), 1e-10).unwrap();
        for k in 0..game.players() {
            for h in 0..game.layer_count() {
                for s in 0..game.states() {
                    w.values[k][h][s] -= rng.gen_range(0.0..0.2);
                }
            }
        }
        let cert = pne_check_finite(
            &game,
            &pi,
            &w,
            f64::INFINITY,
            BoundaryConvention::ImplicitZeroAfterLast,
        )
        .unwrap();
        let floor = -cert.max_violation * game.layer_count() as f64 * game.players() as f64 - 1e-9;
        assert!(
            cert.objective >= floor,
            "seed {seed}: objective {} below floor {floor}",
            cert.objective
        );
    }
}
