//! Executable certificates for the equilibrium nonlinear programs: evaluate
//! feasibility (constraint slacks, simplex membership, boundary condition)
//! and the objective of the finite-horizon program and its discounted
//! counterpart at a candidate (policy, value-table) point.
//!
//! These are evaluators, not optimizers: the programs are nonconvex and the
//! collapse pipeline supplies the optimum.

use serde::Serialize;

use crate::best_response::{gap_report, induce_mdp};
use crate::error::{Error, Result};
use crate::game::{HorizonSpec, MarkovGame};
use crate::policy::{Policy, ProductPolicy};
use crate::valuation::{evaluate_discounted, evaluate_finite, ValueTable};

/// Absolute tolerance under which a point counts as feasible.
pub const CONSTRAINT_TOL: f64 = 1e-9;

/// Boundary convention for the finite-horizon program: the zero value
/// boundary can live implicitly after the last reward-bearing layer or as
/// an explicit all-zero final layer. Both are exposed; they agree
/// arithmetically once the layer bookkeeping is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundaryConvention {
    /// `w` has one layer per reward-bearing step; the continuation after
    /// the last step is implicitly zero.
    ImplicitZeroAfterLast,
    /// `w` carries an explicit extra final layer that must be identically
    /// zero (checked as part of feasibility).
    ExplicitZeroFinalLayer,
}

/// Feasibility and objective of a program evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    /// `sum_k rho^T (w_{k,1} - V_k^pi)`.
    pub objective: f64,
    /// Largest constraint/simplex/boundary violation found.
    pub max_violation: f64,
    /// Per-player residuals `rho^T (w_{k,1} - V_k^pi)`.
    pub residuals: Vec<f64>,
    pub feasible: bool,
    /// PASS iff feasible and `objective <= threshold`.
    pub pass: bool,
    pub threshold: f64,
}

fn simplex_violation(pi: &ProductPolicy) -> f64 {
    let mut worst = 0.0f64;
    for f in pi.factors() {
        for layer in &f.probs {
            for dist in layer {
                let sum: f64 = dist.iter().sum();
                worst = worst.max((sum - 1.0).abs());
                for &p in dist {
                    worst = worst.max((-p).max(0.0));
                }
            }
        }
    }
    worst
}

/// Evaluates the finite-horizon program at `(pi, w)`: every inequality
/// constraint slack over (s, h, k, a), the boundary condition, simplex
/// membership, and the objective. PASS iff feasible within 1e-9 and the
/// objective is at most `threshold`.
pub fn pne_check_finite(
    game: &MarkovGame,
    pi: &ProductPolicy,
    w: &ValueTable,
    threshold: f64,
    convention: BoundaryConvention,
) -> Result<CertificateReport> {
    if !game.horizon().is_finite() {
        return Err(Error::Domain(
            "pne_check_finite needs a finite horizon".into(),
        ));
    }
    let (n, hn, sn) = (game.players(), game.layer_count(), game.states());
    let expected_layers = match convention {
        BoundaryConvention::ImplicitZeroAfterLast => hn,
        BoundaryConvention::ExplicitZeroFinalLayer => hn + 1,
    };
    if w.players() != n || w.layers() != expected_layers || w.states() != sn {
        return Err(Error::ShapeMismatch(format!(
            "value table is {}x{}x{}, expected {}x{}x{}",
            w.players(),
            w.layers(),
            w.states(),
            n,
            expected_layers,
            sn
        )));
    }
    let policy = Policy::Product(pi.clone());
    policy.check_shape(game)?;

    let mut max_violation = simplex_violation(pi);
    if convention == BoundaryConvention::ExplicitZeroFinalLayer {
        for k in 0..n {
            for s in 0..sn {
                max_violation = max_violation.max(w.at(k, hn, s).abs());
            }
        }
    }

    for k in 0..n {
        let mdp = induce_mdp(game, &policy, k)?;
        for h in 0..hn {
            for s in 0..sn {
                for (a, r) in mdp.rewards[h][s].iter().enumerate() {
                    let cont: f64 = if h + 1 < w.layers() {
                        mdp.transitions[h][s][a]
                            .iter()
                            .enumerate()
                            .map(|(sp, p)| p * w.at(k, h + 1, sp))
                            .sum()
                    } else {
                        0.0
                    };
                    let slack = w.at(k, h, s) - r - cont;
                    max_violation = max_violation.max(-slack);
                }
            }
        }
    }

    let values = evaluate_finite(game, &policy)?;
    let rho = game.initial_distribution();
    let residuals: Vec<f64> = (0..n)
        .map(|k| {
            rho.iter()
                .enumerate()
                .map(|(s, p)| p * (w.at(k, 0, s) - values.at(k, 0, s)))
                .sum()
        })
        .collect();
    let objective = residuals.iter().sum();
    let feasible = max_violation <= CONSTRAINT_TOL;
    Ok(CertificateReport {
        objective,
        max_violation,
        residuals,
        feasible,
        pass: feasible && objective <= threshold,
        threshold,
    })
}

/// Evaluates the discounted program at a stationary `(pi, w)`:
/// `w_k(s) >= r_k(s, a, pi_{-k}) + gamma P(s, a, pi_{-k}) w_k` for all
/// (s, k, a), with the objective computed through the resolvent solve.
pub fn pne_check_discounted(
    game: &MarkovGame,
    pi: &ProductPolicy,
    w: &ValueTable,
    threshold: f64,
) -> Result<CertificateReport> {
    let HorizonSpec::Discounted(gamma) = game.horizon() else {
        return Err(Error::Domain(
            "pne_check_discounted needs a discounted horizon".into(),
        ));
    };
    let (n, sn) = (game.players(), game.states());
    if !pi.stationary() {
        return Err(Error::Domain(
            "pne_check_discounted needs a stationary policy".into(),
        ));
    }
    if w.players() != n || w.layers() != 1 || w.states() != sn {
        return Err(Error::ShapeMismatch(format!(
            "value table is {}x{}x{}, expected {}x1x{}",
            w.players(),
            w.layers(),
            w.states(),
            n,
            sn
        )));
    }
    let policy = Policy::Product(pi.clone());
    policy.check_shape(game)?;

    let mut max_violation = simplex_violation(pi);
    for k in 0..n {
        let mdp = induce_mdp(game, &policy, k)?;
        for s in 0..sn {
            for (a, r) in mdp.rewards[0][s].iter().enumerate() {
                let cont: f64 = mdp.transitions[0][s][a]
                    .iter()
                    .enumerate()
                    .map(|(sp, p)| p * w.at(k, 0, sp))
                    .sum();
                let slack = w.at(k, 0, s) - r - gamma * cont;
                max_violation = max_violation.max(-slack);
            }
        }
    }

    let values = evaluate_discounted(game, &policy)?;
    let rho = game.initial_distribution();
    let residuals: Vec<f64> = (0..n)
        .map(|k| {
            rho.iter()
                .enumerate()
                .map(|(s, p)| p * (w.at(k, 0, s) - values.at(k, 0, s)))
                .sum()
        })
        .collect();
    let objective = residuals.iter().sum();
    let feasible = max_violation <= CONSTRAINT_TOL;
    Ok(CertificateReport {
        objective,
        max_violation,
        residuals,
        feasible,
        pass: feasible && objective <= threshold,
        threshold,
    })
}

/// The converse theorem direction as an executable assertion: a feasible
/// point's objective bounds every player's NE gap.
#[derive(Debug, Clone, Serialize)]
pub struct NeBoundCheck {
    pub objective: f64,
    pub gaps: Vec<f64>,
    /// `objective + 1e-6`.
    pub bound: f64,
    pub holds: bool,
}

/// Asserts the per-player NE gap bound implied by a feasible approximate
/// optimum, cross-checked against exact best responses. Errors on
/// infeasible input.
pub fn optimum_implies_ne(
    report: &CertificateReport,
    game: &MarkovGame,
    pi: &ProductPolicy,
) -> Result<NeBoundCheck> {
    if report.max_violation > CONSTRAINT_TOL {
        return Err(Error::Infeasible(format!(
            "max violation {} above {CONSTRAINT_TOL}",
            report.max_violation
        )));
    }
    let gaps_report = gap_report(game, &Policy::Product(pi.clone()), CONSTRAINT_TOL)?;
    let gaps: Vec<f64> = gaps_report.per_player.iter().map(|g| g.gap).collect();
    let bound = report.objective + 1e-6;
    let holds = gaps.iter().all(|&g| g <= bound);
    Ok(NeBoundCheck {
        objective: report.objective,
        gaps,
        bound,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::best_response::best_response_table;
    use crate::game::{EdgeGame, StateInteraction, TransitionControl};
    use crate::policy::ProductPolicy;

    fn pennies() -> MarkovGame {
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
        MarkovGame::new(
            vec![2, 2],
            HorizonSpec::Finite(1),
            vec![vec![si]],
            vec![1.0],
        )
        .unwrap()
    }

    #[test]
    fn exact_ne_scores_zero_objective() {
        let game = pennies();
        let pi = ProductPolicy::uniform(&game);
        let w = best_response_table(&game, &Policy::Product(pi.clone()), 1e-9).unwrap();
        let report = pne_check_finite(
            &game,
            &pi,
            &w,
            1e-6,
            BoundaryConvention::ImplicitZeroAfterLast,
        )
        .unwrap();
        assert!(report.feasible, "violation {}", report.max_violation);
        assert!(report.objective.abs() < 1e-12);
        assert!(report.pass);
        let check = optimum_implies_ne(&report, &game, &pi).unwrap();
        assert!(check.holds);
    }

    #[test]
    fn inflated_values_shift_objective_additively() {
        let game = pennies();
        let pi = ProductPolicy::uniform(&game);
        let mut w = best_response_table(&game, &Policy::Product(pi.clone()), 1e-9).unwrap();
        for k in 0..2 {
            for s in 0..1 {
                w.values[k][0][s] += 1.0;
            }
        }
        let report = pne_check_finite(
            &game,
            &pi,
            &w,
            10.0,
            BoundaryConvention::ImplicitZeroAfterLast,
        )
        .unwrap();
        assert!(report.feasible);
        assert!((report.objective - 2.0).abs() < 1e-12);
    }

    #[test]
    fn violated_constraint_is_measured() {
        let game = pennies();
        let pi = ProductPolicy::uniform(&game);
        let mut w = best_response_table(&game, &Policy::Product(pi.clone()), 1e-9).unwrap();
        w.values[0][0][0] -= 0.1;
        let report = pne_check_finite(
            &game,
            &pi,
            &w,
            1.0,
            BoundaryConvention::ImplicitZeroAfterLast,
        )
        .unwrap();
        assert!(!report.feasible);
        assert!((report.max_violation - 0.1).abs() < 1e-12);
        assert!(optimum_implies_ne(&report, &game, &pi).is_err());
    }

    #[test]
    fn explicit_boundary_layer_must_be_zero() {
        let game = pennies();
        let pi = ProductPolicy::uniform(&game);
        let base = best_response_table(&game, &Policy::Product(pi.clone()), 1e-9).unwrap();
        let mut w = ValueTable::zeros(2, 2, 1);
        for k in 0..2 {
            w.values[k][0] = base.values[k][0].clone();
        }
        let ok = pne_check_finite(
            &game,
            &pi,
            &w,
            1e-6,
            BoundaryConvention::ExplicitZeroFinalLayer,
        )
        .unwrap();
        assert!(ok.feasible);
        w.values[0][1][0] = 0.5;
        let bad = pne_check_finite(
            &game,
            &pi,
            &w,
            1e-6,
            BoundaryConvention::ExplicitZeroFinalLayer,
        )
        .unwrap();
        assert!(!bad.feasible);
    }
}
