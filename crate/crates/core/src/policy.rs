//! Product and correlated Markov policies, marginalization (the collapse
//! map), and deterministic-policy enumeration.
//!
//! Correlated policies are stored densely (one vector over the joint action
//! set per state), which caps the per-state joint space at
//! [`DENSE_JOINT_BUDGET`]. Stationary policies keep a single timestep layer
//! with an explicit flag; nonstationary policies store one layer per step.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{ActionId, JointIndexer, MarkovGame, PlayerId, StateId, TransitionControl};

/// Tolerance for distribution sums.
pub const DIST_TOL: f64 = 1e-12;
/// Capacity limit for dense joint-action vectors per state.
pub const DENSE_JOINT_BUDGET: u128 = 1_000_000;
/// Budget for deterministic-policy enumeration.
pub const ENUMERATION_BUDGET: u128 = 1_000_000;

fn check_distribution(v: &[f64], path: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::ShapeMismatch(format!("{path}: empty distribution")));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > DIST_TOL {
        return Err(Error::Structural(format!(
            "{path}: distribution sums to {sum}, expected 1"
        )));
    }
    if v.iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return Err(Error::Structural(format!(
            "{path}: negative or non-finite entry"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Single-player factor
// ---------------------------------------------------------------------------

/// One player's Markov policy: `probs[h][s]` is a distribution over that
/// player's actions. Stationary factors store a single layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyFactor {
    pub probs: Vec<Vec<Vec<f64>>>,
    pub stationary: bool,
}

impl PolicyFactor {
    pub fn new(probs: Vec<Vec<Vec<f64>>>, stationary: bool) -> Result<Self> {
        if probs.is_empty() || (stationary && probs.len() != 1) {
            return Err(Error::ShapeMismatch(
                "factor needs one layer when stationary, at least one otherwise".into(),
            ));
        }
        for (h, layer) in probs.iter().enumerate() {
            for (s, dist) in layer.iter().enumerate() {
                check_distribution(dist, &format!("factor[{h}][{s}]"))?;
            }
        }
        Ok(Self { probs, stationary })
    }

    /// Deterministic factor from one action per `(h, s)`.
    pub fn deterministic(actions: &[Vec<ActionId>], action_count: usize, stationary: bool) -> Self {
        let probs = actions
            .iter()
            .map(|layer| {
                layer
                    .iter()
                    .map(|&a| {
                        let mut row = vec![0.0; action_count];
                        row[a] = 1.0;
                        row
                    })
                    .collect()
            })
            .collect();
        Self { probs, stationary }
    }

    fn layer(&self, h: usize) -> usize {
        if self.stationary {
            0
        } else {
            h
        }
    }

    pub fn dist(&self, h: usize, s: StateId) -> &[f64] {
        &self.probs[self.layer(h)][s]
    }

    pub fn layer_count(&self) -> usize {
        self.probs.len()
    }

    pub fn states(&self) -> usize {
        self.probs[0].len()
    }

    pub fn action_count(&self) -> usize {
        self.probs[0][0].len()
    }
}

// ---------------------------------------------------------------------------
// Product policy
// ---------------------------------------------------------------------------

/// Independent per-player policy: the product of one factor per player.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductPolicy {
    factors: Vec<PolicyFactor>,
}

impl ProductPolicy {
    pub fn new(factors: Vec<PolicyFactor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::ShapeMismatch("product policy needs players".into()));
        }
        let layers = factors[0].layer_count();
        let states = factors[0].states();
        let stationary = factors[0].stationary;
        for (k, f) in factors.iter().enumerate() {
            if f.layer_count() != layers || f.states() != states || f.stationary != stationary {
                return Err(Error::ShapeMismatch(format!(
                    "factor {k} disagrees in layers/states/stationarity"
                )));
            }
        }
        Ok(Self { factors })
    }

    /// Uniform policy matching the game's shape (finite: H layers;
    /// discounted: stationary).
    pub fn uniform(game: &MarkovGame) -> Self {
        let stationary = !game.horizon().is_finite();
        let layers = game.layer_count();
        let factors = game
            .action_counts()
            .iter()
            .map(|&c| PolicyFactor {
                probs: vec![vec![vec![1.0 / c as f64; c]; game.states()]; layers],
                stationary,
            })
            .collect();
        Self { factors }
    }

    pub fn factors(&self) -> &[PolicyFactor] {
        &self.factors
    }

    pub fn factor(&self, k: PlayerId) -> &PolicyFactor {
        &self.factors[k]
    }

    pub fn players(&self) -> usize {
        self.factors.len()
    }

    pub fn states(&self) -> usize {
        self.factors[0].states()
    }

    pub fn layer_count(&self) -> usize {
        self.factors[0].layer_count()
    }

    pub fn stationary(&self) -> bool {
        self.factors[0].stationary
    }

    /// Replaces player `k`'s factor (used to evaluate unilateral deviations).
    pub fn with_factor(&self, k: PlayerId, factor: PolicyFactor) -> Result<Self> {
        let mut factors = self.factors.clone();
        if k >= factors.len() {
            return Err(Error::IndexOutOfRange(format!("player {k}")));
        }
        factors[k] = factor;
        Self::new(factors)
    }

    /// Lifts to an explicit correlated policy over the joint action set.
    pub fn lift(&self) -> Result<CorrelatedPolicy> {
        let counts: Vec<usize> = self.factors.iter().map(|f| f.action_count()).collect();
        if JointIndexer::total_wide(&counts) > DENSE_JOINT_BUDGET {
            return Err(Error::CapacityExceeded(format!(
                "joint action space above {DENSE_JOINT_BUDGET}"
            )));
        }
        let indexer = JointIndexer::new(&counts);
        let table = (0..self.layer_count())
            .map(|h| {
                (0..self.states())
                    .map(|s| {
                        (0..indexer.total())
                            .map(|idx| {
                                self.factors
                                    .iter()
                                    .enumerate()
                                    .map(|(k, f)| f.dist(h, s)[indexer.action_of(idx, k)])
                                    .product()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        CorrelatedPolicy::new(table, counts, self.stationary())
    }
}

// ---------------------------------------------------------------------------
// Correlated policy
// ---------------------------------------------------------------------------

/// Correlated Markov policy: `table[h][s]` is a dense distribution over the
/// joint action set (last player fastest).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelatedPolicy {
    table: Vec<Vec<Vec<f64>>>,
    action_counts: Vec<usize>,
    stationary: bool,
    #[serde(skip)]
    indexer: JointIndexer,
}

impl CorrelatedPolicy {
    pub fn new(
        table: Vec<Vec<Vec<f64>>>,
        action_counts: Vec<usize>,
        stationary: bool,
    ) -> Result<Self> {
        if JointIndexer::total_wide(&action_counts) > DENSE_JOINT_BUDGET {
            return Err(Error::CapacityExceeded(format!(
                "joint action space above {DENSE_JOINT_BUDGET}"
            )));
        }
        let indexer = JointIndexer::new(&action_counts);
        if table.is_empty() || (stationary && table.len() != 1) {
            return Err(Error::ShapeMismatch(
                "correlated policy needs one layer when stationary".into(),
            ));
        }
        for (h, layer) in table.iter().enumerate() {
            for (s, dist) in layer.iter().enumerate() {
                if dist.len() != indexer.total() {
                    return Err(Error::ShapeMismatch(format!(
                        "sigma[{h}][{s}] has {} entries, expected {}",
                        dist.len(),
                        indexer.total()
                    )));
                }
                check_distribution(dist, &format!("sigma[{h}][{s}]"))?;
            }
        }
        Ok(Self {
            table,
            action_counts,
            stationary,
            indexer,
        })
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn indexer(&self) -> &JointIndexer {
        &self.indexer
    }

    pub fn stationary(&self) -> bool {
        self.stationary
    }

    pub fn layer_count(&self) -> usize {
        self.table.len()
    }

    pub fn states(&self) -> usize {
        self.table[0].len()
    }

    fn layer(&self, h: usize) -> usize {
        if self.stationary {
            0
        } else {
            h
        }
    }

    pub fn dist(&self, h: usize, s: StateId) -> &[f64] {
        &self.table[self.layer(h)][s]
    }

    /// Per-player marginals: the collapse map.
    pub fn marginalize(&self) -> ProductPolicy {
        let n = self.action_counts.len();
        let factors = (0..n)
            .map(|k| PolicyFactor {
                probs: self
                    .table
                    .iter()
                    .map(|layer| {
                        layer
                            .iter()
                            .map(|dist| {
                                let mut m = vec![0.0; self.action_counts[k]];
                                for (idx, &p) in dist.iter().enumerate() {
                                    m[self.indexer.action_of(idx, k)] += p;
                                }
                                m
                            })
                            .collect()
                    })
                    .collect(),
                stationary: self.stationary,
            })
            .collect();
        ProductPolicy { factors }
    }
}

/// Per-`(h, s)` distribution over the joint actions of everyone but one
/// player, in player order with the excluded coordinate removed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcludedMarginal {
    pub excluded: PlayerId,
    pub table: Vec<Vec<Vec<f64>>>,
    pub action_counts: Vec<usize>,
    pub stationary: bool,
    indexer: JointIndexer,
}

impl ExcludedMarginal {
    pub fn indexer(&self) -> &JointIndexer {
        &self.indexer
    }

    pub fn dist(&self, h: usize, s: StateId) -> &[f64] {
        let layer = if self.stationary { 0 } else { h };
        &self.table[layer][s]
    }

    /// Full correlated policy where the excluded player plays `factor`
    /// independently of everyone else.
    pub fn compose(&self, factor: &PolicyFactor) -> Result<CorrelatedPolicy> {
        let mut counts = self.action_counts.clone();
        counts.insert(self.excluded, factor.action_count());
        let full = JointIndexer::new(&counts);
        let layers = self.table.len().max(factor.layer_count());
        let stationary = self.stationary && factor.stationary;
        let states = self.table[0].len();
        let table = (0..layers)
            .map(|h| {
                (0..states)
                    .map(|s| {
                        let own = factor.dist(h, s);
                        let rest = self.dist(h, s);
                        (0..full.total())
                            .map(|idx| {
                                let a_k = full.action_of(idx, self.excluded);
                                let mut rest_joint = Vec::with_capacity(self.action_counts.len());
                                for (j, _) in counts.iter().enumerate() {
                                    if j != self.excluded {
                                        rest_joint.push(full.action_of(idx, j));
                                    }
                                }
                                own[a_k] * rest[self.indexer.index(&rest_joint)]
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        CorrelatedPolicy::new(table, counts, stationary)
    }
}

/// Marginal joint policy of everyone but player `k`.
pub fn marginal_excluding(sigma: &CorrelatedPolicy, k: PlayerId) -> Result<ExcludedMarginal> {
    let n = sigma.action_counts.len();
    if k >= n {
        return Err(Error::IndexOutOfRange(format!("player {k} of {n}")));
    }
    let rest_counts: Vec<usize> = sigma
        .action_counts
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != k)
        .map(|(_, &c)| c)
        .collect();
    let rest = JointIndexer::new(&rest_counts);
    let table = sigma
        .table
        .iter()
        .map(|layer| {
            layer
                .iter()
                .map(|dist| {
                    let mut out = vec![0.0; rest.total()];
                    for (idx, &p) in dist.iter().enumerate() {
                        let mut rest_joint = Vec::with_capacity(n - 1);
                        for j in 0..n {
                            if j != k {
                                rest_joint.push(sigma.indexer.action_of(idx, j));
                            }
                        }
                        out[rest.index(&rest_joint)] += p;
                    }
                    out
                })
                .collect()
        })
        .collect();
    Ok(ExcludedMarginal {
        excluded: k,
        table,
        action_counts: rest_counts,
        stationary: sigma.stationary,
        indexer: rest,
    })
}

// ---------------------------------------------------------------------------
// Unified policy view
// ---------------------------------------------------------------------------

/// Either a product or a correlated joint policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Policy {
    Product(ProductPolicy),
    Correlated(CorrelatedPolicy),
}

impl From<ProductPolicy> for Policy {
    fn from(p: ProductPolicy) -> Self {
        Policy::Product(p)
    }
}

impl From<CorrelatedPolicy> for Policy {
    fn from(c: CorrelatedPolicy) -> Self {
        Policy::Correlated(c)
    }
}

impl Policy {
    pub fn stationary(&self) -> bool {
        match self {
            Policy::Product(p) => p.stationary(),
            Policy::Correlated(c) => c.stationary(),
        }
    }

    pub fn layer_count(&self) -> usize {
        match self {
            Policy::Product(p) => p.layer_count(),
            Policy::Correlated(c) => c.layer_count(),
        }
    }

    pub fn states(&self) -> usize {
        match self {
            Policy::Product(p) => p.states(),
            Policy::Correlated(c) => c.states(),
        }
    }

    pub fn players(&self) -> usize {
        match self {
            Policy::Product(p) => p.players(),
            Policy::Correlated(c) => c.action_counts().len(),
        }
    }

    /// Checks that the policy fits the game's shape: per-player action
    /// counts, state count, and enough layers for the game's horizon.
    pub fn check_shape(&self, game: &MarkovGame) -> Result<()> {
        if self.players() != game.players() || self.states() != game.states() {
            return Err(Error::ShapeMismatch(format!(
                "policy is for {} players / {} states, game has {} / {}",
                self.players(),
                self.states(),
                game.players(),
                game.states()
            )));
        }
        let counts: Vec<usize> = match self {
            Policy::Product(p) => p.factors().iter().map(|f| f.action_count()).collect(),
            Policy::Correlated(c) => c.action_counts().to_vec(),
        };
        if counts != game.action_counts() {
            return Err(Error::ShapeMismatch(format!(
                "policy action counts {counts:?} do not match game {:?}",
                game.action_counts()
            )));
        }
        if !self.stationary()
            && game.horizon().is_finite()
            && self.layer_count() < game.layer_count()
        {
            return Err(Error::ShapeMismatch(format!(
                "policy has {} layers, game horizon needs {}",
                self.layer_count(),
                game.layer_count()
            )));
        }
        Ok(())
    }

    /// Marginal distribution of player `k`'s action at `(h, s)`.
    pub fn marginal(&self, h: usize, s: StateId, k: PlayerId) -> Vec<f64> {
        match self {
            Policy::Product(p) => p.factor(k).dist(h, s).to_vec(),
            Policy::Correlated(c) => {
                let dist = c.dist(h, s);
                let mut m = vec![0.0; c.action_counts()[k]];
                for (idx, &p) in dist.iter().enumerate() {
                    m[c.indexer().action_of(idx, k)] += p;
                }
                m
            }
        }
    }

    /// Joint marginal of players `i` and `j`, flattened `a_i * |A_j| + a_j`.
    pub fn pair_marginal(&self, h: usize, s: StateId, i: PlayerId, j: PlayerId) -> Vec<f64> {
        match self {
            Policy::Product(p) => {
                let xi = p.factor(i).dist(h, s);
                let xj = p.factor(j).dist(h, s);
                let mut out = Vec::with_capacity(xi.len() * xj.len());
                for &a in xi {
                    for &b in xj {
                        out.push(a * b);
                    }
                }
                out
            }
            Policy::Correlated(c) => {
                let dist = c.dist(h, s);
                let cj = c.action_counts()[j];
                let mut out = vec![0.0; c.action_counts()[i] * cj];
                for (idx, &p) in dist.iter().enumerate() {
                    let a = c.indexer().action_of(idx, i);
                    let b = c.indexer().action_of(idx, j);
                    out[a * cj + b] += p;
                }
                out
            }
        }
    }

    /// Distribution over the transition rows selected by the controlling
    /// player(s) at `(h, s)`, in transition-row order.
    pub fn control_marginal(&self, h: usize, s: StateId, control: &TransitionControl) -> Vec<f64> {
        match *control {
            TransitionControl::Single(k) => self.marginal(h, s, k),
            TransitionControl::Dual(i, j) => self.pair_marginal(h, s, i, j),
        }
    }

    /// Samples a joint action at `(h, s)`.
    pub fn sample_joint<R: Rng>(&self, h: usize, s: StateId, rng: &mut R) -> Vec<ActionId> {
        match self {
            Policy::Product(p) => p
                .factors()
                .iter()
                .map(|f| sample_index(f.dist(h, s), rng))
                .collect(),
            Policy::Correlated(c) => {
                let idx = sample_index(c.dist(h, s), rng);
                c.indexer().decode(idx)
            }
        }
    }
}

pub(crate) fn sample_index<R: Rng>(dist: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.len() - 1
}

// ---------------------------------------------------------------------------
// Deterministic policy enumeration
// ---------------------------------------------------------------------------

/// All deterministic Markov policies of player `k`: nonstationary over the
/// game's layers for finite horizons, stationary for discounted ones.
/// Errors once `|A_k|^(layers * states)` exceeds [`ENUMERATION_BUDGET`].
pub fn enumerate_deterministic(game: &MarkovGame, k: PlayerId) -> Result<Vec<PolicyFactor>> {
    if k >= game.players() {
        return Err(Error::IndexOutOfRange(format!(
            "player {k} of {}",
            game.players()
        )));
    }
    let actions = game.action_counts()[k];
    let stationary = !game.horizon().is_finite();
    let layers = if stationary { 1 } else { game.layer_count() };
    let slots = layers * game.states();
    let count = (actions as u128).checked_pow(slots as u32);
    match count {
        Some(c) if c <= ENUMERATION_BUDGET => {}
        _ => {
            return Err(Error::CapacityExceeded(format!(
                "{actions}^{slots} deterministic policies exceed {ENUMERATION_BUDGET}"
            )))
        }
    }
    let total = count.unwrap() as usize;
    let mut out = Vec::with_capacity(total);
    for code in 0..total {
        let mut c = code;
        let mut chosen = vec![vec![0usize; game.states()]; layers];
        for layer in chosen.iter_mut() {
            for slot in layer.iter_mut() {
                *slot = c % actions;
                c /= actions;
            }
        }
        out.push(PolicyFactor::deterministic(&chosen, actions, stationary));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{EdgeGame, HorizonSpec, StateInteraction};
    use proptest::prelude::*;

    fn three_player_game() -> MarkovGame {
        let zeros = |a: usize, b: usize| vec![vec![0.0; b]; a];
        let si = StateInteraction::new(
            TransitionControl::Single(0),
            vec![
                EdgeGame::new(0, 1, zeros(2, 3)),
                EdgeGame::new(1, 0, zeros(3, 2)),
            ],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            &[2, 3, 2],
            2,
        )
        .unwrap();
        MarkovGame::new(
            vec![2, 3, 2],
            HorizonSpec::Finite(2),
            vec![vec![si.clone(), si.clone()], vec![si.clone(), si]],
            vec![1.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn marginalize_of_lift_is_identity() {
        let game = three_player_game();
        let p = ProductPolicy::uniform(&game);
        let back = p.lift().unwrap().marginalize();
        for k in 0..3 {
            for h in 0..2 {
                for s in 0..2 {
                    for (a, b) in p.factor(k).dist(h, s).iter().zip(back.factor(k).dist(h, s)) {
                        assert!((a - b).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn point_mass_marginalizes_to_point_masses() {
        let counts = vec![2usize, 3, 2];
        let ix = JointIndexer::new(&counts);
        let mut dist = vec![0.0; ix.total()];
        dist[ix.index(&[1, 2, 0])] = 1.0;
        let sigma = CorrelatedPolicy::new(vec![vec![dist]], counts, false).unwrap();
        let p = sigma.marginalize();
        assert_eq!(p.factor(0).dist(0, 0), &[0.0, 1.0]);
        assert_eq!(p.factor(1).dist(0, 0), &[0.0, 0.0, 1.0]);
        assert_eq!(p.factor(2).dist(0, 0), &[1.0, 0.0]);
    }

    #[test]
    fn two_player_excluding_equals_other_marginal() {
        let counts = vec![2usize, 2];
        let sigma =
            CorrelatedPolicy::new(vec![vec![vec![0.1, 0.4, 0.2, 0.3]]], counts, false).unwrap();
        let excl = marginal_excluding(&sigma, 0).unwrap();
        let m1 = Policy::from(sigma).marginal(0, 0, 1);
        for (a, b) in excl.dist(0, 0).iter().zip(&m1) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn enumeration_counts_and_budget() {
        let game = three_player_game();
        // player 0: 2 actions, 2 states, 2 layers -> 2^4 = 16 policies
        let all = enumerate_deterministic(&game, 0).unwrap();
        assert_eq!(all.len(), 16);
        // player 1: 3 actions -> 3^4 = 81
        assert_eq!(enumerate_deterministic(&game, 1).unwrap().len(), 81);
        // 2 actions, 3 states, 1 step -> 2^3 = 8
        {
            use crate::generator::{generate, GeneratorConfig};
            let cfg = GeneratorConfig::new(vec![2, 2], 3, HorizonSpec::Finite(1));
            let g = generate(&cfg).unwrap();
            assert_eq!(enumerate_deterministic(&g, 0).unwrap().len(), 8);
        }
        for f in all {
            for h in 0..2 {
                for s in 0..2 {
                    assert_eq!(f.dist(h, s).iter().sum::<f64>(), 1.0);
                }
            }
        }
    }

    #[test]
    fn enumeration_and_lift_respect_budgets() {
        use crate::generator::{generate, GeneratorConfig};
        // 2 actions over 10 states and 2 layers: 2^20 policies, over budget.
        let cfg = GeneratorConfig::new(vec![2, 2], 10, HorizonSpec::Finite(2));
        let g = generate(&cfg).unwrap();
        assert!(matches!(
            enumerate_deterministic(&g, 0),
            Err(crate::error::Error::CapacityExceeded(_))
        ));
        // 32^4 joint actions: lifting to a dense correlated policy is refused.
        let cfg = GeneratorConfig::new(vec![32; 4], 1, HorizonSpec::Finite(1));
        let g = generate(&cfg).unwrap();
        assert!(matches!(
            ProductPolicy::uniform(&g).lift(),
            Err(crate::error::Error::CapacityExceeded(_))
        ));
    }

    #[test]
    fn compose_reconstructs_product() {
        let counts = vec![2usize, 2, 2];
        let p = ProductPolicy::new(vec![
            PolicyFactor::new(vec![vec![vec![0.3, 0.7]]], false).unwrap(),
            PolicyFactor::new(vec![vec![vec![0.5, 0.5]]], false).unwrap(),
            PolicyFactor::new(vec![vec![vec![0.9, 0.1]]], false).unwrap(),
        ])
        .unwrap();
        let sigma = p.lift().unwrap();
        let excl = marginal_excluding(&sigma, 1).unwrap();
        let back = excl.compose(p.factor(1)).unwrap();
        let ix = JointIndexer::new(&counts);
        for idx in 0..ix.total() {
            assert!((back.dist(0, 0)[idx] - sigma.dist(0, 0)[idx]).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn marginals_are_distributions(raw in proptest::collection::vec(0.01f64..1.0, 8)) {
            let total: f64 = raw.iter().sum();
            let dist: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let counts = vec![2usize, 2, 2];
            let sigma = CorrelatedPolicy::new(vec![vec![dist]], counts, false);
            prop_assume!(sigma.is_ok());
            let sigma = sigma.unwrap();
            let pol = Policy::from(sigma.clone());
            for k in 0..3 {
                let m = pol.marginal(0, 0, k);
                prop_assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(m.iter().all(|&p| p >= 0.0));
            }
            // Summing the excluded player's factor back never exceeds sigma's marginals.
            for k in 0..3 {
                let excl = marginal_excluding(&sigma, k).unwrap();
                let total: f64 = excl.dist(0, 0).iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
        }
    }
}
