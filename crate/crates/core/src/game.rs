//! Game data model: players, states, per-state interaction graphs with edge
//! payoffs, transition control, horizons, and the structural validators for
//! the zero-sum polymatrix and switching-control assumptions.

use std::collections::BTreeSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Zero-based player index.
pub type PlayerId = usize;
/// Zero-based state index.
pub type StateId = usize;
/// Zero-based action index within one player's action set.
pub type ActionId = usize;

/// Tolerance for probability vectors (transition rows, initial distribution).
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Tolerance for the global zero-sum property.
pub const ZERO_SUM_TOL: f64 = 1e-9;
/// Joint-action count above which zero-sum validation switches from exact
/// enumeration to the per-edge sufficient test plus random sampling.
pub const EXACT_ENUMERATION_BUDGET: u128 = 1_000_000;
/// Number of sampled joint actions used when enumeration is over budget.
const ZERO_SUM_SAMPLES: usize = 10_000;

// ---------------------------------------------------------------------------
// Joint action indexing
// ---------------------------------------------------------------------------

/// Mixed-radix indexer over the joint action space, last player fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct JointIndexer {
    counts: Vec<usize>,
    strides: Vec<usize>,
    total: usize,
}

impl JointIndexer {
    pub fn new(action_counts: &[usize]) -> Self {
        let n = action_counts.len();
        let mut strides = vec![1usize; n];
        for k in (0..n.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * action_counts[k + 1];
        }
        let total = action_counts.iter().product();
        Self {
            counts: action_counts.to_vec(),
            strides,
            total,
        }
    }

    /// Total number of joint actions.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Flat index of a joint action.
    pub fn index(&self, joint: &[ActionId]) -> usize {
        debug_assert_eq!(joint.len(), self.counts.len());
        joint.iter().zip(&self.strides).map(|(a, s)| a * s).sum()
    }

    /// Action of player `k` inside the flat index `idx`.
    pub fn action_of(&self, idx: usize, k: PlayerId) -> ActionId {
        (idx / self.strides[k]) % self.counts[k]
    }

    /// Decodes a flat index into a full joint action.
    pub fn decode(&self, idx: usize) -> Vec<ActionId> {
        (0..self.counts.len())
            .map(|k| self.action_of(idx, k))
            .collect()
    }

    /// Product of the action counts as a u128 (overflow-safe size probe).
    pub fn total_wide(action_counts: &[usize]) -> u128 {
        action_counts
            .iter()
            .fold(1u128, |acc, &c| acc.saturating_mul(c as u128))
    }
}

// ---------------------------------------------------------------------------
// Edges, control, interactions
// ---------------------------------------------------------------------------

/// One directed half of a pairwise normal-form game: the payoff that `from`
/// receives against `to`, indexed `payoff[a_from][a_to]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGame {
    pub from: PlayerId,
    pub to: PlayerId,
    pub payoff: Vec<Vec<f64>>,
}

impl EdgeGame {
    pub fn new(from: PlayerId, to: PlayerId, payoff: Vec<Vec<f64>>) -> Self {
        Self { from, to, payoff }
    }
}

/// Which player(s) determine the transition out of a state.
///
/// `Single` is the switching-control representation; `Dual` is the
/// two-controller extension used by the no-collapse counterexamples and by
/// two-player games without a designated controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionControl {
    Single(PlayerId),
    Dual(PlayerId, PlayerId),
}

impl TransitionControl {
    pub fn players(&self) -> Vec<PlayerId> {
        match *self {
            TransitionControl::Single(k) => vec![k],
            TransitionControl::Dual(i, j) => vec![i, j],
        }
    }

    /// Number of rows of the transition matrix under this control.
    pub fn row_count(&self, action_counts: &[usize]) -> usize {
        match *self {
            TransitionControl::Single(k) => action_counts[k],
            TransitionControl::Dual(i, j) => action_counts[i] * action_counts[j],
        }
    }

    /// Row selected by a joint action.
    pub fn row_index(&self, joint: &[ActionId], action_counts: &[usize]) -> usize {
        match *self {
            TransitionControl::Single(k) => joint[k],
            TransitionControl::Dual(i, j) => joint[i] * action_counts[j] + joint[j],
        }
    }

    /// Row selected by an assignment of actions to the controlling players
    /// (in the order reported by `players`).
    pub fn row_index_of_controllers(&self, actions: &[ActionId], action_counts: &[usize]) -> usize {
        match *self {
            TransitionControl::Single(_) => actions[0],
            TransitionControl::Dual(_, j) => actions[0] * action_counts[j] + actions[1],
        }
    }
}

/// One state of one timestep layer: its interaction graph, controller and
/// transition matrix. Transition rows are indexed by the controlling
/// player(s)' actions only, so the switching-control assumption holds by
/// representation for `Single` states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateInteraction {
    pub control: TransitionControl,
    pub edges: Vec<EdgeGame>,
    /// `transition[row][next_state]`, rows indexed per `control`.
    pub transition: Vec<Vec<f64>>,
    /// Per player, indices into `edges` whose `from` is that player.
    out_edges: Vec<Vec<usize>>,
}

impl StateInteraction {
    pub fn new(
        control: TransitionControl,
        edges: Vec<EdgeGame>,
        transition: Vec<Vec<f64>>,
        action_counts: &[usize],
        state_count: usize,
    ) -> Result<Self> {
        let n = action_counts.len();
        for &p in &control.players() {
            if p >= n {
                return Err(Error::IndexOutOfRange(format!(
                    "controller {p} with {n} players"
                )));
            }
        }
        if let TransitionControl::Dual(i, j) = control {
            if i == j {
                return Err(Error::Structural(
                    "two-controller state names the same player twice".into(),
                ));
            }
        }
        let mut seen = BTreeSet::new();
        for e in &edges {
            if e.from >= n || e.to >= n {
                return Err(Error::IndexOutOfRange(format!(
                    "edge ({}, {}) with {n} players",
                    e.from, e.to
                )));
            }
            if e.from == e.to {
                return Err(Error::Structural(format!("self-edge on player {}", e.from)));
            }
            if !seen.insert((e.from, e.to)) {
                return Err(Error::Structural(format!(
                    "duplicate edge ({}, {})",
                    e.from, e.to
                )));
            }
            if e.payoff.len() != action_counts[e.from]
                || e.payoff.iter().any(|row| row.len() != action_counts[e.to])
            {
                return Err(Error::ShapeMismatch(format!(
                    "edge ({}, {}) payoff must be {}x{}",
                    e.from, e.to, action_counts[e.from], action_counts[e.to]
                )));
            }
        }
        let rows = control.row_count(action_counts);
        if transition.len() != rows {
            return Err(Error::ShapeMismatch(format!(
                "transition has {} rows, control requires {rows}",
                transition.len()
            )));
        }
        if transition.iter().any(|row| row.len() != state_count) {
            return Err(Error::ShapeMismatch(format!(
                "transition rows must have {state_count} entries"
            )));
        }
        let mut out_edges = vec![Vec::new(); n];
        for (idx, e) in edges.iter().enumerate() {
            out_edges[e.from].push(idx);
        }
        Ok(Self {
            control,
            edges,
            transition,
            out_edges,
        })
    }

    /// Indices into `edges` owned by player `k`.
    pub fn edges_of(&self, k: PlayerId) -> &[usize] {
        &self.out_edges[k]
    }
}

// ---------------------------------------------------------------------------
// Horizon and game
// ---------------------------------------------------------------------------

/// Horizon of the game. `Finite(H)` means H reward-bearing steps h = 1..H
/// with zero continuation afterwards; `Discounted(gamma)` is the
/// time-homogeneous infinite-horizon criterion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HorizonSpec {
    Finite(usize),
    Discounted(f64),
}

impl HorizonSpec {
    pub fn is_finite(&self) -> bool {
        matches!(self, HorizonSpec::Finite(_))
    }

    pub fn gamma(&self) -> f64 {
        match *self {
            HorizonSpec::Finite(_) => 1.0,
            HorizonSpec::Discounted(g) => g,
        }
    }
}

/// A structural violation found by [`MarkovGame::validate`]. `path` locates
/// the offending component (layer/state/row), `message` says what failed.
#[derive(Debug, Clone)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Full description of a polymatrix Markov game.
///
/// Finite-horizon games store one `StateInteraction` layer per reward-bearing
/// timestep; discounted games store a single shared layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovGame {
    action_counts: Vec<usize>,
    state_count: usize,
    horizon: HorizonSpec,
    layers: Vec<Vec<StateInteraction>>,
    initial_distribution: Vec<f64>,
    joint: JointIndexer,
}

impl MarkovGame {
    pub fn new(
        action_counts: Vec<usize>,
        horizon: HorizonSpec,
        layers: Vec<Vec<StateInteraction>>,
        initial_distribution: Vec<f64>,
    ) -> Result<Self> {
        if action_counts.is_empty() {
            return Err(Error::ShapeMismatch(
                "game needs at least one player".into(),
            ));
        }
        if action_counts.contains(&0) {
            return Err(Error::ShapeMismatch("every player needs an action".into()));
        }
        let state_count = initial_distribution.len();
        if state_count == 0 {
            return Err(Error::ShapeMismatch("game needs at least one state".into()));
        }
        match horizon {
            HorizonSpec::Finite(h) => {
                if h == 0 {
                    return Err(Error::Domain("finite horizon must be positive".into()));
                }
                if layers.len() != h {
                    return Err(Error::ShapeMismatch(format!(
                        "finite horizon {h} requires {h} layers, got {}",
                        layers.len()
                    )));
                }
            }
            HorizonSpec::Discounted(g) => {
                if !(0.0 < g && g < 1.0) {
                    return Err(Error::Domain(format!(
                        "discount factor must lie in (0, 1), got {g}"
                    )));
                }
                if layers.len() != 1 {
                    return Err(Error::ShapeMismatch(format!(
                        "discounted games store a single layer, got {}",
                        layers.len()
                    )));
                }
            }
        }
        for (h, layer) in layers.iter().enumerate() {
            if layer.len() != state_count {
                return Err(Error::ShapeMismatch(format!(
                    "layer {h} has {} states, expected {state_count}",
                    layer.len()
                )));
            }
        }
        let joint = JointIndexer::new(&action_counts);
        Ok(Self {
            action_counts,
            state_count,
            horizon,
            layers,
            initial_distribution,
            joint,
        })
    }

    pub fn players(&self) -> usize {
        self.action_counts.len()
    }

    pub fn states(&self) -> usize {
        self.state_count
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn horizon(&self) -> HorizonSpec {
        self.horizon
    }

    pub fn initial_distribution(&self) -> &[f64] {
        &self.initial_distribution
    }

    pub fn joint(&self) -> &JointIndexer {
        &self.joint
    }

    /// Number of reward-bearing timestep layers stored (1 for discounted).
    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Vec<StateInteraction>] {
        &self.layers
    }

    /// Interaction at timestep `h` (zero-based) and state `s`. Discounted
    /// games are time-homogeneous, so any `h` maps to the shared layer.
    pub fn interaction(&self, h: usize, s: StateId) -> Result<&StateInteraction> {
        let layer = if self.horizon.is_finite() {
            self.layers.get(h).ok_or_else(|| {
                Error::IndexOutOfRange(format!("timestep {h} of {}", self.layers.len()))
            })?
        } else {
            &self.layers[0]
        };
        layer
            .get(s)
            .ok_or_else(|| Error::IndexOutOfRange(format!("state {s} of {}", self.state_count)))
    }

    fn check_joint(&self, joint: &[ActionId]) -> Result<()> {
        if joint.len() != self.players() {
            return Err(Error::ShapeMismatch(format!(
                "joint action has {} entries, expected {}",
                joint.len(),
                self.players()
            )));
        }
        for (k, &a) in joint.iter().enumerate() {
            if a >= self.action_counts[k] {
                return Err(Error::IndexOutOfRange(format!(
                    "action {a} of player {k} with {} actions",
                    self.action_counts[k]
                )));
            }
        }
        Ok(())
    }

    /// Polymatrix reward of player `k`: the sum of its edge payoffs at
    /// `(h, s)` under the joint action; 0 when `k` has no neighbors.
    pub fn reward(&self, h: usize, s: StateId, k: PlayerId, joint: &[ActionId]) -> Result<f64> {
        if k >= self.players() {
            return Err(Error::IndexOutOfRange(format!(
                "player {k} of {}",
                self.players()
            )));
        }
        self.check_joint(joint)?;
        let interaction = self.interaction(h, s)?;
        let mut total = 0.0;
        for &idx in interaction.edges_of(k) {
            let e = &interaction.edges[idx];
            total += e.payoff[joint[e.from]][joint[e.to]];
        }
        Ok(total)
    }

    /// Sum of all players' rewards at `(h, s, joint)`; zero on valid games.
    pub fn total_reward(&self, h: usize, s: StateId, joint: &[ActionId]) -> Result<f64> {
        let interaction = self.interaction(h, s)?;
        self.check_joint(joint)?;
        let mut total = 0.0;
        for e in &interaction.edges {
            total += e.payoff[joint[e.from]][joint[e.to]];
        }
        Ok(total)
    }

    /// Neighbors of player `k` at `(h, s)`.
    pub fn adjacency(&self, h: usize, s: StateId, k: PlayerId) -> Result<BTreeSet<PlayerId>> {
        if k >= self.players() {
            return Err(Error::IndexOutOfRange(format!(
                "player {k} of {}",
                self.players()
            )));
        }
        let interaction = self.interaction(h, s)?;
        Ok(interaction
            .edges_of(k)
            .iter()
            .map(|&idx| interaction.edges[idx].to)
            .collect())
    }

    /// Action of the designated controller at `(h, s)` under `joint`.
    /// Errors on two-controller states, which have no single controller.
    pub fn controller_action(&self, h: usize, s: StateId, joint: &[ActionId]) -> Result<ActionId> {
        self.check_joint(joint)?;
        let interaction = self.interaction(h, s)?;
        match interaction.control {
            TransitionControl::Single(k) => Ok(joint[k]),
            TransitionControl::Dual(..) => Err(Error::Structural(format!(
                "state {s} has two controllers; no single controller action"
            ))),
        }
    }

    /// Transition row selected by `joint` at `(h, s)`.
    pub fn transition_row(&self, h: usize, s: StateId, joint: &[ActionId]) -> Result<&[f64]> {
        self.check_joint(joint)?;
        let interaction = self.interaction(h, s)?;
        let row = interaction.control.row_index(joint, &self.action_counts);
        Ok(&interaction.transition[row])
    }

    /// True iff every state of every layer has a single controller
    /// (the switching-control representation).
    pub fn is_switching_control(&self) -> bool {
        self.layers
            .iter()
            .flatten()
            .all(|si| matches!(si.control, TransitionControl::Single(_)))
    }

    /// Checks stochasticity, edge symmetry, payoff bounds and the global
    /// zero-sum property. Returns all violations found; never aborts.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();

        let rho_sum: f64 = self.initial_distribution.iter().sum();
        if (rho_sum - 1.0).abs() > STOCHASTIC_TOL {
            out.push(Violation {
                path: "rho".into(),
                message: format!("sums to {rho_sum}, expected 1"),
            });
        }
        if let Some(i) = self.initial_distribution.iter().position(|&p| p < 0.0) {
            out.push(Violation {
                path: format!("rho[{i}]"),
                message: "negative probability".into(),
            });
        }

        for (h, layer) in self.layers.iter().enumerate() {
            for (s, si) in layer.iter().enumerate() {
                self.validate_interaction(h, s, si, &mut out);
            }
        }
        out
    }

    fn validate_interaction(
        &self,
        h: usize,
        s: StateId,
        si: &StateInteraction,
        out: &mut Vec<Violation>,
    ) {
        let at = |what: &str| format!("layers[{h}][{s}].{what}");

        for (row_idx, row) in si.transition.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                out.push(Violation {
                    path: at(&format!("transition[{row_idx}]")),
                    message: format!("row sums to {sum}, expected 1"),
                });
            }
            if row.iter().any(|&p| p < 0.0) {
                out.push(Violation {
                    path: at(&format!("transition[{row_idx}]")),
                    message: "negative probability".into(),
                });
            }
        }

        let present: BTreeSet<(PlayerId, PlayerId)> =
            si.edges.iter().map(|e| (e.from, e.to)).collect();
        for &(k, j) in &present {
            if !present.contains(&(j, k)) {
                out.push(Violation {
                    path: at(&format!("edges({k},{j})")),
                    message: format!("reverse edge ({j},{k}) missing"),
                });
            }
        }
        for e in &si.edges {
            for (a, row) in e.payoff.iter().enumerate() {
                for (b, &v) in row.iter().enumerate() {
                    if !(v.is_finite() && v.abs() <= 1.0 + STOCHASTIC_TOL) {
                        out.push(Violation {
                            path: at(&format!("edges({},{}).payoff[{a}][{b}]", e.from, e.to)),
                            message: format!("entry {v} outside [-1, 1]"),
                        });
                    }
                }
            }
        }

        self.validate_zero_sum(h, s, si, out);
    }

    fn validate_zero_sum(
        &self,
        h: usize,
        s: StateId,
        si: &StateInteraction,
        out: &mut Vec<Violation>,
    ) {
        let total_wide = JointIndexer::total_wide(&self.action_counts);
        let path = format!("layers[{h}][{s}]");
        if total_wide <= EXACT_ENUMERATION_BUDGET {
            let mut worst = 0.0f64;
            let mut worst_idx = 0usize;
            for idx in 0..self.joint.total() {
                let mut total = 0.0;
                for e in &si.edges {
                    total += e.payoff[self.joint.action_of(idx, e.from)]
                        [self.joint.action_of(idx, e.to)];
                }
                if total.abs() > worst {
                    worst = total.abs();
                    worst_idx = idx;
                }
            }
            if worst > ZERO_SUM_TOL {
                out.push(Violation {
                    path,
                    message: format!(
                        "rewards sum to {worst:+e} at joint action {:?}",
                        self.joint.decode(worst_idx)
                    ),
                });
            }
            return;
        }

        // Over budget: sufficient per-edge test (each pair-sum matrix
        // r_kj + r_jk^T constant, constants summing to 0), then sampling.
        let mut constant_sum = 0.0;
        let mut pairwise_ok = true;
        for e in &si.edges {
            if e.from > e.to {
                continue;
            }
            let Some(rev) = si.edges.iter().find(|r| r.from == e.to && r.to == e.from) else {
                continue; // symmetry violation already reported
            };
            let c0 = e.payoff[0][0] + rev.payoff[0][0];
            constant_sum += c0;
            'scan: for (a, row) in e.payoff.iter().enumerate() {
                for (b, &v) in row.iter().enumerate() {
                    if (v + rev.payoff[b][a] - c0).abs() > ZERO_SUM_TOL {
                        out.push(Violation {
                            path: format!("{path}.edges({},{})", e.from, e.to),
                            message: format!("pair sum not constant: varies at [{a}][{b}]"),
                        });
                        pairwise_ok = false;
                        break 'scan;
                    }
                }
            }
        }
        if pairwise_ok && constant_sum.abs() > ZERO_SUM_TOL {
            out.push(Violation {
                path: path.clone(),
                message: format!("pairwise constants sum to {constant_sum:+e}, expected 0"),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 ^ ((h as u64) << 32) ^ s as u64);
        for _ in 0..ZERO_SUM_SAMPLES {
            let joint: Vec<ActionId> = self
                .action_counts
                .iter()
                .map(|&c| rng.gen_range(0..c))
                .collect();
            let mut total = 0.0;
            for e in &si.edges {
                total += e.payoff[joint[e.from]][joint[e.to]];
            }
            if total.abs() > ZERO_SUM_TOL {
                out.push(Violation {
                    path,
                    message: format!("rewards sum to {total:+e} at sampled joint action {joint:?}"),
                });
                break;
            }
        }
    }
}
