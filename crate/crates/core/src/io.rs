//! Game and policy JSON serialization. Numbers are accepted as JSON
//! numbers or exact rational strings like "1/20"; serialization emits the
//! rational form whenever the stored double is exactly a small ratio, so
//! rational inputs round-trip textually.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{EdgeGame, HorizonSpec, MarkovGame, StateInteraction, TransitionControl};
use crate::policy::{CorrelatedPolicy, Policy, PolicyFactor, ProductPolicy};

/// A numeric literal: a JSON number or a string holding a rational "p/q"
/// (or a decimal).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumLit {
    Num(f64),
    Lit(String),
}

impl NumLit {
    pub fn value(&self, path: &str) -> Result<f64> {
        match self {
            NumLit::Num(x) => Ok(*x),
            NumLit::Lit(s) => parse_number(s).ok_or_else(|| Error::Parse {
                path: path.to_string(),
                message: format!("cannot parse number {s:?}"),
            }),
        }
    }

    /// Emits the exact rational form when one exists (denominator up to
    /// 10^6), otherwise the double itself.
    pub fn emit(x: f64) -> Self {
        match to_rational(x) {
            Some((p, 1)) => NumLit::Num(p as f64),
            Some((p, q)) => NumLit::Lit(format!("{p}/{q}")),
            None => NumLit::Num(x),
        }
    }
}

fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let p: f64 = num.trim().parse::<i64>().ok()? as f64;
        let q: f64 = den.trim().parse::<i64>().ok()? as f64;
        if q == 0.0 {
            return None;
        }
        Some(p / q)
    } else {
        s.parse::<f64>().ok()
    }
}

/// Continued-fraction reconstruction of `x` as an exactly-representing
/// small rational, if one exists.
fn to_rational(x: f64) -> Option<(i64, i64)> {
    if !x.is_finite() {
        return None;
    }
    if x == 0.0 {
        return Some((0, 1));
    }
    let negative = x < 0.0;
    let target = x.abs();
    let (mut p0, mut q0, mut p1, mut q1) = (1i64, 0i64, target.floor() as i64, 1i64);
    if (p1 as f64 / q1 as f64) == target {
        return Some((if negative { -p1 } else { p1 }, 1));
    }
    let mut frac = target - target.floor();
    for _ in 0..48 {
        if frac <= 0.0 {
            break;
        }
        let inv = 1.0 / frac;
        let a = inv.floor();
        if a.is_nan() || a >= 1e9 {
            break;
        }
        let ai = a as i64;
        let p2 = ai.checked_mul(p1)?.checked_add(p0)?;
        let q2 = ai.checked_mul(q1)?.checked_add(q0)?;
        if q2 > 1_000_000 || p2.abs() > 1_000_000_000 {
            break;
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        if (p1 as f64) / (q1 as f64) == target {
            return Some((if negative { -p1 } else { p1 }, q1));
        }
        frac = inv - a;
    }
    None
}

// ---------------------------------------------------------------------------
// Game files
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum HorizonField {
    Finite(usize),
    Discounted(NumLit),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ControllerField {
    Single(usize),
    Dual { two_controller: [usize; 2] },
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeField {
    from: usize,
    to: usize,
    payoff: Vec<Vec<NumLit>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StateField {
    controller: ControllerField,
    edges: Vec<EdgeField>,
    transition: Vec<Vec<NumLit>>,
}

/// On-disk game document.
#[derive(Debug, Serialize, Deserialize)]
pub struct GameFile {
    players: usize,
    actions: Vec<usize>,
    states: usize,
    horizon: HorizonField,
    rho: Vec<NumLit>,
    layers: Vec<Vec<StateField>>,
}

fn matrix_values(raw: &[Vec<NumLit>], path: &str) -> Result<Vec<Vec<f64>>> {
    raw.iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, v)| v.value(&format!("{path}[{i}][{j}]")))
                .collect()
        })
        .collect()
}

fn matrix_literals(values: &[Vec<f64>]) -> Vec<Vec<NumLit>> {
    values
        .iter()
        .map(|row| row.iter().map(|&v| NumLit::emit(v)).collect())
        .collect()
}

/// Parses a game document; the result always passes `validate` (violations
/// become parse errors naming the offending component).
pub fn parse_game(text: &str) -> Result<MarkovGame> {
    let file: GameFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: "$".into(),
        message: e.to_string(),
    })?;
    if file.actions.len() != file.players {
        return Err(Error::Parse {
            path: "actions".into(),
            message: format!(
                "{} entries for {} players",
                file.actions.len(),
                file.players
            ),
        });
    }
    let horizon = match &file.horizon {
        HorizonField::Finite(h) => HorizonSpec::Finite(*h),
        HorizonField::Discounted(g) => HorizonSpec::Discounted(g.value("horizon.discounted")?),
    };
    let rho = file
        .rho
        .iter()
        .enumerate()
        .map(|(i, v)| v.value(&format!("rho[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    if rho.len() != file.states {
        return Err(Error::Parse {
            path: "rho".into(),
            message: format!("{} entries for {} states", rho.len(), file.states),
        });
    }
    let mut layers = Vec::with_capacity(file.layers.len());
    for (h, layer) in file.layers.iter().enumerate() {
        let mut out = Vec::with_capacity(layer.len());
        for (s, sf) in layer.iter().enumerate() {
            let at = format!("layers[{h}][{s}]");
            let control = match sf.controller {
                ControllerField::Single(k) => TransitionControl::Single(k),
                ControllerField::Dual {
                    two_controller: [a, b],
                } => TransitionControl::Dual(a, b),
            };
            let edges = sf
                .edges
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    Ok(EdgeGame::new(
                        e.from,
                        e.to,
                        matrix_values(&e.payoff, &format!("{at}.edges[{i}].payoff"))?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let transition = matrix_values(&sf.transition, &format!("{at}.transition"))?;
            out.push(
                StateInteraction::new(control, edges, transition, &file.actions, file.states)
                    .map_err(|e| Error::Parse {
                        path: at.clone(),
                        message: e.to_string(),
                    })?,
            );
        }
        layers.push(out);
    }
    let game = MarkovGame::new(file.actions, horizon, layers, rho).map_err(|e| Error::Parse {
        path: "$".into(),
        message: e.to_string(),
    })?;
    let violations = game.validate();
    if let Some(v) = violations.first() {
        return Err(Error::Parse {
            path: v.path.clone(),
            message: v.message.clone(),
        });
    }
    Ok(game)
}

/// Serializes a game to the JSON document format, restoring rational
/// literals where the stored doubles are exact small ratios.
pub fn serialize_game(game: &MarkovGame) -> String {
    let file = GameFile {
        players: game.players(),
        actions: game.action_counts().to_vec(),
        states: game.states(),
        horizon: match game.horizon() {
            HorizonSpec::Finite(h) => HorizonField::Finite(h),
            HorizonSpec::Discounted(g) => HorizonField::Discounted(NumLit::emit(g)),
        },
        rho: game
            .initial_distribution()
            .iter()
            .map(|&v| NumLit::emit(v))
            .collect(),
        layers: game
            .layers()
            .iter()
            .map(|layer| {
                layer
                    .iter()
                    .map(|si| StateField {
                        controller: match si.control {
                            TransitionControl::Single(k) => ControllerField::Single(k),
                            TransitionControl::Dual(a, b) => ControllerField::Dual {
                                two_controller: [a, b],
                            },
                        },
                        edges: si
                            .edges
                            .iter()
                            .map(|e| EdgeField {
                                from: e.from,
                                to: e.to,
                                payoff: matrix_literals(&e.payoff),
                            })
                            .collect(),
                        transition: matrix_literals(&si.transition),
                    })
                    .collect()
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("game serialization cannot fail")
}

// ---------------------------------------------------------------------------
// Policy files
// ---------------------------------------------------------------------------

/// On-disk policy document: a product policy (per-player factors) or a
/// correlated one (dense per-state joint tables, last player fastest).
#[derive(Debug, Serialize, Deserialize)]
pub struct PolicyFile {
    kind: String,
    actions: Vec<usize>,
    states: usize,
    stationary: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    factors: Option<Vec<Vec<Vec<Vec<NumLit>>>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    table: Option<Vec<Vec<Vec<NumLit>>>>,
}

pub fn parse_policy(text: &str) -> Result<Policy> {
    let file: PolicyFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: "$".into(),
        message: e.to_string(),
    })?;
    match file.kind.as_str() {
        "product" => {
            let raw = file.factors.ok_or_else(|| Error::Parse {
                path: "factors".into(),
                message: "product policy needs factors".into(),
            })?;
            let mut factors = Vec::with_capacity(raw.len());
            for (k, per_h) in raw.iter().enumerate() {
                let mut probs = Vec::with_capacity(per_h.len());
                for (h, layer) in per_h.iter().enumerate() {
                    probs.push(matrix_values(layer, &format!("factors[{k}][{h}]"))?);
                }
                factors.push(PolicyFactor::new(probs, file.stationary).map_err(|e| {
                    Error::Parse {
                        path: format!("factors[{k}]"),
                        message: e.to_string(),
                    }
                })?);
            }
            Ok(Policy::Product(ProductPolicy::new(factors).map_err(
                |e| Error::Parse {
                    path: "factors".into(),
                    message: e.to_string(),
                },
            )?))
        }
        "correlated" => {
            let raw = file.table.ok_or_else(|| Error::Parse {
                path: "table".into(),
                message: "correlated policy needs a table".into(),
            })?;
            let mut table = Vec::with_capacity(raw.len());
            for (h, layer) in raw.iter().enumerate() {
                table.push(matrix_values(layer, &format!("table[{h}]"))?);
            }
            Ok(Policy::Correlated(
                CorrelatedPolicy::new(table, file.actions, file.stationary).map_err(|e| {
                    Error::Parse {
                        path: "table".into(),
                        message: e.to_string(),
                    }
                })?,
            ))
        }
        other => Err(Error::Parse {
            path: "kind".into(),
            message: format!("unknown policy kind {other:?}"),
        }),
    }
}

pub fn serialize_policy(policy: &Policy) -> String {
    let file = match policy {
        Policy::Product(p) => PolicyFile {
            kind: "product".into(),
            actions: p.factors().iter().map(|f| f.action_count()).collect(),
            states: p.states(),
            stationary: p.stationary(),
            factors: Some(
                p.factors()
                    .iter()
                    .map(|f| f.probs.iter().map(|layer| matrix_literals(layer)).collect())
                    .collect(),
            ),
            table: None,
        },
        Policy::Correlated(c) => PolicyFile {
            kind: "correlated".into(),
            actions: c.action_counts().to_vec(),
            states: c.states(),
            stationary: c.stationary(),
            factors: None,
            table: Some(
                (0..c.layer_count())
                    .map(|h| {
                        (0..c.states())
                            .map(|s| c.dist(h, s).iter().map(|&v| NumLit::emit(v)).collect())
                            .collect()
                    })
                    .collect(),
            ),
        },
    };
    serde_json::to_string_pretty(&file).expect("policy serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counterexamples::build_finite_example;

    #[test]
    fn rational_literals_parse_exactly() {
        assert_eq!(parse_number("1/20").unwrap(), 1.0 / 20.0);
        assert_eq!(parse_number("-13/160").unwrap(), -13.0 / 160.0);
        assert_eq!(parse_number("0.25").unwrap(), 0.25);
        assert!(parse_number("1/0").is_none());
    }

    #[test]
    fn rational_reconstruction_round_trips() {
        for &x in &[1.0 / 20.0, -13.0 / 160.0, 2.0 / 3.0, 0.5, 0.0, 1.0] {
            let lit = NumLit::emit(x);
            assert_eq!(lit.value("t").unwrap(), x);
        }
        // Rational form is restored textually.
        match NumLit::emit(1.0 / 20.0) {
            NumLit::Lit(s) => assert_eq!(s, "1/20"),
            other => panic!("expected literal, got {other:?}"),
        }
    }

    #[test]
    fn game_round_trip_is_identity() {
        let game = build_finite_example().game;
        let text = serialize_game(&game);
        assert!(text.contains("\"1/20\""), "rational payoffs preserved");
        let back = parse_game(&text).unwrap();
        assert_eq!(game, back);
    }

    #[test]
    fn generated_decimals_round_trip_exactly() {
        use crate::game::HorizonSpec;
        use crate::generator::{generate, GeneratorConfig};
        let mut cfg = GeneratorConfig::new(vec![2, 3], 3, HorizonSpec::Finite(2));
        cfg.density = 0.8;
        cfg.seed = 42;
        let game = generate(&cfg).unwrap();
        let back = parse_game(&serialize_game(&game)).unwrap();
        assert_eq!(game, back);
    }

    #[test]
    fn bad_transition_row_is_a_named_parse_error() {
        let game = build_finite_example().game;
        let text = serialize_game(&game).replace("\"1/2\"", "\"2/5\"");
        let err = parse_game(&text).unwrap_err();
        match err {
            Error::Parse { path, message } => {
                assert!(path.contains("transition"), "{path}: {message}");
            }
            other => panic!("expected parse error, got {other}"),
        }
    }

    proptest::proptest! {
        #[test]
        fn emitted_numbers_preserve_value(p in -1_000_000i64..1_000_000, q in 1i64..1_000_000) {
            let x = p as f64 / q as f64;
            let lit = NumLit::emit(x);
            proptest::prop_assert_eq!(lit.value("t").unwrap(), x);
        }

        #[test]
        fn emitted_decimals_preserve_value(x in -1.0f64..1.0) {
            let lit = NumLit::emit(x);
            proptest::prop_assert_eq!(lit.value("t").unwrap(), x);
        }
    }

    #[test]
    fn policy_round_trip() {
        let ex = build_finite_example();
        let sigma = Policy::Correlated(ex.sigma.clone());
        let text = serialize_policy(&sigma);
        let back = parse_policy(&text).unwrap();
        assert_eq!(sigma, back);

        let prod = Policy::Product(ex.sigma.marginalize());
        let text = serialize_policy(&prod);
        let back = parse_policy(&text).unwrap();
        assert_eq!(prod, back);
    }
}
