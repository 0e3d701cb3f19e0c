//! `pmg`: command-line front end for the polymatrix Markov game solver.
//!
//! Every command emits a JSON report to stdout:
//! `{"command", "inputs", "values", "gaps", "verdict", "runtime_ms"}`.
//! Exit codes: 0 on success/PASS, 1 on violations or failed verdicts,
//! 2 on usage errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use pmg_core::best_response::{best_response_discounted, best_response_finite, gap_report};
use pmg_core::certificate::{
    optimum_implies_ne, pne_check_discounted, pne_check_finite, BoundaryConvention,
};
use pmg_core::counterexamples::{build_finite_example, build_infinite_example, verify_no_collapse};
use pmg_core::game::{HorizonSpec, MarkovGame};
use pmg_core::generator::{generate, ControlMode, GeneratorConfig};
use pmg_core::io::{parse_game, parse_policy, serialize_game, serialize_policy};
use pmg_core::policy::Policy;
use pmg_core::solver::{
    collapse_cce, collapse_two_player, solve_discounted_opts, solve_finite_opts, SolveOptions,
};
use pmg_core::stage::Learner;
use pmg_core::valuation::evaluate;
use pmg_core::Error;

#[derive(Parser)]
#[command(
    name = "pmg",
    version,
    about = "Zero-sum polymatrix Markov game solver and verifier"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LearnerArg {
    Omwu,
    Mwu,
}

impl From<LearnerArg> for Learner {
    fn from(l: LearnerArg) -> Self {
        match l {
            LearnerArg::Omwu => Learner::OptimisticMwu,
            LearnerArg::Mwu => Learner::Mwu,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    game: PathBuf,
    /// Target NE gap.
    #[arg(long, default_value_t = 1e-2)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-stage iteration budget.
    #[arg(long, default_value_t = 200_000)]
    iters: u64,
    #[arg(long, value_enum, default_value = "omwu")]
    learner: LearnerArg,
    /// Also write the per-stage no-regret CCE policy.
    #[arg(long)]
    cce_out: Option<PathBuf>,
    /// Write the solved product policy.
    #[arg(long)]
    policy_out: Option<PathBuf>,
    /// Write per-player quantities as CSV (columns player,quantity,value).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check stochasticity, edge symmetry and the zero-sum property.
    Validate { game: PathBuf },
    /// Compute an eps-approximate NE with a certified gap.
    Solve(#[command(flatten)] SolveArgs),
    /// Certify the CCE/NE gap of a policy.
    Gap {
        game: PathBuf,
        policy: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Exact best response of one player against a frozen policy.
    BestResponse {
        game: PathBuf,
        policy: PathBuf,
        #[arg(long)]
        player: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Write the best-response factor as a product policy file.
        #[arg(long)]
        policy_out: Option<PathBuf>,
    },
    /// Collapse a correlated policy to its per-player marginals.
    Marginalize {
        policy: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Marginalize and certify both gaps; asserts the collapse bound where
    /// the theorem applies.
    Collapse {
        game: PathBuf,
        policy: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Evaluate the equilibrium program at (policy, best-response values).
    Certify {
        game: PathBuf,
        policy: PathBuf,
        /// Objective threshold for PASS; defaults to n*gap + 1e-6.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Use the explicit all-zero final value layer convention.
        #[arg(long)]
        explicit_boundary: bool,
    },
    /// Build (and optionally verify) a no-collapse counterexample.
    Counterexample {
        #[arg(value_parser = ["finite", "infinite"])]
        which: String,
        /// Check every reference value and the no-collapse gaps.
        #[arg(long)]
        verify: bool,
        /// Export the game JSON.
        #[arg(long)]
        export: Option<PathBuf>,
        /// Export the CCE joint policy JSON.
        #[arg(long)]
        sigma_out: Option<PathBuf>,
    },
    /// Generate a random compliant instance.
    Generate {
        /// Per-player action counts, e.g. 2,3,2.
        #[arg(long, value_delimiter = ',', required = true)]
        actions: Vec<usize>,
        #[arg(long, required = true)]
        states: usize,
        /// Finite horizon (reward-bearing steps).
        #[arg(long, conflicts_with = "gamma")]
        horizon: Option<usize>,
        /// Discount factor in (0, 1).
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Make players 0 and 1 joint controllers (two-player games only).
        #[arg(long)]
        two_controller: bool,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

struct Report {
    command: &'static str,
    inputs: Value,
    values: Value,
    gaps: Value,
    /// None renders as null (no pass/fail semantics for this command).
    verdict: Option<bool>,
    csv_rows: Vec<(String, String, f64)>,
}

fn read_to_string(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn write_csv(path: &Path, rows: &[(String, String, f64)]) -> Result<(), Error> {
    let mut out = String::from("player,quantity,value\n");
    for (player, quantity, value) in rows {
        out.push_str(&format!("{player},{quantity},{value}\n"));
    }
    write_file(path, &out)
}

fn gap_rows(report: &pmg_core::best_response::GapReport) -> (Value, Vec<(String, String, f64)>) {
    let mut rows = Vec::new();
    for g in &report.per_player {
        rows.push((
            g.player.to_string(),
            "best_response".into(),
            g.best_response,
        ));
        rows.push((g.player.to_string(), "value".into(), g.current));
        rows.push((g.player.to_string(), "gap".into(), g.gap));
    }
    rows.push(("all".into(), "max_gap".into(), report.max_gap));
    rows.push(("all".into(), "sum_gap".into(), report.sum_gap));
    (serde_json::to_value(report).expect("serializable"), rows)
}

fn load_game(path: &Path) -> Result<MarkovGame, Error> {
    parse_game(&read_to_string(path)?)
}

fn load_policy(path: &Path) -> Result<Policy, Error> {
    parse_policy(&read_to_string(path)?)
}

fn run(cli: Cli) -> Result<Report, Error> {
    match cli.command {
        Command::Validate { game } => {
            let text = read_to_string(&game)?;
            // Parse without the validity gate so violations are listed
            // rather than turned into a parse error.
            match parse_game(&text) {
                Ok(_) => Ok(Report {
                    command: "validate",
                    inputs: json!({"game": game}),
                    values: json!({"violations": []}),
                    gaps: Value::Null,
                    verdict: Some(true),
                    csv_rows: vec![],
                }),
                Err(Error::Parse { path, message }) => Ok(Report {
                    command: "validate",
                    inputs: json!({"game": game}),
                    values: json!({"violations": [{"path": path, "message": message}]}),
                    gaps: Value::Null,
                    verdict: Some(false),
                    csv_rows: vec![],
                }),
                Err(other) => Err(other),
            }
        }
        Command::Solve(args) => {
            let game = load_game(&args.game)?;
            let opts = SolveOptions {
                learner: args.learner.into(),
                stage_max_iters: args.iters,
                track_cce: args.cce_out.is_some(),
                certification_tol: 1e-9,
            };
            let report = if game.horizon().is_finite() {
                solve_finite_opts(&game, args.eps, args.seed, &opts)?
            } else {
                solve_discounted_opts(&game, args.eps, args.seed, &opts)?
            };
            if let Some(path) = &args.policy_out {
                write_file(
                    path,
                    &serialize_policy(&Policy::Product(report.policy.clone())),
                )?;
            }
            if let Some(path) = &args.cce_out {
                let cce = report.cce.clone().expect("tracked");
                write_file(path, &serialize_policy(&Policy::Correlated(cce)))?;
            }
            let (gaps, mut rows) = gap_rows(&report.certified);
            rows.push(("all".into(), "eps".into(), report.eps));
            let iters: u64 = report.stage_iterations.iter().flatten().sum();
            let worst_stage_gap = report
                .stage_gaps
                .iter()
                .flatten()
                .fold(0.0f64, |m, &g| m.max(g));
            let verdict = report.certified.max_gap <= args.eps;
            let out = Report {
                command: "solve",
                inputs: json!({
                    "game": args.game, "eps": args.eps, "seed": args.seed,
                    "iters": args.iters,
                }),
                values: json!({
                    "certified_gap": report.certified.max_gap,
                    "values_at_rho": report.certified.per_player.iter().map(|g| g.current).collect::<Vec<_>>(),
                    "stage_tolerance": report.stage_tolerance,
                    "stage_iterations_total": iters,
                    "worst_stage_gap": worst_stage_gap,
                }),
                gaps,
                verdict: Some(verdict),
                csv_rows: rows,
            };
            if let Some(path) = &args.csv {
                write_csv(path, &out.csv_rows)?;
            }
            Ok(out)
        }
        Command::Gap {
            game,
            policy,
            tol,
            csv,
        } => {
            let g = load_game(&game)?;
            let p = load_policy(&policy)?;
            let report = gap_report(&g, &p, tol)?;
            let (gaps, rows) = gap_rows(&report);
            if let Some(path) = &csv {
                write_csv(path, &rows)?;
            }
            Ok(Report {
                command: "gap",
                inputs: json!({"game": game, "policy": policy, "tol": tol}),
                values: json!({"max_gap": report.max_gap}),
                gaps,
                verdict: None,
                csv_rows: rows,
            })
        }
        Command::BestResponse {
            game,
            policy,
            player,
            tol,
            policy_out,
        } => {
            let g = load_game(&game)?;
            let p = load_policy(&policy)?;
            let br = if g.horizon().is_finite() {
                best_response_finite(&g, &p, player)?
            } else {
                best_response_discounted(&g, &p, player, tol)?
            };
            let rho = g.initial_distribution();
            let br_value: f64 = br.values[0].iter().zip(rho).map(|(v, q)| v * q).sum();
            let current = evaluate(&g, &p)?.at_initial(rho)[player];
            if let Some(path) = &policy_out {
                let factor = br.factor.clone();
                let factors = (0..g.players())
                    .map(|k| {
                        if k == player {
                            factor.clone()
                        } else {
                            match &p {
                                Policy::Product(pp) => pp.factor(k).clone(),
                                Policy::Correlated(c) => c.marginalize().factor(k).clone(),
                            }
                        }
                    })
                    .collect::<Vec<_>>();
                let full = pmg_core::policy::ProductPolicy::new(factors)?;
                write_file(path, &serialize_policy(&Policy::Product(full)))?;
            }
            Ok(Report {
                command: "best-response",
                inputs: json!({"game": game, "policy": policy, "player": player, "tol": tol}),
                values: json!({"best_response": br_value, "current": current}),
                gaps: json!({"gap": (br_value - current).max(0.0)}),
                verdict: None,
                csv_rows: vec![
                    (player.to_string(), "best_response".into(), br_value),
                    (player.to_string(), "value".into(), current),
                ],
            })
        }
        Command::Marginalize { policy, out } => {
            let p = load_policy(&policy)?;
            let Policy::Correlated(sigma) = p else {
                return Err(Error::Domain(
                    "marginalize needs a correlated policy".into(),
                ));
            };
            let marginal = Policy::Product(sigma.marginalize());
            let text = serialize_policy(&marginal);
            if let Some(path) = &out {
                write_file(path, &text)?;
            }
            Ok(Report {
                command: "marginalize",
                inputs: json!({"policy": policy, "out": out}),
                values: serde_json::from_str(&text).expect("valid json"),
                gaps: Value::Null,
                verdict: None,
                csv_rows: vec![],
            })
        }
        Command::Collapse {
            game,
            policy,
            tol,
            csv,
        } => {
            let g = load_game(&game)?;
            let p = load_policy(&policy)?;
            let Policy::Correlated(sigma) = p else {
                return Err(Error::Domain("collapse needs a correlated policy".into()));
            };
            let outcome = if g.players() == 2 {
                collapse_two_player(&g, &sigma, tol)?
            } else {
                collapse_cce(&g, &sigma, tol)?
            };
            let (before, mut rows) = gap_rows(&outcome.before);
            let (after, after_rows) = gap_rows(&outcome.after);
            rows.extend(
                after_rows
                    .into_iter()
                    .map(|(p, q, v)| (p, format!("marginal_{q}"), v)),
            );
            if let Some(path) = &csv {
                write_csv(path, &rows)?;
            }
            Ok(Report {
                command: "collapse",
                inputs: json!({"game": game, "policy": policy, "tol": tol}),
                values: json!({
                    "cce_gap": outcome.before.max_gap,
                    "marginal_ne_gap": outcome.after.max_gap,
                    "bound": outcome.bound,
                }),
                gaps: json!({"before": before, "after": after}),
                verdict: outcome.bound.as_ref().map(|b| b.holds),
                csv_rows: rows,
            })
        }
        Command::Certify {
            game,
            policy,
            threshold,
            tol,
            explicit_boundary,
        } => {
            let g = load_game(&game)?;
            let p = load_policy(&policy)?;
            let Policy::Product(pi) = p.clone() else {
                return Err(Error::Domain("certify needs a product policy".into()));
            };
            if !g.horizon().is_finite() && !p.stationary() {
                return Err(Error::Domain(
                    "the discounted program takes a stationary policy; this file is \
                     nonstationary (the discounted solver outputs one); certify a \
                     stationary policy instead"
                        .into(),
                ));
            }
            let gaps = gap_report(&g, &p, tol)?;
            let threshold = threshold.unwrap_or(g.players() as f64 * gaps.max_gap + 1e-6);
            let w = pmg_core::best_response::best_response_table(&g, &p, tol.min(1e-10))?;
            let cert = if g.horizon().is_finite() {
                let convention = if explicit_boundary {
                    // Append the explicit all-zero layer the convention asks for.
                    BoundaryConvention::ExplicitZeroFinalLayer
                } else {
                    BoundaryConvention::ImplicitZeroAfterLast
                };
                let w = if explicit_boundary {
                    let mut padded = pmg_core::valuation::ValueTable::zeros(
                        g.players(),
                        g.layer_count() + 1,
                        g.states(),
                    );
                    for k in 0..g.players() {
                        for h in 0..g.layer_count() {
                            padded.values[k][h] = w.values[k][h].clone();
                        }
                    }
                    padded
                } else {
                    w
                };
                pne_check_finite(&g, &pi, &w, threshold, convention)?
            } else {
                pne_check_discounted(&g, &pi, &w, threshold)?
            };
            let bound = cert
                .feasible
                .then(|| optimum_implies_ne(&cert, &g, &pi))
                .transpose()?;
            Ok(Report {
                command: "certify",
                inputs: json!({"game": game, "policy": policy, "threshold": threshold, "tol": tol}),
                values: serde_json::to_value(&cert).expect("serializable"),
                gaps: serde_json::to_value(&bound).expect("serializable"),
                verdict: Some(cert.pass),
                csv_rows: vec![
                    ("all".into(), "objective".into(), cert.objective),
                    ("all".into(), "max_violation".into(), cert.max_violation),
                ],
            })
        }
        Command::Counterexample {
            which,
            verify,
            export,
            sigma_out,
        } => {
            let ex = if which == "finite" {
                build_finite_example()
            } else {
                build_infinite_example()
            };
            if let Some(path) = &export {
                write_file(path, &serialize_game(&ex.game))?;
            }
            if let Some(path) = &sigma_out {
                write_file(
                    path,
                    &serialize_policy(&Policy::Correlated(ex.sigma.clone())),
                )?;
            }
            if verify {
                let report = verify_no_collapse(&ex)?;
                let csv_rows = vec![
                    ("0".into(), "sigma_value".into(), report.sigma_values[0]),
                    (
                        "0".into(),
                        "marginal_value".into(),
                        report.marginal_values[0],
                    ),
                    ("all".into(), "cce_gap".into(), report.cce_gap),
                    ("all".into(), "witness_gap".into(), report.witness_gap),
                    ("all".into(), "exploitability".into(), report.exploitability),
                ];
                Ok(Report {
                    command: "counterexample",
                    inputs: json!({"which": which, "verify": true}),
                    values: serde_json::to_value(&report).expect("serializable"),
                    gaps: json!({
                        "cce_gap": report.cce_gap,
                        "ne_gap_witness": report.witness_gap,
                        "exploitability": report.exploitability,
                    }),
                    verdict: Some(true),
                    csv_rows,
                })
            } else {
                Ok(Report {
                    command: "counterexample",
                    inputs: json!({"which": which, "verify": false}),
                    values: json!({
                        "players": ex.game.players(),
                        "states": ex.game.states(),
                        "switching_control": ex.game.is_switching_control(),
                    }),
                    gaps: Value::Null,
                    verdict: None,
                    csv_rows: vec![],
                })
            }
        }
        Command::Generate {
            actions,
            states,
            horizon,
            gamma,
            density,
            seed,
            two_controller,
            out,
        } => {
            let horizon = match (horizon, gamma) {
                (Some(h), None) => HorizonSpec::Finite(h),
                (None, Some(g)) => HorizonSpec::Discounted(g),
                _ => {
                    return Err(Error::Domain(
                        "exactly one of --horizon or --gamma is required".into(),
                    ))
                }
            };
            let mut cfg = GeneratorConfig::new(actions, states, horizon);
            cfg.density = density;
            cfg.seed = seed;
            cfg.control = if two_controller {
                ControlMode::TwoController
            } else {
                ControlMode::Single
            };
            let game = generate(&cfg)?;
            let text = serialize_game(&game);
            if let Some(path) = &out {
                write_file(path, &text)?;
                Ok(Report {
                    command: "generate",
                    inputs: json!({"seed": seed, "density": density, "out": path}),
                    values: json!({
                        "players": game.players(), "states": game.states(),
                        "switching_control": game.is_switching_control(),
                    }),
                    gaps: Value::Null,
                    verdict: None,
                    csv_rows: vec![],
                })
            } else {
                // Bare generation prints the game document itself, for piping.
                println!("{text}");
                std::process::exit(0);
            }
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let start = Instant::now();
    match run(cli) {
        Ok(report) => {
            let envelope = json!({
                "command": report.command,
                "inputs": report.inputs,
                "values": report.values,
                "gaps": report.gaps,
                "verdict": report.verdict.map(|v| if v { "PASS" } else { "FAIL" }),
                "runtime_ms": start.elapsed().as_millis() as u64,
            });
            println!(
                "{}",
                serde_json::to_string_pretty(&envelope).expect("valid json")
            );
            std::process::exit(if report.verdict == Some(false) { 1 } else { 0 });
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
