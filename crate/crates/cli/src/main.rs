//! `interact`: exact and estimated interaction indices from the shell.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use interaction_core::bench::{self, ConvergenceSpec};
use interaction_core::estimators::{estimate, EstimateConfig, EstimatorKind};
use interaction_core::game::{builtin_game, load_value_function, ValueFunction};
use interaction_core::indices::IndexRegistry;
use interaction_core::{Error, IndexKind, InteractionIndex, Result};
use serde_json::{json, Value};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "interact", version, about = "Exact and Monte-Carlo interaction indices for set games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute an index exactly.
    Exact(ExactArgs),
    /// Estimate an index from a limited number of evaluations.
    Estimate(EstimateArgs),
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Re-execute the command recorded in an earlier output file.
    Rerun {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct ExactArgs {
    /// A game file, or `builtin:<name>[:key=value,...]`.
    #[arg(long)]
    game: String,
    /// Index method name, e.g. `faith-shap`.
    #[arg(long)]
    index: String,
    #[arg(long)]
    order: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long)]
    game: String,
    #[arg(long)]
    estimator: EstimatorKind,
    #[arg(long)]
    order: usize,
    #[arg(long)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 200)]
    checkpoint_every: usize,
    /// Cap on permutation passes.
    #[arg(long)]
    max_passes: Option<usize>,
    /// Checkpoint trace as CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Final estimate as index JSON.
    #[arg(long)]
    index_out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum BenchCommand {
    /// Representative values of all five indices on an example game.
    Table {
        #[arg(long)]
        example: u8,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        order: usize,
        /// Emit JSON instead of aligned text.
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Surrogate against the true value by coalition size.
    Curve {
        #[arg(long)]
        example: u8,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        index: IndexKind,
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimator accuracy against evaluations over many seeds.
    Converge {
        #[arg(long)]
        spec: PathBuf,
        /// Result JSON; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Trace CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Include wall time in the result.
        #[arg(long)]
        timing: bool,
    },
}

/// Parses `builtin:name:k=v,...` or loads a game file. Values are JSON
/// where they parse as JSON and strings otherwise; commas inside brackets
/// do not split.
fn parse_game(arg: &str) -> Result<ValueFunction> {
    let Some(rest) = arg.strip_prefix("builtin:") else {
        return load_value_function(arg);
    };
    let (name, params) = rest.split_once(':').unwrap_or((rest, ""));
    let mut map = BTreeMap::new();
    for pair in split_top_level(params) {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value in `{pair}`")))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        map.insert(k.trim().to_string(), value);
    }
    builtin_game(name, &map)
}

fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, c) in s.char_indices() {
        match c {
            '[' | '{' => depth += 1,
            ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts.into_iter().filter(|p| !p.trim().is_empty()).collect()
}

/// The invocation minus output destinations, recorded for `rerun`.
fn recorded_argv(argv: &[String]) -> Vec<String> {
    const OUTPUTS: [&str; 3] = ["--out", "--csv", "--index-out"];
    let mut kept = Vec::new();
    let mut skip = false;
    for a in argv {
        if skip {
            skip = false;
        } else if OUTPUTS.contains(&a.as_str()) {
            skip = true;
        } else if !OUTPUTS.iter().any(|o| a.starts_with(&format!("{o}="))) {
            kept.push(a.clone());
        }
    }
    kept
}

fn comment_header(argv: &[String], config: &Value) -> String {
    format!(
        "# interact {VERSION}\n# argv: {}\n# config: {}\n",
        serde_json::to_string(argv).expect("argv serializes"),
        config
    )
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn with_provenance(mut body: Value, argv: &[String], config: Value) -> String {
    let obj = body.as_object_mut().expect("outputs are JSON objects");
    obj.insert("version".into(), json!(VERSION));
    obj.insert("argv".into(), json!(argv));
    obj.insert("config".into(), config);
    let mut text = serde_json::to_string_pretty(&body).expect("output serializes");
    text.push('\n');
    text
}

fn subset_field(players: &[usize]) -> String {
    players.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

fn index_rows(out: &mut String, evaluations: usize, index: &InteractionIndex) {
    for (s, x) in index.iter() {
        let _ = writeln!(out, "{evaluations},{},{x:e}", subset_field(&s.players()));
    }
}

fn run_exact(a: &ExactArgs, argv: &[String]) -> Result<()> {
    let v = parse_game(&a.game)?;
    let index = IndexRegistry::standard().compute(&a.index, &v, a.order)?;
    let config = json!({ "game": a.game, "index": a.index, "order": a.order });
    let body = serde_json::to_value(&index).expect("index serializes");
    emit(a.out.as_deref(), &with_provenance(body, argv, config))
}

fn run_estimate(a: &EstimateArgs, argv: &[String]) -> Result<()> {
    let v = parse_game(&a.game)?;
    let mut cfg = EstimateConfig::new(a.estimator, a.order, a.budget, a.seed)
        .with_lambda(a.lambda)
        .with_checkpoints(a.checkpoint_every);
    cfg.max_passes = a.max_passes;
    let report = estimate(&v, &cfg)?;
    let config = json!({ "game": a.game, "estimate": cfg });

    let mut csv = comment_header(argv, &config);
    csv.push_str("evaluations,subset,value\n");
    for c in &report.checkpoints {
        index_rows(&mut csv, c.evaluations, &c.index);
    }
    emit(a.out.as_deref(), &csv)?;

    if let Some(path) = &a.index_out {
        let body = json!({
            "d": report.index.players(),
            "l": report.index.order(),
            "kind": report.index.kind(),
            "scores": serde_json::to_value(&report.index).expect("index serializes")["scores"],
            "evaluations_used": report.evaluations_used,
            "rank_deficient": report.rank_deficient,
            "unestimated": report.unestimated.iter().map(|s| s.players()).collect::<Vec<_>>(),
            "std_errors": report.std_errors,
        });
        fs::write(path, with_provenance(body, argv, config))?;
    }
    if report.rank_deficient {
        eprintln!("warning: design matrix is rank deficient; returned the minimum-norm solution");
    }
    if !report.unestimated.is_empty() {
        eprintln!("warning: {} entries were never sampled and are reported as 0", report.unestimated.len());
    }
    Ok(())
}

fn run_bench(cmd: &BenchCommand, argv: &[String]) -> Result<()> {
    match cmd {
        BenchCommand::Table { example, p, order, json, out } => {
            let r = bench::run_example_table(*example, *p, *order)?;
            let text = if *json {
                let body = serde_json::to_value(&r).expect("result serializes");
                let config = r.config.clone();
                with_provenance(body, argv, config)
            } else {
                comment_header(argv, &r.config) + &r.render_table()
            };
            emit(out.as_deref(), &text)
        }
        BenchCommand::Curve { example, p, index, order, out } => {
            let r = bench::run_example_curve(*example, *p, *index, *order)?;
            emit(out.as_deref(), &(comment_header(argv, &r.config) + &r.curve_csv()))
        }
        BenchCommand::Converge { spec, out, csv, timing } => {
            let text = fs::read_to_string(spec)?;
            let spec = ConvergenceSpec::from_json(&text)?;
            let mut r = bench::convergence_bench(&spec)?;
            if let Some(t) = r.runtime_seconds {
                eprintln!("runtime: {t:.2}s");
            }
            if !timing {
                r.runtime_seconds = None;
            }
            if let Some(path) = csv {
                fs::write(path, comment_header(argv, &r.config) + &r.traces_csv())?;
            }
            let config = r.config.clone();
            let body = serde_json::to_value(&r).expect("result serializes");
            emit(out.as_deref(), &with_provenance(body, argv, config))
        }
    }
}

/// Recovers the recorded argv from a JSON or commented-CSV output.
fn recorded_command(text: &str) -> Result<Vec<String>> {
    let argv = if text.trim_start().starts_with('{') {
        let v: Value = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("output is not valid JSON: {e}")))?;
        v.get("argv").cloned()
    } else {
        text.lines()
            .find_map(|l| l.strip_prefix("# argv: "))
            .and_then(|l| serde_json::from_str(l).ok())
    };
    let argv = argv.ok_or_else(|| Error::Config("no recorded command in file".into()))?;
    serde_json::from_value(argv).map_err(|e| Error::Config(format!("recorded argv: {e}")))
}

fn run(command: Command, argv: Vec<String>) -> Result<()> {
    match command {
        Command::Exact(a) => run_exact(&a, &argv),
        Command::Estimate(a) => run_estimate(&a, &argv),
        Command::Bench(b) => run_bench(&b, &argv),
        Command::Rerun { file, out } => {
            let mut recorded = recorded_command(&fs::read_to_string(&file)?)?;
            if recorded.first().map(String::as_str) == Some("rerun") {
                return Err(Error::Config("recorded command is itself a rerun".into()));
            }
            if let Some(out) = out {
                recorded.push("--out".into());
                recorded.push(out.display().to_string());
            }
            let cli = Cli::try_parse_from(std::iter::once("interact".to_string()).chain(recorded.iter().cloned()))
                .map_err(|e| Error::Config(format!("recorded command does not parse: {e}")))?;
            run(cli.command, recorded_argv(&recorded))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv = recorded_argv(&std::env::args().skip(1).collect::<Vec<_>>());
    match run(cli.command, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_top_level_commas_only() {
        assert_eq!(split_top_level("d=5,R=[1,2],x=a"), vec!["d=5", "R=[1,2]", "x=a"]);
        assert!(split_top_level("").is_empty());
    }

    #[test]
    fn builtin_game_arguments() {
        let v = parse_game("builtin:unanimity:d=5,R=[1,3]").unwrap();
        assert_eq!(v.players(), 5);
        assert_eq!(parse_game("builtin:example2").unwrap().players(), 11);
        assert!(matches!(parse_game("builtin:nope"), Err(Error::Config(_))));
        assert!(matches!(parse_game("builtin:example1:p"), Err(Error::Config(_))));
    }

    #[test]
    fn output_flags_are_not_recorded() {
        let argv: Vec<String> = ["exact", "--game", "g", "--out", "x.json", "--csv=y", "--order", "2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(recorded_argv(&argv), vec!["exact", "--game", "g", "--order", "2"]);
    }
}
