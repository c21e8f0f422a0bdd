//! The `birthday-census` command line.
//!
//! Every subcommand prints one JSON document to stdout; `--pretty` swaps it
//! for an aligned text rendering. Exit codes: 0 success, 2 usage, 3
//! resource guard, 4 data error.
//!
//! A TOML config file (`--config`, or the path in `BIRTHDAY_CENSUS_CONFIG`)
//! may set any flag: top-level keys are global flags, a `[census]` table
//! holds flags for `census`, and so on. Flags given on the command line win.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bounds::BoundsReport;
use crate::census::{run_census, CensusConfig, SourceDescriptor, TrialMode, DEFAULT_TARGET};
use crate::dist::{exact_collision_probability, monte_carlo_collision, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::ingest::Corpus;
use crate::review::{calibrate_from_session, default_log_path, serve, sha256_hex, ServeOptions};
use crate::similarity::{nearest_neighbor_with, top_k_pairs_with, Metric, DEFAULT_K};

pub const CONFIG_ENV: &str = "BIRTHDAY_CENSUS_CONFIG";

#[derive(Debug, Parser)]
#[command(
    name = "birthday-census",
    version,
    about = "Birthday-paradox support-size estimation"
)]
#[command(args_override_self = true)]
struct Cli {
    /// Human-readable output instead of JSON.
    #[arg(long, global = true)]
    pretty: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML file with default flag values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Collision probability of a synthetic distribution.
    Simulate(SimulateArgs),
    /// Closed-form bounds for a batch size and collision probability.
    Bounds(BoundsArgs),
    /// Closest pairs within one batch of items.
    Pairs(PairsArgs),
    /// Search for the 50%-collision batch size.
    Census(CensusArgs),
    /// Serve a human-mode session for review.
    Serve(ServeArgs),
    /// Nearest training item for each listed item.
    Neighbors(NeighborsArgs),
}

#[derive(Debug, Args)]
#[group(id = "dist_source", required = true, multiple = false)]
struct DistSource {
    /// Text file with one probability per line.
    #[arg(long, group = "dist_source")]
    dist: Option<PathBuf>,
    /// Uniform over N atoms.
    #[arg(long, group = "dist_source")]
    uniform: Option<usize>,
    /// Mass ρ uniform on Nh atoms, the rest uniform on Nt atoms: "ρ,Nh,Nt".
    #[arg(long, group = "dist_source", value_name = "RHO,NH,NT")]
    head_uniform: Option<String>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: DistSource,
    #[arg(long)]
    batch: usize,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also compute the exact probability.
    #[arg(long)]
    exact: bool,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[arg(long)]
    batch: u64,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Head-set size for the collision lower bound (default batch²).
    #[arg(long)]
    n: Option<f64>,
}

#[derive(Debug, Args)]
struct PairsArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Ids of the batch, one per line.
    #[arg(long)]
    batch_file: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Subtract each item's mean before comparing.
    #[arg(long)]
    center: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Auto,
    Human,
}

#[derive(Debug, Args)]
#[group(id = "census_source", required = true, multiple = false)]
struct CensusSource {
    /// Pool manifest.
    #[arg(long, group = "census_source")]
    manifest: Option<PathBuf>,
    #[arg(long, group = "census_source")]
    dist: Option<PathBuf>,
    #[arg(long, group = "census_source")]
    uniform: Option<usize>,
    #[arg(long, group = "census_source", value_name = "RHO,NH,NT")]
    head_uniform: Option<String>,
}

#[derive(Debug, Args)]
struct CensusArgs {
    #[command(flatten)]
    source: CensusSource,
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    mode: ModeArg,
    /// Auto mode: largest distance counted as a duplicate.
    #[arg(long)]
    threshold: Option<f64>,
    /// Auto mode: take the threshold from a reviewed human session.
    #[arg(long, conflicts_with = "threshold")]
    calibrate_from: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TARGET)]
    target: f64,
    /// Trials per probed batch size (default 10000, or 200 in human mode).
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Session file to write.
    #[arg(long)]
    session: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Head mass assumed by the support bound.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Training manifest for memorization checks during review.
    #[arg(long)]
    training: Option<PathBuf>,
    #[arg(long)]
    center: bool,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    session: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: String,
    /// Directory with the built review UI.
    #[arg(long)]
    assets: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct NeighborsArgs {
    /// Pool manifest holding the query items.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    training: PathBuf,
    /// Comma-separated item ids.
    #[arg(long, value_delimiter = ',', required = true)]
    items: Vec<String>,
    #[arg(long)]
    center: bool,
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let stdout = std::io::stdout();
    match run(args, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(CliError::Clap(e)) => {
            let _ = e.print();
            e.exit_code()
        }
        Err(CliError::App(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Clap(clap::Error),
    App(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::App(e)
    }
}

/// Runs with output to `out`.
pub fn run(args: Vec<OsString>, out: &mut dyn Write) -> std::result::Result<(), CliError> {
    let args = apply_config(args)?;
    let cli = Cli::try_parse_from(args).map_err(CliError::Clap)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::invalid("--threads must be >= 1").into());
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let value = match cli.command {
        Command::Simulate(a) => simulate(a)?,
        Command::Bounds(a) => bounds(a)?,
        Command::Pairs(a) => pairs(a)?,
        Command::Census(a) => census(a)?,
        Command::Serve(a) => {
            serve(&ServeOptions {
                session: a.session,
                listen: a.listen,
                assets: a.assets,
            })?;
            return Ok(());
        }
        Command::Neighbors(a) => neighbors(a)?,
    };
    let text = if cli.pretty {
        render_pretty(&value)
    } else {
        serde_json::to_string_pretty(&value).map_err(Error::from)? + "\n"
    };
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))?;
    Ok(())
}

fn to_value(v: impl Serialize) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn parse_head_uniform(spec: &str) -> Result<(f64, usize, usize)> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let bad = || Error::invalid(format!("--head-uniform expects RHO,NH,NT, got {spec:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    Ok((
        parts[0].parse().map_err(|_| bad())?,
        parts[1].parse().map_err(|_| bad())?,
        parts[2].parse().map_err(|_| bad())?,
    ))
}

fn load_dist(source: &DistSource) -> Result<(DiscreteDistribution, Value)> {
    if let Some(n) = source.uniform {
        return Ok((
            DiscreteDistribution::uniform(n)?,
            json!({"type": "uniform", "n": n}),
        ));
    }
    if let Some(spec) = &source.head_uniform {
        let (rho, nh, nt) = parse_head_uniform(spec)?;
        return Ok((
            DiscreteDistribution::mass_plus_uniform(rho, nh, nt)?,
            json!({"type": "head_uniform", "rho": rho, "n_head": nh, "n_tail": nt}),
        ));
    }
    let path = source.dist.as_ref().expect("clap requires one source");
    let dist = DiscreteDistribution::from_file(path)?;
    let descr = json!({"type": "file", "path": path, "atoms": dist.len()});
    Ok((dist, descr))
}

fn simulate(a: SimulateArgs) -> Result<Value> {
    let (dist, descr) = load_dist(&a.source)?;
    let estimate = monte_carlo_collision(&dist, a.batch, a.trials, a.seed)?;
    let mut out = json!({
        "distribution": descr,
        "batch": a.batch,
        "trials": a.trials,
        "seed": a.seed,
        "estimate": estimate,
    });
    if a.exact {
        out["exact"] = json!(exact_collision_probability(&dist, a.batch)?);
    }
    Ok(out)
}

fn bounds(a: BoundsArgs) -> Result<Value> {
    to_value(BoundsReport::compute(a.batch, a.gamma, a.rho, a.n)?)
}

fn metric(center: bool) -> Metric {
    if center {
        Metric::MeanCentered
    } else {
        Metric::Euclidean
    }
}

fn read_id_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect())
}

fn pairs(a: PairsArgs) -> Result<Value> {
    let corpus = Corpus::load(&a.manifest)?;
    let ids = read_id_list(&a.batch_file)?;
    let batch = ids
        .iter()
        .map(|id| {
            corpus.get(id).cloned().ok_or_else(|| {
                Error::NotFound(format!("item {id:?} is not in {}", a.manifest.display()))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    to_value(top_k_pairs_with(&batch, a.k, metric(a.center))?)
}

fn absolute(path: &Path) -> Result<PathBuf> {
    std::path::absolute(path).map_err(|e| Error::io(path, e))
}

fn census(a: CensusArgs) -> Result<Value> {
    let s = &a.source;
    let source = if let Some(path) = &s.manifest {
        SourceDescriptor::Manifest {
            path: absolute(path)?,
        }
    } else if let Some(n) = s.uniform {
        SourceDescriptor::Uniform { n }
    } else if let Some(spec) = &s.head_uniform {
        let (rho, n_head, n_tail) = parse_head_uniform(spec)?;
        SourceDescriptor::HeadUniform {
            rho,
            n_head,
            n_tail,
        }
    } else {
        let path = s.dist.as_ref().expect("clap requires one source");
        SourceDescriptor::Distribution {
            probs: DiscreteDistribution::from_file(path)?.probs().to_vec(),
        }
    };
    let is_pool = source.is_pool();
    let mode = match a.mode {
        ModeArg::Human => TrialMode::Human,
        ModeArg::Auto => {
            let threshold = match (&a.threshold, &a.calibrate_from) {
                (Some(t), _) => *t,
                (None, Some(path)) => calibrate_from_session(path)?,
                // synthetic sources compare atom ids, no threshold involved
                (None, None) if !is_pool => 0.0,
                (None, None) => {
                    return Err(Error::invalid(
                        "auto mode on a pool needs --threshold or --calibrate-from",
                    ))
                }
            };
            TrialMode::Auto { threshold }
        }
    };
    let mut config = CensusConfig::new(source, mode);
    if let Some(t) = a.trials {
        config.trials_per_probe = t;
    }
    config.target = a.target;
    config.seed = a.seed;
    config.k = a.k;
    config.rho = a.rho;
    config.metric = metric(a.center);
    config.training = a.training.as_deref().map(absolute).transpose()?;

    let human_pool = mode.is_human() && is_pool;
    if human_pool && a.session.is_none() {
        return Err(Error::invalid(
            "human mode needs --session to write the pending session",
        ));
    }
    let source = config.load_source()?;
    let mut session = run_census(&source, &config)?;
    for w in &session.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = &a.session {
        if human_pool {
            session.verdict_log = Some(crate::census::VerdictLogInfo {
                path: default_log_path(&absolute(path)?),
                records: 0,
                sha256: sha256_hex(b""),
            });
        }
        session.write(path)?;
    }
    if human_pool {
        let pending: u64 = session.probes.iter().map(|p| p.pending).sum();
        return Ok(json!({
            "session": a.session,
            "status": "awaiting_review",
            "current_probe": session.current_probe,
            "pending_trials": pending,
        }));
    }
    Ok(json!({
        "outcome": session.outcome,
        "report": session.report,
        "trajectory": session.trajectory,
        "warnings": session.warnings,
    }))
}

fn neighbors(a: NeighborsArgs) -> Result<Value> {
    let pool = Corpus::load(&a.manifest)?;
    let training = Corpus::load(&a.training)?;
    let m = metric(a.center);
    let rows = a
        .items
        .iter()
        .map(|id| {
            let query = pool.get(id).ok_or_else(|| {
                Error::NotFound(format!("item {id:?} is not in {}", a.manifest.display()))
            })?;
            let nn = nearest_neighbor_with(query, &training.items, m)?;
            Ok(json!({"item": id, "neighbor": nn.id, "distance": nn.distance}))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Value::Array(rows))
}

/// Expands the config file into flags placed ahead of the user's own.
fn apply_config(args: Vec<OsString>) -> std::result::Result<Vec<OsString>, CliError> {
    let explicit = args.iter().enumerate().find_map(|(i, a)| {
        let s = a.to_str()?;
        if s == "--config" {
            args.get(i + 1).map(PathBuf::from)
        } else {
            s.strip_prefix("--config=").map(PathBuf::from)
        }
    });
    let path = match explicit.or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from)) {
        Some(p) => p,
        None => return Ok(args),
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;

    let subcommands = [
        "simulate",
        "bounds",
        "pairs",
        "census",
        "serve",
        "neighbors",
    ];
    let Some(pos) = args
        .iter()
        .position(|a| a.to_str().is_some_and(|s| subcommands.contains(&s)))
    else {
        return Ok(args);
    };
    let sub = args[pos].to_str().unwrap_or_default().to_owned();

    let mut global = Vec::new();
    let mut local = Vec::new();
    for (key, value) in &table {
        match value {
            toml::Value::Table(t) if key == &sub => {
                for (k, v) in t {
                    push_flag(&mut local, k, v, &path)?;
                }
            }
            toml::Value::Table(_) => {}
            _ if key == "config" => {}
            v => push_flag(&mut global, key, v, &path)?,
        }
    }
    let mut out = Vec::with_capacity(args.len() + global.len() + local.len());
    out.push(args[0].clone());
    out.extend(global);
    out.extend(args[1..=pos].iter().cloned());
    out.extend(local);
    out.extend(args[pos + 1..].iter().cloned());
    Ok(out)
}

fn push_flag(out: &mut Vec<OsString>, key: &str, value: &toml::Value, path: &Path) -> Result<()> {
    let flag = format!("--{}", key.replace('_', "-"));
    let scalar = |v: &toml::Value| -> Result<String> {
        Ok(match v {
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            other => {
                return Err(Error::invalid(format!(
                    "{}: unsupported value for {key}: {other}",
                    path.display()
                )))
            }
        })
    };
    match value {
        toml::Value::Boolean(true) => out.push(flag.into()),
        toml::Value::Boolean(false) => {}
        toml::Value::Array(items) => {
            let joined = items
                .iter()
                .map(scalar)
                .collect::<Result<Vec<_>>>()?
                .join(",");
            out.push(flag.into());
            out.push(joined.into());
        }
        v => {
            out.push(flag.into());
            out.push(scalar(v)?.into());
        }
    }
    Ok(())
}

/// Key/value lines for objects, aligned columns for arrays of flat objects.
pub fn render_pretty(value: &Value) -> String {
    let mut out = String::new();
    render_into(&mut out, "", value);
    out
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::Null => "-".into(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn is_flat(v: &Value) -> bool {
    match v {
        Value::Object(m) => m.values().all(|x| !x.is_object() && !x.is_array()),
        _ => false,
    }
}

fn render_into(out: &mut String, prefix: &str, value: &Value) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                render_into(out, &key, v);
            }
        }
        Value::Array(items) if !items.is_empty() && items.iter().all(is_flat) => {
            if !prefix.is_empty() {
                out.push_str(prefix);
                out.push_str(":\n");
            }
            render_table(out, items);
        }
        Value::Array(items) if items.iter().any(|v| v.is_object() || v.is_array()) => {
            for (i, v) in items.iter().enumerate() {
                render_into(out, &format!("{prefix}[{i}]"), v);
            }
        }
        Value::Array(items) => {
            let joined: Vec<_> = items.iter().map(scalar_text).collect();
            out.push_str(&format!("{prefix}  [{}]\n", joined.join(", ")));
        }
        v => out.push_str(&format!("{prefix}  {}\n", scalar_text(v))),
    }
}

fn render_table(out: &mut String, rows: &[Value]) {
    let mut columns: Vec<String> = Vec::new();
    for row in rows {
        for k in row.as_object().expect("flat object").keys() {
            if !columns.contains(k) {
                columns.push(k.clone());
            }
        }
    }
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            columns
                .iter()
                .map(|c| r.get(c).map_or("-".into(), scalar_text))
                .collect()
        })
        .collect();
    let widths: Vec<usize> = columns
        .iter()
        .enumerate()
        .map(|(i, c)| {
            cells
                .iter()
                .map(|r| r[i].len())
                .chain([c.len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |vals: &[String]| {
        vals.iter()
            .zip(&widths)
            .map(|(v, w)| format!("{v:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_owned()
            + "\n"
    };
    out.push_str(&line(&columns));
    for r in &cells {
        out.push_str(&line(r));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_ok(args: &[&str]) -> Value {
        let mut buf = Vec::new();
        let args = std::iter::once("birthday-census")
            .chain(args.iter().copied())
            .map(OsString::from)
            .collect();
        run(args, &mut buf).unwrap();
        serde_json::from_slice(&buf).unwrap()
    }

    fn exit_code(args: &[&str]) -> i32 {
        let mut buf = Vec::new();
        let args = std::iter::once("birthday-census")
            .chain(args.iter().copied())
            .map(OsString::from)
            .collect();
        match run(args, &mut buf) {
            Ok(()) => 0,
            Err(CliError::Clap(e)) => e.exit_code(),
            Err(CliError::App(e)) => e.exit_code(),
        }
    }

    #[test]
    fn simulate_exact() {
        let v = run_ok(&[
            "simulate",
            "--uniform",
            "5",
            "--batch",
            "6",
            "--exact",
            "--trials",
            "10",
        ]);
        assert_eq!(v["exact"], 1.0);
        assert_eq!(v["estimate"]["point"], 1.0);
        let v = run_ok(&[
            "simulate",
            "--head-uniform",
            "1.0,5,0",
            "--batch",
            "6",
            "--exact",
            "--trials",
            "10",
        ]);
        assert_eq!(v["exact"], 1.0);
    }

    #[test]
    fn bounds_flags() {
        let v = run_ok(&["bounds", "--batch", "400", "--gamma", "0.5", "--rho", "0.9"]);
        assert!(v["support_bound"].is_null());
        assert_eq!(v["denominator_positive"], false);
        assert_eq!(exit_code(&["bounds", "--batch", "1", "--gamma", "0.5"]), 2);
        assert_eq!(exit_code(&["bounds", "--gamma", "0.5"]), 2);
    }

    #[test]
    fn usage_errors() {
        assert_eq!(
            exit_code(&["simulate", "--uniform", "5", "--dist", "x", "--batch", "2"]),
            2
        );
        assert_eq!(
            exit_code(&["simulate", "--head-uniform", "1,2", "--batch", "2"]),
            2
        );
        assert_eq!(
            exit_code(&["simulate", "--dist", "/nonexistent/d.txt", "--batch", "2"]),
            4
        );
    }

    #[test]
    fn config_file_supplies_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "[simulate]\ntrials = 7\nseed = 3\nexact = true\n").unwrap();
        let v = run_ok(&[
            "--config",
            cfg.to_str().unwrap(),
            "simulate",
            "--uniform",
            "10",
            "--batch",
            "3",
        ]);
        assert_eq!(v["trials"], 7);
        assert_eq!(v["seed"], 3);
        assert!(v["exact"].is_number());
        let v = run_ok(&[
            "--config",
            cfg.to_str().unwrap(),
            "simulate",
            "--uniform",
            "10",
            "--batch",
            "3",
            "--trials",
            "9",
        ]);
        assert_eq!(v["trials"], 9);
    }

    #[test]
    fn pretty_renders_tables() {
        let v = json!({"a": 1, "rows": [{"x": 1, "y": "q"}, {"x": 22, "y": null}]});
        let text = render_pretty(&v);
        assert!(text.contains("a  1"));
        assert!(text.contains("x   y"));
        assert!(text.contains("22  -"));
    }
}
