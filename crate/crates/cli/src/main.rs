//! `gicoord`: batch front end for the coordination engine.
//!
//! Every subcommand runs in-process on a scenario file. With `--server`,
//! the planning and simulation commands go to a running service instead.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use gicoord_api::{code, JobStatus};
use gicoord_client::{Client, ClientError};
use gicoord_core::allocation::allocate_refuges;
use gicoord_core::canonical::to_canonical_bytes;
use gicoord_core::search::optimal_plan;
use gicoord_core::simulator::{run, SimConfig};
use gicoord_core::store::{load_scenario, load_trace, save_trace, verify_trace, ScenarioDocument, TraceDocument};
use gicoord_core::strategy::{decision_violations, enumerate_choices, evaluate, planning_world};
use gicoord_core::{parse_decision_id, world_digest, Error, StrategicDecision, Strategy, Violation};
use gicoord_service::Session;

#[derive(Parser)]
#[command(name = "gicoord", version, about = "Geospatial multi-agent coordination engine")]
struct Cli {
    /// Send planning and simulation commands to this service instead of running locally.
    #[arg(long, global = true, value_name = "URL")]
    server: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Scenario document. Optional with --server, where it replaces the session.
    scenario: Option<PathBuf>,
    /// Strategy id inside the scenario; defaults to the first.
    #[arg(long)]
    strategy: Option<String>,
    /// Write the result here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a scenario document.
    Validate {
        scenario: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Ranked strategic decisions for a strategy.
    Plan {
        #[command(flatten)]
        common: Common,
        /// Maximum number of choices listed.
        #[arg(long, default_value_t = gicoord_core::strategy::DEFAULT_CHOICE_CAP)]
        cap: usize,
    },
    /// Macro schedule for one decision (the top-ranked one by default).
    Schedule {
        #[command(flatten)]
        common: Common,
        /// Decision id such as `a1>T1;a2>T2`.
        #[arg(long)]
        decision: Option<String>,
    },
    /// Branch-and-bound search for the makespan-optimal decision.
    Search {
        #[command(flatten)]
        common: Common,
        /// Node budget; 0 means unbounded.
        #[arg(long, default_value_t = gicoord_api::DEFAULT_SEARCH_BUDGET)]
        budget: u64,
    },
    /// Min-cost allocation of casualty clusters to refuges.
    Allocate {
        #[command(flatten)]
        common: Common,
        /// Transport speed in m/s.
        #[arg(long)]
        speed: f64,
    },
    /// Closed-loop simulation; writes a trace document.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Stop at this simulated time (seconds).
        #[arg(long, conflicts_with = "quiescence", required_unless_present = "quiescence")]
        until: Option<f64>,
        /// Run until no work is left or nothing more can happen.
        #[arg(long)]
        quiescence: bool,
        #[arg(long, default_value_t = 1.0)]
        tick: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check a trace against the scenario it was recorded from.
    Replay {
        scenario: PathBuf,
        trace: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        /// Scenario to start the session with.
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

fn main() -> ExitCode {
    // Clap's own usage exit code would collide with the infeasibility code.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 for bad input, 2 for infeasible strategies, 3 for anything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(e) = e.downcast_ref::<Error>() {
        return match e {
            Error::Validation(_) | Error::Parse { .. } | Error::Version(_) => 1,
            Error::Infeasible { .. } | Error::ReplanRequired { .. } => 2,
            _ => 3,
        };
    }
    if let Some(ClientError::Api { body, .. }) = e.downcast_ref::<ClientError>() {
        return match body.error.as_str() {
            code::VALIDATION => 1,
            code::INFEASIBLE | code::REPLAN_REQUIRED => 2,
            _ => 3,
        };
    }
    3
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(url) = &cli.server {
        if !matches!(cli.cmd, Cmd::Validate { .. } | Cmd::Replay { .. } | Cmd::Serve { .. }) {
            return runtime()?.block_on(remote(Client::new(url), cli.cmd));
        }
    }
    match cli.cmd {
        Cmd::Validate { scenario, out } => {
            let doc = read_scenario(&scenario)?;
            let report = json!({
                "valid": true,
                "world_digest": world_digest(&doc.world),
                "agents": doc.world.agents.len(),
                "regions": doc.world.regions.len(),
                "tasks": doc.world.macro_tasks.len(),
                "refuges": doc.world.refuges.len(),
                "clusters": doc.world.casualty_clusters.len(),
                "strategies": doc.strategies.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(),
            });
            emit(out.as_deref(), &report)
        }
        Cmd::Plan { common, cap } => {
            let (doc, strategy) = local(&common)?;
            let pw = planning_world(&doc.world, &strategy);
            emit(common.out.as_deref(), &enumerate_choices(&pw, &strategy, cap)?)
        }
        Cmd::Schedule { common, decision } => {
            let (doc, strategy) = local(&common)?;
            let pw = planning_world(&doc.world, &strategy);
            let id = match decision {
                Some(id) => id,
                None => top_choice(enumerate_choices(&pw, &strategy, 1)?.decisions.first().map(|d| d.id.clone()))?,
            };
            let assignment = parse_decision_id(&id).ok_or_else(|| {
                Error::Validation(vec![Violation::new("decision", format!("malformed decision id {id}"))])
            })?;
            let probe = StrategicDecision::new(&strategy.id, assignment.clone(), 0.0);
            let v: Vec<_> = decision_violations(&pw, &strategy, &probe)
                .into_iter()
                .map(|m| Violation::new("decision", m))
                .collect();
            if !v.is_empty() {
                return Err(report(Error::Validation(v), Path::new(&id)));
            }
            let (_, schedule) = evaluate(&pw, &strategy, &assignment)?;
            emit(common.out.as_deref(), &schedule)
        }
        Cmd::Search { common, budget } => {
            let (doc, strategy) = local(&common)?;
            let pw = planning_world(&doc.world, &strategy);
            emit(common.out.as_deref(), &optimal_plan(&pw, &strategy, unbounded(budget))?)
        }
        Cmd::Allocate { common, speed } => {
            let (doc, strategy) = local(&common)?;
            emit(common.out.as_deref(), &allocate_refuges(&doc.world, speed, Some(&strategy))?)
        }
        Cmd::Simulate { common, until, tick, seed, .. } => {
            let (doc, strategy) = local(&common)?;
            let trace = run(&doc.world, &strategy, &SimConfig { tick, stop_at: until, seed })?;
            write(common.out.as_deref(), &save_trace(&TraceDocument::from(&trace)))
        }
        Cmd::Replay { scenario, trace, out } => {
            let doc = read_scenario(&scenario)?;
            let bytes = std::fs::read(&trace).with_context(|| format!("reading {}", trace.display()))?;
            let trace = load_trace(&bytes)?;
            let end = verify_trace(&doc.world, &trace)?;
            let report = json!({
                "replay_ok": true,
                "events": trace.events.len(),
                "final_digest": world_digest(&end),
                "final_time": end.time,
            });
            emit(out.as_deref(), &report)
        }
        Cmd::Serve { scenario, port, host } => {
            let doc = match scenario {
                Some(p) => read_scenario(&p)?,
                None => ScenarioDocument::new(Default::default(), Vec::new()),
            };
            tracing_subscriber::fmt().with_writer(std::io::stderr).init();
            let addr = SocketAddr::new(host, port);
            runtime()?.block_on(gicoord_service::serve(addr, Session::new(doc)))?;
            Ok(())
        }
    }
}

fn unbounded(budget: u64) -> u64 {
    if budget == 0 {
        u64::MAX
    } else {
        budget
    }
}

fn top_choice(id: Option<String>) -> Result<String> {
    id.ok_or_else(|| anyhow!("strategy has no feasible decision"))
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn read_scenario(path: &Path) -> Result<ScenarioDocument> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    load_scenario(&bytes).map_err(|e| report(e, path))
}

/// Keeps the core error for the exit code and prints violations one per line.
fn report(e: Error, path: &Path) -> anyhow::Error {
    if let Error::Validation(v) = &e {
        for v in v {
            eprintln!("{}: {}: {}", path.display(), v.path, v.message);
        }
    }
    anyhow::Error::new(e).context(format!("in {}", path.display()))
}

fn local(c: &Common) -> Result<(ScenarioDocument, Strategy)> {
    let path = c.scenario.as_deref().ok_or_else(|| anyhow!("a scenario file is required without --server"))?;
    let doc = read_scenario(path)?;
    let strategy = pick(&doc, c.strategy.as_deref())?;
    Ok((doc, strategy))
}

fn pick(doc: &ScenarioDocument, id: Option<&str>) -> Result<Strategy> {
    match doc.strategy(id) {
        Some(s) => Ok(s.clone()),
        None => match id {
            Some(id) => bail!("scenario has no strategy {id}"),
            None => bail!("scenario has no strategies"),
        },
    }
}

fn emit<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    write(out, &to_canonical_bytes(value))
}

fn write(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    let mut bytes = bytes.to_vec();
    bytes.push(b'\n');
    match out {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&bytes)?;
            Ok(())
        }
    }
}

/// Loads the scenario into the session when one is given and returns the version to build on.
async fn prepare(client: &Client, c: &Common) -> Result<u64> {
    let mut version = client.world().await?.version;
    if let Some(path) = &c.scenario {
        let doc = read_scenario(path)?;
        let strategy = pick(&doc, c.strategy.as_deref())?;
        version = client.load_scenario(version, &doc).await?.version;
        if doc.strategies.first().map(|s| &s.id) != Some(&strategy.id) {
            version = client.set_strategy(version, &strategy).await?.version;
        }
    } else if let Some(id) = &c.strategy {
        bail!("--strategy {id} needs a scenario file to take the strategy from");
    }
    Ok(version)
}

async fn remote(client: Client, cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Plan { common, cap } => {
            prepare(&client, &common).await?;
            let reply = client.choices(Some(cap)).await?;
            emit(common.out.as_deref(), &reply.choices)
        }
        Cmd::Schedule { common, decision } => {
            let version = prepare(&client, &common).await?;
            let id = match decision {
                Some(id) => id,
                None => top_choice(client.choices(Some(1)).await?.choices.decisions.first().map(|d| d.id.clone()))?,
            };
            emit(common.out.as_deref(), &client.decide(version, &id).await?.schedule)
        }
        Cmd::Search { common, budget } => {
            prepare(&client, &common).await?;
            let job = client.start_search(Some(unbounded(budget))).await?;
            let job = client.wait_search(&job.id, Duration::from_millis(100), Duration::from_secs(3600)).await?;
            match (job.status, job.plan, job.error) {
                (JobStatus::Done, Some(plan), _) => emit(common.out.as_deref(), &plan),
                (_, _, Some(body)) => Err(ClientError::Api { status: 422, body }.into()),
                (status, ..) => bail!("search {} ended {status:?}", job.id),
            }
        }
        Cmd::Allocate { common, speed } => {
            prepare(&client, &common).await?;
            emit(common.out.as_deref(), &client.allocate(speed).await?.allocation)
        }
        Cmd::Simulate { common, until, tick, seed, .. } => {
            let version = prepare(&client, &common).await?;
            let reply = client.run(version, &SimConfig { tick, stop_at: until, seed }).await?;
            write(common.out.as_deref(), &save_trace(&reply.trace))
        }
        Cmd::Validate { .. } | Cmd::Replay { .. } | Cmd::Serve { .. } => unreachable!("handled locally"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn arguments_are_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn simulate_needs_a_stop_rule() {
        assert!(Cli::try_parse_from(["gicoord", "simulate", "x.scn"]).is_err());
        assert!(Cli::try_parse_from(["gicoord", "simulate", "x.scn", "--until", "5", "--quiescence"]).is_err());
        assert!(Cli::try_parse_from(["gicoord", "simulate", "x.scn", "--quiescence"]).is_ok());
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        let v = anyhow::Error::new(Error::Validation(Vec::new())).context("in x");
        assert_eq!(exit_code(&v), 1);
        assert_eq!(exit_code(&anyhow::Error::new(Error::Infeasible { threads: Vec::new() })), 2);
        assert_eq!(exit_code(&anyhow::Error::new(Error::Staleness)), 3);
        assert_eq!(exit_code(&anyhow!("io")), 3);
    }

    #[test]
    fn zero_budget_is_unbounded() {
        assert_eq!(unbounded(0), u64::MAX);
        assert_eq!(unbounded(7), 7);
    }
}
