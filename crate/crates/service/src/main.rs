use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use transitgrid_core::scenario::parkcity::{self, SynthOptions};
use transitgrid_core::scenario::{load_scenario, write_scenario};
use transitgrid_core::PolicyKind;
use transitgrid_service::{find_run_dir, load_run, router, simulate};

#[derive(Parser)]
#[command(name = "transitgrid", version, about = "BEB transit and distribution feeder co-simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the horizon and write run.json, scenario.json and summary.json.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// opportunistic or naive
        #[arg(long, default_value = "opportunistic")]
        policy: PolicyKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve an exported run over HTTP (read-only).
    Serve {
        /// A run directory, or a directory containing run directories.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
    /// Check a scenario file and list every finding.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Write the Park City scenario, or a randomized variant with --seed.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { scenario, policy, out } => {
            let s = load_scenario(&scenario).with_context(|| format!("loading {}", scenario.display()))?;
            let run = simulate(s, policy, &out).with_context(|| format!("simulating {}", scenario.display()))?;
            let sum = &run.summary;
            println!("run written to {} ({} snapshots, policy {policy})", out.display(), run.stream.len());
            println!("energy_cost_usd: {}", sum.costs.energy_cost_usd);
            println!("demand_charge_usd: {}", sum.costs.demand_charge_usd);
            println!("upstream_purchase_usd: {}", sum.costs.upstream_purchase_usd);
            println!("total_charging_kwh: {}", sum.total_charging_kwh);
            println!("peak_charging_kwh: {}", sum.peak_charging_kwh);
            println!("emergency_overrides: {}", sum.emergency_overrides);
            let violations: usize = sum.violation_counts.values().sum();
            println!("violations: {violations}");
        }
        Command::Serve { data, port, host } => {
            let dir = find_run_dir(&data)?;
            let run = load_run(&dir).with_context(|| format!("loading run {}", dir.display()))?;
            let addr = SocketAddr::new(host, port);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener =
                    tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
                eprintln!("serving {} on http://{}", dir.display(), listener.local_addr()?);
                axum::serve(listener, router(run)).await.context("server stopped")
            })?;
        }
        Command::Validate { scenario } => {
            let s = load_scenario(&scenario).with_context(|| format!("loading {}", scenario.display()))?;
            let c = s.counts();
            println!(
                "{}: valid ({} nodes, {} lines, {} stations, {} roads, {} routes, {} BEBs, {} steps)",
                scenario.display(),
                c.nodes,
                c.lines,
                c.stations,
                c.roads,
                c.routes,
                c.bebs,
                c.steps
            );
        }
        Command::Generate { out, seed } => {
            let s = match seed {
                None => parkcity::park_city_33(),
                Some(seed) => parkcity::synthesize(&SynthOptions::randomized(seed)),
            };
            let report = transitgrid_core::validate_scenario(&s);
            if !report.is_empty() {
                bail!("generated scenario is invalid:\n{report}");
            }
            write_scenario(&s, &out).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} ({})", out.display(), s.name);
        }
    }
    Ok(())
}
