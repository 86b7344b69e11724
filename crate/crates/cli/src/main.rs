use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use wmsurface_cli::commands::{self, SimulateArgs};
use wmsurface_cli::http;
use wmsurface_core::domain::StimulusParams;
use wmsurface_core::pattern::{generate_exhaustive, generate_standard_pattern};
use wmsurface_core::sim::{RmseRule, SimConfig};
use wmsurface_core::{FitConfig, ServiceConfig, SessionService};

#[derive(Parser)]
#[command(name = "wmsurface", version, about = "Adaptive estimation of working-memory threshold surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the session service over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080", env = "WMSURFACE_LISTEN")]
        listen: SocketAddr,
        /// Directory for session logs and archives; sessions are kept in
        /// memory only when omitted.
        #[arg(long, env = "WMSURFACE_STORE")]
        store: Option<PathBuf>,
        /// JSON file with the default feasibility constraints.
        #[arg(long)]
        constraints: Option<PathBuf>,
        /// Trials per adaptive session.
        #[arg(long, default_value_t = wmsurface_core::service::DEFAULT_AM_BUDGET)]
        budget: u32,
    },
    /// Simulate sampling policies on a synthetic cohort.
    Simulate {
        #[arg(long, default_value_t = 33)]
        cohort: usize,
        #[arg(long, default_value_t = 100)]
        budget: usize,
        /// Comma-separated subset of staircase, halton, active.
        #[arg(long, default_value = "staircase,halton,active")]
        policies: String,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Step at which policies are compared.
        #[arg(long, default_value_t = 30)]
        compare_at: usize,
        /// Fixed cost of a missing crossing; by default a missing crossing
        /// is read at the domain edge it falls past.
        #[arg(long)]
        absent_penalty: Option<f64>,
        #[arg(long, default_value = "sim-out")]
        out: PathBuf,
    },
    /// Refit an archived session and print its threshold curves.
    Fit { archive: PathBuf },
    /// Statistics on CSV columns.
    Stats {
        #[command(subcommand)]
        stat: Stat,
    },
    /// Generate the standard stimulus pattern for (L, K).
    Pattern {
        #[arg(short = 'L', long = "load")]
        l: u32,
        #[arg(short = 'K', long = "colors")]
        k: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        pool: usize,
        /// Select from every connected layout and balanced coloring (L <= 4).
        #[arg(long)]
        exhaustive: bool,
    },
}

#[derive(Subcommand)]
enum Stat {
    /// ICC(2,1) between two columns.
    Icc { csv: PathBuf, a: String, b: String },
    /// Pearson correlation with Bayes factor.
    Pearson { csv: PathBuf, x: String, y: String },
    /// Paired t test on a - b.
    PairedT { csv: PathBuf, a: String, b: String },
    /// IQR-fence outliers of a column, or of a - b.
    Outliers {
        csv: PathBuf,
        a: String,
        b: Option<String>,
        #[arg(long, default_value_t = wmsurface_core::stats::DEFAULT_FENCE)]
        fence: f64,
    },
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Serve { listen, store, constraints, budget } => {
            let config = ServiceConfig {
                store_dir: store,
                am_budget: budget,
                default_constraints: commands::load_constraints(constraints.as_deref())?,
                ..ServiceConfig::default()
            };
            let service = Arc::new(SessionService::new(config)?);
            let restored = service.restore_from_store()?;
            tracing::info!(%listen, restored, "serving");
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(listen).await.with_context(|| format!("binding {listen}"))?;
                axum::serve(listener, http::router(service))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                Ok::<_, anyhow::Error>(())
            })?;
        }
        Command::Simulate { cohort, budget, policies, seed, compare_at, absent_penalty, out } => {
            let sim = SimConfig {
                rmse_rule: absent_penalty.map_or(RmseRule::Censored, |penalty| RmseRule::AbsentPenalty { penalty }),
                ..SimConfig::default()
            };
            let report = commands::simulate(&SimulateArgs {
                cohort,
                seed,
                budget,
                policies: commands::parse_policies(&policies)?,
                compare_at,
                out_dir: out,
                sim,
            })?;
            print_json(&report)?;
        }
        Command::Fit { archive } => print_json(&commands::fit_archive(&archive, &FitConfig::default())?)?,
        Command::Stats { stat } => {
            let result = match stat {
                Stat::Icc { csv, a, b } => commands::icc_columns(&csv, &a, &b)?,
                Stat::Pearson { csv, x, y } => commands::pearson_columns(&csv, &x, &y)?,
                Stat::PairedT { csv, a, b } => commands::paired_t_columns(&csv, &a, &b)?,
                Stat::Outliers { csv, a, b, fence } => commands::outlier_columns(&csv, &a, b.as_deref(), fence)?,
            };
            print_json(&result)?;
        }
        Command::Pattern { l, k, seed, pool, exhaustive } => {
            let params = StimulusParams::new(l, k)?;
            let spec = if exhaustive {
                generate_exhaustive(params, seed)?
            } else {
                generate_standard_pattern(params, seed, pool)?
            };
            print_json(&spec)?;
        }
    }
    Ok(())
}
