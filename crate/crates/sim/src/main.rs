//! The fedtask command-line front end.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};

use fedtask_core::AttachmentBlob;
use fedtask_server::{http, FedServer, ServerConfig};
use fedtask_sim::{run_simulation, ScenarioConfig};

#[derive(Parser)]
#[command(name = "fedtask", about = "Federated task processing simulator and server", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write the metrics bundle.
    Run {
        /// Scenario JSON file.
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for summary.json, events.csv and program files.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads for device execution (1 = fully sequential).
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Serve the task/results API over HTTP.
    Serve {
        #[arg(long)]
        port: u16,
        /// Persist the results database under this directory.
        #[arg(long)]
        persist: Option<PathBuf>,
    },
    /// Publish a task descriptor (with attachments) to a running server.
    Publish {
        /// Task descriptor JSON file.
        #[arg(long)]
        descriptor: PathBuf,
        /// Attachment files, content-addressed on upload.
        #[arg(long = "attach")]
        attachments: Vec<PathBuf>,
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        server: String,
    },
    /// Fetch stored results for a task from a running server.
    Results {
        #[arg(long)]
        task: String,
        /// Single page to fetch; all pages when omitted.
        #[arg(long)]
        page: Option<usize>,
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        server: String,
    },
    /// Fetch the telemetry summary for a plug-in from a running server.
    Telemetry {
        #[arg(long)]
        plugin: String,
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        server: String,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run { scenario, seed, out, threads } => {
            let text = std::fs::read_to_string(&scenario)
                .with_context(|| format!("reading scenario {}", scenario.display()))?;
            let mut cfg: ScenarioConfig = serde_json::from_str(&text).context("parsing scenario")?;
            if let Some(seed) = seed {
                cfg.master_seed = seed;
            }
            let (summary, _fleet) = run_simulation(&cfg, &out, threads)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
        Command::Serve { port, persist } => {
            let config = ServerConfig::default();
            let server = match persist {
                Some(dir) => Arc::new(FedServer::with_persistence(config, dir)?),
                None => Arc::new(FedServer::new(config)),
            };
            let addr = std::net::SocketAddr::from(([127, 0, 0, 1], port));
            eprintln!("serving on http://{addr}");
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(http::serve(addr, server))?;
            Ok(())
        }
        Command::Publish { descriptor, attachments, server } => {
            let text = std::fs::read_to_string(&descriptor)
                .with_context(|| format!("reading descriptor {}", descriptor.display()))?;
            let descriptor: fedtask_core::TaskDescriptor =
                serde_json::from_str(&text).context("parsing descriptor")?;
            descriptor.validate().map_err(|e| anyhow::anyhow!("invalid descriptor: {e}"))?;
            let mut encoded = Vec::new();
            for path in &attachments {
                let bytes =
                    std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
                let blob = AttachmentBlob::new(bytes);
                println!("attachment {} -> {}", path.display(), blob.content_hash);
                encoded.push(base64_encode(&blob.bytes));
            }
            let body = serde_json::json!({"descriptor": descriptor, "attachments_b64": encoded});
            let response = reqwest::blocking::Client::new()
                .post(format!("{server}/v1/tasks"))
                .json(&body)
                .send()
                .context("posting task")?;
            anyhow::ensure!(
                response.status().is_success(),
                "publish failed: {} {}",
                response.status(),
                response.text().unwrap_or_default()
            );
            println!("published");
            Ok(())
        }
        Command::Results { task, page, server } => {
            let client = reqwest::blocking::Client::new();
            let mut current = page.unwrap_or(0);
            loop {
                let url = format!("{server}/v1/tasks/{task}/results?page={current}");
                let response = client.get(&url).send().context("fetching results")?;
                anyhow::ensure!(response.status().is_success(), "fetch failed: {}", response.status());
                let rows: Vec<serde_json::Value> = response.json().context("parsing results")?;
                if rows.is_empty() && page.is_none() && current > 0 {
                    break;
                }
                for row in &rows {
                    println!("{row}");
                }
                if page.is_some() || rows.is_empty() {
                    break;
                }
                current += 1;
            }
            Ok(())
        }
        Command::Telemetry { plugin, server } => {
            let response = reqwest::blocking::Client::new()
                .get(format!("{server}/v1/plugins/{plugin}/telemetry"))
                .send()
                .context("fetching telemetry")?;
            anyhow::ensure!(response.status().is_success(), "fetch failed: {}", response.status());
            let summary: serde_json::Value = response.json().context("parsing summary")?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
    }
}

fn base64_encode(bytes: &[u8]) -> String {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.encode(bytes)
}
