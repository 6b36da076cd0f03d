use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use persona_feedback_service::{commands, router, AppState, ProviderKind, ServiceConfig};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(
    name = "persona-feedback",
    version,
    about = "Persona-based feedback on writing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Table,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, value_enum)]
        provider: Option<ProviderKind>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        few_shot: Option<PathBuf>,
        /// Run the second shortening pass on every feedback.
        #[arg(long)]
        condense: bool,
        /// Return the assembled prompt instead of calling the provider.
        #[arg(long)]
        dump_prompt: bool,
    },
    /// Print the prompt bundle for a persona file and a text.
    Prompt {
        #[arg(long)]
        persona: PathBuf,
        #[arg(long, conflicts_with = "text_file")]
        text: Option<String>,
        #[arg(long)]
        text_file: Option<PathBuf>,
        #[arg(long)]
        few_shot: Option<PathBuf>,
        #[arg(long)]
        zero_shot: bool,
    },
    /// Session statistics from an event log.
    Stats {
        #[arg(long)]
        log: PathBuf,
        /// Final document text, for the word count.
        #[arg(long)]
        document: Option<PathBuf>,
    },
    /// Editor/sidebar focus timeline from an event log.
    Timeline {
        #[arg(long)]
        log: PathBuf,
        /// Session end in epoch milliseconds.
        #[arg(long)]
        end_ms: Option<i64>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Structure report over history files or card files.
    Analyze {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(text: String, out: Option<PathBuf>) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                other => other.context("writing to stdout"),
            }
        }
    }
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Serve {
            config,
            port,
            provider,
            data_dir,
            few_shot,
            condense,
            dump_prompt,
        } => {
            let mut cfg = match config {
                Some(path) => ServiceConfig::load(&path)?,
                None => ServiceConfig::default(),
            };
            if let Some(p) = port {
                cfg.port = p;
            }
            if let Some(p) = provider {
                cfg.provider = p;
            }
            if let Some(d) = data_dir {
                cfg.data_dir = d;
            }
            if few_shot.is_some() {
                cfg.few_shot = few_shot;
            }
            cfg.condense |= condense;
            cfg.dump_prompt |= dump_prompt;

            let addr = format!("{}:{}", cfg.listen, cfg.port);
            let state = Arc::new(AppState::from_config(cfg)?);
            let listener = tokio::net::TcpListener::bind(&addr)
                .await
                .with_context(|| format!("binding {addr}"))?;
            tracing::info!(%addr, "listening");
            axum::serve(listener, router(state))
                .with_graceful_shutdown(async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await?;
            Ok(())
        }
        Command::Prompt {
            persona,
            text,
            text_file,
            few_shot,
            zero_shot,
        } => {
            let text = match (text, text_file) {
                (Some(t), _) => t,
                (None, Some(path)) => std::fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?,
                (None, None) => anyhow::bail!("pass --text or --text-file"),
            };
            emit(
                commands::prompt(&persona, &text, few_shot.as_deref(), zero_shot)?,
                None,
            )
        }
        Command::Stats { log, document } => emit(commands::stats(&log, document.as_deref())?, None),
        Command::Timeline {
            log,
            end_ms,
            format,
        } => emit(
            commands::timeline(&log, end_ms, matches!(format, Format::Csv))?,
            None,
        ),
        Command::Analyze { paths, format, out } => emit(
            commands::analyze(&paths, matches!(format, ReportFormat::Table))?,
            out,
        ),
    }
}
