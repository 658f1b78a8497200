use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sareward_cli::commands::{self, BonArgs, CleanArgs, EvalArgs, FitArgs, ScoreArgs};
use sareward_cli::config::Settings;
use sareward_cli::{service, CliResult};

#[derive(Parser)]
#[command(name = "sareward", version, about = "Spatial-aesthetics reward model toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate annotations, screen raters, mitigate outliers and write MOS.
    Clean(CleanArgs),
    /// Turn rating-word logits into 1-5 scores per dimension.
    Score(ScoreArgs),
    /// Fit Bradley-Terry fusion weights on preference pairs.
    Fit(FitArgs),
    /// Correlations against MOS and rank accuracy on preference pairs.
    Eval(EvalArgs),
    /// Rank candidates per prompt by fused score.
    Bon(BonArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ServeArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    listen: Option<String>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    weights_path: Option<PathBuf>,
    #[arg(long)]
    auth_token: Option<String>,
    /// offline or remote
    #[arg(long)]
    backend_mode: Option<String>,
    #[arg(long)]
    backend_endpoint: Option<String>,
    #[arg(long)]
    backend_timeout_ms: Option<u64>,
    #[arg(long)]
    backend_max_retries: Option<u32>,
    #[arg(long)]
    prompt_type: Option<String>,
}

fn serve(args: &ServeArgs) -> CliResult<String> {
    let mut settings = Settings::default();
    if let Some(path) = &args.config {
        settings.load_file(path)?;
    }
    settings.load_env(std::env::vars())?;
    let flags = [
        ("listen", args.listen.clone()),
        ("data_dir", args.data_dir.as_ref().map(|p| p.display().to_string())),
        ("weights_path", args.weights_path.as_ref().map(|p| p.display().to_string())),
        ("auth_token", args.auth_token.clone()),
        ("backend_mode", args.backend_mode.clone()),
        ("backend_endpoint", args.backend_endpoint.clone()),
        ("backend_timeout_ms", args.backend_timeout_ms.map(|v| v.to_string())),
        ("backend_max_retries", args.backend_max_retries.map(|v| v.to_string())),
        ("prompt_type", args.prompt_type.clone()),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            settings.set(key, v)?;
        }
    }
    service::run(&settings.build()?)?;
    Ok(String::new())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Clean(a) => commands::clean(a),
        Command::Score(a) => commands::score(a),
        Command::Fit(a) => commands::fit(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bon(a) => commands::bon(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
