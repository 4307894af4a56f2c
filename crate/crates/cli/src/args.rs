use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "cmdr", version, about = "Language-steered micro-RTS commander")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the session service (HTTP + WebSocket).
    Serve(ServeArgs),
    /// Play the policy against ladder difficulties and write a win-rate CSV.
    Eval(EvalArgs),
    /// Re-simulate an episode log and compare every state hash.
    Replay(ReplayArgs),
    /// Check config, tree template or log files without running anything.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdvisorKind {
    Scripted,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Lockstep,
    Realtime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MapArg {
    Corner,
    Flank,
    Compact,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// JSON file with `listen`, `log_dir` and a partial `session` config.
    /// Flags given on the command line win over the file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Address to bind; port 0 picks a free port.
    #[arg(long)]
    pub listen: Option<String>,
    #[arg(long)]
    pub log_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub advisor: Option<AdvisorKind>,
    /// Chat-completion URL for the http advisor.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable that holds the advisor API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Default map seed for new sessions.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub map: Option<MapArg>,
    /// Default opponent difficulty, 1 to 6.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=6))]
    pub difficulty: Option<u8>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=1000))]
    pub tick_rate: Option<u32>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Difficulties to play: `3`, `1..6`, `1..=6` or `2,4,6`.
    #[arg(long, default_value = "1..6", value_parser = parse_difficulties)]
    pub difficulty: Difficulties,
    /// Episodes per difficulty.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub seeds: u64,
    /// First map seed; episodes use `seed .. seed + seeds`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Library preset the player side runs.
    #[arg(long, default_value = "balanced_macro")]
    pub policy: String,
    #[arg(long, value_enum, default_value = "corner")]
    pub map: MapArg,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also print a readable table to stderr.
    #[arg(long)]
    pub table: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Episode log (JSON Lines).
    pub log: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FileKind {
    /// Decide from the content.
    Auto,
    Serve,
    Session,
    Tree,
    Log,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    pub kind: FileKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Difficulties(pub Vec<u8>);

pub fn parse_difficulties(s: &str) -> Result<Difficulties, String> {
    let one = |t: &str| -> Result<u8, String> {
        let d: u8 = t.trim().parse().map_err(|_| format!("`{t}` is not a difficulty"))?;
        if (1..=6).contains(&d) {
            Ok(d)
        } else {
            Err(format!("difficulty {d} is outside 1..6"))
        }
    };
    let list = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (one(a)?, one(b.trim_start_matches('='))?);
        if a > b {
            return Err(format!("empty range `{s}`"));
        }
        (a..=b).collect()
    } else {
        s.split(',').map(one).collect::<Result<Vec<_>, _>>()?
    };
    Ok(Difficulties(list))
}
