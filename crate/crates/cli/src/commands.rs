use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::{json, Value};

use cmdr_core::bt::{validate_tree, PolicyLibrary, TreeDocument};
use cmdr_core::eval::{run_batch, BatchCase, OpponentChoice};
use cmdr_core::log::{replay as replay_log, EpisodeLog, LogRecord};
use cmdr_core::rts::{GameConfig, MapPreset};
use cmdr_core::session::SessionConfig;
use cmdr_server::{build_advisor, merge_json, Service, ServiceConfig};

use crate::args::{AdvisorKind, EvalArgs, FileKind, MapArg, ModeArg, ReplayArgs, ServeArgs, ValidateArgs};
use crate::Failure;

const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
const DEFAULT_LOG_DIR: &str = "logs";

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::runtime(format!("cannot read {}: {e}", path.display())))
}

fn preset(map: MapArg) -> MapPreset {
    match map {
        MapArg::Corner => MapPreset::Corner,
        MapArg::Flank => MapPreset::Flank,
        MapArg::Compact => MapPreset::Compact,
    }
}

/// Serve config file: everything optional, unknown keys rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ServeFile {
    listen: Option<String>,
    log_dir: Option<PathBuf>,
    /// Partial session config merged over the built-in defaults.
    session: Option<Value>,
}

struct ServePlan {
    listen: String,
    service: ServiceConfig,
}

/// Builds a checked session config from defaults, an optional patch and
/// an optional flag overlay.
fn session_config(patch: Option<Value>, flags: Option<&ServeArgs>) -> Result<SessionConfig, String> {
    let mut base = serde_json::to_value(SessionConfig::default()).map_err(|e| e.to_string())?;
    if let Some(p) = patch {
        merge_json(&mut base, p);
    }
    if let Some(a) = flags {
        let mut advisor = serde_json::Map::new();
        if let Some(kind) = a.advisor {
            advisor.insert("backend".into(), json!(if kind == AdvisorKind::Http { "http" } else { "scripted" }));
        }
        if let Some(e) = &a.endpoint {
            advisor.insert("endpoint".into(), json!(e));
        }
        if let Some(m) = &a.model {
            advisor.insert("model".into(), json!(m));
        }
        if let Some(k) = &a.api_key_env {
            advisor.insert("api_key_env".into(), json!(k));
        }
        if let Some(t) = a.timeout_ms {
            advisor.insert("timeout_ms".into(), json!(t));
        }
        let mut overlay = json!({ "advisor": advisor });
        if let Some(m) = a.mode {
            overlay["mode"] = json!(if m == ModeArg::Realtime { "realtime" } else { "lockstep" });
        }
        if let Some(d) = a.difficulty {
            overlay["opponent_difficulty"] = json!(d);
        }
        if let Some(r) = a.tick_rate {
            overlay["tick_rate"] = json!(r);
        }
        merge_json(&mut base, overlay);
        if a.seed.is_some() || a.map.is_some() {
            let seed = a.seed.unwrap_or_else(|| base["game"]["rng_seed"].as_u64().unwrap_or(0));
            let game = GameConfig::generate(preset(a.map.unwrap_or(MapArg::Corner)), seed);
            base["game"] = serde_json::to_value(game).map_err(|e| e.to_string())?;
        }
    }
    let config: SessionConfig = serde_json::from_value(base).map_err(|e| format!("session config: {e}"))?;
    config.validate(&PolicyLibrary::default()).map_err(|e| e.to_string())?;
    build_advisor(&config).map_err(|e| e.to_string())?;
    Ok(config)
}

fn serve_file(text: &str) -> Result<ServeFile, String> {
    serde_json::from_str(text).map_err(|e| format!("serve config: {e}"))
}

fn serve_plan(args: &ServeArgs) -> Result<ServePlan, Failure> {
    let file = match &args.config {
        Some(p) => serve_file(&read(p)?).map_err(|e| Failure::runtime(format!("{}: {e}", p.display())))?,
        None => ServeFile::default(),
    };
    let defaults = session_config(file.session, Some(args)).map_err(Failure::runtime)?;
    let listen = args.listen.clone().or(file.listen).unwrap_or_else(|| DEFAULT_LISTEN.into());
    let log_dir = args.log_dir.clone().or(file.log_dir).unwrap_or_else(|| DEFAULT_LOG_DIR.into());
    Ok(ServePlan { listen, service: ServiceConfig { log_dir, defaults } })
}

async fn shutdown_signal() {
    let interrupt = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = interrupt => {}
        _ = terminate => {}
    }
}

pub fn serve(args: ServeArgs) -> Result<(), Failure> {
    let plan = serve_plan(&args)?;
    let log_dir = plan.service.log_dir.clone();
    let service = Service::new(plan.service)
        .map_err(|e| Failure::runtime(format!("cannot create log dir {}: {e}", log_dir.display())))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::runtime(format!("runtime: {e}")))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&plan.listen)
            .await
            .map_err(|e| Failure::runtime(format!("cannot listen on {}: {e}", plan.listen)))?;
        let addr = listener.local_addr().map_err(|e| Failure::runtime(e.to_string()))?;
        let mut out = std::io::stdout();
        let _ = writeln!(out, "listening on http://{addr} (logs in {})", log_dir.display());
        let _ = out.flush();
        let handle = service.clone();
        service.serve(listener, shutdown_signal()).await.map_err(|e| Failure::runtime(format!("server: {e}")))?;
        let _ = writeln!(std::io::stdout(), "stopped; {} session log(s) flushed", handle.session_ids().len());
        Ok(())
    })
}

pub fn eval(args: EvalArgs) -> Result<(), Failure> {
    let map = preset(args.map);
    let cases: Vec<BatchCase> = args
        .difficulty
        .0
        .iter()
        .map(|d| BatchCase { map, ..BatchCase::new(&args.policy, OpponentChoice::Difficulty(*d)) })
        .collect();
    let end = args.seed.checked_add(args.seeds).ok_or_else(|| Failure::usage("seed range overflows"))?;
    let seeds: Vec<u64> = (args.seed..end).collect();
    let report = run_batch(&cases, &seeds).map_err(|e| Failure::runtime(e.to_string()))?;
    let csv = report.to_csv();
    match &args.out {
        Some(p) => {
            std::fs::write(p, &csv).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", p.display())))?
        }
        None => print!("{csv}"),
    }
    if args.table {
        eprint!("{}", report.to_table());
    }
    Ok(())
}

pub fn replay(args: ReplayArgs) -> Result<(), Failure> {
    let text = read(&args.log)?;
    let log = EpisodeLog::from_jsonl(&text).map_err(|e| Failure::runtime(format!("{}: {e}", args.log.display())))?;
    let report = replay_log(&log).map_err(|e| Failure::runtime(format!("{}: {e}", args.log.display())))?;
    if report.ok() {
        println!("{report}");
        Ok(())
    } else {
        Err(Failure::runtime(report.to_string()))
    }
}

fn detect(path: &Path, text: &str) -> Result<FileKind, String> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        return Ok(FileKind::Log);
    }
    let v: Value = serde_json::from_str(text).map_err(|e| format!("not JSON: {e}"))?;
    let obj = v.as_object().ok_or("expected a JSON object")?;
    Ok(if obj.contains_key("root") && obj.contains_key("nodes") {
        FileKind::Tree
    } else if ["listen", "log_dir", "session"].iter().any(|k| obj.contains_key(*k)) {
        FileKind::Serve
    } else {
        FileKind::Session
    })
}

fn check(kind: FileKind, text: &str) -> Result<String, String> {
    match kind {
        FileKind::Auto => unreachable!("resolved before checking"),
        FileKind::Serve => {
            let file = serve_file(text)?;
            session_config(file.session, None)?;
            Ok("serve config".into())
        }
        FileKind::Session => {
            let patch: Value = serde_json::from_str(text).map_err(|e| format!("not JSON: {e}"))?;
            session_config(Some(patch), None)?;
            Ok("session config".into())
        }
        FileKind::Tree => {
            let doc = TreeDocument::from_json(text).map_err(|e| e.to_string())?;
            validate_tree(&doc).map_err(|errs| errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))?;
            Ok(format!("behavior tree, {} nodes", doc.nodes.len()))
        }
        FileKind::Log => {
            let log = EpisodeLog::from_jsonl(text).map_err(|e| e.to_string())?;
            let Some(LogRecord::Header { config, .. }) = log.records.first() else {
                return Err("log does not start with a header record".into());
            };
            config.validate(&PolicyLibrary::default()).map_err(|e| e.to_string())?;
            let ticks = log.records.iter().filter(|r| matches!(r, LogRecord::Tick { .. })).count();
            let ended = matches!(log.records.last(), Some(LogRecord::End { .. }));
            Ok(format!(
                "episode log, {} records, {ticks} ticks{}",
                log.records.len(),
                if ended { "" } else { ", unfinished" }
            ))
        }
    }
}

pub fn validate(args: ValidateArgs) -> Result<(), Failure> {
    for path in &args.files {
        let text = read(path)?;
        let kind = match args.kind {
            FileKind::Auto => detect(path, &text).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?,
            k => k,
        };
        let what = check(kind, &text).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
        println!("OK: {} ({what})", path.display());
    }
    Ok(())
}
