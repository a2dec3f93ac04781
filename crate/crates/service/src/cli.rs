//! `hpolens serve | convert | analyze`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use hpolens_core::converters::{detect_format, load_tabular, write_tabular, Format};

use crate::api::{router, AppState};
use crate::cache::DiskCache;
use crate::jobs::JobQueue;
use crate::plugins::{prepare, RunRef};
use crate::registry::Registry;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "hpolens", version, about = "Analyze hyperparameter optimization runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Serve the HTTP API (and the dashboard, if its assets are given).
    Serve(ServeArgs),
    /// Convert a run into the canonical tabular format.
    Convert {
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Run one analysis plugin and write its JSON payload.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Directory whose subdirectories are runs.
    #[arg(long, env = "HPOLENS_RUNS_DIR")]
    runs_dir: PathBuf,
    /// Result cache directory [default: <runs-dir>/.hpolens-cache].
    #[arg(long, env = "HPOLENS_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1", env = "HPOLENS_HOST")]
    host: String,
    /// Port to listen on; 0 picks a free one.
    #[arg(long, default_value_t = 8050, env = "HPOLENS_PORT")]
    port: u16,
    /// Worker threads [default: number of CPUs].
    #[arg(long, env = "HPOLENS_WORKERS")]
    workers: Option<usize>,
    #[arg(long, default_value_t = 2.0, env = "HPOLENS_POLL_INTERVAL_SECS")]
    poll_interval_secs: f64,
    /// Built dashboard assets served at `/`.
    #[arg(long, env = "HPOLENS_ASSETS_DIR")]
    assets_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Plugin name, e.g. `pareto_front` or `importances`.
    plugin: String,
    /// Run directory.
    #[arg(long)]
    run: PathBuf,
    /// Plugin parameter as `name=value`; values are read as JSON when
    /// possible and as plain strings otherwise.
    #[arg(short, long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    /// Output file [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Serve(args) => serve(args),
        Command::Convert { input, out } => convert(&input, &out),
        Command::Analyze(args) => analyze(args),
    }
}

fn fail(code: i32, message: impl std::fmt::Display) -> i32 {
    eprintln!("error: {message}");
    code
}

fn is_non_empty_dir(path: &Path) -> bool {
    std::fs::read_dir(path).map(|mut d| d.next().is_some()).unwrap_or(false)
}

fn convert(input: &Path, out: &Path) -> i32 {
    match detect_format(input) {
        Ok(Format::Tabular) => {}
        Ok(Format::Unknown) | Err(_) => {
            return fail(EXIT_DATA, format!("unrecognized run format: {}", input.display()))
        }
    }
    if out.exists() && (!out.is_dir() || is_non_empty_dir(out)) {
        return fail(
            EXIT_USAGE,
            format!("output {} exists and is not an empty directory", out.display()),
        );
    }
    let run = match load_tabular(input) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_DATA, format!("{}: {e}", input.display())),
    };
    match write_tabular(&run, out) {
        Ok(()) => EXIT_OK,
        Err(e) => fail(EXIT_DATA, format!("{}: {e}", out.display())),
    }
}

fn parse_params(raw: &[String]) -> Result<Map<String, Value>, String> {
    raw.iter()
        .map(|p| {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| format!("parameter `{p}` is not of the form name=value"))?;
            let value = serde_json::from_str(v).unwrap_or_else(|_| Value::from(v));
            Ok((k.to_string(), value))
        })
        .collect()
}

/// The name a run directory is addressed by: its final path component.
pub fn run_handle(path: &Path) -> String {
    let resolved = path.canonicalize().unwrap_or_else(|_| path.to_path_buf());
    resolved
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".to_string())
}

fn analyze(args: AnalyzeArgs) -> i32 {
    let params = match parse_params(&args.params) {
        Ok(p) => p,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    if !matches!(detect_format(&args.run), Ok(Format::Tabular)) {
        return fail(EXIT_DATA, format!("unrecognized run format: {}", args.run.display()));
    }
    let run = match load_tabular(&args.run) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_DATA, format!("{}: {e}", args.run.display())),
    };
    let refs = vec![RunRef {
        handle: run_handle(&args.run),
        run: Arc::new(run),
    }];
    let spec = match prepare(&args.plugin, refs, false, &params) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_USAGE, e.message),
    };
    let bytes = match spec.payload() {
        Ok(b) => b,
        Err(e) => return fail(EXIT_DATA, e),
    };
    let written = match &args.out {
        Some(path) => std::fs::write(path, &bytes),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(&bytes).and_then(|_| stdout.write_all(b"\n"))
        }
    };
    match written {
        Ok(()) => EXIT_OK,
        Err(e) => fail(EXIT_DATA, e),
    }
}

fn serve(args: ServeArgs) -> i32 {
    let registry = match Registry::open(&args.runs_dir) {
        Ok(r) => Arc::new(r),
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let cache_dir = args.cache_dir.clone().unwrap_or_else(|| args.runs_dir.join(".hpolens-cache"));
    let cache = match DiskCache::open(&cache_dir) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_USAGE, format!("cache directory {}: {e}", cache_dir.display())),
    };
    if !(args.poll_interval_secs > 0.0 && args.poll_interval_secs.is_finite()) {
        return fail(EXIT_USAGE, "--poll-interval-secs must be positive");
    }
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    let jobs = Arc::new(JobQueue::new(workers, Some(cache)));
    let _refresher = registry.spawn_refresher(Duration::from_secs_f64(args.poll_interval_secs));
    let state = Arc::new(AppState {
        registry,
        jobs,
        assets_dir: args.assets_dir.clone(),
    });

    let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    runtime.block_on(async move {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = match tokio::net::TcpListener::bind(&addr).await {
            Ok(l) => l,
            Err(e) => return fail(EXIT_USAGE, format!("cannot listen on {addr}: {e}")),
        };
        let bound: SocketAddr = match listener.local_addr() {
            Ok(a) => a,
            Err(e) => return fail(EXIT_USAGE, e),
        };
        tracing::info!("listening on http://{bound}");
        let served = axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await;
        match served {
            Ok(()) => EXIT_OK,
            Err(e) => fail(EXIT_USAGE, e),
        }
    })
}
