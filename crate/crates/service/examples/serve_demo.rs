//! Writes a few synthetic runs to a temporary runs directory and serves them.
//!
//!     cargo run -p hpolens-service --example serve_demo -- [PORT]
//!
//! Then, for instance:
//!
//!     curl localhost:8050/api/runs
//!     curl -X POST localhost:8050/api/jobs \
//!          -d '{"plugin":"importances","run_ids":["seed0"],"params":{"objective":"loss"}}'
//!     curl localhost:8050/api/jobs/job-1

use hpolens_core::converters::write_tabular;
use hpolens_core::synthetic::mixed_run;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let port = std::env::args().nth(1).unwrap_or_else(|| "8050".into());
    let dir = tempfile::tempdir()?;
    for seed in 0..3 {
        let name = format!("seed{seed}");
        write_tabular(&mixed_run(&name, 10, 300, seed)?, &dir.path().join(&name))?;
    }
    let runs_dir = dir.path().to_string_lossy().into_owned();
    let code = hpolens_service::cli::run(["hpolens", "serve", "--runs-dir", &runs_dir, "--port", &port]);
    std::process::exit(code);
}
