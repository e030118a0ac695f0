//! Batch runner behind the `array-emitters` binary.
//!
//! A run reads one JSON config, evaluates one study on a dedicated thread
//! pool and writes CSV tables plus a `manifest.json` into the output
//! directory. Every CSV starts with a `#` metadata block that carries the
//! config hash.

pub mod config;
pub mod output;
pub mod studies;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};

pub use config::{parse_config, ConfigError, RunConfig, Study};
use output::{config_hash, write_table, Header, Manifest, Stage};

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "ARRAY_EMITTERS_THREADS";

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_COMPUTE: i32 = 3;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub study: Option<Study>,
    pub config: PathBuf,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

/// Exit code for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| e.downcast_ref::<ConfigError>().is_some()) {
        EXIT_CONFIG
    } else {
        EXIT_COMPUTE
    }
}

fn config_error(msg: String) -> anyhow::Error {
    ConfigError(msg).into()
}

/// Command line, then environment, then config file, then all cores.
pub fn thread_count(cli: Option<usize>, config: Option<usize>) -> Result<usize> {
    let env = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| config_error(format!("{THREADS_ENV}={v:?} is not a positive integer")))?,
        ),
        Err(_) => None,
    };
    let n = cli.or(env).or(config).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if n == 0 {
        return Err(config_error("thread count must be at least 1".into()));
    }
    Ok(n)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn run(opts: &RunOptions) -> Result<Manifest> {
    let start = Instant::now();
    let cfg = load_config(&opts.config)?;
    let study = cfg.resolve_study(opts.study)?;
    cfg.validate(study)?;
    let threads = thread_count(opts.threads, cfg.threads)?;
    let hash = config_hash(&cfg)?;
    let mut stages = vec![Stage { name: "parse".into(), seconds: start.elapsed().as_secs_f64() }];

    log::info!("{} on {threads} threads, config {}", study.as_str(), &hash[..12]);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().context("building the thread pool")?;
    let t = Instant::now();
    let result = pool.install(|| studies::run(study, &cfg)).with_context(|| format!("{} study failed", study.as_str()))?;
    stages.push(Stage { name: "compute".into(), seconds: t.elapsed().as_secs_f64() });
    for c in result.cells.iter().filter(|c| c.status != "ok") {
        log::debug!("cell {} {}: {}", c.index, c.status, c.message.as_deref().unwrap_or(""));
    }

    let t = Instant::now();
    std::fs::create_dir_all(&opts.out).with_context(|| format!("creating {}", opts.out.display()))?;
    let header = Header { study: study.as_str(), config_hash: &hash };
    let outputs = result.tables.iter().map(|tb| write_table(&opts.out, &header, tb)).collect::<Result<Vec<_>>>()?;
    stages.push(Stage { name: "write".into(), seconds: t.elapsed().as_secs_f64() });

    let manifest = Manifest {
        study: study.as_str().into(),
        code_version: output::CODE_VERSION.into(),
        config_sha256: hash,
        config: serde_json::to_value(&cfg)?,
        threads,
        outputs,
        cells: result.cells,
        stages,
        summary: result.summary,
    };
    manifest.write(&opts.out)?;
    Ok(manifest)
}
