use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Parser;
use log::info;

use stlab::dynamics::Mode;
use stlab::scenario::{bundled_text, execute, Scenario, BUNDLED};

/// Runs one Stokes-transport scenario and its analyses.
#[derive(Debug, Parser)]
#[command(name = "stlab", version, about)]
struct Args {
    /// scenario file (TOML)
    #[arg(long, value_name = "PATH", conflicts_with = "bundled", required_unless_present_any = ["bundled", "list"])]
    config: Option<PathBuf>,

    /// run one of the bundled scenarios by name
    #[arg(long, value_name = "NAME")]
    bundled: Option<String>,

    /// list bundled scenarios and exit
    #[arg(long)]
    list: bool,

    /// output directory (overrides the scenario's)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// worker threads (0 = all cores)
    #[arg(long, env = "STLAB_THREADS", value_name = "N")]
    threads: Option<usize>,

    /// propagate linear runs with per-mode matrix exponentials
    #[arg(long)]
    exact_linear: bool,

    /// check the scenario's acceptance intervals; exit 2 if any fails
    #[arg(long)]
    accept: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    match real_main(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Returns `Ok(false)` on acceptance failure.
fn real_main(args: &Args) -> Result<bool> {
    if args.list {
        for name in BUNDLED {
            println!("{name}");
        }
        return Ok(true);
    }
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let text = match (&args.config, &args.bundled) {
        (Some(p), _) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        (None, Some(name)) => match bundled_text(name) {
            Some(t) => t.to_string(),
            None => bail!("no bundled scenario named '{name}' (try --list)"),
        },
        (None, None) => bail!("either --config or --bundled is required"),
    };
    let mut sc = Scenario::from_toml(&text)?;
    if args.exact_linear {
        if sc.mode != Mode::Linear {
            bail!("--exact-linear requires a linear-mode scenario");
        }
        sc.stepper.exact_linear = true;
    }
    let dir = args.out.clone().unwrap_or_else(|| sc.output_dir());
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    info!("running scenario '{}' into {}", sc.name, dir.display());
    let t0 = Instant::now();
    let ex = execute(&sc, &text, &dir)?;
    info!(
        "finished in {:.1} s: {} records, manifest {}",
        t0.elapsed().as_secs_f64(),
        ex.output.records.len(),
        ex.manifest.display()
    );

    for e in &ex.report.entries {
        let status = match e.pass {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "info",
        };
        let interval = e
            .interval
            .map(|(a, b)| format!(" in [{a:e}, {b:e}]"))
            .unwrap_or_default();
        let note = if e.note.is_empty() { String::new() } else { format!("  ({})", e.note) };
        println!("{status:4} {:<48} {:.6e}{interval}{note}", e.name, e.value);
    }
    Ok(!args.accept || ex.report.all_passed())
}
