use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use apmode_core::modeselect::{validate, Algorithm};
use clap::error::ErrorKind;
use clap::Parser;

use crate::config::Config;
use crate::experiment::{run_experiment, TrialContext};
use crate::io::{read_assignments, sidecar_path, write_assignments, write_results, write_timing};
use crate::summary::{format_summary, summarize};

/// Monte Carlo comparison of AP mode-selection algorithms.
#[derive(Debug, Parser)]
#[command(name = "apmode", version)]
struct Args {
    /// TOML file with `[scenario]` and `[experiment]` tables.
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated algorithms (alternating, sequential, heuristic, oracle).
    #[arg(long, value_delimiter = ',')]
    algo: Option<Vec<Algorithm>>,
    #[arg(long)]
    trials: Option<usize>,
    /// Base seed; trial `t` uses `seed + t`.
    #[arg(long)]
    seed: Option<u64>,
    /// Results CSV; sidecars are written next to it. Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print per-group means and standard deviations.
    #[arg(long)]
    summary: bool,
    /// Check an emitted assignments file against the constraints instead of
    /// running an experiment.
    #[arg(long)]
    validate: Option<PathBuf>,
}

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    File::create(path).map(BufWriter::new)
}

fn run_validate(cfg: &Config, path: &Path) -> Result<bool, String> {
    let file = File::open(path).map_err(|e| format!("cannot open {}: {e}", path.display()))?;
    let records = read_assignments(BufReader::new(file)).map_err(|e| e.to_string())?;
    let ctx = TrialContext::new(cfg).map_err(|e| e.to_string())?;
    let mut all = true;
    for r in &records {
        let inst = ctx.instance(r.target, r.k, r.seed, r.gamma_c_db, r.eta).map_err(|e| e.to_string())?;
        let report = validate(&r.assignment, &inst.stats, &inst.g, &inst.req);
        let pass = report.all_pass();
        all &= pass;
        println!(
            "trial {} seed {} {} K={} eta={:e}: {} ({} checks)",
            r.trial,
            r.seed,
            r.algorithm,
            r.k,
            r.eta,
            if pass { "PASS" } else { "FAIL" },
            report.rows.len()
        );
        for row in report.failures() {
            println!("  {:?} index={:?} value={:e} limit={:e}", row.kind, row.index, row.value, row.limit);
        }
    }
    println!("{} assignments, {}", records.len(), if all { "all pass" } else { "violations found" });
    Ok(all)
}

fn run(cfg: &Config, out: Option<&Path>, summary: bool) -> Result<(), String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    let results = out.map(|p| create(p).map_err(|e| format!("cannot write {}: {e}", p.display()))).transpose()?;
    let output = run_experiment(cfg).map_err(|e| e.to_string())?;
    match (out, results) {
        (Some(path), Some(mut w)) => {
            write_results(&mut w, &output.records).map_err(|e| err(&e))?;
            w.flush().map_err(|e| err(&e))?;
            let mut t = create(&sidecar_path(path, "timing.csv")).map_err(|e| err(&e))?;
            write_timing(&mut t, &output.records).map_err(|e| err(&e))?;
            t.flush().map_err(|e| err(&e))?;
            let mut a = create(&sidecar_path(path, "assignments.jsonl")).map_err(|e| err(&e))?;
            write_assignments(&mut a, &output.assignments).map_err(|e| err(&e))?;
            a.flush().map_err(|e| err(&e))?;
        }
        _ => write_results(io::stdout().lock(), &output.records).map_err(|e| err(&e))?,
    }
    if summary {
        let rows = summarize(&output.records).map_err(|e| err(&e))?;
        let table = format_summary(&rows);
        match out {
            Some(path) => {
                print!("{table}");
                let mut s = create(&sidecar_path(path, "summary.json")).map_err(|e| err(&e))?;
                serde_json::to_writer_pretty(&mut s, &rows).map_err(|e| err(&e))?;
                writeln!(s).map_err(|e| err(&e))?;
            }
            None => eprint!("{table}"),
        }
    }
    Ok(())
}

/// Entry point behind the `apmode` binary. Returns 0 on success, 1 on usage
/// or config errors and 2 on runtime failures (including a failed
/// `--validate`).
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let mut cfg = match Config::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("apmode: {e}");
            return 1;
        }
    };
    if let Some(algos) = args.algo {
        cfg.experiment.algorithms = algos;
    }
    if let Some(t) = args.trials {
        cfg.experiment.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.experiment.base_seed = s;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("apmode: {e}");
        return 1;
    }
    if let Some(path) = &args.validate {
        return match run_validate(&cfg, path) {
            Ok(true) => 0,
            Ok(false) => 2,
            Err(e) => {
                eprintln!("apmode: {e}");
                2
            }
        };
    }
    let out = args.out.or_else(|| cfg.experiment.output.clone());
    match run(&cfg, out.as_deref(), args.summary) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("apmode: {e}");
            2
        }
    }
}
