//! `mygo`: run, evaluate and inspect wake-sleep continual learning experiments.
//!
//! Exit codes: 0 success, 1 generic failure, 2 I/O failure, 3 domain error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mygo::config::{parse_config_with, BenchmarkKind, ExperimentConfig};
use mygo::container::load_model;
use mygo::engine::StrategyKind;
use mygo::experiment::{eval_csv, evaluate_model, load_seeded_benchmark, run_experiment, write_experiment};
use mygo::memory::load_memory;
use mygo::report::{comparison_table, emit_accuracy_svg, emit_dream_grid, percent, RunLog};
use mygo::rng::Rng;
use mygo::Error;

#[derive(Parser)]
#[command(name = "mygo", version, about = "Wake-sleep continual learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured strategies and write their reports.
    Run {
        /// Flat `key = value` config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one config key, e.g. `--set strategy=both`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Score a saved model on a benchmark's test splits.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_parser = parse_benchmark)]
        benchmark: BenchmarkKind,
        /// Config used for the run; seed and data settings must match it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Directory for `eval.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render samples of a stored image memory as a PGM grid.
    Dream {
        #[arg(long)]
        memory: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Grid size as ROWSxCOLS.
        #[arg(long, default_value = "4x4", value_parser = parse_grid)]
        grid: (usize, usize),
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Combine finished runs into a comparison table and accuracy chart.
    Report {
        /// `report.json` files, or directories holding them directly or one level down.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_benchmark(s: &str) -> Result<BenchmarkKind, String> {
    BenchmarkKind::parse(s).ok_or_else(|| format!("expected split_mnist or split_text, found {s:?}"))
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected ROWSxCOLS, found {s:?}"))?;
    let rows: usize = r.parse().map_err(|_| format!("bad row count {r:?}"))?;
    let cols: usize = c.parse().map_err(|_| format!("bad column count {c:?}"))?;
    if rows == 0 || cols == 0 {
        return Err("grid dimensions must be positive".into());
    }
    Ok((rows, cols))
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => 2,
        Error::Domain(_) => 3,
        _ => 1,
    }
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> mygo::Result<ExperimentConfig> {
    match path {
        Some(p) => parse_config_with(p, overrides),
        None => ExperimentConfig::from_text("", overrides),
    }
}

fn write_text(path: &Path, text: &str) -> mygo::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    }
    fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn cmd_run(config: Option<&Path>, overrides: &[String]) -> mygo::Result<()> {
    let cfg = load_config(config, overrides)?;
    let exp = run_experiment(&cfg)?;
    write_experiment(&exp, &cfg.out_dir)?;
    let logs = exp.logs();
    if logs.len() > 1 {
        print!("{}", comparison_table(&logs));
    }
    for log in &logs {
        let avg = log.final_average().unwrap_or(0.0);
        println!("{}: final average accuracy {}%", log.strategy.label(), percent(avg));
    }
    println!("reports written to {}", cfg.out_dir.display());
    Ok(())
}

fn cmd_eval(
    model: &Path,
    benchmark: BenchmarkKind,
    config: Option<&Path>,
    overrides: &[String],
    out: Option<&Path>,
) -> mygo::Result<()> {
    let mut cfg = load_config(config, overrides)?;
    cfg.benchmark = benchmark;
    let model = load_model(model)?;
    let bench = load_seeded_benchmark(&cfg)?;
    let accuracies = evaluate_model(&model, &bench)?;
    for (t, a) in accuracies.iter().enumerate() {
        println!("task {}: {}%", t + 1, percent(*a));
    }
    let csv = eval_csv(&accuracies)?;
    if let Some(dir) = out {
        write_text(&dir.join("eval.csv"), &csv)?;
    }
    Ok(())
}

fn cmd_dream(memory: &Path, out: &Path, (rows, cols): (usize, usize), seed: u64) -> mygo::Result<()> {
    let memory = load_memory(memory)?;
    emit_dream_grid(&memory, rows, cols, out, &mut Rng::new(seed))?;
    println!("wrote {rows}x{cols} dreams of task {} to {}", memory.task_id, out.display());
    Ok(())
}

fn find_reports(path: &Path) -> mygo::Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let direct = path.join("report.json");
    if direct.is_file() {
        return Ok(vec![direct]);
    }
    let entries = fs::read_dir(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    let mut found: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path().join("report.json"))
        .filter(|p| p.is_file())
        .collect();
    found.sort();
    if found.is_empty() {
        return Err(Error::Domain(format!("{}: no report.json found", path.display())));
    }
    Ok(found)
}

fn cmd_report(runs: &[PathBuf], out: &Path) -> mygo::Result<()> {
    let mut logs = Vec::new();
    for run in runs {
        let mut found = Vec::new();
        for path in find_reports(run)? {
            let text = fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            found.push(RunLog::from_json(&text)?);
        }
        // Same order as `run` writes them.
        found.sort_by_key(|l| l.strategy != StrategyKind::Mygo);
        logs.extend(found);
    }
    let table = comparison_table(&logs);
    write_text(&out.join("comparison.txt"), &table)?;
    emit_accuracy_svg(&logs, &out.join("accuracy.svg"))?;
    print!("{table}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run { config, overrides } => cmd_run(config.as_deref(), overrides),
        Command::Eval { model, benchmark, config, overrides, out } => {
            cmd_eval(model, *benchmark, config.as_deref(), overrides, out.as_deref())
        }
        Command::Dream { memory, out, grid, seed } => cmd_dream(memory, out, *grid, *seed),
        Command::Report { runs, out } => cmd_report(runs, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
