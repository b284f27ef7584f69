use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bigbatch::harness::{
    compare_with_grids, opt_exit_code, parse_config, run_experiment, write_trace, Grid,
    HarnessError, RawConfig, SUMMARY_HEADER,
};
use bigbatch::{generate_quadratic, write_dataset, DataFormat, Method};

#[derive(Debug, Parser)]
#[command(name = "bigbatch", version, about = "Big-batch SGD experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run one optimizer and write its trace CSV
    Run {
        #[command(flatten)]
        raw: RawConfig,
        /// Flat `key = value` file; command-line flags take precedence
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Tune and compare several methods on one problem
    Compare {
        #[command(flatten)]
        raw: RawConfig,
        /// Flat `key = value` file; command-line flags take precedence
        #[arg(long)]
        config: Option<PathBuf>,
        /// Methods to compare (default: all)
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
        /// Run seeds, one run per seed and grid point
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        /// Stepsize grid for every method but sgd-decay (initial stepsize for line searches)
        #[arg(long, value_delimiter = ',')]
        grid_alpha: Vec<f64>,
        /// Grid for the sgd-decay numerator a
        #[arg(long, value_delimiter = ',')]
        grid_decay_a: Vec<f64>,
        /// Grid for the sgd-decay offset b
        #[arg(long, value_delimiter = ',')]
        grid_decay_b: Vec<f64>,
    },
    /// Write the samples of a synthetic quadratic problem as dense CSV
    GenQuadratic {
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        nu: f64,
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        xstar: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn sink(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_run(raw: RawConfig, config: Option<PathBuf>) -> Result<u8, HarnessError> {
    let cfg = parse_config(raw, config.as_deref())?;
    let report = run_experiment(&cfg)?;
    let mut out = sink(cfg.out.as_deref())?;
    write_trace(&mut out, &report.records, report.error())?;
    out.flush()?;
    Ok(match report.error() {
        Some(e) => {
            eprintln!("bigbatch: {e}");
            opt_exit_code(e)
        }
        None => 0,
    })
}

fn cmd_compare(
    mut raw: RawConfig,
    config: Option<PathBuf>,
    methods: Vec<Method>,
    seeds: Vec<u64>,
    grid: Grid,
) -> Result<u8, HarnessError> {
    let methods = if methods.is_empty() {
        Method::ALL.to_vec()
    } else {
        methods
    };
    raw.method.get_or_insert(methods[0]);
    let base = parse_config(raw, config.as_deref())?;
    let rows = compare_with_grids(&base, &methods, &seeds, &grid)?;
    let mut out = sink(base.out.as_deref())?;
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in &rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    out.flush()?;
    Ok(0)
}

fn cmd_gen(
    d: usize,
    n: usize,
    nu: f64,
    sigma: f64,
    xstar: f64,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<u8, HarnessError> {
    let problem = generate_quadratic(d, n, nu, sigma, &vec![xstar; d], seed)?;
    let mut w = sink(out.as_deref())?;
    write_dataset(problem.dataset(), DataFormat::DenseCsv, &mut w)?;
    w.flush()?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run { raw, config } => cmd_run(raw, config),
        Cmd::Compare {
            raw,
            config,
            methods,
            seeds,
            grid_alpha,
            grid_decay_a,
            grid_decay_b,
        } => cmd_compare(
            raw,
            config,
            methods,
            seeds,
            Grid {
                alpha: grid_alpha,
                decay_a: grid_decay_a,
                decay_b: grid_decay_b,
            },
        ),
        Cmd::GenQuadratic {
            d,
            n,
            nu,
            sigma,
            xstar,
            seed,
            out,
        } => cmd_gen(d, n, nu, sigma, xstar, seed, out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("bigbatch: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
