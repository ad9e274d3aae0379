//! `nonexp` command-line front end.
//!
//! Exit codes: 0 pass, 1 usage or validation error, 2 violation or other
//! negative finding.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use nonexp::catalog::{self, get_system};
use nonexp::contraction::{certify_linear, check_demidovich_with, margin_map, Domain};
use nonexp::document::{System, SystemDocument};
use nonexp::limitset::classify_limit_set;
use nonexp::odeint::{distance_series, format_f64, trace, Termination};
use nonexp::reproduce::{reproduce, Case};

#[derive(Debug, Parser)]
#[command(name = "nonexp", version, about = "Nonexpansivity checks and limit-set classification for ODEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the Demidovich condition for the document's field and norm.
    Check {
        doc: PathBuf,
        /// Number of state samples.
        #[arg(long)]
        samples: Option<usize>,
        /// Number of direction samples.
        #[arg(long)]
        directions: Option<usize>,
        #[arg(long, env = "NONEXP_SEED")]
        seed: Option<u64>,
        /// Exact certificate; needs a linear field and an l2, weighted l2 or
        /// polyhedral norm.
        #[arg(long)]
        exact: bool,
        /// Directory for margins.csv and distance_series.csv.
        #[arg(long, value_name = "DIR")]
        plot_data: Option<PathBuf>,
    },
    /// Classify the omega-limit set of a trajectory.
    Classify {
        doc: PathBuf,
        /// Initial state, comma separated; defaults to the document's x0.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        /// Total integration time (transient + window).
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        transient: Option<f64>,
    },
    /// Integrate a trajectory and write it as CSV.
    Simulate {
        doc: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
        #[arg(long, default_value_t = 0.1)]
        dt: f64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a worked example and print one line per subcheck.
    Reproduce {
        #[arg(long, value_parser = parse_case)]
        case: Case,
    },
    /// List catalog systems, or print one as a system document.
    Catalog {
        name: Option<String>,
        /// Parameter as key=value; repeatable.
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, f64)>,
    },
}

fn parse_case(s: &str) -> Result<Case, String> {
    s.parse().map_err(|e: nonexp::Error| e.to_string())
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected key=value")?;
    let v: f64 = v.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((k.trim().to_string(), v))
}

/// Failure carrying its exit code.
struct Exit(u8, anyhow::Error);

fn usage(e: impl Into<anyhow::Error>) -> Exit {
    Exit(1, e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Exit(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<u8, Exit> {
    match cli.command {
        Command::Check {
            doc,
            samples,
            directions,
            seed,
            exact,
            plot_data,
        } => cmd_check(&doc, samples, directions, seed, exact, plot_data.as_deref()),
        Command::Classify {
            doc,
            x0,
            horizon,
            transient,
        } => cmd_classify(&doc, x0, horizon, transient),
        Command::Simulate {
            doc,
            x0,
            horizon,
            dt,
            out,
        } => cmd_simulate(&doc, x0, horizon, dt, out.as_deref()),
        Command::Reproduce { case } => cmd_reproduce(case),
        Command::Catalog { name, params } => cmd_catalog(name.as_deref(), params),
    }
}

fn load(path: &Path) -> Result<System, Exit> {
    SystemDocument::from_path(path)
        .and_then(|d| d.build())
        .with_context(|| format!("invalid document {}", path.display()))
        .map_err(usage)
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Exit> {
    let s = serde_json::to_string_pretty(value).map_err(|e| Exit(1, e.into()))?;
    match writeln!(io::stdout().lock(), "{s}") {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Exit(1, e.into())),
        _ => Ok(()),
    }
}

fn cmd_check(
    path: &Path,
    samples: Option<usize>,
    directions: Option<usize>,
    seed: Option<u64>,
    exact: bool,
    plot_data: Option<&Path>,
) -> Result<u8, Exit> {
    let sys = load(path)?;
    let mut opts = sys.check;
    if let Some(v) = samples {
        opts.nx = v;
    }
    if let Some(v) = directions {
        opts.nv = v;
    }
    if let Some(v) = seed {
        opts.seed = v;
    }
    let report = if exact {
        let a = sys
            .field
            .linear_part()
            .ok_or_else(|| usage(anyhow!("--exact needs a linear field")))?;
        if !sys.norm.has_exact_measure() {
            return Err(usage(anyhow!("--exact is not available for the {} norm", sys.norm.label())));
        }
        certify_linear(&a, &sys.norm).map_err(usage)?
    } else {
        check_demidovich_with(&sys.field, &sys.norm, &sys.domain, &opts).map_err(usage)?
    };
    if let Some(dir) = plot_data {
        write_plot_data(dir, &sys, &opts).map_err(|e| Exit(1, e))?;
    }
    print_json(&report)?;
    Ok(if report.verdict.passed() { 0 } else { 2 })
}

fn write_plot_data(dir: &Path, sys: &System, opts: &nonexp::contraction::DemidovichOptions) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let n = sys.field.dimension();
    let domain = match &sys.domain {
        Domain::Global => Domain::cube(n, nonexp::document::DEFAULT_HALF_WIDTH),
        d => d.clone(),
    };
    let mut w = BufWriter::new(File::create(dir.join("margins.csv"))?);
    let header: Vec<String> = (1..=n).map(|i| format!("x{i}")).chain(["margin".to_string()]).collect();
    writeln!(w, "{}", header.join(","))?;
    for (x, m) in margin_map(&sys.field, &sys.norm, &domain, opts)? {
        let row: Vec<String> = x.iter().chain([&m]).map(|v| format_f64(*v)).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;

    let (a, b) = match &domain {
        Domain::Box { lower, upper } => (lower.clone(), upper.clone()),
        Domain::Ball { center, radius } => {
            let mut a = center.clone();
            let mut b = center.clone();
            a[0] -= radius;
            b[0] += radius;
            (a, b)
        }
        Domain::Global => unreachable!(),
    };
    let series = distance_series(&sys.field, &a, &b, &sys.norm, 10.0, 0.05, &sys.integrator)?;
    let mut w = BufWriter::new(File::create(dir.join("distance_series.csv"))?);
    writeln!(w, "t,distance")?;
    for (t, d) in series {
        writeln!(w, "{},{}", format_f64(t), format_f64(d))?;
    }
    w.flush()?;
    Ok(())
}

fn initial_state(sys: &System, x0: Option<Vec<f64>>) -> Result<Vec<f64>, Exit> {
    let x0 = x0
        .or_else(|| sys.x0.clone())
        .ok_or_else(|| usage(anyhow!("no initial state: pass --x0 or set x0 in the document")))?;
    if x0.len() != sys.field.dimension() {
        return Err(usage(anyhow!(
            "x0 has {} entries, the system has dimension {}",
            x0.len(),
            sys.field.dimension()
        )));
    }
    Ok(x0)
}

fn cmd_classify(path: &Path, x0: Option<Vec<f64>>, horizon: Option<f64>, transient: Option<f64>) -> Result<u8, Exit> {
    let sys = load(path)?;
    let x0 = initial_state(&sys, x0)?;
    let mut config = sys.classify.clone();
    if let Some(t) = transient {
        config.transient = t;
    }
    if let Some(h) = horizon {
        if !(h > config.transient) {
            return Err(usage(anyhow!("horizon must exceed the transient ({})", config.transient)));
        }
        config.window = h - config.transient;
    }
    config.validate().map_err(usage)?;
    let report = classify_limit_set(&sys.field, &x0, &sys.norm, &config, &sys.integrator);
    print_json(&report.to_doc())?;
    Ok(0)
}

fn cmd_simulate(path: &Path, x0: Option<Vec<f64>>, horizon: f64, dt: f64, out: Option<&Path>) -> Result<u8, Exit> {
    let sys = load(path)?;
    let x0 = initial_state(&sys, x0)?;
    let traj = trace(&sys.field, &x0, horizon, dt, &sys.integrator).map_err(usage)?;
    let written = match out {
        Some(p) => File::create(p)
            .and_then(|f| traj.write_csv(BufWriter::new(f)))
            .with_context(|| format!("writing {}", p.display())),
        None => traj.write_csv(io::stdout().lock()).context("writing stdout"),
    };
    written.map_err(|e| Exit(1, e))?;
    if traj.termination != Termination::ReachedHorizon {
        eprintln!(
            "trajectory stopped early ({:?}) at t = {}",
            traj.termination,
            traj.stopped_at.map(format_f64).unwrap_or_default()
        );
        return Ok(2);
    }
    Ok(0)
}

fn cmd_reproduce(case: Case) -> Result<u8, Exit> {
    let report = reproduce(case).map_err(|e| Exit(1, e.into()))?;
    for s in &report.subchecks {
        eprintln!("{} {}", if s.passed { "PASS" } else { "FAIL" }, s.name);
    }
    print_json(&report)?;
    Ok(if report.passed { 0 } else { 2 })
}

fn cmd_catalog(name: Option<&str>, params: Vec<(String, f64)>) -> Result<u8, Exit> {
    let Some(name) = name else {
        let list: Vec<&str> = catalog::names().collect();
        print_json(&list)?;
        return Ok(0);
    };
    let mut map: BTreeMap<String, f64> = catalog::default_params(name);
    map.extend(params);
    let entry = get_system(name, &map).map_err(usage)?;
    print_json(&SystemDocument::from(&entry))?;
    Ok(0)
}
