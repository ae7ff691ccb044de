use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use bkcert_verify::commands::{self, read_json, Output};
use bkcert_verify::config::{SuiteConfig, SuiteName};
use bkcert_verify::paths::{corollary_19_check, four_arm_check, punctured_box, FourArmInstance};
use bkcert_verify::report::{write_report, CheckRecord, RecordMode, Summary};
use bkcert_verify::suites::run_suite;
use clap::{Args, Parser, Subcommand};

/// Exact verification of BK-type inequalities and random-cluster
/// representations on small configuration spaces.
#[derive(Parser, Debug)]
#[command(name = "bkcert", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Tolerance `tau` for `lhs <= rhs + tau * max(1, |rhs|)`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    tolerance: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Which records to emit.
    #[arg(long, global = true, value_enum, default_value_t = RecordMode::All)]
    records: RecordMode,
    /// Keep per-record wall-clock times in the report.
    #[arg(long, global = true)]
    timings: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Counting inequality |A □ B| <= |A ∩ flip(B)| on {0,1}^n.
    Reimer {
        #[arg(long)]
        n: usize,
        /// Event A as a hex bitset over configuration indices.
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
    },
    /// mu(A ⊟ B) <= mu(A) mu(B) for one pair or all pairs of an event family.
    Bk {
        #[arg(long)]
        config: PathBuf,
        /// Rational arithmetic; the request must carry an `exact_family`.
        #[arg(long)]
        exact: bool,
    },
    /// Folded measure for a lock and pairing.
    Fold {
        #[arg(long)]
        config: PathBuf,
    },
    /// Validate the canonical base (Gibbs or matching) against its measure.
    RcrValidate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Dump the Gibbs random-cluster base of a potential.
    GibbsBase {
        #[arg(long)]
        config: PathBuf,
    },
    /// Conditions (i), (ii) and the cardinality inequality on every folding.
    Conditions {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve for the matching weights xi_j.
    Xi {
        #[arg(long)]
        n: usize,
        /// Curie-Weiss parameter, levels p_k = x^(k(n-k)).
        #[arg(long)]
        x: Option<String>,
        /// Explicit levels p_0..p_(n/2), comma separated.
        #[arg(long, value_delimiter = ',')]
        p: Option<Vec<String>>,
        #[arg(long)]
        exact: bool,
    },
    /// Compare count_matchings with a_kj.
    Matchings {
        /// Configuration as a 0/1 (or -/+) string, site 0 first.
        #[arg(long)]
        omega: String,
        #[arg(long)]
        j: usize,
    },
    /// Four-arm bound in the punctured box.
    FourArm {
        /// Instance file; otherwise built from --k, --j and --h.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Coupling on every box edge.
        #[arg(long, default_value_t = 0.5)]
        j: f64,
        /// Per-site fields (default zero).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        h: Option<Vec<f64>>,
    },
    /// Decoupled pair of plus connections.
    Corollary19 {
        #[arg(long)]
        config: PathBuf,
    },
    /// Negative (or positive) lattice condition.
    Nlc {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a named suite.
    Suite {
        /// Suite configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Suite name when no configuration file is given.
        #[arg(long, value_enum)]
        name: Option<SuiteName>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run only the record with this id.
        #[arg(long)]
        instance: Option<String>,
    },
}

fn tolerance(g: &Global, default: f64) -> Result<f64> {
    let t = g.tolerance.unwrap_or(default);
    if !(t.is_finite() && t >= 0.0) {
        bail!("tolerance must be finite and nonnegative, got {t}");
    }
    Ok(t)
}

fn sink(g: &Global) -> Result<Box<dyn Write>> {
    Ok(match &g.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn emit(g: &Global, name: &str, seed: u64, tol: f64, out: Output) -> Result<bool> {
    let pass = out.pass();
    let mut w = sink(g)?;
    match out {
        Output::Records(mut recs) => {
            let summary = Summary::from_records(name, seed, tol, &recs);
            write_report(&mut w, &mut recs, &summary, g.records, g.timings)?;
        }
        Output::Document { body, .. } => {
            serde_json::to_writer_pretty(&mut w, &body)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(pass)
}

fn run(cli: Cli) -> Result<bool> {
    let g = &cli.global;
    if let Some(0) = g.jobs {
        bail!("--jobs must be at least 1");
    }
    match cli.command {
        Command::Reimer { n, a, b } => {
            let tol = tolerance(g, 0.0)?;
            emit(g, "reimer", 0, tol, commands::reimer(n, &a, &b)?)
        }
        Command::Bk { config, exact } => {
            let tol = tolerance(g, 1e-9)?;
            emit(
                g,
                "bk",
                0,
                tol,
                commands::bk(&read_json(&config)?, exact, tol)?,
            )
        }
        Command::Fold { config } => {
            emit(g, "fold", 0, 0.0, commands::fold_cmd(&read_json(&config)?)?)
        }
        Command::RcrValidate { config } => emit(
            g,
            "rcr-validate",
            0,
            0.0,
            commands::rcr_validate(&read_json(&config)?)?,
        ),
        Command::GibbsBase { config } => emit(
            g,
            "gibbs-base",
            0,
            0.0,
            commands::gibbs_base_cmd(&read_json(&config)?)?,
        ),
        Command::Conditions { config } => {
            let out = with_jobs(g, || commands::conditions(&read_json(&config)?))?;
            emit(g, "conditions", 0, 0.0, out)
        }
        Command::Xi { n, x, p, exact } => emit(
            g,
            "xi",
            0,
            0.0,
            commands::xi(n, x.as_deref(), p.as_deref(), exact)?,
        ),
        Command::Matchings { omega, j } => {
            emit(g, "matchings", 0, 0.0, commands::matchings(&omega, j)?)
        }
        Command::FourArm { config, k, j, h } => {
            let tol = tolerance(g, 1e-9)?;
            let inst = match config {
                Some(p) => read_json(&p)?,
                None => {
                    let (coords, graph) = punctured_box(k)?;
                    FourArmInstance {
                        k,
                        j: vec![j; graph.edges().len()],
                        h: h.unwrap_or_else(|| vec![0.0; coords.len()]),
                    }
                }
            };
            let rec = four_arm_check(format!("four-arm/k={}", inst.k), &inst, tol)?;
            emit(g, "four-arm", 0, tol, Output::Records(vec![rec]))
        }
        Command::Corollary19 { config } => {
            let tol = tolerance(g, 1e-9)?;
            let rec = corollary_19_check("corollary19".into(), &read_json(&config)?, tol)?;
            emit(g, "corollary19", 0, tol, Output::Records(vec![rec]))
        }
        Command::Nlc { config } => {
            let tol = tolerance(g, 1e-12)?;
            emit(g, "nlc", 0, tol, commands::nlc(&read_json(&config)?, tol)?)
        }
        Command::Suite {
            config,
            name,
            seed,
            instance,
        } => {
            let mut cfg = match (config, name) {
                (Some(p), None) => SuiteConfig::load(&p)?,
                (None, Some(n)) => SuiteConfig::new(n),
                _ => bail!("give exactly one of --config and --name"),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if g.tolerance.is_some() {
                cfg.tolerance = g.tolerance;
            }
            if g.jobs.is_some() {
                cfg.jobs = g.jobs;
            }
            let out_path = g.out.clone().or(cfg.out.clone());
            let mut run = run_suite(&cfg, instance.as_deref())?;
            let mut w: Box<dyn Write> = match out_path {
                Some(p) => Box::new(BufWriter::new(File::create(p)?)),
                None => Box::new(BufWriter::new(std::io::stdout().lock())),
            };
            write_report(&mut w, &mut run.records, &run.summary, g.records, g.timings)?;
            w.flush()?;
            report_failures(&run.records);
            Ok(run.summary.all_pass())
        }
    }
}

fn with_jobs<T: Send>(g: &Global, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = g.jobs {
        b = b.num_threads(j);
    }
    b.build()?.install(f)
}

fn report_failures(records: &[CheckRecord]) {
    let failed: Vec<&str> = records
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.id.as_str())
        .collect();
    if !failed.is_empty() {
        eprintln!("{} failing record(s), first: {}", failed.len(), failed[0]);
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
