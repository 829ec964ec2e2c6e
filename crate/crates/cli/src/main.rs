//! `kmelia` command-line tool.
//!
//! Exit codes: 0 clean, 1 findings (deadlock, violation, parse error,
//! failed expectation), 2 usage or internal error.

mod demo;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use kmelia::analysis::{self, parse_goal, ProductOptions, Report, VerdictKind, DEFAULT_BOUND, GUARD_NOTE};
use kmelia::assembly::{check_dependencies, Assembly, AssemblyLoadError};
use kmelia::expr::{AbstractValue, Store, Value};
use kmelia::flatten::{flatten_behavior, DEFAULT_DEPTH_LIMIT};
use kmelia::sim::{self, Outcome, SimOptions};
use kmelia::syntax::{render_behavior, render_components, LoadError, SourceFile};
use kmelia::validate::validate_component;
use kmelia::ServiceKey;

#[derive(Parser)]
#[command(name = "kmelia", version, about = "Kmelia component toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Print the canonical form of a .kmelia file
    Parse { file: PathBuf },
    /// Validate .kmelia files and assembly files
    Check {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Print the flattened behavior of a service
    Flatten {
        file: PathBuf,
        #[arg(long)]
        service: String,
        /// Component holding the service, when the file has several
        #[arg(long)]
        component: Option<String>,
    },
    /// Build the synchronized product and check it
    Analyze {
        assembly: PathBuf,
        #[arg(long)]
        entry: ServiceKey,
        #[arg(long)]
        deadlocks: bool,
        /// Reachability goal, e.g. `active(Calendar.calendar)`
        #[arg(long)]
        reach: Option<String>,
        #[arg(long, env = "KMELIA_BOUND", default_value_t = DEFAULT_BOUND)]
        bound: usize,
        /// Entry argument `name=value`; unset parameters are unknown
        #[arg(long = "arg", value_name = "NAME=VALUE")]
        args: Vec<String>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Run a seeded simulation and print its trace as JSON lines
    Simulate {
        assembly: PathBuf,
        #[arg(long)]
        entry: ServiceKey,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        max_steps: usize,
        #[arg(long = "arg", value_name = "NAME=VALUE")]
        args: Vec<String>,
        /// Stop at the first postcondition violation
        #[arg(long)]
        fatal_post: bool,
        /// Write the trace here instead of standard output
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scripted registry session
    RegistryDemo { script: PathBuf },
}

/// Result of a command that ran to completion.
pub(crate) enum Status {
    Clean,
    Findings,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Status::Clean) => ExitCode::SUCCESS,
        Ok(Status::Findings) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Result<Status> {
    match cmd {
        Command::Parse { file } => parse(&file),
        Command::Check { files, format } => check(&files, format),
        Command::Flatten {
            file,
            service,
            component,
        } => flatten(&file, &service, component.as_deref()),
        Command::Analyze {
            assembly,
            entry,
            deadlocks,
            reach,
            bound,
            args,
            format,
        } => analyze(&assembly, &entry, deadlocks, reach.as_deref(), bound, &args, format),
        Command::Simulate {
            assembly,
            entry,
            seed,
            max_steps,
            args,
            fatal_post,
            out,
        } => simulate(&assembly, &entry, seed, max_steps, &args, fatal_post, out.as_deref()),
        Command::RegistryDemo { script } => demo::run(&script),
    }
}

fn parse(file: &Path) -> Result<Status> {
    match SourceFile::load(file) {
        Ok(src) => {
            print!("{}", render_components(&src.components));
            Ok(Status::Clean)
        }
        Err(LoadError::Parse { path, source }) => {
            eprintln!("{}:{source}", path.display());
            Ok(Status::Findings)
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(serde::Serialize)]
struct FileReport {
    file: String,
    ok: bool,
    findings: Vec<String>,
}

fn check_one(path: &Path) -> Result<FileReport> {
    let mut findings = Vec::new();
    let is_assembly = path.extension().is_some_and(|e| e == "json");
    let components = if is_assembly {
        match Assembly::load(path) {
            Ok(a) => {
                findings.extend(check_dependencies(&a).findings.iter().map(|f| f.to_string()));
                a.components().to_vec()
            }
            Err(e @ (AssemblyLoadError::Io { .. } | AssemblyLoadError::Source(LoadError::Io { .. }))) => {
                return Err(e.into())
            }
            Err(e) => {
                findings.push(e.to_string());
                Vec::new()
            }
        }
    } else {
        match SourceFile::load(path) {
            Ok(src) => src.components,
            Err(LoadError::Parse { source, .. }) => {
                findings.push(source.to_string());
                Vec::new()
            }
            Err(e) => return Err(e.into()),
        }
    };
    for c in &components {
        findings.extend(validate_component(c).violations.iter().map(|v| v.to_string()));
    }
    Ok(FileReport {
        file: path.display().to_string(),
        ok: findings.is_empty(),
        findings,
    })
}

fn check(files: &[PathBuf], format: Format) -> Result<Status> {
    // one thread per file; results are printed in input order
    let results: Vec<Result<FileReport>> = std::thread::scope(|s| {
        let handles: Vec<_> = files.iter().map(|f| s.spawn(move || check_one(f))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(anyhow!("checker thread panicked"))))
            .collect()
    });
    let reports = results.into_iter().collect::<Result<Vec<_>>>()?;
    match format {
        Format::Text => {
            for r in &reports {
                if r.ok {
                    println!("{}: ok", r.file);
                }
                for f in &r.findings {
                    println!("{}: {f}", r.file);
                }
            }
        }
        Format::Json => println!("{}", serde_json::to_string_pretty(&reports)?),
    }
    Ok(if reports.iter().all(|r| r.ok) {
        Status::Clean
    } else {
        Status::Findings
    })
}

fn flatten(file: &Path, service: &str, component: Option<&str>) -> Result<Status> {
    let src = SourceFile::load(file)?;
    let candidates: Vec<_> = src
        .components
        .iter()
        .filter(|c| component.is_none_or(|n| c.name == n) && c.services.contains_key(service))
        .collect();
    let c = match candidates.as_slice() {
        [c] => *c,
        [] => bail!("no component in {} has service `{service}`", file.display()),
        _ => bail!("several components have service `{service}`; pass --component"),
    };
    let b = flatten_behavior(c, service, DEFAULT_DEPTH_LIMIT)?;
    println!("BEHAVIOUR -- {}.{service}", c.name);
    print!("{}", render_behavior(&b, 2));
    Ok(Status::Clean)
}

fn parse_args(args: &[String]) -> Result<Store> {
    let mut store = Store::new();
    for a in args {
        let (name, value) = a
            .split_once('=')
            .ok_or_else(|| anyhow!("--arg expects NAME=VALUE, got `{a}`"))?;
        let v = match value {
            "true" => Value::Bool(true),
            "false" => Value::Bool(false),
            _ => Value::Int(
                value
                    .parse()
                    .with_context(|| format!("--arg {name}: `{value}` is not an integer or boolean"))?,
            ),
        };
        store.insert(name.to_string(), v);
    }
    Ok(store)
}

fn analyze(
    path: &Path,
    entry: &ServiceKey,
    deadlocks: bool,
    reach: Option<&str>,
    bound: usize,
    args: &[String],
    format: Format,
) -> Result<Status> {
    let goal = reach
        .map(parse_goal)
        .transpose()
        .map_err(|e| anyhow!("--reach: {e}"))?;
    let asm = Assembly::load(path)?;
    let opts = ProductOptions {
        bound,
        entry_args: parse_args(args)?
            .into_iter()
            .map(|(k, v)| (k, AbstractValue::Known(v)))
            .collect(),
    };
    let p = analysis::synchronized_product(&asm, entry, &opts)?;
    let mut verdicts = Vec::new();
    if deadlocks || goal.is_none() {
        let found = analysis::detect_deadlocks(&p);
        if found.is_empty() {
            verdicts.push(analysis::Verdict::ok());
        }
        verdicts.extend(found);
    }
    if let Some(g) = &goal {
        verdicts.push(analysis::check_reachability(&p, |s| g.holds(s, &p)));
    }
    let findings = verdicts.iter().any(|v| v.kind != VerdictKind::Ok);

    if p.truncated {
        eprintln!("warning: product truncated at {} states; absence of findings is not conclusive", bound);
    }
    match format {
        Format::Json => {
            let reports: Vec<Report> = verdicts.iter().map(|v| Report::new(v, &p)).collect();
            println!("{}", serde_json::to_string_pretty(&reports)?);
        }
        Format::Text => {
            let mut out = String::new();
            writeln!(out, "{} states, {} transitions ({GUARD_NOTE})", p.states.len(), p.transitions.len())?;
            for v in &verdicts {
                let kind = serde_json::to_value(v.kind)?;
                let kind = kind.as_str().unwrap_or_default();
                match &v.witness {
                    Some(w) => {
                        let steps: Vec<String> = w.iter().map(|l| l.to_string()).collect();
                        write!(out, "{kind}: [{}]", steps.join(", "))?;
                        if let Some(s) = v.state {
                            write!(out, " -> {}", p.states[s])?;
                        }
                        writeln!(out)?;
                    }
                    None => writeln!(out, "{kind}")?,
                }
            }
            for r in &p.reentrancy {
                writeln!(out, "re-entrant call: {} calls active {} on `{}`", r.caller, r.target, r.channel)?;
            }
            print!("{out}");
        }
    }
    Ok(if findings { Status::Findings } else { Status::Clean })
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    path: &Path,
    entry: &ServiceKey,
    seed: u64,
    max_steps: usize,
    args: &[String],
    fatal_post: bool,
    out: Option<&Path>,
) -> Result<Status> {
    let asm = Assembly::load(path)?;
    let run = sim::run_with(&asm, entry, &parse_args(args)?, seed, max_steps, SimOptions { fatal_post })?;
    let text = run.to_json_lines();
    match out {
        Some(p) => std::fs::write(p, &text).with_context(|| format!("cannot write {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(match run.outcome {
        Outcome::Deadlock | Outcome::Violation => Status::Findings,
        Outcome::Success | Outcome::StepBudgetExhausted => Status::Clean,
    })
}
