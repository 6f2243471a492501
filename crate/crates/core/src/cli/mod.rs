//! Command-line front end.
//!
//! Exit codes: 0 when every verdict passes, 1 on a bound or check violation,
//! 2 on malformed input or unsupported hardware.

pub mod config;
pub mod report;
pub mod trace;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::adversary::{build_baseline, congruent_variant, AdversaryError, RandomWorkload, SearchSpace};
use crate::engine::{simulate, SimError};
use crate::model::{Address, Cycle, HardwareConfig, TaskTrace};
use crate::verify::{
    check_pattern_lemma, check_policy_dominance, check_spatial_lemma, check_temporal_lemma, miub_bound,
    verify_upper_bound, VerifyError, VerifyOptions,
};
pub use config::{parse_system_config, ConfigError};
pub use report::{emit_report, Format, RunReport, Verdict};
pub use trace::{parse_trace, render_trace};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "miub", version, about = "Multicore interference bound simulator and verifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Text,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Text => Format::Text,
        }
    }
}

#[derive(Debug, Args)]
struct Output {
    /// Report destination (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Debug, Args)]
struct Inputs {
    /// System config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Target task trace.
    #[arg(long)]
    task: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print |P_crit| * (N-1) * L_mem.
    Bound {
        #[arg(long)]
        cores: usize,
        #[arg(long)]
        lmem: u64,
        /// Number of critical accesses.
        #[arg(long, required_unless_present = "task", conflicts_with = "task")]
        crit: Option<usize>,
        /// Count critical accesses from a trace instead.
        #[arg(long)]
        task: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Simulate one adversarial configuration.
    Simulate {
        #[command(flatten)]
        inputs: Inputs,
        /// Adversary document (JSON).
        #[arg(long, required_unless_present = "baseline", conflicts_with = "baseline")]
        adversaries: Option<PathBuf>,
        /// Use the baseline configuration instead.
        #[arg(long)]
        baseline: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Build, simulate and check the baseline configuration.
    Baseline {
        #[command(flatten)]
        inputs: Inputs,
        /// Write adversary trace files and an adversary document here.
        #[arg(long)]
        emit_dir: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Run the spatial, temporal, pattern and policy-dominance checks.
    CheckLemmas {
        #[command(flatten)]
        inputs: Inputs,
        /// Random configurations for the dominance check.
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Search a space of adversarial configurations for bound violations.
    Search {
        #[command(flatten)]
        inputs: Inputs,
        /// Search-space document (JSON).
        #[arg(long)]
        space: PathBuf,
        /// Evaluate configurations in parallel.
        #[arg(long)]
        parallel: bool,
        /// Worker threads; implies --parallel when greater than one.
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        output: Output,
    },
    /// Re-render a stored JSON report.
    Report {
        input: PathBuf,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error("{0}")]
    Input(String),
}

/// Entry point of the `miub` binary.
pub fn main_entry() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

/// Runs one invocation and returns its exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_PASS };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(rendered.as_bytes())
            } else {
                stdout.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_INPUT
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, CliError> {
    match command {
        Command::Bound {
            cores,
            lmem,
            crit,
            task,
            output,
        } => {
            let crit = match (crit, task) {
                (Some(c), _) => c,
                (None, Some(path)) => config::load_trace(&path)?.critical_count(),
                (None, None) => unreachable!("clap requires one of --crit and --task"),
            };
            let bound = miub_bound(cores, lmem, crit);
            let body = match output.format.map(Format::from).unwrap_or(Format::Text) {
                Format::Text => format!("{bound}\n"),
                Format::Json => report::to_canonical_json(&serde_json::json!({
                    "bound": bound,
                    "cores": cores,
                    "critical_count": crit,
                    "l_mem": lmem,
                })),
            };
            write_output(output.out.as_deref(), body.as_bytes(), stdout)?;
            Ok(EXIT_PASS)
        }
        Command::Simulate {
            inputs,
            adversaries,
            baseline,
            output,
        } => {
            let (hw, policy, task) = load_inputs(&inputs)?;
            let config = match adversaries {
                Some(path) => {
                    let base = path.parent().unwrap_or(Path::new("."));
                    config::parse_adversaries(&config::read(&path)?, base)?
                }
                None => {
                    debug_assert!(baseline);
                    build_baseline(&task, &hw)?
                }
            };
            let result = simulate(&hw, &task, &config, &policy)?;
            let mut report = RunReport::new("simulate", &hw, &task, &policy);
            report.simulation = Some((&config, &result).into());
            finish(report, output, stdout, stderr)
        }
        Command::Baseline { inputs, emit_dir, output } => {
            let (hw, policy, task) = load_inputs(&inputs)?;
            let config = build_baseline(&task, &hw)?;
            if let Some(dir) = emit_dir {
                for path in config::write_adversaries(&config, &dir)? {
                    let _ = writeln!(stderr, "wrote {}", path.display());
                }
            }
            let result = simulate(&hw, &task, &config, &policy)?;
            let mut report = RunReport::new("baseline", &hw, &task, &policy);
            report.simulation = Some((&config, &result).into());
            report.lemmas.push(check_pattern_lemma(&hw, &task));
            finish(report, output, stdout, stderr)
        }
        Command::CheckLemmas {
            inputs,
            samples,
            seed,
            output,
        } => {
            let (hw, policy, task) = load_inputs(&inputs)?;
            let mut report = RunReport::new("check-lemmas", &hw, &task, &policy);
            if hw.n_cores >= 2 {
                report.lemmas.push(check_spatial_lemma(&hw, &spatial_universe(&hw, &task)));
                let r = hw.adversary_count().min(3);
                let l = hw.l_mem as Cycle;
                let grid: Vec<Cycle> = (-(r as Cycle + 1)..=1).map(|k| k * l).collect();
                report.lemmas.push(check_temporal_lemma(&hw, r, &grid));
                report.lemmas.push(check_pattern_lemma(&hw, &task));
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let gen = RandomWorkload::new(hw.geometry);
                let mut configs = vec![build_baseline(&task, &hw)?];
                configs.extend((0..samples).map(|_| gen.config(&mut rng, &hw, task.len())));
                report.lemmas.push(check_policy_dominance(&hw, &task, configs));
            }
            finish(report, output, stdout, stderr)
        }
        Command::Search {
            inputs,
            space,
            parallel,
            jobs,
            output,
        } => {
            let (hw, policy, task) = load_inputs(&inputs)?;
            let settings = config::parse_search_space(&config::read(&space)?, &hw)?;
            let options = VerifyOptions {
                budget: u128::from(settings.budget),
                parallel: parallel || jobs.is_some_and(|j| j > 1),
                include_baseline: settings.include_baseline,
            };
            let search = || verify_upper_bound(&settings.space, &task, &policy, settings.mode, &options);
            let result = match jobs {
                Some(0) => return Err(CliError::Input("--jobs must be at least 1".into())),
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| CliError::Input(e.to_string()))?
                    .install(search),
                None => search(),
            }?;
            let mut report = RunReport::new("search", &hw, &task, &policy);
            report.search = Some(result);
            finish(report, output, stdout, stderr)
        }
        Command::Report { input, output } => {
            let text = config::read(&input)?;
            let stored: RunReport = serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("{}: not a run report: {e}", input.display())))?;
            if stored.evaluate() != stored.verdict {
                return Err(CliError::Input(format!(
                    "{}: stored verdict contradicts the report contents",
                    input.display()
                )));
            }
            let format = output.format.map(Format::from).unwrap_or(Format::Text);
            write_output(output.out.as_deref(), &emit_report(&stored, format), stdout)?;
            Ok(stored.exit_code())
        }
    }
}

fn load_inputs(inputs: &Inputs) -> Result<(HardwareConfig, crate::model::ArbitrationPolicy, TaskTrace), CliError> {
    let (hw, policy) = parse_system_config(&config::read(&inputs.config)?).map_err(|e| match e {
        ConfigError::Schema(msg) => ConfigError::Schema(format!("{}: {msg}", inputs.config.display())),
        other => other,
    })?;
    let task = config::load_trace(&inputs.task)?;
    Ok((hw, policy, task))
}

/// The target's lines, one congruent variant of each, and a 2 x 2 grid of
/// lines so that every conflict class occurs.
fn spatial_universe(hw: &HardwareConfig, task: &TaskTrace) -> Vec<Address> {
    let g = &hw.geometry;
    let mut lines: Vec<Address> = task.accesses.iter().map(|a| g.line_of(a.address)).collect();
    lines.sort_unstable();
    lines.dedup();
    lines.truncate(8);
    let variants: Vec<Address> = lines.iter().filter_map(|&a| congruent_variant(a, 1, g).ok()).collect();
    lines.extend(variants);
    lines.extend(SearchSpace::grid_universe(g, 0..=g.num_sets.min(2) - 1, 0..=1));
    lines.sort_unstable();
    lines.dedup();
    lines
}

fn finish(
    mut report: RunReport,
    output: Output,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, CliError> {
    report.finalize();
    let format = output.format.map(Format::from).unwrap_or(Format::Json);
    write_output(output.out.as_deref(), &emit_report(&report, format), stdout)?;
    let _ = writeln!(stderr, "{}", report.headline());
    Ok(report.exit_code())
}

fn write_output(out: Option<&Path>, bytes: &[u8], stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|source| {
            ConfigError::Io {
                path: path.display().to_string(),
                source,
            }
            .into()
        }),
        None => stdout
            .write_all(bytes)
            .map_err(|e| CliError::Input(format!("writing report: {e}"))),
    }
}
