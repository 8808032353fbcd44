//! `privhist` command-line tool.
//!
//! Exit status: 0 on success, 2 for usage and input errors, 1 for internal
//! failures. Data goes to stdout, diagnostics to stderr.

use std::fmt::Display;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use privhist::estimators::{
    builtin_coefficients, estimate, estimate_release, lipschitz_report, parse_coefficient_table,
    PropertyCoefficients,
};
use privhist::format::{parse, render, Format};
use privhist::harness::{
    generate_histogram, run_privacy_audit, run_utility_experiment, write_csv, write_json, AuditConfig,
    AuditMechanism, ExperimentConfig, Generator, MechanismKind,
};
use privhist::histogram::{l1_upper_bounds, sorted_l1};
use privhist::mechanism::{privhist_with, BudgetSplit, ReleaseOptions};
use privhist::noise::{parse_seed, RandomSource, SEED_ENV};
use privhist::{AnonymizedHistogram, PrivacyBudget};

#[derive(Parser)]
#[command(name = "privhist", version, about = "Differentially private anonymized histograms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Release a private histogram `(H, N)`.
    Release(ReleaseArgs),
    /// Sorted-l1 distance between two histograms.
    Distance(DistanceArgs),
    /// Private plug-in estimate of a symmetric property.
    Estimate(EstimateArgs),
    /// Utility sweep over n and epsilon.
    Bench(BenchArgs),
    /// Monte-Carlo privacy audit on all small neighbor pairs.
    Audit(AuditArgs),
    /// Draw a synthetic histogram.
    Gen(GenArgs),
}

#[derive(Args)]
struct SeedArg {
    /// Integer seed, or `random` for OS entropy.
    #[arg(long, env = SEED_ENV, default_value = "42")]
    seed: String,
}

#[derive(Args)]
struct BudgetArgs {
    #[arg(long, short, allow_negative_numbers = true)]
    epsilon: f64,
    /// Three fractions `a,b,c` summing to 1 (decimals or p/q), or `low-optimized`.
    #[arg(long, default_value = "1/3,1/3,1/3")]
    budget_split: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Tsv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Tsv => Format::Tsv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Args)]
struct ReleaseArgs {
    /// Input histogram (`-` for stdin).
    input: PathBuf,
    #[command(flatten)]
    budget: BudgetArgs,
    #[command(flatten)]
    seed: SeedArg,
    /// Output path; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Sidecar metadata path. Defaults to `<output>.meta.json`; with no output
    /// the metadata goes to stderr.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Write the full mechanism trace as JSON.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Histogram format for input and output; guessed from extensions otherwise.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args)]
struct DistanceArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Also print the two cumulative-prevalence upper bounds.
    #[arg(long)]
    bounds: bool,
}

#[derive(Args)]
struct EstimateArgs {
    input: PathBuf,
    /// Built-in coefficient set.
    #[arg(long, default_value = "entropy-plugin", conflicts_with = "coefficients")]
    property: String,
    /// Custom `r<TAB>f(r,n)` table for a fixed n.
    #[arg(long)]
    coefficients: Option<PathBuf>,
    #[command(flatten)]
    budget: BudgetArgs,
    #[command(flatten)]
    seed: SeedArg,
    /// Also print the non-private estimate on the raw input.
    #[arg(long)]
    no_privacy: bool,
    /// Print max_r |f(r,N) - f(r+1,N)| for the chosen coefficients.
    #[arg(long)]
    lipschitz: bool,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorKind {
    UniformK,
    Zipf,
    SingleHeavy,
    TwoScale,
    FromFile,
}

#[derive(Args)]
struct GeneratorArgs {
    #[arg(long, value_enum)]
    generator: Option<GeneratorKind>,
    /// Number of bins (uniform-k, zipf).
    #[arg(long)]
    k: Option<u64>,
    /// Zipf exponent.
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    /// Two-scale block bits as a 0/1 string; random when absent.
    #[arg(long)]
    bits: Option<String>,
    /// Source histogram for from-file.
    #[arg(long)]
    from: Option<PathBuf>,
}

impl GeneratorArgs {
    fn build(&self) -> Result<Generator, Failure> {
        let kind = self.generator.ok_or_else(|| usage("--generator is required"))?;
        let gen = match kind {
            GeneratorKind::UniformK => Generator::UniformK {
                k: self.k.ok_or_else(|| usage("uniform-k needs --k"))?,
            },
            GeneratorKind::Zipf => Generator::Zipf { s: self.s, k: self.k },
            GeneratorKind::SingleHeavy => Generator::SingleHeavy,
            GeneratorKind::TwoScale => Generator::TwoScale {
                bits: self
                    .bits
                    .as_deref()
                    .map(|b| {
                        b.chars()
                            .map(|c| match c {
                                '0' => Ok(false),
                                '1' => Ok(true),
                                _ => Err(usage(format!("--bits must be a 0/1 string, got '{b}'"))),
                            })
                            .collect()
                    })
                    .transpose()?,
            },
            GeneratorKind::FromFile => Generator::FromFile {
                path: self.from.clone().ok_or_else(|| usage("from-file needs --from"))?,
            },
        };
        Ok(gen)
    }
}

#[derive(Args)]
struct BenchArgs {
    /// TOML or JSON experiment config; replaces the flags below.
    #[arg(long, conflicts_with_all = ["generator", "n_grid", "epsilon_grid"])]
    config: Option<PathBuf>,
    #[command(flatten)]
    generator: GeneratorArgs,
    #[arg(long, value_delimiter = ',')]
    n_grid: Vec<u64>,
    #[arg(long, value_delimiter = ',')]
    epsilon_grid: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long, value_delimiter = ',', default_value = "privhist")]
    mechanisms: Vec<String>,
    #[arg(long)]
    budget_split: Option<String>,
    /// Padding length for the baseline.
    #[arg(long)]
    baseline_domain: Option<u64>,
    /// Record wall time (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
    /// CSV results path; CSV goes to stdout when neither output is set.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AuditMechanismArg {
    Privhist,
    IncorrectPrevalenceNoise,
}

#[derive(Args)]
struct AuditArgs {
    /// TOML or JSON audit config; replaces the flags below.
    #[arg(long, conflicts_with_all = ["epsilon", "max_items", "runs"])]
    config: Option<PathBuf>,
    #[arg(long, short, allow_negative_numbers = true)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 3)]
    max_items: u64,
    /// Releases per input histogram.
    #[arg(long, default_value_t = 10_000)]
    runs: u64,
    #[arg(long, default_value_t = 0.99)]
    confidence: f64,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long, value_enum, default_value = "privhist")]
    mechanism: AuditMechanismArg,
    /// CSV report path; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Exit 1 when any pair is flagged.
    #[arg(long)]
    fail_on_flag: bool,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    generator: GeneratorArgs,
    #[arg(long, short)]
    n: u64,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

struct Failure {
    code: u8,
    message: String,
}

fn usage(e: impl Display) -> Failure {
    Failure {
        code: 2,
        message: e.to_string(),
    }
}

fn internal(e: impl Display) -> Failure {
    Failure {
        code: 1,
        message: e.to_string(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Release(a) => release(a),
        Command::Distance(a) => distance(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Bench(a) => bench(a),
        Command::Audit(a) => audit(a),
        Command::Gen(a) => gen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("privhist: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn budget(b: &BudgetArgs) -> Result<PrivacyBudget, Failure> {
    let split: BudgetSplit = b.budget_split.parse().map_err(usage)?;
    PrivacyBudget::with_split(b.epsilon, split).map_err(usage)
}

fn seed_value(s: &SeedArg) -> Result<u64, Failure> {
    Ok(match parse_seed(&s.seed).map_err(usage)? {
        Some(seed) => seed,
        None => RandomSource::from_entropy().seed(),
    })
}

fn input_format(path: &Path, flag: Option<FormatArg>) -> Format {
    flag.map(Format::from).unwrap_or_else(|| Format::from_path(path))
}

fn read_input(path: &Path, flag: Option<FormatArg>) -> Result<AnonymizedHistogram, Failure> {
    let text = if path.as_os_str() == "-" {
        let mut buf = String::new();
        io::stdin().read_to_string(&mut buf).map_err(usage)?;
        buf
    } else {
        fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?
    };
    parse(&text, input_format(path, flag)).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write_out(path: Option<&Path>, data: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, data).map_err(|e| internal(format!("{}: {e}", p.display()))),
        None => io::stdout().write_all(data.as_bytes()).map_err(internal),
    }
}

fn release(a: ReleaseArgs) -> Result<(), Failure> {
    let budget = budget(&a.budget)?;
    let seed = seed_value(&a.seed)?;
    let h = read_input(&a.input, a.format)?;
    let mut rng = RandomSource::new(seed);
    let (out, _) = privhist_with(&h, &budget, &mut rng, ReleaseOptions { trace: a.trace.is_some() })
        .map_err(internal)?;

    let format = match (a.format, &a.output) {
        (Some(f), _) => f.into(),
        (None, Some(p)) => Format::from_path(p),
        (None, None) => Format::Tsv,
    };
    write_out(a.output.as_deref(), &render(&out.histogram, format))?;

    let meta = serde_json::json!({
        "n_estimate": out.n_estimate,
        "epsilon": budget.epsilon,
        "path": out.path.as_str(),
    });
    let meta = serde_json::to_string_pretty(&meta).map_err(internal)? + "\n";
    let sidecar = a.sidecar.clone().or_else(|| {
        a.output.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".meta.json");
            PathBuf::from(s)
        })
    });
    match sidecar {
        Some(p) => write_out(Some(&p), &meta)?,
        None => eprint!("{meta}"),
    }
    if let (Some(p), Some(trace)) = (&a.trace, &out.trace) {
        write_out(Some(p), &(trace.to_json() + "\n"))?;
    }
    Ok(())
}

fn distance(a: DistanceArgs) -> Result<(), Failure> {
    let x = read_input(&a.a, a.format)?;
    let y = read_input(&a.b, a.format)?;
    let d = sorted_l1(&x, &y);
    if a.bounds {
        let (cum, prev) = l1_upper_bounds(&x, &y);
        println!("{d}\t{cum}\t{prev}");
    } else {
        println!("{d}");
    }
    Ok(())
}

fn estimate_cmd(a: EstimateArgs) -> Result<(), Failure> {
    let budget = budget(&a.budget)?;
    let seed = seed_value(&a.seed)?;
    let coeffs = match &a.coefficients {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            let table = parse_coefficient_table(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            PropertyCoefficients::from_table(path.display().to_string(), table)
        }
        None => builtin_coefficients(&a.property).map_err(usage)?,
    };
    let h = read_input(&a.input, a.format)?;

    let mut rng = RandomSource::new(seed);
    let (out, _) = privhist_with(&h, &budget, &mut rng, ReleaseOptions::default()).map_err(internal)?;
    let est = estimate_release(&out, &coeffs).map_err(usage)?;

    let mut lines = vec![
        format!("property\t{}", coeffs.name()),
        format!("dp_estimate\t{}", est.value),
        format!("n_estimate\t{}", out.n_estimate),
    ];
    if est.empty_release {
        lines.push("flag\tempty-release".into());
    }
    if a.no_privacy {
        let plain = match h.total_items() {
            0 => 0.0,
            n => estimate(&h, n, &coeffs).map_err(usage)?,
        };
        lines.push(format!("non_private_estimate\t{plain}"));
    }
    if a.lipschitz && out.n_estimate > 0 {
        lines.push(format!("lipschitz\t{}", lipschitz_report(&coeffs, out.n_estimate)));
    }
    println!("{}", lines.join("\n"));
    Ok(())
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    let cfg = match &a.config {
        Some(path) => ExperimentConfig::from_path(path).map_err(|e| usage(format!("{}: {e}", path.display())))?,
        None => {
            let cfg = ExperimentConfig {
                generator: a.generator.build()?,
                n_grid: a.n_grid.clone(),
                epsilon_grid: a.epsilon_grid.clone(),
                trials: a.trials,
                seed: seed_value(&a.seed)?,
                mechanisms: a
                    .mechanisms
                    .iter()
                    .map(|m| m.parse::<MechanismKind>())
                    .collect::<Result<_, _>>()
                    .map_err(usage)?,
                budget_split: a.budget_split.clone(),
                baseline_domain: a.baseline_domain,
                timing: a.timing,
            };
            cfg.validate().map_err(usage)?;
            cfg
        }
    };
    if let Some(split) = &cfg.budget_split {
        split.parse::<BudgetSplit>().map_err(usage)?;
    }
    for &eps in &cfg.epsilon_grid {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(usage("epsilon must be positive"));
        }
    }

    let rows = run_utility_experiment(&cfg).map_err(internal)?;
    if let Some(p) = &a.csv {
        let f = fs::File::create(p).map_err(|e| internal(format!("{}: {e}", p.display())))?;
        write_csv(&rows, f).map_err(internal)?;
    }
    if let Some(p) = &a.json {
        let f = fs::File::create(p).map_err(|e| internal(format!("{}: {e}", p.display())))?;
        write_json(&rows, f).map_err(internal)?;
    }
    if a.csv.is_none() && a.json.is_none() {
        write_csv(&rows, io::stdout().lock()).map_err(internal)?;
    }
    Ok(())
}

fn audit(a: AuditArgs) -> Result<(), Failure> {
    let cfg = match &a.config {
        Some(path) => AuditConfig::from_path(path).map_err(|e| usage(format!("{}: {e}", path.display())))?,
        None => {
            let cfg = AuditConfig {
                max_items: a.max_items,
                epsilon: a.epsilon.ok_or_else(|| usage("--epsilon is required"))?,
                runs_per_input: a.runs,
                confidence: a.confidence,
                seed: seed_value(&a.seed)?,
                mechanism: match a.mechanism {
                    AuditMechanismArg::Privhist => AuditMechanism::Privhist,
                    AuditMechanismArg::IncorrectPrevalenceNoise => AuditMechanism::IncorrectPrevalenceNoise,
                },
            };
            cfg.validate().map_err(usage)?;
            cfg
        }
    };

    let report = run_privacy_audit(&cfg).map_err(internal)?;
    match &a.output {
        Some(p) => {
            let f = fs::File::create(p).map_err(|e| internal(format!("{}: {e}", p.display())))?;
            report.write_csv(f).map_err(internal)?;
        }
        None => report.write_csv(io::stdout().lock()).map_err(internal)?,
    }
    eprintln!(
        "audited {} neighbor pairs over {} inputs at epsilon {}: {} flagged",
        report.rows.len(),
        report.inputs,
        report.epsilon,
        report.flagged
    );
    if a.fail_on_flag && report.flagged > 0 {
        return Err(internal(format!("{} pairs exceed epsilon", report.flagged)));
    }
    Ok(())
}

fn gen(a: GenArgs) -> Result<(), Failure> {
    let generator = a.generator.build()?;
    let seed = seed_value(&a.seed)?;
    let mut rng = RandomSource::new(seed);
    let h = generate_histogram(&generator, a.n, &mut rng).map_err(usage)?;
    let format = match (a.format, &a.output) {
        (Some(f), _) => f.into(),
        (None, Some(p)) => Format::from_path(p),
        (None, None) => Format::Tsv,
    };
    write_out(a.output.as_deref(), &render(&h, format))
}
