use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use relu_nfa::equivalence::{default_exhaustive_bound, Recognizer};
use relu_nfa::experiments::{
    render_table, run_experiment, ExperimentConfig, ExperimentName, Setting,
};
use relu_nfa::random::derive_seed;
use relu_nfa::training::{generate_dataset, train, LabeledDataset, MaskedModel, TrainConfig};
use relu_nfa::{
    check_equivalence, compile, generate_random_nfa, regex_to_nfa, CheckMode, Error, Execution,
    Nfa, ReluAcceptor, StateVector,
};

const EXIT_VERDICT: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "relu-nfa",
    version,
    about = "Compile, run, train and verify ReLU acceptors for epsilon-NFAs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile an automaton into a ReLU acceptor file.
    Compile(CompileArgs),
    /// Run strings through an acceptor or trained model.
    Run(RunArgs),
    /// Train a masked model on labeled strings.
    Train(TrainArgs),
    /// Compare an acceptor or model against an automaton.
    Verify(VerifyArgs),
    /// Run validation experiments and print a summary table.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct Source {
    /// Automaton spec document (JSON).
    spec: Option<PathBuf>,
    /// Build the automaton from a regular expression instead.
    #[arg(long, conflicts_with_all = ["spec", "random"])]
    regex: Option<String>,
    /// Generate a random automaton of the given family (six or ten).
    #[arg(long, conflicts_with = "spec")]
    random: Option<Setting>,
    /// Seed for random generation and sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl Source {
    fn load(&self) -> Result<Nfa, CliError> {
        match (&self.spec, &self.regex, self.random) {
            (Some(path), None, None) => Ok(Nfa::from_spec(&read(path)?)?),
            (None, Some(pattern), None) => Ok(regex_to_nfa(pattern)?),
            (None, None, Some(setting)) => Ok(generate_random_nfa(
                &setting.nfa_config().with_seed(self.seed),
            )),
            _ => Err(CliError::Input(
                "provide exactly one of: a spec file, --regex, --random".into(),
            )),
        }
    }
}

#[derive(Args)]
struct CompileArgs {
    #[command(flatten)]
    source: Source,
    /// Where to write the acceptor.
    #[arg(short, long)]
    out: PathBuf,
    /// Also write the source automaton as a spec document.
    #[arg(long)]
    nfa_out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Acceptor or trained-model file.
    network: PathBuf,
    /// Input strings; read from stdin (one per line) when absent.
    strings: Vec<String>,
    /// Print the active state set after every stage.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    source: Source,
    /// Training set (JSON lines); generated from the automaton when absent.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Test set (JSON lines); generated when absent.
    #[arg(long)]
    test_dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    train_size: usize,
    #[arg(long, default_value_t = 100)]
    test_size: usize,
    #[arg(long, default_value_t = 1)]
    min_len: usize,
    /// Defaults to 10 for automata with at most two symbols, 15 otherwise.
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long, default_value_t = relu_nfa::training::DEFAULT_LEARNING_RATE)]
    lr: f64,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    /// Minibatch size; full batch when absent.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Uniform init noise added at masked-in positions.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Disable mask projection (ablation).
    #[arg(long)]
    unmasked: bool,
    /// Where to write the trained model.
    #[arg(short, long)]
    out: PathBuf,
    /// Where to write the training report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the generated training set here.
    #[arg(long)]
    dataset_out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Automaton spec document.
    spec: PathBuf,
    /// Acceptor or trained-model file.
    network: PathBuf,
    /// Check every string up to this length.
    #[arg(long, conflicts_with = "sample")]
    exhaustive: Option<usize>,
    /// Check this many sampled strings.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    min_len: usize,
    #[arg(long)]
    max_len: Option<usize>,
    /// Write the equivalence report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment name, or `all`.
    name: String,
    /// six, ten, or both.
    #[arg(long, default_value = "both")]
    config: String,
    /// Number of seeds (0..N).
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Directory for JSON reports and the CSV table.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run without worker threads.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Verdict(String),
    Divergence(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Divergence { .. } => CliError::Divergence(e.to_string()),
            e if e.is_input_error() => CliError::Input(e.to_string()),
            Error::UnknownSymbol { .. } => CliError::Input(e.to_string()),
            e => CliError::Verdict(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

enum Network {
    Acceptor(ReluAcceptor),
    Model(MaskedModel),
}

impl Network {
    fn load(path: &Path) -> Result<Self, CliError> {
        let text = read(path)?;
        let kind = serde_json::from_str::<serde_json::Value>(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
            .get("kind")
            .and_then(|k| k.as_str().map(str::to_owned));
        match kind.as_deref() {
            Some("masked_model") => Ok(Network::Model(MaskedModel::from_json(&text)?)),
            _ => Ok(Network::Acceptor(ReluAcceptor::from_json(&text)?)),
        }
    }

    fn recognizer(&self) -> &dyn Recognizer {
        match self {
            Network::Acceptor(a) => a,
            Network::Model(m) => m,
        }
    }
}

fn format_set(v: &StateVector) -> String {
    let items: Vec<String> = v.support().iter().map(usize::to_string).collect();
    format!("{{{}}}", items.join(","))
}

fn cmd_compile(args: CompileArgs) -> Result<u8, CliError> {
    let nfa = args.source.load()?;
    let acceptor = compile(&nfa);
    write(&args.out, &acceptor.to_json())?;
    if let Some(path) = &args.nfa_out {
        write(path, &nfa.to_spec())?;
    }
    println!(
        "states={} symbols={} eps_edges={} -> {}",
        nfa.states(),
        nfa.alphabet().len(),
        nfa.eps_edge_count(),
        args.out.display()
    );
    Ok(0)
}

fn cmd_run(args: RunArgs) -> Result<u8, CliError> {
    let network = Network::load(&args.network)?;
    let inputs: Vec<String> = if args.strings.is_empty() {
        io::stdin().lock().lines().collect::<io::Result<_>>()?
    } else {
        args.strings
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut failed = false;
    for input in inputs {
        match network.recognizer().recognizes(&input) {
            Ok(verdict) => {
                writeln!(
                    out,
                    "{}\t{input}",
                    if verdict { "ACCEPT" } else { "REJECT" }
                )?;
                if args.trace {
                    let trace = match &network {
                        Network::Acceptor(a) => a.trace(&input)?,
                        Network::Model(m) => m.to_acceptor().trace(&input)?,
                    };
                    for (t, v) in trace.iter().enumerate() {
                        writeln!(out, "  t={t} {}", format_set(v))?;
                    }
                }
            }
            Err(e) => {
                failed = true;
                writeln!(out, "ERROR\t{input}")?;
                eprintln!("error: {input:?}: {e}");
            }
        }
    }
    Ok(if failed { EXIT_VERDICT } else { 0 })
}

fn default_max_len(nfa: &Nfa) -> usize {
    if nfa.alphabet().len() <= 2 {
        10
    } else {
        15
    }
}

fn cmd_train(args: TrainArgs) -> Result<u8, CliError> {
    let nfa = args.source.load()?;
    let seed = args.source.seed;
    let max_len = args.max_len.unwrap_or_else(|| default_max_len(&nfa));
    let train_data = match &args.dataset {
        Some(path) => LabeledDataset::from_jsonl(&read(path)?)?,
        None => generate_dataset(
            &nfa,
            args.train_size,
            args.min_len,
            max_len,
            derive_seed(seed, 2),
        )?,
    };
    let test_data = match &args.test_dataset {
        Some(path) => LabeledDataset::from_jsonl(&read(path)?)?,
        None => generate_dataset(
            &nfa,
            args.test_size,
            args.min_len,
            max_len,
            derive_seed(seed, 3),
        )?,
    };
    if let Some(path) = &args.dataset_out {
        write(path, &train_data.to_jsonl())?;
    }
    let acceptor = compile(&nfa);
    let mut model = MaskedModel::from_acceptor(&acceptor);
    let config = TrainConfig {
        learning_rate: args.lr,
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed,
        init_jitter: args.jitter,
        masked: !args.unmasked,
    };
    let report = train(&mut model, &train_data, &test_data, &acceptor, &config)?;
    write(&args.out, &model.to_json())?;
    if let Some(path) = &args.report {
        write(
            path,
            &serde_json::to_string_pretty(&report).expect("report serializes"),
        )?;
    }
    let losses: Vec<String> = report
        .epoch_losses
        .iter()
        .map(|l| format!("{l:.4}"))
        .collect();
    println!("epoch_losses=[{}]", losses.join(", "));
    println!(
        "train_accuracy={:.4} test_accuracy={:.4} violations={}",
        report.train_accuracy, report.test_accuracy, report.violations
    );
    Ok(0)
}

fn cmd_verify(args: VerifyArgs) -> Result<u8, CliError> {
    let nfa = Nfa::from_spec(&read(&args.spec)?)?;
    let network = Network::load(&args.network)?;
    let mode = match (args.exhaustive, args.sample) {
        (Some(max_len), None) => CheckMode::Exhaustive { max_len },
        (None, Some(count)) => CheckMode::Sampled {
            count,
            min_len: args.min_len,
            max_len: args.max_len.unwrap_or_else(|| default_max_len(&nfa)),
            seed: args.seed,
        },
        (None, None) => CheckMode::Exhaustive {
            max_len: default_exhaustive_bound(nfa.alphabet().len()),
        },
        (Some(_), Some(_)) => unreachable!("clap rejects both"),
    };
    let report = check_equivalence(&nfa, network.recognizer(), &mode, Execution::Parallel)?;
    if let Some(path) = &args.report {
        write(
            path,
            &serde_json::to_string_pretty(&report).expect("report serializes"),
        )?;
    }
    println!(
        "agreement={:.4} total={} mismatches={}",
        report.agreement,
        report.total,
        report.mismatches.len()
    );
    for m in &report.mismatches {
        println!(
            "  {:?}: nfa={} network={}",
            m.string, m.nfa_verdict, m.net_verdict
        );
    }
    Ok(if report.is_equivalent() {
        0
    } else {
        EXIT_VERDICT
    })
}

fn cmd_experiment(args: ExperimentArgs) -> Result<u8, CliError> {
    let names: Vec<ExperimentName> = if args.name == "all" {
        ExperimentName::ALL.to_vec()
    } else {
        vec![args.name.parse()?]
    };
    let settings = match args.config.as_str() {
        "both" => vec![Setting::Six, Setting::Ten],
        other => vec![other.parse()?],
    };
    if args.seeds == 0 {
        return Err(CliError::Input("--seeds must be at least 1".into()));
    }
    let execution = if args.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let mut reports = Vec::new();
    for &setting in &settings {
        for &name in &names {
            let config = ExperimentConfig::new(name, setting)
                .with_seeds(0..args.seeds)
                .with_execution(execution);
            reports.push(run_experiment(&config)?);
        }
    }
    print!("{}", render_table(&reports));
    for r in &reports {
        if r.summary.degenerate {
            eprintln!(
                "note: {} ({}) has a single seed; no confidence interval",
                r.experiment, r.setting
            );
        }
        for s in r.seeds.iter().filter(|s| !s.witnesses.is_empty()) {
            eprintln!(
                "{} ({}) seed {}: {} failures, e.g. {:?}",
                r.experiment, r.setting, s.seed, s.failures, s.witnesses
            );
        }
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        let mut csv = csv::Writer::from_path(dir.join("results.csv"))?;
        csv.write_record(relu_nfa::ExperimentReport::csv_header())?;
        for r in &reports {
            write(
                &dir.join(format!("{}_{}.json", r.experiment, r.setting)),
                &r.to_json(),
            )?;
            r.write_csv_rows(&mut csv)?;
        }
        csv.flush()?;
    }
    let all_ok = reports.iter().all(|r| r.controls_passed());
    Ok(if all_ok { 0 } else { EXIT_VERDICT })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compile(a) => cmd_compile(a),
        Command::Run(a) => cmd_run(a),
        Command::Train(a) => cmd_train(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Experiment(a) => cmd_experiment(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(CliError::Verdict(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VERDICT)
        }
        Err(CliError::Divergence(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_DIVERGENCE)
        }
    }
}
