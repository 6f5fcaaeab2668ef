use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use eccrm::bench::{self, DeltaSeries, ExperimentConfig, OracleCheckOptions, OracleSuite};
use eccrm::problems::{GeneratorSpec, InstanceDocument};
use eccrm::solver::{parse_trace_csv, solve, Method, RunStatus, SolverConfig};
use eccrm::{CfpError, ProblemPair};

/// Circumcentered reflection solvers for two-set convex feasibility problems.
#[derive(Parser, Debug)]
#[command(name = "eccrm", version, arg_required_else_help = true)]
struct Cli {
    /// Print the JSON Schema of experiment config files and exit.
    #[arg(long, global = true)]
    print_schema: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one instance with one or more methods and write the traces.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Instance JSON written by `gen`; overrides the config's generator.
        #[arg(long)]
        instance: Option<PathBuf>,
        /// Method such as `ccrm`, `map`, `XY:0.5` or `YXY:vanishing`; repeatable.
        #[arg(long = "method")]
        methods: Vec<String>,
    },
    /// Run the (method x seed) matrix of a config and write summary.csv.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Maximum number of concurrent runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Merge trace CSVs into long-format `method,k,delta` plot data.
    Plotdata {
        /// Trace CSV files; the method name is taken from `trace_<method>_<seed>.csv`.
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Directory for plotdata.csv; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare library routines against brute-force oracles.
    OracleCheck {
        /// One of projections, circumcenter, invariants.
        suite: String,
        #[arg(long, value_parser = parse_seed_range, default_value = "0..9")]
        seed_range: (u64, u64),
        #[arg(long, default_value_t = 20)]
        cases: usize,
        /// Offset added to every computed circumcenter.
        #[arg(long)]
        inject_fault: Option<f64>,
    },
    /// Write instance JSON documents, one per seed.
    Gen {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Inclusive seed range `A..B`; overrides `seeds` in the config.
    #[arg(long, value_parser = parse_seed_range)]
    seed_range: Option<(u64, u64)>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

fn parse_seed_range(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected A..B, got {s:?}"))?;
    let a: u64 = a.trim().parse().map_err(|e| format!("bad range start: {e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("bad range end: {e}"))?;
    if a > b {
        return Err(format!("empty seed range {s:?}"));
    }
    Ok((a, b))
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<CfpError> for Failure {
    fn from(e: CfpError) -> Self {
        match e {
            CfpError::InvalidConfig(_)
            | CfpError::InvalidSpec(_)
            | CfpError::InvalidKernel(_)
            | CfpError::InvalidStep(_)
            | CfpError::InvalidSchedule(_)
            | CfpError::Json(_) => Failure::Usage(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Failure> {
        let path = self.config.as_ref().ok_or_else(|| Failure::Usage("--config is required".into()))?;
        let mut cfg = ExperimentConfig::load(path)?;
        if let Some((a, b)) = self.seed_range {
            cfg.seeds = (a..=b).collect();
        }
        if let Some(eps) = self.eps {
            cfg.eps = eps;
        }
        if let Some(n) = self.max_iter {
            cfg.max_iter = n;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if cli.print_schema {
        println!("{}", ExperimentConfig::schema());
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("no command given; see --help");
        return ExitCode::from(2);
    };
    match run(command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<bool, Failure> {
    match command {
        Command::Solve { common, instance, methods } => cmd_solve(&common, instance.as_deref(), &methods),
        Command::Bench { common, jobs } => {
            let cfg = common.load()?;
            let report = bench::run_matrix(&cfg, jobs)?;
            if let Some(dir) = &cfg.output_dir {
                report.write(dir)?;
            }
            print!("{}", report.summary_csv());
            for f in &report.failures {
                eprintln!("failed: method {} seed {}: {}", f.method, f.seed, f.reason);
            }
            Ok(report.ok())
        }
        Command::Plotdata { traces, out } => {
            let mut series = Vec::new();
            for path in &traces {
                let rows = parse_trace_csv(&fs::read_to_string(path).map_err(CfpError::from)?)?;
                series.push(DeltaSeries { method: method_from_trace_name(path), points: rows.iter().map(|r| (r.k, r.delta)).collect() });
            }
            let csv = bench::emit_plotdata(&series)?;
            emit(out.as_deref(), "plotdata.csv", &csv)?;
            Ok(true)
        }
        Command::OracleCheck { suite, seed_range, cases, inject_fault } => {
            if suite.trim().is_empty() {
                return Err(Failure::Usage("suite name is empty".into()));
            }
            let suite: OracleSuite = suite.parse()?;
            let opts = OracleCheckOptions { seeds: seed_range, cases_per_seed: cases, circumcenter_fault: inject_fault };
            let report = bench::oracle_check(suite, &opts)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(report.passed)
        }
        Command::Gen { common } => {
            let cfg = common.load()?;
            let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&dir).map_err(CfpError::from)?;
            for &seed in &cfg.seeds {
                let spec = GeneratorSpec::new(cfg.generator.clone(), seed);
                let pair = spec.generate()?;
                let doc = InstanceDocument::from_pair(&pair, Some(spec));
                let path = dir.join(format!("instance_{seed}.json"));
                fs::write(&path, doc.to_json()?).map_err(CfpError::from)?;
                println!("{}", path.display());
            }
            Ok(true)
        }
    }
}

fn cmd_solve(common: &Common, instance: Option<&Path>, methods: &[String]) -> Result<bool, Failure> {
    let mut method_list: Vec<Method> = methods.iter().map(|m| m.parse()).collect::<Result<_, _>>()?;
    let cfg = match (&common.config, instance) {
        (Some(_), _) => Some(common.load()?),
        (None, Some(_)) => None,
        (None, None) => return Err(Failure::Usage("solve needs --config or --instance".into())),
    };
    let (pair, seed): (ProblemPair, u64) = match (instance, &cfg) {
        (Some(path), _) => {
            let pair = InstanceDocument::load(path)?;
            let seed = pair.metadata.seed.unwrap_or(0);
            (pair, seed)
        }
        (None, Some(cfg)) => {
            let seed = *cfg.seeds.first().ok_or_else(|| Failure::Usage("config has no seeds".into()))?;
            (GeneratorSpec::new(cfg.generator.clone(), seed).generate()?, seed)
        }
        (None, None) => unreachable!(),
    };
    if method_list.is_empty() {
        method_list = cfg.as_ref().map(|c| c.methods.clone()).unwrap_or_default();
    }
    if method_list.is_empty() {
        method_list.push(Method::Ccrm);
    }
    let eps = common.eps.or(cfg.as_ref().map(|c| c.eps)).unwrap_or(1e-10);
    let max_iter = common.max_iter.or(cfg.as_ref().map(|c| c.max_iter)).unwrap_or(10_000);
    let out = common.out.clone().or_else(|| cfg.as_ref().and_then(|c| c.output_dir.clone()));

    let mut all_ok = true;
    for method in method_list {
        let solver_cfg = SolverConfig::new(method, eps, max_iter);
        let trace = solve(&pair, &solver_cfg)?;
        println!(
            "{} seed={} status={:?} iterations={} final_delta={:e} projections={}",
            trace.method,
            seed,
            trace.status,
            trace.iterations,
            trace.final_delta(),
            trace.total_algorithmic_projections()
        );
        all_ok &= trace.status == RunStatus::Converged;
        if let Some(dir) = &out {
            fs::create_dir_all(dir).map_err(CfpError::from)?;
            fs::write(dir.join(format!("trace_{}_{}.csv", trace.method, seed)), trace.to_csv()).map_err(CfpError::from)?;
        }
    }
    Ok(all_ok)
}

fn method_from_trace_name(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = stem.strip_prefix("trace_").unwrap_or(&stem);
    match stem.rsplit_once('_') {
        Some((method, seed)) if seed.chars().all(|c| c.is_ascii_digit()) && !method.is_empty() => method.to_string(),
        _ => stem.to_string(),
    }
}

fn emit(out: Option<&Path>, name: &str, text: &str) -> Result<(), Failure> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(CfpError::from)?;
            fs::write(dir.join(name), text).map_err(CfpError::from)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}
