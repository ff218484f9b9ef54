use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use condense::asymptotics::lemma1_report;
use condense::harness::{self, rng_stream, EmitFormat, ExperimentConfig};
use condense::heights::{height_prediction, q_table};
use condense::offspring::{DistSpec, OffspringDistribution};
use condense::oracle::{conditioned_stat_law, Statistic};
use condense::tree::decode;
use condense::walk::{sample_bridge_exact, sample_bridge_planted, vervaat, BigJumpSampler, JumpVector};
use condense::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "condense", version, about = "Conditioned subcritical Cauchy Bienaymé trees")]
struct Cli {
    /// Offspring distribution as a JSON file; defaults to cauchy β=1, c=1, m=0.5.
    #[arg(long, global = true)]
    dist: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory; stdout when absent (except for `experiment`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SamplerArg {
    Exact,
    Planted,
    Bigjump,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Conditioned excursions, one per line as space-separated increments.
    Sample {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long, value_enum, default_value_t = SamplerArg::Exact)]
        sampler: SamplerArg,
        /// Total variation bound of the big-jump sampler.
        #[arg(long, default_value_t = 1e-4)]
        tv_bound: f64,
        #[arg(long, default_value_t = condense::walk::DEFAULT_DRAW_BUDGET)]
        max_draws: u64,
    },
    /// Tree statistics of excursions read from a file.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Scaling and centering sequences.
    Sequences {
        /// Comma-separated sizes, e.g. 1e3,1e4,1e5.
        #[arg(long, value_delimiter = ',', value_parser = parse_count)]
        n: Vec<u64>,
    },
    /// Survival table `log Q_n`, `log u_n`.
    Qtable {
        #[arg(long, value_parser = parse_count)]
        nmax: u64,
    },
    /// Height centers and threshold band at size n.
    Predict {
        #[arg(long, value_parser = parse_count)]
        n: u64,
    },
    /// Exact law of a statistic over conditioned trees of size n.
    Enumerate {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        cap: u64,
        #[arg(long, default_value = "delta")]
        stat: Statistic,
    },
    /// Runs an experiment from a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
}

fn parse_count(text: &str) -> std::result::Result<u64, String> {
    let value: f64 = text.trim().parse().map_err(|e| format!("{text}: {e}"))?;
    if value < 0.0 || value.fract() != 0.0 || value > u64::MAX as f64 {
        return Err(format!("{text} is not a nonnegative integer"));
    }
    Ok(value as u64)
}

fn load_dist(path: Option<&Path>) -> Result<OffspringDistribution> {
    let spec = match path {
        Some(p) => DistSpec::from_json(&fs::read_to_string(p)?)?,
        None => DistSpec::Cauchy { beta: 1.0, c: 1.0, m: 0.5 },
    };
    spec.build()
}

/// Writes `text` to `out/name`, or to stdout without `out`.
fn deliver(out: Option<&Path>, name: &str, text: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), text)?;
        }
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn sample(cli: &Cli, n: usize, count: u64, choice: SamplerArg, tv_bound: f64, max_draws: u64) -> Result<()> {
    let dist = load_dist(cli.dist.as_deref())?;
    let big_jump = match choice {
        SamplerArg::Bigjump => Some(BigJumpSampler::new(&dist, n, tv_bound)?),
        _ => None,
    };
    let mut sampler = dist.sampler();
    let mut text = String::new();
    for rep in 0..count {
        let mut rng = rng_stream(cli.seed, rep);
        let (bridge, _) = match (&big_jump, choice) {
            (Some(bj), _) => bj.sample(&mut sampler, &mut rng, max_draws)?,
            (None, SamplerArg::Planted) => sample_bridge_planted(&mut sampler, n, &mut rng)?,
            (None, _) => sample_bridge_exact(&mut sampler, n, &mut rng, max_draws)?,
        };
        let line: Vec<String> = vervaat(&bridge)?.increments().iter().map(i64::to_string).collect();
        text.push_str(&line.join(" "));
        text.push('\n');
    }
    deliver(cli.out.as_deref(), "excursions.txt", &text)
}

fn stats(cli: &Cli, input: &Path) -> Result<()> {
    let mut text = String::from("n,delta,delta2,h_delta,height,star_index\n");
    for (i, line) in fs::read_to_string(input)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let increments = line
            .split_whitespace()
            .map(|t| t.parse::<i64>().map_err(|e| Error::Parameter(format!("line {}: {t}: {e}", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        let s = decode(&JumpVector::new(increments)?)?.stats();
        text.push_str(&format!("{},{},{},{},{},{}\n", s.n, s.delta, s.delta2, s.h_delta, s.height, s.star_index));
    }
    deliver(cli.out.as_deref(), "stats.csv", &text)
}

fn experiment(cli: &Cli, config: &Path, workers: usize) -> Result<bool> {
    let mut cfg = ExperimentConfig::from_json(&fs::read_to_string(config)?)?;
    if cli.seed != 0 {
        cfg.master_seed = cli.seed;
    }
    let result = harness::run(&cfg, workers)?;
    let formats = if cfg.emit.is_empty() { vec![EmitFormat::Json] } else { cfg.emit.clone() };
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    for path in harness::emit(&result, &dir, &formats)? {
        eprintln!("wrote {}", path.display());
    }
    for v in &result.verdicts {
        let at = v.n.map(|n| format!("@{n}")).unwrap_or_default();
        eprintln!("{} {}{at} = {:.6}", if v.passed { "PASS" } else { "FAIL" }, v.name, v.observed);
    }
    Ok(result.passed())
}

fn execute(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Sample { n, count, sampler, tv_bound, max_draws } => {
            sample(cli, *n, *count, *sampler, *tv_bound, *max_draws)?
        }
        Command::Stats { input } => stats(cli, input)?,
        Command::Sequences { n } => {
            if n.is_empty() {
                return Err(Error::Parameter("--n needs at least one size".into()));
            }
            let table = lemma1_report(&load_dist(cli.dist.as_deref())?, n);
            deliver(cli.out.as_deref(), "sequences.csv", &table.to_csv())?;
        }
        Command::Qtable { nmax } => {
            let table = q_table(&load_dist(cli.dist.as_deref())?, *nmax as usize)?;
            deliver(cli.out.as_deref(), "qtable.csv", &table.to_csv())?;
        }
        Command::Predict { n } => {
            let dist = load_dist(cli.dist.as_deref())?;
            let depth = (3.0 * (*n as f64).ln() / (1.0 / dist.mean()).ln()).ceil() as usize + 1;
            let table = q_table(&dist, depth.max(1))?;
            let prediction = height_prediction(&dist, &table, *n)?;
            deliver(cli.out.as_deref(), "prediction.json", &(serde_json::to_string_pretty(&prediction)? + "\n"))?;
        }
        Command::Enumerate { n, cap, stat } => {
            let law = conditioned_stat_law(&load_dist(cli.dist.as_deref())?, *n, *cap, *stat)?;
            deliver(cli.out.as_deref(), "law.json", &(serde_json::to_string_pretty(&law)? + "\n"))?;
        }
        Command::Experiment { config, workers } => return experiment(cli, config, *workers),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
