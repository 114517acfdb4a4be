use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use kphf::bucket::{suggested_lambda, BucketConfig, SeedEncoding};
use kphf::bucket_opt::{curves, DEFAULT_GRID};
use kphf::codec::Persist;
use kphf::harness::{
    bench, gen_keys, hash_keys, load, lower_bound_bits_per_key, read_keys, save, verify, write_csv, write_keys,
    BenchOptions, SchemeConfig,
};
use kphf::pachash::PaCHashConfig;
use kphf::phf::MkPhf;
use kphf::recsplit::RecSplitConfig;
use kphf::threshold::{LayerPolicy, ThresholdConfig, Variant};
use kphf::threshold_opt::{asymptotic_thresholds, optimal_thresholds};

#[derive(Parser)]
#[command(name = "kphf", version, about = "Minimal k-perfect hash functions")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate distinct random alphanumeric keys, one per line.
    Gen {
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        min_len: usize,
        #[arg(long, default_value_t = 50)]
        max_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a structure over a key file and write it to a container file.
    Build {
        #[arg(long)]
        keys: PathBuf,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exhaustively audit a saved structure against its key file.
    Verify {
        #[arg(long)]
        keys: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        /// Reject the file unless it was built for this k.
        #[arg(long)]
        k: Option<u32>,
        #[arg(long, default_value_t = 0)]
        hash_seed: u64,
    },
    /// Verify, then time construction and queries; emits one CSV record.
    Bench {
        /// Key file; random keys are generated when absent.
        #[arg(long)]
        keys: Option<PathBuf>,
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long, default_value_t = 3)]
        construct_runs: usize,
        #[arg(long, default_value_t = 10_000_000)]
        queries: usize,
        /// CSV destination (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Append to an existing CSV instead of overwriting it.
        #[arg(long)]
        append: bool,
    },
    /// Dump threshold vectors or bucket assignment curves as CSV.
    Curves {
        #[arg(value_enum)]
        kind: CurveKind,
        #[arg(long, default_value_t = 10)]
        k: u32,
        #[arg(long, default_value_t = 2.0)]
        gamma: f64,
        #[arg(long, default_value_t = 32)]
        t: usize,
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CurveKind {
    /// Optimal and asymptotic thresholds for (k, gamma, t).
    Thresholds,
    /// beta_k and p_k on a uniform grid.
    Beta,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeKind {
    Threshold,
    Bucket,
    Recsplit,
    Pachash,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Plain,
    Packed,
    Consensus,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Overload,
    TwoLayer,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodingArg {
    Rice,
    Compact,
}

#[derive(Args)]
struct SchemeArgs {
    #[arg(long, value_enum, default_value = "threshold")]
    scheme: SchemeKind,
    #[arg(long, default_value_t = 10)]
    k: u32,
    /// Threshold: overloading factor.
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    /// Threshold: number of thresholds (power of two).
    #[arg(long, default_value_t = 32)]
    t: usize,
    #[arg(long, value_enum, default_value = "plain")]
    variant: VariantArg,
    #[arg(long, value_enum, default_value = "overload")]
    policy: PolicyArg,
    /// Bucket placement: expected keys per bucket [default: 4·√k].
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum, default_value = "rice")]
    encoding: EncodingArg,
    /// RecSplit: leaves of up to ell·k keys are split k-wise.
    #[arg(long, default_value_t = 2)]
    ell: u32,
    /// RecSplit: expected keys per bucket.
    #[arg(long, default_value_t = 2000)]
    bucket_size: usize,
    /// PaCHash: buckets per bin.
    #[arg(long, default_value_t = 10.0)]
    a: f64,
    /// Construction seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed of the key hash; must match between build and verify.
    #[arg(long, default_value_t = 0)]
    hash_seed: u64,
}

impl SchemeArgs {
    fn config(&self) -> SchemeConfig {
        let k = self.k;
        match self.scheme {
            SchemeKind::Threshold => SchemeConfig::Threshold(
                ThresholdConfig::new(k, self.gamma, self.t)
                    .variant(match self.variant {
                        VariantArg::Plain => Variant::Plain,
                        VariantArg::Packed => Variant::Packed,
                        VariantArg::Consensus => Variant::Consensus,
                    })
                    .policy(match self.policy {
                        PolicyArg::Overload => LayerPolicy::Overload,
                        PolicyArg::TwoLayer => LayerPolicy::TwoLayer,
                    })
                    .seed(self.seed),
            ),
            SchemeKind::Bucket => SchemeConfig::Bucket(
                BucketConfig::new(
                    k,
                    self.lambda.unwrap_or_else(|| suggested_lambda(k)),
                    match self.encoding {
                        EncodingArg::Rice => SeedEncoding::Rice,
                        EncodingArg::Compact => SeedEncoding::Compact,
                    },
                )
                .seed(self.seed),
            ),
            SchemeKind::Recsplit => {
                SchemeConfig::RecSplit(RecSplitConfig::new(k, self.ell, self.bucket_size).seed(self.seed))
            }
            SchemeKind::Pachash => SchemeConfig::PaCHash(PaCHashConfig::new(k, self.a).seed(self.seed)),
        }
    }
}

fn output(path: &Option<PathBuf>, append: bool) -> anyhow::Result<(Box<dyn Write>, bool)> {
    Ok(match path {
        None => (Box::new(std::io::stdout().lock()), false),
        Some(p) => {
            let existing = append && p.metadata().map(|m| m.len() > 0).unwrap_or(false);
            let file = OpenOptions::new().create(true).write(true).append(append).truncate(!append).open(p)?;
            (Box::new(file), existing)
        }
    })
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.cmd {
        Cmd::Gen { n, min_len, max_len, seed, out } => {
            let keys = gen_keys(n, min_len, max_len, seed)?;
            write_keys(&out, &keys)?;
            eprintln!("wrote {n} keys to {}", out.display());
        }
        Cmd::Build { keys, scheme, out } => {
            let hashed = hash_keys(&read_keys(&keys)?, scheme.hash_seed);
            let config = scheme.config();
            let start = Instant::now();
            let phf = config.build(&hashed)?;
            let elapsed = start.elapsed();
            save(&phf, &out)?;
            eprintln!(
                "{} {}: n={} k={} {:.4} bits/key ({} bytes), built in {:.2?}",
                config.scheme_name(),
                config.label(),
                hashed.len(),
                config.k(),
                phf.bits_per_key(),
                phf.to_bytes().len(),
                elapsed
            );
        }
        Cmd::Verify { keys, input, k, hash_seed } => {
            let phf = load(&input, k)?;
            let hashed = hash_keys(&read_keys(&keys)?, hash_seed);
            let report = verify(&phf, &hashed, k.unwrap_or(phf.k()));
            println!("{} {report}", phf.scheme_name());
            return Ok(report.passed());
        }
        Cmd::Bench { keys, n, scheme, construct_runs, queries, out, append } => {
            let raw = match keys {
                Some(p) => read_keys(&p)?,
                None => gen_keys(n, 10, 50, 0)?,
            };
            let hashed = hash_keys(&raw, scheme.hash_seed);
            drop(raw);
            let opts = BenchOptions { construct_runs, queries, ..BenchOptions::default() };
            let record = bench(&scheme.config(), &hashed, &opts)?;
            eprintln!(
                "{} {}: {:.4} bits/key (bound {:.4}), {:.1} ns/key build, {:.1} ns/query",
                record.scheme,
                record.config,
                record.bits_per_key,
                lower_bound_bits_per_key(record.k),
                record.construct_ns_per_key,
                record.query_ns_per_query
            );
            let (sink, existing) = output(&out, append)?;
            write_csv(std::slice::from_ref(&record), sink, !existing)?;
        }
        Cmd::Curves { kind, k, gamma, t, grid, out } => {
            let (mut sink, _) = output(&out, false)?;
            match kind {
                CurveKind::Thresholds => {
                    let opt = optimal_thresholds(k, gamma, t)?;
                    let asym = asymptotic_thresholds(k, gamma, t)?;
                    writeln!(sink, "index,optimal,asymptotic")?;
                    for (i, (o, a)) in opt.thresholds.iter().zip(&asym.thresholds).enumerate() {
                        writeln!(sink, "{i},{o},{a}")?;
                    }
                }
                CurveKind::Beta => {
                    let (pk, beta) = curves(k, grid)?;
                    writeln!(sink, "x,beta,p_k")?;
                    for ((x, b), p) in beta.xs().zip(beta.ys()).zip(pk.ys()) {
                        writeln!(sink, "{x},{b},{p}")?;
                    }
                }
            }
            sink.flush()?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
