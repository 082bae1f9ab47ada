//! `cubature`: build, verify and benchmark Wiener-space cubature formulae.
//!
//! Exit status is 0 on success, 1 when the computation itself fails and 2 on
//! a usage error.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;

use wiener_cubature::cubature::{self, read_json, verify, write_json, TOOL_VERSION};
use wiener_cubature::oa::build_binary_oa;
use wiener_cubature::recombine::{recombine, WeightedPointSet};
use wiener_cubature::sde::{make_model, Metric};
use wiener_cubature::sim::{self, BenchConfig};
use wiener_cubature::BuildOptions;

#[derive(Parser, Debug)]
#[command(name = "cubature", version, about = "Cubature formulae on Wiener space")]
struct Cli {
    /// Worker threads; the ARCANE_THREADS environment variable takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress to standard error (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a cubature formula and write it as JSON.
    Build(BuildArgs),
    /// Check a formula's moments against Brownian motion.
    Verify(VerifyArgs),
    /// Reduce a weighted point set, preserving its mean and mass.
    Recombine(RecombineArgs),
    /// Construct a binary orthogonal array and write its rows as CSV.
    Oa(OaArgs),
    /// Compare cubature, Monte Carlo and QMC errors on a benchmark SDE.
    Bench(BenchArgs),
    /// Aggregate benchmark CSV over seeds, one row per plotted point.
    PlotData(PlotArgs),
}

#[derive(Args, Debug)]
struct BuildArgs {
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    degree: usize,
    /// Steps per path of the initial sign paths.
    #[arg(long)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Close the formula under sign flips of each channel.
    #[arg(long)]
    symmetrise: bool,
    #[arg(long, default_value_t = 0)]
    dyadic_depth: usize,
    /// Degree monitored on proper dyadic subintervals.
    #[arg(long)]
    fine_degree: Option<usize>,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 3)]
    max_attempts: usize,
    #[arg(long, default_value_t = 3.0)]
    early_stop_factor: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Defaults to the formula's degree.
    #[arg(long)]
    degree: Option<usize>,
    /// Defaults to the formula's dyadic depth.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Also write the per-interval report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RecombineArgs {
    /// CSV without header, one point per line: `weight,x_1,..,x_m`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Stop once this many points remain.
    #[arg(long)]
    target: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct OaArgs {
    #[arg(long)]
    cols: usize,
    #[arg(long)]
    strength: usize,
    /// Seeds random column sign flips; omit for the unflipped array.
    #[arg(long)]
    seed: Option<u64>,
    /// Exhaustively confirm the strength before writing.
    #[arg(long)]
    check: bool,
    /// Refuse arrays with more rows than this.
    #[arg(long, default_value_t = 1 << 20)]
    max_rows: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// ou (vasicek), igbm, cir, wf or heston.
    #[arg(long)]
    model: String,
    /// JSON object of parameter overrides, e.g. '{"sigma": 0.3}'.
    #[arg(long)]
    params: Option<String>,
    /// mve, bond or call.
    #[arg(long)]
    metric: String,
    /// Comma-separated from mc, sobol, sobol-shift, halton, lhs; empty for none.
    #[arg(long, default_value = "mc,sobol,lhs")]
    methods: String,
    /// Comma-separated cubature JSON files.
    #[arg(long, value_delimiter = ',')]
    cubature_files: Vec<PathBuf>,
    #[arg(long, default_value = "100,1000,10000")]
    m_grid: String,
    /// Comma-separated seeds or a range `a..b`.
    #[arg(long, default_value = "0..20")]
    seeds: String,
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
    /// Steps of the Monte Carlo and QMC walks.
    #[arg(long, default_value_t = 64)]
    n_steps: usize,
    /// RK4 steps per path segment.
    #[arg(long, default_value_t = sim::DEFAULT_SUBSTEPS)]
    substeps: usize,
    #[arg(long, default_value_t = 2.0)]
    strike: f64,
    /// Record wall-clock runtimes (makes the output non-reproducible).
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Bad input detected before any work is done; exits with status 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, write: impl FnOnce(&mut BufWriter<&mut File>) -> anyhow::Result<()>) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        write(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn run_build(a: &BuildArgs) -> anyhow::Result<()> {
    let opts = BuildOptions {
        symmetrise: a.symmetrise,
        seed: a.seed,
        early_stop_factor: a.early_stop_factor,
        tol: a.tol,
        max_attempts: a.max_attempts,
        dyadic_depth: a.dyadic_depth,
        fine_degree: a.fine_degree,
        ..BuildOptions::default()
    };
    if a.dim == 0 || a.degree == 0 || a.steps == 0 {
        return Err(usage("--dim, --degree and --steps must be positive"));
    }
    info!("cubature {TOOL_VERSION} build {a:?}");
    let mut c = cubature::build(a.dim, a.degree, a.steps, &opts)?;
    c.provenance.push(format!(
        "cli build: dim={} degree={} steps={} seed={} symmetrise={} dyadic_depth={} fine_degree={:?} tol={:e} max_attempts={} early_stop_factor={}",
        a.dim, a.degree, a.steps, a.seed, a.symmetrise, a.dyadic_depth, a.fine_degree, a.tol, a.max_attempts, a.early_stop_factor
    ));
    write_atomic(&a.out, |w| Ok(write_json(&c, w)?))?;
    println!(
        "{} paths, degree {}, dyadic depth {}, max residual {:e}",
        c.len(),
        c.degree,
        c.dyadic_depth,
        c.max_residual
    );
    Ok(())
}

fn run_verify(a: &VerifyArgs) -> anyhow::Result<bool> {
    let c = read_json(open(&a.input)?)?;
    let degree = a.degree.unwrap_or(c.degree);
    let depth = a.depth.unwrap_or(c.dyadic_depth);
    let rep = verify(&c, degree, depth)?;
    for iv in &rep.intervals {
        println!(
            "[{:.6}, {:.6}] degree {} max abs {:.3e} scaled {:.3e}",
            iv.start, iv.end, iv.degree, iv.max_abs, iv.max_scaled
        );
    }
    println!("mass error {:.3e}", rep.mass_error);
    println!("max residual {:e}", rep.max_residual);
    if let Some(path) = &a.report {
        let intervals: Vec<serde_json::Value> = rep
            .intervals
            .iter()
            .map(|iv| {
                serde_json::json!({
                    "level": iv.level, "start": iv.start, "end": iv.end, "degree": iv.degree,
                    "max_abs": iv.max_abs, "max_scaled": iv.max_scaled, "worst_word": iv.worst_word,
                })
            })
            .collect();
        let doc = serde_json::json!({
            "tool_version": TOOL_VERSION,
            "input": a.input.display().to_string(),
            "degree": degree,
            "depth": depth,
            "tol": a.tol,
            "per_degree": rep.per_degree,
            "mass_error": rep.mass_error,
            "max_residual": rep.max_residual,
            "intervals": intervals,
        });
        write_atomic(path, |w| Ok(serde_json::to_writer_pretty(w, &doc)?))?;
    }
    let ok = rep.max_residual <= a.tol;
    if !ok {
        eprintln!("residual {:e} exceeds tolerance {:e}", rep.max_residual, a.tol);
    }
    Ok(ok)
}

fn run_recombine(a: &RecombineArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let mut weights = Vec::new();
    let mut points = Vec::new();
    let mut dim = None;
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row: Vec<f64> = line
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| usage(format!("line {}: {e}", n + 1)))?;
        if row.len() < 2 || dim.is_some_and(|d| d + 1 != row.len()) {
            return Err(usage(format!("line {}: expected weight and {} coordinates", n + 1, dim.unwrap_or(1))));
        }
        dim = Some(row.len() - 1);
        weights.push(row[0]);
        points.extend_from_slice(&row[1..]);
    }
    let dim = dim.ok_or_else(|| usage("no points in input"))?;
    let ps = WeightedPointSet::new(dim, points, weights).map_err(|e| usage(e.to_string()))?;
    let r = recombine(&ps, a.target)?;
    let out = ps.subset(&r);
    write_atomic(&a.out, |w| {
        for (k, &i) in r.indices.iter().enumerate() {
            let coords: Vec<String> = out.point(k).iter().map(|x| format!("{x:e}")).collect();
            writeln!(w, "{i},{:e},{}", r.weights[k], coords.join(","))?;
        }
        Ok(())
    })?;
    println!("{} of {} points kept", r.indices.len(), ps.len());
    Ok(())
}

fn run_oa(a: &OaArgs) -> anyhow::Result<()> {
    let mut oa = build_binary_oa(a.cols, a.strength).map_err(|e| usage(e.to_string()))?;
    if let Some(seed) = a.seed {
        oa = oa.randomize_columns(seed);
    }
    if oa.num_rows() > a.max_rows {
        bail!("array has {} rows, more than --max-rows {}", oa.num_rows(), a.max_rows);
    }
    let table = oa.expand()?;
    if a.check && !table.verify_strength(a.strength, 1 << 36).holds() {
        bail!("strength {} could not be confirmed", a.strength);
    }
    write_atomic(&a.out, |w| Ok(table.write_csv(w)?))?;
    println!(
        "OA({}, {}, 2, {}) from {}, Rao ratio {:.3}",
        table.num_rows(),
        table.num_cols(),
        oa.strength(),
        oa.family(),
        oa.rao_ratio()
    );
    Ok(())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> anyhow::Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<T>().map_err(|e| usage(format!("{what} '{x}': {e}"))))
        .collect()
}

fn parse_seeds(s: &str) -> anyhow::Result<Vec<u64>> {
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| usage(format!("bad seed range '{s}'")))?;
        let hi: u64 = hi.trim().parse().map_err(|_| usage(format!("bad seed range '{s}'")))?;
        return Ok((lo..hi).collect());
    }
    parse_list(s, "seed")
}

fn run_bench(a: &BenchArgs) -> anyhow::Result<()> {
    let overrides: BTreeMap<String, f64> = match &a.params {
        Some(p) => serde_json::from_str(p).map_err(|e| usage(format!("--params: {e}")))?,
        None => BTreeMap::new(),
    };
    let model = make_model(&a.model, &overrides).map_err(|e| usage(e.to_string()))?;
    let metric: Metric = a.metric.parse().map_err(|e: wiener_cubature::Error| usage(e.to_string()))?;
    let mut cfg = BenchConfig::new(model, metric);
    cfg.samplers = parse_list(&a.methods, "method")?;
    cfg.m_grid = parse_list(&a.m_grid, "M")?;
    cfg.seeds = parse_seeds(&a.seeds)?;
    cfg.horizon = a.horizon;
    cfg.n_steps = a.n_steps;
    cfg.substeps = a.substeps;
    cfg.strike = a.strike;
    cfg.timing = a.timing;
    if cfg.m_grid.contains(&0) || a.n_steps == 0 || a.substeps == 0 || !(a.horizon > 0.0) {
        return Err(usage("M, --n-steps and --substeps must be positive and --T > 0"));
    }
    for f in &a.cubature_files {
        let c = read_json(open(f)?).with_context(|| format!("reading {}", f.display()))?;
        let label = f
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| anyhow!("no file name in {}", f.display()))?;
        cfg.cubatures.push((label, c));
    }
    info!("cubature {TOOL_VERSION} bench {a:?}");
    let rows = sim::bench(&cfg)?;
    write_atomic(&a.out, |w| Ok(sim::write_reports(&rows, w)?))?;
    println!("{} rows written to {}", rows.len(), a.out.display());
    Ok(())
}

fn run_plot(a: &PlotArgs) -> anyhow::Result<()> {
    let reports = sim::read_reports(open(&a.input)?)?;
    let rows = sim::plot_data(&reports);
    write_atomic(&a.out, |w| Ok(sim::write_plot_data(&rows, w)?))?;
    println!("{} plot rows written to {}", rows.len(), a.out.display());
    Ok(())
}

fn thread_count(flag: Option<usize>) -> anyhow::Result<Option<usize>> {
    match std::env::var("ARCANE_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(usage(format!("ARCANE_THREADS must be a positive integer, got '{v}'"))),
        },
        Err(_) => match flag {
            Some(0) => Err(usage("--threads must be positive")),
            other => Ok(other),
        },
    }
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    if let Some(n) = thread_count(cli.threads)? {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Build(a) => run_build(a).map(|_| true),
        Command::Verify(a) => run_verify(a),
        Command::Recombine(a) => run_recombine(a).map(|_| true),
        Command::Oa(a) => run_oa(a).map(|_| true),
        Command::Bench(a) => run_bench(a).map(|_| true),
        Command::PlotData(a) => run_plot(a).map(|_| true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_syntax() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4, 9").unwrap(), vec![4, 9]);
        assert!(parse_seeds("a..b").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
