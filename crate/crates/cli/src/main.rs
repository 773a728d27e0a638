//! `ecm`: command-line front end for single-core prediction, multicore
//! scaling, composition, fitting and comparison.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ecm_core::compose::{
    builtin_composite_source, compare_curve, infer_parameters, parse_composite, predict_composite,
    read_measurement_csv, render_hypotheses_csv, render_hypotheses_table, CompositeSpec, OverlapChoice,
};
use ecm_core::exec::Execution;
use ecm_core::hierarchy::{Level, LinkId};
use ecm_core::kernel::{builtin_kernel_source, parse_kernel, KernelModel};
use ecm_core::machine::{builtin_machine_source, builtin_machines, parse_machine, MachineModel};
use ecm_core::predictor::{predict_with, PredictOptions};
use ecm_core::scaling::{
    fit_p0, predict_multicore, read_barrier_csv, read_scaling_csv, Placement, ScalingOptions,
};
use ecm_core::traffic::{read_volume_csv, uniform_residence};

const PRESET_PATH_VAR: &str = "ECM_PRESET_PATH";

#[derive(Parser)]
#[command(name = "ecm", version, about = "Analytic loop-kernel performance models")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// List built-in machine presets.
    Machines,
    /// Single-core runtime breakdown.
    Predict(PredictArgs),
    /// Multicore scaling curve.
    Scale(ScaleArgs),
    /// Application curve composed from several kernels.
    Compose(ComposeArgs),
    /// Fit the conflict parameter p0 to measured scaling data.
    #[command(name = "fit-p0")]
    FitP0(FitArgs),
    /// Rank link bandwidth and overlap hypotheses against measurements.
    Infer(InferArgs),
    /// Compare a predicted curve with measurements.
    Compare(CompareArgs),
}

#[derive(Args)]
struct Target {
    /// Machine preset name or TOML file.
    #[arg(long)]
    machine: String,
    /// Override the inner loop length.
    #[arg(long)]
    ni: Option<u64>,
    /// Override the outer loop length.
    #[arg(long)]
    nj: Option<u64>,
    /// Place all arrays in this level instead of where they fit.
    #[arg(long, value_parser = parse_level)]
    residence: Option<Level>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    target: Target,
    /// Kernel preset name or TOML file.
    #[arg(long)]
    kernel: String,
    /// Threads sharing each cache, for the layer condition.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// CSV of measured link volumes that replace derived ones.
    #[arg(long)]
    traffic: Option<PathBuf>,
}

#[derive(Args)]
struct ScalingFlags {
    /// Conflict parameter in cycles.
    #[arg(long, default_value_t = 0.0)]
    p0: f64,
    /// CSV of barrier costs (`threads,cycles`).
    #[arg(long)]
    barrier: Option<PathBuf>,
    /// Run all cores against one domain at this memory bandwidth (bytes/cycle).
    #[arg(long)]
    contended_bw: Option<f64>,
    #[arg(long, value_parser = parse_placement, default_value = "close")]
    placement: Placement,
    /// Evaluate core counts one after another.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct ScaleArgs {
    #[command(flatten)]
    target: Target,
    #[arg(long)]
    kernel: String,
    /// Core counts: `1..24`, `1,2,4` or a single number.
    #[arg(long, value_parser = parse_cores)]
    cores: CoreList,
    #[command(flatten)]
    scaling: ScalingFlags,
}

#[derive(Args)]
struct ComposeArgs {
    #[command(flatten)]
    target: Target,
    /// Composite preset name or TOML file.
    #[arg(long)]
    composite: String,
    #[arg(long, value_parser = parse_cores)]
    cores: CoreList,
    #[command(flatten)]
    scaling: ScalingFlags,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    target: Target,
    #[arg(long)]
    kernel: String,
    /// CSV of measured performance (`cores,performance_it_per_s`).
    #[arg(long)]
    measured: PathBuf,
    #[command(flatten)]
    scaling: ScalingFlags,
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    target: Target,
    #[arg(long)]
    kernel: String,
    /// CSV of single-core runtimes (`residence,cycles_per_it`).
    #[arg(long)]
    measured: PathBuf,
    /// Link whose parameters are unknown.
    #[arg(long, value_parser = parse_link)]
    link: LinkId,
    /// Candidate bandwidths in bytes/cycle.
    #[arg(long, value_delimiter = ',', required = true)]
    bandwidths: Vec<f64>,
    /// Candidate overlap behaviors.
    #[arg(long, value_delimiter = ',', value_parser = parse_overlap, default_value = "overlap,no-overlap")]
    overlap: Vec<OverlapChoice>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    target: Target,
    /// Kernel preset name or TOML file.
    #[arg(long, conflicts_with = "composite", required_unless_present = "composite")]
    kernel: Option<String>,
    /// Composite preset name or TOML file.
    #[arg(long)]
    composite: Option<String>,
    /// CSV of measured performance (`cores,performance_it_per_s`).
    #[arg(long)]
    measured: PathBuf,
    #[command(flatten)]
    scaling: ScalingFlags,
}

#[derive(Clone)]
struct CoreList(Vec<usize>);

fn parse_cores(s: &str) -> Result<CoreList, String> {
    let bad = || format!("invalid core list `{s}` (expected `1..24`, `1,2,4` or `8`)");
    let number = |t: &str| t.trim().parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(bad);
    let cores = if let Some((lo, hi)) = s.split_once("..") {
        let (lo, hi) = (number(lo)?, number(hi.trim_start_matches('='))?);
        if lo > hi {
            return Err(bad());
        }
        (lo..=hi).collect()
    } else {
        s.split(',').map(number).collect::<Result<Vec<_>, _>>()?
    };
    Ok(CoreList(cores))
}

fn parse_level(s: &str) -> Result<Level, String> {
    s.parse().map_err(|e: ecm_core::Error| e.to_string())
}

fn parse_link(s: &str) -> Result<LinkId, String> {
    s.parse().map_err(|e: ecm_core::Error| e.to_string())
}

fn parse_placement(s: &str) -> Result<Placement, String> {
    s.parse().map_err(|e: ecm_core::Error| e.to_string())
}

fn parse_overlap(s: &str) -> Result<OverlapChoice, String> {
    s.parse().map_err(|e: ecm_core::Error| e.to_string())
}

fn forces_file(arg: &str) -> bool {
    arg.contains('/') || arg.ends_with(".toml")
}

/// Resolves a preset name, then the preset search path, then a file path.
fn resolve(arg: &str, kind: &str, builtin: fn(&str) -> Option<&'static str>) -> Result<String> {
    if !forces_file(arg) {
        if let Some(text) = builtin(arg) {
            return Ok(text.to_string());
        }
        if let Some(dirs) = std::env::var_os(PRESET_PATH_VAR) {
            for dir in std::env::split_paths(&dirs) {
                for candidate in [dir.join(kind).join(format!("{arg}.toml")), dir.join(format!("{arg}.toml"))] {
                    if candidate.is_file() {
                        return read(&candidate);
                    }
                }
            }
        }
    }
    let path = Path::new(arg);
    if path.is_file() {
        return read(path);
    }
    bail!("unknown {} `{arg}`: not a preset and no such file", kind.trim_end_matches('s'))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn load_machine(arg: &str) -> Result<MachineModel> {
    let text = resolve(arg, "machines", builtin_machine_source)?;
    parse_machine(&text).with_context(|| format!("loading machine `{arg}`"))
}

fn load_kernel(arg: &str, target: &Target) -> Result<KernelModel> {
    let text = resolve(arg, "kernels", builtin_kernel_source)?;
    let k = parse_kernel(&text).with_context(|| format!("loading kernel `{arg}`"))?;
    Ok(match (target.ni, target.nj) {
        (None, None) => k,
        (ni, nj) => {
            let (ni, nj) = (ni.unwrap_or(k.ni), nj.unwrap_or(k.nj));
            ecm_core::kernel::ensure_valid(k.with_loop(ni, nj))?
        }
    })
}

fn load_composite(arg: &str) -> Result<CompositeSpec> {
    let text = resolve(arg, "composites", builtin_composite_source)?;
    parse_composite(&text).with_context(|| format!("loading composite `{arg}`"))
}

fn scaling_options(flags: &ScalingFlags, k: Option<&KernelModel>, residence: Option<Level>) -> Result<ScalingOptions> {
    let barrier = match &flags.barrier {
        Some(path) => read_barrier_csv(open(path)?)?,
        None => Default::default(),
    };
    Ok(ScalingOptions {
        p0: flags.p0,
        barrier,
        contended_bandwidth: flags.contended_bw,
        placement: flags.placement,
        residence: k.zip(residence).map(|(k, level)| uniform_residence(k, level)),
        execution: if flags.sequential {
            Execution::Sequential
        } else {
            Execution::default()
        },
    })
}

fn render(format: Format, table: impl FnOnce() -> String, csv: impl FnOnce() -> String) -> String {
    match format {
        Format::Table => table(),
        Format::Csv => csv(),
    }
}

fn machines(format: Format) -> String {
    let presets = builtin_machines();
    let levels = |m: &MachineModel| {
        m.caches.iter().map(|c| c.level.as_str()).collect::<Vec<_>>().join(" ")
    };
    render(
        format,
        || {
            let mut s = format!("{:<6}  {:>5}  {:>5}  {:>7}  {}\n", "name", "GHz", "cores", "domains", "caches");
            for (name, m) in &presets {
                s += &format!(
                    "{:<6}  {:>5}  {:>5}  {:>7}  {}\n",
                    name,
                    m.frequency_ghz,
                    m.total_cores(),
                    m.topology.numa_domains,
                    levels(m)
                );
            }
            s
        },
        || {
            let mut s = String::from("name,frequency_ghz,cores,numa_domains,caches\n");
            for (name, m) in &presets {
                s += &format!(
                    "{},{},{},{},{}\n",
                    name,
                    m.frequency_ghz,
                    m.total_cores(),
                    m.topology.numa_domains,
                    levels(m)
                );
            }
            s
        },
    )
}

fn run(cli: Cli) -> Result<String> {
    let format = cli.format;
    match cli.command {
        Command::Machines => Ok(machines(format)),
        Command::Predict(a) => {
            let m = load_machine(&a.target.machine)?;
            let k = load_kernel(&a.kernel, &a.target)?;
            let traffic_overrides = match &a.traffic {
                Some(path) => read_volume_csv(open(path)?)?,
                None => BTreeMap::new(),
            };
            let opts = PredictOptions {
                residence: a.target.residence.map(|l| uniform_residence(&k, l)),
                threads: a.threads.max(1),
                traffic_overrides,
            };
            let p = predict_with(&k, &m, &opts)?;
            Ok(render(format, || p.render_table(), || p.render_csv()))
        }
        Command::Scale(a) => {
            let m = load_machine(&a.target.machine)?;
            let k = load_kernel(&a.kernel, &a.target)?;
            let opts = scaling_options(&a.scaling, Some(&k), a.target.residence)?;
            let c = predict_multicore(&k, &m, &a.cores.0, &opts)?;
            Ok(render(format, || c.render_table(), || c.render_csv()))
        }
        Command::Compose(a) => {
            let m = load_machine(&a.target.machine)?;
            let spec = load_composite(&a.composite)?;
            let curve = composite_curve(&spec, &m, &a.target, &a.cores.0, &a.scaling)?;
            Ok(render(format, || curve.render_table(), || curve.render_csv()))
        }
        Command::FitP0(a) => {
            let m = load_machine(&a.target.machine)?;
            let k = load_kernel(&a.kernel, &a.target)?;
            let measured = read_scaling_csv(open(&a.measured)?)?;
            let opts = scaling_options(&a.scaling, Some(&k), a.target.residence)?;
            let p0 = fit_p0(&measured, &k, &m, &opts)?;
            let p0 = ecm_core::format::trim(p0);
            Ok(render(format, || format!("p0 {p0} cy\n"), || format!("p0\n{p0}\n")))
        }
        Command::Infer(a) => {
            let m = load_machine(&a.target.machine)?;
            let k = load_kernel(&a.kernel, &a.target)?;
            let measured = read_measurement_csv(open(&a.measured)?)?;
            let ranked = infer_parameters(&k, &m, &measured, a.link, &a.bandwidths, &a.overlap, Execution::default())?;
            Ok(render(format, || render_hypotheses_table(&ranked), || render_hypotheses_csv(&ranked)))
        }
        Command::Compare(a) => {
            let m = load_machine(&a.target.machine)?;
            let measured = read_scaling_csv(open(&a.measured)?)?;
            let mut cores: Vec<usize> = measured.iter().map(|(n, _)| *n).filter(|&n| n <= m.total_cores()).collect();
            cores.sort_unstable();
            cores.dedup();
            if cores.is_empty() {
                return Err(ecm_core::Error::NoOverlap.into());
            }
            let report = match (&a.kernel, &a.composite) {
                (Some(kernel), _) => {
                    let k = load_kernel(kernel, &a.target)?;
                    let opts = scaling_options(&a.scaling, Some(&k), a.target.residence)?;
                    compare_curve(&predict_multicore(&k, &m, &cores, &opts)?, &measured)?
                }
                (None, Some(composite)) => {
                    let spec = load_composite(composite)?;
                    let curve = composite_curve(&spec, &m, &a.target, &cores, &a.scaling)?;
                    let predicted: Vec<(usize, f64)> = curve.points.iter().map(|p| (p.cores, p.performance)).collect();
                    ecm_core::compose::compare(&predicted, &measured)?
                }
                (None, None) => unreachable!("clap requires a kernel or a composite"),
            };
            Ok(render(format, || report.render_table(), || report.render_csv()))
        }
    }
}

fn composite_curve(
    spec: &CompositeSpec,
    m: &MachineModel,
    target: &Target,
    cores: &[usize],
    flags: &ScalingFlags,
) -> Result<ecm_core::compose::CompositeCurve> {
    let mut kernels = BTreeMap::new();
    for id in spec.kernel_ids() {
        kernels.insert(id.to_string(), load_kernel(id, target)?);
    }
    let mut opts = scaling_options(flags, None, None)?;
    if let Some(level) = target.residence {
        let mut curves = BTreeMap::new();
        for (id, k) in &kernels {
            let o = ScalingOptions {
                residence: Some(uniform_residence(k, level)),
                ..opts.clone()
            };
            curves.insert(id.clone(), predict_multicore(k, m, cores, &o)?);
        }
        return Ok(ecm_core::compose::compose(spec, &curves)?);
    }
    opts.residence = None;
    Ok(predict_composite(spec, &kernels, m, cores, &opts)?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
