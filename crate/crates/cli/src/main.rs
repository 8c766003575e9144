use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use wgmsim_core::acceptance::{self, Overrides};
use wgmsim_core::dressed::{numeric_dressed, DressedOptions};
use wgmsim_core::emit::{emit, Format};
use wgmsim_core::fockspace::HilbertSpace;
use wgmsim_core::params::{validate, Preset};
use wgmsim_core::scan::{parse_observables, run_scan, Axis, Method, Observable, ResultTable, ScanSpec};
use wgmsim_core::th::{build_liouvillian, solve_steady_state_with, SolveOptions};
use wgmsim_core::Params;

#[derive(Parser)]
#[command(name = "wgmsim", version, about = "Steady-state spectra of a Lambda atom coupled to a whispering-gallery resonator")]
struct Cli {
    /// Log level (error, warn, info, debug).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One-dimensional scan.
    Spectrum {
        #[command(flatten)]
        params: ParamArgs,
        /// NAME:MIN:MAX:STEP
        #[arg(long, default_value = "Delta_1:-250:250:1")]
        axis: String,
        #[command(flatten)]
        scan: ScanArgs,
    },
    /// Two-dimensional scan.
    Map2d {
        #[command(flatten)]
        params: ParamArgs,
        /// First axis, NAME:MIN:MAX:STEP.
        #[arg(long, default_value = "Delta_1:-50:50:1")]
        x: String,
        /// Second axis, NAME:MIN:MAX:STEP.
        #[arg(long, default_value = "Delta_2:-50:50:1")]
        y: String,
        #[command(flatten)]
        scan: ScanArgs,
    },
    /// Runs both solvers on one axis and reports their deviation.
    Compare {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value = "Delta_1:-100:100:1")]
        axis: String,
        #[arg(long, default_value = "F_a1")]
        observables: String,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dressed-state energies of the drive-free Hamiltonian.
    Dressed {
        #[command(flatten)]
        params: ParamArgs,
        /// Excitation sector (0, 1 or 2); all three when omitted.
        #[arg(long)]
        sector: Option<usize>,
        /// Include modes that do not couple to the atom.
        #[arg(long)]
        all_modes: bool,
        /// Keep the configured detunings instead of zeroing them.
        #[arg(long)]
        keep_detunings: bool,
        /// Write the level scheme as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs the acceptance criteria.
    Validate {
        /// Comma-separated criterion numbers; all when omitted.
        #[arg(long)]
        criteria: Option<String>,
        /// Scale the fiber coupling in the extinction check.
        #[arg(long)]
        kappa_ex_scale: Option<f64>,
        /// Seed of the randomized property check.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Writes the trace-eliminated generator and the steady state as triplets.
    #[command(hide = true)]
    Dump {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ParamArgs {
    /// strong or bad_cavity.
    #[arg(long, default_value = "strong")]
    preset: String,
    /// `key = value` file applied after the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// KEY=VALUE override, applied last; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ParamArgs {
    fn resolve(&self) -> Result<(String, Params)> {
        let preset: Preset = self.preset.parse().map_err(anyhow::Error::msg)?;
        let mut p = preset.params::<f64>();
        let mut label = preset.name().to_string();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            p.apply_config(&text).with_context(|| format!("in {}", path.display()))?;
            label = format!("{label}+{}", path.display());
        }
        for kv in &self.overrides {
            let (k, v) = kv.split_once('=').with_context(|| format!("`{kv}` is not KEY=VALUE"))?;
            p.set_key(k.trim(), v.trim())?;
        }
        validate(p.clone()).map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok((label, p))
    }
}

#[derive(Args)]
struct ScanArgs {
    /// th, ae, both or no-atom.
    #[arg(long, default_value = "th")]
    method: String,
    /// Comma-separated: F_a1,F_b1,F_a2,F_b2,P1,P2,P3,g2_a1a1,g2_a2a2,g2_a1a2 or `all`.
    #[arg(long, default_value = "F_a1,F_b1,F_a2,F_b2,P1,P2,P3")]
    observables: String,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Output path stem; extensions are appended.
    #[arg(long, default_value = "wgmsim")]
    out: PathBuf,
    /// Comma-separated: csv, json, svg.
    #[arg(long, default_value = "csv,svg")]
    format: String,
    /// Truncated space for the th method: one-per-mode or two-photon.
    #[arg(long, default_value = "one-per-mode")]
    truncation: String,
}

fn formats(list: &str) -> Result<Vec<Format>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "svg" => Ok(Format::Svg),
            other => bail!("unknown format `{other}`"),
        })
        .collect()
}

fn scan_command(params: &ParamArgs, axes: &[&str], scan: &ScanArgs) -> Result<bool> {
    let (label, base) = params.resolve()?;
    let axes = axes.iter().map(|a| a.parse::<Axis>()).collect::<Result<Vec<_>, _>>()?;
    let method: Method = scan.method.parse().map_err(anyhow::Error::msg)?;
    let mut spec = ScanSpec::new(method, base, axes);
    spec.observables = parse_observables(&scan.observables).map_err(anyhow::Error::msg)?;
    spec.workers = scan.workers;
    spec.truncation = scan.truncation.parse().map_err(anyhow::Error::msg)?;
    spec.label = label;
    let table = run_scan(&spec)?;
    report_table(&table, &scan.out, &formats(&scan.format)?)
}

fn report_table(table: &ResultTable, out: &std::path::Path, formats: &[Format]) -> Result<bool> {
    for path in emit(table, out, formats)? {
        println!("wrote {}", path.display());
    }
    let m = &table.metadata;
    println!(
        "{} cells in {:.1} s, max residual {:.2e}, {} failed",
        table.rows.len(),
        m.elapsed_seconds,
        m.max_residual,
        m.failed_cells
    );
    for row in table.rows.iter().filter(|r| !r.is_ok()).take(5) {
        eprintln!("  {:?}: {}", row.coords, row.status);
    }
    Ok(table.all_ok())
}

fn compare(params: &ParamArgs, axis: &str, observables: &str, workers: usize, out: Option<&PathBuf>) -> Result<bool> {
    let (label, base) = params.resolve()?;
    let mut spec = ScanSpec::new(Method::Both, base, vec![axis.parse()?]);
    spec.observables = parse_observables(observables)
        .map_err(anyhow::Error::msg)?
        .into_iter()
        .filter(|o| !o.is_correlation())
        .collect::<Vec<Observable>>();
    spec.workers = workers;
    spec.label = label;
    let table = run_scan(&spec)?;
    for o in &spec.observables {
        let th = table.column(&format!("TH_{}", o.label())).unwrap_or_default();
        let ae = table.column(&format!("AE_{}", o.label())).unwrap_or_default();
        let (mut worst, mut at) = (0.0f64, f64::NAN);
        for ((t, a), row) in th.iter().zip(&ae).zip(&table.rows) {
            let scale = t.abs().max(a.abs());
            if scale > 0.0 && (t - a).abs() / scale > worst {
                worst = (t - a).abs() / scale;
                at = row.coords[0];
            }
        }
        println!("{}: max relative TH/AE deviation {:.3}% at {} = {at}", o.label(), 100.0 * worst, table.axes[0].name);
    }
    match out {
        Some(stem) => report_table(&table, stem, &[Format::Csv, Format::Svg]),
        None => Ok(table.all_ok()),
    }
}

fn dressed(params: &ParamArgs, sector: Option<usize>, all_modes: bool, keep: bool, out: Option<&PathBuf>) -> Result<bool> {
    let (_, p) = params.resolve()?;
    let p = validate(p).map_err(|e| anyhow::anyhow!("{e}"))?;
    let opts = DressedOptions { zero_detunings: !keep, coupled_modes_only: !all_modes };
    let sectors: Vec<usize> = match sector {
        Some(s) if s <= 2 => vec![s],
        Some(s) => bail!("sector {s} is not available (0, 1 or 2)"),
        None => vec![0, 1, 2],
    };
    let mut all = Vec::new();
    for s in sectors {
        let spec = numeric_dressed(&p, s, opts)?;
        println!("sector {s}");
        println!("  {:>12}  {:>12}  dominant components", "energy", "resonant at");
        for st in &spec.states {
            let mut parts: Vec<(f64, &String)> =
                st.amplitudes.iter().map(|a| a.norm_sqr()).zip(&spec.basis).filter(|(w, _)| *w > 1e-6).collect();
            parts.sort_by(|a, b| b.0.total_cmp(&a.0));
            let comps: Vec<String> = parts.iter().map(|(w, l)| format!("{w:.3} {l}")).collect();
            println!("  {:>12.4}  {:>12.4}  {}", st.energy, -st.energy, comps.join(", "));
        }
        all.push(spec);
    }
    if let Some(path) = out {
        let text = serde_json::to_string_pretty(&all)?;
        wgmsim_core::emit::write_atomic(path, text.as_bytes())?;
        println!("wrote {}", path.display());
    }
    Ok(true)
}

fn validate_cmd(criteria: Option<&str>, kappa_ex_scale: Option<f64>, seed: Option<u64>, json: Option<&PathBuf>) -> Result<bool> {
    let ids: Vec<u32> = match criteria {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().parse::<u32>().with_context(|| format!("bad criterion `{s}`")))
            .collect::<Result<_>>()?,
        None => acceptance::CRITERIA.iter().map(|c| c.0).collect(),
    };
    let overrides = Overrides { kappa_ex_scale, seed };
    let mut results = Vec::new();
    for id in ids {
        let r = acceptance::run_criterion(id, &overrides).with_context(|| format!("no criterion {id}"))?;
        println!("{}", r.line());
        results.push(r);
    }
    let report = acceptance::Report { results };
    if let Some(path) = json {
        wgmsim_core::emit::write_atomic(path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    }
    Ok(report.all_passed())
}

fn dump(params: &ParamArgs, out: &std::path::Path) -> Result<bool> {
    let (_, p) = params.resolve()?;
    let p = validate(p).map_err(|e| anyhow::anyhow!("{e}"))?;
    let space = HilbertSpace::single_photon();
    let system = build_liouvillian(&space, &p)?;
    std::fs::create_dir_all(out)?;
    let mut g = Vec::new();
    let mut k = Vec::new();
    system.write_triplets(&mut g, &mut k)?;
    wgmsim_core::emit::write_atomic(&out.join("G.txt"), &g)?;
    wgmsim_core::emit::write_atomic(&out.join("K.txt"), &k)?;
    let opts = SolveOptions { singular_fallback: true, ..SolveOptions::default() };
    let ss = solve_steady_state_with(&system, &opts)?;
    let mut rho = Vec::new();
    ss.write_triplets(&mut rho)?;
    wgmsim_core::emit::write_atomic(&out.join("rho.txt"), &rho)?;
    println!("wrote G.txt, K.txt, rho.txt to {} (residual {:.2e})", out.display(), ss.residual());
    Ok(true)
}

fn run(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::Spectrum { params, axis, scan } => scan_command(params, &[axis], scan),
        Command::Map2d { params, x, y, scan } => scan_command(params, &[x, y], scan),
        Command::Compare { params, axis, observables, workers, out } => {
            compare(params, axis, observables, *workers, out.as_ref())
        }
        Command::Dressed { params, sector, all_modes, keep_detunings, out } => {
            dressed(params, *sector, *all_modes, *keep_detunings, out.as_ref())
        }
        Command::Validate { criteria, kappa_ex_scale, seed, json } => {
            validate_cmd(criteria.as_deref(), *kappa_ex_scale, *seed, json.as_ref())
        }
        Command::Dump { params, out } => dump(params, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
