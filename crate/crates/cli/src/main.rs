use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use sepmarg::bounds::{epsilon, prop1_bound, BoundVariant};
use sepmarg::classical::{glue_chordal, ClassicalError};
use sepmarg::hierarchy::{
    auto_private_sites, build, build_energy, check, minimize, HierarchyError, HierarchyKind, HierarchyOptions, Relaxation, Verdict,
};
use sepmarg::io::{CompletionFile, DistributionFile, EnsembleFile, FormatError, HamiltonianFile, ScenarioFile, WitnessFile};
use sepmarg::models::{critical_beta_scan, ModelError, ScanSettings, ScanVerdict};
use sepmarg::scenarios::{chordal_complete, MarginalScenario, ScenarioKind};
use sepmarg::sdp::{write_sdpa, SdpError, SdpOptions, SdpStatus};

const EXIT_INFEASIBLE: u8 = 3;
const EXIT_INCONCLUSIVE: u8 = 4;

/// Separability of quantum marginals via SDP relaxation hierarchies.
#[derive(Parser)]
#[command(name = "sepmarg", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Decide whether an ensemble file has a separable global extension.
    Check(CheckArgs),
    /// Lower-bound the separable energy of a Hamiltonian file.
    SepEnergy(EnergyArgs),
    /// Scan thermal marginals over inverse temperature for separability changes.
    BetaScan(ScanArgs),
    /// Convergence radii ε(L, d) and per-set trace-distance bounds.
    Bounds(BoundsArgs),
    /// Glue clique marginals into one global distribution.
    Glue(GlueArgs),
    /// Chordal completion of a scenario with its clique map.
    Complete(CompleteArgs),
}

#[derive(Args)]
struct Relax {
    /// Extension level L.
    #[arg(long, default_value_t = 1)]
    level: usize,
    /// h, hbar, line, ring, completed, ti1d or ti2d; defaults to the scenario kind.
    #[arg(long, value_parser = parse_kind)]
    hierarchy: Option<HierarchyKind>,
    /// Solver tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Write the SDP instance in SDPA sparse format.
    #[arg(long, value_name = "PATH")]
    dump_sdp: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

impl Relax {
    fn hierarchy(&self) -> HierarchyOptions {
        HierarchyOptions::level(self.level)
    }

    fn sdp(&self) -> SdpOptions {
        SdpOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            ..SdpOptions::default()
        }
    }

    fn kind(&self, s: &MarginalScenario) -> HierarchyKind {
        self.hierarchy.unwrap_or(match s.kind() {
            ScenarioKind::Line => HierarchyKind::Line,
            ScenarioKind::Ring => HierarchyKind::Ring,
            ScenarioKind::Ti1d { .. } => HierarchyKind::Ti1d,
            ScenarioKind::Ti2dReflect { .. } => HierarchyKind::Ti2d,
            ScenarioKind::Star | ScenarioKind::Custom => HierarchyKind::H,
        })
    }

    fn dump(&self, relax: &Relaxation) -> Result<()> {
        if let Some(path) = &self.dump_sdp {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_sdpa(&relax.instance, BufWriter::new(f))?;
        }
        Ok(())
    }
}

#[derive(Args)]
struct CheckArgs {
    file: PathBuf,
    #[command(flatten)]
    relax: Relax,
    /// Tolerance for state validity and local compatibility when parsing.
    #[arg(long, default_value_t = 1e-8)]
    state_tol: f64,
    /// Witness sidecar path; defaults to `<file>.witness.json`.
    #[arg(long, value_name = "PATH")]
    witness: Option<PathBuf>,
}

#[derive(Args)]
struct EnergyArgs {
    file: PathBuf,
    /// Scenario file replacing the one in the Hamiltonian file.
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,
    #[command(flatten)]
    relax: Relax,
}

#[derive(Args)]
struct ScanArgs {
    file: PathBuf,
    /// Inclusive β interval `lo,hi`.
    #[arg(long, value_parser = parse_range, default_value = "0,2")]
    range: (f64, f64),
    /// Grid points including both ends.
    #[arg(long, default_value_t = 41)]
    grid: usize,
    /// Bisection resolution of each transition.
    #[arg(long, default_value_t = 1e-3)]
    resolution: f64,
    #[command(flatten)]
    relax: Relax,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    level: usize,
    /// Local dimensions of one set, comma separated; ignored with --scenario.
    #[arg(long, value_delimiter = ',', default_value = "2,2")]
    dims: Vec<usize>,
    /// Scenario file; radii are reported per set.
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,
    /// Skip one private site per set where one exists.
    #[arg(long)]
    skip_private: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GlueArgs {
    file: PathBuf,
    /// Output path; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CompleteArgs {
    file: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_kind(s: &str) -> std::result::Result<HierarchyKind, String> {
    s.parse().map_err(|e: HierarchyError| e.to_string())
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let hi = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((lo, hi))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value = serde_json::from_str(&text).map_err(FormatError::from).with_context(|| format!("parsing {}", path.display()))?;
    Ok(value)
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn status_name(s: SdpStatus) -> &'static str {
    match s {
        SdpStatus::Optimal => "optimal",
        SdpStatus::PrimalInfeasible => "primal_infeasible",
        SdpStatus::DualInfeasible => "dual_infeasible",
        SdpStatus::MaxIter => "max_iter",
    }
}

fn cmd_check(a: &CheckArgs) -> Result<u8> {
    let file: EnsembleFile = read_json(&a.file)?;
    let e = file.to_ensemble(a.state_tol).with_context(|| format!("validating {}", a.file.display()))?;
    let kind = a.relax.kind(e.scenario());
    let relax = build(kind, &e, &a.relax.hierarchy())?;
    a.relax.dump(&relax)?;
    let report = check(&relax, &a.relax.sdp())?;
    let (label, code, witness) = match &report.verdict {
        Verdict::Feasible => ("FEASIBLE", 0, None),
        Verdict::Infeasible(w) => {
            let path = a.witness.clone().unwrap_or_else(|| {
                let mut p = a.file.clone().into_os_string();
                p.push(".witness.json");
                p.into()
            });
            fs::write(&path, serde_json::to_string_pretty(&WitnessFile::new(w))?).with_context(|| format!("writing {}", path.display()))?;
            ("INFEASIBLE", EXIT_INFEASIBLE, Some((path, w.violation)))
        }
        Verdict::Inconclusive => ("INCONCLUSIVE", EXIT_INCONCLUSIVE, None),
    };
    if a.relax.json {
        let out = json!({
            "verdict": label.to_lowercase(),
            "hierarchy": kind.to_string(),
            "level": a.relax.level,
            "status": status_name(report.solution.status),
            "iterations": report.solution.iterations,
            "witness": witness.as_ref().map(|w| w.0.display().to_string()),
            "violation": witness.as_ref().map(|w| w.1),
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        match &witness {
            Some((path, v)) => println!("{label} (violation {v:.3e}, witness {})", path.display()),
            None => println!("{label}"),
        }
    }
    Ok(code)
}

fn cmd_sep_energy(a: &EnergyArgs) -> Result<u8> {
    let file: HamiltonianFile = read_json(&a.file)?;
    let s = match &a.scenario {
        Some(p) => read_json::<ScenarioFile>(p)?.to_scenario()?,
        None => file.scenario()?,
    };
    let terms = file.local_terms()?;
    let kind = a.relax.kind(&s);
    let relax = build_energy(kind, &s, &terms, &a.relax.hierarchy())?;
    a.relax.dump(&relax)?;
    let b = minimize(&relax, &a.relax.sdp())?;
    let code = if b.status == SdpStatus::Optimal { 0 } else { EXIT_INCONCLUSIVE };
    if a.relax.json {
        let out = json!({
            "bound": b.value,
            "dual_bound": b.dual_value,
            "status": status_name(b.status),
            "hierarchy": kind.to_string(),
            "level": a.relax.level,
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else if code == 0 {
        println!("{:.10}", b.value);
    } else {
        println!("INCONCLUSIVE ({}) last bound {:.10}", status_name(b.status), b.value);
    }
    Ok(code)
}

fn verdict_name(v: ScanVerdict) -> &'static str {
    match v {
        ScanVerdict::Feasible => "feasible",
        ScanVerdict::Infeasible => "infeasible",
        ScanVerdict::Inconclusive => "inconclusive",
    }
}

fn cmd_beta_scan(a: &ScanArgs) -> Result<u8> {
    let file: HamiltonianFile = read_json(&a.file)?;
    let s = file.scenario()?;
    let h = file.global()?;
    let mut set = ScanSettings::new(a.relax.kind(&s), a.relax.level, a.range, a.grid);
    set.resolution = a.resolution;
    set.sdp = a.relax.sdp();
    let r = critical_beta_scan(&h, &s, &set)?;
    if a.relax.json {
        println!("{}", serde_json::to_string_pretty(&r)?);
    } else {
        let mut out = std::io::stdout().lock();
        writeln!(out, "# beta verdict")?;
        for (b, v) in &r.grid {
            writeln!(out, "{b:.6} {}", verdict_name(*v))?;
        }
        for t in &r.transitions {
            writeln!(
                out,
                "# transition {:.6} {:.6} {} -> {}{}",
                t.lo,
                t.hi,
                verdict_name(t.below),
                verdict_name(t.above),
                if t.resolved { "" } else { " (unresolved)" }
            )?;
        }
    }
    let inconclusive = r.grid.iter().any(|p| p.1 == ScanVerdict::Inconclusive) || r.transitions.iter().any(|t| !t.resolved);
    Ok(if inconclusive { EXIT_INCONCLUSIVE } else { 0 })
}

fn cmd_bounds(a: &BoundsArgs) -> Result<u8> {
    if a.level == 0 {
        bail!("--level must be at least 1");
    }
    let s = match &a.scenario {
        Some(p) => read_json::<ScenarioFile>(p)?.to_scenario()?,
        None => {
            if a.dims.is_empty() || a.dims.contains(&0) {
                bail!("--dims needs positive dimensions");
            }
            MarginalScenario::custom(a.dims.iter().enumerate().map(|(i, &d)| (i + 1, d)).collect(), vec![(1..=a.dims.len()).collect()])?
        }
    };
    let mut dims = s.dims().to_vec();
    dims.sort_unstable();
    dims.dedup();
    let variant = if a.skip_private {
        BoundVariant::SkipPrivate(auto_private_sites(&s))
    } else {
        BoundVariant::AllSites
    };
    let radii = prop1_bound(&s, a.level, &variant);
    let eps: Vec<(usize, usize, f64)> = (1..=a.level).flat_map(|l| dims.iter().map(move |&d| (l, d, epsilon::<f64>(l, d)))).collect();
    if a.json {
        let out = json!({
            "epsilon": eps.iter().map(|(l, d, e)| json!({"level": l, "dim": d, "epsilon": e})).collect::<Vec<_>>(),
            "radii": radii.per_set.iter().map(|(set, r)| json!({"set": set, "radius": r})).collect::<Vec<_>>(),
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        println!("# level dim epsilon");
        for (l, d, e) in &eps {
            println!("{l} {d} {e:.12e}");
        }
        println!("# set radius (level {})", a.level);
        for (set, r) in &radii.per_set {
            println!("{} {r:.12e}", sepmarg::io::set_key(set));
        }
    }
    Ok(0)
}

fn cmd_glue(a: &GlueArgs) -> Result<u8> {
    let file: DistributionFile = read_json(&a.file)?;
    let ps = file.to_distributions()?;
    let glued = glue_chordal(&ps)?;
    emit(&serde_json::to_string_pretty(&DistributionFile::new(&[glued]))?, a.output.as_deref())?;
    Ok(0)
}

fn cmd_complete(a: &CompleteArgs) -> Result<u8> {
    let s = read_json::<ScenarioFile>(&a.file)?.to_scenario()?;
    let c = chordal_complete(&s)?;
    emit(&serde_json::to_string_pretty(&CompletionFile::new(&s, &c))?, a.output.as_deref())?;
    Ok(0)
}

fn breakdown(e: &SdpError) -> bool {
    matches!(e, SdpError::NumericalBreakdown(_))
}

fn hierarchy_breakdown(e: &HierarchyError) -> bool {
    matches!(e, HierarchyError::Sdp(s) if breakdown(s))
}

/// Failures of the numerics, as opposed to bad input.
fn solver_breakdown(err: &anyhow::Error) -> bool {
    err.chain().any(|c| {
        c.downcast_ref::<SdpError>().is_some_and(breakdown)
            || c.downcast_ref::<HierarchyError>().is_some_and(hierarchy_breakdown)
            || matches!(c.downcast_ref::<ModelError>(), Some(ModelError::Hierarchy(h)) if hierarchy_breakdown(h))
            || matches!(c.downcast_ref::<ClassicalError>(), Some(ClassicalError::Sdp(s)) if breakdown(s))
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.cmd {
        Cmd::Check(a) => cmd_check(a),
        Cmd::SepEnergy(a) => cmd_sep_energy(a),
        Cmd::BetaScan(a) => cmd_beta_scan(a),
        Cmd::Bounds(a) => cmd_bounds(a),
        Cmd::Glue(a) => cmd_glue(a),
        Cmd::Complete(a) => cmd_complete(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if solver_breakdown(&e) { 2 } else { 1 })
        }
    }
}
