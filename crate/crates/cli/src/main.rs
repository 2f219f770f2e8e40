use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use fbdof_core::beamformer::{alloc_three_user, alloc_two_user, build, build_k_user_corollary};
use fbdof_core::channel::{generate_with_tol, validate};
use fbdof_core::harness::{
    fig2_svg, fig4_svg, sweep_fig2, sweep_fig4, verify_grid, GridKind, FIG2_HEADER, FIG4_HEADER,
};
use fbdof_core::polytope::{fm_eliminate, fm_objective_bound, maximize};
use fbdof_core::simulator::{dof_report, run_two_slot, verify_rank_conditions};
use fbdof_core::{
    BeamformerSet, ChannelInstance, NetworkConfig, Polyhedron, SymbolAllocation, SymmetricConfig, Tolerance,
    TwoUserParams,
};

#[derive(Parser)]
#[command(name = "fbdof", version, about = "DoF of rank-deficient MIMO interference channels with feedback")]
struct Cli {
    /// Seed for channel draws and symbols.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Relative singular-value threshold for numerical rank.
    #[arg(long, global = true)]
    tol_rank: Option<f64>,
    /// Relative residual threshold for decoding and alignment.
    #[arg(long, global = true)]
    tol_residual: Option<f64>,
    /// Write the primary output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Emit JSON instead of text or CSV.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Channel instances.
    #[command(subcommand)]
    Channel(ChannelCmd),
    /// Build a scheme and run the two-slot protocol.
    #[command(subcommand)]
    Run(RunCmd),
    /// Figure data.
    #[command(subcommand)]
    Sweep(SweepCmd),
    /// Grid verification.
    #[command(subcommand)]
    Verify(VerifyCmd),
    /// Linear programs over constraint systems.
    #[command(subcommand)]
    Lp(LpCmd),
    /// Fourier-Motzkin projection.
    #[command(subcommand)]
    Fm(FmCmd),
}

#[derive(Args, Clone)]
struct NetworkArgs {
    /// Number of users (symmetric networks).
    #[arg(long)]
    k: Option<usize>,
    /// Antennas per node (symmetric networks).
    #[arg(long)]
    m: Option<usize>,
    /// Direct-link rank (symmetric networks).
    #[arg(long)]
    dd: Option<usize>,
    /// Cross-link rank (symmetric networks).
    #[arg(long)]
    dc: Option<usize>,
    /// Two-user transmit antennas, e.g. `2,3`.
    #[arg(long, value_delimiter = ',')]
    tx: Vec<usize>,
    /// Two-user receive antennas, e.g. `2,3`.
    #[arg(long, value_delimiter = ',')]
    rx: Vec<usize>,
    /// Two-user ranks in the order d11,d12,d21,d22.
    #[arg(long, value_delimiter = ',')]
    ranks: Vec<usize>,
}

impl NetworkArgs {
    fn network(&self, default_k: Option<usize>) -> Result<NetworkConfig> {
        if !self.tx.is_empty() || !self.rx.is_empty() || !self.ranks.is_empty() {
            let (t, r, d) = (&self.tx, &self.rx, &self.ranks);
            if t.len() != 2 || r.len() != 2 || d.len() != 4 {
                bail!("--tx and --rx take two values and --ranks takes four");
            }
            return Ok(TwoUserParams::new(t[0], t[1], r[0], r[1], d[0], d[1], d[2], d[3])?.network()?);
        }
        Ok(self.symmetric(default_k)?.network())
    }

    fn symmetric(&self, default_k: Option<usize>) -> Result<SymmetricConfig> {
        let k = self.k.or(default_k).context("--k is required")?;
        if let Some(d) = default_k {
            if k != d {
                bail!("this scheme is for K={d}");
            }
        }
        let m = self.m.context("--m is required")?;
        let dd = self.dd.context("--dd is required")?;
        let dc = self.dc.context("--dc is required")?;
        Ok(SymmetricConfig::new(k, m, dd, dc)?)
    }
}

#[derive(Subcommand)]
enum ChannelCmd {
    /// Draw a channel instance with the requested ranks.
    Gen(NetworkArgs),
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    network: NetworkArgs,
    /// Load the channel from a file instead of drawing it.
    #[arg(long)]
    channel: Option<PathBuf>,
    /// Load beamformers from a file instead of building them.
    #[arg(long)]
    beamformers: Option<PathBuf>,
    /// Save the beamformers used.
    #[arg(long)]
    save_beamformers: Option<PathBuf>,
    /// Save the full transmission trace.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Subcommand)]
enum RunCmd {
    TwoUser(RunArgs),
    ThreeUser(RunArgs),
    KUser(RunArgs),
}

#[derive(Args)]
struct RangeArgs {
    #[arg(long)]
    m_min: usize,
    #[arg(long)]
    m_max: usize,
    /// Also write an SVG plot.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SweepCmd {
    /// Symmetric two-user DoF with and without feedback.
    Fig2 {
        #[arg(long)]
        d: usize,
        #[command(flatten)]
        range: RangeArgs,
    },
    /// Symmetric three-user bounds with cross rank twice the direct rank.
    Fig4 {
        #[arg(long)]
        dd: usize,
        #[command(flatten)]
        range: RangeArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    TwoUser,
    ThreeUser,
}

#[derive(Subcommand)]
enum VerifyCmd {
    Grid {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long, default_value_t = 4)]
        max_antennas: usize,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
    },
}

#[derive(Args)]
struct SystemArgs {
    /// Polyhedron in text form.
    #[arg(long)]
    file: Option<PathBuf>,
    /// Use the two-user or three-user system for the given network.
    #[arg(long, value_enum)]
    system: Option<KindArg>,
    #[command(flatten)]
    network: NetworkArgs,
}

impl SystemArgs {
    fn polyhedron(&self) -> Result<Polyhedron> {
        match (&self.file, self.system) {
            (Some(path), None) => Ok(Polyhedron::parse(&read(path)?)?),
            (None, Some(KindArg::TwoUser)) => Ok(fbdof_core::polytope::two_user_constraints(
                &TwoUserParams::from_network(&self.network.network(Some(2))?)?,
            )),
            (None, Some(KindArg::ThreeUser)) => Ok(fbdof_core::polytope::three_user_constraints(
                &self.network.symmetric(Some(3))?,
            )),
            _ => bail!("give exactly one of --file and --system"),
        }
    }
}

#[derive(Subcommand)]
enum LpCmd {
    /// Maximize the objective exactly.
    Solve(SystemArgs),
}

#[derive(Subcommand)]
enum FmCmd {
    /// Eliminate variables; with no `--eliminate`, report the objective bound.
    Project {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, value_delimiter = ',')]
        eliminate: Vec<String>,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

struct Ctx {
    seed: u64,
    tol: Tolerance,
    out: Option<PathBuf>,
    json: bool,
}

impl Ctx {
    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(p) => write(p, text),
            None => {
                print!("{text}");
                if !text.ends_with('\n') {
                    println!();
                }
                Ok(())
            }
        }
    }
}

/// `Ok(true)` when every check passed.
fn run(cli: Cli) -> Result<bool> {
    let defaults = Tolerance::default();
    let tol = Tolerance::new(
        cli.tol_rank.unwrap_or(defaults.relative_rank_tol),
        cli.tol_residual.unwrap_or(defaults.residual_tol),
    )?;
    let ctx = Ctx {
        seed: cli.seed,
        tol,
        out: cli.out,
        json: cli.json,
    };
    match cli.command {
        Command::Channel(ChannelCmd::Gen(net)) => {
            let inst = generate_with_tol(&net.network(None)?, ctx.seed, &ctx.tol)?;
            ctx.emit(&inst.to_json()?)?;
            Ok(true)
        }
        Command::Run(cmd) => run_scheme(&ctx, cmd),
        Command::Sweep(cmd) => sweep(&ctx, cmd),
        Command::Verify(VerifyCmd::Grid {
            kind,
            max_antennas,
            seeds,
        }) => {
            let kind = match kind {
                KindArg::TwoUser => GridKind::TwoUser,
                KindArg::ThreeUser => GridKind::ThreeUser,
            };
            let report = verify_grid(kind, max_antennas, seeds, ctx.seed, &ctx.tol)?;
            if ctx.json {
                ctx.emit(&serde_json::to_string_pretty(&report)?)?;
            } else {
                ctx.emit(&report.to_csv()?)?;
            }
            eprintln!(
                "{} points, {} skipped, {} failures",
                report.rows.len(),
                report.skipped.len(),
                report.failures.len()
            );
            for s in &report.skipped {
                eprintln!("skip {} [{}]: {}", s.point, json!(s.reason).as_str().unwrap_or(""), s.detail);
            }
            for f in &report.failures {
                match f.seed {
                    Some(seed) => eprintln!("FAIL {} (seed {seed}): {}", f.point, f.detail),
                    None => eprintln!("FAIL {}: {}", f.point, f.detail),
                }
            }
            Ok(report.passed())
        }
        Command::Lp(LpCmd::Solve(sys)) => {
            let poly = sys.polyhedron()?;
            let sol = maximize(&poly)?;
            if ctx.json {
                ctx.emit(&serde_json::to_string_pretty(&json!({
                    "value": sol.value,
                    "witness": poly.variables().iter().zip(&sol.witness)
                        .map(|(v, x)| (v.clone(), json!(x))).collect::<serde_json::Map<_, _>>(),
                }))?)?;
            } else {
                let mut text = format!("max {}\n", sol.value);
                for (v, x) in poly.variables().iter().zip(&sol.witness) {
                    text += &format!("{v} = {x}\n");
                }
                ctx.emit(&text)?;
            }
            Ok(true)
        }
        Command::Fm(FmCmd::Project { system, eliminate }) => {
            let poly = system.polyhedron()?;
            if eliminate.is_empty() {
                let bound = fm_objective_bound(&poly)?;
                if ctx.json {
                    ctx.emit(&json!({ "bound": bound }).to_string())?;
                } else {
                    ctx.emit(&format!("max {bound}\n"))?;
                }
            } else {
                let mut p = poly;
                for v in &eliminate {
                    p = fm_eliminate(&p, v)?;
                }
                ctx.emit(&p.to_text())?;
            }
            Ok(true)
        }
    }
}

fn run_scheme(ctx: &Ctx, cmd: RunCmd) -> Result<bool> {
    let (scheme_k, args) = match &cmd {
        RunCmd::TwoUser(a) => (Some(2), a),
        RunCmd::ThreeUser(a) => (Some(3), a),
        RunCmd::KUser(a) => (None, a),
    };
    let inst = match &args.channel {
        Some(path) => ChannelInstance::from_json(&read(path)?)?,
        None => generate_with_tol(&args.network.network(scheme_k)?, ctx.seed, &ctx.tol)?,
    };
    let ranks = validate(&inst, &ctx.tol);
    if !ranks.all_pass() {
        bail!("channel ranks do not match the configuration");
    }
    let (bf, alloc): (BeamformerSet, SymbolAllocation) = match &args.beamformers {
        Some(path) => {
            let bf = BeamformerSet::from_json(&read(path)?)?;
            let alloc = bf.allocation;
            (bf, alloc)
        }
        None => match cmd {
            RunCmd::TwoUser(_) => {
                let alloc = alloc_two_user(inst.config())?;
                (build(&inst, &alloc, &ctx.tol)?, alloc)
            }
            RunCmd::ThreeUser(_) => {
                let s = inst.config().as_symmetric().context("three-user scheme needs a symmetric channel")?;
                let alloc = alloc_three_user(&s)?;
                (build(&inst, &alloc, &ctx.tol)?, alloc)
            }
            RunCmd::KUser(_) => build_k_user_corollary(&inst, &ctx.tol)?,
        },
    };
    if let Some(p) = &args.save_beamformers {
        write(p, &bf.to_json()?)?;
    }
    let ranks = verify_rank_conditions(&inst, &bf, &alloc, &ctx.tol)?;
    let trace = run_two_slot(&inst, &bf, &alloc, &ctx.tol)?;
    if let Some(p) = &args.trace {
        write(p, &trace.to_json()?)?;
    }
    let report = dof_report(&inst, &alloc, &trace);
    let ok = ranks.all_pass() && report.within_upper;
    if ctx.json {
        ctx.emit(&serde_json::to_string_pretty(&json!({
            "seed": inst.seed(),
            "allocation": alloc,
            "dof": report,
            "rank_checks": ranks,
            "max_residual": trace.max_residual(),
        }))?)?;
    } else {
        let opt = |r: Option<fbdof_core::Rational>| r.map_or("-".to_string(), |r| r.to_string());
        let mut text = format!(
            "symbols delivered: {} in {} slots\nachieved DoF: {}\nclosed-form achievable: {}\nupper bound: {}\nmax residual: {:.3e}\n",
            report.decoded_symbols_total,
            report.slots,
            report.achieved_dof,
            opt(report.formula_lower),
            opt(report.formula_upper),
            trace.max_residual()
        );
        for c in &ranks.checks {
            text += &format!(
                "rank {:<12} rx{}: {} (expected {}) {}\n",
                c.name,
                c.receiver + 1,
                c.measured,
                c.expected,
                if c.pass { "ok" } else { "FAIL" }
            );
        }
        ctx.emit(&text)?;
    }
    Ok(ok)
}

fn sweep(ctx: &Ctx, cmd: SweepCmd) -> Result<bool> {
    let (csv, json_rows, skipped, svg, path) = match cmd {
        SweepCmd::Fig2 { d, range } => {
            let t = sweep_fig2(d, range.m_min..=range.m_max)?;
            for w in &t.warnings {
                eprintln!("warning: {w}");
            }
            (t.to_csv(&FIG2_HEADER)?, json!(t.rows), t.skipped.clone(), fig2_svg(&t), range.svg)
        }
        SweepCmd::Fig4 { dd, range } => {
            let t = sweep_fig4(dd, range.m_min..=range.m_max)?;
            (t.to_csv(&FIG4_HEADER)?, json!(t.rows), t.skipped.clone(), fig4_svg(&t), range.svg)
        }
    };
    for s in &skipped {
        eprintln!("skip {}: {}", s.point, s.detail);
    }
    if let Some(p) = path {
        write(&p, &svg)?;
    }
    if ctx.json {
        ctx.emit(&serde_json::to_string_pretty(&json!({ "rows": json_rows, "skipped": skipped }))?)?;
    } else {
        ctx.emit(&csv)?;
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
