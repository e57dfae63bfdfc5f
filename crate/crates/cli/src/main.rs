mod config;
mod output;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use coupler_cz::calibrate::{optimize_pulse, sweep_2d, OptimizeSettings, SweepMode, SweepRow};
use coupler_cz::device::{BasisLabel, DeviceParams};
use coupler_cz::metrics::{simulate_gate, GateReport};
use coupler_cz::propagator::{evolve_trajectory, EvolutionSettings, InitialState};
use coupler_cz::pulse::PulseParams;
use coupler_cz::spectrum::{chi_sweep, zz_report, zz_sweep};

use config::{pick_grid, resolve_device, resolve_pulse, Grid, PulseSpec, RunConfig};
use output::{emit, num, opt, Table};

/// Environment variable holding the worker-thread count.
const WORKERS_ENV: &str = "CZSIM_WORKERS";

#[derive(Parser, Debug)]
#[command(name = "czsim", version, about = "Transmon-coupler-transmon CZ gate simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Device preset (paper-tableI, paper-tableIII) or TOML file.
    #[arg(long, global = true)]
    device: Option<String>,
    /// Pulse preset (tableII-a, tableII-b, tableII-c, sec4-450ns) or TOML file.
    #[arg(long, global = true)]
    pulse: Option<String>,
    /// Run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Integration step in ns.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Gate times in ns, `start:stop:count` or one value.
    #[arg(long, global = true, allow_hyphen_values = true)]
    tg: Option<String>,
    /// Drive detunings in GHz, `start:stop:count` or one value.
    #[arg(long, global = true, allow_hyphen_values = true)]
    detuning: Option<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Fixed,
    Optimize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Static ZZ coupling of one device.
    Zz,
    /// ZZ over a grid of qubit frequencies.
    ZzSweep {
        /// Qubit 1 frequencies in GHz; defaults to the device value.
        #[arg(long, allow_hyphen_values = true)]
        omega1: Option<String>,
        /// Qubit 2 frequencies in GHz.
        #[arg(long, allow_hyphen_values = true)]
        omega2: Option<String>,
    },
    /// Coupler transition shifts versus a common coupling strength.
    ChiSweep {
        /// Couplings in GHz.
        #[arg(long, allow_hyphen_values = true)]
        g: Option<String>,
    },
    /// Population dynamics from one initial state.
    Dynamics {
        /// Initial basis state such as 101 or |101>.
        #[arg(long)]
        initial: Option<String>,
        /// Start from the bare product state instead of the dressed one.
        #[arg(long)]
        bare: bool,
    },
    /// Gate metrics of one pulse.
    GateReport,
    /// Optimize the envelope at one gate time and detuning.
    Optimize {
        #[arg(long)]
        max_evals: Option<usize>,
        #[arg(long)]
        cost_tol: Option<f64>,
    },
    /// Gate metrics versus detuning at one gate time.
    Sweep1d,
    /// Gate metrics over gate time and detuning.
    Sweep2d,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Zz => "zz",
            Command::ZzSweep { .. } => "zz-sweep",
            Command::ChiSweep { .. } => "chi-sweep",
            Command::Dynamics { .. } => "dynamics",
            Command::GateReport => "gate-report",
            Command::Optimize { .. } => "optimize",
            Command::Sweep1d => "sweep1d",
            Command::Sweep2d => "sweep2d",
        }
    }
}

/// Everything a subcommand needs after flags and config are merged.
struct Ctx {
    config: RunConfig,
    device: DeviceParams,
    pulse_spec: Option<PulseSpec>,
    evolution: EvolutionSettings,
    header: toml::Table,
}

impl Ctx {
    fn new(common: &Common) -> Result<Self> {
        let config = match &common.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let device_spec = resolve_device(common.device.as_deref(), config.device.as_ref())?;
        let device = device_spec.to_params()?;
        let pulse_spec = resolve_pulse(common.pulse.as_deref(), config.pulse.as_ref())?;
        let evolution = config.evolution(common.dt);
        let mut header = toml::Table::new();
        header.insert("device".into(), toml::Value::try_from(device_spec)?);
        Ok(Self {
            config,
            device,
            pulse_spec,
            evolution,
            header,
        })
    }

    fn note(&mut self, key: &str, value: impl Into<toml::Value>) {
        self.header.insert(key.into(), value.into());
    }

    fn note_evolution(&mut self) {
        let mut t = toml::Table::new();
        t.insert("dt_ns".into(), self.evolution.dt.into());
        t.insert("sample_stride".into(), (self.evolution.sample_stride as i64).into());
        self.note("evolution", t);
    }

    fn note_pulse(&mut self, p: &PulseParams) -> Result<()> {
        self.note("pulse", toml::Value::try_from(PulseSpec::from_params(p))?);
        Ok(())
    }

    fn pulse(&self) -> Result<PulseParams> {
        match &self.pulse_spec {
            Some(p) => p.to_params(),
            None => bail!("this command needs a pulse (--pulse or [pulse] in the config)"),
        }
    }

    fn mode(&self, flag: Option<Mode>) -> Result<Mode> {
        if let Some(m) = flag {
            return Ok(m);
        }
        match self.config.mode.as_deref() {
            None | Some("fixed") => Ok(Mode::Fixed),
            Some("optimize") => Ok(Mode::Optimize),
            Some(other) => bail!("mode must be 'fixed' or 'optimize', got '{other}'"),
        }
    }

    fn finish(&self, table: &Table, command: &str, out: Option<&PathBuf>) -> Result<()> {
        emit(&table.render(&self.header, command)?, out.map(PathBuf::as_path))
    }
}

fn configure_workers() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got '{v}'"))?;
        if n == 0 {
            bail!("{WORKERS_ENV} must be a positive integer, got '{v}'");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn grid_value(g: &Grid) -> toml::Value {
    g.to_string().into()
}

fn report_columns() -> [&'static str; 15] {
    [
        "theta00_rad",
        "theta10_rad",
        "theta01_rad",
        "theta11_rad",
        "cond_phase_rad",
        "abs_cond_phase_rad",
        "phase_error_rad",
        "leakage",
        "fidelity",
        "infidelity",
        "cost",
        "return00",
        "return10",
        "return01",
        "return11",
    ]
}

fn report_cells(r: &GateReport) -> Vec<String> {
    let mut v: Vec<String> = r.theta.iter().map(|&x| num(x)).collect();
    v.extend([
        num(r.cond_phase),
        num(r.cond_phase.abs()),
        num(r.phase_error),
        num(r.leakage),
        num(r.fidelity),
        num(r.infidelity()),
        num(r.cost()),
    ]);
    v.extend(r.return_populations.iter().map(|&x| num(x)));
    v
}

fn run(cli: Cli) -> Result<()> {
    let mut ctx = Ctx::new(&cli.common)?;
    let out = cli.common.out.as_ref();
    let name = cli.command.name();
    match &cli.command {
        Command::Zz => {
            let r = zz_report(&ctx.device)?;
            let mut t = Table::new([
                "zeta_exact_khz",
                "abs_zeta_exact_khz",
                "zeta_pert4_khz",
                "j_eff_mhz",
                "delta1_ghz",
                "delta2_ghz",
                "delta12_ghz",
            ]);
            t.push(vec![
                num(r.zeta_exact),
                num(r.zeta_exact.abs()),
                num(r.zeta_pert4),
                num(r.j_eff),
                num(r.delta1),
                num(r.delta2),
                num(r.delta12),
            ]);
            ctx.finish(&t, name, out)?;
            eprintln!(
                "|zeta|/2pi = {:.4} kHz (zeta_exact/2pi = {:.4} kHz), zeta_pert4/2pi = {:.4} kHz",
                r.zeta_exact.abs(),
                r.zeta_exact,
                r.zeta_pert4
            );
        }
        Command::ZzSweep { omega1, omega2 } => {
            let q1 = ctx.device.q1.frequency.to_string();
            let g1 = pick_grid(omega1.as_deref(), ctx.config.grid.omega1_ghz.as_deref(), "omega1", Some(&q1))?;
            let g2 = pick_grid(omega2.as_deref(), ctx.config.grid.omega2_ghz.as_deref(), "omega2", None)?;
            let mut grid = toml::Table::new();
            grid.insert("omega1_ghz".into(), grid_value(&g1));
            grid.insert("omega2_ghz".into(), grid_value(&g2));
            ctx.note("grid", grid);
            let rows = zz_sweep(&ctx.device, &g1.points(), &g2.points())?;
            let mut t = Table::new(["omega1_ghz", "omega2_ghz", "zeta_exact_khz", "zeta_pert4_khz", "status"]);
            let mut crossings = 0;
            let mut prev: Option<(f64, f64)> = None;
            for r in &rows {
                t.push(vec![
                    num(r.omega1),
                    num(r.omega2),
                    opt(r.zeta_exact),
                    opt(r.zeta_pert4),
                    r.status.token(),
                ]);
                if let Some(z) = r.zeta_exact {
                    if let Some((w1, p)) = prev {
                        if w1 == r.omega1 && p * z < 0.0 {
                            crossings += 1;
                        }
                    }
                    prev = Some((r.omega1, z));
                }
            }
            ctx.finish(&t, name, out)?;
            let failed = rows.iter().filter(|r| !r.status.is_ok()).count();
            eprintln!(
                "{} cells, {failed} failed, {crossings} sign changes of zeta_exact along omega2",
                rows.len()
            );
        }
        Command::ChiSweep { g } => {
            let grid = pick_grid(g.as_deref(), ctx.config.grid.g_ghz.as_deref(), "g", None)?;
            let mut gt = toml::Table::new();
            gt.insert("g_ghz".into(), grid_value(&grid));
            ctx.note("grid", gt);
            let rows = chi_sweep(&ctx.device, &grid.points())?;
            let mut t = Table::new([
                "g_ghz",
                "omega_c00_ghz",
                "omega_c10_ghz",
                "omega_c01_ghz",
                "omega_c11_ghz",
                "chi10_mhz",
                "chi01_mhz",
                "chi11_mhz",
                "status",
            ]);
            for r in &rows {
                let rep = r.report.as_ref();
                let w = |m: usize, n: usize| opt(rep.map(|x| x.omega_c[m][n]));
                let c = |m: usize, n: usize| opt(rep.map(|x| x.chi[m][n]));
                t.push(vec![
                    num(r.g),
                    w(0, 0),
                    w(1, 0),
                    w(0, 1),
                    w(1, 1),
                    c(1, 0),
                    c(0, 1),
                    c(1, 1),
                    r.status.token(),
                ]);
            }
            ctx.finish(&t, name, out)?;
            let failed = rows.iter().filter(|r| !r.status.is_ok()).count();
            eprintln!("{} couplings, {failed} failed", rows.len());
        }
        Command::Dynamics { initial, bare } => {
            let pulse = ctx.pulse()?;
            let label_text = initial.clone().or(ctx.config.initial.clone()).unwrap_or_else(|| "101".into());
            let label: BasisLabel = label_text
                .parse()
                .map_err(|e| anyhow::anyhow!("invalid --initial '{label_text}': {e}"))?;
            let start = if *bare {
                InitialState::Bare(label)
            } else {
                InitialState::Dressed(label)
            };
            ctx.note_pulse(&pulse)?;
            ctx.note_evolution();
            ctx.note("initial", label.to_string());
            ctx.note("initial_kind", if *bare { "bare" } else { "dressed" });
            let traj = evolve_trajectory(&ctx.device, &pulse, &ctx.evolution, start)?;
            let shown: Vec<BasisLabel> = traj
                .populations
                .iter()
                .filter(|(l, p)| **l == label || p.iter().any(|&x| x >= 1e-3))
                .map(|(l, _)| *l)
                .collect();
            let mut cols = vec!["t_ns".to_string(), "leakage".to_string()];
            cols.extend(shown.iter().map(|l| format!("p{l}")));
            let mut t = Table::new(cols);
            for (k, &time) in traj.times.iter().enumerate() {
                let mut row = vec![num(time), num(traj.leakage_trace[k])];
                row.extend(shown.iter().map(|l| num(traj.populations[l][k])));
                t.push(row);
            }
            ctx.finish(&t, name, out)?;
            let fin = traj.final_population(label).unwrap_or(f64::NAN);
            let transient = traj
                .dominant_transient(&[label])
                .map(|(l, p)| format!("|{l}> peaks at {p:.4}"))
                .unwrap_or_else(|| "none".into());
            eprintln!(
                "|{label}> final population {fin:.6}, final leakage {:.3e}, dominant transient {transient}",
                traj.leakage_trace.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::GateReport => {
            let pulse = ctx.pulse()?;
            ctx.note_pulse(&pulse)?;
            ctx.note_evolution();
            let r = simulate_gate(&ctx.device, &pulse, &ctx.evolution)?;
            let mut t = Table::new(report_columns());
            t.push(report_cells(&r));
            ctx.finish(&t, name, out)?;
            eprintln!("gate time      {} ns", pulse.t_f);
            eprintln!("detuning       {} MHz", pulse.detuning * 1e3);
            eprintln!("fidelity       {:.6}", r.fidelity);
            eprintln!("leakage L1     {:.3e}", r.leakage);
            eprintln!("cond. phase    {:.5} rad (|dtheta| - pi = {:+.5})", r.cond_phase, r.phase_error);
            eprintln!(
                "returns        000 {:.5}  100 {:.5}  001 {:.5}  101 {:.5}",
                r.return_populations[0], r.return_populations[1], r.return_populations[2], r.return_populations[3]
            );
        }
        Command::Optimize { max_evals, cost_tol } => {
            let base = ctx.pulse_spec.map(|p| p.to_params()).transpose()?;
            let t_f = match (&cli.common.tg, base) {
                (Some(s), _) => single(s, "tg")?,
                (None, Some(p)) => p.t_f,
                (None, None) => single_from(ctx.config.grid.tg_ns.as_deref(), "tg")?,
            };
            let detuning = match (&cli.common.detuning, base) {
                (Some(s), _) => single(s, "detuning")?,
                (None, Some(p)) => p.detuning,
                (None, None) => single_from(ctx.config.grid.detuning_ghz.as_deref(), "detuning")?,
            };
            let mut settings = ctx.config.optimize();
            if let Some(p) = base {
                if settings.initial.is_none() {
                    settings.initial = Some((p.amp0, p.lambda1, p.lambda2));
                }
            }
            if let Some(v) = max_evals {
                settings.max_evals = *v;
            }
            if let Some(v) = cost_tol {
                settings.cost_tol = *v;
            }
            ctx.note_evolution();
            ctx.note("t_f_ns", t_f);
            ctx.note("detuning_ghz", detuning);
            ctx.note("optimize", optimize_table(&settings, t_f));
            let o = optimize_pulse(&ctx.device, t_f, detuning, &settings, &ctx.evolution)?;
            let mut cols = vec!["t_f_ns", "detuning_ghz", "amp0_ghz", "lambda1", "lambda2"];
            cols.extend(report_columns());
            cols.extend(["evaluations", "converged"]);
            let mut t = Table::new(cols);
            let mut row = vec![
                num(t_f),
                num(detuning),
                num(o.pulse.amp0),
                num(o.pulse.lambda1),
                num(o.pulse.lambda2),
            ];
            row.extend(report_cells(&o.report));
            row.extend([o.evaluations.to_string(), o.converged.to_string()]);
            t.push(row);
            ctx.finish(&t, name, out)?;
            eprintln!(
                "cost {:.3e} after {} evaluations ({}), F = {:.6}, amp0 = {:.4} MHz, lambda1 = {:.4}, lambda2 = {:.4}",
                o.cost,
                o.evaluations,
                if o.converged { "converged" } else { "not converged" },
                o.report.fidelity,
                o.pulse.amp0 * 1e3,
                o.pulse.lambda1,
                o.pulse.lambda2
            );
        }
        Command::Sweep1d | Command::Sweep2d => {
            let mode = ctx.mode(cli.common.mode)?;
            let base = ctx.pulse_spec.map(|p| p.to_params()).transpose()?;
            let tg_default = base.map(|p| p.t_f.to_string());
            let tg = pick_grid(
                cli.common.tg.as_deref(),
                ctx.config.grid.tg_ns.as_deref(),
                "tg",
                tg_default.as_deref(),
            )?;
            if matches!(cli.command, Command::Sweep1d) && tg.count != 1 {
                bail!("sweep1d takes a single gate time; use sweep2d for a grid");
            }
            let det = pick_grid(
                cli.common.detuning.as_deref(),
                ctx.config.grid.detuning_ghz.as_deref(),
                "detuning",
                None,
            )?;
            let sweep_mode = match mode {
                Mode::Fixed => match base {
                    Some(p) => SweepMode::FixedPulse(p),
                    None => bail!("fixed mode needs a pulse (--pulse or [pulse] in the config)"),
                },
                Mode::Optimize => {
                    let mut s = ctx.config.optimize();
                    if let (None, Some(p)) = (s.initial, base) {
                        s.initial = Some((p.amp0, p.lambda1, p.lambda2));
                    }
                    SweepMode::Optimize(s)
                }
            };
            ctx.note_evolution();
            ctx.note("mode", if mode == Mode::Fixed { "fixed" } else { "optimize" });
            match &sweep_mode {
                SweepMode::FixedPulse(p) => ctx.note_pulse(p)?,
                SweepMode::Optimize(s) => ctx.note("optimize", optimize_table(s, tg.start)),
            }
            let mut grid = toml::Table::new();
            grid.insert("tg_ns".into(), grid_value(&tg));
            grid.insert("detuning_ghz".into(), grid_value(&det));
            ctx.note("grid", grid);
            let rows = sweep_2d(&ctx.device, &tg.points(), &det.points(), &sweep_mode, &ctx.evolution)?;
            let t = sweep_table(&rows);
            ctx.finish(&t, name, out)?;
            let failed = rows.iter().filter(|r| !r.status.is_ok()).count();
            let best = rows
                .iter()
                .filter_map(|r| r.infidelity().map(|i| (i, r.t_g, r.detuning)))
                .fold(None, |b: Option<(f64, f64, f64)>, x| match b {
                    Some(y) if y.0 <= x.0 => Some(y),
                    _ => Some(x),
                });
            match best {
                Some((i, tg, d)) => eprintln!(
                    "{} cells, {failed} failed, best 1-F = {i:.3e} at t_g = {tg} ns, detuning = {} MHz",
                    rows.len(),
                    d * 1e3
                ),
                None => eprintln!("{} cells, all failed", rows.len()),
            }
        }
    }
    Ok(())
}

fn single(text: &str, name: &str) -> Result<f64> {
    let g: Grid = text.parse().with_context(|| format!("invalid --{name}"))?;
    if g.count != 1 {
        bail!("--{name} must be a single value for this command");
    }
    Ok(g.start)
}

fn single_from(text: Option<&str>, name: &str) -> Result<f64> {
    match text {
        Some(t) => single(t, name),
        None => bail!("missing --{name} (or a pulse to take it from)"),
    }
}

fn optimize_table(s: &OptimizeSettings, t_f: f64) -> toml::Table {
    let (a, l1, l2) = s.seed(t_f);
    let mut t = toml::Table::new();
    t.insert("initial".into(), toml::Value::Array(vec![a.into(), l1.into(), l2.into()]));
    t.insert("max_evals".into(), (s.max_evals as i64).into());
    t.insert("cost_tol".into(), s.cost_tol.into());
    t.insert("simplex_scale".into(), s.simplex_scale.into());
    t
}

fn sweep_table(rows: &[SweepRow]) -> Table {
    let mut t = Table::new([
        "t_g_ns",
        "detuning_ghz",
        "leakage",
        "phase_error_rad",
        "infidelity",
        "amp0_ghz",
        "lambda1",
        "lambda2",
        "status",
    ]);
    for r in rows {
        let p = r.pulse.as_ref();
        t.push(vec![
            num(r.t_g),
            num(r.detuning),
            opt(r.leakage()),
            opt(r.phase_error()),
            opt(r.infidelity()),
            opt(p.map(|p| p.amp0)),
            opt(p.map(|p| p.lambda1)),
            opt(p.map(|p| p.lambda2)),
            r.status.token(),
        ]);
    }
    t
}

fn main() {
    let cli = Cli::parse();
    let result = configure_workers().and_then(|_| run(cli));
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
