use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context as _, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use flowkernel::deconv::{self, Aggregation, PooledConfig, Regularizer, SignalColumn};
use flowkernel::econometrics::{self, HurstMethod, Split};
use flowkernel::epr::{self, EprConfig, SymbolScheme};
use flowkernel::hawkes::{self, BootstrapConfig, BootstrapScheme, FitOptions, SimulationOptions};
use flowkernel::memory;
use flowkernel::panel::{self, Investor, Scheme};
use flowkernel::pipeline::{self, io as fio, Context, DataParams, InputSpec, RunConfig, RECIPES};
use flowkernel::synth::{self, SynthConfig};

const SEED_ENV: &str = "FLOWKERNEL_SEED";

#[derive(Parser)]
#[command(name = "flowkernel", version, about = "Order-flow impact kernels, surge dynamics and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic panel and its ground-truth sidecar.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Filter a panel and write the normalised signal for one investor.
    Prepare {
        #[command(flatten)]
        panel: PanelArgs,
        #[arg(long, default_value = "institutional")]
        investor: Investor,
        #[arg(long, default_value = "mc")]
        scheme: Scheme,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate an impact kernel from a panel.
    Deconv(DeconvArgs),
    /// Surge events: extract, fit, simulate, bootstrap, sweep, regime.
    #[command(subcommand)]
    Hawkes(HawkesCmd),
    /// Entropy production of the joint flow/return chain.
    Epr {
        #[command(flatten)]
        panel: PanelArgs,
        #[arg(long = "flow-col", default_value = "individual")]
        flow_col: Investor,
        #[arg(long, default_value = "mc")]
        scheme: Scheme,
        #[arg(long, value_enum, default_value_t = Symbols::Ternary)]
        symbols: Symbols,
        #[arg(long, default_value_t = epr::DEFAULT_SHUFFLES)]
        shuffles: usize,
        #[arg(long, default_value_t = epr::DEFAULT_BOOT)]
        boot: usize,
        #[arg(long, default_value_t = epr::DEFAULT_BLOCK)]
        block: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Cluster and conditional-probability profile of surge events.
    Memory {
        #[arg(long)]
        events: PathBuf,
        /// Fitted decay rate; omitted means the median gap is used.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        span: usize,
        /// Horizon of the conditional profile, in days.
        #[arg(long, default_value_t = memory::DEFAULT_HORIZON)]
        k: usize,
        #[arg(long, default_value_t = memory::DEFAULT_LIFT)]
        lift: f64,
    },
    /// Long-memory and unit-root tests on one column.
    Diagnose {
        #[arg(value_enum)]
        test: DiagTest,
        #[command(flatten)]
        table: TableArgs,
        #[arg(long)]
        column: String,
        #[arg(long, default_value_t = 10)]
        min_window: usize,
        /// ADF lag count or KPSS bandwidth; automatic when omitted.
        #[arg(long)]
        lags: Option<usize>,
    },
    /// Local-projection impulse responses.
    Lp {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long)]
        y: String,
        #[arg(long)]
        x: String,
        #[arg(long, value_delimiter = ',')]
        controls: Vec<String>,
        #[arg(long, default_value_t = 60)]
        horizons: usize,
    },
    /// Granger causality F tests up to a maximum lag.
    Granger {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long)]
        cause: String,
        #[arg(long)]
        effect: String,
        #[arg(long, default_value_t = 10)]
        max_lag: usize,
    },
    /// Rolling lag-1 autocorrelation, variance and composite score as CSV.
    Warn {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long)]
        column: String,
        #[arg(long, default_value_t = econometrics::DEFAULT_WINDOW)]
        window: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ROC of a score column against a 0/1 label column.
    Roc {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long)]
        score: String,
        #[arg(long)]
        label: String,
        #[arg(long, default_value_t = 0)]
        lead: usize,
    },
    /// Walk-forward kernel validation.
    Tscv {
        #[command(flatten)]
        panel: PanelArgs,
        #[arg(long, default_value = "institutional")]
        investor: Investor,
        #[arg(long, default_value = "mc")]
        scheme: Scheme,
        /// Comma-separated `train_start-train_end:test_end` date triples.
        #[arg(long, value_delimiter = ',', required = true)]
        splits: Vec<String>,
        #[arg(long, default_value_t = deconv::DEFAULT_LAMBDA)]
        lambda: f64,
        #[arg(long, default_value_t = deconv::DEFAULT_LAGS)]
        lags: usize,
    },
    /// Plot-ready CSV from a report.
    Figure {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        figure: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recipe names land here.
    #[command(external_subcommand)]
    Recipe(Vec<String>),
}

#[derive(Args)]
struct PanelArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1000.0)]
    price_floor: f64,
    #[arg(long, default_value_t = 0.005)]
    winsor_tail: f64,
    #[arg(long, default_value_t = 20)]
    vol_window: usize,
    #[arg(long, default_value_t = 10)]
    vol_min_obs: usize,
}

#[derive(Args)]
struct TableArgs {
    /// CSV with a header row of numeric columns.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct DeconvArgs {
    #[command(flatten)]
    panel: PanelArgs,
    #[arg(long, default_value = "institutional")]
    investor: Investor,
    #[arg(long, default_value = "mc")]
    scheme: Scheme,
    #[arg(long, value_enum, default_value_t = Method::Tikhonov)]
    method: Method,
    #[arg(long, default_value_t = deconv::DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = 0.05)]
    l1: f64,
    #[arg(long, default_value_t = 2.5)]
    l2: f64,
    #[arg(long, default_value_t = deconv::DEFAULT_LAGS)]
    lags: usize,
    /// Subsampled pooled estimate instead of the per-stock mean.
    #[arg(long)]
    pooled: bool,
    #[arg(long, default_value_t = 100)]
    n_stocks: usize,
    #[arg(long, default_value_t = 5)]
    n_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip per-stock time-series standardisation.
    #[arg(long)]
    raw: bool,
    /// Also write lag, coefficient, cumulative as CSV.
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum HawkesCmd {
    /// Threshold a panel aggregate into surge events.
    Extract {
        #[command(flatten)]
        panel: PanelArgs,
        #[arg(long, default_value = "individual")]
        investor: Investor,
        #[arg(long, default_value = "mc")]
        scheme: Scheme,
        #[arg(long, default_value_t = hawkes::DEFAULT_THRESHOLD_SIGMA)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Maximum-likelihood fit of an events file.
    Fit {
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Ogata simulation to an events file.
    Simulate {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        days: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = hawkes::DEFAULT_EVENT_CAP)]
        cap: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Branching-ratio bootstrap interval.
    Bootstrap {
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long, default_value_t = 1000)]
        n_boot: usize,
        #[arg(long, value_enum, default_value_t = Boot::Parametric)]
        scheme: Boot,
        #[arg(long, default_value_t = 20)]
        block: usize,
    },
    /// Fits across extraction thresholds.
    Sweep {
        #[command(flatten)]
        panel: PanelArgs,
        #[arg(long, default_value = "individual")]
        investor: Investor,
        #[arg(long, default_value = "mc")]
        scheme: Scheme,
        #[arg(long, value_delimiter = ',', default_values_t = hawkes::DEFAULT_SWEEP.to_vec())]
        thresholds: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Daily intensity and regime labels as CSV.
    Regime {
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long, default_value_t = 90.0)]
        percentile: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    events: PathBuf,
    /// Observation window length; defaults to the last event time rounded up.
    #[arg(long)]
    span: Option<f64>,
    #[arg(long)]
    unconstrained: bool,
    #[arg(long, default_value_t = hawkes::DEFAULT_N_MAX)]
    n_max: f64,
    #[arg(long, default_value_t = hawkes::DEFAULT_RESTARTS)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl FitArgs {
    fn options(&self) -> FitOptions {
        FitOptions { constrained: !self.unconstrained, n_max: self.n_max, restarts: self.restarts, seed: self.seed, ..FitOptions::default() }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Tikhonov,
    Ridge,
    Lasso,
    Enet,
}

#[derive(Clone, Copy, ValueEnum)]
enum Boot {
    Parametric,
    Gaps,
    BlockGaps,
}

#[derive(Clone, Copy, ValueEnum)]
enum Symbols {
    Binary,
    Ternary,
    Quintile,
}

#[derive(Clone, Copy, ValueEnum)]
enum DiagTest {
    Hurst,
    Adf,
    Kpss,
}

#[derive(Parser)]
#[command(name = "flowkernel <recipe>", no_binary_name = true)]
struct RecipeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Run recipes concurrently.
    #[arg(long)]
    parallel: bool,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    // Some recipe names are also tools; a --config flag selects the recipe.
    let recipe_mode = args.len() > 1
        && (RECIPES.contains(&args[1].as_str()) || args[1] == "all")
        && (Cli::command().find_subcommand(&args[1]).is_none() || args.iter().any(|a| a == "--config" || a.starts_with("--config=")));
    let res = if recipe_mode {
        run_recipe_cmd(&args[1], &args[2..])
    } else {
        let cli = Cli::parse_from(&args);
        match cli.command {
            Command::Recipe(v) => {
                if !RECIPES.contains(&v[0].as_str()) && v[0] != "all" {
                    eprintln!("error: unknown recipe or command `{}`", v[0]);
                    eprintln!("recipes: all, {}", RECIPES.join(", "));
                    eprintln!("tools: synth, prepare, deconv, hawkes, epr, memory, diagnose, lp, granger, warn, roc, tscv, figure");
                    return ExitCode::from(2);
                }
                run_recipe_cmd(&v[0], &v[1..])
            }
            cmd => run_tool(cmd).map(|_| true),
        }
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run_recipe_cmd(name: &str, rest: &[String]) -> Result<bool> {
    let a = RecipeArgs::try_parse_from(rest).unwrap_or_else(|e| e.exit());
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let mut cfg = RunConfig::from_json(&text)?;
    if let Ok(s) = std::env::var(SEED_ENV) {
        cfg.seed = s.trim().parse().with_context(|| format!("{SEED_ENV}={s} is not an unsigned integer"))?;
    }
    let base = a.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = a.out.clone().unwrap_or_else(|| if cfg.output_dir.is_absolute() { cfg.output_dir.clone() } else { base.join(&cfg.output_dir) });
    let names = pipeline::resolve_recipes(&[name.to_string()])?;
    let data = pipeline::prepare(&cfg, &base)?;
    let report = pipeline::run_recipes(&cfg, &data, &names, a.parallel);
    pipeline::write_outputs(&report, &data, &out)?;
    for (n, o) in &report.recipes {
        match &o.error {
            None => eprintln!("{n}: ok"),
            Some(e) => eprintln!("{n}: FAILED: {e}"),
        }
    }
    eprintln!("report written to {}", out.join("report.json").display());
    Ok(report.all_ok())
}

fn print_json(v: &Value) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn panel_context(p: &PanelArgs) -> Result<(RunConfig, pipeline::Prepared)> {
    let mut cfg = RunConfig::synthetic(SynthConfig::default());
    cfg.input = InputSpec::Panel { path: p.input.clone(), schema: None };
    cfg.data = DataParams { price_floor: p.price_floor, winsor_tail: p.winsor_tail, vol_window: p.vol_window, vol_min_obs: p.vol_min_obs };
    cfg.validate()?;
    let data = pipeline::prepare(&cfg, Path::new("."))?;
    Ok((cfg, data))
}

fn read_table(t: &TableArgs) -> Result<BTreeMap<String, Vec<f64>>> {
    let f = File::open(&t.input).with_context(|| format!("opening {}", t.input.display()))?;
    Ok(fio::read_table(f)?)
}

fn read_events(path: &Path, span: Option<f64>) -> Result<hawkes::EventSeries> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(fio::read_events(f, span)?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn parse_split(s: &str) -> Result<Split> {
    let err = || anyhow!("split `{s}` is not `train_start-train_end:test_end`");
    let (train, test_end) = s.split_once(':').ok_or_else(err)?;
    let (a, b) = train.split_once('-').ok_or_else(err)?;
    let p = |x: &str| x.trim().parse::<i64>().map_err(|_| err());
    Ok(Split::forward(p(a)?, p(b)?, p(test_end)?))
}

fn run_tool(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth { config, out, truth } => {
            let sc: SynthConfig = match config {
                Some(p) => serde_json::from_str(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?,
                None => SynthConfig::default(),
            };
            let (panel, gt) = synth::generate(&sc)?;
            panel::write_panel(&panel, create(&out)?)?;
            if let Some(t) = truth {
                serde_json::to_writer_pretty(create(&t)?, &gt)?;
            }
            eprintln!("{} rows written to {}", panel.len(), out.display());
        }
        Command::Prepare { panel: p, investor, scheme, out } => {
            let (cfg, data) = panel_context(&p)?;
            let sig = pipeline::build_signal(&data.panel, investor, scheme, &cfg.data)?;
            panel::write_signal_csv(&sig, create(&out)?)?;
            print_json(&json!({ "data": data.summary, "signal_rows": sig.rows.len(), "excluded": sig.excluded, "warnings": sig.warnings }))?;
        }
        Command::Deconv(a) => deconv_tool(a)?,
        Command::Hawkes(h) => hawkes_tool(h)?,
        Command::Epr { panel: p, flow_col, scheme, symbols, shuffles, boot, block, seed } => {
            let (cfg, data) = panel_context(&p)?;
            let mut ctx = Context::new(&cfg, &data);
            let flow = ctx.aggregate(flow_col, scheme)?;
            let ret = ctx.market_return();
            let scheme = match symbols {
                Symbols::Binary => SymbolScheme::BinaryMedian,
                Symbols::Ternary => SymbolScheme::TernaryQuantile,
                Symbols::Quintile => SymbolScheme::Quintile,
            };
            let cfg = EprConfig { scheme, n_shuffles: shuffles, n_boot: boot, block, seed };
            print_json(&serde_json::to_value(epr::analyze(&flow, &ret, &cfg)?)?)?;
        }
        Command::Memory { events, beta, span, k, lift } => {
            let ev = read_events(&events, Some(span as f64))?;
            print_json(&serde_json::to_value(memory::memory_profile(&ev, beta, span, k, lift)?)?)?;
        }
        Command::Diagnose { test, table, column, min_window, lags } => {
            let t = read_table(&table)?;
            let xs = fio::column(&t, &column)?;
            let v = match test {
                DiagTest::Hurst => serde_json::to_value(econometrics::hurst_exponent(xs, min_window, 20, HurstMethod::AnisLloyd)?)?,
                DiagTest::Adf => serde_json::to_value(econometrics::adf_test(xs, lags)?)?,
                DiagTest::Kpss => serde_json::to_value(econometrics::kpss_test(xs, lags)?)?,
            };
            print_json(&v)?;
        }
        Command::Lp { table, y, x, controls, horizons } => {
            let t = read_table(&table)?;
            let ctl: Vec<(&str, &[f64])> = controls.iter().map(|c| Ok((c.as_str(), fio::column(&t, c)?))).collect::<Result<_>>()?;
            let hs: Vec<usize> = (0..horizons).collect();
            let r = econometrics::local_projections(fio::column(&t, &y)?, fio::column(&t, &x)?, &ctl, &hs)?;
            print_json(&serde_json::to_value(r)?)?;
        }
        Command::Granger { table, cause, effect, max_lag } => {
            let t = read_table(&table)?;
            print_json(&serde_json::to_value(econometrics::granger_test(fio::column(&t, &cause)?, fio::column(&t, &effect)?, max_lag)?)?)?;
        }
        Command::Warn { table, column, window, out } => {
            let t = read_table(&table)?;
            let ws = econometrics::early_warning(fio::column(&t, &column)?, window)?;
            let sink: Box<dyn Write> = match &out {
                Some(p) => Box::new(create(p)?),
                None => Box::new(io::stdout().lock()),
            };
            let mut w = BufWriter::new(sink);
            writeln!(w, "t,acf,variance,composite")?;
            let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            for i in 0..ws.composite.len() {
                writeln!(w, "{i},{},{},{}", f(ws.acf[i]), f(ws.variance[i]), f(ws.composite[i]))?;
            }
            w.flush()?;
        }
        Command::Roc { table, score, label, lead } => {
            let t = read_table(&table)?;
            let s: Vec<Option<f64>> = fio::column(&t, &score)?.iter().map(|x| x.is_finite().then_some(*x)).collect();
            let l: Vec<bool> = fio::column(&t, &label)?.iter().map(|x| *x > 0.5).collect();
            print_json(&serde_json::to_value(econometrics::roc_auc(&s, &l, lead)?)?)?;
        }
        Command::Tscv { panel: p, investor, scheme, splits, lambda, lags } => {
            let (cfg, data) = panel_context(&p)?;
            let splits: Vec<Split> = splits.iter().map(|s| parse_split(s)).collect::<Result<_>>()?;
            let sig = pipeline::build_signal(&data.panel, investor, scheme, &cfg.data)?;
            let settings = deconv::DeconvSettings { lags, regularizer: Regularizer::Tikhonov { lambda }, ..Default::default() };
            print_json(&serde_json::to_value(econometrics::ts_cross_validate(&sig, &splits, &settings)?)?)?;
        }
        Command::Figure { report, figure, out } => {
            let v: Value = serde_json::from_str(&fs::read_to_string(&report).with_context(|| format!("reading {}", report.display()))?)?;
            let csv = pipeline::emit_figure_data(&v, &figure)?;
            match out {
                Some(p) => create(&p)?.write_all(csv.as_bytes())?,
                None => io::stdout().lock().write_all(csv.as_bytes())?,
            }
        }
        Command::Recipe(_) => unreachable!("dispatched in main"),
    }
    Ok(())
}

fn deconv_tool(a: DeconvArgs) -> Result<()> {
    let (cfg, data) = panel_context(&a.panel)?;
    let sig = pipeline::build_signal(&data.panel, a.investor, a.scheme, &cfg.data)?;
    let regularizer = match a.method {
        Method::Tikhonov => Regularizer::Tikhonov { lambda: a.lambda },
        Method::Ridge => Regularizer::Ridge { lambda: a.lambda },
        Method::Lasso => Regularizer::Lasso { lambda: a.lambda },
        Method::Enet => Regularizer::ElasticNet { l1: a.l1, l2: a.l2 },
    };
    let settings = deconv::DeconvSettings { lags: a.lags, regularizer, pre_standardize: !a.raw, signal: SignalColumn::Raw, ..Default::default() };
    let (kernel, extra) = if a.pooled {
        let pk = deconv::pooled_kernel(&sig, &PooledConfig { n_stocks: a.n_stocks, n_iter: a.n_iter, seed: a.seed, settings })?;
        let extra = json!({ "iteration_totals": pk.iteration_totals, "stocks_per_iteration": pk.stocks_per_iteration, "warnings": pk.warnings });
        (pk.kernel, extra)
    } else {
        let mut ck = deconv::conditional_kernel(&sig, |_, _| Some("all".to_string()), Aggregation::ByStockMean, &settings)?;
        let g = ck.groups.remove("all").ok_or_else(|| anyhow!("no stock has enough rows: {:?}", ck.skipped))?;
        (g.kernel, json!({ "n_stocks": g.n_stocks, "warnings": ck.warnings }))
    };
    if let Some(p) = &a.out_csv {
        let mut w = create(p)?;
        writeln!(w, "lag,coefficient,cumulative")?;
        for (i, (c, s)) in kernel.coefficients.iter().zip(kernel.cumulative()).enumerate() {
            writeln!(w, "{i},{c},{s}")?;
        }
        w.flush()?;
    }
    print_json(&json!({ "investor": a.investor, "scheme": a.scheme, "kernel": kernel, "details": extra }))
}

fn hawkes_tool(cmd: HawkesCmd) -> Result<()> {
    match cmd {
        HawkesCmd::Extract { panel: p, investor, scheme, threshold, out } => {
            let (cfg, data) = panel_context(&p)?;
            let agg = Context::new(&cfg, &data).aggregate(investor, scheme)?;
            let ex = hawkes::extract_events(&agg, threshold)?;
            fio::write_events(&ex.events, create(&out)?)?;
            print_json(&json!({ "n_events": ex.events.len(), "n_buy": ex.events.n_buy(), "n_sell": ex.events.n_sell(), "span": ex.events.span(), "mean": ex.mean, "std": ex.std, "warnings": ex.warnings }))?;
        }
        HawkesCmd::Fit { fit } => {
            let ev = read_events(&fit.events, fit.span)?;
            let f = hawkes::fit(&ev, &fit.options())?;
            let steady = hawkes::steady_state_intensity(f.mu, f.branching_ratio).ok();
            print_json(&json!({ "fit": f, "steady_state_intensity": steady }))?;
        }
        HawkesCmd::Simulate { mu, alpha, beta, days, seed, cap, out } => {
            let ev = hawkes::simulate(mu, alpha, beta, days, seed, &SimulationOptions { event_cap: cap, ..Default::default() })?;
            fio::write_events(&ev, create(&out)?)?;
            eprintln!("{} events written to {}", ev.len(), out.display());
        }
        HawkesCmd::Bootstrap { fit, n_boot, scheme, block } => {
            let ev = read_events(&fit.events, fit.span)?;
            let scheme = match scheme {
                Boot::Parametric => BootstrapScheme::Parametric,
                Boot::Gaps => BootstrapScheme::Gaps,
                Boot::BlockGaps => BootstrapScheme::BlockGaps { block },
            };
            let cfg = BootstrapConfig { n_boot, seed: fit.seed, fit: fit.options(), scheme, ..Default::default() };
            print_json(&serde_json::to_value(hawkes::bootstrap_branching(&ev, &cfg)?)?)?;
        }
        HawkesCmd::Sweep { panel: p, investor, scheme, thresholds, seed } => {
            let (cfg, data) = panel_context(&p)?;
            let agg = Context::new(&cfg, &data).aggregate(investor, scheme)?;
            let rows = hawkes::threshold_sweep(&agg, &thresholds, &FitOptions { seed, ..Default::default() })?;
            print_json(&serde_json::to_value(rows)?)?;
        }
        HawkesCmd::Regime { fit, percentile, out } => {
            let ev = read_events(&fit.events, fit.span)?;
            let f = hawkes::fit(&ev, &fit.options())?;
            let grid = hawkes::daily_grid(&ev);
            let lam = hawkes::intensity_series(&ev, &f, &grid)?;
            let r = hawkes::classify_regimes(grid, lam, percentile)?;
            let sink: Box<dyn Write> = match &out {
                Some(p) => Box::new(create(p)?),
                None => Box::new(io::stdout().lock()),
            };
            let mut w = BufWriter::new(sink);
            writeln!(w, "day,intensity,regime")?;
            for ((g, l), lab) in r.grid.iter().zip(&r.intensity).zip(&r.labels) {
                writeln!(w, "{g},{l},{lab}")?;
            }
            w.flush()?;
            if out.is_some() {
                print_json(&json!({ "fit": f, "threshold": r.threshold, "n_high": r.n_high(), "n_days": r.labels.len() }))?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_syntax() {
        let s = parse_split("0-99:149").unwrap();
        assert_eq!((s.train_start, s.train_end, s.test_start, s.test_end), (0, 99, 100, 149));
        assert!(parse_split("0:99").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        RecipeArgs::command().debug_assert();
    }
}
