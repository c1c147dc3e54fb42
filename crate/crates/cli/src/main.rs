use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use flatsurv::sim::{run_replications, SettingKind, SimSetting, TimeReading};
use flatsurv::{load_csv, run_test, validate, ClassKind, Dataset, NuisanceFit, TestConfig};

/// Test whether counterfactual survival at a fixed time is flat across a
/// continuous exposure.
#[derive(Debug, Parser)]
#[command(name = "flatsurv", version, about)]
struct Cli {
    /// Worker threads; 0 uses every core. Never changes output bytes.
    #[arg(long, global = true, env = "FLATSURV_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the flatness test on a CSV file.
    Test {
        #[arg(long)]
        input: PathBuf,
        /// Where to write the JSON result.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run replications of a simulation setting.
    Simulate {
        /// Data-generating setting: A (null), B (monotone) or C (non-monotone).
        #[arg(long, value_parser = parse_setting)]
        setting: SettingKind,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        /// Interpretation of the latent time scale: `scaled_rate` or `mean`.
        #[arg(long, value_parser = parse_reading, default_value = "scaled_rate")]
        time_reading: TimeReading,
        /// Where to write the JSON report.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Where to write per-replication rows.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write the plug-in survival curve over a 200-point exposure grid.
    Curve {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 25.0)]
        t: f64,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        density_floor: f64,
    },
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Evaluation time.
    #[arg(long, default_value_t = 25.0)]
    t: f64,
    /// Number of exposure thresholds.
    #[arg(long, default_value_t = 20)]
    kappa: usize,
    /// Total-variation bound for the box_tv class.
    #[arg(long, default_value_t = 4.0)]
    lambda: f64,
    /// indicator, box_tv, monotone_variance or box_only.
    #[arg(long, value_parser = parse_class, default_value = "indicator")]
    class: ClassKind,
    /// Monte Carlo null draws.
    #[arg(long, default_value_t = 1000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-3)]
    density_floor: f64,
}

impl ConfigArgs {
    fn to_config(&self) -> TestConfig {
        TestConfig {
            t: self.t,
            kappa: self.kappa,
            lambda: Some(self.lambda),
            class_kind: self.class,
            num_null_draws: self.draws,
            alpha: self.alpha,
            seed: self.seed,
            density_floor: self.density_floor,
        }
    }
}

fn parse_setting(s: &str) -> Result<SettingKind, String> {
    s.parse().map_err(|e: flatsurv::Error| e.to_string())
}

fn parse_reading(s: &str) -> Result<TimeReading, String> {
    s.parse().map_err(|e: flatsurv::Error| e.to_string())
}

fn parse_class(s: &str) -> Result<ClassKind, String> {
    s.parse().map_err(|e: flatsurv::Error| e.to_string())
}

const CURVE_POINTS: usize = 200;

fn load(path: &Path) -> flatsurv::Result<Dataset> {
    load_csv(path).map_err(|e| e.at("input"))
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn cmd_test(input: &Path, output: Option<&Path>, config: &TestConfig) -> anyhow::Result<()> {
    let ds = load(input)?;
    let result = run_test(&ds, config)?;
    let json = serde_json::to_string_pretty(&result)?;
    if let Some(path) = output {
        write_file(path, json.as_bytes())?;
    }
    println!("n = {}, class = {}, draws = {}", result.n, config.class_kind, result.num_draws);
    println!("statistic = {:.6}", result.statistic);
    println!("p-value   = {:.6}", result.p_value);
    println!(
        "decision  = {} at alpha = {}",
        if result.reject { "reject flatness" } else { "do not reject flatness" },
        result.alpha
    );
    for w in &result.diagnostics.warnings {
        log::warn!("{w}");
    }
    Ok(())
}

fn cmd_simulate(
    setting: SimSetting,
    reps: usize,
    config: &TestConfig,
    output: Option<&Path>,
    csv: Option<&Path>,
) -> anyhow::Result<()> {
    let report = run_replications(&setting, reps, config, config.seed)?;
    let json = report.to_json()?;
    let mut rows = Vec::new();
    report.write_csv(&mut rows)?;
    if let Some(path) = output {
        write_file(path, json.as_bytes())?;
    }
    if let Some(path) = csv {
        write_file(path, &rows)?;
    }
    println!(
        "setting {} n = {}: {}/{} replications rejected (rate {:.4}), {} failed",
        setting.kind,
        setting.n,
        report.rejections,
        report.completed,
        report.rejection_rate,
        report.failures.len()
    );
    Ok(())
}

fn cmd_curve(input: &Path, t: f64, output: &Path, density_floor: f64) -> anyhow::Result<()> {
    let ds = load(input)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(flatsurv::Error::Validation(vec![format!("evaluation time t = {t} must be non-negative")])
            .at("validation")
            .into());
    }
    // The data checks need a positive time; at t = 0 the curve is 1 anyway.
    let config = TestConfig { t: if t > 0.0 { t } else { f64::MIN_POSITIVE }, density_floor, ..TestConfig::default() };
    validate(&ds, &config).map_err(|e| e.at("validation"))?;
    let (fit, _) = NuisanceFit::fit(&ds, &config).map_err(|e| e.at("nuisance estimation"))?;
    let (lo, hi) = ds.exposure_range();
    let step = (hi - lo) / (CURVE_POINTS - 1) as f64;
    let levels: Vec<f64> = (0..CURVE_POINTS).map(|i| if i + 1 == CURVE_POINTS { hi } else { lo + i as f64 * step }).collect();
    let curve = flatsurv::estimator::theta_curve(&fit, &ds, t, &levels);
    let mut out = Vec::new();
    writeln!(out, "a,theta")?;
    for (a, theta) in levels.iter().zip(&curve.theta[ds.n()..]) {
        writeln!(out, "{a:?},{theta:?}")?;
    }
    write_file(output, &out)?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build()?;
    pool.install(|| match cli.command {
        Command::Test { input, output, config } => cmd_test(&input, output.as_deref(), &config.to_config()),
        Command::Simulate { setting, n, reps, time_reading, output, csv, config } => {
            let setting = SimSetting { reading: time_reading, ..SimSetting::new(setting, n) };
            cmd_simulate(setting, reps, &config.to_config(), output.as_deref(), csv.as_deref())
        }
        Command::Curve { input, t, output, density_floor } => cmd_curve(&input, t, &output, density_floor),
    })
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<flatsurv::Error>() {
        Some(e) if e.is_input_error() => 2,
        Some(flatsurv::Error::Stage { stage: "input", .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
