//! `mixprop`: generate synthetic two-sample data, estimate mixture
//! proportions, run weakly-supervised kernel CI/MCI tests, and reproduce the
//! synthetic experiment tables.

use std::collections::HashMap;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use mixprop_core::error::Error;
use mixprop_core::harness::{run_experiment, ExperimentConfig, ExperimentId};
use mixprop_core::ktest::{run_test_known, StatConfig, TestKind};
use mixprop_core::mixture::{gen_gaussian, ClassPriors, FeatureRoles, GaussianSpec, TwoSampleData};
use mixprop_core::mpe::{
    estimate_class_priors, AlphaEstimate, CiConfig, MciConfig, MomentFunctions, SideEstimator,
};
use mixprop_core::plugin::{run_test_plugin, PluginConfig};

#[derive(Parser)]
#[command(name = "mixprop", version, about = "Mixture proportion estimation and weakly-supervised kernel CI tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic two-sample data to <STEM>.u.csv / <STEM>.uprime.csv
    Gen(GenArgs),
    /// Estimate the mixture proportions from two unlabeled CSV files
    Mpe(MpeArgs),
    /// Run a kernel CI/MCI test with known or plug-in mixture proportion
    Test(TestArgs),
    /// Reproduce a synthetic experiment table
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Ci,
    Mci,
}

#[derive(Args)]
struct GenArgs {
    /// Generator model (only `gauss` is available)
    #[arg(long, default_value = "gauss")]
    model: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    nprime: usize,
    #[arg(long)]
    theta: f64,
    #[arg(long = "theta-prime")]
    theta_prime: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma12: f64,
    /// Add the shared X_S feature (MCI-style data)
    #[arg(long = "with-xs")]
    with_xs: bool,
    #[arg(long)]
    seed: u64,
    /// Output stem; two CSV files are written
    #[arg(long)]
    out: String,
}

#[derive(Args)]
struct MpeArgs {
    #[command(subcommand)]
    method: MpeMethod,
}

#[derive(Subcommand)]
enum MpeMethod {
    Ci(MpeCommon),
    Mci(MpeCommon),
}

#[derive(Args)]
struct MpeCommon {
    #[arg(long)]
    u: String,
    #[arg(long)]
    uprime: String,
    /// Column roles, e.g. `x1=0;x2=1;xs=2`
    #[arg(long)]
    roles: Option<String>,
    /// Search range LO,HI for alpha+ (or for alpha- in --pu mode)
    #[arg(long, allow_hyphen_values = true)]
    range: Option<String>,
    /// Search range LO,HI for alpha-
    #[arg(long = "range-minus", allow_hyphen_values = true)]
    range_minus: Option<String>,
    /// PU mode: alpha+ is fixed at 1 and only alpha- is estimated
    #[arg(long)]
    pu: bool,
    /// KRR ridge (MCI)
    #[arg(long)]
    lambda: Option<f64>,
    /// K_S bandwidth (MCI)
    #[arg(long = "sigma-s")]
    sigma_s: Option<f64>,
    /// Report file (stdout when omitted)
    #[arg(long)]
    report: Option<String>,
    /// key=value file mirroring the flags; flags win
    #[arg(long)]
    config: Option<String>,
}

#[derive(Args)]
struct TestArgs {
    #[command(subcommand)]
    method: TestMethod,
}

#[derive(Subcommand)]
enum TestMethod {
    Ci(TestCommon),
    Mci(TestCommon),
}

#[derive(Args)]
struct TestCommon {
    #[arg(long)]
    u: String,
    #[arg(long)]
    uprime: String,
    #[arg(long)]
    roles: Option<String>,
    /// Known mixture proportion (conflicts with --plugin)
    #[arg(long, conflicts_with = "plugin", allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Estimate the proportion and apply the corrected null moments
    #[arg(long)]
    plugin: bool,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    sigma1: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long = "sigma-s")]
    sigma_s: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    ktop: Option<usize>,
    /// Plug-in MPE search range LO,HI
    #[arg(long, allow_hyphen_values = true)]
    range: Option<String>,
    /// Plug-in MCI MPE ridge
    #[arg(long = "mpe-lambda")]
    mpe_lambda: Option<f64>,
    /// Plug-in MCI MPE bandwidth
    #[arg(long = "mpe-sigma")]
    mpe_sigma: Option<f64>,
    #[arg(long)]
    report: Option<String>,
    #[arg(long)]
    config: Option<String>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// table1|table3|table4|table5|bias8|bias9|power10
    id: String,
    /// Run at the published scale instead of the desk-scale defaults
    #[arg(long)]
    full: bool,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: String,
    /// Override the per-table default trial count
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    parallelism: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Gen(args) => run_gen(args),
        Command::Mpe(args) => match args.method {
            MpeMethod::Ci(c) => run_mpe(c, Method::Ci),
            MpeMethod::Mci(c) => run_mpe(c, Method::Mci),
        },
        Command::Test(args) => match args.method {
            TestMethod::Ci(c) => run_test(c, TestKind::Ci),
            TestMethod::Mci(c) => run_test(c, TestKind::Mci),
        },
        Command::Experiment(args) => run_experiment_cmd(args),
    }
}

fn run_gen(args: GenArgs) -> Result<(), Error> {
    if args.model != "gauss" {
        return Err(Error::Config(format!("unknown model {:?}", args.model)));
    }
    let data = gen_gaussian(&GaussianSpec {
        n: args.n,
        nprime: args.nprime,
        priors: ClassPriors::new(args.theta, args.theta_prime)?,
        sigma12: args.sigma12,
        with_xs: args.with_xs,
        seed: args.seed,
    })?;
    data.save(&args.out)?;
    eprintln!(
        "wrote {}.u.csv ({} rows) and {}.uprime.csv ({} rows)",
        args.out,
        data.n(),
        args.out,
        data.nprime()
    );
    Ok(())
}

/// key=value config file; flags win over file entries.
fn load_config_file(path: &Option<String>) -> Result<HashMap<String, String>, Error> {
    let mut map = HashMap::new();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p)?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{p}:{}: expected key=value", i + 1))
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    Ok(map)
}

fn resolve<T: std::str::FromStr>(
    flag: Option<T>,
    file: &HashMap<String, String>,
    key: &str,
) -> Result<Option<T>, Error> {
    if flag.is_some() {
        return Ok(flag);
    }
    match file.get(key) {
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|_| Error::Config(format!("bad value for {key}: {raw:?}"))),
        None => Ok(None),
    }
}

fn parse_range(spec: &str) -> Result<(f64, f64), Error> {
    let (lo, hi) = spec
        .split_once(',')
        .ok_or_else(|| Error::Config(format!("range must be LO,HI, got {spec:?}")))?;
    let lo: f64 = lo
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad range bound {lo:?}")))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad range bound {hi:?}")))?;
    Ok((lo, hi))
}

fn default_roles(method: Method) -> &'static str {
    match method {
        Method::Ci => "x1=0;x2=1",
        Method::Mci => "x1=0;x2=1;xs=2",
    }
}

fn estimate_json(e: &AlphaEstimate) -> serde_json::Value {
    json!({
        "alpha_hat": e.alpha_hat,
        "search_range": [e.search_range.0, e.search_range.1],
        "objective_at_hat": e.objective_at_hat,
        "roots_found": e.roots_found,
        "asymp_variance": e.asymp_variance,
        "flags": e.flags,
        "grid_profile": e.grid_profile.as_ref().map(|p| {
            p.iter().map(|(a, v)| json!([a, v])).collect::<Vec<_>>()
        }),
    })
}

fn emit_report(report: &str, path: &Option<String>) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, report)?,
        None => println!("{report}"),
    }
    Ok(())
}

fn run_mpe(args: MpeCommon, method: Method) -> Result<(), Error> {
    let file = load_config_file(&args.config)?;
    let data = TwoSampleData::load(&args.u, &args.uprime)?;
    let roles_spec = resolve(args.roles, &file, "roles")?
        .unwrap_or_else(|| default_roles(method).to_string());
    let roles = FeatureRoles::parse(&roles_spec)?;
    roles.validate_against(data.dim())?;
    let pu = args.pu || file.get("pu").map(|v| v == "true" || v == "1").unwrap_or(false);
    let range = resolve(args.range, &file, "range")?
        .map(|s: String| parse_range(&s))
        .transpose()?;
    let range_minus = resolve(args.range_minus, &file, "range-minus")?
        .map(|s: String| parse_range(&s))
        .transpose()?;
    let lambda = resolve(args.lambda, &file, "lambda")?;
    let sigma_s = resolve(args.sigma_s, &file, "sigma-s")?;

    let default_minus = match method {
        Method::Ci => (-50.0, 0.0),
        Method::Mci => (-0.7, 0.0),
    };
    let default_plus = match method {
        Method::Ci => (1.0, 50.0),
        Method::Mci => (1.1, 1.5),
    };
    // In PU mode the single --range flag steers the alpha- search.
    let (plus_range, minus_range) = if pu {
        (None, range.or(range_minus).or(Some(default_minus)))
    } else {
        (
            Some(range.unwrap_or(default_plus)),
            Some(range_minus.unwrap_or(default_minus)),
        )
    };
    let side = |r: (f64, f64)| -> SideEstimator {
        match method {
            Method::Ci => SideEstimator::Ci(CiConfig::with_range(r.0, r.1)),
            Method::Mci => {
                let mut cfg = MciConfig::with_range(r.0, r.1);
                if let Some(l) = lambda {
                    cfg.lambda = l;
                }
                if let Some(s) = sigma_s {
                    cfg.sigma_s = s;
                }
                SideEstimator::Mci(cfg)
            }
        }
    };
    let plus = match plus_range {
        Some(r) => side(r),
        None => SideEstimator::Fixed(1.0),
    };
    let minus = side(minus_range.expect("resolved above"));
    let est = estimate_class_priors(
        &data,
        &roles,
        &roles,
        &MomentFunctions::identity(),
        &plus,
        &minus,
    )?;
    let report = serde_json::to_string_pretty(&json!({
        "method": match method { Method::Ci => "ci", Method::Mci => "mci" },
        "pu_mode": pu,
        "theta": est.theta,
        "theta_prime": est.theta_prime,
        "clamped": est.clamped,
        "alpha_plus": estimate_json(&est.alpha_plus),
        "alpha_minus": estimate_json(&est.alpha_minus),
    }))
    .expect("report json");
    emit_report(&report, &args.report)
}

fn run_test(args: TestCommon, kind: TestKind) -> Result<(), Error> {
    let file = load_config_file(&args.config)?;
    let data = TwoSampleData::load(&args.u, &args.uprime)?;
    let method = match kind {
        TestKind::Ci => Method::Ci,
        TestKind::Mci => Method::Mci,
    };
    let roles_spec = resolve(args.roles, &file, "roles")?
        .unwrap_or_else(|| default_roles(method).to_string());
    let roles = FeatureRoles::parse(&roles_spec)?;
    roles.validate_against(data.dim())?;
    let level = resolve(args.level, &file, "level")?.unwrap_or(0.05);
    let plugin =
        args.plugin || file.get("plugin").map(|v| v == "true" || v == "1").unwrap_or(false);
    let alpha = resolve(args.alpha, &file, "alpha")?;

    let mut stat = match (kind, plugin) {
        (TestKind::Ci, _) => StatConfig::ci_default(),
        (TestKind::Mci, false) => StatConfig::mci_known_default(),
        (TestKind::Mci, true) => StatConfig::mci_plugin_default(),
    };
    if let Some(v) = resolve(args.sigma1, &file, "sigma1")? {
        stat.sigma1 = v;
    }
    if let Some(v) = resolve(args.sigma2, &file, "sigma2")? {
        stat.sigma2 = v;
    }
    if let Some(v) = resolve(args.sigma_s, &file, "sigma-s")? {
        stat.sigma_s = v;
    }
    if let Some(v) = resolve(args.lambda, &file, "lambda")? {
        stat.lambda = v;
    }
    if let Some(v) = resolve(args.ktop, &file, "ktop")? {
        stat.k_top = v;
    }

    let report = if plugin {
        let mut cfg = match kind {
            TestKind::Ci => PluginConfig::ci_default(),
            TestKind::Mci => PluginConfig::mci_default(),
        };
        cfg.stat = stat;
        if let Some(r) = resolve(args.range, &file, "range")?
            .map(|s: String| parse_range(&s))
            .transpose()?
        {
            cfg.ci_mpe.range = r;
            cfg.mci_mpe.range = r;
        }
        if let Some(v) = resolve(args.mpe_lambda, &file, "mpe-lambda")? {
            cfg.mci_mpe.lambda = v;
        }
        if let Some(v) = resolve(args.mpe_sigma, &file, "mpe-sigma")? {
            cfg.mci_mpe.sigma_s = v;
        }
        run_test_plugin(&data, &roles, kind, level, &cfg)?
    } else {
        let alpha = alpha.ok_or_else(|| {
            Error::Config("known-proportion test requires --alpha (or use --plugin)".into())
        })?;
        run_test_known(&data, &roles, alpha, kind, level, &stat)?
    };
    emit_report(&report.to_json(), &args.report)
}

fn run_experiment_cmd(args: ExperimentArgs) -> Result<(), Error> {
    let id = ExperimentId::parse(&args.id)?;
    let mut cfg = ExperimentConfig::new(id, args.seed);
    cfg.full = args.full;
    cfg.trials = args.trials;
    if let Some(l) = args.level {
        cfg.level = l;
    }
    cfg.parallelism = args.parallelism;
    let table = run_experiment(&cfg)?;
    table.save(&args.out)?;
    eprintln!(
        "wrote {}/{}.csv and .json ({} rows, {} failures)",
        args.out,
        table.experiment,
        table.rows.len(),
        table.failures
    );
    for row in &table.rows {
        println!(
            "{}\t{}\t{:.4}\t(se {:.4}, trials {})",
            row.setting, row.metric, row.value, row.stderr, row.trials
        );
    }
    Ok(())
}
