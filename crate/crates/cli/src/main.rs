mod commands;
mod config;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Context, Report, RunError};
use config::Settings;
use output::{Format, Provenance};

#[derive(Parser)]
#[command(name = "dmdecoh", version, about = "Dark-matter decoherence rates and interferometer sensitivity")]
struct Cli {
    /// TOML file of settings; flags override it.
    #[arg(long, env = "DMDECOH_CONFIG", global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Flags {
    /// Catalog entry, e.g. OTIMA-6.
    #[arg(long, global = true)]
    experiment: Option<String>,
    /// Extra catalog TOML; its entries shadow built-ins of the same name.
    #[arg(long, global = true)]
    catalog: Option<String>,
    /// Extra materials TOML.
    #[arg(long, global = true)]
    materials: Option<String>,
    /// DM mass, e.g. "1 MeV".
    #[arg(long, global = true)]
    mass: Option<String>,
    /// Cross-section per nucleon, e.g. "1e-30 cm2".
    #[arg(long, global = true)]
    sigma: Option<String>,
    /// Mass grid lo:hi:n, e.g. "10 eV:100 MeV:60".
    #[arg(long, global = true)]
    masses: Option<String>,
    /// Coherent enhancement, on or off.
    #[arg(long, global = true)]
    enhancement: Option<String>,
    /// quadrature or mc.
    #[arg(long, global = true)]
    method: Option<String>,
    #[arg(long, global = true)]
    samples: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    rel_tol: Option<String>,
    #[arg(long, global = true)]
    zeta: Option<String>,
    #[arg(long, global = true)]
    chi_points: Option<String>,
    /// Reduced wavelength grid lo:hi:n, e.g. "1 A:1 um:30".
    #[arg(long, global = true)]
    lambda_bar: Option<String>,
    /// Comma-separated angles between q and Δx in radians.
    #[arg(long, global = true)]
    eta: Option<String>,
    /// Environment override, or for `shield` a comma-separated list.
    #[arg(long, global = true)]
    environment: Option<String>,
    #[arg(long, global = true)]
    shots: Option<String>,
    /// csv or json.
    #[arg(long, global = true)]
    format: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long, short, global = true)]
    output: Option<String>,
    #[arg(long, global = true)]
    threads: Option<String>,
    #[arg(long, global = true)]
    rho: Option<String>,
    #[arg(long, global = true)]
    v0: Option<String>,
    #[arg(long, global = true)]
    v_esc: Option<String>,
    /// Earth speed through the halo, along the Δx axis.
    #[arg(long, global = true)]
    v_earth: Option<String>,
}

impl Flags {
    fn pairs(self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("experiment", self.experiment),
            ("catalog", self.catalog),
            ("materials", self.materials),
            ("mass", self.mass),
            ("sigma", self.sigma),
            ("masses", self.masses),
            ("enhancement", self.enhancement),
            ("method", self.method),
            ("samples", self.samples),
            ("seed", self.seed),
            ("rel_tol", self.rel_tol),
            ("zeta", self.zeta),
            ("chi_points", self.chi_points),
            ("lambda_bar", self.lambda_bar),
            ("eta", self.eta),
            ("environment", self.environment),
            ("shots", self.shots),
            ("format", self.format),
            ("output", self.output),
            ("threads", self.threads),
            ("rho", self.rho),
            ("v0", self.v0),
            ("v_esc", self.v_esc),
            ("v_earth", self.v_earth),
        ]
    }
}

#[derive(Subcommand)]
enum Command {
    /// Decoherence rate F for one mass and cross-section.
    Rate,
    /// F_R and F_I against the angle between Δx and the wind.
    ChiScan,
    /// Coherent boost over a wavelength grid.
    Boost,
    /// Shielding columns and visibility limits.
    Shield,
    /// e-fold exclusion boundary over a mass grid.
    Exclusion,
    /// Cross-section window where the phase is measurable.
    PhaseRegion,
    /// Built-in and user experiments.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
}

#[derive(Subcommand)]
enum CatalogAction {
    List,
    Show { name: String },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Rate => "rate",
            Command::ChiScan => "chi-scan",
            Command::Boost => "boost",
            Command::Shield => "shield",
            Command::Exclusion => "exclusion",
            Command::PhaseRegion => "phase-region",
            Command::Catalog { action: CatalogAction::List } => "catalog list",
            Command::Catalog { action: CatalogAction::Show { .. } } => "catalog show",
        }
    }
}

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NONCONVERGENT: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err((code, msg)) => {
            eprintln!("dmdecoh: {msg}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, (u8, String)> {
    let config_err = |e: config::ConfigError| (EXIT_CONFIG, e.0);
    let settings = Settings::load(cli.config.as_deref(), &cli.flags.pairs()).map_err(config_err)?;

    let format = match settings.get("format") {
        None => Format::Csv,
        Some(r) => match r.text.trim() {
            "csv" => Format::Csv,
            "json" => Format::Json,
            other => return Err((EXIT_CONFIG, format!("{}: expected csv or json, got {other:?}", r.origin))),
        },
    };
    if let Some(n) = settings.count("threads").map_err(config_err)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .map_err(|e| (EXIT_CONFIG, format!("threads: {e}")))?;
    }

    let ctx = Context::new(&settings).map_err(run_err)?;
    let report = match &cli.command {
        Command::Rate => commands::rate(&ctx),
        Command::ChiScan => commands::chi_scan_cmd(&ctx),
        Command::Boost => commands::boost(&ctx),
        Command::Shield => commands::shield(&ctx),
        Command::Exclusion => commands::exclusion(&ctx),
        Command::PhaseRegion => commands::phase_region(&ctx),
        Command::Catalog { action: CatalogAction::List } => commands::catalog_list(&ctx),
        Command::Catalog { action: CatalogAction::Show { name } } => commands::catalog_show(&ctx, name),
    }
    .map_err(run_err)?;

    let name = cli.command.name();
    let mut prov: Provenance = vec![
        ("generator", format!("dmdecoh {} {name}", env!("CARGO_PKG_VERSION"))),
        ("config-sha256", output::config_hash(&format!("command={name}\n{}", settings.canonical()))),
        ("constants", dmdecoh::units::constants::VERSION.to_string()),
    ];
    if let Some(seed) = settings.get("seed") {
        prov.push(("seed", seed.text.trim().to_string()));
    }
    let Report { table, provenance, failure } = report;
    prov.extend(provenance);
    if let Some(msg) = &failure {
        prov.push(("status", format!("partial: {msg}")));
    }
    let bytes = output::render(&table, &prov, format);

    let target = settings.get("output").map(|r| PathBuf::from(r.text.trim()));
    match (&target, &failure) {
        (Some(path), None) => output::write_atomic(path, &bytes),
        (Some(path), Some(_)) => output::write_atomic(&output::partial_path(path), &bytes),
        (None, _) => std::io::stdout().lock().write_all(&bytes),
    }
    .map_err(|e| (EXIT_IO, format!("writing output: {e}")))?;

    match failure {
        Some(msg) => {
            eprintln!("dmdecoh: {msg}");
            Ok(ExitCode::from(EXIT_NONCONVERGENT))
        }
        None => Ok(ExitCode::SUCCESS),
    }
}

fn run_err(e: RunError) -> (u8, String) {
    match e {
        RunError::Config(m) => (EXIT_CONFIG, m),
        RunError::Numerical(m) => (EXIT_NONCONVERGENT, m),
    }
}
