mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use reqgate_core::classifier::{evaluate, hyperparameter_search};
use reqgate_core::features::{split, FeatureMatrix, FeatureSchema};
use reqgate_core::gate::{run_campaign, CampaignSetup, GateModel, COST_TABLE_HEADER};
use reqgate_core::generator::{run_collection, ApiSchema, GeneratorConfig, RequestGenerator};
use reqgate_core::harness::{render_reports, model_comparison_csv, run_experiment, Approach, ResultStore};
use reqgate_core::registry::{RegistryService, ServiceConfig, Transport};
use reqgate_core::rules::{Catalog, Environment, VersionId};
use reqgate_core::workflow::{compare_models, prepare, project, train_model, Trained};
use reqgate_core::Forest;
use reqgate_http::{serve_forever, HttpTransport};

use crate::config::Config;

#[derive(Parser)]
#[command(name = "reqgate", version, about = "Filter generated API test requests with a learned success predictor")]
struct Cli {
    /// TOML config; built-in defaults when omitted.
    #[arg(long, global = true, env = "REQGATE_CONFIG")]
    config: Option<PathBuf>,
    /// Bearer token the registry accepts and the generator sends.
    #[arg(long, global = true, env = "REQGATE_TOKEN", hide_env_values = true, default_value = "reqgate-local")]
    token: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Target {
    #[arg(long)]
    version: Option<VersionId>,
    #[arg(long)]
    env: Option<Environment>,
    /// Base URL of a running server; in-process when absent.
    #[arg(long)]
    url: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the registry over HTTP.
    Serve {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        listen: Option<SocketAddr>,
    },
    /// Send generated requests and write the raw JSON-lines log.
    Collect {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Refine a raw log into an encoded dataset and its schema.
    Prepare {
        #[arg(long)]
        raw: Option<PathBuf>,
    },
    /// Train the forest, optionally after a random hyperparameter search.
    Train {
        /// Number of search trials.
        #[arg(long)]
        search: Option<usize>,
        /// Keep every feature.
        #[arg(long)]
        no_select: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare the saved forest with the baselines on the held-out split.
    EvalModel,
    /// One campaign, with or without the gate.
    Campaign {
        #[arg(long, default_value = "on")]
        filter: Approach,
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Skip replaying filtered requests; false negatives are then unknown.
        #[arg(long)]
        no_shadow: bool,
    },
    /// The factorial experiment from the config.
    Experiment {
        #[arg(long)]
        repetitions: Option<usize>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// 30 repetitions per cell.
        #[arg(long)]
        full_scale: bool,
    },
    /// Render cost, coverage, statistics and correlation CSVs from results.
    Report {
        #[arg(long)]
        results: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write every rule set and the delta log.
    Catalog {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn service_config(cfg: &Config, target: &Target, token: &str) -> ServiceConfig {
    ServiceConfig {
        version_id: target.version.unwrap_or(cfg.service.version),
        environment: target.env.unwrap_or(cfg.service.environment),
        auth_token: token.to_string(),
    }
}

fn transport(cfg: &Config, target: &Target, service: ServiceConfig, catalog: &Catalog) -> Box<dyn Transport> {
    match target.url.as_ref().or(cfg.service.url.as_ref()) {
        Some(url) => Box::new(HttpTransport::new(url)),
        None => Box::new(RegistryService::from_catalog(service, catalog)),
    }
}

fn load_schema(path: &Path) -> Result<FeatureSchema> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(FeatureSchema::from_json_str(&text)?)
}

fn load_dataset(cfg: &Config) -> Result<(FeatureMatrix<f64>, FeatureSchema)> {
    let schema = load_schema(&cfg.paths.schema)?;
    let file = File::open(&cfg.paths.dataset).with_context(|| format!("opening {}", cfg.paths.dataset.display()))?;
    Ok((FeatureMatrix::read_csv(&schema, file)?, schema))
}

fn load_model(cfg: &Config) -> Result<(Forest, FeatureSchema)> {
    let forest = Forest::load(&cfg.paths.model).with_context(|| format!("loading {}", cfg.paths.model.display()))?;
    Ok((forest, load_schema(&cfg.paths.model_schema)?))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    writeln!(io::stdout(), "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = Config::load(cli.config.as_deref())?;
    let token = cli.token.as_str();
    let catalog = Catalog::generate(cfg.service.catalog_seed);
    match cli.command {
        Command::Serve { target, listen } => {
            let addr = match listen {
                Some(a) => a,
                None => cfg.service.listen.parse().context("service.listen")?,
            };
            let svc = RegistryService::from_catalog(service_config(&cfg, &target, token), &catalog);
            log::info!("serving {} {}", svc.config().version_id, svc.config().environment);
            serve_forever(Arc::new(svc), addr)?;
        }
        Command::Collect {
            target,
            budget,
            seed,
            out,
        } => {
            let service = service_config(&cfg, &target, token);
            let (version, env) = (service.version_id, service.environment);
            let gen_cfg = GeneratorConfig {
                seed: seed.unwrap_or(cfg.generator.seed),
                budget: budget.unwrap_or(cfg.generator.budget),
                ..cfg.generator.clone()
            };
            let gen = RequestGenerator::new(ApiSchema::default(), gen_cfg, token)?;
            let out = out.unwrap_or(cfg.paths.raw_log.clone());
            ensure_parent(&out)?;
            let t = transport(&cfg, &target, service, &catalog);
            let tally = run_collection(&gen, t.as_ref(), version, env, &out)?;
            log::info!("wrote {}", out.display());
            print_json(&tally)?;
        }
        Command::Prepare { raw } => {
            let raw = raw.unwrap_or(cfg.paths.raw_log.clone());
            let bytes = fs::read(&raw).with_context(|| format!("reading {}", raw.display()))?;
            let (matrix, schema, skipped) = prepare::<f64>(&bytes)?;
            ensure_parent(&cfg.paths.dataset)?;
            ensure_parent(&cfg.paths.schema)?;
            matrix.write_csv(&schema, BufWriter::new(File::create(&cfg.paths.dataset)?))?;
            fs::write(&cfg.paths.schema, schema.to_json_string())?;
            println!(
                "{} rows, {} features, {} positives, {skipped} skipped lines",
                matrix.n_rows,
                matrix.n_cols,
                matrix.positives()
            );
        }
        Command::Train {
            search,
            no_select,
            seed,
        } => {
            let (matrix, schema) = load_dataset(&cfg)?;
            let mut settings = cfg.train;
            settings.select &= !no_select;
            if let Some(s) = seed {
                settings.seed = s;
            }
            if let Some(trials) = search {
                let (train, _) = split(&matrix, settings.split_ratio, settings.split_seed)?;
                let found = hyperparameter_search(&train, &cfg.search.space, trials, cfg.search.seed)?;
                log::info!("search best validation accuracy {:.4}", found.best_accuracy);
                settings.hyperparams = found.best;
            }
            let trained = train_model(&matrix, &schema, &settings)?;
            ensure_parent(&cfg.paths.model)?;
            ensure_parent(&cfg.paths.model_schema)?;
            trained.forest.save(&cfg.paths.model)?;
            fs::write(&cfg.paths.model_schema, trained.schema.to_json_string())?;
            if !trained.dropped.is_empty() {
                println!("dropped features: {}", trained.dropped.join(", "));
            }
            let e = evaluate(&trained.forest, &trained.test);
            print_json(&serde_json::json!({
                "hyperparams": settings.hyperparams,
                "test": {
                    "counts": e.counts,
                    "accuracy": e.accuracy,
                    "precision": e.precision,
                    "recall": e.recall,
                    "f1": e.f1,
                    "auc": e.auc(),
                },
            }))?;
        }
        Command::EvalModel => {
            let (matrix, schema) = load_dataset(&cfg)?;
            let (forest, model_schema) = load_model(&cfg)?;
            forest.check_schema(&model_schema.fingerprint())?;
            let (train, test) = split(&matrix, cfg.train.split_ratio, cfg.train.split_seed)?;
            let trained = Trained {
                train: project(&train, &schema, &model_schema)?,
                test: project(&test, &schema, &model_schema)?,
                forest,
                schema: model_schema,
                dropped: Vec::new(),
            };
            write!(io::stdout(), "{}", model_comparison_csv(&compare_models(&trained, &cfg.baselines)?))?;
        }
        Command::Campaign {
            filter,
            target,
            budget,
            seed,
            no_shadow,
        } => {
            let service = service_config(&cfg, &target, token);
            let (version, environment) = (service.version_id, service.environment);
            let gen_cfg = GeneratorConfig {
                seed: seed.unwrap_or(cfg.campaign.seed),
                budget: budget.unwrap_or(cfg.campaign.budget),
                ..cfg.generator.clone()
            };
            let generator = RequestGenerator::new(ApiSchema::default(), gen_cfg, token)?;
            let main = transport(&cfg, &target, service.clone(), &catalog);
            let filtered = filter == Approach::Filtered;
            let shadow = (filtered && cfg.campaign.shadow && !no_shadow)
                .then(|| RegistryService::from_catalog(service, &catalog));
            let model = if filtered { Some(load_model(&cfg)?) } else { None };
            let gate = match &model {
                Some((forest, schema)) => Some(GateModel::new(forest, schema, Some(&forest.schema_fingerprint))?),
                None => None,
            };
            let setup = CampaignSetup {
                generator: &generator,
                transport: main.as_ref(),
                shadow: shadow.as_ref().map(|s| s as &dyn Transport),
                version,
                environment,
            };
            ensure_parent(&cfg.paths.campaign_log)?;
            let mut log = BufWriter::new(File::create(&cfg.paths.campaign_log)?);
            let outcome = run_campaign(&setup, gate.as_ref(), Some(&mut log))?;
            log.flush()?;
            print_json(&outcome.stats)?;
            let mut w = io::stdout().lock();
            writeln!(w, "{}", COST_TABLE_HEADER.join(","))?;
            writeln!(w, "{}", outcome.stats.cost_row().join(","))?;
        }
        Command::Experiment {
            repetitions,
            budget,
            seed,
            full_scale,
        } => {
            let mut exp = cfg.experiment.clone();
            if full_scale {
                exp.repetitions = 30;
            }
            exp.repetitions = repetitions.unwrap_or(exp.repetitions);
            exp.budget = budget.unwrap_or(exp.budget);
            exp.master_seed = seed.unwrap_or(exp.master_seed);
            exp.validate()?;
            let model = if exp.approaches.contains(&Approach::Filtered) {
                Some(load_model(&cfg)?)
            } else {
                None
            };
            let gate = match &model {
                Some((forest, schema)) => Some(GateModel::new(forest, schema, Some(&forest.schema_fingerprint))?),
                None => None,
            };
            log::info!("{} runs", exp.run_count());
            let store = run_experiment(&exp, &catalog, gate.as_ref())?;
            ensure_parent(&cfg.paths.results)?;
            store.save(&cfg.paths.results)?;
            let failed = store.rows.iter().filter(|r| r.error.is_some()).count();
            println!("{} runs written to {}", store.rows.len(), cfg.paths.results.display());
            if failed > 0 {
                bail!("{failed} runs failed; see the error column");
            }
        }
        Command::Report { results, out } => {
            let results = results.unwrap_or(cfg.paths.results.clone());
            let out = out.unwrap_or(cfg.paths.reports.clone());
            let store = ResultStore::load(&results)?;
            let reports = render_reports(&store);
            reports.write_dir(&out)?;
            write!(io::stdout(), "{}", reports.cost_table)?;
        }
        Command::Catalog { out } => {
            let out = out.unwrap_or(cfg.paths.catalog.clone());
            catalog.write_dir(&out)?;
            let mut w = io::stdout().lock();
            writeln!(w, "version,environment,validation,aggregation")?;
            for set in catalog.sets() {
                let (v, a) = set.counts();
                writeln!(w, "{},{},{v},{a}", set.version, set.environment)?;
            }
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        // a closed stdout (e.g. piped into head) is not a failure
        if e
            .downcast_ref::<io::Error>()
            .is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
        {
            return;
        }
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
