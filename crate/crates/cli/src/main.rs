use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use alcir::baselines::{build_popularity, PopularityRanker};
use alcir::checkpoint::{load_checkpoint, save_checkpoint};
use alcir::config::{EvalModel, RunConfig};
use alcir::data::io::{
    load_catalog, read_category_map, read_raw_recommendations, read_split, write_catalog, write_category_map,
    write_raw_recommendations, write_split,
};
use alcir::data::{
    build_labeled_pairs, derive_complementary_categories, discretize_prices, filter_rare_categories,
    generate_synthetic, split_cold, Catalog, ComplementaryCategoryMap, DatasetSplit, DatasetStats, LabeledPair,
};
use alcir::evaluation::{evaluate, evaluate_by_label_bins, format_table, write_bins_csv, write_metrics_csv, Protocol};
use alcir::losses::AblationPreset;
use alcir::model::{Alcir, ModelConfig};
use alcir::retrieval::{recommend, recommend_multi, write_recommendations, AlcirRanker, CategoryIndex, CategoryRanker};
use alcir::training::fit;
use alcir::Error;
use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "alcir", version, about = "Complementary item recommendation for cold seed items")]
struct Cli {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Seed for splitting, synthetic data, initialization and training.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Print the merged configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,

    /// Override one config key, e.g. `--set train.learning_rate=0.1`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic catalog, features and labeled pairs to the input paths.
    Synth,
    /// Filter, bin, pair, split and write the prepared dataset.
    Prepare,
    /// Train a model on the prepared dataset and write a checkpoint.
    Train {
        #[arg(long)]
        preset: Option<AblationPreset>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score the test split and write metrics.
    Evaluate {
        #[arg(long)]
        model: Option<EvalModel>,
        #[arg(long)]
        protocol: Option<Protocol>,
        /// Also report metrics per label-count bin; the count defaults to the config.
        #[arg(long, value_name = "N", num_args = 0..=1)]
        bins: Option<Option<usize>>,
    },
    /// Print recommendations for one seed item as CSV.
    Recommend {
        seed_id: String,
        /// Target category name; without it, complementary categories are interleaved.
        #[arg(long)]
        category: Option<String>,
        #[arg(short, long, default_value_t = 10)]
        k: usize,
    },
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

const USAGE: u8 = 1;
const DATA: u8 = 2;
const NUMERIC: u8 = 3;

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::Constraint(_) | Error::UnknownCategory(_) | Error::UnknownItem(_) => USAGE,
            Error::Divergence(_) | Error::DegenerateVector(_) => NUMERIC,
            _ => DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: USAGE,
        message: message.into(),
    }
}

type Outcome<T> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Outcome<()> {
    let cfg = build_config(&cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    match &cli.command {
        None => Err(usage("no command given; see --help")),
        Some(Command::Synth) => cmd_synth(&cfg),
        Some(Command::Prepare) => cmd_prepare(&cfg),
        Some(Command::Train { .. }) => cmd_train(&cfg),
        Some(Command::Evaluate { bins, .. }) => cmd_evaluate(&cfg, bins.is_some()),
        Some(Command::Recommend { seed_id, category, k }) => cmd_recommend(&cfg, seed_id, category.as_deref(), *k),
    }
}

/// Defaults, then the config file, then `--set`, then command flags, then `--seed`.
fn build_config(cli: &Cli) -> Outcome<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for kv in &cli.overrides {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(key.trim(), value.trim())?;
    }
    match &cli.command {
        Some(Command::Train { preset, epochs }) => {
            if let Some(p) = preset {
                cfg.preset = *p;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
        }
        Some(Command::Evaluate { model, protocol, bins }) => {
            if let Some(m) = model {
                cfg.evaluate.model = *m;
            }
            if let Some(p) = protocol {
                cfg.evaluate.protocol = *p;
            }
            if let Some(Some(n)) = bins {
                cfg.evaluate.bins = *n;
            }
        }
        _ => {}
    }
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    Ok(cfg.resolved()?)
}

fn ensure_parent(path: &Path) -> Outcome<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::from(Error::Io {
            path: dir.to_path_buf(),
            source: e,
        }))?;
    }
    Ok(())
}

fn pair_rows(catalog: &Catalog, pairs: &[LabeledPair]) -> Vec<(String, String)> {
    pairs
        .iter()
        .map(|p| (catalog.item(p.seed).item_id.clone(), catalog.item(p.target).item_id.clone()))
        .collect()
}

fn cmd_synth(cfg: &RunConfig) -> Outcome<()> {
    let data = generate_synthetic(&cfg.synthetic)?;
    let paths = &cfg.paths;
    for p in [&paths.items, &paths.features, &paths.recommendations] {
        ensure_parent(p)?;
    }
    write_catalog(&data.catalog, &paths.items, &paths.features)?;
    write_raw_recommendations(&paths.recommendations, &pair_rows(&data.catalog, &data.labeled))?;
    write_raw_recommendations(&paths.ground_truth(), &pair_rows(&data.catalog, &data.ground_truth))?;
    println!(
        "{} items in {} categories, {} labeled pairs of {} ground-truth pairs",
        data.catalog.len(),
        data.catalog.n_categories(),
        data.labeled.len(),
        data.ground_truth.len()
    );
    Ok(())
}

fn cmd_prepare(cfg: &RunConfig) -> Outcome<()> {
    let paths = &cfg.paths;
    let raw = load_catalog(&paths.items, &paths.features)?;
    let catalog = filter_rare_categories(raw, cfg.prepare.min_items);
    let catalog = discretize_prices(catalog, cfg.prepare.price_bins);
    let rows = read_raw_recommendations(&paths.recommendations)?;
    let (pairs, stats) = build_labeled_pairs(&catalog, &rows);
    if stats.unresolved + stats.same_category + stats.duplicates > 0 {
        log::info!(
            "dropped {} unresolved, {} same-category and {} duplicate rows",
            stats.unresolved,
            stats.same_category,
            stats.duplicates
        );
    }
    let cc_map = derive_complementary_categories(&catalog, &pairs);
    let split = split_cold(&pairs, cfg.prepare.train_fraction, cfg.prepare.split_seed)?;

    ensure_parent(&paths.prepared_items())?;
    write_catalog(&catalog, &paths.prepared_items(), &paths.prepared_features())?;
    write_raw_recommendations(&paths.pairs(), &pair_rows(&catalog, &pairs))?;
    write_category_map(&paths.category_map(), &catalog, &cc_map)?;
    write_split(&paths.split(), &catalog, &split)?;

    for (label, value) in DatasetStats::compute(&catalog, &pairs).rows() {
        println!("{label:<26}{value:>12}");
    }
    Ok(())
}

struct Prepared {
    catalog: Catalog,
    split: DatasetSplit,
    cc_map: ComplementaryCategoryMap,
}

fn load_prepared(cfg: &RunConfig) -> Outcome<Prepared> {
    let paths = &cfg.paths;
    if !paths.prepared_items().exists() {
        return Err(Failure {
            code: DATA,
            message: format!(
                "no prepared dataset in {}; run `alcir prepare` first",
                paths.work_dir.display()
            ),
        });
    }
    let catalog = load_catalog(&paths.prepared_items(), &paths.prepared_features())?;
    let split = read_split(&paths.split(), &catalog)?;
    let cc_map = read_category_map(&paths.category_map(), &catalog)?;
    Ok(Prepared { catalog, split, cc_map })
}

fn load_model(cfg: &RunConfig) -> Outcome<Alcir<f64>> {
    let path = cfg.paths.checkpoint();
    if !path.exists() {
        return Err(Failure {
            code: DATA,
            message: format!("no checkpoint at {}; run `alcir train` first", path.display()),
        });
    }
    Ok(load_checkpoint(&path)?)
}

fn cmd_train(cfg: &RunConfig) -> Outcome<()> {
    let data = load_prepared(cfg)?;
    let train_cfg = cfg.train_config()?;
    let n_bins = cfg.prepare.price_bins.max(data.catalog.n_price_bins());
    let model_cfg = ModelConfig::from_sizes(
        &cfg.model,
        data.catalog.feature_width(),
        data.catalog.n_categories(),
        n_bins,
    )?;
    let model = Alcir::<f64>::new(model_cfg, train_cfg.rng_seed)?;
    let (model, log) = fit(model, &data.catalog, &data.split, &data.cc_map, &train_cfg)?;

    let ckpt = cfg.paths.checkpoint();
    save_checkpoint(&model, &ckpt)?;
    let log_path = cfg.paths.training_log();
    let file = fs::File::create(&log_path).map_err(|e| Failure::from(Error::Io {
        path: log_path.clone(),
        source: e,
    }))?;
    log.write_csv(file)?;

    match (log.best_epoch, log.epochs.iter().find(|e| Some(e.epoch) == log.best_epoch)) {
        (Some(best), Some(e)) => println!(
            "preset {}: {} epochs, best epoch {best} (val HR@10 {:.4}, NDCG {:.4}){}",
            cfg.preset.name(),
            log.epochs.len(),
            e.val_hr10.unwrap_or(0.0),
            e.val_ndcg.unwrap_or(0.0),
            if log.stopped_early { ", stopped early" } else { "" }
        ),
        _ => println!("preset {}: {} epochs", cfg.preset.name(), log.epochs.len()),
    }
    println!("checkpoint {}", ckpt.display());
    Ok(())
}

fn write_to(path: &Path, f: impl FnOnce(fs::File) -> alcir::Result<()>) -> Outcome<()> {
    let file = fs::File::create(path).map_err(|e| Failure::from(Error::Io {
        path: path.to_path_buf(),
        source: e,
    }))?;
    Ok(f(file)?)
}

fn cmd_evaluate(cfg: &RunConfig, with_bins: bool) -> Outcome<()> {
    let ev = &cfg.evaluate;
    if with_bins && ev.protocol != Protocol::CategoryAware {
        return Err(usage("label-bin reports use the category_aware protocol"));
    }
    let data = load_prepared(cfg)?;
    let popularity;
    let model;
    let index;
    let ranker: Box<dyn CategoryRanker + '_> = match ev.model {
        EvalModel::Popularity => {
            popularity = build_popularity(&data.split.train);
            Box::new(PopularityRanker::new(&data.catalog, &popularity))
        }
        EvalModel::Alcir => {
            model = load_model(cfg)?;
            index = CategoryIndex::<f64>::build(&data.catalog, &model)?;
            Box::new(AlcirRanker::new(&data.catalog, &model, &index))
        }
    };
    let model_name = match ev.model {
        EvalModel::Alcir => "alcir",
        EvalModel::Popularity => "popularity",
    };
    let report = evaluate(ranker.as_ref(), &data.catalog, &data.cc_map, &data.split.test, ev.protocol, &ev.ks)?;
    let label = format!("{model_name}/{}", ev.protocol.name());
    let rows = [(label, &report)];
    write_to(
        &cfg.paths.work(&format!("metrics_{model_name}_{}.csv", ev.protocol.name())),
        |f| write_metrics_csv(f, &rows),
    )?;
    print!("{}", format_table(&rows));

    if with_bins {
        let bins = evaluate_by_label_bins(ranker.as_ref(), &data.catalog, &data.cc_map, &data.split, ev.bins)?;
        write_to(&cfg.paths.work(&format!("bins_{model_name}.csv")), |f| write_bins_csv(f, &bins))?;
        let rows: Vec<(String, &_)> = bins
            .bins
            .iter()
            .enumerate()
            .map(|(i, b)| (format!("bin {i} ({}-{})", b.min_count, b.max_count), &b.metrics))
            .collect();
        print!("{}", format_table(&rows));
    }
    Ok(())
}

fn cmd_recommend(cfg: &RunConfig, seed_id: &str, category: Option<&str>, k: usize) -> Outcome<()> {
    if k == 0 {
        return Err(usage("k must be positive"));
    }
    let paths = &cfg.paths;
    let catalog = load_catalog(&paths.prepared_items(), &paths.prepared_features())?;
    let seed = catalog
        .index_of(seed_id)
        .ok_or_else(|| Failure::from(Error::UnknownItem(seed_id.to_string())))?;
    let model = load_model(cfg)?;
    let index = CategoryIndex::<f64>::build(&catalog, &model)?;
    let list = match category {
        Some(name) => {
            let c = catalog.category_index(name)?;
            recommend(&catalog, &model, &index, seed, c, k)?
        }
        None => {
            let cc_map = read_category_map(&paths.category_map(), &catalog)?;
            let ranker = AlcirRanker::new(&catalog, &model, &index);
            recommend_multi(&ranker, &catalog, &cc_map, seed, k)?
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    write_recommendations(&mut out, &catalog, &[list])?;
    let _ = out.flush();
    Ok(())
}
