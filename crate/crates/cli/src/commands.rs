//! The six subcommands.
//!
//! Shared conventions: inputs load through [`config::rooted`] so
//! `HCF_DATA_DIR` can anchor relative paths, every artifact gets a
//! manifest, summaries go to stdout, and nothing nondeterministic (no
//! clocks, no host names) ever reaches an artifact. Retrieval channels
//! in `recommend`/`disseminate` follow the model's variant: a
//! positives-only model never sees heterogeneous candidates, so the
//! ablation stays an ablation end to end.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use hcf_core::eval::{evaluate_pair, EvalReport, Scenario};
use hcf_core::fm::{Direction, FmModel, Variant};
use hcf_core::pipelines::{recommend, run_dissemination, Provenance};
use hcf_core::store::{EngagementStore, Polarity};
use hcf_core::synth::{generate, GroundTruth, ResponseOracle};
use hcf_core::train::train;
use serde::Serialize;

use crate::cli::{
    Cli, Command, DatagenArgs, DisseminateArgs, EvaluateArgs, IngestArgs, LogFormat,
    RecommendArgs, TrainArgs,
};
use crate::config::{resolve, rooted, FileConfig};
use crate::manifest::Manifest;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Datagen(args) => datagen(args),
        Command::Ingest(args) => ingest(args),
        Command::Train(args) => cmd_train(args),
        Command::Recommend(args) => cmd_recommend(args),
        Command::Disseminate(args) => disseminate(args),
        Command::Evaluate(args) => evaluate(args),
    }
}

fn variant_name(variant: Variant) -> &'static str {
    match variant {
        Variant::Ccf => "ccf",
        Variant::Hcf => "hcf",
    }
}

fn direction_name(direction: Direction) -> &'static str {
    match direction {
        Direction::Recommendation => "reco",
        Direction::Dissemination => "dism",
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating directory {}", parent.display()))?;
        }
    }
    Ok(())
}

fn load_store(path: &Path) -> Result<EngagementStore> {
    hcf_core::io::load_events(path).with_context(|| format!("loading events {}", path.display()))
}

fn load_model(path: &Path) -> Result<FmModel> {
    FmModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn datagen(args: DatagenArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let seed = resolve(args.common.seed, file.seed, 0);
    let mut gen = file.gen_config();
    if let Some(users) = args.users {
        gen.n_users = users;
    }
    if let Some(items) = args.items {
        gen.n_items = items;
    }
    let format = args.format.unwrap_or(LogFormat::Csv);

    let out_dir = rooted(&args.out);
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating directory {}", out_dir.display()))?;
    let events_path = out_dir.join(format!("events.{}", format.extension()));
    let truth_path = out_dir.join("truth.json");

    let data = generate(&gen, seed)?;
    hcf_core::io::save_events(&data.store, &events_path)?;
    data.truth.save(&truth_path)?;

    #[derive(Serialize)]
    struct DatagenConfig<'a> {
        gen: &'a hcf_core::synth::GenConfig,
        format: &'static str,
    }
    let manifest_path = out_dir.join("manifest.json");
    Manifest::new("datagen", Some(seed), DatagenConfig { gen: &gen, format: format.extension() })
        .output(&events_path)
        .output(&truth_path)
        .write_to(&manifest_path)?;

    let store = &data.store;
    let total = store.events().len();
    let negative_rate = store.n_events(Polarity::Negative) as f64 / total as f64;
    println!(
        "dataset: {} ({} events, {} users, {} items, negative rate {:.3})",
        events_path.display(),
        total,
        store.n_users(),
        store.n_items(),
        negative_rate
    );
    println!("ground truth: {}", truth_path.display());
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

fn ingest(args: IngestArgs) -> Result<()> {
    let data_path = rooted(&args.data);
    let out_path = rooted(&args.out);
    let store = load_store(&data_path)?;
    ensure_parent(&out_path)?;
    hcf_core::io::save_events(&store, &out_path)?;

    // The command's contract: the normalized file describes the same
    // store. Verify instead of hoping.
    let reloaded = load_store(&out_path)?;
    let same_keys = (0..store.n_users() as u32)
        .all(|u| store.user_key(u) == reloaded.user_key(u))
        && (0..store.n_items() as u32).all(|i| store.item_key(i) == reloaded.item_key(i));
    if !same_keys
        || reloaded.n_users() != store.n_users()
        || reloaded.n_items() != store.n_items()
        || reloaded.events() != store.events()
    {
        bail!("normalized log does not round-trip to the same store");
    }

    let manifest_path = Manifest::new("ingest", None, serde_json::json!({}))
        .input("data", &data_path)
        .output(&out_path)
        .write_alongside(&out_path)?;
    println!(
        "normalized {} -> {} ({} events, {} users, {} items)",
        data_path.display(),
        out_path.display(),
        store.events().len(),
        store.n_users(),
        store.n_items()
    );
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let seed = resolve(args.common.seed, file.seed, 0);
    let variant = resolve(args.variant.map(Into::into), file.variant, Variant::Hcf);
    let direction =
        resolve(args.direction.map(Into::into), file.direction, Direction::Recommendation);
    let train_cfg = file.train_config();

    let data_path = rooted(&args.data);
    let out_path = rooted(&args.out);
    let store = load_store(&data_path)?;
    let (model, report) = train(&store, variant, direction, &train_cfg, seed)?;
    ensure_parent(&out_path)?;
    model.save(&out_path)?;

    #[derive(Serialize)]
    struct TrainManifestConfig<'a> {
        variant: Variant,
        direction: Direction,
        train: &'a hcf_core::train::TrainConfig,
    }
    let manifest_path =
        Manifest::new("train", Some(seed), TrainManifestConfig {
            variant,
            direction,
            train: &train_cfg,
        })
        .input("data", &data_path)
        .output(&out_path)
        .write_alongside(&out_path)?;

    for (epoch, loss) in report.epoch_loss.iter().enumerate() {
        println!("epoch {:>3}/{} loss {:.6}", epoch + 1, train_cfg.epochs, loss);
    }
    println!(
        "model: {} (variant {}, direction {}, {} instances: {} positive / {} negative)",
        out_path.display(),
        variant_name(variant),
        direction_name(direction),
        report.n_instances,
        report.n_positive,
        report.n_negative
    );
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

#[derive(Serialize)]
struct RecItem {
    item: String,
    score: f64,
    provenance: Provenance,
}

#[derive(Serialize)]
struct RecLine<'a> {
    user: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    items: Option<Vec<RecItem>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fallback: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn cmd_recommend(args: RecommendArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let data_path = rooted(&args.data);
    let model_path = rooted(&args.model);
    let out_path = rooted(&args.out);

    let store = load_store(&data_path)?;
    let model = load_model(&model_path)?;
    let mut params = file.reco_params();
    params.top_n = resolve(args.top_n, file.top_n, params.top_n);
    params.candidates.use_heterogeneous = model.variant == Variant::Hcf;

    ensure_parent(&out_path)?;
    let mut out = BufWriter::new(
        File::create(&out_path).with_context(|| format!("creating {}", out_path.display()))?,
    );
    let mut served = 0usize;
    for user in &args.users {
        let line = match store.lookup_user(user) {
            None => RecLine {
                user,
                items: None,
                fallback: None,
                error: Some("unknown user key".into()),
            },
            Some(target) => {
                let rec = recommend(&store, &model, target, &params)?;
                served += 1;
                RecLine {
                    user,
                    items: Some(
                        rec.items
                            .iter()
                            .map(|r| RecItem {
                                item: store
                                    .key_of(r.id)
                                    .expect("recommended item is interned")
                                    .to_string(),
                                score: r.score,
                                provenance: r.provenance,
                            })
                            .collect(),
                    ),
                    fallback: Some(rec.used_fallback),
                    error: None,
                }
            }
        };
        writeln!(out, "{}", serde_json::to_string(&line)?)?;
    }
    out.flush()?;

    #[derive(Serialize)]
    struct RecommendManifestConfig<'a> {
        users: &'a [String],
        params: &'a hcf_core::pipelines::RecoParams,
    }
    let manifest_path = Manifest::new(
        "recommend",
        None,
        RecommendManifestConfig { users: &args.users, params: &params },
    )
    .input("data", &data_path)
    .input("model", &model_path)
    .output(&out_path)
    .write_alongside(&out_path)?;

    println!("served {}/{} users -> {}", served, args.users.len(), out_path.display());
    println!("manifest: {}", manifest_path.display());
    if served == 0 {
        bail!("no requested user exists in the dataset");
    }
    Ok(())
}

fn disseminate(args: DisseminateArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let seed = resolve(args.common.seed, file.seed, 0);
    let data_path = rooted(&args.data);
    let model_path = rooted(&args.model);
    let truth_path = rooted(&args.truth);
    let out_path = rooted(&args.out);

    let store = load_store(&data_path)?;
    let model = load_model(&model_path)?;
    let truth = GroundTruth::load(&truth_path)
        .with_context(|| format!("loading ground truth {}", truth_path.display()))?;

    let mut params = file.dism_params();
    params.max_iterations = resolve(args.iterations, file.iterations, params.max_iterations);
    params.initial_cohort = resolve(args.cohort, file.cohort, params.initial_cohort);
    params.candidates.use_heterogeneous = model.variant == Variant::Hcf;

    let item = store
        .lookup_item(&args.item)
        .ok_or_else(|| anyhow!("unknown item key {:?}", args.item))?;

    // Reactions must exist for whoever the loop exposes, so check the
    // whole universe against the oracle before anything runs.
    let known_users: BTreeSet<&str> = truth.users.iter().map(String::as_str).collect();
    if !truth.items.iter().any(|k| k == &args.item) {
        bail!("ground truth {} does not cover item {:?}", truth_path.display(), args.item);
    }
    if let Some(missing) =
        (0..store.n_users() as u32).find_map(|u| {
            let key = store.user_key(u).expect("user index in range");
            (!known_users.contains(key)).then(|| key.to_string())
        })
    {
        bail!("ground truth {} does not cover user {missing:?}", truth_path.display());
    }

    let oracle = ResponseOracle::new(&truth, seed);
    let run = run_dissemination(&store, &model, item, &params, |cohort| {
        cohort
            .iter()
            .map(|&user| {
                let user_key = store.key_of(user).expect("cohort user is interned");
                let reaction =
                    oracle.respond(user_key, &args.item).expect("oracle covers the universe");
                (user, reaction)
            })
            .collect()
    })?;

    ensure_parent(&out_path)?;
    let mut out = BufWriter::new(
        File::create(&out_path).with_context(|| format!("creating {}", out_path.display()))?,
    );
    for record in &run.records {
        writeln!(out, "{}", serde_json::to_string(record)?)?;
    }
    out.flush()?;

    #[derive(Serialize)]
    struct DisseminateManifestConfig<'a> {
        item: &'a str,
        params: &'a hcf_core::pipelines::DismParams,
    }
    let manifest_path = Manifest::new(
        "disseminate",
        Some(seed),
        DisseminateManifestConfig { item: &args.item, params: &params },
    )
    .input("data", &data_path)
    .input("model", &model_path)
    .input("truth", &truth_path)
    .output(&out_path)
    .write_alongside(&out_path)?;

    println!(
        "dissemination of {:?}: {} iterations, {} exposed, {} positive (rate {:.4}){}",
        args.item,
        run.records.len(),
        run.total_exposed,
        run.total_positive,
        run.cumulative_positive_rate(),
        if run.stalled { ", stalled: candidate pool ran dry" } else { "" }
    );
    println!("log: {}", out_path.display());
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let seed = resolve(args.common.seed, file.seed, 0);
    let data_path = rooted(&args.data);
    let out_path = rooted(&args.out);
    let store = load_store(&data_path)?;
    let train_cfg = file.train_config();
    let eval_section = file.eval_section();

    let kinds: Vec<hcf_core::eval::ScenarioKind> = if args.scenarios.is_empty() {
        vec![
            hcf_core::eval::ScenarioKind::RecoAll,
            hcf_core::eval::ScenarioKind::RecoNew,
            hcf_core::eval::ScenarioKind::DismNew,
        ]
    } else {
        args.scenarios.iter().copied().map(Into::into).collect()
    };

    let mut reports: Vec<EvalReport> = Vec::new();
    for kind in &kinds {
        let mut scenario = Scenario::new(*kind, seed);
        if let Some(fraction) = eval_section.holdout_fraction {
            scenario.holdout_fraction = fraction;
        }
        if let Some(cutoff) = eval_section.freshness_cutoff {
            scenario.freshness_cutoff = cutoff;
        }
        reports.push(evaluate_pair(&store, &scenario, &train_cfg, seed)?);
    }

    ensure_parent(&out_path)?;
    let mut out = File::create(&out_path)
        .with_context(|| format!("creating {}", out_path.display()))?;
    serde_json::to_writer_pretty(&mut out, &reports)?;
    out.write_all(b"\n")?;

    #[derive(Serialize)]
    struct EvaluateManifestConfig<'a> {
        scenarios: Vec<&'static str>,
        train: &'a hcf_core::train::TrainConfig,
        #[serde(skip_serializing_if = "Option::is_none")]
        holdout_fraction: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        freshness_cutoff: Option<usize>,
    }
    let manifest_path = Manifest::new(
        "evaluate",
        Some(seed),
        EvaluateManifestConfig {
            scenarios: kinds.iter().map(|k| k.name()).collect(),
            train: &train_cfg,
            holdout_fraction: eval_section.holdout_fraction,
            freshness_cutoff: eval_section.freshness_cutoff,
        },
    )
    .input("data", &data_path)
    .output(&out_path)
    .write_alongside(&out_path)?;

    println!("{:<10} {:>8} {:>8} {:>9}", "scenario", "ccf-auc", "hcf-auc", "relative");
    for report in &reports {
        println!(
            "{:<10} {:>8.4} {:>8.4} {:>8.1}%",
            report.scenario.name(),
            report.auc_ccf,
            report.auc_hcf,
            report.relative_pct
        );
    }
    println!("(relative = hcf-auc / ccf-auc; the positives-only baseline is 100%)");
    println!("report: {}", out_path.display());
    println!("manifest: {}", manifest_path.display());
    Ok(())
}
