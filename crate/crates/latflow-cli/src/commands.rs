//! Subcommand implementations. Each command loads the resolved
//! configuration, opens a timestamped run directory for its audit
//! trail (resolved config, version, seeds, curves, metrics), and
//! reads/writes canonical artifacts under fixed names so commands can
//! hand work to each other.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use latflow_core::baselines::{
    train_diffusion, train_mlp, BaselineTrainConfig, DiffusionPredictor, DiffusionSchedule,
    MlpPredictor,
};
use latflow_core::dataset::{collect_dataset, scene_seeds, CollectConfig, EncoderPair};
use latflow_core::flow::{
    train_flow as train_flow_model, FlowTrainConfig, IntegrationConfig, VelocityFieldModel,
};
use latflow_core::nav::{
    build_scenario, compute_metrics, run_episode, MapSource, NavMetrics, PredictionModels,
    ScenarioKind,
};
use latflow_core::predict::{FlowPredictor, LatentPredictor};
use latflow_core::vae::{reconstruction_mse, train_vae as train_vae_model, VaeTrainConfig};
use latflow_core::world::{CropKind, Split};

use crate::artifacts::Artifacts;
use crate::config::RunConfig;
use crate::corpus::build_crop_corpus;
use crate::rundir::RunDir;
use crate::timing::median_predict_ms;

fn begin(cfg: &RunConfig, label: &str, seed: u64) -> Result<(Artifacts, RunDir)> {
    let run = RunDir::create(cfg.output.root.as_ref(), label)?;
    run.write_preamble(&cfg.resolved(), &format!("{label}.seed = {seed}\n"))?;
    Ok((Artifacts::new(&cfg.output.artifacts), run))
}

pub fn gen_data(cfg: &RunConfig, seed_override: Option<u64>) -> Result<()> {
    let seed = seed_override.unwrap_or(cfg.seeds.data);
    let (store, run) = begin(cfg, "gen-data", seed)?;
    let local = store
        .load_vae(CropKind::Local)
        .context("gen-data needs both trained encoders; run `train-vae --kind local` first")?;
    let extended = store
        .load_vae(CropKind::Extended)
        .context("gen-data needs both trained encoders; run `train-vae --kind extended` first")?;
    let collect = CollectConfig {
        n_train: cfg.dataset.n_train,
        n_id: cfg.dataset.n_id,
        n_ood: cfg.dataset.n_ood,
        seed,
        density_range: (cfg.dataset.density_lo, cfg.dataset.density_hi),
    };
    let encoders = EncoderPair {
        local: &local,
        extended: &extended,
    };
    let out = collect_dataset(&collect, &encoders)?;
    let mut meta = String::new();
    for ds in [&out.train, &out.test_id, &out.test_ood] {
        let path = store.save_dataset(ds)?;
        let seeds = scene_seeds(&collect, ds.split);
        writeln!(
            meta,
            "{:?}: {} samples, latent dim {}, scene seeds [{}, {})",
            ds.split,
            ds.samples.len(),
            ds.latent_dim,
            seeds.start,
            seeds.end
        )?;
        println!("wrote {} ({} samples)", path.display(), ds.samples.len());
    }
    run.write("dataset_meta.txt", &meta)?;
    Ok(())
}

pub fn train_vae(cfg: &RunConfig, kind: CropKind, seed_override: Option<u64>) -> Result<()> {
    let seed = seed_override.unwrap_or(cfg.seeds.vae);
    let label = match kind {
        CropKind::Local => "train-vae-local",
        CropKind::Extended => "train-vae-extended",
    };
    let (store, run) = begin(cfg, label, seed)?;
    let kind_tag = match kind {
        CropKind::Local => 0,
        CropKind::Extended => 1,
    };
    let density = (cfg.dataset.density_lo, cfg.dataset.density_hi);
    let corpus = build_crop_corpus(
        kind,
        cfg.vae.corpus_size,
        seed.wrapping_add(kind_tag),
        density,
        cfg.vae.pit_fraction,
    )?;
    let heldout = build_crop_corpus(
        kind,
        (cfg.vae.corpus_size / 10).max(64),
        seed.wrapping_add(kind_tag + 2),
        density,
        cfg.vae.pit_fraction,
    )?;
    let train_cfg = VaeTrainConfig {
        epochs: cfg.vae.epochs,
        batch_size: cfg.vae.batch_size,
        beta: cfg.vae.beta,
        learning_rate: cfg.vae.learning_rate,
        latent_dim: cfg.model.latent_dim,
        hidden: cfg.model.vae_hidden,
        seed,
    };
    let (model, curve) = train_vae_model(kind, &corpus, &train_cfg)?;
    let mut csv = String::from("epoch,total,reconstruction_mse,kl\n");
    for (e, b) in curve.iter().enumerate() {
        writeln!(csv, "{e},{:.6},{:.6},{:.6}", b.total, b.reconstruction_mse, b.kl)?;
    }
    run.write(&format!("vae_curve_{}.csv", label), &csv)?;
    let mse = reconstruction_mse(&model, &heldout)?;
    let path = store.save_vae(&model)?;
    println!(
        "wrote {} (held-out reconstruction MSE {:.5}, final KL {:.3})",
        path.display(),
        mse,
        curve.last().map(|b| b.kl).unwrap_or(f64::NAN)
    );
    run.write("heldout_mse.txt", &format!("{mse:.8}\n"))?;
    Ok(())
}

pub fn train_flow(cfg: &RunConfig, conditional: bool, seed_override: Option<u64>) -> Result<()> {
    let seed = seed_override.unwrap_or(cfg.seeds.flow);
    let label = if conditional {
        "train-flow"
    } else {
        "train-flow-uncond"
    };
    let (store, run) = begin(cfg, label, seed)?;
    let train = store
        .load_dataset(Split::Train)
        .context("train-flow needs the train split; run `gen-data` first")?;
    let model = VelocityFieldModel::init(train.latent_dim, cfg.model.hidden, conditional, seed);
    let train_cfg = FlowTrainConfig {
        epochs: cfg.flow.epochs,
        batch_size: cfg.flow.batch_size,
        learning_rate: cfg.flow.learning_rate,
        seed,
    };
    let (mut model, curve) = train_flow_model(model, &train, &train_cfg)?;
    model.default_steps = cfg.model.euler_steps;
    write_curve(&run, &format!("{label}_curve.csv"), &curve)?;
    let path = store.save_flow(&model)?;
    println!(
        "wrote {} (final epoch loss {:.5})",
        path.display(),
        curve.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Mlp,
    Diffusion,
}

pub fn train_baseline(
    cfg: &RunConfig,
    kind: BaselineKind,
    seed_override: Option<u64>,
) -> Result<()> {
    let seed = seed_override.unwrap_or(cfg.seeds.baseline);
    let label = match kind {
        BaselineKind::Mlp => "train-baseline-mlp",
        BaselineKind::Diffusion => "train-baseline-diffusion",
    };
    let (store, run) = begin(cfg, label, seed)?;
    let train = store
        .load_dataset(Split::Train)
        .context("train-baseline needs the train split; run `gen-data` first")?;
    let train_cfg = BaselineTrainConfig {
        epochs: cfg.baseline.epochs,
        batch_size: cfg.baseline.batch_size,
        learning_rate: cfg.baseline.learning_rate,
        seed,
    };
    let (path, final_loss, curve) = match kind {
        BaselineKind::Mlp => {
            let model = MlpPredictor::init(train.latent_dim, cfg.model.hidden, seed);
            let (model, curve) = train_mlp(model, &train, &train_cfg)?;
            (store.save_mlp(&model)?, curve.last().copied(), curve)
        }
        BaselineKind::Diffusion => {
            let mut model =
                DiffusionPredictor::init(train.latent_dim, cfg.model.hidden, 1, seed);
            model.schedule = DiffusionSchedule::linear(
                cfg.model.diffusion_beta_min,
                cfg.model.diffusion_beta_max,
                cfg.model.diffusion_steps,
            )?;
            let (model, curve) = train_diffusion(model, &train, &train_cfg)?;
            (store.save_diffusion(&model)?, curve.last().copied(), curve)
        }
    };
    write_curve(&run, &format!("{label}_curve.csv"), &curve)?;
    println!(
        "wrote {} (final epoch loss {:.5})",
        path.display(),
        final_loss.unwrap_or(f64::NAN)
    );
    Ok(())
}

fn write_curve(run: &RunDir, name: &str, curve: &[f64]) -> Result<()> {
    let mut csv = String::from("epoch,loss\n");
    for (e, l) in curve.iter().enumerate() {
        writeln!(csv, "{e},{l:.6}")?;
    }
    run.write(name, &csv)?;
    Ok(())
}

/// Every predictor checkpoint currently present in the store, under
/// its report name.
fn available_predictors(
    cfg: &RunConfig,
    store: &Artifacts,
) -> Result<Vec<(&'static str, Box<dyn LatentPredictor>)>> {
    let mut out: Vec<(&'static str, Box<dyn LatentPredictor>)> = Vec::new();
    if store.has(Artifacts::flow_name(true)) {
        let model = store.load_flow(true)?;
        out.push((
            "flow",
            Box::new(FlowPredictor {
                model,
                steps: IntegrationConfig::new(cfg.model.euler_steps)?,
            }),
        ));
    }
    if store.has(Artifacts::flow_name(false)) {
        let model = store.load_flow(false)?;
        out.push((
            "flow_uncond",
            Box::new(FlowPredictor {
                model,
                steps: IntegrationConfig::new(cfg.model.euler_steps)?,
            }),
        ));
    }
    if store.has("mlp.lfmp") {
        out.push(("mlp", Box::new(store.load_mlp()?)));
    }
    if store.has("diffusion.lfdm") {
        out.push(("diffusion", Box::new(store.load_diffusion()?)));
    }
    if out.is_empty() {
        bail!("no predictor checkpoints found; run train-flow or train-baseline first");
    }
    Ok(out)
}

pub fn eval_latent(cfg: &RunConfig, seed_override: Option<u64>) -> Result<()> {
    let seed = seed_override.unwrap_or(cfg.seeds.eval);
    let (store, run) = begin(cfg, "eval-latent", seed)?;
    let test_id = store
        .load_dataset(Split::TestId)
        .context("eval-latent needs test splits; run `gen-data` first")?;
    let test_ood = store.load_dataset(Split::TestOod)?;
    let predictors = available_predictors(cfg, &store)?;

    let mut metrics = String::from("predictor,split,cosine_mean,cosine_std,count\n");
    for (name, p) in &predictors {
        for (split, ds) in [("test_id", &test_id), ("test_ood", &test_ood)] {
            let stats = latflow_core::eval::eval_predictor(p.as_ref(), ds, seed)?;
            writeln!(
                metrics,
                "{name},{split},{:.6},{:.6},{}",
                stats.mean, stats.std, stats.count
            )?;
            println!(
                "{name:12} {split:9} cosine {:.4} ± {:.4} (n={})",
                stats.mean, stats.std, stats.count
            );
        }
    }
    store.save_text("latent_eval.csv", &metrics)?;
    run.write("latent_eval.csv", &metrics)?;

    let mut timing = String::from("predictor,median_ms,samples\n");
    for (name, p) in &predictors {
        let ms = median_predict_ms(
            p.as_ref(),
            &test_id.samples,
            cfg.eval.timing_samples,
            seed,
        )?;
        writeln!(timing, "{name},{ms:.6},{}", cfg.eval.timing_samples)?;
        println!("{name:12} median single-sample time {ms:.4} ms");
    }
    store.save_text("timing.csv", &timing)?;
    run.write("timing.csv", &timing)?;
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct NavArgs {
    pub scenario: Option<ScenarioKind>,
    pub source: Option<MapSource>,
    pub predictor: BaselinePick,
    pub episodes: Option<usize>,
}

/// Which checkpoint drives the predicted map source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselinePick {
    Flow,
    Mlp,
    Diffusion,
}

impl BaselinePick {
    pub fn name(self) -> &'static str {
        match self {
            BaselinePick::Flow => "flow",
            BaselinePick::Mlp => "mlp",
            BaselinePick::Diffusion => "diffusion",
        }
    }
}

fn load_pick(
    cfg: &RunConfig,
    store: &Artifacts,
    pick: BaselinePick,
) -> Result<Box<dyn LatentPredictor>> {
    Ok(match pick {
        BaselinePick::Flow => Box::new(FlowPredictor {
            model: store.load_flow(true)?,
            steps: IntegrationConfig::new(cfg.model.euler_steps)?,
        }),
        BaselinePick::Mlp => Box::new(store.load_mlp()?),
        BaselinePick::Diffusion => Box::new(store.load_diffusion()?),
    })
}

pub fn eval_nav(cfg: &RunConfig, args: NavArgs, seed_override: Option<u64>) -> Result<()> {
    let seed = seed_override.unwrap_or(cfg.seeds.nav);
    let (store, run) = begin(cfg, "eval-nav", seed)?;
    let episodes = args.episodes.unwrap_or(cfg.nav.episodes);
    let scenarios: Vec<ScenarioKind> = match args.scenario {
        Some(k) => vec![k],
        None => ScenarioKind::ALL.to_vec(),
    };
    let sources: Vec<MapSource> = match args.source {
        Some(s) => vec![s],
        None => vec![
            MapSource::ObservedOnly,
            MapSource::GroundTruthExtended,
            MapSource::Predicted,
        ],
    };

    // The prediction stack is loaded only if some cell needs it.
    let needs_models = sources.contains(&MapSource::Predicted);
    let loaded = if needs_models {
        let local = store
            .load_vae(CropKind::Local)
            .context("the predicted source needs trained encoders")?;
        let extended = store.load_vae(CropKind::Extended)?;
        let predictor = load_pick(cfg, &store, args.predictor)
            .context("the predicted source needs the picked predictor checkpoint")?;
        Some((local, extended, predictor))
    } else {
        None
    };

    let mut csv = String::from(
        "scenario,source,predictor,episodes,success_rate,collision_rate,spl\n",
    );
    for &kind in &scenarios {
        for &source in &sources {
            let models = loaded.as_ref().map(|(l, e, p)| PredictionModels {
                local_vae: l,
                extended_vae: e,
                predictor: p.as_ref(),
            });
            let models = if source == MapSource::Predicted {
                models
            } else {
                None
            };
            let mut results = Vec::with_capacity(episodes);
            for i in 0..episodes {
                let ep_seed = seed.wrapping_add(i as u64);
                let sc = build_scenario(kind, ep_seed)?;
                results.push(run_episode(&sc, source, models.as_ref(), ep_seed)?);
            }
            let m: NavMetrics = compute_metrics(&results);
            let pred_tag = if source == MapSource::Predicted {
                args.predictor.name()
            } else {
                "-"
            };
            writeln!(
                csv,
                "{},{},{pred_tag},{episodes},{:.2},{:.4},{:.4}",
                kind.name(),
                source.name(),
                m.success_rate,
                m.collision_rate,
                m.spl
            )?;
            println!(
                "{:10} {:22} SR {:6.2}% CR {:7.3} SPL {:.4}",
                kind.name(),
                source.name(),
                m.success_rate,
                m.collision_rate,
                m.spl
            );
        }
    }
    store.save_text("nav_eval.csv", &csv)?;
    run.write("nav_eval.csv", &csv)?;
    Ok(())
}

pub fn report(cfg: &RunConfig) -> Result<()> {
    let (store, run) = begin(cfg, "report", cfg.seeds.eval)?;
    let latent = std::fs::read_to_string(store.path("latent_eval.csv"))
        .context("report needs latent_eval.csv; run `eval-latent` first")?;
    let nav = std::fs::read_to_string(store.path("nav_eval.csv"))
        .context("report needs nav_eval.csv; run `eval-nav` first")?;
    let timing = std::fs::read_to_string(store.path("timing.csv")).unwrap_or_default();

    let mut md = String::new();
    writeln!(md, "# Latent terrain prediction — results\n")?;
    writeln!(
        md,
        "Desk-scale run: {} train / {} ID / {} OOD latent pairs, latent dim {}, \
         {} navigation episodes per cell. At this scale orderings between methods \
         are the meaningful comparison, not absolute magnitudes.\n",
        cfg.dataset.n_train,
        cfg.dataset.n_id,
        cfg.dataset.n_ood,
        cfg.model.latent_dim,
        cfg.nav.episodes
    )?;

    // predictor -> (split -> (mean, std)), insertion-ordered by name.
    let mut stats: BTreeMap<String, BTreeMap<String, (f64, f64)>> = BTreeMap::new();
    for rec in csv::Reader::from_reader(latent.as_bytes()).records() {
        let rec = rec?;
        stats
            .entry(rec[0].to_string())
            .or_default()
            .insert(rec[1].to_string(), (rec[2].parse()?, rec[3].parse()?));
    }
    let mut times: BTreeMap<String, f64> = BTreeMap::new();
    if !timing.is_empty() {
        for rec in csv::Reader::from_reader(timing.as_bytes()).records() {
            let rec = rec?;
            times.insert(rec[0].to_string(), rec[1].parse()?);
        }
    }
    writeln!(md, "## Latent prediction\n")?;
    writeln!(
        md,
        "Cosine similarity between the predicted and ground-truth extended latents.\n"
    )?;
    writeln!(md, "| predictor | ID cosine | OOD cosine | median time (ms) |")?;
    writeln!(md, "|---|---|---|---|")?;
    for (name, by_split) in &stats {
        let fmt = |s: Option<&(f64, f64)>| match s {
            Some((m, d)) => format!("{m:.3} ± {d:.3}"),
            None => "—".into(),
        };
        let t = times
            .get(name)
            .map(|t| format!("{t:.4}"))
            .unwrap_or_else(|| "—".into());
        writeln!(
            md,
            "| {name} | {} | {} | {t} |",
            fmt(by_split.get("test_id")),
            fmt(by_split.get("test_ood"))
        )?;
    }

    writeln!(md, "\n## Navigation\n")?;
    writeln!(
        md,
        "Success rate, mean collisions per episode, and success weighted by path length.\n"
    )?;
    writeln!(md, "| scenario | map source | predictor | SR (%) | CR | SPL |")?;
    writeln!(md, "|---|---|---|---|---|---|")?;
    for rec in csv::Reader::from_reader(nav.as_bytes()).records() {
        let rec = rec?;
        writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} |",
            &rec[0], &rec[1], &rec[2], &rec[4], &rec[5], &rec[6]
        )?;
    }

    store.save_text("report.md", &md)?;
    run.write("report.md", &md)?;
    println!("{md}");
    Ok(())
}
