use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::{Context, Result};
use rayon::prelude::*;

use antispoof::dataio::{
    load_waveform, read_scores, write_feature_cache, write_scores, Key, Partition, ProtocolSet, ScoreSet,
};
use antispoof::eval::{
    compute_eer, compute_min_tdcf, condition_breakdown, fuse, score_utterance_cnn, score_utterance_sincnet,
    GroupBy, LabeledScores, TdcfParams,
};
use antispoof::models::{build, Model, ModelKind};
use antispoof::pipeline::synth::{write_synth_corpus, SynthConfig};
use antispoof::pipeline::{
    attack_crossval_splits, make_examples, split_train_valid, train_model, ChunkSampler, EpochRecord,
    FeatureExtractor, FeatureKind, GroupKey, History, TrainData,
};
use antispoof::rng_from_seed;

use crate::data::{
    audio_path, cache_path, input_hash, load_features, load_model, load_preprocessed_audio,
    load_protocol, stamp_path, ModelMeta,
};
use crate::manifest::{file_hash, Manifest, SplitRecord};
use crate::{as_input, input_error, Globals, RunConfig};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn sibling_manifest(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.toml");
    output.with_file_name(name)
}

pub fn cmd_extract(g: &Globals, protocols: &[PathBuf]) -> Result<()> {
    let cfg = g.config()?;
    cfg.features.validate().map_err(as_input)?;
    let paths: Vec<PathBuf> = if protocols.is_empty() {
        [&cfg.paths.train_protocol, &cfg.paths.dev_protocol]
            .into_iter()
            .flatten()
            .cloned()
            .collect()
    } else {
        protocols.to_vec()
    };
    if paths.is_empty() {
        return Err(input_error("no protocol given and none configured"));
    }
    let mut manifest = Manifest::new("extract", g.deterministic).with_config(&cfg);
    let mut ids: Vec<String> = Vec::new();
    for p in &paths {
        let set = load_protocol(p, Partition::Train)?;
        manifest.add_input(p)?;
        ids.extend(set.records.into_iter().map(|r| r.utt_id));
    }
    ids.sort();
    ids.dedup();
    let kinds: &[FeatureKind] = if cfg.model.kind.uses_features() {
        FeatureKind::for_channels(cfg.model.input_channels).map_err(as_input)?
    } else {
        &FeatureKind::ALL
    };
    let extractor = FeatureExtractor::new(&cfg.features).map_err(as_input)?;
    let feature_hash = cfg.features.hash()?;
    for k in kinds {
        create_dir(&cfg.paths.cache_dir.join(k.tag()))?;
    }
    let written = AtomicUsize::new(0);
    let fresh = AtomicUsize::new(0);
    let failures: Vec<String> = ids
        .par_iter()
        .filter_map(|id| {
            let audio = audio_path(&cfg, id);
            let result = (|| -> Result<()> {
                let audio_hash = file_hash(&audio)?;
                let stamp = format!("{feature_hash} {audio_hash}\n");
                let mut wave = None;
                for &k in kinds {
                    let cache = cache_path(&cfg.paths.cache_dir, k, id);
                    let stamp_file = stamp_path(&cache);
                    if cache.is_file() && std::fs::read_to_string(&stamp_file).ok().as_deref() == Some(stamp.as_str()) {
                        fresh.fetch_add(1, Ordering::Relaxed);
                        continue;
                    }
                    if wave.is_none() {
                        wave = Some(load_waveform(&audio)?);
                    }
                    let map = extractor.extract(wave.as_ref().expect("loaded above"), k)?;
                    write_feature_cache(&map, &cache)?;
                    write_text(&stamp_file, &stamp)?;
                    written.fetch_add(1, Ordering::Relaxed);
                }
                Ok(())
            })();
            result.err().map(|e| format!("{id} ({}): {e:#}", audio.display()))
        })
        .collect();
    let (written, fresh) = (written.into_inner(), fresh.into_inner());
    println!("extract: {written} cache files written, {fresh} up to date, {} failed", failures.len());
    manifest.input_hash = Some(feature_hash);
    manifest.notes.insert("written".into(), written.to_string());
    manifest.notes.insert("up_to_date".into(), fresh.to_string());
    manifest.add_output(&cfg.paths.cache_dir);
    manifest.write(&cfg.paths.cache_dir.join("extract.manifest.toml"))?;
    if !failures.is_empty() {
        let mut failures = failures;
        failures.sort();
        return Err(input_error(format!(
            "{} utterances could not be processed:\n  {}",
            failures.len(),
            failures.join("\n  ")
        )));
    }
    Ok(())
}

/// Trains on `protocol` into `out`: checkpoints per epoch, the final model,
/// its metadata, the history CSV and a manifest.
pub fn train_run(cfg: &RunConfig, protocol: &ProtocolSet, out: &Path, mut manifest: Manifest) -> Result<History> {
    cfg.validate()?;
    let ckpt_dir = out.join("checkpoints");
    create_dir(&ckpt_dir)?;
    let mut rng = rng_from_seed(cfg.seed);
    let split = split_train_valid(protocol, &mut rng).map_err(as_input)?;
    log::info!("validation speaker: {}", split.valid);
    let train_p = protocol.filter(|r| r.speaker_id != split.valid);
    let valid_p = protocol.filter(|r| r.speaker_id == split.valid);
    manifest.split = Some(SplitRecord {
        train_speakers: split.train.clone(),
        valid_speakers: vec![split.valid.clone()],
    });
    let meta = ModelMeta {
        input_hash: input_hash(cfg)?,
        model: cfg.model.clone(),
    };
    manifest.input_hash = Some(meta.input_hash.clone());
    meta.write(out)?;

    let mut model: Model = build(&cfg.model, &mut rng).map_err(as_input)?;
    let schedule = cfg.schedule();
    manifest.notes.insert("schedule".into(), schedule.to_toml()?);
    let history_path = out.join("history.csv");
    let mut done: Vec<EpochRecord> = Vec::new();
    let mut on_epoch = |r: &EpochRecord, m: &Model| -> antispoof::Result<()> {
        m.save(&ckpt_dir.join(format!("epoch-{:03}.ckpt", r.epoch)))?;
        done.push(r.clone());
        let partial = History {
            epochs: done.clone(),
            best_epoch: None,
        };
        std::fs::write(&history_path, partial.to_csv()).map_err(|e| antispoof::Error::from(e).at(&history_path))
    };

    let history = match cfg.model.kind {
        ModelKind::Vgg | ModelKind::Lcnn => {
            let mut feats = load_features(cfg, protocol)?;
            let group = |p: &ProtocolSet, feats: &mut HashMap<_, _>| {
                let mut groups: BTreeMap<GroupKey, Vec<_>> = BTreeMap::new();
                for r in &p.records {
                    let f = feats.remove(&r.utt_id).expect("loaded for every record");
                    groups
                        .entry(GroupKey {
                            speaker_id: r.speaker_id.clone(),
                            attack_id: r.attack_id.clone(),
                        })
                        .or_default()
                        .push(f);
                }
                groups
            };
            let train_groups = group(&train_p, &mut feats);
            let valid_groups = group(&valid_p, &mut feats);
            let train = make_examples(&train_groups).map_err(as_input)?;
            let valid = if valid_groups.is_empty() {
                Vec::new()
            } else {
                make_examples(&valid_groups).map_err(as_input)?
            };
            log::info!("{} training and {} validation examples", train.len(), valid.len());
            let data = TrainData::Examples {
                train: &train,
                valid: &valid,
            };
            train_model(&mut model, &data, &schedule, &mut rng, &mut on_epoch)
        }
        ModelKind::Sincnet => {
            let store = load_preprocessed_audio(cfg, protocol)?;
            let train = ChunkSampler::new(&train_p, &store, cfg.model.chunk_samples).map_err(as_input)?;
            let valid = match ChunkSampler::new(&valid_p, &store, cfg.model.chunk_samples) {
                Ok(s) => Some(s),
                Err(e) => {
                    log::warn!("no validation loss: {e}");
                    None
                }
            };
            let data = TrainData::Chunks {
                train: &train,
                valid: valid.as_ref(),
            };
            train_model(&mut model, &data, &schedule, &mut rng, &mut on_epoch)
        }
    }
    .map_err(|e| {
        anyhow::Error::from(e).context(format!(
            "training failed; checkpoints of completed epochs are kept in {}",
            ckpt_dir.display()
        ))
    })?;

    let model_path = out.join("model.ckpt");
    model.save(&model_path)?;
    write_text(&history_path, &history.to_csv())?;
    if let Some(best) = history.best_epoch {
        manifest.notes.insert("best_epoch".into(), best.to_string());
    }
    for p in [&model_path, &history_path, &out.join(crate::data::MODEL_META), &ckpt_dir] {
        manifest.add_output(p);
    }
    manifest.write(&out.join("manifest.toml"))?;
    Ok(history)
}

pub fn cmd_train(g: &Globals, output_dir: Option<PathBuf>) -> Result<()> {
    let cfg = g.config()?;
    cfg.validate()?;
    let out = output_dir.unwrap_or_else(|| cfg.paths.output_dir.clone());
    let protocol_path = cfg.train_protocol()?.to_path_buf();
    let protocol = load_protocol(&protocol_path, Partition::Train)?;
    let mut manifest = Manifest::new("train", g.deterministic).with_config(&cfg);
    manifest.add_input(&protocol_path)?;
    let history = train_run(&cfg, &protocol, &out, manifest)?;
    if let Some(last) = history.last() {
        println!(
            "trained {} epochs; final train loss {:.5}; outputs in {}",
            last.epoch,
            last.train_loss,
            out.display()
        );
    }
    Ok(())
}

/// Scores every protocol utterance.
pub fn score_protocol(cfg: &RunConfig, model: &Model, protocol: &ProtocolSet) -> Result<ScoreSet> {
    let scored: Vec<(String, antispoof::Result<f64>)> = match model.spec().kind {
        ModelKind::Vgg | ModelKind::Lcnn => {
            let mut cfg = cfg.clone();
            cfg.model = model.spec().clone();
            let feats = load_features(&cfg, protocol)?;
            protocol
                .records
                .par_iter()
                .map(|r| (r.utt_id.clone(), score_utterance_cnn(model, &feats[&r.utt_id])))
                .collect()
        }
        ModelKind::Sincnet => {
            let store = load_preprocessed_audio(cfg, protocol)?;
            protocol
                .records
                .par_iter()
                .map(|r| {
                    let s = score_utterance_sincnet(model, &store[&r.utt_id], cfg.scoring.frame_ms, cfg.scoring.shift_ms);
                    (r.utt_id.clone(), s)
                })
                .collect()
        }
    };
    let mut out = ScoreSet::new();
    let mut bad = Vec::new();
    for (id, s) in scored {
        match s {
            Ok(v) => out.insert(id, v)?,
            Err(e) => bad.push(format!("{id}: {e}")),
        }
    }
    if !bad.is_empty() {
        return Err(input_error(format!("cannot score {} utterances:\n  {}", bad.len(), bad.join("\n  "))));
    }
    Ok(out)
}

pub fn cmd_score(g: &Globals, checkpoint: &Path, protocol: Option<PathBuf>, output: &Path) -> Result<()> {
    let cfg = g.config()?;
    let meta = ModelMeta::find(checkpoint)?;
    let mut check = cfg.clone();
    check.model = meta.model.clone();
    let current = input_hash(&check)?;
    if current != meta.input_hash {
        return Err(input_error(format!(
            "{} was trained on inputs with settings hash {} but this config gives {current}; \
             refusing to score with mismatched feature or preprocessing settings",
            checkpoint.display(),
            meta.input_hash
        )));
    }
    let model = load_model(checkpoint, &meta)?;
    let protocol_path = match protocol {
        Some(p) => p,
        None => cfg.dev_protocol()?.to_path_buf(),
    };
    let protocol = load_protocol(&protocol_path, Partition::Dev)?;
    let scores = score_protocol(&cfg, &model, &protocol)?;
    write_scores(&scores, output)?;
    let mut manifest = Manifest::new("score", g.deterministic).with_config(&cfg);
    manifest.input_hash = Some(current);
    manifest.add_input(checkpoint)?;
    manifest.add_input(&protocol_path)?;
    manifest.add_output(output);
    manifest.write(&sibling_manifest(output))?;
    println!("scored {} utterances into {}", scores.len(), output.display());
    Ok(())
}

pub fn cmd_fuse(g: &Globals, inputs: &[PathBuf], output: &Path) -> Result<()> {
    let mut manifest = Manifest::new("fuse", g.deterministic);
    let mut sets = Vec::with_capacity(inputs.len());
    for p in inputs {
        sets.push(read_scores(p).map_err(as_input)?);
        manifest.add_input(p)?;
    }
    let refs: Vec<&ScoreSet> = sets.iter().collect();
    let fused = fuse(&refs).map_err(as_input)?;
    write_scores(&fused, output)?;
    manifest.add_output(output);
    manifest.write(&sibling_manifest(output))?;
    println!("fused {} systems over {} utterances", inputs.len(), fused.len());
    Ok(())
}

fn load_tdcf(path: Option<&Path>) -> Result<TdcfParams> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| input_error(format!("{}: {e}", p.display())))?;
            TdcfParams::from_toml(&text).map_err(|e| input_error(format!("{}: {e}", p.display())))
        }
        None => Ok(TdcfParams::default()),
    }
}

pub fn cmd_eval(
    g: &Globals,
    scores_path: &Path,
    protocol_path: &Path,
    tdcf: Option<PathBuf>,
    group_by: &str,
    output_dir: Option<PathBuf>,
    system: &str,
) -> Result<()> {
    let group_by: GroupBy = group_by.parse().map_err(as_input)?;
    let tdcf_path = tdcf.or_else(|| g.config.as_ref().and_then(|c| c.paths.tdcf_params.clone()));
    let params = load_tdcf(tdcf_path.as_deref())?;
    let scores = read_scores(scores_path).map_err(as_input)?;
    let protocol = load_protocol(protocol_path, Partition::Dev)?;
    let ls = LabeledScores::join(&scores, &protocol).map_err(as_input)?;
    let report = condition_breakdown(&ls, group_by, &params).map_err(as_input)?;
    let text = report.to_text(system);
    print!("{text}");
    if let Some(dir) = output_dir {
        create_dir(&dir)?;
        write_text(&dir.join("report.csv"), &report.to_csv())?;
        write_text(&dir.join("report.txt"), &text)?;
        let mut manifest = Manifest::new("eval", g.deterministic);
        manifest.seed = g.seed;
        manifest.add_input(scores_path)?;
        manifest.add_input(protocol_path)?;
        if let Some(p) = &tdcf_path {
            manifest.add_input(p)?;
        }
        manifest.notes.insert("group_by".into(), format!("{group_by:?}"));
        manifest.add_output(&dir.join("report.csv"));
        manifest.add_output(&dir.join("report.txt"));
        manifest.write(&dir.join("manifest.toml"))?;
    }
    Ok(())
}

/// One row of the cross-validation table.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossvalRow {
    pub held_out: String,
    pub train_attacks: String,
    pub eer: f64,
    pub min_tdcf: f64,
}

pub fn crossval_csv(rows: &[CrossvalRow]) -> String {
    let mut out = String::from("held_out,train_attacks,eer,min_tdcf\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:.6},{:.6}", r.held_out, r.train_attacks, r.eer, r.min_tdcf);
    }
    out
}

pub fn crossval_text(rows: &[CrossvalRow]) -> String {
    let width = rows.iter().map(|r| r.held_out.len()).max().unwrap_or(0).max("held out".len());
    let twidth = rows.iter().map(|r| r.train_attacks.len()).max().unwrap_or(0).max("trained on".len());
    let mut out = format!("{:<width$}  {:<twidth$}  {:>8}  {:>9}\n", "held out", "trained on", "EER[%]", "min-tDCF");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:<twidth$}  {:>8.2}  {:>9.4}",
            r.held_out,
            r.train_attacks,
            100.0 * r.eer,
            r.min_tdcf
        );
    }
    out
}

pub fn cmd_crossval(g: &Globals, k_hold: Option<usize>, output_dir: Option<PathBuf>) -> Result<()> {
    let mut cfg = g.config()?;
    if let Some(k) = k_hold {
        cfg.crossval.k_hold = k;
    }
    cfg.validate()?;
    let out = output_dir.unwrap_or_else(|| cfg.paths.output_dir.join("crossval"));
    let train_path = cfg.train_protocol()?.to_path_buf();
    let dev_path = cfg.dev_protocol()?.to_path_buf();
    let train_p = load_protocol(&train_path, Partition::Train)?;
    let dev_p = load_protocol(&dev_path, Partition::Dev)?;
    let splits = attack_crossval_splits(&train_p, cfg.crossval.k_hold).map_err(as_input)?;
    let params = load_tdcf(cfg.paths.tdcf_params.as_deref())?;
    let mut rows = Vec::with_capacity(splits.len());
    for split in &splits {
        let label = split.label();
        log::info!("cross-validation split: holding out {label}");
        let dir = out.join(format!("held-out-{label}"));
        let mut manifest = Manifest::new("crossval", g.deterministic).with_config(&cfg);
        manifest.add_input(&train_path)?;
        manifest.notes.insert("held_out".into(), label.clone());
        train_run(&cfg, &split.train_part(&train_p), &dir, manifest)?;
        let meta = ModelMeta::find(&dir.join("model.ckpt"))?;
        let model = load_model(&dir.join("model.ckpt"), &meta)?;
        let eval_p = split.eval_part(&dev_p);
        if !eval_p.records.iter().any(|r| r.key == Key::Spoof) {
            return Err(input_error(format!("dev protocol has no spoof trials of {label}")));
        }
        let scores = score_protocol(&cfg, &model, &eval_p)?;
        write_scores(&scores, &dir.join("scores.txt"))?;
        let ls = LabeledScores::join(&scores, &eval_p)?;
        let row = CrossvalRow {
            held_out: label,
            train_attacks: split.train_attacks.join("+"),
            eer: compute_eer(&ls)?.0,
            min_tdcf: compute_min_tdcf(&ls, &params)?.0,
        };
        log::info!("held-out {}: EER {:.2}%", row.held_out, 100.0 * row.eer);
        rows.push(row);
    }
    create_dir(&out)?;
    write_text(&out.join("crossval.csv"), &crossval_csv(&rows))?;
    let text = crossval_text(&rows);
    write_text(&out.join("crossval.txt"), &text)?;
    let mut manifest = Manifest::new("crossval", g.deterministic).with_config(&cfg);
    manifest.add_input(&train_path)?;
    manifest.add_input(&dev_path)?;
    manifest.add_output(&out.join("crossval.csv"));
    manifest.write(&out.join("manifest.toml"))?;
    print!("{text}");
    Ok(())
}

/// Starter config for a synthetic corpus. The schedules are shortened
/// versions of the presets, sized for a few hundred short utterances.
pub fn synth_config_text(kind: ModelKind, seed: u64) -> String {
    let head = format!(
        "seed = {seed}\n\n[paths]\naudio_root = \"audio\"\ntrain_protocol = \"train.txt\"\ndev_protocol = \"dev.txt\"\n\
         cache_dir = \"cache\"\noutput_dir = \"runs/{kind}\"\n\n"
    );
    let body = match kind {
        ModelKind::Sincnet => {
            "[model]\nkind = \"sincnet\"\ninput_channels = 1\nwidth_multiplier = 0.125\n\n\
             [schedule]\nalgorithm = \"rmsprop\"\nlearning_rates = [1e-4, 1e-3, 1e-3, 1e-3, 1e-3, 1e-3, 1e-4, 1e-4]\n\
             max_epochs = 8\nbatch_size = 32\nbatches_per_epoch = 25\nvalid_batches = 2\n"
        }
        _ => {
            "[model]\nkind = \"vgg\"\ninput_channels = 1\nwidth_multiplier = 0.125\n\n\
             [schedule]\nalgorithm = \"adam\"\nlearning_rates = [1e-3]\nmax_epochs = 30\nbatch_size = 32\npatience = 5\n"
        }
    };
    head + body
}

pub fn cmd_synth(g: &Globals, output: &Path, speakers: Option<usize>) -> Result<()> {
    let mut cfg = SynthConfig {
        seed: g.seed.unwrap_or(0),
        ..SynthConfig::default()
    };
    if let Some(s) = speakers {
        cfg.speakers = s;
    }
    cfg.validate().map_err(as_input)?;
    let corpus = write_synth_corpus(&cfg, output)?;
    for kind in [ModelKind::Vgg, ModelKind::Sincnet] {
        let path = output.join(format!("{kind}.toml"));
        if !path.exists() {
            write_text(&path, &synth_config_text(kind, cfg.seed))?;
        }
    }
    let mut manifest = Manifest::new("synth", g.deterministic);
    manifest.seed = Some(cfg.seed);
    manifest
        .notes
        .insert("synth".into(), toml::to_string(&cfg).context("serialising synth config")?);
    for name in ["train.txt", "dev.txt", "audio", "vgg.toml", "sincnet.toml"] {
        manifest.add_output(&output.join(name));
    }
    manifest.write(&output.join("synth.manifest.toml"))?;
    println!(
        "wrote {} training and {} dev utterances to {}",
        corpus.train.len(),
        corpus.dev.len(),
        output.display()
    );
    Ok(())
}
