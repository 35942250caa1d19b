use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use dgcvc::asv::{load_frozen_asv, train_asv as run_asv_training};
use dgcvc::audio::Waveform;
use dgcvc::checkpoint::{file_sha256, Checkpoint};
use dgcvc::config::RunConfig;
use dgcvc::corpus::{load_corpus, make_splits, synth_toy_corpus, GenderPair};
use dgcvc::data::{load_mel, load_speaker_mels, SpeakerMels};
use dgcvc::eval::{
    export_embeddings, pair_metrics, project_2d, EmbeddingSource, EmbeddingTable, EvalReport, PairResult,
    ProjectionMethod,
};
use dgcvc::features::{compute_mel, mel_to_waveform, FeatureConfig, MelSpectrogram};
use dgcvc::speaker::Variant;
use dgcvc::training::{load_vc, train_vc as run_vc_training, LoadedVc};
use serde::Deserialize;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(dgcvc::Error),
}

impl From<dgcvc::Error> for CliError {
    fn from(e: dgcvc::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Prints one JSON line on stderr and maps the error to an exit code.
pub fn report(e: &CliError) -> ExitCode {
    let (kind, message, code) = match e {
        CliError::Usage(m) => ("usage", m.clone(), 2),
        CliError::Core(err) => (err.kind(), err.to_string(), 1),
    };
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

fn echo(label: &str, config: &serde_json::Value, hash: &str) {
    eprintln!("{}", serde_json::json!({ "command": label, "config_hash": hash, "config": config }));
}

fn emit(key: &str, value: impl std::fmt::Display) {
    println!("{key}={value}");
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} {} does not exist", path.display())))
    }
}

/// Loads a run configuration; relative paths resolve against its directory.
fn load_config(path: &Path) -> Result<RunConfig> {
    require_file(path, "config")?;
    let mut cfg = RunConfig::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for p in [&mut cfg.corpus.root, &mut cfg.paths.out_dir] {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig, sub: &str) -> Result<PathBuf> {
    let dir = cfg.out_dir().join(sub);
    fs::create_dir_all(&dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn training_speakers(cfg: &RunConfig) -> Result<Vec<SpeakerMels>> {
    let corpus = load_corpus(&cfg.corpus.root)?;
    let corpus = make_splits(corpus, cfg.corpus.n_train_speakers, cfg.corpus.split_seed)?
        .with_utterance_holdout(cfg.corpus.heldout_per_speaker)?;
    Ok(load_speaker_mels(&corpus, &corpus.training_speakers(), &cfg.features)?)
}

fn write_config_copy(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let path = dir.join("config.toml");
    fs::write(&path, cfg.to_toml()?).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

pub fn synth(out: &Path, speakers: usize, utts: usize, seed: u64) -> Result<()> {
    echo(
        "synth",
        &serde_json::json!({ "out": out, "speakers": speakers, "utts": utts, "seed": seed }),
        "",
    );
    let corpus = synth_toy_corpus(speakers, utts, seed, out)?;
    emit("speakers", corpus.speakers().len());
    emit("utterances", corpus.n_utterances());
    Ok(())
}

pub fn train_asv(config: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let stamp = cfg.stamp()?;
    echo("train-asv", &stamp.config, &stamp.hash);
    let speakers = training_speakers(&cfg)?;
    let dir = out_dir(&cfg, "asv")?;
    write_config_copy(&cfg, &dir)?;
    let report = run_asv_training(speakers, &cfg.features, &cfg.asv, &cfg.asv_train, &stamp, Some(&dir))?;
    let mut w = csv::Writer::from_path(dir.join("losses.csv"))?;
    w.write_record(["step", "loss"])?;
    for (i, l) in report.losses.iter().enumerate() {
        w.write_record([(i + 1).to_string(), l.to_string()])?;
    }
    w.flush().map_err(|e| CliError::Core(csv::Error::from(e).into()))?;
    emit("initial_heldout_loss", report.initial_heldout);
    emit("final_heldout_loss", report.final_heldout);
    emit("checkpoint", report.checkpoint.expect("written with an output directory").display());
    Ok(())
}

pub fn train_vc(config: &Path, variant: &str, asv: Option<&Path>, force: bool) -> Result<()> {
    let mut cfg = load_config(config)?;
    let variant: Variant = variant.parse().map_err(|e: dgcvc::Error| CliError::Usage(e.to_string()))?;
    let stamp = cfg.stamp()?;
    cfg.speaker.variant = variant;
    echo("train-vc", &serde_json::to_value(&cfg).map_err(dgcvc::Error::from)?, &stamp.hash);
    let asv_model = match (variant.needs_asv(), asv) {
        (true, None) => {
            return Err(CliError::Usage(format!("variant {variant} needs a pretrained ASV checkpoint (--asv)")));
        }
        (false, Some(_)) => {
            return Err(CliError::Usage(format!("variant {variant} does not use an ASV checkpoint; drop --asv")));
        }
        (true, Some(path)) => {
            require_file(path, "ASV checkpoint")?;
            let model = load_frozen_asv(path, Some(&cfg.asv))?;
            if !force && model.origin() != Some(stamp.hash.as_str()) {
                return Err(CliError::Core(dgcvc::Error::Integrity(format!(
                    "ASV checkpoint config hash {} differs from run config hash {} (use --force to accept)",
                    model.origin().unwrap_or("unknown"),
                    stamp.hash
                ))));
            }
            Some(model)
        }
        (false, None) => None,
    };
    let speakers = training_speakers(&cfg)?;
    let dir = out_dir(&cfg, &format!("vc_{variant}"))?;
    write_config_copy(&cfg, &dir)?;
    let report = run_vc_training(speakers, asv_model, &cfg.features, &cfg.vc_arch(), &cfg.training, &stamp, Some(&dir))?;
    if let Some(last) = report.losses.last() {
        emit("final_l_rec", last.l_rec);
        emit("final_l_class", last.l_class);
    }
    emit("checkpoint", report.checkpoint.expect("written with an output directory").display());
    Ok(())
}

fn load_system(ckpt: &Path) -> Result<LoadedVc> {
    require_file(ckpt, "checkpoint")?;
    Ok(load_vc(ckpt)?)
}

fn read_mel(path: &Path, features: &FeatureConfig, what: &str) -> Result<MelSpectrogram> {
    require_file(path, what)?;
    Ok(load_mel(path, features)?)
}

fn vocode(mel: &MelSpectrogram, features: &FeatureConfig) -> Result<Waveform> {
    Ok(mel_to_waveform(mel, features, features.griffin_lim_iters)?)
}

fn write_mel_csv(path: &Path, mel: &MelSpectrogram) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in mel.frames().rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Core(csv::Error::from(e).into()))
}

fn checkpoint_echo(label: &str, loaded: &LoadedVc, ckpt: &Path) -> Result<()> {
    let ck = Checkpoint::load(ckpt)?;
    echo(label, &ck.config, &loaded.config_hash);
    Ok(())
}

pub fn convert(src: &Path, reference: &Path, ckpt: &Path, out: &Path) -> Result<()> {
    let loaded = load_system(ckpt)?;
    checkpoint_echo("convert", &loaded, ckpt)?;
    let sys = &loaded.system;
    let source = read_mel(src, &sys.features, "source utterance")?;
    let target = read_mel(reference, &sys.features, "reference utterance")?;
    let converted = sys.convert(&source, &target)?.trimmed()?;
    let wav = vocode(&converted, &sys.features)?;
    wav.write_wav(out)?;
    let mel_path = out.with_extension("mel.csv");
    write_mel_csv(&mel_path, &converted)?;
    emit("wav", out.display());
    emit("mel", mel_path.display());
    emit("frames", converted.n_frames());
    Ok(())
}

#[derive(Debug, Deserialize)]
struct PairRow {
    source_utt_path: PathBuf,
    target_speaker_id: String,
    reference_utt_path: PathBuf,
    #[serde(default)]
    gender_tag: Option<String>,
}

fn read_pairs(path: &Path) -> Result<Vec<PairRow>> {
    require_file(path, "pairs manifest")?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rows = Vec::new();
    for r in csv::Reader::from_path(path)?.deserialize() {
        let mut row: PairRow = r?;
        for p in [&mut row.source_utt_path, &mut row.reference_utt_path] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Usage(format!("pairs manifest {} lists no pairs", path.display())));
    }
    Ok(rows)
}

fn speaker_of(path: &Path) -> Option<String> {
    path.parent()?.file_name().map(|n| n.to_string_lossy().into_owned())
}

pub fn evaluate(
    pairs: &Path,
    ckpt: &Path,
    out: &Path,
    config: Option<&Path>,
    force: bool,
    allow_seen: bool,
) -> Result<()> {
    let loaded = load_system(ckpt)?;
    checkpoint_echo("evaluate", &loaded, ckpt)?;
    let mut hashes = vec![("checkpoint", loaded.config_hash.clone())];
    if let Some(origin) = loaded.system.asv.as_ref().and_then(|a| a.origin()) {
        hashes.push(("ASV", origin.to_owned()));
    }
    if let Some(path) = config {
        hashes.push(("config", load_config(path)?.stamp()?.hash));
    }
    if !force {
        if let Some((what, h)) = hashes.iter().find(|(_, h)| *h != hashes[0].1) {
            return Err(CliError::Core(dgcvc::Error::Integrity(format!(
                "mixed config hashes: {what} {h} vs checkpoint {} (use --force to accept)",
                hashes[0].1
            ))));
        }
    }
    let rows = read_pairs(pairs)?;
    if !allow_seen {
        for r in &rows {
            for spk in [Some(r.target_speaker_id.clone()), speaker_of(&r.source_utt_path)].into_iter().flatten() {
                if loaded.speakers.contains(&spk) {
                    return Err(CliError::Core(dgcvc::Error::Config(format!(
                        "speaker {spk} was seen in training; zero-shot evaluation needs unseen speakers (use --allow-seen)"
                    ))));
                }
            }
        }
    }
    let sys = &loaded.system;
    let feats = &sys.features;
    let mut results = Vec::with_capacity(rows.len());
    let mut converted_mels = Vec::with_capacity(rows.len());
    let mut reference_mels: Vec<(String, String, MelSpectrogram)> = Vec::new();
    for r in &rows {
        let source = read_mel(&r.source_utt_path, feats, "source utterance")?;
        require_file(&r.reference_utt_path, "reference utterance")?;
        let ref_wav = Waveform::read_wav(&r.reference_utt_path)?;
        let ref_mel = compute_mel(&ref_wav, feats)?;
        let converted = sys.convert(&source, &ref_mel)?.trimmed()?;
        let (mcd, f0) = pair_metrics(&vocode(&converted, feats)?, &ref_wav, feats)?;
        let gender = match r.gender_tag.as_deref().map(str::trim).filter(|t| !t.is_empty()) {
            Some(t) => Some(t.parse::<GenderPair>()?),
            None => None,
        };
        let reference = r.reference_utt_path.display().to_string();
        results.push(PairResult {
            source: r.source_utt_path.display().to_string(),
            target_speaker: r.target_speaker_id.clone(),
            reference: reference.clone(),
            gender,
            mcd_db: mcd,
            f0_mae_hz: f0,
        });
        converted_mels.push(converted);
        if !reference_mels.iter().any(|(id, _, _)| *id == reference) {
            reference_mels.push((reference, r.target_speaker_id.clone(), ref_mel));
        }
    }
    let report = EvalReport::new(loaded.variant.as_str(), &file_sha256(ckpt)?, &loaded.config_hash, results)?;
    report.write_json(out)?;
    let csv_path = out.with_extension("csv");
    report.write_csv(&csv_path)?;
    emit("report", out.display());
    emit("table", csv_path.display());
    emit("avg_mcd_db", report.avg.mcd_db);

    if let Some(asv) = &sys.asv {
        let ids: Vec<String> = report.pairs.iter().enumerate().map(|(i, p)| format!("converted{i:03}:{}", p.source)).collect();
        let mut items: Vec<EmbeddingSource> = report
            .pairs
            .iter()
            .zip(&converted_mels)
            .zip(&ids)
            .map(|((p, m), id)| EmbeddingSource {
                id,
                group: &p.target_speaker,
                converted: true,
                mel: m,
            })
            .collect();
        items.extend(reference_mels.iter().map(|(id, group, m)| EmbeddingSource {
            id,
            group,
            converted: false,
            mel: m,
        }));
        let table = export_embeddings(&items, Some(asv), feats, Some(loaded.config_hash.clone()))?;
        let emb_path = out.with_extension("embeddings.csv");
        table.write_csv(&emb_path)?;
        emit("embeddings", emb_path.display());
        if table.len() >= 3 {
            let scatter_path = out.with_extension("scatter.csv");
            project_2d(&table, ProjectionMethod::Pca)?.write_csv(&scatter_path)?;
            emit("scatter", scatter_path.display());
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct UttRow {
    path: PathBuf,
    group: String,
    #[serde(default)]
    converted: bool,
}

pub fn embed(utts: &Path, asv: &Path, out: &Path) -> Result<()> {
    require_file(utts, "utterance manifest")?;
    require_file(asv, "ASV checkpoint")?;
    let ck = Checkpoint::load(asv)?;
    let features: FeatureConfig = ck
        .config
        .get("features")
        .map(|v| serde_json::from_value(v.clone()))
        .transpose()
        .map_err(dgcvc::Error::from)?
        .unwrap_or_default();
    echo("embed", &ck.config, &ck.config_hash);
    let model = load_frozen_asv(asv, None)?;
    let base = utts.parent().unwrap_or(Path::new("."));
    let mut rows = Vec::new();
    for r in csv::Reader::from_path(utts)?.deserialize() {
        let mut row: UttRow = r?;
        if row.path.is_relative() {
            row.path = base.join(&row.path);
        }
        rows.push(row);
    }
    let mels = rows
        .iter()
        .map(|r| read_mel(&r.path, &features, "utterance"))
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<String> = rows.iter().map(|r| r.path.display().to_string()).collect();
    let items: Vec<EmbeddingSource> = rows
        .iter()
        .zip(&mels)
        .zip(&ids)
        .map(|((r, m), id)| EmbeddingSource {
            id,
            group: &r.group,
            converted: r.converted,
            mel: m,
        })
        .collect();
    let table = export_embeddings(&items, Some(&model), &features, Some(ck.config_hash.clone()))?;
    table.write_csv(out)?;
    emit("rows", table.len());
    emit("out", out.display());
    Ok(())
}

pub fn project(input: &Path, method: &str, out: &Path) -> Result<()> {
    require_file(input, "embedding table")?;
    let method: ProjectionMethod = method.parse().map_err(|e: dgcvc::Error| CliError::Usage(e.to_string()))?;
    let table = EmbeddingTable::read_csv(input)?;
    echo(
        "project",
        &serde_json::json!({ "in": input, "method": method, "out": out }),
        table.config_hash().unwrap_or(""),
    );
    let scatter = project_2d(&table, method)?;
    scatter.write_csv(out)?;
    emit("rows", scatter.len());
    emit("out", out.display());
    Ok(())
}
