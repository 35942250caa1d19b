use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dgcvc::corpus::{load_corpus, make_splits};
use dgcvc::eval::{EmbeddingScatter, EvalReport};

const CONFIG: &str = r#"
[asv]
layers = 1
hidden = 16
embed_dim = 16
window = 32

[asv_train]
speakers_per_batch = 2
utterances_per_speaker = 2
crop_frames = 32
steps = 3
checkpoint_every = 0

[speaker]
conv_channels = [4, 8]
gru_hidden = 8
n_tokens = 4
token_dim = 8
heads = 2
embed_dim = 8

[conversion]
neck = 4
downsample = 8
segment_frames = 32
kernel = 3
encoder_channels = 8
encoder_convs = 1
encoder_lstm_layers = 1
decoder_pre = 8
decoder_channels = 8
decoder_convs = 1
decoder_hidden = 8
decoder_lstm_layers = 1
postnet_channels = 8
postnet_layers = 2

[training]
steps = 3
batch_size = 2
checkpoint_every = 0

[corpus]
root = "corpus"
n_train_speakers = 4
split_seed = 3
heldout_per_speaker = 2

[paths]
out_dir = "runs"
"#;

fn dgcvc(args: &[&str], env_root: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dgcvc"));
    cmd.args(args).env_remove("DGCVC_OUT_ROOT");
    if let Some(r) = env_root {
        cmd.env("DGCVC_OUT_ROOT", r);
    }
    cmd.output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = dgcvc(args, None);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn value<'a>(stdout: &'a str, key: &str) -> &'a str {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {stdout}"))
}

/// Exit code and the parsed one-line error record.
fn failure(out: &Output) -> (i32, serde_json::Value) {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("an error line");
    (out.status.code().unwrap(), serde_json::from_str(line).expect("machine-parsable error"))
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_owned();
        fs::write(root.join("config.toml"), CONFIG).unwrap();
        ok(&["synth", "--out", root.join("corpus").to_str().unwrap(), "--speakers", "8", "--utts", "6", "--seed", "1"]);
        Self { _dir: dir, root }
    }

    fn path(&self, rel: &str) -> String {
        self.root.join(rel).display().to_string()
    }

    /// Speakers left out of training by the configured split.
    fn unseen(&self) -> Vec<(String, Vec<PathBuf>)> {
        let c = make_splits(load_corpus(self.root.join("corpus")).unwrap(), 4, 3).unwrap();
        c.eval_speakers().iter().map(|s| (s.id.clone(), s.utterances.clone())).collect()
    }
}

#[test]
fn toy_pipeline_round_trip() {
    let ws = Workspace::new();
    let cfg = ws.path("config.toml");
    let asv_out = ok(&["train-asv", &cfg]);
    let asv = value(&asv_out, "checkpoint").to_owned();
    assert!(Path::new(&asv).exists());
    let vc_out = ok(&["train-vc", &cfg, "--variant", "dgc", "--asv", &asv]);
    let ckpt = value(&vc_out, "checkpoint").to_owned();
    assert!(ws.root.join("runs/vc_dgc/losses.csv").exists());

    let unseen = ws.unseen();
    assert_eq!(unseen.len(), 4);
    let src = unseen[0].1[0].display().to_string();
    let reference = unseen[1].1[1].display().to_string();
    let conv = ok(&["convert", "--src", &src, "--ref", &reference, "--ckpt", &ckpt, "--out", &ws.path("conv.wav")]);
    assert!(ws.root.join("conv.wav").exists());
    let mel = fs::read_to_string(value(&conv, "mel")).unwrap();
    let frames: usize = value(&conv, "frames").parse().unwrap();
    assert_eq!(mel.lines().count(), frames);
    assert!(mel.lines().all(|l| l.split(',').count() == 80));

    let mut manifest = String::from("source_utt_path,target_speaker_id,reference_utt_path,gender_tag\n");
    for (_, src_utts) in &unseen {
        for (target, tgt_utts) in &unseen {
            manifest += &format!("{},{},{},\n", src_utts[2].display(), target, tgt_utts[3].display());
        }
    }
    fs::write(ws.root.join("pairs.csv"), manifest).unwrap();
    let report_path = ws.path("report.json");
    let eval_out = ok(&["evaluate", "--pairs", &ws.path("pairs.csv"), "--ckpt", &ckpt, "--out", &report_path, "--config", &cfg]);
    let report = EvalReport::read_json(Path::new(&report_path)).unwrap();
    assert_eq!(report.pairs.len(), 16);
    assert_eq!(report.variant, "dgc");
    let mcd_mean = report.pairs.iter().map(|p| p.mcd_db).sum::<f64>() / report.pairs.len() as f64;
    assert_eq!(report.avg.mcd_db, mcd_mean);
    let f0: Vec<f64> = report.pairs.iter().filter_map(|p| p.f0_mae_hz).collect();
    assert_eq!(report.avg.f0_mae_hz, (!f0.is_empty()).then(|| f0.iter().sum::<f64>() / f0.len() as f64));
    assert!(ws.root.join("report.csv").exists());
    let scatter = EmbeddingScatter::read_csv(Path::new(value(&eval_out, "scatter"))).unwrap();
    assert_eq!(scatter.len(), 16 + 4);
    assert_eq!(scatter.config_hash(), Some(report.config_hash.as_str()));

    let mut utts = String::from("path,group,converted\n");
    for (id, u) in &unseen {
        utts += &format!("{},{id},false\n", u[0].display());
    }
    utts += &format!("{},x,true\n", ws.path("conv.wav"));
    fs::write(ws.root.join("utts.csv"), utts).unwrap();
    ok(&["embed", "--utts", &ws.path("utts.csv"), "--asv", &asv, "--out", &ws.path("emb.csv")]);
    let proj = ok(&["project", "--in", &ws.path("emb.csv"), "--method", "tsne", "--out", &ws.path("proj.csv")]);
    assert_eq!(value(&proj, "rows"), "5");
}

#[test]
fn usage_and_integrity_errors() {
    let ws = Workspace::new();
    let cfg = ws.path("config.toml");

    let out = dgcvc(&["train-vc", &cfg, "--variant", "dgc"], None);
    let (code, err) = failure(&out);
    assert_eq!(code, 2);
    assert_eq!(err["error"], "usage");
    assert!(err["message"].as_str().unwrap().contains("--asv"));

    let (code, err) = failure(&dgcvc(&["train-vc", &cfg, "--variant", "dgx"], None));
    assert_eq!((code, err["error"].as_str()), (2, Some("usage")));
    let (code, err) = failure(&dgcvc(&["convert", "--src", "a.wav"], None));
    assert_eq!((code, err["error"].as_str()), (2, Some("usage")));
    let (_, err) = failure(&dgcvc(&["train-asv", &ws.path("missing.toml")], None));
    assert_eq!(err["error"], "usage");

    fs::write(ws.root.join("bad.toml"), "[training]\nlambda_typo = 1.0\n").unwrap();
    let (code, err) = failure(&dgcvc(&["train-asv", &ws.path("bad.toml")], None));
    assert_eq!((code, err["error"].as_str()), (1, Some("config")));

    let asv_out = ok(&["train-asv", &cfg]);
    let asv = value(&asv_out, "checkpoint").to_owned();
    fs::write(ws.root.join("other.toml"), CONFIG.replace("steps = 3\nbatch_size = 2", "steps = 2\nbatch_size = 2")).unwrap();
    let (code, err) = failure(&dgcvc(&["train-vc", &ws.path("other.toml"), "--variant", "dg", "--asv", &asv], None));
    assert_eq!((code, err["error"].as_str()), (1, Some("integrity")));
    let vc_out = ok(&["train-vc", &ws.path("other.toml"), "--variant", "dg", "--asv", &asv, "--force"]);
    let ckpt = value(&vc_out, "checkpoint").to_owned();

    let unseen = ws.unseen();
    let manifest = format!(
        "source_utt_path,target_speaker_id,reference_utt_path,gender_tag\n{},{},{},\n",
        unseen[0].1[0].display(),
        unseen[1].0,
        unseen[1].1[0].display()
    );
    fs::write(ws.root.join("pairs.csv"), manifest).unwrap();
    let args = ["evaluate", "--pairs", &ws.path("pairs.csv"), "--ckpt", &ckpt, "--out", &ws.path("r.json")];
    let (_, err) = failure(&dgcvc(&args, None));
    assert_eq!(err["error"], "integrity");
    assert!(err["message"].as_str().unwrap().contains("mixed"));
    let mut forced = args.to_vec();
    forced.push("--force");
    ok(&forced);

    let c = make_splits(load_corpus(ws.root.join("corpus")).unwrap(), 4, 3).unwrap();
    let seen = c.training_speakers()[0].clone();
    let manifest = format!(
        "source_utt_path,target_speaker_id,reference_utt_path,gender_tag\n{},{},{},\n",
        unseen[0].1[0].display(),
        seen.id,
        seen.utterances[0].display()
    );
    fs::write(ws.root.join("seen.csv"), manifest).unwrap();
    let (_, err) = failure(&dgcvc(
        &["evaluate", "--pairs", &ws.path("seen.csv"), "--ckpt", &ckpt, "--out", &ws.path("s.json"), "--force"],
        None,
    ));
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("seen in training"));
}

#[test]
fn reruns_are_byte_identical_and_honor_the_output_override() {
    let ws = Workspace::new();
    let cfg = ws.path("config.toml");
    let (a, b) = (ws.root.join("alt_a"), ws.root.join("alt_b"));
    for root in [&a, &b] {
        let out = dgcvc(&["train-vc", &cfg, "--variant", "g"], Some(root));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let stdout = String::from_utf8(out.stdout).unwrap();
        assert!(value(&stdout, "checkpoint").starts_with(root.to_str().unwrap()));
        let echo = String::from_utf8(out.stderr).unwrap();
        let record: serde_json::Value = serde_json::from_str(echo.lines().next().unwrap()).unwrap();
        assert_eq!(record["command"], "train-vc");
        assert_eq!(record["config"]["speaker"]["variant"], "g");
    }
    assert!(!ws.root.join("runs").exists());
    for f in ["vc_g/vc.ckpt", "vc_g/losses.csv", "vc_g/config.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn projecting_identical_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let table = "id,group,converted,e0,e1,e2\na,g,false,0.5,0.25,1\nb,g,false,0.5,0.25,1\nc,g,true,0.5,0.25,1\n";
    fs::write(dir.path().join("e.csv"), table).unwrap();
    for method in ["pca", "tsne"] {
        let out = dir.path().join(format!("{method}.csv"));
        ok(&["project", "--in", dir.path().join("e.csv").to_str().unwrap(), "--method", method, "--out", out.to_str().unwrap()]);
        let s = EmbeddingScatter::read_csv(&out).unwrap();
        assert_eq!(s.len(), 3);
        let first = (s.rows()[0].x, s.rows()[0].y);
        assert!(s.rows().iter().all(|r| (r.x, r.y) == first));
    }
}
