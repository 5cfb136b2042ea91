//! Command-line entry point. Machine output goes to stdout as JSON, diagnostics to stderr.

mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

pub use config::{CliConfig, ModelOverrides, ModelSettings, TrainOverrides};

use crate::datastore::{
    build_training_tuples, load_annotations, load_captions, load_checkpoint, load_feature_store, load_proposals,
    save_checkpoint, FeatureStore, DEFAULT_MAX_PROPOSALS,
};
use crate::error::{Result, ScrcError};
use crate::evalmetrics::{eval_gt_scenario, eval_proposal_scenario, write_per_query_csv};
use crate::geometry::{BoundingBox, ImageSize};
use crate::gradcheck::{check_gradients, tiny_fixture, DEFAULT_STEP};
use crate::model::{ScrcConfig, ScrcModel};
use crate::nncore::Rng;
use crate::retrieval::{encode_query, rank_annotated, rank_proposals, retrieve, visual_input};
use crate::synth::{self, SynthConfig};
use crate::textproc::Vocabulary;
use crate::train::{finetune_retrieval, full_image_spatial, pretrain_captioning, transfer_weights, Phase};

/// Gradient checks above this relative error fail the command.
pub const GRADCHECK_LIMIT: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(
    name = "scrc",
    version,
    about = "Natural-language object retrieval over box proposals"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic toy dataset.
    Synth(SynthArgs),
    /// Train a caption-mode model on whole-image captions.
    Pretrain(PretrainArgs),
    /// Copy the caption model's global branch into the local branch.
    Transfer(TransferArgs),
    /// Fine-tune on (box, description) annotations.
    Finetune(FinetuneArgs),
    /// Rank the proposals of one image for a query.
    Retrieve(RetrieveArgs),
    /// Evaluate on annotated boxes or on proposals.
    Eval(EvalArgs),
    /// Describe one box with beam search.
    Generate(GenerateArgs),
    /// Verify analytic gradients against finite differences on a tiny model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 16)]
    pub images: usize,
    #[arg(long, default_value_t = 12)]
    pub proposals_per_image: usize,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub captions: PathBuf,
    #[arg(long)]
    pub context_features: PathBuf,
    /// Also take vocabulary words from these annotations, so fine-tuning can reuse it.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelOverrides,
    #[command(flatten)]
    pub train: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub region_features: PathBuf,
    #[arg(long)]
    pub context_features: PathBuf,
    /// Pretrained (caption-mode, transferred automatically) or full checkpoint.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub mask_spatial: bool,
    #[arg(long)]
    pub mask_context: bool,
    /// Start from random weights; `--in` then only supplies the vocabulary.
    #[arg(long)]
    pub no_transfer_init: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelOverrides,
    #[command(flatten)]
    pub train: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub query: String,
    #[arg(long)]
    pub image_id: String,
    #[arg(long)]
    pub proposals: PathBuf,
    #[arg(long)]
    pub region_features: PathBuf,
    #[arg(long)]
    pub context_features: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    /// WIDTH,HEIGHT; required when the proposal file does not record the image size.
    #[arg(long, value_parser = parse_size)]
    pub image_size: Option<ImageSize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScenarioArg {
    Gt,
    Proposals,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub scenario: ScenarioArg,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub proposals: Option<PathBuf>,
    #[arg(long)]
    pub region_features: PathBuf,
    #[arg(long)]
    pub context_features: PathBuf,
    /// Write one CSV row per query here.
    #[arg(long)]
    pub per_query_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub region_features: PathBuf,
    #[arg(long)]
    pub context_features: PathBuf,
    /// Omit to describe the whole image.
    #[arg(long, requires_all = ["bbox", "image_size"])]
    pub region_key: Option<String>,
    #[arg(long)]
    pub image_id: String,
    /// X1,Y1,X2,Y2
    #[arg(long = "box", value_parser = parse_box)]
    pub bbox: Option<BoundingBox>,
    /// WIDTH,HEIGHT
    #[arg(long, value_parser = parse_size)]
    pub image_size: Option<ImageSize>,
    #[arg(long, default_value_t = 5)]
    pub beam: usize,
    #[arg(long, default_value_t = 20)]
    pub max_len: usize,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_numbers(s: &str, n: usize) -> std::result::Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split([',', 'x'])
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated numbers, got {}", v.len()));
    }
    Ok(v)
}

fn parse_box(s: &str) -> std::result::Result<BoundingBox, String> {
    let v = parse_numbers(s, 4)?;
    BoundingBox::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())
}

fn parse_size(s: &str) -> std::result::Result<ImageSize, String> {
    let v = parse_numbers(s, 2)?;
    ImageSize::new(v[0], v[1]).map_err(|e| e.to_string())
}

/// What a successful command prints; `ok = false` still prints but exits nonzero.
pub struct Outcome {
    pub output: Value,
    pub ok: bool,
}

impl From<Value> for Outcome {
    fn from(output: Value) -> Self {
        Outcome { output, ok: true }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(outcome) => {
            let mut stdout = std::io::stdout().lock();
            let text = serde_json::to_string_pretty(&outcome.output).unwrap_or_default();
            if writeln!(stdout, "{text}").is_err() {
                return 1;
            }
            if outcome.ok {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(command: Command) -> Result<Outcome> {
    match command {
        Command::Synth(a) => synth_cmd(a).map(Outcome::from),
        Command::Pretrain(a) => pretrain_cmd(a).map(Outcome::from),
        Command::Transfer(a) => transfer_cmd(a).map(Outcome::from),
        Command::Finetune(a) => finetune_cmd(a).map(Outcome::from),
        Command::Retrieve(a) => retrieve_cmd(a).map(Outcome::from),
        Command::Eval(a) => eval_cmd(a).map(Outcome::from),
        Command::Generate(a) => generate_cmd(a).map(Outcome::from),
        Command::Gradcheck(a) => gradcheck_cmd(a),
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| ScrcError::Input(e.to_string()))
}

/// Model and training settings that make the synthetic dataset train in seconds.
pub fn synth_run_config() -> CliConfig {
    CliConfig {
        model: ModelOverrides {
            embed_dim: Some(8),
            hidden_dim: Some(16),
            min_count: Some(1),
            init_radius: None,
        },
        pretrain: TrainOverrides {
            lr: Some(0.1),
            steps: Some(300),
            batch_size: Some(8),
            log_interval: Some(50),
            ..Default::default()
        },
        finetune: TrainOverrides {
            lr: Some(0.1),
            steps: Some(2000),
            batch_size: Some(16),
            log_interval: Some(100),
            ..Default::default()
        },
    }
}

fn synth_cmd(a: SynthArgs) -> Result<Value> {
    let cfg = SynthConfig {
        images: a.images,
        proposals_per_image: a.proposals_per_image,
        seed: a.seed,
    };
    let ds = synth::generate(&cfg)?;
    ds.write(&a.out_dir)?;
    let config_path = a.out_dir.join(synth::CONFIG_FILE);
    let text = serde_json::to_string_pretty(&synth_run_config()).map_err(|e| ScrcError::Input(e.to_string()))?;
    std::fs::write(&config_path, text + "\n").map_err(|e| ScrcError::io(&config_path, e))?;
    Ok(json!({
        "out_dir": a.out_dir,
        "images": cfg.images,
        "regions": ds.annotations.len(),
        "feature_dim": synth::FEAT_DIM,
    }))
}

fn check_dim(store: &FeatureStore, kind: &str, expected: usize) -> Result<()> {
    if store.dim() != expected {
        return Err(ScrcError::Config(format!(
            "{kind} features have dimension {} but the model expects {expected}",
            store.dim()
        )));
    }
    Ok(())
}

fn pretrain_cmd(a: PretrainArgs) -> Result<Value> {
    let file = CliConfig::load(a.config.as_deref())?;
    let settings = file.model_settings(&a.model)?;
    let train_cfg = file.train_config(Phase::Pretrain, &a.train)?;
    let captions = load_captions(&a.captions)?;
    let context = load_feature_store(&a.context_features)?;
    let mut corpus: Vec<&str> = captions
        .iter()
        .flat_map(|r| r.captions.iter().map(String::as_str))
        .collect();
    let records = a
        .annotations
        .as_ref()
        .map(load_annotations)
        .transpose()?
        .unwrap_or_default();
    corpus.extend(records.iter().flat_map(|r| r.descriptions.iter().map(String::as_str)));
    let vocab = Vocabulary::build(&corpus, settings.min_count)?;

    let config = ScrcConfig::new(vocab.len(), settings.embed_dim, settings.hidden_dim, context.dim()).caption();
    let mut rng = Rng::new(train_cfg.seed);
    let mut model = ScrcModel::<f32>::random(config, &mut rng, settings.init_radius)?;
    let report = pretrain_captioning(&mut model, &captions, &vocab, &context, &train_cfg)?;
    save_checkpoint(&model, &vocab, &a.out)?;
    to_json(&report)
}

fn transfer_cmd(a: TransferArgs) -> Result<Value> {
    let ckpt = load_checkpoint(&a.input)?;
    let mut model = ckpt.model;
    if !model.config.caption_mode {
        return Err(ScrcError::Config(format!(
            "{} is not a caption-mode checkpoint",
            a.input.display()
        )));
    }
    let full = ScrcConfig {
        caption_mode: false,
        ..model.config
    };
    transfer_weights(&mut model.params, &full)?;
    model.config = full;
    save_checkpoint(&model, &ckpt.vocabulary, &a.out)?;
    Ok(json!({ "out": a.out, "config": model.config }))
}

fn finetune_cmd(a: FinetuneArgs) -> Result<Value> {
    let file = CliConfig::load(a.config.as_deref())?;
    let train_cfg = file.train_config(Phase::Finetune, &a.train)?;
    let records = load_annotations(&a.annotations)?;
    let regions = load_feature_store(&a.region_features)?;
    let context = load_feature_store(&a.context_features)?;
    let checkpoint = a.input.as_ref().map(load_checkpoint).transpose()?;

    let (mut model, vocab) = if a.no_transfer_init {
        let settings = file.model_settings(&a.model)?;
        let vocab = match checkpoint {
            Some(c) => c.vocabulary,
            None => {
                let corpus: Vec<&str> = records
                    .iter()
                    .flat_map(|r| r.descriptions.iter().map(String::as_str))
                    .collect();
                Vocabulary::build(&corpus, settings.min_count)?
            }
        };
        let config = ScrcConfig::new(vocab.len(), settings.embed_dim, settings.hidden_dim, regions.dim())
            .with_masks(a.mask_spatial, a.mask_context);
        let mut rng = Rng::new(train_cfg.seed);
        (ScrcModel::<f32>::random(config, &mut rng, settings.init_radius)?, vocab)
    } else {
        let Some(c) = checkpoint else {
            return Err(ScrcError::Config(
                "--in is required unless --no-transfer-init is given".into(),
            ));
        };
        let mut model = c.model;
        let full = ScrcConfig {
            caption_mode: false,
            ..model.config
        };
        if model.config.caption_mode {
            transfer_weights(&mut model.params, &full)?;
        }
        model.config = full.with_masks(a.mask_spatial, a.mask_context);
        model.config.validate()?;
        (model, c.vocabulary)
    };
    check_dim(&regions, "region", model.config.feat_dim)?;
    check_dim(&context, "context", model.config.feat_dim)?;

    let tuples = build_training_tuples(&records, &vocab, &regions, &context)?;
    let report = finetune_retrieval(&mut model, &tuples, &regions, &context, &train_cfg)?;
    save_checkpoint(&model, &vocab, &a.out)?;
    to_json(&report)
}

fn retrieve_cmd(a: RetrieveArgs) -> Result<Value> {
    let ckpt = load_checkpoint(&a.model)?;
    let proposals = load_proposals(&a.proposals, DEFAULT_MAX_PROPOSALS)?;
    let regions = load_feature_store(&a.region_features)?;
    let context = load_feature_store(&a.context_features)?;
    let set = proposals
        .iter()
        .find(|p| p.image_id == a.image_id)
        .ok_or_else(|| ScrcError::MissingKey {
            kind: "proposal image",
            key: a.image_id.clone(),
        })?;
    let size = match (a.image_size, set.image_size()) {
        (Some(s), _) => s,
        (None, Some(s)) => s?,
        (None, None) => {
            return Err(ScrcError::Input(format!(
                "image size of `{}` is unknown; pass --image-size",
                a.image_id
            )))
        }
    };
    let query = encode_query(&ckpt.vocabulary, &a.query)?;
    let candidates: Vec<(BoundingBox, String)> =
        set.boxes.iter().copied().zip(set.region_keys.iter().cloned()).collect();
    let mut ranked = retrieve(&ckpt.model, &query, &a.image_id, size, &candidates, &regions, &context)?;
    ranked.truncate(a.top_k);
    Ok(json!({ "query": a.query, "image_id": a.image_id, "results": ranked }))
}

fn eval_cmd(a: EvalArgs) -> Result<Value> {
    let ckpt = load_checkpoint(&a.model)?;
    let records = load_annotations(&a.annotations)?;
    let regions = load_feature_store(&a.region_features)?;
    let context = load_feature_store(&a.context_features)?;
    let (results, report) = match a.scenario {
        ScenarioArg::Gt => {
            let results = rank_annotated(&ckpt.model, &ckpt.vocabulary, &records, &regions, &context)?;
            let report = eval_gt_scenario(&results)?;
            (results, report)
        }
        ScenarioArg::Proposals => {
            let path = a
                .proposals
                .as_ref()
                .ok_or_else(|| ScrcError::Config("--proposals is required for the proposals scenario".into()))?;
            let proposals = load_proposals(path, DEFAULT_MAX_PROPOSALS)?;
            let results = rank_proposals(&ckpt.model, &ckpt.vocabulary, &records, &proposals, &regions, &context)?;
            let report = eval_proposal_scenario(&results)?;
            (results, report)
        }
    };
    if let Some(path) = &a.per_query_csv {
        write_csv(path, &results)?;
    }
    to_json(&report)
}

fn write_csv(path: &Path, results: &[crate::evalmetrics::RankedResult]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| ScrcError::io(path, e))?;
    write_per_query_csv(results, f)
}

fn generate_cmd(a: GenerateArgs) -> Result<Value> {
    let ckpt = load_checkpoint(&a.model)?;
    let regions = load_feature_store(&a.region_features)?;
    let context = load_feature_store(&a.context_features)?;
    let visual = match (&a.region_key, a.bbox, a.image_size) {
        (Some(key), Some(bbox), Some(size)) => visual_input(&regions, &context, key, &a.image_id, &bbox, size)?,
        _ => {
            let ctx: Vec<f32> = context.require("context", &a.image_id)?.to_vec();
            crate::model::VisualInput {
                x_box: ctx.clone(),
                x_context: ctx,
                x_spatial: full_image_spatial(),
            }
        }
    };
    let generated = ckpt.model.generate_description(&visual, a.beam, a.max_len)?;
    let words = ckpt.vocabulary.decode(&generated.tokens);
    Ok(json!({
        "text": words.join(" "),
        "tokens": words,
        "log_prob": generated.log_prob,
    }))
}

fn gradcheck_cmd(a: GradcheckArgs) -> Result<Outcome> {
    let (model, requests) = tiny_fixture(a.seed, None);
    let report = check_gradients(&model, &requests, DEFAULT_STEP)?;
    let ok = report.max_relative_error <= GRADCHECK_LIMIT;
    if !ok {
        eprintln!(
            "error: gradient check failed: relative error {:e} exceeds {GRADCHECK_LIMIT:e}",
            report.max_relative_error
        );
    }
    Ok(Outcome {
        output: to_json(&report)?,
        ok,
    })
}
