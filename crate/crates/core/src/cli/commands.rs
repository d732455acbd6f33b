use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cli::ablate::{ablation_table, prompt_length_sweep, run_ablation, sweep_table, AblationConfig, Setting};
use crate::cli::checkpoint::{round_to_storage, Checkpoint};
use crate::cli::config::RunConfig;
use crate::cli::eval::{evaluate_split, ground_truth_items, group_references};
use crate::corpus::{build_corpus, read_scenes, Corpus, EmotionLexicon, Style};
use crate::error::{Error, Result};
use crate::inference::{Captioner, DecodeConfig, DecodeMode};
use crate::metrics::evaluate;
use crate::model::{nearest_vocab, Model, PromptMode};
use crate::training::{train_with, Phase, Progress, TrainConfig, TrainReport, Trainable};

#[derive(Debug, Parser)]
#[command(name = "promptcap", version, about = "Prompt-controllable image captioning on synthetic scenes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic training mixture and held-out split.
    GenCorpus(GenCorpusArgs),
    /// Pre-train on plain captions with the LM, contrastive and matching losses.
    Pretrain(TrainArgs),
    /// Fine-tune on the styled mixture under one prompt setting.
    Finetune(FinetuneArgs),
    /// Caption scenes in the requested styles.
    Caption(CaptionArgs),
    /// Decode a split and report BLEU-4, CIDEr-D and style compliance.
    Eval(EvalArgs),
    /// Run the prompt ablation matrix and optionally a prompt-length sweep.
    Ablate(AblateArgs),
    /// Print the vocabulary words nearest to each learned prompt row.
    InspectPrompts(InspectArgs),
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Run configuration file (key=value).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides corpus.seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Multiplies every per-style training count.
    #[arg(long)]
    pub scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus directory written by gen-corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint to start from instead of a fresh model.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the training report here instead of standard output.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write the per-step loss trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// none, shared-manual, multi-manual or multi-auto.
    #[arg(long)]
    pub prompt_mode: Option<PromptMode>,
    /// all or prompts-only.
    #[arg(long)]
    pub trainable: Option<Trainable>,
    /// Redraw the learned prompts with this many rows.
    #[arg(long)]
    pub prompt_len: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Greedy decoding instead of beam search.
    #[arg(long, conflicts_with = "beam")]
    pub greedy: bool,
    /// Beam width.
    #[arg(long)]
    pub beam: Option<usize>,
    /// Generation budget with EOS counted; defaults to 40, or 60 for medium and long.
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Length-normalization exponent.
    #[arg(long)]
    pub alpha: Option<f64>,
}

impl DecodeArgs {
    fn apply(&self, mut d: DecodeConfig) -> Result<DecodeConfig> {
        if self.greedy {
            d.mode = DecodeMode::Greedy;
        }
        if let Some(b) = self.beam {
            d.mode = DecodeMode::Beam;
            d.beam_size = b;
        }
        if self.max_len.is_some() {
            d.max_len = self.max_len;
        }
        if let Some(a) = self.alpha {
            d.alpha = a;
        }
        d.validate()?;
        Ok(d)
    }
}

#[derive(Debug, Args)]
pub struct CaptionArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Scene file, or a corpus file whose captions are ignored.
    #[arg(long)]
    pub scenes: PathBuf,
    /// Comma-separated style tags.
    #[arg(long, default_value = "coco")]
    pub style: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub decode: DecodeArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "ground_truth")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    /// eval or train.
    #[arg(long, default_value = "eval")]
    pub split: String,
    /// Comma-separated style tags; all styles when omitted.
    #[arg(long)]
    pub style: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Score the first reference of each group instead of decoding.
    #[arg(long)]
    pub ground_truth: bool,
    /// Skip the caption-loss pass.
    #[arg(long)]
    pub skip_loss: bool,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-item CSV dump.
    #[arg(long)]
    pub items: Option<PathBuf>,
    #[command(flatten)]
    pub decode: DecodeArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Pre-trained checkpoint; pre-trains from scratch when omitted.
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated rows (numbers or names); all rows when omitted.
    #[arg(long)]
    pub settings: Option<String>,
    /// Comma-separated prompt lengths for the sweep.
    #[arg(long)]
    pub prompt_lengths: Option<String>,
    /// Overrides finetune.epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated style tags to evaluate; all when omitted.
    #[arg(long)]
    pub style: Option<String>,
    /// Write the table here as well as to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub decode: DecodeArgs,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn parse_list<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<Vec<T>> {
    s.split(',').filter(|x| !x.trim().is_empty()).map(|x| x.trim().parse()).collect()
}

fn parse_lengths(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid prompt length `{x}`")))
        })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn feature_width(corpus: &Corpus) -> Result<usize> {
    corpus.train.first().map(|r| r.features.cols()).ok_or(Error::EmptyCorpus)
}

pub fn cmd_gen_corpus(args: &GenCorpusArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?.corpus;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(f) = args.scale {
        if !(f.is_finite() && f > 0.0) {
            return Err(Error::Config("scale must be positive".into()));
        }
        cfg = cfg.scaled(f);
    }
    let corpus = build_corpus(&cfg)?;
    corpus.save(&args.out)?;
    emit(out, &corpus.manifest.to_text())
}

/// Shared body of pretrain and finetune.
fn run_training(args: &TrainArgs, phase: Phase, ft: Option<&FinetuneArgs>, out: &mut dyn Write) -> Result<TrainReport> {
    let cfg = load_config(args.config.as_deref())?;
    let mut tc: TrainConfig = match phase {
        Phase::Pretrain => cfg.pretrain,
        Phase::Finetune => cfg.finetune,
    };
    if let Some(ft) = ft {
        tc.prompt_mode = ft.prompt_mode.unwrap_or(tc.prompt_mode);
        tc.trainable = ft.trainable.unwrap_or(tc.trainable);
    }
    tc.epochs = args.epochs.unwrap_or(tc.epochs);
    tc.batch_size = args.batch_size.unwrap_or(tc.batch_size);
    tc.lr = args.lr.unwrap_or(tc.lr);
    tc.seed = args.seed.unwrap_or(tc.seed);
    tc.validate()?;

    let corpus = Corpus::load(&args.corpus)?;
    let (mut model, vocab) = match &args.init {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            (ck.model, ck.vocab)
        }
        None => {
            let vocab = corpus.vocabulary()?;
            let mc = cfg.model_config(vocab.len(), feature_width(&corpus)?);
            (Model::new(mc, tc.seed)?, vocab)
        }
    };
    if let Some(n) = ft.and_then(|f| f.prompt_len) {
        if n != model.config().prompt_len {
            model.reset_prompt_bank(n, tc.seed)?;
        }
    }
    let mut report = train_with(&mut model, &corpus.train, &vocab, &tc, &mut |p| {
        if let Progress::Epoch(e, s) = p {
            eprintln!("{phase} epoch {}/{}: loss {:.4}", e + 1, tc.epochs, s.total);
        }
    })?;
    round_to_storage(&mut model);
    Checkpoint::new(model, vocab, tc.prompt_mode)?.save(&args.out)?;
    report.checkpoint = Some(args.out.clone());
    if let Some(t) = &args.trace {
        write_file(t, &report.trace_csv())?;
    }
    match &args.report {
        Some(p) => write_file(p, &report.to_text())?,
        None => emit(out, &report.to_text())?,
    }
    Ok(report)
}

pub fn cmd_pretrain(args: &TrainArgs, out: &mut dyn Write) -> Result<TrainReport> {
    run_training(args, Phase::Pretrain, None, out)
}

pub fn cmd_finetune(args: &FinetuneArgs, out: &mut dyn Write) -> Result<TrainReport> {
    run_training(&args.train, Phase::Finetune, Some(args), out)
}

pub fn cmd_caption(args: &CaptionArgs, out: &mut dyn Write) -> Result<()> {
    let styles: Vec<Style> = parse_list(&args.style)?;
    let decode = args.decode.apply(load_config(args.config.as_deref())?.decode)?;
    let ck = Checkpoint::load(&args.checkpoint)?;
    let scenes = read_scenes(&args.scenes)?;
    let cap = Captioner::new(&ck.model, &ck.vocab, ck.prompt_mode);
    for scene in &scenes {
        for &style in &styles {
            let words = cap.caption_words(&scene.features, style, &decode)?;
            emit(out, &format!("{}\t{}\n", style.tag(), words.join(" ")))?;
        }
    }
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let decode = args.decode.apply(cfg.decode)?;
    let styles: Option<Vec<Style>> = args.style.as_deref().map(parse_list).transpose()?;
    let corpus = Corpus::load(&args.corpus)?;
    let records = match args.split.as_str() {
        "eval" => &corpus.eval,
        "train" => &corpus.train,
        s => return Err(Error::Config(format!("unknown split `{s}`; expected eval or train"))),
    };
    let lexicon = EmotionLexicon::default();
    let (report, items) = if args.ground_truth {
        let groups = group_references(records, styles.as_deref());
        if groups.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let items = ground_truth_items(&groups);
        (evaluate(&items, &lexicon)?, items)
    } else {
        let path = args
            .checkpoint
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("--checkpoint is required".into()))?;
        let ck = Checkpoint::load(path)?;
        evaluate_split(
            &|_| (&ck.model, ck.prompt_mode),
            &ck.vocab,
            records,
            styles.as_deref(),
            &decode,
            !args.skip_loss,
        )?
    };
    if let Some(p) = &args.items {
        write_file(p, &report.items_csv(&items, &lexicon)?)?;
    }
    match &args.report {
        Some(p) => write_file(p, &report.to_text()),
        None => emit(out, &report.to_text()),
    }
}

pub fn cmd_ablate(args: &AblateArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let settings: Vec<Setting> = match &args.settings {
        Some(s) => parse_list(s)?,
        None => Setting::ALL.to_vec(),
    };
    let lengths = args.prompt_lengths.as_deref().map(parse_lengths).transpose()?;
    let mut finetune = cfg.finetune;
    finetune.epochs = args.epochs.unwrap_or(finetune.epochs);
    finetune.seed = args.seed.unwrap_or(finetune.seed);
    let config = AblationConfig {
        finetune,
        decode: args.decode.apply(cfg.decode)?,
        styles: args.style.as_deref().map(parse_list).transpose()?,
    };
    let corpus = Corpus::load(&args.corpus)?;
    let mut log = |m: &str| eprintln!("{m}");
    let (model, vocab) = match &args.pretrained {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            (ck.model, ck.vocab)
        }
        None => {
            let vocab = corpus.vocabulary()?;
            let mut pre = cfg.pretrain;
            pre.seed = finetune.seed;
            let mut m = Model::new(cfg.model_config(vocab.len(), feature_width(&corpus)?), pre.seed)?;
            train_with(&mut m, &corpus.train, &vocab, &pre, &mut |p| {
                if let Progress::Epoch(e, s) = p {
                    log(&format!("pretrain epoch {}: loss {:.4}", e + 1, s.total));
                }
            })?;
            (m, vocab)
        }
    };
    let mut text = String::new();
    if !settings.is_empty() {
        let rows = run_ablation(&model, &vocab, &corpus, &settings, &config, &mut log)?;
        text.push_str(&ablation_table(&rows));
    }
    if let Some(lengths) = lengths {
        let rows = prompt_length_sweep(&model, &vocab, &corpus, &lengths, &config, &mut log)?;
        if !text.is_empty() {
            text.push('\n');
        }
        text.push_str(&sweep_table(&rows));
    }
    if let Some(p) = &args.out {
        write_file(p, &text)?;
    }
    emit(out, &text)
}

pub fn cmd_inspect_prompts(args: &InspectArgs, out: &mut dyn Write) -> Result<()> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    if ck.prompt_mode != PromptMode::MultiAuto {
        return Err(Error::NoLearnedPrompts);
    }
    let emb = ck.model.params().get(ck.model.token_embedding_id());
    for style in Style::ALL.iter().take(ck.model.config().n_styles) {
        let prompt = ck.model.params().get(ck.model.prompt_id(style.index())?);
        let ids = nearest_vocab(prompt, emb)?;
        let words: Vec<&str> = ids.iter().map(|&i| ck.vocab.token(i).unwrap_or("[?]")).collect();
        emit(out, &format!("{}\t{}\n", style.tag(), words.join(" ")))?;
    }
    Ok(())
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::GenCorpus(a) => cmd_gen_corpus(a, out),
        Command::Pretrain(a) => cmd_pretrain(a, out).map(drop),
        Command::Finetune(a) => cmd_finetune(a, out).map(drop),
        Command::Caption(a) => cmd_caption(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Ablate(a) => cmd_ablate(a, out),
        Command::InspectPrompts(a) => cmd_inspect_prompts(a, out),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
