//! Commands behind the `s2sa` binary. Each takes explicit paths and a
//! [`RunConfig`] and returns a summary; printing is left to the caller.

use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::corpus::{filter_by_length, load_pairs, split, tokenize, write_pairs, DialoguePair, EncodedPair};
use crate::decoding::{decode, inspect_selection, ContextStrategy, Decoded, Mmi};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, format_table, EvalCorpus, EvalItem, MetricsReport};
use crate::model::{format_log, load_checkpoint, save_checkpoint, train_with_observer, EpochStats, ModelParams};
use crate::numeric::SeededRng;
use crate::vocab::Vocabulary;

pub const TRAIN_FILE: &str = "train.tsv";
pub const TEST_FILE: &str = "test.tsv";
pub const VALID_FILE: &str = "valid.tsv";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const TABLE_FILE: &str = "automatic.tsv";
pub const SELECTION_FILE: &str = "selection.tsv";
pub const SELECTION_HEADER: &str = "message\tstrategy\tselected_index\tresponse\tlog_prob";

/// RNG stream for initial weights; shared by both directions.
const INIT_STREAM: u64 = 0x696e_6974;

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn echo_config(path: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    write_file(path, &format!("# effective configuration for `{command}`\n{}", cfg.render()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrepareSummary {
    pub loaded: usize,
    pub duplicates: usize,
    pub skipped_empty: usize,
    pub kept: usize,
    pub train: usize,
    pub test: usize,
    pub valid: usize,
    pub vocab_size: usize,
}

/// Load, deduplicate, length-filter and split a pair file. The vocabulary
/// is built from the training split.
pub fn cmd_prepare(pairs_path: &Path, out_dir: &Path, cfg: &RunConfig) -> Result<PrepareSummary> {
    let spec = cfg.split_spec();
    spec.validate()?;
    if cfg.length_cap == 0 {
        return Err(Error::Config("length_cap must be at least 1".into()));
    }
    let report = load_pairs(pairs_path)?.strict()?;
    let loaded = report.pairs.len();
    let kept = filter_by_length(report.pairs, cfg.length_cap);
    let n_kept = kept.len();
    let parts = split(kept, &spec)?;
    let vocab = Vocabulary::build(&parts.train, cfg.vocab_capacity)?;

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_pairs(&out_dir.join(TRAIN_FILE), &parts.train)?;
    write_pairs(&out_dir.join(TEST_FILE), &parts.test)?;
    write_pairs(&out_dir.join(VALID_FILE), &parts.valid)?;
    vocab.save(&out_dir.join(VOCAB_FILE))?;
    echo_config(&out_dir.join("prepare.conf"), "prepare", cfg)?;

    Ok(PrepareSummary {
        loaded,
        duplicates: report.duplicates,
        skipped_empty: report.skipped_empty,
        kept: n_kept,
        train: parts.train.len(),
        test: parts.test.len(),
        valid: parts.valid.len(),
        vocab_size: vocab.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// message → response.
    Forward,
    /// response → message, used as the MMI reverse model.
    Reverse,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Reverse => "reverse",
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Direction::Forward),
            "reverse" => Ok(Direction::Reverse),
            _ => Err(Error::Config(format!("direction must be forward or reverse, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub log: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
    pub num_params: usize,
}

fn load_split(dir: &Path, name: &str, vocab: &Vocabulary, direction: Direction) -> Result<Vec<EncodedPair>> {
    let path = dir.join(name);
    if !path.exists() {
        return Ok(Vec::new());
    }
    Ok(load_pairs(&path)?
        .strict()?
        .pairs
        .iter()
        .map(|p| match direction {
            Direction::Forward => p.encode(vocab),
            Direction::Reverse => p.swapped().encode(vocab),
        })
        .collect())
}

/// Train on `data_dir/train.tsv`, selecting on `valid.tsv`. Writes the
/// checkpoint, `<checkpoint>.log` and `<checkpoint>.conf`.
pub fn cmd_train(
    data_dir: &Path,
    checkpoint: &Path,
    cfg: &RunConfig,
    direction: Direction,
    progress: impl FnMut(&EpochStats),
) -> Result<TrainSummary> {
    let train_cfg = cfg.train_config();
    train_cfg.validate()?;
    if cfg.emb_dim == 0 || cfg.hidden_dim == 0 || !(cfg.init_scale > 0.0) {
        return Err(Error::Config("emb_dim, hidden_dim and init_scale must be positive".into()));
    }
    let vocab = Vocabulary::load(&data_dir.join(VOCAB_FILE))?;
    let train_set = load_split(data_dir, TRAIN_FILE, &vocab, direction)?;
    let valid_set = load_split(data_dir, VALID_FILE, &vocab, direction)?;
    let mut rng = SeededRng::derive(cfg.seed, &[INIT_STREAM]);
    let init = ModelParams::init(cfg.model_dims(vocab.len()), cfg.init_scale, &mut rng);
    let outcome = train_with_observer(init, &train_set, &valid_set, &train_cfg, progress)?;

    save_checkpoint(&outcome.params, &vocab, checkpoint)?;
    write_file(&with_suffix(checkpoint, ".log"), &format_log(&outcome.log))?;
    echo_config(&with_suffix(checkpoint, ".conf"), &format!("train {}", direction.name()), cfg)?;
    Ok(TrainSummary {
        num_params: outcome.params.num_params(),
        log: outcome.log,
        best_epoch: outcome.best_epoch,
    })
}

/// A forward model with its vocabulary and an optional reverse model.
pub struct Models {
    pub forward: ModelParams,
    pub vocab: Vocabulary,
    pub reverse: Option<ModelParams>,
}

impl Models {
    /// Load both checkpoints; their vocabularies must be identical.
    pub fn load(forward: &Path, reverse: Option<&Path>) -> Result<Self> {
        let (fwd, vocab) = load_checkpoint(forward)?;
        let reverse = match reverse {
            Some(path) => {
                let (rev, rev_vocab) = load_checkpoint(path)?;
                if rev_vocab != vocab {
                    return Err(Error::Config(format!(
                        "vocabulary of {} differs from that of {}",
                        path.display(),
                        forward.display()
                    )));
                }
                Some(rev)
            }
            None => None,
        };
        Ok(Models {
            forward: fwd,
            vocab,
            reverse,
        })
    }

    fn mmi(&self, lambda: f64) -> Option<Mmi<'_>> {
        self.reverse.as_ref().map(|reverse| Mmi { reverse, lambda })
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

/// Decode every message in parallel; results follow input order. Empty
/// messages decode to an empty response.
pub fn decode_all(
    models: &Models,
    messages: &[Vec<String>],
    strategy: &ContextStrategy,
    cfg: &RunConfig,
    use_mmi: bool,
) -> Result<Vec<Vec<String>>> {
    let beam = cfg.beam_config();
    beam.validate()?;
    let mmi = if use_mmi { models.mmi(cfg.lambda) } else { None };
    pool(cfg.workers)?.install(|| {
        messages
            .par_iter()
            .map(|msg| {
                if msg.is_empty() {
                    return Ok(Vec::new());
                }
                let ids = models.vocab.encode(msg);
                let d = decode(&models.forward, &ids, strategy, &beam, mmi)?;
                models.vocab.decode(&d.response)
            })
            .collect()
    })
}

fn read_messages(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(tokenize).collect())
}

fn render_lines(responses: &[Vec<String>]) -> String {
    responses.iter().map(|r| r.join(" ") + "\n").collect()
}

/// Decode one message per line of `messages_path` into `out_path` with
/// `cfg.strategy`, reranking with the reverse model when one is given.
pub fn cmd_decode(
    checkpoint: &Path,
    messages_path: &Path,
    out_path: &Path,
    cfg: &RunConfig,
    reverse: Option<&Path>,
) -> Result<Vec<Vec<String>>> {
    let models = Models::load(checkpoint, reverse)?;
    let messages = read_messages(messages_path)?;
    let responses = decode_all(&models, &messages, &cfg.strategy, cfg, reverse.is_some())?;
    write_file(out_path, &render_lines(&responses))?;
    echo_config(&with_suffix(out_path, ".conf"), "decode", cfg)?;
    Ok(responses)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Method {
    pub name: &'static str,
    pub strategy: ContextStrategy,
    pub mmi: bool,
}

impl Method {
    /// Lowercase file stem, e.g. `self-attention-max-using-mmi`.
    pub fn slug(&self) -> String {
        let mut out = String::new();
        for part in self.name.split(|c: char| !c.is_ascii_alphanumeric()).filter(|p| !p.is_empty()) {
            if !out.is_empty() {
                out.push('-');
            }
            out.push_str(&part.to_ascii_lowercase());
        }
        out
    }
}

/// The compared methods, MMI rows only when a reverse model is available.
pub fn methods(seed: u64, with_reverse: bool) -> Vec<Method> {
    let m = |name, strategy, mmi| Method { name, strategy, mmi };
    let mut out = vec![
        m("Seq2Seq", ContextStrategy::StandardSoft, false),
        m("Seq2Seq & Hard-Attention", ContextStrategy::HardToBos, false),
        m("Random Hard-Attention", ContextStrategy::RandomHard(seed), false),
        m("Self-Attention & Min", ContextStrategy::SelfAttnMin, false),
        m("Self-Attention & Max", ContextStrategy::SelfAttnMax, false),
    ];
    if with_reverse {
        out.push(m("Seq2Seq using MMI", ContextStrategy::StandardSoft, true));
        out.push(m("Self-Attention & Max using MMI", ContextStrategy::SelfAttnMax, true));
    }
    out
}

/// Strategies listed in the selection report.
pub fn selection_strategies(cfg: &RunConfig) -> Vec<ContextStrategy> {
    let mut out = vec![ContextStrategy::StandardSoft, ContextStrategy::HardToBos];
    out.extend((1..=cfg.length_cap.max(1)).map(ContextStrategy::PositionalHard));
    out.extend([
        ContextStrategy::RandomHard(cfg.seed),
        ContextStrategy::SelfAttnMax,
        ContextStrategy::SelfAttnMin,
    ]);
    out
}

#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: Method,
    pub responses: Vec<Vec<String>>,
    pub report: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct CompareSummary {
    pub rows: Vec<MethodResult>,
    pub table: String,
    pub selection: String,
}

fn selection_report(models: &Models, messages: &[Vec<String>], cfg: &RunConfig) -> Result<String> {
    let strategies = selection_strategies(cfg);
    let beam = cfg.beam_config();
    let blocks = pool(cfg.workers)?.install(|| {
        messages
            .par_iter()
            .map(|msg| {
                let ids = models.vocab.encode(msg);
                let rows = inspect_selection(&models.forward, &ids, &strategies, &beam)?;
                let mut block = String::new();
                for r in rows {
                    let response = models.vocab.decode(&r.response)?.join(" ");
                    block.push_str(&format!(
                        "{}\t{}\t{}\t{}\t{:.6}\n",
                        msg.join(" "),
                        r.strategy,
                        r.selection_label(),
                        response,
                        r.log_prob
                    ));
                }
                Ok(block)
            })
            .collect::<Result<Vec<String>>>()
    })?;
    Ok(format!("{SELECTION_HEADER}\n{}", blocks.concat()))
}

/// Run every method over the test pairs, score each against the references
/// and write `automatic.tsv`, `selection.tsv`, one response file per
/// method under `responses/`, and `compare.conf`.
pub fn cmd_compare(
    checkpoint: &Path,
    test_path: &Path,
    out_dir: &Path,
    cfg: &RunConfig,
    reverse: Option<&Path>,
) -> Result<CompareSummary> {
    let models = Models::load(checkpoint, reverse)?;
    let pairs: Vec<DialoguePair> = load_pairs(test_path)?.strict()?.pairs;
    if pairs.is_empty() {
        return Err(Error::InvalidInput(format!("{} holds no pairs", test_path.display())));
    }
    let messages: Vec<Vec<String>> = pairs.iter().map(|p| p.message.clone()).collect();

    let mut rows = Vec::new();
    for method in methods(cfg.seed, reverse.is_some()) {
        let responses = decode_all(&models, &messages, &method.strategy, cfg, method.mmi)?;
        let items = pairs
            .iter()
            .zip(&responses)
            .map(|(p, r)| EvalItem {
                message: p.message.clone(),
                reference: p.response.clone(),
                candidate: r.clone(),
            })
            .collect();
        let report = evaluate(&EvalCorpus::new(items)?)?;
        rows.push(MethodResult {
            method,
            responses,
            report,
        });
    }
    let table = format_table(
        &rows
            .iter()
            .map(|r| (r.method.name.to_string(), r.report.clone()))
            .collect::<Vec<_>>(),
    );
    let selection = selection_report(&models, &messages, cfg)?;

    write_file(&out_dir.join(TABLE_FILE), &table)?;
    write_file(&out_dir.join(SELECTION_FILE), &selection)?;
    for r in &rows {
        let path = out_dir.join("responses").join(format!("{}.txt", r.method.slug()));
        write_file(&path, &render_lines(&r.responses))?;
    }
    echo_config(&out_dir.join("compare.conf"), "compare", cfg)?;
    Ok(CompareSummary { rows, table, selection })
}

/// Score a file of candidate responses against the references of a pair
/// file, line by line.
pub fn cmd_evaluate(pairs_path: &Path, candidates_path: &Path) -> Result<MetricsReport> {
    let pairs = load_pairs(pairs_path)?.strict()?.pairs;
    let candidates = read_messages(candidates_path)?;
    if candidates.len() != pairs.len() {
        return Err(Error::InvalidInput(format!(
            "{} has {} lines but {} holds {} pairs",
            candidates_path.display(),
            candidates.len(),
            pairs_path.display(),
            pairs.len()
        )));
    }
    let items = pairs
        .into_iter()
        .zip(candidates)
        .map(|(p, c)| EvalItem {
            message: p.message,
            reference: p.response,
            candidate: c,
        })
        .collect();
    evaluate(&EvalCorpus::new(items)?)
}

/// Dimensions, vocabulary size, parameter count and norm of a checkpoint.
pub fn cmd_inspect(checkpoint: &Path) -> Result<String> {
    let (m, vocab) = load_checkpoint(checkpoint)?;
    let d = m.dims();
    Ok(format!(
        "vocab_size\t{}\nemb_dim\t{}\nhidden_dim\t{}\nparameters\t{}\nl2_norm\t{:.6}\n",
        vocab.len(),
        d.emb_dim,
        d.hidden_dim,
        m.num_params(),
        m.l2_norm()
    ))
}

/// One response per line read from `input` until EOF or `exit`.
pub fn cmd_chat(
    models: &Models,
    strategy: &ContextStrategy,
    cfg: &RunConfig,
    verbose: bool,
    mut input: impl BufRead,
    mut output: impl Write,
) -> Result<()> {
    let beam = cfg.beam_config();
    beam.validate()?;
    let io_err = |e| Error::io("<terminal>", e);
    let mut line = String::new();
    loop {
        write!(output, "> ").and_then(|_| output.flush()).map_err(io_err)?;
        line.clear();
        if input.read_line(&mut line).map_err(io_err)? == 0 {
            return Ok(());
        }
        let text = line.trim();
        if text == "exit" {
            return Ok(());
        }
        let tokens = tokenize(text);
        if tokens.is_empty() {
            continue;
        }
        let ids = models.vocab.encode(&tokens);
        let result = decode(&models.forward, &ids, strategy, &beam, models.mmi(cfg.lambda))
            .and_then(|d: Decoded| Ok((models.vocab.decode(&d.response)?.join(" "), d.first_context)));
        match result {
            Ok((response, first)) => {
                writeln!(output, "{response}").map_err(io_err)?;
                if verbose {
                    if let Some(i) = first.index {
                        writeln!(output, "  a1 = h{} of {}", i + 1, ids.len()).map_err(io_err)?;
                    }
                }
            }
            Err(e) => writeln!(output, "error: {e}").map_err(io_err)?,
        }
    }
}
