//! Command implementations behind the `levi-amr` binary.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use levi_amr::corpus::{corpus_stats, parse_graphs, CorpusStats, LoadedCorpus};
use levi_amr::eval::{smatch, smatch_unlabeled, CorpusScore, DEFAULT_RESTARTS};
use levi_amr::graph::levi::levi_concept_order;
use levi_amr::model::{count_parameters, ParamCounts, VocabSizes};
use levi_amr::training::metrics_line;
use levi_amr::{
    build_vocab, emit_penman, from_levi, linearize, load_corpus, load_sentences, parse_penman,
    to_levi, LeviGraph, LinearizeMode, Model, ParserConfig, TrainConfig, TrainError, Variant,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Diverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } | CliError::Data(_) => 3,
            CliError::Diverged(_) => 4,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "levi-amr",
    version,
    about = "Graph-transformer AMR parsing over concept sequences and Levi graphs"
)]
pub struct Cli {
    #[command(flatten)]
    pub shared: Shared,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Shared {
    /// Parser configuration (TOML, or JSON by extension).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for initialization and shuffling.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Decoder variant; overrides the configuration file.
    #[arg(long, global = true)]
    pub variant: Option<Variant>,
    /// Output file or directory; standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    /// Penman graphs to Levi graphs as JSON lines.
    Levi,
    /// Levi-graph JSON lines to Penman graphs.
    Amr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Concepts,
    Levi,
}

impl From<Mode> for LinearizeMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Concepts => LinearizeMode::Concepts,
            Mode::Levi => LinearizeMode::Levi,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Converts between Penman graphs and Levi graphs.
    Transform {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Direction::Levi)]
        to: Direction,
        /// Checks that every graph survives the Levi round trip and reports mismatches.
        #[arg(long)]
        roundtrip: bool,
    },
    /// Writes the decoder node sequence of every graph as JSON lines.
    Linearize {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Levi)]
        mode: Mode,
    },
    /// Trains a parser and writes it to `--out`.
    Train(TrainArgs),
    /// Parses raw sentences (one per line) into Penman graphs.
    Parse {
        #[arg(long)]
        model: PathBuf,
        input: PathBuf,
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Scores predicted graphs against gold graphs with Smatch.
    Eval {
        pred: PathBuf,
        gold: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RESTARTS)]
        restarts: usize,
        #[arg(long)]
        json: bool,
    },
    /// Prints sentence, token, concept and relation counts.
    Stats {
        input: PathBuf,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Prints parameter counts per component and the decoder comparison.
    Params {
        /// Corpus whose vocabulary sizes are used.
        #[arg(long, conflicts_with = "sizes")]
        corpus: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        /// Vocabulary sizes as JSON instead of a corpus.
        #[arg(long)]
        sizes: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Writes token-token, node-token and node-node attention grids as CSV.
    AttnDump {
        #[arg(long)]
        model: PathBuf,
        /// Whitespace-tokenized sentence.
        #[arg(long)]
        sentence: String,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training corpus in Penman format with `# ::tok` lines.
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Optimization settings (TOML).
    #[arg(long)]
    pub train_config: Option<PathBuf>,
    /// Model width when no `--config` is given.
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Attention heads when no `--config` is given.
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub heldout: Option<usize>,
    /// Stops once the evaluated Smatch reaches this value.
    #[arg(long)]
    pub target_smatch: Option<f64>,
    /// Metrics log path; defaults to `metrics.jsonl` inside `--out`.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
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
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let s = &cli.shared;
    match &cli.command {
        Command::Transform {
            input,
            to,
            roundtrip,
        } => transform(s, input, *to, *roundtrip),
        Command::Linearize { input, mode } => linearize_cmd(s, input, (*mode).into()),
        Command::Train(args) => train_cmd(s, args),
        Command::Parse {
            model,
            input,
            features,
        } => parse_cmd(s, model, input, features.as_deref()),
        Command::Eval {
            pred,
            gold,
            restarts,
            json,
        } => eval_cmd(s, pred, gold, *restarts, *json),
        Command::Stats {
            input,
            features,
            json,
        } => stats_cmd(s, input, features.as_deref(), *json),
        Command::Params {
            corpus,
            features,
            sizes,
            json,
        } => params_cmd(
            s,
            corpus.as_deref(),
            features.as_deref(),
            sizes.as_deref(),
            *json,
        ),
        Command::AttnDump { model, sentence } => attn_dump(s, model, sentence),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Writes to `--out` or standard output.
fn emit(s: &Shared, text: &str) -> Result<(), CliError> {
    match &s.out {
        Some(p) => fs::write(p, text).map_err(io_err(p)),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(io_err(Path::new("<stdout>")))
        }
    }
}

fn report_diagnostics(loaded: &LoadedCorpus) {
    for d in &loaded.diagnostics {
        eprintln!("warning: skipped {d}");
    }
}

fn corpus(path: &Path, features: Option<&Path>) -> Result<LoadedCorpus, CliError> {
    let loaded = load_corpus(path, features).map_err(io_err(path))?;
    report_diagnostics(&loaded);
    Ok(loaded)
}

fn transform(s: &Shared, input: &Path, to: Direction, roundtrip: bool) -> Result<(), CliError> {
    let text = read(input)?;
    if to == Direction::Amr {
        let mut out = String::new();
        for (i, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let lv: LeviGraph = serde_json::from_str(line)
                .map_err(|e| CliError::Data(format!("line {}: {e}", i + 1)))?;
            let g = from_levi(&lv).map_err(|e| CliError::Data(format!("line {}: {e}", i + 1)))?;
            out.push_str(&emit_penman(&g).map_err(data)?);
            out.push_str("\n\n");
        }
        return emit(s, &out);
    }
    let (graphs, diags) = parse_graphs(&text);
    for d in &diags {
        eprintln!("warning: skipped {d}");
    }
    if roundtrip {
        let mut mismatches = 0;
        for r in &graphs {
            let levi_ok = from_levi(&to_levi(&r.graph))
                .is_ok_and(|g| g == r.graph.reordered(&levi_concept_order(&r.graph)));
            let penman_ok = emit_penman(&r.graph)
                .ok()
                .and_then(|t| parse_penman(&t).ok())
                .is_some_and(|g| g.is_isomorphic(&r.graph));
            if !(levi_ok && penman_ok) {
                mismatches += 1;
                eprintln!("mismatch: {}", r.id.as_deref().unwrap_or("<no id>"));
            }
        }
        emit(
            s,
            &format!("{} graphs, {mismatches} mismatches\n", graphs.len()),
        )?;
        return if mismatches == 0 {
            Ok(())
        } else {
            Err(CliError::Data(format!(
                "{mismatches} graphs failed the round trip"
            )))
        };
    }
    let mut out = String::new();
    for r in &graphs {
        out.push_str(&serde_json::to_string(&to_levi(&r.graph)).map_err(data)?);
        out.push('\n');
    }
    emit(s, &out)
}

#[derive(Serialize)]
struct SequenceRecord<'a> {
    id: Option<&'a str>,
    sequence: levi_amr::NodeSequence,
}

fn linearize_cmd(s: &Shared, input: &Path, mode: LinearizeMode) -> Result<(), CliError> {
    let (graphs, diags) = parse_graphs(&read(input)?);
    for d in &diags {
        eprintln!("warning: skipped {d}");
    }
    let mut out = String::new();
    for r in &graphs {
        let sequence = linearize(&r.graph, mode).map_err(|e| {
            CliError::Data(format!("{}: {e}", r.id.as_deref().unwrap_or("<no id>")))
        })?;
        let rec = SequenceRecord {
            id: r.id.as_deref(),
            sequence,
        };
        out.push_str(&serde_json::to_string(&rec).map_err(data)?);
        out.push('\n');
    }
    emit(s, &out)
}

fn parser_config(s: &Shared, dim: usize, heads: usize) -> Result<ParserConfig, CliError> {
    let mut cfg = match &s.config {
        Some(p) => ParserConfig::from_file(p).map_err(data)?,
        None => ParserConfig::toy(s.variant.unwrap_or(Variant::NdAdLv), dim, heads),
    };
    if let Some(v) = s.variant {
        cfg.variant = v;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn train_cmd(s: &Shared, a: &TrainArgs) -> Result<(), CliError> {
    let out = s
        .out
        .as_ref()
        .ok_or_else(|| CliError::Usage("train needs --out <model directory>".into()))?;
    let cfg = parser_config(s, a.dim, a.heads)?;
    let mut tc = match &a.train_config {
        Some(p) => TrainConfig::from_file(p).map_err(data)?,
        None => TrainConfig::default(),
    };
    tc.seed = s.seed;
    tc.epochs = a.epochs.unwrap_or(tc.epochs);
    tc.lr = a.lr.unwrap_or(tc.lr);
    tc.eval_every = a.eval_every.unwrap_or(tc.eval_every);
    tc.heldout = a.heldout.unwrap_or(tc.heldout);
    tc.target_smatch = a.target_smatch.or(tc.target_smatch);

    let loaded = corpus(&a.train, a.features.as_deref())?;
    if loaded.examples.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no usable sentences",
            a.train.display()
        )));
    }
    let vocab = build_vocab(&loaded.examples, cfg.variant.mode());
    let mut model = Model::new(cfg, vocab, s.seed).map_err(data)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let metrics_path = a
        .metrics
        .clone()
        .unwrap_or_else(|| out.join("metrics.jsonl"));
    let mut log =
        io::BufWriter::new(fs::File::create(&metrics_path).map_err(io_err(&metrics_path))?);
    let result = levi_amr::train(&mut model, &loaded.examples, &tc, |m| {
        writeln!(log, "{}", metrics_line(m))?;
        log.flush()?;
        let smatch = m
            .smatch
            .map(|s| format!(" smatch {:.4}", s.f1))
            .unwrap_or_default();
        eprintln!("epoch {:>4} loss {:.4}{smatch}", m.epoch, m.total);
        Ok(())
    });
    let report = match result {
        Ok(r) => r,
        Err(e @ TrainError::Diverged { .. }) => return Err(CliError::Diverged(e.to_string())),
        Err(TrainError::Io(e)) => return Err(io_err(&metrics_path)(e)),
        Err(e) => return Err(data(e)),
    };
    model.save(out).map_err(data)?;
    eprintln!(
        "trained {} epochs, best smatch {:.4}; model written to {}",
        report.epochs.len(),
        report.best_f1,
        out.display()
    );
    Ok(())
}

fn load_model(dir: &Path) -> Result<Model, CliError> {
    Model::load(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

fn parse_cmd(
    s: &Shared,
    model: &Path,
    input: &Path,
    features: Option<&Path>,
) -> Result<(), CliError> {
    let model = load_model(model)?;
    let loaded = load_sentences(input, features).map_err(io_err(input))?;
    report_diagnostics(&loaded);
    let mut out = String::new();
    for (i, ex) in loaded.examples.iter().enumerate() {
        let p = model.parse(&ex.sentence).map_err(data)?;
        let words: Vec<&str> = ex
            .sentence
            .tokens
            .iter()
            .map(|t| t.token.as_str())
            .collect();
        out.push_str(&format!("# ::id {}\n# ::tok {}\n", i + 1, words.join(" ")));
        out.push_str(&emit_penman(&p.graph).map_err(data)?);
        out.push_str("\n\n");
    }
    emit(s, &out)
}

#[derive(Serialize)]
struct EvalReport {
    labeled: CorpusScore,
    unlabeled: CorpusScore,
}

fn eval_cmd(
    s: &Shared,
    pred: &Path,
    gold: &Path,
    restarts: usize,
    json: bool,
) -> Result<(), CliError> {
    let (p, pd) = parse_graphs(&read(pred)?);
    let (g, gd) = parse_graphs(&read(gold)?);
    if let Some(d) = pd.first().or(gd.first()) {
        return Err(CliError::Data(format!("unreadable graph, {d}")));
    }
    if p.len() != g.len() {
        return Err(CliError::Data(format!(
            "{} predicted graphs for {} gold graphs",
            p.len(),
            g.len()
        )));
    }
    let labeled = CorpusScore::from_scores(
        p.iter()
            .zip(&g)
            .map(|(a, b)| smatch(&a.graph, &b.graph, restarts)),
    );
    let unlabeled = CorpusScore::from_scores(
        p.iter()
            .zip(&g)
            .map(|(a, b)| smatch_unlabeled(&a.graph, &b.graph, restarts)),
    );
    let report = EvalReport { labeled, unlabeled };
    let text = if json {
        serde_json::to_string_pretty(&report).map_err(data)? + "\n"
    } else {
        format!(
            "pairs      {}\nlabeled    P {:.4} R {:.4} F1 {:.4}\nunlabeled  P {:.4} R {:.4} F1 {:.4}\n",
            labeled.pairs,
            labeled.precision,
            labeled.recall,
            labeled.f1,
            unlabeled.precision,
            unlabeled.recall,
            unlabeled.f1
        )
    };
    emit(s, &text)
}

/// Counts in the column order of the usual data-statistics table.
pub fn format_stats(st: &CorpusStats) -> String {
    format!(
        "sentences  {}\ntokens     {}\nconcepts   {}\nrelations  {}\n",
        st.sentences, st.tokens, st.concepts, st.relations
    )
}

fn stats_cmd(
    s: &Shared,
    input: &Path,
    features: Option<&Path>,
    json: bool,
) -> Result<(), CliError> {
    let loaded = corpus(input, features)?;
    let st = corpus_stats(&loaded.examples);
    let text = if json {
        serde_json::to_string_pretty(&st).map_err(data)? + "\n"
    } else {
        format_stats(&st)
    };
    emit(s, &text)
}

#[derive(Debug, Serialize)]
pub struct ParamsReport {
    pub variant: Variant,
    pub sizes: VocabSizes,
    pub counts: ParamCounts,
    /// Decoder size of the Levi variant.
    pub levi_decoder: usize,
    /// Decoder size of the biaffine variant.
    pub biaffine_decoder: usize,
    /// `1 - levi / biaffine`.
    pub reduction: f64,
}

pub fn params_report(cfg: &ParserConfig, sizes: VocabSizes) -> ParamsReport {
    let with = |variant| {
        count_parameters(
            &ParserConfig {
                variant,
                ..cfg.clone()
            },
            &sizes,
        )
    };
    let lv = with(Variant::NdAdLv).decoder();
    let bd = with(Variant::NdBdBd).decoder();
    ParamsReport {
        variant: cfg.variant,
        sizes,
        counts: count_parameters(cfg, &sizes),
        levi_decoder: lv,
        biaffine_decoder: bd,
        reduction: 1.0 - lv as f64 / bd as f64,
    }
}

fn params_cmd(
    s: &Shared,
    corpus_path: Option<&Path>,
    features: Option<&Path>,
    sizes: Option<&Path>,
    json: bool,
) -> Result<(), CliError> {
    let mut cfg = match &s.config {
        Some(p) => ParserConfig::from_file(p).map_err(data)?,
        None => ParserConfig::default(),
    };
    if let Some(v) = s.variant {
        cfg.variant = v;
    }
    let sizes = match (corpus_path, sizes) {
        (Some(c), _) => {
            let loaded = corpus(c, features)?;
            VocabSizes::of(&build_vocab(&loaded.examples, LinearizeMode::Concepts))
        }
        (None, Some(p)) => serde_json::from_str(&read(p)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        (None, None) => return Err(CliError::Usage("params needs --corpus or --sizes".into())),
    };
    let r = params_report(&cfg, sizes);
    let text = if json {
        serde_json::to_string_pretty(&r).map_err(data)? + "\n"
    } else {
        let c = &r.counts;
        format!(
            "variant            {}\ntext encoder       {}\ngraph encoder      {}\ngraph transformer  {}\nnode decoder       {}\nbiaffine           {}\ndecoder            {}\ntotal              {}\n\ndecoder nd-ad-lv   {}\ndecoder nd-bd-bd   {}\nreduction          {:.1}%\n",
            r.variant,
            c.text_encoder,
            c.graph_encoder,
            c.graph_transformer,
            c.node_decoder,
            c.biaffine,
            c.decoder(),
            c.total(),
            r.levi_decoder,
            r.biaffine_decoder,
            100.0 * r.reduction
        )
    };
    emit(s, &text)
}

fn write_grid(path: &Path, header: &[String], rows: &GridRows) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut head = vec![String::new()];
    head.extend(header.iter().cloned());
    w.write_record(&head).map_err(data)?;
    for (name, values) in rows {
        let mut rec = vec![name.clone()];
        rec.extend(values.iter().map(|v| format!("{v:.6}")));
        w.write_record(&rec).map_err(data)?;
    }
    w.flush().map_err(io_err(path))
}

fn attn_dump(s: &Shared, model: &Path, sentence: &str) -> Result<(), CliError> {
    let dir = s
        .out
        .as_ref()
        .ok_or_else(|| CliError::Usage("attn-dump needs --out <directory>".into()))?;
    let model = load_model(model)?;
    let tokens: Vec<_> = sentence
        .split_whitespace()
        .map(levi_amr::corpus::TokenFeatures::bare)
        .collect();
    if tokens.is_empty() {
        return Err(CliError::Usage("--sentence is empty".into()));
    }
    let p = model
        .parse(&levi_amr::Sentence { tokens, gold: None })
        .map_err(data)?;
    let tr = &p.trace;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let rows: GridRows = tr
        .tokens
        .iter()
        .cloned()
        .zip(tr.text.iter().cloned())
        .collect();
    write_grid(&dir.join("token_token.csv"), &tr.tokens, &rows)?;
    let generated = &tr.nodes[1..];
    let rows: GridRows = generated
        .iter()
        .cloned()
        .zip(tr.node_token.iter().cloned())
        .collect();
    write_grid(&dir.join("node_token.csv"), &tr.tokens[1..], &rows)?;
    let width = generated.len();
    let rows: GridRows = generated
        .iter()
        .zip(&tr.node_node)
        .map(|(name, a)| {
            let mut row = a.clone();
            row.resize(width, 0.0);
            (name.clone(), row)
        })
        .collect();
    write_grid(&dir.join("node_node.csv"), &tr.nodes[..width], &rows)?;
    eprintln!("{}", emit_penman(&p.graph).map_err(data)?);
    Ok(())
}

/// Labeled rows of an attention grid.
pub type GridRows = Vec<(String, Vec<f64>)>;

/// Reads a grid written by `attn-dump`: column labels and labeled rows.
pub fn read_grid(path: &Path) -> Result<(Vec<String>, GridRows), CliError> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let header = rdr
        .headers()
        .map_err(data)?
        .iter()
        .skip(1)
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(data)?;
        let name = rec.get(0).unwrap_or_default().to_string();
        let vals = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().map_err(data))
            .collect::<Result<_, _>>()?;
        rows.push((name, vals));
    }
    Ok((header, rows))
}
