use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use lexnorm::analysis::{
    categorize_errors, export_annotation_sheet, parse_annotation_sheet, seg_stats_bytes,
    seg_stats_vocab, subcategory_histogram, Vocab,
};
use lexnorm::baselines::{apply_mfr, build_table, ReplacementTable};
use lexnorm::corpus::{corpus_stats, serialize_corpus, CorpusStats};
use lexnorm::detection::{gold_labels, load_external_labels, table_labels, DetectionLabels};
use lexnorm::error::{read_file, write_file};
use lexnorm::lookup::{
    build_gated_lookup, GatedLookup, DEFAULT_MIN_SUPPORT, DEFAULT_THRESHOLD_BITS,
};
use lexnorm::manifest::RunManifest;
use lexnorm::metrics::{detection_f1, score_run};
use lexnorm::pipeline::backend::{ENV_API_BASE, ENV_API_KEY, ENV_MODEL};
use lexnorm::pipeline::cost::report;
use lexnorm::pipeline::{
    counterfactual_tokens, estimate_cost, run_pipeline, BackendKind, CachedBackend, CallRecord,
    EchoBackend, HttpBackend, LlmBackend, LlmBackendConfig, PipelineConfig, PredictionSource,
    PromptCache, PromptSpec,
};
use lexnorm::translit::{translit_corpus, Direction, MappingTable};
use lexnorm::{Corpus, Error, Result, RunOutput};

/// Lexical normalization: corpora, baselines, lookup, LLM pipeline and evaluation.
#[derive(Parser)]
#[command(name = "lexnorm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CorpusOpts {
    /// Language code recorded with the corpus.
    #[arg(long, default_value = "und")]
    lang: String,
    /// Compare case-insensitively (for datasets without capitalization).
    #[arg(long)]
    caseless: bool,
}

impl CorpusOpts {
    fn load(&self, path: &Path) -> Result<Corpus> {
        Corpus::from_path(path, &self.lang, self.caseless)
    }
}

#[derive(Args)]
struct GateOpts {
    /// Maximum Miller-Madow entropy (bits) for a word to be resolved by lookup.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD_BITS)]
    threshold: f64,
    /// Minimum training occurrences for a word to be resolved by lookup.
    #[arg(long, default_value_t = DEFAULT_MIN_SUPPORT)]
    min_support: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectionSource {
    Gold,
    Table,
    External,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Echo,
    Http,
    Replay,
}

#[derive(Subcommand)]
enum Command {
    /// Check a corpus file and print its size.
    Validate {
        corpus: PathBuf,
        /// Also check that a prediction file aligns with the corpus.
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Also check that a label file aligns with the corpus.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[command(flatten)]
        opts: CorpusOpts,
    },
    /// Dataset statistics, one TSV row per corpus.
    Stats {
        #[arg(required = true)]
        corpora: Vec<PathBuf>,
        #[command(flatten)]
        opts: CorpusOpts,
    },
    /// Count raw-to-normalized replacements in a training corpus.
    TrainMfr {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: CorpusOpts,
    },
    /// Most-frequent-replacement baseline predictions.
    ApplyMfr {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: CorpusOpts,
    },
    /// Entropy-gated lookup from a replacement table.
    BuildLookup {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        gate: GateOpts,
        #[arg(long)]
        caseless: bool,
    },
    /// Write per-token detection labels.
    Detect {
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_enum)]
        source: DetectionSource,
        /// Replacement table, for `--source table`.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Label file from an external detector, for `--source external`.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: CorpusOpts,
    },
    /// Detection precision, recall and F1 against gold.
    DetectEval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[command(flatten)]
        opts: CorpusOpts,
    },
    /// Full pipeline: detection, gated lookup, few-shot LLM normalization.
    Run(Box<RunArgs>),
    /// Score predictions against gold.
    Score {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Print a single TSV record instead of the report.
        #[arg(long)]
        tsv: bool,
        #[command(flatten)]
        opts: CorpusOpts,
    },
    /// Error categories of a prediction file.
    Errors {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[command(flatten)]
        opts: CorpusOpts,
    },
    /// Characters per subword and subwords per word over raw tokens.
    SegStats {
        corpus: PathBuf,
        /// Subword vocabulary, one piece per line; bytes are used without one.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        byte_fallback: bool,
        /// Name reported for the vocabulary.
        #[arg(long, default_value = "vocab")]
        id: String,
        #[command(flatten)]
        opts: CorpusOpts,
    },
    /// Transliterate a corpus to (or back from) the Latin alphabet.
    Translit {
        #[arg(long)]
        input: PathBuf,
        /// Mapping table: `thai-demo`, `combining-marks` or a TSV path. Repeat to merge.
        #[arg(long = "table", required = true)]
        tables: Vec<String>,
        /// Decode Latin back to the original script.
        #[arg(long)]
        reverse: bool,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: CorpusOpts,
    },
    /// Token cost of a run from its call log or from raw totals.
    Cost {
        /// Call log (`<out>.calls.jsonl`) written by `run`.
        #[arg(long, conflicts_with_all = ["input_tokens", "output_tokens"])]
        records: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        input_tokens: u64,
        #[arg(long, default_value_t = 0)]
        output_tokens: u64,
        #[arg(long, default_value_t = 0)]
        calls: usize,
        /// Tokens of the run without lookup, for the reduction figure.
        #[arg(long)]
        counterfactual_tokens: Option<u64>,
        /// USD per million input tokens.
        #[arg(long, default_value_t = 2.50)]
        input_price: f64,
        /// USD per million output tokens.
        #[arg(long, default_value_t = 10.00)]
        output_price: f64,
    },
    /// Manual annotation sheets for error sub-categories.
    #[command(subcommand)]
    Sheet(SheetCommand),
}

#[derive(Subcommand)]
enum SheetCommand {
    /// Sample detected tokens into a TSV sheet.
    Export {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 100)]
        size: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: CorpusOpts,
    },
    /// Histogram of the subcategories filled into a sheet.
    Summary { sheet: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    test: PathBuf,
    /// Training corpus: shot pool and source of the lookup table.
    #[arg(long)]
    train: PathBuf,
    #[arg(long, value_enum, default_value = "gold")]
    detection: DetectionSource,
    /// Label file, for `--detection external`.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Send every flagged token to the LLM.
    #[arg(long)]
    no_lookup: bool,
    /// Persisted lookup (from `build-lookup`) instead of building one from --train.
    #[arg(long)]
    lookup: Option<PathBuf>,
    #[command(flatten)]
    gate: GateOpts,
    #[arg(long, default_value_t = 8)]
    shots: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Draw new shots for every token.
    #[arg(long)]
    resample_shots: bool,
    #[arg(long)]
    instruction_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "echo")]
    backend: BackendArg,
    /// Prompt cache (JSONL); required for `--backend replay`.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, env = ENV_API_BASE)]
    endpoint: Option<String>,
    #[arg(long, env = ENV_MODEL)]
    model: Option<String>,
    #[arg(long, env = ENV_API_KEY, hide_env_values = true)]
    api_key: Option<String>,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    #[arg(long, default_value_t = 2.50)]
    input_price: f64,
    #[arg(long, default_value_t = 10.00)]
    output_price: f64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    opts: CorpusOpts,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn start(subcommand: &str, config: serde_json::Value, inputs: &[&Path]) -> Result<RunManifest> {
    let mut m = RunManifest::start(std::env::args().collect(), subcommand, config);
    for input in inputs {
        m.add_input(input)?;
    }
    Ok(m)
}

/// Write an artifact and its manifest.
fn emit(manifest: RunManifest, out: &Path, bytes: &[u8]) -> Result<()> {
    write_file(out, bytes)?;
    manifest.finish(out)?;
    Ok(())
}

fn load_tables(names: &[String]) -> Result<MappingTable> {
    let mut merged: Option<MappingTable> = None;
    for name in names {
        let table = match name.as_str() {
            "thai-demo" => MappingTable::thai_demo(),
            "combining-marks" => MappingTable::combining_marks(),
            path => MappingTable::from_path(Path::new(path))?,
        };
        merged = Some(match merged {
            Some(m) => m.merged(&table)?,
            None => table,
        });
    }
    merged.ok_or_else(|| Error::Domain("no mapping table given".into()))
}

fn detection_labels(
    source: DetectionSource,
    test: &Corpus,
    table: Option<&ReplacementTable>,
    labels: Option<&Path>,
) -> Result<DetectionLabels> {
    match source {
        DetectionSource::Gold => Ok(gold_labels(test)),
        DetectionSource::Table => table
            .map(|t| table_labels(t, test))
            .ok_or_else(|| Error::Domain("table detection needs a replacement table".into())),
        DetectionSource::External => match labels {
            Some(path) => load_external_labels(path, test),
            None => Err(Error::Domain("external detection needs --labels".into())),
        },
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Validate {
            corpus,
            pred,
            labels,
            opts,
        } => {
            let c = opts.load(&corpus)?;
            if let Some(p) = pred {
                RunOutput::from_path(&p, &c)?;
            }
            if let Some(l) = labels {
                load_external_labels(&l, &c)?;
            }
            println!("sentences: {}", c.sentences().len());
            println!("tokens: {}", c.token_count());
        }
        Command::Stats { corpora, opts } => {
            println!("{}", CorpusStats::TSV_HEADER);
            for path in corpora {
                let c = opts.load(&path)?;
                println!("{}", corpus_stats(&c).tsv_row(&opts.lang, opts.caseless));
            }
        }
        Command::TrainMfr { train, out, opts } => {
            let m = start("train-mfr", json!({"caseless": opts.caseless}), &[&train])?;
            let table = build_table(&opts.load(&train)?);
            emit(m, &out, table.to_tsv().as_bytes())?;
            println!("raw types: {}", table.entries().len());
            println!("tokens: {}", table.total_tokens());
        }
        Command::ApplyMfr {
            table,
            test,
            out,
            opts,
        } => {
            let m = start(
                "apply-mfr",
                json!({"caseless": opts.caseless}),
                &[&table, &test],
            )?;
            let c = opts.load(&test)?;
            let t = ReplacementTable::from_path(&table, opts.caseless)?;
            emit(m, &out, &apply_mfr(&t, &c).to_bytes(&c)?)?;
        }
        Command::BuildLookup {
            table,
            out,
            gate,
            caseless,
        } => {
            let config = json!({
                "threshold_bits": gate.threshold,
                "min_support": gate.min_support,
                "caseless": caseless,
            });
            let m = start("build-lookup", config, &[&table])?;
            let t = ReplacementTable::from_path(&table, caseless)?;
            let gl = build_gated_lookup(&t, gate.threshold, gate.min_support)?;
            emit(m, &out, gl.to_tsv().as_bytes())?;
            println!("resolved: {}", gl.resolved().len());
            println!("deferred: {}", gl.deferred().len());
        }
        Command::Detect {
            test,
            source,
            table,
            labels,
            out,
            opts,
        } => {
            let mut inputs = vec![test.as_path()];
            inputs.extend(table.as_deref());
            inputs.extend(labels.as_deref());
            let config = json!({
                "source": source.to_possible_value().unwrap().get_name(),
                "caseless": opts.caseless,
            });
            let m = start("detect", config, &inputs)?;
            let c = opts.load(&test)?;
            let t = table
                .as_deref()
                .map(|p| ReplacementTable::from_path(p, opts.caseless))
                .transpose()?;
            let l = detection_labels(source, &c, t.as_ref(), labels.as_deref())?;
            emit(m, &out, &l.to_bytes(&c)?)?;
            println!("flagged: {} of {}", l.positives(), l.len());
        }
        Command::DetectEval { gold, labels, opts } => {
            let c = opts.load(&gold)?;
            let pred = load_external_labels(&labels, &c)?;
            let truth = gold_labels(&c);
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for (&g, &p) in truth.labels().iter().zip(pred.labels()) {
                match (g, p) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fn_ += 1,
                    (false, false) => {}
                }
            }
            let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
            println!("precision: {:.6}", ratio(tp, tp + fp));
            println!("recall: {:.6}", ratio(tp, tp + fn_));
            println!("f1: {:.6}", detection_f1(truth.labels(), pred.labels())?);
            println!("tp: {tp}\nfp: {fp}\nfn: {fn_}");
        }
        Command::Run(args) => run(*args)?,
        Command::Score {
            gold,
            pred,
            tsv,
            opts,
        } => {
            let c = opts.load(&gold)?;
            let r = score_run(&c, &RunOutput::from_path(&pred, &c)?)?;
            if tsv {
                println!("{}", lexnorm::ScoreReport::TSV_HEADER);
                println!("{}", r.tsv_record(&opts.lang));
            } else {
                println!("{r}");
            }
        }
        Command::Errors { gold, pred, opts } => {
            let c = opts.load(&gold)?;
            println!(
                "{}",
                categorize_errors(&c, &RunOutput::from_path(&pred, &c)?)?
            );
        }
        Command::SegStats {
            corpus,
            vocab,
            byte_fallback,
            id,
            opts,
        } => {
            let c = opts.load(&corpus)?;
            let stats = match vocab {
                Some(path) => {
                    let text = String::from_utf8(read_file(&path)?)
                        .map_err(|_| Error::Domain(format!("{}: not UTF-8", path.display())))?;
                    seg_stats_vocab(&c, &Vocab::parse(&text, byte_fallback)?, &id)?
                }
                None => seg_stats_bytes(&c),
            };
            println!("tokenizer\tchars/subword\tsubwords/word\tnote");
            println!("{stats}");
        }
        Command::Translit {
            input,
            tables,
            reverse,
            out,
            opts,
        } => {
            let mut inputs = vec![input.as_path()];
            inputs.extend(tables.iter().map(Path::new).filter(|p| p.is_file()));
            let config = json!({"tables": tables, "reverse": reverse});
            let m = start("translit", config, &inputs)?;
            let table = load_tables(&tables)?;
            let direction = if reverse {
                Direction::FromLatin
            } else {
                Direction::ToLatin
            };
            let c = translit_corpus(&opts.load(&input)?, &table, direction)?;
            emit(m, &out, &serialize_corpus(&c))?;
        }
        Command::Cost {
            records,
            input_tokens,
            output_tokens,
            calls,
            counterfactual_tokens,
            input_price,
            output_price,
        } => {
            let cfg = LlmBackendConfig {
                input_price,
                output_price,
                ..LlmBackendConfig::default()
            };
            cfg.validate()?;
            let r = match records {
                Some(path) => {
                    let text = String::from_utf8(read_file(&path)?)
                        .map_err(|_| Error::Domain(format!("{}: not UTF-8", path.display())))?;
                    let records = text
                        .lines()
                        .filter(|l| !l.trim().is_empty())
                        .map(serde_json::from_str)
                        .collect::<std::result::Result<Vec<CallRecord>, _>>()?;
                    estimate_cost(&records, &cfg, counterfactual_tokens)
                }
                None => report(
                    calls,
                    input_tokens,
                    output_tokens,
                    false,
                    &cfg,
                    counterfactual_tokens,
                ),
            };
            println!("{r}");
        }
        Command::Sheet(SheetCommand::Export {
            gold,
            pred,
            labels,
            size,
            seed,
            out,
            opts,
        }) => {
            let mut m = start(
                "sheet",
                json!({"size": size, "seed": seed, "caseless": opts.caseless}),
                &[&gold, &pred, &labels],
            )?;
            m.seed = Some(seed);
            let c = opts.load(&gold)?;
            let run = RunOutput::from_path(&pred, &c)?;
            let l = load_external_labels(&labels, &c)?;
            let sheet = export_annotation_sheet(&c, &run, &l, size, seed)?;
            emit(m, &out, sheet.as_bytes())?;
        }
        Command::Sheet(SheetCommand::Summary { sheet }) => {
            let text = String::from_utf8(read_file(&sheet)?)
                .map_err(|_| Error::Domain(format!("{}: not UTF-8", sheet.display())))?;
            println!("subcategory\tcount\trelative");
            for (name, (n, rel)) in subcategory_histogram(&parse_annotation_sheet(&text)?) {
                println!("{name}\t{n}\t{rel:.4}");
            }
        }
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let opts = &args.opts;
    let test = opts.load(&args.test)?;
    let train = opts.load(&args.train)?;
    let table = build_table(&train);

    let detection = detection_labels(args.detection, &test, Some(&table), args.labels.as_deref())?;
    let lookup = match (&args.lookup, args.no_lookup) {
        (_, true) => None,
        (Some(path), false) => Some(GatedLookup::from_path(
            path,
            args.gate.threshold,
            args.gate.min_support,
            opts.caseless,
        )?),
        (None, false) => Some(build_gated_lookup(
            &table,
            args.gate.threshold,
            args.gate.min_support,
        )?),
    };

    let mut prompt = PromptSpec {
        k_shots: args.shots,
        seed: args.seed,
        ..PromptSpec::default()
    };
    if let Some(path) = &args.instruction_file {
        let text = String::from_utf8(read_file(path)?)
            .map_err(|_| Error::Domain(format!("{}: not UTF-8", path.display())))?;
        prompt.instruction = text.trim_end().to_string();
    }
    let backend_cfg = LlmBackendConfig {
        kind: match args.backend {
            BackendArg::Echo => BackendKind::Echo,
            BackendArg::Http => BackendKind::Http,
            BackendArg::Replay => BackendKind::Replay,
        },
        endpoint: args.endpoint.clone(),
        model_name: args.model.clone(),
        api_key: args.api_key.clone(),
        input_price: args.input_price,
        output_price: args.output_price,
        ..LlmBackendConfig::default()
    };
    backend_cfg.validate()?;

    let cfg = PipelineConfig {
        detection,
        use_lookup: lookup.is_some(),
        lookup,
        prompt,
        backend: backend_cfg,
        concurrency_limit: args.concurrency,
        resample_shots_per_token: args.resample_shots,
    };

    let mut inputs = vec![args.test.as_path(), args.train.as_path()];
    inputs.extend(args.labels.as_deref());
    inputs.extend(args.lookup.as_deref());
    inputs.extend(args.instruction_file.as_deref());
    let config = json!({
        "detection": cfg.detection.source().to_string(),
        "use_lookup": cfg.use_lookup,
        "threshold_bits": args.gate.threshold,
        "min_support": args.gate.min_support,
        "prompt": &cfg.prompt,
        "backend": &cfg.backend,
        "resample_shots_per_token": cfg.resample_shots_per_token,
        "caseless": opts.caseless,
    });
    let mut manifest = start("run", config, &inputs)?;
    manifest.seed = Some(args.seed);
    manifest.instruction = Some(cfg.prompt.instruction.clone());

    let backend: Box<dyn LlmBackend> = match (args.backend, &args.cache) {
        (BackendArg::Replay, Some(path)) => {
            Box::new(CachedBackend::replay(PromptCache::load(path)?))
        }
        (BackendArg::Replay, None) => {
            return Err(Error::Domain("--backend replay needs --cache".into()))
        }
        (BackendArg::Echo, None) => Box::new(EchoBackend),
        (BackendArg::Echo, Some(path)) => Box::new(CachedBackend::new(
            Box::new(EchoBackend),
            PromptCache::open(path)?,
        )),
        (BackendArg::Http, None) => Box::new(HttpBackend::new(&cfg.backend)?),
        (BackendArg::Http, Some(path)) => Box::new(CachedBackend::new(
            Box::new(HttpBackend::new(&cfg.backend)?),
            PromptCache::open(path)?,
        )),
    };

    let result = run_pipeline(&cfg, backend.as_ref(), &test, &train);
    let (run, error, out) = match result {
        Ok(run) => (run, None, args.out.clone()),
        Err(abort) => {
            let mut partial = args.out.clone().into_os_string();
            partial.push(".partial");
            (*abort.partial, Some(abort.error), PathBuf::from(partial))
        }
    };

    let mut calls = String::new();
    for r in &run.records {
        calls.push_str(&serde_json::to_string(r)?);
        calls.push('\n');
    }
    let mut calls_path = out.clone().into_os_string();
    calls_path.push(".calls.jsonl");
    write_file(Path::new(&calls_path), calls.as_bytes())?;
    emit(manifest, &out, &run.output.to_bytes(&test)?)?;

    if let Some(e) = error {
        eprintln!("partial results written to {}", out.display());
        return Err(e);
    }

    println!("tokens: {}", test.token_count());
    println!("flagged: {}", cfg.detection.positives());
    println!("lookup: {}", run.count(PredictionSource::Lookup));
    println!("llm: {}", run.count(PredictionSource::Llm));
    println!("refused: {}", run.count(PredictionSource::Refused));
    println!(
        "cached: {}",
        run.records.iter().filter(|r| r.cached).count()
    );
    let counterfactual = if cfg.resample_shots_per_token {
        None
    } else {
        Some(counterfactual_tokens(&cfg.prompt, &run.shots, &test)?)
    };
    println!(
        "{}",
        estimate_cost(&run.records, &cfg.backend, counterfactual)
    );
    Ok(())
}
