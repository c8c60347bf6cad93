use std::path::{Path, PathBuf};

use scholar_intent::corpus::{self, BowCorpus, Preprocessor, TokenizedDocument};
use scholar_intent::embed::{self, EmbeddingModel};
use scholar_intent::eval::{self, probe_corpus, sequence_metrics, MetricRow, RankedQuery, RankingReport};
use scholar_intent::fusion::{self, WordTopicMap};
use scholar_intent::intent::{self, IntentConfig, IntentModel, InteractionEvent};
use scholar_intent::lda::{self, LdaModel};
use scholar_intent::sessions::{self, Dynamics};
use serde_json::json;

use crate::config::{Paths, PipelineConfig};
use crate::error::{CliError, CliResult, Kind};
use crate::manifest::Stage;
use crate::report;
use crate::*;

struct Ctx {
    config: PipelineConfig,
    seed: u64,
    force: bool,
    paths: Paths,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        self.paths.resolve(p)
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let paths = Paths { root: cli.data_root.clone() };
    let config = match &cli.config {
        Some(p) => PipelineConfig::load(&paths.resolve(p))?,
        None => PipelineConfig::default(),
    };
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    let ctx = Ctx { config, seed, force: cli.force, paths };
    match cli.command {
        Command::Preprocess(a) => preprocess(ctx, a),
        Command::LdaTrain(a) => lda_train(ctx, a),
        Command::CoherenceSweep(a) => coherence_sweep(ctx, a),
        Command::EmbedTrain(a) => embed_train(ctx, a),
        Command::Fuse(a) => fuse(ctx, a),
        Command::AssignTopics(a) => assign_topics(ctx, a),
        Command::IntentTrain(a) => intent_train(ctx, a),
        Command::IntentEval(a) => intent_eval(ctx, a),
        Command::BaselineEval(a) => baseline_eval(ctx, a),
        Command::RankEval(a) => rank_eval(ctx, a),
        Command::Simulate(a) => simulate(ctx, a),
        Command::Report(a) => make_report(ctx, a),
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn read_docs(stage: &mut Stage, path: &Path) -> CliResult<Vec<TokenizedDocument>> {
    let bytes = stage.read(path)?;
    Ok(corpus::read_tokenized_jsonl(bytes.as_slice())?)
}

fn read_events(stage: &mut Stage, path: &Path) -> CliResult<Vec<InteractionEvent>> {
    let bytes = stage.read(path)?;
    Ok(sessions::ingest(bytes.as_slice())?)
}

fn rows_csv(rows: &[MetricRow]) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    eval::write_rows_csv(rows, &mut buf)?;
    Ok(buf)
}

fn apply_lda_opts(ctx: &mut Ctx, opts: LdaOpts) {
    let lda = &mut ctx.config.lda;
    if opts.alpha.is_some() {
        lda.alpha = opts.alpha;
    }
    set(&mut lda.beta, opts.beta);
    set(&mut lda.iterations, opts.iterations);
    set(&mut lda.burn_in, opts.burn_in);
    set(&mut lda.min_count, opts.min_count);
}

fn preprocess(mut ctx: Ctx, a: PreprocessArgs) -> CliResult<()> {
    let cfg = &mut ctx.config.preprocess;
    set(&mut cfg.min_token_len, a.min_token_len);
    if a.no_stem {
        cfg.stem = false;
    }
    let (input, output) = (ctx.path(&a.input), ctx.path(&a.output));
    let mut stage = Stage::start("preprocess", &ctx.config.preprocess, ctx.seed, ctx.force, &[&output])?;
    let raw = corpus::read_titles(stage.read(&input)?.as_slice())?;
    let pre = Preprocessor::new(ctx.config.preprocess.clone());
    let docs: Vec<TokenizedDocument> = raw.iter().map(|d| pre.preprocess(d)).collect();
    stage.lap("tokenize");
    let mut buf = Vec::new();
    corpus::write_tokenized_jsonl(&docs, &mut buf)?;
    stage.write(&output, &buf)?;
    stage.summary = json!({
        "documents": docs.len(),
        "empty_documents": docs.iter().filter(|d| d.is_empty()).count(),
    });
    stage.finish(&output)
}

fn lda_train(mut ctx: Ctx, a: LdaTrainArgs) -> CliResult<()> {
    set(&mut ctx.config.lda.k, a.k);
    apply_lda_opts(&mut ctx, a.lda);
    let config = ctx.config.lda.to_config(ctx.seed);
    config.validate()?;
    let (input, output) = (ctx.path(&a.corpus), ctx.path(&a.output));
    let mut stage = Stage::start("lda-train", &ctx.config.lda, ctx.seed, ctx.force, &[&output])?;
    let docs = read_docs(&mut stage, &input)?;
    let bow = BowCorpus::build(&docs, ctx.config.lda.min_count)?;
    let state = lda::train(&bow, &config)?;
    stage.lap("gibbs");
    let model = LdaModel::from_state(&state, &bow.dictionary);
    stage.write(&output, model.to_json()?.as_bytes())?;
    stage.summary = json!({
        "vocabulary": bow.vocab_size(),
        "log_likelihood": state.log_likelihood(),
    });
    stage.finish(&output)
}

fn coherence_sweep(mut ctx: Ctx, a: CoherenceArgs) -> CliResult<()> {
    set(&mut ctx.config.coherence.candidates, a.k);
    set(&mut ctx.config.coherence.top_n, a.top_n);
    apply_lda_opts(&mut ctx, a.lda);
    let template = ctx.config.lda.to_config(ctx.seed);
    let (input, output) = (ctx.path(&a.corpus), ctx.path(&a.output));
    let settings = json!({ "lda": ctx.config.lda, "coherence": ctx.config.coherence });
    let mut stage = Stage::start("coherence-sweep", &settings, ctx.seed, ctx.force, &[&output])?;
    let docs = read_docs(&mut stage, &input)?;
    let bow = BowCorpus::build(&docs, ctx.config.lda.min_count)?;
    let cfg = &ctx.config.coherence;
    let selection = lda::select_k(&bow, &cfg.candidates, &template, cfg.top_n)?;
    stage.lap("sweep");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "mean_coherence"])?;
    for (k, score) in &selection.scores {
        w.write_record([k.to_string(), score.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::new(Kind::Failure, e.to_string()))?;
    stage.write(&output, &bytes)?;
    println!("best k = {}", selection.best_k);
    stage.summary = json!({ "best_k": selection.best_k });
    stage.finish(&output)
}

fn embed_train(mut ctx: Ctx, a: EmbedArgs) -> CliResult<()> {
    let cfg = &mut ctx.config.embed;
    set(&mut cfg.dim, a.dim);
    set(&mut cfg.window, a.window);
    set(&mut cfg.min_count, a.min_count);
    set(&mut cfg.epochs, a.epochs);
    set(&mut cfg.learning_rate, a.learning_rate);
    cfg.seed = ctx.seed;
    let (input, output) = (ctx.path(&a.corpus), ctx.path(&a.output));
    let vectors = a.vectors_csv.as_deref().map(|p| ctx.path(p));
    let mut outputs = vec![output.as_path()];
    outputs.extend(vectors.as_deref());
    let mut stage = Stage::start("embed-train", &ctx.config.embed, ctx.seed, ctx.force, &outputs)?;
    let docs = read_docs(&mut stage, &input)?;
    let trained = embed::train(&docs, &ctx.config.embed)?;
    stage.lap("skip-gram");
    stage.write(&output, trained.model.to_json()?.as_bytes())?;
    if let Some(path) = &vectors {
        let mut buf = Vec::new();
        trained.model.write_csv(&mut buf)?;
        stage.write(path, &buf)?;
    }
    stage.summary = json!({
        "vocabulary": trained.model.vocab_size(),
        "epoch_losses": trained.epoch_losses,
    });
    stage.finish(&output)
}

fn fuse(mut ctx: Ctx, a: FuseArgs) -> CliResult<()> {
    let cfg = &mut ctx.config.fusion;
    set(&mut cfg.seeds_per_topic, a.seeds_per_topic);
    set(&mut cfg.neighbors_per_seed, a.neighbors);
    set(&mut cfg.similarity_threshold, a.threshold);
    let (lda_path, emb_path, output) = (ctx.path(&a.lda), ctx.path(&a.embedding), ctx.path(&a.output));
    let mut stage = Stage::start("fuse", &ctx.config.fusion, ctx.seed, ctx.force, &[&output])?;
    let model = LdaModel::from_json(&stage.read_string(&lda_path)?)?;
    let embedding = EmbeddingModel::from_json(&stage.read_string(&emb_path)?)?;
    let map = fusion::build_word_topic_map(&model.tau()?, &model.dictionary, &embedding, &ctx.config.fusion)?;
    stage.lap("fuse");
    stage.write(&output, map.to_json()?.as_bytes())?;
    stage.summary = json!({ "words": map.len(), "k": map.k() });
    stage.finish(&output)
}

fn assign_topics(mut ctx: Ctx, a: AssignArgs) -> CliResult<()> {
    set(&mut ctx.config.probe.folds, a.folds);
    set(&mut ctx.config.lda.min_count, a.min_count);
    ctx.config.probe.seed = ctx.seed;
    let (corpus_path, output) = (ctx.path(&a.corpus), ctx.path(&a.output));
    let report = a.report.as_deref().map(|p| ctx.path(p));
    let mut outputs = vec![output.as_path()];
    outputs.extend(report.as_deref());
    let pipeline = if a.lda_only { "lda" } else { "hybrid" };
    let settings = json!({ "pipeline": pipeline, "probe": ctx.config.probe, "min_count": ctx.config.lda.min_count });
    let mut stage = Stage::start("assign-topics", &settings, ctx.seed, ctx.force, &outputs)?;
    let docs = read_docs(&mut stage, &corpus_path)?;
    let map = match (&a.map, &a.lda) {
        (Some(m), _) => WordTopicMap::from_json(&stage.read_string(&ctx.path(m))?)?,
        (None, Some(l)) => {
            let model = LdaModel::from_json(&stage.read_string(&ctx.path(l))?)?;
            WordTopicMap::from_lda(&model.tau()?, &model.dictionary)
        }
        (None, None) => return Err(CliError::new(Kind::InvalidConfig, "either --map or --lda-only --lda is required")),
    };
    let assignments = fusion::assign_corpus(&docs, &map);
    stage.lap("vote");
    let mut buf = Vec::new();
    fusion::write_assignments_csv(&assignments, &mut buf)?;
    stage.write(&output, &buf)?;
    let unassigned = assignments.iter().filter(|x| x.topic.is_none()).count();
    let mut summary = json!({ "documents": assignments.len(), "unassigned": unassigned });
    if let Some(path) = &report {
        let bow = BowCorpus::build(&docs, ctx.config.lda.min_count)?;
        let labels: Vec<Option<usize>> = assignments.iter().map(|x| x.topic).collect();
        let probe = probe_corpus(&bow, &labels, map.k(), &ctx.config.probe)?;
        stage.lap("probe");
        let split = format!("cv{}", ctx.config.probe.folds);
        stage.write(path, &rows_csv(&probe.rows(&split, pipeline))?)?;
        summary["f1_micro"] = json!(probe.f1_micro);
        summary["f1_macro"] = json!(probe.f1_macro);
    }
    stage.summary = summary;
    stage.finish(&output)
}

fn apply_intent_opts(cfg: &mut IntentConfig, o: IntentOpts) {
    set(&mut cfg.lookback, o.lookback);
    set(&mut cfg.train.hidden, o.hidden);
    set(&mut cfg.train.epochs, o.epochs);
    set(&mut cfg.train.batch, o.batch);
    set(&mut cfg.train.learning_rate, o.learning_rate);
    set(&mut cfg.train_fraction, o.train_fraction);
    if o.use_liked {
        cfg.schema.use_liked = true;
    }
}

fn intent_train(mut ctx: Ctx, a: IntentTrainArgs) -> CliResult<()> {
    set(&mut ctx.config.intent.k, a.k);
    apply_intent_opts(&mut ctx.config.intent.model, a.intent);
    ctx.config.intent.model.train.seed = ctx.seed;
    let (input, output) = (ctx.path(&a.events), ctx.path(&a.output));
    let mut stage = Stage::start("intent-train", &ctx.config.intent, ctx.seed, ctx.force, &[&output])?;
    let events = read_events(&mut stage, &input)?;
    let cfg = &ctx.config.intent;
    let data = intent::build_dataset(&events, cfg.k, &cfg.model)?;
    if data.train.is_empty() {
        return Err(CliError::new(Kind::InvalidConfig, "no training windows; log too short for the look-back"));
    }
    let trained = intent::train(&data, &cfg.model)?;
    stage.lap("train");
    stage.write(&output, trained.model.to_json()?.as_bytes())?;
    stage.summary = json!({
        "train_windows": data.train.len(),
        "final_loss": trained.epoch_losses.last(),
    });
    stage.finish(&output)
}

fn intent_eval(mut ctx: Ctx, a: IntentEvalArgs) -> CliResult<()> {
    set(&mut ctx.config.intent.model.train_fraction, a.train_fraction);
    let (events_path, model_path, report) = (ctx.path(&a.events), ctx.path(&a.model), ctx.path(&a.report));
    let settings = json!({ "train_fraction": ctx.config.intent.model.train_fraction });
    let mut stage = Stage::start("intent-eval", &settings, ctx.seed, ctx.force, &[&report])?;
    let model = IntentModel::from_json(&stage.read_string(&model_path)?)?;
    let events = read_events(&mut stage, &events_path)?;
    let cfg = IntentConfig {
        lookback: model.lookback,
        schema: model.schema,
        ..ctx.config.intent.model.clone()
    };
    let data = intent::build_dataset_with(&events, model.k, &cfg, Some(&model.normalization))?;
    let dists: Vec<Vec<f64>> = data.test.iter().map(|c| model.distribution(&c.window.inputs)).collect();
    let truth: Vec<usize> = data.test.iter().map(|c| c.window.target).collect();
    let metrics = sequence_metrics(&dists, &truth)?;
    stage.lap("evaluate");
    stage.write(&report, &rows_csv(&metrics.rows("test", "lstm"))?)?;
    stage.summary = json!(metrics);
    stage.finish(&report)
}

fn baseline_eval(mut ctx: Ctx, a: BaselineArgs) -> CliResult<()> {
    set(&mut ctx.config.intent.k, a.k);
    set(&mut ctx.config.intent.model.lookback, a.lookback);
    set(&mut ctx.config.intent.model.train_fraction, a.train_fraction);
    set(&mut ctx.config.baseline.fpm_max_len, a.fpm_max_len);
    let (events_path, report) = (ctx.path(&a.events), ctx.path(&a.report));
    let settings = json!({
        "k": ctx.config.intent.k,
        "lookback": ctx.config.intent.model.lookback,
        "train_fraction": ctx.config.intent.model.train_fraction,
        "fpm_max_len": ctx.config.baseline.fpm_max_len,
    });
    let mut stage = Stage::start("baseline-eval", &settings, ctx.seed, ctx.force, &[&report])?;
    let events = read_events(&mut stage, &events_path)?;
    let k = ctx.config.intent.k;
    let data = intent::build_dataset(&events, k, &ctx.config.intent.model)?;
    let truth: Vec<usize> = data.test.iter().map(|c| c.window.target).collect();
    let markov = intent::markov_baseline(&data.train_sequences, k)?;
    let fpm = intent::fpm_baseline(&data.train_sequences, k, ctx.config.baseline.fpm_max_len)?;
    let markov_dists: Vec<Vec<f64>> = data
        .test
        .iter()
        .map(|c| markov.distribution(*c.history.last().expect("history covers the look-back")))
        .collect();
    let fpm_dists: Vec<Vec<f64>> = data.test.iter().map(|c| fpm.distribution(&c.history)).collect();
    let m = sequence_metrics(&markov_dists, &truth)?;
    let f = sequence_metrics(&fpm_dists, &truth)?;
    stage.lap("evaluate");
    let mut rows = m.rows("test", "markov");
    rows.extend(f.rows("test", "fpm"));
    stage.write(&report, &rows_csv(&rows)?)?;
    stage.summary = json!({ "markov": m, "fpm": f });
    stage.finish(&report)
}

fn rank_eval(mut ctx: Ctx, a: RankArgs) -> CliResult<()> {
    set(&mut ctx.config.rank.k, a.k);
    let (queries_path, report) = (ctx.path(&a.queries), ctx.path(&a.report));
    let settings = json!({ "k": ctx.config.rank.k, "pipeline": a.pipeline });
    let mut stage = Stage::start("rank-eval", &settings, ctx.seed, ctx.force, &[&report])?;
    let text = stage.read_string(&queries_path)?;
    let mut queries = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        match serde_json::from_str::<RankedQuery>(line) {
            Ok(q) => queries.push(q),
            Err(e) => bad.push(scholar_intent::error::LineError { line: i + 1, message: e.to_string() }),
        }
    }
    if !bad.is_empty() {
        return Err(scholar_intent::Error::Malformed(bad).into());
    }
    let ranking = RankingReport::evaluate(&queries, ctx.config.rank.k)?;
    stage.write(&report, &rows_csv(&ranking.rows("test", &a.pipeline))?)?;
    stage.summary = json!(ranking);
    stage.finish(&report)
}

fn simulate(mut ctx: Ctx, a: SimulateArgs) -> CliResult<()> {
    let cfg = &mut ctx.config.simulate;
    set(&mut cfg.num_users, a.users);
    set(&mut cfg.num_items, a.items);
    set(&mut cfg.num_topics, a.topics);
    set(&mut cfg.events_per_user, a.events_per_user);
    set(&mut cfg.session_gap_secs, a.session_gap_secs);
    match a.dynamics {
        Some(DynamicsKind::Sticky) => {
            cfg.dynamics = Dynamics::Sticky { stay_prob: a.stay_prob.unwrap_or(0.7) };
        }
        Some(DynamicsKind::SecondOrder) => {
            cfg.dynamics = Dynamics::SecondOrder { switch_prob: a.switch_prob.unwrap_or(0.0) };
        }
        None => match &mut cfg.dynamics {
            Dynamics::Sticky { stay_prob } => set(stay_prob, a.stay_prob),
            Dynamics::SecondOrder { switch_prob } => set(switch_prob, a.switch_prob),
            Dynamics::Chain { .. } => {}
        },
    }
    cfg.seed = ctx.seed;
    let output = ctx.path(&a.output);
    let mut stage = Stage::start("simulate", &ctx.config.simulate, ctx.seed, ctx.force, &[&output])?;
    let events = sessions::simulate(&ctx.config.simulate)?;
    stage.lap("simulate");
    let mut buf = Vec::new();
    intent::write_events_jsonl(&events, &mut buf)?;
    stage.write(&output, &buf)?;
    stage.summary = json!({ "events": events.len() });
    stage.finish(&output)
}

fn make_report(ctx: Ctx, a: ReportArgs) -> CliResult<()> {
    let output = ctx.path(&a.output);
    let inputs: Vec<PathBuf> = a.inputs.iter().map(|p| ctx.path(p)).collect();
    let mut stage = Stage::start("report", &json!({}), ctx.seed, ctx.force, &[&output])?;
    let mut rows = Vec::new();
    for path in &inputs {
        let bytes = stage.read(path)?;
        rows.extend(
            eval::read_rows_csv(bytes.as_slice())
                .map_err(|e| CliError::new(Kind::Schema, format!("{}: {e}", path.display())))?,
        );
    }
    let table = report::merge(&rows);
    let bytes = match output.extension().and_then(|e| e.to_str()) {
        Some("md") => table.to_markdown().into_bytes(),
        Some("json") => {
            let mut t = serde_json::to_string_pretty(&table)?;
            t.push('\n');
            t.into_bytes()
        }
        _ => table.to_csv()?,
    };
    stage.write(&output, &bytes)?;
    stage.finish(&output)
}
