//! The pipeline commands. Each reads only the artifacts it declares, writes
//! its outputs under the workspace root and returns a manifest.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use repvec_core::classifier::{
    argmax, encode_labels, random_search, train_classifier, FeedForwardClassifier, LabeledData, OutputMode,
};
use repvec_core::container::Persist;
use repvec_core::corpus::{
    build_concept_features, build_documents, featurize_split, generate_synthetic_corpus, ingest_notes,
    read_concepts, read_documents, read_labels, write_documents, FeatureMatrix, LabelTable, Normalizer,
    Partition, PlaceholderMode, SynthConfig, SyntheticTask,
};
use repvec_core::doc2vec::{train_dbow, DEFAULT_INFER_EPOCHS};
use repvec_core::eval::{approx_randomization_test, cohens_kappa, roc_auc, weighted_f_score, DEFAULT_ITERATIONS};
use repvec_core::interpret::{
    chi_square_feature_ranking, frequency_correlation, pipeline_sensitivity, reconstruction_profile, ClassSelection,
    InstanceMode,
};
use repvec_core::presets;
use repvec_core::projection::{project, ProjectionConfig, TsneConfig};
use repvec_core::sdae::pretrain_stack;

use crate::artifacts::{
    ensure_parent, read_split, read_vocabulary, require, write_split, write_text, write_vocabulary, Predictions,
    Workspace,
};
use crate::config::Config;
use crate::error::{CliError, Result};
use crate::inputs::{load_features, load_partition, load_sdae, LoadOptions, PartitionInputs};
use crate::manifest::Manifest;
use crate::resolve::{
    classifier_config, classifier_echo, doc2vec_config, feature_set, input_kind, sdae_config, search_space,
    FeatureSet, InputKind, Representation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Preprocess,
    Split,
    Featurize,
    PretrainSdae,
    TrainDoc2vec,
    TrainClassifier,
    Search,
    Evaluate,
    Interpret,
    Project,
    Significance,
    Synth,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Preprocess => "preprocess",
            Command::Split => "split",
            Command::Featurize => "featurize",
            Command::PretrainSdae => "pretrain-sdae",
            Command::TrainDoc2vec => "train-doc2vec",
            Command::TrainClassifier => "train-classifier",
            Command::Search => "search",
            Command::Evaluate => "evaluate",
            Command::Interpret => "interpret",
            Command::Project => "project",
            Command::Significance => "significance",
            Command::Synth => "synth",
        }
    }
}

/// Resolved configuration, workspace and seed for one invocation.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: Config,
    pub workspace: Workspace,
    pub seed: u64,
}

impl Context {
    /// `seed` and `out` override the corresponding configuration keys.
    pub fn new(mut config: Config, seed: Option<u64>, out: Option<PathBuf>) -> Result<Context> {
        if let Some(s) = seed {
            config.set("seed", s)?;
        }
        let seed = config.parse_or("seed", 0u64)?;
        let root = match out {
            Some(dir) => dir,
            None => config
                .path("out")
                .ok_or_else(|| CliError::config("no output directory: set `out` or pass --out"))?,
        };
        Ok(Context {
            config,
            workspace: Workspace::new(root),
            seed,
        })
    }

    pub fn load(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<Context> {
        let config = Config::load(config_path).map_err(|e| match e {
            CliError::Io { path, source } => CliError::config(format!("cannot read {}: {source}", path.display())),
            other => other,
        })?;
        Context::new(config, seed, out)
    }
}

/// Runs one command and writes its manifest.
pub fn run_command(command: Command, ctx: &Context) -> Result<Manifest> {
    let mut m = Manifest::new(command.name());
    m.setting("seed", ctx.seed);
    match command {
        Command::Preprocess => preprocess(ctx, &mut m)?,
        Command::Split => split(ctx, &mut m)?,
        Command::Featurize => featurize(ctx, &mut m)?,
        Command::PretrainSdae => pretrain_sdae(ctx, &mut m)?,
        Command::TrainDoc2vec => train_doc2vec(ctx, &mut m)?,
        Command::TrainClassifier => train(ctx, &mut m, false)?,
        Command::Search => train(ctx, &mut m, true)?,
        Command::Evaluate => evaluate(ctx, &mut m)?,
        Command::Interpret => interpret(ctx, &mut m)?,
        Command::Project => project_cmd(ctx, &mut m)?,
        Command::Significance => significance(ctx, &mut m)?,
        Command::Synth => synth(ctx, &mut m)?,
    }
    m.write(&ctx.workspace.root)?;
    Ok(m)
}

fn input(m: &mut Manifest, path: PathBuf) -> PathBuf {
    m.input(&path);
    path
}

fn preprocess(ctx: &Context, m: &mut Manifest) -> Result<()> {
    let cfg = &ctx.config;
    let notes = input(m, cfg.existing_path("notes")?);
    let excluded: BTreeSet<String> = cfg
        .list::<String>("exclude_categories")?
        .unwrap_or_else(|| vec!["discharge_report".to_owned()])
        .into_iter()
        .collect();
    let mode = match cfg.get("placeholders").unwrap_or("replace") {
        "replace" => PlaceholderMode::Replace,
        "remove" => PlaceholderMode::Remove,
        other => return Err(CliError::config(format!("placeholders = {other:?}: expected replace or remove"))),
    };
    let corpus = ingest_notes(&notes, &excluded.iter().cloned().collect::<HashSet<_>>())?;
    let docs = build_documents(&corpus, &Normalizer::new(mode), None);
    let out = ctx.workspace.documents();
    ensure_parent(&out)?;
    write_documents(&out, &docs)?;
    m.setting("exclude_categories", excluded.into_iter().collect::<Vec<_>>().join(","));
    m.setting("placeholders", cfg.get("placeholders").unwrap_or("replace"));
    m.output(&out);
    Ok(())
}

fn split(ctx: &Context, m: &mut Manifest) -> Result<()> {
    let docs = read_documents(&input(m, require(ctx.workspace.documents(), "preprocess")?))?;
    let ids: Vec<String> = docs.into_iter().map(|d| d.patient_id).collect();
    let split = repvec_core::corpus::split_dataset(&ids, ctx.seed)?;
    let out = ctx.workspace.split();
    write_split(&out, &split)?;
    m.output(&out);
    Ok(())
}

fn write_matrix(path: &Path, matrix: &FeatureMatrix, m: &mut Manifest) -> Result<()> {
    ensure_parent(path)?;
    matrix.write_tsv(path)?;
    m.output(path);
    Ok(())
}

fn featurize(ctx: &Context, m: &mut Manifest) -> Result<()> {
    let cfg = &ctx.config;
    let ws = &ctx.workspace;
    let fs = feature_set(cfg)?;
    let min_frequency: u64 = cfg.parse_or("min_frequency", 5)?;
    m.setting("feature_set", fs.as_str());
    m.setting("min_frequency", min_frequency);
    let concepts = match fs {
        FeatureSet::Bocui => Some(
            cfg.existing_path("concepts")
                .map_err(|_| CliError::config("feature set bocui needs an existing concepts file (key `concepts`)"))?,
        ),
        FeatureSet::Bow => None,
    };
    let split = read_split(&input(m, require(ws.split(), "split")?))?;
    let (vocab, tfidf, train, validation, test) = match concepts {
        None => {
            let docs = read_documents(&input(m, require(ws.documents(), "preprocess")?))?;
            let f = featurize_split(&docs, &split, min_frequency)?;
            (f.vocabulary, f.tfidf, f.train, f.validation, f.test)
        }
        Some(path) => {
            let annotations = read_concepts(&input(m, path))?;
            let heldout: Vec<String> = split.validation.iter().chain(&split.test).cloned().collect();
            let f = build_concept_features(&annotations, &split.train, &heldout, min_frequency)?;
            let validation = f.heldout.select(&split.validation)?;
            let test = f.heldout.select(&split.test)?;
            (f.vocabulary, f.tfidf, f.train, validation, test)
        }
    };
    let vpath = ws.vocabulary(fs.as_str());
    write_vocabulary(&vpath, &vocab, &tfidf)?;
    m.output(&vpath);
    for (part, matrix) in [(Partition::Train, &train), (Partition::Validation, &validation), (Partition::Test, &test)] {
        write_matrix(&ws.features(fs.as_str(), part), matrix, m)?;
    }
    m.setting("vocabulary_size", vocab.len());
    Ok(())
}

fn pretrain_sdae(ctx: &Context, m: &mut Manifest) -> Result<()> {
    let fs = feature_set(&ctx.config)?;
    m.setting("feature_set", fs.as_str());
    let (config, echo) = sdae_config(&ctx.config, fs, ctx.seed)?;
    m.settings_from(&echo);
    let train = load_features(&ctx.workspace, fs, Partition::Train, m)?;
    let model = pretrain_stack(&config, &train.rows)?;
    let path = ctx.workspace.sdae(fs.as_str());
    ensure_parent(&path)?;
    model.save(&path)?;
    m.output(&path);
    let mut trace = String::from("layer\tepoch\tloss\n");
    for (l, losses) in model.loss_trace.iter().enumerate() {
        for (e, loss) in losses.iter().enumerate() {
            let _ = writeln!(trace, "{}\t{}\t{loss:?}", l + 1, e + 1);
        }
    }
    let tpath = ctx.workspace.sdae_loss(fs.as_str());
    write_text(&tpath, &trace)?;
    m.output(&tpath);
    Ok(())
}

fn train_doc2vec(ctx: &Context, m: &mut Manifest) -> Result<()> {
    if feature_set(&ctx.config)? != FeatureSet::Bow {
        return Err(CliError::config("paragraph vectors are trained on words; set feature_set = bow"));
    }
    let (config, echo) = doc2vec_config(&ctx.config, ctx.seed)?;
    m.settings_from(&echo);
    let split = read_split(&input(m, require(ctx.workspace.split(), "split")?))?;
    let docs = read_documents(&input(m, require(ctx.workspace.documents(), "preprocess")?))?;
    let train_ids: HashSet<&str> = split.train.iter().map(String::as_str).collect();
    let train_docs: Vec<_> = docs.into_iter().filter(|d| train_ids.contains(d.patient_id.as_str())).collect();
    let model = train_dbow(&train_docs, &config)?;
    let path = ctx.workspace.doc2vec();
    ensure_parent(&path)?;
    model.save(&path)?;
    m.output(&path);
    Ok(())
}

fn load_labels(ctx: &Context, m: &mut Manifest) -> Result<LabelTable> {
    Ok(read_labels(&input(m, ctx.config.existing_path("labels")?))?)
}

fn load_options(ctx: &Context) -> Result<LoadOptions> {
    Ok(LoadOptions {
        infer_epochs: ctx.config.parse_or("doc2vec.infer_epochs", DEFAULT_INFER_EPOCHS)?,
        seed: ctx.seed,
    })
}

fn class_indices(labels: &[String], classes: &[String]) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|l| {
            classes
                .iter()
                .position(|c| c == l)
                .ok_or_else(|| CliError::Data(format!("label {l:?} does not occur in the training split")))
        })
        .collect()
}

/// Index of the positive class for two-class tasks.
fn positive_class(cfg: &Config, classes: &[String]) -> Option<usize> {
    if classes.len() != 2 {
        return None;
    }
    let wanted = cfg.get("positive_class").unwrap_or("1");
    Some(classes.iter().position(|c| c == wanted).unwrap_or(1))
}

struct TaskData {
    task: String,
    kind: InputKind,
    train: PartitionInputs,
    train_labels: Vec<String>,
    validation: PartitionInputs,
    validation_labels: Vec<String>,
}

fn task_data(ctx: &Context, m: &mut Manifest) -> Result<TaskData> {
    let cfg = &ctx.config;
    let task = cfg.require("task")?.to_owned();
    let kind = input_kind(cfg)?;
    m.setting("task", &task);
    m.setting("input", kind.tag());
    let labels = load_labels(ctx, m)?;
    let options = load_options(ctx)?;
    let (train, train_labels) =
        load_partition(&ctx.workspace, &kind, Partition::Train, &options, m)?.labeled(&labels, &task)?;
    let (validation, validation_labels) =
        load_partition(&ctx.workspace, &kind, Partition::Validation, &options, m)?.labeled(&labels, &task)?;
    Ok(TaskData {
        task,
        kind,
        train,
        train_labels,
        validation,
        validation_labels,
    })
}

fn train(ctx: &Context, m: &mut Manifest, search: bool) -> Result<()> {
    let data = task_data(ctx, m)?;
    let (classes, y_train) = encode_labels(&data.train_labels);
    let y_val = class_indices(&data.validation_labels, &classes)?;
    let (base, echo) = classifier_config(&ctx.config, &data.kind, ctx.seed)?;
    let train_set = LabeledData {
        features: data.train.features(),
        labels: &y_train,
    };
    let val_set = LabeledData {
        features: data.validation.features(),
        labels: &y_val,
    };
    let val = (!data.validation.is_empty()).then_some(&val_set);
    let tag = data.kind.tag();
    let model = if search {
        let val = val.ok_or_else(|| CliError::Data("random search needs a non-empty validation split".into()))?;
        let (space, space_echo) = search_space(&ctx.config, ctx.seed)?;
        m.settings_from(&space_echo);
        let positive = positive_class(&ctx.config, &classes);
        let metric = |labels: &[usize], probs: &[Vec<f64>]| -> f64 {
            match positive {
                Some(p) => {
                    let scores: Vec<f64> = probs.iter().map(|v| v[p]).collect();
                    let truth: Vec<bool> = labels.iter().map(|&l| l == p).collect();
                    roc_auc(&scores, &truth).map(|r| r.auc).unwrap_or(f64::NAN)
                }
                None => {
                    let predicted: Vec<usize> = probs.iter().map(|v| argmax(v)).collect();
                    weighted_f_score(&predicted, labels).unwrap_or(f64::NAN)
                }
            }
        };
        let result = random_search(&space, &base, &train_set, val, &classes, metric)?;
        let mut table = String::from("index\thidden_layers\twidth\tactivation\tscore\n");
        for (i, c) in result.candidates.iter().enumerate() {
            let _ = writeln!(table, "{i}\t{}\t{}\t{}\t{:?}", c.hidden_layers, c.width, c.activation, c.score);
        }
        let path = ctx.workspace.search(&data.task, &tag);
        write_text(&path, &table)?;
        m.output(&path);
        m.settings_from(&classifier_echo(&result.best_config));
        m.setting("search.best_index", result.best_index);
        m.setting("search.best_score", format!("{:?}", result.best_score()));
        result.best_model
    } else {
        m.settings_from(&echo);
        train_classifier(&train_set, val, &classes, &base)?
    };
    let path = ctx.workspace.classifier(&data.task, &tag);
    ensure_parent(&path)?;
    model.save(&path)?;
    m.output(&path);
    m.setting("classifier.best_epoch", model.best_epoch);
    Ok(())
}

fn load_classifier(ctx: &Context, task: &str, kind: &InputKind, m: &mut Manifest) -> Result<FeedForwardClassifier> {
    let path = input(m, require(ctx.workspace.classifier(task, &kind.tag()), "train-classifier")?);
    Ok(FeedForwardClassifier::load(&path)?)
}

fn evaluate(ctx: &Context, m: &mut Manifest) -> Result<()> {
    let cfg = &ctx.config;
    let task = cfg.require("task")?.to_owned();
    let kind = input_kind(cfg)?;
    m.setting("task", &task);
    m.setting("input", kind.tag());
    let labels = load_labels(ctx, m)?;
    let model = load_classifier(ctx, &task, &kind, m)?;
    let (test, test_labels) =
        load_partition(&ctx.workspace, &kind, Partition::Test, &load_options(ctx)?, m)?.labeled(&labels, &task)?;
    if test.is_empty() {
        return Err(CliError::Data(format!("no labelled test patients for task {task:?}")));
    }
    let probabilities = model.predict_all(test.features())?;
    let predicted: Vec<String> = probabilities.iter().map(|p| model.classes[argmax(p)].clone()).collect();
    let preds = Predictions {
        classes: model.classes.clone(),
        patient_ids: test.patient_ids.clone(),
        labels: test_labels.clone(),
        predicted: predicted.clone(),
        probabilities,
    };
    let tag = kind.tag();
    let ppath = ctx.workspace.predictions(&task, &tag);
    preds.write(&ppath)?;
    m.output(&ppath);

    let mut report = format!("n\t{}\n", test.len());
    if let Some(p) = positive_class(cfg, &model.classes) {
        let scores: Vec<f64> = preds.probabilities.iter().map(|v| v[p]).collect();
        let truth: Vec<bool> = test_labels.iter().map(|l| *l == model.classes[p]).collect();
        match roc_auc(&scores, &truth) {
            Ok(r) => {
                let _ = writeln!(report, "auc\t{:?}", r.auc);
            }
            Err(_) => report.push_str("auc\tNA\n"),
        }
    }
    let _ = writeln!(report, "weighted_f\t{:?}", weighted_f_score(&predicted, &test_labels)?);
    let correct = predicted.iter().zip(&test_labels).filter(|(a, b)| a == b).count();
    let _ = writeln!(report, "accuracy\t{:?}", correct as f64 / test.len() as f64);
    let mpath = ctx.workspace.metrics(&task, &tag);
    write_text(&mpath, &report)?;
    m.output(&mpath);
    Ok(())
}

fn partition_key(cfg: &Config, key: &str) -> Result<Partition> {
    let v = cfg.get(key).unwrap_or("test");
    Partition::parse(v).ok_or_else(|| CliError::config(format!("{key} = {v:?}: expected train, validation or test")))
}

fn interpret(ctx: &Context, m: &mut Manifest) -> Result<()> {
    let cfg = &ctx.config;
    let ws = &ctx.workspace;
    let kind = input_kind(cfg)?;
    let fs = kind.feature_set;
    m.setting("input", kind.tag());
    let (vocab, _) = read_vocabulary(&input(m, require(ws.vocabulary(fs.as_str()), "featurize")?))?;
    match kind.representation {
        Representation::Sdae => {
            let sdae = load_sdae(ws, fs, m)?;
            let train = load_features(ws, fs, Partition::Train, m)?;
            let profile = reconstruction_profile(&sdae, &train.rows, &vocab)?;
            let mut table = String::from("term\tfrequency\tmse\n");
            for i in 0..profile.terms.len() {
                let _ = writeln!(table, "{}\t{}\t{:?}", profile.terms[i], profile.frequencies[i], profile.errors[i]);
            }
            let rpath = ws.reconstruction(fs.as_str());
            write_text(&rpath, &table)?;
            m.output(&rpath);
            let c = frequency_correlation(&profile)?;
            let text = format!(
                "statistic\tvalue\tp_value\nspearman\t{:?}\t{:?}\nkendall_tau_b\t{:?}\t{:?}\nn\t{}\tNA\n",
                c.spearman, c.spearman_p, c.kendall, c.kendall_p, c.n
            );
            let cpath = ws.correlation(fs.as_str());
            write_text(&cpath, &text)?;
            m.output(&cpath);

            if let Some(task) = cfg.get("task") {
                m.setting("task", task);
                let clf = load_classifier(ctx, task, &kind, m)?;
                let part = partition_key(cfg, "interpret.split")?;
                m.setting("interpret.split", part.as_str());
                let instances = load_features(ws, fs, part, m)?;
                let output = match cfg.get("interpret.output").unwrap_or("probability") {
                    "probability" => OutputMode::Probability,
                    "logit" => OutputMode::Logit,
                    other => {
                        return Err(CliError::config(format!(
                            "interpret.output = {other:?}: expected probability or logit"
                        )))
                    }
                };
                m.setting("interpret.output", cfg.get("interpret.output").unwrap_or("probability"));
                let (mode, rows, suffix) = match cfg.get("interpret.instance") {
                    None => (InstanceMode::Aggregate, instances.rows.clone(), String::new()),
                    Some(pid) => {
                        let i = instances.position(pid).ok_or_else(|| {
                            CliError::config(format!("interpret.instance {pid:?} is not in the {} split", part.as_str()))
                        })?;
                        let class = match cfg.get("interpret.class").unwrap_or("predicted") {
                            "predicted" => ClassSelection::Predicted,
                            "true" => {
                                let labels = load_labels(ctx, m)?;
                                let label = labels
                                    .task(task)
                                    .and_then(|t| t.get(pid))
                                    .ok_or_else(|| CliError::Data(format!("{pid} has no label for {task}")))?;
                                ClassSelection::Class(class_indices(std::slice::from_ref(label), &clf.classes)?[0])
                            }
                            other => {
                                return Err(CliError::config(format!(
                                    "interpret.class = {other:?}: expected predicted or true"
                                )))
                            }
                        };
                        m.setting("interpret.instance", pid);
                        m.setting("interpret.class", cfg.get("interpret.class").unwrap_or("predicted"));
                        (
                            InstanceMode::Single { instance: 0, class },
                            vec![instances.rows[i].clone()],
                            format!("-{pid}"),
                        )
                    }
                };
                let result = pipeline_sensitivity(&sdae, &clf, &rows, &vocab, None, mode, output)?;
                let base = ws.sensitivity(task, &kind.tag());
                let spath = base.with_file_name(format!(
                    "{}{suffix}.tsv",
                    base.file_stem().and_then(|s| s.to_str()).unwrap_or("sensitivity")
                ));
                ensure_parent(&spath)?;
                result.report.write_tsv(&spath)?;
                m.output(&spath);
            }
        }
        Representation::Sparse => {
            let task = cfg.require("task")?;
            m.setting("task", task);
            let labels = load_labels(ctx, m)?;
            let train = load_features(ws, fs, Partition::Train, m)?;
            let inputs = PartitionInputs {
                patient_ids: train.patient_ids,
                data: crate::inputs::InputData::Sparse(train.rows),
            };
            let (kept, y) = inputs.labeled(&labels, task)?;
            let (_, idx) = encode_labels(&y);
            let crate::inputs::InputData::Sparse(rows) = &kept.data else {
                unreachable!("sparse inputs stay sparse")
            };
            let ranking = chi_square_feature_ranking(rows, &idx, &vocab)?;
            let mut table = String::from("rank\tterm\tchi2\n");
            for (r, e) in ranking.iter().enumerate() {
                let _ = writeln!(table, "{}\t{}\t{:?}", r + 1, e.term, e.statistic);
            }
            let path = ws.chi_square(task, fs.as_str());
            write_text(&path, &table)?;
            m.output(&path);
        }
        other => {
            return Err(CliError::config(format!(
                "interpret supports the sdae and sparse representations, not {other}"
            )))
        }
    }
    Ok(())
}

fn project_cmd(ctx: &Context, m: &mut Manifest) -> Result<()> {
    let cfg = &ctx.config;
    let kind = input_kind(cfg)?;
    let tag = kind.tag();
    let part = partition_key(cfg, "project.split")?;
    let defaults = ProjectionConfig::default();
    let config = ProjectionConfig {
        pca_dims: cfg.parse_or("project.pca_dims", defaults.pca_dims)?,
        tsne: TsneConfig {
            perplexity: cfg.parse_or(
                "project.perplexity",
                presets::projection_perplexity(&tag).unwrap_or(defaults.tsne.perplexity),
            )?,
            iterations: cfg.parse_or("project.iterations", defaults.tsne.iterations)?,
            seed: ctx.seed,
            ..defaults.tsne
        },
    };
    m.setting("input", &tag);
    m.setting("project.split", part.as_str());
    m.setting("project.pca_dims", config.pca_dims);
    m.setting("project.perplexity", config.tsne.perplexity);
    m.setting("project.iterations", config.tsne.iterations);
    let inputs = load_partition(&ctx.workspace, &kind, part, &load_options(ctx)?, m)?;
    let rows = inputs.dense_rows();
    let matrix = repvec_core::linalg::Matrix::from_rows(&rows)?;
    let (pca, tsne) = project(&matrix, &config)?;
    let colors = match cfg.get("project.color_task") {
        Some(task) => {
            m.setting("project.color_task", task);
            let labels = load_labels(ctx, m)?;
            let t = labels
                .task(task)
                .ok_or_else(|| CliError::config(format!("labels file has no task {task:?}")))?;
            inputs
                .patient_ids
                .iter()
                .map(|id| t.get(id).cloned().unwrap_or_else(|| "NA".into()))
                .collect()
        }
        None => vec!["NA".to_owned(); inputs.len()],
    };
    let mut table = String::from("patient_id\tx\ty\tcolor_label\n");
    for (i, id) in inputs.patient_ids.iter().enumerate() {
        let _ = writeln!(
            table,
            "{id}\t{:?}\t{:?}\t{}",
            tsne.embedding.get(i, 0),
            tsne.embedding.get(i, 1),
            colors[i]
        );
    }
    let path = ctx.workspace.projection(&tag);
    write_text(&path, &table)?;
    m.output(&path);
    m.setting("pca.explained_variance", format!("{:?}", pca.explained_variance_ratio.iter().sum::<f64>()));
    if let Some((it, kl)) = tsne.kl_trace.last() {
        m.setting("tsne.final_kl", format!("{kl:?} at iteration {it}"));
    }
    Ok(())
}

fn significance(ctx: &Context, m: &mut Manifest) -> Result<()> {
    let cfg = &ctx.config;
    let task = cfg.require("task")?.to_owned();
    let a_tag = cfg.require("significance.system_a")?.to_owned();
    let b_tag = cfg.require("significance.system_b")?.to_owned();
    let iterations: usize = cfg.parse_or("significance.iterations", DEFAULT_ITERATIONS)?;
    let alpha: f64 = cfg.parse_or("significance.alpha", 0.05)?;
    let hypotheses: usize = cfg.parse_or("significance.hypotheses", 1)?;
    for (k, v) in [
        ("task", task.clone()),
        ("significance.system_a", a_tag.clone()),
        ("significance.system_b", b_tag.clone()),
        ("significance.iterations", iterations.to_string()),
        ("significance.alpha", alpha.to_string()),
        ("significance.hypotheses", hypotheses.to_string()),
    ] {
        m.setting(k, v);
    }
    let a = Predictions::read(&input(m, require(ctx.workspace.predictions(&task, &a_tag), "evaluate")?))?;
    let b = Predictions::read(&input(m, require(ctx.workspace.predictions(&task, &b_tag), "evaluate")?))?;
    if a.patient_ids != b.patient_ids || a.labels != b.labels || a.classes != b.classes {
        return Err(CliError::Data(format!(
            "predictions of {a_tag} and {b_tag} do not cover the same labelled patients and classes"
        )));
    }
    let result = match positive_class(cfg, &a.classes) {
        Some(p) => {
            let truth: Vec<bool> = a.labels.iter().map(|l| *l == a.classes[p]).collect();
            let sa: Vec<f64> = a.probabilities.iter().map(|v| v[p]).collect();
            let sb: Vec<f64> = b.probabilities.iter().map(|v| v[p]).collect();
            approx_randomization_test(
                "auc",
                &sa,
                &sb,
                |s| roc_auc(s, &truth).ok().map(|r| r.auc),
                iterations,
                ctx.seed,
            )?
        }
        None => approx_randomization_test(
            "weighted_f",
            &a.predicted,
            &b.predicted,
            |p| weighted_f_score(p, &a.labels).ok(),
            iterations,
            ctx.seed,
        )?,
    }
    .with_bonferroni(alpha, hypotheses)?;
    let decision = if result.significant { "significant" } else { "not_significant" };
    let text = format!(
        "task\tsystem_a\tsystem_b\tstatistic\tp\tcorrected_decision\n{task}\t{a_tag}\t{b_tag}\t{}\t{:?}\t{decision}\n",
        result.statistic, result.p_value
    );
    let path = ctx.workspace.significance(&task, &a_tag, &b_tag);
    write_text(&path, &text)?;
    m.output(&path);
    m.setting("significance.observed", format!("{:?}", result.observed));
    m.setting("significance.threshold", format!("{:?}", result.threshold));
    m.setting("significance.undefined_iterations", result.undefined_iterations);

    let kappa = match cohens_kappa(&a.predicted, &b.predicted) {
        Ok(k) => format!("{k:?}"),
        Err(_) => "NA".to_owned(),
    };
    let kpath = ctx.workspace.agreement(&task, &a_tag, &b_tag);
    write_text(&kpath, &format!("system_a\tsystem_b\tkappa\n{a_tag}\t{b_tag}\t{kappa}\n"))?;
    m.output(&kpath);
    Ok(())
}

fn pair(cfg: &Config, key: &str, default: (usize, usize)) -> Result<(usize, usize)> {
    match cfg.list::<usize>(key)? {
        None => Ok(default),
        Some(v) if v.len() == 2 => Ok((v[0], v[1])),
        Some(_) => Err(CliError::config(format!("{key} needs two comma-separated values"))),
    }
}

fn synthetic_task(cfg: &Config, name: &str) -> Result<SyntheticTask> {
    let mut task = SyntheticTask::lexical(name, 0.0, &[]);
    let mut has_rate = false;
    for (field, value) in cfg.task_keys(name) {
        let bad = |e: String| CliError::config(format!("synth.task.{name}.{field} = {value:?}: {e}"));
        match field {
            "rate" => {
                task.positive_rate = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
                has_rate = true;
            }
            "markers" => task.markers = value.split_whitespace().map(str::to_owned).collect(),
            "injection" => {
                task.injection_probability = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?
            }
            "noise" => {
                task.noise_probability = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?
            }
            "per_document" => {
                task.markers_per_document = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?
            }
            "copies" => task.marker_copies = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            _ => unreachable!("field names are validated when the configuration is parsed"),
        }
    }
    if !has_rate {
        return Err(CliError::config(format!("synthetic task {name} needs synth.task.{name}.rate")));
    }
    Ok(task)
}

fn synth(ctx: &Context, m: &mut Manifest) -> Result<()> {
    let cfg = &ctx.config;
    let d = SynthConfig::default();
    let tasks = cfg
        .list::<String>("synth.tasks")?
        .unwrap_or_default()
        .iter()
        .map(|name| synthetic_task(cfg, name))
        .collect::<Result<Vec<_>>>()?;
    let config = SynthConfig {
        n_patients: cfg.parse_or("synth.n_patients", d.n_patients)?,
        vocab_size: cfg.parse_or("synth.vocab_size", d.vocab_size)?,
        zipf_exponent: cfg.parse_or("synth.zipf_exponent", d.zipf_exponent)?,
        notes_per_patient: pair(cfg, "synth.notes_per_patient", d.notes_per_patient)?,
        tokens_per_note: pair(cfg, "synth.tokens_per_note", d.tokens_per_note)?,
        numeric_rate: cfg.parse_or("synth.numeric_rate", d.numeric_rate)?,
        discharge_rate: cfg.parse_or("synth.discharge_rate", d.discharge_rate)?,
        concepts: cfg.parse_or("synth.concepts", d.concepts)?,
        tasks,
        seed: ctx.seed,
    };
    let corpus = generate_synthetic_corpus(&config).map_err(|e| match e {
        repvec_core::Error::InvalidArgument(msg) => CliError::config(msg),
        other => other.into(),
    })?;
    let root = &ctx.workspace.root;
    corpus.write(root)?;
    m.setting("synth.n_patients", config.n_patients);
    m.setting("synth.vocab_size", config.vocab_size);
    m.setting("synth.zipf_exponent", config.zipf_exponent);
    for (k, v) in cfg.entries().filter(|(k, _)| k.starts_with("synth.task")) {
        m.setting(k, v);
    }
    for name in ["notes.tsv", "labels.tsv", "concepts.tsv"] {
        let p = root.join(name);
        if p.exists() && (name != "concepts.tsv" || config.concepts) {
            m.output(&p);
        }
    }
    Ok(())
}
