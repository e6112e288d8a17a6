//! One function per subcommand. Each resolves its configuration (flags over
//! config file over defaults), performs the work through the library, writes
//! outputs atomically, and emits a run manifest.

use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use expevo::checkpoint::{load_corpus, load_model, save_corpus, save_model, ModelFile};
use expevo::corpus::{read_jsonl, read_jsonl_lossy, Corpus, CorpusConfig, CorpusStats};
use expevo::error::{Error, Result};
use expevo::evaluation::{self, reports, FeatureMode};
use expevo::experience::MhScope;
use expevo::langmodel::KalmanNoise;
use expevo::stochastic::SECONDS_PER_YEAR;
use expevo::synth::{self, Fixture};
use expevo::trainer::{self, TrainConfig};
use expevo::util::write_atomic;

use crate::manifest::ManifestBuilder;

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, ValueEnum)]
pub enum KalmanNoiseArg {
    Literal,
    Aligned,
}

impl From<KalmanNoiseArg> for KalmanNoise {
    fn from(v: KalmanNoiseArg) -> Self {
        match v {
            KalmanNoiseArg::Literal => KalmanNoise::Literal,
            KalmanNoiseArg::Aligned => KalmanNoise::Aligned,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum MhScopeArg {
    Active,
    Full,
}

impl From<MhScopeArg> for MhScope {
    fn from(v: MhScopeArg) -> Self {
        match v {
            MhScopeArg::Active => MhScope::Active,
            MhScopeArg::Full => MhScope::Full,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum FeatureModeArg {
    Pi,
    Raw,
}

impl From<FeatureModeArg> for FeatureMode {
    fn from(v: FeatureModeArg) -> Self {
        match v {
            FeatureModeArg::Pi => FeatureMode::Pi,
            FeatureModeArg::Raw => FeatureMode::Raw,
        }
    }
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct IngestArgs {
    /// JSON-lines review file.
    #[arg(long, short = 'i')]
    pub input: PathBuf,
    /// Corpus checkpoint to write.
    #[arg(long, short = 'o')]
    pub output: PathBuf,
    /// Epoch width in years (e.g. 1.0 or 0.25).
    #[arg(long, default_value_t = 1.0)]
    pub epoch_width: f64,
    /// Keep terms appearing in at least this many documents.
    #[arg(long, default_value_t = 5)]
    pub min_df: usize,
    /// Fold users with fewer reviews than this into the background user
    /// (0 disables folding).
    #[arg(long, default_value_t = 50)]
    pub min_user_reviews: usize,
    /// Drop terms shorter than this many characters.
    #[arg(long, default_value_t = 2)]
    pub min_token_len: usize,
    /// Optional stopword list, one term per line.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Skip malformed lines (reporting them) instead of failing.
    #[arg(long)]
    pub continue_on_error: bool,
}

pub fn ingest(args: IngestArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::new("ingest");
    manifest.input(&args.input);

    let stopwords = match &args.stopwords {
        Some(path) => {
            manifest.input(path);
            std::fs::read_to_string(path)
                .map_err(|e| Error::io(path, e))?
                .lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect()
        }
        None => Vec::new(),
    };
    if args.epoch_width.is_nan() || args.epoch_width <= 0.0 {
        return Err(Error::InvalidArgument("epoch width must be > 0".into()));
    }
    let config = CorpusConfig {
        epoch_width_secs: (args.epoch_width * SECONDS_PER_YEAR).round() as i64,
        min_df: args.min_df,
        min_user_reviews: args.min_user_reviews,
        min_token_len: args.min_token_len,
        stopwords,
    };

    let reader = BufReader::new(open(&args.input)?);
    let raw = if args.continue_on_error {
        let (raw, skipped) = read_jsonl_lossy(reader)?;
        for line in &skipped {
            eprintln!("skipped malformed line {line}");
        }
        raw
    } else {
        read_jsonl(reader)?
    };

    let corpus = Corpus::build(raw, config.clone())?;
    save_corpus(&args.output, &corpus)?;

    let stats = CorpusStats::of(&corpus);
    println!(
        "ingested {} reviews / {} users / {} items / {} epochs; vocabulary {} terms, {} tokens",
        stats.n_reviews, stats.n_users, stats.n_items, stats.n_epochs, stats.vocab_size,
        stats.n_tokens
    );
    println!("wrote {}", args.output.display());
    manifest.config(&config).output(&args.output);
    manifest.write(&args.output)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Optional config-file fields; command-line flags take precedence, then
/// the file, then built-in defaults.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFileConfig {
    z: Option<usize>,
    alpha: Option<f64>,
    gamma: Option<f64>,
    sigma_lm: Option<f64>,
    iters: Option<usize>,
    gibbs_sweeps: Option<usize>,
    mh_fraction: Option<f64>,
    mh_scope: Option<MhScope>,
    kalman_noise: Option<KalmanNoise>,
    seed: Option<u64>,
    holdout_recent: Option<usize>,
    burn_in: Option<usize>,
    early_stop_rel: Option<f64>,
    early_stop_window: Option<usize>,
    threads: Option<usize>,
    validate: Option<bool>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Corpus checkpoint from `ingest`.
    #[arg(long, short = 'c')]
    pub corpus: PathBuf,
    /// Model checkpoint to write.
    #[arg(long, short = 'o')]
    pub output: PathBuf,
    /// Per-iteration log-likelihood CSV (default: `<output>.ll.csv`).
    #[arg(long)]
    pub ll_csv: Option<PathBuf>,
    /// Optional JSON config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of facets.
    #[arg(long)]
    pub z: Option<usize>,
    /// Dirichlet concentration (default 50/Z).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Count-smoothing constant for inferred measurements.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Language-model noise scale.
    #[arg(long)]
    pub sigma_lm: Option<f64>,
    /// Outer iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Gibbs sweeps per outer iteration.
    #[arg(long)]
    pub gibbs_sweeps: Option<usize>,
    /// Fraction of reviews resampled per Metropolis-Hastings sweep.
    #[arg(long)]
    pub mh_fraction: Option<f64>,
    #[arg(long, value_enum)]
    pub mh_scope: Option<MhScopeArg>,
    #[arg(long, value_enum)]
    pub kalman_noise: Option<KalmanNoiseArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Exclude each user's most recent reviews from training.
    #[arg(long)]
    pub holdout_recent: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Re-check count consistency every iteration.
    #[arg(long)]
    pub validate: bool,
}

fn resolve_train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let file: TrainFileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text)?
        }
        None => TrainFileConfig::default(),
    };
    let z = args.z.or(file.z).unwrap_or(5);
    let mut config = TrainConfig::new(z);
    if let Some(v) = args.alpha.or(file.alpha) {
        config.alpha = v;
    }
    if let Some(v) = args.gamma.or(file.gamma) {
        config.gamma = v;
    }
    if let Some(v) = args.sigma_lm.or(file.sigma_lm) {
        config.sigma_lm = v;
    }
    if let Some(v) = args.iters.or(file.iters) {
        config.iterations = v;
    }
    if let Some(v) = args.gibbs_sweeps.or(file.gibbs_sweeps) {
        config.gibbs_sweeps_per_iter = v;
    }
    if let Some(v) = args.mh_fraction.or(file.mh_fraction) {
        config.mh_fraction = v;
    }
    if let Some(v) = args.mh_scope.map(MhScope::from).or(file.mh_scope) {
        config.mh_scope = v;
    }
    if let Some(v) = args.kalman_noise.map(KalmanNoise::from).or(file.kalman_noise) {
        config.kalman_noise = v;
    }
    if let Some(v) = args.seed.or(file.seed) {
        config.seed = v;
    }
    if let Some(v) = args.holdout_recent.or(file.holdout_recent) {
        config.holdout_recent = v;
    }
    if let Some(v) = args.burn_in.or(file.burn_in) {
        config.burn_in = v;
    }
    if let Some(v) = file.early_stop_rel {
        config.early_stop_rel = v;
    }
    if let Some(v) = file.early_stop_window {
        config.early_stop_window = v;
    }
    if let Some(v) = args.threads.or(file.threads) {
        config.threads = v;
    }
    config.validate = args.validate || file.validate.unwrap_or(false);
    Ok(config)
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::new("train");
    manifest.input(&args.corpus);
    if let Some(path) = &args.config {
        manifest.input(path);
    }
    let config = resolve_train_config(&args)?;
    manifest.seed(config.seed).config(&config);

    let corpus = load_corpus(&args.corpus)?;
    let model = trainer::train(&corpus, &config)?;

    // The checkpoint is written against the corpus the model actually saw.
    let mask = trainer::holdout_most_recent(&corpus, config.holdout_recent);
    let train_corpus = if config.holdout_recent > 0 {
        corpus.subset(&mask.iter().map(|m| !m).collect::<Vec<_>>())?
    } else {
        corpus
    };
    save_model(&args.output, &model, &train_corpus)?;

    let ll_path = args
        .ll_csv
        .clone()
        .unwrap_or_else(|| args.output.with_file_name(default_ll_name(&args.output)));
    let mut csv = String::from("iteration,ll\n");
    for (i, ll) in model.ll_history.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", i + 1, ll));
    }
    write_atomic(&ll_path, csv.as_bytes())?;

    println!(
        "trained {} iterations on {} reviews; final LL {:.4}, last acceptance {:.3}",
        model.iteration,
        train_corpus.n_reviews(),
        model.ll_history.last().copied().unwrap_or(f64::NAN),
        model.acceptance_history.last().copied().unwrap_or(0.0),
    );
    println!("wrote {}", args.output.display());
    println!("wrote {}", ll_path.display());
    manifest.output(&args.output).output(&ll_path);
    manifest.write(&args.output)?;
    Ok(())
}

fn default_ll_name(output: &Path) -> String {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "model".into());
    format!("{stem}.ll.csv")
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct PredictArgs {
    /// Model checkpoint from `train`.
    #[arg(long, short = 'm')]
    pub model: PathBuf,
    /// Corpus checkpoint holding both training and held-out reviews.
    #[arg(long, short = 'c')]
    pub corpus: PathBuf,
    /// Directory for predictions.csv and metrics.json.
    #[arg(long, short = 'o')]
    pub output_dir: PathBuf,
    /// Most recent reviews per user treated as the test set; must match the
    /// holdout the model was trained with.
    #[arg(long, default_value_t = 3)]
    pub holdout_recent: usize,
    /// Ridge penalty.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value = "pi")]
    pub feature_mode: FeatureModeArg,
}

pub fn predict(args: PredictArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::new("predict");
    manifest.input(&args.model).input(&args.corpus);

    let model = load_model(&args.model)?;
    let corpus = load_corpus(&args.corpus)?;
    check_model_corpus(&model, &corpus)?;
    if model.config.holdout_recent != args.holdout_recent {
        eprintln!(
            "note: model was trained with holdout_recent = {}, predicting with {}",
            model.config.holdout_recent, args.holdout_recent
        );
    }

    let report = evaluation::rating_prediction(
        &model,
        &corpus,
        args.holdout_recent,
        args.lambda,
        args.feature_mode.into(),
    )?;

    std::fs::create_dir_all(&args.output_dir).map_err(|e| Error::io(&args.output_dir, e))?;
    let pred_path = args.output_dir.join("predictions.csv");
    let mut csv = String::from("review_id,y_true,y_pred\n");
    for row in &report.rows {
        csv.push_str(&format!("{},{},{}\n", row.review, row.y_true, row.y_pred));
    }
    write_atomic(&pred_path, csv.as_bytes())?;

    #[derive(Serialize)]
    struct Metrics<'a> {
        mse: f64,
        bias_only_mse: f64,
        n_train: usize,
        n_test: usize,
        lambda: f64,
        feature_mode: &'a FeatureMode,
    }
    let mode: FeatureMode = args.feature_mode.into();
    let metrics_path = args.output_dir.join("metrics.json");
    write_atomic(
        &metrics_path,
        &serde_json::to_vec_pretty(&Metrics {
            mse: report.mse,
            bias_only_mse: report.bias_only_mse,
            n_train: report.n_train,
            n_test: report.n_test,
            lambda: args.lambda,
            feature_mode: &mode,
        })?,
    )?;

    println!(
        "predicted {} held-out reviews: mse {:.4} (bias-only {:.4})",
        report.n_test, report.mse, report.bias_only_mse
    );
    println!("wrote {}", pred_path.display());
    println!("wrote {}", metrics_path.display());
    manifest.output(&pred_path).output(&metrics_path);
    manifest.write(&args.output_dir)?;
    Ok(())
}

fn check_model_corpus(model: &ModelFile, corpus: &Corpus) -> Result<()> {
    let sig = expevo::checkpoint::CorpusSignature::of(corpus);
    if sig != model.corpus_sig {
        return Err(Error::Incompatible(
            "model checkpoint does not match this corpus".into(),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// rank-users
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct RankUsersArgs {
    #[arg(long, short = 'm')]
    pub model: PathBuf,
    /// CSV of `user_id,relevant` rows; the file order is the reference
    /// ranking. `relevant` is 0/1 or false/true.
    #[arg(long, short = 'l')]
    pub labels: PathBuf,
    /// JSON report to write.
    #[arg(long, short = 'o')]
    pub output: PathBuf,
    /// Ranked-list depth for NDCG.
    #[arg(long, default_value_t = 100)]
    pub top_k: usize,
}

fn parse_labels(text: &str) -> Result<Vec<(String, bool)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.eq_ignore_ascii_case("user_id,relevant")) {
            continue;
        }
        let (id, rel) = line.rsplit_once(',').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: "expected `user_id,relevant`".into(),
        })?;
        let rel = match rel.trim() {
            "1" | "true" | "TRUE" | "True" => true,
            "0" | "false" | "FALSE" | "False" => false,
            other => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("unrecognized relevance {other:?}"),
                })
            }
        };
        out.push((id.trim().to_string(), rel));
    }
    Ok(out)
}

pub fn rank_users(args: RankUsersArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::new("rank-users");
    manifest.input(&args.model).input(&args.labels);

    let model = load_model(&args.model)?;
    let text = std::fs::read_to_string(&args.labels).map_err(|e| Error::io(&args.labels, e))?;
    let labels = parse_labels(&text)?;
    let report = evaluation::rank_users(&model, &labels, args.top_k)?;

    write_atomic(&args.output, &serde_json::to_vec_pretty(&report)?)?;
    println!(
        "ranked {} labeled users: ndcg {:.4}, kendall tau distance {:.4}",
        report.n_labeled, report.ndcg, report.kendall_tau_distance
    );
    println!("wrote {}", args.output.display());
    manifest.output(&args.output);
    manifest.write(&args.output)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct SynthArgs {
    /// Directory for reviews.jsonl and ground_truth.json.
    #[arg(long, short = 'o')]
    pub output_dir: PathBuf,
    /// One of the built-in fixtures.
    #[arg(long, value_enum, conflicts_with = "config")]
    pub fixture: Option<FixtureArg>,
    /// Full generator config as JSON (see SynthConfig).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the generator seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum FixtureArg {
    S1,
    S2,
    S3,
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::new("synth");
    let mut config = match (&args.fixture, &args.config) {
        (Some(f), None) => match f {
            FixtureArg::S1 => Fixture::S1.config(),
            FixtureArg::S2 => Fixture::S2.config(),
            FixtureArg::S3 => Fixture::S3.config(),
        },
        (None, Some(path)) => {
            manifest.input(path);
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text)?
        }
        _ => {
            return Err(Error::InvalidArgument(
                "pass exactly one of --fixture or --config".into(),
            ))
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    manifest.seed(config.seed).config(&config);

    let data = synth::generate(&config)?;

    #[derive(Serialize)]
    struct Line<'a> {
        user_id: &'a str,
        item_id: &'a str,
        timestamp: i64,
        rating: f64,
        text: &'a str,
    }
    let mut jsonl = String::new();
    for r in &data.reviews {
        jsonl.push_str(&serde_json::to_string(&Line {
            user_id: &r.user_id,
            item_id: &r.item_id,
            timestamp: r.timestamp,
            rating: r.rating,
            text: &r.text,
        })?);
        jsonl.push('\n');
    }
    std::fs::create_dir_all(&args.output_dir).map_err(|e| Error::io(&args.output_dir, e))?;
    let reviews_path = args.output_dir.join("reviews.jsonl");
    write_atomic(&reviews_path, jsonl.as_bytes())?;
    let truth_path = args.output_dir.join("ground_truth.json");
    write_atomic(&truth_path, &serde_json::to_vec(&data.truth)?)?;

    println!(
        "generated {} reviews / {} users / {} epochs",
        data.corpus.n_reviews(),
        data.corpus.n_users(),
        data.corpus.n_epochs
    );
    println!("wrote {}", reviews_path.display());
    println!("wrote {}", truth_path.display());
    manifest.output(&reviews_path).output(&truth_path);
    manifest.write(&args.output_dir)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct ReportArgs {
    #[arg(long, short = 'm')]
    pub model: PathBuf,
    /// Directory for the report bundle.
    #[arg(long, short = 'o')]
    pub output_dir: PathBuf,
    /// Epoch for the word-frequency table (default: last trained epoch).
    #[arg(long)]
    pub epoch: Option<usize>,
    /// Words per top-word list.
    #[arg(long, default_value_t = 20)]
    pub top_k: usize,
}

pub fn report(args: ReportArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::new("report");
    manifest.input(&args.model);

    let model = load_model(&args.model)?;
    let opts = reports::ReportOptions {
        epoch: args.epoch,
        top_k: args.top_k,
    };
    let files = reports::export_reports(&model, &opts)?;

    std::fs::create_dir_all(&args.output_dir).map_err(|e| Error::io(&args.output_dir, e))?;
    for file in &files {
        let path = args.output_dir.join(&file.name);
        write_atomic(&path, &file.bytes)?;
        println!("wrote {}", path.display());
        manifest.output(&path);
    }
    manifest.write(&args.output_dir)?;
    Ok(())
}
