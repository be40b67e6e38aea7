use std::error::Error;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use convcluster::bpe::{display_segments, learn_merges, segment_word, CountedVocab, MergeTable};
use convcluster::cluster::{dbscan, kmeans, DbscanParams, KMeansParams};
use convcluster::corpus::{
    preprocess, profile_and_pad, read_documents, read_records, write_documents, IdentitySegmenter,
    PreprocessOptions, StopwordList, DEFAULT_COVERAGE,
};
use convcluster::embed::{
    read_embeddings, write_embeddings, EmbedderChoice, EmbeddingMatrix, EmbeddingProvider, FileEmbedder,
    HashEmbedder,
};
use convcluster::ingest::{export_jsonl, FetchWindow, Fetcher, PageCredentials, RetryPolicy, SenderRole};
use convcluster::labels::{read_labels_for, write_labels};
use convcluster::metrics::{silhouette_labels, v_measure, NoisePolicy};
use convcluster::numeric::{k_distance_curve, pca_fit_transform, Points, DEFAULT_COMPONENTS};
use convcluster::pipeline::{parse_zone, run_pipeline, sweep, PipelineConfig};
use convcluster::search::{
    grid_search_dbscan_params, kneedle_knee, slope_zone, SlopeZone, DEFAULT_SENSITIVITY, DEFAULT_STEP,
};

type CliResult = Result<(), Box<dyn Error>>;

/// Cluster messenger conversations into chatbot intents.
#[derive(Parser)]
#[command(name = "convcluster", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download page messages for a time window into JSONL.
    Fetch(FetchArgs),
    /// Clean, filter and dedupe a JSONL corpus.
    Preprocess(PreprocessArgs),
    /// Embed a preprocessed corpus into a .emb (or .csv) matrix.
    Embed(EmbedArgs),
    /// Learn BPE merges or segment words with them.
    #[command(subcommand)]
    Bpe(BpeCommand),
    /// Write the sorted k-distance curve.
    Kdist(KdistArgs),
    /// K-Means with k-means++ seeding.
    Kmeans(KmeansArgs),
    /// DBSCAN with fixed eps and MinPts.
    Dbscan(DbscanArgs),
    /// Silhouette and V-measure for a labelling.
    Score(ScoreArgs),
    /// Grid search for DBSCAN eps and MinPts.
    Search(SearchArgs),
    /// Full pipeline from corpus to cluster report.
    Run(RunArgs),
    /// Compare K-Means silhouettes with and without DBSCAN noise.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct FetchArgs {
    #[arg(long)]
    base_url: String,
    #[arg(long)]
    page_id: String,
    /// Page access token.
    #[arg(long, env = "CONVCLUSTER_TOKEN", hide_env_values = true)]
    token: String,
    /// Window start, unix seconds, inclusive.
    #[arg(long)]
    since: i64,
    /// Window end, unix seconds, exclusive.
    #[arg(long)]
    until: i64,
    #[arg(long, default_value_t = 100)]
    page_size: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sender {
    Client,
    Admin,
}

impl From<Sender> for SenderRole {
    fn from(s: Sender) -> Self {
        match s {
            Sender::Client => SenderRole::Client,
            Sender::Admin => SenderRole::Admin,
        }
    }
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Extra stopwords, one per line, added to the built-in list.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Share of sentences the padding length must cover.
    #[arg(long, default_value_t = DEFAULT_COVERAGE)]
    coverage: f64,
    /// Keep only messages from this sender.
    #[arg(long, value_enum)]
    sender: Option<Sender>,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// `hash` or `file:<path>`.
    #[arg(long, default_value = "hash")]
    embedder: EmbedderChoice,
    #[arg(long, default_value_t = 256)]
    dims: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum BpeCommand {
    /// Learn merges from a whitespace-separated word list.
    Learn {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        merges: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Segment words with a merge table.
    Segment {
        #[arg(long)]
        codes: PathBuf,
        words: Vec<String>,
    },
}

#[derive(Args)]
struct EmbInput {
    #[arg(long)]
    emb: PathBuf,
    /// Project to this many principal components first.
    #[arg(long)]
    components: Option<usize>,
}

impl EmbInput {
    fn load(&self) -> Result<(EmbeddingMatrix, Points), Box<dyn Error>> {
        let emb = read_embeddings(&self.emb)?;
        let points = match self.components {
            Some(k) => pca_fit_transform(&emb.to_points(), k)?.1,
            None => emb.to_points(),
        };
        Ok((emb, points))
    }
}

#[derive(Args)]
struct KdistArgs {
    #[command(flatten)]
    input: EmbInput,
    #[arg(long)]
    minpts: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct KmeansArgs {
    #[command(flatten)]
    input: EmbInput,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DbscanArgs {
    #[command(flatten)]
    input: EmbInput,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    minpts: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Noise {
    Own,
    Exclude,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    input: EmbInput,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// How silhouette treats the -1 label.
    #[arg(long, value_enum, default_value = "own")]
    noise: Noise,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    emb: PathBuf,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_COMPONENTS)]
    components: usize,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    step: usize,
    /// Explicit eps zone `lo,hi,n` instead of the slope-zone scan.
    #[arg(long, value_parser = parse_zone)]
    zone: Option<(f64, f64, usize)>,
    /// Slope-zone window; a tenth of the rows when unset.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, default_value_t = 10)]
    candidates: usize,
    /// Cell table CSV; stdout when unset.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Flat `key = value` settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    emb: PathBuf,
    /// Comma-separated eps values.
    #[arg(long, value_delimiter = ',', required = true)]
    eps: Vec<f64>,
    /// Comma-separated MinPts values.
    #[arg(long, value_delimiter = ',', required = true)]
    minpts: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_COMPONENTS)]
    components: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn fetch(args: FetchArgs) -> CliResult {
    let creds = PageCredentials::new(&args.page_id, &args.token, &args.base_url)?;
    let window = FetchWindow::new(args.since, args.until)?;
    let messages = Fetcher::new(RetryPolicy::default()).fetch_conversations(&creds, window, args.page_size)?;
    let n = export_jsonl(&messages, &args.out)?;
    eprintln!("wrote {n} messages to {}", args.out.display());
    Ok(())
}

fn preprocess_cmd(args: PreprocessArgs) -> CliResult {
    let mut stopwords = StopwordList::default();
    if let Some(path) = &args.stopwords {
        stopwords = stopwords.extended(&StopwordList::from_file(path)?);
    }
    let options = PreprocessOptions {
        stopwords,
        sender: args.sender.map(Into::into),
    };
    let records = read_records(&args.input)?;
    let docs = preprocess(&records, &options, &IdentitySegmenter);
    write_documents(&args.out, &docs)?;
    let stats = profile_and_pad(&docs, args.coverage)?;
    println!(
        "{}",
        json!({
            "input": records.len(),
            "documents": docs.len(),
            "padding_length": stats.padding_length,
            "histogram": stats.histogram,
        })
    );
    Ok(())
}

fn embed_cmd(args: EmbedArgs) -> CliResult {
    let docs = read_documents(&args.input)?;
    let provider: Box<dyn EmbeddingProvider> = match &args.embedder {
        EmbedderChoice::Hash => Box::new(HashEmbedder {
            dims: args.dims,
            seed: args.seed,
        }),
        EmbedderChoice::File(path) => Box::new(FileEmbedder::open(path)?),
    };
    let matrix = provider.embed(&docs)?;
    write_embeddings(&matrix, &args.out)?;
    eprintln!("wrote {} x {} to {}", matrix.rows(), matrix.dims(), args.out.display());
    Ok(())
}

fn bpe_cmd(cmd: BpeCommand) -> CliResult {
    match cmd {
        BpeCommand::Learn { input, merges, out } => {
            let text = std::fs::read_to_string(&input)?;
            let vocab = CountedVocab::from_words(text.split_whitespace());
            let (table, learned) = learn_merges(&vocab, merges)?;
            table.write_to(BufWriter::new(File::create(&out)?))?;
            eprintln!("learned {} merges, {} symbols", table.len(), learned.token_inventory().len());
        }
        BpeCommand::Segment { codes, words } => {
            let table = MergeTable::read_from(BufReader::new(File::open(&codes)?))?;
            for word in words {
                println!("{word}\t{}", display_segments(&segment_word(&word, &table)).join(" "));
            }
        }
    }
    Ok(())
}

fn kdist(args: KdistArgs) -> CliResult {
    let (_, points) = args.input.load()?;
    let curve = k_distance_curve(&points, args.minpts)?;
    let mut out = output(args.out.as_deref())?;
    writeln!(out, "index,distance")?;
    for (i, d) in curve.values.iter().enumerate() {
        writeln!(out, "{i},{d}")?;
    }
    out.flush()?;
    if let Some(knee) = kneedle_knee(&curve, DEFAULT_SENSITIVITY)? {
        eprintln!("knee at index {} eps {}", knee.index, knee.y);
    }
    Ok(())
}

fn kmeans_cmd(args: KmeansArgs) -> CliResult {
    let (emb, points) = args.input.load()?;
    let params = KMeansParams {
        max_iter: args.max_iter,
        tol: args.tol,
        ..KMeansParams::new(args.k, args.seed)
    };
    let run = kmeans(&points, params)?;
    write_labels(output(args.out.as_deref())?, emb.doc_ids(), run.assignment.labels())?;
    eprintln!("inertia {} after {} iterations", run.inertia, run.iterations);
    Ok(())
}

fn dbscan_cmd(args: DbscanArgs) -> CliResult {
    let (emb, points) = args.input.load()?;
    let run = dbscan(&points, DbscanParams::new(args.eps, args.minpts)?)?;
    write_labels(output(args.out.as_deref())?, emb.doc_ids(), run.assignment.labels())?;
    eprintln!(
        "{} clusters, {} noise",
        run.assignment.n_clusters(),
        run.assignment.noise_count()
    );
    Ok(())
}

fn score(args: ScoreArgs) -> CliResult {
    let (emb, points) = args.input.load()?;
    let pred = read_labels_for(&args.labels, emb.doc_ids())?;
    let policy = match args.noise {
        Noise::Own => NoisePolicy::OwnCluster,
        Noise::Exclude => NoisePolicy::Exclude,
    };
    let sil = silhouette_labels(&points, &pred, policy).map(|r| r.mean).ok();
    let mut report = json!({ "silhouette_mean": sil });
    if let Some(truth) = &args.truth {
        let truth = read_labels_for(truth, emb.doc_ids())?;
        let v = v_measure(&truth, &pred, args.beta)?;
        report["homogeneity"] = json!(v.homogeneity);
        report["completeness"] = json!(v.completeness);
        report["v_measure"] = json!(v.v);
    }
    println!("{report}");
    Ok(())
}

fn search(args: SearchArgs) -> CliResult {
    let emb = read_embeddings(&args.emb)?;
    let truth = args
        .truth
        .as_deref()
        .map(|p| read_labels_for(p, emb.doc_ids()))
        .transpose()?;
    let zone = match args.zone {
        Some((lo, hi, n)) => SlopeZone::new(lo, hi, n)?,
        None => {
            let (_, reduced) = pca_fit_transform(&emb.to_points(), args.components)?;
            let curve = k_distance_curve(&reduced, args.components + 1)?;
            let window = args.window.unwrap_or((curve.len() / 10).clamp(2, curve.len().saturating_sub(1).max(2)));
            slope_zone(&curve, window, args.candidates)?
        }
    };
    let result = grid_search_dbscan_params(&emb, truth.as_deref(), args.components, args.step, &zone)?;
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    w.write_record(["eps", "MinPts", "v-measure", "silhouette", "average", "n-clusters"])?;
    for c in &result.cells {
        w.write_record([
            c.eps.to_string(),
            c.min_pts.to_string(),
            c.v_measure.map(|v| v.to_string()).unwrap_or_default(),
            c.silhouette.to_string(),
            c.combined.to_string(),
            c.n_clusters.to_string(),
        ])?;
    }
    w.flush()?;
    let best = result.best_cell().map(|c| {
        json!({ "eps": c.eps, "min_pts": c.min_pts, "score": c.combined, "n_clusters": c.n_clusters })
    });
    let record = json!({ "zone": [zone.lo, zone.hi], "best": best });
    if args.out.is_some() {
        println!("{record}");
    } else {
        eprintln!("{record}");
    }
    Ok(())
}

fn run(args: RunArgs) -> CliResult {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    cfg.output_dir = Some(args.out.clone());
    let report = run_pipeline(&args.corpus, &cfg)?;
    println!(
        "{}",
        json!({
            "k": report.k,
            "eps": report.dbscan.eps,
            "min_pts": report.dbscan.min_pts,
            "noise_removed": report.noise_removed,
            "silhouette_original": report.original.silhouette,
            "silhouette_denoised": report.denoised.silhouette,
            "out": args.out,
        })
    );
    Ok(())
}

fn sweep_cmd(args: SweepArgs) -> CliResult {
    let emb = read_embeddings(&args.emb)?;
    let cfg = PipelineConfig {
        n_components: args.components,
        kmeans_seed: args.seed,
        ..PipelineConfig::default()
    };
    let settings: Vec<(f64, usize)> = args
        .eps
        .iter()
        .flat_map(|&e| args.minpts.iter().map(move |&m| (e, m)))
        .collect();
    let rows = sweep(&emb, &settings, &cfg)?;
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    w.write_record(["eps", "MinPts", "n-clusters", "noise", "silhouette-original", "silhouette-denoised"])?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.eps.to_string(),
            r.min_pts.to_string(),
            r.n_clusters.to_string(),
            r.noise.to_string(),
            opt(r.original_silhouette),
            opt(r.denoised_silhouette),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fetch(a) => fetch(a),
        Command::Preprocess(a) => preprocess_cmd(a),
        Command::Embed(a) => embed_cmd(a),
        Command::Bpe(c) => bpe_cmd(c),
        Command::Kdist(a) => kdist(a),
        Command::Kmeans(a) => kmeans_cmd(a),
        Command::Dbscan(a) => dbscan_cmd(a),
        Command::Score(a) => score(a),
        Command::Search(a) => search(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut message = e.to_string();
            let mut source = e.source();
            while let Some(s) = source {
                let text = s.to_string();
                if !message.contains(&text) {
                    message.push_str(": ");
                    message.push_str(&text);
                }
                source = s.source();
            }
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
