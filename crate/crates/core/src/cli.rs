//! The `bws` command-line tool.
//!
//! Machine-readable output goes to files or standard output, summaries and
//! diagnostics to standard error. Exit status is 0 on success, 1 for invalid
//! input or usage, and 2 when a file cannot be read or written.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::agreement::{self, CurveParams};
use crate::error::{Error, Result};
use crate::io;
use crate::model::{Term, TupleSet};
use crate::reliability::{self, Sampling};
use crate::scoring::{self, Strictness};
use crate::service::{self, ScoreEntry, ServiceConfig};
use crate::simulator::{self, LatentDistribution, SimConfig};
use crate::stats::{self, BoundMethod, RankVector};
use crate::tuplegen;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "bws", version, about = "Best-worst scaling studies: design, scoring and reliability")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate 4-tuples from a term list
    Generate(GenerateArgs),
    /// Check a tuple design against the balance criteria
    Verify(VerifyArgs),
    /// Score terms from best-worst responses
    Score(ScoreArgs),
    /// Rank/score table for plotting a lexicon
    Plotdata(PlotdataArgs),
    /// Reproducibility of scores under resampling of responses
    #[command(subcommand)]
    Reliability(ReliabilityCommand),
    /// Agreement as a function of score difference
    #[command(subcommand)]
    Agreement(AgreementCommand),
    /// Simulate a study with known latent scores
    Simulate(SimulateArgs),
    /// Find the noise level giving a target majority agreement
    Calibrate(CalibrateArgs),
    /// Correlations and binomial bounds
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Run the annotation service
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Terms file: one term per line, or `id,text` rows when it ends in .csv or starts with that header
    #[arg(long)]
    terms: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    multiplier: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    tuples: PathBuf,
    /// Terms expected in the design; defaults to those appearing in it
    #[arg(long)]
    terms: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScoreFormat {
    Tsv,
    Json,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    tuples: PathBuf,
    #[arg(long)]
    responses: PathBuf,
    /// Label terms by text instead of id
    #[arg(long)]
    terms: Option<PathBuf>,
    /// Skip unscorable terms and responses to unknown tuples instead of failing
    #[arg(long)]
    permissive: bool,
    #[arg(long, value_enum, default_value_t = ScoreFormat::Tsv)]
    format: ScoreFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PlotdataArgs {
    #[arg(long)]
    lexicon: PathBuf,
    /// Terms file, when the lexicon is labelled by text
    #[arg(long)]
    terms: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StudyInput {
    #[arg(long)]
    tuples: PathBuf,
    #[arg(long)]
    responses: PathBuf,
}

#[derive(Subcommand, Debug)]
enum ReliabilityCommand {
    /// Correlate scores from random halves of each tuple's responses
    SplitHalf {
        #[command(flatten)]
        input: StudyInput,
        #[arg(long, default_value_t = reliability::DEFAULT_SPLIT_ITERATIONS)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Correlate scores from k responses per tuple with the full-data scores
    Subsample {
        #[command(flatten)]
        input: StudyInput,
        #[arg(long, default_value_t = 10)]
        k_max: usize,
        #[arg(long, default_value_t = reliability::DEFAULT_REPETITIONS)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = SamplingArg::Nested)]
        sampling: SamplingArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SamplingArg {
    Nested,
    Independent,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Wilson,
    ClopperPearson,
}

impl From<MethodArg> for BoundMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Wilson => BoundMethod::Wilson,
            MethodArg::ClopperPearson => BoundMethod::ClopperPearson,
        }
    }
}

#[derive(Subcommand, Debug)]
enum AgreementCommand {
    /// Bin pairwise agreement by score difference
    Curve {
        #[command(flatten)]
        input: StudyInput,
        #[arg(long)]
        lexicon: PathBuf,
        /// Terms file, when the lexicon is labelled by text
        #[arg(long)]
        terms: Option<PathBuf>,
        #[arg(long, default_value_t = 0.01)]
        halfwidth: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long, default_value_t = 0.999)]
        confidence: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::Wilson)]
        method: MethodArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Least perceptible difference of a curve
    Lpd {
        #[arg(long)]
        curve: PathBuf,
        /// Ignore bins with fewer implied comparisons. Defaults to the
        /// smallest count that could clear chance at --confidence.
        #[arg(long)]
        min_annotations: Option<u64>,
        #[arg(long, default_value_t = 0.999)]
        confidence: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::Wilson)]
        method: MethodArg,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LatentArg {
    Uniform,
    Gaussian,
}

#[derive(Args, Debug)]
struct SimArgs {
    #[arg(long, default_value_t = 300)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    annotators: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = LatentArg::Uniform)]
    latent: LatentArg,
    /// Standard deviation of gaussian latent scores
    #[arg(long, default_value_t = 0.5)]
    latent_sd: f64,
}

impl SimArgs {
    fn config(&self, sigma: f64) -> SimConfig {
        let mut c = SimConfig::new(self.n, sigma, self.annotators, self.seed);
        if let LatentArg::Gaussian = self.latent {
            c.latent = LatentDistribution::Gaussian { sd: self.latent_sd };
        }
        c
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, default_value_t = 0.80)]
    target: f64,
}

#[derive(Args, Debug)]
struct LexiconPair {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Terms file, when the lexicons are labelled by text
    #[arg(long)]
    terms: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum StatsCommand {
    /// Rank correlation of two lexicons over the same terms
    Spearman(LexiconPair),
    /// Linear correlation of two lexicons over the same terms
    Pearson(LexiconPair),
    /// One-sided lower confidence bound of a binomial proportion
    Binom {
        #[arg(long)]
        successes: u64,
        #[arg(long)]
        trials: u64,
        #[arg(long, default_value_t = 0.999)]
        confidence: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::Wilson)]
        method: MethodArg,
    },
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    #[arg(long)]
    data_dir: PathBuf,
    /// Directory of built UI assets to serve at /
    #[arg(long)]
    ui_dir: Option<PathBuf>,
    /// Seconds before an unanswered assignment returns to the pool
    #[arg(long, default_value_t = service::DEFAULT_EXPIRY.as_secs())]
    expiry_secs: u64,
}

/// Runs the tool on the process arguments and returns the exit status.
pub fn run() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    run_with(std::env::args_os())
}

pub fn run_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                EXIT_IO
            } else {
                EXIT_INVALID
            }
        }
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => io::write_file(p, bytes),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::io(Path::new("<stdout>"), e))
        }
    }
}

fn load_optional_terms(path: Option<&Path>) -> Result<Option<Vec<Term>>> {
    path.map(io::load_terms).transpose()
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Generate(a) => generate(a),
        Command::Verify(a) => verify(a),
        Command::Score(a) => score(a),
        Command::Plotdata(a) => {
            let terms = load_optional_terms(a.terms.as_deref())?;
            let lexicon = io::read_lexicon(&a.lexicon, terms.as_deref())?;
            let rows = scoring::export_rank_plot(&lexicon)?;
            emit(a.out.as_deref(), &io::rank_plot_to_csv(&rows))
        }
        Command::Reliability(c) => reliability_cmd(c),
        Command::Agreement(c) => agreement_cmd(c),
        Command::Simulate(a) => simulate(a),
        Command::Calibrate(a) => {
            let c = simulator::calibrate_sigma(a.target, &a.sim.config(1.0))?;
            eprintln!("target {} reached {:.4}", c.target, c.achieved);
            emit(None, format!("sigma\t{}\nagreement\t{}\n", c.sigma, c.achieved).as_bytes())
        }
        Command::Stats(c) => stats_cmd(c),
        Command::Serve(a) => serve(a),
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let terms = io::load_terms(&a.terms)?;
    let tuples = tuplegen::generate_tuples(&terms, a.multiplier, a.seed)?;
    io::write_tuples(&a.out, &tuples)?;
    let report = tuplegen::verify_design(&tuples, &terms);
    eprintln!("{} terms, {} tuples", terms.len(), tuples.len());
    eprint!("{report}");
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<()> {
    let set = io::read_tuples(&a.tuples)?;
    let terms = match a.terms {
        Some(p) => io::load_terms(&p)?,
        None => set
            .term_ids()
            .into_iter()
            .map(|id| Term::new(id.as_str(), id.as_str()))
            .collect::<Result<_>>()?,
    };
    let report = tuplegen::verify_design(set.tuples(), &terms);
    emit(None, report.to_string().as_bytes())?;
    if report.all_passed() {
        Ok(())
    } else {
        Err(Error::invalid("design fails one or more criteria"))
    }
}

fn read_study(input: &StudyInput, permissive: bool) -> Result<(TupleSet, Vec<crate::model::Response>)> {
    let set = io::read_tuples(&input.tuples)?;
    let checked = io::read_responses_checked(&input.responses, &set, permissive)?;
    for s in &checked.skipped {
        log::warn!("skipped response on line {} for unknown tuple {}", s.line, s.tuple_id);
    }
    if !checked.skipped.is_empty() {
        eprintln!("skipped {} responses to unknown tuples", checked.skipped.len());
    }
    Ok((set, checked.responses))
}

/// Score entries labelled by term text when `terms` is given, else by id.
pub fn score_entries(lexicon: &crate::model::ScoredLexicon, terms: Option<&[Term]>) -> Result<Vec<ScoreEntry>> {
    let texts: Option<std::collections::HashMap<&str, &str>> =
        terms.map(|ts| ts.iter().map(|t| (t.id.as_str(), t.text.as_str())).collect());
    lexicon
        .entries()
        .iter()
        .map(|e| {
            let text = match &texts {
                Some(m) => m
                    .get(e.term_id.as_str())
                    .ok_or_else(|| Error::invalid(format!("term {} missing from the terms list", e.term_id)))?
                    .to_string(),
                None => e.term_id.to_string(),
            };
            Ok(ScoreEntry {
                term_id: e.term_id.clone(),
                text,
                score: e.score,
                rank: e.rank,
            })
        })
        .collect()
}

fn score(a: ScoreArgs) -> Result<()> {
    let input = StudyInput {
        tuples: a.tuples,
        responses: a.responses,
    };
    let (set, responses) = read_study(&input, a.permissive)?;
    let mode = if a.permissive { Strictness::Permissive } else { Strictness::Strict };
    let scores = scoring::compute_scores(&set, &responses, mode)?;
    if !scores.unscored.is_empty() {
        eprintln!("{} terms never appeared in an answered tuple and were left out", scores.unscored.len());
    }
    let terms = load_optional_terms(a.terms.as_deref())?;
    let bytes = match a.format {
        ScoreFormat::Tsv => io::lexicon_to_tsv(&scores.lexicon, terms.as_deref())?.into_bytes(),
        ScoreFormat::Json => {
            let entries = score_entries(&scores.lexicon, terms.as_deref())?;
            let mut v = serde_json::to_vec_pretty(&entries).map_err(|e| Error::invalid(e.to_string()))?;
            v.push(b'\n');
            v
        }
    };
    eprintln!("scored {} terms from {} responses", scores.lexicon.len(), responses.len());
    emit(a.out.as_deref(), &bytes)
}

fn reliability_cmd(c: ReliabilityCommand) -> Result<()> {
    match c {
        ReliabilityCommand::SplitHalf { input, iters, seed, out } => {
            let (set, responses) = read_study(&input, false)?;
            let r = reliability::split_half(&set, &responses, iters, seed)?;
            eprintln!(
                "split-half over {} iterations: spearman mean {:.4} min {:.4}, pearson mean {:.4} min {:.4}",
                r.iterations, r.spearman_mean, r.spearman_min, r.pearson_mean, r.pearson_min
            );
            emit(out.as_deref(), &io::split_half_to_csv(&r))
        }
        ReliabilityCommand::Subsample {
            input,
            k_max,
            reps,
            seed,
            sampling,
            out,
        } => {
            let (set, responses) = read_study(&input, false)?;
            let sampling = match sampling {
                SamplingArg::Nested => Sampling::Nested,
                SamplingArg::Independent => Sampling::Independent,
            };
            let curve = reliability::subsample_curve(&set, &responses, k_max, reps, seed, sampling)?;
            for r in &curve.rows {
                eprintln!("k={} mean spearman {:.4}", r.k, r.mean_spearman_vs_full);
            }
            emit(out.as_deref(), &io::subsample_to_csv(&curve))
        }
    }
}

fn agreement_cmd(c: AgreementCommand) -> Result<()> {
    match c {
        AgreementCommand::Curve {
            input,
            lexicon,
            terms,
            halfwidth,
            step,
            confidence,
            method,
            out,
        } => {
            let (set, responses) = read_study(&input, false)?;
            let terms = load_optional_terms(terms.as_deref())?;
            let lexicon = io::read_lexicon(&lexicon, terms.as_deref())?;
            let pairs = agreement::infer_pairs(&set, &responses)?;
            let params = CurveParams {
                bin_halfwidth: halfwidth,
                bin_step: step,
                confidence,
                method: method.into(),
            };
            let curve = agreement::agreement_curve(&pairs, &lexicon, params)?;
            eprintln!("{} pairs in {} populated bins", pairs.len(), curve.populated().count());
            emit(out.as_deref(), &io::curve_to_csv(&curve))
        }
        AgreementCommand::Lpd {
            curve,
            min_annotations,
            confidence,
            method,
        } => {
            let curve = io::read_curve(&curve)?;
            if curve.populated().next().is_none() {
                return Err(Error::invalid("curve has no populated bins"));
            }
            let min = match min_annotations {
                Some(m) => m,
                None => agreement::informative_support(confidence, method.into())?,
            };
            match agreement::least_perceptible_difference_with(&curve, min) {
                Some(d) => emit(None, format!("{d}\n").as_bytes()),
                None => Err(Error::invalid("lower bound never stays above chance: no perceptible difference found")),
            }
        }
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let study = simulator::simulate_study(&a.sim.config(a.sigma))?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    io::write_latent(&a.out_dir.join("latent.tsv"), &study.latent)?;
    io::write_tuples(&a.out_dir.join("tuples.csv"), &study.tuples)?;
    io::write_responses(&a.out_dir.join("responses.csv"), &study.responses)?;
    let agreement = scoring::majority_agreement(&study.tuple_set(), &study.responses)?;
    eprintln!(
        "{} terms, {} tuples, {} responses; majority agreement {:.4}",
        study.terms.len(),
        study.tuples.len(),
        study.responses.len(),
        agreement.combined
    );
    Ok(())
}

fn lexicon_vectors(p: &LexiconPair) -> Result<(RankVector, RankVector)> {
    let terms = load_optional_terms(p.terms.as_deref())?;
    let a = io::read_lexicon(&p.a, terms.as_deref())?;
    let b = io::read_lexicon(&p.b, terms.as_deref())?;
    Ok((RankVector::from_lexicon(&a), RankVector::from_lexicon(&b)))
}

fn stats_cmd(c: StatsCommand) -> Result<()> {
    let value = match c {
        StatsCommand::Spearman(p) => {
            let (a, b) = lexicon_vectors(&p)?;
            stats::spearman(&a, &b)?
        }
        StatsCommand::Pearson(p) => {
            let (a, b) = lexicon_vectors(&p)?;
            stats::pearson(&a, &b)?
        }
        StatsCommand::Binom {
            successes,
            trials,
            confidence,
            method,
        } => stats::binom_lower_bound_with(successes, trials, confidence, method.into())?,
    };
    emit(None, format!("{value}\n").as_bytes())
}

fn serve(a: ServeArgs) -> Result<()> {
    let registry = service::Registry::open(&a.data_dir, std::time::Duration::from_secs(a.expiry_secs))?;
    let config = ServiceConfig {
        data_dir: a.data_dir.clone(),
        expiry: std::time::Duration::from_secs(a.expiry_secs),
        ui_dir: a.ui_dir.clone(),
    };
    let app = service::router(std::sync::Arc::new(registry), config.ui_dir.as_deref());
    let addr = std::net::SocketAddr::new(a.host, a.port);
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io(&a.data_dir, e))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Error::io(Path::new(&addr.to_string()), e))?;
        eprintln!("listening on http://{}", listener.local_addr().unwrap_or(addr));
        service::serve(listener, app, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::io(&config.data_dir, e))
    })
}
