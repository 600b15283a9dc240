//! The `citadv` command line: `ingest`, `pstat`, `concord`, `sbtest` and
//! `generate`.
//!
//! Every run writes a `manifest.json` next to its outputs recording the
//! subcommand, resolved parameters, SHA-256 digests of the input bytes, the
//! seed and the tool version. Output locations and the worker-thread count
//! are left out of the manifest, so reruns with the same inputs produce
//! byte-identical files.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::concordance::{assignment_registry, build_concordance_with, read_preprints, Concordance, MatchConfig};
use crate::corpus::{AgeWindow, Corpus, CorpusBuilder, CorpusSnapshot, MonthIndex};
use crate::pstat::{pstat_series, smooth_series, PStatQuery};
use crate::sbtest::{perturbation_registry, run_sbtest_with, CitationVector, RatioSpec, SBTestConfig, DEFAULT_TRIALS};
use crate::synthgen::{generate, GeneratorConfig, Obsolescence};

#[derive(Debug, Parser)]
#[command(name = "citadv", version, about = "Citation-advantage analysis toolkit")]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores). Results do
    /// not depend on this value.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate article and edge files and write a corpus snapshot.
    Ingest(IngestArgs),
    /// Emit P(t, t0, dt) series.
    Pstat(PstatArgs),
    /// Match preprints to corpus articles.
    Concord(ConcordArgs),
    /// Run the Monte Carlo self-selection test.
    Sbtest(SbtestArgs),
    /// Generate a synthetic corpus.
    Generate(GenerateArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    #[serde(skip)]
    pub articles: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub edges: PathBuf,
    /// Snapshot output path (JSON).
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PstatArgs {
    /// Corpus snapshot written by `ingest`.
    #[arg(long)]
    #[serde(skip)]
    pub corpus: PathBuf,
    /// Window start in years; repeat for several series.
    #[arg(long, required = true, allow_negative_numbers = true)]
    pub t0: Vec<f64>,
    /// Window length in years, paired with each --t0.
    #[arg(long, required = true, allow_negative_numbers = true)]
    pub dt: Vec<f64>,
    /// First citing month (YYYY-MM); defaults to the earliest in the corpus.
    #[arg(long)]
    pub from: Option<String>,
    /// Last citing month (YYYY-MM); defaults to the latest in the corpus.
    #[arg(long)]
    pub to: Option<String>,
    /// Centered moving-average half-width in months.
    #[arg(long, default_value_t = 0)]
    pub smooth: u32,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ConcordArgs {
    #[arg(long)]
    #[serde(skip)]
    pub corpus: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub preprints: PathBuf,
    #[arg(long, default_value_t = 0.75)]
    pub title_threshold: f64,
    #[arg(long, default_value_t = 0.5)]
    pub author_threshold: f64,
    /// Allow fuzzy matches whose first authors differ.
    #[arg(long)]
    pub any_first_author: bool,
    /// Assignment strategy: optimal or greedy.
    #[arg(long, default_value = "optimal")]
    pub assignment: String,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SbtestArgs {
    /// Citation vector CSV (article_id,citation_count,arxiv_flag).
    #[arg(long, conflicts_with_all = ["corpus", "concordance"], required_unless_present = "corpus")]
    #[serde(skip)]
    pub counts: Option<PathBuf>,
    /// Corpus snapshot; flags come from preprint links and --concordance.
    #[arg(long)]
    #[serde(skip)]
    pub corpus: Option<PathBuf>,
    #[arg(long, requires = "corpus")]
    #[serde(skip)]
    pub concordance: Option<PathBuf>,
    /// Restrict corpus articles to those published in this month or later.
    #[arg(long, requires = "corpus")]
    pub cohort_from: Option<String>,
    #[arg(long, requires = "corpus")]
    pub cohort_to: Option<String>,
    /// `auto` to measure from the data, or an explicit positive ratio.
    #[arg(long, default_value = "auto")]
    pub ratio: String,
    #[arg(long, value_delimiter = ',', default_values_t = [100usize, 200])]
    pub topk: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    pub trials: u64,
    #[arg(long)]
    pub seed: u64,
    /// Null-model perturbation: scale_selected or boost_unselected.
    #[arg(long, default_value = "scale_selected")]
    pub perturbation: String,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 120)]
    pub months: u32,
    /// First publication month.
    #[arg(long, default_value = "1990-01")]
    pub start: String,
    #[arg(long, default_value_t = 100)]
    pub monthly_volume: u32,
    #[arg(long, default_value_t = 15.0)]
    pub refs_per_article: f64,
    /// Piecewise-constant curve as age:weight pairs.
    #[arg(long, default_value = "0:1,6:2,12:1.5,36:1,120:0.5,240:0")]
    pub obsolescence: String,
    #[arg(long, default_value_t = 0)]
    pub ea_shift_months: u32,
    #[arg(long, default_value_t = 1.0)]
    pub oa_boost: f64,
    #[arg(long, default_value_t = 0.0)]
    pub sb_strength: f64,
    /// Log quality above which selection acts.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub sb_threshold: f64,
    #[arg(long, default_value_t = 0.5)]
    pub arxiv_fraction: f64,
    /// Horizon month offset at which preprint posting begins.
    #[arg(long, default_value_t = 0)]
    pub preprint_onset: u32,
    #[arg(long, default_value_t = 0)]
    pub preprint_ramp_months: u32,
    #[arg(long, default_value_t = 0.9)]
    pub journal_ref_fraction: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written by every run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: &'static str,
    pub tool_version: &'static str,
    pub seed: Option<u64>,
    pub parameters: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    /// Output file names, relative to the manifest's directory.
    pub outputs: Vec<String>,
}

struct Run {
    subcommand: &'static str,
    seed: Option<u64>,
    parameters: serde_json::Value,
    inputs: Vec<InputDigest>,
    dir: PathBuf,
    outputs: BTreeSet<String>,
}

impl Run {
    fn new(subcommand: &'static str, params: &impl Serialize, seed: Option<u64>, dir: &Path) -> anyhow::Result<Run> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Run {
            subcommand,
            seed,
            parameters: serde_json::to_value(params)?,
            inputs: Vec::new(),
            dir: dir.to_path_buf(),
            outputs: BTreeSet::new(),
        })
    }

    fn read(&mut self, path: &Path) -> anyhow::Result<Vec<u8>> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(bytes)
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.insert(name.to_string());
        Ok(())
    }

    fn finish(self, manifest_name: &str) -> anyhow::Result<()> {
        let manifest = RunManifest {
            subcommand: self.subcommand,
            tool_version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            parameters: self.parameters,
            inputs: self.inputs,
            outputs: self.outputs.into_iter().collect(),
        };
        let path = self.dir.join(manifest_name);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

fn pretty(value: &impl Serialize) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn load_snapshot(run: &mut Run, path: &Path) -> anyhow::Result<Corpus> {
    let bytes = run.read(path)?;
    let snapshot: CorpusSnapshot =
        serde_json::from_slice(&bytes).with_context(|| format!("parsing corpus snapshot {}", path.display()))?;
    Ok(Corpus::from_snapshot(snapshot).0)
}

fn parse_month(flag: &str, value: &str) -> anyhow::Result<MonthIndex> {
    value.parse().with_context(|| format!("--{flag}"))
}

/// Parses arguments and runs the selected subcommand, writing console
/// output to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            write!(out, "{e}")?;
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    execute(cli, out)
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    let mut console = Vec::new();
    let result = match cli.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            pool.install(|| dispatch(cli.command, &mut console))
        }
        None => dispatch(cli.command, &mut console),
    };
    out.write_all(&console)?;
    result
}

fn dispatch(command: Command, out: &mut dyn Write) -> anyhow::Result<()> {
    match command {
        Command::Ingest(args) => cmd_ingest(args, out),
        Command::Pstat(args) => cmd_pstat(args, out),
        Command::Concord(args) => cmd_concord(args, out),
        Command::Sbtest(args) => cmd_sbtest(args, out),
        Command::Generate(args) => cmd_generate(args, out),
    }
}

fn cmd_ingest(args: IngestArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let dir = args.out.parent().map(Path::to_path_buf).unwrap_or_default();
    let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
    let name = args
        .out
        .file_name()
        .context("--out must name a file")?
        .to_string_lossy()
        .into_owned();
    let mut run = Run::new("ingest", &args, None, &dir)?;
    let articles = run.read(&args.articles)?;
    let edges = run.read(&args.edges)?;

    let mut builder = CorpusBuilder::new();
    builder.ingest_articles(articles.as_slice())?;
    builder.ingest_edges(edges.as_slice())?;
    let (corpus, report) = builder.finish();

    run.write(&name, pretty(&corpus.snapshot())?)?;
    run.write(&format!("{name}.report.json"), pretty(&report)?)?;
    run.finish(&format!("{name}.manifest.json"))?;
    write!(out, "{}", pretty(&report)?)?;
    Ok(())
}

fn cmd_pstat(args: PstatArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    if args.t0.len() != args.dt.len() {
        bail!("--t0 and --dt must be given the same number of times ({} vs {})", args.t0.len(), args.dt.len());
    }
    let windows = args
        .t0
        .iter()
        .zip(&args.dt)
        .map(|(&t0, &dt)| AgeWindow::from_years(t0, dt).with_context(|| format!("window --t0 {t0} --dt {dt}")))
        .collect::<anyhow::Result<Vec<_>>>()?;

    let mut run = Run::new("pstat", &args, None, &args.out_dir)?;
    let corpus = load_snapshot(&mut run, &args.corpus)?;
    let range = corpus.month_range();
    let from = match &args.from {
        Some(s) => parse_month("from", s)?,
        None => range.context("corpus is empty; pass --from and --to")?.0,
    };
    let to = match &args.to {
        Some(s) => parse_month("to", s)?,
        None => range.context("corpus is empty; pass --from and --to")?.1,
    };

    for window in windows {
        let query = PStatQuery::new(window, from, to)?;
        let series = smooth_series(&pstat_series(&corpus, query), args.smooth);
        let stem = format!("pstat_t0-{}m_dt-{}m", window.start(), window.span());
        run.write(&format!("{stem}.csv"), series.to_csv())?;
        run.write(&format!("{stem}.json"), pretty(&series.to_json())?)?;
        writeln!(out, "{stem}: {} months, window {window}", series.points.len())?;
    }
    run.finish("manifest.json")
}

fn cmd_concord(args: ConcordArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let strategy = assignment_registry().get(&args.assignment)?;
    let config = MatchConfig {
        title_threshold: args.title_threshold,
        author_threshold: args.author_threshold,
        require_first_author: !args.any_first_author,
    };
    config.validate()?;

    let mut run = Run::new("concord", &args, None, &args.out_dir)?;
    let corpus = load_snapshot(&mut run, &args.corpus)?;
    let preprints = run.read(&args.preprints)?;
    let preprints = read_preprints(preprints.as_slice())?;

    let concordance = build_concordance_with(&preprints, &corpus, &config, strategy.as_ref())?;
    run.write("concordance.csv", concordance.to_csv())?;
    run.write("concordance_report.json", pretty(&concordance.report)?)?;
    run.finish("manifest.json")?;
    let r = &concordance.report;
    writeln!(
        out,
        "{}",
        serde_json::json!({
            "exact_matches": r.exact_matches,
            "fuzzy_matches": r.fuzzy_matches,
            "unresolved_refs": r.unresolved_refs,
            "unmatched_preprints": r.unmatched_preprints,
        })
    )?;
    Ok(())
}

fn cmd_sbtest(args: SbtestArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let perturbation = perturbation_registry().get(&args.perturbation)?;
    let ratio: RatioSpec = args.ratio.parse()?;

    let mut run = Run::new("sbtest", &args, Some(args.seed), &args.out_dir)?;
    let vector = match (&args.counts, &args.corpus) {
        (Some(path), _) => {
            let bytes = run.read(path)?;
            CitationVector::from_csv(bytes.as_slice()).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(path)) => {
            let corpus = load_snapshot(&mut run, path)?;
            let matches = match &args.concordance {
                Some(p) => Some(Concordance::matches_from_csv(run.read(p)?.as_slice())?),
                None => None,
            };
            let cohort = match (&args.cohort_from, &args.cohort_to) {
                (None, None) => None,
                (lo, hi) => Some((
                    lo.as_deref().map_or(Ok(MonthIndex::new(0)), |s| parse_month("cohort-from", s))?,
                    hi.as_deref().map_or(Ok(MonthIndex::new(u32::MAX)), |s| parse_month("cohort-to", s))?,
                )),
            };
            CitationVector::from_corpus(&corpus, matches.as_deref(), cohort)
        }
        (None, None) => bail!("either --counts or --corpus is required"),
    };

    let config = SBTestConfig::for_vector(&vector, args.topk.clone(), ratio, args.trials, args.seed);
    let result = run_sbtest_with(&vector, &config, perturbation.as_ref())?;
    for outcome in &result.outcomes {
        run.write(&format!("distribution_top{}.csv", outcome.top_k), outcome.distribution_csv())?;
    }
    let summary = pretty(&result.summary_json())?;
    run.write("summary.json", &summary)?;
    run.finish("manifest.json")?;
    write!(out, "{summary}")?;
    Ok(())
}

fn cmd_generate(args: GenerateArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let config = GeneratorConfig {
        months: args.months,
        start: parse_month("start", &args.start)?,
        monthly_volume: args.monthly_volume,
        refs_per_article: args.refs_per_article,
        obsolescence: args.obsolescence.parse::<Obsolescence>()?,
        ea_shift_months: args.ea_shift_months,
        oa_boost: args.oa_boost,
        sb_strength: args.sb_strength,
        sb_threshold: args.sb_threshold,
        arxiv_fraction: args.arxiv_fraction,
        preprint_onset: args.preprint_onset,
        preprint_ramp_months: args.preprint_ramp_months,
        journal_ref_fraction: args.journal_ref_fraction,
        seed: args.seed,
    };
    config.validate()?;

    let mut run = Run::new("generate", &args, Some(args.seed), &args.out_dir)?;
    let generated = generate(&config)?;
    run.write("articles.jsonl", generated.articles_jsonl())?;
    run.write("edges.csv", generated.edges_csv())?;
    run.write("preprints.jsonl", generated.preprints_jsonl())?;
    run.write("ground_truth.csv", generated.truth_csv())?;
    let report = pretty(&generated.report)?;
    run.write("generate_report.json", &report)?;
    run.finish("manifest.json")?;
    write!(out, "{report}")?;
    Ok(())
}
