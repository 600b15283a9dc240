//! Synthetic citation corpora with tunable access and selection effects.
//!
//! Every article gets a log-normal latent quality `q`. Preprint linkage
//! follows a probit self-selection model acting on standout articles: an
//! article is linked with probability
//! `Phi(a + sb_strength * max(0, ln q - sb_threshold))`, with the offset `a`
//! solved so the expected linked share equals `arxiv_fraction`. Below the
//! threshold, linkage is independent of quality. Each article then draws a Poisson
//! number of references; each reference picks a target among citable
//! articles with weight `obsolescence(age) * quality * oa_boost^[linked]`,
//! where linked articles become citable `ea_shift_months` before their
//! publication month and age is counted from that point.
//!
//! All randomness comes from streams keyed by (seed, purpose, article
//! index), so output does not depend on thread scheduling.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concordance::PreprintRecord;
use crate::corpus::{ArticleRecord, CitationEdge, Corpus, IngestReport, MonthIndex};
use crate::error::{Error, Result};

/// Piecewise-constant citing propensity by age in months. Each breakpoint
/// `(age, weight)` holds until the next; the last extends forever.
#[derive(Clone, Debug, PartialEq)]
pub struct Obsolescence {
    breakpoints: Vec<(u32, f64)>,
}

impl Obsolescence {
    pub fn new(breakpoints: Vec<(u32, f64)>) -> Result<Self> {
        let bad = |m: &str| Err(Error::Config(format!("obsolescence curve: {m}")));
        match breakpoints.first() {
            None => return bad("at least one breakpoint is required"),
            Some(&(age, _)) if age != 0 => return bad("first breakpoint must be at age 0"),
            _ => {}
        }
        if breakpoints.windows(2).any(|w| w[0].0 >= w[1].0) {
            return bad("breakpoint ages must be strictly increasing");
        }
        if breakpoints.iter().any(|&(_, w)| !(w.is_finite() && w >= 0.0)) {
            return bad("weights must be finite and non-negative");
        }
        if breakpoints.iter().all(|&(_, w)| w == 0.0) {
            return bad("weights must not all be zero");
        }
        Ok(Obsolescence { breakpoints })
    }

    pub fn weight(&self, age: i64) -> f64 {
        if age < 0 {
            return 0.0;
        }
        let idx = self.breakpoints.partition_point(|&(a, _)| i64::from(a) <= age);
        self.breakpoints[idx - 1].1
    }

    pub fn breakpoints(&self) -> &[(u32, f64)] {
        &self.breakpoints
    }
}

impl FromStr for Obsolescence {
    type Err = Error;

    /// Parses `age:weight` pairs separated by commas, e.g. `0:1,6:3,36:1`.
    fn from_str(s: &str) -> Result<Self> {
        let mut points = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let parsed = part
                .split_once(':')
                .and_then(|(a, w)| Some((a.trim().parse().ok()?, w.trim().parse().ok()?)));
            match parsed {
                Some(p) => points.push(p),
                None => return Err(Error::Config(format!("obsolescence breakpoint {part:?} is not age:weight"))),
            }
        }
        Obsolescence::new(points)
    }
}

impl std::fmt::Display for Obsolescence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.breakpoints.iter().map(|(a, w)| format!("{a}:{w}")).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    /// Horizon length in months.
    pub months: u32,
    /// Publication month of the first generated month.
    pub start: MonthIndex,
    pub monthly_volume: u32,
    /// Poisson mean of outgoing references per article.
    pub refs_per_article: f64,
    pub obsolescence: Obsolescence,
    /// Months before publication that linked articles become citable.
    pub ea_shift_months: u32,
    /// Citing-propensity multiplier for linked articles.
    pub oa_boost: f64,
    /// Probit slope of linkage on log quality above `sb_threshold`; 0 makes
    /// linkage independent of quality.
    pub sb_strength: f64,
    /// Log quality above which selection acts (quality is log-normal with
    /// unit log-scale, so 0.5 is the top ~31%).
    pub sb_threshold: f64,
    pub arxiv_fraction: f64,
    /// Horizon month (offset from `start`) at which preprint posting begins.
    pub preprint_onset: u32,
    /// Months over which the linkage rate ramps linearly to full strength
    /// after onset; 0 switches it on at once.
    pub preprint_ramp_months: u32,
    /// Share of preprints that carry a journal reference.
    pub journal_ref_fraction: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            months: 120,
            start: MonthIndex::new(240),
            monthly_volume: 100,
            refs_per_article: 15.0,
            obsolescence: "0:1,6:2,12:1.5,36:1,120:0.5,240:0".parse().unwrap(),
            ea_shift_months: 0,
            oa_boost: 1.0,
            sb_strength: 0.0,
            sb_threshold: 0.5,
            arxiv_fraction: 0.5,
            preprint_onset: 0,
            preprint_ramp_months: 0,
            journal_ref_fraction: 0.9,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.refs_per_article.is_finite() && self.refs_per_article >= 0.0) {
            return bad(format!("refs_per_article must be non-negative, got {}", self.refs_per_article));
        }
        if !(self.oa_boost.is_finite() && self.oa_boost >= 1.0) {
            return bad(format!("oa_boost must be at least 1, got {}", self.oa_boost));
        }
        if !(self.sb_strength.is_finite() && self.sb_strength >= 0.0) {
            return bad(format!("sb_strength must be non-negative, got {}", self.sb_strength));
        }
        if !self.sb_threshold.is_finite() {
            return bad(format!("sb_threshold must be finite, got {}", self.sb_threshold));
        }
        for (name, v) in [
            ("arxiv_fraction", self.arxiv_fraction),
            ("journal_ref_fraction", self.journal_ref_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        Ok(())
    }

    /// Share of the full linkage rate in force for articles published at
    /// horizon offset `m`.
    fn adoption(&self, m: u32) -> f64 {
        if m < self.preprint_onset {
            0.0
        } else if self.preprint_ramp_months == 0 {
            1.0
        } else {
            (f64::from(m - self.preprint_onset + 1) / f64::from(self.preprint_ramp_months)).min(1.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub article_id: String,
    pub quality: f64,
    pub preprint_linked: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub articles: u64,
    pub preprint_linked: u64,
    pub requested_refs: u64,
    pub edges: u64,
    /// Draws that hit the citing article itself or repeated a target.
    pub discarded_draws: u64,
    /// References dropped because no citable target existed.
    pub truncated_refs: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub articles: Vec<ArticleRecord>,
    pub edges: Vec<CitationEdge>,
    pub preprints: Vec<PreprintRecord>,
    pub truth: Vec<GroundTruth>,
    pub report: GenerationReport,
}

const QUALITY_STREAM: u64 = 1;
const LINK_STREAM: u64 = 2;
const REFS_STREAM: u64 = 3;
const META_STREAM: u64 = 4;

fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Solves `sum_i Phi(a + slope * z_i) = target` for the offset `a`.
fn probit_offset(z: &[f64], slope: f64, target: f64) -> f64 {
    let total = |a: f64| z.iter().map(|&zi| normal_cdf(a + slope * zi)).sum::<f64>();
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while total(lo) > target && lo > -1e6 {
        lo *= 2.0;
    }
    while total(hi) < target && hi < 1e6 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

const WORDS: &[&str] = &[
    "galaxy", "cluster", "stellar", "dark", "matter", "halo", "redshift", "survey", "spectral", "emission",
    "absorption", "quasar", "nebula", "dust", "magnetic", "field", "accretion", "disk", "binary", "pulsar",
    "neutron", "star", "black", "hole", "cosmic", "ray", "gamma", "burst", "supernova", "remnant", "solar",
    "wind", "corona", "planetary", "formation", "evolution", "metallicity", "abundance", "kinematics",
    "rotation", "curve", "lensing", "weak", "strong", "microwave", "background", "anisotropy", "inflation",
    "baryon", "acoustic", "oscillation", "luminosity", "function", "mass", "profile", "density", "turbulence",
    "jet", "outflow", "molecular", "cloud", "infrared", "ultraviolet", "xray", "radio", "interferometry",
    "photometry", "variability", "periodic", "transient", "population", "synthesis", "simulation",
    "hydrodynamic", "numerical", "model", "observations", "constraints", "measurement", "distance",
    "ladder", "cepheid", "globular", "open", "dwarf", "spiral", "elliptical", "merger", "tidal", "interaction",
    "circumstellar", "envelope", "maser", "polarization", "shock", "heating", "cooling", "flow", "feedback",
];

const SURNAMES: &[&str] = &[
    "Abbott", "Becker", "Chen", "Dubois", "Eriksen", "Fischer", "Garcia", "Hoffmann", "Ito", "Jensen",
    "Kowalski", "Larsen", "Moreau", "Nakamura", "Olsen", "Petrov", "Quinn", "Rossi", "Schmidt", "Tanaka",
    "Ulrich", "Vogel", "Wagner", "Xu", "Yamamoto", "Zimmermann", "Andersson", "Bianchi", "Costa", "Dimitrov",
    "Evans", "Ferrari", "Gupta", "Horvath", "Ivanov", "Jones", "Kim", "Lopez", "Muller", "Novak",
];

fn synth_metadata(seed: u64, index: u64) -> (String, Vec<String>) {
    let mut rng = stream(seed, META_STREAM, index);
    let n_words = rng.random_range(6..=10);
    let title: Vec<&str> = (0..n_words).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
    let mut title = title.join(" ");
    if let Some(first) = title.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    let n_authors = rng.random_range(1..=5);
    let authors = (0..n_authors)
        .map(|_| {
            let surname = SURNAMES[rng.random_range(0..SURNAMES.len())];
            let initial = (b'A' + rng.random_range(0..26u8)) as char;
            format!("{surname}, {initial}.")
        })
        .collect();
    (title, authors)
}

/// A preprint variant of an article: same authors in "Given Surname" form,
/// title reworded with probability 1/2 by dropping one word.
fn synth_preprint(seed: u64, index: u64, article: &ArticleRecord, journal_ref: bool) -> PreprintRecord {
    let mut rng = stream(seed, META_STREAM, u64::MAX - index);
    let mut words: Vec<&str> = article.title.as_deref().unwrap_or("").split(' ').collect();
    if words.len() > 6 && rng.random_bool(0.5) {
        let drop = rng.random_range(0..words.len());
        words.remove(drop);
    }
    let authors = article
        .authors
        .iter()
        .map(|a| match a.split_once(", ") {
            Some((surname, initial)) => format!("{initial} {surname}"),
            None => a.clone(),
        })
        .collect();
    PreprintRecord {
        id: format!("P{index:07}"),
        title: words.join(" ").to_lowercase(),
        authors,
        journal_ref: journal_ref.then(|| article.id.clone()),
    }
}

pub fn generate(config: &GeneratorConfig) -> Result<Generated> {
    config.validate()?;
    let volume = config.monthly_volume as usize;
    let n = config.months as usize * volume;
    let seed = config.seed;
    let month_of = |i: usize| (i / volume.max(1)) as u32;

    let lognormal = LogNormal::new(0.0, 1.0).expect("valid log-normal");
    let quality: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| lognormal.sample(&mut stream(seed, QUALITY_STREAM, i as u64)))
        .collect();

    let excess: Vec<f64> = quality.iter().map(|q| (q.ln() - config.sb_threshold).max(0.0)).collect();
    let slope = config.sb_strength;
    let offset = match config.arxiv_fraction {
        f if f <= 0.0 => f64::NEG_INFINITY,
        f if f >= 1.0 => f64::INFINITY,
        f => probit_offset(&excess, slope, f * n as f64),
    };
    let linked: Vec<bool> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = normal_cdf(offset + slope * excess[i]) * config.adoption(month_of(i));
            stream(seed, LINK_STREAM, i as u64).random::<f64>() < p
        })
        .collect();

    // citable from this horizon offset (may be negative under early access)
    let citable_from: Vec<i64> = (0..n)
        .map(|i| i64::from(month_of(i)) - if linked[i] { i64::from(config.ea_shift_months) } else { 0 })
        .collect();

    let mut report = GenerationReport {
        articles: n as u64,
        preprint_linked: linked.iter().filter(|&&l| l).count() as u64,
        ..Default::default()
    };
    let poisson = (config.refs_per_article > 0.0)
        .then(|| Poisson::new(config.refs_per_article).expect("valid Poisson mean"));

    let mut edges: Vec<(usize, usize)> = Vec::new();
    for month in 0..config.months {
        let t = i64::from(month);
        let mut targets = Vec::new();
        let mut cumulative = Vec::new();
        let mut total = 0.0;
        for j in 0..n {
            if citable_from[j] > t {
                continue;
            }
            let w = config.obsolescence.weight(t - citable_from[j])
                * quality[j]
                * if linked[j] { config.oa_boost } else { 1.0 };
            if w > 0.0 {
                total += w;
                targets.push(j);
                cumulative.push(total);
            }
        }
        let citing = month as usize * volume..(month as usize + 1) * volume;
        let drawn: Vec<(u64, u64, u64, Vec<usize>)> = citing
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, REFS_STREAM, i as u64);
                let k = poisson.as_ref().map_or(0, |p| p.sample(&mut rng) as u64);
                if targets.is_empty() {
                    return (k, 0, k, Vec::new());
                }
                let mut chosen = Vec::with_capacity(k as usize);
                let mut discarded = 0;
                for _ in 0..k {
                    let x = rng.random::<f64>() * total;
                    let pos = cumulative.partition_point(|&c| c <= x).min(targets.len() - 1);
                    let j = targets[pos];
                    if j == i || chosen.contains(&j) {
                        discarded += 1;
                    } else {
                        chosen.push(j);
                    }
                }
                chosen.sort_unstable();
                (k, discarded, 0, chosen)
            })
            .collect();
        for (offset, (k, discarded, truncated, chosen)) in drawn.into_iter().enumerate() {
            let i = month as usize * volume + offset;
            report.requested_refs += k;
            report.discarded_draws += discarded;
            report.truncated_refs += truncated;
            for j in chosen {
                assert!(citable_from[j] <= t, "edge to an article not yet citable");
                edges.push((i, j));
            }
        }
    }
    report.edges = edges.len() as u64;

    let id = |i: usize| format!("A{i:07}");
    let articles: Vec<ArticleRecord> = (0..n)
        .map(|i| {
            let (title, authors) = synth_metadata(seed, i as u64);
            ArticleRecord {
                id: id(i),
                pub_month: MonthIndex::new(config.start.value() + month_of(i)),
                venue: "SYN".to_string(),
                preprint_linked: linked[i],
                citation_count: None,
                title: Some(title),
                authors,
            }
        })
        .collect();

    let preprints = (0..n)
        .filter(|&i| linked[i])
        .map(|i| {
            let with_ref = stream(seed, META_STREAM, (1 << 62) + i as u64).random::<f64>() < config.journal_ref_fraction;
            synth_preprint(seed, i as u64, &articles[i], with_ref)
        })
        .collect();

    let truth = (0..n)
        .map(|i| GroundTruth {
            article_id: id(i),
            quality: quality[i],
            preprint_linked: linked[i],
        })
        .collect();

    let edges = edges
        .into_iter()
        .map(|(a, b)| CitationEdge {
            citing_id: id(a),
            cited_id: id(b),
        })
        .collect();

    Ok(Generated {
        articles,
        edges,
        preprints,
        truth,
        report,
    })
}

impl Generated {
    pub fn corpus(&self) -> (Corpus, IngestReport) {
        Corpus::from_parts(self.articles.iter().cloned(), self.edges.iter().cloned())
    }

    pub fn articles_jsonl(&self) -> String {
        let mut out = String::new();
        for a in &self.articles {
            out.push_str(&serde_json::to_string(a).expect("article serializes"));
            out.push('\n');
        }
        out
    }

    pub fn edges_csv(&self) -> String {
        let mut out = String::from(crate::corpus::EDGES_HEADER);
        out.push('\n');
        for e in &self.edges {
            let _ = writeln!(out, "{},{}", e.citing_id, e.cited_id);
        }
        out
    }

    pub fn preprints_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.preprints {
            out.push_str(&serde_json::to_string(p).expect("preprint serializes"));
            out.push('\n');
        }
        out
    }

    pub fn truth_csv(&self) -> String {
        let mut out = String::from("article_id,quality,preprint_linked\n");
        for g in &self.truth {
            let _ = writeln!(out, "{},{},{}", g.article_id, g.quality, g.preprint_linked);
        }
        out
    }
}

/// Generates twice and reports whether the outputs are identical.
pub fn replay_check(config: &GeneratorConfig) -> Result<bool> {
    let a = generate(config)?;
    let b = generate(config)?;
    Ok(a.articles_jsonl() == b.articles_jsonl()
        && a.edges_csv() == b.edges_csv()
        && a.preprints_jsonl() == b.preprints_jsonl()
        && a.truth_csv() == b.truth_csv())
}
